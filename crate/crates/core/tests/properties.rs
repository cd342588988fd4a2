use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use rwre::density::compute_rho_at;
use rwre::gauss;
use rwre::env::{EnvParams, RateField};
use rwre::kernel::{forward, forward_times, killed_forward_times, solve_caloric, torus, BoundaryData, Cylinder, SiteSet, SolverOptions};
use rwre::stats::Moments;
use rwre::theorems::harnack::{data_ratio, forward_rows, harnack_ratio, linspace};
use rwre::theorems::hke::{hke_probes, HkeConfig};
use rwre::theorems::llt::{llt_level, LltConfig};
use rwre::walker::{empirical_kernel, positions_at, stream_rng};
use rwre::SpaceTime;

fn model(kind: u8, d: usize, seed: u64) -> EnvParams {
    match kind % 3 {
        0 => EnvParams::iid_checkerboard(d, 0.25, seed),
        1 => EnvParams::static_iid(d, 0.3, seed),
        _ => EnvParams::two_state_flip(d, 0.25, 0.5, 2.0, 0.7, seed),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_stay_elliptic(kind in 0u8..3, d in 1usize..4, seed in any::<u64>(),
                           x in prop::collection::vec(-1000i64..1000, 3), t in -50.0f64..50.0, axis in 0usize..3) {
        let env = model(kind, d, seed);
        let f = RateField::new(env.clone()).unwrap();
        let a = f.rate(&x[..d], t, axis % d);
        prop_assert!(a >= env.kappa * (1.0 - 1e-12) && a <= (1.0 + 1e-12) / env.kappa);
        let mut up = vec![0; d];
        up[axis % d] = 1;
        let down: Vec<i64> = up.iter().map(|v| -v).collect();
        prop_assert_eq!(f.jump_rate(&x[..d], t, &up), f.jump_rate(&x[..d], t, &down));
    }

    #[test]
    fn rates_depend_only_on_seed(seed in any::<u64>(), x in prop::collection::vec(-50i64..50, 2), t in 0.0f64..20.0) {
        let a = RateField::new(EnvParams::iid_checkerboard(2, 0.25, seed)).unwrap();
        let b = RateField::new(EnvParams::iid_checkerboard(2, 0.25, seed)).unwrap();
        prop_assert_eq!(a.rate(&x, t, 1).to_bits(), b.rate(&x, t, 1).to_bits());
    }

    #[test]
    fn torus_mass_is_conserved(kind in 0u8..3, seed in any::<u64>(), x in prop::collection::vec(0i64..8, 2), t0 in 0.0f64..3.0, s in 0.1f64..4.0) {
        let f = RateField::new(model(kind, 2, seed)).unwrap();
        let sites = torus(2, 8).unwrap();
        let k = forward(&f, &sites, &SpaceTime::new(x, t0), t0 + s, &SolverOptions::default()).unwrap();
        prop_assert!((k.mass() - 1.0).abs() < 1e-10);
        prop_assert!(k.min() >= 0.0);
    }

    #[test]
    fn killed_mass_leaks_monotonically(seed in any::<u64>(), x in prop::collection::vec(-2i64..3, 2)) {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, seed)).unwrap();
        let times = [0.5, 1.0, 2.0, 4.0, 8.0];
        let slices = killed_forward_times(&f, 4.0, &SpaceTime::new(x, 0.0), &times, &SolverOptions::default()).unwrap();
        let mut prev = 1.0;
        for k in &slices {
            let m = k.survival();
            prop_assert!(m <= prev + 1e-12);
            prop_assert!((m + k.absorbed.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prev = m;
        }
    }

    #[test]
    fn kernel_is_dual_to_caloric_solve(seed in any::<u64>(), f in prop::collection::vec(0.0f64..1.0, 36), t0 in 0.0f64..2.0, s in 0.5f64..3.0) {
        let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, seed)).unwrap();
        let sites = torus(2, 6).unwrap();
        let base = SpaceTime::new(vec![1, 2], t0);
        let opts = SolverOptions::default();
        let p = forward(&field, &sites, &base, t0 + s, &opts).unwrap();
        let cyl = Cylinder { sites: sites.clone(), t0, t1: t0 + s };
        let u = solve_caloric(&field, &cyl, &BoundaryData::terminal(&cyl, f.clone()), &[t0], &opts).unwrap();
        let dual: f64 = p.values.iter().zip(&f).map(|(a, b)| a * b).sum();
        prop_assert!((u.at(&base.x, t0).unwrap() - dual).abs() < 1e-8);
    }

    #[test]
    fn chapman_kolmogorov(seed in any::<u64>(), mid in 0.2f64..2.0, rest in 0.2f64..2.0) {
        let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, seed)).unwrap();
        let sites = torus(2, 6).unwrap();
        let opts = SolverOptions::default();
        let base = SpaceTime::origin(2);
        let end = mid + rest;
        let direct = forward(&field, &sites, &base, end, &opts).unwrap();
        let first = forward(&field, &sites, &base, mid, &opts).unwrap();
        let mut composed = vec![0.0; sites.len()];
        for (z, w) in sites.sites().zip(&first.values) {
            let k = forward(&field, &sites, &SpaceTime::new(z.to_vec(), mid), end, &opts).unwrap();
            for (c, v) in composed.iter_mut().zip(&k.values) {
                *c += w * v;
            }
        }
        let err = composed.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-8, "residual {err}");
    }
}

#[test]
fn kernel_is_positive_after_unit_time() {
    let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 11)).unwrap();
    let k = forward(&field, &torus(2, 6).unwrap(), &SpaceTime::origin(2), 1.0, &SolverOptions::default()).unwrap();
    assert!(k.min() > 0.0);
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut worst) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        worst = worst.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    worst
}

#[test]
fn rate_law_is_shift_invariant() {
    let n = 10_000;
    let (mut here, mut there) = (Vec::new(), Vec::new());
    for seed in 0..n {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, seed)).unwrap();
        here.push(f.rate(&[0, 0], 0.0, 0));
        there.push(f.rate(&[17, -5], 3.0 * f.delta_t(), 0));
    }
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    let d = ks(here, there);
    assert!(d < critical, "KS {d} >= {critical}");
}

#[test]
fn walk_is_a_martingale_with_bracketed_growth() {
    for (kind, seed) in [(0u8, 1u64), (1, 2), (2, 3)] {
        let env = model(kind, 2, seed);
        let field = RateField::new(env.clone()).unwrap();
        let t = 10.0;
        let mut axis = [Moments::default(), Moments::default()];
        let mut sq = Moments::default();
        for k in 0..20_000 {
            let mut rng = stream_rng(seed, k);
            let x = positions_at(&field, &SpaceTime::origin(2), &[t], &mut rng).remove(0);
            for i in 0..2 {
                axis[i].push(x[i] as f64);
            }
            sq.push((x[0] * x[0] + x[1] * x[1]) as f64 / t);
        }
        for m in &axis {
            assert!(m.mean().abs() <= 3.0 * m.std_err(), "drift {} se {}", m.mean(), m.std_err());
        }
        let (lo, hi) = (4.0 * env.kappa, 4.0 / env.kappa);
        assert!(sq.mean() + 3.0 * sq.std_err() >= lo && sq.mean() - 3.0 * sq.std_err() <= hi);
    }
}

#[test]
fn empirical_kernel_approaches_solver() {
    let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 5)).unwrap();
    let start = SpaceTime::origin(2);
    let sites = torus(2, 40).unwrap();
    let exact = forward(&field, &sites, &start, 3.0, &SolverOptions::default()).unwrap();
    let tv = |n: u64| {
        let e = empirical_kernel(&field, &start, 3.0, n, 9);
        let mut total = 0.0;
        for (i, x) in sites.sites().enumerate() {
            let y: Vec<i64> = x.iter().map(|c| if *c >= 20 { c - 40 } else { *c }).collect();
            total += (e.probability(&y) - exact.values[i]).abs();
        }
        total / 2.0
    };
    let (coarse, fine) = (tv(1_000), tv(16_000));
    assert!(fine < 0.5 * coarse, "tv {coarse} -> {fine}");
}

#[test]
fn density_is_positive_mean_one_and_unique() {
    let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 4)).unwrap();
    let sites = torus(2, 8).unwrap();
    let opts = SolverOptions::default();
    let a = compute_rho_at(&field, &sites, &[0.0, 0.5, 1.0], 512.0, &opts).unwrap();
    let b = compute_rho_at(&field, &sites, &[0.0, 0.5, 1.0], 1024.0, &opts).unwrap();
    assert!(a.min() > 0.0);
    assert!(a.mean_error() < 1e-10);
    assert!(a.sup_distance(&b) < 1e-6);
}

struct Rows {
    sup: Vec<Vec<f64>>,
    inf: Vec<Vec<f64>>,
    sites: Arc<SiteSet>,
    edges: Vec<f64>,
    field: RateField,
}

fn rows() -> &'static Rows {
    static ROWS: OnceLock<Rows> = OnceLock::new();
    ROWS.get_or_init(|| {
        let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 8)).unwrap();
        let sites = Arc::new(SiteSet::ball(2, 3.0).unwrap());
        let edges = linspace(0.0, 4.0, 4);
        let probes = vec![
            SpaceTime::new(vec![0, 0], 0.0),
            SpaceTime::new(vec![1, 0], 0.5),
            SpaceTime::new(vec![0, 0], 2.5),
            SpaceTime::new(vec![-1, 1], 3.0),
        ];
        let all = forward_rows(&field, &sites, &probes, 4.0, &edges, &SolverOptions::default()).unwrap();
        Rows { sup: all[..2].to_vec(), inf: all[2..].to_vec(), sites, edges, field }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generators_bound_every_data_ratio(raw in prop::collection::vec(0.0f64..1.0, 400), zeros in prop::collection::vec(any::<bool>(), 400)) {
        let r = rows();
        let width = r.sup[0].len();
        assert!(width <= raw.len());
        // terminal values and the last lateral bin, which both windows can reach
        let late = width - r.sites.boundary_len();
        let mask: Vec<bool> = (0..width).map(|g| g < r.sites.len() || g >= late).collect();
        let f: Vec<f64> = (0..width).map(|g| if mask[g] && !zeros[g] { raw[g] } else { 0.0 }).collect();
        prop_assume!(f.iter().any(|v| *v > 0.0));
        let worst = harnack_ratio(&r.sup, &r.inf, Some(&mask)).unwrap().constant;
        prop_assert!(data_ratio(&r.sup, &r.inf, &f) <= worst + 1e-9);
    }
}

#[test]
fn probe_rows_reproduce_caloric_solutions() {
    let r = rows();
    let n = r.sites.len();
    let nb = r.sites.boundary_len();
    assert_eq!(r.sup[0].len(), n + (r.edges.len() - 1) * nb, "row width");
    let f: Vec<f64> = (0..r.sup[0].len()).map(|i| ((i * 37 % 101) as f64 + 1.0) / 101.0).collect();
    let data = BoundaryData {
        terminal: f[..n].to_vec(),
        edges: r.edges.clone(),
        lateral: (0..r.edges.len() - 1).map(|k| f[n + k * nb..n + (k + 1) * nb].to_vec()).collect(),
    };
    let cyl = Cylinder { sites: r.sites.clone(), t0: 0.0, t1: 4.0 };
    let u = solve_caloric(&r.field, &cyl, &data, &[0.0, 0.5], &SolverOptions::default()).unwrap();
    let dot = |row: &Vec<f64>| row.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
    assert!((u.at(&[0, 0], 0.0).unwrap() - dot(&r.sup[0])).abs() < 1e-8);
    assert!((u.at(&[1, 0], 0.5).unwrap() - dot(&r.sup[1])).abs() < 1e-8);
}

#[test]
fn llt_and_hke_share_q_bitwise() {
    let field = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 6)).unwrap();
    let llt = llt_level(&field, &LltConfig { n: vec![8], ..Default::default() }, 2.0, 8).unwrap();
    let cfg = HkeConfig { side: 48, times: vec![64.0], fractions: vec![0.0, 0.5], ..Default::default() };
    let (probes, _) = hke_probes(&field, &cfg).unwrap();
    let mut matched = 0;
    for p in &probes {
        if let Some((_, _, q)) = llt.samples.iter().find(|(y, t, _)| *y == p.x && *t == p.t) {
            assert_eq!(q.to_bits(), p.q.to_bits(), "q differs at {:?}", p.x);
            matched += 1;
        }
    }
    assert!(matched >= 2, "only {matched} shared probes");
}

#[test]
fn torus_forward_times_agree_with_single_solves() {
    let field = RateField::new(EnvParams::iid_checkerboard(1, 0.25, 2)).unwrap();
    let sites = torus(1, 10).unwrap();
    let opts = SolverOptions::default();
    let base = SpaceTime::new(vec![3], 0.25);
    let many = forward_times(&field, &sites, &base, &[1.0, 2.5], &opts).unwrap();
    let one = forward(&field, &sites, &base, 2.5, &opts).unwrap();
    let err = many[1].values.iter().zip(&one.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn gaussian_green_matches_time_integral() {
    let sigma = [0.5, 0.8, 1.2];
    for x in [[1.0, -0.5, 2.0], [3.0, 0.0, 0.0], [0.3, 0.4, -0.2]] {
        // t = e^u, Simpson on a wide u range
        let (a, b, m) = (-30.0f64, 45.0f64, 60_000usize);
        let h = (b - a) / m as f64;
        let g = |u: f64| gauss::density(&x, &sigma, u.exp()) * u.exp();
        let mut acc = g(a) + g(b);
        for k in 1..m {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(a + k as f64 * h);
        }
        let integral = acc * h / 3.0;
        let exact = gauss::green(&x, &sigma);
        assert!((integral - exact).abs() < 1e-6 * exact.max(1.0), "{integral} vs {exact}");
    }
}
