//! Extreme-ray machinery. A probe row holds, for every generator of the cone
//! of nonnegative boundary data (terminal or initial site deltas, then
//! lateral deltas binned in time), the value at one space-time probe of the
//! solution it generates. For data `f ≥ 0` the solution at the probe is
//! `row · f`, so the worst sup/inf ratio over the cone is attained at a
//! single generator.

use crate::density::burn_in_state;
use crate::env::{Point, RateField};
use crate::error::{Error, Result};
use crate::kernel::ode::TIME_EPS;
use crate::kernel::{Backward, Forward, SiteSet, SolverOptions, System};
use crate::walker::SpaceTime;

/// `a + (k + 1/2)(b − a)/m` for `k < m`.
pub fn window_times(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..m).map(|k| a + (k as f64 + 0.5) * (b - a) / m as f64).collect()
}

pub fn linspace(a: f64, b: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| a + (b - a) * k as f64 / bins as f64).collect()
}

/// Centre, points at radius `r` and `r/2` along every axis, and the four
/// diagonal points at radius about `r` in the first coordinate plane.
pub fn spread_points(center: &[i64], r: f64) -> Vec<Point> {
    let d = center.len();
    let mut out = vec![center.to_vec()];
    let at = |offs: &[(usize, i64)]| {
        let mut p = center.to_vec();
        for &(i, v) in offs {
            p[i] += v;
        }
        p
    };
    let full = r.floor() as i64;
    let half = (r / 2.0).floor() as i64;
    let diag = (r / std::f64::consts::SQRT_2).floor() as i64;
    for i in 0..d {
        for s in [1, -1] {
            if full > 0 {
                out.push(at(&[(i, s * full)]));
            }
            if half > 0 && half != full {
                out.push(at(&[(i, s * half)]));
            }
        }
    }
    if d >= 2 && diag > 0 {
        for (a, b) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            out.push(at(&[(0, a * diag), (1, b * diag)]));
        }
    }
    out
}

pub fn probes(points: &[Point], times: &[f64]) -> Vec<SpaceTime> {
    times
        .iter()
        .flat_map(|&t| points.iter().map(move |x| SpaceTime::new(x.clone(), t)))
        .collect()
}

fn check_edges(edges: &[f64], lo: f64, hi: f64) -> Result<()> {
    if edges.is_empty() {
        return Ok(());
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) || edges[0] > lo + TIME_EPS || (edges[edges.len() - 1] - hi).abs() > TIME_EPS {
        return Err(Error::Param(format!("bin edges must increase from at most {lo} up to {hi}")));
    }
    Ok(())
}

/// Rows for forward killed walks started at `probes` and followed to
/// `t_top`: terminal kernel on every site, then for each bin of `edges`
/// the mass absorbed at each boundary site. Empty `edges` omits the
/// lateral generators.
pub fn forward_rows(
    field: &RateField,
    sites: &SiteSet,
    probes: &[SpaceTime],
    t_top: f64,
    edges: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    let n = sites.len();
    let nb = sites.boundary_len();
    let m = probes.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| probes[a].t.total_cmp(&probes[b].t));
    let start = probes[order[0]].t;
    if probes.iter().any(|p| p.t > t_top + TIME_EPS) {
        return Err(Error::Param("probe later than the terminal time".into()));
    }
    check_edges(edges, start, t_top)?;
    let idx: Vec<usize> = order.iter().map(|&j| sites.require(&probes[j].x)).collect::<Result<_>>()?;

    let mut sys = Forward::new(sites, field, m);
    sys.flux = !edges.is_empty();
    sys.active = 0;
    let mut y = vec![0.0; sys.len()];
    let fo = sys.flux_offset();
    let mut stops: Vec<f64> = order.iter().map(|&j| probes[j].t).collect();
    stops.extend(edges.iter().copied().filter(|&e| e > start));
    stops.push(t_top);
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);

    let mut snaps = vec![vec![0.0; m * nb]; edges.len()];
    let mut integ = opts.integrator(field);
    let mut t = start;
    let mut next = 0;
    for s in stops {
        integ.advance(&mut sys, field, &mut y, t, s);
        t = s;
        while next < m && (probes[order[next]].t - s).abs() <= TIME_EPS {
            y[next * n + idx[next]] = 1.0;
            next += 1;
        }
        sys.active = next;
        for (k, e) in edges.iter().enumerate() {
            if (e - s).abs() <= TIME_EPS {
                snaps[k].copy_from_slice(&y[fo..fo + m * nb]);
            }
        }
    }
    let mut rows = vec![Vec::new(); m];
    for (j, &p) in order.iter().enumerate() {
        let mut row = y[j * n..(j + 1) * n].to_vec();
        for k in 1..edges.len() {
            row.extend((0..nb).map(|b| snaps[k][j * nb + b] - snaps[k - 1][j * nb + b]));
        }
        rows[p] = row;
    }
    Ok(rows)
}

/// `ρ` restricted to a site set: boundary values on a time grid (linear in
/// between) and full interior slices at selected times. Values are taken
/// from the torus of the given side containing the set in its canonical
/// window.
pub struct LocalRho {
    times: Vec<f64>,
    boundary: Vec<Vec<f64>>,
    slices: Vec<(f64, Vec<f64>)>,
}

impl LocalRho {
    pub fn unit(sites: &SiteSet, t0: f64, t1: f64, slice_times: &[f64]) -> Self {
        LocalRho {
            times: vec![t0, t1],
            boundary: vec![vec![1.0; sites.boundary_len()]; 2],
            slices: slice_times.iter().map(|&t| (t, vec![1.0; sites.len()])).collect(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        field: &RateField,
        sites: &SiteSet,
        side: usize,
        t0: f64,
        t1: f64,
        step: f64,
        slice_times: &[f64],
        burn_in: f64,
        opts: &SolverOptions,
    ) -> Result<Self> {
        if field.is_homogeneous() {
            return Ok(Self::unit(sites, t0, t1, slice_times));
        }
        let torus = SiteSet::torus(sites.dim(), side)?;
        let half = (side / 2) as i64;
        let locate = |x: &[i64]| -> Result<usize> {
            if x.iter().any(|&c| c < -half || c >= half) {
                return Err(Error::BallEscapesTorus { radius: x.iter().map(|c| c.abs()).max().unwrap_or(0) as f64, side });
            }
            torus.require(x)
        };
        let inner: Vec<usize> = sites.sites().map(&locate).collect::<Result<_>>()?;
        let outer: Vec<usize> = (0..sites.boundary_len())
            .map(|b| locate(sites.boundary_site(b)))
            .collect::<Result<_>>()?;
        let k = ((t1 - t0) / step).ceil().max(1.0) as usize;
        let times: Vec<f64> = (0..=k).map(|j| t0 + (t1 - t0) * j as f64 / k as f64).collect();
        let mut stops: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        stops.extend(slice_times.iter().map(|&t| (t, false)));
        stops.sort_by(|a, b| a.0.total_cmp(&b.0));
        if stops[0].0 < t0 - TIME_EPS || stops[stops.len() - 1].0 > t1 + TIME_EPS {
            return Err(Error::OutsideWindow { t: stops[0].0, lo: t0, hi: t1 });
        }

        let mut rho = burn_in_state(field, &torus, t0, burn_in, opts)?;
        let total = torus.len() as f64;
        let mut sys = Forward::new(&torus, field, 1);
        let mut integ = opts.integrator(field);
        let mut t = t0;
        let mut boundary = Vec::with_capacity(times.len());
        let mut slices = Vec::new();
        for (s, grid) in stops {
            integ.advance(&mut sys, field, &mut rho, t, s);
            t = s;
            let scale = total / rho.iter().sum::<f64>();
            if grid {
                boundary.push(outer.iter().map(|&i| rho[i] * scale).collect());
            } else {
                slices.push((s, inner.iter().map(|&i| rho[i] * scale).collect()));
            }
        }
        Ok(LocalRho { times, boundary, slices })
    }

    pub fn boundary_at(&self, t: f64, out: &mut [f64]) {
        let j = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1) - 1;
        let w = ((t - self.times[j]) / (self.times[j + 1] - self.times[j])).clamp(0.0, 1.0);
        for (o, (a, b)) in out.iter_mut().zip(self.boundary[j].iter().zip(&self.boundary[j + 1])) {
            *o = (1.0 - w) * a + w * b;
        }
    }

    pub fn slice(&self, t: f64) -> Result<&[f64]> {
        self.slices
            .iter()
            .find(|(s, _)| (s - t).abs() <= TIME_EPS)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Param(format!("no density slice recorded at t={t}")))
    }
}

/// Rows for adjoint solutions `v(ŷ) = Σ_x ρ(x,t0)/ρ(ŷ) p_R(x,t0; ŷ) f(x)`
/// plus the lateral terms `∫ Σ_{b, z∼b} ρ(b,t)/ρ(ŷ) a(b→z) p_R(z,t; ŷ) g(b,t) dt`,
/// one backward solve per probe `ŷ`.
pub fn adjoint_rows(
    field: &RateField,
    sites: &SiteSet,
    rho: &LocalRho,
    probes: &[SpaceTime],
    t_bottom: f64,
    edges: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    let n = sites.len();
    let nb = sites.boundary_len();
    let m = probes.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| probes[b].t.total_cmp(&probes[a].t));
    let start = probes[order[0]].t;
    if probes.iter().any(|p| p.t < t_bottom - TIME_EPS) {
        return Err(Error::Param("probe earlier than the initial time".into()));
    }
    check_edges(edges, t_bottom, edges.last().copied().unwrap_or(start).max(start))?;
    let idx: Vec<usize> = order.iter().map(|&j| sites.require(&probes[j].x)).collect::<Result<_>>()?;
    let rho_probe: Vec<f64> = order
        .iter()
        .zip(&idx)
        .map(|(&j, &i)| rho.slice(probes[j].t).map(|v| v[i]))
        .collect::<Result<_>>()?;
    if let Some(&v) = rho_probe.iter().find(|&&v| !(v >= 1e-12)) {
        return Err(Error::DegenerateDensity { value: v, context: "adjoint probe".into() });
    }

    let weight = |t: f64, out: &mut [f64]| rho.boundary_at(t, out);
    let mut sys = Backward::new(sites, field, m);
    if !edges.is_empty() {
        sys.weight = Some(&weight);
    }
    sys.active = 0;
    let mut y = vec![0.0; sys.len()];
    let ao = sys.acc_offset();
    let mut stops: Vec<f64> = order.iter().map(|&j| probes[j].t).collect();
    stops.extend(edges.iter().copied().filter(|&e| e < start));
    stops.push(t_bottom);
    stops.sort_by(|a, b| b.total_cmp(a));
    stops.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);

    let mut snaps = vec![vec![0.0; m * nb]; edges.len()];
    let mut integ = opts.integrator(field);
    let mut t = start;
    let mut next = 0;
    for s in stops {
        integ.advance(&mut sys, field, &mut y, t, s);
        t = s;
        while next < m && (probes[order[next]].t - s).abs() <= TIME_EPS {
            y[next * n + idx[next]] = 1.0;
            next += 1;
        }
        sys.active = next;
        for (k, e) in edges.iter().enumerate() {
            if (e - s).abs() <= TIME_EPS {
                snaps[k].copy_from_slice(&y[ao..ao + m * nb]);
            }
        }
    }
    let base = rho.slice(t_bottom)?;
    let mut rows = vec![Vec::new(); m];
    for (j, &p) in order.iter().enumerate() {
        let inv = 1.0 / rho_probe[j];
        let mut row: Vec<f64> = (0..n).map(|x| base[x] * y[j * n + x] * inv).collect();
        for k in 1..edges.len() {
            // accumulators grow toward earlier times
            row.extend((0..nb).map(|b| (snaps[k - 1][j * nb + b] - snaps[k][j * nb + b]) * inv));
        }
        rows[p] = row;
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio {
    pub constant: f64,
    pub generator: usize,
    pub used: usize,
}

/// `max_g max_{sup rows} M[·][g] / min_{inf rows} M[·][g]` over generators
/// allowed by `mask` whose sup value is nonzero.
pub fn harnack_ratio(sup: &[Vec<f64>], inf: &[Vec<f64>], mask: Option<&[bool]>) -> Result<Ratio> {
    let width = sup.first().map_or(0, Vec::len);
    let mut best = Ratio { constant: 0.0, generator: 0, used: 0 };
    for g in 0..width {
        if mask.is_some_and(|m| !m[g]) {
            continue;
        }
        let s = sup.iter().map(|r| r[g]).fold(0.0, f64::max);
        if !(s > 1e-250) {
            continue;
        }
        let i = inf.iter().map(|r| r[g]).fold(f64::INFINITY, f64::min);
        if !(i > 0.0) {
            return Err(Error::DegenerateHarnack(format!("generator {g} vanishes on the inf window")));
        }
        best.used += 1;
        if s / i > best.constant {
            best.constant = s / i;
            best.generator = g;
        }
    }
    if best.used == 0 {
        return Err(Error::DegenerateHarnack("every generator vanishes on the sup window".into()));
    }
    Ok(best)
}

/// Ratio for explicit nonnegative data `f`: `max_sup (row·f) / min_inf (row·f)`.
pub fn data_ratio(sup: &[Vec<f64>], inf: &[Vec<f64>], f: &[f64]) -> f64 {
    let dot = |r: &Vec<f64>| r.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
    let s = sup.iter().map(dot).fold(0.0, f64::max);
    let i = inf.iter().map(dot).fold(f64::INFINITY, f64::min);
    s / i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;

    #[test]
    fn spread_points_stay_in_ball() {
        for r in [2.0, 4.0, 8.0] {
            let pts = spread_points(&[0, 0], r);
            assert_eq!(pts.len(), 13);
            assert!(pts.iter().all(|p| crate::kernel::in_ball(p, &[0, 0], r)));
        }
    }

    #[test]
    fn forward_rows_conserve_mass() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 3)).unwrap();
        let sites = SiteSet::ball(2, 4.0).unwrap();
        let pr = vec![SpaceTime::new(vec![0, 0], 1.0), SpaceTime::new(vec![2, 1], 0.5)];
        let rows = forward_rows(&f, &sites, &pr, 6.0, &linspace(0.0, 6.0, 4), &SolverOptions::with_courant(1.0)).unwrap();
        for r in &rows {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn unit_adjoint_rows_reproduce_constants() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 3)).unwrap();
        let sites = SiteSet::ball(2, 4.0).unwrap();
        let pr = vec![SpaceTime::new(vec![0, 0], 5.0), SpaceTime::new(vec![1, 2], 3.0)];
        let rho = LocalRho::compute(&f, &sites, 16, 0.0, 6.0, 1.0 / 16.0, &[0.0, 3.0, 5.0], 64.0, &SolverOptions::default()).unwrap();
        let rows = adjoint_rows(&f, &sites, &rho, &pr, 0.0, &linspace(0.0, 6.0, 6), &SolverOptions::default()).unwrap();
        for r in &rows {
            // v ≡ 1 up to time-interpolation of the density weights
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-3, "{}", r.iter().sum::<f64>());
        }
    }

    #[test]
    fn ratio_takes_worst_generator() {
        let sup = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 0.0]];
        let inf = vec![vec![1.0, 1.0, 1.0], vec![0.5, 2.0, 1.0]];
        let r = harnack_ratio(&sup, &inf, None).unwrap();
        assert_eq!((r.constant, r.generator, r.used), (4.0, 0, 2));
        let bad = vec![vec![1.0, 0.0, 1.0]];
        assert!(harnack_ratio(&sup, &bad, None).is_err());
    }
}
