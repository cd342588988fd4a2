//! Exact path simulation by Poisson thinning.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::env::{Point, RateField};

/// A space-time point `(x, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTime {
    pub x: Point,
    pub t: f64,
}

impl SpaceTime {
    pub fn new(x: impl Into<Point>, t: f64) -> Self {
        SpaceTime { x: x.into(), t }
    }

    pub fn origin(d: usize) -> Self {
        SpaceTime { x: vec![0; d], t: 0.0 }
    }
}

/// Independent random stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub start: SpaceTime,
    /// Jump times (absolute) and the position entered at each.
    pub events: Vec<(f64, Point)>,
    pub horizon: f64,
}

impl PathSample {
    /// Right-continuous position at absolute time `s`.
    pub fn position_at(&self, s: f64) -> &[i64] {
        let k = self.events.partition_point(|(u, _)| *u <= s);
        if k == 0 {
            &self.start.x
        } else {
            &self.events[k - 1].1
        }
    }

    pub fn end(&self) -> &[i64] {
        self.events.last().map_or(&self.start.x[..], |(_, x)| &x[..])
    }

    pub fn jumps(&self) -> usize {
        self.events.len()
    }
}

/// Runs the walk from `start` for `horizon` time units, calling
/// `on_jump(time, new_position)` after each accepted jump. Returns the
/// final position.
pub fn simulate<R: Rng + ?Sized>(
    field: &RateField,
    start: &SpaceTime,
    horizon: f64,
    rng: &mut R,
    mut on_jump: impl FnMut(f64, &[i64]),
) -> Point {
    let d = field.dim();
    let lambda = field.thinning_bound();
    let end = start.t + horizon;
    let mut x = start.x.clone();
    let mut s = start.t;
    loop {
        let e: f64 = rng.sample(Exp1);
        s += e / lambda;
        if s > end {
            return x;
        }
        let mut u = rng.random::<f64>() * lambda;
        let cell = field.cell_of(s);
        for i in 0..d {
            let a = field.rate_in_cell(&x, cell, i);
            if u < 2.0 * a {
                x[i] += if u < a { 1 } else { -1 };
                on_jump(s, &x);
                break;
            }
            u -= 2.0 * a;
        }
    }
}

pub fn sample_path<R: Rng + ?Sized>(field: &RateField, start: &SpaceTime, horizon: f64, rng: &mut R) -> PathSample {
    assert!(horizon > 0.0, "horizon must be positive");
    let mut events = Vec::new();
    simulate(field, start, horizon, rng, |s, x| events.push((s, x.to_vec())));
    PathSample {
        start: start.clone(),
        events,
        horizon,
    }
}

/// Positions at the elapsed times `times` (sorted ascending).
pub fn positions_at<R: Rng + ?Sized>(field: &RateField, start: &SpaceTime, times: &[f64], rng: &mut R) -> Vec<Point> {
    let mut out = Vec::with_capacity(times.len());
    let Some(&last) = times.last() else {
        return out;
    };
    let mut prev = start.x.clone();
    let mut k = 0;
    let end = simulate(field, start, last, rng, |s, x| {
        while k < times.len() && start.t + times[k] < s {
            out.push(prev.clone());
            k += 1;
        }
        prev.copy_from_slice(x);
    });
    while out.len() < times.len() {
        out.push(end.clone());
    }
    out
}

/// First event (or the start) at which `inside` fails.
pub fn exit_time(path: &PathSample, inside: impl Fn(&[i64], f64) -> bool) -> Option<(f64, Point)> {
    if !inside(&path.start.x, path.start.t) {
        return Some((path.start.t, path.start.x.clone()));
    }
    path.events
        .iter()
        .find(|(s, x)| !inside(x, *s))
        .map(|(s, x)| (*s, x.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalKernel {
    pub origin: SpaceTime,
    pub elapsed: f64,
    pub counts: BTreeMap<Point, u64>,
    pub n_samples: u64,
}

impl EmpiricalKernel {
    pub fn probability(&self, y: &[i64]) -> f64 {
        self.counts.get(y).copied().unwrap_or(0) as f64 / self.n_samples as f64
    }
}

/// Endpoint histogram from `n_samples` independent paths; path `k` uses
/// stream `k` of `seed`.
pub fn empirical_kernel(field: &RateField, start: &SpaceTime, elapsed: f64, n_samples: u64, seed: u64) -> EmpiricalKernel {
    assert!(n_samples >= 1);
    let mut counts = BTreeMap::new();
    for k in 0..n_samples {
        let end = if elapsed > 0.0 {
            let mut rng = stream_rng(seed, k);
            simulate(field, start, elapsed, &mut rng, |_, _| {})
        } else {
            start.x.clone()
        };
        *counts.entry(end).or_insert(0) += 1;
    }
    EmpiricalKernel {
        origin: start.clone(),
        elapsed,
        counts,
        n_samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;

    #[test]
    fn path_invariants() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 3)).unwrap();
        let start = SpaceTime::new(vec![1, 2], 0.5);
        let p = sample_path(&f, &start, 20.0, &mut stream_rng(9, 0));
        let mut prev = start.x.clone();
        let mut t = start.t;
        for (s, x) in &p.events {
            assert!(*s > t && *s <= start.t + 20.0);
            let dist: i64 = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
            assert_eq!(dist, 1);
            prev = x.clone();
            t = *s;
        }
        assert_eq!(p.position_at(start.t), &start.x[..]);
        assert_eq!(p.position_at(1e9), p.end());
    }

    #[test]
    fn same_stream_same_path() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 3)).unwrap();
        let s = SpaceTime::origin(2);
        let a = sample_path(&f, &s, 10.0, &mut stream_rng(4, 17));
        let b = sample_path(&f, &s, 10.0, &mut stream_rng(4, 17));
        let c = sample_path(&f, &s, 10.0, &mut stream_rng(4, 18));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn exit_cases() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        let s = SpaceTime::origin(2);
        let p = sample_path(&f, &s, 50.0, &mut stream_rng(1, 0));
        assert!(exit_time(&p, |_, _| true).is_none());
        let (t, x) = exit_time(&p, |x, _| x.iter().all(|&c| c == 0)).unwrap();
        assert_eq!(t, p.events[0].0);
        assert_eq!(x, p.events[0].1);
    }

    #[test]
    fn zero_elapsed_kernel_is_delta() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        let k = empirical_kernel(&f, &SpaceTime::new(vec![3, 4], 0.0), 0.0, 10, 0);
        assert_eq!(k.probability(&[3, 4]), 1.0);
        assert_eq!(k.counts.values().sum::<u64>(), 10);
    }

    #[test]
    fn positions_at_matches_path() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 5)).unwrap();
        let s = SpaceTime::new(vec![0, 0], 0.3);
        let times = [0.0, 1.0, 2.5, 7.0];
        let a = positions_at(&f, &s, &times, &mut stream_rng(2, 3));
        let p = sample_path(&f, &s, 7.0, &mut stream_rng(2, 3));
        for (x, t) in a.iter().zip(times) {
            assert_eq!(&x[..], p.position_at(s.t + t));
        }
    }
}
