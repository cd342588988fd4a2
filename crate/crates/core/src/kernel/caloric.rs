use std::sync::Arc;

use crate::env::RateField;
use crate::error::{Error, Result};

use super::ode::{Backward, System};
use super::sites::SiteSet;
use super::SolverOptions;

/// `D × [t0, t1]`; the parabolic boundary is the exterior boundary of `D`
/// over `[t0, t1]` together with `D` at the terminal time `t1`.
#[derive(Clone, Debug)]
pub struct Cylinder {
    pub sites: Arc<SiteSet>,
    pub t0: f64,
    pub t1: f64,
}

/// Terminal values on every site and lateral values piecewise constant on
/// the bins `[edges[k], edges[k+1])`.
#[derive(Clone, Debug, Default)]
pub struct BoundaryData {
    pub terminal: Vec<f64>,
    pub edges: Vec<f64>,
    pub lateral: Vec<Vec<f64>>,
}

impl BoundaryData {
    pub fn constant(cyl: &Cylinder, c: f64) -> Self {
        BoundaryData {
            terminal: vec![c; cyl.sites.len()],
            edges: vec![cyl.t0, cyl.t1],
            lateral: vec![vec![c; cyl.sites.boundary_len()]],
        }
    }

    /// Terminal data `f`, zero on the lateral boundary.
    pub fn terminal(cyl: &Cylinder, f: Vec<f64>) -> Self {
        BoundaryData {
            terminal: f,
            edges: vec![cyl.t0, cyl.t1],
            lateral: vec![vec![0.0; cyl.sites.boundary_len()]],
        }
    }

    fn validate(&self, cyl: &Cylinder) -> Result<()> {
        let n = cyl.sites.len();
        let nb = cyl.sites.boundary_len();
        if self.terminal.len() != n {
            return Err(Error::IncompleteBoundary(format!(
                "terminal data has {} values for {n} sites",
                self.terminal.len()
            )));
        }
        if nb == 0 {
            return Ok(());
        }
        if self.edges.len() != self.lateral.len() + 1 || self.lateral.is_empty() {
            return Err(Error::IncompleteBoundary("lateral bins do not match edges".into()));
        }
        if self.edges[0] > cyl.t0 || *self.edges.last().unwrap() < cyl.t1 {
            return Err(Error::IncompleteBoundary(format!(
                "lateral data covers [{}, {}], cylinder spans [{}, {}]",
                self.edges[0],
                self.edges.last().unwrap(),
                cyl.t0,
                cyl.t1
            )));
        }
        if self.edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::IncompleteBoundary("lateral edges must increase".into()));
        }
        if let Some(v) = self.lateral.iter().find(|v| v.len() != nb) {
            return Err(Error::IncompleteBoundary(format!(
                "lateral bin has {} values for {nb} boundary sites",
                v.len()
            )));
        }
        Ok(())
    }

    fn min_max(&self) -> (f64, f64) {
        self.terminal
            .iter()
            .chain(self.lateral.iter().flatten())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }
}

#[derive(Clone, Debug)]
pub struct CaloricSolution {
    pub cylinder: Cylinder,
    pub data: BoundaryData,
    /// Recording times in descending order, starting with `t1`.
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl CaloricSolution {
    pub fn at(&self, x: &[i64], t: f64) -> Option<f64> {
        let k = self.times.iter().position(|&s| (s - t).abs() < 1e-9)?;
        self.cylinder.sites.index_of(x).map(|i| self.values[k][i])
    }

    /// Bounds of the boundary data, which also bound the solution.
    pub fn data_range(&self) -> (f64, f64) {
        self.data.min_max()
    }
}

/// Solves `L u = 0` backward from `t1`, recording `u` at each of
/// `record` (any order; values outside `[t0, t1]` are rejected).
pub fn solve_caloric(
    field: &RateField,
    cyl: &Cylinder,
    data: &BoundaryData,
    record: &[f64],
    opts: &SolverOptions,
) -> Result<CaloricSolution> {
    data.validate(cyl)?;
    let mut times: Vec<f64> = record.to_vec();
    times.push(cyl.t1);
    if let Some(&t) = times.iter().find(|&&t| !(t >= cyl.t0 - 1e-12 && t <= cyl.t1 + 1e-12)) {
        return Err(Error::OutsideWindow {
            t,
            lo: cyl.t0,
            hi: cyl.t1,
        });
    }
    times.sort_by(|a, b| b.total_cmp(a));
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let nb = cyl.sites.boundary_len();
    let mut sys = Backward::new(&cyl.sites, field, 1);
    let mut integ = opts.integrator(field);
    let mut u = data.terminal.clone();
    let mut values = Vec::with_capacity(times.len());
    let mut t = cyl.t1;
    // stops: record times plus lateral bin edges inside the cylinder
    let mut stops: Vec<(f64, bool)> = times.iter().map(|&s| (s, true)).collect();
    if nb > 0 {
        stops.extend(data.edges.iter().filter(|&&e| e > cyl.t0 && e < cyl.t1).map(|&e| (e, false)));
    }
    stops.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (s, record) in stops {
        if nb > 0 {
            let mid = 0.5 * (t + s);
            let bin = data.edges.partition_point(|&e| e <= mid).clamp(1, data.lateral.len()) - 1;
            sys.lateral = Some(data.lateral[bin].clone());
        }
        debug_assert_eq!(sys.len(), u.len());
        integ.advance(&mut sys, field, &mut u, t, s);
        t = s;
        if record {
            values.push(u.clone());
        }
    }
    Ok(CaloricSolution {
        cylinder: cyl.clone(),
        data: data.clone(),
        times,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;
    use crate::kernel::ball;

    #[test]
    fn constants_are_caloric() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 5)).unwrap();
        let cyl = Cylinder {
            sites: ball(2, 4.0).unwrap(),
            t0: 0.0,
            t1: 6.0,
        };
        let s = solve_caloric(&f, &cyl, &BoundaryData::constant(&cyl, 2.5), &[0.0, 3.0], &SolverOptions::default()).unwrap();
        for v in s.values.iter().flatten() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn incomplete_data_is_rejected() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        let cyl = Cylinder {
            sites: ball(2, 3.0).unwrap(),
            t0: 0.0,
            t1: 4.0,
        };
        let mut data = BoundaryData::constant(&cyl, 1.0);
        data.terminal.pop();
        assert!(matches!(
            solve_caloric(&f, &cyl, &data, &[], &SolverOptions::default()),
            Err(Error::IncompleteBoundary(_))
        ));
        let mut data = BoundaryData::constant(&cyl, 1.0);
        data.edges = vec![1.0, 4.0];
        assert!(solve_caloric(&f, &cyl, &data, &[], &SolverOptions::default()).is_err());
    }
}
