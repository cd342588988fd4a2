//! Invariant density of the environment seen from the walk, on a torus.

use std::sync::Arc;

use crate::env::RateField;
use crate::error::{Error, Result};
use crate::kernel::{Forward, SiteSet, SolverOptions, System};
use crate::stats::Moments;

/// Slices `ρ(·, t_j)` on a torus, each normalized to spatial mean one.
#[derive(Clone, Debug)]
pub struct DensityField {
    sites: Arc<SiteSet>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    burn_in: f64,
}

/// Default burn-in `8 L²`.
pub fn default_burn_in(side: usize) -> f64 {
    8.0 * (side * side) as f64
}

fn torus_side(sites: &SiteSet) -> Result<usize> {
    sites
        .side()
        .ok_or_else(|| Error::Param("density requires a torus domain".into()))
}

/// Evolves the uniform density from `t0 − burn_in` to `t0`; the result has
/// total mass `L^d`.
pub fn burn_in_state(field: &RateField, sites: &SiteSet, t0: f64, burn_in: f64, opts: &SolverOptions) -> Result<Vec<f64>> {
    torus_side(sites)?;
    if !(burn_in >= 0.0) {
        return Err(Error::Param(format!("burn-in {burn_in} must be nonnegative")));
    }
    let mut rho = vec![1.0; sites.len()];
    if field.is_homogeneous() {
        return Ok(rho);
    }
    let mut sys = Forward::new(sites, field, 1);
    opts.integrator(field).advance(&mut sys, field, &mut rho, t0 - burn_in, t0);
    Ok(rho)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x / mean).collect()
}

impl DensityField {
    /// `ρ ≡ 1` on `[t0, t1]`, exact for homogeneous fields.
    pub fn constant(d: usize, side: usize, t0: f64, t1: f64) -> Result<Self> {
        let sites = Arc::new(SiteSet::torus(d, side)?);
        let n = sites.len();
        Ok(DensityField {
            sites,
            times: vec![t0, t1],
            values: vec![vec![1.0; n]; 2],
            burn_in: 0.0,
        })
    }

    pub fn sites(&self) -> &Arc<SiteSet> {
        &self.sites
    }

    pub fn side(&self) -> usize {
        self.sites.side().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }

    pub fn window(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.window();
        if !(t >= lo - 1e-9 && t <= hi + 1e-9) {
            return Err(Error::OutsideWindow { t, lo, hi });
        }
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let j = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1) - 1;
        let w = ((t - self.times[j]) / (self.times[j + 1] - self.times[j])).clamp(0.0, 1.0);
        Ok((j, w))
    }

    /// `ρ(x, t)`, linear in `t` between slices.
    pub fn value(&self, x: &[i64], t: f64) -> Result<f64> {
        let i = self.sites.require(x)?;
        let (j, w) = self.bracket(t)?;
        if w == 0.0 {
            return Ok(self.values[j][i]);
        }
        Ok((1.0 - w) * self.values[j][i] + w * self.values[j + 1][i])
    }

    /// Fills `out[k] = ρ(points[k], t)` for torus site indices `points`.
    pub fn fill(&self, points: &[usize], t: f64, out: &mut [f64]) -> Result<()> {
        let (j, w) = self.bracket(t)?;
        for (o, &i) in out.iter_mut().zip(points) {
            *o = if w == 0.0 {
                self.values[j][i]
            } else {
                (1.0 - w) * self.values[j][i] + w * self.values[j + 1][i]
            };
        }
        Ok(())
    }

    /// Errors unless every ball of radius `r` about the origin lies inside the
    /// canonical window of the torus.
    pub fn check_ball(&self, r: f64) -> Result<()> {
        self.check_ball_at(&vec![0; self.sites.dim()], r)
    }

    fn check_ball_at(&self, center: &[i64], r: f64) -> Result<()> {
        let side = self.side();
        let half = (side / 2) as i64;
        let ri = r.floor() as i64;
        if center.iter().any(|&c| c - ri < -half || c + ri >= half) {
            return Err(Error::BallEscapesTorus { radius: r, side });
        }
        Ok(())
    }

    /// Every `k`-th slice, keeping the first.
    pub fn subsample(&self, k: usize) -> DensityField {
        let k = k.max(1);
        DensityField {
            sites: self.sites.clone(),
            times: self.times.iter().step_by(k).copied().collect(),
            values: self.values.iter().step_by(k).cloned().collect(),
            burn_in: self.burn_in,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of any slice mean from one.
    pub fn mean_error(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v.iter().sum::<f64>() / v.len() as f64 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &DensityField) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `ρ` on `[t0, t1]` recorded every `record_step`, after evolving the uniform
/// density for `burn_in` time units. The window must be aligned to the
/// cell grid of the field.
pub fn compute_rho(
    field: &RateField,
    sites: &Arc<SiteSet>,
    t0: f64,
    t1: f64,
    burn_in: f64,
    record_step: f64,
    opts: &SolverOptions,
) -> Result<DensityField> {
    if !field.is_static() {
        let dt = field.delta_t();
        for t in [t0, t1] {
            let u = t / dt;
            if (u - u.round()).abs() > 1e-9 {
                return Err(Error::Param(format!("window end {t} not aligned to cell length {dt}")));
            }
        }
    }
    if !(t1 >= t0 && record_step > 0.0) {
        return Err(Error::Param("window must satisfy t0 <= t1 with positive step".into()));
    }
    let k = ((t1 - t0) / record_step).round() as usize;
    if ((t1 - t0) - k as f64 * record_step).abs() > 1e-9 {
        return Err(Error::Param("record step must divide the window".into()));
    }
    let times: Vec<f64> = (0..=k).map(|j| t0 + j as f64 * record_step).collect();
    compute_rho_at(field, sites, &times, burn_in, opts)
}

/// `ρ` at the ascending `times`, burn-in measured back from `times[0]`.
pub fn compute_rho_at(
    field: &RateField,
    sites: &Arc<SiteSet>,
    times: &[f64],
    burn_in: f64,
    opts: &SolverOptions,
) -> Result<DensityField> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Param("density times must be strictly ascending".into()));
    }
    let mut rho = burn_in_state(field, sites, times[0], burn_in, opts)?;
    let mut values = Vec::with_capacity(times.len());
    if field.is_homogeneous() {
        values = vec![rho; times.len()];
    } else {
        let mut sys = Forward::new(sites, field, 1);
        let mut integ = opts.integrator(field);
        let mut t = times[0];
        for &s in times {
            integ.advance(&mut sys, field, &mut rho, t, s);
            t = s;
            values.push(normalized(&rho));
        }
    }
    Ok(DensityField {
        sites: sites.clone(),
        times: times.to_vec(),
        values,
        burn_in,
    })
}

/// Max over interior grid points of `|centered ρ̇ − Σ_y ρ(y) ω(y,x)|`.
/// Points whose stencil straddles a cell boundary are skipped.
pub fn invariance_residual(field: &RateField, rho: &DensityField) -> Result<f64> {
    let ts = &rho.times;
    let sites = rho.sites.as_ref();
    let mut sys = Forward::new(sites, field, 1);
    let mut gen = vec![0.0; sites.len()];
    let mut worst: Option<f64> = None;
    for j in 1..ts.len().saturating_sub(1) {
        let (a, b, c) = (ts[j - 1], ts[j], ts[j + 1]);
        let h = b - a;
        if ((c - b) - h).abs() > 1e-9 * h.max(1.0) {
            continue;
        }
        let cell = field.cell_of(0.5 * (a + b));
        if field.cell_of(0.5 * (b + c)) != cell {
            continue;
        }
        sys.enter_cell(cell);
        sys.rhs(b, &rho.values[j], &mut gen);
        let r = (0..sites.len())
            .map(|i| ((rho.values[j + 1][i] - rho.values[j - 1][i]) / (2.0 * h) - gen[i]).abs())
            .fold(0.0, f64::max);
        worst = Some(worst.map_or(r, |w: f64| w.max(r)));
    }
    worst.ok_or_else(|| Error::GridTooCoarse("no grid point has a centered stencil inside one cell".into()))
}

/// Forward system with `d` extra components accumulating
/// `∫ Σ_x y_v(x) a_i(x,t) dt` for the stacked vector `v`.
pub(crate) struct RateAverage<'a> {
    pub inner: Forward<'a>,
    pub vector: usize,
}

impl System for RateAverage<'_> {
    fn len(&self) -> usize {
        self.inner.len() + self.inner.st.sites.dim()
    }

    fn enter_cell(&mut self, cell: i64) {
        self.inner.enter_cell(cell);
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.inner.len();
        self.inner.rhs(t, &y[..n], &mut dy[..n]);
        let d = self.inner.st.sites.dim();
        let m = self.inner.st.n();
        let v = &y[self.vector * m..(self.vector + 1) * m];
        let rates = &self.inner.st.rates;
        for i in 0..d {
            dy[n + i] = v.iter().enumerate().map(|(x, r)| r * rates[x * d + i]).sum();
        }
    }
}

/// `E_Q[a_i] ≈ (1/(t1 − t0)) ∫ mean_x ρ(x,t) a_i(x,t) dt` on a torus, per axis.
pub fn q_mean_rates(field: &RateField, sites: &SiteSet, t0: f64, t1: f64, burn_in: f64, opts: &SolverOptions) -> Result<Vec<f64>> {
    if !(t1 > t0) {
        return Err(Error::Param("averaging window must have positive length".into()));
    }
    let d = sites.dim();
    let mut y = burn_in_state(field, sites, t0, burn_in, opts)?;
    let n = y.len();
    y.resize(n + d, 0.0);
    let mut sys = RateAverage {
        inner: Forward::new(sites, field, 1),
        vector: 0,
    };
    opts.integrator(field).advance(&mut sys, field, &mut y, t0, t1);
    let mass: f64 = y[..n].iter().sum();
    Ok(y[n..].iter().map(|a| a / ((t1 - t0) * mass)).collect())
}

/// `ρ(B_r(center), t) = Σ_{|x−center|₂ ≤ r} ρ(x, t)`.
pub fn rho_ball(rho: &DensityField, center: &[i64], r: f64, t: f64) -> Result<f64> {
    rho.check_ball_at(center, r)?;
    let ball = SiteSet::ball_at(center, r)?;
    let idx: Vec<usize> = ball.sites().map(|x| rho.sites.index_of(x).unwrap()).collect();
    let mut v = vec![0.0; idx.len()];
    rho.fill(&idx, t, &mut v)?;
    Ok(v.iter().sum())
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Monte Carlo estimate of `E[ρ(0,0)^p]` over independent environments.
pub fn rho_moment(ensemble: &[DensityField], p: f64) -> Result<Estimate> {
    if ensemble.len() < 30 {
        return Err(Error::Param(format!("moment audit needs at least 30 environments, got {}", ensemble.len())));
    }
    let mut m = Moments::default();
    for rho in ensemble {
        let d = rho.sites.dim();
        m.push(rho.value(&vec![0; d], 0.0)?.powf(p));
    }
    Ok(Estimate {
        mean: m.mean(),
        se: m.std_err(),
        n: ensemble.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;
    use crate::kernel::torus;

    #[test]
    fn homogeneous_density_is_one() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        let t = torus(2, 8).unwrap();
        let r = compute_rho(&f, &t, 0.0, 2.0, 10.0, 0.25, &SolverOptions::default()).unwrap();
        assert!(r.values.iter().flatten().all(|&v| v == 1.0));
        assert_eq!(invariance_residual(&f, &r).unwrap(), 0.0);
    }

    #[test]
    fn homogeneous_rate_average() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.3)).unwrap();
        let t = torus(2, 8).unwrap();
        let a = q_mean_rates(&f, &t, 0.0, 3.0, 0.0, &SolverOptions::default()).unwrap();
        assert!(a.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn ball_mass_counts_points() {
        let r = DensityField::constant(2, 16, 0.0, 1.0).unwrap();
        assert_eq!(rho_ball(&r, &[0, 0], 2.0, 0.5).unwrap(), 13.0);
        assert_eq!(rho_ball(&r, &[0, 0], 4.0, 0.0).unwrap(), 49.0);
        assert!(matches!(rho_ball(&r, &[0, 0], 8.0, 0.0), Err(Error::BallEscapesTorus { .. })));
    }

    #[test]
    fn random_density_is_positive_and_normalized() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 4)).unwrap();
        let t = torus(2, 8).unwrap();
        let r = compute_rho(&f, &t, 0.0, 1.0, 16.0, 1.0 / 16.0, &SolverOptions::default()).unwrap();
        assert!(r.min() > 0.0);
        assert!(r.mean_error() < 1e-12);
    }

    #[test]
    fn misaligned_window_is_rejected() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 4)).unwrap();
        let t = torus(2, 8).unwrap();
        assert!(compute_rho(&f, &t, 0.5, 2.0, 4.0, 0.5, &SolverOptions::default()).is_err());
    }

    #[test]
    fn coarse_grid_is_reported() {
        let f = RateField::new(EnvParams::iid_checkerboard(2, 0.25, 4)).unwrap();
        let t = torus(2, 8).unwrap();
        let r = compute_rho(&f, &t, 0.0, 2.0, 4.0, 1.0, &SolverOptions::default()).unwrap();
        assert!(matches!(invariance_residual(&f, &r), Err(Error::GridTooCoarse(_))));
    }
}
