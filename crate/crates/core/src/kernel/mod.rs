//! Quenched transition kernels by direct integration of the master equation.

mod caloric;
pub(crate) mod ode;
mod sites;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::env::RateField;
use crate::error::{Error, Result};
use crate::walker::SpaceTime;

pub use caloric::{solve_caloric, BoundaryData, CaloricSolution, Cylinder};
pub use ode::step_size;
pub(crate) use ode::{Backward, Forward, Integrator, System};
pub use sites::{in_ball, norm2, Link, Shape, SiteSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Step is `min(Δ, courant / Λ)`; `Λ` bounds the total jump rate.
    /// Values up to 1 keep every RK4 step positivity preserving.
    pub courant: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { courant: 0.25 }
    }
}

impl SolverOptions {
    pub fn with_courant(courant: f64) -> Self {
        SolverOptions { courant }
    }

    pub(crate) fn integrator(&self, field: &RateField) -> Integrator {
        Integrator::new(step_size(field, self.courant))
    }
}

pub fn torus(d: usize, side: usize) -> Result<Arc<SiteSet>> {
    SiteSet::torus(d, side).map(Arc::new)
}

pub fn ball(d: usize, radius: f64) -> Result<Arc<SiteSet>> {
    SiteSet::ball(d, radius).map(Arc::new)
}

/// `p(x̂; ·, time)` on a finite domain.
#[derive(Clone, Debug)]
pub struct KernelSlice {
    pub sites: Arc<SiteSet>,
    pub base: SpaceTime,
    pub time: f64,
    pub values: Vec<f64>,
}

impl KernelSlice {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn value(&self, y: &[i64]) -> Option<f64> {
        self.sites.index_of(y).map(|i| self.values[i])
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Displacement of site `i` from the base point (minimal image on a torus).
    pub fn displacement(&self, i: usize) -> Vec<i64> {
        let y = self.sites.site(i);
        let mut v: Vec<i64> = y.iter().zip(&self.base.x).map(|(a, b)| a - b).collect();
        if let Some(side) = self.sites.side() {
            let l = side as i64;
            for c in &mut v {
                *c = (*c + l / 2).rem_euclid(l) - l / 2;
            }
        }
        v
    }

    /// Mass at Euclidean distance greater than `radius` from the base point.
    pub fn tail_mass(&self, radius: f64) -> f64 {
        (0..self.values.len())
            .filter(|&i| (norm2(&self.displacement(i)) as f64).sqrt() > radius)
            .map(|i| self.values[i])
            .fold(0.0, |a, v| a + v)
    }
}

fn delta(sites: &SiteSet, x: &[i64]) -> Result<Vec<f64>> {
    let i = sites.require(x)?;
    let mut v = vec![0.0; sites.len()];
    v[i] = 1.0;
    Ok(v)
}

/// Forward kernel from `base` recorded at each of the ascending `times`.
/// On a torus mass is conserved; on any other site set mass leaving the
/// set is killed.
pub fn forward_times(
    field: &RateField,
    sites: &Arc<SiteSet>,
    base: &SpaceTime,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<KernelSlice>> {
    check_times(base.t, times)?;
    let mut sys = Forward::new(sites, field, 1);
    let mut y = delta(sites, &base.x)?;
    let mut integ = opts.integrator(field);
    let mut t = base.t;
    let mut out = Vec::with_capacity(times.len());
    for &s in times {
        integ.advance(&mut sys, field, &mut y, t, s);
        t = s;
        out.push(KernelSlice {
            sites: sites.clone(),
            base: base.clone(),
            time: s,
            values: y.clone(),
        });
    }
    Ok(out)
}

pub fn forward(field: &RateField, sites: &Arc<SiteSet>, base: &SpaceTime, s: f64, opts: &SolverOptions) -> Result<KernelSlice> {
    Ok(forward_times(field, sites, base, &[s], opts)?.remove(0))
}

fn check_times(t0: f64, times: &[f64]) -> Result<()> {
    let mut prev = t0;
    for &s in times {
        if !(s.is_finite() && s >= prev) {
            return Err(Error::Param(format!("evaluation times must be ascending from {t0}; got {s}")));
        }
        prev = s;
    }
    Ok(())
}

/// Killed kernel on `B_R` together with the mass absorbed at each exterior
/// boundary site up to `time`.
#[derive(Clone, Debug)]
pub struct KilledSlice {
    pub slice: KernelSlice,
    pub absorbed: Vec<f64>,
}

impl KilledSlice {
    pub fn survival(&self) -> f64 {
        self.slice.mass()
    }
}

pub fn killed_forward_times(
    field: &RateField,
    radius: f64,
    base: &SpaceTime,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<KilledSlice>> {
    let sites = ball(field.dim(), radius)?;
    killed_forward_on(field, &sites, base, times, opts)
}

pub fn killed_forward(field: &RateField, radius: f64, base: &SpaceTime, s: f64, opts: &SolverOptions) -> Result<KilledSlice> {
    Ok(killed_forward_times(field, radius, base, &[s], opts)?.remove(0))
}

/// Killed kernel on an arbitrary site set.
pub fn killed_forward_on(
    field: &RateField,
    sites: &Arc<SiteSet>,
    base: &SpaceTime,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<KilledSlice>> {
    check_times(base.t, times)?;
    let n = sites.len();
    let mut sys = Forward::new(sites, field, 1);
    sys.flux = true;
    let mut y = delta(sites, &base.x)?;
    y.resize(sys.len(), 0.0);
    let mut integ = opts.integrator(field);
    let mut t = base.t;
    let mut out = Vec::with_capacity(times.len());
    for &s in times {
        integ.advance(&mut sys, field, &mut y, t, s);
        t = s;
        out.push(KilledSlice {
            slice: KernelSlice {
                sites: sites.clone(),
                base: base.clone(),
                time: s,
                values: y[..n].to_vec(),
            },
            absorbed: y[n..].to_vec(),
        });
    }
    Ok(out)
}

fn density_at(rho: &DensityField, p: &SpaceTime) -> Result<f64> {
    let v = rho.value(&p.x, p.t)?;
    if !(v >= 1e-12) {
        return Err(Error::DegenerateDensity {
            value: v,
            context: format!("{:?} at t={}", p.x, p.t),
        });
    }
    Ok(v)
}

/// `q(x̂, ŷ) = p(x̂, ŷ) / ρ(ŷ)`.
pub fn heat_kernel(
    field: &RateField,
    sites: &Arc<SiteSet>,
    from: &SpaceTime,
    to: &SpaceTime,
    rho: &DensityField,
    opts: &SolverOptions,
) -> Result<f64> {
    let r = density_at(rho, to)?;
    let p = forward(field, sites, from, to.t, opts)?;
    let v = p.value(&to.x).ok_or_else(|| Error::OutsideDomain(to.x.clone()))?;
    Ok(v / r)
}

/// `p*_R(ŷ; x̂) = ρ(x̂)/ρ(ŷ) · p_R(x̂; ŷ)`, where `x̂` is earlier than `ŷ`.
pub fn adjoint_kernel(
    field: &RateField,
    radius: f64,
    rho: &DensityField,
    y_hat: &SpaceTime,
    x_hat: &SpaceTime,
    opts: &SolverOptions,
) -> Result<f64> {
    rho.check_ball(radius + 1.0)?;
    let ry = density_at(rho, y_hat)?;
    let rx = density_at(rho, x_hat)?;
    let p = killed_forward(field, radius, x_hat, y_hat.t, opts)?;
    let v = p.slice.value(&y_hat.x).ok_or_else(|| Error::OutsideDomain(y_hat.x.clone()))?;
    Ok(rx / ry * v)
}

/// Kernel and density slices at one time from a joint integration.
#[derive(Clone, Debug)]
pub struct HeatSlice {
    pub kernel: KernelSlice,
    /// `ρ(·, time)` normalized to spatial mean one.
    pub rho: Vec<f64>,
}

impl HeatSlice {
    /// `q = p/ρ` at `y`.
    pub fn q(&self, y: &[i64]) -> Result<f64> {
        let i = self.kernel.sites.require(y)?;
        let r = self.rho[i];
        if !(r >= 1e-12) {
            return Err(Error::DegenerateDensity {
                value: r,
                context: format!("{y:?} at t={}", self.kernel.time),
            });
        }
        Ok(self.kernel.values[i] / r)
    }
}

#[derive(Clone, Debug)]
pub struct HeatRun {
    pub slices: Vec<HeatSlice>,
    /// `Q`-averaged rates per axis over `[base.t, last time]`; `None` for an
    /// empty window.
    pub q_rates: Option<Vec<f64>>,
}

/// `p(base; ·)` and `ρ` on a torus, integrated together so that every
/// caller sees the same `q` values. `ρ` is burned in from the uniform
/// density for `burn_in` before `base.t`.
pub fn heat_kernel_run(
    field: &RateField,
    sites: &Arc<SiteSet>,
    base: &SpaceTime,
    times: &[f64],
    burn_in: f64,
    opts: &SolverOptions,
) -> Result<HeatRun> {
    check_times(base.t, times)?;
    let n = sites.len();
    let d = sites.dim();
    let mut y = delta(sites, &base.x)?;
    y.extend(crate::density::burn_in_state(field, sites, base.t, burn_in, opts)?);
    y.resize(2 * n + d, 0.0);
    let mut sys = crate::density::RateAverage {
        inner: Forward::new(sites, field, 2),
        vector: 1,
    };
    let mut integ = opts.integrator(field);
    let mut t = base.t;
    let mut slices = Vec::with_capacity(times.len());
    for &s in times {
        integ.advance(&mut sys, field, &mut y, t, s);
        t = s;
        let mean = y[n..2 * n].iter().sum::<f64>() / n as f64;
        slices.push(HeatSlice {
            kernel: KernelSlice {
                sites: sites.clone(),
                base: base.clone(),
                time: s,
                values: y[..n].to_vec(),
            },
            rho: y[n..2 * n].iter().map(|r| r / mean).collect(),
        });
    }
    let span = t - base.t;
    let q_rates = (span > 0.0).then(|| y[2 * n..].iter().map(|a| a / (span * n as f64)).collect());
    Ok(HeatRun { slices, q_rates })
}

/// Forward system for `heat_integrals`: `p`, `ρ`, the rate averages, then
/// `∫ p(x_k)/ρ(x_k) dt` for each tracked site.
struct QuotientIntegral<'a> {
    inner: crate::density::RateAverage<'a>,
    points: Vec<usize>,
}

impl System for QuotientIntegral<'_> {
    fn len(&self) -> usize {
        self.inner.len() + self.points.len()
    }

    fn enter_cell(&mut self, cell: i64) {
        self.inner.enter_cell(cell);
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let m = self.inner.len();
        self.inner.rhs(t, &y[..m], &mut dy[..m]);
        let n = self.inner.inner.st.n();
        for (k, &i) in self.points.iter().enumerate() {
            dy[m + k] = y[i] / y[n + i];
        }
    }
}

#[derive(Clone, Debug)]
pub struct HeatIntegrals {
    /// `∫_{base.t}^{t_end} q(base; x_k, t) dt` per tracked point.
    pub integrals: Vec<f64>,
    /// `q(base; x_k, t)` at each record time, per point.
    pub samples: Vec<Vec<f64>>,
    pub q_rates: Vec<f64>,
}

/// Time integrals of `q = p/ρ` at `points` on a torus, with `ρ` burned in
/// for `burn_in` before `base.t` and evolved jointly with `p`.
#[allow(clippy::too_many_arguments)]
pub fn heat_integrals(
    field: &RateField,
    sites: &Arc<SiteSet>,
    base: &SpaceTime,
    points: &[Vec<i64>],
    t_end: f64,
    record: &[f64],
    burn_in: f64,
    opts: &SolverOptions,
) -> Result<HeatIntegrals> {
    check_times(base.t, record)?;
    if !(t_end > base.t) || record.last().is_some_and(|&r| r > t_end) {
        return Err(Error::Param("integration window must end after the records".into()));
    }
    let n = sites.len();
    let d = sites.dim();
    let idx: Vec<usize> = points.iter().map(|x| sites.require(x)).collect::<Result<_>>()?;
    let mut y = delta(sites, &base.x)?;
    y.extend(crate::density::burn_in_state(field, sites, base.t, burn_in, opts)?);
    y.resize(2 * n + d + idx.len(), 0.0);
    let mut sys = QuotientIntegral {
        inner: crate::density::RateAverage {
            inner: Forward::new(sites, field, 2),
            vector: 1,
        },
        points: idx.clone(),
    };
    let mut integ = opts.integrator(field);
    let mut t = base.t;
    let mut samples = vec![Vec::with_capacity(record.len()); idx.len()];
    for &s in record {
        integ.advance(&mut sys, field, &mut y, t, s);
        t = s;
        for (k, &i) in idx.iter().enumerate() {
            samples[k].push(y[i] / y[n + i]);
        }
    }
    integ.advance(&mut sys, field, &mut y, t, t_end);
    let span = t_end - base.t;
    Ok(HeatIntegrals {
        integrals: y[2 * n + d..].to_vec(),
        samples,
        q_rates: y[2 * n..2 * n + d].iter().map(|a| a / (span * n as f64)).collect(),
    })
}

/// `E[τ_R]` from `base`, integrating the survival probability until it
/// falls below `1e-13`.
pub fn mean_exit_time(field: &RateField, radius: f64, base: &SpaceTime, opts: &SolverOptions) -> Result<f64> {
    let sites = ball(field.dim(), radius)?;
    let n = sites.len();
    let mut sys = Forward::new(&sites, field, 1);
    sys.mass = true;
    let mut y = delta(&sites, &base.x)?;
    y.resize(sys.len(), 0.0);
    let mut integ = opts.integrator(field);
    let chunk = (radius * radius).max(1.0);
    let mut t = base.t;
    for _ in 0..100_000 {
        integ.advance(&mut sys, field, &mut y, t, t + chunk);
        t += chunk;
        if y[..n].iter().sum::<f64>() < 1e-13 {
            return Ok(y[n]);
        }
    }
    Err(Error::Param("exit time integration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvParams;

    fn iid() -> RateField {
        RateField::new(EnvParams::iid_checkerboard(2, 0.25, 21)).unwrap()
    }

    #[test]
    fn torus_conserves_mass() {
        let f = iid();
        let t = torus(2, 16).unwrap();
        let s = forward(&f, &t, &SpaceTime::new(vec![1, -2], 0.3), 5.7, &SolverOptions::default()).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-12);
        assert!(s.min() >= 0.0);
    }

    #[test]
    fn zero_time_is_delta() {
        let f = iid();
        let t = torus(2, 8).unwrap();
        let s = forward(&f, &t, &SpaceTime::new(vec![1, 1], 2.0), 2.0, &SolverOptions::default()).unwrap();
        assert_eq!(s.value(&[1, 1]), Some(1.0));
        assert_eq!(s.mass(), 1.0);
    }

    #[test]
    fn killed_mass_plus_flux_is_one() {
        let f = iid();
        let base = SpaceTime::new(vec![0, 0], 0.0);
        let r = killed_forward_times(&f, 4.0, &base, &[1.0, 5.0, 20.0], &SolverOptions::default()).unwrap();
        let mut prev = 1.0;
        for k in &r {
            let total = k.survival() + k.absorbed.iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-9, "{total}");
            assert!(k.survival() <= prev);
            prev = k.survival();
        }
    }

    #[test]
    fn adjoint_is_forward_for_homogeneous() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        let rho = DensityField::constant(2, 16, -1.0, 10.0).unwrap();
        let a = SpaceTime::new(vec![1, 0], 0.0);
        let b = SpaceTime::new(vec![0, 2], 3.0);
        let opts = SolverOptions::default();
        let p = killed_forward(&f, 4.0, &a, 3.0, &opts).unwrap().slice.value(&b.x).unwrap();
        let q = adjoint_kernel(&f, 4.0, &rho, &b, &a, &opts).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn tail_mass_uses_minimal_image() {
        let t = torus(1, 8).unwrap();
        let mut v = vec![0.0; 8];
        v[t.index_of(&[3]).unwrap()] = 0.5;
        v[t.index_of(&[-4]).unwrap()] = 0.5;
        let s = KernelSlice {
            sites: t,
            base: SpaceTime::new(vec![-4], 0.0),
            time: 0.0,
            values: v,
        };
        assert_eq!(s.tail_mass(1.5), 0.0);
    }
}
