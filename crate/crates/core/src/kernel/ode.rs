//! Cell-aligned classical RK4 for the lattice master equations.

use crate::env::RateField;

use super::sites::SiteSet;

/// Time snapping tolerance for cell and record boundaries.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// Generator stencil on a site set, with rates cached per time cell.
pub(crate) struct Stencil<'a> {
    pub sites: &'a SiteSet,
    pub field: &'a RateField,
    pub rates: Vec<f64>,
    pub out_rate: Vec<f64>,
    pub brates: Vec<f64>,
    /// Neighbour indices with exterior neighbours replaced by the site itself.
    inner: Vec<u32>,
    /// `a(z→y)` per neighbour slot, zero for exterior neighbours.
    fw: Vec<f64>,
    /// `a(x→z)` per neighbour slot, zero for exterior neighbours.
    gw: Vec<f64>,
    /// `(site, boundary index, rate)` for every exterior neighbour slot.
    exits: Vec<(u32, u32, f64)>,
    cell: Option<i64>,
}

impl<'a> Stencil<'a> {
    pub fn new(sites: &'a SiteSet, field: &'a RateField) -> Self {
        let k = 2 * sites.dim();
        let n = sites.len() as u32;
        let inner = sites
            .neighbors()
            .iter()
            .enumerate()
            .map(|(i, &z)| if z < n { z } else { (i / k) as u32 })
            .collect();
        Stencil {
            sites,
            field,
            rates: Vec::new(),
            out_rate: Vec::new(),
            brates: Vec::new(),
            inner,
            fw: Vec::new(),
            gw: Vec::new(),
            exits: Vec::new(),
            cell: None,
        }
    }

    pub fn load(&mut self, cell: i64) {
        if self.cell == Some(cell) {
            return;
        }
        self.cell = Some(cell);
        let d = self.sites.dim();
        let n = self.n() as u32;
        self.sites.fill_rates(self.field, cell, &mut self.rates);
        self.out_rate.clear();
        self.out_rate
            .extend(self.rates.chunks_exact(d).map(|a| 2.0 * a.iter().sum::<f64>()));
        self.sites.fill_boundary_rates(self.field, cell, &mut self.brates);
        self.fw.clear();
        self.gw.clear();
        self.exits.clear();
        for (i, &z) in self.sites.neighbors().iter().enumerate() {
            let (x, axis) = (i / (2 * d), (i % (2 * d)) / 2);
            let own = self.rates[x * d + axis];
            if z < n {
                self.fw.push(self.rates[z as usize * d + axis]);
                self.gw.push(own);
            } else {
                self.fw.push(0.0);
                self.gw.push(0.0);
                self.exits.push((x as u32, z - n, own));
            }
        }
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// `dp(y) = Σ_{z∼y} a(z→y) p(z) − total(y) p(y)`; mass stepping onto the
    /// exterior boundary is lost.
    pub fn forward(&self, p: &[f64], dp: &mut [f64]) {
        match 2 * self.sites.dim() {
            2 => weighted::<2>(&self.inner, &self.fw, &self.out_rate, p, dp),
            4 => weighted::<4>(&self.inner, &self.fw, &self.out_rate, p, dp),
            6 => weighted::<6>(&self.inner, &self.fw, &self.out_rate, p, dp),
            k => weighted_dyn(k, &self.inner, &self.fw, &self.out_rate, p, dp),
        }
    }

    /// Flow into each boundary site: `Σ_{links} a(z→b) p(z)`.
    pub fn flux(&self, p: &[f64], out: &mut [f64]) {
        let d = self.sites.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        for l in self.sites.links() {
            let z = l.site as usize;
            out[l.boundary as usize] += self.rates[z * d + l.axis as usize] * p[z];
        }
    }

    /// `Σ_k a(x,k)(u(x±e) − u(x))` with `lateral` supplying values on the
    /// exterior boundary. Writes the generator applied to `u` into `out`.
    pub fn generator(&self, u: &[f64], lateral: Option<&[f64]>, out: &mut [f64]) {
        match 2 * self.sites.dim() {
            2 => weighted::<2>(&self.inner, &self.gw, &self.out_rate, u, out),
            4 => weighted::<4>(&self.inner, &self.gw, &self.out_rate, u, out),
            6 => weighted::<6>(&self.inner, &self.gw, &self.out_rate, u, out),
            k => weighted_dyn(k, &self.inner, &self.gw, &self.out_rate, u, out),
        }
        if let Some(g) = lateral {
            for &(x, b, a) in &self.exits {
                out[x as usize] += a * g[b as usize];
            }
        }
    }

    /// `Σ_{links (z,b)} a(b→z) u(z)`, the inflow weight at each boundary site.
    pub fn boundary_inflow(&self, u: &[f64], out: &mut [f64]) {
        let d = self.sites.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        for l in self.sites.links() {
            let b = l.boundary as usize;
            out[b] += self.brates[b * d + l.axis as usize] * u[l.site as usize];
        }
    }
}

/// `out(x) = Σ_k w(x,k) v(idx(x,k)) − diag(x) v(x)` with `K` slots per site.
fn weighted<const K: usize>(idx: &[u32], w: &[f64], diag: &[f64], v: &[f64], out: &mut [f64]) {
    let rows = idx.chunks_exact(K).zip(w.chunks_exact(K));
    for (((ix, wt), o), (dg, vx)) in rows.zip(out.iter_mut()).zip(diag.iter().zip(v)) {
        let mut acc = 0.0;
        for k in 0..K {
            acc += wt[k] * v[ix[k] as usize];
        }
        *o = acc - dg * vx;
    }
}

fn weighted_dyn(k: usize, idx: &[u32], w: &[f64], diag: &[f64], v: &[f64], out: &mut [f64]) {
    let rows = idx.chunks_exact(k).zip(w.chunks_exact(k));
    for (((ix, wt), o), (dg, vx)) in rows.zip(out.iter_mut()).zip(diag.iter().zip(v)) {
        let acc: f64 = ix.iter().zip(wt).fold(0.0, |a, (&i, &c)| a + c * v[i as usize]);
        *o = acc - dg * vx;
    }
}

pub(crate) trait System {
    fn len(&self) -> usize;
    fn enter_cell(&mut self, cell: i64);
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]);
}

pub(crate) struct Integrator {
    h_max: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    pub steps: u64,
}

/// Largest step: `min(Δ, courant / Λ)` with `Λ` the thinning bound.
pub fn step_size(field: &RateField, courant: f64) -> f64 {
    (courant / field.thinning_bound()).min(field.delta_t())
}

impl Integrator {
    pub fn new(h_max: f64) -> Self {
        assert!(h_max > 0.0 && h_max.is_finite());
        Integrator {
            h_max,
            k: Default::default(),
            tmp: Vec::new(),
            steps: 0,
        }
    }

    /// Integrates `y` from `t0` to `t1` (either direction), splitting at
    /// cell boundaries of `field` so that each step sees constant rates.
    pub fn advance<S: System>(&mut self, sys: &mut S, field: &RateField, y: &mut [f64], t0: f64, t1: f64) {
        let m = sys.len();
        assert_eq!(y.len(), m);
        for k in &mut self.k {
            k.resize(m, 0.0);
        }
        self.tmp.resize(m, 0.0);
        let forward = t1 >= t0;
        let mut t = t0;
        while (t1 - t).abs() > TIME_EPS {
            let (cell, mut end) = if forward {
                let c = field.cell_of(t);
                (c, field.cell_bounds(c).1.min(t1))
            } else {
                let mut c = field.cell_of(t);
                if t - field.cell_bounds(c).0 <= TIME_EPS {
                    c -= 1;
                }
                (c, field.cell_bounds(c).0.max(t1))
            };
            if (end - t1).abs() <= TIME_EPS {
                end = t1;
            }
            sys.enter_cell(cell);
            let len = end - t;
            let n = ((len.abs() / self.h_max) - 1e-9).ceil().max(1.0) as usize;
            let h = len / n as f64;
            for i in 0..n {
                self.step(sys, y, t + i as f64 * h, h);
            }
            t = end;
        }
    }

    fn step<S: System>(&mut self, sys: &mut S, y: &mut [f64], t: f64, h: f64) {
        self.steps += 1;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        sys.rhs(t, y, k1);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, tmp, k2);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(t + 0.5 * h, tmp, k3);
        for i in 0..y.len() {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(t + h, tmp, k4);
        let h6 = h / 6.0;
        for i in 0..y.len() {
            y[i] += h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }
}

/// Forward evolution of `m` stacked vectors, optionally with per-vector
/// boundary-flux and mass-integral accumulators appended to the state.
///
/// Layout: `m·n` densities, then `m·nb` flux integrals (if enabled), then
/// `m` mass integrals (if enabled).
pub(crate) struct Forward<'a> {
    pub st: Stencil<'a>,
    pub m: usize,
    /// Only the first `active` vectors evolve; the rest are held at zero.
    pub active: usize,
    pub flux: bool,
    pub mass: bool,
}

impl<'a> Forward<'a> {
    pub fn new(sites: &'a SiteSet, field: &'a RateField, m: usize) -> Self {
        Forward {
            st: Stencil::new(sites, field),
            m,
            active: m,
            flux: false,
            mass: false,
        }
    }

    pub fn flux_offset(&self) -> usize {
        self.m * self.st.n()
    }

    pub fn mass_offset(&self) -> usize {
        self.flux_offset() + if self.flux { self.m * self.st.sites.boundary_len() } else { 0 }
    }
}

impl System for Forward<'_> {
    fn len(&self) -> usize {
        self.mass_offset() + if self.mass { self.m } else { 0 }
    }

    fn enter_cell(&mut self, cell: i64) {
        self.st.load(cell);
    }

    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.st.n();
        let nb = self.st.sites.boundary_len();
        let (fo, mo) = (self.flux_offset(), self.mass_offset());
        dy.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.active {
            let p = &y[j * n..(j + 1) * n];
            self.st.forward(p, &mut dy[j * n..(j + 1) * n]);
            if self.flux {
                self.st.flux(p, &mut dy[fo + j * nb..fo + (j + 1) * nb]);
            }
            if self.mass {
                dy[mo + j] = p.iter().sum();
            }
        }
    }
}

/// Backward (caloric) evolution `∂_t u = −L u` of `m` stacked vectors with
/// shared lateral data, optionally accumulating the weighted boundary inflow
/// `∫ w(b,t) Σ_{z∼b} a(b→z) u(z,t) dt` per vector and boundary site.
pub(crate) struct Backward<'a> {
    pub st: Stencil<'a>,
    pub m: usize,
    /// Only the first `active` vectors evolve; the rest are held at zero.
    pub active: usize,
    pub lateral: Option<Vec<f64>>,
    pub weight: Option<&'a dyn Fn(f64, &mut [f64])>,
    wbuf: Vec<f64>,
    ibuf: Vec<f64>,
}

impl<'a> Backward<'a> {
    pub fn new(sites: &'a SiteSet, field: &'a RateField, m: usize) -> Self {
        Backward {
            st: Stencil::new(sites, field),
            m,
            active: m,
            lateral: None,
            weight: None,
            wbuf: Vec::new(),
            ibuf: Vec::new(),
        }
    }

    pub fn acc_offset(&self) -> usize {
        self.m * self.st.n()
    }
}

impl System for Backward<'_> {
    fn len(&self) -> usize {
        self.acc_offset() + if self.weight.is_some() { self.m * self.st.sites.boundary_len() } else { 0 }
    }

    fn enter_cell(&mut self, cell: i64) {
        self.st.load(cell);
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.st.n();
        let nb = self.st.sites.boundary_len();
        let ao = self.acc_offset();
        if let Some(w) = self.weight {
            self.wbuf.resize(nb, 0.0);
            self.ibuf.resize(nb, 0.0);
            w(t, &mut self.wbuf);
        }
        dy.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.active {
            let u = &y[j * n..(j + 1) * n];
            let out = &mut dy[j * n..(j + 1) * n];
            self.st.generator(u, self.lateral.as_deref(), out);
            out.iter_mut().for_each(|v| *v = -*v);
            if self.weight.is_some() {
                self.st.boundary_inflow(u, &mut self.ibuf);
                for b in 0..nb {
                    // accumulators grow as t decreases
                    dy[ao + j * nb + b] = -self.wbuf[b] * self.ibuf[b];
                }
            }
        }
    }
}
