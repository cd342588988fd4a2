//! Balanced, uniformly elliptic space-time environments.
//!
//! A field is a pure function of its parameters: rates are derived on demand
//! from a keyed hash of `(seed, site, time cell, axis)`, so walkers may roam
//! arbitrarily far without any stored state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vec<i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Homogeneous,
    IidCheckerboard,
    StaticIid,
    TwoStateFlip,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Homogeneous => "homogeneous",
            Model::IidCheckerboard => "iid_checkerboard",
            Model::StaticIid => "static_iid",
            Model::TwoStateFlip => "two_state_flip",
        }
    }
}

/// Serialized form of an environment. Every report embeds one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    pub d: usize,
    pub kappa: f64,
    pub model: Model,
    #[serde(default = "default_delta")]
    pub delta_t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model_params: BTreeMap<String, f64>,
}

fn default_delta() -> f64 {
    1.0
}

impl EnvParams {
    pub fn iid_checkerboard(d: usize, kappa: f64, seed: u64) -> Self {
        EnvParams {
            d,
            kappa,
            model: Model::IidCheckerboard,
            delta_t: 1.0,
            seed,
            model_params: BTreeMap::new(),
        }
    }

    pub fn static_iid(d: usize, kappa: f64, seed: u64) -> Self {
        EnvParams {
            model: Model::StaticIid,
            ..Self::iid_checkerboard(d, kappa, seed)
        }
    }

    /// Constant rate `a` on every axis; kappa is set to the largest value
    /// compatible with `a`.
    pub fn homogeneous(d: usize, a: f64) -> Self {
        let kappa = a.min(1.0 / a).min(0.5);
        let mut model_params = BTreeMap::new();
        model_params.insert("a".to_string(), a);
        EnvParams {
            d,
            kappa,
            model: Model::Homogeneous,
            delta_t: 1.0,
            seed: 0,
            model_params,
        }
    }

    pub fn two_state_flip(d: usize, kappa: f64, low: f64, high: f64, flip_rate: f64, seed: u64) -> Self {
        let mut model_params = BTreeMap::new();
        model_params.insert("low".to_string(), low);
        model_params.insert("high".to_string(), high);
        model_params.insert("flip_rate".to_string(), flip_rate);
        EnvParams {
            d,
            kappa,
            model: Model::TwoStateFlip,
            delta_t: 1.0,
            seed,
            model_params,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EnvParams {
            seed,
            ..self.clone()
        }
    }

    /// `n` environments of the same family with consecutive seeds.
    pub fn ensemble(&self, n: usize) -> Vec<EnvParams> {
        (0..n as u64).map(|k| self.with_seed(self.seed.wrapping_add(k))).collect()
    }

    fn param(&self, key: &str) -> Option<f64> {
        self.model_params.get(key).copied()
    }

    fn require(&self, key: &str) -> Result<f64> {
        self.param(key)
            .ok_or_else(|| Error::Param(format!("model `{}` needs model_params.{key}", self.model.name())))
    }

    fn check_rate(&self, name: &str, a: f64) -> Result<()> {
        let k = self.kappa;
        if !(a.is_finite() && a >= k * (1.0 - 1e-12) && a <= (1.0 / k) * (1.0 + 1e-12)) {
            return Err(Error::Param(format!("{name} = {a} outside [{k}, {}]", 1.0 / k)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 6 {
            return Err(Error::Param(format!("dimension {} not in 1..=6", self.d)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Param(format!("kappa = {} not in (0,1)", self.kappa)));
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::Param(format!("delta_t = {} must be positive", self.delta_t)));
        }
        let known: &[&str] = match self.model {
            Model::Homogeneous => &["a", "a_0", "a_1", "a_2", "a_3", "a_4", "a_5"],
            Model::IidCheckerboard | Model::StaticIid => &[],
            Model::TwoStateFlip => &["low", "high", "flip_rate"],
        };
        if let Some(k) = self.model_params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Param(format!("unknown model_params key `{k}` for `{}`", self.model.name())));
        }
        match self.model {
            Model::Homogeneous => {
                for i in 0..self.d {
                    let a = self.homogeneous_rate(i)?;
                    self.check_rate(&format!("a_{i}"), a)?;
                }
            }
            Model::IidCheckerboard | Model::StaticIid => {}
            Model::TwoStateFlip => {
                self.check_rate("low", self.require("low")?)?;
                self.check_rate("high", self.require("high")?)?;
                let lam = self.require("flip_rate")?;
                if !(lam.is_finite() && lam > 0.0) {
                    return Err(Error::Param(format!("flip_rate = {lam} must be positive")));
                }
            }
        }
        Ok(())
    }

    fn homogeneous_rate(&self, axis: usize) -> Result<f64> {
        self.param(&format!("a_{axis}"))
            .or_else(|| self.param("a"))
            .ok_or_else(|| Error::Param("homogeneous model needs model_params.a".into()))
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Constant(Vec<f64>),
    Uniform { lo: f64, span: f64, dynamic: bool },
    Flip { low: f64, high: f64, odd: Vec<f64> },
}

/// Queryable environment. Cheap to clone and safe to share.
#[derive(Clone, Debug)]
pub struct RateField {
    params: EnvParams,
    kind: Kind,
    offset: Point,
    time_offset: f64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TAG_RATE: u64 = 1;
const TAG_FLIP_INIT: u64 = 2;
const TAG_FLIP_TREE: u64 = 3;
const FLIP_LEVELS: usize = 62;
/// Cells before this index are never reached by the flip construction.
const FLIP_ORIGIN: i64 = -(1i64 << 61);

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(h: u64, v: u64) -> u64 {
    mix64(h.wrapping_add(GOLDEN) ^ v)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl RateField {
    pub fn new(params: EnvParams) -> Result<Self> {
        params.validate()?;
        let kind = match params.model {
            Model::Homogeneous => {
                Kind::Constant((0..params.d).map(|i| params.homogeneous_rate(i)).collect::<Result<_>>()?)
            }
            Model::IidCheckerboard | Model::StaticIid => Kind::Uniform {
                lo: params.kappa,
                span: 1.0 / params.kappa - params.kappa,
                dynamic: params.model == Model::IidCheckerboard,
            },
            Model::TwoStateFlip => {
                let lam = params.require("flip_rate")?;
                let p = 0.5 * (1.0 - (-2.0 * lam * params.delta_t).exp());
                // odd[j]: probability that a block of 2^j cells contains an odd number of flips.
                let mut r = 1.0 - 2.0 * p;
                let mut odd = Vec::with_capacity(FLIP_LEVELS + 1);
                for _ in 0..=FLIP_LEVELS {
                    odd.push(0.5 * (1.0 - r));
                    r *= r;
                }
                Kind::Flip {
                    low: params.require("low")?,
                    high: params.require("high")?,
                    odd,
                }
            }
        };
        let offset = vec![0; params.d];
        Ok(RateField {
            params,
            kind,
            offset,
            time_offset: 0.0,
        })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa
    }

    pub fn delta_t(&self) -> f64 {
        self.params.delta_t
    }

    pub fn is_static(&self) -> bool {
        match &self.kind {
            Kind::Constant(_) => true,
            Kind::Uniform { dynamic, .. } => !dynamic,
            Kind::Flip { .. } => false,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.kind, Kind::Constant(_))
    }

    /// The space-time shift: `shift(x0, t0).rate(y, s, i) == rate(y + x0, s + t0, i)`.
    pub fn shift(&self, x0: &[i64], t0: f64) -> RateField {
        assert_eq!(x0.len(), self.dim(), "shift dimension mismatch");
        let mut out = self.clone();
        for (o, x) in out.offset.iter_mut().zip(x0) {
            *o += x;
        }
        out.time_offset += t0;
        out
    }

    /// Index of the time cell containing `t`, in unshifted cell numbering.
    /// Static fields have a single cell 0.
    pub fn cell_of(&self, t: f64) -> i64 {
        if self.is_static() {
            return 0;
        }
        let u = (t + self.time_offset) / self.params.delta_t;
        let k = u.floor();
        // absorb rounding just below a cell boundary
        if u - k > 1.0 - 1e-10 {
            k as i64 + 1
        } else {
            k as i64
        }
    }

    /// Local-time interval `[start, end)` covered by cell `k`.
    pub fn cell_bounds(&self, k: i64) -> (f64, f64) {
        if self.is_static() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let dt = self.params.delta_t;
        (k as f64 * dt - self.time_offset, (k + 1) as f64 * dt - self.time_offset)
    }

    /// Rate on `axis` at site `x` during cell `cell`; identical for `x → x+e_i`
    /// and `x → x−e_i`.
    pub fn rate_in_cell(&self, x: &[i64], cell: i64, axis: usize) -> f64 {
        debug_assert!(axis < self.dim());
        match &self.kind {
            Kind::Constant(a) => a[axis],
            Kind::Uniform { lo, span, dynamic } => {
                let c = if *dynamic { cell } else { 0 };
                lo + span * unit(self.site_hash(TAG_RATE, x, c, axis))
            }
            Kind::Flip { low, high, odd } => {
                if self.flip_state(x, cell, axis, odd) {
                    *high
                } else {
                    *low
                }
            }
        }
    }

    pub fn rate(&self, x: &[i64], t: f64, axis: usize) -> f64 {
        self.rate_in_cell(x, self.cell_of(t), axis)
    }

    /// Jump rate from `x` to `x + step`. Zero unless `step` is a unit vector.
    pub fn jump_rate(&self, x: &[i64], t: f64, step: &[i64]) -> f64 {
        let mut axis = None;
        for (i, &s) in step.iter().enumerate() {
            match (s, axis) {
                (0, _) => {}
                (1 | -1, None) => axis = Some(i),
                _ => return 0.0,
            }
        }
        axis.map_or(0.0, |i| self.rate(x, t, i))
    }

    /// Total jump intensity `2 Σ_i a_i(x,t)`.
    pub fn total_rate(&self, x: &[i64], t: f64) -> f64 {
        let k = self.cell_of(t);
        2.0 * (0..self.dim()).map(|i| self.rate_in_cell(x, k, i)).sum::<f64>()
    }

    /// Upper bound for the rate on `axis` over all sites and times.
    pub fn max_rate(&self, axis: usize) -> f64 {
        match &self.kind {
            Kind::Constant(a) => a[axis],
            Kind::Uniform { lo, span, .. } => lo + span,
            Kind::Flip { low, high, .. } => low.max(*high),
        }
    }

    /// Poisson intensity dominating the total jump rate everywhere.
    pub fn thinning_bound(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.max_rate(i)).sum::<f64>()
    }

    fn site_hash(&self, tag: u64, x: &[i64], cell: i64, axis: usize) -> u64 {
        let mut h = mix64(self.params.seed ^ tag.wrapping_mul(GOLDEN));
        for (c, o) in x.iter().zip(&self.offset) {
            h = absorb(h, (c + o) as u64);
        }
        h = absorb(h, cell as u64);
        absorb(h, axis as u64)
    }

    /// Two-state chain per (site, axis): the state is the initial bit xor the
    /// parity of flips in cells `FLIP_ORIGIN+1 ..= cell`. Flip bits are
    /// i.i.d. with probability `p`; the prefix parity is sampled top-down on
    /// a dyadic tree of block parities so that any cell is reachable in
    /// `FLIP_LEVELS` hash evaluations.
    fn flip_state(&self, x: &[i64], cell: i64, axis: usize, odd: &[f64]) -> bool {
        let init = self.site_hash(TAG_FLIP_INIT, x, 0, axis) & 1 == 1;
        let leaf = (cell.max(FLIP_ORIGIN + 1) - FLIP_ORIGIN - 1) as u64;
        let leaf = leaf.min((1u64 << FLIP_LEVELS) - 1);
        let mut level = FLIP_LEVELS;
        let mut node = 0u64;
        let mut parity = unit(self.tree_hash(x, axis, level, node)) < odd[level];
        let mut acc = false;
        while level > 0 {
            let q = odd[level - 1];
            let p_left = if parity {
                0.5
            } else {
                let e = 1.0 - q;
                q * q / (q * q + e * e)
            };
            let left = unit(self.tree_hash(x, axis, level - 1, 2 * node)) < p_left;
            level -= 1;
            if (leaf >> level) & 1 == 1 {
                acc ^= left;
                parity ^= left;
                node = 2 * node + 1;
            } else {
                parity = left;
                node *= 2;
            }
        }
        init ^ acc ^ parity
    }

    fn tree_hash(&self, x: &[i64], axis: usize, level: usize, node: u64) -> u64 {
        let h = self.site_hash(TAG_FLIP_TREE, x, level as i64, axis);
        absorb(h, node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> RateField {
        RateField::new(EnvParams::iid_checkerboard(2, 0.25, 7)).unwrap()
    }

    #[test]
    fn homogeneous_is_constant() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        for t in [0.0, 0.5, 13.7] {
            for x in [[0, 0], [5, -3]] {
                assert_eq!(f.rate(&x, t, 0), 0.25);
                assert_eq!(f.rate(&x, t, 1), 0.25);
                assert_eq!(f.total_rate(&x, t), 1.0);
            }
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let f = field();
        let g = field();
        for k in 0..500i64 {
            let x = [k % 17 - 8, k / 17 - 15];
            let t = k as f64 * 0.37;
            let a = f.rate(&x, t, (k % 2) as usize);
            assert_eq!(a.to_bits(), g.rate(&x, t, (k % 2) as usize).to_bits());
            assert!((0.25..=4.0).contains(&a));
        }
    }

    #[test]
    fn uniform_moments() {
        let f = field();
        let n = 100_000;
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let a = f.rate_in_cell(&[k % 300, k / 300], k % 7, 0);
            sum += a;
            lo = lo.min(a);
            hi = hi.max(a);
        }
        let mean = sum / n as f64;
        // uniform on [0.25, 4]: mean 2.125, sd 3.75/sqrt(12)
        let se = 3.75 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 2.125).abs() < 3.0 * se, "mean {mean}");
        assert!(lo >= 0.25 && hi <= 4.0);
    }

    #[test]
    fn cells_are_piecewise_constant() {
        let f = field();
        let x = [3, 1];
        assert_eq!(f.rate(&x, 2.0, 0), f.rate(&x, 2.999, 0));
        assert_eq!(f.cell_of(2.0), 2);
        assert_eq!(f.cell_of(-0.5), -1);
        let s = RateField::new(EnvParams::static_iid(2, 0.25, 3)).unwrap();
        assert_eq!(s.rate(&x, -40.0, 1), s.rate(&x, 1e4, 1));
    }

    #[test]
    fn shift_by_one_cell() {
        let f = field();
        let g = f.shift(&[0, 0], 1.0);
        for y in [[0, 0], [1, -2], [7, 4]] {
            assert_eq!(g.rate(&y, 0.0, 0), f.rate(&y, 1.0, 0));
        }
    }

    #[test]
    fn jump_rate_is_balanced() {
        let f = field();
        let x = [2, -1];
        assert_eq!(f.jump_rate(&x, 0.3, &[1, 0]), f.jump_rate(&x, 0.3, &[-1, 0]));
        assert_eq!(f.jump_rate(&x, 0.3, &[1, 1]), 0.0);
        assert_eq!(f.jump_rate(&x, 0.3, &[0, -1]), f.rate(&x, 0.3, 1));
    }

    #[test]
    fn flip_field_takes_two_values_and_switches() {
        let p = EnvParams::two_state_flip(2, 0.25, 0.5, 2.0, 0.2, 11);
        let f = RateField::new(p).unwrap();
        let mut switches = 0;
        let mut prev = f.rate_in_cell(&[0, 0], 0, 0);
        let n = 4000;
        let mut high = 0;
        for k in 1..=n {
            let a = f.rate_in_cell(&[0, 0], k, 0);
            assert!(a == 0.5 || a == 2.0);
            if a != prev {
                switches += 1;
            }
            if a == 2.0 {
                high += 1;
            }
            prev = a;
        }
        // per-cell switch probability (1 - e^{-0.4})/2 ≈ 0.1648
        let p = 0.5 * (1.0 - (-0.4f64).exp());
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((switches as f64 - n as f64 * p).abs() < 4.0 * sd, "switches {switches}");
        assert!(high > n / 4 && high < 3 * n / 4);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = EnvParams::iid_checkerboard(2, 1.5, 0);
        assert!(RateField::new(p.clone()).is_err());
        p.kappa = 0.25;
        p.delta_t = 0.0;
        assert!(RateField::new(p.clone()).is_err());
        p.delta_t = 1.0;
        assert!(RateField::new(p).is_ok());
        assert!(RateField::new(EnvParams::homogeneous(2, 0.25).with_seed(1)).is_ok());
        let mut h = EnvParams::homogeneous(2, 0.25);
        h.model_params.insert("a".into(), 9.0);
        assert!(RateField::new(h).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let p = EnvParams::iid_checkerboard(2, 0.25, 12345);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"iid_checkerboard\""));
        let q: EnvParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
