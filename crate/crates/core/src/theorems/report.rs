use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::EnvParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Cmp::Lt => value < threshold,
            Cmp::Le => value <= threshold,
            Cmp::Gt => value > threshold,
            Cmp::Ge => value >= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

/// One declared pass condition `metric op threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub metric: String,
    pub op: Cmp,
    pub threshold: f64,
    pub passed: bool,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} [{} {} {}] {}",
            self.name,
            self.metric,
            self.op.symbol(),
            self.threshold,
            if self.passed { "ok" } else { "FAILED" }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub env: EnvParams,
    pub seeds: Vec<u64>,
    pub geometry: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
    /// Metric shown in summaries.
    pub key_metric: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

impl VerificationReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn key_value(&self) -> Option<f64> {
        self.metric(&self.key_metric)
    }

    /// Re-evaluates every criterion from the stored metrics.
    pub fn evaluate(&self) -> bool {
        self.criteria.iter().all(|c| {
            self.metrics
                .get(&c.metric)
                .is_some_and(|&v| c.op.holds(v, c.threshold))
        })
    }

    pub fn failures(&self) -> Vec<&Criterion> {
        self.criteria.iter().filter(|c| !c.passed).collect()
    }
}

/// Named thresholds with defaults; overrides may only touch known names.
#[derive(Clone, Debug, Default)]
pub struct Thresholds(BTreeMap<String, f64>);

impl Thresholds {
    pub fn new(defaults: &[(&str, f64)]) -> Self {
        Thresholds(defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    pub fn merged(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        for (k, v) in overrides {
            match self.0.get_mut(k) {
                Some(slot) => *slot = *v,
                None => return Err(Error::Param(format!("unknown threshold `{k}`"))),
            }
        }
        Ok(self)
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }
}

pub(crate) struct ReportBuilder {
    check: String,
    env: EnvParams,
    seeds: Vec<u64>,
    geometry: serde_json::Value,
    metrics: BTreeMap<String, f64>,
    criteria: Vec<Criterion>,
    notes: Vec<String>,
    key: String,
}

impl ReportBuilder {
    pub fn new(check: &str, env: &EnvParams, geometry: impl Serialize) -> Self {
        ReportBuilder {
            check: check.to_string(),
            env: env.clone(),
            seeds: Vec::new(),
            geometry: serde_json::to_value(geometry).unwrap_or(serde_json::Value::Null),
            metrics: BTreeMap::new(),
            criteria: Vec::new(),
            notes: Vec::new(),
            key: String::new(),
        }
    }

    pub fn seeds(&mut self, seeds: impl IntoIterator<Item = u64>) -> &mut Self {
        self.seeds.extend(seeds);
        self
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn key(&mut self, name: &str) -> &mut Self {
        self.key = name.to_string();
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    /// Adds `metric op threshold`; the metric must already be recorded.
    pub fn require(&mut self, name: &str, metric: &str, op: Cmp, threshold: f64) -> &mut Self {
        self.criteria.push(Criterion {
            name: name.to_string(),
            metric: metric.to_string(),
            op,
            threshold,
            passed: false,
        });
        self
    }

    /// Records a boolean condition as a 0/1 metric required to equal 1.
    pub fn flag(&mut self, name: &str, value: bool) -> &mut Self {
        let metric = format!("{name}_ok");
        self.metric(metric.clone(), if value { 1.0 } else { 0.0 });
        self.require(name, &metric, Cmp::Ge, 1.0)
    }

    pub fn finish(self) -> Result<VerificationReport> {
        if let Some((k, _)) = self.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{}: {k}", self.check)));
        }
        let mut criteria = self.criteria;
        for c in &mut criteria {
            let v = *self
                .metrics
                .get(&c.metric)
                .ok_or_else(|| Error::Param(format!("criterion `{}` refers to missing metric `{}`", c.name, c.metric)))?;
            c.passed = c.op.holds(v, c.threshold);
        }
        let pass = criteria.iter().all(|c| c.passed);
        Ok(VerificationReport {
            check: self.check,
            env: self.env,
            seeds: self.seeds,
            geometry: self.geometry,
            metrics: self.metrics,
            criteria,
            pass,
            key_metric: self.key,
            notes: self.notes,
            runtime_s: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_function_of_metrics() {
        let mut b = ReportBuilder::new("x", &EnvParams::homogeneous(2, 0.25), ());
        b.metric("err", 0.1).require("small", "err", Cmp::Lt, 0.2).flag("sane", true);
        let r = b.finish().unwrap();
        assert!(r.pass && r.evaluate());
        let mut b = ReportBuilder::new("x", &EnvParams::homogeneous(2, 0.25), ());
        b.metric("err", 0.3).require("small", "err", Cmp::Lt, 0.2);
        let r = b.finish().unwrap();
        assert!(!r.pass && !r.evaluate());
        assert_eq!(r.failures().len(), 1);
    }

    #[test]
    fn non_finite_metrics_are_rejected() {
        let mut b = ReportBuilder::new("x", &EnvParams::homogeneous(2, 0.25), ());
        b.metric("bad", f64::NAN);
        assert!(matches!(b.finish(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn unknown_threshold_override() {
        let t = Thresholds::new(&[("a", 1.0)]);
        let mut o = BTreeMap::new();
        o.insert("a".to_string(), 2.0);
        assert_eq!(t.clone().merged(&o).unwrap().get("a"), 2.0);
        o.insert("b".to_string(), 2.0);
        assert!(t.merged(&o).is_err());
    }
}
