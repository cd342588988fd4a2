use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use rwre::theorems::{run_check, sigma_factor_from_report, VerificationReport};
use rwre::EnvParams;

use crate::config::{ExperimentConfig, Job};
use crate::output::{number, write_new};

/// Checks whose geometry takes the covariance normalization from clt.
const NEEDS_SIGMA: &[&str] = &["llt", "green2d", "green3d"];

pub enum Outcome {
    Report(VerificationReport),
    Error(String),
    Panic(String),
}

impl Outcome {
    fn passed(&self) -> bool {
        matches!(self, Outcome::Report(r) if r.pass)
    }

    fn label(&self) -> &'static str {
        match self {
            Outcome::Report(r) if r.pass => "PASS",
            Outcome::Report(_) => "FAIL",
            Outcome::Error(_) => "ERROR",
            Outcome::Panic(_) => "PANIC",
        }
    }
}

pub fn threads() -> Result<usize, String> {
    match std::env::var("RWRE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("RWRE_THREADS must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run(path: &Path) -> u8 {
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return 2;
        }
    };
    let pool = match threads().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return 2;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&cfg.output_dir) {
        eprintln!("config error: {}: {e}", cfg.output_dir.display());
        return 2;
    }
    let (first, rest): (Vec<&Job>, Vec<&Job>) = cfg.jobs.iter().partition(|j| j.check == "clt");
    let mut outcomes: BTreeMap<String, Outcome> = BTreeMap::new();
    let done: Vec<(String, Outcome)> = pool.install(|| first.par_iter().map(|j| execute(&cfg, j, j.geometry.clone())).collect());
    outcomes.extend(done);

    let factors: Vec<(EnvParams, f64)> = first
        .iter()
        .filter_map(|j| match &outcomes[&j.id] {
            Outcome::Report(r) => sigma_factor_from_report(r).ok().map(|f| (unseeded(&r.env), f)),
            _ => None,
        })
        .collect();
    let done: Vec<(String, Outcome)> = pool.install(|| {
        rest.par_iter()
            .map(|j| {
                let geometry = with_sigma(j, &unseeded(&cfg.job_env(j)), &factors);
                execute(&cfg, j, geometry)
            })
            .collect()
    });
    outcomes.extend(done);

    let mut ok = true;
    for job in &cfg.jobs {
        let o = &outcomes[&job.id];
        ok &= o.passed();
        match o {
            Outcome::Report(r) => {
                println!("{} {} {}", o.label(), job.id, r.key_value().map_or("-".into(), number));
                for c in r.failures() {
                    println!("    {c}");
                }
            }
            Outcome::Error(m) | Outcome::Panic(m) => println!("{} {} {m}", o.label(), job.id),
        }
    }
    if ok {
        0
    } else {
        1
    }
}

fn unseeded(env: &EnvParams) -> EnvParams {
    env.with_seed(0)
}

fn with_sigma(job: &Job, env: &EnvParams, factors: &[(EnvParams, f64)]) -> Value {
    let mut geometry = job.geometry.clone();
    if !NEEDS_SIGMA.contains(&job.check.as_str()) {
        return geometry;
    }
    let set = geometry.get("sigma_factor").is_some_and(|v| !v.is_null());
    if set {
        return geometry;
    }
    if let Some((_, f)) = factors.iter().find(|(e, _)| e == env) {
        if geometry.is_null() {
            geometry = json!({});
        }
        geometry["sigma_factor"] = json!(f);
    }
    geometry
}

fn execute(cfg: &ExperimentConfig, job: &Job, geometry: Value) -> (String, Outcome) {
    let env = cfg.job_env(job);
    let clock = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(|| run_check(&job.check, &env, &geometry, &job.thresholds))) {
        Ok(Ok(report)) => Outcome::Report(report),
        Ok(Err(e)) => Outcome::Error(e.to_string()),
        Err(payload) => Outcome::Panic(
            payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into()),
        ),
    };
    let runtime = clock.elapsed().as_secs_f64();
    let outcome = match persist(&cfg.output_dir, job, &outcome, runtime) {
        Ok(()) => outcome,
        Err(e) => Outcome::Error(format!("writing results: {e}")),
    };
    (job.id.clone(), outcome)
}

fn persist(dir: &Path, job: &Job, outcome: &Outcome, runtime: f64) -> std::io::Result<()> {
    let to_text = |v: &Value| serde_json::to_string_pretty(v).expect("json value");
    match outcome {
        Outcome::Report(r) => {
            write_new(&dir.join(format!("{}.json", job.id)), &serde_json::to_string_pretty(r).expect("report"))?;
            let mut csv = String::from("metric,value\n");
            for (k, v) in &r.metrics {
                csv.push_str(&format!("{},{}\n", csv_field(k), number(*v)));
            }
            write_new(&dir.join(format!("{}.metrics.csv", job.id)), csv.trim_end())?;
        }
        Outcome::Error(m) | Outcome::Panic(m) => {
            let body = json!({ "id": job.id, "check": job.check, "status": outcome.label(), "message": m });
            write_new(&dir.join(format!("{}.error.json", job.id)), &to_text(&body))?;
        }
    }
    let side = json!({ "id": job.id, "runtime_s": runtime });
    write_new(&dir.join(format!("{}.runtime.json", job.id)), &to_text(&side))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
