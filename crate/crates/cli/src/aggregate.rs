use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use log::warn;
use serde::Serialize;
use walkdir::WalkDir;

use rwre::theorems::VerificationReport;

use crate::output::number;

const SIDECARS: &[&str] = &[".runtime.json", ".error.json"];
const SUMMARY: &str = "summary";

#[derive(Serialize)]
struct Row {
    id: String,
    check: String,
    env: String,
    key_metric: String,
    key_value: Option<f64>,
    pass: bool,
    runtime_s: Option<f64>,
    path: PathBuf,
}

#[derive(Serialize)]
struct Summary {
    all_pass: bool,
    reports: Vec<Row>,
}

struct Found {
    mtime: SystemTime,
    path: PathBuf,
    report: VerificationReport,
}

fn is_report_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".json") && name != format!("{SUMMARY}.json") && !SIDECARS.iter().any(|s| name.ends_with(s))
}

fn runtime_of(report_path: &Path) -> Option<f64> {
    let stem = report_path.file_stem()?.to_str()?;
    let side = report_path.with_file_name(format!("{stem}.runtime.json"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).ok()?).ok()?;
    v.get("runtime_s")?.as_f64()
}

pub fn aggregate(dir: &Path) -> u8 {
    if !dir.is_dir() {
        eprintln!("error: {} is not a directory", dir.display());
        return 2;
    }
    let mut by_id: BTreeMap<String, Found> = BTreeMap::new();
    let mut files: Vec<PathBuf> = WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e.into_path()),
            Err(err) => {
                warn!("skipping unreadable entry: {err}");
                None
            }
        })
        .filter(|p| p.is_file() && is_report_file(p))
        .collect();
    files.sort();
    for path in files {
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<VerificationReport>(&t).map_err(|e| e.to_string()));
        let report = match parsed {
            Ok(r) => r,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let mtime = std::fs::metadata(&path).and_then(|m| m.modified()).unwrap_or(SystemTime::UNIX_EPOCH);
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let found = Found { mtime, path, report };
        match by_id.get(&id) {
            Some(prev) => {
                let newer = found.mtime > prev.mtime;
                let (keep, drop) = if newer { (&found.path, &prev.path) } else { (&prev.path, &found.path) };
                warn!("duplicate report id `{id}`: keeping {} over {}", keep.display(), drop.display());
                if newer {
                    by_id.insert(id, found);
                }
            }
            None => {
                by_id.insert(id, found);
            }
        }
    }
    if by_id.is_empty() {
        eprintln!("error: no reports under {}", dir.display());
        return 2;
    }
    let reports: Vec<Row> = by_id
        .into_iter()
        .map(|(id, f)| Row {
            runtime_s: runtime_of(&f.path),
            id,
            check: f.report.check.clone(),
            env: f.report.env.model.name().to_string(),
            key_metric: f.report.key_metric.clone(),
            key_value: f.report.key_value(),
            pass: f.report.pass,
            path: f.path,
        })
        .collect();
    let summary = Summary { all_pass: reports.iter().all(|r| r.pass), reports };
    let mut md = String::from("| id | check | env | key metric | value | pass |\n|---|---|---|---|---|---|\n");
    for r in &summary.reports {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.id,
            r.check,
            r.env,
            r.key_metric,
            r.key_value.map_or("-".into(), number),
            r.pass
        ));
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary");
    let written = std::fs::write(dir.join(format!("{SUMMARY}.json")), json + "\n").and_then(|_| std::fs::write(dir.join(format!("{SUMMARY}.md")), &md));
    if let Err(e) = written {
        eprintln!("error: writing summary: {e}");
        return 1;
    }
    print!("{md}");
    0
}
