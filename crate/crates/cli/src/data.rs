use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::json;

use rwre::density::{compute_rho, default_burn_in, invariance_residual};
use rwre::kernel::{forward, killed_forward, torus, KernelSlice};
use rwre::walker::{sample_path, stream_rng};
use rwre::{Point, RateField, SolverOptions, SpaceTime};

use crate::output::{csv_row, number, Sink};
use crate::{EnvArg, Failure};

/// Base point `x_1,…,x_d,t`; the origin at time 0 when omitted.
fn parse_base(text: Option<&str>, d: usize) -> Result<SpaceTime, Failure> {
    let Some(text) = text else {
        return Ok(SpaceTime::origin(d));
    };
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != d + 1 {
        return Err(Failure::Usage(format!("--base needs {d} coordinates and a time")));
    }
    let x = parts[..d]
        .iter()
        .map(|p| p.parse::<i64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--base: {e}")))?;
    let t = parts[d].parse::<f64>().map_err(|e| Failure::Usage(format!("--base: {e}")))?;
    Ok(SpaceTime::new(x, t))
}

/// Writes the JSON summary to `path`, or to stderr.
fn summary(path: Option<&std::path::Path>, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("summary");
    match path {
        Some(p) => crate::output::write_new(p, &text)?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn coords_header(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    env: EnvArg,
    /// `x_1,…,x_d,t`.
    #[arg(long)]
    base: Option<String>,
    /// Elapsed time.
    #[arg(long)]
    time: f64,
    #[arg(long, default_value_t = 10_000)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    mc_seed: u64,
    /// Endpoint CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Stream every path as JSON lines.
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let field = RateField::new(args.env.load().map_err(Failure::Usage)?)?;
    let d = field.dim();
    if !(args.time >= 0.0) || args.paths == 0 {
        return Err(Failure::Usage("need a nonnegative time and at least one path".into()));
    }
    let base = parse_base(args.base.as_deref(), d)?;
    let mut stream = args.jsonl.as_deref().map(|p| Sink::open(Some(p))).transpose()?;
    let mut counts: BTreeMap<Point, u64> = BTreeMap::new();
    let (mut sum, mut sq) = (vec![0.0; d], vec![0.0; d]);
    let (mut jumps, mut max_jumps) = (0u64, 0usize);
    for k in 0..args.paths {
        let mut rng = stream_rng(args.mc_seed, k);
        let path = sample_path(&field, &base, base.t + args.time, &mut rng);
        let end = path.end().to_vec();
        for i in 0..d {
            let v = (end[i] - base.x[i]) as f64;
            sum[i] += v;
            sq[i] += v * v;
        }
        jumps += path.jumps() as u64;
        max_jumps = max_jumps.max(path.jumps());
        if let Some(s) = stream.as_mut() {
            let events: Vec<_> = path.events.iter().map(|(t, x)| json!({ "t": t, "x": x })).collect();
            s.line(&json!({ "path": k, "events": events }).to_string())?;
        }
        *counts.entry(end).or_default() += 1;
    }
    if let Some(s) = stream {
        s.finish()?;
    }
    let n = args.paths as f64;
    let mut sink = Sink::open(args.out.as_deref())?;
    let mut header = coords_header(d);
    header.push("weight".into());
    sink.line(&header.join(","))?;
    for (x, c) in &counts {
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.push(number(*c as f64 / n));
        sink.line(&row.join(","))?;
    }
    sink.finish()?;
    let second: f64 = sq.iter().sum::<f64>() / n;
    summary(
        args.summary.as_deref(),
        &json!({
            "paths": args.paths,
            "mean": sum.iter().map(|s| s / n).collect::<Vec<_>>(),
            "second_moment": sq.iter().map(|s| s / n).collect::<Vec<_>>(),
            "sq_norm_over_t": if args.time > 0.0 { Some(second / args.time) } else { None },
            "mean_jumps": jumps as f64 / n,
            "max_jumps": max_jumps,
        }),
    )?;
    Ok(0)
}

#[derive(clap::Args)]
pub struct KernelArgs {
    #[command(flatten)]
    env: EnvArg,
    #[arg(long)]
    base: Option<String>,
    /// Elapsed time.
    #[arg(long)]
    time: f64,
    /// Torus side.
    #[arg(long = "box", conflicts_with = "radius")]
    side: Option<usize>,
    /// Ball radius; requires `--killed`.
    #[arg(long, requires = "killed")]
    radius: Option<f64>,
    #[arg(long)]
    killed: bool,
    /// Tail mass is reported beyond `gamma·√time`.
    #[arg(long, default_value_t = 6.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    courant: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

pub fn kernel(args: KernelArgs) -> Result<u8, Failure> {
    let field = RateField::new(args.env.load().map_err(Failure::Usage)?)?;
    let d = field.dim();
    let base = parse_base(args.base.as_deref(), d)?;
    let opts = SolverOptions::with_courant(args.courant);
    let end = base.t + args.time;
    if args.killed != args.radius.is_some() {
        return Err(Failure::Usage("--killed goes with --radius".into()));
    }
    let (slice, absorbed): (KernelSlice, Option<f64>) = match (args.side, args.radius) {
        (Some(side), None) => (forward(&field, &torus(d, side)?, &base, end, &opts)?, None),
        (None, Some(r)) => {
            let k = killed_forward(&field, r, &base, end, &opts)?;
            let lost = k.absorbed.iter().sum();
            (k.slice, Some(lost))
        }
        _ => return Err(Failure::Usage("give one of --box L or --radius R --killed".into())),
    };
    let mut sink = Sink::open(args.out.as_deref())?;
    let mut header = coords_header(d);
    header.push("p".into());
    sink.line(&header.join(","))?;
    for (x, v) in slice.sites.sites().zip(&slice.values) {
        let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        row.push(csv_row(&[*v]));
        sink.line(&row.join(","))?;
    }
    sink.finish()?;
    let tail_radius = args.gamma * args.time.sqrt();
    summary(
        args.summary.as_deref(),
        &json!({
            "mass": slice.mass(),
            "min": slice.min(),
            "max": slice.max(),
            "tail_radius": tail_radius,
            "tail_mass": slice.tail_mass(tail_radius),
            "absorbed": absorbed,
        }),
    )?;
    Ok(0)
}

#[derive(clap::Args)]
pub struct RhoArgs {
    #[command(flatten)]
    env: EnvArg,
    /// Torus side.
    #[arg(long = "box")]
    side: usize,
    /// `t0,t1`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
    window: Vec<f64>,
    /// Slice spacing; defaults to a sixteenth of the cell length.
    #[arg(long)]
    step: Option<f64>,
    /// Defaults to `8 L²`.
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    courant: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Audit JSON; stderr when omitted.
    #[arg(long)]
    audit: Option<PathBuf>,
}

pub fn rho(args: RhoArgs) -> Result<u8, Failure> {
    let field = RateField::new(args.env.load().map_err(Failure::Usage)?)?;
    let sites = torus(field.dim(), args.side)?;
    let burn = args.burn_in.unwrap_or_else(|| default_burn_in(args.side));
    let step = args.step.unwrap_or(field.delta_t() / 16.0);
    let opts = SolverOptions::with_courant(args.courant);
    let [t0, t1] = args.window[..] else {
        return Err(Failure::Usage("--window takes t0,t1".into()));
    };
    let rho = compute_rho(&field, &sites, t0, t1, burn, step, &opts)?;
    let twice = compute_rho(&field, &sites, t0, t1, 2.0 * burn, step, &opts)?;
    let residual = invariance_residual(&field, &rho).ok();
    let mut sink = Sink::open(args.out.as_deref())?;
    let mut header = coords_header(field.dim());
    header.extend(["t".to_string(), "rho".to_string()]);
    sink.line(&header.join(","))?;
    for (j, &t) in rho.times().iter().enumerate() {
        for (x, v) in sites.sites().zip(rho.slice(j)) {
            let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            row.push(csv_row(&[t, *v]));
            sink.line(&row.join(","))?;
        }
    }
    sink.finish()?;
    summary(
        args.audit.as_deref(),
        &json!({
            "min": rho.min(),
            "mean_error": rho.mean_error(),
            "invariance_residual": residual,
            "burn_in": burn,
            "burn_in_doubling_distance": rho.sup_distance(&twice),
        }),
    )?;
    Ok(0)
}
