//! `detmetrics`: evaluate detection outputs against ground truth and probe
//! the algebraic properties of the metrics.
//!
//! Exit codes: 0 on success, 1 on validation/configuration errors, 2 when an
//! internal invariant check fails (probe violations, missing witnesses).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use detmetrics::analysis::{
    dasa_error, error_surface, lrp_triangle_probe, pq_error_between, pq_triangle_search,
    random_match, random_set_triple, write_surface_csv, SurfaceSpec,
};
use detmetrics::eval::{run_evaluate, EvalConfig, MetricKind};
use detmetrics::olrp::{write_slrp_csv, SLRP_CSV_HEADER};
use detmetrics::{
    lrp, pq, pq_error_identity, pr_curve, s_lrp_curve, tau_sweep, DatasetPair, Error,
    ImportanceWeights, Instance, LocQuality, Task,
};

#[derive(Parser)]
#[command(name = "detmetrics", version, about = "Detection evaluation metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate detections against ground truth and emit a report.
    Evaluate(EvaluateArgs),
    /// Export per-class s-LRP or PR curves as CSV.
    Curve(CurveArgs),
    /// Optimal LRP per class over a grid of TP validation thresholds.
    SweepTau(SweepTauArgs),
    /// Analytic error surface over synthetic match configurations.
    Surface(SurfaceArgs),
    /// Seeded property probes over random configurations.
    Probe(ProbeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Ground-truth JSON file.
    #[arg(long)]
    gt: PathBuf,
    /// Detection JSON file (flat array of records).
    #[arg(long)]
    dt: PathBuf,
    /// Geometry dialect: box, mask, keypoints or panoptic.
    #[arg(long, value_parser = parse_task)]
    task: Task,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TP validation threshold.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Discard detections scoring below this value.
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Keep only the top-k detections per image.
    #[arg(long)]
    max_dets_per_image: Option<usize>,
    /// Keep only the top-k detections per class.
    #[arg(long)]
    max_dets_per_class: Option<usize>,
    /// Keep instances with area in [MIN, MAX), as MIN:MAX.
    #[arg(long, value_parser = parse_area_range)]
    area_range: Option<(f64, f64)>,
    /// Importance weights as TP,FP,FN.
    #[arg(long, value_parser = parse_alpha)]
    alpha: Option<ImportanceWeights>,
    /// Comma-separated subset of lrp,olrp,pq,ap,ar.
    #[arg(long, value_parser = parse_metrics)]
    metrics: Option<std::collections::BTreeSet<MetricKind>>,
    /// Report format.
    #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
    output: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Which curve family to export.
    #[arg(long, value_parser = ["slrp", "pr"])]
    kind: String,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepTauArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Threshold grid as START:END:STEP.
    #[arg(long, value_parser = parse_float_grid, default_value = "0.5:0.95:0.05")]
    taus: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SurfaceArgs {
    /// Mean TP quality grid as START:END:STEP.
    #[arg(long, value_parser = parse_float_grid, default_value = "0.55:1.0:0.05")]
    mean_lq: Vec<f64>,
    /// TP count range as MIN:MAX.
    #[arg(long, value_parser = parse_usize_range, default_value = "1:20")]
    n_tp: (usize, usize),
    /// Error count range as MIN:MAX.
    #[arg(long, value_parser = parse_usize_range, default_value = "0:20")]
    n_err: (usize, usize),
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Fraction of errors attributed to false positives.
    #[arg(long, default_value_t = 0.5)]
    fp_share: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    /// Which property to probe.
    #[arg(long, value_parser = ["pq-triangle", "lrp-triangle", "dasa", "identity"])]
    check: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Mask grid side for the triangle probes.
    #[arg(long, default_value_t = 8)]
    grid: usize,
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "box" => Ok(Task::Box),
        "mask" => Ok(Task::Mask),
        "keypoints" => Ok(Task::Keypoints),
        "panoptic" => Ok(Task::Panoptic),
        other => Err(format!("unknown task {other:?}")),
    }
}

fn parse_area_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo: f64 = lo.parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("bad MAX: {e}"))?;
    Ok((lo, hi))
}

fn parse_alpha(s: &str) -> Result<ImportanceWeights, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected TP,FP,FN".into());
    }
    let vals: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| e.to_string())?;
    ImportanceWeights::new(vals[0], vals[1], vals[2]).map_err(|e| e.to_string())
}

fn parse_metrics(s: &str) -> Result<std::collections::BTreeSet<MetricKind>, String> {
    s.split(',')
        .map(|part| part.trim().parse::<MetricKind>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_float_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected START:END:STEP".into());
    }
    let start: f64 = parts[0].parse().map_err(|e| format!("bad START: {e}"))?;
    let end: f64 = parts[1].parse().map_err(|e| format!("bad END: {e}"))?;
    let step: f64 = parts[2].parse().map_err(|e| format!("bad STEP: {e}"))?;
    if step <= 0.0 || end < start {
        return Err("need START <= END and STEP > 0".into());
    }
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let v = start + f64::from(k) * step;
        if v > end + step * 1e-9 {
            break;
        }
        grid.push(v.min(end));
        k += 1;
    }
    Ok(grid)
}

fn parse_usize_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo: usize = lo.parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi: usize = hi.parse().map_err(|e| format!("bad MAX: {e}"))?;
    if hi < lo {
        return Err("need MIN <= MAX".into());
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Evaluate(args) => evaluate(args),
        Command::Curve(args) => curve(args),
        Command::SweepTau(args) => sweep_tau(args),
        Command::Surface(args) => surface(args),
        Command::Probe(args) => probe(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn build_config(args: &EvaluateArgs) -> Result<EvalConfig, Error> {
    let mut cfg = EvalConfig::new(args.data.task);
    cfg.tau = args.tau;
    if let Some(s) = args.score_threshold {
        cfg.filter.score_threshold = s;
    }
    cfg.filter.max_dets_per_image = args.max_dets_per_image;
    cfg.filter.max_dets_per_class = args.max_dets_per_class;
    cfg.filter.area_range = args.area_range;
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(metrics) = &args.metrics {
        cfg.metrics = metrics.clone();
    }
    if let Some(cap) = args.max_dets_per_image {
        cfg.ar_top_k = cap;
    }
    Ok(cfg)
}

fn evaluate(args: EvaluateArgs) -> Result<ExitCode, Error> {
    let pair = DatasetPair::load(&args.data.gt, &args.data.dt, args.data.task)?;
    let cfg = build_config(&args)?;
    let report = run_evaluate(&pair, &cfg)?;
    let text = match args.output.as_str() {
        "csv" => report.to_csv(),
        _ => report.to_json()?,
    };
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Group filtered instances of one class, in input order.
fn per_class(pair: &DatasetPair) -> BTreeMap<i64, (Vec<Instance>, Vec<Instance>)> {
    let mut map: BTreeMap<i64, (Vec<Instance>, Vec<Instance>)> = pair
        .categories
        .iter()
        .map(|c| (c.id, (Vec::new(), Vec::new())))
        .collect();
    for g in &pair.ground_truths {
        map.get_mut(&g.class_id).unwrap().0.push(g.clone());
    }
    for d in &pair.detections {
        map.get_mut(&d.class_id).unwrap().1.push(d.clone());
    }
    map
}

fn curve(args: CurveArgs) -> Result<ExitCode, Error> {
    let pair = DatasetPair::load(&args.data.gt, &args.data.dt, args.data.task)?;
    let lq_kind = args.data.task.lq_kind();
    let lq_fn =
        |g: &Instance, d: &Instance| -> Result<LocQuality, Error> { lq_kind.eval(&g.geometry, &d.geometry) };
    let mut out: Vec<u8> = Vec::new();
    match args.kind.as_str() {
        "slrp" => {
            writeln!(out, "{SLRP_CSV_HEADER}")?;
            for (class_id, (gts, dets)) in per_class(&pair) {
                if gts.is_empty() && dets.is_empty() {
                    continue;
                }
                let curve = s_lrp_curve(&gts, &dets, &lq_fn, args.tau)?;
                write_slrp_csv(&mut out, class_id, &curve)?;
            }
        }
        _ => {
            writeln!(out, "class_id,recall,precision")?;
            for (class_id, (gts, dets)) in per_class(&pair) {
                if gts.is_empty() {
                    continue;
                }
                let curve = pr_curve(&gts, &dets, &lq_fn, args.tau)?;
                for p in &curve.points {
                    writeln!(out, "{},{},{}", class_id, p.recall, p.precision)?;
                }
            }
        }
    }
    std::fs::write(&args.out, out)?;
    Ok(ExitCode::SUCCESS)
}

fn sweep_tau(args: SweepTauArgs) -> Result<ExitCode, Error> {
    let pair = DatasetPair::load(&args.data.gt, &args.data.dt, args.data.task)?;
    let lq_kind = args.data.task.lq_kind();
    let lq_fn =
        |g: &Instance, d: &Instance| -> Result<LocQuality, Error> { lq_kind.eval(&g.geometry, &d.geometry) };
    let classes = per_class(&pair);

    let mut out: Vec<u8> = Vec::new();
    writeln!(out, "tau,class_id,olrp,loc,fp,fn,s_star")?;
    let field = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for &tau in &args.taus {
        let mut per_tau = Vec::new();
        for (class_id, (gts, dets)) in &classes {
            if gts.is_empty() && dets.is_empty() {
                continue;
            }
            let rows = tau_sweep(gts, dets, &lq_fn, &[tau])?;
            if let Some(o) = rows[0].1 {
                writeln!(
                    out,
                    "{tau},{class_id},{},{},{},{},{}",
                    o.olrp,
                    field(o.loc_err),
                    field(o.fp_err),
                    field(o.fn_err),
                    field(o.s_star),
                )?;
                per_tau.push(o);
            }
        }
        if per_tau.is_empty() {
            return Err(Error::Undefined(format!("no class evaluates at tau {tau}")));
        }
        let mean = |f: fn(&detmetrics::OlrpResult) -> Option<f64>| {
            detmetrics::lrp::mean_defined(per_tau.iter().map(f))
        };
        writeln!(
            out,
            "{tau},mean,{},{},{},{},",
            field(mean(|o| Some(o.olrp))),
            field(mean(|o| o.loc_err)),
            field(mean(|o| o.fp_err)),
            field(mean(|o| o.fn_err)),
        )?;
    }
    std::fs::write(&args.out, out)?;
    Ok(ExitCode::SUCCESS)
}

fn surface(args: SurfaceArgs) -> Result<ExitCode, Error> {
    let spec = SurfaceSpec {
        mean_lqs: args.mean_lq.clone(),
        n_tps: (args.n_tp.0..=args.n_tp.1).collect(),
        n_errs: (args.n_err.0..=args.n_err.1).collect(),
        tau: args.tau,
        fp_share: args.fp_share,
    };
    let rows = error_surface(&spec)?;
    let mut out: Vec<u8> = Vec::new();
    write_surface_csv(&mut out, &rows)?;
    std::fs::write(&args.out, out)?;
    Ok(ExitCode::SUCCESS)
}

fn probe(args: ProbeArgs) -> Result<ExitCode, Error> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    match args.check.as_str() {
        "pq-triangle" => match pq_triangle_search(args.grid, args.trials, args.seed)? {
            Some(witness) => {
                let direct = pq_error_between(&witness.x, &witness.y)?.unwrap();
                let via = pq_error_between(&witness.x, &witness.z)?.unwrap()
                    + pq_error_between(&witness.z, &witness.y)?.unwrap();
                println!("PQ-error triangle violation found: {direct:.6} > {via:.6}");
                for (name, set) in [("X", &witness.x), ("Y", &witness.y), ("Z", &witness.z)] {
                    for (i, mask) in set.iter().enumerate() {
                        println!(
                            "  {name}[{i}]: {}x{} rle {:?}",
                            mask.height(),
                            mask.width(),
                            mask.runs()
                        );
                    }
                }
                Ok(ExitCode::SUCCESS)
            }
            None => {
                eprintln!(
                    "no PQ triangle violation within {} trials on a {}x{} grid",
                    args.trials, args.grid, args.grid
                );
                Ok(ExitCode::from(2))
            }
        },
        "lrp-triangle" => {
            let triples: Vec<_> =
                (0..args.trials).map(|_| random_set_triple(&mut rng, args.grid)).collect();
            let violations = lrp_triangle_probe(&triples)?;
            if violations.is_empty() {
                println!(
                    "LRP triangle inequality holds on {} random disjoint-mask triples",
                    args.trials
                );
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("LRP triangle violations: {violations:?}");
                Ok(ExitCode::from(2))
            }
        }
        "dasa" => {
            let tau = 0.5;
            for i in 0..args.trials {
                let m = random_match(&mut rng, tau);
                if m.n_tp + m.n_fp + m.n_fn == 0 {
                    continue;
                }
                let reduced = dasa_error(&m, 1.0 - tau, 1)? / (1.0 - tau);
                let direct = lrp(&m)?.lrp.unwrap();
                if (reduced - direct).abs() > 1e-12 {
                    eprintln!("assignment-oracle mismatch at trial {i}: {reduced} vs {direct}");
                    return Ok(ExitCode::from(2));
                }
            }
            println!("assignment-oracle reduction matches LRP on {} configurations", args.trials);
            Ok(ExitCode::SUCCESS)
        }
        _ => {
            let tau = 0.5;
            for i in 0..args.trials {
                let m = random_match(&mut rng, tau);
                let direct = pq(&m)?.pq;
                let rewritten = pq_error_identity(&m)?;
                let ok = match (direct, rewritten) {
                    (Some(p), Some(e)) => ((1.0 - p) - e).abs() <= 1e-12,
                    (None, None) => true,
                    _ => false,
                };
                let r = lrp(&m)?;
                let recombined = match r.lrp {
                    Some(v) => {
                        let c = (r.w_loc * r.loc_err.unwrap_or(0.0)
                            + r.w_fp * r.fp_err.unwrap_or(0.0)
                            + r.w_fn * r.fn_err.unwrap_or(0.0))
                            / r.z;
                        (v - c).abs() <= 1e-12
                    }
                    None => true,
                };
                if !ok || !recombined {
                    eprintln!("identity violation at trial {i}");
                    return Ok(ExitCode::from(2));
                }
            }
            println!(
                "PQ-error and component-recombination identities hold on {} configurations",
                args.trials
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
