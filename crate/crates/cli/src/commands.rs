use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use racer_core::audit::{audit_model, RdcSummary};
use racer_core::datagen::{generate, ScenarioKind, ScenarioSpec};
use racer_core::domain::{build_samples, split_dataset, Provenance, Sample, SplitRatios, Trajectory};
use racer_core::io::{load_trajectory, read_json, save_trajectory, write_json, write_split};
use racer_core::neural::{load_checkpoint, save_checkpoint, RacerNet, MANIFEST_FILE, PARAMS_FILE};
use racer_core::phys::{calibrate_ovrv, ovrv_accel, OvrvParams};
use racer_core::sim::{rollout, RolloutOptions, RolloutSummary};
use racer_core::train::{
    evaluate_mse, select_pinn_alpha, train_model, ModelKind, TrainConfig, TrainOutcome, ALPHA_GRID,
};
use serde::{Deserialize, Serialize};

use crate::config::{invalid, parse_params, parse_weights, parse_widths, require_dir, require_file, FileConfig};
use crate::{manifest, report, AuditArgs, CalibrateArgs, Cli, Command, GenArgs, ModelArgs, ReportArgs, TrainArgs};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const MODEL_DIR: &str = "model";
pub const ROLLOUT_CSV: &str = "rollout.csv";
pub const ROLLOUT_JSON: &str = "rollout.json";
pub const AUDIT_CSV: &str = "audit.csv";
pub const AUDIT_JSON: &str = "audit.json";

const DEFAULT_BUDGET: usize = 20_000;

struct Ctx {
    /// `--seed` or the file's top-level seed, when either was given.
    explicit_seed: Option<u64>,
    seed: u64,
    out: PathBuf,
    file: FileConfig,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let explicit_seed = cli.seed.or(file.seed);
    let out = cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { explicit_seed, seed: explicit_seed.unwrap_or(0), out, file };
    match cli.command {
        Command::Gen(a) => gen(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Audit(a) => audit(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
    }
}

fn out_dir(ctx: &Ctx) -> Result<&Path> {
    fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create output directory {}", ctx.out.display()))?;
    Ok(&ctx.out)
}

fn load_data(path: &Path) -> Result<Trajectory> {
    require_file(path, "data")?;
    load_trajectory(path, Provenance::Measured).with_context(|| format!("reading {}", path.display()))
}

fn gen(ctx: &Ctx, a: GenArgs) -> Result<()> {
    let f = &ctx.file.gen;
    let kind = match a.kind {
        Some(k) => k.parse::<ScenarioKind>()?,
        None => f.kind.unwrap_or(ScenarioKind::Oscillatory),
    };
    let base = ScenarioSpec::new(kind);
    let params = match a.params {
        Some(p) => parse_params(&p)?,
        None => f.params.unwrap_or(base.params),
    };
    let spec = ScenarioSpec {
        kind,
        duration: a.duration.or(f.duration).unwrap_or(base.duration),
        dt: f.dt.unwrap_or(base.dt),
        speed_low: f.speed_low.unwrap_or(base.speed_low),
        speed_high: f.speed_high.unwrap_or(base.speed_high),
        period: f.period.unwrap_or(base.period),
        noise_std: a.noise.or(f.noise_std).unwrap_or(base.noise_std),
        seed: ctx.seed,
        params,
        initial_spacing: f.initial_spacing,
        initial_speed: f.initial_speed,
    };
    let traj = generate(&spec)?;
    let out = out_dir(ctx)?;
    save_trajectory(&traj, &out.join(TRAJECTORY_FILE))?;
    manifest::write(out, "gen", &spec, &[], &[TRAJECTORY_FILE.into()])?;
    println!("wrote {} ({} rows, {} scenario)", out.join(TRAJECTORY_FILE).display(), traj.len(), spec.kind);
    Ok(())
}

/// Contents of `calibration.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub params: OvrvParams,
    /// RMS acceleration error on the training split, m/s².
    pub train_rmse: f64,
    pub validation_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn accel_rmse(samples: &[Sample], p: &OvrvParams) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let sq: f64 = samples.iter().map(|s| (ovrv_accel(&s.phy_state, p) - s.target_accel).powi(2)).sum();
    Some((sq / samples.len() as f64).sqrt())
}

#[derive(Serialize)]
struct CalibrateConfig<'a> {
    data: &'a Path,
    seed: u64,
    budget: usize,
    init: OvrvParams,
    ratios: SplitRatios,
}

fn calibrate(ctx: &Ctx, a: CalibrateArgs) -> Result<()> {
    let traj = load_data(&a.data)?;
    let cfg = CalibrateConfig {
        data: &a.data,
        seed: ctx.seed,
        budget: a.budget.or(ctx.file.calibrate.budget).unwrap_or(DEFAULT_BUDGET),
        init: ctx.file.calibrate.init.unwrap_or(OvrvParams::DEFAULT_INIT),
        ratios: SplitRatios::default(),
    };
    let samples = build_samples(&traj, 1, traj.dt())?;
    let split = split_dataset(&samples, cfg.ratios, cfg.seed)?;
    let cal = calibrate_ovrv(&split, cfg.init, cfg.budget)?;
    let result = CalibrationFile {
        params: cal.params,
        train_rmse: cal.objective,
        validation_rmse: accel_rmse(&split.validation, &cal.params),
        test_rmse: accel_rmse(&split.test, &cal.params),
        iterations: cal.iterations,
        converged: cal.converged,
    };
    let out = out_dir(ctx)?;
    write_json(&result, &out.join(CALIBRATION_FILE))?;
    manifest::write(out, "calibrate", &cfg, &[&a.data], &[CALIBRATION_FILE.into()])?;
    let p = cal.params;
    println!(
        "k1 = {}, k2 = {}, tau = {}, eta = {}; train RMSE {:.4} m/s²",
        p.k1, p.k2, p.tau, p.eta, cal.objective
    );
    Ok(())
}

fn load_calibration(path: &Path) -> Result<OvrvParams> {
    require_file(path, "calibration")?;
    let c: CalibrationFile = read_json(path).with_context(|| format!("reading {}", path.display()))?;
    c.params.validate()?;
    Ok(c.params)
}

fn resolve_train_config(ctx: &Ctx, a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = ctx.file.train.clone().unwrap_or_default();
    if let Some(m) = &a.model {
        cfg.kind = m.parse::<ModelKind>()?;
    }
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = &a.lambda {
        cfg.weights = parse_weights(v)?;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.seq_len {
        cfg.net.seq_len = v;
    }
    if let Some(v) = a.lstm_layers {
        cfg.net.lstm_layers = v;
    }
    if let Some(v) = a.lstm_hidden {
        cfg.net.lstm_hidden = v;
    }
    if let Some(v) = a.seq_head {
        cfg.net.seq_head = v;
    }
    if let Some(v) = &a.phy_hidden {
        cfg.net.phy_hidden = parse_widths(v)?;
    }
    if let Some(seed) = ctx.explicit_seed {
        cfg.seed = seed;
        cfg.net.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainRunConfig<'a> {
    data: &'a Path,
    train: &'a TrainConfig,
    ovrv: Option<OvrvParams>,
    select_alpha: bool,
    ratios: SplitRatios,
}

#[derive(Serialize)]
struct TrainSummary {
    kind: ModelKind,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
    test_mse: Option<f64>,
    alpha: Option<f64>,
    /// `(alpha, validation data MSE)` when the weight was selected.
    alpha_scores: Vec<(f64, f64)>,
    parameters: usize,
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(ctx, &a)?;
    let ovrv = a.calibration.as_deref().map(load_calibration).transpose()?;
    if cfg.kind == ModelKind::Pinn && ovrv.is_none() {
        return Err(invalid("calibration: the pinn model needs --calibration from `racer calibrate`"));
    }
    if a.select_alpha && cfg.kind != ModelKind::Pinn {
        return Err(invalid("select_alpha: only applies to --model pinn"));
    }
    let traj = load_data(&a.data)?;
    let ratios = SplitRatios::default();
    let samples = build_samples(&traj, cfg.net.seq_len, traj.dt())?;
    let split = split_dataset(&samples, ratios, cfg.seed)?;

    let (outcome, alpha, alpha_scores): (TrainOutcome, Option<f64>, Vec<(f64, f64)>) = match ovrv {
        Some(p) if a.select_alpha => {
            let sel = select_pinn_alpha(&split, &cfg, p, &ALPHA_GRID)?;
            (sel.outcome, Some(sel.alpha), sel.scores)
        }
        _ => {
            let alpha = (cfg.kind == ModelKind::Pinn).then_some(cfg.alpha);
            (train_model(&split, &cfg, ovrv)?, alpha, Vec::new())
        }
    };

    let out = out_dir(ctx)?;
    let model_dir = out.join(MODEL_DIR);
    save_checkpoint(&outcome.net, &model_dir)?;
    let mut history = Vec::new();
    outcome.history.write_csv(&mut history)?;
    fs::write(out.join("history.csv"), history)?;
    write_split(&out.join("split"), &traj, &split, cfg.net.seq_len, traj.dt(), cfg.seed)?;
    let summary = TrainSummary {
        kind: cfg.kind,
        epochs_run: outcome.history.epochs.len(),
        best_epoch: outcome.history.best_epoch,
        best_val_loss: outcome.history.best_val_loss,
        stopped_early: outcome.history.stopped_early,
        test_mse: if split.test.is_empty() { None } else { Some(evaluate_mse(&outcome.net, &split.test)?) },
        alpha,
        alpha_scores,
        parameters: outcome.net.parameter_count(),
    };
    write_json(&summary, &out.join("train.json"))?;

    let mut outputs: Vec<String> = vec![
        format!("{MODEL_DIR}/{MANIFEST_FILE}"),
        format!("{MODEL_DIR}/{PARAMS_FILE}"),
        "history.csv".into(),
        "train.json".into(),
        "split/split.json".into(),
    ];
    for name in ["train", "validation", "test"] {
        if out.join("split").join(format!("{name}.csv")).is_file() {
            outputs.push(format!("split/{name}.csv"));
        }
    }
    let run_cfg = TrainRunConfig { data: &a.data, train: &cfg, ovrv, select_alpha: a.select_alpha, ratios };
    let mut inputs: Vec<&Path> = vec![&a.data];
    if let Some(c) = &a.calibration {
        inputs.push(c);
    }
    manifest::write(out, "train", &run_cfg, &inputs, &outputs)?;
    println!(
        "{}: best epoch {} of {}, validation loss {:.6}, test MSE {}",
        cfg.kind,
        summary.best_epoch,
        summary.epochs_run,
        summary.best_val_loss,
        summary.test_mse.map_or("n/a".into(), |m| format!("{m:.6}"))
    );
    Ok(())
}

enum Model {
    Net(Box<RacerNet>),
    Ovrv(OvrvParams),
}

#[derive(Serialize)]
struct ModelRef<'a> {
    data: &'a Path,
    checkpoint: Option<&'a Path>,
    calibration: Option<&'a Path>,
}

fn load_model(a: &ModelArgs) -> Result<(Model, Vec<PathBuf>)> {
    match (&a.checkpoint, &a.calibration) {
        (Some(dir), None) => {
            require_dir(dir, "checkpoint")?;
            let net = load_checkpoint(dir).with_context(|| format!("loading {}", dir.display()))?;
            Ok((Model::Net(Box::new(net)), vec![dir.join(MANIFEST_FILE), dir.join(PARAMS_FILE)]))
        }
        (None, Some(path)) => Ok((Model::Ovrv(load_calibration(path)?), vec![path.clone()])),
        _ => Err(invalid("model: give exactly one of --checkpoint or --calibration")),
    }
}

fn simulate(ctx: &Ctx, a: ModelArgs) -> Result<()> {
    let traj = load_data(&a.data)?;
    let (model, model_files) = load_model(&a)?;
    let result = match model {
        Model::Net(mut net) => rollout(net.as_mut(), &traj, RolloutOptions::default())?,
        Model::Ovrv(mut p) => rollout(&mut p, &traj, RolloutOptions::default())?,
    };
    let out = out_dir(ctx)?;
    let mut csv = Vec::new();
    result.write_csv(&traj, &mut csv)?;
    fs::write(out.join(ROLLOUT_CSV), csv)?;
    let summary = result.summary();
    write_json(&summary, &out.join(ROLLOUT_JSON))?;
    let mut inputs: Vec<&Path> = vec![&a.data];
    inputs.extend(model_files.iter().map(PathBuf::as_path));
    let cfg = ModelRef { data: &a.data, checkpoint: a.checkpoint.as_deref(), calibration: a.calibration.as_deref() };
    manifest::write(out, "simulate", &cfg, &inputs, &[ROLLOUT_CSV.into(), ROLLOUT_JSON.into()])?;
    println!("{}", describe_rollout(&summary));
    Ok(())
}

pub fn describe_rollout(s: &RolloutSummary) -> String {
    match (s.crash_time, s.rmse) {
        (Some(t), _) => format!("crash at t = {t:.1} s after {} steps; RMSE not reported", s.steps),
        (None, Some(r)) => format!(
            "{} steps; RMSE accel {:.4} m/s², speed {:.4} m/s, spacing {:.4} m",
            s.steps, r.accel, r.speed, r.spacing
        ),
        (None, None) => format!("{} steps", s.steps),
    }
}

#[derive(Serialize)]
struct AuditConfig<'a> {
    #[serde(flatten)]
    model: ModelRef<'a>,
    tolerance: f64,
}

fn audit(ctx: &Ctx, a: AuditArgs) -> Result<()> {
    let tolerance = a.tolerance.or(ctx.file.audit.tolerance).unwrap_or(0.0);
    let traj = load_data(&a.model.data)?;
    let (model, model_files) = load_model(&a.model)?;
    let report = match &model {
        Model::Net(net) => audit_model(net.as_ref(), &build_samples(&traj, net.seq_len(), traj.dt())?, tolerance)?,
        Model::Ovrv(p) => audit_model(p, &build_samples(&traj, 1, traj.dt())?, tolerance)?,
    };
    let out = out_dir(ctx)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(out.join(AUDIT_CSV), csv)?;
    let summary: RdcSummary = report.summary();
    write_json(&summary, &out.join(AUDIT_JSON))?;
    let mut inputs: Vec<&Path> = vec![&a.model.data];
    inputs.extend(model_files.iter().map(PathBuf::as_path));
    let cfg = AuditConfig {
        model: ModelRef { data: &a.model.data, checkpoint: a.model.checkpoint.as_deref(), calibration: a.model.calibration.as_deref() },
        tolerance,
    };
    manifest::write(out, "audit", &cfg, &inputs, &[AUDIT_CSV.into(), AUDIT_JSON.into()])?;
    println!(
        "{} samples: speed {} ({:.2}%), spacing {} ({:.2}%), relative speed {} ({:.2}%) violations",
        summary.samples,
        summary.speed.count,
        100.0 * summary.speed.rate,
        summary.spacing.count,
        100.0 * summary.spacing.rate,
        summary.relative_speed.count,
        100.0 * summary.relative_speed.rate
    );
    Ok(())
}

fn parse_labelled(items: &[String], what: &str) -> Result<Vec<(String, PathBuf)>> {
    items
        .iter()
        .map(|item| {
            let (label, dir) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("{what}: expected LABEL=DIR, got '{item}'")))?;
            if label.is_empty() {
                return Err(invalid(format!("{what}: empty label in '{item}'")));
            }
            Ok((label.to_string(), PathBuf::from(dir)))
        })
        .collect()
}

fn report_cmd(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    if a.sims.is_empty() && a.audits.is_empty() {
        return Err(invalid("report: give at least one --sim or --audit"));
    }
    let sims = parse_labelled(&a.sims, "sim")?;
    let audits = parse_labelled(&a.audits, "audit")?;
    let mut inputs = Vec::new();
    let mut rollouts = Vec::new();
    for (label, dir) in &sims {
        let path = dir.join(ROLLOUT_JSON);
        require_file(&path, "sim")?;
        rollouts.push((label.clone(), read_json::<RolloutSummary>(&path)?));
        inputs.push(path);
    }
    let mut audit_rows = Vec::new();
    for (label, dir) in &audits {
        let path = dir.join(AUDIT_JSON);
        require_file(&path, "audit")?;
        audit_rows.push((label.clone(), read_json::<RdcSummary>(&path)?));
        inputs.push(path);
    }
    let out = out_dir(ctx)?;
    fs::write(out.join(report::MARKDOWN), report::markdown(&rollouts, &audit_rows))?;
    fs::write(out.join(report::CSV), report::csv(&rollouts, &audit_rows)?)?;
    #[derive(Serialize)]
    struct ReportConfig<'a> {
        sims: &'a [(String, PathBuf)],
        audits: &'a [(String, PathBuf)],
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    manifest::write(
        out,
        "report",
        &ReportConfig { sims: &sims, audits: &audits },
        &input_refs,
        &[report::MARKDOWN.into(), report::CSV.into()],
    )?;
    print!("{}", report::markdown(&rollouts, &audit_rows));
    Ok(())
}
