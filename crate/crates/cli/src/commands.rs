//! Subcommands. Each returns an [`Outcome`]; input problems surface as
//! [`CliError`] and map to exit status 1 in `main`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stereocal::{
    aggregate, evaluate, perturb_viewpoint, run_protocol, solve_epipolar, solve_single_pair,
    CorrespondenceSet, Extrinsics, GlobalEstimate, MetricsReport, PairEstimate,
    ReferenceExtrinsics, SceneConfig, SolverConfig, Viewpoint,
};

use crate::error::{CliError, Result};
use crate::formats::{
    parse_correspondences, read_json, write_correspondences, write_json, write_text,
    ExtrinsicsRecord, IntrinsicsFile,
};
use crate::report::{
    CalibrationReport, CompareReport, ConfigEcho, EstimateRecord, GlobalRecord, Method, PairRecord,
};

#[derive(Debug, Parser)]
#[command(
    name = "stereocal",
    version,
    about = "Stereo extrinsic self-calibration"
)]
pub struct Cli {
    /// Print per-pair diagnostics on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate from one correspondence file.
    CalibratePair(CalibrateArgs),
    /// Calibrate every pair of a sequence and fuse the estimates.
    CalibrateSequence(CalibrateArgs),
    /// Write a synthetic sequence with its intrinsics and ground truth.
    Synth(SynthArgs),
    /// Score a report against a reference, or sweep synthetic scenes into CSV.
    Evaluate(EvaluateArgs),
    /// Run both estimators on the same sequence and tabulate their metrics.
    Compare(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Correspondence files, or directories whose `*.txt` files are read in
    /// name order.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Intrinsics sidecar; defaults to `intrinsics.json` next to each input.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// JSON with optional `solver` and `aggregate` entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference extrinsics; enables metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Use the epipolar baseline instead of the rectification solver.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// JSON with an optional `scene` entry.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub outlier_frac: Option<f64>,
    #[arg(long, default_value = "middle")]
    pub viewpoint: Viewpoint,
    #[arg(long, default_value_t = 5.0)]
    pub angle_deg: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Series {
    /// Error against pixel noise at a fixed number of pairs.
    Noise,
    /// Error against the number of pairs at a fixed noise level.
    Pairs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Calibration report to score.
    #[arg(long, conflicts_with = "series")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Metrics JSON, or CSV with `--series`. Metrics go to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub series: Option<Series>,
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default)]
pub struct ConfigFile {
    pub solver: SolverConfig,
    pub aggregate: Option<bool>,
    pub scene: Option<SceneConfig>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            Some(p) => read_json(p)?,
            None => Self::default(),
        };
        cfg.solver.validate()?;
        Ok(cfg)
    }
}

/// Everything a calibration run needs, resolved from flags and config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub method: Method,
    pub aggregate: bool,
    pub inputs: Vec<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub output: PathBuf,
    pub reference: Option<PathBuf>,
    pub verbose: bool,
}

impl RunConfig {
    fn from_args(args: &CalibrateArgs, verbose: bool) -> Result<Self> {
        let file = ConfigFile::load(args.config.as_deref())?;
        let cfg = Self {
            solver: file.solver,
            method: if args.baseline {
                Method::Epipolar
            } else {
                Method::Rectification
            },
            aggregate: file.aggregate.unwrap_or(true),
            inputs: expand_inputs(&args.input)?,
            intrinsics: args.intrinsics.clone(),
            output: args.output.clone(),
            reference: args.reference.clone(),
            verbose,
        };
        if cfg.inputs.is_empty() {
            return Err(CliError::Usage("no correspondence files found".into()));
        }
        if cfg.output.as_os_str().is_empty() {
            return Err(CliError::Usage("--output must not be empty".into()));
        }
        Ok(cfg)
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            method: self.method,
            aggregate: self.aggregate,
            solver: self.solver,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// No pair converged; maps to exit status 2.
    pub all_failed: bool,
    /// Human-readable summary for stdout.
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.all_failed {
            2
        } else {
            0
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match &cli.command {
        Command::CalibratePair(args) => {
            if args.input.len() != 1 || args.input[0].is_dir() {
                return Err(CliError::Usage(
                    "calibrate-pair takes exactly one correspondence file".into(),
                ));
            }
            cmd_calibrate(&RunConfig::from_args(args, cli.verbose)?)
        }
        Command::CalibrateSequence(args) => {
            cmd_calibrate(&RunConfig::from_args(args, cli.verbose)?)
        }
        Command::Synth(args) => cmd_synth(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(&RunConfig::from_args(args, cli.verbose)?),
    }
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

fn load_sets(cfg: &RunConfig) -> Result<Vec<CorrespondenceSet>> {
    cfg.inputs
        .iter()
        .map(|p| parse_correspondences(p, cfg.intrinsics.as_deref()))
        .collect()
}

fn load_reference(path: &Path) -> Result<ReferenceExtrinsics> {
    let record: ExtrinsicsRecord = read_json(path)?;
    Ok(ReferenceExtrinsics::from_extrinsics(
        &record.to_extrinsics()?,
    ))
}

/// Solves every set; order of the results follows the input order whatever
/// the degree of parallelism.
fn solve_all(
    method: Method,
    solver: &SolverConfig,
    sets: &[CorrespondenceSet],
) -> Vec<stereocal::Result<PairEstimate>> {
    sets.par_iter()
        .map(|obs| match method {
            Method::Rectification => solve_single_pair(obs, solver, None),
            Method::Epipolar => solve_epipolar(obs, solver, None),
        })
        .collect()
}

fn successful(results: &[stereocal::Result<PairEstimate>]) -> Vec<PairEstimate> {
    results
        .iter()
        .filter_map(|r| r.as_ref().ok().cloned())
        .collect()
}

fn any_converged(results: &[stereocal::Result<PairEstimate>]) -> bool {
    results
        .iter()
        .any(|r| matches!(r, Ok(e) if e.diagnostics.converged))
}

fn cmd_calibrate(cfg: &RunConfig) -> Result<Outcome> {
    let sets = load_sets(cfg)?;
    let reference = cfg.reference.as_deref().map(load_reference).transpose()?;
    let results = solve_all(cfg.method, &cfg.solver, &sets);

    let mut report = CalibrationReport::new(cfg.echo());
    for ((path, obs), result) in cfg.inputs.iter().zip(&sets).zip(&results) {
        let (estimate, error) = match result {
            Ok(est) => (Some(EstimateRecord::new(est, obs)), None),
            Err(e) => (None, Some(e.to_string())),
        };
        if cfg.verbose {
            match result {
                Ok(est) => eprintln!("{}: {:?}", path.display(), est.diagnostics),
                Err(e) => eprintln!("{}: {e}", path.display()),
            }
        }
        report.pairs.push(PairRecord {
            input: path.display().to_string(),
            estimate,
            error,
        });
    }

    let estimates = successful(&results);
    let global = if estimates.is_empty() {
        None
    } else {
        Some(aggregate(&estimates)?)
    };
    if cfg.aggregate {
        report.global = global.as_ref().map(GlobalRecord::new);
    }
    if let (Some(r), Some(g)) = (&reference, &global) {
        report.metrics = Some(evaluate(r, g, &estimates));
    }
    write_json(&cfg.output, &report)?;

    let converged = any_converged(&results);
    let mut summary = format!(
        "{} of {} pairs solved, report written to {}",
        estimates.len(),
        results.len(),
        cfg.output.display()
    );
    if let Some(m) = &report.metrics {
        write!(summary, "\ne_t {:.6e}  e_theta {:.6e}", m.e_t, m.e_theta).unwrap();
    }
    Ok(Outcome {
        all_failed: !converged,
        summary,
    })
}

fn scene_config(args: &SceneArgs) -> Result<SceneConfig> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut cfg = file.scene.unwrap_or_default();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(sigma) = args.noise_sigma {
        cfg.pixel_noise_sigma = sigma;
    }
    if let Some(f) = args.outlier_frac {
        cfg.outlier_fraction = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scene_truth(args: &SceneArgs) -> Result<Extrinsics> {
    Ok(perturb_viewpoint(
        &Extrinsics::rectified_rig(),
        args.viewpoint,
        args.angle_deg.to_radians(),
    )?)
}

fn cmd_synth(args: &SynthArgs) -> Result<Outcome> {
    let cfg = scene_config(&args.scene)?;
    let truth = scene_truth(&args.scene)?;
    let (sets, _) = run_protocol(&cfg, &truth, args.pairs)?;
    fs::create_dir_all(&args.output).map_err(|e| CliError::io(&args.output, e))?;
    let width = (args.pairs.max(2) - 1).to_string().len().max(3);
    for (k, obs) in sets.iter().enumerate() {
        let path = args.output.join(format!("pair_{k:0width$}.txt"));
        write_text(&path, &write_correspondences(obs))?;
    }
    write_json(
        &args.output.join("intrinsics.json"),
        &IntrinsicsFile {
            left: cfg.intrinsics_left,
            right: cfg.intrinsics_right,
        },
    )?;
    write_json(
        &args.output.join("reference.json"),
        &ExtrinsicsRecord::from_extrinsics(&truth),
    )?;
    Ok(Outcome {
        all_failed: false,
        summary: format!("{} pairs written to {}", sets.len(), args.output.display()),
    })
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    if let Some(series) = args.series {
        return evaluate_series(args, series);
    }
    let (Some(input), Some(reference)) = (&args.input, &args.reference) else {
        return Err(CliError::Usage(
            "evaluate needs --input and --reference, or --series".into(),
        ));
    };
    let report: CalibrationReport = read_json(input)?;
    let reference = load_reference(reference)?;
    let estimates = report.estimates()?;
    if estimates.is_empty() {
        return Err(CliError::Usage(format!(
            "{} holds no successful estimates",
            input.display()
        )));
    }
    let global: GlobalEstimate = match &report.global {
        Some(g) => g.to_global()?,
        None => aggregate(&estimates)?,
    };
    let metrics = evaluate(&reference, &global, &estimates);
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    match &args.output {
        Some(path) => write_text(path, &(text.clone() + "\n"))?,
        None => println!("{text}"),
    }
    Ok(Outcome {
        all_failed: false,
        summary: format!("e_t {:.6e}  e_theta {:.6e}", metrics.e_t, metrics.e_theta),
    })
}

const NOISE_LEVELS: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0];
const PAIR_COUNTS: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];

fn evaluate_series(args: &EvaluateArgs, series: Series) -> Result<Outcome> {
    let Some(output) = &args.output else {
        return Err(CliError::Usage("--series needs --output".into()));
    };
    let base = scene_config(&args.scene)?;
    let truth = scene_truth(&args.scene)?;
    let reference = ReferenceExtrinsics::from_extrinsics(&truth);
    let solver = ConfigFile::load(args.scene.config.as_deref())?.solver;
    let points: Vec<(f64, usize)> = match series {
        Series::Noise => NOISE_LEVELS.iter().map(|s| (*s, args.pairs)).collect(),
        Series::Pairs => {
            let sigma = args.scene.noise_sigma.unwrap_or(0.5);
            PAIR_COUNTS.iter().map(|m| (sigma, *m)).collect()
        }
    };

    let mut csv = String::from("noise_sigma,M,e_t,e_theta,sigma_t,sigma_theta\n");
    for (sigma, m) in points {
        let cfg = SceneConfig {
            pixel_noise_sigma: sigma,
            ..base
        };
        let (sets, _) = run_protocol(&cfg, &truth, m)?;
        let estimates = successful(&solve_all(Method::Rectification, &solver, &sets));
        if estimates.is_empty() {
            continue;
        }
        let r = evaluate(&reference, &aggregate(&estimates)?, &estimates);
        writeln!(
            csv,
            "{sigma},{},{},{},{},{}",
            r.m, r.e_t, r.e_theta, r.sigma_t, r.sigma_theta
        )
        .unwrap();
    }
    write_text(output, &csv)?;
    Ok(Outcome {
        all_failed: false,
        summary: format!("series written to {}", output.display()),
    })
}

/// Both estimators' metrics on the same sets.
pub fn compare_methods(
    solver: &SolverConfig,
    sets: &[CorrespondenceSet],
    reference: &ReferenceExtrinsics,
) -> Result<(CompareReport, bool)> {
    let mut results: Vec<(Method, MetricsReport)> = Vec::new();
    let mut ours_converged = false;
    for method in [Method::Rectification, Method::Epipolar] {
        let solved = solve_all(method, solver, sets);
        if method == Method::Rectification {
            ours_converged = any_converged(&solved);
        }
        let estimates = successful(&solved);
        if estimates.is_empty() {
            return Err(CliError::Usage(format!(
                "{} solved none of the pairs",
                method.name()
            )));
        }
        results.push((
            method,
            evaluate(reference, &aggregate(&estimates)?, &estimates),
        ));
    }
    Ok((CompareReport::new(*solver, &results), ours_converged))
}

fn cmd_compare(cfg: &RunConfig) -> Result<Outcome> {
    let Some(reference) = &cfg.reference else {
        return Err(CliError::Usage("compare needs --reference".into()));
    };
    let reference = load_reference(reference)?;
    let sets = load_sets(cfg)?;
    let (report, converged) = compare_methods(&cfg.solver, &sets, &reference)?;
    write_json(&cfg.output, &report)?;

    let mut summary = format!(
        "{:<10}{:>14}{:>14}{:>14}{:>14}",
        "method", "e_t", "e_theta", "sigma_t", "sigma_theta"
    );
    for method in [Method::Rectification, Method::Epipolar] {
        write!(summary, "\n{:<10}", method.name()).unwrap();
        for metric in ["e_t", "e_theta", "sigma_t", "sigma_theta"] {
            let v = report.value(method, metric).unwrap_or(f64::NAN);
            write!(summary, "{v:>14.6e}").unwrap();
        }
    }
    Ok(Outcome {
        all_failed: !converged,
        summary,
    })
}
