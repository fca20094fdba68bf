//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 invalid
//! config, 4 runtime failure. Failures print one line to stderr of the form
//! `sinsim: error[<kind>]: <message>`. Settings resolve as flags, then the
//! config file, then built-in defaults.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::data::DataError;
use crate::losses::{RegularizeOn, TransportCost};
use crate::model::{load_checkpoint, ModelError};
use crate::numerics::Rng;
use crate::ot::verify::{gaussian_problem, run_battery, POINT_DIM};
use crate::ot::{exact_ot, sinkhorn, transport_cost, SinkhornSettings};
use crate::pipeline::{
    export_embeddings, pretrain, probe, probe_seed, sweep, write_run_artifacts, PipelineError, ProbeKind, RunConfig,
    SweepAxis, SweepOptions,
};

#[derive(Debug, Parser)]
#[command(
    name = "sinsim",
    version,
    about = "Contrastive pretraining with an entropic optimal-transport regularizer",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain and write metrics.csv, checkpoint.json and config.json.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Seed for data, initialization, batching and augmentation.
        #[arg(long)]
        seed: u64,
    },
    /// Probe a checkpoint's frozen encoder; prints one JSON document.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config for data and probe settings; defaults to the one stored in
        /// the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: Option<ProbeKindArg>,
    },
    /// Pretrain and probe once per value; writes sweep.csv and per-row metrics.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        /// Fill the seconds column (makes the report time dependent).
        #[arg(long)]
        record_time: bool,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run the built-in solver battery; prints a JSON report.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Write encoder outputs for a dataset split as CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        output: PathBuf,
    },
    /// Relative gap between the entropic transport cost and exact OT.
    EmdCompare {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05,0.1,0.5")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 20_000)]
        max_iters: usize,
    },
}

/// Run settings shared by `train` and `sweep`. Flags override the file.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run config; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub regularize_on: Option<RegularizeOnArg>,
    #[arg(long, value_enum)]
    pub transport_cost: Option<TransportCostArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProbeKindArg {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Beta,
    Lambda,
    Iters,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegularizeOnArg {
    H,
    Z,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TransportCostArg {
    Normalized,
    Sqeuclidean,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Single stderr line.
    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
            CliError::Verification(m) => ("verification", m),
        };
        format!("sinsim: error[{kind}]: {}", msg.replace(['\n', '\r'], " "))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::Domain(_) => CliError::Config(e.to_string()),
            PipelineError::Data(DataError::Augment(_) | DataError::Invalid(_)) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl RunArgs {
    /// File (or defaults), then flags, then `seed`; validated.
    pub fn resolve(&self, seed: u64) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.output_dir {
            c.output_dir = Some(v.clone());
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.lambda {
            c.sinkhorn.lambda = v;
        }
        if let Some(v) = self.iters {
            c.sinkhorn.max_iters = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.weight_decay {
            c.weight_decay = v;
        }
        if let Some(v) = self.regularize_on {
            c.regularize_on = match v {
                RegularizeOnArg::H => RegularizeOn::H,
                RegularizeOnArg::Z => RegularizeOn::Z,
            };
        }
        if let Some(v) = self.transport_cost {
            c.transport_cost = match v {
                TransportCostArg::Normalized => TransportCost::Normalized,
                TransportCostArg::Sqeuclidean => TransportCost::SqEuclidean,
            };
        }
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

fn output_dir(c: &RunConfig, fallback: &str) -> PathBuf {
    c.output_dir.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

/// A closed stdout (`| head`) is not an error.
fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn checkpoint_config(checkpoint: &Path, config: &Option<PathBuf>) -> Result<(crate::model::ModelParams, RunConfig), CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let c = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => serde_json::from_value(ck.meta.clone())
            .map_err(|e| CliError::Config(format!("checkpoint has no usable config: {e}")))?,
    };
    c.validate()?;
    Ok((ck.params, c))
}

#[derive(Debug, Serialize)]
struct EmdRow {
    lambda: f64,
    size: usize,
    instances: usize,
    mean_rel_gap: f64,
    max_rel_gap: f64,
    max_marginal_err: f64,
}

fn emd_compare(seed: u64, lambdas: &[f64], size: usize, instances: usize, max_iters: usize) -> Result<Vec<EmdRow>, CliError> {
    if size == 0 || size > crate::ot::EXACT_OT_MAX_N || instances == 0 {
        return Err(CliError::Config(format!("size must be in 1..={} and instances ≥ 1", crate::ot::EXACT_OT_MAX_N)));
    }
    let runtime = |e: crate::ot::OtError| CliError::Runtime(e.to_string());
    lambdas
        .iter()
        .map(|&lambda| {
            let settings = SinkhornSettings::new(lambda, max_iters, 1e-9);
            settings.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let (mut sum, mut max, mut marg) = (0.0, 0.0f64, 0.0f64);
            for k in 0..instances as u64 {
                // instance k is the same for every λ
                let problem = gaussian_problem(&mut Rng::derived(seed, &[k]), size, POINT_DIM).map_err(runtime)?;
                let plan = sinkhorn(&problem, &settings).map_err(runtime)?;
                let exact = exact_ot(&problem).map_err(runtime)?.cost;
                let got = transport_cost(&plan, problem.cost()).map_err(runtime)?;
                let gap = if exact > 0.0 { (got - exact).abs() / exact } else { got.abs() };
                sum += gap;
                max = max.max(gap);
                marg = marg.max(plan.marginal_err);
            }
            Ok(EmdRow {
                lambda,
                size,
                instances,
                mean_rel_gap: sum / instances as f64,
                max_rel_gap: max,
                max_marginal_err: marg,
            })
        })
        .collect()
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { run, seed } => {
            let c = run.resolve(seed)?;
            let (train, _) = c.dataset.load(c.seed)?;
            let out = pretrain(&c, train.unlabeled())?;
            let dir = output_dir(&c, "sinsim-train");
            write_run_artifacts(&dir, &c, &out)?;
            let last = out.log.last();
            print_json(&json!({
                "output_dir": dir,
                "steps": out.log.steps.len(),
                "final": last,
            }))?;
            Ok(())
        }
        Command::Probe { checkpoint, config, kind } => {
            let (params, mut c) = checkpoint_config(&checkpoint, &config)?;
            if let Some(k) = kind {
                c.probe.kind = match k {
                    ProbeKindArg::Linear => ProbeKind::Linear,
                    ProbeKindArg::Mlp => ProbeKind::Mlp,
                };
            }
            let (train, test) = c.dataset.load(c.seed)?;
            let acc = probe(&params, &train, &test, &c.probe, probe_seed(&c))?;
            print_json(&json!({
                "accuracy": acc,
                "kind": c.probe.kind,
                "train_samples": train.len(),
                "test_samples": test.len(),
            }))?;
            Ok(())
        }
        Command::Sweep {
            run,
            seed,
            axis,
            values,
            record_time,
            threads,
        } => {
            let c = run.resolve(seed)?;
            let axis = match axis {
                AxisArg::Beta => SweepAxis::Beta,
                AxisArg::Lambda => SweepAxis::Lambda,
                AxisArg::Iters => SweepAxis::Iters,
            };
            let report = sweep(&c, axis, &values, SweepOptions { record_time, threads })?;
            let dir = output_dir(&c, "sinsim-sweep");
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            report.write_csv(&dir.join("sweep.csv"))?;
            report.write_row_logs(&dir.join("metrics"))?;
            let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!("sweep: {} rows, {failed} failed, report at {}", report.rows.len(), dir.join("sweep.csv").display());
            Ok(())
        }
        Command::Verify { seed } => {
            let report = run_battery(seed).map_err(|e| CliError::Runtime(e.to_string()))?;
            print_json(&report)?;
            if report.passed {
                Ok(())
            } else {
                let n = report.checks.iter().filter(|c| !c.passed).count();
                Err(CliError::Verification(format!("{n} checks failed")))
            }
        }
        Command::ExportEmbeddings {
            checkpoint,
            config,
            split,
            output,
        } => {
            let (params, c) = checkpoint_config(&checkpoint, &config)?;
            let (train, test) = c.dataset.load(c.seed)?;
            let data = match split {
                SplitArg::Train => train,
                SplitArg::Test => test,
            };
            export_embeddings(&params, &data, &output)?;
            Ok(())
        }
        Command::EmdCompare {
            seed,
            lambdas,
            size,
            instances,
            max_iters,
        } => {
            let rows = emd_compare(seed, &lambdas, size, instances, max_iters)?;
            print_json(&rows)?;
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = e.print();
                    2
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_arguments_is_a_usage_error() {
        assert_eq!(run(["sinsim"]), 2);
        assert_eq!(run(["sinsim", "train"]), 2);
        assert_eq!(run(["sinsim", "frobnicate"]), 2);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"beta": 0.3, "epochs": 4, "sinkhorn": {"lambda": 0.2, "max_iters": 7, "tol": 0.0}}"#).unwrap();
        let args = RunArgs {
            config: Some(p),
            beta: Some(0.9),
            iters: Some(11),
            ..RunArgs::default()
        };
        let c = args.resolve(5).unwrap();
        assert_eq!((c.beta, c.epochs, c.sinkhorn.lambda, c.sinkhorn.max_iters, c.seed), (0.9, 4, 0.2, 11, 5));
    }

    #[test]
    fn invalid_config_maps_to_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"bogus": 1}"#).unwrap();
        let code = run(["sinsim", "train", "--seed", "1", "--config", p.to_str().unwrap()]);
        assert_eq!(code, 3);
        let code = run(["sinsim", "train", "--seed", "1", "--batch-size", "1"]);
        assert_eq!(code, 3);
    }

    #[test]
    fn missing_checkpoint_is_a_runtime_failure() {
        assert_eq!(run(["sinsim", "probe", "--checkpoint", "/nonexistent/ck.json"]), 4);
    }

    #[test]
    fn error_lines_are_single_line() {
        let e = CliError::Config("a\nb".into());
        assert_eq!(e.line(), "sinsim: error[config]: a b");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn emd_gap_shrinks_with_lambda() {
        let rows = emd_compare(0, &[0.5, 0.05, 0.001], 6, 3, 20_000).unwrap();
        assert!(rows[0].mean_rel_gap > rows[1].mean_rel_gap);
        assert!(rows[1].mean_rel_gap > rows[2].mean_rel_gap);
        assert!(rows[2].max_rel_gap < 0.01);
    }
}
