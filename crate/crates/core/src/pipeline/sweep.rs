use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{run_experiment, MetricsLog, PipelineError, RunConfig};
use crate::numerics::derive_seed;

pub const SWEEP_HEADER: [&str; 6] = ["axis_value", "probe_acc", "nt_xent_final", "sinkhorn_final", "status", "seconds"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Beta,
    Lambda,
    Iters,
}

impl SweepAxis {
    fn tag(self) -> u64 {
        match self {
            SweepAxis::Beta => 1,
            SweepAxis::Lambda => 2,
            SweepAxis::Iters => 3,
        }
    }

    /// `config` with this axis set to `value` and the row seed applied.
    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig, PipelineError> {
        let mut c = config.clone();
        match self {
            SweepAxis::Beta => c.beta = value,
            SweepAxis::Lambda => c.sinkhorn.lambda = value,
            SweepAxis::Iters => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(PipelineError::Config(format!("iteration count {value} is not a positive integer")));
                }
                c.sinkhorn.max_iters = value as usize;
            }
        }
        c.seed = derive_seed(config.seed, &[self.tag(), value.to_bits()]);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Fill the `seconds` column. Off by default so reports are reproducible.
    pub record_time: bool,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// The plain contrastive row that heads a beta sweep.
    pub baseline: bool,
    pub probe_acc: Option<f64>,
    pub nt_xent_final: Option<f64>,
    pub sinkhorn_final: Option<f64>,
    pub marginal_err_final: Option<f64>,
    /// `ok`, or `error: <message>`.
    pub status: String,
    pub seconds: Option<f64>,
    pub log: MetricsLog,
}

impl SweepRow {
    pub fn axis_value(&self) -> String {
        if self.baseline {
            "baseline".into()
        } else {
            self.value.to_string()
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String, PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.axis_value(),
                opt(r.probe_acc),
                opt(r.nt_xent_final),
                opt(r.sinkhorn_final),
                r.status.clone(),
                opt(r.seconds),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_csv()?).map_err(|e| PipelineError::io(path, e))
    }

    /// One metrics CSV per row, named `row-<k>-<axis_value>.csv`.
    pub fn write_row_logs(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        for (k, r) in self.rows.iter().enumerate() {
            r.log.write_csv(&dir.join(format!("row-{k}-{}.csv", r.axis_value())))?;
        }
        Ok(())
    }
}

struct Job {
    value: f64,
    baseline: bool,
}

fn run_row(config: &RunConfig, axis: SweepAxis, job: &Job, record_time: bool) -> SweepRow {
    let start = Instant::now();
    let result = axis
        .apply(config, job.value)
        .and_then(|c| run_experiment(&c, job.baseline));
    let seconds = record_time.then(|| start.elapsed().as_secs_f64());
    match result {
        Ok(run) => {
            let last = run.log.last().copied();
            SweepRow {
                value: job.value,
                baseline: job.baseline,
                probe_acc: Some(run.accuracy),
                nt_xent_final: last.map(|r| r.nt_xent),
                sinkhorn_final: last.map(|r| r.sinkhorn),
                marginal_err_final: last.map(|r| r.marginal_err),
                status: "ok".into(),
                seconds,
                log: run.log,
            }
        }
        Err(e) => SweepRow {
            value: job.value,
            baseline: job.baseline,
            probe_acc: None,
            nt_xent_final: None,
            sinkhorn_final: None,
            marginal_err_final: None,
            status: format!("error: {e}"),
            seconds,
            log: MetricsLog::default(),
        },
    }
}

/// One fresh pretrain + probe per value, in parallel.
///
/// Row seeds are derived from `(config.seed, axis, value)`. A beta sweep is
/// headed by a baseline row that trains with the plain contrastive path at
/// `β = 0`, sharing the seed of a `β = 0` row. A failing row is reported in
/// its `status` and the sweep continues. Row order follows `values`.
pub fn sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    options: SweepOptions,
) -> Result<SweepReport, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one value".into()));
    }
    config.validate()?;
    let mut jobs = Vec::new();
    if axis == SweepAxis::Beta {
        jobs.push(Job {
            value: 0.0,
            baseline: true,
        });
    }
    jobs.extend(values.iter().map(|&value| Job { value, baseline: false }));

    let threads = match options.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len());
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<SweepRow>> = vec![None; jobs.len()];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(job) = jobs.get(k) else { break };
                        done.push((k, run_row(config, axis, job, options.record_time)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (k, row) in h.join().expect("sweep worker panicked") {
                slots[k] = Some(row);
            }
        }
    });
    Ok(SweepReport {
        axis,
        rows: slots.into_iter().map(|r| r.expect("every job ran")).collect(),
    })
}
