//! Mode runners: each writes its artifacts and returns structured results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use ttslab::dominance::{exhaustive_select, greedy_select, DominanceResult};
use ttslab::flow::{
    integrate_ode, integrate_sde, interpolate, tracking_error_window, BlockSel, OdeKind, OdeSpec, TimeSeries,
};
use ttslab::io::{fmt_f64, Csv};
use ttslab::model::{LossModel, StateVector};
use ttslab::regime::{
    detect_in_series, detect_phenomena, events_csv, exit_time_stats, exit_times_csv, segment, terminal_occupancy,
    ExitStats, Occupancy, PhenomenonEvent, PhenomenonKind, Regime, RegimeSegmentation,
};
use ttslab::sgd::{run, run_ensemble, EnsembleSummary, LambdaSource, NoiseKind, Trajectory};
use ttslab::stats::{fit_line, fit_loglog, LineFit};

use crate::config::{echo_float, ExperimentConfig, Mode, SweepCell};
use crate::{report, write_atomic, Check, CliError};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Overrides the configured global seed.
    pub seed: Option<u64>,
    /// Promote informational failures to mandatory ones.
    pub strict: bool,
}

/// One comparison window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareWindow {
    pub t0: f64,
    pub t1: f64,
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: SweepCell,
    pub final_loss: f64,
    pub jitter_rms: Option<f64>,
    pub diverged: usize,
}

/// Structured results of a run, for callers that inspect more than files.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Outcome {
    Sgd {
        trajectory: Trajectory,
        ensemble: Option<EnsembleSummary>,
        segmentation: Option<RegimeSegmentation>,
        events: Vec<PhenomenonEvent>,
    },
    Ode {
        series: TimeSeries,
    },
    Sde {
        series: TimeSeries,
        events: Vec<PhenomenonEvent>,
    },
    Compare {
        windows: Vec<CompareWindow>,
    },
    Sweep {
        cells: Vec<CellSummary>,
        jitter_fit: Option<LineFit>,
    },
    ExitTimes {
        stats: Vec<ExitStats>,
        fit: Option<LineFit>,
        occupancy: Vec<Occupancy>,
    },
    Dominance {
        greedy: DominanceResult,
        exhaustive: Option<DominanceResult>,
    },
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub diverged: bool,
    pub artifacts: Vec<String>,
    pub wall_seconds: f64,
    pub outcome: Outcome,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.diverged {
            2
        } else if self.checks.iter().any(|c| c.mandatory && c.failed()) {
            3
        } else {
            0
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("ttslab run report\n");
        writeln!(out, "mode: {}", self.mode.as_str()).unwrap();
        writeln!(out, "config_hash: {}", self.config_hash).unwrap();
        writeln!(out, "seed: {}", self.seed).unwrap();
        if let Outcome::Sweep { cells, .. } = &self.outcome {
            for c in cells {
                writeln!(out, "cell_seed: {} {}", c.cell.index, c.cell.seed).unwrap();
            }
        }
        writeln!(out, "wall_time_seconds: {:.3}", self.wall_seconds).unwrap();
        out.push_str("artifacts:\n");
        for a in &self.artifacts {
            writeln!(out, "  {a}").unwrap();
        }
        out.push_str("checks:\n");
        for c in &self.checks {
            writeln!(out, "  {c}").unwrap();
        }
        let status = match self.exit_code() {
            0 => "ok",
            2 => "diverged",
            _ => "validation-failed",
        };
        writeln!(out, "status: {status}").unwrap();
        writeln!(out, "exit_code: {}", self.exit_code()).unwrap();
        out
    }
}

/// Accumulates artifacts in the output directory.
struct Sink {
    dir: PathBuf,
    hash: String,
    files: Vec<String>,
}

impl Sink {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, contents)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Run a validated configuration and write every artifact.
pub fn execute(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ttslab-out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut sink = Sink {
        dir: out_dir.clone(),
        hash: cfg.hash(),
        files: Vec::new(),
    };
    sink.write("config.effective.toml", &cfg.echo())?;
    let mut checks = Vec::new();
    let mut diverged = false;
    let outcome = match cfg.mode {
        Mode::Sgd => run_sgd(&cfg, &mut sink, &mut checks, &mut diverged)?,
        Mode::Ode => run_ode(&cfg, &mut sink, &mut checks, &mut diverged)?,
        Mode::Sde => run_sde(&cfg, &mut sink, &mut checks, &mut diverged)?,
        Mode::Compare => run_compare(&cfg, &mut sink, &mut checks, &mut diverged)?,
        Mode::Sweep => run_sweep(&cfg, &mut sink, &mut checks, &mut diverged)?,
        Mode::ExitTimes => run_exit_times(&cfg, &mut sink, &mut checks)?,
        Mode::Dominance => run_dominance(&cfg, &mut sink, &mut checks)?,
    };
    if opts.strict {
        checks
            .iter_mut()
            .filter(|c| c.failed())
            .for_each(|c| c.mandatory = true);
    }
    let plot = report::render_files(&out_dir, &sink.files)?;
    sink.write("plot.csv", &plot)?;
    let mut rep = RunReport {
        out_dir: out_dir.clone(),
        mode: cfg.mode,
        config_hash: sink.hash.clone(),
        seed: cfg.seed,
        checks,
        diverged,
        artifacts: sink.files.clone(),
        wall_seconds: 0.0,
        outcome,
    };
    rep.artifacts.push("report.txt".into());
    rep.wall_seconds = start.elapsed().as_secs_f64();
    write_atomic(&out_dir.join("report.txt"), &rep.render())?;
    Ok(rep)
}

fn divergence_check(what: &str, at: Option<String>, diverged: &mut bool) -> Check {
    *diverged |= at.is_some();
    match at {
        None => Check::verdict("no-divergence", true, true, format!("{what} stayed finite")),
        Some(at) => Check::verdict("no-divergence", false, true, format!("{what} diverged at {at}")),
    }
}

/// Segments must tile `[first n, last n]` without gaps or overlaps.
fn partition_check(seg: &RegimeSegmentation) -> Check {
    let first = seg.n.first().copied().unwrap_or(0);
    let last = seg.n.last().copied().unwrap_or(0);
    let contiguous = seg.segments.windows(2).all(|w| w[1].n_start == w[0].n_end + 1);
    let ok = contiguous
        && seg.segments.first().is_some_and(|s| s.n_start == first)
        && seg.segments.last().is_some_and(|s| s.n_end == last);
    let labels: Vec<String> = seg
        .segments
        .iter()
        .map(|s| format!("{} [{}, {}]", s.label, s.n_start, s.n_end))
        .collect();
    Check::verdict("segments-partition-horizon", ok, true, labels.join(", "))
}

fn event_summary(events: &[PhenomenonEvent]) -> String {
    let mut counts: BTreeMap<PhenomenonKind, usize> = BTreeMap::new();
    for e in events {
        *counts.entry(e.kind).or_default() += 1;
    }
    if counts.is_empty() {
        return "none".into();
    }
    counts
        .iter()
        .map(|(k, c)| format!("{k}={c}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn monotone(loss: &[f64]) -> bool {
    loss.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1e-300))
}

fn run_sgd(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    checks: &mut Vec<Check>,
    diverged: &mut bool,
) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let tcfg = cfg.timescale_config(None)?;
    let init = cfg.init_state(model.as_ref(), tcfg.epsilon, &cfg.init)?;
    let mut traj = run(model.as_ref(), &init, &tcfg)?;
    traj.config_hash = sink.hash.clone();
    sink.write("trajectory.csv", &traj.to_csv())?;
    let mut at = traj.diverged_at.map(|n| format!("n = {n}"));
    let ensemble = if cfg.replicas > 1 {
        let mut ens = run_ensemble(model.as_ref(), &init, &tcfg, cfg.replicas)?;
        ens.config_hash = sink.hash.clone();
        sink.write("ensemble.csv", &ens.to_csv())?;
        if ens.diverged > 0 && at.is_none() {
            at = Some(format!("{} of {} replicas", ens.diverged, ens.replicas));
        }
        Some(ens)
    } else {
        None
    };
    checks.push(divergence_check("trajectory", at, diverged));
    if tcfg.noise.kind == NoiseKind::None || tcfg.noise.sigma == 0.0 {
        let ok = monotone(&traj.losses());
        checks.push(Check::verdict(
            "monotone-loss",
            ok,
            false,
            if ok {
                "loss is non-increasing"
            } else {
                "loss increases somewhere"
            },
        ));
    }
    let mut segmentation = None;
    let mut events = Vec::new();
    if cfg.detectors.enabled && !*diverged {
        match segment(&traj, &cfg.detectors.segment) {
            Ok(seg) => {
                sink.write("segments.csv", &seg.to_csv(&sink.hash))?;
                checks.push(partition_check(&seg));
                let rms: Vec<String> = Regime::ALL
                    .iter()
                    .filter_map(|&l| seg.segment_rms(l).map(|r| format!("{l}={}", echo_float(r))))
                    .collect();
                if !rms.is_empty() {
                    checks.push(Check::info("segment-rms-jitter", rms.join(", ")));
                }
                segmentation = Some(seg);
            }
            Err(e) => checks.push(Check::info("segmentation", format!("skipped: {e}"))),
        }
        match detect_phenomena(&traj, Some(model.as_ref()), &cfg.detectors.phenomena) {
            Ok(ev) => {
                sink.write("events.csv", &events_csv(&ev, &sink.hash))?;
                checks.push(Check::info("phenomena", event_summary(&ev)));
                events = ev;
            }
            Err(e) => checks.push(Check::info("phenomena", format!("skipped: {e}"))),
        }
    }
    Ok(Outcome::Sgd {
        trajectory: traj,
        ensemble,
        segmentation,
        events,
    })
}

fn run_ode(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    checks: &mut Vec<Check>,
    diverged: &mut bool,
) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let eps = cfg.epsilon();
    let init = cfg.init_state(model.as_ref(), eps, &cfg.init)?;
    let spec = cfg.ode.expect("validated");
    let mut series = integrate_ode(model.as_ref(), &spec, &init, eps, LambdaSource::Auto)?;
    series.config_hash = sink.hash.clone();
    sink.write("ode.csv", &series.to_csv())?;
    checks.push(divergence_check(
        "ODE solution",
        series.diverged_at.map(|t| format!("t = {}", fmt_f64(t))),
        diverged,
    ));
    if spec.kind != OdeKind::FastFrozenY {
        let ok = monotone(&series.loss);
        checks.push(Check::verdict(
            "loss-descent",
            ok,
            false,
            if ok {
                "loss is non-increasing along the flow"
            } else {
                "loss increases somewhere"
            },
        ));
    }
    Ok(Outcome::Ode { series })
}

fn run_sde(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    checks: &mut Vec<Check>,
    diverged: &mut bool,
) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let spec = cfg.sde_spec()?;
    let init = cfg.init_state(model.as_ref(), spec.eps, &cfg.init)?;
    let mut series = integrate_sde(model.as_ref(), &spec, &init, 0)?;
    series.config_hash = sink.hash.clone();
    sink.write("sde.csv", &series.to_csv())?;
    checks.push(divergence_check(
        "SDE path",
        series.diverged_at.map(|t| format!("t = {}", fmt_f64(t))),
        diverged,
    ));
    checks.push(Check::info(
        "noise-scale",
        format!(
            "s_eps = {}{}",
            echo_float(spec.noise_scale()),
            if spec.below_floor() {
                " (below the √(K/ln(1+1/ε)) floor)"
            } else {
                ""
            }
        ),
    ));
    let mut events = Vec::new();
    if cfg.detectors.enabled && !*diverged {
        match detect_in_series(&series, spec.eps, Some(model.as_ref()), &cfg.detectors.phenomena) {
            Ok(ev) => {
                sink.write("events.csv", &events_csv(&ev, &sink.hash))?;
                checks.push(Check::info("phenomena", event_summary(&ev)));
                events = ev;
            }
            Err(e) => checks.push(Check::info("phenomena", format!("skipped: {e}"))),
        }
    }
    Ok(Outcome::Sde { series, events })
}

fn run_compare(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    checks: &mut Vec<Check>,
    diverged: &mut bool,
) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let mut tcfg = cfg.timescale_config(None)?;
    if tcfg.effective_stride() != 1 {
        if tcfg.stride.is_some() {
            return Err(CliError::Config("compare mode needs timescale.stride = 1".into()));
        }
        tcfg.stride = Some(1);
    }
    let c = cfg.compare.expect("validated");
    let init = cfg.init_state(model.as_ref(), tcfg.epsilon, &cfg.init)?;
    let mut traj = run(model.as_ref(), &init, &tcfg)?;
    traj.config_hash = sink.hash.clone();
    sink.write("trajectory.csv", &traj.to_csv())?;
    checks.push(divergence_check(
        "trajectory",
        traj.diverged_at.map(|n| format!("n = {n}")),
        diverged,
    ));
    if *diverged {
        return Ok(Outcome::Compare { windows: Vec::new() });
    }
    let path = interpolate(&traj, tcfg.a)?;
    let kind = match c.block {
        BlockSel::Slow => OdeKind::SlowOnLambda,
        _ => OdeKind::Joint,
    };
    let h = c.h.unwrap_or(tcfg.a);
    let spec = OdeSpec::new(kind, c.integrator, h, c.window);
    let mut windows = Vec::new();
    let mut t0 = path.t_start();
    while t0 + c.window <= path.t_end() + 1e-9 {
        let (x, y) = path.query(t0).expect("inside the path");
        let start = StateVector::new(x, y).map_err(|e| CliError::Validation(e.to_string()))?;
        let ode = integrate_ode(model.as_ref(), &spec, &start, tcfg.epsilon, LambdaSource::Auto)?;
        let dev = tracking_error_window(&path, &ode, t0, c.window, c.block)?;
        windows.push(CompareWindow {
            t0,
            t1: t0 + c.window,
            sup_deviation: dev,
        });
        t0 += c.window;
    }
    let mut csv = Csv::with_header(&sink.hash, &["window", "t0", "t1", "sup_deviation"]);
    for (i, w) in windows.iter().enumerate() {
        csv.row(&[i.to_string(), fmt_f64(w.t0), fmt_f64(w.t1), fmt_f64(w.sup_deviation)]);
    }
    sink.write("compare.csv", &csv.finish())?;
    match (windows.last(), c.bound) {
        (None, _) => checks.push(Check::verdict(
            "compare-windows",
            false,
            true,
            "horizon shorter than one window",
        )),
        (Some(w), Some(bound)) => checks.push(Check::verdict(
            "final-window-deviation",
            w.sup_deviation <= bound,
            true,
            format!("{} vs bound {}", fmt_f64(w.sup_deviation), fmt_f64(bound)),
        )),
        (Some(w), None) => checks.push(Check::info("final-window-deviation", fmt_f64(w.sup_deviation))),
    }
    Ok(Outcome::Compare { windows })
}

/// Stationary rms of `‖x − λ(y)‖` for one SDE cell, averaged over replicas.
fn sde_cell(
    model: &dyn LossModel,
    c: &ExperimentConfig,
    replicas: usize,
    frac: f64,
) -> Result<(TimeSeries, f64, Option<f64>, usize), CliError> {
    let spec = c.sde_spec()?;
    let init = c.init_state(model, spec.eps, &c.init)?;
    let runs = (0..replicas as u64)
        .into_par_iter()
        .map(|r| integrate_sde(model, &spec, &init, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sq = Vec::new();
    let mut finals = Vec::new();
    let mut diverged = 0;
    for ts in &runs {
        if ts.diverged_at.is_some() {
            diverged += 1;
            continue;
        }
        finals.push(*ts.loss.last().unwrap());
        let from = ((1.0 - frac) * ts.len() as f64) as usize;
        for k in from..ts.len() {
            if let Some(l) = model.oracle_lambda(&(&ts.y[k] * spec.eps)) {
                sq.push((&ts.x[k] - l).norm_squared());
            }
        }
    }
    let jitter = ttslab::stats::mean(&sq).map(f64::sqrt);
    let final_loss = ttslab::stats::mean(&finals).unwrap_or(f64::NAN);
    Ok((runs.into_iter().next().unwrap(), final_loss, jitter, diverged))
}

fn run_sweep(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    checks: &mut Vec<Check>,
    diverged: &mut bool,
) -> Result<Outcome, CliError> {
    let sweep = cfg.sweep.clone().expect("validated");
    let plan = cfg.sweep_plan();
    let hash = sink.hash.clone();
    let results = plan
        .par_iter()
        .map(|cell| -> Result<(CellSummary, Vec<(String, String)>), CliError> {
            let c = cfg.for_cell(cell);
            let model = c.build_model()?;
            let dir = format!("cells/cell_{:03}", cell.index);
            match sweep.cell_mode {
                Mode::Sde => {
                    let (mut ts, final_loss, jitter_rms, div) =
                        sde_cell(model.as_ref(), &c, cfg.replicas, sweep.stationary_fraction)?;
                    ts.config_hash = hash.clone();
                    Ok((
                        CellSummary {
                            cell: cell.clone(),
                            final_loss,
                            jitter_rms,
                            diverged: div,
                        },
                        vec![(format!("{dir}/sde.csv"), ts.to_csv())],
                    ))
                }
                _ => {
                    let tcfg = c.timescale_config(None)?;
                    let init = c.init_state(model.as_ref(), tcfg.epsilon, &c.init)?;
                    let mut ens = run_ensemble(model.as_ref(), &init, &tcfg, cfg.replicas)?;
                    ens.config_hash = hash.clone();
                    let from = ((1.0 - sweep.stationary_fraction) * tcfg.horizon as f64) as u64;
                    let track = ens.stationary_track_sq(from);
                    Ok((
                        CellSummary {
                            cell: cell.clone(),
                            final_loss: *ens.mean_loss.last().unwrap(),
                            jitter_rms: track.is_finite().then(|| track.sqrt()),
                            diverged: ens.diverged,
                        },
                        vec![(format!("{dir}/ensemble.csv"), ens.to_csv())],
                    ))
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells = Vec::new();
    for (summary, files) in results {
        for (name, body) in files {
            sink.write(&name, &body)?;
        }
        cells.push(summary);
    }
    let keys: Vec<String> = sweep.grid.keys().cloned().collect();
    let mut header = vec!["cell".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["seed", "final_loss", "jitter_rms", "diverged"].map(String::from));
    let mut csv = Csv::new(&hash, &header);
    for s in &cells {
        let mut row = vec![s.cell.index.to_string()];
        row.extend(s.cell.values.iter().map(|(_, v)| fmt_f64(*v)));
        row.extend([
            s.cell.seed.to_string(),
            fmt_f64(s.final_loss),
            s.jitter_rms.map(fmt_f64).unwrap_or_default(),
            s.diverged.to_string(),
        ]);
        csv.row(&row);
    }
    sink.write("sweep.csv", &csv.finish())?;
    let total_div: usize = cells.iter().map(|c| c.diverged).sum();
    checks.push(divergence_check(
        "sweep cells",
        (total_div > 0).then(|| format!("{total_div} replica runs")),
        diverged,
    ));
    let jitter_fit = if keys == ["a"] && cells.iter().all(|c| c.jitter_rms.is_some()) {
        let a: Vec<f64> = cells.iter().map(|c| c.cell.values[0].1).collect();
        let rms: Vec<f64> = cells.iter().map(|c| c.jitter_rms.unwrap()).collect();
        fit_loglog(&a, &rms)
    } else {
        None
    };
    if let Some(fit) = jitter_fit {
        let mut f = Csv::with_header(&hash, &["quantity", "slope", "intercept", "r2"]);
        f.row(&[
            "log_jitter_rms_vs_log_a".into(),
            fmt_f64(fit.slope),
            fmt_f64(fit.intercept),
            fmt_f64(fit.r2),
        ]);
        sink.write("fits.csv", &f.finish())?;
    }
    match (sweep.expect_jitter_slope, jitter_fit) {
        (Some([lo, hi]), Some(fit)) => checks.push(Check::verdict(
            "jitter-exponent",
            fit.slope >= lo && fit.slope <= hi,
            true,
            format!(
                "slope {} (R² {}) vs [{lo}, {hi}]",
                echo_float(fit.slope),
                echo_float(fit.r2)
            ),
        )),
        (Some(_), None) => checks.push(Check::verdict(
            "jitter-exponent",
            false,
            true,
            "no fit: sweep only `a` and use a model with tracking errors",
        )),
        (None, Some(fit)) => checks.push(Check::info(
            "jitter-exponent",
            format!("slope {} (R² {})", echo_float(fit.slope), echo_float(fit.r2)),
        )),
        (None, None) => {}
    }
    Ok(Outcome::Sweep { cells, jitter_fit })
}

fn run_exit_times(cfg: &ExperimentConfig, sink: &mut Sink, checks: &mut Vec<Check>) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let et = cfg.exit_times.clone().expect("validated");
    let eps = cfg.epsilon();
    let init = cfg.init_state(model.as_ref(), eps, &cfg.init)?;
    let specs = cfg.exit_specs()?;
    let stats = exit_time_stats(model.as_ref(), &specs, &init, cfg.replicas as u64, et.dwell)?;
    sink.write("exit_times.csv", &exit_times_csv(&stats, &sink.hash))?;
    for s in stats.iter().filter(|s| s.s_eps == 0.0) {
        checks.push(Check::verdict(
            "zero-noise-never-exits",
            s.exits == 0,
            true,
            format!("exit fraction {} at s_eps = 0", echo_float(s.exit_fraction())),
        ));
    }
    let mut noisy: Vec<&ExitStats> = stats.iter().filter(|s| s.s_eps > 0.0).collect();
    noisy.sort_by(|a, b| b.s_eps.total_cmp(&a.s_eps));
    for s in &noisy {
        checks.push(Check::info(
            "exit-level",
            format!(
                "s_eps = {}: mean exit {}, censored {}/{}, ε²·mean = {}",
                echo_float(s.s_eps),
                s.mean_exit.map_or("-".into(), echo_float),
                s.censored,
                s.replicas,
                s.mean_exit.map_or("-".into(), |m| echo_float(m * eps * eps)),
            ),
        ));
    }
    let means: Option<Vec<f64>> = noisy.iter().map(|s| s.mean_exit).collect();
    let mut fit = None;
    if noisy.len() >= 2 {
        let increasing = means.as_ref().is_some_and(|m| m.windows(2).all(|w| w[1] > w[0]));
        checks.push(Check::verdict(
            "exit-time-grows-as-noise-falls",
            increasing,
            true,
            format!("{} noisy levels", noisy.len()),
        ));
        if let Some(m) = &means {
            let xs: Vec<f64> = noisy.iter().map(|s| 1.0 / (s.s_eps * s.s_eps)).collect();
            let ys: Vec<f64> = m.iter().map(|v| v.ln()).collect();
            fit = fit_line(&xs, &ys);
        }
        match fit {
            Some(f) => checks.push(Check::verdict(
                "log-exit-linear-in-inverse-s2",
                f.r2 >= et.min_r2,
                true,
                format!(
                    "slope {}, R² {} (need ≥ {})",
                    echo_float(f.slope),
                    echo_float(f.r2),
                    et.min_r2
                ),
            )),
            None => checks.push(Check::verdict(
                "log-exit-linear-in-inverse-s2",
                false,
                true,
                "a noisy level has no uncensored exits",
            )),
        }
    }
    let mut f = Csv::with_header(&sink.hash, &["quantity", "slope", "intercept", "r2"]);
    if let Some(fit) = fit {
        f.row(&[
            "log_mean_exit_vs_inv_s2".into(),
            fmt_f64(fit.slope),
            fmt_f64(fit.intercept),
            fmt_f64(fit.r2),
        ]);
    }
    sink.write("fits.csv", &f.finish())?;
    let mut occupancy = Vec::new();
    if let Some(occ) = &cfg.occupancy {
        let replicas = occ.replicas.unwrap_or(cfg.replicas) as u64;
        for (eps, spec) in occ.epsilons.iter().zip(cfg.occupancy_specs()?) {
            let start = cfg.init_state(model.as_ref(), *eps, &occ.init)?;
            occupancy.push(terminal_occupancy(model.as_ref(), &spec, &start, replicas)?);
        }
        let mut csv = Csv::with_header(&sink.hash, &["epsilon", "replicas", "global", "fraction"]);
        for o in &occupancy {
            csv.row(&[
                fmt_f64(o.eps),
                o.replicas.to_string(),
                o.global.to_string(),
                fmt_f64(o.fraction()),
            ]);
        }
        sink.write("occupancy.csv", &csv.finish())?;
        let mut by_eps = occupancy.clone();
        by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let ok = by_eps.windows(2).all(|w| w[1].fraction() > w[0].fraction());
        let detail: Vec<String> = by_eps
            .iter()
            .map(|o| format!("ε={}: {}", echo_float(o.eps), echo_float(o.fraction())))
            .collect();
        checks.push(Check::verdict(
            "occupancy-grows-as-eps-falls",
            ok,
            true,
            detail.join(", "),
        ));
    }
    Ok(Outcome::ExitTimes { stats, fit, occupancy })
}

fn run_dominance(cfg: &ExperimentConfig, sink: &mut Sink, checks: &mut Vec<Check>) -> Result<Outcome, CliError> {
    let d = cfg.dominance.clone().expect("validated");
    let f = |w: &[f64]| d.function.eval(w);
    let greedy = greedy_select(&f, &d.space, d.p_max, d.eps_target, d.budget, cfg.seed)?;
    sink.write("dominance.csv", &greedy.to_csv(&sink.hash))?;
    checks.push(Check::verdict(
        "set-within-budget",
        greedy.set.len() <= d.p_max,
        true,
        format!(
            "B = {:?}, residual {} ± {}",
            greedy.set,
            echo_float(greedy.residual_l1),
            echo_float(greedy.ci_halfwidth)
        ),
    ));
    checks.push(Check::verdict(
        "target-reached",
        greedy.residual_l1 < d.eps_target,
        false,
        format!("residual {} vs target {}", echo_float(greedy.residual_l1), d.eps_target),
    ));
    let exhaustive = if d.exhaustive {
        let e = exhaustive_select(&f, &d.space, d.p_max, d.eps_target, d.budget, cfg.seed)?;
        sink.write("exhaustive.csv", &e.to_csv(&sink.hash))?;
        checks.push(Check::verdict(
            "greedy-matches-exhaustive",
            greedy.sorted_set() == e.sorted_set(),
            true,
            format!("greedy {:?}, exhaustive {:?}", greedy.sorted_set(), e.sorted_set()),
        ));
        Some(e)
    } else {
        None
    };
    Ok(Outcome::Dominance { greedy, exhaustive })
}

/// Read a configuration file.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    crate::config::parse_config(&text)
}
