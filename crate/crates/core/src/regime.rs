//! Regime segmentation, jitter statistics, phenomenon detection and exit times.
//!
//! Every threshold is relative: ratios for the regime rules, multiples of the
//! initial loss for the loss detectors, multiples of the tail gradient level
//! for the terminal test. Rescaling the loss by a positive constant leaves all
//! outputs unchanged.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowError, SdeSpec, SdeStepper, TimeSeries};
use crate::io::{fmt_f64, Csv};
use crate::model::{LossModel, SlowMinimum, StateVector};
use crate::sgd::Trajectory;
use crate::stats::{fit_loglog, mean, median, moving_average, rms, std_dev, LineFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("gradient norms missing or malformed: {0}")]
    MissingGradients(String),
    #[error("tracking errors were not recorded (attach an oracle or inner solver)")]
    MissingTracking,
    #[error("window holds {samples} samples; at least 10 are required")]
    WindowTooShort { samples: usize },
    #[error("horizon {horizon} is too short for a minimum plateau length of {min_len}")]
    HorizonTooShort { horizon: u64, min_len: u64 },
    #[error("model declares fewer than two slow minima")]
    NoValleys,
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("replica {replica} diverged at t = {t}")]
    Diverged { replica: u64, t: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Initial,
    Middle,
    Terminal,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Initial, Regime::Middle, Regime::Terminal];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Initial => "initial",
            Regime::Middle => "middle",
            Regime::Terminal => "terminal",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub label: Regime,
    pub n_start: u64,
    pub n_end: u64,
}

impl Segment {
    /// Number of steps covered; segments are never empty.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u64 {
        self.n_end - self.n_start + 1
    }

    pub fn contains(&self, n: u64) -> bool {
        (self.n_start..=self.n_end).contains(&n)
    }
}

/// Regime rules. With `ρ = a‖∂ₓf‖ / (b‖∂ᵤf‖)`:
/// terminal if `‖∂ₓf‖ ≤ g_min` or `ρ < r_lo`, initial if `ρ > r_hi`,
/// middle otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentThresholds {
    pub r_hi: f64,
    pub r_lo: f64,
    /// Absolute fast-gradient floor; overrides `g_min_factor` when set.
    pub g_min: Option<f64>,
    /// `g_min` as a multiple of the median `‖∂ₓf‖` over the trailing records.
    pub g_min_factor: f64,
    /// Share of trailing records used for the stationary gradient level.
    pub tail_fraction: f64,
    /// Majority-vote window in iterations; default `max(25, ⌈1/(10a)⌉)`.
    pub window: Option<u64>,
}

impl Default for SegmentThresholds {
    fn default() -> Self {
        Self {
            r_hi: 10.0,
            r_lo: 0.1,
            g_min: None,
            g_min_factor: 3.0,
            tail_fraction: 0.1,
            window: None,
        }
    }
}

impl SegmentThresholds {
    pub fn validate(&self) -> Result<(), RegimeError> {
        if !(self.r_lo >= 0.0 && self.r_hi > self.r_lo) {
            return Err(RegimeError::Config("need 0 ≤ r_lo < r_hi".into()));
        }
        if !(self.g_min_factor > 0.0) || !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(RegimeError::Config(
                "need g_min_factor > 0 and 0 < tail_fraction ≤ 1".into(),
            ));
        }
        if matches!(self.g_min, Some(g) if !(g >= 0.0)) || self.window == Some(0) {
            return Err(RegimeError::Config("need g_min ≥ 0 and window ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSegmentation {
    pub segments: Vec<Segment>,
    pub n: Vec<u64>,
    pub ratio: Vec<f64>,
    pub grad_x_norm: Vec<f64>,
    /// `‖x − λ(y)‖` per record when it was recorded.
    pub jitter: Option<Vec<f64>>,
    pub g_min: f64,
    /// Majority-vote window actually used, in records.
    pub window_records: usize,
}

impl RegimeSegmentation {
    pub fn get(&self, label: Regime) -> Option<&Segment> {
        self.segments.iter().find(|s| s.label == label)
    }

    pub fn labels(&self) -> Vec<Regime> {
        self.segments.iter().map(|s| s.label).collect()
    }

    /// RMS jitter over the records of one segment.
    pub fn segment_rms(&self, label: Regime) -> Option<f64> {
        let seg = self.get(label)?;
        let jitter = self.jitter.as_ref()?;
        let inside: Vec<f64> = self
            .n
            .iter()
            .zip(jitter)
            .filter(|(n, _)| seg.contains(**n))
            .map(|(_, j)| *j)
            .collect();
        rms(&inside)
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut csv = Csv::with_header(config_hash, &["label", "n_start", "n_end"]);
        for s in &self.segments {
            csv.row(&[s.label.to_string(), s.n_start.to_string(), s.n_end.to_string()]);
        }
        csv.finish()
    }
}

/// Default majority-vote window in iterations.
pub fn default_window(a: f64) -> u64 {
    25u64.max((1.0 / (10.0 * a)).ceil() as u64)
}

pub fn segment(traj: &Trajectory, th: &SegmentThresholds) -> Result<RegimeSegmentation, RegimeError> {
    let mut seg = segment_norms(
        &traj.steps(),
        &traj.grad_x_norms(),
        &traj.grad_u_norms(),
        traj.a,
        traj.epsilon,
        th,
    )?;
    seg.jitter = traj.tracking_errors();
    Ok(seg)
}

/// Segment raw gradient-norm series recorded at iterations `n`.
pub fn segment_norms(
    n: &[u64],
    grad_x: &[f64],
    grad_u: &[f64],
    a: f64,
    eps: f64,
    th: &SegmentThresholds,
) -> Result<RegimeSegmentation, RegimeError> {
    th.validate()?;
    let m = n.len();
    if m == 0 || grad_x.len() != m || grad_u.len() != m {
        return Err(RegimeError::MissingGradients(format!(
            "{m} steps, {} fast norms, {} slow norms",
            grad_x.len(),
            grad_u.len()
        )));
    }
    if grad_x.iter().chain(grad_u).any(|g| !g.is_finite() || *g < 0.0) {
        return Err(RegimeError::MissingGradients("non-finite or negative norm".into()));
    }
    if n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RegimeError::MissingGradients("steps must increase".into()));
    }
    let ratio: Vec<f64> = grad_x
        .iter()
        .zip(grad_u)
        .map(|(gx, gu)| if *gu == 0.0 { f64::INFINITY } else { gx / (eps * gu) })
        .collect();
    let g_min = match th.g_min {
        Some(g) => g,
        None => {
            let tail = ((m as f64 * th.tail_fraction).ceil() as usize).clamp(1, m);
            th.g_min_factor * median(&grad_x[m - tail..]).unwrap()
        }
    };
    let raw: Vec<usize> = grad_x
        .iter()
        .zip(&ratio)
        .map(|(gx, rho)| {
            if *gx <= g_min || *rho < th.r_lo {
                Regime::Terminal.index()
            } else if *rho > th.r_hi {
                Regime::Initial.index()
            } else {
                Regime::Middle.index()
            }
        })
        .collect();
    let stride = if m > 1 { n[1] - n[0] } else { 1 };
    let window_iters = th.window.unwrap_or_else(|| default_window(a));
    let window_records = (window_iters.div_ceil(stride) as usize).max(1);
    let smoothed = majority_vote(&raw, window_records);
    let fitted = monotone_fit(&smoothed);

    let mut segments: Vec<Segment> = Vec::new();
    for (i, &l) in fitted.iter().enumerate() {
        let label = Regime::ALL[l];
        match segments.last_mut() {
            Some(s) if s.label == label => s.n_end = n[i],
            Some(s) => {
                s.n_end = n[i] - 1;
                segments.push(Segment {
                    label,
                    n_start: n[i],
                    n_end: n[i],
                });
            }
            None => segments.push(Segment {
                label,
                n_start: 0,
                n_end: n[i],
            }),
        }
    }
    Ok(RegimeSegmentation {
        segments,
        n: n.to_vec(),
        ratio,
        grad_x_norm: grad_x.to_vec(),
        jitter: None,
        g_min,
        window_records,
    })
}

/// Centered majority vote; ties keep the original label.
fn majority_vote(labels: &[usize], window: usize) -> Vec<usize> {
    let m = labels.len();
    let half = window / 2;
    let mut counts = [0usize; 3];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let (want_lo, want_hi) = (i.saturating_sub(half), (i + half + 1).min(m));
        while hi < want_hi {
            counts[labels[hi]] += 1;
            hi += 1;
        }
        while lo < want_lo {
            counts[labels[lo]] -= 1;
            lo += 1;
        }
        let own = labels[i];
        let best = (0..3).max_by_key(|&k| (counts[k], k == own)).unwrap();
        out.push(if counts[best] == counts[own] { own } else { best });
    }
    out
}

/// Closest non-decreasing labelling in Hamming distance.
fn monotone_fit(labels: &[usize]) -> Vec<usize> {
    let m = labels.len();
    let mut cost = vec![[0usize; 3]; m];
    for (i, &l) in labels.iter().enumerate() {
        for s in 0..3 {
            let prev = if i == 0 {
                0
            } else {
                *cost[i - 1][..=s].iter().min().unwrap()
            };
            cost[i][s] = prev + usize::from(l != s);
        }
    }
    let mut out = vec![0; m];
    let mut s = (0..3).min_by_key(|&k| (cost[m - 1][k], k)).unwrap();
    for i in (0..m).rev() {
        out[i] = s;
        if i > 0 {
            // Stay in the same state on ties so boundaries land as late as possible.
            let best = *cost[i - 1][..=s].iter().min().unwrap();
            if cost[i - 1][s] != best {
                s = (0..=s).find(|&k| cost[i - 1][k] == best).unwrap();
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterStats {
    pub rms: f64,
    pub samples: usize,
    /// `√a`, the predicted order of the rms.
    pub sqrt_a: f64,
}

/// RMS of `‖x(n) − λ(y(n))‖` over records with `n_from ≤ n < n_to`.
pub fn jitter_stats(traj: &Trajectory, n_from: u64, n_to: u64) -> Result<JitterStats, RegimeError> {
    let mut errs = Vec::new();
    for r in traj.records.iter().filter(|r| (n_from..n_to).contains(&r.n)) {
        errs.push(r.tracking_error.ok_or(RegimeError::MissingTracking)?);
    }
    if errs.len() < 10 {
        return Err(RegimeError::WindowTooShort { samples: errs.len() });
    }
    Ok(JitterStats {
        rms: rms(&errs).unwrap(),
        samples: errs.len(),
        sqrt_a: traj.a.sqrt(),
    })
}

/// Exponent of rms jitter against stepsize across a sweep.
pub fn jitter_exponent(a: &[f64], rms: &[f64]) -> Option<LineFit> {
    fit_loglog(a, rms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhenomenonKind {
    Plateau,
    Ascent,
    Spike,
    ValleyTransition,
}

impl PhenomenonKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhenomenonKind::Plateau => "plateau",
            PhenomenonKind::Ascent => "ascent",
            PhenomenonKind::Spike => "spike",
            PhenomenonKind::ValleyTransition => "valley-transition",
        }
    }
}

impl fmt::Display for PhenomenonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A detected event. `magnitude` is the smoothed loss range (plateau), the
/// smoothed rise (ascent), peak over running median (spike) or the drop in
/// minimum value (valley transition, with `from->to` ids in `extra`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhenomenonEvent {
    pub kind: PhenomenonKind,
    pub n_start: u64,
    pub n_end: u64,
    pub magnitude: f64,
    pub extra: String,
}

pub fn events_csv(events: &[PhenomenonEvent], config_hash: &str) -> String {
    let mut csv = Csv::with_header(config_hash, &["kind", "n_start", "n_end", "magnitude", "extra"]);
    for e in events {
        csv.row(&[
            e.kind.to_string(),
            e.n_start.to_string(),
            e.n_end.to_string(),
            fmt_f64(e.magnitude),
            e.extra.clone(),
        ]);
    }
    csv.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Plateau slope scale δ; default `delta_rel · |initial loss|`.
    pub delta: Option<f64>,
    pub delta_rel: f64,
    /// Minimum plateau length L in steps; default `⌈plateau_frac · horizon⌉`.
    pub plateau_len: Option<u64>,
    pub plateau_frac: f64,
    /// Minimum ascent rise; default `ascent_rel · |initial loss|`.
    pub ascent_rise: Option<f64>,
    pub ascent_rel: f64,
    pub spike_factor: f64,
    /// Minimum excess of a spike peak over the running median, relative to
    /// `|initial loss|`; keeps noise-floor fluctuations out.
    pub spike_rel: f64,
    pub median_width: usize,
    /// Moving-average width in records.
    pub smooth_width: usize,
    /// Valley dwell in time units; default `5/ε`.
    pub dwell: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            delta: None,
            delta_rel: 1e-3,
            plateau_len: None,
            plateau_frac: 0.05,
            ascent_rise: None,
            ascent_rel: 0.05,
            spike_factor: 3.0,
            spike_rel: 1e-3,
            median_width: 101,
            smooth_width: 25,
            dwell: None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), RegimeError> {
        let pos = |v: Option<f64>| v.is_none_or(|v| v > 0.0);
        if !(pos(self.delta) && pos(self.ascent_rise) && pos(self.dwell))
            || !(self.delta_rel > 0.0 && self.ascent_rel > 0.0 && self.plateau_frac > 0.0)
            || !(self.spike_rel >= 0.0)
        {
            return Err(RegimeError::Config("thresholds must be positive".into()));
        }
        if !(self.spike_factor > 1.0) {
            return Err(RegimeError::Config("spike_factor must exceed 1".into()));
        }
        if self.median_width == 0 || self.smooth_width == 0 || self.plateau_len == Some(0) {
            return Err(RegimeError::Config("widths must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Slow-state track for valley-transition detection.
#[derive(Debug, Clone, Copy)]
pub struct ValleyTrack<'a> {
    /// `u = εy` per record.
    pub u: &'a [DVector<f64>],
    pub minima: &'a [SlowMinimum],
    /// Dwell in the same step units as the event indices.
    pub dwell_steps: u64,
}

/// Index of the closest minimum; ties go to the lower index.
pub fn nearest_valley(minima: &[SlowMinimum], u: &DVector<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, m) in minima.iter().enumerate() {
        let d = (&m.u - u).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Detect events on a loss series recorded at steps `n` of a run of
/// `horizon` steps. Events are sorted by `n_start`, then kind.
pub fn detect_events(
    n: &[u64],
    loss: &[f64],
    horizon: u64,
    valleys: Option<ValleyTrack<'_>>,
    cfg: &DetectorConfig,
) -> Result<Vec<PhenomenonEvent>, RegimeError> {
    cfg.validate()?;
    if n.len() != loss.len() || loss.iter().any(|l| !l.is_finite()) {
        return Err(RegimeError::Config("loss series malformed or non-finite".into()));
    }
    let min_len = cfg
        .plateau_len
        .unwrap_or_else(|| (cfg.plateau_frac * horizon as f64).ceil() as u64);
    if n.len() < 3 || min_len >= horizon {
        return Err(RegimeError::HorizonTooShort { horizon, min_len });
    }
    let scale = match loss[0].abs() {
        s if s > 0.0 => s,
        _ => loss.iter().fold(0.0_f64, |m, l| m.max(l.abs())).max(f64::MIN_POSITIVE),
    };
    let delta = cfg.delta.unwrap_or(cfg.delta_rel * scale);
    let rise = cfg.ascent_rise.unwrap_or(cfg.ascent_rel * scale);
    let smooth = moving_average(loss, cfg.smooth_width);

    let mut events = plateaus(n, &smooth, delta / min_len as f64, min_len);
    events.extend(ascents(n, &smooth, rise));
    events.extend(spikes(
        n,
        loss,
        cfg.spike_factor,
        cfg.spike_rel * scale,
        cfg.median_width,
    ));
    if let Some(track) = valleys {
        if track.u.len() != n.len() {
            return Err(RegimeError::Config("valley track length differs from loss".into()));
        }
        events.extend(valley_transitions(n, &track));
    }
    events.sort_by_key(|e| (e.n_start, e.kind));
    Ok(events)
}

fn plateaus(n: &[u64], smooth: &[f64], max_slope: f64, min_len: u64) -> Vec<PhenomenonEvent> {
    let m = smooth.len();
    let flat: Vec<bool> = (0..m - 1)
        .map(|i| (smooth[i + 1] - smooth[i]).abs() / ((n[i + 1] - n[i]) as f64) < max_slope)
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < m - 1 {
        if !flat[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < m - 1 && flat[i] {
            i += 1;
        }
        // Flat steps start..i cover records start..=i.
        let end = i;
        if end < m - 1 && n[end] - n[start] >= min_len {
            let window = &smooth[start..=end];
            let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
            out.push(PhenomenonEvent {
                kind: PhenomenonKind::Plateau,
                n_start: n[start],
                n_end: n[end],
                magnitude: hi - lo,
                extra: String::new(),
            });
        }
    }
    out
}

/// Zigzag pivots with reversal threshold `rise`; an ascent is a confirmed
/// trough-to-peak swing that follows a confirmed descent.
fn ascents(n: &[u64], s: &[f64], rise: f64) -> Vec<PhenomenonEvent> {
    let mut pivots: Vec<(usize, bool)> = Vec::new();
    let (mut hi, mut lo) = (0usize, 0usize);
    let mut trend = 0i8;
    for i in 1..s.len() {
        match trend {
            0 => {
                if s[i] > s[hi] {
                    hi = i;
                }
                if s[i] < s[lo] {
                    lo = i;
                }
                if s[hi] - s[lo] >= rise {
                    if lo < hi {
                        pivots.push((lo, false));
                        trend = 1;
                    } else {
                        pivots.push((hi, true));
                        trend = -1;
                    }
                }
            }
            1 => {
                if s[i] > s[hi] {
                    hi = i;
                } else if s[hi] - s[i] >= rise {
                    pivots.push((hi, true));
                    lo = i;
                    trend = -1;
                }
            }
            _ => {
                if s[i] < s[lo] {
                    lo = i;
                } else if s[i] - s[lo] >= rise {
                    pivots.push((lo, false));
                    hi = i;
                    trend = 1;
                }
            }
        }
    }
    pivots
        .windows(2)
        .enumerate()
        .filter(|(k, w)| *k > 0 && !w[0].1 && w[1].1)
        .map(|(_, w)| PhenomenonEvent {
            kind: PhenomenonKind::Ascent,
            n_start: n[w[0].0],
            n_end: n[w[1].0],
            magnitude: s[w[1].0] - s[w[0].0],
            extra: String::new(),
        })
        .collect()
}

/// Excursions above `factor ×` the trailing median (and at least `min_excess`
/// above it) that begin with a rise and fall back within `2·width` records.
fn spikes(n: &[u64], loss: &[f64], factor: f64, min_excess: f64, width: usize) -> Vec<PhenomenonEvent> {
    const MIN_HISTORY: usize = 10;
    let mut out = Vec::new();
    let mut window: Vec<f64> = Vec::with_capacity(width + 1);
    let insert = |w: &mut Vec<f64>, v: f64| {
        let at = w.partition_point(|x| x.total_cmp(&v).is_lt());
        w.insert(at, v);
    };
    let remove = |w: &mut Vec<f64>, v: f64| {
        let at = w.partition_point(|x| x.total_cmp(&v).is_lt());
        w.remove(at);
    };
    let mut i = 1;
    insert(&mut window, loss[0]);
    while i < loss.len() {
        let med = sorted_median(&window);
        let threshold = (factor * med).max(med + min_excess);
        let mut next = i + 1;
        if window.len() >= MIN_HISTORY && med > 0.0 && loss[i] > threshold && loss[i] > loss[i - 1] {
            let mut j = i;
            while j < loss.len() && loss[j] > threshold {
                j += 1;
            }
            if j < loss.len() && j - i <= 2 * width {
                let peak = loss[i..j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                out.push(PhenomenonEvent {
                    kind: PhenomenonKind::Spike,
                    n_start: n[i],
                    n_end: n[j - 1],
                    magnitude: peak / med,
                    extra: String::new(),
                });
            }
            next = j.max(i + 1);
        }
        for k in i..next.min(loss.len()) {
            insert(&mut window, loss[k]);
            if window.len() > width {
                remove(&mut window, loss[k - width]);
            }
        }
        i = next;
    }
    out
}

fn sorted_median(w: &[f64]) -> f64 {
    let m = w.len() / 2;
    if w.len() % 2 == 1 {
        w[m]
    } else {
        0.5 * (w[m - 1] + w[m])
    }
}

fn valley_transitions(n: &[u64], track: &ValleyTrack<'_>) -> Vec<PhenomenonEvent> {
    let ids: Vec<usize> = track.u.iter().map(|u| nearest_valley(track.minima, u)).collect();
    let mut out = Vec::new();
    let mut current = ids[0];
    let mut candidate: Option<usize> = None;
    for i in 1..ids.len() {
        if ids[i] == current {
            candidate = None;
            continue;
        }
        match candidate {
            Some(c) if ids[c] == ids[i] => {}
            _ => candidate = Some(i),
        }
        let c = candidate.unwrap();
        if n[i] - n[c] >= track.dwell_steps {
            let (from, to) = (current, ids[i]);
            out.push(PhenomenonEvent {
                kind: PhenomenonKind::ValleyTransition,
                n_start: n[c],
                n_end: n[i],
                magnitude: (track.minima[from].value - track.minima[to].value).abs(),
                extra: format!("{from}->{to}"),
            });
            current = to;
            candidate = None;
        }
    }
    out
}

fn minima_of(model: &dyn LossModel) -> Option<Vec<SlowMinimum>> {
    model.slow_minima().filter(|m| m.len() >= 2)
}

/// Detect events on an SGD trajectory. Valley transitions are included when
/// `model` declares at least two slow minima; the dwell is converted with
/// one iteration = `a` time units.
pub fn detect_phenomena(
    traj: &Trajectory,
    model: Option<&dyn LossModel>,
    cfg: &DetectorConfig,
) -> Result<Vec<PhenomenonEvent>, RegimeError> {
    let n = traj.steps();
    let horizon = n.last().map_or(0, |l| l + 1);
    let minima = model.and_then(minima_of);
    let u: Vec<DVector<f64>> = match minima {
        Some(_) => traj.records.iter().map(|r| &r.y * traj.epsilon).collect(),
        None => Vec::new(),
    };
    let dwell = cfg.dwell.unwrap_or(5.0 / traj.epsilon);
    let track = minima.as_deref().map(|m| ValleyTrack {
        u: &u,
        minima: m,
        dwell_steps: (dwell / traj.a).ceil() as u64,
    });
    detect_events(&n, &traj.losses(), horizon, track, cfg)
}

/// Detect events on a continuous-time series; event indices are record numbers.
pub fn detect_in_series(
    ts: &TimeSeries,
    eps: f64,
    model: Option<&dyn LossModel>,
    cfg: &DetectorConfig,
) -> Result<Vec<PhenomenonEvent>, RegimeError> {
    let n: Vec<u64> = (0..ts.len() as u64).collect();
    let minima = model.and_then(minima_of);
    let u: Vec<DVector<f64>> = match minima {
        Some(_) => ts.y.iter().map(|y| y * eps).collect(),
        None => Vec::new(),
    };
    let dwell = cfg.dwell.unwrap_or(5.0 / eps);
    let track = minima.as_deref().map(|m| ValleyTrack {
        u: &u,
        minima: m,
        dwell_steps: (dwell / ts.h).ceil() as u64,
    });
    detect_events(&n, &ts.loss, ts.len() as u64, track, cfg)
}

/// Exit-time summary for one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitStats {
    pub s_eps: f64,
    pub replicas: u64,
    pub exits: u64,
    pub censored: u64,
    /// Mean over uncensored runs; `None` when every run is censored.
    pub mean_exit: Option<f64>,
    /// 95% normal interval for the mean.
    pub ci: Option<(f64, f64)>,
    pub exit_times: Vec<f64>,
}

impl ExitStats {
    pub fn exit_fraction(&self) -> f64 {
        self.exits as f64 / self.replicas as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.replicas as f64
    }
}

pub fn exit_times_csv(stats: &[ExitStats], config_hash: &str) -> String {
    let mut csv = Csv::with_header(
        config_hash,
        &["s_eps", "replicas", "exits", "censored", "mean_exit", "ci_lo", "ci_hi"],
    );
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for s in stats {
        csv.row(&[
            fmt_f64(s.s_eps),
            s.replicas.to_string(),
            s.exits.to_string(),
            s.censored.to_string(),
            opt(s.mean_exit),
            opt(s.ci.map(|c| c.0)),
            opt(s.ci.map(|c| c.1)),
        ]);
    }
    csv.finish()
}

/// First time the nearest slow minimum differs from the starting one and
/// stays different for `dwell` time units; `None` if censored at `t_end`.
fn first_exit(
    model: &dyn LossModel,
    spec: &SdeSpec,
    init: &StateVector,
    minima: &[SlowMinimum],
    dwell: f64,
    replica: u64,
) -> Result<Option<f64>, RegimeError> {
    let home = nearest_valley(minima, &init.u(spec.eps));
    let mut stepper = SdeStepper::new(model, spec, init, replica)?;
    let mut left_at: Option<f64> = None;
    for _ in 0..spec.steps() {
        if !stepper.advance() {
            return Err(RegimeError::Diverged {
                replica,
                t: stepper.t(),
            });
        }
        let t = stepper.t();
        if nearest_valley(minima, &stepper.state.u(spec.eps)) == home {
            left_at = None;
        } else {
            let since = *left_at.get_or_insert(t);
            if t - since >= dwell {
                return Ok(Some(since));
            }
        }
    }
    Ok(None)
}

/// Monte-Carlo exit times from the valley containing `init`, one entry per
/// spec. Censored runs are excluded from the mean and counted separately.
pub fn exit_time_stats(
    model: &dyn LossModel,
    specs: &[SdeSpec],
    init: &StateVector,
    replicas: u64,
    dwell: Option<f64>,
) -> Result<Vec<ExitStats>, RegimeError> {
    let minima = minima_of(model).ok_or(RegimeError::NoValleys)?;
    if replicas == 0 {
        return Err(RegimeError::Config("replicas must be ≥ 1".into()));
    }
    specs
        .iter()
        .map(|spec| {
            let dwell = dwell.unwrap_or(5.0 / spec.eps);
            let outcomes = (0..replicas)
                .into_par_iter()
                .map(|r| first_exit(model, spec, init, &minima, dwell, r))
                .collect::<Result<Vec<_>, _>>()?;
            let times: Vec<f64> = outcomes.iter().flatten().copied().collect();
            let mean_exit = mean(&times);
            let ci = mean_exit.map(|m| {
                let half = 1.96 * std_dev(&times).unwrap() / (times.len() as f64).sqrt();
                (m - half, m + half)
            });
            Ok(ExitStats {
                s_eps: spec.noise_scale(),
                replicas,
                exits: times.len() as u64,
                censored: replicas - times.len() as u64,
                mean_exit,
                ci,
                exit_times: times,
            })
        })
        .collect()
}

/// Share of replicas whose final slow state sits nearest a global minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupancy {
    pub eps: f64,
    pub replicas: u64,
    pub global: u64,
}

impl Occupancy {
    pub fn fraction(&self) -> f64 {
        self.global as f64 / self.replicas as f64
    }
}

pub fn terminal_occupancy(
    model: &dyn LossModel,
    spec: &SdeSpec,
    init: &StateVector,
    replicas: u64,
) -> Result<Occupancy, RegimeError> {
    let minima = minima_of(model).ok_or(RegimeError::NoValleys)?;
    let hits = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut stepper = SdeStepper::new(model, spec, init, r)?;
            for _ in 0..spec.steps() {
                if !stepper.advance() {
                    return Err(RegimeError::Diverged {
                        replica: r,
                        t: stepper.t(),
                    });
                }
            }
            Ok(minima[nearest_valley(&minima, &stepper.state.u(spec.eps))].global)
        })
        .collect::<Result<Vec<bool>, RegimeError>>()?;
    Ok(Occupancy {
        eps: spec.eps,
        replicas,
        global: hits.iter().filter(|g| **g).count() as u64,
    })
}
