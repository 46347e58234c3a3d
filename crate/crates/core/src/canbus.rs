//! Synthetic CAN-bus logs, acceleration-command overwrite and flood
//! injection, and two intrusion detectors (ID adjacency and windowed
//! message counts) with their evaluation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Confusion, Label};
use crate::rng::{stream, stream_rng};

pub type CanId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanLabel {
    Benign,
    InjectedOverwrite,
    InjectedFlood,
}

impl CanLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CanLabel::Benign => "benign",
            CanLabel::InjectedOverwrite => "injected_overwrite",
            CanLabel::InjectedFlood => "injected_flood",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "benign" => Some(CanLabel::Benign),
            "injected_overwrite" => Some(CanLabel::InjectedOverwrite),
            "injected_flood" => Some(CanLabel::InjectedFlood),
            _ => None,
        }
    }

    pub fn truth(self) -> Label {
        Label::from_positive(self != CanLabel::Benign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanMessage {
    pub timestamp: OrdF64,
    pub id: CanId,
    pub payload: [u8; 8],
    pub label: CanLabel,
}

/// `f64` timestamp with a total order, so messages can derive `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl CanMessage {
    pub fn t(&self) -> f64 {
        self.timestamp.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CanLog {
    pub messages: Vec<CanMessage>,
}

impl CanLog {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn ids(&self) -> Vec<CanId> {
        self.messages.iter().map(|m| m.id).collect()
    }

    pub fn span(&self) -> (f64, f64) {
        match (self.messages.first(), self.messages.last()) {
            (Some(a), Some(b)) => (a.t(), b.t()),
            _ => (0.0, 0.0),
        }
    }

    pub fn truth(&self) -> Vec<Label> {
        self.messages.iter().map(|m| m.label.truth()).collect()
    }

    /// First `fraction` of the messages and the rest.
    pub fn split(&self, fraction: f64) -> (CanLog, CanLog) {
        let k = ((self.len() as f64) * fraction).round() as usize;
        let k = k.min(self.len());
        (CanLog { messages: self.messages[..k].to_vec() }, CanLog { messages: self.messages[k..].to_vec() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Signal {
    /// Slowly varying sensor-like bytes.
    Wave { period: f64 },
    /// Commanded acceleration, m/s², as a sine of the given amplitude and period.
    Accel { amplitude: f64, period: f64 },
    /// Rarely changing status bytes.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdSpec {
    pub id: CanId,
    /// Nominal period, s.
    pub period: f64,
    pub signal: Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub ids: Vec<IdSpec>,
    /// Each period is scaled by `1 + U(-jitter, jitter)`.
    pub jitter: f64,
    pub acc_command_id: CanId,
}

impl Default for BusSpec {
    /// A small powertrain/chassis bus with an ACC command frame at 0x343.
    fn default() -> Self {
        let wave = |period| Signal::Wave { period };
        BusSpec {
            ids: vec![
                IdSpec { id: 0x025, period: 0.01, signal: wave(7.0) },
                IdSpec { id: 0x0B4, period: 0.02, signal: wave(20.0) },
                IdSpec { id: 0x1C4, period: 0.02, signal: wave(11.0) },
                IdSpec { id: 0x224, period: 0.04, signal: wave(5.0) },
                IdSpec { id: 0x2E4, period: 0.02, signal: wave(3.0) },
                IdSpec { id: 0x343, period: 0.03, signal: Signal::Accel { amplitude: 0.5, period: 30.0 } },
                IdSpec { id: 0x3BC, period: 1.0, signal: Signal::Static },
                IdSpec { id: 0x610, period: 0.5, signal: Signal::Static },
            ],
            jitter: 0.05,
            acc_command_id: 0x343,
        }
    }
}

impl BusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ids.is_empty() || self.ids.iter().any(|s| !(s.period > 0.0)) {
            return Err(Error::Config("every bus ID needs a period > 0".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!("jitter must lie in [0, 0.5) (got {})", self.jitter)));
        }
        Ok(())
    }
}

/// Signed 16-bit fixed point, 0.001 m/s² per bit, big-endian in bytes 0..2.
pub fn encode_accel(a: f64) -> [u8; 2] {
    let raw = (a * 1000.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
    raw.to_be_bytes()
}

pub fn decode_accel(payload: &[u8; 8]) -> f64 {
    i16::from_be_bytes([payload[0], payload[1]]) as f64 / 1000.0
}

fn payload_for(signal: Signal, t: f64, counter: u8) -> [u8; 8] {
    let mut p = [0u8; 8];
    match signal {
        Signal::Wave { period } => {
            let phase = (std::f64::consts::TAU * t / period).sin();
            let raw = (phase * 30000.0) as i16;
            p[..2].copy_from_slice(&raw.to_be_bytes());
            p[2] = (128.0 + 100.0 * phase) as u8;
        }
        Signal::Accel { amplitude, period } => {
            let a = amplitude * (std::f64::consts::TAU * t / period).sin();
            p[..2].copy_from_slice(&encode_accel(a));
        }
        Signal::Static => p[0] = 0x01,
    }
    p[7] = counter;
    p
}

pub fn generate_log(spec: &BusSpec, duration: f64, seed: u64) -> Result<CanLog> {
    spec.validate()?;
    if !(duration > 0.0) {
        return Err(Error::Config(format!("duration must be > 0 (got {duration})")));
    }
    let mut rng = stream_rng(seed, stream::CAN);
    let mut messages = Vec::new();
    for (k, s) in spec.ids.iter().enumerate() {
        let mut t = if spec.jitter > 0.0 { rng.random_range(0.0..s.period) } else { 0.0 };
        let mut counter = 0u8;
        while t < duration {
            messages.push((
                t,
                k,
                CanMessage {
                    timestamp: OrdF64(t),
                    id: s.id,
                    payload: payload_for(s.signal, t, counter),
                    label: CanLabel::Benign,
                },
            ));
            counter = counter.wrapping_add(1);
            let scale = if spec.jitter > 0.0 { 1.0 + rng.random_range(-spec.jitter..spec.jitter) } else { 1.0 };
            t += s.period * scale;
        }
    }
    messages.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(CanLog { messages: messages.into_iter().map(|m| m.2).collect() })
}

fn check_window(log: &CanLog, t0: f64, t1: f64) -> Result<()> {
    let (start, end) = log.span();
    if !(t0 <= t1 && t0 >= start && t1 <= end) {
        return Err(Error::WindowOutOfRange { t0, t1, start, end });
    }
    Ok(())
}

/// Replaces the acceleration field of every ACC command frame in
/// `[t0, t1)`. IDs, timestamps and message count are untouched.
pub fn inject_overwrite(log: &CanLog, spec: &BusSpec, window: (f64, f64), decel: f64) -> Result<CanLog> {
    let (t0, t1) = window;
    check_window(log, t0, t1)?;
    let bytes = encode_accel(decel);
    let mut out = log.clone();
    for m in &mut out.messages {
        if m.id == spec.acc_command_id && m.t() >= t0 && m.t() < t1 {
            m.payload[..2].copy_from_slice(&bytes);
            m.label = CanLabel::InjectedOverwrite;
        }
    }
    Ok(out)
}

/// Adds ACC command frames at `extra_rate` Hz over `[t0, t1)`.
pub fn inject_flood(log: &CanLog, spec: &BusSpec, window: (f64, f64), extra_rate: f64, decel: f64) -> Result<CanLog> {
    let (t0, t1) = window;
    check_window(log, t0, t1)?;
    if !(extra_rate > 0.0) {
        return Err(Error::Config(format!("extra_rate must be > 0 (got {extra_rate})")));
    }
    let mut payload = [0u8; 8];
    payload[..2].copy_from_slice(&encode_accel(decel));
    let mut extra = Vec::new();
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 / extra_rate;
        if t >= t1 {
            break;
        }
        extra.push(CanMessage {
            timestamp: OrdF64(t),
            id: spec.acc_command_id,
            payload,
            label: CanLabel::InjectedFlood,
        });
        k += 1;
    }
    let mut merged = Vec::with_capacity(log.len() + extra.len());
    let mut it = extra.into_iter().peekable();
    for m in &log.messages {
        while let Some(e) = it.peek() {
            if e.t() < m.t() {
                merged.push(it.next().expect("peeked"));
            } else {
                break;
            }
        }
        merged.push(*m);
    }
    merged.extend(it);
    Ok(CanLog { messages: merged })
}

/// Set of adjacent ID pairs seen in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionModel {
    pub pairs: HashSet<(CanId, CanId)>,
    pub last_id: Option<CanId>,
}

pub fn train_transition(log: &CanLog) -> Result<TransitionModel> {
    if log.is_empty() {
        return Err(Error::Config("transition training log is empty".into()));
    }
    let ids = log.ids();
    Ok(TransitionModel { pairs: ids.windows(2).map(|w| (w[0], w[1])).collect(), last_id: ids.last().copied() })
}

/// Flags each message whose pair with its predecessor was never seen.
pub fn score_transition(model: &TransitionModel, log: &CanLog) -> Vec<Label> {
    let mut prev = model.last_id;
    log.messages
        .iter()
        .map(|m| {
            let flag = prev.is_some_and(|p| !model.pairs.contains(&(p, m.id)));
            prev = Some(m.id);
            Label::from_positive(flag)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyModel {
    pub window: f64,
    pub k: f64,
    /// Per ID: (mean, std) of the count per window.
    pub stats: BTreeMap<CanId, (f64, f64)>,
}

pub const MIN_TRAINING_WINDOWS: usize = 10;

fn window_counts(log: &CanLog, start: f64, window: f64, n: usize) -> Vec<HashMap<CanId, usize>> {
    let mut counts = vec![HashMap::new(); n];
    for m in &log.messages {
        let w = ((m.t() - start) / window).floor() as usize;
        if w < n {
            *counts[w].entry(m.id).or_insert(0) += 1;
        }
    }
    counts
}

pub fn train_frequency(log: &CanLog, window: f64, k: f64) -> Result<FrequencyModel> {
    if !(window > 0.0 && k > 0.0) {
        return Err(Error::Config("frequency window and k must be > 0".into()));
    }
    let (start, end) = log.span();
    let n = ((end - start) / window).floor() as usize;
    if n < MIN_TRAINING_WINDOWS {
        return Err(Error::InsufficientTrainingSpan { windows: n, needed: MIN_TRAINING_WINDOWS });
    }
    let counts = window_counts(log, start, window, n);
    let ids: HashSet<CanId> = log.messages.iter().map(|m| m.id).collect();
    let stats = ids
        .into_iter()
        .map(|id| {
            let xs: Vec<f64> = counts.iter().map(|c| *c.get(&id).unwrap_or(&0) as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            (id, (mean, var.sqrt()))
        })
        .collect();
    Ok(FrequencyModel { window, k, stats })
}

/// Flags every message of a `(window, ID)` whose count deviates from the
/// training mean by more than `k` standard deviations (floored at one
/// count). A trailing partial window is compared against a pro-rated mean.
pub fn score_frequency(model: &FrequencyModel, log: &CanLog) -> Vec<Label> {
    if log.is_empty() {
        return Vec::new();
    }
    let (start, end) = log.span();
    let n = ((end - start) / model.window).floor() as usize + 1;
    let counts = window_counts(log, start, model.window, n);
    let covered = |w: usize| ((end - start - w as f64 * model.window) / model.window).clamp(0.0, 1.0);
    log.messages
        .iter()
        .map(|m| {
            let w = (((m.t() - start) / model.window).floor() as usize).min(n - 1);
            let f = if w + 1 == n { covered(w) } else { 1.0 };
            let c = counts[w][&m.id] as f64;
            let (mean, std) = model.stats.get(&m.id).copied().unwrap_or((0.0, 0.0));
            Label::from_positive((c - mean * f).abs() > model.k * std.max(1.0))
        })
        .collect()
}

/// Confusion cells as fractions of all messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellFractions {
    pub accuracy: f64,
    pub true_positive: f64,
    pub false_negative: f64,
    pub false_positive: f64,
    pub true_negative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub tnr: Option<f64>,
    pub auc: Option<f64>,
    pub counts: Confusion,
    /// The same confusion matrix normalized by the total count.
    pub cells: CellFractions,
}

/// Mann-Whitney estimate of AUC with ties counted as one half.
pub fn auc_from_scores(truth: &[Label], scores: &[f64]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            rank[k] = avg;
        }
        i = j + 1;
    }
    let pos = truth.iter().filter(|l| l.is_positive()).count() as f64;
    let neg = truth.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let rank_sum: f64 = truth.iter().zip(&rank).filter(|(l, _)| l.is_positive()).map(|(_, r)| r).sum();
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Accuracy, class-conditional rates and AUC. Without scores, AUC is the
/// trapezoid through the single operating point, `(1 + TPR - FPR) / 2`.
pub fn evaluate(predicted: &[Label], truth: &[Label], scores: Option<&[f64]>) -> Result<EvalReport> {
    let c = crate::metrics::confusion(truth, predicted)?;
    if let Some(s) = scores {
        if s.len() != truth.len() {
            return Err(Error::LengthMismatch { left: truth.len(), right: s.len() });
        }
    }
    let r = crate::metrics::ClassificationReport::from_counts(c);
    let total = c.total().max(1) as f64;
    let auc = match scores {
        Some(s) => auc_from_scores(truth, s),
        None => match (r.tpr, r.fpr) {
            (Some(tpr), Some(fpr)) => Some((1.0 + tpr - fpr) / 2.0),
            _ => None,
        },
    };
    let accuracy = (c.tp + c.tn) as f64 / total;
    Ok(EvalReport {
        accuracy,
        tpr: r.tpr,
        fnr: r.fnr,
        fpr: r.fpr,
        tnr: r.tnr,
        auc,
        counts: c,
        cells: CellFractions {
            accuracy,
            true_positive: c.tp as f64 / total,
            false_negative: c.fn_ as f64 / total,
            false_positive: c.fp as f64 / total,
            true_negative: c.tn as f64 / total,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Injection {
    Overwrite { decel: f64 },
    Flood { extra_rate: f64, decel: f64 },
}

impl Injection {
    pub fn apply(&self, log: &CanLog, spec: &BusSpec, window: (f64, f64)) -> Result<CanLog> {
        match *self {
            Injection::Overwrite { decel } => inject_overwrite(log, spec, window, decel),
            Injection::Flood { extra_rate, decel } => inject_flood(log, spec, window, extra_rate, decel),
        }
    }
}

/// Benign log, 80/20 split, injection into the held-out part, both detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CanPipeline {
    pub spec: BusSpec,
    pub duration: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub injection: Injection,
    /// Injection window as fractions of the test span.
    pub window: (f64, f64),
    pub frequency_window: f64,
    pub frequency_k: f64,
}

impl Default for CanPipeline {
    fn default() -> Self {
        CanPipeline {
            spec: BusSpec::default(),
            duration: 300.0,
            seed: 0,
            train_fraction: 0.8,
            injection: Injection::Overwrite { decel: -1.0 },
            window: (0.25, 0.75),
            frequency_window: 1.0,
            frequency_k: 4.0,
        }
    }
}

impl CanPipeline {
    /// A flood dense enough that most injected frames follow another
    /// injected frame, at roughly the frame capacity of a 500 kbit/s bus.
    pub fn flood_control() -> Self {
        CanPipeline {
            injection: Injection::Flood { extra_rate: 4000.0, decel: -1.0 },
            window: (0.4, 0.5),
            ..Self::default()
        }
    }

    pub fn injection_window(&self, test: &CanLog) -> (f64, f64) {
        let (s, e) = test.span();
        (s + self.window.0 * (e - s), s + self.window.1 * (e - s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanResults {
    pub messages: usize,
    pub injected: usize,
    pub transition: EvalReport,
    pub frequency: EvalReport,
}

pub struct PipelineLogs {
    pub train: CanLog,
    pub test: CanLog,
}

pub fn pipeline_logs(p: &CanPipeline) -> Result<PipelineLogs> {
    let log = generate_log(&p.spec, p.duration, p.seed)?;
    let (train, clean) = log.split(p.train_fraction);
    let test = p.injection.apply(&clean, &p.spec, p.injection_window(&clean))?;
    Ok(PipelineLogs { train, test })
}

/// Trains both detectors on `train` and evaluates them on `test`.
pub fn detect_and_evaluate(train: &CanLog, test: &CanLog, window: f64, k: f64) -> Result<CanResults> {
    let truth = test.truth();
    let tm = train_transition(train)?;
    let fm = train_frequency(train, window, k)?;
    Ok(CanResults {
        messages: test.len(),
        injected: truth.iter().filter(|l| l.is_positive()).count(),
        transition: evaluate(&score_transition(&tm, test), &truth, None)?,
        frequency: evaluate(&score_frequency(&fm, test), &truth, None)?,
    })
}

pub fn run_pipeline(p: &CanPipeline) -> Result<CanResults> {
    let logs = pipeline_logs(p)?;
    detect_and_evaluate(&logs.train, &logs.test, p.frequency_window, p.frequency_k)
}

pub const PREDICTIONS_HEADER: &str = "timestamp_s,msg_id_hex,transition_label,frequency_label";

pub fn write_predictions_csv<W: Write>(
    test: &CanLog,
    transition: &[Label],
    frequency: &[Label],
    mut w: W,
) -> Result<()> {
    if transition.len() != test.len() || frequency.len() != test.len() {
        return Err(Error::LengthMismatch { left: test.len(), right: transition.len().min(frequency.len()) });
    }
    writeln!(w, "{PREDICTIONS_HEADER}")?;
    for ((m, a), b) in test.messages.iter().zip(transition).zip(frequency) {
        writeln!(w, "{:.6},{:03X},{},{}", m.t(), m.id, a.as_str(), b.as_str())?;
    }
    Ok(())
}

/// The transition and frequency prediction columns.
pub fn read_predictions_csv<R: BufRead>(r: R) -> Result<(Vec<Label>, Vec<Label>)> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == PREDICTIONS_HEADER => {}
        _ => return Err(Error::Parse(format!("expected header `{PREDICTIONS_HEADER}`"))),
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("predictions line {}: `{line}`", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        a.push(Label::parse(f[2]).ok_or_else(bad)?);
        b.push(Label::parse(f[3]).ok_or_else(bad)?);
    }
    Ok((a, b))
}

pub const LOG_HEADER: &str = "timestamp_s,msg_id_hex,payload_hex,truth_label";

pub fn write_log_csv<W: Write>(log: &CanLog, mut w: W) -> Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for m in &log.messages {
        let hex: String = m.payload.iter().map(|b| format!("{b:02X}")).collect();
        writeln!(w, "{:.6},{:03X},{},{}", m.t(), m.id, hex, m.label.as_str())?;
    }
    Ok(())
}

pub fn read_log_csv<R: BufRead>(r: R) -> Result<CanLog> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == LOG_HEADER => {}
        _ => return Err(Error::Parse(format!("expected header `{LOG_HEADER}`"))),
    }
    let mut messages = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("CAN log line {}: `{line}`", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 || f[2].len() != 16 {
            return Err(bad());
        }
        let t: f64 = f[0].parse().map_err(|_| bad())?;
        let id = CanId::from_str_radix(f[1], 16).map_err(|_| bad())?;
        let mut payload = [0u8; 8];
        for (k, b) in payload.iter_mut().enumerate() {
            *b = u8::from_str_radix(&f[2][2 * k..2 * k + 2], 16).map_err(|_| bad())?;
        }
        let label = CanLabel::parse(f[3]).ok_or_else(bad)?;
        messages.push(CanMessage { timestamp: OrdF64(t), id, payload, label });
    }
    Ok(CanLog { messages })
}
