//! Traffic impact metrics, attack cost and classification rates.

use serde::{Deserialize, Serialize};

use crate::engine::TrajectoryStore;
use crate::error::{Error, Result};

/// Vehicles present for less than this inside the window are ignored, s.
pub const MIN_PRESENCE: f64 = 30.0;
/// Value of time, USD per hour.
pub const VALUE_OF_TIME: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub mean_speed: f64,
    pub speed_std: f64,
    /// Exits per hour.
    pub throughput: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aac: Option<f64>,
    pub window: [f64; 2],
    /// Vehicles that qualified for the speed averages.
    pub vehicles: usize,
    pub exits: usize,
}

/// Commuter metrics over `[t0, t1)`; defaults to the attack period
/// `[warmup, duration)`.
pub fn impact_metrics(store: &TrajectoryStore, window: Option<(f64, f64)>) -> Result<ImpactReport> {
    let (t0, t1) = window.unwrap_or((store.warmup, store.duration));
    if !(t0 >= store.warmup - 1e-9 && t1 <= store.duration + 1e-9 && t0 < t1) {
        return Err(Error::Config(format!(
            "metrics window [{t0}, {t1}] must lie inside [{}, {}]",
            store.warmup, store.duration
        )));
    }
    let (s0, s1) = (store.step_of(t0), store.step_of(t1));
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for v in store.vehicles() {
        let speeds: Vec<f64> = v.samples.iter().filter(|s| s.step >= s0 && s.step < s1).map(|s| s.speed).collect();
        if (speeds.len() as f64) * store.record_interval < MIN_PRESENCE - 1e-9 {
            continue;
        }
        let n = speeds.len() as f64;
        let mean = speeds.iter().sum::<f64>() / n;
        let var = speeds.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    if means.is_empty() {
        return Err(Error::EmptyWindow { t0, t1, min_presence: MIN_PRESENCE });
    }
    let exits = store.vehicles().filter_map(|v| v.exit_time).filter(|&t| t > t0 + 1e-9 && t <= t1 + 1e-9).count();
    let n = means.len() as f64;
    Ok(ImpactReport {
        mean_speed: means.iter().sum::<f64>() / n,
        speed_std: stds.iter().sum::<f64>() / n,
        throughput: exits as f64 / (t1 - t0) * 3600.0,
        aac: None,
        window: [t0, t1],
        vehicles: means.len(),
        exits,
    })
}

/// Average attack cost in USD/(km·hr). Speeds in m/s, throughput in veh/hr,
/// value of time in USD/hr. Never negative.
pub fn aac(v_base: f64, v_att: f64, throughput_att: f64, vot: f64) -> Result<f64> {
    for v in [v_base, v_att] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveSpeed(v));
        }
    }
    let (base_kmh, att_kmh) = (v_base * 3.6, v_att * 3.6);
    Ok(((1.0 / att_kmh - 1.0 / base_kmh) * vot * throughput_att).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "benign" => Some(Label::Benign),
            "malicious" => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn from_positive(p: bool) -> Self {
        if p {
            Label::Malicious
        } else {
            Label::Benign
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Malicious
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }
}

/// Class-conditional rates; a rate is absent when its truth class is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub counts: Confusion,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    #[serde(rename = "fnr")]
    pub fnr: Option<f64>,
    pub tnr: Option<f64>,
}

impl ClassificationReport {
    pub fn from_counts(c: Confusion) -> Self {
        let ratio = |a: usize, n: usize| (n > 0).then(|| a as f64 / n as f64);
        let (p, n) = (c.positives(), c.negatives());
        ClassificationReport {
            counts: c,
            fpr: ratio(c.fp, n),
            tpr: ratio(c.tp, p),
            fnr: ratio(c.fn_, p),
            tnr: ratio(c.tn, n),
        }
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<Confusion> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: predicted.len() });
    }
    let mut c = Confusion::default();
    for (t, p) in truth.iter().zip(predicted) {
        match (t.is_positive(), p.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn classification_rates(truth: &[Label], predicted: &[Label]) -> Result<ClassificationReport> {
    Ok(ClassificationReport::from_counts(confusion(truth, predicted)?))
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share their average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, sx) = mean_std(&rx);
    let (my, sy) = mean_std(&ry);
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    let cov = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / rx.len() as f64;
    Some(cov / (sx * sy))
}
