//! The defender's view of a run: decimated GPS speed traces for every
//! compromised vehicle and a random share of benign ones.

use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::TrajectoryStore;
use crate::error::{Error, Result};
use crate::network::VehicleId;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthLabel {
    Benign,
    Compromised,
}

impl TruthLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TruthLabel::Benign => "benign",
            TruthLabel::Compromised => "compromised",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "benign" => Some(TruthLabel::Benign),
            "compromised" => Some(TruthLabel::Compromised),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsTrace {
    pub vehicle_id: VehicleId,
    pub truth: TruthLabel,
    pub times: Vec<f64>,
    pub speeds: Vec<f64>,
    /// Kept for plotting only.
    pub positions: Vec<f64>,
}

impl GpsTrace {
    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserveConfig {
    pub benign_fraction: f64,
    /// Sampling rate, Hz.
    pub rate: f64,
    pub noise_std: f64,
    /// Only samples with `t0 <= t < t1` are kept.
    pub window: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for ObserveConfig {
    fn default() -> Self {
        ObserveConfig { benign_fraction: 1.0, rate: 1.0, noise_std: 0.0, window: None, seed: 0 }
    }
}

/// Decimation factor in simulation steps for `rate`, if it lines up with the
/// store's recording grid.
fn decimation(store: &TrajectoryStore, rate: f64) -> Result<u64> {
    let bad = || Error::IncompatibleRate { rate, interval: store.record_interval };
    if !(rate > 0.0) {
        return Err(bad());
    }
    let per_sample = 1.0 / rate / store.record_interval;
    if per_sample < 1.0 - 1e-9 || (per_sample - per_sample.round()).abs() > 1e-6 {
        return Err(bad());
    }
    let record_stride = (store.record_interval / store.dt).round() as u64;
    Ok(per_sample.round() as u64 * record_stride)
}

pub fn extract_traces(store: &TrajectoryStore, cfg: &ObserveConfig) -> Result<Vec<GpsTrace>> {
    if !(0.0..=1.0).contains(&cfg.benign_fraction) {
        return Err(Error::Config(format!("benign_fraction must lie in [0, 1] (got {})", cfg.benign_fraction)));
    }
    if !(cfg.noise_std >= 0.0) {
        return Err(Error::Config(format!("noise_std must be >= 0 (got {})", cfg.noise_std)));
    }
    let every = decimation(store, cfg.rate)?;
    let (s0, s1) = match cfg.window {
        Some((t0, t1)) => (store.step_of(t0), store.step_of(t1)),
        None => (0, u64::MAX),
    };
    let noise = Normal::new(0.0, cfg.noise_std).expect("finite std");
    let vehicles: Vec<_> = store.vehicles().collect();
    let traces = vehicles
        .par_iter()
        .filter_map(|v| {
            let mut rng = stream_rng(cfg.seed, (stream::OBSERVE << 40) | v.id);
            let truth = if v.kind.is_compromised() { TruthLabel::Compromised } else { TruthLabel::Benign };
            let keep_draw: f64 = rng.random();
            if truth == TruthLabel::Benign && keep_draw >= cfg.benign_fraction {
                return None;
            }
            let mut tr =
                GpsTrace { vehicle_id: v.id, truth, times: Vec::new(), speeds: Vec::new(), positions: Vec::new() };
            for s in v.samples.iter().filter(|s| s.step % every == 0 && s.step >= s0 && s.step < s1) {
                let mut speed = s.speed;
                if cfg.noise_std > 0.0 {
                    speed = (speed + noise.sample(&mut rng)).max(0.0);
                }
                tr.times.push(store.time_of(s));
                tr.speeds.push(speed);
                tr.positions.push(s.x);
            }
            (!tr.is_empty()).then_some(tr)
        })
        .collect();
    Ok(traces)
}

pub const TRACE_HEADER: &str = "vehicle_id,truth_label,t,speed_mps";

pub fn write_traces_csv<W: Write>(traces: &[GpsTrace], mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for tr in traces {
        for (t, v) in tr.times.iter().zip(&tr.speeds) {
            writeln!(w, "{},{},{:.3},{}", tr.vehicle_id, tr.truth.as_str(), t, v)?;
        }
    }
    Ok(())
}

/// Reads traces back; positions are not part of the table and come back empty.
pub fn read_traces_csv<R: BufRead>(r: R) -> Result<Vec<GpsTrace>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(Error::Parse(format!("expected header `{TRACE_HEADER}`"))),
    }
    let mut out: Vec<GpsTrace> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("trace line {}: `{line}`", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let id: VehicleId = f[0].parse().map_err(|_| bad())?;
        let truth = TruthLabel::parse(f[1]).ok_or_else(bad)?;
        let t: f64 = f[2].parse().map_err(|_| bad())?;
        let v: f64 = f[3].parse().map_err(|_| bad())?;
        match out.last_mut() {
            Some(tr) if tr.vehicle_id == id => {
                tr.times.push(t);
                tr.speeds.push(v);
            }
            _ => out.push(GpsTrace { vehicle_id: id, truth, times: vec![t], speeds: vec![v], positions: Vec::new() }),
        }
    }
    Ok(out)
}
