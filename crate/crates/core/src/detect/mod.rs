//! Single-class anomaly detection on speed traces: windows, normalization,
//! training with a max-loss threshold, sliding-window scoring and the RDA
//! loss-surface sweep.

pub mod autoencoder;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Profile;
use crate::engine::{integrate, ScoreSeries, TrajectoryStore};
use crate::error::{Error, Result};
use crate::metrics::{classification_rates, ClassificationReport, Label};
use crate::models::{acc_free_accel, AccParams};
use crate::observe::{extract_traces, GpsTrace, ObserveConfig, TruthLabel};
use crate::rng::{stream, stream_rng};

pub use autoencoder::{
    gradient_check, Activation, Autoencoder, Dense, Optimizer, ReconstructionModel, TrainConfig, TrainReport, DIMS,
};

pub const WINDOW: usize = 100;
/// Standard deviations below this are replaced by 1 (constant data).
pub const STD_FLOOR: f64 = 1e-9;

pub const MODEL_FORMAT: &str = "rdasim-autoencoder";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        let vals: Vec<f64> = values.into_iter().copied().collect();
        for v in &vals {
            n += 1;
            sum += v;
        }
        let mean = if n > 0 { sum / n as f64 } else { 0.0 };
        for v in &vals {
            sq += (v - mean) * (v - mean);
        }
        let std = if n > 0 { (sq / n as f64).sqrt() } else { 0.0 };
        Normalization { mean, std: if std < STD_FLOOR { 1.0 } else { std } }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }
}

/// A trained reconstruction model with its input scaling and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel<M = Autoencoder> {
    pub net: M,
    pub norm: Normalization,
    pub lmax: f64,
    /// Spacing of the speed samples the model was trained on, s.
    pub sample_interval: f64,
}

pub type AutoencoderModel = DetectorModel<Autoencoder>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    /// Normalized windows of length [`WINDOW`].
    pub windows: Vec<Vec<f64>>,
    pub norm: Normalization,
    /// Traces passed over because they were shorter than a window.
    pub skipped_short: usize,
    /// Index of each selected trace in the input slice.
    pub selected: Vec<usize>,
    /// The selected traces in full, normalized. Their stride-1 windows also
    /// feed the threshold so that no training vehicle scores above it.
    pub traces: Vec<Vec<f64>>,
}

/// Draws `n_vehicles` traces uniformly without replacement (replacing any
/// that are too short) and `samples_per_vehicle` random windows from each.
/// Inputs are bare speed series; truth labels never reach this code.
pub fn make_training_set(
    speeds: &[&[f64]],
    n_vehicles: usize,
    samples_per_vehicle: usize,
    seed: u64,
) -> Result<TrainingSet> {
    let mut rng = stream_rng(seed, stream::TRAINING_SET);
    let mut order: Vec<usize> = (0..speeds.len()).collect();
    order.shuffle(&mut rng);
    let mut selected = Vec::with_capacity(n_vehicles);
    let mut skipped_short = 0;
    for i in order {
        if selected.len() == n_vehicles {
            break;
        }
        if speeds[i].len() < WINDOW {
            skipped_short += 1;
            continue;
        }
        selected.push(i);
    }
    if selected.len() < n_vehicles {
        return Err(Error::InsufficientVehicles { needed: n_vehicles, available: selected.len() });
    }
    let mut raw = Vec::with_capacity(n_vehicles * samples_per_vehicle);
    for &i in &selected {
        let s = speeds[i];
        let starts = s.len() - WINDOW + 1;
        for _ in 0..samples_per_vehicle {
            let at = rand::Rng::random_range(&mut rng, 0..starts);
            raw.push(&s[at..at + WINDOW]);
        }
    }
    let norm = Normalization::fit(raw.iter().flat_map(|w| w.iter()));
    let windows = raw.iter().map(|w| norm.apply(w)).collect();
    let traces = selected.iter().map(|&i| norm.apply(speeds[i])).collect();
    Ok(TrainingSet { windows, norm, skipped_short, selected, traces })
}

/// Mean squared reconstruction error of one (normalized) window.
pub fn reconstruction_loss<M: ReconstructionModel>(model: &M, window: &[f64]) -> Result<f64> {
    if window.len() != model.window_len() {
        return Err(Error::WrongLength { expected: model.window_len(), got: window.len() });
    }
    Ok(autoencoder::mse(&model.reconstruct(window), window))
}

/// Largest loss over the training windows and over every stride-1 window
/// of the training traces.
pub fn max_training_loss<M: ReconstructionModel + Sync>(net: &M, set: &TrainingSet) -> f64 {
    let windows = set.windows.par_iter().map(|w| autoencoder::mse(&net.reconstruct(w), w)).reduce(|| 0.0, f64::max);
    let n = net.window_len();
    let traces = set
        .traces
        .par_iter()
        .filter(|t| t.len() >= n)
        .map(|t| t.windows(n).map(|w| autoencoder::mse(&net.reconstruct(w), w)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    windows.max(traces)
}

/// Trains a fresh standard autoencoder. `Lmax` sits one ulp above the
/// largest training loss, so every training vehicle satisfies the strict
/// `score < Lmax` rule.
pub fn train(set: &TrainingSet, cfg: &TrainConfig, sample_interval: f64) -> Result<(AutoencoderModel, TrainReport)> {
    let mut net = Autoencoder::standard(cfg.seed);
    let report = autoencoder::fit(&mut net, &set.windows, cfg)?;
    let lmax = max_training_loss(&net, set).next_up();
    Ok((DetectorModel { net, norm: set.norm, lmax, sample_interval }, report))
}

/// Losses of every stride-1 window of a raw speed series.
pub fn window_losses<M: ReconstructionModel + Sync>(model: &DetectorModel<M>, speeds: &[f64]) -> Result<Vec<f64>> {
    let n = model.net.window_len();
    if speeds.len() < n {
        return Err(Error::TraceTooShort { len: speeds.len(), needed: n });
    }
    let z = model.norm.apply(speeds);
    Ok(z.windows(n).map(|w| autoencoder::mse(&model.net.reconstruct(w), w)).collect())
}

/// Vehicle anomaly score: the worst window along the trace.
pub fn score_vehicle<M: ReconstructionModel + Sync>(model: &DetectorModel<M>, speeds: &[f64]) -> Result<f64> {
    Ok(window_losses(model, speeds)?.into_iter().fold(0.0, f64::max))
}

/// Benign iff `score < lmax`.
pub fn classify(score: f64, lmax: f64) -> Label {
    Label::from_positive(!(score < lmax))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepProfile {
    /// Steady driving before the attack, s.
    pub lead_in: f64,
    /// Recovery time after the longest attack in the grid, s.
    pub recovery: f64,
    pub dt: f64,
    pub max_accel: f64,
    pub acc: AccParams,
}

impl Default for SweepProfile {
    fn default() -> Self {
        SweepProfile { lead_in: 20.0, recovery: 60.0, dt: 0.1, max_accel: 2.6, acc: AccParams::default() }
    }
}

/// Speed series of a lone compromised ACC: cruise at `v0`, brake at `a`
/// for `t` seconds (stopping at zero), then free-road recovery toward `v0`.
/// Sampled every `interval` seconds over `total` seconds.
pub fn rda_profile(v0: f64, a: f64, t: f64, total: f64, interval: f64, p: &SweepProfile) -> Vec<f64> {
    let acc = AccParams { set_speed: v0, ..p.acc };
    let steps = (total / p.dt).round() as u64;
    let every = ((interval / p.dt).round() as u64).max(1);
    let (start, end) = (p.lead_in, p.lead_in + t);
    let mut v = v0;
    let mut out = Vec::with_capacity((steps / every) as usize + 1);
    for n in 0..steps {
        if n % every == 0 {
            out.push(v);
        }
        let now = n as f64 * p.dt;
        let cmd = if now >= start - 1e-9 && now < end - 1e-9 {
            if v > 0.0 {
                a.min(acc_free_accel(&acc, v))
            } else {
                0.0
            }
        } else {
            acc_free_accel(&acc, v).min((v0 - v) / p.dt)
        };
        v = integrate(0.0, v, cmd.min(p.max_accel), p.dt).1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossSurface {
    pub start_speed: f64,
    pub a_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// `losses[i][j]` is the score for `a_grid[i]`, `t_grid[j]`.
    pub losses: Vec<Vec<f64>>,
}

impl LossSurface {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "a_attack,t_attack,max_loss")?;
        for (i, a) in self.a_grid.iter().enumerate() {
            for (j, t) in self.t_grid.iter().enumerate() {
                writeln!(w, "{a},{t},{}", self.losses[i][j])?;
            }
        }
        Ok(())
    }
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn sweep_rda_losses<M: ReconstructionModel + Sync>(
    model: &DetectorModel<M>,
    start_speed: f64,
    a_grid: &[f64],
    t_grid: &[f64],
    profile: &SweepProfile,
) -> Result<LossSurface> {
    if a_grid.is_empty() || t_grid.is_empty() || !(start_speed > 0.0) {
        return Err(Error::Config("sweep needs nonempty grids and a positive start speed".into()));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let n = model.net.window_len() as f64;
    let total = (profile.lead_in + t_max + profile.recovery).max(n * model.sample_interval);
    let cells: Vec<(usize, usize)> = (0..a_grid.len()).flat_map(|i| (0..t_grid.len()).map(move |j| (i, j))).collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let speeds = rda_profile(start_speed, a_grid[i], t_grid[j], total, model.sample_interval, profile);
            score_vehicle(model, &speeds)
        })
        .collect::<Result<_>>()?;
    let losses = scores.chunks(t_grid.len()).map(<[f64]>::to_vec).collect();
    Ok(LossSurface { start_speed, a_grid: a_grid.to_vec(), t_grid: t_grid.to_vec(), losses })
}

impl AutoencoderModel {
    pub fn to_json(&self) -> Value {
        let layers: Vec<Value> = self
            .net
            .layers
            .iter()
            .map(|l| {
                let rows: Vec<&[f64]> = l.weights.chunks(l.n_in).collect();
                json!({ "activation": l.activation, "weights": rows, "bias": l.bias })
            })
            .collect();
        json!({
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "dims": self.net.dims(),
            "nonlinearity": "tanh",
            "output": "linear",
            "normalization": self.norm,
            "lmax": self.lmax,
            "sample_interval": self.sample_interval,
            "layers": layers,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("model serializes")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Layer {
            activation: Activation,
            weights: Vec<Vec<f64>>,
            bias: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            version: u32,
            dims: Vec<usize>,
            normalization: Normalization,
            lmax: f64,
            sample_interval: f64,
            layers: Vec<Layer>,
        }
        let doc: Doc = serde_json::from_value(v.clone())?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Parse(format!("unsupported model {} v{}", doc.format, doc.version)));
        }
        if doc.layers.len() + 1 != doc.dims.len() {
            return Err(Error::Parse("layer count does not match dims".into()));
        }
        let mut layers = Vec::new();
        for (k, l) in doc.layers.into_iter().enumerate() {
            let (n_in, n_out) = (doc.dims[k], doc.dims[k + 1]);
            if l.weights.len() != n_out || l.bias.len() != n_out || l.weights.iter().any(|r| r.len() != n_in) {
                return Err(Error::Parse(format!("layer {k} does not have shape {n_out}x{n_in}")));
            }
            layers.push(Dense { n_in, n_out, weights: l.weights.concat(), bias: l.bias, activation: l.activation });
        }
        if !(doc.normalization.std > 0.0) {
            return Err(Error::Parse("normalization std must be > 0".into()));
        }
        Ok(DetectorModel {
            net: Autoencoder { layers },
            norm: doc.normalization,
            lmax: doc.lmax,
            sample_interval: doc.sample_interval,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingModel(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

/// One row of the per-vehicle scoring table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreRow {
    pub vehicle_id: u64,
    pub truth: crate::observe::TruthLabel,
    pub score: f64,
    pub predicted: Label,
}

pub fn write_scores_csv<W: Write>(rows: &[ScoreRow], mut w: W) -> Result<()> {
    writeln!(w, "vehicle_id,truth_label,score,predicted_label")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.vehicle_id, r.truth.as_str(), r.score, r.predicted.as_str())?;
    }
    Ok(())
}

/// All compromised traces plus up to `n_benign` benign ones drawn without
/// replacement, in the input order.
pub fn balanced_selection(traces: &[GpsTrace], n_benign: usize, seed: u64) -> Vec<&GpsTrace> {
    let mut benign: Vec<usize> = (0..traces.len()).filter(|&i| traces[i].truth == TruthLabel::Benign).collect();
    benign.shuffle(&mut stream_rng(seed, stream::TEST_SET));
    benign.truncate(n_benign);
    benign.sort_unstable();
    let mut keep = vec![false; traces.len()];
    for i in benign {
        keep[i] = true;
    }
    traces.iter().enumerate().filter(|(i, t)| keep[*i] || t.truth == TruthLabel::Compromised).map(|(_, t)| t).collect()
}

/// Scores every trace long enough for one window. Returns the rows and the
/// number of traces skipped as too short.
pub fn score_traces<M: ReconstructionModel + Sync>(
    model: &DetectorModel<M>,
    traces: &[&GpsTrace],
) -> (Vec<ScoreRow>, usize) {
    let scored: Vec<Option<ScoreRow>> = traces
        .par_iter()
        .map(|t| {
            let score = score_vehicle(model, &t.speeds).ok()?;
            Some(ScoreRow { vehicle_id: t.vehicle_id, truth: t.truth, score, predicted: classify(score, model.lmax) })
        })
        .collect();
    let skipped = scored.iter().filter(|r| r.is_none()).count();
    (scored.into_iter().flatten().collect(), skipped)
}

/// Loss of the window ending at each sample, for space-time plots.
pub fn score_series<M: ReconstructionModel + Sync>(model: &DetectorModel<M>, trace: &GpsTrace) -> Result<ScoreSeries> {
    let losses = window_losses(model, &trace.speeds)?;
    let n = model.net.window_len();
    Ok(ScoreSeries { vehicle_id: trace.vehicle_id, times: trace.times[n - 1..].to_vec(), values: losses })
}

pub fn score_rates(rows: &[ScoreRow]) -> Result<ClassificationReport> {
    let truth: Vec<Label> = rows.iter().map(|r| Label::from_positive(r.truth == TruthLabel::Compromised)).collect();
    let predicted: Vec<Label> = rows.iter().map(|r| r.predicted).collect();
    classification_rates(&truth, &predicted)
}

/// Options for training a detector straight from a benign run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSetup {
    pub observe: ObserveConfig,
    /// 0 selects every trace long enough for a window.
    pub n_vehicles: usize,
    pub samples_per_vehicle: usize,
    pub train: TrainConfig,
}

impl DetectorSetup {
    /// 5 Hz traces, 300 vehicles: sized for the 1 km desk corridor, where
    /// a vehicle is seen for well under a minute.
    pub fn desk(seed: u64) -> Self {
        DetectorSetup {
            observe: ObserveConfig { rate: 5.0, seed, ..ObserveConfig::default() },
            n_vehicles: 300,
            samples_per_vehicle: 10,
            train: TrainConfig { seed, ..TrainConfig::default() },
        }
    }

    /// 1 Hz traces, 2000 vehicles.
    pub fn paper(seed: u64) -> Self {
        DetectorSetup {
            observe: ObserveConfig { rate: 1.0, seed, ..ObserveConfig::default() },
            n_vehicles: 2000,
            samples_per_vehicle: 10,
            train: TrainConfig { seed, ..TrainConfig::default() },
        }
    }

    pub fn for_profile(profile: Profile, seed: u64) -> Self {
        match profile {
            Profile::Desk => Self::desk(seed),
            Profile::Paper => Self::paper(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDetector {
    pub model: AutoencoderModel,
    pub report: TrainReport,
    pub set: TrainingSet,
}

/// Observes a benign run, builds the training set and trains on it.
pub fn train_from_store(store: &TrajectoryStore, setup: &DetectorSetup) -> Result<TrainedDetector> {
    let traces = extract_traces(store, &setup.observe)?;
    let speeds: Vec<&[f64]> = traces.iter().map(|t| &t.speeds[..]).collect();
    let n = match setup.n_vehicles {
        0 => speeds.iter().filter(|s| s.len() >= WINDOW).count(),
        n => n,
    };
    let set = make_training_set(&speeds, n, setup.samples_per_vehicle, setup.train.seed)?;
    let (model, report) = train(&set, &setup.train, 1.0 / setup.observe.rate)?;
    Ok(TrainedDetector { model, report, set })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Zeros(usize);

    impl ReconstructionModel for Zeros {
        fn window_len(&self) -> usize {
            self.0
        }
        fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
            vec![0.0; x.len()]
        }
    }

    fn zeros_model() -> DetectorModel<Zeros> {
        DetectorModel {
            net: Zeros(WINDOW),
            norm: Normalization { mean: 0.0, std: 1.0 },
            lmax: 1.0,
            sample_interval: 1.0,
        }
    }

    #[test]
    fn loss_hand_example() {
        let mut w = vec![0.0; WINDOW];
        w[0] = 1.0;
        w[1] = 2.0;
        assert!((reconstruction_loss(&Zeros(WINDOW), &w).unwrap() - 0.05).abs() < 1e-15);
        assert!(matches!(reconstruction_loss(&Zeros(WINDOW), &w[..99]), Err(Error::WrongLength { .. })));
    }

    #[test]
    fn classify_rule() {
        assert_eq!(classify(0.5, 1.0), Label::Benign);
        assert_eq!(classify(1.0, 1.0), Label::Malicious);
        assert_eq!(classify(2.0, 1.0), Label::Malicious);
    }

    #[test]
    fn score_is_max_over_windows() {
        let m = zeros_model();
        let speeds: Vec<f64> = (0..160).map(|k| ((k * 37) % 11) as f64 * 0.1).collect();
        let s = score_vehicle(&m, &speeds).unwrap();
        let brute = (0..=60)
            .map(|i| speeds[i..i + WINDOW].iter().map(|v| v * v).sum::<f64>() / WINDOW as f64)
            .fold(0.0, f64::max);
        assert!((s - brute).abs() < 1e-12);
        let single = score_vehicle(&m, &speeds[..WINDOW]).unwrap();
        assert!((single - reconstruction_loss(&Zeros(WINDOW), &speeds[..WINDOW]).unwrap()).abs() < 1e-15);
        assert!(matches!(score_vehicle(&m, &speeds[..99]), Err(Error::TraceTooShort { .. })));
    }

    #[test]
    fn training_set_shapes_and_errors() {
        let long: Vec<f64> = (0..300).map(|k| 20.0 + (k as f64).sin()).collect();
        let short = vec![10.0; 50];
        let traces: Vec<&[f64]> = vec![&long, &short, &long, &long];
        let set = make_training_set(&traces, 3, 10, 7).unwrap();
        assert_eq!(set.windows.len(), 30);
        assert!(set.windows.iter().all(|w| w.len() == WINDOW));
        assert!(!set.selected.contains(&1));
        assert_eq!(set, make_training_set(&traces, 3, 10, 7).unwrap());
        assert!(matches!(
            make_training_set(&traces, 4, 10, 7),
            Err(Error::InsufficientVehicles { needed: 4, available: 3 })
        ));
        let flat = vec![25.0; 120];
        let set = make_training_set(&[&flat[..]], 1, 3, 0).unwrap();
        assert!(set.windows.iter().flatten().all(|&z| z == 0.0));
        assert_eq!(set.norm.std, 1.0);
    }

    #[test]
    fn rda_profile_shape() {
        let p = SweepProfile::default();
        let flat = rda_profile(20.0, 0.0, 10.0, 120.0, 1.0, &p);
        assert_eq!(flat.len(), 120);
        assert!(flat.iter().all(|&v| v == 20.0));
        let hit = rda_profile(20.0, -1.0, 10.0, 120.0, 1.0, &p);
        let min = hit.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 10.0).abs() < 1e-9);
        assert!((hit[119] - 20.0).abs() < 1e-3);
        let stop = rda_profile(5.0, -2.0, 25.0, 120.0, 1.0, &p);
        assert!(stop.iter().all(|&v| v >= 0.0));
        assert_eq!(stop[30], 0.0);
    }

    #[test]
    fn model_json_round_trip() {
        let model = DetectorModel {
            net: Autoencoder::new(&[4, 3, 4], 2).unwrap(),
            norm: Normalization { mean: 20.0, std: 3.0 },
            lmax: 0.25,
            sample_interval: 1.0,
        };
        let text = model.to_json_string();
        let back = AutoencoderModel::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json_string(), text);
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.json");
        assert!(matches!(AutoencoderModel::load(&missing), Err(Error::MissingModel(_))));
    }

    proptest! {
        #[test]
        fn normalization_round_trip(xs in proptest::collection::vec(-100.0f64..100.0, 2..50)) {
            let n = Normalization::fit(&xs);
            prop_assert!(n.std > 0.0);
            for &x in &xs {
                prop_assert!((n.denormalize(n.normalize(x)) - x).abs() <= 1e-12);
            }
        }

        #[test]
        fn appending_never_lowers_score(base in proptest::collection::vec(0.0f64..3.0, 100..140), extra in proptest::collection::vec(0.0f64..3.0, 1..20)) {
            let m = zeros_model();
            let s1 = score_vehicle(&m, &base).unwrap();
            let mut longer = base.clone();
            longer.extend(extra);
            prop_assert!(score_vehicle(&m, &longer).unwrap() >= s1);
        }

        #[test]
        fn loss_permutation_invariant(w in proptest::collection::vec(-3.0f64..3.0, 100), r in proptest::collection::vec(-3.0f64..3.0, 100), k in 0usize..100) {
            let before = autoencoder::mse(&r, &w);
            let (mut w2, mut r2) = (w.clone(), r.clone());
            w2.rotate_left(k);
            r2.rotate_left(k);
            prop_assert!((autoencoder::mse(&r2, &w2) - before).abs() < 1e-12);
            prop_assert!(before >= 0.0);
        }
    }
}
