//! Command-line front end. Every command writes into an output directory
//! together with a `manifest.json` describing how to reproduce it.

pub mod grid;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::attack::AttackPreset;
use crate::canbus::{self, BusSpec, CanLog};
use crate::config::{Profile, ScenarioConfig, ScenarioFile};
use crate::detect::{self, AutoencoderModel, DetectorSetup, Optimizer, SweepProfile};
use crate::engine::{self, Channel, TrajectoryStore};
use crate::error::{Error, Result};
use crate::metrics::{self, ImpactReport};
use crate::network::build_network;
use crate::observe::{self, ObserveConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "rdasim", version, about = "Freeway simulation of random deceleration attacks on ACC vehicles")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Preset family used when a config does not name one.
    #[arg(long, value_enum, global = true, default_value = "desk")]
    pub profile: ProfileArg,
    /// Overrides the seed of the config (or the default seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its trajectories and impact report.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the attack x congestion x compromise x seed grid plus baselines.
    Grid {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also keep each cell's trajectory CSV.
        #[arg(long)]
        keep_trajectories: bool,
    },
    /// Train, apply and probe the speed-trace anomaly detector.
    Detector {
        #[command(subcommand)]
        command: DetectorCommand,
    },
    /// Synthetic CAN logs, injections and the two message-level detectors.
    Canbus {
        #[command(subcommand)]
        command: CanCommand,
    },
    /// Write (vehicle, time, position, value) rows for space-time plots.
    ExportSpacetime {
        /// Output directory of a `simulate` run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "speed")]
        channel: ChannelArg,
        /// Detector model, required for the anomaly-score channel.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Speed,
    AnomalyScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Subcommand)]
pub enum DetectorCommand {
    /// Train on the benign vehicles of an unattacked run.
    Train {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// GPS sampling rate, Hz (profile default when omitted).
        #[arg(long)]
        rate: Option<f64>,
        /// Traces to train on; 0 takes every usable trace.
        #[arg(long)]
        vehicles: Option<usize>,
        #[arg(long, default_value_t = 10)]
        samples_per_vehicle: usize,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, value_enum, default_value = "adam")]
        optimizer: OptimizerArg,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
    },
    /// Score all compromised vehicles and a sample of benign ones.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        benign: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
    },
    /// Loss surface of a lone attacker over (a_attack, t_attack).
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Starting speed, m/s. Defaults to the mean speed of `--run`.
        #[arg(long)]
        start_speed: Option<f64>,
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        a_min: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        a_max: f64,
        #[arg(long, default_value_t = 11)]
        a_steps: usize,
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
        #[arg(long, default_value_t = 25.0)]
        t_max: f64,
        #[arg(long, default_value_t = 11)]
        t_steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InjectMode {
    Overwrite,
    Flood,
}

#[derive(Debug, Subcommand)]
pub enum CanCommand {
    /// Generate a benign log and split it into train.csv and test.csv.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// JSON bus description; the built-in bus when omitted.
        #[arg(long)]
        bus: Option<PathBuf>,
    },
    /// Inject ACC command frames into a log.
    Inject {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: InjectMode,
        /// Window start and end, s. Defaults to the middle half of the log.
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        end: Option<f64>,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        decel: f64,
        /// Extra frames per second for floods.
        #[arg(long, default_value_t = 4000.0)]
        rate: f64,
        #[arg(long)]
        bus: Option<PathBuf>,
    },
    /// Train both detectors on a benign log and label a test log.
    Detect {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        #[arg(long, default_value_t = 4.0)]
        k: f64,
    },
    /// Compare predictions with the truth labels of the test log.
    Evaluate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub config: Option<Value>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub details: Value,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            tool: "rdasim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            status: "ok".into(),
            seed: None,
            config_hash: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn with_config(mut self, cfg: &ScenarioConfig) -> Result<Self> {
        self.seed = Some(cfg.seed);
        self.config_hash = Some(cfg.hash());
        self.config = Some(serde_json::to_value(cfg)?);
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), &serde_json::to_value(self)?)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text =
            fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const VEHICLES: &str = "vehicles.csv";
pub const IMPACT: &str = "impact.json";
pub const MODEL: &str = "model.json";

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

fn name(p: &Path) -> String {
    p.display().to_string()
}

/// Resolves a scenario file (or the profile defaults) and applies `--seed`.
pub fn load_config(path: Option<&Path>, global: &GlobalArgs) -> Result<ScenarioConfig> {
    let file = match path {
        Some(p) => ScenarioFile::load(p)?,
        None => ScenarioFile::default(),
    };
    let mut cfg = file.resolve(global.profile.into())?;
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Reads back the configuration and trajectories of a `simulate` output.
pub fn load_run(dir: &Path) -> Result<(ScenarioConfig, TrajectoryStore)> {
    let m = Manifest::read(dir)?;
    let cfg: ScenarioConfig = serde_json::from_value(
        m.config.ok_or_else(|| Error::Config(format!("{}: manifest has no config", dir.display())))?,
    )
    .map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let network = build_network(&cfg.network)?;
    let meta = dir.join(VEHICLES);
    let meta = if meta.exists() { Some(open(&meta)?) } else { None };
    let store = TrajectoryStore::read_csv(
        network,
        cfg.dt,
        cfg.record_interval,
        cfg.warmup,
        cfg.duration,
        open(&dir.join(TRAJECTORIES))?,
        meta,
    )?;
    Ok((cfg, store))
}

fn write_store(store: &TrajectoryStore, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join(TRAJECTORIES))?;
    store.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(VEHICLES))?;
    store.write_meta_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Impact of a run and, when it carries compromised vehicles, of its
/// baseline with the attack cost filled in.
pub fn impact_with_baseline(
    cfg: &ScenarioConfig,
    store: &TrajectoryStore,
) -> Result<(ImpactReport, Option<ImpactReport>)> {
    let mut report = metrics::impact_metrics(store, None)?;
    if cfg.compromise_fraction == 0.0 {
        return Ok((report, None));
    }
    let base = engine::run_scenario(&cfg.baseline())?;
    let base = metrics::impact_metrics(&base.store, None)?;
    report.aac = Some(metrics::aac(base.mean_speed, report.mean_speed, report.throughput, metrics::VALUE_OF_TIME)?);
    Ok((report, Some(base)))
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Maps a failure to the documented exit status.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_runtime_abort() {
        EXIT_RUNTIME
    } else {
        EXIT_CONFIG
    }
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> Result<u8> {
    let pool = thread_pool(cli.global.jobs)?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { config, out } => simulate(config.as_deref(), &out, g).map(|_| EXIT_OK),
        Command::Grid { config, out, keep_trajectories } => {
            let spec = match config {
                Some(p) => grid::GridSpec::load(&p)?,
                None => grid::GridSpec::default(),
            };
            let summary = grid::run_grid(&spec, &out, g, keep_trajectories)?;
            eprintln!(
                "grid: {} cells, {} run, {} reused, {} failed",
                summary.total, summary.ran, summary.reused, summary.failed
            );
            Ok(if summary.failed > 0 { EXIT_PARTIAL } else { EXIT_OK })
        }
        Command::Detector { command } => detector(command, g).map(|_| EXIT_OK),
        Command::Canbus { command } => can(command, g).map(|_| EXIT_OK),
        Command::ExportSpacetime { run, channel, model, out } => {
            export_spacetime(&run, channel, model.as_deref(), &out).map(|_| EXIT_OK)
        }
    }
}

pub fn simulate(config: Option<&Path>, out: &Path, g: &GlobalArgs) -> Result<ImpactReport> {
    let cfg = load_config(config, g)?;
    fs::create_dir_all(out)?;
    let run = engine::run_scenario(&cfg)?;
    write_store(&run.store, out)?;
    let (report, base) = impact_with_baseline(&cfg, &run.store)?;
    write_json(&out.join(IMPACT), &serde_json::to_value(report)?)?;
    let mut outputs = vec![TRAJECTORIES.to_string(), VEHICLES.to_string(), IMPACT.to_string()];
    if let Some(b) = base {
        write_json(&out.join("baseline_impact.json"), &serde_json::to_value(b)?)?;
        outputs.push("baseline_impact.json".into());
    }
    let mut m = Manifest::new("simulate").with_config(&cfg)?;
    m.inputs = config.map(name).into_iter().collect();
    m.outputs = outputs;
    m.details = json!({ "diagnostics": run.diagnostics, "queued_at_end": run.remaining });
    m.write(out)?;
    Ok(report)
}

fn detector(cmd: DetectorCommand, g: &GlobalArgs) -> Result<()> {
    match cmd {
        DetectorCommand::Train {
            run,
            out,
            rate,
            vehicles,
            samples_per_vehicle,
            epochs,
            batch_size,
            learning_rate,
            optimizer,
            noise_std,
        } => {
            let (cfg, store) = load_run(&run)?;
            let seed = g.seed.unwrap_or(cfg.seed);
            let mut setup = DetectorSetup::for_profile(cfg.profile, seed);
            if let Some(r) = rate {
                setup.observe.rate = r;
            }
            setup.observe.noise_std = noise_std;
            if let Some(n) = vehicles {
                setup.n_vehicles = n;
            }
            setup.samples_per_vehicle = samples_per_vehicle;
            setup.train.epochs = epochs;
            setup.train.batch_size = batch_size;
            setup.train.learning_rate = learning_rate;
            setup.train.optimizer = match optimizer {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::Sgd => Optimizer::Sgd,
            };
            setup.train.validate()?;
            fs::create_dir_all(&out)?;
            let trained = detect::train_from_store(&store, &setup)?;
            trained.model.save(&out.join(MODEL))?;
            let report = json!({
                "initial_msre": trained.report.initial_msre,
                "final_msre": trained.report.final_msre,
                "lmax": trained.model.lmax,
                "windows": trained.set.windows.len(),
                "skipped_short": trained.set.skipped_short,
            });
            write_json(&out.join("train_report.json"), &report)?;
            let mut m = Manifest::new("detector train");
            m.seed = Some(seed);
            m.inputs = vec![name(&run)];
            m.outputs = vec![MODEL.into(), "train_report.json".into()];
            m.details = json!({ "setup": setup, "run_config_hash": cfg.hash() });
            m.write(&out)
        }
        DetectorCommand::Score { model, run, out, benign, noise_std } => {
            let net = AutoencoderModel::load(&model)?;
            let (cfg, store) = load_run(&run)?;
            let seed = g.seed.unwrap_or(cfg.seed);
            let obs = ObserveConfig {
                rate: 1.0 / net.sample_interval,
                noise_std,
                window: Some((cfg.warmup, cfg.duration)),
                seed,
                ..ObserveConfig::default()
            };
            let traces = observe::extract_traces(&store, &obs)?;
            let selected = detect::balanced_selection(&traces, benign, seed);
            let (rows, skipped) = detect::score_traces(&net, &selected);
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("scores.csv"))?;
            detect::write_scores_csv(&rows, &mut w)?;
            w.flush()?;
            let rates = detect::score_rates(&rows)?;
            write_json(&out.join("rates.json"), &json!({ "rates": rates, "skipped_short": skipped }))?;
            if skipped > 0 {
                eprintln!("score: {skipped} traces shorter than one window were skipped");
            }
            let mut m = Manifest::new("detector score");
            m.seed = Some(seed);
            m.inputs = vec![name(&model), name(&run)];
            m.outputs = vec!["scores.csv".into(), "rates.json".into()];
            m.details = json!({ "benign_sample": benign, "noise_std": noise_std });
            m.write(&out)
        }
        DetectorCommand::Sweep { model, out, start_speed, run, a_min, a_max, a_steps, t_min, t_max, t_steps } => {
            let net = AutoencoderModel::load(&model)?;
            let v0 = match (start_speed, &run) {
                (Some(v), _) => v,
                (None, Some(r)) => metrics::impact_metrics(&load_run(r)?.1, None)?.mean_speed,
                (None, None) => return Err(Error::Config("sweep needs --start-speed or --run".into())),
            };
            let a_grid = detect::linspace(a_max, a_min, a_steps);
            let t_grid = detect::linspace(t_min, t_max, t_steps);
            let surface = detect::sweep_rda_losses(&net, v0, &a_grid, &t_grid, &SweepProfile::default())?;
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("loss_surface.csv"))?;
            surface.write_csv(&mut w)?;
            w.flush()?;
            let presets: Vec<Value> = AttackPreset::GRID
                .iter()
                .map(|p| {
                    let (t, a) = p.shape();
                    let s = detect::sweep_rda_losses(&net, v0, &[a], &[t], &SweepProfile::default())?;
                    Ok(json!({ "preset": p.name(), "t_attack": t, "a_attack": a, "max_loss": s.losses[0][0] }))
                })
                .collect::<Result<_>>()?;
            write_json(&out.join("presets.json"), &json!({ "start_speed": v0, "lmax": net.lmax, "presets": presets }))?;
            let mut m = Manifest::new("detector sweep");
            m.inputs = std::iter::once(name(&model)).chain(run.as_deref().map(name)).collect();
            m.outputs = vec!["loss_surface.csv".into(), "presets.json".into()];
            m.details = json!({ "start_speed": v0, "a_grid": a_grid, "t_grid": t_grid });
            m.write(&out)
        }
    }
}

fn load_bus(path: Option<&Path>) -> Result<BusSpec> {
    let spec = match path {
        Some(p) => serde_json::from_reader(open(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => BusSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn write_log(log: &CanLog, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    canbus::write_log_csv(log, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_log(path: &Path) -> Result<CanLog> {
    canbus::read_log_csv(open(path)?)
}

fn can(cmd: CanCommand, g: &GlobalArgs) -> Result<()> {
    match cmd {
        CanCommand::Generate { out, duration, train_fraction, bus } => {
            let spec = load_bus(bus.as_deref())?;
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::Config(format!("train fraction must lie in (0, 1) (got {train_fraction})")));
            }
            let seed = g.seed.unwrap_or(0);
            let log = canbus::generate_log(&spec, duration, seed)?;
            let (train, test) = log.split(train_fraction);
            fs::create_dir_all(&out)?;
            write_log(&train, &out.join("train.csv"))?;
            write_log(&test, &out.join("test.csv"))?;
            write_json(&out.join("bus.json"), &serde_json::to_value(&spec)?)?;
            let mut m = Manifest::new("canbus generate");
            m.seed = Some(seed);
            m.outputs = vec!["train.csv".into(), "test.csv".into(), "bus.json".into()];
            m.details = json!({ "duration": duration, "train_fraction": train_fraction, "messages": log.len() });
            m.write(&out)
        }
        CanCommand::Inject { log, out, mode, start, end, decel, rate, bus } => {
            let spec = load_bus(bus.as_deref())?;
            let clean = read_log(&log)?;
            let (s, e) = clean.span();
            let window = (start.unwrap_or(s + 0.25 * (e - s)), end.unwrap_or(s + 0.75 * (e - s)));
            let injection = match mode {
                InjectMode::Overwrite => canbus::Injection::Overwrite { decel },
                InjectMode::Flood => canbus::Injection::Flood { extra_rate: rate, decel },
            };
            let injected = injection.apply(&clean, &spec, window)?;
            fs::create_dir_all(&out)?;
            write_log(&injected, &out.join("test.csv"))?;
            let mut m = Manifest::new("canbus inject");
            m.inputs = vec![name(&log)];
            m.outputs = vec!["test.csv".into()];
            m.details = json!({ "injection": injection, "window": [window.0, window.1] });
            m.write(&out)
        }
        CanCommand::Detect { train, test, out, window, k } => {
            let train_log = read_log(&train)?;
            let test_log = read_log(&test)?;
            let tm = canbus::train_transition(&train_log)?;
            let fm = canbus::train_frequency(&train_log, window, k)?;
            let a = canbus::score_transition(&tm, &test_log);
            let b = canbus::score_frequency(&fm, &test_log);
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("predictions.csv"))?;
            canbus::write_predictions_csv(&test_log, &a, &b, &mut w)?;
            w.flush()?;
            let mut m = Manifest::new("canbus detect");
            m.inputs = vec![name(&train), name(&test)];
            m.outputs = vec!["predictions.csv".into()];
            m.details = json!({ "frequency_window": window, "k": k, "training_pairs": tm.pairs.len() });
            m.write(&out)
        }
        CanCommand::Evaluate { log, predictions, out } => {
            let truth = read_log(&log)?.truth();
            let (a, b) = canbus::read_predictions_csv(open(&predictions)?)?;
            let transition = canbus::evaluate(&a, &truth, None)?;
            let frequency = canbus::evaluate(&b, &truth, None)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("metrics.json"), &json!({ "transition": transition, "frequency": frequency }))?;
            let mut m = Manifest::new("canbus evaluate");
            m.inputs = vec![name(&log), name(&predictions)];
            m.outputs = vec!["metrics.json".into()];
            m.write(&out)
        }
    }
}

fn export_spacetime(run: &Path, channel: ChannelArg, model: Option<&Path>, out: &Path) -> Result<()> {
    let (cfg, store) = load_run(run)?;
    let (channel, scores) = match channel {
        ChannelArg::Speed => (Channel::Speed, None),
        ChannelArg::AnomalyScore => {
            let path = model.ok_or(Error::MissingScores)?;
            let net = AutoencoderModel::load(path)?;
            let obs = ObserveConfig { rate: 1.0 / net.sample_interval, seed: cfg.seed, ..ObserveConfig::default() };
            let traces = observe::extract_traces(&store, &obs)?;
            let series: Vec<_> = traces.iter().filter_map(|t| detect::score_series(&net, t).ok()).collect();
            (Channel::AnomalyScore, Some(series))
        }
    };
    let rows = engine::export_spacetime(&store, channel, scores.as_deref())?;
    fs::create_dir_all(out)?;
    let mut w = create(&out.join("spacetime.csv"))?;
    engine::write_spacetime_csv(&rows, channel, &mut w)?;
    w.flush()?;
    let mut m = Manifest::new("export-spacetime").with_config(&cfg)?;
    m.inputs = std::iter::once(name(run)).chain(model.map(name)).collect();
    m.outputs = vec!["spacetime.csv".into()];
    m.details = json!({ "channel": channel.column(), "rows": rows.len() });
    m.write(out)
}
