//! The experiment grid: every (attack, congestion, compromise, seed) cell
//! plus one baseline per (congestion, seed). Cells live in directories
//! named by their config hash, so an interrupted grid resumes by skipping
//! cells whose results are already on disk.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{write_json, GlobalArgs, Manifest, IMPACT, TRAJECTORIES};
use crate::attack::AttackPreset;
use crate::config::{merge_json, Congestion, Profile, ScenarioConfig};
use crate::engine;
use crate::error::{Error, Result};
use crate::metrics::{self, ImpactReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub profile: Option<Profile>,
    pub attacks: Vec<AttackPreset>,
    pub congestion: Vec<Congestion>,
    pub compromise: Vec<f64>,
    pub acc_fraction: f64,
    pub seeds: Vec<u64>,
    /// Merged into every cell's configuration after the presets.
    pub overrides: Option<Value>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            profile: None,
            attacks: AttackPreset::GRID.to_vec(),
            congestion: Congestion::ALL.to_vec(),
            compromise: vec![0.05, 0.10, 0.15, 0.20],
            acc_fraction: 0.2,
            seeds: (1..=5).collect(),
            overrides: None,
        }
    }
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn cells(&self, default_profile: Profile) -> Result<Vec<Cell>> {
        if self.seeds.is_empty() || self.congestion.is_empty() {
            return Err(Error::Config("grid needs at least one seed and one congestion level".into()));
        }
        let profile = self.profile.unwrap_or(default_profile);
        let mut cells = Vec::new();
        for &congestion in &self.congestion {
            for &seed in &self.seeds {
                cells.push(self.cell(profile, None, congestion, 0.0, seed)?);
                for &attack in &self.attacks {
                    for &f in &self.compromise {
                        cells.push(self.cell(profile, Some(attack), congestion, f, seed)?);
                    }
                }
            }
        }
        Ok(cells)
    }

    fn cell(
        &self,
        profile: Profile,
        attack: Option<AttackPreset>,
        congestion: Congestion,
        f: f64,
        seed: u64,
    ) -> Result<Cell> {
        let mut cfg = ScenarioConfig::for_profile(profile).with_congestion(congestion);
        if let Some(a) = attack {
            cfg = cfg.with_attack(a);
        }
        cfg.compromise_fraction = f;
        cfg.acc_fraction = self.acc_fraction;
        cfg.seed = seed;
        if let Some(patch) = &self.overrides {
            let mut v = serde_json::to_value(&cfg)?;
            merge_json(&mut v, patch.clone());
            cfg = serde_json::from_value(v).map_err(|e| Error::Config(format!("grid overrides: {e}")))?;
        }
        cfg.validate()?;
        Ok(Cell { attack, congestion, compromise: f, seed, id: cfg.hash(), config: cfg })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// `None` for baselines.
    pub attack: Option<AttackPreset>,
    pub congestion: Congestion,
    pub compromise: f64,
    pub seed: u64,
    pub id: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done { report: ImpactReport, reused: bool },
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct GridSummary {
    pub total: usize,
    pub ran: usize,
    pub reused: usize,
    pub failed: usize,
}

pub const LEDGER: &str = "ledger.csv";
pub const LEDGER_HEADER: &str = "cell,kind,attack,congestion,compromise_fraction,seed,status,mean_speed_mps,speed_std_mps,throughput_vph,aac_usd_per_km_hr,error";

fn finished(dir: &Path, id: &str) -> Option<ImpactReport> {
    let m = Manifest::read(dir).ok()?;
    if m.status != "ok" || m.config_hash.as_deref() != Some(id) {
        return None;
    }
    serde_json::from_str(&fs::read_to_string(dir.join(IMPACT)).ok()?).ok()
}

fn run_cell(cell: &Cell, dir: &Path, keep: bool) -> Result<ImpactReport> {
    let out = engine::run_scenario(&cell.config)?;
    let report = metrics::impact_metrics(&out.store, None)?;
    fs::create_dir_all(dir)?;
    if keep {
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join(TRAJECTORIES))?);
        out.store.write_csv(&mut w)?;
        w.flush()?;
    }
    write_json(&dir.join(IMPACT), &serde_json::to_value(report)?)?;
    let mut m = Manifest::new("grid cell").with_config(&cell.config)?;
    m.outputs = if keep { vec![IMPACT.into(), TRAJECTORIES.into()] } else { vec![IMPACT.into()] };
    m.details = json!({ "diagnostics": out.diagnostics });
    // the manifest goes last: its presence marks the cell complete
    m.write(dir)?;
    Ok(report)
}

fn execute(cell: &Cell, root: &Path, keep: bool) -> CellOutcome {
    let dir = root.join("cells").join(&cell.id);
    if let Some(report) = finished(&dir, &cell.id) {
        return CellOutcome::Done { report, reused: true };
    }
    match run_cell(cell, &dir, keep) {
        Ok(report) => CellOutcome::Done { report, reused: false },
        Err(e) => {
            let _ = fs::create_dir_all(&dir);
            let mut m = Manifest::new("grid cell");
            m.status = "failed".into();
            if let Ok(mm) = m.clone().with_config(&cell.config) {
                m = mm;
            }
            m.details = json!({ "error": e.to_string() });
            let _ = m.write(&dir);
            CellOutcome::Failed(e.to_string())
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Ledger rows in cell order, with attack costs against the matching baseline.
pub fn ledger_rows(cells: &[Cell], outcomes: &[CellOutcome]) -> Result<Vec<String>> {
    let mut baselines = BTreeMap::new();
    for (c, o) in cells.iter().zip(outcomes) {
        if let (None, CellOutcome::Done { report, .. }) = (c.attack, o) {
            baselines.insert((c.congestion, c.seed), *report);
        }
    }
    let mut rows = Vec::with_capacity(cells.len());
    for (c, o) in cells.iter().zip(outcomes) {
        let kind = if c.attack.is_some() { "attack" } else { "baseline" };
        let attack = c.attack.map(|a| a.name()).unwrap_or("none");
        let head = format!("{},{kind},{attack},{},{},{}", c.id, c.congestion.name(), c.compromise, c.seed);
        rows.push(match o {
            CellOutcome::Done { report, .. } => {
                let aac = match (c.attack, baselines.get(&(c.congestion, c.seed))) {
                    (Some(_), Some(b)) => {
                        Some(metrics::aac(b.mean_speed, report.mean_speed, report.throughput, metrics::VALUE_OF_TIME)?)
                    }
                    _ => None,
                };
                format!("{head},ok,{},{},{},{},", report.mean_speed, report.speed_std, report.throughput, fmt_opt(aac))
            }
            CellOutcome::Failed(msg) => format!("{head},failed,,,,,\"{}\"", msg.replace('"', "'")),
        });
    }
    Ok(rows)
}

pub fn run_grid(spec: &GridSpec, out: &Path, g: &GlobalArgs, keep: bool) -> Result<GridSummary> {
    // `--seed` narrows the grid to that one seed
    let spec = match g.seed {
        Some(s) => &GridSpec { seeds: vec![s], ..spec.clone() },
        None => spec,
    };
    let cells = spec.cells(g.profile.into())?;
    fs::create_dir_all(out.join("cells"))?;
    let outcomes: Vec<CellOutcome> = cells.par_iter().map(|c| execute(c, out, keep)).collect();
    let rows = ledger_rows(&cells, &outcomes)?;
    let mut w = std::io::BufWriter::new(fs::File::create(out.join(LEDGER))?);
    writeln!(w, "{LEDGER_HEADER}")?;
    for r in &rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    let mut summary = GridSummary { total: cells.len(), ..GridSummary::default() };
    for o in &outcomes {
        match o {
            CellOutcome::Done { reused: true, .. } => summary.reused += 1,
            CellOutcome::Done { reused: false, .. } => summary.ran += 1,
            CellOutcome::Failed(_) => summary.failed += 1,
        }
    }
    let mut m = Manifest::new("grid");
    m.status = if summary.failed > 0 { "partial".into() } else { "ok".into() };
    m.outputs = vec![LEDGER.into()];
    m.details = json!({
        "grid": spec,
        "summary": summary,
        "cells": cells.iter().map(|c| &c.id).collect::<Vec<_>>(),
    });
    m.write(out)?;
    Ok(summary)
}
