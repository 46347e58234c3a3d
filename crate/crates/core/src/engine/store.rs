//! Time-indexed record of every vehicle, plus its CSV form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Lane, NetworkSpec, VehicleId, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Human,
    Acc,
    CompromisedAcc,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Human => "human",
            VehicleKind::Acc => "acc",
            VehicleKind::CompromisedAcc => "compromised_acc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "human" => Some(VehicleKind::Human),
            "acc" => Some(VehicleKind::Acc),
            "compromised_acc" => Some(VehicleKind::CompromisedAcc),
            _ => None,
        }
    }

    pub fn is_compromised(self) -> bool {
        self == VehicleKind::CompromisedAcc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Mainline,
    ExitAtOfframp,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Mainline => "mainline",
            Route::ExitAtOfframp => "exit_at_offramp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mainline" => Some(Route::Mainline),
            "exit_at_offramp" => Some(Route::ExitAtOfframp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Simulation step index; time is `step * dt`.
    pub step: u64,
    pub lane: Lane,
    /// Absolute position along the mainline axis, m.
    pub x: f64,
    pub speed: f64,
    pub accel: f64,
    pub attack_active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub route: Route,
    pub spawn_time: f64,
    pub exit_time: Option<f64>,
    pub samples: Vec<Sample>,
}

impl VehicleRecord {
    pub fn time(&self, sample: &Sample, dt: f64) -> f64 {
        sample.step as f64 * dt
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryStore {
    pub network: NetworkSpec,
    pub dt: f64,
    pub record_interval: f64,
    pub warmup: f64,
    pub duration: f64,
    vehicles: BTreeMap<VehicleId, VehicleRecord>,
}

pub const CSV_HEADER: &str = "vehicle_id,kind,t,zone,lane,offset_m,speed_mps,accel_mps2,attack_active";
pub const META_HEADER: &str = "vehicle_id,kind,route,spawn_time,exit_time";

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str, line: usize) -> Result<T> {
    field
        .ok_or_else(|| Error::Parse(format!("line {line}: missing column {name}")))?
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad value for {name}")))
}

impl TrajectoryStore {
    pub fn new(network: NetworkSpec, dt: f64, record_interval: f64, warmup: f64, duration: f64) -> Self {
        TrajectoryStore { network, dt, record_interval, warmup, duration, vehicles: BTreeMap::new() }
    }

    pub fn insert(&mut self, rec: VehicleRecord) {
        self.vehicles.insert(rec.id, rec);
    }

    pub fn get(&self, id: VehicleId) -> Option<&VehicleRecord> {
        self.vehicles.get(&id)
    }

    pub fn get_mut(&mut self, id: VehicleId) -> Option<&mut VehicleRecord> {
        self.vehicles.get_mut(&id)
    }

    /// Vehicles in id order.
    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleRecord> {
        self.vehicles.values()
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn sample_count(&self) -> usize {
        self.vehicles.values().map(|v| v.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn time_of(&self, s: &Sample) -> f64 {
        s.step as f64 * self.dt
    }

    pub fn step_of(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }

    /// Writes the trajectory table, rows ordered by `(vehicle_id, t)`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for v in self.vehicles.values() {
            for s in &v.samples {
                let pos = self.network.lane_position(s.lane, s.x);
                writeln!(
                    w,
                    "{},{},{:.3},{},{},{},{},{},{}",
                    v.id,
                    v.kind.as_str(),
                    self.time_of(s),
                    pos.zone.as_str(),
                    pos.lane_index,
                    pos.offset,
                    s.speed,
                    s.accel,
                    u8::from(s.attack_active)
                )?;
            }
        }
        Ok(())
    }

    /// Per-vehicle metadata table (route, spawn and exit times).
    pub fn write_meta_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{META_HEADER}")?;
        for v in self.vehicles.values() {
            let exit = v.exit_time.map(|t| format!("{t:.3}")).unwrap_or_default();
            writeln!(w, "{},{},{},{:.3},{}", v.id, v.kind.as_str(), v.route.as_str(), v.spawn_time, exit)?;
        }
        Ok(())
    }

    /// Reads a trajectory table written by [`write_csv`]. Without a metadata
    /// table, spawn time is the first sample and exit time is inferred from
    /// the last sample when it ends before the run does.
    pub fn read_csv<R: BufRead>(
        network: NetworkSpec,
        dt: f64,
        record_interval: f64,
        warmup: f64,
        duration: f64,
        rows: R,
        meta: Option<R>,
    ) -> Result<Self> {
        let mut store = TrajectoryStore::new(network, dt, record_interval, warmup, duration);
        let mut lines = rows.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Parse(format!("expected header `{CSV_HEADER}`"))),
        }
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let n = i + 1;
            let mut f = line.split(',');
            let id: VehicleId = parse_field(f.next(), "vehicle_id", n)?;
            let kind_s: String = parse_field(f.next(), "kind", n)?;
            let kind =
                VehicleKind::parse(&kind_s).ok_or_else(|| Error::Parse(format!("line {n}: unknown kind {kind_s}")))?;
            let t: f64 = parse_field(f.next(), "t", n)?;
            let zone_s: String = parse_field(f.next(), "zone", n)?;
            let zone = Zone::parse(&zone_s).ok_or_else(|| Error::Parse(format!("line {n}: unknown zone {zone_s}")))?;
            let lane_index: u8 = parse_field(f.next(), "lane", n)?;
            let offset: f64 = parse_field(f.next(), "offset_m", n)?;
            let speed: f64 = parse_field(f.next(), "speed_mps", n)?;
            let accel: f64 = parse_field(f.next(), "accel_mps2", n)?;
            let flag: u8 = parse_field(f.next(), "attack_active", n)?;
            let lane = match zone {
                Zone::Mainline => Lane::Main(lane_index),
                Zone::Onramp => Lane::OnRamp,
                Zone::Offramp => Lane::OffRamp,
            };
            let x = store.network.zone_start(zone) + offset;
            let sample = Sample { step: store.step_of(t), lane, x, speed, accel, attack_active: flag == 1 };
            let rec = store.vehicles.entry(id).or_insert_with(|| VehicleRecord {
                id,
                kind,
                route: Route::Mainline,
                spawn_time: t,
                exit_time: None,
                samples: Vec::new(),
            });
            rec.samples.push(sample);
        }
        if let Some(meta) = meta {
            let mut lines = meta.lines().enumerate();
            match lines.next() {
                Some((_, Ok(h))) if h.trim() == META_HEADER => {}
                _ => return Err(Error::Parse(format!("expected header `{META_HEADER}`"))),
            }
            for (i, line) in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let n = i + 1;
                let mut f = line.split(',');
                let id: VehicleId = parse_field(f.next(), "vehicle_id", n)?;
                let _kind: String = parse_field(f.next(), "kind", n)?;
                let route_s: String = parse_field(f.next(), "route", n)?;
                let spawn: f64 = parse_field(f.next(), "spawn_time", n)?;
                let exit_s = f.next().unwrap_or("").trim();
                if let Some(rec) = store.vehicles.get_mut(&id) {
                    rec.route = Route::parse(&route_s)
                        .ok_or_else(|| Error::Parse(format!("line {n}: unknown route {route_s}")))?;
                    rec.spawn_time = spawn;
                    rec.exit_time = if exit_s.is_empty() {
                        None
                    } else {
                        Some(exit_s.parse().map_err(|_| Error::Parse(format!("line {n}: bad exit_time")))?)
                    };
                }
            }
        } else {
            let end = duration - record_interval;
            for rec in store.vehicles.values_mut() {
                if let Some(last) = rec.samples.last() {
                    let t = last.step as f64 * dt;
                    if t < end - 1e-9 {
                        rec.exit_time = Some(t + record_interval);
                    }
                }
            }
        }
        Ok(store)
    }
}
