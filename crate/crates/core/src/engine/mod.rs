//! Microscopic simulation: arrivals, lane changes, longitudinal control,
//! integration, exits and recording.

pub mod ring;
pub mod spacetime;
pub mod store;

use std::collections::VecDeque;

use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::attack::{self, AttackTimeline};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::models::{lane_change_decision, AccelChange, CarFollowing, LaneChangeInput, LaneDecision, TargetLane};
use crate::network::{build_network, Lane, LaneMap, NetworkSpec, Occupant, VehicleId, Zone};
use crate::rng::{stream, stream_rng, vehicle_rng, Rng};

pub use spacetime::{export_spacetime, write_spacetime_csv, Channel, ScoreSeries, SpacetimeRow};
pub use store::{Route, Sample, TrajectoryStore, VehicleKind, VehicleRecord};

/// Mean network speed below which the watchdog starts counting, m/s.
pub const GRIDLOCK_SPEED: f64 = 0.1;
/// How long the network may stay below [`GRIDLOCK_SPEED`] before aborting, s.
pub const GRIDLOCK_DURATION: f64 = 300.0;

/// Explicit Euler speed update with a ballistic position update. A vehicle
/// that would reverse stops where its speed reaches zero.
pub fn integrate(x: f64, v: f64, a: f64, dt: f64) -> (f64, f64) {
    let nv = v + a * dt;
    if nv < 0.0 {
        // a < 0 here
        (x - v * v / (2.0 * a), 0.0)
    } else {
        (x + v * dt + 0.5 * a * dt * dt, nv)
    }
}

#[derive(Debug, Clone)]
pub struct VehicleState {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub route: Route,
    pub lane: Lane,
    pub x: f64,
    pub speed: f64,
    /// Command applied over the last step.
    pub accel: f64,
    pub attack_active: bool,
    pub spawn_time: f64,
    cfm: CarFollowing,
    timeline: Option<AttackTimeline>,
    cooldown_until: f64,
}

impl VehicleState {
    pub fn car_following(&self) -> &CarFollowing {
        &self.cfm
    }
}

/// A vehicle placed by hand, bypassing the arrival process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSpec {
    pub kind: VehicleKind,
    pub route: Route,
    pub lane: Lane,
    pub x: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: u64,
    pub arrived: u64,
    pub spawned: u64,
    pub exited: u64,
    pub lane_changes: u64,
    pub collision_guard: u64,
    /// Hardest braking a lane change imposed on its new follower, m/s².
    pub max_induced_decel: f64,
    pub max_queue: usize,
}

#[derive(Debug)]
struct Pending {
    id: VehicleId,
    kind: VehicleKind,
    route: Route,
}

#[derive(Debug)]
struct Source {
    lane: Lane,
    rng: Rng,
    exp: Option<Exp<f64>>,
    next_arrival: f64,
    queue: VecDeque<Pending>,
}

impl Source {
    fn new(lane: Lane, veh_per_hour: f64, rng: Rng) -> Self {
        let exp = (veh_per_hour > 0.0).then(|| Exp::new(veh_per_hour / 3600.0).expect("positive rate"));
        let mut s = Source { lane, rng, exp, next_arrival: f64::INFINITY, queue: VecDeque::new() };
        if let Some(e) = s.exp {
            s.next_arrival = e.sample(&mut s.rng);
        }
        s
    }
}

pub struct RunOutput {
    pub store: TrajectoryStore,
    pub diagnostics: Diagnostics,
    /// Vehicles still on the network when the run ended.
    pub remaining: usize,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    net: NetworkSpec,
    map: LaneMap,
    /// Active vehicles, sorted by id.
    vehicles: Vec<VehicleState>,
    step: u64,
    next_id: VehicleId,
    sources: Vec<Source>,
    kind_rng: Rng,
    route_rng: Rng,
    store: TrajectoryStore,
    stride: u64,
    diag: Diagnostics,
    low_speed_since: Option<f64>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let net = build_network(&cfg.network)?;
        let map = LaneMap::new(&net, cfg.vehicle.length, cfg.vehicle.sensing_range);
        let mut sources = Vec::new();
        for i in 0..net.main_lanes() {
            let rng = stream_rng(cfg.seed, (stream::ARRIVALS << 16) | u64::from(i));
            sources.push(Source::new(Lane::Main(i), cfg.inflow, rng));
        }
        if net.onramp().is_some() {
            let rng = stream_rng(cfg.seed, (stream::ARRIVALS << 16) | 0xff);
            sources.push(Source::new(Lane::OnRamp, cfg.onramp_inflow, rng));
        }
        let store = TrajectoryStore::new(net.clone(), cfg.dt, cfg.record_interval, cfg.warmup, cfg.duration);
        Ok(Simulation {
            cfg: cfg.clone(),
            map,
            vehicles: Vec::new(),
            step: 0,
            next_id: 0,
            sources,
            kind_rng: stream_rng(cfg.seed, stream::KINDS),
            route_rng: stream_rng(cfg.seed, stream::ROUTES),
            store,
            stride: cfg.record_stride(),
            diag: Diagnostics::default(),
            low_speed_since: None,
            net,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn lane_map(&self) -> &LaneMap {
        &self.map
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diag
    }

    pub fn store(&self) -> &TrajectoryStore {
        &self.store
    }

    pub fn queued(&self) -> usize {
        self.sources.iter().map(|s| s.queue.len()).sum()
    }

    fn total_steps(&self) -> u64 {
        (self.cfg.duration / self.cfg.dt).round() as u64
    }

    fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok().map(|i| &self.vehicles[i])
    }

    fn car_following(&self, kind: VehicleKind) -> CarFollowing {
        match kind {
            VehicleKind::Human => CarFollowing::Idm(self.cfg.idm),
            VehicleKind::Acc | VehicleKind::CompromisedAcc => CarFollowing::Acc(self.cfg.acc),
        }
    }

    fn clamp_accel(&self, a: f64) -> f64 {
        a.clamp(-self.cfg.vehicle.emergency_decel, self.cfg.vehicle.max_accel)
    }

    /// Leader in `lane` as `(gap, speed)`, including the stopped obstacle at
    /// the end of the on-ramp.
    fn leader_in(&self, lane: Lane, x: f64, id: VehicleId) -> Option<(f64, f64)> {
        let leader = self.map.leader_at(lane, x, id).map(|n| (n.gap, n.speed));
        if lane != Lane::OnRamp {
            return leader;
        }
        let wall = self.net.zone_end(Zone::Onramp) - x;
        if wall > self.cfg.vehicle.sensing_range {
            return leader;
        }
        match leader {
            Some((g, _)) if g <= wall => leader,
            _ => Some((wall, 0.0)),
        }
    }

    fn accel_with(&self, cfm: &CarFollowing, speed: f64, leader: Option<(f64, f64)>) -> f64 {
        self.clamp_accel(cfm.accel(speed, leader))
    }

    fn make_vehicle(&mut self, id: VehicleId, kind: VehicleKind, route: Route, lane: Lane, x: f64, speed: f64) {
        let t = self.time();
        let timeline = kind.is_compromised().then(|| {
            let start = self.cfg.warmup.max(t);
            let acts =
                attack::schedule(&mut vehicle_rng(self.cfg.seed, id), &self.cfg.attack, self.cfg.duration, start);
            AttackTimeline::new(&acts, self.cfg.attack.t_attack, self.cfg.dt)
        });
        let v = VehicleState {
            id,
            kind,
            route,
            lane,
            x,
            speed,
            accel: 0.0,
            attack_active: false,
            spawn_time: t,
            cfm: self.car_following(kind),
            timeline,
            cooldown_until: f64::NEG_INFINITY,
        };
        let at = self.vehicles.partition_point(|o| o.id < id);
        self.vehicles.insert(at, v);
        self.map.insert(lane, Occupant { id, x, speed });
        self.store.insert(VehicleRecord { id, kind, route, spawn_time: t, exit_time: None, samples: Vec::new() });
        self.diag.spawned += 1;
    }

    /// Places a vehicle directly, outside the arrival process.
    pub fn insert_vehicle(&mut self, spec: VehicleSpec) -> Result<VehicleId> {
        let exists = match spec.lane {
            Lane::Main(i) => i < self.net.main_lanes(),
            Lane::OnRamp => self.net.onramp().is_some(),
            Lane::OffRamp => self.net.offramp().is_some(),
        };
        let zone = spec.lane.zone();
        if !exists || spec.x < self.net.zone_start(zone) || spec.x > self.net.zone_end(zone) {
            return Err(Error::Config(format!("cannot place a vehicle in {:?} at x = {}", spec.lane, spec.x)));
        }
        if !(spec.speed >= 0.0) {
            return Err(Error::Config(format!("speed must be >= 0 (got {})", spec.speed)));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.make_vehicle(id, spec.kind, spec.route, spec.lane, spec.x, spec.speed);
        Ok(id)
    }

    fn draw_arrival(&mut self) -> Pending {
        let id = self.next_id;
        self.next_id += 1;
        let u: f64 = self.kind_rng.random();
        let w: f64 = self.kind_rng.random();
        let kind = if u < self.cfg.acc_fraction {
            if w < self.cfg.compromise_fraction {
                VehicleKind::CompromisedAcc
            } else {
                VehicleKind::Acc
            }
        } else {
            VehicleKind::Human
        };
        let r: f64 = self.route_rng.random();
        let route = if self.net.offramp().is_some() && r < self.cfg.offramp_fraction {
            Route::ExitAtOfframp
        } else {
            Route::Mainline
        };
        self.diag.arrived += 1;
        Pending { id, kind, route }
    }

    fn process_arrivals(&mut self) {
        let t = self.time();
        for s in 0..self.sources.len() {
            while self.sources[s].next_arrival <= t + 1e-9 {
                let p = self.draw_arrival();
                let src = &mut self.sources[s];
                src.queue.push_back(p);
                let e = src.exp.expect("source with arrivals has a rate");
                src.next_arrival += e.sample(&mut src.rng);
            }
        }
        for s in 0..self.sources.len() {
            let lane = self.sources[s].lane;
            let Some(head) = self.sources[s].queue.front() else { continue };
            let cfm = self.car_following(head.kind);
            let x0 = self.net.zone_start(lane.zone());
            let desired = match cfm {
                CarFollowing::Idm(p) => p.v0,
                CarFollowing::Acc(p) => p.set_speed,
            }
            .min(self.net.speed_limit());
            let speed = match self.map.leader_at(lane, x0, VehicleId::MAX) {
                None => desired,
                Some(n) => {
                    // enter at the leader's speed once the headway allows it
                    let v = desired.min(n.speed);
                    if n.gap < cfm.jam_gap() + v * cfm.headway() {
                        continue;
                    }
                    v
                }
            };
            let p = self.sources[s].queue.pop_front().expect("non-empty queue");
            self.make_vehicle(p.id, p.kind, p.route, lane, x0, speed);
        }
        let q = self.queued();
        self.diag.max_queue = self.diag.max_queue.max(q);
    }

    /// Route-forced lane decision for a vehicle, if any. `Keep` pins it.
    fn mandatory(&self, v: &VehicleState) -> Option<LaneDecision> {
        match v.lane {
            Lane::OnRamp => Some(LaneDecision::Left),
            Lane::OffRamp => Some(LaneDecision::Keep),
            Lane::Main(k) => {
                if v.route != Route::ExitAtOfframp || self.net.offramp().is_none() {
                    return None;
                }
                let start = self.net.zone_start(Zone::Offramp);
                let end = self.net.zone_end(Zone::Offramp);
                if v.x < start - self.cfg.lane_change.exit_approach || v.x > end {
                    None
                } else if k > 0 || self.net.in_offramp_span(v.x) {
                    Some(LaneDecision::Right)
                } else {
                    Some(LaneDecision::Keep)
                }
            }
        }
    }

    fn target_lane(&self, v: &VehicleState, lane: Lane) -> TargetLane {
        let min_gap = self.cfg.vehicle.min_gap;
        let leader = self.map.leader_at(lane, v.x, v.id);
        let follower = self.map.follower_at(lane, v.x, v.id);
        let feasible = leader.is_none_or(|n| n.gap >= min_gap) && follower.is_none_or(|n| n.gap >= min_gap);
        let ego_accel = self.accel_with(&v.cfm, v.speed, self.leader_in(lane, v.x, v.id));
        let new_follower = follower.and_then(|n| {
            let f = self.vehicle(n.id)?;
            let before = self.map.leader_at(lane, f.x, f.id).map(|l| (l.gap, l.speed));
            Some(AccelChange {
                before: self.accel_with(&f.cfm, f.speed, before),
                after: self.accel_with(&f.cfm, f.speed, Some((n.gap, v.speed))),
            })
        });
        TargetLane { feasible, ego_accel, new_follower }
    }

    fn lane_change_target(&self, v: &VehicleState) -> Option<(Lane, Option<AccelChange>)> {
        if self.time() < v.cooldown_until {
            return None;
        }
        let mandatory = self.mandatory(v);
        if mandatory == Some(LaneDecision::Keep) {
            return None;
        }
        let len = self.cfg.vehicle.length;
        let current = self.leader_in(v.lane, v.x, v.id);
        let old_follower = self.map.follower_at(v.lane, v.x, v.id).and_then(|n| {
            let f = self.vehicle(n.id)?;
            let after =
                current.map(|(g, s)| (g + n.gap + len, s)).filter(|(g, _)| g + len <= self.cfg.vehicle.sensing_range);
            Some(AccelChange {
                before: self.accel_with(&f.cfm, f.speed, Some((n.gap, v.speed))),
                after: self.accel_with(&f.cfm, f.speed, after),
            })
        });
        let left_lane = self.net.left_of(v.lane, v.x);
        let right_lane =
            self.net.right_of(v.lane, v.x).filter(|&l| l != Lane::OffRamp || v.route == Route::ExitAtOfframp);
        let left = left_lane.map(|l| self.target_lane(v, l));
        let right = right_lane.map(|l| self.target_lane(v, l));
        let input = LaneChangeInput {
            ego_accel: self.accel_with(&v.cfm, v.speed, current),
            old_follower,
            left,
            right,
            mandatory,
        };
        match lane_change_decision(&input, &self.cfg.lane_change) {
            LaneDecision::Keep => None,
            LaneDecision::Left => Some((left_lane?, left?.new_follower)),
            LaneDecision::Right => Some((right_lane?, right?.new_follower)),
        }
    }

    fn lane_changes(&mut self) {
        let t = self.time();
        for i in 0..self.vehicles.len() {
            let Some((lane, follower)) = self.lane_change_target(&self.vehicles[i]) else { continue };
            if let Some(f) = follower {
                self.diag.max_induced_decel = self.diag.max_induced_decel.max(-f.after);
            }
            let v = &mut self.vehicles[i];
            v.lane = lane;
            v.cooldown_until = t + self.cfg.lane_change.cooldown;
            let occ = Occupant { id: v.id, x: v.x, speed: v.speed };
            self.map.remove(occ.id);
            self.map.insert(lane, occ);
            self.diag.lane_changes += 1;
        }
    }

    fn longitudinal(&mut self) {
        let dt = self.cfg.dt;
        let n = self.step;
        let accels: Vec<f64> =
            self.vehicles.iter().map(|v| v.cfm.accel(v.speed, self.leader_in(v.lane, v.x, v.id))).collect();
        for (v, nominal) in self.vehicles.iter_mut().zip(accels) {
            let mut a = nominal;
            v.attack_active = false;
            if let Some(tl) = v.timeline.as_mut() {
                let state = tl.at_step(n);
                v.attack_active = state.is_active();
                a = attack::overlay(&self.cfg.attack, &state, nominal, v.speed);
            }
            if let Some(cap) = v.cfm.speed_cap() {
                a = a.min((cap - v.speed) / dt);
            }
            v.accel = a.clamp(-self.cfg.vehicle.emergency_decel, self.cfg.vehicle.max_accel);
        }
    }

    fn record(&mut self) {
        if !self.step.is_multiple_of(self.stride) {
            return;
        }
        for v in &self.vehicles {
            let rec = self.store.get_mut(v.id).expect("spawned vehicles have a record");
            rec.samples.push(Sample {
                step: self.step,
                lane: v.lane,
                x: v.x,
                speed: v.speed,
                accel: v.accel,
                attack_active: v.attack_active,
            });
        }
    }

    fn integrate_all(&mut self) {
        let dt = self.cfg.dt;
        let len = self.cfg.vehicle.length;
        let min_gap = self.cfg.vehicle.min_gap;
        let mut next: Vec<(f64, f64)> = self.vehicles.iter().map(|v| integrate(v.x, v.speed, v.accel, dt)).collect();
        let idx = |id: VehicleId| self.vehicles.binary_search_by_key(&id, |v| v.id).expect("mapped vehicle");
        let mut lanes: Vec<Lane> = (0..self.net.main_lanes()).map(Lane::Main).collect();
        lanes.extend([Lane::OnRamp, Lane::OffRamp]);
        let ramp_end = self.net.zone_end(Zone::Onramp);
        for lane in lanes {
            let occ = self.map.occupants(lane);
            if occ.is_empty() {
                continue;
            }
            if lane == Lane::OnRamp {
                let head = idx(occ[occ.len() - 1].id);
                if next[head].0 > ramp_end {
                    next[head] = (ramp_end, 0.0);
                    self.diag.collision_guard += 1;
                }
            }
            for k in (0..occ.len() - 1).rev() {
                let f = idx(occ[k].id);
                let l = idx(occ[k + 1].id);
                let gap = next[l].0 - len - next[f].0;
                if gap <= 0.0 {
                    next[f] = (next[l].0 - len - min_gap, next[f].1.min(next[l].1));
                    self.diag.collision_guard += 1;
                }
            }
        }
        for (v, (x, s)) in self.vehicles.iter_mut().zip(next) {
            v.x = x;
            v.speed = s;
        }
    }

    fn exits(&mut self) {
        let t_exit = self.time() + self.cfg.dt;
        let main_end = self.net.mainline_length();
        let off_end = self.net.zone_end(Zone::Offramp);
        let store = &mut self.store;
        let mut exited = 0;
        self.vehicles.retain(|v| {
            let gone = match v.lane {
                Lane::Main(_) => v.x >= main_end,
                Lane::OffRamp => v.x >= off_end,
                Lane::OnRamp => false,
            };
            if gone {
                store.get_mut(v.id).expect("record").exit_time = Some(t_exit);
                exited += 1;
            }
            !gone
        });
        self.diag.exited += exited;
    }

    fn watchdog(&mut self) -> Result<()> {
        if self.vehicles.is_empty() {
            self.low_speed_since = None;
            return Ok(());
        }
        let mean = self.vehicles.iter().map(|v| v.speed).sum::<f64>() / self.vehicles.len() as f64;
        let now = self.time();
        if mean >= GRIDLOCK_SPEED {
            self.low_speed_since = None;
            return Ok(());
        }
        let since = *self.low_speed_since.get_or_insert(now);
        if now - since >= GRIDLOCK_DURATION {
            return Err(Error::Gridlock { time: now, duration: GRIDLOCK_DURATION, threshold: GRIDLOCK_SPEED });
        }
        Ok(())
    }

    /// Advances the world by one step of `dt`.
    pub fn step(&mut self) -> Result<()> {
        self.process_arrivals();
        self.lane_changes();
        self.longitudinal();
        self.record();
        self.integrate_all();
        self.exits();
        self.step += 1;
        self.diag.steps = self.step;
        self.map.rebuild(self.vehicles.iter().map(|v| (v.lane, Occupant { id: v.id, x: v.x, speed: v.speed })));
        self.watchdog()
    }

    /// Runs to the configured duration.
    pub fn run(mut self) -> Result<RunOutput> {
        let total = self.total_steps();
        while self.step < total {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> RunOutput {
        RunOutput { remaining: self.vehicles.len(), store: self.store, diagnostics: self.diag }
    }
}

/// Runs a scenario from start to end.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Simulation::new(cfg)?.run()
}
