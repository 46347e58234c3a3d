//! Car-following models (IDM for human drivers, linear ACC) and the
//! MOBIL-style lane-change rule.
//!
//! Sign conventions differ between the two models and are spelled out in the
//! argument names: IDM takes the *approach rate* `v - v_leader`, ACC takes
//! the *range rate* `v_leader - v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    /// Maximum acceleration, m/s².
    pub a: f64,
    /// Comfortable deceleration, m/s².
    pub b: f64,
    pub delta: f64,
    /// Desired speed, m/s.
    pub v0: f64,
    /// Jam spacing, m.
    pub s0: f64,
    /// Desired time headway, s.
    pub time_headway: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams { a: 1.3, b: 2.0, delta: 4.0, v0: 30.0, s0: 2.0, time_headway: 1.5 }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.b > 0.0
            && self.v0 > 0.0
            && self.s0 > 0.0
            && self.time_headway >= 0.0
            && self.delta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid IDM parameters {self:?}")))
        }
    }

    /// Desired dynamic gap s*(v, Δv).
    pub fn desired_gap(&self, speed: f64, approach_rate: f64) -> f64 {
        self.s0 + speed * self.time_headway + (speed * approach_rate).max(0.0) / (2.0 * (self.a * self.b).sqrt())
    }

    /// Steady-state gap at speed `v` (closed form), for `0 <= v < v0`.
    pub fn equilibrium_gap(&self, speed: f64) -> f64 {
        self.desired_gap(speed, 0.0) / (1.0 - (speed / self.v0).powf(self.delta)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccParams {
    /// Gap gain, s⁻².
    pub k1: f64,
    /// Range-rate gain, s⁻¹.
    pub k2: f64,
    /// Desired time gap, s.
    pub time_gap: f64,
    /// Set speed, m/s.
    pub set_speed: f64,
    /// Free-road speed tracking gain, s⁻¹.
    pub free_gain: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        AccParams { k1: 0.1, k2: 0.5, time_gap: 1.5, set_speed: 30.0, free_gain: 0.4 }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k1 > 0.0 && self.k2 > 0.0 && self.time_gap > 0.0 && self.set_speed > 0.0 && self.free_gain > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid ACC parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChangeParams {
    pub politeness: f64,
    /// Minimum net advantage to change lanes, m/s².
    pub incentive_threshold: f64,
    /// Largest deceleration a change may impose on the new follower, m/s².
    pub safe_decel: f64,
    /// Minimum time between two changes of the same vehicle, s.
    pub cooldown: f64,
    /// Distance before the diverge point from which exiting vehicles move right, m.
    pub exit_approach: f64,
}

impl Default for LaneChangeParams {
    fn default() -> Self {
        LaneChangeParams {
            politeness: 0.3,
            incentive_threshold: 0.2,
            safe_decel: 4.0,
            cooldown: 3.0,
            exit_approach: 400.0,
        }
    }
}

impl LaneChangeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.politeness >= 0.0
            && self.incentive_threshold > 0.0
            && self.safe_decel > 0.0
            && self.cooldown >= 0.0
            && self.exit_approach >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid lane-change parameters {self:?}")))
        }
    }
}

/// Intelligent Driver Model acceleration.
pub fn idm_accel(p: &IdmParams, gap: f64, speed: f64, approach_rate: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::NonPositiveGap(gap));
    }
    let s_star = p.desired_gap(speed, approach_rate);
    Ok(p.a * (1.0 - (speed / p.v0).powf(p.delta) - (s_star / gap).powi(2)))
}

/// IDM with no leader (gap treated as unbounded).
pub fn idm_free_accel(p: &IdmParams, speed: f64) -> f64 {
    p.a * (1.0 - (speed / p.v0).powf(p.delta))
}

/// Linear ACC law `k1 (s - th v) + k2 Δv` with `Δv = v_leader - v`.
///
/// The set-speed cap is applied by the integrator, since it depends on the
/// time step.
pub fn acc_accel(p: &AccParams, gap: f64, speed: f64, range_rate: f64) -> f64 {
    p.k1 * (gap - p.time_gap * speed) + p.k2 * range_rate
}

/// Set-speed tracking when nothing is ahead.
pub fn acc_free_accel(p: &AccParams, speed: f64) -> f64 {
    p.free_gain * (p.set_speed - speed)
}

/// Smallest gap handed to IDM; the engine's collision guard keeps real gaps
/// above this.
pub const GAP_FLOOR: f64 = 1e-3;

/// Longitudinal controller of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarFollowing {
    Idm(IdmParams),
    Acc(AccParams),
}

impl CarFollowing {
    /// Acceleration given an optional `(gap, leader_speed)`.
    pub fn accel(&self, speed: f64, leader: Option<(f64, f64)>) -> f64 {
        match (self, leader) {
            (CarFollowing::Idm(p), Some((gap, lv))) => {
                // gap floor keeps this total; see GAP_FLOOR
                idm_accel(p, gap.max(GAP_FLOOR), speed, speed - lv).unwrap_or(-p.b)
            }
            (CarFollowing::Idm(p), None) => idm_free_accel(p, speed),
            (CarFollowing::Acc(p), Some((gap, lv))) => acc_accel(p, gap, speed, lv - speed),
            (CarFollowing::Acc(p), None) => acc_free_accel(p, speed),
        }
    }

    /// Speed the controller will not exceed, if any.
    pub fn speed_cap(&self) -> Option<f64> {
        match self {
            CarFollowing::Acc(p) => Some(p.set_speed),
            CarFollowing::Idm(_) => None,
        }
    }

    pub fn jam_gap(&self) -> f64 {
        match self {
            CarFollowing::Idm(p) => p.s0,
            CarFollowing::Acc(_) => 2.0,
        }
    }

    pub fn headway(&self) -> f64 {
        match self {
            CarFollowing::Idm(p) => p.time_headway,
            CarFollowing::Acc(p) => p.time_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneDecision {
    Keep,
    Left,
    Right,
}

/// Acceleration of a neighbouring vehicle before and after the change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelChange {
    pub before: f64,
    pub after: f64,
}

impl AccelChange {
    fn gain(&self) -> f64 {
        self.after - self.before
    }
}

/// Everything the rule needs about one adjacent lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetLane {
    /// False when the vehicle would overlap someone in that lane.
    pub feasible: bool,
    /// Ego acceleration if it were in the target lane.
    pub ego_accel: f64,
    pub new_follower: Option<AccelChange>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeInput {
    pub ego_accel: f64,
    pub old_follower: Option<AccelChange>,
    pub left: Option<TargetLane>,
    pub right: Option<TargetLane>,
    /// Route-forced direction (ramp merge, approaching the exit).
    pub mandatory: Option<LaneDecision>,
}

fn is_safe(t: &TargetLane, p: &LaneChangeParams) -> bool {
    t.feasible && t.ego_accel >= -p.safe_decel && t.new_follower.is_none_or(|f| f.after >= -p.safe_decel)
}

fn incentive(input: &LaneChangeInput, t: &TargetLane, p: &LaneChangeParams) -> f64 {
    let others = t.new_follower.map_or(0.0, |f| f.gain()) + input.old_follower.map_or(0.0, |f| f.gain());
    (t.ego_accel - input.ego_accel) + p.politeness * others
}

/// MOBIL-style decision. Safety vetoes everything; a mandatory direction
/// is taken whenever it is safe and the opposite direction is never taken.
/// Discretionary changes need `incentive > threshold`; ties go to keep,
/// then right.
pub fn lane_change_decision(input: &LaneChangeInput, p: &LaneChangeParams) -> LaneDecision {
    if let Some(dir) = input.mandatory {
        let target = match dir {
            LaneDecision::Left => input.left,
            LaneDecision::Right => input.right,
            LaneDecision::Keep => None,
        };
        return match target {
            Some(t) if is_safe(&t, p) => dir,
            _ => LaneDecision::Keep,
        };
    }
    let score = |t: Option<TargetLane>| {
        t.filter(|t| is_safe(t, p)).map(|t| incentive(input, &t, p)).filter(|&g| g > p.incentive_threshold)
    };
    match (score(input.left), score(input.right)) {
        (None, None) => LaneDecision::Keep,
        (Some(_), None) => LaneDecision::Left,
        (None, Some(_)) => LaneDecision::Right,
        (Some(l), Some(r)) => {
            if l > r {
                LaneDecision::Left
            } else {
                LaneDecision::Right
            }
        }
    }
}
