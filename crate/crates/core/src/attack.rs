//! Compromised-ACC controller and the random activation schedule for
//! random deceleration attacks (RDAs).

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{acc_accel, acc_free_accel, AccParams};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    /// Commanded deceleration while active, m/s² (≤ 0).
    pub a_attack: f64,
    /// Duration of one RDA, s.
    pub t_attack: f64,
    /// Mean dormant time between RDAs of one vehicle, s. `None` disables attacks.
    pub mean_interarrival: Option<f64>,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackPreset::Strong.params()
    }
}

impl AttackParams {
    pub fn validate(&self) -> Result<()> {
        let interarrival_ok = self.mean_interarrival.is_none_or(|m| m > 0.0);
        if self.a_attack <= 0.0 && self.t_attack >= 0.0 && interarrival_ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid attack parameters {self:?}")))
        }
    }

    pub fn with_shape(t_attack: f64, a_attack: f64) -> Self {
        AttackParams { a_attack, t_attack, mean_interarrival: Some(DEFAULT_MEAN_INTERARRIVAL) }
    }
}

pub const DEFAULT_MEAN_INTERARRIVAL: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackPreset {
    Weak,
    Medium,
    Strong,
    /// Long full-stop attack used for the space-time anomaly analysis.
    Extreme,
}

impl AttackPreset {
    pub const GRID: [AttackPreset; 3] = [AttackPreset::Weak, AttackPreset::Medium, AttackPreset::Strong];

    /// `(t_attack, a_attack)`.
    pub fn shape(self) -> (f64, f64) {
        match self {
            AttackPreset::Weak => (5.0, -0.25),
            AttackPreset::Medium => (7.5, -0.5),
            AttackPreset::Strong => (10.0, -1.0),
            AttackPreset::Extreme => (35.0, -1.5),
        }
    }

    pub fn params(self) -> AttackParams {
        let (t, a) = self.shape();
        AttackParams::with_shape(t, a)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackPreset::Weak => "weak",
            AttackPreset::Medium => "medium",
            AttackPreset::Strong => "strong",
            AttackPreset::Extreme => "extreme",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Weak, Self::Medium, Self::Strong, Self::Extreme].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackPhase {
    Dormant,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackState {
    pub phase: AttackPhase,
    /// Seconds left in the current RDA (0 while dormant).
    pub time_remaining: f64,
    /// Absolute time of the next activation, `INFINITY` when none remain.
    pub next_activation: f64,
}

impl AttackState {
    pub fn dormant(next_activation: f64) -> Self {
        AttackState { phase: AttackPhase::Dormant, time_remaining: 0.0, next_activation }
    }

    pub fn is_active(&self) -> bool {
        self.phase == AttackPhase::Active
    }
}

/// Compromised ACC: the nominal ACC law while dormant, `min(a_attack, f_acc)`
/// while active and moving, zero while active and stopped.
pub fn compromised_accel(
    acc: &AccParams,
    atk: &AttackParams,
    state: &AttackState,
    leader: Option<(f64, f64)>,
    speed: f64,
) -> f64 {
    let nominal = match leader {
        Some((gap, leader_speed)) => acc_accel(acc, gap, speed, leader_speed - speed),
        None => acc_free_accel(acc, speed),
    };
    overlay(atk, state, nominal, speed)
}

/// Attack overlay on an already evaluated nominal ACC command.
pub fn overlay(atk: &AttackParams, state: &AttackState, nominal: f64, speed: f64) -> f64 {
    match state.phase {
        AttackPhase::Dormant => nominal,
        AttackPhase::Active if speed > 0.0 => atk.a_attack.min(nominal),
        AttackPhase::Active => 0.0,
    }
}

/// Activation times of RDAs for one vehicle over `[start, horizon)`.
///
/// Dormant periods are exponential with mean `mean_interarrival`; the first
/// one starts at `start` and each later one at the end of the previous RDA,
/// so activations never overlap.
pub fn schedule(rng: &mut Rng, atk: &AttackParams, horizon: f64, start: f64) -> Vec<f64> {
    let Some(mean) = atk.mean_interarrival else {
        return Vec::new();
    };
    if atk.t_attack <= 0.0 || !mean.is_finite() || mean <= 0.0 || horizon <= start {
        return Vec::new();
    }
    let exp = Exp::new(1.0 / mean).expect("positive rate");
    let mut out = Vec::new();
    let mut t = start;
    loop {
        t += exp.sample(rng);
        if t >= horizon {
            break;
        }
        out.push(t);
        t += atk.t_attack;
    }
    out
}

/// Convenience wrapper that seeds its own stream.
pub fn schedule_seeded(seed: u64, atk: &AttackParams, horizon: f64, start: f64) -> Vec<f64> {
    schedule(&mut crate::rng::stream_rng(seed, 0), atk, horizon, start)
}

/// Runtime attack state machine of one compromised vehicle, stepped at
/// integer time steps so activations are exact.
#[derive(Debug, Clone)]
pub struct AttackTimeline {
    activation_steps: Vec<u64>,
    next: usize,
    duration_steps: u64,
    remaining_steps: u64,
    dt: f64,
}

impl AttackTimeline {
    pub fn new(activations: &[f64], t_attack: f64, dt: f64) -> Self {
        let duration_steps = (t_attack / dt).round() as u64;
        let activation_steps = activations.iter().map(|&t| (t / dt - 1e-9).ceil() as u64).collect();
        AttackTimeline { activation_steps, next: 0, duration_steps, remaining_steps: 0, dt }
    }

    /// Advance to step `n`, returning the state that applies during `[n, n+1)`.
    pub fn at_step(&mut self, n: u64) -> AttackState {
        if self.remaining_steps == 0 {
            while self.next < self.activation_steps.len() && self.activation_steps[self.next] < n {
                // activation fell before the vehicle existed
                self.next += 1;
            }
            if self.next < self.activation_steps.len() && self.activation_steps[self.next] == n {
                self.next += 1;
                self.remaining_steps = self.duration_steps;
            }
        }
        let next_activation = self.activation_steps.get(self.next).map_or(f64::INFINITY, |&s| s as f64 * self.dt);
        if self.remaining_steps > 0 {
            let state = AttackState {
                phase: AttackPhase::Active,
                time_remaining: self.remaining_steps as f64 * self.dt,
                next_activation,
            };
            self.remaining_steps -= 1;
            state
        } else {
            AttackState::dormant(next_activation)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn active() -> AttackState {
        AttackState { phase: AttackPhase::Active, time_remaining: 5.0, next_activation: f64::INFINITY }
    }

    #[test]
    fn dormant_matches_nominal_acc() {
        let acc = AccParams::default();
        let atk = AttackPreset::Strong.params();
        let st = AttackState::dormant(100.0);
        assert_eq!(compromised_accel(&acc, &atk, &st, Some((40.0, 18.0)), 20.0), 0.0);
        assert_eq!(compromised_accel(&acc, &atk, &st, Some((55.0, 21.0)), 20.0), acc_accel(&acc, 55.0, 20.0, 1.0));
        assert_eq!(compromised_accel(&acc, &atk, &st, None, 20.0), acc_free_accel(&acc, 20.0));
    }

    #[test]
    fn active_takes_the_minimum() {
        let atk = AttackParams { a_attack: -0.5, ..AttackPreset::Medium.params() };
        assert_eq!(overlay(&atk, &active(), 0.0, 20.0), -0.5);
        let atk = AttackParams { a_attack: -1.0, ..atk };
        assert_eq!(overlay(&atk, &active(), -2.0, 20.0), -2.0);
    }

    #[test]
    fn active_at_standstill_holds() {
        let atk = AttackPreset::Strong.params();
        assert_eq!(overlay(&atk, &active(), 1.2, 0.0), 0.0);
        assert_eq!(overlay(&atk, &active(), -1.2, 0.0), 0.0);
    }

    #[test]
    fn presets_match_grid_values() {
        assert_eq!(AttackPreset::Weak.shape(), (5.0, -0.25));
        assert_eq!(AttackPreset::Medium.shape(), (7.5, -0.5));
        assert_eq!(AttackPreset::Strong.shape(), (10.0, -1.0));
        for p in AttackPreset::GRID {
            p.params().validate().unwrap();
            assert_eq!(AttackPreset::parse(p.name()), Some(p));
        }
        assert!(AttackParams { a_attack: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn disabled_or_zero_length_gives_empty_schedule() {
        let mut rng = stream_rng(1, 1);
        let never = AttackParams { mean_interarrival: None, ..Default::default() };
        assert!(schedule(&mut rng, &never, 6800.0, 800.0).is_empty());
        let instant = AttackParams { t_attack: 0.0, ..Default::default() };
        assert!(schedule(&mut rng, &instant, 6800.0, 800.0).is_empty());
        let inf = AttackParams { mean_interarrival: Some(f64::INFINITY), ..Default::default() };
        assert!(schedule(&mut rng, &inf, 6800.0, 800.0).is_empty());
    }

    #[test]
    fn schedule_respects_warmup_and_never_overlaps() {
        let atk = AttackParams::with_shape(10.0, -1.0);
        for seed in 0..50 {
            let s = schedule(&mut stream_rng(seed, 3), &atk, 6800.0, 800.0);
            assert!(s.iter().all(|&t| (800.0..6800.0).contains(&t)));
            assert!(s.windows(2).all(|w| w[1] >= w[0] + atk.t_attack));
        }
    }

    #[test]
    fn schedule_is_deterministic() {
        let atk = AttackParams::with_shape(10.0, -1.0);
        let a = schedule(&mut stream_rng(9, 3), &atk, 6800.0, 800.0);
        let b = schedule(&mut stream_rng(9, 3), &atk, 6800.0, 800.0);
        assert_eq!(a, b);
        assert_eq!(schedule_seeded(4, &atk, 6800.0, 800.0), schedule_seeded(4, &atk, 6800.0, 800.0));
    }

    #[test]
    fn activation_count_matches_renewal_rate() {
        // 6000 s horizon, mean dormant 60 s, each RDA 10 s: ~6000/70 activations
        let atk = AttackParams::with_shape(10.0, -1.0);
        let runs = 1000;
        let total: usize = (0..runs).map(|seed| schedule(&mut stream_rng(seed, 11), &atk, 6800.0, 800.0).len()).sum();
        let mean = total as f64 / runs as f64;
        let expected = 6000.0 / 70.0;
        assert!((mean - expected).abs() / expected < 0.05, "mean {mean} vs {expected}");
    }

    #[test]
    fn timeline_activates_for_exact_duration() {
        let mut tl = AttackTimeline::new(&[1.0, 5.0], 2.0, 0.1);
        let flags: Vec<bool> = (0..100).map(|n| tl.at_step(n).is_active()).collect();
        let active: Vec<usize> = flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect();
        assert_eq!(active.len(), 40);
        assert_eq!(active[0], 10);
        assert_eq!(active[19], 29);
        assert_eq!(active[20], 50);
    }

    #[test]
    fn timeline_skips_activations_before_spawn() {
        let mut tl = AttackTimeline::new(&[1.0, 5.0], 2.0, 0.1);
        let active: usize = (30..100).filter(|&n| tl.at_step(n).is_active()).count();
        assert_eq!(active, 20);
    }
}
