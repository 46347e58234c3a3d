//! Single-lane ring road of IDM vehicles, used to check how a braking
//! perturbation propagates through a platoon.

use serde::Serialize;

use crate::engine::integrate;
use crate::models::{idm_accel, IdmParams, GAP_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Dense,
    Light,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingConfig {
    pub vehicles: usize,
    /// Front-to-front spacing at equilibrium, m.
    pub spacing: f64,
    pub vehicle_length: f64,
    pub idm: IdmParams,
    pub dt: f64,
    pub horizon: f64,
    pub perturb_start: f64,
    /// Braking applied to vehicle 0, m/s² (positive).
    pub perturb_decel: f64,
    pub perturb_duration: f64,
}

impl RingConfig {
    pub fn preset(d: Density) -> Self {
        let spacing = match d {
            Density::Dense => 25.0,
            Density::Light => 120.0,
        };
        RingConfig {
            vehicles: 150,
            spacing,
            vehicle_length: 5.0,
            idm: IdmParams::default(),
            dt: 0.1,
            horizon: 150.0,
            perturb_start: 5.0,
            perturb_decel: 1.0,
            perturb_duration: 10.0,
        }
    }

    pub fn ring_length(&self) -> f64 {
        self.vehicles as f64 * self.spacing
    }
}

/// Speed at which the IDM equilibrium gap equals `gap`, by bisection.
pub fn equilibrium_speed(p: &IdmParams, gap: f64) -> f64 {
    if gap <= p.s0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, p.v0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p.equilibrium_gap(mid) < gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lowest speed one vehicle reached and where it happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dip {
    pub min_speed: f64,
    pub time: f64,
    /// Unwrapped odometer position at the minimum, m.
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingRun {
    pub initial_speed: f64,
    /// Speed removed from vehicle 0 by the perturbation.
    pub perturbation: f64,
    /// One entry per vehicle; vehicle `k` follows vehicle `k - 1`.
    pub dips: Vec<Dip>,
}

impl RingRun {
    /// Speed drop of vehicle `k` relative to the perturbation size.
    pub fn relative_amplitude(&self, k: usize) -> f64 {
        (self.initial_speed - self.dips[k].min_speed) / self.perturbation
    }
}

pub fn run_ring(cfg: &RingConfig) -> RingRun {
    let n = cfg.vehicles;
    let gap0 = cfg.spacing - cfg.vehicle_length;
    let v0 = equilibrium_speed(&cfg.idm, gap0);
    let ring = cfg.ring_length();
    let mut x: Vec<f64> = (0..n).map(|k| -(k as f64) * cfg.spacing).collect();
    let mut v = vec![v0; n];
    let mut dips: Vec<Dip> = x.iter().map(|&p| Dip { min_speed: v0, time: 0.0, position: p }).collect();
    let steps = (cfg.horizon / cfg.dt).round() as u64;
    let mut a = vec![0.0; n];
    for step in 0..steps {
        let t = step as f64 * cfg.dt;
        for k in 0..n {
            let (lx, lv) = if k == 0 { (x[n - 1] + ring, v[n - 1]) } else { (x[k - 1], v[k - 1]) };
            let gap = (lx - x[k] - cfg.vehicle_length).max(GAP_FLOOR);
            a[k] = idm_accel(&cfg.idm, gap, v[k], v[k] - lv).expect("gap floored");
        }
        if t >= cfg.perturb_start && t < cfg.perturb_start + cfg.perturb_duration {
            a[0] = a[0].min(-cfg.perturb_decel);
        }
        for k in 0..n {
            (x[k], v[k]) = integrate(x[k], v[k], a[k], cfg.dt);
            if v[k] < dips[k].min_speed {
                dips[k] = Dip { min_speed: v[k], time: t + cfg.dt, position: x[k] };
            }
        }
    }
    RingRun { initial_speed: v0, perturbation: cfg.perturb_decel * cfg.perturb_duration, dips }
}
