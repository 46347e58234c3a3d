//! Scenario configuration: profiles, congestion and attack presets, and the
//! JSON scenario document with per-run overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::attack::{AttackParams, AttackPreset};
use crate::error::{Error, Result};
use crate::models::{AccParams, IdmParams, LaneChangeParams};
use crate::network::{build_network, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub length: f64,
    pub sensing_range: f64,
    pub max_accel: f64,
    /// Magnitude of the hardest possible braking, m/s².
    pub emergency_decel: f64,
    /// Gap the collision guard restores, m.
    pub min_gap: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        VehicleConfig { length: 5.0, sensing_range: 120.0, max_accel: 2.6, emergency_decel: 6.0, min_gap: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Which preset family this configuration started from; selects the
    /// demand table used by `with_congestion`.
    #[serde(default)]
    pub profile: Profile,
    pub network: NetworkConfig,
    /// Total simulated time including warmup, s.
    pub duration: f64,
    pub warmup: f64,
    pub dt: f64,
    /// Spacing of trajectory samples, s (a multiple of `dt`).
    pub record_interval: f64,
    /// Mainline demand, veh/hr per lane.
    pub inflow: f64,
    /// On-ramp demand, veh/hr.
    pub onramp_inflow: f64,
    pub acc_fraction: f64,
    /// Fraction of ACC vehicles that are compromised.
    pub compromise_fraction: f64,
    pub offramp_fraction: f64,
    pub idm: IdmParams,
    pub acc: AccParams,
    pub lane_change: LaneChangeParams,
    pub attack: AttackParams,
    pub vehicle: VehicleConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Congestion {
    Light,
    Medium,
    High,
}

impl Congestion {
    pub const ALL: [Congestion; 3] = [Congestion::Light, Congestion::Medium, Congestion::High];

    /// `(mainline veh/hr/lane, on-ramp veh/hr)`. The longer four-lane
    /// corridor has more room to absorb merges, so it needs more demand to
    /// reach the same regime.
    pub fn demand(self, profile: Profile) -> (f64, f64) {
        match (profile, self) {
            (Profile::Desk, Congestion::Light) => (900.0, 250.0),
            (Profile::Desk, Congestion::Medium) => (1200.0, 350.0),
            (Profile::Desk, Congestion::High) => (1400.0, 500.0),
            (Profile::Paper, Congestion::Light) => (1100.0, 300.0),
            (Profile::Paper, Congestion::Medium) => (1350.0, 450.0),
            (Profile::Paper, Congestion::High) => (1500.0, 550.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Congestion::Light => "light",
            Congestion::Medium => "medium",
            Congestion::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl ScenarioConfig {
    /// 1 km, 2 lanes, 1200 s with 300 s warmup.
    pub fn desk() -> Self {
        let (inflow, onramp_inflow) = Congestion::Medium.demand(Profile::Desk);
        ScenarioConfig {
            profile: Profile::Desk,
            network: NetworkConfig::desk(),
            duration: 1200.0,
            warmup: 300.0,
            dt: 0.1,
            record_interval: 0.1,
            inflow,
            onramp_inflow,
            acc_fraction: 0.2,
            compromise_fraction: 0.0,
            offramp_fraction: 0.1,
            idm: IdmParams::default(),
            acc: AccParams::default(),
            lane_change: LaneChangeParams::default(),
            attack: AttackPreset::Strong.params(),
            vehicle: VehicleConfig::default(),
            seed: 1,
        }
    }

    /// 3 km, 4 lanes, 800 s warmup followed by 6000 s of attacks.
    pub fn paper() -> Self {
        let (inflow, onramp_inflow) = Congestion::Medium.demand(Profile::Paper);
        ScenarioConfig {
            profile: Profile::Paper,
            inflow,
            onramp_inflow,
            network: NetworkConfig::paper(),
            duration: 6800.0,
            warmup: 800.0,
            record_interval: 0.5,
            lane_change: LaneChangeParams { exit_approach: 800.0, ..LaneChangeParams::default() },
            ..Self::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn with_congestion(mut self, c: Congestion) -> Self {
        (self.inflow, self.onramp_inflow) = c.demand(self.profile);
        self
    }

    pub fn with_attack(mut self, preset: AttackPreset) -> Self {
        let (t, a) = preset.shape();
        self.attack.t_attack = t;
        self.attack.a_attack = a;
        self
    }

    /// Same scenario with every compromised vehicle benign.
    pub fn baseline(&self) -> Self {
        ScenarioConfig { compromise_fraction: 0.0, ..self.clone() }
    }

    pub fn record_stride(&self) -> u64 {
        (self.record_interval / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        build_network(&self.network)?;
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1] (got {v})")))
            }
        };
        frac("acc_fraction", self.acc_fraction)?;
        frac("compromise_fraction", self.compromise_fraction)?;
        frac("offramp_fraction", self.offramp_fraction)?;
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0 (got {})", self.dt)));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.duration) {
            return Err(Error::Config(format!(
                "warmup ({}) must lie in [0, duration = {})",
                self.warmup, self.duration
            )));
        }
        let stride = self.record_interval / self.dt;
        if !(stride >= 1.0 - 1e-9) || (stride - stride.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "record_interval ({}) must be a positive multiple of dt ({})",
                self.record_interval, self.dt
            )));
        }
        if self.inflow < 0.0 || self.onramp_inflow < 0.0 {
            return Err(Error::Config("inflows must be >= 0".into()));
        }
        let v = &self.vehicle;
        if !(v.length > 0.0 && v.sensing_range > v.length && v.max_accel > 0.0 && v.emergency_decel > 0.0)
            || !(v.min_gap > 0.0)
        {
            return Err(Error::Config(format!("invalid vehicle parameters {v:?}")));
        }
        self.idm.validate()?;
        self.acc.validate()?;
        self.lane_change.validate()?;
        self.attack.validate()?;
        Ok(())
    }

    /// Short stable hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// On-disk scenario document: a profile plus named presets plus free-form
/// overrides merged into the resolved configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub congestion: Option<Congestion>,
    #[serde(default)]
    pub attack: Option<AttackPreset>,
    #[serde(default)]
    pub compromise_fraction: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub overrides: Option<Value>,
}

/// Recursive JSON merge: objects merge key by key, anything else replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, default_profile: Profile) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::for_profile(self.profile.unwrap_or(default_profile));
        if let Some(c) = self.congestion {
            cfg = cfg.with_congestion(c);
        }
        if let Some(a) = self.attack {
            cfg = cfg.with_attack(a);
        }
        if let Some(f) = self.compromise_fraction {
            cfg.compromise_fraction = f;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(patch) = &self.overrides {
            let mut v = serde_json::to_value(&cfg)?;
            merge_json(&mut v, patch.clone());
            cfg = serde_json::from_value(v).map_err(|e| Error::Config(format!("overrides: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn profiles_validate() {
        ScenarioConfig::desk().validate().unwrap();
        ScenarioConfig::paper().validate().unwrap();
        assert_eq!(ScenarioConfig::paper().duration - ScenarioConfig::paper().warmup, 6000.0);
    }

    #[test]
    fn invalid_fractions_rejected() {
        let c = ScenarioConfig { acc_fraction: 1.5, ..ScenarioConfig::desk() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ScenarioConfig { warmup: 2000.0, ..ScenarioConfig::desk() };
        assert!(c.validate().is_err());
        let c = ScenarioConfig { record_interval: 0.25, ..ScenarioConfig::desk() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn presets_and_overrides_resolve() {
        let file = ScenarioFile::parse(
            r#"{"profile":"desk","congestion":"high","attack":"weak","compromise_fraction":0.2,
                "seed":7,"overrides":{"duration":600,"network":{"lane_count":3},"idm":{"a":1.0}}}"#,
        )
        .unwrap();
        let cfg = file.resolve(Profile::Paper).unwrap();
        assert_eq!(cfg.inflow, Congestion::High.demand(Profile::Desk).0);
        assert_eq!((cfg.attack.t_attack, cfg.attack.a_attack), (5.0, -0.25));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.duration, 600.0);
        assert_eq!(cfg.network.lane_count, 3);
        assert_eq!(cfg.network.mainline_length, 1000.0);
        assert_eq!(cfg.idm.a, 1.0);
        assert_eq!(cfg.idm.b, 2.0);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = ScenarioFile::parse(r#"{"profil":"desk"}"#).unwrap_err();
        assert!(err.to_string().contains("profil"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
        let file = ScenarioFile { overrides: Some(json!({"idm": {"alpha": 1}})), ..Default::default() };
        let err = file.resolve(Profile::Desk).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioConfig::desk();
        assert_eq!(a.hash(), ScenarioConfig::desk().hash());
        let b = ScenarioConfig { seed: 2, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn merge_replaces_scalars_and_nulls() {
        let mut v = json!({"a": {"b": 1, "c": 2}, "d": {"e": 1}});
        merge_json(&mut v, json!({"a": {"b": 5}, "d": null}));
        assert_eq!(v, json!({"a": {"b": 5, "c": 2}, "d": null}));
    }
}
