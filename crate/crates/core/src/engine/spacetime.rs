//! Flattened (vehicle, time, position, value) rows for space-time plots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::store::TrajectoryStore;
use crate::error::{Error, Result};
use crate::network::{Lane, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Speed,
    AnomalyScore,
}

impl Channel {
    pub fn column(self) -> &'static str {
        match self {
            Channel::Speed => "speed_mps",
            Channel::AnomalyScore => "anomaly_score",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "speed" => Some(Channel::Speed),
            "anomaly_score" | "anomaly" => Some(Channel::AnomalyScore),
            _ => None,
        }
    }
}

/// Per-vehicle score time series (e.g. windowed reconstruction loss).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub vehicle_id: VehicleId,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeRow {
    pub vehicle_id: VehicleId,
    pub t: f64,
    pub position: f64,
    pub lane: Lane,
    pub value: f64,
}

fn lane_label(l: Lane) -> String {
    match l {
        Lane::Main(i) => i.to_string(),
        Lane::OnRamp => "onramp".into(),
        Lane::OffRamp => "offramp".into(),
    }
}

pub fn export_spacetime(
    store: &TrajectoryStore,
    channel: Channel,
    scores: Option<&[ScoreSeries]>,
) -> Result<Vec<SpacetimeRow>> {
    let mut rows = Vec::new();
    match channel {
        Channel::Speed => {
            for v in store.vehicles() {
                rows.extend(v.samples.iter().map(|s| SpacetimeRow {
                    vehicle_id: v.id,
                    t: store.time_of(s),
                    position: s.x,
                    lane: s.lane,
                    value: s.speed,
                }));
            }
        }
        Channel::AnomalyScore => {
            let scores = scores.ok_or(Error::MissingScores)?;
            for series in scores {
                if series.times.len() != series.values.len() {
                    return Err(Error::LengthMismatch { left: series.times.len(), right: series.values.len() });
                }
                let Some(rec) = store.get(series.vehicle_id) else { continue };
                for (&t, &value) in series.times.iter().zip(&series.values) {
                    let step = store.step_of(t);
                    if let Ok(i) = rec.samples.binary_search_by_key(&step, |s| s.step) {
                        let s = &rec.samples[i];
                        rows.push(SpacetimeRow {
                            vehicle_id: rec.id,
                            t: store.time_of(s),
                            position: s.x,
                            lane: s.lane,
                            value,
                        });
                    }
                }
            }
            rows.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.t.total_cmp(&b.t)));
        }
    }
    Ok(rows)
}

pub fn write_spacetime_csv<W: Write>(rows: &[SpacetimeRow], channel: Channel, mut w: W) -> Result<()> {
    writeln!(w, "vehicle_id,t,position_m,lane,{}", channel.column())?;
    for r in rows {
        writeln!(w, "{},{:.3},{},{},{}", r.vehicle_id, r.t, r.position, lane_label(r.lane), r.value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::store::{Route, Sample, VehicleKind, VehicleRecord};
    use crate::network::{build_network, NetworkConfig};

    fn store() -> TrajectoryStore {
        let net = build_network(&NetworkConfig::desk()).unwrap();
        let mut st = TrajectoryStore::new(net, 0.1, 0.1, 0.0, 10.0);
        let samples = (0..5)
            .map(|k| Sample {
                step: k,
                lane: Lane::Main(0),
                x: k as f64,
                speed: 10.0 + k as f64,
                accel: 0.0,
                attack_active: false,
            })
            .collect();
        st.insert(VehicleRecord {
            id: 7,
            kind: VehicleKind::Human,
            route: Route::Mainline,
            spawn_time: 0.0,
            exit_time: None,
            samples,
        });
        st
    }

    #[test]
    fn speed_channel_has_one_row_per_sample() {
        let rows = export_spacetime(&store(), Channel::Speed, None).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[3].value, 13.0);
        assert_eq!(rows[3].position, 3.0);
    }

    #[test]
    fn anomaly_channel_requires_scores() {
        assert!(matches!(export_spacetime(&store(), Channel::AnomalyScore, None), Err(Error::MissingScores)));
        let s = [ScoreSeries { vehicle_id: 7, times: vec![0.2, 0.4, 9.0], values: vec![1.0, 2.0, 3.0] }];
        let rows = export_spacetime(&store(), Channel::AnomalyScore, Some(&s)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].position, 4.0);
        let mut buf = Vec::new();
        write_spacetime_csv(&rows, Channel::AnomalyScore, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("vehicle_id,t,position_m,lane,anomaly_score\n7,0.200,2,0,1\n"));
    }
}
