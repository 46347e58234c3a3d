//! Freeway geometry and lane-occupancy queries.
//!
//! The mainline is a straight multi-lane segment. Ramps are single-lane
//! auxiliary lanes running alongside the rightmost mainline lane: the
//! on-ramp spans `[merge_position - ramp_length, merge_position]` and the
//! off-ramp spans `[diverge_position, diverge_position + ramp_length]`.
//! All positions are measured along the mainline axis ("absolute" metres).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VehicleId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnrampConfig {
    pub merge_position: f64,
    pub ramp_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfframpConfig {
    pub diverge_position: f64,
    pub ramp_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub mainline_length: f64,
    pub lane_count: u8,
    #[serde(default)]
    pub onramp: Option<OnrampConfig>,
    #[serde(default)]
    pub offramp: Option<OfframpConfig>,
    pub speed_limit: f64,
}

impl NetworkConfig {
    /// 3 km, 4 lanes, both ramps.
    pub fn paper() -> Self {
        NetworkConfig {
            mainline_length: 3000.0,
            lane_count: 4,
            onramp: Some(OnrampConfig { merge_position: 800.0, ramp_length: 250.0 }),
            offramp: Some(OfframpConfig { diverge_position: 2200.0, ramp_length: 250.0 }),
            speed_limit: 30.0,
        }
    }

    /// 1 km, 2 lanes, both ramps.
    pub fn desk() -> Self {
        NetworkConfig {
            mainline_length: 1000.0,
            lane_count: 2,
            onramp: Some(OnrampConfig { merge_position: 350.0, ramp_length: 150.0 }),
            offramp: Some(OfframpConfig { diverge_position: 700.0, ramp_length: 150.0 }),
            speed_limit: 30.0,
        }
    }

    pub fn single_lane(length: f64) -> Self {
        NetworkConfig { mainline_length: length, lane_count: 1, onramp: None, offramp: None, speed_limit: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Mainline,
    Onramp,
    Offramp,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Mainline => "mainline",
            Zone::Onramp => "onramp",
            Zone::Offramp => "offramp",
        }
    }

    pub fn parse(s: &str) -> Option<Zone> {
        match s {
            "mainline" => Some(Zone::Mainline),
            "onramp" => Some(Zone::Onramp),
            "offramp" => Some(Zone::Offramp),
            _ => None,
        }
    }
}

/// A physical lane. `Main(0)` is the rightmost mainline lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lane {
    Main(u8),
    OnRamp,
    OffRamp,
}

impl Lane {
    pub fn zone(self) -> Zone {
        match self {
            Lane::Main(_) => Zone::Mainline,
            Lane::OnRamp => Zone::Onramp,
            Lane::OffRamp => Zone::Offramp,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Lane::Main(i) => i,
            Lane::OnRamp | Lane::OffRamp => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePosition {
    pub zone: Zone,
    pub lane_index: u8,
    pub offset: f64,
}

/// Validated freeway geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    config: NetworkConfig,
}

pub fn build_network(config: &NetworkConfig) -> Result<NetworkSpec> {
    let c = config;
    let fail = |msg: String| Err(Error::Geometry(msg));
    if !(c.mainline_length > 0.0) || !c.mainline_length.is_finite() {
        return fail(format!("mainline_length must be > 0 (got {})", c.mainline_length));
    }
    if c.lane_count < 1 {
        return fail("lane_count must be >= 1".into());
    }
    if !(c.speed_limit > 0.0) {
        return fail(format!("speed_limit must be > 0 (got {})", c.speed_limit));
    }
    if let Some(on) = c.onramp {
        if !(on.ramp_length > 0.0) {
            return fail(format!("onramp ramp_length must be > 0 (got {})", on.ramp_length));
        }
        if !(on.merge_position > 0.0 && on.merge_position < c.mainline_length) {
            return fail(format!("merge_position must lie in (0, mainline_length) (got {})", on.merge_position));
        }
        if on.merge_position - on.ramp_length < 0.0 {
            return fail(format!(
                "onramp must start at or after the mainline origin (merge_position {} - ramp_length {})",
                on.merge_position, on.ramp_length
            ));
        }
    }
    if let Some(off) = c.offramp {
        if !(off.ramp_length > 0.0) {
            return fail(format!("offramp ramp_length must be > 0 (got {})", off.ramp_length));
        }
        if !(off.diverge_position > 0.0 && off.diverge_position < c.mainline_length) {
            return fail(format!("diverge_position must lie in (0, mainline_length) (got {})", off.diverge_position));
        }
        if off.diverge_position + off.ramp_length > c.mainline_length {
            return fail(format!(
                "offramp must end before the mainline end (diverge_position {} + ramp_length {} > {})",
                off.diverge_position, off.ramp_length, c.mainline_length
            ));
        }
    }
    if let (Some(on), Some(off)) = (c.onramp, c.offramp) {
        if on.merge_position >= off.diverge_position {
            return fail(format!(
                "merge_position ({}) must be < diverge_position ({})",
                on.merge_position, off.diverge_position
            ));
        }
    }
    Ok(NetworkSpec { config: config.clone() })
}

impl NetworkSpec {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn mainline_length(&self) -> f64 {
        self.config.mainline_length
    }

    pub fn main_lanes(&self) -> u8 {
        self.config.lane_count
    }

    pub fn speed_limit(&self) -> f64 {
        self.config.speed_limit
    }

    pub fn onramp(&self) -> Option<OnrampConfig> {
        self.config.onramp
    }

    pub fn offramp(&self) -> Option<OfframpConfig> {
        self.config.offramp
    }

    pub fn lane_count(&self, zone: Zone) -> u8 {
        match zone {
            Zone::Mainline => self.config.lane_count,
            Zone::Onramp => u8::from(self.config.onramp.is_some()),
            Zone::Offramp => u8::from(self.config.offramp.is_some()),
        }
    }

    /// Absolute coordinate of the zone's start.
    pub fn zone_start(&self, zone: Zone) -> f64 {
        match zone {
            Zone::Mainline => 0.0,
            Zone::Onramp => self.config.onramp.map(|o| o.merge_position - o.ramp_length).unwrap_or(0.0),
            Zone::Offramp => self.config.offramp.map(|o| o.diverge_position).unwrap_or(0.0),
        }
    }

    pub fn zone_length(&self, zone: Zone) -> f64 {
        match zone {
            Zone::Mainline => self.config.mainline_length,
            Zone::Onramp => self.config.onramp.map(|o| o.ramp_length).unwrap_or(0.0),
            Zone::Offramp => self.config.offramp.map(|o| o.ramp_length).unwrap_or(0.0),
        }
    }

    /// Absolute coordinate where a zone ends (vehicles leave or must merge there).
    pub fn zone_end(&self, zone: Zone) -> f64 {
        self.zone_start(zone) + self.zone_length(zone)
    }

    pub fn lane_position(&self, lane: Lane, x: f64) -> LanePosition {
        let zone = lane.zone();
        LanePosition { zone, lane_index: lane.index(), offset: x - self.zone_start(zone) }
    }

    pub fn absolute(&self, pos: &LanePosition) -> f64 {
        self.zone_start(pos.zone) + pos.offset
    }

    /// Lane index space used for dense per-lane storage: mainline lanes,
    /// then on-ramp, then off-ramp.
    pub fn lane_slots(&self) -> usize {
        self.config.lane_count as usize + 2
    }

    pub fn slot(&self, lane: Lane) -> usize {
        match lane {
            Lane::Main(i) => i as usize,
            Lane::OnRamp => self.config.lane_count as usize,
            Lane::OffRamp => self.config.lane_count as usize + 1,
        }
    }

    /// Lane to the left, if it exists at absolute position `x`.
    pub fn left_of(&self, lane: Lane, x: f64) -> Option<Lane> {
        match lane {
            Lane::Main(i) if i + 1 < self.config.lane_count => Some(Lane::Main(i + 1)),
            Lane::Main(_) => None,
            Lane::OnRamp => self.in_onramp_span(x).then_some(Lane::Main(0)),
            Lane::OffRamp => None,
        }
    }

    /// Lane to the right at `x`. Ramps are only reachable from `Main(0)`
    /// where their span overlaps `x`.
    pub fn right_of(&self, lane: Lane, x: f64) -> Option<Lane> {
        match lane {
            Lane::Main(i) if i > 0 => Some(Lane::Main(i - 1)),
            Lane::Main(_) => {
                if self.in_offramp_span(x) {
                    Some(Lane::OffRamp)
                } else {
                    None
                }
            }
            Lane::OnRamp | Lane::OffRamp => None,
        }
    }

    pub fn in_onramp_span(&self, x: f64) -> bool {
        self.config.onramp.is_some() && x >= self.zone_start(Zone::Onramp) && x <= self.zone_end(Zone::Onramp)
    }

    pub fn in_offramp_span(&self, x: f64) -> bool {
        self.config.offramp.is_some() && x >= self.zone_start(Zone::Offramp) && x <= self.zone_end(Zone::Offramp)
    }
}

/// Which lane a neighbour query looks at, relative to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneSelector {
    Current,
    Left,
    Right,
    Explicit(Lane),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupant {
    pub id: VehicleId,
    /// Front-bumper absolute position.
    pub x: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: VehicleId,
    /// Bumper-to-bumper distance.
    pub gap: f64,
    pub speed: f64,
}

/// Per-lane occupancy, each lane sorted by position (upstream first).
#[derive(Debug, Clone)]
pub struct LaneMap {
    lanes: Vec<Vec<Occupant>>,
    index: std::collections::HashMap<VehicleId, Lane>,
    vehicle_length: f64,
    sensing_range: f64,
}

fn occupant_order(a: &Occupant, b: &Occupant) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(b.id.cmp(&a.id))
}

impl LaneMap {
    pub fn new(net: &NetworkSpec, vehicle_length: f64, sensing_range: f64) -> Self {
        LaneMap { lanes: vec![Vec::new(); net.lane_slots()], index: Default::default(), vehicle_length, sensing_range }
    }

    pub fn vehicle_length(&self) -> f64 {
        self.vehicle_length
    }

    pub fn sensing_range(&self) -> f64 {
        self.sensing_range
    }

    pub fn clear(&mut self) {
        self.lanes.iter_mut().for_each(Vec::clear);
        self.index.clear();
    }

    fn slot(&self, lane: Lane) -> usize {
        let mains = self.lanes.len() - 2;
        match lane {
            Lane::Main(i) => i as usize,
            Lane::OnRamp => mains,
            Lane::OffRamp => mains + 1,
        }
    }

    /// Replaces the whole map in one pass.
    pub fn rebuild(&mut self, items: impl IntoIterator<Item = (Lane, Occupant)>) {
        self.clear();
        for (lane, occ) in items {
            let slot = self.slot(lane);
            self.lanes[slot].push(occ);
            self.index.insert(occ.id, lane);
        }
        for v in &mut self.lanes {
            v.sort_by(occupant_order);
        }
    }

    pub fn insert(&mut self, lane: Lane, occ: Occupant) {
        let slot = self.slot(lane);
        let v = &mut self.lanes[slot];
        let at = v.partition_point(|o| occupant_order(o, &occ).is_lt());
        v.insert(at, occ);
        self.index.insert(occ.id, lane);
    }

    pub fn remove(&mut self, id: VehicleId) -> Option<(Lane, Occupant)> {
        let lane = self.index.remove(&id)?;
        let slot = self.slot(lane);
        let v = &mut self.lanes[slot];
        let at = v.iter().position(|o| o.id == id)?;
        Some((lane, v.remove(at)))
    }

    pub fn lane_of(&self, id: VehicleId) -> Option<Lane> {
        self.index.get(&id).copied()
    }

    pub fn occupants(&self, lane: Lane) -> &[Occupant] {
        &self.lanes[self.slot(lane)]
    }

    pub fn get(&self, id: VehicleId) -> Option<(Lane, Occupant)> {
        let lane = self.lane_of(id)?;
        let occ = *self.occupants(lane).iter().find(|o| o.id == id)?;
        Some((lane, occ))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Nearest vehicle strictly downstream of `x` in `lane`, within sensing range.
    pub fn leader_at(&self, lane: Lane, x: f64, exclude: VehicleId) -> Option<Neighbor> {
        let occ = self.occupants(lane);
        let start = occ.partition_point(|o| o.x < x);
        occ[start..]
            .iter()
            .find(|o| o.id != exclude && (o.x > x || (o.x == x && o.id < exclude)))
            .map(|o| Neighbor { id: o.id, gap: o.x - x - self.vehicle_length, speed: o.speed })
            .filter(|n| n.gap + self.vehicle_length <= self.sensing_range)
    }

    /// Nearest vehicle strictly upstream of `x` in `lane`, within sensing range
    /// of that follower.
    pub fn follower_at(&self, lane: Lane, x: f64, exclude: VehicleId) -> Option<Neighbor> {
        let occ = self.occupants(lane);
        let end = occ.partition_point(|o| o.x <= x);
        occ[..end]
            .iter()
            .rev()
            .find(|o| o.id != exclude && (o.x < x || (o.x == x && o.id > exclude)))
            .map(|o| Neighbor { id: o.id, gap: x - o.x - self.vehicle_length, speed: o.speed })
            .filter(|n| n.gap + self.vehicle_length <= self.sensing_range)
    }
}

fn resolve_lane(net: &NetworkSpec, lane: Lane, x: f64, selector: LaneSelector) -> Option<Lane> {
    match selector {
        LaneSelector::Current => Some(lane),
        LaneSelector::Left => net.left_of(lane, x),
        LaneSelector::Right => net.right_of(lane, x),
        LaneSelector::Explicit(l) => Some(l),
    }
}

/// Leader of `vehicle` in the selected lane: nearest downstream vehicle with
/// its bumper-to-bumper gap and speed. `None` when the lane does not exist
/// or nothing is within sensing range.
pub fn leader_of(
    net: &NetworkSpec,
    map: &LaneMap,
    vehicle: VehicleId,
    selector: LaneSelector,
) -> Result<Option<Neighbor>> {
    let (lane, occ) = map.get(vehicle).ok_or(Error::UnknownVehicle(vehicle))?;
    Ok(resolve_lane(net, lane, occ.x, selector).and_then(|l| map.leader_at(l, occ.x, vehicle)))
}

/// Follower of `vehicle` in the selected lane.
pub fn follower_of(
    net: &NetworkSpec,
    map: &LaneMap,
    vehicle: VehicleId,
    selector: LaneSelector,
) -> Result<Option<Neighbor>> {
    let (lane, occ) = map.get(vehicle).ok_or(Error::UnknownVehicle(vehicle))?;
    Ok(resolve_lane(net, lane, occ.x, selector).and_then(|l| map.follower_at(l, occ.x, vehicle)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single() -> NetworkSpec {
        build_network(&NetworkConfig::single_lane(1000.0)).unwrap()
    }

    fn occ(id: VehicleId, x: f64) -> Occupant {
        Occupant { id, x, speed: 20.0 + id as f64 }
    }

    #[test]
    fn paper_geometry_is_valid() {
        let net = build_network(&NetworkConfig {
            mainline_length: 3000.0,
            lane_count: 4,
            onramp: Some(OnrampConfig { merge_position: 800.0, ramp_length: 200.0 }),
            offramp: Some(OfframpConfig { diverge_position: 2200.0, ramp_length: 200.0 }),
            speed_limit: 30.0,
        })
        .unwrap();
        assert_eq!(net.main_lanes(), 4);
        assert_eq!(net.zone_start(Zone::Onramp), 600.0);
        assert_eq!(net.zone_end(Zone::Offramp), 2400.0);
        build_network(&NetworkConfig::paper()).unwrap();
        build_network(&NetworkConfig::desk()).unwrap();
    }

    #[test]
    fn minimal_single_lane_is_valid() {
        let net = single();
        assert_eq!(net.lane_count(Zone::Mainline), 1);
        assert_eq!(net.lane_count(Zone::Onramp), 0);
    }

    #[test]
    fn merge_after_diverge_is_rejected() {
        let err = build_network(&NetworkConfig {
            mainline_length: 3000.0,
            lane_count: 4,
            onramp: Some(OnrampConfig { merge_position: 2500.0, ramp_length: 200.0 }),
            offramp: Some(OfframpConfig { diverge_position: 500.0, ramp_length: 200.0 }),
            speed_limit: 30.0,
        })
        .unwrap_err();
        assert!(err.to_string().contains("merge_position"), "{err}");
    }

    #[test]
    fn degenerate_values_are_rejected() {
        let mut c = NetworkConfig::single_lane(0.0);
        assert!(build_network(&c).is_err());
        c.mainline_length = 100.0;
        c.lane_count = 0;
        assert!(build_network(&c).is_err());
        let mut d = NetworkConfig::desk();
        d.offramp.as_mut().unwrap().ramp_length = 0.0;
        assert!(build_network(&d).is_err());
    }

    #[test]
    fn leader_gap_accounts_for_length() {
        let net = single();
        let mut map = LaneMap::new(&net, 5.0, 120.0);
        map.insert(Lane::Main(0), occ(1, 100.0));
        map.insert(Lane::Main(0), occ(2, 130.0));
        let l = leader_of(&net, &map, 1, LaneSelector::Current).unwrap().unwrap();
        assert_eq!(l.id, 2);
        assert_eq!(l.gap, 25.0);
        assert!(leader_of(&net, &map, 2, LaneSelector::Current).unwrap().is_none());
    }

    #[test]
    fn nearest_of_two_candidates_wins() {
        let net = single();
        let mut map = LaneMap::new(&net, 5.0, 120.0);
        map.insert(Lane::Main(0), occ(3, 160.0));
        map.insert(Lane::Main(0), occ(1, 100.0));
        map.insert(Lane::Main(0), occ(2, 130.0));
        let l = leader_of(&net, &map, 1, LaneSelector::Current).unwrap().unwrap();
        assert_eq!(l.id, 2);
    }

    #[test]
    fn leader_beyond_sensing_range_is_absent() {
        let net = single();
        let mut map = LaneMap::new(&net, 5.0, 120.0);
        map.insert(Lane::Main(0), occ(1, 100.0));
        map.insert(Lane::Main(0), occ(2, 230.0));
        assert!(leader_of(&net, &map, 1, LaneSelector::Current).unwrap().is_none());
    }

    #[test]
    fn unknown_vehicle_errors() {
        let net = single();
        let map = LaneMap::new(&net, 5.0, 120.0);
        assert!(matches!(leader_of(&net, &map, 7, LaneSelector::Current), Err(Error::UnknownVehicle(7))));
    }

    #[test]
    fn ramps_only_adjacent_within_span() {
        let net = build_network(&NetworkConfig::desk()).unwrap();
        assert_eq!(net.left_of(Lane::OnRamp, 300.0), Some(Lane::Main(0)));
        assert_eq!(net.right_of(Lane::Main(0), 300.0), None);
        assert_eq!(net.right_of(Lane::Main(0), 750.0), Some(Lane::OffRamp));
        assert_eq!(net.right_of(Lane::Main(1), 750.0), Some(Lane::Main(0)));
        assert_eq!(net.left_of(Lane::Main(1), 750.0), None);
    }

    proptest! {
        #[test]
        fn leader_matches_exhaustive_scan(xs in proptest::collection::btree_set(0u32..2000, 1..30)) {
            let net = single();
            let mut map = LaneMap::new(&net, 5.0, 120.0);
            // spacing of 10 m keeps the lane collision-free
            let xs: Vec<f64> = xs.into_iter().map(|k| k as f64 * 10.0).collect();
            for (i, &x) in xs.iter().enumerate() {
                map.insert(Lane::Main(0), occ(i as u64, x));
            }
            for (i, &x) in xs.iter().enumerate() {
                let expected = xs
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y > x && y - x <= 120.0)
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, &y)| (j as u64, y - x - 5.0));
                let got = leader_of(&net, &map, i as u64, LaneSelector::Current)
                    .unwrap()
                    .map(|n| (n.id, n.gap));
                prop_assert_eq!(got, expected);
                if let Some((j, gap)) = got {
                    prop_assert!(gap >= 0.0);
                    // antisymmetry
                    let back = leader_of(&net, &map, j, LaneSelector::Current).unwrap();
                    prop_assert!(back.map(|n| n.id) != Some(i as u64));
                }
            }
        }

        #[test]
        fn build_is_pure(len in 500.0f64..5000.0, lanes in 1u8..6) {
            let c = NetworkConfig::single_lane(len);
            let c = NetworkConfig { lane_count: lanes, ..c };
            prop_assert_eq!(build_network(&c).unwrap(), build_network(&c).unwrap());
        }
    }
}
