//! Urban grid geometry, random deployment of vehicles and trucks, and
//! RSU-vehicle link classification.
//!
//! The default layout is a 240 m x 520 m area crossed by one south-north
//! road and two east-west roads. Each road carries two directions with two
//! lanes each, giving six directions in total. The two crossings are the
//! junctions where RSUs sit. Buildings fill the blocks between road
//! corridors.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Footprint, Point, Rect};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    SouthNorth,
    NorthSouth,
    EastWest1,
    WestEast1,
    EastWest2,
    WestEast2,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::SouthNorth,
        Direction::NorthSouth,
        Direction::EastWest1,
        Direction::WestEast1,
        Direction::EastWest2,
        Direction::WestEast2,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Direction::SouthNorth => "South-North",
            Direction::NorthSouth => "North-South",
            Direction::EastWest1 => "East-West 1",
            Direction::WestEast1 => "West-East 1",
            Direction::EastWest2 => "East-West 2",
            Direction::WestEast2 => "West-East 2",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A two-way road. `forward` travels from `start` to `end`, `reverse` the
/// other way; both drive on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub forward: Direction,
    pub reverse: Direction,
    pub start: Point,
    pub end: Point,
}

impl RoadSegment {
    pub fn length(&self) -> f64 {
        self.start.distance(&self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Per-direction counts drawn from Poisson(lambda) / Poisson(theta).
    #[default]
    Poisson,
    /// Exactly round(lambda) vehicles and round(theta) trucks per direction.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub road_segments: Vec<RoadSegment>,
    pub junctions: Vec<Point>,
    pub rsu_range_m: f64,
    /// Vehicles per direction.
    pub lambda_vehicles: f64,
    /// Trucks per direction.
    pub theta_trucks: f64,
    pub count_mode: CountMode,
    pub buildings: Vec<Rect>,
    pub rng_seed: u64,
    pub lanes_per_direction: usize,
    pub lane_width_m: f64,
    pub min_spacing_m: f64,
    pub truck_length_m: f64,
    pub truck_width_m: f64,
    pub tx_power_dbm: f64,
}

pub const DEFAULT_BUILDING_INSET_M: f64 = 5.0;

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut cfg = Self {
            area_width_m: 240.0,
            area_height_m: 520.0,
            road_segments: vec![
                RoadSegment {
                    forward: Direction::SouthNorth,
                    reverse: Direction::NorthSouth,
                    start: Point::new(120.0, 0.0),
                    end: Point::new(120.0, 520.0),
                },
                RoadSegment {
                    forward: Direction::WestEast1,
                    reverse: Direction::EastWest1,
                    start: Point::new(0.0, 130.0),
                    end: Point::new(240.0, 130.0),
                },
                RoadSegment {
                    forward: Direction::WestEast2,
                    reverse: Direction::EastWest2,
                    start: Point::new(0.0, 390.0),
                    end: Point::new(240.0, 390.0),
                },
            ],
            junctions: vec![Point::new(120.0, 130.0), Point::new(120.0, 390.0)],
            rsu_range_m: 150.0,
            lambda_vehicles: 20.0,
            theta_trucks: 6.0,
            count_mode: CountMode::Poisson,
            buildings: Vec::new(),
            rng_seed: 0,
            lanes_per_direction: 2,
            lane_width_m: 3.5,
            min_spacing_m: 5.0,
            truck_length_m: 14.0,
            truck_width_m: 2.6,
            tx_power_dbm: 23.0,
        };
        cfg.buildings = cfg.block_buildings(DEFAULT_BUILDING_INSET_M);
        cfg
    }
}

impl ScenarioConfig {
    pub fn area(&self) -> Rect {
        Rect::new(0.0, 0.0, self.area_width_m, self.area_height_m)
    }

    fn road_half_width(&self) -> f64 {
        self.lanes_per_direction as f64 * self.lane_width_m
    }

    /// One rectangle per block left between the road corridors, pulled back
    /// `inset_m` from every corridor edge and running out to the area edge.
    /// Only axis-aligned roads delimit blocks.
    pub fn block_buildings(&self, inset_m: f64) -> Vec<Rect> {
        let hw = self.road_half_width();
        let mut x_cuts = Vec::new();
        let mut y_cuts = Vec::new();
        for road in &self.road_segments {
            if road.start.x == road.end.x {
                x_cuts.push((road.start.x - hw, road.start.x + hw));
            } else if road.start.y == road.end.y {
                y_cuts.push((road.start.y - hw, road.start.y + hw));
            }
        }
        let bands = |cuts: &mut Vec<(f64, f64)>, extent: f64| {
            cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut out = Vec::new();
            let mut lo = 0.0;
            let mut lo_is_edge = true;
            for &(a, b) in cuts.iter() {
                let band_lo = if lo_is_edge { lo } else { lo + inset_m };
                let band_hi = a - inset_m;
                if band_hi > band_lo {
                    out.push((band_lo, band_hi));
                }
                lo = b;
                lo_is_edge = false;
            }
            let band_lo = if lo_is_edge { lo } else { lo + inset_m };
            if extent > band_lo {
                out.push((band_lo, extent));
            }
            out
        };
        let xs = bands(&mut x_cuts, self.area_width_m);
        let ys = bands(&mut y_cuts, self.area_height_m);
        let mut rects = Vec::new();
        for &(y0, y1) in &ys {
            for &(x0, x1) in &xs {
                rects.push(Rect::new(x0, y0, x1, y1));
            }
        }
        rects
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be > 0, got {v}")))
            }
        };
        positive("area_width_m", self.area_width_m)?;
        positive("area_height_m", self.area_height_m)?;
        positive("rsu_range_m", self.rsu_range_m)?;
        positive("lane_width_m", self.lane_width_m)?;
        positive("truck_length_m", self.truck_length_m)?;
        positive("truck_width_m", self.truck_width_m)?;
        if !(self.min_spacing_m.is_finite() && self.min_spacing_m >= 0.0) {
            return Err(Error::config("min_spacing_m", "must be >= 0"));
        }
        for (name, v) in [
            ("lambda_vehicles", self.lambda_vehicles),
            ("theta_trucks", self.theta_trucks),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.lanes_per_direction == 0 {
            return Err(Error::config("lanes_per_direction", "must be >= 1"));
        }
        if !(-30.0..=33.0).contains(&self.tx_power_dbm) {
            return Err(Error::config("tx_power_dbm", "must lie in [-30, 33] dBm"));
        }

        let area = self.area();
        let mut seen = Vec::new();
        for (i, road) in self.road_segments.iter().enumerate() {
            if !area.contains(&road.start) || !area.contains(&road.end) {
                return Err(Error::config(
                    format!("road_segments[{i}]"),
                    "endpoints must lie inside the area",
                ));
            }
            if road.length() <= 0.0 {
                return Err(Error::config(format!("road_segments[{i}]"), "zero length"));
            }
            seen.push(road.forward);
            seen.push(road.reverse);
        }
        for dir in Direction::ALL {
            let n = seen.iter().filter(|d| **d == dir).count();
            if n != 1 {
                return Err(Error::config(
                    "road_segments",
                    format!("direction {dir} appears {n} times, expected exactly once"),
                ));
            }
        }
        for (i, j) in self.junctions.iter().enumerate() {
            if !j.is_finite() || !area.contains(j) {
                return Err(Error::config(
                    format!("junctions[{i}]"),
                    "must lie inside the area",
                ));
            }
        }
        for (i, b) in self.buildings.iter().enumerate() {
            if !b.is_valid() || !area.contains_rect(b) {
                return Err(Error::config(
                    format!("buildings[{i}]"),
                    "must be a non-empty rectangle inside the area",
                ));
            }
        }
        Ok(())
    }

    fn lane_of(&self, dir: Direction) -> Option<(Point, Point)> {
        self.road_segments.iter().find_map(|r| {
            if r.forward == dir {
                Some((r.start, r.end))
            } else if r.reverse == dir {
                Some((r.end, r.start))
            } else {
                None
            }
        })
    }

    /// Start point, unit heading and length of a lane's centerline.
    pub fn lane_geometry(&self, dir: Direction, lane_index: usize) -> Option<(Point, Point, f64)> {
        let (a, b) = self.lane_of(dir)?;
        let len = a.distance(&b);
        let u = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
        // right-hand traffic: lanes sit to the right of the road centerline
        let right = Point::new(u.y, -u.x);
        let off = (lane_index as f64 + 0.5) * self.lane_width_m;
        Some((Point::new(a.x + right.x * off, a.y + right.y * off), u, len))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Rsu,
    Vehicle,
    Truck,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Rsu => "RSU",
            NodeKind::Vehicle => "Vehicle",
            NodeKind::Truck => "Truck",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Point,
    pub direction: Option<Direction>,
    pub lane_index: Option<u8>,
    pub tx_power_dbm: f64,
    /// Physical footprint; only trucks have one.
    pub extent: Option<Footprint>,
}

impl Node {
    pub fn is_radio(&self) -> bool {
        matches!(self.kind, NodeKind::Rsu | NodeKind::Vehicle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    Los,
    NlosBuilding,
    NlosTruck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Obstacle {
    /// Index into `ScenarioConfig::buildings`.
    Building(usize),
    Truck(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkClass {
    pub kind: LinkKind,
    pub blocking: Vec<Obstacle>,
}

impl LinkClass {
    pub fn los() -> Self {
        Self {
            kind: LinkKind::Los,
            blocking: Vec::new(),
        }
    }

    pub fn trucks(n: usize) -> Self {
        Self {
            kind: LinkKind::NlosTruck,
            blocking: (0..n as NodeId).map(Obstacle::Truck).collect(),
        }
    }

    pub fn building() -> Self {
        Self {
            kind: LinkKind::NlosBuilding,
            blocking: vec![Obstacle::Building(0)],
        }
    }

    pub fn truck_count(&self) -> usize {
        self.blocking
            .iter()
            .filter(|o| matches!(o, Obstacle::Truck(_)))
            .count()
    }
}

/// A deployed world. Immutable once built, apart from explicit test
/// injection through [`Scenario::push_vehicle`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    config: ScenarioConfig,
    nodes: Vec<Node>,
}

pub fn deploy_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut nodes = Vec::new();

    for j in &config.junctions {
        nodes.push(Node {
            id: nodes.len() as NodeId,
            kind: NodeKind::Rsu,
            position: *j,
            direction: None,
            lane_index: None,
            tx_power_dbm: config.tx_power_dbm,
            extent: None,
        });
    }

    for dir in Direction::ALL {
        let n_vehicles = draw_count(config.lambda_vehicles, config.count_mode, &mut rng);
        let n_trucks = draw_count(config.theta_trucks, config.count_mode, &mut rng);
        let mut kinds: Vec<NodeKind> = std::iter::repeat_n(NodeKind::Vehicle, n_vehicles)
            .chain(std::iter::repeat_n(NodeKind::Truck, n_trucks))
            .collect();
        kinds.shuffle(&mut rng);

        let lanes = config.lanes_per_direction;
        for lane in 0..lanes {
            let lane_kinds: Vec<NodeKind> =
                kinds.iter().skip(lane).step_by(lanes).copied().collect();
            if lane_kinds.is_empty() {
                continue;
            }
            let (origin, heading, len) = config
                .lane_geometry(dir, lane)
                .expect("validated config enumerates every direction");
            let lengths: Vec<f64> = lane_kinds
                .iter()
                .map(|k| match k {
                    NodeKind::Truck => config.truck_length_m,
                    _ => 0.0,
                })
                .collect();
            let needed =
                lengths.iter().sum::<f64>() + config.min_spacing_m * (lane_kinds.len() - 1) as f64;
            let slack = len - needed;
            if slack < 0.0 {
                return Err(Error::GeometryOverflow {
                    direction: dir,
                    requested_m: needed,
                    available_m: len,
                });
            }
            // uniform placement under a minimum gap: sorted uniforms on the
            // slack, then re-insert the mandatory lengths
            let mut offsets: Vec<f64> = (0..lane_kinds.len())
                .map(|_| rng.gen::<f64>() * slack)
                .collect();
            offsets.sort_by(f64::total_cmp);
            let mut consumed = 0.0;
            for ((kind, l), u) in lane_kinds.iter().zip(&lengths).zip(&offsets) {
                let s = u + consumed + l / 2.0;
                consumed += l + config.min_spacing_m;
                let position = Point::new(origin.x + heading.x * s, origin.y + heading.y * s);
                let extent = (*kind == NodeKind::Truck).then_some(Footprint {
                    center: position,
                    heading,
                    length_m: config.truck_length_m,
                    width_m: config.truck_width_m,
                });
                nodes.push(Node {
                    id: nodes.len() as NodeId,
                    kind: *kind,
                    position,
                    direction: Some(dir),
                    lane_index: Some(lane as u8),
                    tx_power_dbm: config.tx_power_dbm,
                    extent,
                });
            }
        }
    }

    Ok(Scenario {
        config: config.clone(),
        nodes,
    })
}

fn draw_count(mean: f64, mode: CountMode, rng: &mut ChaCha8Rng) -> usize {
    match mode {
        CountMode::Fixed => mean.round() as usize,
        CountMode::Poisson if mean > 0.0 => {
            let p = Poisson::new(mean).expect("mean validated positive and finite");
            p.sample(rng) as usize
        }
        CountMode::Poisson => 0,
    }
}

impl Scenario {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id as usize)
    }

    pub fn rsus(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Rsu)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Vehicle)
    }

    pub fn trucks(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Truck)
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles().count()
    }

    /// Adds a vehicle at an arbitrary position. Used to build controlled
    /// single-link experiments on top of a deployed scenario.
    pub fn push_vehicle(
        &mut self,
        position: Point,
        direction: Direction,
        lane_index: u8,
    ) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            id,
            kind: NodeKind::Vehicle,
            position,
            direction: Some(direction),
            lane_index: Some(lane_index),
            tx_power_dbm: self.config.tx_power_dbm,
            extent: None,
        });
        id
    }

    /// Removes every truck and building, keeping ids of the remaining nodes.
    pub fn without_obstacles(&self) -> Scenario {
        let mut config = self.config.clone();
        config.buildings.clear();
        config.theta_trucks = 0.0;
        let nodes = self
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::Truck)
            .cloned()
            .collect::<Vec<_>>();
        let mut s = Scenario { config, nodes };
        s.renumber();
        s
    }

    fn renumber(&mut self) {
        for (i, n) in self.nodes.iter_mut().enumerate() {
            n.id = i as NodeId;
        }
    }

    /// Writes `id,kind,x,y,direction,lane`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "id,kind,x,y,direction,lane")?;
        for n in &self.nodes {
            writeln!(
                w,
                "{},{},{:.3},{:.3},{},{}",
                n.id,
                n.kind,
                n.position.x,
                n.position.y,
                n.direction.map(|d| d.label()).unwrap_or(""),
                n.lane_index.map(|l| l.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Classifies the straight path between two nodes. Buildings take precedence
/// over trucks; the endpoints never block themselves.
pub fn classify_link(tx: &Node, rx: &Node, scenario: &Scenario) -> LinkClass {
    debug_assert_ne!(tx.id, rx.id, "a link needs two distinct nodes");
    let (a, b) = (&tx.position, &rx.position);

    let buildings: Vec<Obstacle> = scenario
        .config
        .buildings
        .iter()
        .enumerate()
        .filter(|(_, r)| r.intersects_segment(a, b))
        .map(|(i, _)| Obstacle::Building(i))
        .collect();
    if !buildings.is_empty() {
        return LinkClass {
            kind: LinkKind::NlosBuilding,
            blocking: buildings,
        };
    }

    let trucks: Vec<Obstacle> = scenario
        .trucks()
        .filter(|t| t.id != tx.id && t.id != rx.id)
        .filter(|t| t.extent.is_some_and(|f| f.intersects_segment(a, b)))
        .map(|t| Obstacle::Truck(t.id))
        .collect();
    if !trucks.is_empty() {
        return LinkClass {
            kind: LinkKind::NlosTruck,
            blocking: trucks,
        };
    }
    LinkClass::los()
}

/// Range check with an inclusive boundary.
pub fn in_rsu_range(rsu: &Node, v: &Node, config: &ScenarioConfig) -> bool {
    debug_assert_eq!(rsu.kind, NodeKind::Rsu);
    rsu.position.distance(&v.position) <= config.rsu_range_m
}
