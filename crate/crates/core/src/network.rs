//! Road networks, sensor graphs and their CSV representations.
//!
//! A [`RoadNetwork`] is the physical substrate (intersections and directed
//! arcs). Sensors sit on road nodes; the [`SensorGraph`] connects every sensor
//! to its set of reachable successors, with one feature vector per edge
//! (shortest-path distance in km, shortest-path travel time in minutes).

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

/// Number of edge features produced by [`derive_sensor_graph`].
pub const N_ROAD_FEATURES: usize = 2;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{file}:{line}: malformed record: {reason}")]
    MalformedRecord {
        file: String,
        line: u64,
        reason: String,
    },
    #[error("arc {from} -> {to} has a negative or non-finite weight")]
    NegativeWeight { from: String, to: String },
    #[error("arc {from} -> {to} references an unknown node")]
    DanglingNode { from: String, to: String },
    #[error("duplicate arc {from} -> {to}")]
    DuplicateArc { from: String, to: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("duplicate sensor id {0}")]
    DuplicateSensor(String),
    #[error("sensor {sensor} is placed on unknown node {node}")]
    UnknownNode { sensor: String, node: String },
    #[error("sensor {0} cannot reach any other sensor")]
    UnreachableSensor(String),
    #[error("sensor {0} has no successor under the chosen policy")]
    EmptyNeighborhood(String),
    #[error("invalid successor policy: {0}")]
    InvalidPolicy(String),
    #[error("feature row {from} -> {to} is not a valid successor edge")]
    AsymmetricFeatureTable { from: String, to: String },
    #[error("invalid edge feature on {from} -> {to}: {reason}")]
    InvalidFeature {
        from: String,
        to: String,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Dense index of a sensor location. Stable for the lifetime of a graph and
/// mapped to external sensor ids through `sensors.csv` row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationId(pub usize);

impl LocationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which edge feature a distance-like query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Distance,
    Time,
}

impl Metric {
    /// Column of the edge feature vector holding this metric.
    pub fn feature_index(self) -> usize {
        match self {
            Metric::Distance => 0,
            Metric::Time => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNode {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadArc {
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub time_min: f64,
}

/// Directed road network with non-negative arc lengths and travel times.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<RoadNode>,
    index: HashMap<String, usize>,
    arcs: Vec<RoadArc>,
    out_arcs: Vec<Vec<usize>>,
}

impl RoadNetwork {
    /// Builds a validated network. Arcs are given as
    /// `(from_node, to_node, length_km, time_min)`.
    pub fn new(
        nodes: Vec<RoadNode>,
        arcs: Vec<(String, String, f64, f64)>,
    ) -> Result<Self, NetworkError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateNode(n.id.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(arcs.len());
        let mut out_arcs = vec![Vec::new(); nodes.len()];
        let mut built = Vec::with_capacity(arcs.len());
        for (from, to, length_km, time_min) in arcs {
            let (Some(&f), Some(&t)) = (index.get(&from), index.get(&to)) else {
                return Err(NetworkError::DanglingNode { from, to });
            };
            if !(length_km.is_finite() && length_km >= 0.0 && time_min.is_finite() && time_min >= 0.0)
            {
                return Err(NetworkError::NegativeWeight { from, to });
            }
            if !seen.insert((f, t)) {
                return Err(NetworkError::DuplicateArc { from, to });
            }
            out_arcs[f].push(built.len());
            built.push(RoadArc {
                from: f,
                to: t,
                length_km,
                time_min,
            });
        }
        Ok(Self {
            nodes,
            index,
            arcs: built,
            out_arcs,
        })
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[RoadArc] {
        &self.arcs
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Single-source Dijkstra over arc lengths or times. Unreachable nodes
    /// get `f64::INFINITY`.
    pub fn shortest_paths(&self, source: usize, metric: Metric) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry {
            cost: 0.0,
            node: source,
        });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &a in &self.out_arcs[node] {
                let arc = &self.arcs[a];
                let w = match metric {
                    Metric::Distance => arc.length_km,
                    Metric::Time => arc.time_min,
                };
                let next = cost + w;
                if next < dist[arc.to] {
                    dist[arc.to] = next;
                    heap.push(HeapEntry {
                        cost: next,
                        node: arc.to,
                    });
                }
            }
        }
        dist
    }

    pub fn save(&self, nodes_file: &Path, arcs_file: &Path) -> Result<(), NetworkError> {
        let mut w = csv::Writer::from_path(nodes_file)?;
        w.write_record(["node_id", "lat", "lon"])?;
        for n in &self.nodes {
            w.write_record([n.id.clone(), n.lat.to_string(), n.lon.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(arcs_file)?;
        w.write_record(["from_node", "to_node", "length_km", "time_min"])?;
        for a in &self.arcs {
            w.write_record([
                self.nodes[a.from].id.clone(),
                self.nodes[a.to].id.clone(),
                a.length_km.to_string(),
                a.time_min.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then node id
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn malformed(file: &Path, line: u64, reason: impl Into<String>) -> NetworkError {
    NetworkError::MalformedRecord {
        file: file.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    file: &Path,
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T, NetworkError> {
    let line = record_line(rec);
    let raw = rec
        .get(idx)
        .ok_or_else(|| malformed(file, line, format!("missing field {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| malformed(file, line, format!("cannot parse {name} from {raw:?}")))
}

fn read_records(file: &Path, expected_cols: usize) -> Result<Vec<csv::StringRecord>, NetworkError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(file)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(malformed(file, line, e.to_string()));
            }
        };
        if rec.len() < expected_cols {
            return Err(malformed(
                file,
                record_line(&rec),
                format!("expected {expected_cols} fields, found {}", rec.len()),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads `nodes.csv` (`node_id,lat,lon`) and `arcs.csv`
/// (`from_node,to_node,length_km,time_min`).
pub fn load_road_network(arcs_file: &Path, nodes_file: &Path) -> Result<RoadNetwork, NetworkError> {
    let mut nodes = Vec::new();
    for rec in read_records(nodes_file, 3)? {
        nodes.push(RoadNode {
            id: rec[0].trim().to_string(),
            lat: parse_field(nodes_file, &rec, 1, "lat")?,
            lon: parse_field(nodes_file, &rec, 2, "lon")?,
        });
    }
    let mut arcs = Vec::new();
    for rec in read_records(arcs_file, 4)? {
        arcs.push((
            rec[0].trim().to_string(),
            rec[1].trim().to_string(),
            parse_field(arcs_file, &rec, 2, "length_km")?,
            parse_field(arcs_file, &rec, 3, "time_min")?,
        ));
    }
    RoadNetwork::new(nodes, arcs)
}

/// A roadside sensor placed on a road node.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub id: String,
    pub node: String,
    pub lat: f64,
    pub lon: f64,
}

pub fn load_sensors(file: &Path) -> Result<Vec<Sensor>, NetworkError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in read_records(file, 4)? {
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(NetworkError::DuplicateSensor(id));
        }
        out.push(Sensor {
            id,
            node: rec[1].trim().to_string(),
            lat: parse_field(file, &rec, 2, "lat")?,
            lon: parse_field(file, &rec, 3, "lon")?,
        });
    }
    Ok(out)
}

pub fn save_sensors(sensors: &[Sensor], file: &Path) -> Result<(), NetworkError> {
    let mut w = csv::Writer::from_path(file)?;
    w.write_record(["sensor_id", "node_id", "lat", "lon"])?;
    for s in sensors {
        w.write_record([s.id.clone(), s.node.clone(), s.lat.to_string(), s.lon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// How the successor set of each sensor is built from road distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuccessorPolicy {
    /// The k nearest other sensors by shortest-path road distance.
    KNearest(usize),
    /// Every other sensor within the given road distance (km).
    Radius(f64),
}

impl Default for SuccessorPolicy {
    fn default() -> Self {
        SuccessorPolicy::KNearest(10)
    }
}

/// All-pairs sensor-to-sensor shortest-path distances and times.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDistances {
    n: usize,
    dist_km: Vec<f64>,
    time_min: Vec<f64>,
}

impl SensorDistances {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, from: LocationId, to: LocationId, metric: Metric) -> f64 {
        let i = from.0 * self.n + to.0;
        match metric {
            Metric::Distance => self.dist_km[i],
            Metric::Time => self.time_min[i],
        }
    }

    pub fn distance_km(&self, from: LocationId, to: LocationId) -> f64 {
        self.get(from, to, Metric::Distance)
    }
}

/// Runs one length-Dijkstra and one time-Dijkstra per sensor.
pub fn sensor_distances(
    road: &RoadNetwork,
    sensors: &[Sensor],
) -> Result<SensorDistances, NetworkError> {
    let nodes = sensor_nodes(road, sensors)?;
    let n = sensors.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = nodes
        .par_iter()
        .map(|&src| {
            let d = road.shortest_paths(src, Metric::Distance);
            let t = road.shortest_paths(src, Metric::Time);
            (
                nodes.iter().map(|&j| d[j]).collect(),
                nodes.iter().map(|&j| t[j]).collect(),
            )
        })
        .collect();
    let mut dist_km = Vec::with_capacity(n * n);
    let mut time_min = Vec::with_capacity(n * n);
    for (d, t) in rows {
        dist_km.extend(d);
        time_min.extend(t);
    }
    Ok(SensorDistances {
        n,
        dist_km,
        time_min,
    })
}

fn sensor_nodes(road: &RoadNetwork, sensors: &[Sensor]) -> Result<Vec<usize>, NetworkError> {
    let mut seen = HashSet::new();
    sensors
        .iter()
        .map(|s| {
            if !seen.insert(s.id.as_str()) {
                return Err(NetworkError::DuplicateSensor(s.id.clone()));
            }
            road.node_index(&s.node).ok_or_else(|| NetworkError::UnknownNode {
                sensor: s.id.clone(),
                node: s.node.clone(),
            })
        })
        .collect()
}

/// Builds the sensor graph: successor sets per `policy` and edge features
/// `(shortest-path km, shortest-path minutes)`. Self-loops are never added.
pub fn derive_sensor_graph(
    road: &RoadNetwork,
    sensors: Vec<Sensor>,
    policy: SuccessorPolicy,
) -> Result<SensorGraph, NetworkError> {
    match policy {
        SuccessorPolicy::KNearest(0) => {
            return Err(NetworkError::InvalidPolicy("k must be at least 1".into()))
        }
        SuccessorPolicy::Radius(r) if !(r > 0.0 && r.is_finite()) => {
            return Err(NetworkError::InvalidPolicy(format!("radius must be positive, got {r}")))
        }
        _ => {}
    }
    let table = sensor_distances(road, &sensors)?;
    let n = sensors.len();
    let mut edges = Vec::new();
    for s in 0..n {
        let from = LocationId(s);
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&t| t != s)
            .map(|t| (table.distance_km(from, LocationId(t)), t))
            .filter(|(d, _)| d.is_finite())
            .collect();
        if candidates.is_empty() {
            return Err(NetworkError::UnreachableSensor(sensors[s].id.clone()));
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let chosen: Vec<usize> = match policy {
            SuccessorPolicy::KNearest(k) => candidates.iter().take(k).map(|c| c.1).collect(),
            SuccessorPolicy::Radius(r) => candidates
                .iter()
                .take_while(|c| c.0 <= r)
                .map(|c| c.1)
                .collect(),
        };
        if chosen.is_empty() {
            return Err(NetworkError::EmptyNeighborhood(sensors[s].id.clone()));
        }
        for t in chosen {
            let to = LocationId(t);
            edges.push((
                from,
                to,
                vec![
                    table.get(from, to, Metric::Distance),
                    table.get(from, to, Metric::Time),
                ],
            ));
        }
    }
    SensorGraph::from_edges(sensors, N_ROAD_FEATURES, edges)
}

/// Sensor locations with successor sets and per-edge feature vectors, stored
/// in compressed sparse rows. Successors of every location are sorted by
/// ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    sensors: Vec<Sensor>,
    index: HashMap<String, LocationId>,
    offsets: Vec<usize>,
    targets: Vec<LocationId>,
    features: Vec<f64>,
    n_features: usize,
    pred_offsets: Vec<usize>,
    preds: Vec<LocationId>,
}

impl SensorGraph {
    /// Builds a graph from `(from, to, features)` triples. Rejects self-loops,
    /// duplicate edges, out-of-range ids and negative or non-finite features.
    pub fn from_edges(
        sensors: Vec<Sensor>,
        n_features: usize,
        mut edges: Vec<(LocationId, LocationId, Vec<f64>)>,
    ) -> Result<Self, NetworkError> {
        let n = sensors.len();
        let mut index = HashMap::with_capacity(n);
        for (i, s) in sensors.iter().enumerate() {
            if index.insert(s.id.clone(), LocationId(i)).is_some() {
                return Err(NetworkError::DuplicateSensor(s.id.clone()));
            }
        }
        let name = |l: LocationId| {
            sensors
                .get(l.0)
                .map(|s| s.id.clone())
                .unwrap_or_else(|| format!("#{}", l.0))
        };
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in edges.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(NetworkError::AsymmetricFeatureTable {
                    from: name(w[0].0),
                    to: name(w[0].1),
                });
            }
        }
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(edges.len());
        let mut features = Vec::with_capacity(edges.len() * n_features);
        let mut pred_lists: Vec<Vec<LocationId>> = vec![Vec::new(); n];
        for (from, to, f) in &edges {
            if from.0 >= n || to.0 >= n || from == to {
                return Err(NetworkError::AsymmetricFeatureTable {
                    from: name(*from),
                    to: name(*to),
                });
            }
            if f.len() != n_features {
                return Err(NetworkError::InvalidFeature {
                    from: name(*from),
                    to: name(*to),
                    reason: format!("expected {n_features} features, found {}", f.len()),
                });
            }
            if let Some(bad) = f.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(NetworkError::InvalidFeature {
                    from: name(*from),
                    to: name(*to),
                    reason: format!("value {bad} is negative or non-finite"),
                });
            }
            offsets[from.0 + 1] += 1;
            targets.push(*to);
            features.extend_from_slice(f);
            pred_lists[to.0].push(*from);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut pred_offsets = Vec::with_capacity(n + 1);
        let mut preds = Vec::with_capacity(edges.len());
        pred_offsets.push(0);
        for list in pred_lists {
            preds.extend(list);
            pred_offsets.push(preds.len());
        }
        Ok(Self {
            sensors,
            index,
            offsets,
            targets,
            features,
            n_features,
            pred_offsets,
            preds,
        })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn locations(&self) -> impl Iterator<Item = LocationId> + '_ {
        (0..self.len()).map(LocationId)
    }

    pub fn contains(&self, s: LocationId) -> bool {
        s.0 < self.len()
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn sensor(&self, s: LocationId) -> &Sensor {
        &self.sensors[s.0]
    }

    pub fn sensor_id(&self, s: LocationId) -> &str {
        &self.sensors[s.0].id
    }

    pub fn location_of(&self, sensor_id: &str) -> Option<LocationId> {
        self.index.get(sensor_id).copied()
    }

    /// Range of global edge indices leaving `s`.
    #[inline]
    pub fn edge_range(&self, s: LocationId) -> Range<usize> {
        self.offsets[s.0]..self.offsets[s.0 + 1]
    }

    #[inline]
    pub fn successors(&self, s: LocationId) -> &[LocationId] {
        &self.targets[self.edge_range(s)]
    }

    #[inline]
    pub fn edge_target(&self, e: usize) -> LocationId {
        self.targets[e]
    }

    #[inline]
    pub fn edge_features(&self, e: usize) -> &[f64] {
        &self.features[e * self.n_features..(e + 1) * self.n_features]
    }

    pub fn edge_index(&self, s: LocationId, to: LocationId) -> Option<usize> {
        let r = self.edge_range(s);
        self.targets[r.clone()]
            .binary_search(&to)
            .ok()
            .map(|k| r.start + k)
    }

    pub fn features(&self, s: LocationId, to: LocationId) -> Option<&[f64]> {
        self.edge_index(s, to).map(|e| self.edge_features(e))
    }

    pub fn predecessors(&self, s: LocationId) -> &[LocationId] {
        &self.preds[self.pred_offsets[s.0]..self.pred_offsets[s.0 + 1]]
    }

    /// Membership mask of [`reachable_to`].
    pub fn reachable_mask(&self, d: LocationId) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        let mut stack = vec![d];
        mask[d.0] = true;
        while let Some(u) = stack.pop() {
            for &p in self.predecessors(u) {
                if !mask[p.0] {
                    mask[p.0] = true;
                    stack.push(p);
                }
            }
        }
        mask
    }
}

/// Locations from which `d` can be reached along successor edges (always
/// includes `d`).
pub fn reachable_to(graph: &SensorGraph, d: LocationId) -> BTreeSet<LocationId> {
    graph
        .reachable_mask(d)
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.then_some(LocationId(i)))
        .collect()
}

fn feature_header(k: usize, n_features: usize) -> String {
    match (n_features, k) {
        (2, 0) => "dist_km".to_string(),
        (2, 1) => "time_min".to_string(),
        _ => format!("feature_{}", k + 1),
    }
}

/// Writes `sensors.csv` and `sensor_graph.csv`
/// (`from_sensor,to_sensor,dist_km,time_min`).
pub fn save_sensor_graph(
    graph: &SensorGraph,
    sensors_file: &Path,
    graph_file: &Path,
) -> Result<(), NetworkError> {
    save_sensors(&graph.sensors, sensors_file)?;
    let mut w = csv::Writer::from_path(graph_file)?;
    let mut header = vec!["from_sensor".to_string(), "to_sensor".to_string()];
    header.extend((0..graph.n_features).map(|k| feature_header(k, graph.n_features)));
    w.write_record(&header)?;
    for s in graph.locations() {
        for e in graph.edge_range(s) {
            let mut row = vec![
                graph.sensor_id(s).to_string(),
                graph.sensor_id(graph.edge_target(e)).to_string(),
            ];
            row.extend(graph.edge_features(e).iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a graph written by [`save_sensor_graph`]. The sensor list fixes the
/// id mapping; every feature row must reference known sensors.
pub fn load_sensor_graph(sensors_file: &Path, graph_file: &Path) -> Result<SensorGraph, NetworkError> {
    let sensors = load_sensors(sensors_file)?;
    let index: HashMap<&str, usize> = sensors
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(graph_file)?;
    let n_cols = rdr.headers()?.len();
    if n_cols < 3 {
        return Err(malformed(graph_file, 1, "header needs from_sensor,to_sensor and at least one feature"));
    }
    let n_features = n_cols - 2;
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(graph_file, line, e.to_string())
        })?;
        let line = record_line(&rec);
        let lookup = |i: usize| {
            let id = rec[i].trim();
            index
                .get(id)
                .copied()
                .ok_or_else(|| malformed(graph_file, line, format!("unknown sensor id {id:?}")))
        };
        let from = lookup(0)?;
        let to = lookup(1)?;
        let feats = (0..n_features)
            .map(|k| parse_field(graph_file, &rec, k + 2, "feature"))
            .collect::<Result<Vec<f64>, _>>()?;
        edges.push((LocationId(from), LocationId(to), feats));
    }
    SensorGraph::from_edges(sensors, n_features, edges)
}
