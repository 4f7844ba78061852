//! Sensor locations, great-circle distances and the weighted spatial graph
//! that the node embedder walks over.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("location {id}: {reason}")]
    InvalidLocation { id: usize, reason: String },
    #[error("location ids must be contiguous from 0; found {found} at position {position}")]
    NonContiguousIds { position: usize, found: usize },
    #[error("at least 2 locations are required, got {0}")]
    TooFewLocations(usize),
    #[error("locations {a} and {b} share the same coordinates")]
    DuplicateCoordinates { a: usize, b: usize },
    #[error("pruning {removed} of {total} edges disconnects the graph")]
    DisconnectedAfterPrune { removed: usize, total: usize },
    #[error("prune fraction must lie in [0, 1), got {0}")]
    InvalidPruneFraction(f64),
    #[error("kernel width must be positive and finite, got {0}")]
    InvalidKernelWidth(f64),
    #[error("graph is malformed: {0}")]
    MalformedGraph(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: usize,
    pub latitude: f64,
    pub longitude: f64,
}

impl Location {
    pub fn new(id: usize, latitude: f64, longitude: f64) -> Self {
        Self { id, latitude, longitude }
    }

    fn check(&self) -> Result<(), GeoError> {
        let bad = |reason: &str| GeoError::InvalidLocation { id: self.id, reason: reason.to_string() };
        if !self.latitude.is_finite() || !(-90.0..=90.0).contains(&self.latitude) {
            return Err(bad("latitude outside [-90, 90]"));
        }
        if !self.longitude.is_finite() || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(bad("longitude outside [-180, 180]"));
        }
        Ok(())
    }
}

/// A validated set of locations whose ids equal their positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet(Vec<Location>);

impl LocationSet {
    pub fn new(mut locations: Vec<Location>) -> Result<Self, GeoError> {
        locations.sort_by_key(|l| l.id);
        for (position, loc) in locations.iter().enumerate() {
            loc.check()?;
            if loc.id != position {
                return Err(GeoError::NonContiguousIds { position, found: loc.id });
            }
        }
        Ok(Self(locations))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Location> {
        self.0.iter()
    }

    pub fn get(&self, id: usize) -> Option<&Location> {
        self.0.get(id)
    }

    pub fn as_slice(&self) -> &[Location] {
        &self.0
    }

    /// Reads the `id,latitude,longitude` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "latitude", "longitude"] {
            return Err(GeoError::MalformedGraph(format!(
                "locations header must be `id,latitude,longitude`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut locations = Vec::new();
        for row in rdr.deserialize() {
            locations.push(row?);
        }
        Self::new(locations)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GeoError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for loc in &self.0 {
            wtr.serialize(loc)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine(a: &Location, b: &Location) -> f64 {
    let (lat1, lat2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.longitude - a.longitude).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Width of the Gaussian kernel turning distances into walk affinities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum KernelWidth {
    /// Median of all pairwise distances.
    #[default]
    Median,
    Km(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub distance_km: f64,
    pub weight: f64,
}

/// Undirected weighted graph; each edge is stored once with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl SpatialGraph {
    /// Builds a graph from an explicit edge list, checking every invariant.
    pub fn from_edges(n: usize, mut edges: Vec<Edge>) -> Result<Self, GeoError> {
        for e in &mut edges {
            if e.u == e.v {
                return Err(GeoError::MalformedGraph(format!("self-loop at node {}", e.u)));
            }
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
            if e.v >= n {
                return Err(GeoError::MalformedGraph(format!(
                    "edge ({}, {}) references a node outside 0..{n}",
                    e.u, e.v
                )));
            }
            if !(e.distance_km > 0.0 && e.distance_km.is_finite()) {
                return Err(GeoError::MalformedGraph(format!("edge ({}, {}) has non-positive distance", e.u, e.v)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(GeoError::MalformedGraph(format!("edge ({}, {}) has non-positive weight", e.u, e.v)));
            }
        }
        edges.sort_by_key(|e| (e.u, e.v));
        if edges.windows(2).any(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(GeoError::MalformedGraph("duplicate edge".into()));
        }
        let graph = Self { n, edges };
        if !graph.is_connected() {
            return Err(GeoError::MalformedGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_connected(&self) -> bool {
        connected(self.n, self.edges.iter().map(|e| (e.u, e.v)))
    }

    /// Reads the `u,v,distance_km,weight` CSV layout; node count is `max id + 1`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut edges: Vec<Edge> = Vec::new();
        for row in rdr.deserialize() {
            edges.push(row?);
        }
        let n = edges.iter().map(|e| e.u.max(e.v) + 1).max().unwrap_or(0);
        Self::from_edges(n, edges)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GeoError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.edges {
            wtr.serialize(e)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn connected(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> bool {
    if n == 0 {
        return true;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for (u, v) in pairs {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            components -= 1;
        }
    }
    components == 1
}

/// Gaussian affinity `exp(-d^2 / (2 sigma^2))`.
pub fn kernel_weight(distance_km: f64, sigma_km: f64) -> f64 {
    (-(distance_km * distance_km) / (2.0 * sigma_km * sigma_km)).exp()
}

/// Complete graph over `locs`, optionally dropping the `prune_frac` longest
/// edges. Ties in the prune ranking fall back to `(u, v)` order.
pub fn build_graph(locs: &LocationSet, kernel: KernelWidth, prune_frac: f64) -> Result<SpatialGraph, GeoError> {
    let n = locs.len();
    if n < 2 {
        return Err(GeoError::TooFewLocations(n));
    }
    if !(0.0..1.0).contains(&prune_frac) {
        return Err(GeoError::InvalidPruneFraction(prune_frac));
    }

    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for (i, a) in locs.iter().enumerate() {
        for (j, b) in locs.iter().enumerate().skip(i + 1) {
            let d = haversine(a, b);
            if d <= 0.0 {
                return Err(GeoError::DuplicateCoordinates { a: i, b: j });
            }
            pairs.push((i, j, d));
        }
    }

    let sigma = match kernel {
        KernelWidth::Median => {
            let mut ds: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            ds.sort_by(f64::total_cmp);
            let m = ds.len();
            if m % 2 == 1 {
                ds[m / 2]
            } else {
                0.5 * (ds[m / 2 - 1] + ds[m / 2])
            }
        }
        KernelWidth::Km(s) => s,
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(GeoError::InvalidKernelWidth(sigma));
    }

    let total = pairs.len();
    let retained = ((1.0 - prune_frac) * total as f64).round() as usize;
    let removed = total - retained;
    if removed > 0 {
        // longest first; among equal distances the lexicographically smaller pair goes first
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&x, &y| {
            pairs[y].2.total_cmp(&pairs[x].2).then((pairs[x].0, pairs[x].1).cmp(&(pairs[y].0, pairs[y].1)))
        });
        let mut keep = vec![true; total];
        for &idx in &order[..removed] {
            keep[idx] = false;
        }
        let mut k = keep.iter();
        pairs.retain(|_| *k.next().unwrap());
        if !connected(n, pairs.iter().map(|p| (p.0, p.1))) {
            return Err(GeoError::DisconnectedAfterPrune { removed, total });
        }
    }

    let edges =
        pairs.into_iter().map(|(u, v, d)| Edge { u, v, distance_km: d, weight: kernel_weight(d, sigma) }).collect();
    Ok(SpatialGraph { n, edges })
}
