//! Problem instances: servers with capacities and weights, requests that
//! arrive in a fixed order, and per-edge success probabilities.

mod generators;
mod io;

pub use generators::{gen_gnb, gen_hetero, gen_random, vertex_split, HeteroSpec, RandomSpec};
pub use io::{from_json, load, save, to_json, SCHEMA_VERSION};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An offline vertex. Its id is its position in [`Instance::servers`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Server {
    pub capacity: u32,
    pub weight: f64,
}

impl Server {
    pub fn new(capacity: u32) -> Self {
        Server {
            capacity,
            weight: 1.0,
        }
    }

    pub fn weighted(capacity: u32, weight: f64) -> Self {
        Server { capacity, weight }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub server: usize,
    pub probability: f64,
}

impl Edge {
    pub fn new(server: usize, probability: f64) -> Self {
        Edge {
            server,
            probability,
        }
    }
}

/// An online vertex. Edges are kept sorted by server id.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: usize,
    pub edges: Vec<Edge>,
}

impl Request {
    pub fn edge_to(&self, server: usize) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&server, |e| e.server)
            .ok()
            .map(|i| &self.edges[i])
    }
}

/// Name and parameters of the generator that produced an instance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl Metadata {
    pub fn new(generator: impl Into<String>) -> Self {
        Metadata {
            generator: generator.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn param_u64(&self, key: &str) -> Option<u64> {
        self.params.get(key).and_then(|v| v.as_u64())
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| v.as_f64())
    }
}

/// Immutable bipartite instance. Construct with [`Instance::new`], which
/// validates every invariant and canonicalizes edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    servers: Vec<Server>,
    requests: Vec<Request>,
    metadata: Metadata,
    n_edges: usize,
}

impl Instance {
    /// Builds an instance from per-request edge lists. Request ids are
    /// assigned from list position; edges are sorted by server id.
    pub fn new(servers: Vec<Server>, requests: Vec<Vec<Edge>>, metadata: Metadata) -> Result<Self> {
        for (id, s) in servers.iter().enumerate() {
            if s.capacity == 0 {
                return Err(Error::invalid(format!(
                    "server {id}: capacity must be >= 1"
                )));
            }
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "server {id}: weight must be positive and finite, got {}",
                    s.weight
                )));
            }
        }
        let mut n_edges = 0;
        let mut out = Vec::with_capacity(requests.len());
        for (id, mut edges) in requests.into_iter().enumerate() {
            edges.sort_by_key(|e| e.server);
            for (k, e) in edges.iter().enumerate() {
                if e.server >= servers.len() {
                    return Err(Error::invalid(format!(
                        "request {id}: edge to unknown server {}",
                        e.server
                    )));
                }
                if !(e.probability > 0.0 && e.probability <= 1.0) {
                    return Err(Error::invalid(format!(
                        "request {id}: probability {} to server {} outside (0, 1]",
                        e.probability, e.server
                    )));
                }
                if k > 0 && edges[k - 1].server == e.server {
                    return Err(Error::invalid(format!(
                        "request {id}: duplicate edge to server {}",
                        e.server
                    )));
                }
            }
            n_edges += edges.len();
            out.push(Request { id, edges });
        }
        Ok(Instance {
            servers,
            requests: out,
            metadata,
            n_edges,
        })
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn n_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn total_capacity(&self) -> u64 {
        self.servers.iter().map(|s| s.capacity as u64).sum()
    }

    /// Number of requests adjacent to `server`.
    pub fn degree(&self, server: usize) -> usize {
        self.requests
            .iter()
            .filter(|r| r.edge_to(server).is_some())
            .count()
    }

    /// All edges as `(request id, edge)` in request order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.requests
            .iter()
            .flat_map(|r| r.edges.iter().map(move |e| (r.id, e)))
    }

    /// True if `self` has the same vertex sets as `other` and every edge of
    /// `self` is present in `other` with the same probability.
    pub fn is_subgraph_of(&self, other: &Instance) -> bool {
        if self.n_servers() != other.n_servers() || self.n_requests() != other.n_requests() {
            return false;
        }
        self.requests
            .iter()
            .zip(&other.requests)
            .all(|(mine, theirs)| {
                mine.edges.iter().all(|e| {
                    theirs
                        .edge_to(e.server)
                        .is_some_and(|t| t.probability == e.probability)
                })
            })
    }
}
