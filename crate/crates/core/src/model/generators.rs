use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Edge, Instance, Metadata, Server};
use crate::error::{Error, Result};

/// Rounds `b / p` to the request count of one round of `G_n^b`.
pub(crate) fn round_size(b: u32, p: f64) -> Result<usize> {
    let exact = b as f64 / p;
    let size = exact.round();
    if (exact - size).abs() > 1e-9 * exact {
        warn!("b/p = {exact} is not an integer; rounding round size to {size}");
    }
    if size < 1.0 {
        return Err(Error::invalid(format!(
            "b/p = {exact} rounds to zero requests"
        )));
    }
    Ok(size as usize)
}

/// The upper-triangular family `G_n^b`: `n` servers of capacity `b` and
/// `n` rounds of `round(b/p)` identical requests. Round `i` (1-based) is
/// adjacent to servers `i..=n`, every edge with probability `p`.
pub fn gen_gnb(n: usize, b: u32, p: f64) -> Result<Instance> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if b == 0 {
        return Err(Error::invalid("b must be positive"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p = {p} outside (0, 1]")));
    }
    let size = round_size(b, p)?;
    let servers = vec![Server::new(b); n];
    let mut requests = Vec::with_capacity(n * size);
    for round in 0..n {
        let edges: Vec<Edge> = (round..n).map(|s| Edge::new(s, p)).collect();
        requests.extend(std::iter::repeat_n(edges, size));
    }
    let meta = Metadata::new("gnb")
        .with("n", n as u64)
        .with("b", b as u64)
        .with("p", p)
        .with("round_size", size as u64);
    Instance::new(servers, requests, meta)
}

/// Replaces every server of capacity `b_s` by `b_s` unit-capacity copies with
/// the same weight and neighborhood. Copy `j` of server `s` gets id
/// `sum_{t<s} b_t + j`.
pub fn vertex_split(inst: &Instance) -> Instance {
    let mut offsets = Vec::with_capacity(inst.n_servers());
    let mut servers = Vec::new();
    for s in inst.servers() {
        offsets.push(servers.len());
        servers.extend(std::iter::repeat_n(
            Server::weighted(1, s.weight),
            s.capacity as usize,
        ));
    }
    let requests = inst
        .requests()
        .iter()
        .map(|r| {
            r.edges
                .iter()
                .flat_map(|e| {
                    let base = offsets[e.server];
                    let copies = inst.servers()[e.server].capacity as usize;
                    (base..base + copies).map(move |c| Edge::new(c, e.probability))
                })
                .collect()
        })
        .collect();
    let mut meta = inst.metadata().clone();
    meta.generator = format!("{}+split", meta.generator);
    Instance::new(servers, requests, meta).expect("split of a valid instance is valid")
}

/// Parameters for [`gen_random`]. All ranges are inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSpec {
    pub n_servers: usize,
    pub n_requests: usize,
    pub edge_density: f64,
    pub p_range: (f64, f64),
    pub cap_range: (u32, u32),
    pub weight_range: (f64, f64),
    pub seed: u64,
}

fn check_range(
    name: &str,
    (lo, hi): (f64, f64),
    lo_ok: impl Fn(f64) -> bool,
    hi_ok: impl Fn(f64) -> bool,
) -> Result<()> {
    if !(lo <= hi && lo_ok(lo) && hi_ok(hi)) {
        return Err(Error::invalid(format!(
            "{name} range [{lo}, {hi}] is empty or out of bounds"
        )));
    }
    Ok(())
}

fn sample_f64(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Random bipartite instance; every request gets at least one edge (isolated
/// draws are resampled). Deterministic in `spec.seed`.
pub fn gen_random(spec: &RandomSpec) -> Result<Instance> {
    if spec.n_servers == 0 {
        return Err(Error::invalid("n_servers must be positive"));
    }
    if !(spec.edge_density > 0.0 && spec.edge_density <= 1.0) {
        return Err(Error::invalid(format!(
            "edge density {} outside (0, 1]",
            spec.edge_density
        )));
    }
    check_range("p", spec.p_range, |lo| lo > 0.0, |hi| hi <= 1.0)?;
    check_range("weight", spec.weight_range, |lo| lo > 0.0, f64::is_finite)?;
    let (cmin, cmax) = spec.cap_range;
    if cmin == 0 || cmin > cmax {
        return Err(Error::invalid(format!(
            "capacity range [{cmin}, {cmax}] invalid"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let servers: Vec<Server> = (0..spec.n_servers)
        .map(|_| {
            let cap = rng.gen_range(cmin..=cmax);
            Server::weighted(cap, sample_f64(&mut rng, spec.weight_range))
        })
        .collect();
    let mut requests = Vec::with_capacity(spec.n_requests);
    for _ in 0..spec.n_requests {
        let edges = loop {
            let mut edges = Vec::new();
            for s in 0..spec.n_servers {
                if rng.gen_bool(spec.edge_density) {
                    edges.push(Edge::new(s, sample_f64(&mut rng, spec.p_range)));
                }
            }
            if !edges.is_empty() {
                break edges;
            }
        };
        requests.push(edges);
    }
    let meta = Metadata::new("random")
        .with("n_servers", spec.n_servers as u64)
        .with("n_requests", spec.n_requests as u64)
        .with("edge_density", spec.edge_density)
        .with("p_min", spec.p_range.0)
        .with("p_max", spec.p_range.1)
        .with("cap_min", cmin as u64)
        .with("cap_max", cmax as u64)
        .with("w_min", spec.weight_range.0)
        .with("w_max", spec.weight_range.1)
        .with("seed", spec.seed);
    Instance::new(servers, requests, meta)
}

/// Parameters for [`gen_hetero`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroSpec {
    pub n: usize,
    /// Smallest capacity; capacities are `b_min` times a factor drawn
    /// uniformly from `[1, spread]`, rounded.
    pub b_min: u32,
    pub spread: u32,
    pub p_range: (f64, f64),
    pub weight_range: (f64, f64),
    pub seed: u64,
}

/// Weighted, variable-capacity analogue of `G_n^b`: round `i` is adjacent to
/// servers `i..=n` with per-edge probabilities drawn from `p_range`, and has
/// `round(b_i / p_mid)` requests where `p_mid` is the midpoint of `p_range`,
/// so the expected round load matches the capacity of the round's first server.
pub fn gen_hetero(spec: &HeteroSpec) -> Result<Instance> {
    if spec.n == 0 || spec.b_min == 0 || spec.spread == 0 {
        return Err(Error::invalid("n, b_min and spread must be positive"));
    }
    check_range("p", spec.p_range, |lo| lo > 0.0, |hi| hi <= 1.0)?;
    check_range("weight", spec.weight_range, |lo| lo > 0.0, f64::is_finite)?;
    let b_max = spec
        .b_min
        .checked_mul(spec.spread)
        .ok_or_else(|| Error::invalid("b_min * spread overflows"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // The scale factors and weights use a fixed number of draws, so the same
    // seed gives the same servers up to scaling for every b_min.
    let servers: Vec<Server> = (0..spec.n)
        .map(|_| {
            let factor = sample_f64(&mut rng, (1.0, spec.spread as f64));
            let cap = ((spec.b_min as f64 * factor).round() as u32).clamp(spec.b_min, b_max);
            Server::weighted(cap, sample_f64(&mut rng, spec.weight_range))
        })
        .collect();
    let p_mid = 0.5 * (spec.p_range.0 + spec.p_range.1);
    let mut requests = Vec::new();
    for round in 0..spec.n {
        let size = (servers[round].capacity as f64 / p_mid).round().max(1.0) as usize;
        for _ in 0..size {
            requests.push(
                (round..spec.n)
                    .map(|s| Edge::new(s, sample_f64(&mut rng, spec.p_range)))
                    .collect(),
            );
        }
    }
    let meta = Metadata::new("hetero")
        .with("n", spec.n as u64)
        .with("b_min", spec.b_min as u64)
        .with("spread", spec.spread as u64)
        .with("p_min", spec.p_range.0)
        .with("p_max", spec.p_range.1)
        .with("w_min", spec.weight_range.0)
        .with("w_max", spec.weight_range.1)
        .with("seed", spec.seed);
    Instance::new(servers, requests, meta)
}
