use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-9;

/// Finitely supported distribution on the real line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalDist1D {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalDist1D {
    /// Equal weights on `samples`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Parameter("empirical distribution needs at least one sample".into()));
        }
        let w = 1.0 / samples.len() as f64;
        Self::weighted(samples.to_vec(), vec![w; samples.len()])
    }

    pub fn weighted(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::shape("weighted support", points.len(), weights.len()));
        }
        if points.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weighted support".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Parameter("weights must be >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Parameter(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, weights })
    }

    /// Random support of `n` points in `[lo, hi)` with Dirichlet-like weights.
    pub fn random<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let points: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let total: f64 = raw.iter().sum();
        Self {
            points,
            weights: raw.iter().map(|w| w / total).collect(),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

/// Exact `W₁` on the line as `∫ |F_p − F_q| dx` over the merged support.
/// For equal-size unweighted samples this is the mean gap of the sorted
/// samples.
pub fn wasserstein_1d(p: &EmpiricalDist1D, q: &EmpiricalDist1D) -> f64 {
    let mut events: Vec<(f64, f64)> = p
        .points
        .iter()
        .zip(&p.weights)
        .map(|(&x, &w)| (x, w))
        .chain(q.points.iter().zip(&q.weights).map(|(&x, &w)| (x, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        total += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// Minimum-cost transport between two weighted supports under an arbitrary
/// ground cost, by successive shortest augmenting paths.
pub fn transport_cost(p: &EmpiricalDist1D, q: &EmpiricalDist1D, cost: impl Fn(f64, f64) -> f64) -> f64 {
    let (n, m) = (p.points.len(), q.points.len());
    // Nodes: 0 source, 1..=n supply, n+1..=n+m demand, n+m+1 sink.
    let sink = n + m + 1;
    let mut graph = FlowGraph::new(n + m + 2);
    for i in 0..n {
        graph.add_edge(0, 1 + i, p.weights[i], 0.0);
        for j in 0..m {
            graph.add_edge(1 + i, 1 + n + j, f64::INFINITY, cost(p.points[i], q.points[j]));
        }
    }
    for j in 0..m {
        graph.add_edge(1 + n + j, sink, q.weights[j], 0.0);
    }
    graph.min_cost_flow(0, sink)
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

const CAP_EPS: f64 = 1e-15;
/// Relaxations smaller than this are ignored so rounding cannot create
/// spurious negative cycles.
const COST_EPS: f64 = 1e-12;

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0, cost: -cost });
    }

    /// Pushes as much flow as possible, always along a cheapest residual
    /// path; returns the total cost.
    fn min_cost_flow(&mut self, s: usize, t: usize) -> f64 {
        let nodes = self.adj.len();
        let mut total = 0.0;
        loop {
            let mut dist = vec![f64::INFINITY; nodes];
            let mut via = vec![usize::MAX; nodes];
            dist[s] = 0.0;
            for _ in 0..nodes {
                let mut changed = false;
                for u in 0..nodes {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        if edge.cap > CAP_EPS && dist[u] + edge.cost < dist[edge.to] - COST_EPS {
                            dist[edge.to] = dist[u] + edge.cost;
                            via[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t] == f64::INFINITY {
                return total;
            }
            let mut path = Vec::new();
            let mut v = t;
            while v != s {
                let e = via[v];
                path.push(e);
                assert!(path.len() <= nodes, "residual path does not reach the source");
                v = self.edges[e ^ 1].to;
            }
            let push = path.iter().map(|&e| self.edges[e].cap).fold(f64::INFINITY, f64::min);
            for &e in &path {
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
            }
            total += push * dist[t];
        }
    }
}

/// Plug-in divergences between two histograms on a common binning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KlTv {
    /// `f64::INFINITY` when `p` has mass where `q` has none.
    pub kl: f64,
    pub kl_infinite: bool,
    pub tv: f64,
}

pub fn kl_tv(p: &[f64], q: &[f64]) -> Result<KlTv> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::shape("histograms", p.len(), q.len()));
    }
    let mut kl = 0.0;
    let mut infinite = false;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b > 0.0 {
                kl += a * (a / b).ln();
            } else {
                infinite = true;
            }
        }
    }
    let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(KlTv {
        kl: if infinite { f64::INFINITY } else { kl },
        kl_infinite: infinite,
        tv,
    })
}
