//! Switching digraphs, row-stochastic weights, random delays and message
//! buffers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::InboxEntry;
use crate::numerics::Matrix;
use crate::{Error, Real, Result};

/// RNG stream used for graph switching.
pub const GRAPH_STREAM: u64 = 1;
/// RNG stream used for delay sampling.
pub const DELAY_STREAM: u64 = 2;

/// How the active graph is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Switching {
    /// Uniformly at random among the graphs, from the run seed.
    Random,
    RoundRobin,
    Fixed { index: usize },
}

/// Declared network: graphs as in-edge lists, `[receiver, sender]`, 0-based.
/// Self-loops are added automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: usize,
    pub graphs: Vec<Vec<[usize; 2]>>,
    pub switching: Switching,
    /// Minimum nonzero weight.
    pub a_bar: f64,
    pub delays: DelayModel,
}

/// Categorical delay distribution on `{tau_lower..=tau_max}`: `tau_lower`
/// with probability `zero_prob`, otherwise uniform on the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub tau_max: usize,
    pub tau_lower: usize,
    pub zero_prob: f64,
}

impl DelayModel {
    pub fn validate(&self) -> Result<()> {
        if self.tau_lower > self.tau_max {
            return Err(Error::Config(format!(
                "delay lower bound {} exceeds tau_max {}",
                self.tau_lower, self.tau_max
            )));
        }
        if !(0.0..=1.0).contains(&self.zero_prob) {
            return Err(Error::Config(format!(
                "zero_prob must lie in [0, 1], got {}",
                self.zero_prob
            )));
        }
        if self.tau_max > self.tau_lower && self.zero_prob <= 0.0 {
            return Err(Error::Config(
                "zero_prob must be positive so the minimum delay is eventually observed".into(),
            ));
        }
        Ok(())
    }

    /// Probability of each delay value, indexed from `tau_lower`.
    pub fn probabilities(&self) -> Vec<f64> {
        let span = self.tau_max - self.tau_lower;
        if span == 0 {
            return vec![1.0];
        }
        let rest = (1.0 - self.zero_prob) / span as f64;
        std::iter::once(self.zero_prob)
            .chain(std::iter::repeat(rest).take(span))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.tau_max == self.tau_lower {
            return self.tau_lower;
        }
        if rng.gen::<f64>() < self.zero_prob {
            self.tau_lower
        } else {
            rng.gen_range(self.tau_lower + 1..=self.tau_max)
        }
    }
}

/// Connectivity report for a schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub nodes: usize,
    pub graphs: usize,
    pub union_strongly_connected: bool,
    /// Nodes that some other node cannot reach in the union graph.
    pub unreachable: Vec<usize>,
    /// Smallest window whose union is always strongly connected, if the
    /// switching rule guarantees one.
    pub t_union: Option<usize>,
    pub pass: bool,
}

/// Weighted graphs plus the switching rule.
#[derive(Debug, Clone)]
pub struct GraphSchedule<T> {
    pub weights: Vec<Matrix<T>>,
    pub switching: Switching,
    pub a_bar: T,
}

fn check_edges(nodes: usize, graphs: &[Vec<[usize; 2]>]) -> Result<()> {
    if nodes == 0 || graphs.is_empty() {
        return Err(Error::Config("network needs at least one node and one graph".into()));
    }
    for (g, edges) in graphs.iter().enumerate() {
        if let Some(e) = edges.iter().find(|e| e[0] >= nodes || e[1] >= nodes) {
            return Err(Error::Config(format!(
                "graph {g}: edge {e:?} refers to a node outside 0..{nodes}"
            )));
        }
    }
    Ok(())
}

/// Boolean adjacency `adj[i][j]` = "i receives from j", self-loops included.
fn adjacency(nodes: usize, edges: &[[usize; 2]]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; nodes]; nodes];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = true;
    }
    for &[i, j] in edges {
        adj[i][j] = true;
    }
    adj
}

/// Nodes from which some node cannot be reached, by reachability closure on
/// the information-flow graph.
fn unreachable_nodes(adj: &[Vec<bool>]) -> Vec<usize> {
    let n = adj.len();
    // reach[j][i]: information from j reaches i.
    let mut reach: Vec<Vec<bool>> = (0..n).map(|j| (0..n).map(|i| adj[i][j]).collect()).collect();
    for k in 0..n {
        for j in 0..n {
            if reach[j][k] {
                for i in 0..n {
                    if reach[k][i] {
                        reach[j][i] = true;
                    }
                }
            }
        }
    }
    (0..n).filter(|&i| (0..n).any(|j| !reach[j][i])).collect()
}

fn union(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| *p || *q).collect())
        .collect()
}

/// Checks that the union of the graphs is strongly connected and finds the
/// smallest window length over which that holds under the switching rule.
pub fn validate_schedule(spec: &NetworkSpec) -> Result<ScheduleReport> {
    check_edges(spec.nodes, &spec.graphs)?;
    let adj: Vec<_> = spec.graphs.iter().map(|g| adjacency(spec.nodes, g)).collect();
    let total = adj[1..].iter().fold(adj[0].clone(), |acc, g| union(&acc, g));
    let unreachable = unreachable_nodes(&total);
    let connected = |g: &[Vec<bool>]| unreachable_nodes(g).is_empty();
    let m = adj.len();
    let t_union = match spec.switching {
        Switching::Fixed { index } => {
            let g = adj.get(index).ok_or_else(|| {
                Error::Config(format!("fixed graph index {index} but only {m} graphs"))
            })?;
            connected(g).then_some(1)
        }
        Switching::Random => adj.iter().all(|g| connected(g)).then_some(1),
        Switching::RoundRobin => (1..=m).find(|&len| {
            (0..m).all(|start| {
                let w = (1..len).fold(adj[start].clone(), |acc, k| union(&acc, &adj[(start + k) % m]));
                connected(&w)
            })
        }),
    };
    let union_strongly_connected = unreachable.is_empty();
    let pass = match spec.switching {
        Switching::Random => union_strongly_connected,
        _ => t_union.is_some(),
    };
    Ok(ScheduleReport {
        nodes: spec.nodes,
        graphs: m,
        union_strongly_connected,
        unreachable,
        t_union,
        pass,
    })
}

impl<T: Real> GraphSchedule<T> {
    /// Uniform weights over each in-neighborhood, clipped below by `a_bar`
    /// and renormalized.
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self> {
        check_edges(spec.nodes, &spec.graphs)?;
        if !(spec.a_bar > 0.0 && spec.a_bar <= 1.0) {
            return Err(Error::Config(format!("a_bar must lie in (0, 1], got {}", spec.a_bar)));
        }
        let n = spec.nodes;
        let a_bar = T::lit(spec.a_bar);
        let mut weights = Vec::with_capacity(spec.graphs.len());
        for (g, edges) in spec.graphs.iter().enumerate() {
            let adj = adjacency(n, edges);
            let mut w = Matrix::zeros(n, n);
            for i in 0..n {
                let deg = adj[i].iter().filter(|&&b| b).count();
                let uniform = T::one() / T::lit(deg as f64);
                let raw = uniform.max(a_bar);
                let total = raw * T::lit(deg as f64);
                for j in (0..n).filter(|&j| adj[i][j]) {
                    w[(i, j)] = raw / total;
                    if w[(i, j)] < a_bar {
                        return Err(Error::Config(format!(
                            "graph {g}: node {i} has {deg} in-neighbors, weights fall below a_bar"
                        )));
                    }
                }
            }
            weights.push(w);
        }
        if let Switching::Fixed { index } = spec.switching {
            if index >= weights.len() {
                return Err(Error::Config(format!(
                    "fixed graph index {index} but only {} graphs",
                    weights.len()
                )));
            }
        }
        Ok(GraphSchedule {
            weights,
            switching: spec.switching,
            a_bar,
        })
    }

    pub fn nodes(&self) -> usize {
        self.weights[0].rows()
    }
}

/// What one agent sends at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast<T> {
    pub w: Vec<T>,
    pub phi: i64,
}

/// Graph and delays drawn for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDraw {
    pub graph: usize,
    /// `delays[i][j]`: delay on the link from j to i; zero on the diagonal.
    pub delays: Vec<Vec<usize>>,
}

/// Message buffers and random draws for a run.
#[derive(Debug, Clone)]
pub struct Network<T> {
    schedule: GraphSchedule<T>,
    delay_model: DelayModel,
    delays_enabled: bool,
    graph_rng: ChaCha8Rng,
    delay_rng: ChaCha8Rng,
    history: Vec<Vec<Broadcast<T>>>,
}

impl<T: Real> Network<T> {
    pub fn new(schedule: GraphSchedule<T>, delay_model: DelayModel, delays_enabled: bool, seed: u64) -> Self {
        let mut graph_rng = ChaCha8Rng::seed_from_u64(seed);
        graph_rng.set_stream(GRAPH_STREAM);
        let mut delay_rng = ChaCha8Rng::seed_from_u64(seed);
        delay_rng.set_stream(DELAY_STREAM);
        let n = schedule.nodes();
        Network {
            schedule,
            delay_model,
            delays_enabled,
            graph_rng,
            delay_rng,
            history: vec![Vec::new(); n],
        }
    }

    pub fn schedule(&self) -> &GraphSchedule<T> {
        &self.schedule
    }

    /// Draws the graph and link delays for step `t`. Every off-diagonal link
    /// gets a delay whether or not it is live, so the draws do not depend on
    /// the graph sequence.
    pub fn draw(&mut self, t: usize) -> StepDraw {
        let m = self.schedule.weights.len();
        let graph = match self.schedule.switching {
            Switching::Random => self.graph_rng.gen_range(0..m),
            Switching::RoundRobin => t % m,
            Switching::Fixed { index } => index,
        };
        let n = self.schedule.nodes();
        let delays = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j || !self.delays_enabled {
                            0
                        } else {
                            self.delay_model.sample(&mut self.delay_rng)
                        }
                    })
                    .collect()
            })
            .collect();
        StepDraw { graph, delays }
    }

    /// Stores agent `i`'s broadcast for the next step index.
    pub fn broadcast(&mut self, agent: usize, msg: Broadcast<T>) {
        self.history[agent].push(msg);
    }

    /// Builds every inbox at step `t`. Links whose delay reaches before the
    /// first broadcast deliver the step-0 message.
    pub fn deliver(&self, t: usize, draw: &StepDraw) -> Result<Vec<Vec<InboxEntry<T>>>> {
        let w = &self.schedule.weights[draw.graph];
        let n = w.rows();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| w[(i, j)] > T::zero())
                    .map(|j| {
                        let sent_at = t.saturating_sub(draw.delays[i][j]);
                        let msg = self.history[j].get(sent_at).ok_or_else(|| {
                            Error::Validation(format!("agent {j} has no broadcast for step {sent_at}"))
                        })?;
                        Ok(InboxEntry {
                            sender: j,
                            w: msg.w.clone(),
                            phi: Some(msg.phi),
                            sent_at,
                            delay: t - sent_at,
                            weight: w[(i, j)],
                        })
                    })
                    .collect()
            })
            .collect()
    }
}
