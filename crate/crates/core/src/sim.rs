//! Step loop: control, broadcast, receive and reference update for every
//! agent, with traces and end-of-run checks.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{mix_traced, outgoing, update_reference, DelayEstimatorState, Protocol};
use crate::mpc::{AgentModel, MpcSolution};
use crate::network::{Broadcast, Network};
use crate::numerics::{norm2, vec_sub};
use crate::scenario::{Scenario, Thresholds};
use crate::{Error, Real, Result};

/// Tolerance for membership checks on recorded states and references.
pub const TRACE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub protocol: Protocol,
    pub delays: bool,
    pub steps: usize,
    pub seed: u64,
    /// Fan agent work out over the rayon pool.
    #[serde(skip, default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

impl RunOptions {
    /// Options declared in the scenario file.
    pub fn from_scenario<T>(s: &Scenario<T>) -> Self {
        RunOptions {
            protocol: s.file.protocol,
            delays: s.file.delays.resolve(s.file.protocol),
            steps: s.file.steps,
            seed: s.file.seed,
            parallel: true,
        }
    }

    /// Same options for another protocol, with delays at that protocol's
    /// nominal setting.
    pub fn with_protocol(self, protocol: Protocol) -> Self {
        RunOptions {
            protocol,
            delays: protocol.nominal_delays(),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AgentRecord<T> {
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub y: Vec<T>,
    pub w: Vec<T>,
    pub w_bar0: Vec<T>,
    pub objective: T,
    pub active: usize,
    pub iterations: usize,
}

/// One delivered message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub receiver: usize,
    pub sender: usize,
    pub sent_at: usize,
    pub delay: usize,
    /// Delay compensated by the protocol, if any.
    pub compensated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StepRecord<T> {
    pub t: usize,
    pub graph: usize,
    pub delta: T,
    pub agents: Vec<AgentRecord<T>>,
    pub messages: Vec<MessageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AgentState<T> {
    pub x: Vec<T>,
    pub w: Vec<T>,
}

/// End-of-run metrics and verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub scenario: String,
    pub protocol: Protocol,
    pub delays: bool,
    pub seed: u64,
    pub steps: usize,
    pub rho: usize,
    pub thresholds: Thresholds,
    pub initial_reference_projected: Vec<bool>,
    pub final_delta: Option<f64>,
    /// Max δ over the final window.
    pub final_window_delta: Option<f64>,
    /// Max tracking error `‖y_i − Q_e w_i‖` over the final window.
    pub final_window_tracking: Option<f64>,
    /// Max `‖y_i(t) − y_i(t−ρ)‖` over the final window.
    pub final_window_periodicity: Option<f64>,
    /// Min δ over the failure window.
    pub failure_window_min_delta: Option<f64>,
    /// Largest excursion of a recorded `(x, u)` outside its constraint set.
    pub max_constraint_violation: f64,
    /// Every final reference lies in every agent's admissible set.
    pub final_references_admissible: bool,
    /// First step from which every compensated delay equals the true delay.
    pub delay_estimates_exact_from: Option<usize>,
    pub converged: bool,
    pub failure_reproduced: bool,
    pub expected_convergent: bool,
    pub outcome_as_expected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SimTrace<T> {
    pub options: RunOptions,
    pub agent_names: Vec<String>,
    pub initial: Vec<AgentState<T>>,
    pub steps: Vec<StepRecord<T>>,
    pub last: Vec<AgentState<T>>,
    pub summary: SimSummary,
}

/// Max pairwise Euclidean distance.
pub fn consensus_error<T: Real>(ys: &[&[T]]) -> T {
    let mut worst = T::zero();
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            worst = worst.max(norm2(&vec_sub(ys[i], ys[j])));
        }
    }
    worst
}

#[derive(Debug, Clone)]
struct AgentRun<T> {
    x: Vec<T>,
    w: Vec<T>,
    warm: Option<MpcSolution<T>>,
    est: DelayEstimatorState,
    clock_offset: i64,
}

/// Live state of a run; advanced one step at a time by [`Simulation::tick`].
#[derive(Debug, Clone)]
pub struct Simulation<'a, T> {
    scenario: &'a Scenario<T>,
    options: RunOptions,
    network: Network<T>,
    agents: Vec<AgentRun<T>>,
    t: usize,
}

fn abort<T: Real>(step: usize, agent: usize, state: &AgentRun<T>, err: Error) -> Error {
    let context = serde_json::json!({
        "step": step,
        "agent": agent,
        "x": state.x.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
        "w": state.w.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
        "phi": state.est.phi_self,
    });
    Error::Aborted {
        step,
        agent,
        source: Box::new(err),
        context: context.to_string(),
    }
}

impl<'a, T: Real> Simulation<'a, T> {
    pub fn new(scenario: &'a Scenario<T>, options: RunOptions) -> Self {
        let n = scenario.agents.len();
        let tau_lower = scenario.file.network.delays.tau_lower;
        let agents = scenario
            .file
            .agents
            .iter()
            .enumerate()
            .map(|(i, decl)| AgentRun {
                x: scenario.x0[i].clone(),
                w: scenario.w0[i].clone(),
                warm: None,
                est: DelayEstimatorState::new(
                    i,
                    decl.phi0,
                    (0..n).map(|j| if i == j { 0 } else { tau_lower }).collect(),
                ),
                clock_offset: if options.protocol == Protocol::Cp0Ti { decl.clock_offset } else { 0 },
            })
            .collect();
        let network = Network::new(
            scenario.schedule.clone(),
            scenario.file.network.delays,
            options.delays,
            options.seed,
        );
        Simulation {
            scenario,
            options,
            network,
            agents,
            t: 0,
        }
    }

    /// Continues the run under another protocol. Delay estimators keep their
    /// history.
    pub fn switch_protocol(&mut self, protocol: Protocol) {
        self.options.protocol = protocol;
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn states(&self) -> Vec<AgentState<T>> {
        self.agents
            .iter()
            .map(|a| AgentState {
                x: a.x.clone(),
                w: a.w.clone(),
            })
            .collect()
    }

    /// Runs one step: (1) MPC and plant update, (2) broadcast,
    /// (3) delivery and reference update. Each phase finishes for all agents
    /// before the next starts.
    pub fn tick(&mut self) -> Result<StepRecord<T>> {
        let t = self.t;
        let sc = self.scenario;
        let mode = self.options.protocol;

        let control = |(i, (a, st)): (usize, (&AgentModel<T>, &AgentRun<T>))| {
            a.control_step(&st.x, &st.w, st.warm.as_ref())
                .map_err(|e| abort(t, i, st, e))
        };
        let sols: Vec<MpcSolution<T>> = if self.options.parallel {
            sc.agents
                .par_iter()
                .zip(self.agents.par_iter())
                .enumerate()
                .map(control)
                .collect::<Result<_>>()?
        } else {
            sc.agents.iter().zip(self.agents.iter()).enumerate().map(control).collect::<Result<_>>()?
        };

        let mut records = Vec::with_capacity(sols.len());
        for ((a, st), sol) in sc.agents.iter().zip(self.agents.iter_mut()).zip(sols) {
            records.push(AgentRecord {
                x: st.x.clone(),
                u: sol.u.clone(),
                y: a.output(&st.x),
                w: st.w.clone(),
                w_bar0: sol.w_bar0.clone(),
                objective: sol.objective,
                active: sol.active_constraints,
                iterations: sol.iterations,
            });
            st.x = a.plant_step(&st.x, &sol.u);
            st.warm = Some(sol);
        }

        for (i, st) in self.agents.iter().enumerate() {
            let clock = t as i64 + st.clock_offset;
            self.network.broadcast(
                i,
                Broadcast {
                    w: outgoing(&sc.exo, &st.w, mode, clock),
                    phi: st.est.phi_self,
                },
            );
        }

        let draw = self.network.draw(t);
        let inboxes = self.network.deliver(t, &draw)?;
        let update = |(i, ((a, st), inbox)): (usize, ((&AgentModel<T>, &mut AgentRun<T>), &Vec<_>))| {
            let clock = t as i64 + st.clock_offset;
            let result = mix_traced(inbox, mode, &mut st.est, &sc.exo)
                .and_then(|(mixed, used)| Ok((update_reference(a, &sc.exo, &mixed, mode, clock)?, used)));
            match result {
                Ok((w, used)) => {
                    st.w = w;
                    st.est.tick();
                    Ok(used)
                }
                Err(e) => Err(abort(t, i, st, e)),
            }
        };
        let used: Vec<Vec<Option<usize>>> = if self.options.parallel {
            sc.agents
                .par_iter()
                .zip(self.agents.par_iter_mut())
                .zip(inboxes.par_iter())
                .enumerate()
                .map(update)
                .collect::<Result<_>>()?
        } else {
            sc.agents
                .iter()
                .zip(self.agents.iter_mut())
                .zip(inboxes.iter())
                .enumerate()
                .map(update)
                .collect::<Result<_>>()?
        };

        let messages = inboxes
            .iter()
            .zip(&used)
            .enumerate()
            .flat_map(|(i, (inbox, used))| {
                inbox.iter().zip(used).map(move |(e, &c)| MessageRecord {
                    receiver: i,
                    sender: e.sender,
                    sent_at: e.sent_at,
                    delay: e.delay,
                    compensated: c,
                })
            })
            .collect();
        let ys: Vec<&[T]> = records.iter().map(|r| r.y.as_slice()).collect();
        let delta = consensus_error(&ys);
        self.t += 1;
        Ok(StepRecord {
            t,
            graph: draw.graph,
            delta,
            agents: records,
            messages,
        })
    }
}

/// Runs a full simulation and evaluates the summary.
pub fn run<T: Real>(scenario: &Scenario<T>, options: RunOptions) -> Result<SimTrace<T>> {
    let mut sim = Simulation::new(scenario, options);
    let initial = sim.states();
    let mut steps = Vec::with_capacity(options.steps);
    for _ in 0..options.steps {
        steps.push(sim.tick()?);
    }
    let last = sim.states();
    let summary = summarize(scenario, &options, &steps, &last)?;
    Ok(SimTrace {
        options,
        agent_names: scenario.file.agents.iter().map(|a| a.name.clone()).collect(),
        initial,
        steps,
        last,
        summary,
    })
}

fn window_max<T: Real>(steps: &[StepRecord<T>], len: usize, f: impl Fn(&StepRecord<T>) -> Option<T>) -> Option<f64> {
    let start = steps.len().saturating_sub(len);
    steps[start..]
        .iter()
        .filter_map(f)
        .map(|v| v.to_f64_lossy())
        .reduce(f64::max)
}

fn summarize<T: Real>(
    scenario: &Scenario<T>,
    options: &RunOptions,
    steps: &[StepRecord<T>],
    last: &[AgentState<T>],
) -> Result<SimSummary> {
    let th = scenario.file.thresholds.clone();
    let exo = &scenario.exo;
    let rho = exo.rho();
    let tracking = |s: &StepRecord<T>| {
        s.agents
            .iter()
            .map(|r| norm2(&vec_sub(&r.y, &exo.output(&r.w))))
            .reduce(T::max)
    };
    let periodicity = |s: &StepRecord<T>| {
        (s.t >= rho).then(|| {
            let past = &steps[s.t - rho];
            s.agents
                .iter()
                .zip(&past.agents)
                .map(|(a, b)| norm2(&vec_sub(&a.y, &b.y)))
                .fold(T::zero(), T::max)
        })
    };
    let final_window_delta = window_max(steps, th.final_window, |s| Some(s.delta));
    let final_window_tracking = window_max(steps, th.final_window, tracking);
    let final_window_periodicity = window_max(steps, th.final_window, periodicity);
    let failure_window_min_delta = {
        let start = steps.len().saturating_sub(th.failure_window);
        steps[start..].iter().map(|s| s.delta.to_f64_lossy()).reduce(f64::min)
    };

    let mut max_violation = 0.0f64;
    for s in steps {
        for (r, a) in s.agents.iter().zip(&scenario.agents) {
            let xu: Vec<T> = r.x.iter().chain(&r.u).copied().collect();
            max_violation = max_violation.max(a.z.max_violation(&xu)?.to_f64_lossy());
        }
    }

    let tol = T::lit(TRACE_TOL);
    let mut final_references_admissible = true;
    for st in last {
        for a in &scenario.agents {
            final_references_admissible &= a.sets.reference_admissible(&st.w, tol)?;
        }
    }

    let delay_estimates_exact_from = matches!(options.protocol, Protocol::Cp2 | Protocol::Cp3).then(|| {
        steps
            .iter()
            .rposition(|s| s.messages.iter().any(|m| m.compensated.is_some_and(|c| c != m.delay)))
            .map_or(0, |k| steps[k].t + 1)
    });

    let converged = matches!(
        (final_window_delta, final_window_tracking, final_window_periodicity),
        (Some(d), Some(e), Some(p)) if d <= th.consensus && e <= th.tracking && p <= th.periodicity
    );
    let failure_reproduced = failure_window_min_delta.is_some_and(|d| d > th.failure_floor);
    let expected_convergent = options.protocol.expected_convergent();
    Ok(SimSummary {
        scenario: scenario.file.name.clone(),
        protocol: options.protocol,
        delays: options.delays,
        seed: options.seed,
        steps: options.steps,
        rho,
        thresholds: th,
        initial_reference_projected: scenario.w0_projected.clone(),
        final_delta: steps.last().map(|s| s.delta.to_f64_lossy()),
        final_window_delta,
        final_window_tracking,
        final_window_periodicity,
        failure_window_min_delta,
        max_constraint_violation: max_violation,
        final_references_admissible,
        delay_estimates_exact_from,
        converged,
        failure_reproduced,
        expected_convergent,
        outcome_as_expected: if expected_convergent { converged } else { failure_reproduced },
    })
}

fn fmt_all<T: Real>(v: &[T]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| x.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

impl<T: Real> SimTrace<T> {
    /// δ per step.
    pub fn deltas(&self) -> Vec<T> {
        self.steps.iter().map(|s| s.delta).collect()
    }

    /// Writes `agent_<i>.csv`, `network.csv`, `messages.csv` and `summary.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for i in 0..self.agent_names.len() {
            let mut wr = csv::Writer::from_path(dir.join(format!("agent_{i}.csv"))).map_err(csv_err)?;
            let first = self.steps.first().map(|s| &s.agents[i]);
            let dims = first.map_or((0, 0, 0, 0), |r| (r.x.len(), r.u.len(), r.y.len(), r.w.len()));
            let mut header = vec!["t".to_string()];
            for (p, n) in [("x", dims.0), ("u", dims.1), ("y", dims.2), ("w", dims.3), ("wbar", dims.3)] {
                header.extend((0..n).map(|k| format!("{p}{k}")));
            }
            header.extend(["objective", "active", "iterations"].map(String::from));
            wr.write_record(&header).map_err(csv_err)?;
            for s in &self.steps {
                let r = &s.agents[i];
                let row: Vec<String> = std::iter::once(s.t.to_string())
                    .chain(fmt_all(&r.x))
                    .chain(fmt_all(&r.u))
                    .chain(fmt_all(&r.y))
                    .chain(fmt_all(&r.w))
                    .chain(fmt_all(&r.w_bar0))
                    .chain([r.objective.to_string(), r.active.to_string(), r.iterations.to_string()])
                    .collect();
                wr.write_record(&row).map_err(csv_err)?;
            }
            wr.flush()?;
        }
        let mut wr = csv::Writer::from_path(dir.join("network.csv")).map_err(csv_err)?;
        wr.write_record(["t", "graph", "delta"]).map_err(csv_err)?;
        for s in &self.steps {
            wr.write_record([s.t.to_string(), s.graph.to_string(), s.delta.to_string()])
                .map_err(csv_err)?;
        }
        wr.flush()?;
        let mut wr = csv::Writer::from_path(dir.join("messages.csv")).map_err(csv_err)?;
        wr.write_record(["t", "receiver", "sender", "sent_at", "delay", "compensated"])
            .map_err(csv_err)?;
        for s in &self.steps {
            for m in &s.messages {
                wr.write_record([
                    s.t.to_string(),
                    m.receiver.to_string(),
                    m.sender.to_string(),
                    m.sent_at.to_string(),
                    m.delay.to_string(),
                    m.compensated.map_or(String::new(), |c| c.to_string()),
                ])
                .map_err(csv_err)?;
            }
        }
        wr.flush()?;
        let summary = serde_json::json!({
            "agents": self.agent_names,
            "options": self.options,
            "summary": self.summary,
            "initial": self.initial,
            "final": self.last,
        });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(())
    }
}
