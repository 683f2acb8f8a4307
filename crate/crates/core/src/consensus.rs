//! Reference-update protocols run by every agent after its control step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::exosystem::Exosystem;
use crate::mpc::AgentModel;
use crate::numerics::{axpy, Matrix};
use crate::{Error, Real, Result};

/// Tolerance on the row sum of the weights in one inbox.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Averaging in rotating coordinates `z = S^{-t} w` with a shared clock.
    Cp0,
    /// Projected averaging followed by one exosystem step.
    Cp1,
    /// `Cp1` with each delayed reference advanced by its true delay.
    Cp2,
    /// `Cp1` with delays recovered from counter differences.
    Cp3,
    /// `Cp0` where every agent reads its own offset clock.
    #[serde(rename = "cp0-ti")]
    Cp0Ti,
    /// `Cp1` fed with delayed references and no compensation.
    #[serde(rename = "cp1-tau")]
    Cp1Tau,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::Cp0,
        Protocol::Cp1,
        Protocol::Cp2,
        Protocol::Cp3,
        Protocol::Cp0Ti,
        Protocol::Cp1Tau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Cp0 => "cp0",
            Protocol::Cp1 => "cp1",
            Protocol::Cp2 => "cp2",
            Protocol::Cp3 => "cp3",
            Protocol::Cp0Ti => "cp0-ti",
            Protocol::Cp1Tau => "cp1-tau",
        }
    }

    /// Whether the protocol is meant to run over delayed links.
    pub fn nominal_delays(self) -> bool {
        matches!(self, Protocol::Cp2 | Protocol::Cp3 | Protocol::Cp1Tau)
    }

    /// Whether messages carry `z = S^{-t} w` instead of `w`.
    pub fn rotating_frame(self) -> bool {
        matches!(self, Protocol::Cp0 | Protocol::Cp0Ti)
    }

    /// Ablations are expected to keep a consensus gap.
    pub fn expected_convergent(self) -> bool {
        !matches!(self, Protocol::Cp0Ti | Protocol::Cp1Tau)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown protocol '{s}', expected one of cp0, cp1, cp2, cp3, cp0-ti, cp1-tau"
                ))
            })
    }
}

/// One received message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InboxEntry<T> {
    pub sender: usize,
    /// Broadcast vector: the reference, or its rotating-frame image under `cp0` modes.
    pub w: Vec<T>,
    pub phi: Option<i64>,
    /// Step at which the sender broadcast (simulator bookkeeping).
    pub sent_at: usize,
    /// True age of the message, read only by `cp2`.
    pub delay: usize,
    pub weight: T,
}

/// Per-agent delay estimator driven by broadcast counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimatorState {
    pub owner: usize,
    /// Own counter `φ_i(t)`.
    pub phi_self: i64,
    /// Known lower bound of the delay per neighbor.
    pub tau_lower: Vec<usize>,
    /// Running minimum of `Δ = φ_i − φ_j(sent)` per neighbor.
    pub min_delta: Vec<Option<i64>>,
}

impl DelayEstimatorState {
    pub fn new(owner: usize, phi0: i64, tau_lower: Vec<usize>) -> Self {
        let n = tau_lower.len();
        DelayEstimatorState {
            owner,
            phi_self: phi0,
            tau_lower,
            min_delta: vec![None; n],
        }
    }

    /// Advances the own counter by one step.
    pub fn tick(&mut self) {
        self.phi_self += 1;
    }

    /// Records a counter received from `neighbor` and returns the delay estimate.
    pub fn estimate_delay(&mut self, received_phi: i64, neighbor: usize) -> usize {
        if neighbor == self.owner {
            return 0;
        }
        let delta = self.phi_self - received_phi;
        let slot = &mut self.min_delta[neighbor];
        let min = match *slot {
            Some(m) if m <= delta => m,
            _ => {
                *slot = Some(delta);
                delta
            }
        };
        self.tau_lower[neighbor] + (delta - min) as usize
    }
}

/// Delay applied to each inbox entry when mixing, or `None` when the entry is
/// used as received.
fn compensation<T: Real>(
    entry: &InboxEntry<T>,
    mode: Protocol,
    est: &mut DelayEstimatorState,
) -> Result<Option<usize>> {
    Ok(match mode {
        Protocol::Cp2 => Some(entry.delay),
        Protocol::Cp3 => {
            let phi = entry.phi.ok_or_else(|| {
                Error::Validation(format!("message from agent {} carries no counter", entry.sender))
            })?;
            Some(est.estimate_delay(phi, entry.sender))
        }
        _ => None,
    })
}

/// Weighted combination of the inbox. Under `cp2` and `cp3` each term is
/// advanced by `S^τ` with the true or estimated delay.
pub fn mix<T: Real>(
    inbox: &[InboxEntry<T>],
    mode: Protocol,
    est: &mut DelayEstimatorState,
    exo: &Exosystem<T>,
) -> Result<Vec<T>> {
    mix_traced(inbox, mode, est, exo).map(|(w, _)| w)
}

/// Like [`mix`], also returning the delay used for each entry.
pub fn mix_traced<T: Real>(
    inbox: &[InboxEntry<T>],
    mode: Protocol,
    est: &mut DelayEstimatorState,
    exo: &Exosystem<T>,
) -> Result<(Vec<T>, Vec<Option<usize>>)> {
    if inbox.is_empty() {
        return Err(Error::Validation("empty inbox".into()));
    }
    let total: T = inbox.iter().map(|e| e.weight).sum();
    if (total - T::one()).abs() > T::tol(WEIGHT_SUM_TOL) || inbox.iter().any(|e| e.weight <= T::zero()) {
        return Err(Error::Validation(format!(
            "inbox weights must be positive and sum to 1, got sum {total}"
        )));
    }
    let n = exo.n_w();
    let mut out = vec![T::zero(); n];
    let mut used = Vec::with_capacity(inbox.len());
    for e in inbox {
        if e.w.len() != n {
            return Err(Error::dim("mix", format!("message of length {}, n_w {n}", e.w.len())));
        }
        let tau = compensation(e, mode, est)?;
        match tau {
            Some(k) if k > 0 => axpy(e.weight, &exo.advance(&e.w, k as u64), &mut out),
            _ => axpy(e.weight, &e.w, &mut out),
        }
        used.push(tau);
    }
    Ok((out, used))
}

/// Vector broadcast by an agent holding `w` at local time `clock`.
pub fn outgoing<T: Real>(exo: &Exosystem<T>, w: &[T], mode: Protocol, clock: i64) -> Vec<T> {
    if mode.rotating_frame() {
        exo.power_signed(-clock).mul_vec(w)
    } else {
        w.to_vec()
    }
}

/// Next reference from the mixed vector. `clock` is the step index as seen by
/// the agent (global step plus its offset); only rotating-frame modes read it.
pub fn update_reference<T: Real>(
    agent: &AgentModel<T>,
    exo: &Exosystem<T>,
    mixed: &[T],
    mode: Protocol,
    clock: i64,
) -> Result<Vec<T>> {
    if mixed.len() != exo.n_w() {
        return Err(Error::dim(
            "update_reference",
            format!("mixed vector of length {}, n_w {}", mixed.len(), exo.n_w()),
        ));
    }
    let projected = agent.sets.project_reference(&agent.t, mixed)?;
    let step: &Matrix<T> = if mode.rotating_frame() {
        exo.power_signed(clock + 1)
    } else {
        exo.s()
    };
    Ok(step.mul_vec(&projected))
}
