//! Periodic reference generator `w⁺ = S w`, `y_r = Q_e w` with `S^ρ = I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, mat_exp, Matrix};
use crate::scalar::Real;

/// Upper bound on the period, guarding against configuration mistakes.
pub const RHO_CAP: u64 = 1_000_000;

/// Tolerance of the `S^ρ = I` check.
pub const PERIOD_TOL: f64 = 1e-9;

/// Planar oscillator block `exp(S^c·dt)` with
/// `S^c = 2π/(period·sin θ) [[−cos θ, 1], [−1, cos θ]]`; its eigenvalues are
/// `±i·2π/period` for every `θ ∈ (0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationBlock {
    /// Period in seconds.
    pub period: f64,
    /// Shape angle θ as a multiple of π.
    pub theta_over_pi: f64,
    /// Sampling interval in seconds.
    pub dt: f64,
}

impl RotationBlock {
    pub fn generator<T: Real>(&self) -> Result<Matrix<T>> {
        if !(self.period > 0.0 && self.dt > 0.0) {
            return Err(Error::Validation(format!(
                "rotation block needs positive period and dt, got {} and {}",
                self.period, self.dt
            )));
        }
        let theta = T::lit(self.theta_over_pi) * T::PI();
        let sin = theta.sin();
        if !(sin.abs() > T::lit(1e-12)) {
            return Err(Error::Validation("rotation block angle must not be a multiple of π".into()));
        }
        let cos = theta.cos();
        let k = T::lit(2.0) * T::PI() / (T::lit(self.period) * sin);
        Matrix::from_rows(&[[-k * cos, k], [-k, k * cos]])
    }

    /// `exp(S^c·dt)`.
    pub fn step_matrix<T: Real>(&self) -> Result<Matrix<T>> {
        mat_exp(&self.generator::<T>()?.scale(T::lit(self.dt)))
    }

    /// Smallest number of steps after which the block returns to identity.
    pub fn step_period(&self) -> Result<u64> {
        let ratio = self.dt / self.period;
        for q in 1..=RHO_CAP {
            let turns = q as f64 * ratio;
            if (turns - turns.round()).abs() <= 1e-11 && turns.round() >= 1.0 {
                return Ok(q);
            }
        }
        Err(Error::Aperiodic(format!(
            "block with period {} s and dt {} s has no integer step period below {}",
            self.period, self.dt, RHO_CAP
        )))
    }
}

#[derive(Debug, Clone)]
pub struct Exosystem<T> {
    s: Matrix<T>,
    qe: Matrix<T>,
    rho: usize,
    /// `S^k` for `k = 0..=ρ`, with `S^ρ` snapped to `I`.
    s_powers: Vec<Matrix<T>>,
}

impl<T: Real> Exosystem<T> {
    /// `S = diag(I_identity, S_1, …)` with `ρ` the least common multiple of the
    /// block step periods.
    pub fn from_blocks(identity: usize, blocks: &[RotationBlock], qe: Matrix<T>) -> Result<Self> {
        let mut rho: u64 = 1;
        let mut mats = vec![Matrix::identity(identity)];
        for b in blocks {
            let q = b.step_period()?;
            rho = lcm(rho, q);
            if rho > RHO_CAP {
                return Err(Error::Aperiodic(format!(
                    "common period exceeds the cap of {RHO_CAP} steps"
                )));
            }
            mats.push(b.step_matrix()?);
        }
        let refs: Vec<&Matrix<T>> = mats.iter().collect();
        Self::with_period(Matrix::block_diag(&refs), qe, rho as usize)
    }

    /// Explicit `S`; the period is found by powering up to the cap.
    pub fn from_matrix(s: Matrix<T>, qe: Matrix<T>) -> Result<Self> {
        check_shapes(&s, &qe)?;
        let n = s.rows();
        let id = Matrix::identity(n);
        let tol = T::tol(PERIOD_TOL);
        let mut p = s.clone();
        for k in 1..=RHO_CAP as usize {
            if p.max_abs_diff(&id) <= tol {
                return Self::with_period(s, qe, k);
            }
            if !p.norm_max().is_finite() || p.norm_max() > T::lit(1e6) {
                break;
            }
            p = &p * &s;
        }
        Err(Error::Aperiodic(format!("no S^k = I for k ≤ {RHO_CAP}")))
    }

    /// Builds the power table for a known period and validates `S^ρ = I`.
    pub fn with_period(s: Matrix<T>, qe: Matrix<T>, rho: usize) -> Result<Self> {
        check_shapes(&s, &qe)?;
        if rho == 0 {
            return Err(Error::Aperiodic("period must be positive".into()));
        }
        let n = s.rows();
        let mut s_powers = Vec::with_capacity(rho + 1);
        s_powers.push(Matrix::identity(n));
        for k in 1..=rho {
            let next = &s_powers[k - 1] * &s;
            s_powers.push(next);
        }
        let id = Matrix::identity(n);
        let err = s_powers[rho].max_abs_diff(&id);
        if !(err <= T::tol(PERIOD_TOL)) {
            return Err(Error::Aperiodic(format!(
                "‖S^{rho} − I‖ = {:.3e} exceeds {PERIOD_TOL:e}",
                err.to_f64_lossy()
            )));
        }
        s_powers[rho] = id;
        Ok(Self {
            s,
            qe,
            rho,
            s_powers,
        })
    }

    pub fn s(&self) -> &Matrix<T> {
        &self.s
    }

    pub fn qe(&self) -> &Matrix<T> {
        &self.qe
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn n_w(&self) -> usize {
        self.s.rows()
    }

    pub fn n_y(&self) -> usize {
        self.qe.rows()
    }

    /// `S^k` from the table.
    pub fn power(&self, k: u64) -> &Matrix<T> {
        &self.s_powers[(k % self.rho as u64) as usize]
    }

    /// `S^{−k} = S^{ρ − (k mod ρ)}`.
    pub fn inverse_power(&self, k: u64) -> &Matrix<T> {
        let r = self.rho as u64;
        &self.s_powers[((r - k % r) % r) as usize]
    }

    /// `S^k` for a signed exponent.
    pub fn power_signed(&self, k: i64) -> &Matrix<T> {
        let r = self.rho as i64;
        &self.s_powers[k.rem_euclid(r) as usize]
    }

    /// `S^steps · w`.
    pub fn advance(&self, w: &[T], steps: u64) -> Vec<T> {
        self.power(steps).mul_vec(w)
    }

    /// `S^{−steps} · w`.
    pub fn retreat(&self, w: &[T], steps: u64) -> Vec<T> {
        self.inverse_power(steps).mul_vec(w)
    }

    /// Reference output `Q_e w`.
    pub fn output(&self, w: &[T]) -> Vec<T> {
        self.qe.mul_vec(w)
    }

    /// `T = Σ_{k=1}^{ρ} (S^k)' T0 S^k`, which satisfies `S' T S = T`.
    pub fn build_t(&self, t0: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.n_w();
        if t0.shape() != (n, n) {
            return Err(Error::dim("build_t", format!("T0 {:?}, n_w {n}", t0.shape())));
        }
        let scale = t0.norm_max().max(T::one());
        if !t0.is_symmetric(T::tol(1e-12) * scale) || cholesky(t0, T::lit(1e-14)).is_none() {
            return Err(Error::Validation("T0 must be symmetric positive definite".into()));
        }
        let mut t = Matrix::zeros(n, n);
        for k in 1..=self.rho {
            let sk = &self.s_powers[k];
            t = &t + &sk.tr_mul(&(t0 * sk));
        }
        Ok(t.symmetrized())
    }

    pub fn cast<U: Real>(&self) -> Exosystem<U> {
        Exosystem {
            s: self.s.cast(),
            qe: self.qe.cast(),
            rho: self.rho,
            s_powers: self.s_powers.iter().map(Matrix::cast).collect(),
        }
    }
}

fn check_shapes<T: Real>(s: &Matrix<T>, qe: &Matrix<T>) -> Result<()> {
    if !s.is_square() || qe.cols() != s.rows() {
        return Err(Error::dim(
            "exosystem",
            format!("S {:?}, Qe {:?}", s.shape(), qe.shape()),
        ));
    }
    Ok(())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
