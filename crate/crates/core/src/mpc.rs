//! Tracking MPC with an artificial reference. The decision vector is
//! `θ = (w̄(0), v(0), …, v(N−1))`; predicted states are eliminated through
//! `x(k+1) = Ac x(k) + BL w̄(k) + B v(k)`, `w̄(k+1) = S w̄(k)`.

use serde::{Deserialize, Serialize};

use crate::admissible::{compute_o_infty, AdmissibleSets, ClosedLoop};
use crate::error::{Error, Result};
use crate::exosystem::Exosystem;
use crate::numerics::{
    controllability_rank, lyapunov_residual, quad_form, solve_discrete_lyapunov, solve_regulator,
    spectral_radius, symmetric_eigen, vec_sub, Matrix,
};
use crate::polytope::Polytope;
use crate::qp::{QpOptions, QpProblem, QpSolver, QpStatus};
use crate::scalar::Real;

/// Allowed constraint violation of the shifted candidate.
pub const SHIFT_TOL: f64 = 1e-7;

/// Plant, gain, weights and constraints of one agent before any derived
/// quantity is computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AgentSpec<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub c: Matrix<T>,
    pub k: Matrix<T>,
    pub q: Matrix<T>,
    pub r: Matrix<T>,
    pub t0: Matrix<T>,
    pub horizon: usize,
    /// Constraint set over `(x, u)`.
    pub z: Polytope<T>,
    pub epsilon: T,
    pub k_cap: usize,
}

#[derive(Debug, Clone)]
struct Condensed<T> {
    /// `Ac^k`, `k = 0..=N`.
    phi: Vec<Matrix<T>>,
    /// θ-coefficient of `x(k)`.
    psi: Vec<Matrix<T>>,
    hessian: Matrix<T>,
    lin_x: Matrix<T>,
    lin_w: Matrix<T>,
    g: Matrix<T>,
    g0: Vec<T>,
    gx: Matrix<T>,
}

/// One agent with every derived quantity: `Ac = A + BK`, regulator solution
/// `(Π, Γ)`, feedforward `L = Γ − KΠ`, terminal weight `P`, reference weight
/// `T`, admissible sets and the condensed QP data.
#[derive(Debug, Clone)]
pub struct AgentModel<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub c: Matrix<T>,
    pub k: Matrix<T>,
    pub l: Matrix<T>,
    pub ac: Matrix<T>,
    pub pi: Matrix<T>,
    pub gamma: Matrix<T>,
    pub p: Matrix<T>,
    pub q: Matrix<T>,
    pub r: Matrix<T>,
    pub t: Matrix<T>,
    pub horizon: usize,
    pub z: Polytope<T>,
    pub sets: AdmissibleSets<T>,
    pub regulator_residual: T,
    pub lyapunov_residual: T,
    pub closed_loop_radius: T,
    exo: Exosystem<T>,
    cond: Condensed<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MpcSolution<T> {
    pub theta: Vec<T>,
    pub w_bar0: Vec<T>,
    pub v0: Vec<T>,
    pub u: Vec<T>,
    pub predicted_states: Vec<Vec<T>>,
    pub predicted_wbar: Vec<Vec<T>>,
    pub v_seq: Vec<Vec<T>>,
    pub objective: T,
    pub status: QpStatus,
    pub iterations: usize,
    pub active_constraints: usize,
}

impl<T: Real> AgentSpec<T> {
    pub fn cast<U: Real>(&self) -> AgentSpec<U> {
        AgentSpec {
            a: self.a.cast(),
            b: self.b.cast(),
            c: self.c.cast(),
            k: self.k.cast(),
            q: self.q.cast(),
            r: self.r.cast(),
            t0: self.t0.cast(),
            horizon: self.horizon,
            z: self.z.cast(),
            epsilon: U::lit(self.epsilon.to_f64_lossy()),
            k_cap: self.k_cap,
        }
    }
}

impl<T: Real> AgentModel<T> {
    pub fn build(spec: &AgentSpec<T>, exo: &Exosystem<T>) -> Result<Self> {
        let n = spec.a.rows();
        let m = spec.b.cols();
        let nw = exo.n_w();
        let shapes_ok = spec.a.is_square()
            && spec.b.rows() == n
            && spec.c.cols() == n
            && spec.c.rows() == exo.n_y()
            && spec.k.shape() == (m, n)
            && spec.q.shape() == (n, n)
            && spec.r.shape() == (m, m)
            && spec.t0.shape() == (nw, nw)
            && spec.z.dim() == n + m;
        if !shapes_ok {
            return Err(Error::dim(
                "agent",
                format!(
                    "A {:?} B {:?} C {:?} K {:?} Q {:?} R {:?} T0 {:?} Z dim {} n_w {} n_y {}",
                    spec.a.shape(),
                    spec.b.shape(),
                    spec.c.shape(),
                    spec.k.shape(),
                    spec.q.shape(),
                    spec.r.shape(),
                    spec.t0.shape(),
                    spec.z.dim(),
                    nw,
                    exo.n_y()
                ),
            ));
        }
        if spec.horizon < n {
            return Err(Error::Validation(format!(
                "horizon {} shorter than state dimension {n}",
                spec.horizon
            )));
        }
        if controllability_rank(&spec.a, &spec.b)? < n {
            return Err(Error::Validation("(A, B) is not controllable".into()));
        }
        for (name, w) in [("Q", &spec.q), ("R", &spec.r)] {
            if !w.is_symmetric(T::tol(1e-12) * w.norm_max().max(T::one())) {
                return Err(Error::Validation(format!("{name} must be symmetric")));
            }
            let (vals, _) = symmetric_eigen(w);
            if vals.first().is_some_and(|&v| v <= T::zero()) {
                return Err(Error::Validation(format!("{name} must be positive definite")));
            }
        }
        let ac = &spec.a + &(&spec.b * &spec.k);
        let radius = spectral_radius(&ac)?;
        if radius >= T::one() {
            return Err(Error::NotSchur {
                radius: radius.to_f64_lossy(),
            });
        }
        let reg = solve_regulator(&spec.a, &spec.b, &spec.c, exo.s(), exo.qe())?;
        let l = &reg.gamma - &(&spec.k * &reg.pi);
        let p = solve_discrete_lyapunov(&ac, &spec.q)?;
        let lyap = lyapunov_residual(&ac, &p, &spec.q);
        if lyap > T::tol(1e-9) * spec.q.norm_max() {
            return Err(Error::Numeric(format!(
                "Lyapunov residual {:.3e} above tolerance",
                lyap.to_f64_lossy()
            )));
        }
        let t = exo.build_t(&spec.t0)?;
        let bl = &spec.b * &l;
        let sets = compute_o_infty(
            ClosedLoop {
                ac: &ac,
                bl: &bl,
                s: exo.s(),
                k: &spec.k,
                l: &l,
            },
            &spec.z,
            spec.epsilon,
            spec.k_cap,
        )?;
        let mut model = Self {
            a: spec.a.clone(),
            b: spec.b.clone(),
            c: spec.c.clone(),
            k: spec.k.clone(),
            l,
            ac,
            pi: reg.pi,
            gamma: reg.gamma,
            p,
            q: spec.q.clone(),
            r: spec.r.clone(),
            t,
            horizon: spec.horizon,
            z: spec.z.clone(),
            sets,
            regulator_residual: reg.residual,
            lyapunov_residual: lyap,
            closed_loop_radius: radius,
            exo: exo.clone(),
            cond: Condensed {
                phi: Vec::new(),
                psi: Vec::new(),
                hessian: Matrix::zeros(0, 0),
                lin_x: Matrix::zeros(0, 0),
                lin_w: Matrix::zeros(0, 0),
                g: Matrix::zeros(0, 0),
                g0: Vec::new(),
                gx: Matrix::zeros(0, 0),
            },
        };
        model.cond = model.condense()?;
        let (vals, _) = symmetric_eigen(&model.cond.hessian);
        if vals.first().is_some_and(|&v| v <= T::zero()) {
            return Err(Error::Numeric("condensed Hessian is not positive definite".into()));
        }
        Ok(model)
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_u(&self) -> usize {
        self.b.cols()
    }

    pub fn n_w(&self) -> usize {
        self.exo.n_w()
    }

    pub fn exosystem(&self) -> &Exosystem<T> {
        &self.exo
    }

    /// Length of `θ`.
    pub fn decision_dim(&self) -> usize {
        self.n_w() + self.horizon * self.n_u()
    }

    /// `y = Cx`.
    pub fn output(&self, x: &[T]) -> Vec<T> {
        self.c.mul_vec(x)
    }

    /// `x⁺ = Ax + Bu`.
    pub fn plant_step(&self, x: &[T], u: &[T]) -> Vec<T> {
        let mut next = self.a.mul_vec(x);
        for (ni, bi) in next.iter_mut().zip(self.b.mul_vec(u)) {
            *ni += bi;
        }
        next
    }

    fn select_w(&self) -> Matrix<T> {
        let nw = self.n_w();
        let mut sel = Matrix::zeros(nw, self.decision_dim());
        sel.set_block(0, 0, &Matrix::identity(nw));
        sel
    }

    fn select_v(&self, k: usize) -> Matrix<T> {
        let m = self.n_u();
        let mut sel = Matrix::zeros(m, self.decision_dim());
        sel.set_block(0, self.n_w() + k * m, &Matrix::identity(m));
        sel
    }

    fn condense(&self) -> Result<Condensed<T>> {
        let n = self.n_x();
        let nn = self.horizon;
        let d = self.decision_dim();
        let sel_w = self.select_w();
        let bl = &self.b * &self.l;
        let mut phi = vec![Matrix::identity(n)];
        let mut psi = vec![Matrix::zeros(n, d)];
        for k in 0..nn {
            let next_phi = &self.ac * &phi[k];
            let mut next_psi = &self.ac * &psi[k];
            next_psi = &next_psi + &(&bl * &(self.exo.power(k as u64) * &sel_w));
            next_psi = &next_psi + &(&self.b * &self.select_v(k));
            phi.push(next_phi);
            psi.push(next_psi);
        }
        // x̄(k) = x(k) − Π S^k w̄(0) has θ-coefficient psi_k − Π S^k Sel_w
        let ebar: Vec<Matrix<T>> = (0..=nn)
            .map(|k| &psi[k] - &(&self.pi * &(self.exo.power(k as u64) * &sel_w)))
            .collect();
        let two = T::lit(2.0);
        let mut hessian = sel_w.tr_mul(&(&self.t * &sel_w));
        let mut lin_x = Matrix::zeros(d, n);
        for k in 0..nn {
            hessian = &hessian + &ebar[k].tr_mul(&(&self.q * &ebar[k]));
            let sv = self.select_v(k);
            hessian = &hessian + &sv.tr_mul(&(&self.r * &sv));
            lin_x = &lin_x + &ebar[k].tr_mul(&(&self.q * &phi[k]));
        }
        hessian = &hessian + &ebar[nn].tr_mul(&(&self.p * &ebar[nn]));
        lin_x = &lin_x + &ebar[nn].tr_mul(&(&self.p * &phi[nn]));
        let hessian = hessian.scale(two).symmetrized();
        let lin_x = lin_x.scale(two);
        let lin_w = sel_w.tr_mul(&self.t).scale(-two);

        // stage constraints on (x(k), K x(k) + L w̄(k) + v(k)), k < N
        let hz = self.z.matrix();
        let zr = self.z.rows();
        let o = self.sets.o_infty.matrix();
        let orows = o.rows();
        let rows = nn * zr + orows;
        let mut g = Matrix::zeros(rows, d);
        let mut gx = Matrix::zeros(rows, n);
        let mut g0 = Vec::with_capacity(rows);
        for k in 0..nn {
            let sk_w = self.exo.power(k as u64) * &sel_w;
            let u_theta = &(&(&self.k * &psi[k]) + &(&self.l * &sk_w)) + &self.select_v(k);
            let xu_theta = Matrix::vstack(&[&psi[k], &u_theta])?;
            let xu_x = Matrix::vstack(&[&phi[k], &(&self.k * &phi[k])])?;
            g.set_block(k * zr, 0, &(hz * &xu_theta));
            gx.set_block(k * zr, 0, &(hz * &xu_x));
            g0.extend_from_slice(self.z.rhs());
        }
        let terminal_theta = Matrix::vstack(&[&psi[nn], &(self.exo.power(nn as u64) * &sel_w)])?;
        let terminal_x = Matrix::vstack(&[&phi[nn], &Matrix::zeros(self.n_w(), n)])?;
        g.set_block(nn * zr, 0, &(o * &terminal_theta));
        gx.set_block(nn * zr, 0, &(o * &terminal_x));
        g0.extend_from_slice(self.sets.o_infty.rhs());
        Ok(Condensed {
            phi,
            psi,
            hessian,
            lin_x,
            lin_w,
            g,
            g0,
            gx,
        })
    }

    /// Constraint right-hand side at state `x`.
    fn rhs(&self, x: &[T]) -> Vec<T> {
        let gx = self.cond.gx.mul_vec(x);
        self.cond.g0.iter().zip(gx).map(|(&a, b)| a - b).collect()
    }

    fn check_inputs(&self, x: &[T], w: &[T]) -> Result<()> {
        if x.len() != self.n_x() || w.len() != self.n_w() {
            return Err(Error::dim(
                "mpc",
                format!("x {} (want {}), w {} (want {})", x.len(), self.n_x(), w.len(), self.n_w()),
            ));
        }
        Ok(())
    }

    /// The condensed QP at `(x, w)`.
    pub fn build_qp(&self, x: &[T], w: &[T]) -> Result<QpProblem<T>> {
        self.check_inputs(x, w)?;
        let lx = self.cond.lin_x.mul_vec(x);
        let lw = self.cond.lin_w.mul_vec(w);
        let lin = lx.into_iter().zip(lw).map(|(a, b)| a + b).collect();
        Ok(QpProblem::new(self.cond.hessian.clone(), lin).with_ineq(self.cond.g.clone(), self.rhs(x)))
    }

    /// Predicted states `x(0..=N)` for decision `θ`.
    pub fn predict(&self, x: &[T], theta: &[T]) -> Vec<Vec<T>> {
        (0..=self.horizon)
            .map(|k| {
                let mut xk = self.cond.phi[k].mul_vec(x);
                for (a, b) in xk.iter_mut().zip(self.cond.psi[k].mul_vec(theta)) {
                    *a += b;
                }
                xk
            })
            .collect()
    }

    /// Cost evaluated along the predicted trajectory.
    pub fn cost(&self, x: &[T], w: &[T], theta: &[T]) -> T {
        let nw = self.n_w();
        let m = self.n_u();
        let xs = self.predict(x, theta);
        let w0 = &theta[..nw];
        let mut j = quad_form(&self.t, &vec_sub(w0, w));
        for (k, xk) in xs.iter().enumerate() {
            let wk = self.exo.advance(w0, k as u64);
            let xbar = vec_sub(xk, &self.pi.mul_vec(&wk));
            if k < self.horizon {
                j += quad_form(&self.q, &xbar);
                j += quad_form(&self.r, &theta[nw + k * m..nw + (k + 1) * m]);
            } else {
                j += quad_form(&self.p, &xbar);
            }
        }
        j
    }

    /// Largest constraint violation of `θ` at state `x`.
    pub fn violation(&self, x: &[T], theta: &[T]) -> T {
        let rhs = self.rhs(x);
        (0..self.cond.g.rows())
            .map(|i| crate::numerics::dot(self.cond.g.row(i), theta) - rhs[i])
            .fold(T::zero(), T::max)
    }

    /// Shifted candidate: `w̄†(0) = S w̄*(0)`, `v†(k) = v*(k+1)`, `v†(N−1) = 0`.
    pub fn shifted_candidate(&self, sol: &MpcSolution<T>) -> Vec<T> {
        let nw = self.n_w();
        let m = self.n_u();
        let mut theta = self.exo.advance(&sol.theta[..nw], 1);
        theta.extend_from_slice(&sol.theta[nw + m..]);
        theta.extend(std::iter::repeat(T::zero()).take(m));
        theta
    }

    /// Whether the shifted candidate satisfies every constraint at `x_next`
    /// within [`SHIFT_TOL`].
    pub fn check_shifted_feasible(&self, sol: &MpcSolution<T>, x_next: &[T]) -> bool {
        if x_next.len() != self.n_x() || sol.theta.len() != self.decision_dim() {
            return false;
        }
        let theta = self.shifted_candidate(sol);
        self.violation(x_next, &theta) <= T::tol(SHIFT_TOL)
    }

    /// Solves the MPC problem at `(x, w)` and returns `u = Kx + L w̄(0) + v(0)`.
    /// With `warm` (the previous solution) the shifted candidate seeds the
    /// solver; a shifted candidate that violates the constraints aborts.
    pub fn control_step(
        &self,
        x: &[T],
        w: &[T],
        warm: Option<&MpcSolution<T>>,
    ) -> Result<MpcSolution<T>> {
        let qp = self.build_qp(x, w)?;
        let start = match warm {
            Some(prev) => {
                let theta = self.shifted_candidate(prev);
                let viol = self.violation(x, &theta);
                if viol > T::tol(SHIFT_TOL) {
                    return Err(Error::PropertyViolation(format!(
                        "shifted candidate violates the constraints by {:.3e}",
                        viol.to_f64_lossy()
                    )));
                }
                Some(theta)
            }
            None => None,
        };
        let solver = QpSolver::new(QpOptions {
            check_convexity: false,
            ..QpOptions::default()
        });
        let sol = solver.solve(&qp, start.as_deref())?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible if warm.is_none() => {
                let violated = (0..qp.ineq.rows())
                    .filter_map(|i| {
                        let e = crate::numerics::dot(qp.ineq.row(i), &sol.z) - qp.ineq_rhs[i];
                        (e > T::tol(1e-9)).then(|| (i, e.to_f64_lossy()))
                    })
                    .collect();
                return Err(Error::InitiallyInfeasible { violated });
            }
            status => {
                return Err(Error::Numeric(format!(
                    "MPC QP ended with status {status:?} after {} iterations",
                    sol.iterations
                )))
            }
        }
        Ok(self.solution_from(x, w, sol.z, sol.status, sol.iterations, sol.active.len()))
    }

    fn solution_from(
        &self,
        x: &[T],
        w: &[T],
        theta: Vec<T>,
        status: QpStatus,
        iterations: usize,
        active_constraints: usize,
    ) -> MpcSolution<T> {
        let nw = self.n_w();
        let m = self.n_u();
        let w_bar0 = theta[..nw].to_vec();
        let v_seq: Vec<Vec<T>> = (0..self.horizon)
            .map(|k| theta[nw + k * m..nw + (k + 1) * m].to_vec())
            .collect();
        let v0 = v_seq.first().cloned().unwrap_or_default();
        let mut u = self.k.mul_vec(x);
        for ((ui, li), vi) in u.iter_mut().zip(self.l.mul_vec(&w_bar0)).zip(&v0) {
            *ui += li + *vi;
        }
        let predicted_states = self.predict(x, &theta);
        let predicted_wbar = (0..=self.horizon)
            .map(|k| self.exo.advance(&w_bar0, k as u64))
            .collect();
        let objective = self.cost(x, w, &theta);
        MpcSolution {
            theta,
            w_bar0,
            v0,
            u,
            predicted_states,
            predicted_wbar,
            v_seq,
            objective,
            status,
            iterations,
            active_constraints,
        }
    }
}
