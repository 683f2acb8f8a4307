//! Maximal constraint-admissible set of the augmented closed loop
//! `[x; w]⁺ = [[Ac, BL], [0, S]] [x; w]` under `[x; Kx + Lw] ∈ (1−ε)Z`, and
//! the admissible-reference set handled implicitly through lifted LPs/QPs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::polytope::Polytope;
use crate::qp::{solve_lp_from, QpOptions, QpProblem, QpSolver, QpStatus};
use crate::scalar::Real;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_K_CAP: usize = 500;
/// Support-LP excess above which a propagated row is kept.
pub const DETERMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdmissibleSets<T> {
    /// Over `(x, w)`.
    pub o_infty: Polytope<T>,
    pub k_star: usize,
    pub epsilon: T,
    pub n_x: usize,
    pub n_w: usize,
}

/// Inputs of the O∞ recursion.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a, T> {
    pub ac: &'a Matrix<T>,
    pub bl: &'a Matrix<T>,
    pub s: &'a Matrix<T>,
    pub k: &'a Matrix<T>,
    pub l: &'a Matrix<T>,
}

impl<'a, T: Real> ClosedLoop<'a, T> {
    fn check(&self, z: &Polytope<T>) -> Result<(usize, usize, usize)> {
        let n = self.ac.rows();
        let nw = self.s.rows();
        let m = self.k.rows();
        let ok = self.ac.is_square()
            && self.s.is_square()
            && self.bl.shape() == (n, nw)
            && self.k.shape() == (m, n)
            && self.l.shape() == (m, nw)
            && z.dim() == n + m;
        if !ok {
            return Err(Error::dim(
                "compute_o_infty",
                format!(
                    "Ac {:?}, BL {:?}, S {:?}, K {:?}, L {:?}, Z dim {}",
                    self.ac.shape(),
                    self.bl.shape(),
                    self.s.shape(),
                    self.k.shape(),
                    self.l.shape(),
                    z.dim()
                ),
            ));
        }
        Ok((n, nw, m))
    }

    /// `[[Ac, BL], [0, S]]`.
    pub fn augmented(&self) -> Matrix<T> {
        let n = self.ac.rows();
        let nw = self.s.rows();
        let mut m = Matrix::zeros(n + nw, n + nw);
        m.set_block(0, 0, self.ac);
        m.set_block(0, n, self.bl);
        m.set_block(n, n, self.s);
        m
    }

    /// `[[I, 0], [K, L]]`.
    pub fn output_map(&self) -> Matrix<T> {
        let n = self.ac.rows();
        let nw = self.s.rows();
        let m = self.k.rows();
        let mut c = Matrix::zeros(n + m, n + nw);
        c.set_block(0, 0, &Matrix::identity(n));
        c.set_block(n, 0, self.k);
        c.set_block(n, n, self.l);
        c
    }
}

/// Builds O∞ by adding, step by step, the propagated constraint rows whose
/// support value over the current set exceeds their bound; stops at the
/// first step that adds nothing.
pub fn compute_o_infty<T: Real>(
    cl: ClosedLoop<'_, T>,
    z: &Polytope<T>,
    epsilon: T,
    k_cap: usize,
) -> Result<AdmissibleSets<T>> {
    let (n, nw, _) = cl.check(z)?;
    if !(epsilon >= T::zero() && epsilon < T::one()) {
        return Err(Error::Validation(format!("epsilon {epsilon} outside [0, 1)")));
    }
    if z.rhs().iter().any(|&h| h < T::zero()) {
        return Err(Error::Validation(
            "constraint set must contain the origin".into(),
        ));
    }
    let d = n + nw;
    let tight = z.scale(T::one() - epsilon)?;
    let mut cur = tight.pullback(&cl.output_map())?;
    let bounds = tight.rhs().to_vec();
    let m = cl.augmented();
    let mut prop = cur.matrix().clone();
    let origin = vec![T::zero(); d];
    let tol = T::tol(DETERMINATION_TOL);
    for k in 1..=k_cap + 1 {
        prop = &prop * &m;
        let mut added: Vec<(Vec<T>, T)> = Vec::new();
        for (i, &b) in bounds.iter().enumerate() {
            let row = prop.row(i);
            if row.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let sol = solve_lp_from(row, &cur, Some(&origin))?;
            let keep = match sol.status {
                QpStatus::Optimal => sol.value > b + tol * (T::one() + b.abs()),
                QpStatus::Unbounded => true,
                QpStatus::Infeasible => return Err(Error::InfeasibleTightening),
                QpStatus::NumericFailure => {
                    return Err(Error::Numeric(format!("support LP failed at step {k}")))
                }
            };
            if keep {
                added.push((row.to_vec(), b));
            }
        }
        if added.is_empty() {
            let o_infty = cur.remove_redundant(tol)?;
            if o_infty.is_empty()? {
                return Err(Error::InfeasibleTightening);
            }
            return Ok(AdmissibleSets {
                o_infty,
                k_star: k - 1,
                epsilon,
                n_x: n,
                n_w: nw,
            });
        }
        if k > k_cap {
            return Err(Error::NotFinitelyDetermined {
                k_cap,
                pending_rows: added.len(),
            });
        }
        for (row, b) in added {
            cur.push_row(&row, b)?;
        }
    }
    unreachable!("loop returns by k_cap + 1")
}

impl<T: Real> AdmissibleSets<T> {
    pub fn contains(&self, x: &[T], w: &[T], tol: T) -> Result<bool> {
        let z: Vec<T> = x.iter().chain(w).copied().collect();
        self.o_infty.contains(&z, tol)
    }

    /// `{x : [x; w] ∈ O∞}` with every bound relaxed by `tol`.
    pub fn state_slice(&self, w: &[T], tol: T) -> Result<Polytope<T>> {
        if w.len() != self.n_w {
            return Err(Error::dim("reference slice", format!("{} vs {}", w.len(), self.n_w)));
        }
        let h = self.o_infty.matrix();
        let hx = h.block(0, 0, h.rows(), self.n_x);
        let rhs = (0..h.rows())
            .map(|i| self.o_infty.rhs()[i] - dot(&h.row(i)[self.n_x..], w) + tol)
            .collect();
        Polytope::new(hx, rhs)
    }

    /// Whether some `x` puts `[x; w]` in O∞ (within `tol`).
    pub fn reference_admissible(&self, w: &[T], tol: T) -> Result<bool> {
        let slice = self.state_slice(w, tol)?;
        match slice.is_empty() {
            Ok(empty) => Ok(!empty),
            Err(e) => Err(e),
        }
    }

    /// `argmin ‖w − w0‖²_T` over admissible references, solved as one QP over
    /// `(x, w)` whose objective ignores `x`. Returns `(w, x)`.
    pub fn project_reference_with_state(&self, t: &Matrix<T>, w0: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let (n, nw) = (self.n_x, self.n_w);
        if t.shape() != (nw, nw) || w0.len() != nw {
            return Err(Error::dim(
                "project_reference",
                format!("T {:?}, w0 {}", t.shape(), w0.len()),
            ));
        }
        let mut hess = Matrix::zeros(n + nw, n + nw);
        hess.set_block(n, n, &t.scale(T::lit(2.0)));
        let mut lin = vec![T::zero(); n + nw];
        let tw = t.mul_vec(w0);
        for j in 0..nw {
            lin[n + j] = -T::lit(2.0) * tw[j];
        }
        let p = QpProblem::new(hess, lin)
            .with_ineq(self.o_infty.matrix().clone(), self.o_infty.rhs().to_vec());
        let solver = QpSolver::new(QpOptions {
            check_convexity: false,
            ..QpOptions::default()
        });
        let sol = solver.solve(&p, None)?;
        match sol.status {
            QpStatus::Optimal => Ok((sol.z[n..].to_vec(), sol.z[..n].to_vec())),
            status => Err(Error::Numeric(format!(
                "reference projection ended with status {status:?}"
            ))),
        }
    }

    pub fn project_reference(&self, t: &Matrix<T>, w0: &[T]) -> Result<Vec<T>> {
        Ok(self.project_reference_with_state(t, w0)?.0)
    }
}
