//! Dense convex quadratic programs `min ½ z'Hz + f'z` subject to `Gz ≤ g`,
//! `Az = b`, solved by a primal active-set method with a phase-1 LP.
//! Linear programs run through the same engine with a zero Hessian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, cholesky_solve, dot, norm_inf, symmetric_eigen, Matrix, Qr, Svd};
use crate::polytope::Polytope;
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Consecutive zero-length steps after which dropping switches to the
/// lowest-index rule.
const BLAND_AFTER: usize = 4;

#[derive(Debug, Clone)]
pub struct QpProblem<T> {
    pub hessian: Matrix<T>,
    pub linear: Vec<T>,
    pub ineq: Matrix<T>,
    pub ineq_rhs: Vec<T>,
    pub eq: Matrix<T>,
    pub eq_rhs: Vec<T>,
}

impl<T: Real> QpProblem<T> {
    /// Unconstrained problem; add constraints with [`Self::with_ineq`] and
    /// [`Self::with_eq`].
    pub fn new(hessian: Matrix<T>, linear: Vec<T>) -> Self {
        let d = linear.len();
        Self {
            hessian,
            linear,
            ineq: Matrix::zeros(0, d),
            ineq_rhs: Vec::new(),
            eq: Matrix::zeros(0, d),
            eq_rhs: Vec::new(),
        }
    }

    pub fn with_ineq(mut self, g: Matrix<T>, rhs: Vec<T>) -> Self {
        self.ineq = g;
        self.ineq_rhs = rhs;
        self
    }

    pub fn with_eq(mut self, a: Matrix<T>, rhs: Vec<T>) -> Self {
        self.eq = a;
        self.eq_rhs = rhs;
        self
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// `½ z'Hz + f'z`.
    pub fn objective(&self, z: &[T]) -> T {
        let hz = self.hessian.mul_vec(z);
        T::lit(0.5) * dot(z, &hz) + dot(&self.linear, z)
    }

    /// Largest violation of the constraints at `z` (zero when feasible).
    pub fn max_violation(&self, z: &[T]) -> T {
        let mut v = T::zero();
        for i in 0..self.ineq.rows() {
            v = v.max(dot(self.ineq.row(i), z) - self.ineq_rhs[i]);
        }
        for i in 0..self.eq.rows() {
            v = v.max((dot(self.eq.row(i), z) - self.eq_rhs[i]).abs());
        }
        v
    }

    fn validate(&self, check_convexity: bool) -> Result<()> {
        let d = self.dim();
        if self.hessian.shape() != (d, d)
            || self.ineq.cols() != d
            || self.ineq.rows() != self.ineq_rhs.len()
            || self.eq.cols() != d
            || self.eq.rows() != self.eq_rhs.len()
        {
            return Err(Error::dim(
                "qp",
                format!(
                    "H {:?}, f {}, G {:?}, g {}, A {:?}, b {}",
                    self.hessian.shape(),
                    d,
                    self.ineq.shape(),
                    self.ineq_rhs.len(),
                    self.eq.shape(),
                    self.eq_rhs.len()
                ),
            ));
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(&self.linear) || !finite(&self.ineq_rhs) || !finite(&self.eq_rhs) {
            return Err(Error::Validation("qp: non-finite vector entry".into()));
        }
        let scale = self.hessian.norm_max().max(T::one());
        if !self.hessian.is_symmetric(T::tol(1e-10) * scale) {
            return Err(Error::Validation("qp: Hessian is not symmetric".into()));
        }
        if check_convexity && d > 0 && self.hessian.norm_max() > T::zero() {
            let (vals, _) = symmetric_eigen(&self.hessian.symmetrized());
            if vals[0] < -T::tol(1e-10) * scale {
                return Err(Error::Validation(format!(
                    "qp: Hessian is indefinite (smallest eigenvalue {:e})",
                    vals[0]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Debug, Clone)]
pub struct QpSolution<T> {
    pub z: Vec<T>,
    pub objective: T,
    pub status: QpStatus,
    /// Largest of the scaled primal, dual and complementarity residuals.
    pub kkt_residual: T,
    pub iterations: usize,
    /// Inequality rows in the final working set, ascending.
    pub active: Vec<usize>,
    /// One multiplier per inequality row (zero off the working set).
    pub ineq_multipliers: Vec<T>,
    pub eq_multipliers: Vec<T>,
}

impl<T: Real> QpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tol: f64,
    /// Defaults to `50·(d + r)` per phase.
    pub max_iter: Option<usize>,
    /// Eigenvalue test for positive semidefiniteness; callers that cache a
    /// verified Hessian may switch it off.
    pub check_convexity: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            check_convexity: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub options: QpOptions,
}

impl QpSolver {
    pub fn new(options: QpOptions) -> Self {
        Self { options }
    }

    pub fn with_tol(tol: f64) -> Self {
        Self::new(QpOptions {
            tol,
            ..QpOptions::default()
        })
    }

    pub fn solve<T: Real>(&self, p: &QpProblem<T>, warm: Option<&[T]>) -> Result<QpSolution<T>> {
        if self.options.tol <= 0.0 {
            return Err(Error::Validation("qp: tolerance must be positive".into()));
        }
        p.validate(self.options.check_convexity)?;
        let d = p.dim();
        if let Some(w) = warm {
            if w.len() != d {
                return Err(Error::dim("qp warm start", format!("{} vs {}", w.len(), d)));
            }
        }
        let tol = T::tol(self.options.tol);
        let hessian = (p.hessian.norm_max() > T::zero()).then_some(&p.hessian);
        solve_impl(
            hessian,
            &p.linear,
            &p.ineq,
            &p.ineq_rhs,
            &p.eq,
            &p.eq_rhs,
            warm,
            tol,
            self.options.max_iter,
        )
    }
}

/// Solves with default options.
pub fn solve<T: Real>(p: &QpProblem<T>, tol: f64, warm: Option<&[T]>) -> Result<QpSolution<T>> {
    QpSolver::with_tol(tol).solve(p, warm)
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub value: T,
    pub z: Vec<T>,
    pub status: QpStatus,
}

/// Maximizes `c'z` over `p`.
pub fn solve_lp<T: Real>(c: &[T], p: &Polytope<T>) -> Result<LpSolution<T>> {
    solve_lp_from(c, p, None)
}

/// Maximizes `c'z` over `p`, starting from `start` (skips phase 1 when the
/// start is feasible).
pub fn solve_lp_from<T: Real>(
    c: &[T],
    p: &Polytope<T>,
    start: Option<&[T]>,
) -> Result<LpSolution<T>> {
    if c.len() != p.dim() || start.is_some_and(|s| s.len() != p.dim()) {
        return Err(Error::dim("solve_lp", format!("c {} vs dim {}", c.len(), p.dim())));
    }
    let neg: Vec<T> = c.iter().map(|&v| -v).collect();
    let empty = Matrix::zeros(0, p.dim());
    let sol = solve_impl(
        None,
        &neg,
        p.matrix(),
        p.rhs(),
        &empty,
        &[],
        start,
        T::tol(DEFAULT_TOL),
        None,
    )?;
    let value = match sol.status {
        QpStatus::Optimal => dot(c, &sol.z),
        QpStatus::Unbounded => T::infinity(),
        _ => T::nan(),
    };
    Ok(LpSolution {
        value,
        z: sol.z,
        status: sol.status,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_impl<T: Real>(
    h: Option<&Matrix<T>>,
    f: &[T],
    g: &Matrix<T>,
    grhs: &[T],
    a: &Matrix<T>,
    b: &[T],
    warm: Option<&[T]>,
    tol: T,
    max_iter: Option<usize>,
) -> Result<QpSolution<T>> {
    let d = f.len();
    let r = g.rows();
    let cap = max_iter.unwrap_or(50 * (d + r).max(1));
    let fail = |z: Vec<T>, status: QpStatus, iterations: usize| QpSolution {
        objective: objective(h, f, &z),
        z,
        status,
        kkt_residual: T::infinity(),
        iterations,
        active: Vec::new(),
        ineq_multipliers: vec![T::zero(); r],
        eq_multipliers: vec![T::zero(); a.rows()],
    };

    let eq_rows = independent_rows(a);
    let a_ind = a.select_rows(&eq_rows);
    let b_ind: Vec<T> = eq_rows.iter().map(|&i| b[i]).collect();

    let mut z = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![T::zero(); d]);
    let feas_tol = tol * (T::one() + norm_inf(grhs).max(norm_inf(b)));
    if a.rows() > 0 {
        let res: Vec<T> = (0..a_ind.rows())
            .map(|i| dot(a_ind.row(i), &z) - b_ind[i])
            .collect();
        if norm_inf(&res) > T::zero() {
            let corr = Svd::new(&a_ind).solve(&res, T::lit(1e-12));
            for (zi, ci) in z.iter_mut().zip(&corr) {
                *zi -= *ci;
            }
        }
        let worst = (0..a.rows())
            .map(|i| (dot(a.row(i), &z) - b[i]).abs())
            .fold(T::zero(), T::max);
        if worst > feas_tol {
            return Ok(fail(z, QpStatus::Infeasible, 0));
        }
    }

    let mut iterations = 0;
    let viol = (0..r)
        .map(|i| dot(g.row(i), &z) - grhs[i])
        .fold(T::zero(), T::max);
    if viol > T::zero() {
        // phase 1: min s  s.t.  Gz − s ≤ g, −s ≤ 0, Az = b
        let mut g1 = Matrix::zeros(r + 1, d + 1);
        for i in 0..r {
            g1.row_mut(i)[..d].copy_from_slice(g.row(i));
            g1[(i, d)] = -T::one();
        }
        g1[(r, d)] = -T::one();
        let mut grhs1 = grhs.to_vec();
        grhs1.push(T::zero());
        let mut a1 = Matrix::zeros(a_ind.rows(), d + 1);
        a1.set_block(0, 0, &a_ind);
        let mut f1 = vec![T::zero(); d + 1];
        f1[d] = T::one();
        let mut z1 = z.clone();
        z1.push(viol);
        let out = ActiveSet::new(None, &f1, &g1, &grhs1, &a1, &b_ind).run(
            z1,
            max_iter.unwrap_or(50 * (d + r + 2)),
        );
        iterations += out.iterations;
        match out.status {
            QpStatus::Optimal => {}
            QpStatus::NumericFailure => {
                return Ok(fail(out.z[..d].to_vec(), QpStatus::NumericFailure, iterations))
            }
            _ => return Ok(fail(out.z[..d].to_vec(), QpStatus::Infeasible, iterations)),
        }
        if out.z[d] > feas_tol {
            return Ok(fail(out.z[..d].to_vec(), QpStatus::Infeasible, iterations));
        }
        z = out.z[..d].to_vec();
    }

    let out = ActiveSet::new(h, f, g, grhs, &a_ind, &b_ind).run(z, cap);
    iterations += out.iterations;
    let z = out.z;
    let mut ineq_multipliers = vec![T::zero(); r];
    for (&i, &mu) in out.working.iter().zip(&out.mu) {
        ineq_multipliers[i] = mu;
    }
    let mut eq_multipliers = vec![T::zero(); a.rows()];
    for (&i, &l) in eq_rows.iter().zip(&out.lambda) {
        eq_multipliers[i] = l;
    }
    let kkt_residual = kkt_residual(h, f, g, grhs, a, b, &z, &ineq_multipliers, &eq_multipliers);
    let mut status = out.status;
    if status == QpStatus::Optimal && !(kkt_residual <= tol) {
        status = QpStatus::NumericFailure;
    }
    let mut active = out.working;
    active.sort_unstable();
    Ok(QpSolution {
        objective: objective(h, f, &z),
        z,
        status,
        kkt_residual,
        iterations,
        active,
        ineq_multipliers,
        eq_multipliers,
    })
}

fn objective<T: Real>(h: Option<&Matrix<T>>, f: &[T], z: &[T]) -> T {
    let quad = h.map_or(T::zero(), |h| T::lit(0.5) * dot(z, &h.mul_vec(z)));
    quad + dot(f, z)
}

/// Rows of `a` that are linearly independent of the earlier ones
/// (Gram–Schmidt with a relative threshold).
fn independent_rows<T: Real>(a: &Matrix<T>) -> Vec<usize> {
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..a.rows() {
        let mut v = a.row(i).to_vec();
        let n0 = norm_inf(&v);
        if n0 == T::zero() {
            continue;
        }
        for q in &basis {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * *qi;
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > T::lit(1e-10) * n0 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
            keep.push(i);
        }
    }
    keep
}

#[allow(clippy::too_many_arguments)]
fn kkt_residual<T: Real>(
    h: Option<&Matrix<T>>,
    f: &[T],
    g: &Matrix<T>,
    grhs: &[T],
    a: &Matrix<T>,
    b: &[T],
    z: &[T],
    mu: &[T],
    lambda: &[T],
) -> T {
    let mut grad = f.to_vec();
    if let Some(h) = h {
        for (gi, hi) in grad.iter_mut().zip(h.mul_vec(z)) {
            *gi += hi;
        }
    }
    let dual_scale = T::one() + norm_inf(&grad);
    let primal_scale = T::one() + norm_inf(grhs).max(norm_inf(b));
    let mut res = T::zero();
    let mut stat = grad;
    for i in 0..g.rows() {
        let slack = grhs[i] - dot(g.row(i), z);
        res = res.max(-slack / primal_scale);
        res = res.max(-mu[i] / dual_scale);
        res = res.max((mu[i] * slack).abs() / (dual_scale * primal_scale));
        if mu[i] != T::zero() {
            for (s, gij) in stat.iter_mut().zip(g.row(i)) {
                *s += mu[i] * *gij;
            }
        }
    }
    for i in 0..a.rows() {
        res = res.max((dot(a.row(i), z) - b[i]).abs() / primal_scale);
        if lambda[i] != T::zero() {
            for (s, aij) in stat.iter_mut().zip(a.row(i)) {
                *s += lambda[i] * *aij;
            }
        }
    }
    res.max(norm_inf(&stat) / dual_scale)
}

struct Outcome<T> {
    z: Vec<T>,
    status: QpStatus,
    iterations: usize,
    working: Vec<usize>,
    mu: Vec<T>,
    lambda: Vec<T>,
}

enum Kind {
    Newton,
    Other,
}

struct ActiveSet<'a, T> {
    h: Option<&'a Matrix<T>>,
    f: &'a [T],
    g: &'a Matrix<T>,
    grhs: &'a [T],
    a: &'a Matrix<T>,
    row_norms: Vec<T>,
}

enum Direction<T> {
    Stationary,
    /// Minimizer of the model on the current face (full step is 1).
    Newton(Vec<T>),
    /// Descent ray with no curvature along it.
    Ray(Vec<T>),
}

impl<'a, T: Real> ActiveSet<'a, T> {
    fn new(
        h: Option<&'a Matrix<T>>,
        f: &'a [T],
        g: &'a Matrix<T>,
        grhs: &'a [T],
        a: &'a Matrix<T>,
        _b: &'a [T],
    ) -> Self {
        let row_norms = (0..g.rows()).map(|i| norm_inf(g.row(i))).collect();
        Self {
            h,
            f,
            g,
            grhs,
            a,
            row_norms,
        }
    }

    fn gradient(&self, z: &[T]) -> Vec<T> {
        let mut grad = self.f.to_vec();
        if let Some(h) = self.h {
            for (gi, hi) in grad.iter_mut().zip(h.mul_vec(z)) {
                *gi += hi;
            }
        }
        grad
    }

    /// Transpose of the working-set matrix, equality rows first.
    fn working_transpose(&self, working: &[usize]) -> Matrix<T> {
        let d = self.f.len();
        let ne = self.a.rows();
        let mut m = Matrix::zeros(d, ne + working.len());
        for i in 0..ne {
            for j in 0..d {
                m[(j, i)] = self.a[(i, j)];
            }
        }
        for (c, &i) in working.iter().enumerate() {
            for j in 0..d {
                m[(j, ne + c)] = self.g[(i, j)];
            }
        }
        m
    }

    fn direction(&self, qr: Option<&Qr<T>>, k: usize, grad: &[T], z: &[T]) -> Direction<T> {
        let d = grad.len();
        if k >= d {
            return Direction::Stationary;
        }
        let basis = match qr {
            Some(qr) => {
                let q = qr.q_full();
                q.block(0, k, d, d - k)
            }
            None => Matrix::identity(d),
        };
        let gz = basis.tr_mul_vec(grad);
        let stat_tol = T::lit(1e-11) * (T::one() + norm_inf(grad));
        let lift = |y: &[T]| -> Vec<T> { basis.mul_vec(y).into_iter().map(|v| -v).collect() };
        let Some(h) = self.h else {
            if norm_inf(&gz) <= stat_tol {
                return Direction::Stationary;
            }
            return Direction::Ray(lift(&gz));
        };
        let hr = basis.tr_mul(&(h * &basis)).symmetrized();
        let newton = if let Some(l) = cholesky(&hr, T::lit(1e-12)) {
            cholesky_solve(&l, &gz)
        } else {
            let (vals, vecs) = symmetric_eigen(&hr);
            let lmax = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let zero_tol = T::lit(1e-10) * lmax.max(T::one());
            let nz = vals.len();
            let mut flat = vec![T::zero(); nz];
            let mut curved = vec![T::zero(); nz];
            for (c, &lam) in vals.iter().enumerate() {
                let col = vecs.col(c);
                let proj = dot(&col, &gz);
                if lam <= zero_tol {
                    for (fi, vi) in flat.iter_mut().zip(&col) {
                        *fi += proj * *vi;
                    }
                } else {
                    for (ci, vi) in curved.iter_mut().zip(&col) {
                        *ci += proj / lam * *vi;
                    }
                }
            }
            if norm_inf(&flat) > stat_tol {
                return Direction::Ray(lift(&flat));
            }
            curved
        };
        if norm_inf(&gz) <= stat_tol * T::lit(1e-3) {
            return Direction::Stationary;
        }
        let p = lift(&newton);
        if norm_inf(&p) <= T::lit(1e-14) * (T::one() + norm_inf(z)) {
            return Direction::Stationary;
        }
        Direction::Newton(p)
    }

    fn run(&self, mut z: Vec<T>, cap: usize) -> Outcome<T> {
        let r = self.g.rows();
        let ne = self.a.rows();
        let mut working: Vec<usize> = Vec::new();
        let mut in_work = vec![false; r];
        let mut at_minimizer = false;
        let mut zero_steps = 0usize;
        for iter in 0..cap {
            let grad = self.gradient(&z);
            let k = ne + working.len();
            let qr = (k > 0).then(|| Qr::new(&self.working_transpose(&working)));
            let dir = if at_minimizer {
                Direction::Stationary
            } else {
                self.direction(qr.as_ref(), k, &grad, &z)
            };
            let dir_kind = match &dir {
                Direction::Newton(_) => Kind::Newton,
                _ => Kind::Other,
            };
            match dir {
                Direction::Stationary => {
                    let lambda = match &qr {
                        Some(qr) => {
                            let neg: Vec<T> = grad.iter().map(|&v| -v).collect();
                            qr.solve_least_squares(&neg)
                        }
                        None => Vec::new(),
                    };
                    if lambda.iter().any(|v| !v.is_finite()) {
                        return self.outcome(z, QpStatus::NumericFailure, iter + 1, working, lambda);
                    }
                    let mult_tol = T::lit(1e-11) * (T::one() + norm_inf(&grad));
                    let mut drop: Option<(usize, T)> = None;
                    for (c, &mu) in lambda[ne..].iter().enumerate() {
                        if mu >= -mult_tol {
                            continue;
                        }
                        let better = match drop {
                            None => true,
                            Some((dc, dmu)) => {
                                if zero_steps >= BLAND_AFTER {
                                    working[c] < working[dc]
                                } else {
                                    mu < dmu
                                }
                            }
                        };
                        if better {
                            drop = Some((c, mu));
                        }
                    }
                    match drop {
                        None => {
                            return self.outcome(z, QpStatus::Optimal, iter + 1, working, lambda);
                        }
                        Some((c, _)) => {
                            in_work[working[c]] = false;
                            working.remove(c);
                            at_minimizer = false;
                        }
                    }
                }
                Direction::Newton(p) | Direction::Ray(p) => {
                    let newton = matches!(dir_kind, Kind::Newton);
                    let pn = norm_inf(&p);
                    let mut alpha = if newton { T::one() } else { T::infinity() };
                    let mut blocking = None;
                    for i in 0..r {
                        if in_work[i] {
                            continue;
                        }
                        let gp = dot(self.g.row(i), &p);
                        if gp <= T::lit(1e-13) * self.row_norms[i] * pn {
                            continue;
                        }
                        let slack = (self.grhs[i] - dot(self.g.row(i), &z)).max(T::zero());
                        let step = slack / gp;
                        if step < alpha {
                            alpha = step;
                            blocking = Some(i);
                        }
                    }
                    if alpha.is_infinite() {
                        return self.outcome(z, QpStatus::Unbounded, iter + 1, working, Vec::new());
                    }
                    for (zi, pi) in z.iter_mut().zip(&p) {
                        *zi += alpha * *pi;
                    }
                    zero_steps = if alpha == T::zero() { zero_steps + 1 } else { 0 };
                    match blocking {
                        Some(i) => {
                            working.push(i);
                            in_work[i] = true;
                            at_minimizer = false;
                        }
                        None => at_minimizer = newton,
                    }
                }
            }
        }
        self.outcome(z, QpStatus::NumericFailure, cap, working, Vec::new())
    }

    fn outcome(
        &self,
        z: Vec<T>,
        status: QpStatus,
        iterations: usize,
        working: Vec<usize>,
        lambda: Vec<T>,
    ) -> Outcome<T> {
        let ne = self.a.rows();
        let (eq, mu) = if lambda.len() == ne + working.len() {
            (lambda[..ne].to_vec(), lambda[ne..].to_vec())
        } else {
            (vec![T::zero(); ne], vec![T::zero(); working.len()])
        };
        Outcome {
            z,
            status,
            iterations,
            working,
            mu,
            lambda: eq,
        }
    }
}
