//! Dense linear algebra and the structured matrix equations used by the
//! controllers: matrix exponential, discrete Lyapunov equation, regulator
//! (Francis) equations, spectral radius and controllability rank.

pub mod decomp;
pub mod matrix;

pub use decomp::{cholesky, cholesky_solve, eigenvalues, symmetric_eigen, Lu, Qr, Svd};
pub use matrix::{axpy, dot, norm2, norm_inf, quad_form, vec_add, vec_scale, vec_sub, Matrix};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative threshold used for rank and Schur decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Solution `(Π, Γ)` of `A Π + B Γ = Π S`, `C Π = Q_e`.
#[derive(Debug, Clone)]
pub struct RegulatorSolution<T> {
    pub pi: Matrix<T>,
    pub gamma: Matrix<T>,
    /// Max-norm residual over both equations.
    pub residual: T,
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn mat_exp<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    if !m.is_square() {
        return Err(Error::dim("mat_exp", "matrix must be square"));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("mat_exp: non-finite entry".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(m.clone());
    }
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let theta13 = 5.371920351148152;
    let norm = m.norm_1().to_f64_lossy();
    let squarings = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.scale(T::lit(2f64.powi(-squarings)));
    let b = |k: usize| T::lit(B[k]);
    let id = Matrix::<T>::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c: [usize; 4], mats: [&Matrix<T>; 4]| -> Matrix<T> {
        let mut acc = Matrix::zeros(n, n);
        for (k, mat) in c.iter().zip(mats) {
            acc = &acc + &mat.scale(b(*k));
        }
        acc
    };
    let u_inner = lin([13, 11, 9, 0], [&a6, &a4, &a2, &Matrix::zeros(n, n)]);
    let u_tail = lin([7, 5, 3, 1], [&a6, &a4, &a2, &id]);
    let u = &a * &(&(&a6 * &u_inner) + &u_tail);
    let v_inner = lin([12, 10, 8, 0], [&a6, &a4, &a2, &Matrix::zeros(n, n)]);
    let v_tail = lin([6, 4, 2, 0], [&a6, &a4, &a2, &id]);
    let v = &(&a6 * &v_inner) + &v_tail;
    let lu = Lu::new(&(&v - &u))?;
    let mut r = lu.solve_matrix(&(&v + &u));
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius<T: Real>(m: &Matrix<T>) -> Result<T> {
    if !m.is_square() {
        return Err(Error::dim("spectral_radius", "matrix must be square"));
    }
    Ok(eigenvalues(m)?
        .into_iter()
        .fold(T::zero(), |acc, (re, im)| acc.max(re.hypot(im))))
}

/// Rank of the Kalman matrix `[B, AB, …, A^{n-1}B]`, counting singular values
/// above `1e-9 · σ_max`.
pub fn controllability_rank<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<usize> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::dim(
            "controllability_rank",
            format!("A {:?}, B {:?}", a.shape(), b.shape()),
        ));
    }
    let n = a.rows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        let next = a * &cur;
        blocks.push(cur);
        cur = next;
    }
    let refs: Vec<&Matrix<T>> = blocks.iter().collect();
    let kalman = Matrix::hstack(&refs)?;
    if kalman.cols() == 0 || kalman.rows() == 0 {
        return Ok(0);
    }
    Ok(Svd::new(&kalman).rank(T::lit(RANK_TOL)))
}

/// Solves `Ac' P Ac − P + Q = 0` by the doubling (squared Smith) iteration
/// `P ← P + Aₖ' P Aₖ`, `Aₖ₊₁ = Aₖ²`.
pub fn solve_discrete_lyapunov<T: Real>(ac: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    if !ac.is_square() || q.shape() != ac.shape() {
        return Err(Error::dim(
            "solve_discrete_lyapunov",
            format!("Ac {:?}, Q {:?}", ac.shape(), q.shape()),
        ));
    }
    let qscale = q.norm_max().max(T::one());
    if !q.is_symmetric(T::lit(1e-12) * qscale) {
        return Err(Error::Validation("Lyapunov weight Q must be symmetric".into()));
    }
    let radius = spectral_radius(ac)?;
    if radius >= T::one() {
        return Err(Error::NotSchur {
            radius: radius.to_f64_lossy(),
        });
    }
    let mut p = q.symmetrized();
    let mut a = ac.clone();
    for _ in 0..200 {
        let inc = a.tr_mul(&(&p * &a));
        p = &p + &inc;
        if inc.norm_max() <= T::epsilon() * p.norm_max() {
            break;
        }
        a = &a * &a;
    }
    Ok(p.symmetrized())
}

/// Max-norm residual of the discrete Lyapunov equation.
pub fn lyapunov_residual<T: Real>(ac: &Matrix<T>, p: &Matrix<T>, q: &Matrix<T>) -> T {
    let lhs = &(&ac.tr_mul(&(p * ac)) - p) + q;
    lhs.norm_max()
}

/// Solves the regulator equations `A Π + B Γ = Π S`, `C Π = Q_e` as a
/// single linear system in the stacked unknowns `(vec Π, vec Γ)`.
pub fn solve_regulator<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    c: &Matrix<T>,
    s: &Matrix<T>,
    qe: &Matrix<T>,
) -> Result<RegulatorSolution<T>> {
    let n = a.rows();
    let m = b.cols();
    let nw = s.rows();
    let q = c.rows();
    if !a.is_square() || b.rows() != n || c.cols() != n || !s.is_square() || qe.shape() != (q, nw)
    {
        return Err(Error::dim(
            "solve_regulator",
            format!(
                "A {:?} B {:?} C {:?} S {:?} Qe {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                s.shape(),
                qe.shape()
            ),
        ));
    }
    let unknowns = (n + m) * nw;
    let eqs = (n + q) * nw;
    // Row-major vec: Π[r, c] -> r * nw + c ; Γ[r, c] -> n*nw + r * nw + c
    let pi_idx = |r: usize, col: usize| r * nw + col;
    let gamma_idx = |r: usize, col: usize| n * nw + r * nw + col;
    let mut sys = Matrix::<T>::zeros(eqs, unknowns);
    let mut rhs = vec![T::zero(); eqs];
    for r in 0..n {
        for col in 0..nw {
            let e = r * nw + col;
            for k in 0..n {
                sys[(e, pi_idx(k, col))] += a[(r, k)];
            }
            for k in 0..m {
                sys[(e, gamma_idx(k, col))] += b[(r, k)];
            }
            for k in 0..nw {
                sys[(e, pi_idx(r, k))] -= s[(k, col)];
            }
        }
    }
    for r in 0..q {
        for col in 0..nw {
            let e = n * nw + r * nw + col;
            for k in 0..n {
                sys[(e, pi_idx(k, col))] += c[(r, k)];
            }
            rhs[e] = qe[(r, col)];
        }
    }
    let x = if eqs == unknowns {
        match Lu::new(&sys) {
            Ok(lu) => lu.solve(&rhs),
            Err(_) => Svd::new(&sys).solve(&rhs, T::lit(1e-12)),
        }
    } else {
        Svd::new(&sys).solve(&rhs, T::lit(1e-12))
    };
    let pi = Matrix::from_fn(n, nw, |r, col| x[pi_idx(r, col)]);
    let gamma = Matrix::from_fn(m, nw, |r, col| x[gamma_idx(r, col)]);
    let residual = regulator_residual(a, b, c, s, qe, &pi, &gamma);
    let tol = T::lit(1e-8) * (T::one() + qe.norm_max());
    if !(residual <= tol) {
        return Err(Error::RegulatorUnsolvable {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(RegulatorSolution {
        pi,
        gamma,
        residual,
    })
}

pub fn regulator_residual<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    c: &Matrix<T>,
    s: &Matrix<T>,
    qe: &Matrix<T>,
    pi: &Matrix<T>,
    gamma: &Matrix<T>,
) -> T {
    let r1 = &(&(a * pi) + &(b * gamma)) - &(pi * s);
    let r2 = &(c * pi) - qe;
    r1.norm_max().max(r2.norm_max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&Matrix::<f64>::zeros(2, 2)).unwrap();
        assert_eq!(e, Matrix::identity(2));
    }

    #[test]
    fn exp_of_skew_is_rotation() {
        let h = PI / 2.0;
        let e = mat_exp(&m(&[&[0.0, h], &[-h, 0.0]])).unwrap();
        let want = m(&[&[h.cos(), h.sin()], &[-h.sin(), h.cos()]]);
        assert!(e.max_abs_diff(&want) < 1e-15, "{e:?}");
    }

    #[test]
    fn exp_scalar_matches_series() {
        // oracle: Taylor series summed until terms vanish
        let x = 0.5f64;
        let (mut term, mut sum, mut k) = (1.0f64, 0.0f64, 0);
        while term.abs() > 0.0 && k < 60 {
            sum += term;
            k += 1;
            term *= x / k as f64;
        }
        let e = mat_exp(&m(&[&[x]])).unwrap();
        assert!(((e[(0, 0)] - sum) / sum).abs() < 1e-15);
    }

    #[test]
    fn exp_rejects_non_square() {
        assert!(matches!(
            mat_exp(&Matrix::<f64>::zeros(2, 3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn exp_large_norm_relative_accuracy() {
        // diagonalizable with known spectrum: V diag(d) V^-1
        let v = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let vinv = m(&[&[1.0, -1.0], &[0.0, 1.0]]);
        let d = [4.0f64, -3.0];
        let a = &(&v * &Matrix::diag(&d)) * &vinv;
        let e = mat_exp(&a).unwrap();
        let want = &(&v * &Matrix::diag(&[d[0].exp(), d[1].exp()])) * &vinv;
        assert!(e.max_abs_diff(&want) / want.norm_max() < 1e-13);
    }

    #[test]
    fn exp_generic_f32() {
        let h = std::f32::consts::FRAC_PI_2;
        let a = Matrix::<f32>::from_rows(&[[0.0, h], [-h, 0.0]]).unwrap();
        let e = mat_exp(&a).unwrap();
        assert!((e[(0, 1)] - 1.0).abs() < 1e-6 && e[(0, 0)].abs() < 1e-6);
    }

    #[test]
    fn lyapunov_scalar_cases() {
        let p = solve_discrete_lyapunov(&m(&[&[0.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(p[(0, 0)], 1.0);
        let p = solve_discrete_lyapunov(&m(&[&[0.5]]), &m(&[&[1.0]])).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_errors() {
        assert!(matches!(
            solve_discrete_lyapunov(&m(&[&[1.5]]), &m(&[&[1.0]])),
            Err(Error::NotSchur { .. })
        ));
        let asym = m(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(
            solve_discrete_lyapunov(&Matrix::zeros(2, 2), &asym),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn regulator_identity_case() {
        let i = Matrix::<f64>::identity(2);
        let sol = solve_regulator(&i, &i, &i, &i, &i).unwrap();
        assert!(sol.pi.max_abs_diff(&i) < 1e-14);
        assert!(sol.gamma.norm_max() < 1e-14);
    }

    #[test]
    fn regulator_reports_unsolvable() {
        // B = 0 and C = I with S = 2I: A Π = 2Π forces Π = 0 but C Π = I
        let a = Matrix::<f64>::identity(1);
        let b = Matrix::zeros(1, 1);
        let c = Matrix::identity(1);
        let s = m(&[&[2.0]]);
        let qe = Matrix::identity(1);
        assert!(matches!(
            solve_regulator(&a, &b, &c, &s, &qe),
            Err(Error::RegulatorUnsolvable { .. })
        ));
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&Matrix::<f64>::identity(2)).unwrap() - 1.0).abs() < 1e-12);
        let d = Matrix::<f64>::diag(&[0.5, -0.25]);
        assert!((spectral_radius(&d).unwrap() - 0.5).abs() < 1e-12);
        let r = m(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!((spectral_radius(&r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn controllability_examples() {
        assert_eq!(
            controllability_rank(&m(&[&[0.0]]), &m(&[&[1.0]])).unwrap(),
            1
        );
        assert_eq!(
            controllability_rank(&Matrix::identity(2), &m(&[&[1.0], &[0.0]])).unwrap(),
            1
        );
    }
}
