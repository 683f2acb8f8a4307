//! Dense factorizations: LU, Householder QR, Cholesky, symmetric Jacobi
//! eigen-decomposition, one-sided Jacobi SVD, and real Hessenberg-QR
//! eigenvalues.

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, Matrix};
use crate::scalar::Real;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim("Lu::new", "matrix must be square"));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.norm_max().max(T::min_positive_value());
        let tiny = T::epsilon() * T::lit(n.max(1) as f64) * scale;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(Error::Singular);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve(&b.col(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Householder QR of an `m x n` matrix.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    /// Packed reflectors below the diagonal, R on and above it.
    qr: Matrix<T>,
    /// Reflector scalars.
    beta: Vec<T>,
}

impl<T: Real> Qr<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        let (m, n) = a.shape();
        let mut qr = a.clone();
        let steps = m.min(n);
        let mut beta = vec![T::zero(); steps];
        for k in 0..steps {
            let mut norm = T::zero();
            for i in k..m {
                norm = norm.hypot(qr[(i, k)]);
            }
            if norm == T::zero() {
                continue;
            }
            let alpha = if qr[(k, k)] > T::zero() { -norm } else { norm };
            // v = x - alpha e1, stored with v[0] implicit in qr[(k,k)] slot
            let v0 = qr[(k, k)] - alpha;
            for i in k + 1..m {
                let v = qr[(i, k)] / v0;
                qr[(i, k)] = v;
            }
            // beta = 2 / (v'v) with v[0] = 1
            let mut vtv = T::one();
            for i in k + 1..m {
                vtv += qr[(i, k)] * qr[(i, k)];
            }
            let b = T::lit(2.0) / vtv;
            beta[k] = b;
            qr[(k, k)] = alpha;
            for j in k + 1..n {
                let mut s = qr[(k, j)];
                for i in k + 1..m {
                    s += qr[(i, k)] * qr[(i, j)];
                }
                s *= b;
                qr[(k, j)] -= s;
                for i in k + 1..m {
                    let v = qr[(i, k)];
                    qr[(i, j)] -= s * v;
                }
            }
        }
        Self { qr, beta }
    }

    /// Applies `Q'` to `b` in place.
    pub fn apply_qt(&self, b: &mut [T]) {
        let m = self.qr.rows();
        for k in 0..self.beta.len() {
            if self.beta[k] == T::zero() {
                continue;
            }
            let mut s = b[k];
            for i in k + 1..m {
                s += self.qr[(i, k)] * b[i];
            }
            s *= self.beta[k];
            b[k] -= s;
            for i in k + 1..m {
                b[i] -= s * self.qr[(i, k)];
            }
        }
    }

    /// Applies `Q` to `b` in place.
    pub fn apply_q(&self, b: &mut [T]) {
        let m = self.qr.rows();
        for k in (0..self.beta.len()).rev() {
            if self.beta[k] == T::zero() {
                continue;
            }
            let mut s = b[k];
            for i in k + 1..m {
                s += self.qr[(i, k)] * b[i];
            }
            s *= self.beta[k];
            b[k] -= s;
            for i in k + 1..m {
                b[i] -= s * self.qr[(i, k)];
            }
        }
    }

    /// Full orthogonal factor (`m x m`).
    pub fn q_full(&self) -> Matrix<T> {
        let m = self.qr.rows();
        let mut q = Matrix::zeros(m, m);
        let mut e = vec![T::zero(); m];
        for j in 0..m {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            self.apply_q(&mut e);
            for i in 0..m {
                q[(i, j)] = e[i];
            }
        }
        q
    }

    /// Diagonal entry `R[k,k]`.
    pub fn r_diag(&self, k: usize) -> T {
        self.qr[(k, k)]
    }

    /// Solves `R[..n,..n] x = b[..n]` by back substitution.
    pub fn solve_r(&self, b: &[T]) -> Vec<T> {
        let n = self.qr.cols().min(self.qr.rows());
        let mut x = b[..n].to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.qr[(i, j)] * x[j];
            }
            x[i] = s / self.qr[(i, i)];
        }
        x
    }

    /// Least-squares solution of `A x ≈ b` for full-column-rank tall `A`.
    pub fn solve_least_squares(&self, b: &[T]) -> Vec<T> {
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        self.solve_r(&y)
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// when a pivot falls below `tol * max|diag|`.
pub fn cholesky<T: Real>(a: &Matrix<T>, tol: T) -> Option<Matrix<T>> {
    if !a.is_square() {
        return None;
    }
    let n = a.rows();
    let dmax = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].abs()));
    let floor = tol * dmax.max(T::min_positive_value());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L L' x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &y[..i]);
        y[i] = (y[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (ascending) and the matching eigenvectors as columns.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let total = m.norm_fro();
        if off.sqrt() <= T::epsilon() * total.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Thin singular value decomposition `A = U diag(s) V'` by one-sided Jacobi.
/// Singular values are returned in descending order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        if a.rows() < a.cols() {
            let t = Self::new(&a.transpose());
            return Self {
                u: t.v,
                s: t.s,
                v: t.u,
            };
        }
        let (m, n) = a.shape();
        // work on columns: store transposed for contiguous column access
        let mut ut = a.transpose();
        let mut vt = Matrix::<T>::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..80 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha = dot(ut.row(p), ut.row(p));
                    let beta = dot(ut.row(q), ut.row(q));
                    let gamma = dot(ut.row(p), ut.row(q));
                    if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    for k in 0..m {
                        let up = ut[(p, k)];
                        let uq = ut[(q, k)];
                        ut[(p, k)] = c * up - s * uq;
                        ut[(q, k)] = s * up + c * uq;
                    }
                    for k in 0..n {
                        let vp = vt[(p, k)];
                        let vq = vt[(q, k)];
                        vt[(p, k)] = c * vp - s * vq;
                        vt[(q, k)] = s * vp + c * vq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let norms: Vec<T> = (0..n).map(|j| dot(ut.row(j), ut.row(j)).sqrt()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
        let s: Vec<T> = order.iter().map(|&j| norms[j]).collect();
        let u = Matrix::from_fn(m, n, |i, c| {
            let j = order[c];
            if norms[j] > T::zero() {
                ut[(j, i)] / norms[j]
            } else {
                T::zero()
            }
        });
        let v = Matrix::from_fn(n, n, |i, c| vt[(order[c], i)]);
        Self { u, s, v }
    }

    /// Numerical rank: singular values above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: T) -> usize {
        let smax = self.s.first().copied().unwrap_or(T::zero());
        if smax == T::zero() {
            return 0;
        }
        self.s.iter().filter(|&&s| s > rel_tol * smax).count()
    }

    /// Minimum-norm least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[T], rel_tol: T) -> Vec<T> {
        let smax = self.s.first().copied().unwrap_or(T::zero());
        let utb = self.u.tr_mul_vec(b);
        let mut y = vec![T::zero(); self.s.len()];
        for (k, &s) in self.s.iter().enumerate() {
            if s > rel_tol * smax && s > T::zero() {
                y[k] = utb[k] / s;
            }
        }
        self.v.mul_vec(&y)
    }
}

/// Eigenvalues of a general real square matrix as `(re, im)` pairs, via
/// Householder reduction to Hessenberg form followed by shifted QR.
pub fn eigenvalues<T: Real>(a: &Matrix<T>) -> Result<Vec<(T, T)>> {
    if !a.is_square() {
        return Err(Error::dim("eigenvalues", "matrix must be square"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = hessenberg(a);
    hqr(h)
}

fn hessenberg<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    let n = a.rows();
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        let mut norm = T::zero();
        for i in k + 1..n {
            norm = norm.hypot(h[(i, k)]);
        }
        if norm == T::zero() {
            continue;
        }
        let alpha = if h[(k + 1, k)] > T::zero() { -norm } else { norm };
        let mut v = vec![T::zero(); n];
        v[k + 1] = h[(k + 1, k)] - alpha;
        for i in k + 2..n {
            v[i] = h[(i, k)];
        }
        let vtv = dot(&v, &v);
        if vtv == T::zero() {
            continue;
        }
        let beta = T::lit(2.0) / vtv;
        // H <- (I - beta v v') H
        for j in 0..n {
            let mut s = T::zero();
            for i in k + 1..n {
                s += v[i] * h[(i, j)];
            }
            s *= beta;
            for i in k + 1..n {
                h[(i, j)] -= s * v[i];
            }
        }
        // H <- H (I - beta v v')
        for i in 0..n {
            let mut s = T::zero();
            for j in k + 1..n {
                s += h[(i, j)] * v[j];
            }
            s *= beta;
            for j in k + 1..n {
                h[(i, j)] -= s * v[j];
            }
        }
        for i in k + 2..n {
            h[(i, k)] = T::zero();
        }
    }
    h
}

/// Francis double-shift QR on an upper Hessenberg matrix (1-based indexing
/// internally to keep the classic recurrences readable).
fn hqr<T: Real>(h: Matrix<T>) -> Result<Vec<(T, T)>> {
    let n = h.rows();
    let mut a = vec![vec![T::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h[(i, j)];
        }
    }
    let mut wr = vec![T::zero(); n + 1];
    let mut wi = vec![T::zero(); n + 1];
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in (i.saturating_sub(1)).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let half = T::lit(0.5);
    let mut nn = n;
    let mut t = T::zero();
    let (mut p, mut q, mut r, mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = T::zero();
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = T::zero();
                nn -= 1;
            } else {
                y = a[nn - 1][nn - 1];
                w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    p = half * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= T::zero() {
                        z = p + if p >= T::zero() { z.abs() } else { -z.abs() };
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != T::zero() {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = T::zero();
                        wi[nn] = T::zero();
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return Err(Error::Numeric("eigenvalue QR iteration did not converge".into()));
                    }
                    if its == 10 || its == 20 || its == 40 {
                        t += x;
                        for i in 1..=nn {
                            a[i][i] -= x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = T::lit(0.75) * s;
                        y = x;
                        w = T::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s0;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nn {
                        a[i][i - 2] = T::zero();
                        if i != m + 2 {
                            a[i][i - 3] = T::zero();
                        }
                    }
                    let mut k = m;
                    while k + 1 <= nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = T::zero();
                            if k != nn - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != T::zero() {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let mag = (p * p + q * q + r * r).sqrt();
                        let s = if p >= T::zero() { mag } else { -mag };
                        if s != T::zero() {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn lu_solves_and_detects_singular() {
        let a = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        let x = Lu::new(&a).unwrap().solve(&[4.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert_eq!(Lu::new(&m(&[&[1.0, 2.0], &[2.0, 4.0]])).unwrap_err(), Error::Singular);
    }

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 7.0]]);
        let qr = Qr::new(&a);
        let q = qr.q_full();
        let qtq = q.tr_mul(&q);
        assert!(qtq.max_abs_diff(&Matrix::identity(3)) < 1e-14);
        let x = qr.solve_least_squares(&[1.0, 2.0, 3.0]);
        // normal equations check
        let r = crate::numerics::matrix::vec_sub(&a.mul_vec(&x), &[1.0, 2.0, 3.0]);
        let g = a.tr_mul_vec(&r);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cholesky_and_eigen() {
        let a = m(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let l = cholesky(&a, 1e-12).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0]);
        let back = a.mul_vec(&x);
        assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 2.0).abs() < 1e-14);
        assert!(cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]]), 1e-12).is_none());
        let (vals, vecs) = symmetric_eigen(&m(&[&[2.0, 1.0], &[1.0, 2.0]]));
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let v0 = vecs.col(0);
        assert!((v0[0] + v0[1]).abs() < 1e-14);
    }

    #[test]
    fn svd_rank_and_values() {
        let a = m(&[&[3.0, 0.0], &[0.0, -2.0], &[0.0, 0.0]]);
        let svd = Svd::new(&a);
        assert!((svd.s[0] - 3.0).abs() < 1e-14 && (svd.s[1] - 2.0).abs() < 1e-14);
        let rank_def = m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        assert_eq!(Svd::new(&rank_def).rank(1e-9), 1);
        let recon = &(&svd.u * &Matrix::diag(&svd.s)) * &svd.v.transpose();
        assert!(recon.max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn eigenvalues_of_companion() {
        // roots 1, 2, 3
        let a = m(&[&[6.0, -11.0, 6.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let mut ev: Vec<f64> = eigenvalues(&a).unwrap().into_iter().map(|(r, _)| r).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        let rot = eigenvalues(&m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert!(rot.iter().all(|(re, im)| re.abs() < 1e-15 && (im.abs() - 1.0).abs() < 1e-15));
    }
}
