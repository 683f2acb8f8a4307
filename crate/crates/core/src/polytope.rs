//! Halfspace polytopes `{z : Hz ≤ h}`. Free coordinates carry no rows, so a
//! polytope with zero rows is the whole space.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm_inf, Matrix};
use crate::qp::{solve_lp, solve_lp_from, LpSolution, QpStatus};
use crate::scalar::Real;

/// Default absolute membership tolerance.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "PolytopeRepr",
    into = "PolytopeRepr",
    bound = "T: Real"
)]
pub struct Polytope<T> {
    mat: Matrix<T>,
    rhs: Vec<T>,
}

impl<T: Real> Polytope<T> {
    pub fn new(mat: Matrix<T>, rhs: Vec<T>) -> Result<Self> {
        if mat.rows() != rhs.len() {
            return Err(Error::dim(
                "polytope",
                format!("H has {} rows, h has {}", mat.rows(), rhs.len()),
            ));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("polytope: non-finite bound".into()));
        }
        Ok(Self { mat, rhs })
    }

    /// The whole of `R^dim`.
    pub fn free(dim: usize) -> Self {
        Self {
            mat: Matrix::zeros(0, dim),
            rhs: Vec::new(),
        }
    }

    /// `{z : ‖z‖∞ ≤ radius}`.
    pub fn cube(dim: usize, radius: T) -> Self {
        Self::boxed(&vec![-radius; dim], &vec![radius; dim]).expect("consistent cube bounds")
    }

    /// `{z : lo ≤ z ≤ hi}`.
    pub fn boxed(lo: &[T], hi: &[T]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim("polytope box", format!("{} vs {}", lo.len(), hi.len())));
        }
        let d = lo.len();
        let mut mat = Matrix::zeros(2 * d, d);
        let mut rhs = Vec::with_capacity(2 * d);
        for i in 0..d {
            mat[(2 * i, i)] = T::one();
            rhs.push(hi[i]);
            mat[(2 * i + 1, i)] = -T::one();
            rhs.push(-lo[i]);
        }
        Self::new(mat, rhs)
    }

    pub fn dim(&self) -> usize {
        self.mat.cols()
    }

    pub fn rows(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.mat
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    /// Largest value of `Hz − h` (negative inside, `-∞` with no rows).
    pub fn max_violation(&self, z: &[T]) -> Result<T> {
        self.check_dim(z.len(), "max_violation")?;
        Ok((0..self.rows())
            .map(|i| dot(self.mat.row(i), z) - self.rhs[i])
            .fold(T::neg_infinity(), T::max))
    }

    /// Rows with `H_i z > h_i + tol`, with their excess.
    pub fn violated_rows(&self, z: &[T], tol: T) -> Result<Vec<(usize, T)>> {
        self.check_dim(z.len(), "violated_rows")?;
        Ok((0..self.rows())
            .filter_map(|i| {
                let e = dot(self.mat.row(i), z) - self.rhs[i];
                (e > tol).then_some((i, e))
            })
            .collect())
    }

    pub fn contains(&self, z: &[T], tol: T) -> Result<bool> {
        if tol < T::zero() {
            return Err(Error::Validation("polytope: negative tolerance".into()));
        }
        Ok(self.max_violation(z)? <= tol)
    }

    /// `{z : Hz ≤ factor·h}`.
    pub fn scale(&self, factor: T) -> Result<Self> {
        if !(factor > T::zero() && factor <= T::one()) {
            return Err(Error::Validation(format!(
                "polytope scale factor {factor} outside (0, 1]"
            )));
        }
        Ok(Self {
            mat: self.mat.clone(),
            rhs: self.rhs.iter().map(|&v| v * factor).collect(),
        })
    }

    /// Cartesian product `self × other`.
    pub fn stack(&self, other: &Self) -> Self {
        Self {
            mat: Matrix::block_diag(&[&self.mat, &other.mat]),
            rhs: self.rhs.iter().chain(&other.rhs).copied().collect(),
        }
    }

    pub fn product(factors: &[&Self]) -> Self {
        let mut out = Self::free(0);
        for f in factors {
            out = out.stack(f);
        }
        out
    }

    /// Intersection of two polytopes on the same space.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim(), "intersect")?;
        let mut mat = self.mat.clone();
        for i in 0..other.rows() {
            mat.push_row(other.mat.row(i));
        }
        Ok(Self {
            mat,
            rhs: self.rhs.iter().chain(&other.rhs).copied().collect(),
        })
    }

    /// Appends the constraint `row·z ≤ bound`.
    pub fn push_row(&mut self, row: &[T], bound: T) -> Result<()> {
        self.check_dim(row.len(), "push_row")?;
        self.mat.push_row(row);
        self.rhs.push(bound);
        Ok(())
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            mat: self.mat.select_rows(idx),
            rhs: idx.iter().map(|&i| self.rhs[i]).collect(),
        }
    }

    /// Image of the constraint set under the substitution `z = M y`:
    /// `{y : H M y ≤ h}`.
    pub fn pullback(&self, m: &Matrix<T>) -> Result<Self> {
        Ok(Self {
            mat: self.mat.matmul(m)?,
            rhs: self.rhs.clone(),
        })
    }

    /// Support value `max c'z` over the set.
    pub fn support(&self, c: &[T]) -> Result<LpSolution<T>> {
        solve_lp(c, self)
    }

    pub fn is_empty(&self) -> Result<bool> {
        let sol = solve_lp(&vec![T::zero(); self.dim()], self)?;
        match sol.status {
            QpStatus::Optimal => Ok(false),
            QpStatus::Infeasible => Ok(true),
            QpStatus::Unbounded => Ok(false),
            QpStatus::NumericFailure => Err(Error::Numeric("polytope emptiness LP failed".into())),
        }
    }

    /// A point of the set, if one exists.
    pub fn feasible_point(&self) -> Result<Option<Vec<T>>> {
        let sol = solve_lp(&vec![T::zero(); self.dim()], self)?;
        match sol.status {
            QpStatus::Optimal => Ok(Some(sol.z)),
            QpStatus::Infeasible => Ok(None),
            _ => Err(Error::Numeric("polytope feasibility LP failed".into())),
        }
    }

    /// Drops rows implied by the others. A row is redundant when its support
    /// value over the remaining rows does not exceed its bound by more than
    /// `tol`. Exact duplicates (after normalization) and trivially satisfied
    /// zero rows go first.
    pub fn remove_redundant(&self, tol: T) -> Result<Self> {
        let mut keep: Vec<usize> = Vec::new();
        // duplicate and zero-row pass
        let mut normalized: Vec<(Vec<T>, T)> = Vec::new();
        for i in 0..self.rows() {
            let row = self.mat.row(i);
            let n = norm_inf(row);
            if n == T::zero() {
                if self.rhs[i] >= -tol {
                    continue;
                }
                keep.push(i);
                normalized.push((row.to_vec(), self.rhs[i]));
                continue;
            }
            let r: Vec<T> = row.iter().map(|&v| v / n).collect();
            let b = self.rhs[i] / n;
            let dup = normalized.iter().position(|(q, _)| {
                q.iter()
                    .zip(&r)
                    .all(|(a, b)| (*a - *b).abs() <= T::lit(1e-12))
            });
            match dup {
                Some(k) => {
                    if b < normalized[k].1 {
                        normalized[k].1 = b;
                        keep[k] = i;
                    }
                }
                None => {
                    keep.push(i);
                    normalized.push((r, b));
                }
            }
        }
        let mut current: Vec<usize> = keep;
        let start = self.select_rows(&current).feasible_point()?;
        let Some(start) = start else {
            return Ok(self.select_rows(&current));
        };
        let mut k = 0;
        while k < current.len() {
            let i = current[k];
            let others: Vec<usize> = current
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect();
            let sub = self.select_rows(&others);
            let sol = solve_lp_from(self.mat.row(i), &sub, Some(&start))?;
            let redundant = sol.status == QpStatus::Optimal
                && sol.value <= self.rhs[i] + tol * (T::one() + self.rhs[i].abs());
            if redundant {
                current.remove(k);
            } else {
                k += 1;
            }
        }
        Ok(self.select_rows(&current))
    }

    /// Hit-and-run samples from a bounded set with non-empty interior,
    /// starting at the interior point `start`. Returns `count` points taken
    /// every `thin` moves after `burn_in` moves.
    pub fn sample_hit_and_run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        start: &[T],
        count: usize,
        burn_in: usize,
        thin: usize,
    ) -> Result<Vec<Vec<T>>> {
        self.check_dim(start.len(), "sample_hit_and_run")?;
        if self.max_violation(start)? > T::zero() {
            return Err(Error::Validation("hit-and-run start outside the set".into()));
        }
        let d = self.dim();
        let mut z = start.to_vec();
        let mut out = Vec::with_capacity(count);
        let total = burn_in + count * thin.max(1);
        for step in 0..total {
            let mut dir: Vec<T> = (0..d)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let n = dot(&dir, &dir).sqrt();
            if n == T::zero() {
                continue;
            }
            dir.iter_mut().for_each(|v| *v /= n);
            let (mut lo, mut hi) = (T::neg_infinity(), T::infinity());
            for i in 0..self.rows() {
                let a = dot(self.mat.row(i), &dir);
                let slack = (self.rhs[i] - dot(self.mat.row(i), &z)).max(T::zero());
                if a > T::zero() {
                    hi = hi.min(slack / a);
                } else if a < T::zero() {
                    lo = lo.max(slack / a);
                }
            }
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Validation("hit-and-run requires a bounded set".into()));
            }
            let t = lo + (hi - lo) * T::lit(rng.gen::<f64>());
            for (zi, di) in z.iter_mut().zip(&dir) {
                *zi += t * *di;
            }
            if step >= burn_in && (step - burn_in + 1) % thin.max(1) == 0 {
                out.push(z.clone());
            }
        }
        Ok(out)
    }

    fn check_dim(&self, n: usize, op: &'static str) -> Result<()> {
        if n != self.dim() {
            return Err(Error::dim(op, format!("{} vs polytope dim {}", n, self.dim())));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Polytope<U> {
        Polytope {
            mat: self.mat.cast(),
            rhs: self.rhs.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Serialized form: leading `free_dims` coordinates carry no rows and are
/// omitted from `H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeRepr {
    #[serde(rename = "H")]
    pub mat: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    #[serde(default)]
    pub free_dims: usize,
}

impl<T: Real> TryFrom<PolytopeRepr> for Polytope<T> {
    type Error = Error;

    fn try_from(r: PolytopeRepr) -> Result<Self> {
        let cols = r.mat.first().map_or(0, Vec::len);
        if r.mat.iter().any(|row| row.len() != cols) {
            return Err(Error::Config("polytope H rows have unequal length".into()));
        }
        let d = r.free_dims + cols;
        let mut mat = Matrix::zeros(r.mat.len(), d);
        for (i, row) in r.mat.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Config("polytope H has a non-finite entry".into()));
                }
                mat[(i, r.free_dims + j)] = T::lit(v);
            }
        }
        Polytope::new(mat, r.h.into_iter().map(T::lit).collect())
    }
}

impl<T: Real> From<Polytope<T>> for PolytopeRepr {
    fn from(p: Polytope<T>) -> Self {
        let d = p.dim();
        let free_dims = if p.rows() == 0 {
            d
        } else {
            (0..d)
                .take_while(|&j| (0..p.rows()).all(|i| p.mat[(i, j)] == T::zero()))
                .count()
        };
        Self {
            mat: (0..p.rows())
                .map(|i| p.mat.row(i)[free_dims..].iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
            h: p.rhs.iter().map(|v| v.to_f64_lossy()).collect(),
            free_dims,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_box() -> Polytope<f64> {
        Polytope::cube(2, 1.0)
    }

    fn interval(lo: f64, hi: f64) -> Polytope<f64> {
        Polytope::boxed(&[lo], &[hi]).unwrap()
    }

    #[test]
    fn contains_examples() {
        let b = unit_box();
        assert!(b.contains(&[0.0, 0.0], 1e-8).unwrap());
        assert!(b.contains(&[1.0, 1.0], 0.0).unwrap());
        assert!(!b.contains(&[1.001, 0.0], 1e-6).unwrap());
        assert!(b.contains(&[1.0], 0.0).is_err());
    }

    #[test]
    fn scale_examples() {
        let b = unit_box().scale(0.999).unwrap();
        assert!(b.rhs().iter().all(|&v| (v - 0.999).abs() < 1e-15));
        assert_eq!(unit_box().scale(1.0).unwrap(), unit_box());
        let asym = Polytope::new(Matrix::from_f64_rows(&[[1.0], [-1.0]]).unwrap(), vec![2.0, 1.0])
            .unwrap()
            .scale(0.5)
            .unwrap();
        assert_eq!(asym.rhs(), &[1.0, 0.5]);
        assert!(unit_box().scale(0.0).is_err());
        assert!(unit_box().scale(1.5).is_err());
    }

    #[test]
    fn stack_examples() {
        let z1 = Polytope::product(&[
            &Polytope::free(2),
            &Polytope::cube(4, 1.0),
            &Polytope::cube(2, 0.5),
        ]);
        assert_eq!(z1.dim(), 8);
        assert_eq!(z1.rows(), 12);
        assert!(z1.contains(&[100.0, -50.0, 1.0, -1.0, 0.5, 0.0, 0.5, -0.5], 0.0).unwrap());
        assert!(!z1.contains(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.0], 1e-9).unwrap());

        let b = unit_box();
        let s = b.stack(&Polytope::free(0));
        assert_eq!(s, b);

        let rect = interval(0.0, 1.0).stack(&interval(-2.0, 3.0));
        assert_eq!(rect.rows(), 4);
        assert!(rect.contains(&[0.5, 2.5], 0.0).unwrap());
    }

    #[test]
    fn emptiness_examples() {
        let empty =
            Polytope::new(Matrix::from_f64_rows(&[[1.0], [-1.0]]).unwrap(), vec![0.0, -1.0])
                .unwrap();
        assert!(empty.is_empty().unwrap());
        assert!(!unit_box().is_empty().unwrap());
        assert!(!interval(1.0, 1.0).is_empty().unwrap());
        assert!(!Polytope::<f64>::free(3).is_empty().unwrap());
    }

    #[test]
    fn redundancy_removal() {
        let mut p = unit_box();
        p.push_row(&[1.0, 1.0], 5.0).unwrap();
        p.push_row(&[2.0, 0.0], 2.0).unwrap();
        p.push_row(&[1.0, 1.0], 1.5).unwrap();
        let r = p.remove_redundant(1e-9).unwrap();
        assert_eq!(r.rows(), 5);
        for z in [[0.9, 0.9], [1.0, 0.5], [0.0, 0.0], [-1.0, -1.0]] {
            assert_eq!(p.contains(&z, 1e-9).unwrap(), r.contains(&z, 1e-9).unwrap());
        }
    }

    #[test]
    fn serde_round_trip_with_free_prefix() {
        let z = Polytope::product(&[&Polytope::free(2), &Polytope::cube(2, 1.0)]);
        let json = serde_json::to_string(&z).unwrap();
        assert!(json.contains("\"free_dims\":2"));
        let back: Polytope<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, z);
        let free: Polytope<f64> =
            serde_json::from_str(&serde_json::to_string(&Polytope::<f64>::free(3)).unwrap())
                .unwrap();
        assert_eq!(free.dim(), 3);
    }

    #[test]
    fn hit_and_run_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = unit_box();
        let pts = b.sample_hit_and_run(&mut rng, &[0.0, 0.0], 200, 10, 2).unwrap();
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().all(|p| b.contains(p, 1e-12).unwrap()));
        assert!(Polytope::<f64>::free(2)
            .sample_hit_and_run(&mut rng, &[0.0, 0.0], 1, 0, 1)
            .is_err());
    }
}
