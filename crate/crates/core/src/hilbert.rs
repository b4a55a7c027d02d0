//! Finite-dimensional truncation of a separable Hilbert space.
//!
//! Vectors are coordinates in a fixed orthonormal basis; bounded operators
//! are dense row-major `d x d` matrices. Dimensions are small (a handful to a
//! few dozen), so everything is dense and allocation-light.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// A point of the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector(Vec<f64>);

impl HVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("vector dimension must be at least 1".into()));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self(vec![0.0; dim])
    }

    /// The `i`-th basis vector `e_i` (zero-based).
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &HVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scale(&self, s: f64) -> HVector {
        HVector(self.0.iter().map(|x| x * s).collect())
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &HVector) {
        debug_assert_eq!(self.dim(), x.dim());
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

impl Add for &HVector {
    type Output = HVector;
    fn add(self, rhs: &HVector) -> HVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        HVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &HVector {
    type Output = HVector;
    fn sub(self, rhs: &HVector) -> HVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        HVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &HVector {
    type Output = HVector;
    fn neg(self) -> HVector {
        HVector(self.0.iter().map(|x| -x).collect())
    }
}

impl Mul<&HVector> for f64 {
    type Output = HVector;
    fn mul(self, rhs: &HVector) -> HVector {
        rhs.scale(self)
    }
}

#[inline]
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

/// A bounded linear operator on the truncation.
#[derive(Debug, Clone)]
pub struct LinOp {
    dim: usize,
    entries: Vec<f64>,
    norm: OnceLock<f64>,
}

impl PartialEq for LinOp {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl LinOp {
    /// Builds an operator from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidInput("operator dimension must be at least 1".into()));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Ok(Self::from_entries(dim, entries))
    }

    pub(crate) fn from_entries(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self {
            dim,
            entries,
            norm: OnceLock::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_entries(dim, vec![0.0; dim * dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut op = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            op.entries[i * dim + i] = v;
        }
        op
    }

    /// Rank-one operator `u ⊗ v`, i.e. `x ↦ <v, x> u`.
    pub fn outer(u: &HVector, v: &HVector) -> Self {
        let dim = u.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for &a in u.coords() {
            entries.extend(v.coords().iter().map(|&b| a * b));
        }
        Self::from_entries(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0)
    }

    pub fn apply(&self, v: &HVector) -> Result<HVector> {
        self.check_dim(v.dim())?;
        let mut out = vec![0.0; self.dim];
        self.apply_into(v.coords(), &mut out);
        Ok(HVector(out))
    }

    /// `out = T v` on raw slices. Dimensions are the caller's responsibility.
    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += T v`.
    #[inline]
    pub fn apply_add(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn adjoint(&self) -> LinOp {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j];
            }
        }
        LinOp::from_entries(d, entries)
    }

    /// Composition `self ∘ other`, the matrix product.
    pub fn compose(&self, other: &LinOp) -> Result<LinOp> {
        self.check_dim(other.dim)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &LinOp) -> LinOp {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += a * other.entries[k * d + j];
                }
            }
        }
        LinOp::from_entries(d, entries)
    }

    pub fn add(&self, other: &LinOp) -> Result<LinOp> {
        self.check_dim(other.dim)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &LinOp) -> Result<LinOp> {
        self.check_dim(other.dim)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> LinOp {
        LinOp::from_entries(self.dim, self.entries.iter().map(|x| x * s).collect())
    }

    fn zip_with(&self, other: &LinOp, f: impl Fn(f64, f64) -> f64) -> LinOp {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| f(a, b))
            .collect();
        LinOp::from_entries(self.dim, entries)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.entries)
    }

    /// Largest absolute entry deviation from `other`.
    pub fn max_abs_diff(&self, other: &LinOp) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `<v, T v>`.
    pub fn quadratic_form(&self, v: &HVector) -> f64 {
        let mut tv = vec![0.0; self.dim];
        self.apply_into(v.coords(), &mut tv);
        v.coords().iter().zip(&tv).map(|(a, b)| a * b).sum()
    }

    /// Operator (spectral) norm, computed once and cached.
    pub fn op_norm(&self) -> f64 {
        *self.norm.get_or_init(|| spectral_norm(self))
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found == self.dim {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.dim,
                found,
            })
        }
    }
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;
const MAX_SQUARINGS: usize = 64;

/// Largest singular value, uncached (see [`LinOp::op_norm`]).
///
/// `d <= 2` uses the closed form. Otherwise the Gram matrix `G = TᵀT` is
/// squared repeatedly (each step normalised) so that even nearly degenerate
/// top eigenvalues separate; the largest column of the result seeds a plain
/// power iteration on `G` whose Rayleigh quotient is the answer.
pub fn spectral_norm(t: &LinOp) -> f64 {
    let d = t.dim;
    let e = &t.entries;
    match d {
        1 => return e[0].abs(),
        2 => {
            let fro2 = norm_sq(e);
            let det = e[0] * e[3] - e[1] * e[2];
            let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
            return ((fro2 + disc) / 2.0).sqrt();
        }
        _ => {}
    }
    let scale = e.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let scaled = t.scale(1.0 / scale);
    let gram = scaled.adjoint().mul_unchecked(&scaled);

    let mut power = gram.clone();
    for _ in 0..MAX_SQUARINGS {
        let next = power.mul_unchecked(&power);
        let m = next.entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let next = next.scale(1.0 / m);
        let change = next.max_abs_diff(&power);
        power = next;
        if change <= 1e-15 {
            break;
        }
    }

    let mut v: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| power.entry(i, j)).collect::<Vec<_>>())
        .max_by(|a, b| norm_sq(a).total_cmp(&norm_sq(b)))
        .expect("nonempty");
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        gram.apply_into(&v, &mut w);
        let rq: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / nw);
        let done = (rq - lambda).abs() <= POWER_TOL * rq;
        lambda = rq;
        if done {
            break;
        }
    }
    scale * lambda.max(0.0).sqrt()
}

/// Empirical second-moment operator `(1/m) Σ z zᵀ` of centered samples.
///
/// The mean is not subtracted. Only the upper triangle is accumulated and then
/// mirrored, so the result is bit-for-bit symmetric.
pub fn covariance_operator(samples: &[HVector]) -> Result<LinOp> {
    if samples.len() < 2 {
        return Err(Error::Usage(format!(
            "covariance_operator needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].dim();
    let mut acc = vec![0.0; d * d];
    for s in samples {
        if s.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: s.dim(),
            });
        }
        let c = s.coords();
        for i in 0..d {
            for j in i..d {
                acc[i * d + j] += c[i] * c[j];
            }
        }
    }
    let m = samples.len() as f64;
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / m;
            acc[i * d + j] = v;
            acc[j * d + i] = v;
        }
    }
    Ok(LinOp::from_entries(d, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn svd_norm(t: &LinOp) -> f64 {
        let m = DMatrix::from_row_slice(t.dim(), t.dim(), t.entries());
        m.singular_values().max()
    }

    #[test]
    fn apply_examples() {
        let v = HVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(LinOp::identity(2).apply(&v).unwrap(), v);
        assert!(LinOp::zeros(2).apply(&v).unwrap().is_zero());
        assert_eq!(
            LinOp::diag(&[2.0, 3.0]).apply(&v).unwrap().coords(),
            &[2.0, 3.0]
        );
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let err = LinOp::identity(3).apply(&HVector::zeros(2)).unwrap_err();
        assert_eq!(err, Error::Dimension { expected: 3, found: 2 });
        assert!(LinOp::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(LinOp::identity(5).op_norm(), 1.0);
        assert_relative_eq!(LinOp::diag(&[3.0, 1.0, 0.5]).op_norm(), 3.0, max_relative = 1e-12);
        // [[0,1],[0,0]]: TᵀT = diag(0,1), singular values {1, 0}.
        let nil = LinOp::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(nil.op_norm(), 1.0);
        assert_eq!(LinOp::zeros(4).op_norm(), 0.0);
    }

    #[test]
    fn op_norm_nearly_degenerate_top_singular_values() {
        let t = LinOp::diag(&[1.0, 1.0 - 1e-9, 0.3, 1.0 - 2e-9]);
        assert_relative_eq!(t.op_norm(), 1.0, max_relative = 1e-12);
        let r = LinOp::from_rows(&[
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_relative_eq!(r.op_norm(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let e1 = HVector::basis(3, 0);
        let e2 = HVector::basis(3, 1);
        let zero = covariance_operator(&[HVector::zeros(3), HVector::zeros(3)]).unwrap();
        assert!(zero.is_zero());

        let c = covariance_operator(&[e1.clone(), -&e1]).unwrap();
        assert_eq!(c, LinOp::outer(&e1, &e1));

        let c = covariance_operator(&[e1.clone(), -&e1, e2.clone(), -&e2]).unwrap();
        assert_eq!(c, LinOp::diag(&[0.5, 0.5, 0.0]));
    }

    #[test]
    fn covariance_rejects_short_input() {
        assert!(matches!(covariance_operator(&[]), Err(Error::Usage(_))));
        assert!(matches!(covariance_operator(&[HVector::zeros(2)]), Err(Error::Usage(_))));
    }

    fn op_strategy(d: usize) -> impl Strategy<Value = LinOp> {
        prop::collection::vec(-3.0..3.0f64, d * d).prop_map(move |e| LinOp::from_entries(d, e))
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = HVector> {
        prop::collection::vec(-5.0..5.0f64, d).prop_map(|c| HVector::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn op_norm_matches_svd(t in (1usize..=16).prop_flat_map(op_strategy)) {
            let expected = svd_norm(&t);
            prop_assert!((t.op_norm() - expected).abs() <= 1e-10 * expected.max(1e-300));
            prop_assert!((t.adjoint().op_norm() - t.op_norm()).abs() <= 1e-10 * expected.max(1e-300));
        }

        #[test]
        fn op_norm_sub_multiplicative((t, u) in (1usize..=8).prop_flat_map(|d| (op_strategy(d), op_strategy(d)))) {
            let tu = t.compose(&u).unwrap();
            prop_assert!(tu.op_norm() <= t.op_norm() * u.op_norm() * (1.0 + 1e-9));
        }

        #[test]
        fn apply_is_linear(
            (t, u, v) in (1usize..=8).prop_flat_map(|d| (op_strategy(d), vec_strategy(d), vec_strategy(d))),
            alpha in -2.0..2.0f64,
            beta in -2.0..2.0f64,
        ) {
            let mut comb = u.scale(alpha);
            comb.axpy(beta, &v);
            let lhs = t.apply(&comb).unwrap();
            let mut rhs = t.apply(&u).unwrap().scale(alpha);
            rhs.axpy(beta, &t.apply(&v).unwrap());
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }

        #[test]
        fn triangle_inequality((u, v) in (1usize..=8).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d)))) {
            prop_assert!((&u + &v).norm() <= u.norm() + v.norm() + 1e-12);
        }

        #[test]
        fn covariance_symmetric_psd(
            (samples, probe) in (1usize..=8).prop_flat_map(|d| (prop::collection::vec(vec_strategy(d), 2..40), vec_strategy(d)))
        ) {
            let s = covariance_operator(&samples).unwrap();
            prop_assert_eq!(&s, &s.adjoint());
            prop_assert!(s.quadratic_form(&probe) >= -1e-12 * probe.norm_sq());
        }
    }
}
