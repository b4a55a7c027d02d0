//! The Gaussian limit `N(0, A C A*)` and reference laws of `‖N‖`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::empirical::EmpiricalLaw;
use crate::error::{Error, Result};
use crate::hilbert::{norm, HVector, LinOp};
use crate::linproc::CoeffSeq;
use crate::rng::CounterRng;

const PSD_TOL: f64 = 1e-9;

/// Covariance of the limit together with its symmetric PSD square root.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSpec {
    pub covariance: LinOp,
    pub sqrt_factor: LinOp,
}

impl LimitSpec {
    /// Wraps a symmetric PSD covariance, computing its square root.
    pub fn from_covariance(covariance: LinOp) -> Result<Self> {
        let (values, vectors) = eigen(&covariance);
        let floor = -PSD_TOL * values.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
        if let Some(min) = values.iter().copied().find(|&v| v < floor) {
            return Err(Error::Model(format!("covariance has negative eigenvalue {min}")));
        }
        let d = covariance.dim();
        let mut root = vec![0.0; d * d];
        for (k, &lambda) in values.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            if s == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    root[i * d + j] += s * vectors[(i, k)] * vectors[(j, k)];
                }
            }
        }
        Ok(Self {
            covariance,
            sqrt_factor: symmetrized(&LinOp::from_entries(d, root)),
        })
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    /// Draw `i` of the family: `sqrt_factor · g` with `g ~ N(0, I)`.
    pub fn draw_into(&self, rng: &CounterRng, index: i64, gauss: &mut [f64], out: &mut [f64]) {
        let mut s = rng.at(index);
        for g in gauss.iter_mut() {
            *g = StandardNormal.sample(&mut s);
        }
        self.sqrt_factor.apply_into(gauss, out);
    }

    pub fn sample_vectors(&self, m: usize, seed: u64) -> Vec<HVector> {
        let rng = CounterRng::new(seed);
        let d = self.dim();
        (0..m)
            .into_par_iter()
            .map_init(
                || vec![0.0; d],
                |gauss, i| {
                    let mut out = vec![0.0; d];
                    self.draw_into(&rng, i as i64, gauss, &mut out);
                    HVector::new(out).expect("dim >= 1")
                },
            )
            .collect()
    }
}

fn eigen(op: &LinOp) -> (Vec<f64>, DMatrix<f64>) {
    let d = op.dim();
    let m = DMatrix::from_row_slice(d, d, op.entries());
    let eig = SymmetricEigen::new(m);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

fn symmetrized(op: &LinOp) -> LinOp {
    let d = op.dim();
    let mut e = op.entries().to_vec();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (e[i * d + j] + e[j * d + i]);
            e[i * d + j] = v;
            e[j * d + i] = v;
        }
    }
    LinOp::from_entries(d, e)
}

/// `A C_ε A*` for `A = Σ_j a_j`.
pub fn limit_covariance(c: &CoeffSeq, c_eps: &LinOp) -> Result<LimitSpec> {
    if c_eps.dim() != c.dim() {
        return Err(Error::Dimension {
            expected: c.dim(),
            found: c_eps.dim(),
        });
    }
    if c_eps.max_abs_diff(&c_eps.adjoint()) > PSD_TOL * (1.0 + c_eps.frobenius_norm()) {
        return Err(Error::Model("innovation covariance is not symmetric".into()));
    }
    let (values, _) = eigen(c_eps);
    if let Some(min) = values.iter().copied().find(|&v| v < -PSD_TOL) {
        return Err(Error::Model(format!(
            "innovation covariance has negative eigenvalue {min}"
        )));
    }
    let a = c.total();
    let cov = a.compose(c_eps)?.compose(&a.adjoint())?;
    LimitSpec::from_covariance(symmetrized(&cov))
}

/// `m` independent draws of `‖N‖`, sorted.
pub fn sample_limit_norms(spec: &LimitSpec, m: usize, seed: u64) -> Result<EmpiricalLaw> {
    if m == 0 {
        return Err(Error::Usage("sample_limit_norms needs m >= 1".into()));
    }
    let rng = CounterRng::new(seed);
    let d = spec.dim();
    let norms = (0..m)
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(gauss, out), i| {
                spec.draw_into(&rng, i as i64, gauss, out);
                norm(out)
            },
        )
        .collect();
    EmpiricalLaw::new(norms)
}

/// Rule-of-thumb bandwidth `1.06 σ m^{-1/5}`.
pub fn silverman_bandwidth(law: &EmpiricalLaw) -> f64 {
    1.06 * law.std_dev() * (law.len() as f64).powf(-0.2)
}

pub const MIN_DENSITY_SAMPLES: usize = 1000;
// Kernel mass beyond 7 bandwidths is below 3e-12.
const KERNEL_CUTOFF: f64 = 7.0;

/// Estimate of `c(N)`, a bound on the density of `‖N‖`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DensityBound {
    /// `sup_t f̂(t)`; infinite when the law is degenerate.
    pub value: f64,
    pub argmax: f64,
    pub bandwidth: f64,
    pub unbounded: bool,
}

/// Supremum over the grid `{0, h/4, h/2, …} ∩ [0, max]` of a Gaussian-kernel
/// density estimate of the nonnegative law.
///
/// Mass the kernel would put below zero is reflected back, so the estimate
/// does not sag at the origin where densities like the half-normal peak.
pub fn density_bound(norms: &EmpiricalLaw, bandwidth: f64) -> Result<DensityBound> {
    if norms.len() < MIN_DENSITY_SAMPLES {
        return Err(Error::Usage(format!(
            "density_bound needs at least {MIN_DENSITY_SAMPLES} samples, got {}",
            norms.len()
        )));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if norms.min() == norms.max() {
        return Ok(DensityBound {
            value: f64::INFINITY,
            argmax: norms.min(),
            bandwidth,
            unbounded: true,
        });
    }
    if norms.min() < 0.0 {
        return Err(Error::InvalidInput("density_bound expects nonnegative samples".into()));
    }
    let xs = norms.samples();
    let h = bandwidth;
    let step = h / 4.0;
    let steps = (norms.max() / step).ceil() as usize;
    let norm_const = 1.0 / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |u: f64| (-0.5 * u * u).exp();

    let (value, argmax) = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * step;
            let lo = xs.partition_point(|&x| x < t - KERNEL_CUTOFF * h);
            let hi = xs.partition_point(|&x| x <= t + KERNEL_CUTOFF * h);
            let mut acc: f64 = xs[lo..hi].iter().map(|&x| kernel((t - x) / h)).sum();
            let reflect_hi = xs.partition_point(|&x| x <= KERNEL_CUTOFF * h - t);
            acc += xs[..reflect_hi].iter().map(|&x| kernel((t + x) / h)).sum::<f64>();
            (acc * norm_const, t)
        })
        .reduce(|| (f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok(DensityBound {
        value,
        argmax,
        bandwidth,
        unbounded: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec_from_diag(values: &[f64]) -> LimitSpec {
        LimitSpec::from_covariance(LinOp::diag(values)).unwrap()
    }

    #[test]
    fn limit_covariance_examples() {
        let id = CoeffSeq::explicit(3, vec![(0, LinOp::identity(3))]).unwrap();
        let spec = limit_covariance(&id, &LinOp::identity(3)).unwrap();
        assert!(spec.covariance.max_abs_diff(&LinOp::identity(3)) < 1e-15);
        assert!(spec.sqrt_factor.max_abs_diff(&LinOp::identity(3)) < 1e-12);

        let zero = CoeffSeq::explicit(2, vec![(0, LinOp::zeros(2))]).unwrap();
        let spec = limit_covariance(&zero, &LinOp::identity(2)).unwrap();
        assert!(spec.covariance.is_zero());
        assert!(spec.sqrt_factor.is_zero());

        let a = CoeffSeq::explicit(2, vec![(0, LinOp::diag(&[2.0, 0.0]))]).unwrap();
        let spec = limit_covariance(&a, &LinOp::identity(2)).unwrap();
        assert!(spec.covariance.max_abs_diff(&LinOp::diag(&[4.0, 0.0])) < 1e-14);
        assert!(spec.sqrt_factor.max_abs_diff(&LinOp::diag(&[2.0, 0.0])) < 1e-12);
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let c = CoeffSeq::explicit(2, vec![(0, LinOp::identity(2))]).unwrap();
        let bad = LinOp::diag(&[1.0, -0.1]);
        assert!(matches!(limit_covariance(&c, &bad), Err(Error::Model(_))));
    }

    #[test]
    fn sqrt_factor_squares_back() {
        let rows = vec![
            vec![2.0, 0.3, -0.4, 0.0],
            vec![0.3, 1.0, 0.2, 0.1],
            vec![-0.4, 0.2, 0.7, 0.0],
            vec![0.0, 0.1, 0.0, 0.05],
        ];
        let spec = LimitSpec::from_covariance(LinOp::from_rows(&rows).unwrap()).unwrap();
        let sq = spec.sqrt_factor.compose(&spec.sqrt_factor).unwrap();
        let rel = sq.sub(&spec.covariance).unwrap().frobenius_norm() / spec.covariance.frobenius_norm();
        assert!(rel < 1e-9, "{rel}");
        assert_eq!(spec.sqrt_factor, spec.sqrt_factor.adjoint());
    }

    #[test]
    fn zero_covariance_gives_zero_norms() {
        let law = sample_limit_norms(&spec_from_diag(&[0.0, 0.0]), 500, 1).unwrap();
        assert_eq!(law.max(), 0.0);
    }

    #[test]
    fn one_dimensional_half_normal_mean() {
        let law = sample_limit_norms(&spec_from_diag(&[1.0]), 1_000_000, 2).unwrap();
        assert!((law.mean() - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
    }

    #[test]
    fn degenerate_direction_median() {
        // ‖N‖ = 2|g|; the median of |g| is the 0.75 normal quantile 0.67449.
        let law = sample_limit_norms(&spec_from_diag(&[4.0, 0.0]), 200_000, 3).unwrap();
        assert!((law.quantile(0.5) - 2.0 * 0.674_489_75).abs() < 0.02);
    }

    #[test]
    fn empirical_covariance_of_draws_converges() {
        let spec = LimitSpec::from_covariance(
            LinOp::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.5, 2.0, -0.3], vec![0.0, -0.3, 0.4]]).unwrap(),
        )
        .unwrap();
        let m = 100_000;
        let draws = spec.sample_vectors(m, 4);
        let emp = crate::hilbert::covariance_operator(&draws).unwrap();
        let dist = emp.sub(&spec.covariance).unwrap().frobenius_norm();
        assert!(dist <= 5.0 * 3.0 / (m as f64).sqrt(), "{dist}");
    }

    #[test]
    fn scaling_covariance_scales_norms_exactly() {
        let base = LinOp::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.5]]).unwrap();
        let a = sample_limit_norms(&LimitSpec::from_covariance(base.clone()).unwrap(), 2000, 9).unwrap();
        let b = sample_limit_norms(&LimitSpec::from_covariance(base.scale(4.0)).unwrap(), 2000, 9).unwrap();
        assert_eq!(a.scaled(2.0), b);
    }

    #[test]
    fn density_bound_half_normal() {
        let law = sample_limit_norms(&spec_from_diag(&[1.0]), 1_000_000, 5).unwrap();
        let est = density_bound(&law, silverman_bandwidth(&law)).unwrap();
        assert!((est.value - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn density_bound_chi_two() {
        let law = sample_limit_norms(&spec_from_diag(&[1.0, 1.0]), 1_000_000, 6).unwrap();
        let est = density_bound(&law, silverman_bandwidth(&law)).unwrap();
        assert!((est.value - (-0.5f64).exp()).abs() < 0.05, "{est:?}");
        assert!((est.argmax - 1.0).abs() < 0.1);
    }

    #[test]
    fn density_bound_degenerate_and_errors() {
        let law = EmpiricalLaw::new(vec![1.5; 2000]).unwrap();
        let est = density_bound(&law, 0.1).unwrap();
        assert!(est.unbounded && est.value.is_infinite());
        let small = EmpiricalLaw::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(density_bound(&small, 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn density_bound_ignores_sample_order() {
        let law = sample_limit_norms(&spec_from_diag(&[1.0, 0.5]), 5000, 8).unwrap();
        let mut reversed = law.samples().to_vec();
        reversed.reverse();
        let a = density_bound(&law, 0.1).unwrap();
        let b = density_bound(&EmpiricalLaw::new(reversed).unwrap(), 0.1).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a.bandwidth, 0.1);
    }
}
