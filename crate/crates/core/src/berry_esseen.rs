//! Estimating `Δ_n`, evaluating Berry–Esseen right-hand sides, checking the
//! tail and block-norm inequalities behind them, and fitting rates.
//!
//! `Δ_n` is estimated as the two-sample sup-distance between simulated
//! `‖S_n‖/√n` and a large reference sample of `‖N‖`. Every estimate carries a
//! DKW-style noise floor `√(ln(2/δ)/(2m_a)) + √(ln(2/δ)/(2m_b))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::empirical::EmpiricalLaw;
use crate::error::{Error, Result};
use crate::gaussian::{density_bound, limit_covariance, sample_limit_norms, silverman_bandwidth, DensityBound, LimitSpec};
use crate::hilbert::norm;
use crate::innovations::{
    fit_moment_envelope, luxemburg_norm, lr_norm, InnovationKind, InnovationModel, MomentEnvelope, NormSource,
    YoungFunction, DEFAULT_LUXEMBURG_TOL,
};
use crate::linproc::{CoeffSeq, PathSampler};
use crate::rng::CounterRng;

pub const DEFAULT_CONFIDENCE: f64 = 0.01;

/// Two-sample noise floor at confidence `1 - delta`.
pub fn mc_error(m_a: usize, m_b: usize, delta: f64) -> f64 {
    let l = (2.0 / delta).ln();
    (l / (2.0 * m_a as f64)).sqrt() + (l / (2.0 * m_b as f64)).sqrt()
}

/// `sup_t |F_a(t) - F_b(t)|`, exact over the merged jump points.
pub fn delta_hat(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    let (xa, xb) = (a.samples(), b.samples());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let t = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= t {
            i += 1;
        }
        while j < xb.len() && xb[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

const INVERSE_MAX_ITER: usize = 200;

/// `h(t) = t ψ(t)`.
fn h(psi: YoungFunction, t: f64) -> f64 {
    t * psi.eval(t)
}

/// `h^{-1}(y)` by bracketed bisection; `h` is continuous and strictly increasing.
fn h_inverse(psi: YoungFunction, y: f64) -> f64 {
    let (mut lo, mut hi) = (1e-12, 1.0);
    while h(psi, hi) < y {
        lo = hi;
        hi *= 2.0;
    }
    while h(psi, lo) > y && lo > f64::MIN_POSITIVE {
        hi = lo;
        lo /= 2.0;
    }
    for _ in 0..INVERSE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(psi, mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `φ(x) = x h^{-1}(1/x)` with `h(t) = t ψ(t)`.
pub fn phi(psi: YoungFunction, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("phi needs finite x > 0, got {x}")));
    }
    Ok(x * h_inverse(psi, 1.0 / x))
}

/// `Δ_n(A(ε)) + φ(c(N) ‖Q_n + R_n‖_ψ / √n)`.
pub fn theorem_bound_orlicz(delta_a_eps: f64, c_n: f64, orlicz_remainder: f64, psi: YoungFunction, n: usize) -> Result<f64> {
    if delta_a_eps < 0.0 || c_n < 0.0 || orlicz_remainder < 0.0 {
        return Err(Error::Domain("theorem_bound_orlicz inputs must be nonnegative".into()));
    }
    let arg = c_n * orlicz_remainder / (n as f64).sqrt();
    if arg == 0.0 {
        return Ok(delta_a_eps);
    }
    Ok(delta_a_eps + phi(psi, arg)?)
}

/// `c₁ = √n Δ_n(A(ε)) + 14 c(N) ‖ε₀‖_∞ Σ|j|‖a_j‖` and the bound `c₁/√n`.
pub fn theorem_bound_sup(delta_a_eps: f64, c_n: f64, sup_eps: f64, weighted_sum: f64, n: usize) -> (f64, f64) {
    let root = (n as f64).sqrt();
    let c1 = delta_a_eps * root + 14.0 * c_n * sup_eps * weighted_sum;
    (c1, c1 / root)
}

/// Which right-hand side of the Berry–Esseen bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// Bounded innovations, constant from `‖ε₀‖_∞`.
    Sup,
    /// Orlicz bound with the given Young function.
    Orlicz { psi: YoungFunction },
}

impl Regime {
    /// Sup for bounded laws, `ψ₁` for exponential tails, `x^r` for Pareto tails.
    pub fn for_model(model: &InnovationModel, r: Option<f64>) -> Result<Self> {
        Ok(match model.kind() {
            InnovationKind::Bounded { .. } | InnovationKind::Constant(_) => Regime::Sup,
            InnovationKind::SubExponential { .. } | InnovationKind::Gaussian { .. } => {
                Regime::Orlicz { psi: YoungFunction::Psi1 }
            }
            InnovationKind::HeavyTail { .. } => {
                let r = r.ok_or_else(|| Error::config("innovations.r", "heavy-tail innovations need a moment order r"))?;
                model.require_moment(r)?;
                Regime::Orlicz {
                    psi: YoungFunction::power(r)?,
                }
            }
        })
    }
}

/// Constants entering the bound at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundTerms {
    Sup { sup_eps: f64, weighted_sum: f64 },
    Orlicz { psi: YoungFunction, orlicz_remainder: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub replicates: usize,
    pub reference_size: usize,
    pub confidence: f64,
    pub delta_hat: f64,
    /// Measured `Δ_n(A(ε))`, standing in for `c₂/√n`.
    pub delta_a_eps: f64,
    pub mc_error: f64,
    pub density_bound: f64,
    pub terms: BoundTerms,
    /// `√n` times the theorem bound.
    pub c1: f64,
    pub theorem_bound: f64,
    /// Largest observed `‖Q_n + R_n‖`.
    pub max_remainder: f64,
}

impl BoundReport {
    pub fn above_noise_floor(&self) -> bool {
        self.delta_hat > self.mc_error
    }
}

/// Parameters shared by every horizon of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaOptions {
    pub density_bound: f64,
    pub regime: Regime,
    pub confidence: f64,
}

/// Simulates `m` values of `‖S_n‖/√n` and the baseline `‖A Σε‖/√n` on the
/// same draws, and compares both with the reference law of `‖N‖`.
pub fn measure_delta_n(
    c: &CoeffSeq,
    model: &InnovationModel,
    n: usize,
    m: usize,
    reference: &EmpiricalLaw,
    seed: u64,
    opts: &DeltaOptions,
) -> Result<BoundReport> {
    if n == 0 || m == 0 {
        return Err(Error::Usage("measure_delta_n needs n >= 1 and m >= 1".into()));
    }
    if reference.len() < m {
        return Err(Error::Usage(format!(
            "reference has {} samples, fewer than the {m} replicates",
            reference.len()
        )));
    }
    let sampler = PathSampler::new(c, model)?;
    let paths = sampler.sample_many(n, m, &CounterRng::new(seed));
    let root = (n as f64).sqrt();
    let sums = EmpiricalLaw::new(paths.iter().map(|p| p.sum / root).collect())?;
    let mains = EmpiricalLaw::new(paths.iter().map(|p| p.main / root).collect())?;
    let remainders: Vec<f64> = paths.iter().map(|p| p.remainder).collect();

    let delta = delta_hat(&sums, reference);
    let delta_a_eps = delta_hat(&mains, reference);
    let c_n = opts.density_bound;
    let (terms, c1, theorem_bound) = match opts.regime {
        Regime::Sup => {
            let sup_eps = model
                .sup_norm()
                .ok_or_else(|| Error::Usage("sup regime needs a bounded innovation model".into()))?;
            let weighted_sum = c.weighted_norm_sum(1.0);
            let (c1, bound) = theorem_bound_sup(delta_a_eps, c_n, sup_eps, weighted_sum, n);
            (BoundTerms::Sup { sup_eps, weighted_sum }, c1, bound)
        }
        Regime::Orlicz { psi } => {
            let orlicz_remainder = luxemburg_norm(NormSource::Samples(&remainders), psi, DEFAULT_LUXEMBURG_TOL)?;
            let bound = theorem_bound_orlicz(delta_a_eps, c_n, orlicz_remainder, psi, n)?;
            (BoundTerms::Orlicz { psi, orlicz_remainder }, bound * root, bound)
        }
    };
    Ok(BoundReport {
        n,
        replicates: m,
        reference_size: reference.len(),
        confidence: opts.confidence,
        delta_hat: delta,
        delta_a_eps,
        mc_error: mc_error(m, reference.len(), opts.confidence),
        density_bound: c_n,
        terms,
        c1,
        theorem_bound,
        max_remainder: remainders.iter().copied().fold(0.0, f64::max),
    })
}

/// A reference law, its density bound, and the bound regime, reused across horizons.
#[derive(Debug, Clone)]
pub struct DeltaStudy {
    pub coeffs: CoeffSeq,
    pub model: InnovationModel,
    pub limit: LimitSpec,
    pub reference: EmpiricalLaw,
    pub density: DensityBound,
    pub options: DeltaOptions,
}

impl DeltaStudy {
    /// Builds the limit from the model's analytic covariance and samples the reference.
    pub fn new(
        coeffs: CoeffSeq,
        model: InnovationModel,
        regime: Regime,
        reference_size: usize,
        bandwidth: Option<f64>,
        confidence: f64,
        seed: u64,
    ) -> Result<Self> {
        let limit = limit_covariance(&coeffs, &model.covariance()?)?;
        let reference = sample_limit_norms(&limit, reference_size, CounterRng::new(seed).fork(u64::MAX).key())?;
        let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(&reference));
        let density = if h > 0.0 {
            density_bound(&reference, h)?
        } else {
            DensityBound {
                value: f64::INFINITY,
                argmax: 0.0,
                bandwidth: h,
                unbounded: true,
            }
        };
        Ok(Self {
            coeffs,
            model,
            limit,
            reference,
            density,
            options: DeltaOptions {
                density_bound: density.value,
                regime,
                confidence,
            },
        })
    }

    /// Horizon `n` with replicate streams keyed by `(seed, n)`.
    pub fn measure(&self, n: usize, replicates: usize, seed: u64) -> Result<BoundReport> {
        let key = CounterRng::new(seed).fork(n as u64).key();
        measure_delta_n(&self.coeffs, &self.model, n, replicates, &self.reference, key, &self.options)
    }
}

/// One atom of a finite probability space: `P = probability`, with the norms
/// `‖U‖`, `‖V‖`, `‖U+V‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub probability: f64,
    pub u: f64,
    pub v: f64,
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrucialReport {
    /// `P(‖U+V‖ ≤ t)`.
    pub lhs: f64,
    /// `P(‖U‖ ≤ t+λ) + P(‖V‖ ≥ λ)`.
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Exact enumeration of `P(‖U+V‖ ≤ t) ≤ P(‖U‖ ≤ t+λ) + P(‖V‖ ≥ λ)`.
pub fn crucial_inequality_check(space: &[Atom], t: f64, lambda: f64) -> Result<CrucialReport> {
    if !(t > 0.0 && lambda > 0.0) {
        return Err(Error::Domain(format!("t and lambda must be positive, got {t}, {lambda}")));
    }
    let total: f64 = space.iter().map(|a| a.probability).sum();
    if space.iter().any(|a| !(a.probability >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("probabilities must be nonnegative and sum to 1, got {total}")));
    }
    for (i, a) in space.iter().enumerate() {
        let slack = 1e-12 * (1.0 + a.u + a.v);
        if a.u < 0.0 || a.v < 0.0 || a.sum > a.u + a.v + slack || a.sum < (a.u - a.v).abs() - slack {
            return Err(Error::InvalidInput(format!("atom {i} violates the triangle inequality: {a:?}")));
        }
    }
    let prob = |pred: &dyn Fn(&Atom) -> bool| space.iter().filter(|a| pred(a)).map(|a| a.probability).sum::<f64>();
    let lhs = prob(&|a| a.sum <= t);
    let rhs = prob(&|a| a.u <= t + lambda) + prob(&|a| a.v >= lambda);
    let margin = rhs - lhs;
    Ok(CrucialReport {
        lhs,
        rhs,
        margin,
        pass: margin >= -1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub x: f64,
    /// Frequency of `‖Σ_{k=p}^q ε_k‖ ≥ x`.
    pub empirical: f64,
    /// `exp(-x² / (2ℓB² + 2xL))`.
    pub bound: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBoundReport {
    pub block_len: usize,
    pub replicates: usize,
    pub envelope: MomentEnvelope,
    pub rows: Vec<TailRow>,
    pub pass: bool,
}

/// The exponential tail bound for block sums of length `ℓ = q - p + 1`.
pub fn tail_bound(envelope: MomentEnvelope, block_len: usize, x: f64) -> f64 {
    let denom = 2.0 * block_len as f64 * envelope.b * envelope.b + 2.0 * x * envelope.l;
    if x == 0.0 {
        1.0
    } else {
        (-x * x / denom).exp()
    }
}

/// Norms `‖Σ_{k=1}^{ℓ} ε_k‖` at each requested length, one row per replicate.
fn block_sum_norms(model: &InnovationModel, lengths: &[usize], replicates: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = model.dim();
    let max_len = lengths.iter().copied().max().unwrap_or(0);
    let base = CounterRng::new(seed);
    (0..replicates)
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(eps, acc), r| {
                let rng = base.fork(r as u64);
                acc.iter_mut().for_each(|x| *x = 0.0);
                let mut out = vec![0.0; lengths.len()];
                for k in 1..=max_len {
                    model.draw_into(&rng, k as i64, eps);
                    acc.iter_mut().zip(eps.iter()).for_each(|(a, e)| *a += e);
                    for (slot, &len) in out.iter_mut().zip(lengths) {
                        if len == k {
                            *slot = norm(acc);
                        }
                    }
                }
                out
            },
        )
        .collect()
}

/// Monte Carlo tail frequencies of block sums against [`tail_bound`].
///
/// Each point passes when `empirical ≤ bound + 3 se`, with `se` the binomial
/// standard error at the bound probability.
pub fn tail_bound_check(
    model: &InnovationModel,
    envelope: MomentEnvelope,
    block_len: usize,
    x_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<TailBoundReport> {
    if block_len == 0 || replicates == 0 {
        return Err(Error::Usage("tail_bound_check needs a nonempty block and replicates".into()));
    }
    if x_grid.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("tail grid points must be nonnegative".into()));
    }
    let mut norms: Vec<f64> = block_sum_norms(model, &[block_len], replicates, seed)
        .into_iter()
        .map(|row| row[0])
        .collect();
    norms.sort_unstable_by(f64::total_cmp);
    let m = replicates as f64;
    let rows: Vec<TailRow> = x_grid
        .iter()
        .map(|&x| {
            let empirical = (norms.len() - norms.partition_point(|&v| v < x)) as f64 / m;
            let bound = tail_bound(envelope, block_len, x);
            let p = bound.min(1.0);
            let std_error = (p * (1.0 - p) / m).sqrt();
            TailRow {
                x,
                empirical,
                bound,
                std_error,
                pass: empirical <= bound + 3.0 * std_error,
            }
        })
        .collect();
    Ok(TailBoundReport {
        block_len,
        replicates,
        envelope,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockNorm {
    /// `‖Σε‖_{ψ₁}` against `L + B√ℓ`.
    Psi1,
    /// `‖Σε‖_r` against `2 r ‖ε₀‖_r √ℓ`.
    Lr { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockNormRow {
    pub len: usize,
    pub norm: f64,
    /// The length-dependent factor multiplying `K` in the bound.
    pub reference: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockNormReport {
    pub kind: BlockNorm,
    pub rows: Vec<BlockNormRow>,
    /// Smallest `K` for which every row satisfies `norm ≤ K · reference`.
    pub k_fit: f64,
    /// Log-log slope of `norm` against `ℓ`.
    pub slope: Option<f64>,
    pub slope_ok: bool,
    pub envelope: Option<MomentEnvelope>,
    pub eps_norm: Option<f64>,
}

pub const SQRT_SLOPE_TOL: f64 = 0.1;

/// Empirical Orlicz (or `L^r`) norms of block sums over a grid of lengths,
/// with the fitted universal constant and the square-root scaling.
pub fn block_norm_bounds_check(
    model: &InnovationModel,
    lengths: &[usize],
    kind: BlockNorm,
    replicates: usize,
    seed: u64,
) -> Result<BlockNormReport> {
    if lengths.is_empty() || lengths.contains(&0) || replicates == 0 {
        return Err(Error::Usage("block_norm_bounds_check needs nonempty blocks and replicates".into()));
    }
    if matches!(kind, BlockNorm::Psi1) && matches!(model.kind(), InnovationKind::HeavyTail { .. }) {
        return Err(Error::HeavyTail("the ψ₁ norm of a Pareto-tailed innovation is infinite".into()));
    }
    if let BlockNorm::Lr { r } = kind {
        model.require_moment(r)?;
    }
    let mut grid: Vec<usize> = lengths.to_vec();
    grid.push(1);
    let per_rep = block_sum_norms(model, &grid, replicates, seed);
    let column = |i: usize| per_rep.iter().map(|row| row[i]).collect::<Vec<f64>>();
    let eps_norms = column(grid.len() - 1);

    let norm_of = |samples: &[f64]| match kind {
        BlockNorm::Psi1 => luxemburg_norm(NormSource::Samples(samples), YoungFunction::Psi1, DEFAULT_LUXEMBURG_TOL),
        BlockNorm::Lr { r } => lr_norm(samples, r),
    };
    let (envelope, eps_norm) = match kind {
        BlockNorm::Psi1 => (Some(model.envelope().map_or_else(|| fit_moment_envelope(&eps_norms, 8), Ok)?), None),
        BlockNorm::Lr { r } => (None, Some(lr_norm(&eps_norms, r)?)),
    };
    let mut rows = Vec::with_capacity(lengths.len());
    for (i, &len) in lengths.iter().enumerate() {
        let norm = norm_of(&column(i))?;
        let root = (len as f64).sqrt();
        let reference = match kind {
            BlockNorm::Psi1 => {
                let env = envelope.expect("set for psi1");
                env.l + env.b * root
            }
            BlockNorm::Lr { r } => 2.0 * r * eps_norm.expect("set for Lr") * root,
        };
        let ratio = if norm == 0.0 { 0.0 } else { norm / reference };
        rows.push(BlockNormRow { len, norm, reference, ratio });
    }
    let k_fit = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let fit_rows: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.norm > 0.0)
        .map(|r| ((r.len as f64).ln(), r.norm.ln()))
        .collect();
    let slope = if fit_rows.len() >= 2 && fit_rows.iter().any(|p| p.0 != fit_rows[0].0) {
        Some(ols(&fit_rows).slope)
    } else {
        None
    };
    Ok(BlockNormReport {
        kind,
        slope_ok: slope.is_some_and(|s| (s - 0.5).abs() <= SQRT_SLOPE_TOL),
        rows,
        k_fit,
        slope,
        envelope,
        eps_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

fn ols(points: &[(f64, f64)]) -> LineFit {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if points.len() > 2 {
        let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LineFit { slope, intercept, stderr }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub delta_hat: f64,
    pub mc_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// `log Δ̂ = intercept + slope · log n`.
    pub power: LineFit,
    /// `log Δ̂` regressed on `log(log n / √n)`; slope 1 for a `log n/√n` rate.
    pub log_variant: LineFit,
    pub used: Vec<usize>,
    pub excluded: Vec<usize>,
}

pub const MIN_RATE_POINTS: usize = 4;

/// Log-log least squares over the points strictly above their noise floor.
pub fn rate_fit(points: &[RatePoint]) -> Result<RateFit> {
    let (usable, rest): (Vec<&RatePoint>, Vec<&RatePoint>) =
        points.iter().partition(|p| p.delta_hat > p.mc_error && p.delta_hat > 0.0 && p.n >= 2);
    if usable.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientSignal {
            usable: usable.len(),
            required: MIN_RATE_POINTS,
        });
    }
    let logs: Vec<(f64, f64)> = usable.iter().map(|p| ((p.n as f64).ln(), p.delta_hat.ln())).collect();
    let power = ols(&logs);
    let variant: Vec<(f64, f64)> = usable
        .iter()
        .map(|p| {
            let n = p.n as f64;
            ((n.ln() / n.sqrt()).ln(), p.delta_hat.ln())
        })
        .collect();
    Ok(RateFit {
        power,
        log_variant: ols(&variant),
        used: usable.iter().map(|p| p.n).collect(),
        excluded: rest.iter().map(|p| p.n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{HVector, LinOp};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn law(v: &[f64]) -> EmpiricalLaw {
        EmpiricalLaw::new(v.to_vec()).unwrap()
    }

    /// Brute force over every merged sample point and a point just below it.
    fn delta_brute(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
        let cdf = |l: &EmpiricalLaw, t: f64| l.samples().iter().filter(|&&x| x <= t).count() as f64 / l.len() as f64;
        a.samples()
            .iter()
            .chain(b.samples())
            .flat_map(|&t| [t, t - 1e-9 * (1.0 + t.abs())])
            .map(|t| (cdf(a, t) - cdf(b, t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn delta_hat_examples() {
        assert_eq!(delta_hat(&law(&[1.0, 2.0, 2.0]), &law(&[2.0, 1.0, 2.0])), 0.0);
        assert_eq!(delta_hat(&law(&[1.0, 2.0]), &law(&[3.0, 4.0])), 1.0);
        assert_eq!(delta_hat(&law(&[1.0, 3.0]), &law(&[2.0])), 0.5);
        assert_eq!(delta_brute(&law(&[1.0, 3.0]), &law(&[2.0])), 0.5);
    }

    #[test]
    fn phi_examples() {
        assert_relative_eq!(phi(YoungFunction::Power(3.0), 16.0).unwrap(), 8.0, max_relative = 1e-12);
        assert_relative_eq!(phi(YoungFunction::Power(1.0), 4.0).unwrap(), 2.0, max_relative = 1e-12);
        // Independent bisection on t(e^t - 1) = 1.
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid * (mid.exp() - 1.0) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let got = phi(YoungFunction::Psi1, 1.0).unwrap();
        assert_relative_eq!(got, lo, max_relative = 1e-12);
        assert!((got - 0.8064).abs() < 1e-4);
        assert!(matches!(phi(YoungFunction::Psi1, 0.0), Err(Error::Domain(_))));
        assert!(phi(YoungFunction::Psi1, -1.0).is_err());
    }

    #[test]
    fn phi_monotone_on_log_grid() {
        for psi in [YoungFunction::Psi1, YoungFunction::Power(1.0), YoungFunction::Power(3.0), YoungFunction::Power(5.0)] {
            let vals: Vec<f64> = (0..=100)
                .map(|i| 10f64.powf(-8.0 + 10.0 * i as f64 / 100.0))
                .map(|x| phi(psi, x).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "{psi:?}");
        }
    }

    #[test]
    fn theorem_bound_orlicz_examples() {
        assert_eq!(theorem_bound_orlicz(0.03, 0.5, 0.0, YoungFunction::Psi1, 64).unwrap(), 0.03);
        // c(N)‖Q+R‖/√n = 2·32/4 = 16, φ = 8.
        assert_relative_eq!(
            theorem_bound_orlicz(0.01, 2.0, 32.0, YoungFunction::Power(3.0), 16).unwrap(),
            8.01,
            max_relative = 1e-12
        );
        let psi1 = theorem_bound_orlicz(0.02, 1.0, 3.0, YoungFunction::Psi1, 9).unwrap();
        assert_relative_eq!(psi1, 0.02 + phi(YoungFunction::Psi1, 1.0).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn theorem_bound_sup_assembly() {
        let (c1, bound) = theorem_bound_sup(0.05, 0.2, 1.0, 4.0, 16);
        assert_relative_eq!(c1, 0.05 * 4.0 + 14.0 * 0.2 * 4.0);
        assert_relative_eq!(bound, c1 / 4.0);
    }

    #[test]
    fn crucial_inequality_examples() {
        let single = [Atom { probability: 1.0, u: 1.0, v: 0.0, sum: 1.0 }];
        let rep = crucial_inequality_check(&single, 1.0, 0.5).unwrap();
        assert_eq!((rep.lhs, rep.rhs), (1.0, 1.0));
        assert!(rep.pass);

        let two = [
            Atom { probability: 0.5, u: 2.0, v: 0.0, sum: 2.0 },
            Atom { probability: 0.5, u: 0.0, v: 2.0, sum: 2.0 },
        ];
        let rep = crucial_inequality_check(&two, 1.0, 1.0).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.rhs >= 0.5 && rep.pass);
    }

    #[test]
    fn crucial_inequality_rejects_invalid_atoms() {
        let bad = [Atom { probability: 1.0, u: 1.0, v: 1.0, sum: 3.0 }];
        assert!(matches!(crucial_inequality_check(&bad, 1.0, 1.0), Err(Error::InvalidInput(_))));
        let short = [Atom { probability: 0.4, u: 1.0, v: 0.0, sum: 1.0 }];
        assert!(crucial_inequality_check(&short, 1.0, 1.0).is_err());
        assert!(crucial_inequality_check(&bad, 0.0, 1.0).is_err());
    }

    #[test]
    fn tail_bound_at_zero_is_one() {
        let model = InnovationModel::bounded(2, 1.0).unwrap();
        let env = MomentEnvelope { b: 1.0, l: 1.0 };
        let rep = tail_bound_check(&model, env, 4, &[0.0], 1000, 1).unwrap();
        assert_eq!(rep.rows[0].bound, 1.0);
        assert_eq!(rep.rows[0].empirical, 1.0);
        assert!(rep.pass);
    }

    #[test]
    fn tail_bound_bounded_block() {
        // Rademacher signs (d = 1), block 16: ‖S‖ ≤ 16 always.
        let model = InnovationModel::bounded(1, 1.0).unwrap();
        let env = fit_moment_envelope(&[1.0; 4], 8).unwrap();
        let grid = [2.0, 4.0, 8.0, 16.5, 32.0];
        let rep = tail_bound_check(&model, env, 16, &grid, 100_000, 2).unwrap();
        assert!(rep.pass, "{rep:?}");
        for row in rep.rows.iter().filter(|r| r.x > 16.0) {
            assert_eq!(row.empirical, 0.0);
            assert!(row.bound > 0.0);
        }
    }

    #[test]
    fn block_norm_zero_innovations() {
        let model = InnovationModel::bounded(3, 0.0).unwrap();
        let rep = block_norm_bounds_check(&model, &[1, 4, 16], BlockNorm::Lr { r: 3.0 }, 100, 1).unwrap();
        assert_eq!(rep.k_fit, 0.0);
        assert!(rep.rows.iter().all(|r| r.norm == 0.0));
        let rep = block_norm_bounds_check(&model, &[1, 4], BlockNorm::Psi1, 100, 1).unwrap();
        assert_eq!(rep.k_fit, 0.0);
    }

    #[test]
    fn block_norm_length_one_satisfied_by_fitted_k() {
        let model = InnovationModel::sub_exponential(2, 1.0).unwrap();
        let rep = block_norm_bounds_check(&model, &[1, 8, 64], BlockNorm::Psi1, 20_000, 3).unwrap();
        let env = rep.envelope.unwrap();
        assert!(rep.rows[0].norm <= rep.k_fit * (env.l + env.b) * (1.0 + 1e-12));
        assert!(rep.rows.iter().all(|r| r.norm <= rep.k_fit * r.reference * (1.0 + 1e-12)));
        let heavy = InnovationModel::heavy_tail(2, 5.0, 1.0).unwrap();
        assert!(matches!(block_norm_bounds_check(&heavy, &[1, 4], BlockNorm::Psi1, 10, 1), Err(Error::HeavyTail(_))));
    }

    #[test]
    fn rate_fit_exact_power_law() {
        let pts: Vec<RatePoint> = [16usize, 64, 256, 1024]
            .iter()
            .map(|&n| RatePoint { n, delta_hat: (n as f64).powf(-0.5), mc_error: 0.0 })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.power.slope + 0.5).abs() < 1e-12);
        assert!(fit.power.stderr < 1e-12);
    }

    #[test]
    fn rate_fit_log_variant() {
        let pts: Vec<RatePoint> = [16usize, 64, 256, 1024, 4096]
            .iter()
            .map(|&n| {
                let x = n as f64;
                RatePoint { n, delta_hat: x.ln() / x.sqrt(), mc_error: 0.0 }
            })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.log_variant.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_noisy_synthetic() {
        let noise = [0.08, -0.1, 0.03, 0.1, -0.06, -0.02, 0.09, -0.09];
        let pts: Vec<RatePoint> = noise
            .iter()
            .enumerate()
            .map(|(i, eta)| {
                let n = 16usize << i;
                RatePoint { n, delta_hat: (n as f64).powf(-0.5) * (1.0 + eta), mc_error: 0.0 }
            })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.power.slope + 0.5).abs() <= 0.1, "{fit:?}");
    }

    #[test]
    fn rate_fit_excludes_noise_floor() {
        let pts: Vec<RatePoint> = (0..6)
            .map(|i| RatePoint { n: 16 << i, delta_hat: 0.01, mc_error: if i < 3 { 0.001 } else { 0.02 } })
            .collect();
        assert_eq!(
            rate_fit(&pts).unwrap_err(),
            Error::InsufficientSignal { usable: 3, required: 4 }
        );
    }

    #[test]
    fn measure_delta_exact_gaussian_law() {
        let c = CoeffSeq::explicit(1, vec![(0, LinOp::identity(1))]).unwrap();
        let model = InnovationModel::gaussian(1, 1.0).unwrap();
        let study = DeltaStudy::new(c, model, Regime::Sup, 200_000, None, DEFAULT_CONFIDENCE, 1);
        // Gaussian innovations have no sup norm.
        assert!(study.unwrap().measure(8, 1000, 2).is_err());

        let c = CoeffSeq::explicit(1, vec![(0, LinOp::identity(1))]).unwrap();
        let model = InnovationModel::gaussian(1, 1.0).unwrap();
        let regime = Regime::for_model(&model, None).unwrap();
        let study = DeltaStudy::new(c, model, regime, 200_000, None, DEFAULT_CONFIDENCE, 1).unwrap();
        let rep = study.measure(8, 20_000, 2).unwrap();
        assert!(rep.delta_hat <= 2.0 * rep.mc_error, "{rep:?}");
        assert_eq!(rep.delta_hat, rep.delta_a_eps);
        assert_eq!(rep.max_remainder, 0.0);
    }

    #[test]
    fn measure_delta_zero_coefficients() {
        let c = CoeffSeq::explicit(2, vec![(0, LinOp::zeros(2))]).unwrap();
        let model = InnovationModel::bounded(2, 1.0).unwrap();
        let reference = EmpiricalLaw::new((1..=2000).map(|i| i as f64 / 1000.0).collect()).unwrap();
        let opts = DeltaOptions { density_bound: 1.0, regime: Regime::Sup, confidence: 0.01 };
        let rep = measure_delta_n(&c, &model, 4, 500, &reference, 3, &opts).unwrap();
        let zeros = EmpiricalLaw::new(vec![0.0; 500]).unwrap();
        assert_eq!(rep.delta_hat, delta_brute(&zeros, &reference));
        assert_eq!(rep.delta_hat, 1.0);
    }

    #[test]
    fn measure_delta_rejects_small_reference() {
        let c = CoeffSeq::explicit(1, vec![(0, LinOp::identity(1))]).unwrap();
        let model = InnovationModel::bounded(1, 1.0).unwrap();
        let reference = EmpiricalLaw::new(vec![1.0; 10]).unwrap();
        let opts = DeltaOptions { density_bound: 1.0, regime: Regime::Sup, confidence: 0.01 };
        assert!(matches!(measure_delta_n(&c, &model, 4, 100, &reference, 3, &opts), Err(Error::Usage(_))));
    }

    #[test]
    fn regime_selection() {
        assert_eq!(Regime::for_model(&InnovationModel::bounded(2, 1.0).unwrap(), None).unwrap(), Regime::Sup);
        let heavy = InnovationModel::heavy_tail(2, 5.0, 1.0).unwrap();
        assert!(Regime::for_model(&heavy, None).is_err());
        assert!(Regime::for_model(&heavy, Some(5.0)).is_err());
        assert_eq!(
            Regime::for_model(&heavy, Some(3.0)).unwrap(),
            Regime::Orlicz { psi: YoungFunction::Power(3.0) }
        );
        let c = InnovationModel::constant(HVector::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(Regime::for_model(&c, None).unwrap(), Regime::Sup);
    }

    fn law_strategy() -> impl Strategy<Value = EmpiricalLaw> {
        prop::collection::vec((0u8..20).prop_map(|k| k as f64 * 0.5), 1..30)
            .prop_map(|v| EmpiricalLaw::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn delta_hat_is_a_metric((a, b, c) in (law_strategy(), law_strategy(), law_strategy())) {
            let ab = delta_hat(&a, &b);
            prop_assert_eq!(ab, delta_hat(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - delta_brute(&a, &b)).abs() < 1e-12);
            prop_assert!(delta_hat(&a, &c) <= ab + delta_hat(&b, &c) + 1e-12);
            prop_assert_eq!(delta_hat(&a, &a), 0.0);
        }

        #[test]
        fn crucial_inequality_random_spaces(
            atoms in prop::collection::vec((0.01..1.0f64, prop::collection::vec(-3.0..3.0f64, 3), prop::collection::vec(-1.0..1.0f64, 3)), 1..20),
            t in 0.01..5.0f64,
            lambda in 0.01..3.0f64,
        ) {
            let total: f64 = atoms.iter().map(|a| a.0).sum();
            let space: Vec<Atom> = atoms.iter().map(|(p, u, v)| {
                let s: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
                Atom { probability: p / total, u: norm(u), v: norm(v), sum: norm(&s) }
            }).collect();
            let rep = crucial_inequality_check(&space, t, lambda).unwrap();
            prop_assert!(rep.margin >= -1e-12);
        }
    }
}
