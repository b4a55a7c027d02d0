//! Linear processes `X_k = Σ_j a_j(ε_{k-j})` with finitely supported
//! operator coefficients, and the exact decomposition of their partial sums
//!
//! ```text
//! Σ_{k=1}^n X_k = A(Σ_{k=1}^n ε_k) + Q_n + R_n,    A = Σ_j a_j.
//! ```
//!
//! Every term is computed from one shared realization of `ε_j` on the index
//! window `[1-J-n, n+J]`, so the identities hold to rounding error.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{norm, HVector, LinOp};
use crate::innovations::{InnovationKind, InnovationModel};
use crate::rng::CounterRng;

/// Operator coefficients `a_j`, zero outside `[-J, J]`.
#[derive(Debug, Clone)]
pub struct CoeffSeq {
    dim: usize,
    support: usize,
    ops: Vec<LinOp>,
    total: LinOp,
    zero: LinOp,
}

impl CoeffSeq {
    /// Coefficients from `(j, a_j)` pairs; the support radius is the largest `|j|`.
    pub fn explicit(dim: usize, terms: Vec<(i64, LinOp)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        let support = terms.iter().map(|(j, _)| j.unsigned_abs() as usize).max().unwrap_or(0);
        let mut ops: Vec<Option<LinOp>> = vec![None; 2 * support + 1];
        for (idx, (j, op)) in terms.into_iter().enumerate() {
            if op.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: op.dim(),
                });
            }
            let slot = &mut ops[(j + support as i64) as usize];
            if slot.is_some() {
                return Err(Error::config(
                    format!("coefficients.terms[{idx}].j"),
                    format!("duplicate coefficient index {j}"),
                ));
            }
            *slot = Some(op);
        }
        let ops = ops.into_iter().map(|o| o.unwrap_or_else(|| LinOp::zeros(dim))).collect();
        Ok(Self::from_ops(dim, support, ops))
    }

    /// `a_j = ρ^{|j|} P` for `|j| ≤ J`.
    pub fn geometric(rho: f64, base: &LinOp, support: usize) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::config("coefficients.rho", format!("must lie in (0, 1), got {rho}")));
        }
        let ops = (-(support as i64)..=support as i64)
            .map(|j| base.scale(rho.powi(j.unsigned_abs() as i32)))
            .collect();
        Ok(Self::from_ops(base.dim(), support, ops))
    }

    fn from_ops(dim: usize, support: usize, ops: Vec<LinOp>) -> Self {
        let mut sum = vec![0.0; dim * dim];
        for op in &ops {
            for (s, e) in sum.iter_mut().zip(op.entries()) {
                *s += e;
            }
        }
        Self {
            dim,
            support,
            ops,
            total: LinOp::from_entries(dim, sum),
            zero: LinOp::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support radius `J`.
    pub fn support(&self) -> usize {
        self.support
    }

    /// `a_j`, the zero operator outside the support.
    pub fn coeff(&self, j: i64) -> &LinOp {
        if j.unsigned_abs() as usize > self.support {
            &self.zero
        } else {
            &self.ops[(j + self.support as i64) as usize]
        }
    }

    /// Stored `(j, a_j)` pairs in increasing `j`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &LinOp)> {
        let j0 = -(self.support as i64);
        self.ops.iter().enumerate().map(move |(i, op)| (j0 + i as i64, op))
    }

    /// `A = Σ_j a_j`.
    pub fn total(&self) -> &LinOp {
        &self.total
    }

    /// `Σ_j |j|^τ ‖a_j‖`, with `0⁰ = 1`.
    pub fn weighted_norm_sum(&self, tau: f64) -> f64 {
        self.iter()
            .map(|(j, op)| (j.unsigned_abs() as f64).powf(tau) * op.op_norm())
            .sum()
    }
}

/// `b_i = a_i` for `i ≠ 0` and `b_0 = a_0 - A`.
pub fn b_coeff(c: &CoeffSeq, i: i64) -> LinOp {
    if i == 0 {
        c.coeff(0).sub(c.total()).expect("same dimension")
    } else {
        c.coeff(i).clone()
    }
}

/// `c_{j,n} = Σ_{i=1}^n b_{i-j}`; only `i` with `|i - j| ≤ J` contribute.
pub fn c_coeff(c: &CoeffSeq, j: i64, n: usize) -> LinOp {
    assert!(n >= 1, "c_coeff needs n >= 1");
    let d = c.dim;
    let mut acc = vec![0.0; d * d];
    let lo = 1.max(j - c.support as i64);
    let hi = (n as i64).min(j + c.support as i64);
    for i in lo..=hi {
        let b = b_coeff(c, i - j);
        for (s, e) in acc.iter_mut().zip(b.entries()) {
            *s += e;
        }
    }
    LinOp::from_entries(d, acc)
}

/// One realization of `ε_j` on a contiguous index window.
#[derive(Debug, Clone)]
pub struct Realization {
    start: i64,
    dim: usize,
    draws: Vec<f64>,
}

impl Realization {
    pub fn draw(model: &InnovationModel, range: std::ops::RangeInclusive<i64>, seed: u64) -> Self {
        let rng = CounterRng::new(seed);
        Self::draw_with(model, range, &rng)
    }

    pub fn draw_with(model: &InnovationModel, range: std::ops::RangeInclusive<i64>, rng: &CounterRng) -> Self {
        let (start, end) = (*range.start(), *range.end());
        let dim = model.dim();
        let len = (end - start + 1).max(0) as usize;
        let mut draws = vec![0.0; len * dim];
        for (t, chunk) in draws.chunks_exact_mut(dim).enumerate() {
            model.draw_into(rng, start + t as i64, chunk);
        }
        Self { start, dim, draws }
    }

    /// The window `[1-J-n, n+J]` needed by every term of the decomposition.
    pub fn window(support: usize, n: usize) -> std::ops::RangeInclusive<i64> {
        let (j, n) = (support as i64, n as i64);
        (1 - j - n)..=(n + j)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> std::ops::RangeInclusive<i64> {
        self.start..=(self.start + (self.draws.len() / self.dim) as i64 - 1)
    }

    /// `ε_j`. Panics outside the window: a term that reaches outside must have
    /// a zero coefficient and should never be evaluated.
    pub fn eps(&self, j: i64) -> &[f64] {
        let t = j - self.start;
        assert!(
            t >= 0 && ((t as usize) + 1) * self.dim <= self.draws.len(),
            "index {j} outside realization window {:?}",
            self.range()
        );
        let t = t as usize;
        &self.draws[t * self.dim..(t + 1) * self.dim]
    }

    /// `Σ_{k=lo}^{hi} ε_k`, zero when `lo > hi`.
    pub fn block_sum(&self, lo: i64, hi: i64) -> Vec<f64> {
        let mut acc = Compensated::new(self.dim);
        for k in lo..=hi {
            acc.add(self.eps(k));
        }
        acc.value()
    }
}

/// Neumaier-compensated vector accumulator.
#[derive(Debug, Clone)]
struct Compensated {
    sum: Vec<f64>,
    comp: Vec<f64>,
    scratch: Vec<f64>,
}

impl Compensated {
    fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
            scratch: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(x) {
            let t = *s + v;
            if s.abs() >= v.abs() {
                *c += (*s - t) + v;
            } else {
                *c += (v - t) + *s;
            }
            *s = t;
        }
    }

    fn add_apply(&mut self, op: &LinOp, v: &[f64]) {
        if op.is_zero() {
            return;
        }
        let mut tmp = std::mem::take(&mut self.scratch);
        op.apply_into(v, &mut tmp);
        self.add(&tmp);
        self.scratch = tmp;
    }

    fn sub_apply(&mut self, op: &LinOp, v: &[f64]) {
        if op.is_zero() {
            return;
        }
        let mut tmp = std::mem::take(&mut self.scratch);
        op.apply_into(v, &mut tmp);
        tmp.iter_mut().for_each(|x| *x = -*x);
        self.add(&tmp);
        self.scratch = tmp;
    }

    fn value(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }

    fn into_vector(self) -> HVector {
        HVector::new(self.value()).expect("dim >= 1")
    }
}

/// All terms of the partial-sum decomposition for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SnDecomposition {
    pub n: usize,
    /// `S_n = Σ_{k=1}^n X_k`, summed directly from the process definition.
    pub s_n: HVector,
    /// `A(Σ_{k=1}^n ε_k)`.
    pub main: HVector,
    pub q_n: HVector,
    pub r_n: HVector,
    pub r_prime: HVector,
    pub r_second: HVector,
}

impl SnDecomposition {
    /// `‖S_n - A(Σε) - Q_n - R_n‖`.
    pub fn lemma_residual(&self) -> f64 {
        let rhs = &(&self.main + &self.q_n) + &self.r_n;
        (&self.s_n - &rhs).norm()
    }

    /// `‖R_n - R'_n - R''_n‖`.
    pub fn r_split_residual(&self) -> f64 {
        (&self.r_n - &(&self.r_prime + &self.r_second)).norm()
    }

    /// `U = A(Σε)/√n`.
    pub fn u(&self) -> HVector {
        self.main.scale(1.0 / (self.n as f64).sqrt())
    }

    /// `V = (Q_n + R_n)/√n`.
    pub fn v(&self) -> HVector {
        (&self.q_n + &self.r_n).scale(1.0 / (self.n as f64).sqrt())
    }
}

/// Draws the shared realization and computes every decomposition term.
pub fn partial_sum(c: &CoeffSeq, model: &InnovationModel, n: usize, seed: u64) -> Result<SnDecomposition> {
    check_compatible(c, model, n)?;
    let real = Realization::draw(model, Realization::window(c.support(), n), seed);
    decompose(c, &real, n)
}

fn check_compatible(c: &CoeffSeq, model: &InnovationModel, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Usage("horizon n must be at least 1".into()));
    }
    if c.dim() != model.dim() {
        return Err(Error::Dimension {
            expected: c.dim(),
            found: model.dim(),
        });
    }
    Ok(())
}

/// Decomposition terms for an existing realization covering `[1-J-n, n+J]`.
pub fn decompose(c: &CoeffSeq, real: &Realization, n: usize) -> Result<SnDecomposition> {
    if n == 0 {
        return Err(Error::Usage("horizon n must be at least 1".into()));
    }
    let window = Realization::window(c.support(), n);
    if !(real.range().start() <= window.start() && window.end() <= real.range().end()) {
        return Err(Error::Usage(format!(
            "realization {:?} does not cover the window {window:?}",
            real.range()
        )));
    }
    let d = c.dim();
    let (ni, ji) = (n as i64, c.support() as i64);

    // S_n directly: Σ_{k=1}^n Σ_{|j|≤J} a_j(ε_{k-j}).
    let mut s_n = Compensated::new(d);
    for k in 1..=ni {
        for (j, a) in c.iter() {
            s_n.add_apply(a, real.eps(k - j));
        }
    }

    let eps_sum = real.block_sum(1, ni);
    let mut main = Compensated::new(d);
    main.add_apply(c.total(), &eps_sum);

    // Q_n = Σ_{k=1}^n Σ_{|j|>n} a_{k-j}(ε_j); only |k-j| ≤ J contributes.
    let mut q_n = Compensated::new(d);
    for k in 1..=ni {
        for j in (k - ji)..=(k + ji) {
            if j.abs() > ni {
                q_n.add_apply(c.coeff(k - j), real.eps(j));
            }
        }
    }

    // R_n = Σ_{|j|≤n} c_{j,n}(ε_j).
    let mut r_n = Compensated::new(d);
    for j in -ni..=ni {
        if j > ni + ji || j < 1 - ji {
            continue; // c_{j,n} vanishes: no i ∈ [1, n] within J of j
        }
        r_n.add_apply(&c_coeff(c, j, n), real.eps(j));
    }

    let (r_prime, r_second) = r_blocks(c, real, n);

    Ok(SnDecomposition {
        n,
        s_n: s_n.into_vector(),
        main: main.into_vector(),
        q_n: q_n.into_vector(),
        r_n: r_n.into_vector(),
        r_prime,
        r_second,
    })
}

/// `R'_n` and `R''_n` as block sums over the coefficients.
///
/// ```text
/// R'_n  = -Σ_{j=-n}^{-1} a_j(Σ_{k=1}^{-j} ε_k) - Σ_{j<-n} a_j(Σ_{k=1}^{n} ε_k)
///         -Σ_{j=1}^{n}  a_j(Σ_{k=n-j+1}^{n} ε_k) - Σ_{j>n}  a_j(Σ_{k=1}^{n} ε_k)
/// R''_n =  Σ_{j=1}^{n}  a_j(Σ_{k=1-j}^{0} ε_k) + Σ_{j=n+1}^{2n} a_j(Σ_{k=-n}^{n-j} ε_k)
/// ```
///
/// For `j > n` the third block of `R'_n` is sometimes written with the sum
/// `Σ_{k=n-j+1}^{n}`; that form overshoots by [`r_prime_long_lag_excess`] and
/// agrees with the above only when `a_j = 0` for all `j > n`.
fn r_blocks(c: &CoeffSeq, real: &Realization, n: usize) -> (HVector, HVector) {
    let d = c.dim();
    let ni = n as i64;
    let eps_sum = real.block_sum(1, ni);
    let mut r1 = Compensated::new(d);
    let mut r2 = Compensated::new(d);
    for (j, a) in c.iter() {
        if j == 0 || a.is_zero() {
            continue;
        }
        if j < 0 {
            if j >= -ni {
                r1.sub_apply(a, &real.block_sum(1, -j));
            } else {
                r1.sub_apply(a, &eps_sum);
            }
        } else if j <= ni {
            r1.sub_apply(a, &real.block_sum(ni - j + 1, ni));
            r2.add_apply(a, &real.block_sum(1 - j, 0));
        } else {
            r1.sub_apply(a, &eps_sum);
            if j <= 2 * ni {
                r2.add_apply(a, &real.block_sum(-ni, ni - j));
            }
        }
    }
    (r1.into_vector(), r2.into_vector())
}

/// `Σ_{j>n} a_j(Σ_{k=n-j+1}^{0} ε_k)`: the amount by which writing the
/// long-lag block of `R'_n` as `Σ_{j>0} a_j(Σ_{k=n-j+1}^{n} ε_k)` overshoots.
/// Zero whenever the support radius is at most `n`.
pub fn r_prime_long_lag_excess(c: &CoeffSeq, real: &Realization, n: usize) -> HVector {
    let ni = n as i64;
    let mut acc = Compensated::new(c.dim());
    for (j, a) in c.iter().filter(|&(j, _)| j > ni) {
        acc.add_apply(a, &real.block_sum(ni - j + 1, 0));
    }
    acc.into_vector()
}

/// `Q_n` from its two block sums:
///
/// ```text
/// Q_n = Σ_{j≥n+2} a_j(Σ_{k=1-j}^{min(n-j, -n-1)} ε_k) + Σ_{j<0} a_j(Σ_{k=max(n+1, 1-j)}^{n-j} ε_k).
/// ```
///
/// The clipped limits only matter for `j > 2n + 1` or `j < -n`; dropping them
/// overshoots by [`qn_long_lag_excess`].
pub fn qn_via_blocks(c: &CoeffSeq, real: &Realization, n: usize) -> HVector {
    let ni = n as i64;
    let mut acc = Compensated::new(c.dim());
    for (j, a) in c.iter() {
        if j >= ni + 2 {
            acc.add_apply(a, &real.block_sum(1 - j, (ni - j).min(-ni - 1)));
        } else if j < 0 {
            acc.add_apply(a, &real.block_sum((ni + 1).max(1 - j), ni - j));
        }
    }
    acc.into_vector()
}

/// `Σ_{j>2n+1} a_j(Σ_{k=n-j+1}^{-n-1} ε_k) + Σ_{j<-n} a_j(Σ_{k=n+1}^{-j} ε_k)`:
/// the overshoot of the unclipped block form of `Q_n`. Zero whenever the
/// support radius is at most `n`.
pub fn qn_long_lag_excess(c: &CoeffSeq, real: &Realization, n: usize) -> HVector {
    let ni = n as i64;
    let mut acc = Compensated::new(c.dim());
    for (j, a) in c.iter() {
        if j > 2 * ni + 1 {
            acc.add_apply(a, &real.block_sum(ni - j + 1, -ni - 1));
        } else if j < -ni {
            acc.add_apply(a, &real.block_sum(ni + 1, -j));
        }
    }
    acc.into_vector()
}

/// Norms of one simulated partial sum, unnormalised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNorms {
    /// `‖S_n‖`.
    pub sum: f64,
    /// `‖A(Σ_{k=1}^n ε_k)‖`.
    pub main: f64,
    /// `‖Q_n + R_n‖ = ‖S_n - A(Σε)‖`.
    pub remainder: f64,
}

/// Fast Monte Carlo path for `S_n` via prefix sums of the innovations.
///
/// `S_n = Σ_j a_j(W_j)` with `W_j = Σ_{k=1}^n ε_{k-j}`, so one pass over the
/// `n + 2J` draws and `2J + 1` operator applications suffice.
#[derive(Debug, Clone)]
pub struct PathSampler<'a> {
    coeffs: &'a CoeffSeq,
    model: &'a InnovationModel,
    nonzero: Vec<(i64, &'a LinOp)>,
}

/// Reusable buffers for [`PathSampler`].
#[derive(Debug, Default)]
pub struct PathScratch {
    prefix: Vec<f64>,
    eps: Vec<f64>,
    window: Vec<f64>,
    s: Vec<f64>,
    main: Vec<f64>,
}

impl<'a> PathSampler<'a> {
    pub fn new(coeffs: &'a CoeffSeq, model: &'a InnovationModel) -> Result<Self> {
        check_compatible(coeffs, model, 1)?;
        let nonzero = coeffs.iter().filter(|(_, a)| !a.is_zero()).collect();
        Ok(Self {
            coeffs,
            model,
            nonzero,
        })
    }

    /// Draws `ε_k` on `[1-J, n+J]` from `rng` and returns the norms.
    pub fn sample(&self, n: usize, rng: &CounterRng, scratch: &mut PathScratch) -> PathNorms {
        let d = self.coeffs.dim();
        let ji = self.coeffs.support() as i64;
        let ni = n as i64;
        let len = (n + 2 * self.coeffs.support()) + 1;
        scratch.prefix.clear();
        scratch.prefix.resize(len * d, 0.0);
        scratch.eps.resize(d, 0.0);
        scratch.window.resize(d, 0.0);
        scratch.s.clear();
        scratch.s.resize(d, 0.0);
        scratch.main.resize(d, 0.0);

        // prefix[t] = Σ of the first t draws, starting at index 1-J.
        for t in 0..len - 1 {
            self.model.draw_into(rng, 1 - ji + t as i64, &mut scratch.eps);
            let (head, tail) = scratch.prefix.split_at_mut((t + 1) * d);
            let prev = &head[t * d..];
            for ((out, p), e) in tail[..d].iter_mut().zip(prev).zip(&scratch.eps) {
                *out = p + e;
            }
        }

        // W_j = prefix[n - j + J] - prefix[J - j].
        for &(j, a) in &self.nonzero {
            let hi = ((ni - j + ji) as usize) * d;
            let lo = ((ji - j) as usize) * d;
            for i in 0..d {
                scratch.window[i] = scratch.prefix[hi + i] - scratch.prefix[lo + i];
            }
            a.apply_add(&scratch.window, &mut scratch.s);
        }
        let hi = ((ni + ji) as usize) * d;
        let lo = (ji as usize) * d;
        for i in 0..d {
            scratch.window[i] = scratch.prefix[hi + i] - scratch.prefix[lo + i];
        }
        self.coeffs.total().apply_into(&scratch.window, &mut scratch.main);

        let remainder = scratch
            .s
            .iter()
            .zip(&scratch.main)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        PathNorms {
            sum: norm(&scratch.s),
            main: norm(&scratch.main),
            remainder,
        }
    }

    /// `replicates` independent paths, replicate `r` keyed by `rng.fork(r)`.
    /// The output order is the replicate order for any thread count.
    pub fn sample_many(&self, n: usize, replicates: usize, rng: &CounterRng) -> Vec<PathNorms> {
        (0..replicates)
            .into_par_iter()
            .map_init(PathScratch::default, |scratch, r| self.sample(n, &rng.fork(r as u64), scratch))
            .collect()
    }
}

/// Outcome of the sup-norm check `‖Q_n + R_n‖ ≤ 7 ‖ε₀‖_∞ Σ|j| ‖a_j‖`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SupBoundReport {
    pub n: usize,
    pub replicates: usize,
    pub max_observed: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn sup_norm_bound_check(
    c: &CoeffSeq,
    model: &InnovationModel,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<SupBoundReport> {
    let radius = match model.kind() {
        InnovationKind::Bounded { radius } => *radius,
        other => {
            return Err(Error::Usage(format!(
                "sup-norm bound needs a bounded innovation model, got {other:?}"
            )))
        }
    };
    check_compatible(c, model, n)?;
    let bound = 7.0 * radius * c.weighted_norm_sum(1.0);
    let sampler = PathSampler::new(c, model)?;
    let max_observed = sampler
        .sample_many(n, replicates, &CounterRng::new(seed))
        .iter()
        .map(|p| p.remainder)
        .fold(0.0, f64::max);
    Ok(SupBoundReport {
        n,
        replicates,
        max_observed,
        bound,
        pass: max_observed <= bound,
    })
}
