//! I.i.d. centered innovations and their norm functionals.
//!
//! Three regimes: bounded radius, exponential radius (sub-exponential), and
//! Pareto radius (polynomial moments only). Each draw is `radius · direction`
//! with a symmetric direction law, which makes the law centered. Two extra
//! kinds exist for tests and sanity runs: standard Gaussian coordinates and a
//! deterministic constant vector.

use rand_distr::{Distribution, Exp, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{norm, HVector, LinOp};
use crate::rng::{CounterRng, IndexRng};

/// Symmetric law of the direction `ε / ‖ε‖` on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Uniform over the `2d` signed basis vectors `±e_i`.
    #[default]
    Axes,
    /// `±e_i` for one fixed axis.
    Axis(usize),
    /// Uniform on the sphere.
    Sphere,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnovationKind {
    /// `‖ε‖ = radius` almost surely, so `‖ε₀‖_∞ = radius`.
    Bounded { radius: f64 },
    /// Radius exponential with mean `scale`, tail `exp(-x/scale)`.
    SubExponential { scale: f64 },
    /// Radius Pareto with density `α x^{-α-1}` on `[1, ∞)`, times `scale`.
    HeavyTail { alpha: f64, scale: f64 },
    /// Independent `N(0, std_dev²)` coordinates.
    Gaussian { std_dev: f64 },
    /// Every draw equals this vector. Not centered; for identity tests only.
    Constant(HVector),
}

/// Envelope constants with `E‖ε‖^m ≤ (m!/2) B² L^{m-2}` for `m ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEnvelope {
    pub b: f64,
    pub l: f64,
}

impl MomentEnvelope {
    /// `(m!/2) B² L^{m-2}`.
    pub fn bound(&self, m: u32) -> f64 {
        0.5 * factorial(m) * self.b * self.b * self.l.powi(m as i32 - 2)
    }

    /// Relative slack allows for the rounding of moments computed from samples.
    pub fn holds_for(&self, moments: &[(u32, f64)]) -> bool {
        moments
            .iter()
            .all(|&(m, mu)| mu <= self.bound(m) * (1.0 + 1e-12))
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Closed-form radial laws, used for exact Orlicz norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialLaw {
    Constant(f64),
    Exponential { scale: f64 },
    Pareto { alpha: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnovationModel {
    dim: usize,
    kind: InnovationKind,
    direction: Direction,
    envelope: Option<MomentEnvelope>,
}

impl InnovationModel {
    pub fn new(dim: usize, kind: InnovationKind, direction: Direction) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be finite and positive, got {v}")))
            }
        };
        match &kind {
            InnovationKind::Bounded { radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::config(
                        "innovations.radius",
                        format!("must be finite and nonnegative, got {radius}"),
                    ));
                }
            }
            InnovationKind::SubExponential { scale } => positive("innovations.scale", *scale)?,
            InnovationKind::HeavyTail { alpha, scale } => {
                positive("innovations.alpha", *alpha)?;
                positive("innovations.scale", *scale)?;
            }
            InnovationKind::Gaussian { std_dev } => {
                if !(std_dev.is_finite() && *std_dev >= 0.0) {
                    return Err(Error::config(
                        "innovations.std_dev",
                        format!("must be finite and nonnegative, got {std_dev}"),
                    ));
                }
            }
            InnovationKind::Constant(v) => {
                if v.dim() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: v.dim(),
                    });
                }
            }
        }
        if let Direction::Axis(i) = direction {
            if i >= dim {
                return Err(Error::config(
                    "innovations.direction",
                    format!("axis {i} out of range for dimension {dim}"),
                ));
            }
        }
        Ok(Self {
            dim,
            kind,
            direction,
            envelope: None,
        })
    }

    pub fn bounded(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, InnovationKind::Bounded { radius }, Direction::Axes)
    }

    pub fn sub_exponential(dim: usize, scale: f64) -> Result<Self> {
        Self::new(dim, InnovationKind::SubExponential { scale }, Direction::Axes)
    }

    pub fn heavy_tail(dim: usize, alpha: f64, scale: f64) -> Result<Self> {
        Self::new(dim, InnovationKind::HeavyTail { alpha, scale }, Direction::Axes)
    }

    pub fn gaussian(dim: usize, std_dev: f64) -> Result<Self> {
        Self::new(dim, InnovationKind::Gaussian { std_dev }, Direction::Axes)
    }

    pub fn constant(v: HVector) -> Result<Self> {
        Self::new(v.dim(), InnovationKind::Constant(v), Direction::Axes)
    }

    pub fn with_direction(mut self, direction: Direction) -> Result<Self> {
        Self::new(self.dim, self.kind.clone(), direction)?;
        self.direction = direction;
        Ok(self)
    }

    pub fn with_envelope(mut self, envelope: MomentEnvelope) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &InnovationKind {
        &self.kind
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn envelope(&self) -> Option<MomentEnvelope> {
        self.envelope
    }

    /// `‖ε₀‖_∞` when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match &self.kind {
            InnovationKind::Bounded { radius } => Some(*radius),
            InnovationKind::Constant(v) => Some(v.norm()),
            InnovationKind::Gaussian { std_dev } if *std_dev == 0.0 => Some(0.0),
            _ => None,
        }
    }

    /// Rejects `r ≥ α` for Pareto radii, where `E‖ε₀‖^r` is infinite.
    pub fn require_moment(&self, r: f64) -> Result<()> {
        if let InnovationKind::HeavyTail { alpha, .. } = self.kind {
            if r >= alpha {
                return Err(Error::config(
                    "innovations.r",
                    format!("moment order r = {r} requires alpha > r, got alpha = {alpha}"),
                ));
            }
        }
        Ok(())
    }

    pub fn radial_law(&self) -> Option<RadialLaw> {
        match &self.kind {
            InnovationKind::Bounded { radius } => Some(RadialLaw::Constant(*radius)),
            InnovationKind::SubExponential { scale } => Some(RadialLaw::Exponential { scale: *scale }),
            InnovationKind::HeavyTail { alpha, scale } => Some(RadialLaw::Pareto {
                alpha: *alpha,
                scale: *scale,
            }),
            InnovationKind::Constant(v) => Some(RadialLaw::Constant(v.norm())),
            InnovationKind::Gaussian { .. } => None,
        }
    }

    /// Analytic autocovariance operator `C_{ε₀}`.
    pub fn covariance(&self) -> Result<LinOp> {
        let d = self.dim;
        let direction_cov = |second_moment: f64| match self.direction {
            Direction::Axes | Direction::Sphere => LinOp::identity(d).scale(second_moment / d as f64),
            Direction::Axis(i) => {
                let e = HVector::basis(d, i);
                LinOp::outer(&e, &e).scale(second_moment)
            }
        };
        Ok(match &self.kind {
            InnovationKind::Bounded { radius } => direction_cov(radius * radius),
            InnovationKind::SubExponential { scale } => direction_cov(2.0 * scale * scale),
            InnovationKind::HeavyTail { alpha, scale } => {
                if *alpha <= 2.0 {
                    return Err(Error::HeavyTail(format!(
                        "second moment is infinite for alpha = {alpha}"
                    )));
                }
                direction_cov(alpha * scale * scale / (alpha - 2.0))
            }
            InnovationKind::Gaussian { std_dev } => LinOp::identity(d).scale(std_dev * std_dev),
            InnovationKind::Constant(v) => LinOp::outer(v, v),
        })
    }

    /// Writes the draw for `index` of the stream family `rng` into `out`.
    #[inline]
    pub fn draw_into(&self, rng: &CounterRng, index: i64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut s = rng.at(index);
        let radius = match &self.kind {
            InnovationKind::Bounded { radius } => *radius,
            InnovationKind::SubExponential { scale } => {
                Exp::new(1.0 / scale).expect("validated").sample(&mut s)
            }
            InnovationKind::HeavyTail { alpha, scale } => {
                Pareto::new(*scale, *alpha).expect("validated").sample(&mut s)
            }
            InnovationKind::Gaussian { std_dev } => {
                for o in out.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut s);
                    *o = std_dev * g;
                }
                return;
            }
            InnovationKind::Constant(v) => {
                out.copy_from_slice(v.coords());
                return;
            }
        };
        self.direction_into(&mut s, radius, out);
        if let InnovationKind::Bounded { radius } = self.kind {
            // Normalisation rounding must never push a draw past the bound.
            while norm(out) > radius {
                out.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
            }
        }
    }

    #[inline]
    fn direction_into(&self, s: &mut IndexRng, radius: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        match self.direction {
            Direction::Axes => {
                let pick = s.below(2 * self.dim as u64) as usize;
                out[pick >> 1] = if pick & 1 == 0 { radius } else { -radius };
            }
            Direction::Axis(i) => {
                out[i] = if s.below(2) == 0 { radius } else { -radius };
            }
            Direction::Sphere => loop {
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(s);
                }
                let n = norm(out);
                if n > 0.0 {
                    out.iter_mut().for_each(|x| *x *= radius / n);
                    break;
                }
            },
        }
    }

    pub fn draw(&self, rng: &CounterRng, index: i64) -> HVector {
        let mut out = vec![0.0; self.dim];
        self.draw_into(rng, index, &mut out);
        HVector::new(out).expect("dim >= 1")
    }
}

/// Draws `ε_k` for every `k` in `range`.
///
/// The draw for index `k` depends only on `(model, k, seed)`: any two
/// requested ranges agree on their overlap.
pub fn sample_innovations(
    model: &InnovationModel,
    range: std::ops::RangeInclusive<i64>,
    seed: u64,
) -> Vec<HVector> {
    let rng = CounterRng::new(seed);
    range.map(|k| model.draw(&rng, k)).collect()
}

/// Norms `‖z‖_H` of a batch of vectors.
pub fn norms_of(samples: &[HVector]) -> Vec<f64> {
    samples.iter().map(HVector::norm).collect()
}

/// A Young function `ψ`: convex, nondecreasing, `ψ(0) = 0`, `ψ(∞) = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YoungFunction {
    /// `ψ₁(x) = eˣ - 1`.
    Psi1,
    /// `ψ(x) = x^r`, `r ≥ 1`.
    Power(f64),
}

impl YoungFunction {
    pub fn power(r: f64) -> Result<Self> {
        if r.is_finite() && r >= 1.0 {
            Ok(YoungFunction::Power(r))
        } else {
            Err(Error::Domain(format!("power Young function needs r >= 1, got {r}")))
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            YoungFunction::Psi1 => x.exp_m1(),
            YoungFunction::Power(r) => x.powf(r),
        }
    }
}

/// What an Orlicz norm is taken over: observed radii or a closed-form law.
#[derive(Debug, Clone, Copy)]
pub enum NormSource<'a> {
    Samples(&'a [f64]),
    Law(RadialLaw),
}

impl NormSource<'_> {
    /// `E ψ(R / c)`, possibly infinite.
    fn mean_psi(&self, psi: YoungFunction, c: f64) -> f64 {
        match *self {
            NormSource::Samples(norms) => {
                norms.iter().map(|&x| psi.eval(x / c)).sum::<f64>() / norms.len() as f64
            }
            NormSource::Law(RadialLaw::Constant(c0)) => psi.eval(c0 / c),
            NormSource::Law(RadialLaw::Exponential { scale }) => match psi {
                YoungFunction::Psi1 if c > scale => scale / (c - scale),
                YoungFunction::Psi1 => f64::INFINITY,
                YoungFunction::Power(r) => libm::tgamma(r + 1.0) * (scale / c).powf(r),
            },
            NormSource::Law(RadialLaw::Pareto { alpha, scale }) => match psi {
                YoungFunction::Power(r) if r < alpha => alpha / (alpha - r) * (scale / c).powf(r),
                _ => f64::INFINITY,
            },
        }
    }

    fn is_zero(&self) -> bool {
        match *self {
            NormSource::Samples(norms) => norms.iter().all(|&x| x == 0.0),
            NormSource::Law(RadialLaw::Constant(c0)) => c0 == 0.0,
            NormSource::Law(_) => false,
        }
    }

    fn scale_hint(&self) -> f64 {
        let hint = match *self {
            NormSource::Samples(norms) => norms.iter().fold(0.0, |m: f64, &x| m.max(x)),
            NormSource::Law(RadialLaw::Constant(c0)) => c0,
            NormSource::Law(RadialLaw::Exponential { scale }) => scale,
            NormSource::Law(RadialLaw::Pareto { scale, .. }) => scale,
        };
        if hint > 0.0 && hint.is_finite() {
            hint
        } else {
            1.0
        }
    }
}

pub const DEFAULT_LUXEMBURG_TOL: f64 = 1e-8;
const MAX_BRACKET_STEPS: usize = 2100;

/// Luxemburg norm `inf{c > 0 : E ψ(‖Z‖/c) ≤ 1}`.
///
/// `c ↦ E ψ(‖Z‖/c)` is decreasing, so the infimum is bracketed by doubling
/// and halving and then bisected (geometrically) to relative width `tol`.
/// The returned value is the upper end, which satisfies the constraint.
pub fn luxemburg_norm(source: NormSource<'_>, psi: YoungFunction, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if let NormSource::Samples(norms) = source {
        if norms.is_empty() {
            return Err(Error::Usage("luxemburg_norm needs at least one sample".into()));
        }
    }
    if source.is_zero() {
        return Ok(0.0);
    }
    let feasible = |c: f64| source.mean_psi(psi, c) <= 1.0;

    let mut hi = source.scale_hint();
    let mut steps = 0;
    while !feasible(hi) {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
            return Err(Error::Diverged(format!(
                "E ψ(‖Z‖/c) is infinite or above 1 for every bracketed c ({psi:?})"
            )));
        }
    }
    let mut lo = hi / 2.0;
    steps = 0;
    while feasible(lo) {
        hi = lo;
        lo /= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || lo == 0.0 {
            return Ok(hi);
        }
    }
    while hi / lo > 1.0 + tol {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(E‖Z‖^r)^{1/r}` over the samples.
pub fn lr_norm(norms: &[f64], r: f64) -> Result<f64> {
    if norms.is_empty() {
        return Err(Error::Usage("lr_norm needs at least one sample".into()));
    }
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("lr_norm needs r >= 1, got {r}")));
    }
    let top = norms.iter().fold(0.0, |m: f64, &x| m.max(x.abs()));
    if top == 0.0 {
        return Ok(0.0);
    }
    let mean = norms.iter().map(|&x| (x.abs() / top).powf(r)).sum::<f64>() / norms.len() as f64;
    Ok(top * mean.powf(1.0 / r))
}

/// Empirical moments `E‖Z‖^m` for `m = 2..=m_max`.
pub fn empirical_moments(norms: &[f64], m_max: u32) -> Vec<(u32, f64)> {
    let count = norms.len() as f64;
    (2..=m_max)
        .map(|m| (m, norms.iter().map(|&x| x.powi(m as i32)).sum::<f64>() / count))
        .collect()
}

/// Fits `(B, L)` so that `E‖Z‖^m ≤ (m!/2) B² L^{m-2}` for the empirical
/// moments `m = 2..=m_max`.
///
/// `B² = E‖Z‖²` is the smallest admissible `B`; given it, the smallest `L` is
/// `max_m (2 E‖Z‖^m / (m! B²))^{1/(m-2)}`.
pub fn fit_moment_envelope(norms: &[f64], m_max: u32) -> Result<MomentEnvelope> {
    if m_max < 3 {
        return Err(Error::Domain(format!("m_max must be at least 3, got {m_max}")));
    }
    if norms.is_empty() {
        return Err(Error::Usage("fit_moment_envelope needs samples".into()));
    }
    let moments = empirical_moments(norms, m_max);
    if let Some(&(m, _)) = moments.iter().find(|(_, mu)| !mu.is_finite()) {
        return Err(Error::HeavyTail(format!("empirical moment of order {m} is not finite")));
    }
    let second = moments[0].1;
    if second == 0.0 {
        return Ok(MomentEnvelope { b: 0.0, l: 1.0 });
    }
    let l = moments[1..]
        .iter()
        .map(|&(m, mu)| (2.0 * mu / (factorial(m) * second)).powf(1.0 / (m as f64 - 2.0)))
        .fold(0.0, f64::max);
    // Nudge up so the inequality survives rounding in `bound`.
    Ok(MomentEnvelope {
        b: second.sqrt() * (1.0 + 1e-14),
        l: l * (1.0 + 1e-14),
    })
}
