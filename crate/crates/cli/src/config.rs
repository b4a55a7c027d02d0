//! JSON experiment configuration and its validation.
//!
//! Matrices are row-major nested lists. Every validation failure names the
//! offending field, e.g. `coefficients.rho` or `n_grid[2]`.

use std::path::PathBuf;

use linproc_core::berry_esseen::DEFAULT_CONFIDENCE;
use linproc_core::{CoeffSeq, Direction, Error, HVector, InnovationKind, InnovationModel, LinOp, Regime, Result};
use serde::{Deserialize, Serialize};

pub const MIN_DELTA_REPLICATES: usize = 1000;
pub const MIN_RATE_HORIZONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub coefficients: CoefficientSpec,
    pub innovations: InnovationSpec,
    /// Exponent in `Σ|j|^τ ‖a_j‖`, reported with each study.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
    #[serde(default)]
    pub kde_bandwidth: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub verify: VerifySettings,
    /// Measured values to feed straight into the rate fit, skipping simulation.
    #[serde(default)]
    pub synthetic: Option<Vec<SyntheticPoint>>,
}

fn default_dimension() -> usize {
    4
}
fn default_tau() -> f64 {
    1.0
}
fn default_replicates() -> usize {
    100_000
}
fn default_reference_size() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// `a_j = ρ^{|j|} P` for `|j| ≤ support`; `P` defaults to the identity.
    Geometric {
        rho: f64,
        #[serde(default)]
        base: Option<Vec<Vec<f64>>>,
        support: usize,
    },
    Explicit { terms: Vec<Term> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub j: i64,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnovationSpec {
    Bounded {
        radius: f64,
        #[serde(default)]
        direction: Direction,
    },
    SubExponential {
        scale: f64,
        #[serde(default)]
        direction: Direction,
    },
    HeavyTail {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        /// Moment order used for the Orlicz bound; must be below `alpha`.
        r: f64,
        #[serde(default)]
        direction: Direction,
    },
    Gaussian { std_dev: f64 },
    Constant { vector: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance on the exact identities, scaled by `1 + ‖S_n‖`.
    pub identity: f64,
    /// `δ` in the noise floor `√(ln(2/δ)/(2m_a)) + √(ln(2/δ)/(2m_b))`.
    pub confidence: f64,
    /// Multiple of the noise floor allowed above the theorem bound.
    pub bound_slack: f64,
    /// Upper limit on the fitted log-log slope, if checked.
    pub max_slope: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-9,
            confidence: DEFAULT_CONFIDENCE,
            bound_slack: 2.0,
            max_slope: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Independent realizations of the configured process per horizon.
    pub seeds: u64,
    /// Horizons for the configured process; `n_grid` when empty.
    pub horizons: Vec<usize>,
    pub random_configs: usize,
    pub discrete_spaces: usize,
    pub sup_replicates: usize,
    pub sup_horizons: Vec<usize>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seeds: 8,
            horizons: Vec::new(),
            random_configs: 100,
            discrete_spaces: 1000,
            sup_replicates: 10_000,
            sup_horizons: vec![8, 64, 512],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPoint {
    pub n: usize,
    pub delta_hat: f64,
    #[serde(default)]
    pub mc_error: f64,
}

/// A validated configuration turned into library objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub coeffs: CoeffSeq,
    pub model: InnovationModel,
    pub regime: Regime,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &std::path::Path) -> std::result::Result<Self, crate::RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| crate::RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_json(&text)?)
    }

    /// Checks shared by every subcommand, then builds the process and model.
    pub fn build(&self) -> Result<Experiment> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        check_grid("n_grid", &self.n_grid)?;
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", format!("must be finite and nonnegative, got {}", self.tau)));
        }
        if let Some(h) = self.kde_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("kde_bandwidth", format!("must be positive, got {h}")));
            }
        }
        let t = &self.tolerances;
        if !(t.confidence > 0.0 && t.confidence < 1.0) {
            return Err(Error::config("tolerances.confidence", format!("must lie in (0, 1), got {}", t.confidence)));
        }
        if !(t.identity > 0.0) {
            return Err(Error::config("tolerances.identity", "must be positive"));
        }
        if !(t.bound_slack >= 0.0) {
            return Err(Error::config("tolerances.bound_slack", "must be nonnegative"));
        }
        check_grid("verify.horizons", &self.verify.horizons)?;
        check_grid("verify.sup_horizons", &self.verify.sup_horizons)?;

        let coeffs = match &self.coefficients {
            CoefficientSpec::Geometric { rho, base, support } => {
                let base = match base {
                    Some(rows) => matrix("coefficients.base", rows, d)?,
                    None => LinOp::identity(d),
                };
                CoeffSeq::geometric(*rho, &base, *support)?
            }
            CoefficientSpec::Explicit { terms } => {
                if terms.is_empty() {
                    return Err(Error::config("coefficients.terms", "needs at least one term"));
                }
                let ops = terms
                    .iter()
                    .enumerate()
                    .map(|(i, t)| Ok((t.j, matrix(&format!("coefficients.terms[{i}].matrix"), &t.matrix, d)?)))
                    .collect::<Result<Vec<_>>>()?;
                CoeffSeq::explicit(d, ops)?
            }
        };

        let (kind, direction, r) = match &self.innovations {
            InnovationSpec::Bounded { radius, direction } => (InnovationKind::Bounded { radius: *radius }, *direction, None),
            InnovationSpec::SubExponential { scale, direction } => {
                (InnovationKind::SubExponential { scale: *scale }, *direction, None)
            }
            InnovationSpec::HeavyTail { alpha, scale, r, direction } => (
                InnovationKind::HeavyTail {
                    alpha: *alpha,
                    scale: *scale,
                },
                *direction,
                Some(*r),
            ),
            InnovationSpec::Gaussian { std_dev } => (InnovationKind::Gaussian { std_dev: *std_dev }, Direction::Axes, None),
            InnovationSpec::Constant { vector } => {
                if vector.len() != d {
                    return Err(dimension_error("innovations.vector", d, vector.len()));
                }
                (InnovationKind::Constant(HVector::new(vector.clone())?), Direction::Axes, None)
            }
        };
        if let Some(r) = r {
            if !(r >= 1.0) {
                return Err(Error::config("innovations.r", format!("must be at least 1, got {r}")));
            }
        }
        let model = InnovationModel::new(d, kind, direction)?;
        let regime = Regime::for_model(&model, r)?;
        Ok(Experiment { coeffs, model, regime })
    }

    /// Additional requirements of the simulation subcommands.
    pub fn check_study(&self, min_horizons: usize) -> Result<()> {
        if self.n_grid.len() < min_horizons {
            return Err(Error::config(
                "n_grid",
                format!("needs at least {min_horizons} horizons, got {}", self.n_grid.len()),
            ));
        }
        if self.synthetic.is_some() {
            return Ok(());
        }
        if self.replicates < MIN_DELTA_REPLICATES {
            return Err(Error::config(
                "replicates",
                format!("delta studies need at least {MIN_DELTA_REPLICATES} replicates, got {}", self.replicates),
            ));
        }
        if self.reference_size < self.replicates {
            return Err(Error::config(
                "reference_size",
                format!("must be at least replicates = {}, got {}", self.replicates, self.reference_size),
            ));
        }
        Ok(())
    }

    /// Synthetic points, checked against `n_grid`.
    pub fn synthetic_points(&self) -> Result<Option<&[SyntheticPoint]>> {
        let Some(points) = &self.synthetic else {
            return Ok(None);
        };
        if points.len() != self.n_grid.len() {
            return Err(Error::config("synthetic", "needs one point per n_grid entry"));
        }
        for (i, (p, &n)) in points.iter().zip(&self.n_grid).enumerate() {
            if p.n != n {
                return Err(Error::config(format!("synthetic[{i}].n"), format!("expected {n}, got {}", p.n)));
            }
            if !(p.delta_hat >= 0.0 && p.delta_hat.is_finite()) || !(p.mc_error >= 0.0 && p.mc_error.is_finite()) {
                return Err(Error::config(format!("synthetic[{i}]"), "values must be finite and nonnegative"));
            }
        }
        Ok(Some(points))
    }
}

fn check_grid(path: &str, grid: &[usize]) -> Result<()> {
    for (i, &n) in grid.iter().enumerate() {
        if n == 0 {
            return Err(Error::config(format!("{path}[{i}]"), "horizons must be at least 1"));
        }
        if i > 0 && n <= grid[i - 1] {
            return Err(Error::config(format!("{path}[{i}]"), "horizons must be strictly increasing"));
        }
    }
    Ok(())
}

fn dimension_error(path: &str, expected: usize, found: usize) -> Error {
    Error::config(path, format!("dimension mismatch: expected {expected}, found {found}"))
}

fn matrix(path: &str, rows: &[Vec<f64>], d: usize) -> Result<LinOp> {
    if rows.len() != d {
        return Err(dimension_error(path, d, rows.len()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(dimension_error(&format!("{path}[{i}]"), d, row.len()));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(format!("{path}[{i}]"), "entries must be finite"));
        }
    }
    LinOp::from_rows(rows)
}
