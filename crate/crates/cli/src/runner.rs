//! The `verify`, `delta`, `rates` and `plot` subcommands.
//!
//! Seeds are derived from the configured seed by replicate and horizon index
//! only, so results never depend on the worker count.

use std::fs;
use std::path::Path;

use linproc_core::berry_esseen::{crucial_inequality_check, Atom, BoundTerms};
use linproc_core::hilbert::norm;
use linproc_core::linproc::{qn_via_blocks, sup_norm_bound_check};
use linproc_core::{
    decompose, rate_fit, CoeffSeq, CounterRng, DeltaStudy, Direction, Error, InnovationModel, LinOp, RatePoint,
    Realization, Regime,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, MIN_RATE_HORIZONS};
use crate::error::{RunError, EXIT_CHECK_FAILED, EXIT_PASS};
use crate::svg::{self, PlotPoint};

/// A machine-readable report and whether every check in it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "must be at least 1").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Threads(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(RunError::io(dir))?;
    }
    fs::write(path, contents).map_err(RunError::io(path))
}

fn write_report(out: &Path, report: &Value) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_file(&out.join("report.json"), text.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: Value) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            detail,
        }
    }
}

/// Identity residuals of one realization, each divided by `1 + ‖S_n‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub n: usize,
    pub lemma: f64,
    pub r_split: f64,
    pub q_blocks: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.lemma.max(self.r_split).max(self.q_blocks)
    }
}

pub fn identity_residuals(c: &CoeffSeq, model: &InnovationModel, n: usize, seed: u64) -> Result<IdentityResiduals, Error> {
    let real = Realization::draw(model, Realization::window(c.support(), n), seed);
    let dec = decompose(c, &real, n)?;
    let scale = 1.0 + dec.s_n.norm();
    Ok(IdentityResiduals {
        n,
        lemma: dec.lemma_residual() / scale,
        r_split: dec.r_split_residual() / scale,
        q_blocks: (&qn_via_blocks(c, &real, n) - &dec.q_n).norm() / scale,
    })
}

/// A random process with `d ≤ 8`, `J ≤ 16`, `n ≤ 128`; the innovation kind
/// cycles through bounded, sub-exponential and heavy-tailed with the index.
pub fn random_identity_case(index: u64, seed: u64) -> (CoeffSeq, InnovationModel, usize) {
    let rng = CounterRng::new(seed).fork(index);
    let mut s = rng.at(-1);
    let d = 1 + s.below(8) as usize;
    let support = s.below(17) as usize;
    let n = 1 + s.below(128) as usize;
    let direction = if s.below(2) == 0 { Direction::Axes } else { Direction::Sphere };
    let model = match index % 3 {
        0 => InnovationModel::bounded(d, 0.5 + s.open_unit()),
        1 => InnovationModel::sub_exponential(d, 0.5 + s.open_unit()),
        _ => InnovationModel::heavy_tail(d, 2.5 + 3.0 * s.open_unit(), 1.0),
    }
    .and_then(|m| m.with_direction(direction))
    .expect("valid random model");
    let terms = (-(support as i64)..=support as i64)
        .filter_map(|j| {
            let mut e = rng.at(j);
            // Leave some lags empty to exercise sparse supports.
            if j != 0 && e.below(4) == 0 {
                return None;
            }
            let decay = 0.85f64.powi(j.unsigned_abs() as i32);
            let entries: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..d).map(|_| decay * (2.0 * e.open_unit() - 1.0)).collect())
                .collect();
            Some((j, LinOp::from_rows(&entries).expect("square")))
        })
        .collect();
    (CoeffSeq::explicit(d, terms).expect("valid random coefficients"), model, n)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentitySuite {
    pub configs: usize,
    pub max_lemma: f64,
    pub max_r_split: f64,
    pub max_q_blocks: f64,
    pub kinds: [usize; 3],
}

pub fn randomized_identity_suite(count: usize, seed: u64) -> Result<IdentitySuite, Error> {
    let mut suite = IdentitySuite {
        configs: count,
        max_lemma: 0.0,
        max_r_split: 0.0,
        max_q_blocks: 0.0,
        kinds: [0; 3],
    };
    for i in 0..count as u64 {
        let (c, model, n) = random_identity_case(i, seed);
        let res = identity_residuals(&c, &model, n, CounterRng::new(seed).fork(i).key())?;
        suite.max_lemma = suite.max_lemma.max(res.lemma);
        suite.max_r_split = suite.max_r_split.max(res.r_split);
        suite.max_q_blocks = suite.max_q_blocks.max(res.q_blocks);
        suite.kinds[(i % 3) as usize] += 1;
    }
    Ok(suite)
}

/// A random finite probability space with atoms `(U, V)` in `R^d`, plus `(t, λ)`.
pub fn random_discrete_space(index: u64, seed: u64) -> (Vec<Atom>, f64, f64) {
    let mut s = CounterRng::new(seed).fork(index).at(0);
    let d = 1 + s.below(4) as usize;
    let atoms = 1 + s.below(12) as usize;
    let mut raw = Vec::with_capacity(atoms);
    for _ in 0..atoms {
        let p = s.open_unit();
        let u: Vec<f64> = (0..d).map(|_| 4.0 * s.open_unit() - 2.0).collect();
        let v: Vec<f64> = (0..d).map(|_| 2.0 * s.open_unit() - 1.0).collect();
        raw.push((p, u, v));
    }
    let total: f64 = raw.iter().map(|r| r.0).sum();
    let space = raw
        .iter()
        .map(|(p, u, v)| {
            let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
            Atom {
                probability: p / total,
                u: norm(u),
                v: norm(v),
                sum: norm(&sum),
            }
        })
        .collect();
    (space, 3.0 * s.open_unit(), 2.0 * s.open_unit())
}

#[derive(Debug, Clone, Serialize)]
pub struct CrucialSuite {
    pub spaces: usize,
    pub min_margin: f64,
    pub failures: usize,
}

pub fn randomized_crucial_suite(count: usize, seed: u64) -> Result<CrucialSuite, Error> {
    let mut suite = CrucialSuite {
        spaces: count,
        min_margin: f64::INFINITY,
        failures: 0,
    };
    for i in 0..count as u64 {
        let (space, t, lambda) = random_discrete_space(i, seed);
        let rep = crucial_inequality_check(&space, t, lambda)?;
        suite.min_margin = suite.min_margin.min(rep.margin);
        suite.failures += usize::from(!rep.pass);
    }
    Ok(suite)
}

/// Exact identities, the crucial inequality, and (for bounded innovations)
/// the sup-norm bound on `‖Q_n + R_n‖`.
pub fn run_verify(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    let exp = cfg.build()?;
    let tol = cfg.tolerances.identity;
    let v = &cfg.verify;
    let base = CounterRng::new(cfg.seed);
    let mut checks = Vec::new();

    let horizons: Vec<usize> = if !v.horizons.is_empty() {
        v.horizons.clone()
    } else if !cfg.n_grid.is_empty() {
        cfg.n_grid.clone()
    } else {
        vec![1, 8, 64]
    };
    let mut worst = IdentityResiduals { n: 0, lemma: 0.0, r_split: 0.0, q_blocks: 0.0 };
    for &n in &horizons {
        for s in 0..v.seeds {
            let res = identity_residuals(&exp.coeffs, &exp.model, n, base.fork(1).fork(n as u64).fork(s).key())?;
            worst.lemma = worst.lemma.max(res.lemma);
            worst.r_split = worst.r_split.max(res.r_split);
            worst.q_blocks = worst.q_blocks.max(res.q_blocks);
        }
    }
    let detail = json!({ "horizons": horizons, "seeds": v.seeds });
    checks.push(Check::at_most("lemma_identity", worst.lemma, tol, detail.clone()));
    checks.push(Check::at_most("r_split_identity", worst.r_split, tol, detail.clone()));
    checks.push(Check::at_most("q_block_identity", worst.q_blocks, tol, detail));

    if v.random_configs > 0 {
        let suite = randomized_identity_suite(v.random_configs, base.fork(2).key())?;
        let detail = json!({ "configs": suite.configs, "kinds": suite.kinds });
        checks.push(Check::at_most("lemma_identity_randomized", suite.max_lemma, tol, detail.clone()));
        checks.push(Check::at_most("r_split_identity_randomized", suite.max_r_split, tol, detail.clone()));
        checks.push(Check::at_most("q_block_identity_randomized", suite.max_q_blocks, tol, detail));
    }

    if v.discrete_spaces > 0 {
        let suite = randomized_crucial_suite(v.discrete_spaces, base.fork(3).key())?;
        checks.push(Check {
            name: "crucial_inequality".into(),
            value: suite.min_margin,
            tolerance: -1e-12,
            pass: suite.failures == 0 && suite.min_margin >= -1e-12,
            detail: json!({ "spaces": suite.spaces, "failures": suite.failures }),
        });
    }

    if matches!(exp.model.kind(), linproc_core::InnovationKind::Bounded { .. }) {
        for &n in &v.sup_horizons {
            let rep = sup_norm_bound_check(&exp.coeffs, &exp.model, n, v.sup_replicates, base.fork(4).fork(n as u64).key())?;
            checks.push(Check::at_most(
                &format!("sup_bound_n{n}"),
                rep.max_observed,
                rep.bound,
                json!({ "replicates": rep.replicates }),
            ));
        }
    }

    let passed = checks.iter().all(|c| c.pass);
    let report = json!({ "command": "verify", "seed": cfg.seed, "pass": passed, "checks": checks });
    write_report(out, &report)?;
    Ok(Outcome { report, passed })
}

fn build_study(cfg: &ExperimentConfig) -> Result<DeltaStudy, RunError> {
    let exp = cfg.build()?;
    Ok(DeltaStudy::new(
        exp.coeffs,
        exp.model,
        exp.regime,
        cfg.reference_size,
        cfg.kde_bandwidth,
        cfg.tolerances.confidence,
        cfg.seed,
    )?)
}

fn bound_dominates(cfg: &ExperimentConfig, rep: &linproc_core::BoundReport) -> bool {
    rep.delta_hat <= rep.theorem_bound + cfg.tolerances.bound_slack * rep.mc_error
}

/// One horizon: `n` if given, else the last entry of `n_grid`.
pub fn run_delta(cfg: &ExperimentConfig, out: &Path, n: Option<usize>) -> Result<Outcome, RunError> {
    cfg.build()?;
    let n = match n.or_else(|| cfg.n_grid.last().copied()) {
        Some(0) => return Err(Error::config("n", "horizon must be at least 1").into()),
        Some(n) => n,
        None => return Err(Error::config("n_grid", "delta needs a horizon: pass --n or set n_grid").into()),
    };
    let mut one = cfg.clone();
    one.n_grid = vec![n];
    one.synthetic = None;
    one.check_study(1)?;
    let study = build_study(&one)?;
    let rep = study.measure(n, cfg.replicates, cfg.seed)?;
    let passed = bound_dominates(cfg, &rep);
    let report = json!({
        "command": "delta",
        "seed": cfg.seed,
        "pass": passed,
        "density": study.density,
        "tau": cfg.tau,
        "weighted_norm_sum_tau": study.coeffs.weighted_norm_sum(cfg.tau),
        "result": rep,
        "above_noise_floor": rep.above_noise_floor(),
    });
    write_report(out, &report)?;
    Ok(Outcome { report, passed })
}

/// One row of `points.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub n: usize,
    pub delta_hat: f64,
    pub mc_error: f64,
    pub delta_a_eps: f64,
    pub theorem_bound: f64,
    pub c_n: f64,
    /// `sup_eps` or `orlicz_QR`, by regime.
    pub regime_value: f64,
    pub c1: f64,
    pub flag: &'static str,
}

pub const CSV_HEADER_PREFIX: [&str; 6] = ["n", "delta_hat", "mc_error", "delta_A_eps", "theorem_bound", "cN"];

fn regime_column(regime: Regime) -> &'static str {
    match regime {
        Regime::Sup => "sup_eps",
        Regime::Orlicz { .. } => "orlicz_QR",
    }
}

fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NaN".into()
    }
}

fn csv_bytes(rows: &[CsvRow], regime: Regime) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_HEADER_PREFIX.to_vec();
    header.extend([regime_column(regime), "c1", "flag"]);
    w.write_record(&header)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            cell(r.delta_hat),
            cell(r.mc_error),
            cell(r.delta_a_eps),
            cell(r.theorem_bound),
            cell(r.c_n),
            cell(r.regime_value),
            cell(r.c1),
            r.flag.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| RunError::Io {
        path: "points.csv".into(),
        source: e.into_error(),
    })
}

fn plot_points(rows: &[CsvRow]) -> Vec<PlotPoint> {
    rows.iter()
        .map(|r| PlotPoint {
            n: r.n as f64,
            delta_hat: r.delta_hat,
            mc_error: r.mc_error,
            theorem_bound: r.theorem_bound,
        })
        .collect()
}

const RATES_TITLE: &str = "Berry-Esseen distance vs n";

/// Every horizon of `n_grid`, then the log-log rate fit.
pub fn run_rates(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    let exp = cfg.build()?;
    cfg.check_study(MIN_RATE_HORIZONS)?;

    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    let mut reports = Vec::new();
    let mut density = Value::Null;
    if let Some(points) = cfg.synthetic_points()? {
        for p in points {
            rows.push(CsvRow {
                n: p.n,
                delta_hat: p.delta_hat,
                mc_error: p.mc_error,
                delta_a_eps: f64::NAN,
                theorem_bound: f64::NAN,
                c_n: f64::NAN,
                regime_value: f64::NAN,
                c1: f64::NAN,
                flag: "synthetic",
            });
        }
    } else {
        let study = build_study(cfg)?;
        density = serde_json::to_value(study.density)?;
        for &n in &cfg.n_grid {
            let rep = study.measure(n, cfg.replicates, cfg.seed)?;
            let regime_value = match rep.terms {
                BoundTerms::Sup { sup_eps, .. } => sup_eps,
                BoundTerms::Orlicz { orlicz_remainder, .. } => orlicz_remainder,
            };
            rows.push(CsvRow {
                n,
                delta_hat: rep.delta_hat,
                mc_error: rep.mc_error,
                delta_a_eps: rep.delta_a_eps,
                theorem_bound: rep.theorem_bound,
                c_n: rep.density_bound,
                regime_value,
                c1: rep.c1,
                flag: if rep.above_noise_floor() { "ok" } else { "below_noise_floor" },
            });
            reports.push(rep);
        }
    }

    write_file(&out.join("points.csv"), &csv_bytes(&rows, exp.regime)?)?;
    write_file(&out.join("rates.svg"), svg::render(&plot_points(&rows), RATES_TITLE).as_bytes())?;

    let points: Vec<RatePoint> = rows
        .iter()
        .map(|r| RatePoint {
            n: r.n,
            delta_hat: r.delta_hat,
            mc_error: r.mc_error,
        })
        .collect();
    let mut report = json!({
        "command": "rates",
        "seed": cfg.seed,
        "regime": exp.regime,
        "tau": cfg.tau,
        "weighted_norm_sum_tau": exp.coeffs.weighted_norm_sum(cfg.tau),
        "density": density,
        "rows": reports,
    });
    let fit = match rate_fit(&points) {
        Ok(fit) => fit,
        Err(e) => {
            report["pass"] = false.into();
            report["fit"] = Value::Null;
            report["error"] = e.to_string().into();
            report["guidance"] = "too few horizons clear the noise floor; raise `replicates` (and `reference_size`) or use smaller horizons".into();
            write_report(out, &report)?;
            return Err(e.into());
        }
    };

    let mut checks: Vec<Check> = reports
        .iter()
        .map(|rep| {
            let mut c = Check::at_most(
                &format!("bound_n{}", rep.n),
                rep.delta_hat,
                rep.theorem_bound + cfg.tolerances.bound_slack * rep.mc_error,
                Value::Null,
            );
            c.pass = bound_dominates(cfg, rep);
            c
        })
        .collect();
    if let Some(max_slope) = cfg.tolerances.max_slope {
        checks.push(Check::at_most("slope", fit.power.slope, max_slope, Value::Null));
    }
    let passed = checks.iter().all(|c| c.pass);
    report["fit"] = serde_json::to_value(&fit)?;
    report["checks"] = serde_json::to_value(&checks)?;
    report["pass"] = passed.into();
    write_report(out, &report)?;
    Ok(Outcome { report, passed })
}

/// Re-renders `rates.svg` from a `points.csv`.
pub fn plot(csv_path: &Path, svg_path: &Path) -> Result<(), RunError> {
    let mut reader = csv::Reader::from_path(csv_path)?;
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunError::Core(Error::InvalidInput(format!("{}: missing column `{name}`", csv_path.display()))))
    };
    let (n, d, mc, tb) = (col("n")?, col("delta_hat")?, col("mc_error")?, col("theorem_bound")?);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let num = |c: usize| -> Result<f64, RunError> {
            record[c].parse::<f64>().map_err(|e| {
                RunError::Core(Error::InvalidInput(format!("{} row {}: {e}", csv_path.display(), i + 1)))
            })
        };
        points.push(PlotPoint {
            n: num(n)?,
            delta_hat: num(d)?,
            mc_error: num(mc)?,
            theorem_bound: num(tb)?,
        });
    }
    write_file(svg_path, svg::render(&points, RATES_TITLE).as_bytes())
}
