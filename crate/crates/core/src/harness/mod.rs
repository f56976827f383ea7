//! Monte Carlo recovery experiments and the verification suite.
//!
//! Every trial derives its own seed from the master seed, a hash of its grid
//! point and its trial index, so results do not depend on worker count,
//! scheduling or the position of the point in the grid.

mod emit;
mod verify;

pub use emit::{emit, emit_to_string, fmt_real, read_csv_rows, OutputFormat, CSV_HEADER};
pub use verify::{
    counting_check, cumulant_oracle_rows, DEFAULT_VERIFY_SEED, digraph_invariant_check, gaussian_mc_checks,
    mapping_at_distance, tail_domination_checks, verify_all, verify_cumulants, wilson_upper_one_sided,
    CheckOutcome, CumulantOracleRow, GaussianMcCheck, TailCheck, VerifyConfig, VerifyReport,
};

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{distance, injection_count, overlap, penalized_align, BranchAndBound};
use crate::cumulant::ScoreKind;
use crate::error::{Error, Result};
use crate::model::{derive_seed, sample_instance, ModelKind, ModelParams};
use crate::thresholds::{default_c2, gaussian_regime_boundary, gaussian_threshold, partial_threshold_er, DEFAULT_C0};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Default partial-recovery fraction.
pub const DEFAULT_DELTA: f64 = 0.5;

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

/// Parameter grid; the sweep visits the Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    /// Edge probabilities (ER only).
    #[serde(default)]
    pub p: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelKind,
    /// Overrides the regime-dependent default score.
    #[serde(default)]
    pub score: Option<ScoreKind>,
    pub grid: Grid,
    pub trials_per_point: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Enumeration cap; falls back to the environment, then the default.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Worker count; `None` uses every core.
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Size penalty; when set, trials use the penalized estimator instead of
    /// the known-size search.
    #[serde(default)]
    pub penalty: Option<f64>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn budget(&self) -> u128 {
        self.budget.map_or_else(crate::align::budget_from_env, u128::from)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_point == 0 {
            return Err(Error::Parameter("trials_per_point must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Parameter(format!("delta = {} outside (0, 1]", self.delta)));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Parameter("parallelism must be at least 1".into()));
        }
        if let Some(l) = self.penalty {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Parameter(format!("penalty {l} must be finite and nonnegative")));
            }
        }
        match self.model {
            ModelKind::ErdosRenyi if self.grid.p.is_empty() => {
                return Err(Error::Parameter("ER grid needs at least one p".into()))
            }
            ModelKind::GaussianWigner if !self.grid.p.is_empty() => {
                return Err(Error::Parameter("Gaussian grid must not list p".into()))
            }
            _ => {}
        }
        for pt in self.points() {
            pt.params.validate()?;
            if pt.params.m == 0 {
                return Err(Error::Parameter("m must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Grid points in output order: `n`, then `p`, then `rho`, then `m`.
    pub fn points(&self) -> Vec<TrialPoint> {
        let ps: Vec<Option<f64>> = match self.model {
            ModelKind::ErdosRenyi => self.grid.p.iter().map(|&p| Some(p)).collect(),
            ModelKind::GaussianWigner => vec![None],
        };
        let budget = self.budget();
        let mut out = Vec::new();
        for &n in &self.grid.n {
            for &p in &ps {
                for &rho in &self.grid.rho {
                    for &m in &self.grid.m {
                        let params = ModelParams { n, m, p, rho, model: self.model };
                        out.push(TrialPoint {
                            id: out.len(),
                            params,
                            score: self.score.unwrap_or_else(|| default_score(self.model, rho)),
                            delta: self.delta,
                            budget,
                            penalty: self.penalty,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Product score, except squared differences for Gaussian correlations in
/// the strong-signal regime.
pub fn default_score(model: ModelKind, rho: f64) -> ScoreKind {
    match model {
        ModelKind::GaussianWigner if rho > gaussian_regime_boundary() => {
            ScoreKind::NegHalfSquaredDiff
        }
        _ => ScoreKind::Product,
    }
}

/// One grid point with everything a trial needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialPoint {
    pub id: usize,
    pub params: ModelParams,
    pub score: ScoreKind,
    pub delta: f64,
    pub budget: u128,
    pub penalty: Option<f64>,
}

impl TrialPoint {
    /// Hash of the point's parameters (not its grid position).
    pub fn hash(&self) -> u64 {
        let p = &self.params;
        derive_seed(
            0x70_6f_69_6e_74,
            &[
                p.model as u64,
                p.n as u64,
                p.m as u64,
                p.p.map_or(u64::MAX, f64::to_bits),
                p.rho.to_bits(),
                self.score as u64,
                self.penalty.map_or(u64::MAX, f64::to_bits),
            ],
        )
    }

    pub fn trial_seed(&self, master: u64, trial: usize) -> u64 {
        derive_seed(master, &[self.hash(), trial as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point_id: usize,
    pub trial: usize,
    pub seed: u64,
    /// Truth vertices mapped correctly.
    pub correct: usize,
    pub overlap: f64,
    pub distance: usize,
    pub exact_success: bool,
    pub partial_success: bool,
    pub score: f64,
    pub wall_time: f64,
}

/// Samples an instance from `trial_seed` and aligns it.
pub fn run_trial(point: &TrialPoint, trial: usize, trial_seed: u64) -> Result<TrialRecord> {
    let start = Instant::now();
    let p = &point.params;
    let needed = injection_count(p.n, p.n, p.m);
    if needed > point.budget {
        return Err(Error::Budget { what: "trial search space", needed, budget: point.budget });
    }
    let inst = sample_instance(p, trial_seed)?;
    let res = match point.penalty {
        Some(lambda) => penalized_align(&inst.g1, &inst.g2, lambda, point.score, Some(p.rho), p.n, point.budget)?,
        None => BranchAndBound::new(&inst.g1, &inst.g2, p.m, point.score, Some(p.rho))?
            .budget(point.budget)
            .seed(inst.truth.clone())
            .run()?,
    };
    let ov = overlap(&inst.truth, &res.mapping)?;
    let dist = distance(&inst.truth, &res.mapping)?;
    let correct = p.m - dist;
    Ok(TrialRecord {
        point_id: point.id,
        trial,
        seed: trial_seed,
        correct,
        overlap: ov,
        distance: dist,
        exact_success: correct == p.m,
        partial_success: ov >= point.delta,
        score: res.score,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Aggregated outcome of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point_id: usize,
    pub model: ModelKind,
    pub score: ScoreKind,
    pub n: usize,
    pub m: usize,
    pub p: Option<f64>,
    pub rho: f64,
    pub delta: f64,
    /// Completed trials.
    pub trials: usize,
    /// Trials that hit a resource or parameter error.
    pub skipped: usize,
    pub partial_successes: usize,
    pub partial_rate: f64,
    pub partial_lo: f64,
    pub partial_hi: f64,
    pub exact_successes: usize,
    pub exact_rate: f64,
    pub exact_lo: f64,
    pub exact_hi: f64,
    pub mean_overlap: f64,
    pub threshold: Option<f64>,
    pub threshold_ratio: Option<f64>,
    /// First error message among skipped trials.
    pub note: String,
}

/// Wilson score interval, clamped to `[0, 1]`. With no trials the interval
/// is `[0, 1]`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let ph = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (ph + z2 / (2.0 * n)) / denom;
    let half = z * (ph * (1.0 - ph) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, ph) };
    let hi = if successes == trials { 1.0 } else { (center + half).clamp(ph, 1.0) };
    (lo, hi)
}

/// Recovery threshold at a point: the partial-recovery threshold for ER and
/// the unified threshold for Gaussian. `None` when it is undefined or
/// infinite.
pub fn point_threshold(params: &ModelParams, delta: f64) -> Option<f64> {
    let n = params.n as f64;
    let t = match params.model {
        ModelKind::ErdosRenyi => partial_threshold_er(n, params.p?, params.rho, delta.min(0.999_999)),
        ModelKind::GaussianWigner => gaussian_threshold(n, params.rho, default_c2(DEFAULT_C0)),
    };
    t.ok().filter(|t| t.is_finite())
}

/// Commutative per-point accumulator.
#[derive(Clone, Debug, Default)]
struct Tally {
    trials: usize,
    skipped: usize,
    partial: usize,
    exact: usize,
    correct: usize,
    note: Option<(usize, String)>,
}

impl Tally {
    fn add(&mut self, trial: usize, r: &Result<TrialRecord>) {
        match r {
            Ok(rec) => {
                self.trials += 1;
                self.partial += rec.partial_success as usize;
                self.exact += rec.exact_success as usize;
                self.correct += rec.correct;
            }
            Err(e) => {
                self.skipped += 1;
                // keep the message of the lowest trial index
                if self.note.as_ref().map_or(true, |(t, _)| trial < *t) {
                    self.note = Some((trial, e.to_string()));
                }
            }
        }
    }

    fn row(&self, pt: &TrialPoint) -> SummaryRow {
        let p = &pt.params;
        let (pl, ph) = wilson_interval(self.partial, self.trials, Z95);
        let (el, eh) = wilson_interval(self.exact, self.trials, Z95);
        let rate = |k: usize| if self.trials == 0 { 0.0 } else { k as f64 / self.trials as f64 };
        let threshold = point_threshold(p, pt.delta);
        SummaryRow {
            point_id: pt.id,
            model: p.model,
            score: pt.score,
            n: p.n,
            m: p.m,
            p: p.p,
            rho: p.rho,
            delta: pt.delta,
            trials: self.trials,
            skipped: self.skipped,
            partial_successes: self.partial,
            partial_rate: rate(self.partial),
            partial_lo: pl,
            partial_hi: ph,
            exact_successes: self.exact,
            exact_rate: rate(self.exact),
            exact_lo: el,
            exact_hi: eh,
            mean_overlap: if self.trials == 0 {
                0.0
            } else {
                self.correct as f64 / (self.trials * p.m) as f64
            },
            threshold,
            threshold_ratio: threshold.map(|t| p.m as f64 / t),
            note: self.note.as_ref().map(|(_, s)| s.clone()).unwrap_or_default(),
        }
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j);
    }
    let pool = b.build().map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every trial of every grid point. Trial failures are counted per row
/// and never abort the sweep.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SummaryRow>> {
    config.validate()?;
    let points = config.points();
    for pt in &points {
        let needed = injection_count(pt.params.n, pt.params.n, pt.params.m);
        if needed > pt.budget {
            warn!(
                "point {} (n={}, m={}) needs {needed} > budget {}; its trials will be skipped",
                pt.id, pt.params.n, pt.params.m, pt.budget
            );
        }
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..config.trials_per_point).map(move |t| (i, t)))
        .collect();
    info!("sweep: {} points x {} trials", points.len(), config.trials_per_point);
    let master = config.master_seed;
    let results: Vec<Result<TrialRecord>> = with_pool(config.parallelism, || {
        jobs.par_iter()
            .map(|&(i, t)| {
                let pt = &points[i];
                run_trial(pt, t, pt.trial_seed(master, t))
            })
            .collect()
    })?;
    let mut tallies = vec![Tally::default(); points.len()];
    for (&(i, t), r) in jobs.iter().zip(&results) {
        tallies[i].add(t, r);
    }
    Ok(points.iter().zip(&tallies).map(|(pt, t)| t.row(pt)).collect())
}

/// Setup of a phase-transition experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub model: ModelKind,
    pub n: usize,
    #[serde(default)]
    pub p: Option<f64>,
    pub rho: Vec<f64>,
    pub m: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub score: Option<ScoreKind>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub parallelism: Option<usize>,
}

impl PhaseSpec {
    pub fn to_sweep(&self) -> SweepConfig {
        SweepConfig {
            model: self.model,
            score: self.score,
            grid: Grid {
                n: vec![self.n],
                m: self.m.clone(),
                p: self.p.into_iter().collect(),
                rho: self.rho.clone(),
            },
            trials_per_point: self.trials,
            delta: self.delta,
            master_seed: self.seed,
            budget: self.budget,
            parallelism: self.parallelism,
            penalty: None,
        }
    }
}

/// Empirical 50% crossing of a success rate along `m` for one correlation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub rho: f64,
    /// Smallest grid `m` whose exact rate reaches one half.
    pub exact_first_m: Option<usize>,
    /// Linear interpolation between that grid `m` and its predecessor.
    pub exact_m: Option<f64>,
    pub partial_first_m: Option<usize>,
    pub partial_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub rows: Vec<SummaryRow>,
    pub crossings: Vec<Crossing>,
}

impl PhaseResult {
    /// True when the exact-recovery crossing does not increase with `rho`
    /// (a missing crossing counts as beyond the grid).
    pub fn exact_crossing_nonincreasing(&self) -> bool {
        nonincreasing(self.crossings.iter().map(|c| c.exact_m))
    }

    pub fn partial_crossing_nonincreasing(&self) -> bool {
        nonincreasing(self.crossings.iter().map(|c| c.partial_m))
    }

    pub fn row(&self, rho: f64, m: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.rho == rho && r.m == m)
    }
}

fn nonincreasing(xs: impl Iterator<Item = Option<f64>>) -> bool {
    let v: Vec<f64> = xs.map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.windows(2).all(|w| w[1] <= w[0])
}

/// First crossing of `level` by `rates` along `ms`; interpolates linearly
/// from the preceding grid point.
pub fn crossing_point(ms: &[usize], rates: &[f64], level: f64) -> Option<(usize, f64)> {
    let i = rates.iter().position(|&r| r >= level)?;
    if i == 0 {
        return Some((ms[0], ms[0] as f64));
    }
    let (m0, m1) = (ms[i - 1] as f64, ms[i] as f64);
    let (r0, r1) = (rates[i - 1], rates[i]);
    Some((ms[i], m0 + (level - r0) / (r1 - r0) * (m1 - m0)))
}

/// Sweeps `m` for each correlation and locates the 50% crossings.
pub fn phase_transition_experiment(spec: &PhaseSpec) -> Result<PhaseResult> {
    let mut ms = spec.m.clone();
    ms.sort_unstable();
    ms.dedup();
    let spec = PhaseSpec { m: ms.clone(), ..spec.clone() };
    let rows = sweep(&spec.to_sweep())?;
    let mut crossings = Vec::new();
    for &rho in &spec.rho {
        let sel: Vec<&SummaryRow> = rows.iter().filter(|r| r.rho == rho).collect();
        let exact: Vec<f64> = sel.iter().map(|r| r.exact_rate).collect();
        let partial: Vec<f64> = sel.iter().map(|r| r.partial_rate).collect();
        let ce = crossing_point(&ms, &exact, 0.5);
        let cp = crossing_point(&ms, &partial, 0.5);
        crossings.push(Crossing {
            rho,
            exact_first_m: ce.map(|c| c.0),
            exact_m: ce.map(|c| c.1),
            partial_first_m: cp.map(|c| c.0),
            partial_m: cp.map(|c| c.1),
        });
    }
    Ok(PhaseResult { rows, crossings })
}
