//! Moment and cumulant generating functions of per-component score sums.
//!
//! A path of length `l` carries the chain `A_0, B_1, A_1, ..., A_{l-1}, B_l`
//! where each interior pair `(A_i, B_i)` is correlated, `A_0` and `B_l` are
//! marginal, and the score is `sum_i f(A_{i-1}, B_i)`. A cycle closes the
//! chain with `B_0 = B_l`, so every `(A_i, B_i)` with `i < l` is correlated.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::correlated_bernoulli_pmf;

/// Edge score function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    /// `f(x, y) = x y`
    #[serde(rename = "product")]
    Product,
    /// `f(x, y) = -(x - y)^2 / 2`
    #[serde(rename = "sqdiff")]
    NegHalfSquaredDiff,
    /// `f(x, y) = -(rho / 2)(x^2 + y^2) + x y`
    #[serde(rename = "mle")]
    MleGauss,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Product => "product",
            ScoreKind::NegHalfSquaredDiff => "sqdiff",
            ScoreKind::MleGauss => "mle",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(ScoreKind::Product),
            "sqdiff" => Ok(ScoreKind::NegHalfSquaredDiff),
            "mle" => Ok(ScoreKind::MleGauss),
            _ => Err(Error::Parameter(format!("unknown score '{s}'"))),
        }
    }
}

/// A score kind bound to the correlation it needs (MLE only).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreFn {
    kind: ScoreKind,
    half_rho: f64,
}

impl ScoreFn {
    pub fn new(kind: ScoreKind, rho: Option<f64>) -> Result<Self> {
        let half_rho = match (kind, rho) {
            (ScoreKind::MleGauss, Some(r)) if r.is_finite() => r / 2.0,
            (ScoreKind::MleGauss, _) => {
                return Err(Error::Parameter("the MLE score needs rho".into()))
            }
            _ => 0.0,
        };
        Ok(ScoreFn { kind, half_rho })
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            ScoreKind::Product => x * y,
            ScoreKind::NegHalfSquaredDiff => {
                let d = x - y;
                -0.5 * d * d
            }
            ScoreKind::MleGauss => x * y - self.half_rho * (x * x + y * y),
        }
    }

    /// Maximizer of `y -> eval(x, y)` when it is strictly concave; `None`
    /// when the maximum over any interval sits at an endpoint.
    #[inline]
    pub(crate) fn peak(&self, x: f64) -> Option<f64> {
        match self.kind {
            ScoreKind::Product => None,
            ScoreKind::NegHalfSquaredDiff => Some(x),
            ScoreKind::MleGauss if self.half_rho > 0.0 => Some(x / (2.0 * self.half_rho)),
            ScoreKind::MleGauss => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CumulantModel {
    #[serde(rename = "er")]
    Er,
    #[serde(rename = "gaussian")]
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentShape {
    Path,
    Cycle,
}

impl ComponentShape {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentShape::Path => "path",
            ComponentShape::Cycle => "cycle",
        }
    }
}

/// One evaluation point of a component cumulant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantQuery {
    pub model: CumulantModel,
    pub score: ScoreKind,
    pub t: f64,
    pub ell: usize,
    /// Edge probability; ignored for the Gaussian model.
    pub p: f64,
    pub rho: f64,
}

impl CumulantQuery {
    pub fn er(p: f64, rho: f64, t: f64, ell: usize) -> Self {
        CumulantQuery { model: CumulantModel::Er, score: ScoreKind::Product, t, ell, p, rho }
    }

    pub fn gaussian(score: ScoreKind, rho: f64, t: f64, ell: usize) -> Self {
        CumulantQuery { model: CumulantModel::Gaussian, score, t, ell, p: 0.0, rho }
    }

    pub fn with_ell(self, ell: usize) -> Self {
        CumulantQuery { ell, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::domain("component length must be at least 1"));
        }
        match (self.model, self.score) {
            (CumulantModel::Er, ScoreKind::Product) => check_er(self.p, self.rho, self.t),
            (CumulantModel::Gaussian, ScoreKind::Product) => check_gauss_product(self.rho, self.t),
            (CumulantModel::Gaussian, ScoreKind::NegHalfSquaredDiff) => {
                check_gauss_sq(self.rho, self.t)
            }
            (m, s) => Err(Error::domain(format!("no closed form for {m:?} with {s:?}"))),
        }
    }
}

fn check_er(p: f64, rho: f64, t: f64) -> Result<()> {
    correlated_bernoulli_pmf(p, rho)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("tilt t = {t} must be positive")));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho = {rho} outside [0, 1]")));
    }
    Ok(())
}

/// Margin kept from the product-score pole at `t = 1/(1+rho)`.
pub const PRODUCT_POLE_MARGIN: f64 = 1e-9;

fn check_gauss_product(rho: f64, t: f64) -> Result<()> {
    check_rho(rho)?;
    let bound = 1.0 / (1.0 + rho);
    if !(t > 0.0 && t < bound - PRODUCT_POLE_MARGIN) {
        return Err(Error::domain(format!("tilt t = {t} outside (0, {bound}) for rho = {rho}")));
    }
    Ok(())
}

fn check_gauss_sq(rho: f64, t: f64) -> Result<()> {
    check_rho(rho)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("tilt t = {t} must be positive")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Erdős–Rényi, product score

/// Trace and determinant of the 2x2 transfer matrix.
pub fn er_transfer_matrix(p: f64, rho: f64, t: f64) -> Result<(f64, f64)> {
    check_er(p, rho, t)?;
    let (_, _, _, p11) = correlated_bernoulli_pmf(p, rho)?;
    let em1 = t.exp_m1();
    Ok((1.0 + p11 * em1, rho * p * (1.0 - p) * em1))
}

const CONFLUENT_EPS: f64 = 1e-14;

/// `ln(a1 l1^ell + a2 l2^ell)` with `l1 >= |l2|`, `l1 > 0`, evaluated without
/// overflow.
fn log_two_term(a1: f64, l1: f64, a2: f64, l2: f64, ell: usize) -> f64 {
    let e = ell as f64;
    let ratio = (l2 / l1).powi(ell as i32);
    a1.ln() + e * l1.ln() + (a2 / a1 * ratio).ln_1p()
}

/// Eigen-data of the ER transfer matrix: `Some((l1, l2))` or `None` when the
/// discriminant collapses numerically.
fn er_eigen(tr: f64, det: f64) -> Option<(f64, f64, f64)> {
    let disc = tr * tr - 4.0 * det;
    if disc.abs() < CONFLUENT_EPS {
        return None;
    }
    assert!(disc > 0.0, "transfer matrix discriminant must be positive");
    let s = disc.sqrt();
    let l1 = (tr + s) / 2.0;
    Some((l1, det / l1, s))
}

/// Log-MGF of a path of `ell` edges.
pub fn er_path_log_mgf(p: f64, rho: f64, t: f64, ell: usize) -> Result<f64> {
    let (tr, det) = er_transfer_matrix(p, rho, t)?;
    let m1 = 1.0 + p * p * t.exp_m1();
    Ok(match er_eigen(tr, det) {
        Some((l1, l2, s)) => {
            let a1 = 0.5 + (2.0 * m1 - tr) / (2.0 * s);
            let a2 = 0.5 - (2.0 * m1 - tr) / (2.0 * s);
            log_two_term(a1, l1, a2, l2, ell)
        }
        None => {
            let l = tr / 2.0;
            (1.0 + ell as f64 * (m1 / l - 1.0)).ln() + ell as f64 * l.ln()
        }
    })
}

/// Log-MGF of a cycle of `ell` edges.
pub fn er_cycle_log_mgf(p: f64, rho: f64, t: f64, ell: usize) -> Result<f64> {
    let (tr, det) = er_transfer_matrix(p, rho, t)?;
    Ok(match er_eigen(tr, det) {
        Some((l1, l2, _)) => log_two_term(1.0, l1, 1.0, l2, ell),
        None => std::f64::consts::LN_2 + ell as f64 * (tr / 2.0).ln(),
    })
}

pub fn er_path_mgf(p: f64, rho: f64, t: f64, ell: usize) -> Result<f64> {
    require_ell(ell)?;
    er_path_log_mgf(p, rho, t, ell).map(f64::exp)
}

pub fn er_cycle_mgf(p: f64, rho: f64, t: f64, ell: usize) -> Result<f64> {
    require_ell(ell)?;
    er_cycle_log_mgf(p, rho, t, ell).map(f64::exp)
}

fn require_ell(ell: usize) -> Result<()> {
    if ell == 0 {
        Err(Error::domain("component length must be at least 1"))
    } else {
        Ok(())
    }
}

/// Largest component length accepted by the exhaustive ER oracle.
pub const BRUTE_FORCE_MAX_ELL: usize = 12;

/// Exhaustive ER oracle: sums over all B-chain configurations and integrates
/// each `A_{i-1}` against its conditional law given `B_{i-1}`.
pub fn brute_force_er_component_mgf(
    p: f64,
    rho: f64,
    t: f64,
    ell: usize,
    shape: ComponentShape,
) -> Result<f64> {
    check_er(p, rho, t)?;
    require_ell(ell)?;
    if ell > BRUTE_FORCE_MAX_ELL {
        return Err(Error::Resource(format!(
            "oracle length {ell} exceeds {BRUTE_FORCE_MAX_ELL}"
        )));
    }
    let (p00, p01, p10, p11) = correlated_bernoulli_pmf(p, rho)?;
    let marg = [1.0 - p, p];
    // P(A = 1 | B = b): joint cells are indexed (a, b).
    let a1_given_b = [p10 / (p00 + p10), p11 / (p01 + p11)];
    let et = t.exp();
    // E[exp(t A b_i) | B_{i-1} = b_prev]
    let cond = |b_prev: usize, b_i: usize| -> f64 {
        if b_i == 0 {
            1.0
        } else {
            let q = a1_given_b[b_prev];
            1.0 - q + q * et
        }
    };
    let mut total = 0.0;
    match shape {
        ComponentShape::Path => {
            for mask in 0u32..(1 << (ell + 1)) {
                let b = |i: usize| ((mask >> i) & 1) as usize;
                let mut w = 1.0;
                for i in 0..=ell {
                    w *= marg[b(i)];
                }
                for i in 1..=ell {
                    w *= cond(b(i - 1), b(i));
                }
                total += w;
            }
        }
        ComponentShape::Cycle => {
            for mask in 0u32..(1 << ell) {
                // indices 0..ell, with B_ell identified with B_0
                let b = |i: usize| ((mask >> (i % ell)) & 1) as usize;
                let mut w = 1.0;
                for i in 0..ell {
                    w *= marg[b(i)];
                }
                for i in 1..=ell {
                    w *= cond(b(i - 1), b(i));
                }
                total += w;
            }
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Gaussian, product score

/// Roots `(l1, l2)` of `x^2 - s x + q` with `l1 >= l2`, `l2 = q / l1`.
fn quadratic_roots(s: f64, q: f64) -> (f64, f64) {
    let disc = (s * s - 4.0 * q).max(0.0);
    let l1 = (s + disc.sqrt()) / 2.0;
    (l1, if l1 > 0.0 { q / l1 } else { 0.0 })
}

/// Threshold above which determinant recursions switch to log space.
const LOG_SPACE_ELL: usize = 50;

/// Log-MGF of a path under the product score.
pub fn gauss_product_path_log_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    check_gauss_product(rho, t)?;
    require_ell(ell)?;
    let a = 1.0 - t * t * (1.0 - rho * rho);
    let q = t * t * rho * rho;
    let log_det = if ell <= LOG_SPACE_ELL {
        let (mut d2, mut d1) = (1.0, 1.0 - t * t);
        for _ in 2..=ell {
            let d = a * d1 - q * d2;
            d2 = d1;
            d1 = d;
        }
        if d1 <= 0.0 {
            return Err(Error::Verification(format!("det W_{ell} = {d1} not positive")));
        }
        d1.ln()
    } else {
        // ratios r_k = det_k / det_{k-1} obey r_k = a - q / r_{k-1}
        let mut r = 1.0 - t * t;
        let mut acc = r.ln();
        for _ in 2..=ell {
            r = a - q / r;
            if r <= 0.0 {
                return Err(Error::Verification("determinant ratio not positive".into()));
            }
            acc += r.ln();
        }
        acc
    };
    Ok(-0.5 * log_det)
}

/// `-ln(l1^{ell/2} - l2^{ell/2})`, stable for large `ell`.
fn neg_log_sqrt_diff(l1: f64, l2: f64, ell: usize) -> Result<f64> {
    let half = ell as f64 / 2.0;
    let ratio = (l2 / l1).powf(half);
    if !(ratio < 1.0) {
        return Err(Error::Verification("degenerate cycle determinant".into()));
    }
    Ok(-(half * l1.ln() + (-ratio).ln_1p()))
}

/// Log-MGF of a cycle under the product score.
pub fn gauss_product_cycle_log_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    check_gauss_product(rho, t)?;
    require_ell(ell)?;
    let (l1, l2) = quadratic_roots(1.0 - t * t * (1.0 - rho * rho), t * t * rho * rho);
    neg_log_sqrt_diff(l1, l2, ell)
}

pub fn gauss_product_path_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    gauss_product_path_log_mgf(rho, t, ell).map(f64::exp)
}

pub fn gauss_product_cycle_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    gauss_product_cycle_log_mgf(rho, t, ell).map(f64::exp)
}

// ---------------------------------------------------------------------------
// Gaussian, negative half squared difference

fn sq_roots(rho: f64, t: f64) -> (f64, f64, f64) {
    let s = 1.0 + 2.0 * t;
    let q = t * t * rho * rho;
    let (l1, l2) = quadratic_roots(s, q);
    (l1, l2, (s * s - 4.0 * q).sqrt())
}

pub fn gauss_sq_path_log_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    check_gauss_sq(rho, t)?;
    require_ell(ell)?;
    let (l1, l2, root) = sq_roots(rho, t);
    let a1 = 0.5 + (1.0 + 2.0 * t) / (2.0 * root);
    let a2 = 1.0 - a1;
    Ok(-0.5 * log_two_term(a1, l1, a2, l2, ell))
}

pub fn gauss_sq_cycle_log_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    check_gauss_sq(rho, t)?;
    require_ell(ell)?;
    let (l1, l2, _) = sq_roots(rho, t);
    neg_log_sqrt_diff(l1, l2, ell)
}

pub fn gauss_sq_path_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    gauss_sq_path_log_mgf(rho, t, ell).map(f64::exp)
}

pub fn gauss_sq_cycle_mgf(rho: f64, t: f64, ell: usize) -> Result<f64> {
    gauss_sq_cycle_log_mgf(rho, t, ell).map(f64::exp)
}

// ---------------------------------------------------------------------------
// Dispatch and bounds

/// Cumulant generating function of a path or cycle component.
pub fn kappa(q: &CumulantQuery, shape: ComponentShape) -> Result<f64> {
    q.validate()?;
    match (q.model, q.score, shape) {
        (CumulantModel::Er, _, ComponentShape::Path) => er_path_log_mgf(q.p, q.rho, q.t, q.ell),
        (CumulantModel::Er, _, ComponentShape::Cycle) => er_cycle_log_mgf(q.p, q.rho, q.t, q.ell),
        (CumulantModel::Gaussian, ScoreKind::Product, ComponentShape::Path) => {
            gauss_product_path_log_mgf(q.rho, q.t, q.ell)
        }
        (CumulantModel::Gaussian, ScoreKind::Product, ComponentShape::Cycle) => {
            gauss_product_cycle_log_mgf(q.rho, q.t, q.ell)
        }
        (CumulantModel::Gaussian, _, ComponentShape::Path) => {
            gauss_sq_path_log_mgf(q.rho, q.t, q.ell)
        }
        (CumulantModel::Gaussian, _, ComponentShape::Cycle) => {
            gauss_sq_cycle_log_mgf(q.rho, q.t, q.ell)
        }
    }
}

/// Closed-form MGF (`exp` of [`kappa`]).
pub fn component_mgf(q: &CumulantQuery, shape: ComponentShape) -> Result<f64> {
    kappa(q, shape).map(f64::exp)
}

/// Upper bound `(E/2) k2 + L (k1 - k2/2)` on the log-MGF of a score sum over
/// `total_edges` edges decomposed with `self_loops` self-loops.
pub fn chain_upper_bound(total_edges: usize, self_loops: usize, q: &CumulantQuery) -> Result<f64> {
    if self_loops > total_edges {
        return Err(Error::domain("more self-loops than edges"));
    }
    let k1 = kappa(&q.with_ell(1), ComponentShape::Cycle)?;
    let k2 = kappa(&q.with_ell(2), ComponentShape::Cycle)?;
    Ok(total_edges as f64 / 2.0 * k2 + self_loops as f64 * (k1 - 0.5 * k2))
}

/// Outcome of checking the cumulant inequality chain over a grid.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ChainReport {
    pub checks: usize,
    /// Most negative slack seen (0 when every inequality holds with room).
    pub worst_slack: f64,
    pub failures: Vec<String>,
}

impl ChainReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerance on the inequality slack.
pub const CHAIN_TOLERANCE: f64 = 1e-12;

/// Checks `kP_1 <= kC_2/2 <= kC_1` and `kP_l <= kC_l <= (l/2) kC_2` for
/// `l = 2..=max_ell` at each query (the query's own `ell` is ignored).
/// `perturb_c2` is added to `kC_2` wherever it appears as a bound, for fault
/// injection; a negative value breaks `kC_2 <= kC_2`.
pub fn verify_kappa_chain(
    grid: &[CumulantQuery],
    max_ell: usize,
    perturb_c2: f64,
) -> Result<ChainReport> {
    let mut rep = ChainReport::default();
    for q in grid {
        let kp = |l| kappa(&q.with_ell(l), ComponentShape::Path);
        let kc = |l| kappa(&q.with_ell(l), ComponentShape::Cycle);
        let c1 = kc(1)?;
        let c2 = kc(2)? + perturb_c2;
        let mut check = |name: String, lo: f64, hi: f64| {
            let slack = hi - lo;
            rep.checks += 1;
            rep.worst_slack = rep.worst_slack.min(slack);
            if !(slack >= -CHAIN_TOLERANCE) {
                rep.failures.push(format!("{name} at {q:?}: slack {slack:e}"));
            }
        };
        check("kP1 <= kC2/2".into(), kp(1)?, 0.5 * c2);
        check("kC2/2 <= kC1".into(), 0.5 * c2, c1);
        for l in 2..=max_ell {
            let (p, c) = (kp(l)?, kc(l)?);
            check(format!("kP{l} <= kC{l}"), p, c);
            check(format!("kC{l} <= {l}/2 kC2"), c, l as f64 / 2.0 * c2);
        }
    }
    Ok(rep)
}

/// Standard ER grid used by the verification suite.
pub fn default_er_grid() -> Vec<CumulantQuery> {
    let mut g = Vec::new();
    for &p in &[0.1, 0.3, 0.5] {
        for &rho in &[0.1, 0.5, 0.9] {
            for &t in &[0.1, 0.5, 1.0] {
                g.push(CumulantQuery::er(p, rho, t, 1));
            }
        }
    }
    g
}

/// Gaussian product grid, including tilts close to the pole.
pub fn default_gauss_product_grid() -> Vec<CumulantQuery> {
    let mut g = Vec::new();
    for &rho in &[0.1, 0.5, 0.9, 0.99] {
        for &frac in &[0.1, 0.5, 0.9] {
            g.push(CumulantQuery::gaussian(ScoreKind::Product, rho, frac / (1.0 + rho), 1));
        }
    }
    g
}

/// Gaussian squared-difference grid.
pub fn default_gauss_sq_grid() -> Vec<CumulantQuery> {
    let mut g = Vec::new();
    for &rho in &[0.1, 0.5, 0.9, 0.99, 1.0] {
        for &t in &[0.5, 2.0, 10.0] {
            g.push(CumulantQuery::gaussian(ScoreKind::NegHalfSquaredDiff, rho, t, 1));
        }
    }
    g
}

/// Monte Carlo estimate `(mean, standard error)` of `E exp(t S)` for a
/// freshly sampled chain or cycle.
pub fn monte_carlo_component_mgf<R: Rng + ?Sized>(
    q: &CumulantQuery,
    shape: ComponentShape,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    q.validate()?;
    if samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let ell = q.ell;
    let f = ScoreFn::new(q.score, Some(q.rho))?;
    let mut a = vec![0.0; ell];
    let mut b = vec![0.0; ell + 1];
    let mut draw_pair: Box<dyn FnMut(&mut R) -> (f64, f64)> = match q.model {
        CumulantModel::Er => {
            let (p00, p01, p10, _) = correlated_bernoulli_pmf(q.p, q.rho)?;
            Box::new(move |r: &mut R| {
                let u: f64 = r.random();
                if u < p00 {
                    (0.0, 0.0)
                } else if u < p00 + p01 {
                    (0.0, 1.0)
                } else if u < p00 + p01 + p10 {
                    (1.0, 0.0)
                } else {
                    (1.0, 1.0)
                }
            })
        }
        CumulantModel::Gaussian => {
            let rho = q.rho;
            let s = (1.0 - rho * rho).sqrt();
            Box::new(move |r: &mut R| {
                let x: f64 = r.sample(StandardNormal);
                let z: f64 = r.sample(StandardNormal);
                (x, rho * x + s * z)
            })
        }
    };
    // Welford accumulation
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        for i in 0..ell {
            let (x, y) = draw_pair(rng);
            a[i] = x;
            b[i] = y;
        }
        match shape {
            // A_0's partner B_0 is auxiliary; B_ell is a fresh marginal draw.
            ComponentShape::Path => b[ell] = draw_pair(rng).1,
            ComponentShape::Cycle => b[ell] = b[0],
        }
        let s: f64 = (1..=ell).map(|i| f.eval(a[i - 1], b[i])).sum();
        let x = (q.t * s).exp();
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok((mean, (var / samples as f64).sqrt()))
}
