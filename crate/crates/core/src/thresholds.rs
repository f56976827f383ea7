//! Closed-form thresholds, tail bounds, counting bounds and Fano machinery.
//!
//! Every probability bound is returned as a natural logarithm; callers
//! exponentiate (and clamp) only when reporting.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{correlated_bernoulli_pmf, ModelKind};

/// `(1 + g) ln(1 + g) - g`.
pub fn phi(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("phi needs gamma >= 0, got {gamma}")));
    }
    Ok(one_plus_log_excess(gamma))
}

/// `(1 + r) ln(1 + r) - r` for `r >= -1`, by its Taylor series near zero
/// where the direct form cancels.
fn one_plus_log_excess(r: f64) -> f64 {
    if r.abs() < 0.05 {
        let (mut term, mut sum) = (r, 0.0);
        for k in 2..24 {
            term *= -r;
            sum += term / (k * (k - 1)) as f64;
        }
        -sum
    } else if r == -1.0 {
        1.0
    } else {
        (1.0 + r) * r.ln_1p() - r
    }
}

/// Natural-log binary entropy with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.ln() - (1.0 - x) * (-x).ln_1p())
}

/// ER signal parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignalParams {
    pub gamma: f64,
    pub phi_gamma: f64,
    pub p11: f64,
}

impl SignalParams {
    pub fn new(p: f64, rho: f64) -> Result<Self> {
        let (_, _, _, p11) = correlated_bernoulli_pmf(p, rho)?;
        let gamma = rho * (1.0 - p) / p;
        Ok(SignalParams { gamma, phi_gamma: phi(gamma)?, p11 })
    }
}

fn check_er_strict(p: f64, rho: f64) -> Result<()> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::domain(format!("p = {p} outside (0, 1/2]")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain(format!("rho = {rho} outside [0, 1)")));
    }
    Ok(())
}

fn check_unit_open(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!("rho = {rho} outside (0, 1)")));
    }
    Ok(())
}

fn check_n(n: f64) -> Result<()> {
    if !(n >= 1.0) {
        return Err(Error::domain(format!("n = {n} must be at least 1")));
    }
    Ok(())
}

/// `c1(delta) = max(100, 200 h(1 - delta) / (1 - delta))`.
pub fn c1(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(100f64.max(200.0 * binary_entropy(1.0 - delta)? / (1.0 - delta)))
}

/// Exact-recovery constant for the ER model.
pub const C1_EXACT: f64 = 3000.0;
/// Strong-signal Gaussian constant.
pub const C4_GAUSS: f64 = 100.0;
/// Default Hanson–Wright constant.
pub const DEFAULT_C0: f64 = 1.0;

/// Weak-signal Gaussian constant `max(25 c0^2, 1100)`.
pub fn c3_gauss(c0: f64) -> f64 {
    (25.0 * c0 * c0).max(1100.0)
}

/// Default unification constant for the Gaussian threshold.
pub fn default_c2(c0: f64) -> f64 {
    c3_gauss(c0).max(C4_GAUSS)
}

/// Correlation above which the Gaussian analysis switches regimes.
pub fn gaussian_regime_boundary() -> f64 {
    1.0 - (-12.0f64).exp()
}

/// Partial-recovery threshold `c1(delta) ln n / (p^2 phi(gamma))`.
pub fn partial_threshold_er(n: f64, p: f64, rho: f64, delta: f64) -> Result<f64> {
    check_n(n)?;
    check_er_strict(p, rho)?;
    let sp = SignalParams::new(p, rho)?;
    if sp.phi_gamma == 0.0 {
        warn!("gamma = 0: partial-recovery threshold is infinite");
        return Ok(f64::INFINITY);
    }
    Ok(c1(delta)? * n.ln() / (p * p * sp.phi_gamma))
}

/// The two terms of the exact-recovery threshold, before the constant.
pub fn exact_threshold_terms(n: f64, p: f64, rho: f64) -> Result<(f64, Option<f64>)> {
    check_n(n)?;
    check_er_strict(p, rho)?;
    let sp = SignalParams::new(p, rho)?;
    if sp.gamma == 0.0 {
        return Ok((f64::INFINITY, None));
    }
    let first = n.ln() / (p * p * sp.phi_gamma);
    let x = p * p * sp.gamma;
    let second = if x >= 1.0 {
        warn!("p^2 gamma = {x} >= 1: dropping the logarithmic term");
        None
    } else {
        Some((1.0 / x).ln() / x)
    };
    Ok((first, second))
}

/// Exact-recovery threshold `3000 max(ln n/(p^2 phi), ln(1/(p^2 g))/(p^2 g))`.
pub fn exact_threshold_er(n: f64, p: f64, rho: f64) -> Result<f64> {
    let (a, b) = exact_threshold_terms(n, p, rho)?;
    Ok(C1_EXACT * b.map_or(a, |b| a.max(b)))
}

/// Gaussian threshold `C2 max(ln n / ln(1/(1-rho^2)), 1)`.
pub fn gaussian_threshold(n: f64, rho: f64, c2: f64) -> Result<f64> {
    check_n(n)?;
    check_unit_open(rho)?;
    let info = -(-rho * rho).ln_1p();
    Ok(c2 * (n.ln() / info).max(1.0))
}

/// `N_k = C(m,2) - C(m-k,2)`.
pub fn n_k(m: u64, k: u64) -> Result<u64> {
    if k > m {
        return Err(Error::domain(format!("k = {k} exceeds m = {m}")));
    }
    let c2 = |x: u64| x * x.saturating_sub(1) / 2;
    Ok(c2(m) - c2(m - k))
}

fn ln_binom(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Log-scale bounds on the number of size-`m` injections at distance `k`
/// from a fixed one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TkBound {
    /// `ln[C(m,k) C(n-m+k,k)^2 k!]`
    pub middle: f64,
    /// `ln[m^k n^{2k} / k!^2]`
    pub intermediate: f64,
    /// `ln[n^{3k} / k!^2]`
    pub relaxed: f64,
}

pub fn t_k_count_bound(n: u64, m: u64, k: u64) -> Result<TkBound> {
    if !(1 <= k && k <= m && m <= n) {
        return Err(Error::domain(format!("need 1 <= k <= m <= n, got k={k}, m={m}, n={n}")));
    }
    let lk = ln_factorial(k);
    let (kf, ln_n, ln_m) = (k as f64, (n as f64).ln(), (m as f64).ln());
    Ok(TkBound {
        middle: ln_binom(m, k) + 2.0 * ln_binom(n - m + k, k) + lk,
        intermediate: kf * ln_m + 2.0 * kf * ln_n - 2.0 * lk,
        relaxed: 3.0 * kf * ln_n - 2.0 * lk,
    })
}

/// Bennett-type ER noise tail:
/// `-(tau/2) ln(tau/(E p^2)) + tau/2 - E p^2/2 + k g/(4(2+g))`.
pub fn bennett_noise_tail(tau: f64, edges: u64, p: f64, gamma: f64, k: u64) -> Result<f64> {
    let mean = edges as f64 * p * p;
    if !(tau > mean) {
        return Err(Error::domain(format!("tau = {tau} must exceed E p^2 = {mean}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::domain("gamma must be nonnegative"));
    }
    Ok(-(tau / 2.0) * (tau / mean).ln() + tau / 2.0 - mean / 2.0
        + k as f64 * gamma / (4.0 * (2.0 + gamma)))
}

/// Gaussian product-score noise tail: `-rho tau/6 + rho^2 E/14 + (ln 5/8) k`.
pub fn gaussian_product_noise_tail(tau: f64, edges: u64, rho: f64, k: u64) -> f64 {
    -rho * tau / 6.0 + rho * rho * edges as f64 / 14.0 + 5f64.ln() / 8.0 * k as f64
}

/// Gaussian squared-difference noise tail:
/// `-rho tau/(4(1-rho)) - (E/4) ln(1/(1-rho)) + (k/8) ln(1/(1-rho))`.
pub fn gaussian_sq_noise_tail(tau: f64, edges: u64, rho: f64, k: u64) -> Result<f64> {
    check_unit_open(rho)?;
    let l = -(-rho).ln_1p();
    Ok(-rho * tau / (4.0 * (1.0 - rho)) - edges as f64 / 4.0 * l + k as f64 / 8.0 * l)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChernoffSide {
    /// `P(X >= (1+d) mu) <= exp(-mu phi(d))`
    UpperLog,
    /// `P(X >= (1+d) mu) <= exp(-d^2 mu / (2+d))`
    UpperSimple,
    /// `P(X <= (1-d) mu) <= exp(-d^2 mu / 2)`
    Lower,
}

/// Log Chernoff bounds for a binomial with mean `mu`.
pub fn chernoff_binomial(mu: f64, delta: f64, side: ChernoffSide) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::domain("mu must be positive"));
    }
    match side {
        ChernoffSide::UpperLog | ChernoffSide::UpperSimple if !(delta > 0.0) => {
            Err(Error::domain(format!("upper tail needs delta > 0, got {delta}")))
        }
        ChernoffSide::Lower if !(delta > 0.0 && delta < 1.0) => {
            Err(Error::domain(format!("lower tail needs 0 < delta < 1, got {delta}")))
        }
        ChernoffSide::UpperLog => Ok(-mu * phi(delta)?),
        ChernoffSide::UpperSimple => Ok(-delta * delta * mu / (2.0 + delta)),
        ChernoffSide::Lower => Ok(-delta * delta * mu / 2.0),
    }
}

/// `ln P(chi2_n > (1+d) n) <= -(n/2)(d - ln(1+d))`.
pub fn chisquare_tail(n_dof: u64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    Ok(-(n_dof as f64) / 2.0 * (delta - delta.ln_1p()))
}

/// `tau_k = rho N_k - c0 max(sqrt(N_k L), L)` with `L = 2 k ln m`.
pub fn hanson_wright_tau(rho: f64, n_k_val: u64, k: u64, m: u64, c0: f64) -> f64 {
    let l = 2.0 * k as f64 * (m.max(1) as f64).ln();
    let nk = n_k_val as f64;
    rho * nk - c0 * (nk * l).sqrt().max(l)
}

/// Checks `tau_k >= rho N_k / 2` for all `1 <= k <= m` at a point satisfying
/// `m rho^2 >= C3 ln n`. Returns `None` when the premise fails.
pub fn hanson_wright_premise_check(n: u64, m: u64, rho: f64, c0: f64) -> Option<bool> {
    if (m as f64) * rho * rho < c3_gauss(c0) * (n as f64).ln() {
        return None;
    }
    Some((1..=m).all(|k| {
        let nk = n_k(m, k).expect("k <= m");
        hanson_wright_tau(rho, nk, k, m, c0) >= rho * nk as f64 / 2.0
    }))
}

/// Log packing number bound `delta m (ln(delta n) - 3)`; nonpositive values
/// are vacuous.
pub fn packing_lower_bound(n: f64, m: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(delta * m * ((delta * n).ln() - 3.0))
}

/// Per-pair divergence between the correlated and the independent law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KlPair {
    pub exact: f64,
    /// `25 p^2 phi(gamma)` for ER; absent for Gaussian (the value is exact).
    pub bound: Option<f64>,
}

pub fn kl_pair_bound(model: ModelKind, p: f64, rho: f64) -> Result<KlPair> {
    match model {
        ModelKind::ErdosRenyi => {
            check_er_strict(p, rho)?;
            let (p00, p01, p10, p11) = correlated_bernoulli_pmf(p, rho)?;
            let q = 1.0 - p;
            let cells = [(p00, q * q), (p01, q * p), (p10, p * q), (p11, p * p)];
            // sum of b ((1 + r) ln(1 + r) - r) with r = a/b - 1; every term is
            // nonnegative, so nothing cancels for weak correlation
            let exact = cells.iter().map(|&(a, b)| b * one_plus_log_excess((a - b) / b)).sum::<f64>();
            let sp = SignalParams::new(p, rho)?;
            let bound = 25.0 * p * p * sp.phi_gamma;
            if exact > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::Verification(format!(
                    "KL {exact} exceeds 25 p^2 phi = {bound} at p={p}, rho={rho}"
                )));
            }
            Ok(KlPair { exact, bound: Some(bound) })
        }
        ModelKind::GaussianWigner => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::domain(format!("rho = {rho} outside [0, 1)")));
            }
            Ok(KlPair { exact: -0.5 * (-rho * rho).ln_1p(), bound: None })
        }
    }
}

fn pairs_count(m: f64) -> f64 {
    m * (m - 1.0) / 2.0
}

/// Mutual-information upper bound `C(m,2)` times the per-pair bound.
pub fn mutual_information_bound(model: ModelKind, m: f64, p: f64, rho: f64) -> Result<f64> {
    if m <= 1.0 {
        return Ok(0.0);
    }
    let kl = kl_pair_bound(model, p, rho)?;
    Ok(pairs_count(m) * kl.bound.unwrap_or(kl.exact))
}

/// Fano bound `max(0, 1 - (I + ln 2) / ln|M_delta|)` on the probability that
/// the overlap stays below `delta`.
pub fn fano_failure_lower_bound(
    model: ModelKind,
    n: f64,
    m: f64,
    p: f64,
    rho: f64,
    delta: f64,
) -> Result<f64> {
    let pack = packing_lower_bound(n, m, delta)?;
    if pack <= 0.0 {
        warn!("packing bound vacuous at n={n}, m={m}, delta={delta}");
        return Ok(0.0);
    }
    let mi = mutual_information_bound(model, m, p, rho)?;
    Ok((1.0 - (mi + std::f64::consts::LN_2) / pack).max(0.0))
}

/// True iff `25 m p^2 phi(gamma) <= 4 c (ln n - ln m)`.
pub fn support_recovery_check(n: f64, m: f64, p: f64, rho: f64, c: f64) -> Result<bool> {
    let sp = SignalParams::new(p, rho)?;
    Ok(25.0 * m * p * p * sp.phi_gamma <= 4.0 * c * (n.ln() - m.ln()))
}

/// Result of a grid verification.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        CheckReport { name: name.into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Log-spaced grid `lo..=hi` with `count` points.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// For every `gamma` and every `eta = frac * gamma/(4(1+gamma))`, checks
/// `(1+gamma)(1-eta) > 1` and `phi((1-eta)(1+gamma) - 1) >= phi(gamma)/4`.
pub fn eta_phi_inequality_check(gammas: &[f64], eta_fracs: &[f64]) -> Result<CheckReport> {
    let mut rep = CheckReport::new("eta-phi");
    for &g in gammas {
        let eta_max = g / (4.0 * (1.0 + g));
        for &fr in eta_fracs {
            if !(0.0..=1.0).contains(&fr) {
                return Err(Error::domain("eta fractions must lie in [0, 1]"));
            }
            let eta = fr * eta_max;
            let x = (1.0 - eta) * (1.0 + g);
            rep.checks += 1;
            if !(x > 1.0) {
                rep.failures.push(format!("(1+g)(1-eta) = {x} <= 1 at g={g}, eta={eta}"));
                continue;
            }
            let lhs = phi(x - 1.0)?;
            let rhs = phi(g)? / 4.0;
            if !(lhs >= rhs) {
                rep.failures.push(format!("phi = {lhs} < {rhs} at g={g}, eta={eta}"));
            }
        }
    }
    Ok(rep)
}

/// Checks `sum_{k=1}^{m-1} exp(-m h(k/m)) <= (4 ln m + 2)/m`.
pub fn entropy_sum_check(ms: &[u64]) -> Result<CheckReport> {
    let mut rep = CheckReport::new("entropy-sum");
    for &m in ms {
        if m < 10 {
            return Err(Error::domain(format!("entropy sum check needs m >= 10, got {m}")));
        }
        let mf = m as f64;
        // small terms first: the summand is symmetric and peaks at the ends
        let mut terms: Vec<f64> = (1..m)
            .map(|k| (-mf * binary_entropy(k as f64 / mf).expect("in range")).exp())
            .collect();
        terms.sort_unstable_by(f64::total_cmp);
        let sum: f64 = terms.iter().sum();
        let rhs = (4.0 * mf.ln() + 2.0) / mf;
        rep.checks += 1;
        if !(sum <= rhs) {
            rep.failures.push(format!("m={m}: sum {sum} > {rhs}"));
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryCriterion {
    Partial,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LogFactor {
    None,
    LogN,
}

/// Threshold exponent: with `p = n^-a1`, `rho = n^-a2`, the ER threshold
/// scales as `n^a3` (times `log n` when flagged).
pub fn phase_diagram_exponent(a1: f64, a2: f64, crit: RecoveryCriterion) -> Result<(f64, LogFactor)> {
    if !(a1 > 0.0 && a1 < 1.0 && a2 > 0.0 && a2 < 1.0) {
        return Err(Error::domain(format!("exponents ({a1}, {a2}) outside (0, 1)")));
    }
    let a3 = if a1 >= a2 { a1 + a2 } else { 2.0 * a2 };
    let lf = match crit {
        RecoveryCriterion::Exact => LogFactor::LogN,
        RecoveryCriterion::Partial if a1 > a2 => LogFactor::None,
        RecoveryCriterion::Partial => LogFactor::LogN,
    };
    Ok((a3, lf))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    WeakSignal,
    StrongSignal,
}

/// Inputs of a threshold report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdInputs {
    pub model: ModelKind,
    pub n: f64,
    pub m: f64,
    pub p: Option<f64>,
    pub rho: f64,
    pub delta: f64,
    pub c0: f64,
    /// Overrides the default Gaussian unification constant.
    pub c2: Option<f64>,
}

/// Evaluated thresholds and bounds at one parameter point. Quantities that do
/// not apply to the model are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub model: ModelKind,
    pub n: f64,
    pub m: f64,
    pub p: Option<f64>,
    pub rho: f64,
    pub delta: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub gamma: Option<f64>,
    pub phi_gamma: Option<f64>,
    pub partial_er: Option<f64>,
    pub exact_er: Option<f64>,
    pub gaussian: Option<f64>,
    pub mutual_information: f64,
    pub packing_log: f64,
    pub packing_vacuous: bool,
    pub fano_failure_lb: f64,
    pub regime: Regime,
    pub warnings: Vec<String>,
}

impl ThresholdReport {
    /// The recovery threshold used to normalize `m` in sweeps.
    pub fn primary_threshold(&self) -> f64 {
        self.partial_er.or(self.gaussian).unwrap_or(f64::NAN)
    }
}

pub fn threshold_report(inp: &ThresholdInputs) -> Result<ThresholdReport> {
    let mut warnings = Vec::new();
    let c1v = c1(inp.delta)?;
    let c2 = inp.c2.unwrap_or_else(|| default_c2(inp.c0));
    let (p, gamma, phi_gamma, partial, exact, gauss, regime);
    match inp.model {
        ModelKind::ErdosRenyi => {
            let pv = inp.p.ok_or_else(|| Error::Parameter("ER report needs p".into()))?;
            let sp = SignalParams::new(pv, inp.rho)?;
            p = Some(pv);
            gamma = Some(sp.gamma);
            phi_gamma = Some(sp.phi_gamma);
            partial = Some(partial_threshold_er(inp.n, pv, inp.rho, inp.delta)?);
            let (_, second) = exact_threshold_terms(inp.n, pv, inp.rho)?;
            if second.is_none() {
                warnings.push("logarithmic exact-recovery term dropped".into());
            }
            exact = Some(exact_threshold_er(inp.n, pv, inp.rho)?);
            gauss = None;
            regime = if sp.gamma > 1.0 { Regime::StrongSignal } else { Regime::WeakSignal };
        }
        ModelKind::GaussianWigner => {
            p = None;
            gamma = None;
            phi_gamma = None;
            partial = None;
            exact = None;
            gauss = Some(gaussian_threshold(inp.n, inp.rho, c2)?);
            regime = if inp.rho <= gaussian_regime_boundary() {
                Regime::WeakSignal
            } else {
                Regime::StrongSignal
            };
        }
    }
    let pack = packing_lower_bound(inp.n, inp.m, inp.delta)?;
    let mi = mutual_information_bound(inp.model, inp.m, p.unwrap_or(0.5), inp.rho)?;
    let vacuous = pack <= 0.0;
    if vacuous {
        warnings.push("packing bound is vacuous (delta n <= e^3)".into());
    }
    let fano = if vacuous {
        0.0
    } else {
        (1.0 - (mi + std::f64::consts::LN_2) / pack).max(0.0)
    };
    Ok(ThresholdReport {
        model: inp.model,
        n: inp.n,
        m: inp.m,
        p,
        rho: inp.rho,
        delta: inp.delta,
        c0: inp.c0,
        c1: c1v,
        c2,
        gamma,
        phi_gamma,
        partial_er: partial,
        exact_er: exact,
        gaussian: gauss,
        mutual_information: mi,
        packing_log: pack,
        packing_vacuous: vacuous,
        fano_failure_lb: fano,
        regime,
        warnings,
    })
}
