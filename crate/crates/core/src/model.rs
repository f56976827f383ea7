//! Model parameters, graph and mapping types, and planted-instance samplers.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random generator used for every sampling routine.
pub type SimRng = ChaCha8Rng;

/// Generator seeded from a 64-bit value.
pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a master seed with a sequence of stream identifiers into a child seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "er")]
    ErdosRenyi,
    #[serde(rename = "gaussian")]
    GaussianWigner,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::ErdosRenyi => "er",
            ModelKind::GaussianWigner => "gaussian",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "er" | "erdos-renyi" => Ok(ModelKind::ErdosRenyi),
            "gaussian" | "wigner" => Ok(ModelKind::GaussianWigner),
            _ => Err(Error::Parameter(format!("unknown model '{s}'"))),
        }
    }
}

/// Parameters of a planted instance. `p` is only meaningful for the ER model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub p: Option<f64>,
    pub rho: f64,
    pub model: ModelKind,
}

impl ModelParams {
    pub fn er(n: usize, m: usize, p: f64, rho: f64) -> Self {
        ModelParams { n, m, p: Some(p), rho, model: ModelKind::ErdosRenyi }
    }

    pub fn gaussian(n: usize, m: usize, rho: f64) -> Self {
        ModelParams { n, m, p: None, rho, model: ModelKind::GaussianWigner }
    }

    /// Checks the sampling domain. Correlations at the endpoints 0 and 1 are
    /// admitted for sampling; the threshold formulas impose the strict ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("n must be positive"));
        }
        if self.m > self.n {
            return Err(Error::domain(format!("m = {} exceeds n = {}", self.m, self.n)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::domain(format!("rho = {} outside [0, 1]", self.rho)));
        }
        if self.model == ModelKind::ErdosRenyi {
            let p = self.p_er()?;
            if !(p > 0.0 && p <= 0.5) {
                return Err(Error::domain(format!("p = {p} outside (0, 1/2]")));
            }
        }
        Ok(())
    }

    /// Edge probability, required for the ER model.
    pub fn p_er(&self) -> Result<f64> {
        self.p.ok_or_else(|| Error::Parameter("ER model requires p".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Binary,
    Real,
}

/// Dense symmetric weight matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
    kind: WeightKind,
}

impl WeightedGraph {
    pub fn empty(n: usize, kind: WeightKind) -> Self {
        WeightedGraph { n, weights: vec![0.0; n * n], kind }
    }

    /// Builds a graph from a lower-triangular, row-major list:
    /// (1,0), (2,0), (2,1), (3,0), ...
    pub fn from_lower_triangular(n: usize, kind: WeightKind, values: &[f64]) -> Result<Self> {
        if values.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::domain(format!(
                "expected {} weights for n = {n}, got {}",
                n * n.saturating_sub(1) / 2,
                values.len()
            )));
        }
        let mut g = WeightedGraph::empty(n, kind);
        let mut it = values.iter();
        for u in 1..n {
            for v in 0..u {
                g.set(u, v, *it.next().unwrap());
            }
        }
        g.validate()?;
        Ok(g)
    }

    /// Builds a 0/1 graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = WeightedGraph::empty(n, WeightKind::Binary);
        for &(u, v) in edges {
            if u == v || u >= n || v >= n {
                return Err(Error::domain(format!("invalid edge ({u}, {v}) for n = {n}")));
            }
            g.set(u, v, 1.0);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[u * self.n + v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, w: f64) {
        debug_assert!(u != v);
        self.weights[u * self.n + v] = w;
        self.weights[v * self.n + u] = w;
    }

    /// Row `u` of the weight matrix.
    #[inline]
    pub fn row(&self, u: usize) -> &[f64] {
        &self.weights[u * self.n..(u + 1) * self.n]
    }

    pub fn lower_triangular(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for u in 1..self.n {
            for v in 0..u {
                out.push(self.get(u, v));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for u in 0..self.n {
            if self.get(u, u) != 0.0 {
                return Err(Error::domain(format!("nonzero diagonal at {u}")));
            }
            for v in 0..u {
                let w = self.get(u, v);
                if w != self.get(v, u) {
                    return Err(Error::domain(format!("asymmetric weight at ({u}, {v})")));
                }
                if !w.is_finite() {
                    return Err(Error::domain(format!("non-finite weight at ({u}, {v})")));
                }
                if self.kind == WeightKind::Binary && w != 0.0 && w != 1.0 {
                    return Err(Error::domain(format!("non-binary weight {w} at ({u}, {v})")));
                }
            }
        }
        Ok(())
    }

    /// Relabels vertices: vertex `v` becomes `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> WeightedGraph {
        let mut g = WeightedGraph::empty(self.n, self.kind);
        for u in 1..self.n {
            for v in 0..u {
                g.set(perm[u], perm[v], self.get(u, v));
            }
        }
        g
    }

    pub fn edge_count(&self) -> usize {
        self.lower_triangular().iter().filter(|&&w| w != 0.0).count()
    }
}

/// Partial injection stored canonically: sources strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct InjectiveMapping {
    pairs: Vec<(usize, usize)>,
}

impl InjectiveMapping {
    /// Sorts pairs by source and checks injectivity.
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::domain(format!("source {} mapped twice", w[0].0)));
            }
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        for &(_, t) in &pairs {
            if !seen.insert(t) {
                return Err(Error::domain(format!("target {t} hit twice")));
            }
        }
        Ok(InjectiveMapping { pairs })
    }

    /// Trusted constructor for pairs already in canonical form.
    pub(crate) fn from_sorted_unchecked(pairs: Vec<(usize, usize)>) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        InjectiveMapping { pairs }
    }

    pub fn empty() -> Self {
        InjectiveMapping::default()
    }

    pub fn identity(vertices: &[usize]) -> Result<Self> {
        InjectiveMapping::new(vertices.iter().map(|&v| (v, v)).collect())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn domain(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn image(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    pub fn get(&self, s: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&s, |p| p.0)
            .ok()
            .map(|i| self.pairs[i].1)
    }

    /// Source mapped onto `t`, if any.
    pub fn preimage(&self, t: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == t).map(|p| p.0)
    }

    pub fn check_bounds(&self, n1: usize, n2: usize) -> Result<()> {
        for &(s, t) in &self.pairs {
            if s >= n1 || t >= n2 {
                return Err(Error::domain(format!("pair ({s}, {t}) out of range")));
            }
        }
        Ok(())
    }
}

impl TryFrom<Vec<(usize, usize)>> for InjectiveMapping {
    type Error = Error;
    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        InjectiveMapping::new(v)
    }
}

impl From<InjectiveMapping> for Vec<(usize, usize)> {
    fn from(m: InjectiveMapping) -> Self {
        m.pairs
    }
}

/// A sampled pair of graphs together with the planted mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedInstance {
    pub g1: WeightedGraph,
    pub g2: WeightedGraph,
    pub truth: InjectiveMapping,
    pub params: ModelParams,
    pub seed: u64,
}

#[derive(Deserialize)]
struct InstanceRecord {
    n: usize,
    m: usize,
    #[serde(default)]
    p: Option<f64>,
    rho: f64,
    model: ModelKind,
    #[serde(default)]
    seed: u64,
    truth: InjectiveMapping,
    g1: Vec<f64>,
    g2: Vec<f64>,
}

fn push_weights(out: &mut String, g: &WeightedGraph) {
    out.push('[');
    for (i, w) in g.lower_triangular().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match g.kind() {
            WeightKind::Binary => out.push(if *w != 0.0 { '1' } else { '0' }),
            WeightKind::Real => {
                let _ = write!(out, "{w:.16e}");
            }
        }
    }
    out.push(']');
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

impl PlantedInstance {
    /// JSON encoding; real weights carry 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        let p = self.params.p.map_or("null".to_string(), fmt_real);
        let _ = write!(
            s,
            "{{\"n\":{},\"m\":{},\"p\":{},\"rho\":{},\"model\":\"{}\",\"seed\":{},\"truth\":[",
            self.params.n,
            self.params.m,
            p,
            fmt_real(self.params.rho),
            self.params.model.as_str(),
            self.seed
        );
        for (i, (a, b)) in self.truth.pairs().iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "[{a},{b}]");
        }
        s.push_str("],\"g1\":");
        push_weights(&mut s, &self.g1);
        s.push_str(",\"g2\":");
        push_weights(&mut s, &self.g2);
        s.push('}');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: InstanceRecord = serde_json::from_str(text)?;
        let params = ModelParams { n: r.n, m: r.m, p: r.p, rho: r.rho, model: r.model };
        params.validate()?;
        let kind = match r.model {
            ModelKind::ErdosRenyi => WeightKind::Binary,
            ModelKind::GaussianWigner => WeightKind::Real,
        };
        let g1 = WeightedGraph::from_lower_triangular(r.n, kind, &r.g1)?;
        let g2 = WeightedGraph::from_lower_triangular(r.n, kind, &r.g2)?;
        r.truth.check_bounds(r.n, r.n)?;
        if r.truth.len() != r.m {
            return Err(Error::domain(format!("truth has {} pairs, m = {}", r.truth.len(), r.m)));
        }
        Ok(PlantedInstance { g1, g2, truth: r.truth, params, seed: r.seed })
    }
}

/// Four-cell pmf (p00, p01, p10, p11) of a correlated Bernoulli pair with
/// marginals `p` and correlation `rho`.
pub fn correlated_bernoulli_pmf(p: f64, rho: f64) -> Result<(f64, f64, f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p = {p} outside (0, 1)")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho = {rho} outside [0, 1]")));
    }
    let q = 1.0 - p;
    let c = rho * p * q;
    Ok((q * q + c, (1.0 - rho) * p * q, (1.0 - rho) * p * q, p * p + c))
}

/// Uniform draw from the injections with an m-element domain in [n].
pub fn sample_truth<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<InjectiveMapping> {
    if m > n {
        return Err(Error::domain(format!("m = {m} exceeds n = {n}")));
    }
    let mut src: Vec<usize> = (0..n).collect();
    let (chosen, _) = src.partial_shuffle(rng, m);
    let mut domain = chosen.to_vec();
    domain.sort_unstable();
    let mut dst: Vec<usize> = (0..n).collect();
    let (targets, _) = dst.partial_shuffle(rng, m);
    let pairs = domain.into_iter().zip(targets.iter().copied()).collect();
    Ok(InjectiveMapping::from_sorted_unchecked(pairs))
}

fn check_truth(params: &ModelParams, truth: &InjectiveMapping) -> Result<()> {
    params.validate()?;
    truth.check_bounds(params.n, params.n)?;
    if truth.len() != params.m {
        return Err(Error::domain(format!("truth has {} pairs, m = {}", truth.len(), params.m)));
    }
    Ok(())
}

/// Shared sampling skeleton: `pair` draws a matched (G1, G2) weight pair,
/// `single` draws an independent weight.
fn sample_pair_with<R, P, S>(
    params: &ModelParams,
    truth: &InjectiveMapping,
    kind: WeightKind,
    rng: &mut R,
    mut pair: P,
    mut single: S,
) -> (WeightedGraph, WeightedGraph)
where
    R: Rng + ?Sized,
    P: FnMut(&mut R) -> (f64, f64),
    S: FnMut(&mut R) -> f64,
{
    let n = params.n;
    let mut image = vec![usize::MAX; n];
    for &(s, t) in truth.pairs() {
        image[s] = t;
    }
    let mut g1 = WeightedGraph::empty(n, kind);
    let mut g2 = WeightedGraph::empty(n, kind);
    let mut filled = vec![false; n * n];
    for u in 1..n {
        for v in 0..u {
            if image[u] != usize::MAX && image[v] != usize::MAX {
                let (a, b) = pair(rng);
                g1.set(u, v, a);
                let (x, y) = (image[u], image[v]);
                g2.set(x, y, b);
                filled[x * n + y] = true;
                filled[y * n + x] = true;
            } else {
                g1.set(u, v, single(rng));
            }
        }
    }
    for u in 1..n {
        for v in 0..u {
            if !filled[u * n + v] {
                g2.set(u, v, single(rng));
            }
        }
    }
    (g1, g2)
}

/// Partially correlated Erdős–Rényi pair with the given planted mapping.
pub fn sample_er_pair<R: Rng + ?Sized>(
    params: &ModelParams,
    truth: &InjectiveMapping,
    rng: &mut R,
) -> Result<(WeightedGraph, WeightedGraph)> {
    if params.model != ModelKind::ErdosRenyi {
        return Err(Error::Parameter("sample_er_pair needs the ER model".into()));
    }
    check_truth(params, truth)?;
    let p = params.p_er()?;
    let (p00, p01, p10, _) = correlated_bernoulli_pmf(p, params.rho)?;
    let (c0, c1, c2) = (p00, p00 + p01, p00 + p01 + p10);
    Ok(sample_pair_with(
        params,
        truth,
        WeightKind::Binary,
        rng,
        |r| {
            let u: f64 = r.random();
            if u < c0 {
                (0.0, 0.0)
            } else if u < c1 {
                (0.0, 1.0)
            } else if u < c2 {
                (1.0, 0.0)
            } else {
                (1.0, 1.0)
            }
        },
        |r| if r.random::<f64>() < p { 1.0 } else { 0.0 },
    ))
}

/// Partially correlated Gaussian Wigner pair: matched weights are
/// (A, rho A + sqrt(1 - rho^2) Z).
pub fn sample_wigner_pair<R: Rng + ?Sized>(
    params: &ModelParams,
    truth: &InjectiveMapping,
    rng: &mut R,
) -> Result<(WeightedGraph, WeightedGraph)> {
    if params.model != ModelKind::GaussianWigner {
        return Err(Error::Parameter("sample_wigner_pair needs the Gaussian model".into()));
    }
    check_truth(params, truth)?;
    let rho = params.rho;
    let s = (1.0 - rho * rho).sqrt();
    Ok(sample_pair_with(
        params,
        truth,
        WeightKind::Real,
        rng,
        |r| {
            let a: f64 = r.sample(StandardNormal);
            let z: f64 = r.sample(StandardNormal);
            (a, if s == 0.0 { a } else { rho * a + s * z })
        },
        |r| r.sample(StandardNormal),
    ))
}

/// Samples the truth and then the graph pair from a single seed.
pub fn sample_instance(params: &ModelParams, seed: u64) -> Result<PlantedInstance> {
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let truth = sample_truth(params.n, params.m, &mut rng)?;
    sample_instance_with_truth(params, truth, &mut rng, seed)
}

/// Samples a graph pair around a caller-supplied planted mapping.
pub fn sample_instance_with_truth<R: Rng + ?Sized>(
    params: &ModelParams,
    truth: InjectiveMapping,
    rng: &mut R,
    seed: u64,
) -> Result<PlantedInstance> {
    let (g1, g2) = match params.model {
        ModelKind::ErdosRenyi => sample_er_pair(params, &truth, rng)?,
        ModelKind::GaussianWigner => sample_wigner_pair(params, &truth, rng)?,
    };
    Ok(PlantedInstance { g1, g2, truth, params: *params, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::HashMap;

    #[test]
    fn pmf_reference_values() {
        let (a, b, c, d) = correlated_bernoulli_pmf(0.5, 0.0).unwrap();
        assert_eq!((a, b, c, d), (0.25, 0.25, 0.25, 0.25));
        let (a, b, c, d) = correlated_bernoulli_pmf(0.5, 1.0).unwrap();
        assert_eq!((a, b, c, d), (0.5, 0.0, 0.0, 0.5));
        let (a, b, c, d) = correlated_bernoulli_pmf(0.3, 0.5).unwrap();
        assert_abs_diff_eq!(d, 0.195, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.105, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.105, epsilon = 1e-15);
        assert_abs_diff_eq!(a, 0.595, epsilon = 1e-15);
        assert!(correlated_bernoulli_pmf(0.0, 0.5).is_err());
        assert!(correlated_bernoulli_pmf(0.3, 1.5).is_err());
    }

    #[test]
    fn truth_edge_cases() {
        let mut rng = rng_from_seed(1);
        assert!(sample_truth(3, 0, &mut rng).unwrap().is_empty());
        assert!(sample_truth(2, 3, &mut rng).is_err());
    }

    #[test]
    fn truth_uniform_n4_m2() {
        // |S_{4,2}| = C(4,2)^2 * 2! = 72
        let mut rng = rng_from_seed(7);
        let draws = 72_000;
        let mut counts: HashMap<InjectiveMapping, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_truth(4, 2, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 72);
        let e = draws as f64 / 72.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 71 dof; 0.999 quantile is about 112.3
        assert!(chi2 < 112.3, "chi2 = {chi2}");
    }

    #[test]
    fn truth_uniform_n2_m2() {
        let mut rng = rng_from_seed(3);
        let draws = 100_000;
        let swapped = (0..draws)
            .filter(|_| sample_truth(2, 2, &mut rng).unwrap().get(0) == Some(1))
            .count() as f64;
        let sigma = (draws as f64 * 0.25).sqrt();
        assert!((swapped - draws as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        for params in [ModelParams::er(7, 3, 0.3, 0.5), ModelParams::gaussian(6, 4, 0.7)] {
            let inst = sample_instance(&params, 99).unwrap();
            let back = PlantedInstance::from_json(&inst.to_json()).unwrap();
            assert_eq!(inst, back);
        }
    }

    #[test]
    fn gaussian_rho_one_is_identical() {
        let inst = sample_instance(&ModelParams::gaussian(8, 5, 1.0), 5).unwrap();
        for &(a, x) in inst.truth.pairs() {
            for &(b, y) in inst.truth.pairs() {
                if a != b {
                    assert_eq!(inst.g1.get(a, b).to_bits(), inst.g2.get(x, y).to_bits());
                }
            }
        }
    }

    #[test]
    fn er_perfect_correlation() {
        let inst = sample_instance(&ModelParams::er(10, 6, 0.5, 1.0), 11).unwrap();
        for &(a, x) in inst.truth.pairs() {
            for &(b, y) in inst.truth.pairs() {
                if a != b {
                    assert_eq!(inst.g1.get(a, b), inst.g2.get(x, y));
                }
            }
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let p = ModelParams::er(9, 4, 0.4, 0.5);
        assert_eq!(sample_instance(&p, 1).unwrap(), sample_instance(&p, 1).unwrap());
        assert_ne!(sample_instance(&p, 1).unwrap(), sample_instance(&p, 2).unwrap());
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::er(5, 6, 0.3, 0.5).validate().is_err());
        assert!(ModelParams::er(5, 2, 0.7, 0.5).validate().is_err());
        assert!(ModelParams::gaussian(5, 2, 1.2).validate().is_err());
        assert!(InjectiveMapping::new(vec![(0, 1), (2, 1)]).is_err());
        assert!(InjectiveMapping::new(vec![(0, 1), (0, 2)]).is_err());
    }
}
