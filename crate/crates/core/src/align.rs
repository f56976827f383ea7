//! Similarity scores, overlap metrics and exact score-maximizing estimators.
//!
//! Scores are accumulated in one canonical order: for the `j`-th pair (by
//! source) the terms against pairs `0..j` are summed into a partial sum, and
//! the partial sums are added to the total in order of `j`. The exhaustive
//! search and the branch-and-bound search both follow this order, so equal
//! mappings always produce bit-identical scores and tie-breaking is exact.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::cumulant::{ScoreFn, ScoreKind};
use crate::error::{Error, Result};
use crate::model::{rng_from_seed, InjectiveMapping, WeightKind, WeightedGraph};

/// Default cap on enumerated mappings (exhaustive search) or visited nodes
/// (branch and bound).
pub const DEFAULT_BUDGET: u128 = 100_000_000;

/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_ENV: &str = "PALIGN_BUDGET";

/// The budget from `PALIGN_BUDGET`, or the default.
pub fn budget_from_env() -> u128 {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|b| *b >= 1.0)
        .map(|b| b as u128)
        .unwrap_or(DEFAULT_BUDGET)
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// `C(n1, m) C(n2, m) m!`, saturating.
pub fn injection_count(n1: usize, n2: usize, m: usize) -> u128 {
    let mut f: u128 = 1;
    for i in 2..=m as u128 {
        f = f.saturating_mul(i);
    }
    binom(n1, m).saturating_mul(binom(n2, m)).saturating_mul(f)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub mapping: InjectiveMapping,
    pub score: f64,
    pub overlap: Option<f64>,
    pub distance: Option<usize>,
}

impl AlignmentResult {
    fn new(mapping: InjectiveMapping, score: f64) -> Self {
        AlignmentResult { mapping, score, overlap: None, distance: None }
    }

    /// Fills overlap and distance against the planted mapping.
    pub fn with_truth(mut self, truth: &InjectiveMapping) -> Result<Self> {
        self.overlap = Some(overlap(truth, &self.mapping)?);
        if self.mapping.len() == truth.len() {
            self.distance = Some(distance(&self.mapping, truth)?);
        }
        Ok(self)
    }
}

/// Canonical-order score of a sorted pair list.
pub(crate) fn score_pairs(f: &ScoreFn, g1: &WeightedGraph, g2: &WeightedGraph, pairs: &[(usize, usize)]) -> f64 {
    let mut total = 0.0;
    for j in 0..pairs.len() {
        let (sj, tj) = pairs[j];
        let (ra, rb) = (g1.row(sj), g2.row(tj));
        let mut part = 0.0;
        for &(si, ti) in &pairs[..j] {
            part += f.eval(ra[si], rb[ti]);
        }
        total += part;
    }
    total
}

fn check_graphs(g1: &WeightedGraph, g2: &WeightedGraph, m: usize) -> Result<()> {
    if m > g1.n() || m > g2.n() {
        return Err(Error::domain(format!(
            "m = {m} exceeds graph sizes ({}, {})",
            g1.n(),
            g2.n()
        )));
    }
    Ok(())
}

/// Sum of `f(w_e(G1), w_{pi(e)}(G2))` over all pairs `e` of the domain of `pi`.
pub fn similarity_score(
    g1: &WeightedGraph,
    g2: &WeightedGraph,
    pi: &InjectiveMapping,
    kind: ScoreKind,
    rho_for_mle: Option<f64>,
) -> Result<f64> {
    let f = ScoreFn::new(kind, rho_for_mle)?;
    pi.check_bounds(g1.n(), g2.n())?;
    Ok(score_pairs(&f, g1, g2, pi.pairs()))
}

/// Fraction of truth vertices mapped as the truth maps them.
pub fn overlap(truth: &InjectiveMapping, candidate: &InjectiveMapping) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::domain("overlap is undefined for an empty truth"));
    }
    let agree = candidate
        .pairs()
        .iter()
        .filter(|&&(s, t)| truth.get(s) == Some(t))
        .count();
    Ok(agree as f64 / truth.len() as f64)
}

/// `m` minus the number of agreeing vertices; both mappings must have size `m`.
pub fn distance(pi: &InjectiveMapping, other: &InjectiveMapping) -> Result<usize> {
    if pi.len() != other.len() {
        return Err(Error::domain(format!(
            "distance needs equal sizes, got {} and {}",
            pi.len(),
            other.len()
        )));
    }
    let agree = pi.pairs().iter().filter(|&&(s, t)| other.get(s) == Some(t)).count();
    Ok(pi.len() - agree)
}

/// Incumbent comparison: higher score wins, ties go to the lexicographically
/// smaller pair list.
fn beats(score: f64, pairs: &[(usize, usize)], best: &Option<(f64, Vec<(usize, usize)>)>) -> bool {
    match best {
        None => true,
        Some((bs, bp)) => match score.partial_cmp(bs) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => pairs < bp.as_slice(),
            _ => false,
        },
    }
}

/// Advances `v` to the next k-subset of `0..n` in colex order.
fn next_colex(v: &mut [usize], n: usize) -> bool {
    let k = v.len();
    for i in 0..k {
        let limit = if i + 1 < k { v[i + 1] } else { n };
        if v[i] + 1 < limit {
            v[i] += 1;
            for (j, x) in v.iter_mut().enumerate().take(i) {
                *x = j;
            }
            return true;
        }
    }
    false
}

/// Next permutation in lexicographic order.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Calls `visit` on every injection with an `m`-element domain in
/// `0..n1` and image in `0..n2`, as a pair list sorted by source. Domains run
/// in colex order, then target sets in colex order, then assignments in
/// lexicographic order.
pub fn for_each_injection(n1: usize, n2: usize, m: usize, mut visit: impl FnMut(&[(usize, usize)])) {
    if m > n1 || m > n2 {
        return;
    }
    let mut dom: Vec<usize> = (0..m).collect();
    let mut pairs = vec![(0, 0); m];
    let mut perm = vec![0; m];
    loop {
        let mut tgt: Vec<usize> = (0..m).collect();
        loop {
            perm.copy_from_slice(&tgt);
            loop {
                for i in 0..m {
                    pairs[i] = (dom[i], perm[i]);
                }
                visit(&pairs);
                if !next_permutation(&mut perm) {
                    break;
                }
            }
            if !next_colex(&mut tgt, n2) {
                break;
            }
        }
        if !next_colex(&mut dom, n1) {
            break;
        }
    }
}

/// Exhaustive maximization over every injection with an `m`-element domain.
pub fn brute_force_align(
    g1: &WeightedGraph,
    g2: &WeightedGraph,
    m: usize,
    kind: ScoreKind,
    rho_for_mle: Option<f64>,
    budget: u128,
) -> Result<AlignmentResult> {
    let f = ScoreFn::new(kind, rho_for_mle)?;
    check_graphs(g1, g2, m)?;
    let count = injection_count(g1.n(), g2.n(), m);
    if count > budget {
        return Err(Error::Budget { what: "exhaustive enumeration", needed: count, budget });
    }
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    for_each_injection(g1.n(), g2.n(), m, |pairs| {
        let s = score_pairs(&f, g1, g2, pairs);
        if beats(s, pairs, &best) {
            best = Some((s, pairs.to_vec()));
        }
    });
    let (score, pairs) = best.expect("at least one mapping exists");
    Ok(AlignmentResult::new(InjectiveMapping::from_sorted_unchecked(pairs), score))
}

/// Exact branch-and-bound maximization with the same output contract as
/// [`brute_force_align`].
pub fn branch_and_bound_align(
    g1: &WeightedGraph,
    g2: &WeightedGraph,
    m: usize,
    kind: ScoreKind,
    rho_for_mle: Option<f64>,
    budget: u128,
) -> Result<AlignmentResult> {
    BranchAndBound::new(g1, g2, m, kind, rho_for_mle)?.budget(budget).run()
}

/// Search statistics from the last branch-and-bound run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub nodes: u128,
    pub pruned: u128,
}

/// Configurable branch-and-bound search.
///
/// G1 vertices are decided in index order (assign to a free target or skip).
/// A node is pruned when an optimistic completion bound falls below the
/// incumbent. The bound adds, for each undecided vertex `x` and free target
/// `w`, the exact linear gain `lin[x][w]` to half of the best achievable sum
/// of `r - 1` pair terms incident to `x`, then keeps the `r` best rows (or
/// columns, whichever is smaller).
pub struct BranchAndBound<'a> {
    g1: &'a WeightedGraph,
    g2: &'a WeightedGraph,
    f: ScoreFn,
    m: usize,
    budget: u128,
    seeds: Vec<InjectiveMapping>,
    local_search: bool,
    stats: SearchStats,
}

impl<'a> BranchAndBound<'a> {
    pub fn new(
        g1: &'a WeightedGraph,
        g2: &'a WeightedGraph,
        m: usize,
        kind: ScoreKind,
        rho_for_mle: Option<f64>,
    ) -> Result<Self> {
        let f = ScoreFn::new(kind, rho_for_mle)?;
        check_graphs(g1, g2, m)?;
        if g2.n() > 64 {
            return Err(Error::Resource("branch and bound supports at most 64 targets".into()));
        }
        Ok(BranchAndBound {
            g1,
            g2,
            f,
            m,
            budget: DEFAULT_BUDGET,
            seeds: Vec::new(),
            local_search: true,
            stats: SearchStats::default(),
        })
    }

    /// Node cap.
    pub fn budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    /// Adds a starting incumbent. Any valid mapping of size `m` is allowed
    /// and never changes the result, only the running time.
    pub fn seed(mut self, mapping: InjectiveMapping) -> Self {
        self.seeds.push(mapping);
        self
    }

    /// Toggles the local-search warm start.
    pub fn local_search(mut self, on: bool) -> Self {
        self.local_search = on;
        self
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn run(&mut self) -> Result<AlignmentResult> {
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        let mut starts: Vec<Vec<(usize, usize)>> = Vec::new();
        for s in &self.seeds {
            if s.len() != self.m {
                return Err(Error::domain("seed mapping has the wrong size"));
            }
            s.check_bounds(self.g1.n(), self.g2.n())?;
            starts.push(s.pairs().to_vec());
        }
        if self.local_search && self.m >= 2 {
            let mut rng = rng_from_seed(0x05ee_d0fa_119e);
            for _ in 0..2 {
                let mut d: Vec<usize> = (0..self.g1.n()).collect();
                let mut t: Vec<usize> = (0..self.g2.n()).collect();
                d.partial_shuffle(&mut rng, self.m);
                t.partial_shuffle(&mut rng, self.m);
                let mut pairs: Vec<(usize, usize)> =
                    d[..self.m].iter().copied().zip(t[..self.m].iter().copied()).collect();
                pairs.sort_unstable();
                starts.push(pairs);
            }
        }
        for mut pairs in starts {
            if self.local_search {
                hill_climb(&self.f, self.g1, self.g2, &mut pairs);
            }
            let s = score_pairs(&self.f, self.g1, self.g2, &pairs);
            if beats(s, &pairs, &best) {
                best = Some((s, pairs));
            }
        }
        let integral = self.f.kind() == ScoreKind::Product
            && self.g1.kind() == WeightKind::Binary
            && self.g2.kind() == WeightKind::Binary;
        let mut search = Search::new(self.g1, self.g2, self.f, self.m, self.budget, integral, best);
        search.dfs(0, 0.0)?;
        self.stats = SearchStats { nodes: search.nodes, pruned: search.pruned };
        let (score, pairs) = search.best.expect("the search always completes a mapping");
        Ok(AlignmentResult::new(InjectiveMapping::from_sorted_unchecked(pairs), score))
    }
}

/// First-improvement local search over target moves, target swaps and
/// source replacements.
fn hill_climb(f: &ScoreFn, g1: &WeightedGraph, g2: &WeightedGraph, pairs: &mut Vec<(usize, usize)>) {
    let (n1, n2) = (g1.n(), g2.n());
    let mut cur = score_pairs(f, g1, g2, pairs);
    let mut cand = pairs.clone();
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < 100 {
        improved = false;
        rounds += 1;
        let used_s: Vec<bool> = (0..n1).map(|v| pairs.iter().any(|p| p.0 == v)).collect();
        let used_t: Vec<bool> = (0..n2).map(|w| pairs.iter().any(|p| p.1 == w)).collect();
        'moves: for i in 0..pairs.len() {
            for w in (0..n2).filter(|&w| !used_t[w]) {
                cand.clone_from(pairs);
                cand[i].1 = w;
                let s = score_pairs(f, g1, g2, &cand);
                if s > cur {
                    (cur, improved) = (s, true);
                    std::mem::swap(pairs, &mut cand);
                    break 'moves;
                }
            }
            for j in i + 1..pairs.len() {
                cand.clone_from(pairs);
                let (a, b) = (cand[i].1, cand[j].1);
                cand[i].1 = b;
                cand[j].1 = a;
                let s = score_pairs(f, g1, g2, &cand);
                if s > cur {
                    (cur, improved) = (s, true);
                    std::mem::swap(pairs, &mut cand);
                    break 'moves;
                }
            }
            for v in (0..n1).filter(|&v| !used_s[v]) {
                cand.clone_from(pairs);
                cand[i].0 = v;
                cand.sort_unstable();
                let s = score_pairs(f, g1, g2, &cand);
                if s > cur {
                    (cur, improved) = (s, true);
                    std::mem::swap(pairs, &mut cand);
                    break 'moves;
                }
            }
        }
    }
}

/// Largest sum of `k` products `a_i b_j` over injective pairings, given both
/// lists sorted in decreasing order with `k <= len`.
///
/// By exchange, an optimal choice takes the top `i` and bottom `k - i` of `a`
/// and the top `j` and bottom `k - j` of `b`, paired in sorted order, where
/// `i` counts the nonnegative chosen `b` values. Enumerating `j` therefore
/// fixes `i`, and four diagonal prefix sums make each candidate O(1).
pub fn max_k_pairing(a_desc: &[f64], b_desc: &[f64], k: usize) -> f64 {
    debug_assert!(k <= a_desc.len() && k <= b_desc.len() && k <= 64);
    if k == 0 {
        return 0.0;
    }
    let (sa, sb) = (a_desc.len() - k, b_desc.len() - k);
    let mut tt = [0.0f64; 65];
    let mut bt = [0.0f64; 65];
    let mut tb = [0.0f64; 65];
    let mut bb = [0.0f64; 65];
    for s in 0..k {
        tt[s + 1] = tt[s] + a_desc[s] * b_desc[s];
        bt[s + 1] = bt[s] + a_desc[s + sa] * b_desc[s];
        tb[s + 1] = tb[s] + a_desc[s] * b_desc[s + sb];
        bb[s + 1] = bb[s] + a_desc[s + sa] * b_desc[s + sb];
    }
    let nonneg_b = b_desc.iter().take_while(|&&x| x >= 0.0).count();
    let neg_b = b_desc.len() - nonneg_b;
    let mut best = f64::NEG_INFINITY;
    for j in 0..=k {
        let i = j.min(nonneg_b) + (k - j).saturating_sub(neg_b);
        let (lo, hi) = (i.min(j), i.max(j));
        let mid = if i < j { bt[hi] - bt[lo] } else { tb[hi] - tb[lo] };
        best = best.max(tt[lo] + mid + bb[k] - bb[hi]);
    }
    best
}

/// Relative slack applied before pruning, absorbing rounding in the bound.
const PRUNE_REL_TOL: f64 = 1e-9;

struct Search<'a> {
    g1: &'a WeightedGraph,
    g2: &'a WeightedGraph,
    f: ScoreFn,
    n1: usize,
    n2: usize,
    m: usize,
    budget: u128,
    integral: bool,
    best: Option<(f64, Vec<(usize, usize)>)>,
    nodes: u128,
    pruned: u128,
    pairs: Vec<(usize, usize)>,
    used: u64,
    /// `lin[k]` is the linear-gain matrix after `k` assignments.
    lin: Vec<Vec<f64>>,
    // scratch
    a_sorted: Vec<f64>,
    b_sorted: Vec<f64>,
    cost: Vec<f64>,
    gains: Vec<f64>,
    col_best: Vec<f64>,
    /// The cost matrix equals the linear gains `lin[k]` and was not copied.
    cost_is_lin: bool,
    lap_cost: Vec<f64>,
    lap: Hungarian,
    /// Per-depth free-target and child-order buffers.
    free_bufs: Vec<Vec<usize>>,
    order_bufs: Vec<Vec<(f64, usize)>>,
}

impl<'a> Search<'a> {
    fn new(
        g1: &'a WeightedGraph,
        g2: &'a WeightedGraph,
        f: ScoreFn,
        m: usize,
        budget: u128,
        integral: bool,
        best: Option<(f64, Vec<(usize, usize)>)>,
    ) -> Self {
        let (n1, n2) = (g1.n(), g2.n());
        Search {
            g1,
            g2,
            f,
            n1,
            n2,
            m,
            budget,
            integral,
            best,
            nodes: 0,
            pruned: 0,
            pairs: Vec::with_capacity(m),
            used: 0,
            lin: vec![vec![0.0; n1 * n2]; m + 1],
            a_sorted: vec![0.0; n1 * n1],
            b_sorted: vec![0.0; n2 * n2],
            cost: vec![0.0; n1 * n2],
            gains: Vec::with_capacity(n1),
            col_best: vec![0.0; n2],
            cost_is_lin: false,
            lap_cost: Vec::with_capacity(n1 * (n1 + n2)),
            lap: Hungarian::default(),
            free_bufs: vec![Vec::with_capacity(n2); m + 1],
            order_bufs: vec![Vec::with_capacity(n2); m + 1],
        }
    }

    fn consider(&mut self, total: f64) {
        if beats(total, &self.pairs, &self.best) {
            self.best = Some((total, self.pairs.clone()));
        }
    }

    /// True when no completion of the current prefix can be lexicographically
    /// smaller than the incumbent.
    fn prefix_lex_greater(&self) -> bool {
        match &self.best {
            Some((_, bp)) => {
                let k = self.pairs.len();
                self.pairs.as_slice() > &bp[..k]
            }
            None => false,
        }
    }

    /// Fills `cost[x][w]` for undecided `x >= v` and free `w`: the exact
    /// linear gain plus an optimistic half share of the pair terms among
    /// future assignments. Writes the free targets into `free`.
    fn fill_cost(&mut self, v: usize, r: usize, free: &mut Vec<usize>) {
        let (n1, n2) = (self.n1, self.n2);
        let k = self.pairs.len();
        free.clear();
        free.extend((0..n2).filter(|&w| self.used & (1u64 << w) == 0));
        let free = &free[..];
        let nu = n1 - v;
        let nw = free.len();
        let kk = r - 1;
        if kk > 0 && self.f.kind() != ScoreKind::NegHalfSquaredDiff {
            self.sort_free_rows(free);
        }
        let lin = &self.lin[k];

        // the squared-difference score is never positive, and the pair term
        // it would add here is too weak to pay for itself
        self.cost_is_lin = kk == 0 || self.f.kind() == ScoreKind::NegHalfSquaredDiff;
        if self.cost_is_lin {
        } else if self.f.kind() == ScoreKind::Product {
            // sorted incident weights among undecided vertices / free targets
            let la = nu - 1;
            let lb = nw - 1;
            for x in v..n1 {
                let row = self.g1.row(x);
                let dst = &mut self.a_sorted[x * n1..x * n1 + la];
                let mut i = 0;
                for y in v..n1 {
                    if y != x {
                        dst[i] = row[y];
                        i += 1;
                    }
                }
                dst.sort_unstable_by(|p, q| q.total_cmp(p));
            }
            for x in v..n1 {
                let a = &self.a_sorted[x * n1..x * n1 + la];
                for &w in free {
                    let b = &self.b_sorted[w * n2..w * n2 + lb];
                    self.cost[x * n2 + w] = lin[x * n2 + w] + 0.5 * max_k_pairing(a, b, kk);
                }
            }
        } else {
            let lb = nw - 1;
            let f = self.f;
            self.gains.resize(nu, 0.0);
            for x in v..n1 {
                let row = self.g1.row(x);
                for &w in free {
                    let b = &self.b_sorted[w * n2..w * n2 + lb];
                    let mut cnt = 0;
                    for y in v..n1 {
                        if y != x {
                            self.gains[cnt] = best_against(&f, row[y], b);
                            cnt += 1;
                        }
                    }
                    let g = &mut self.gains[..cnt];
                    g.select_nth_unstable_by(kk - 1, |p, q| q.total_cmp(p));
                    let q: f64 = g[..kk].iter().sum();
                    self.cost[x * n2 + w] = lin[x * n2 + w] + 0.5 * q;
                }
            }
        }
    }

    fn cost(&self) -> &[f64] {
        if self.cost_is_lin {
            &self.lin[self.pairs.len()]
        } else {
            &self.cost
        }
    }

    /// Relaxed completion bound: the `r` best row maxima or column maxima of
    /// `cost`, whichever is smaller.
    fn greedy_bound(&mut self, v: usize, free: &[usize], r: usize) -> f64 {
        let (n1, n2) = (self.n1, self.n2);
        let cost = if self.cost_is_lin { &self.lin[self.pairs.len()] } else { &self.cost };
        let (rows, cols) = (&mut self.gains, &mut self.col_best);
        rows.clear();
        cols.clear();
        cols.resize(free.len(), f64::NEG_INFINITY);
        for x in v..n1 {
            let line = &cost[x * n2..(x + 1) * n2];
            let mut best = f64::NEG_INFINITY;
            for (c, &w) in cols.iter_mut().zip(free) {
                let val = line[w];
                best = best.max(val);
                *c = c.max(val);
            }
            rows.push(best);
        }
        top_sum(rows, r).min(top_sum(cols, r))
    }

    fn prunes(&self, ub: f64) -> bool {
        let Some((bs, _)) = &self.best else { return false };
        let bs = *bs;
        if self.integral {
            let ub = ub.floor();
            ub < bs || (ub == bs && self.prefix_lex_greater())
        } else {
            ub < bs - PRUNE_REL_TOL * bs.abs().max(1.0)
        }
    }

    /// Sorts, in decreasing order, each free target's weights to the other
    /// free targets.
    fn sort_free_rows(&mut self, free: &[usize]) {
        let n2 = self.n2;
        let lb = free.len() - 1;
        for &w in free {
            let row = self.g2.row(w);
            let dst = &mut self.b_sorted[w * n2..w * n2 + lb];
            let mut i = 0;
            for &u in free {
                if u != w {
                    dst[i] = row[u];
                    i += 1;
                }
            }
            dst.sort_unstable_by(|p, q| q.total_cmp(p));
        }
    }

    /// Best total of exactly `r` disjoint entries of `cost` over rows `v..n1`
    /// and the free columns: a rectangular assignment where `nu - r` dummy
    /// columns absorb the unmatched rows. Dummy columns carry a bonus larger
    /// than any cost spread, so every optimum uses all of them.
    fn assignment_bound(&mut self, v: usize, free: &[usize], r: usize) -> f64 {
        let (n1, n2) = (self.n1, self.n2);
        let nu = n1 - v;
        let nw = free.len();
        let cost = if self.cost_is_lin { &self.lin[self.pairs.len()] } else { &self.cost };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in v..n1 {
            for &w in free {
                let c = cost[x * n2 + w];
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        let bonus = (hi - lo) + 1.0;
        let cols = nw + nu - r;
        let mat = &mut self.lap_cost;
        mat.clear();
        for x in v..n1 {
            for &w in free {
                mat.push(-cost[x * n2 + w]);
            }
            mat.extend(std::iter::repeat_n(-bonus, nu - r));
        }
        let min_cost = self.lap.solve(mat, nu, cols);
        -min_cost - (nu - r) as f64 * bonus
    }

    fn dfs(&mut self, v: usize, total: f64) -> Result<()> {
        let k = self.pairs.len();
        let r = self.m - k;
        if r == 0 {
            self.consider(total);
            return Ok(());
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::Budget {
                what: "branch-and-bound nodes",
                needed: self.nodes,
                budget: self.budget,
            });
        }
        let mut free = std::mem::take(&mut self.free_bufs[k]);
        self.fill_cost(v, r, &mut free);
        let cheap = self.greedy_bound(v, &free, r);
        let pruned = self.prunes(total + cheap) || {
            let tight = self.assignment_bound(v, &free, r);
            self.prunes(total + tight)
        };
        if pruned {
            self.free_bufs[k] = free;
            self.pruned += 1;
            return Ok(());
        }

        // children: assignments of v in decreasing optimistic cost, then skip
        let n2 = self.n2;
        let mut order = std::mem::take(&mut self.order_bufs[k]);
        order.clear();
        let cost = self.cost();
        order.extend(free.iter().map(|&w| (cost[v * n2 + w], w)));
        self.free_bufs[k] = free;
        order.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, w) in &order {
            let gain_vw = self.lin[k][v * n2 + w];
            self.push_assignment(v, w);
            let res = self.dfs(v + 1, total + gain_vw);
            self.pop_assignment(w);
            res?;
        }
        self.order_bufs[k] = order;
        if self.n1 - v > r {
            self.dfs(v + 1, total)?;
        }
        Ok(())
    }

    fn push_assignment(&mut self, v: usize, w: usize) {
        let k = self.pairs.len();
        let (n1, n2) = (self.n1, self.n2);
        let (lo, hi) = self.lin.split_at_mut(k + 1);
        let src = &lo[k];
        let dst = &mut hi[0];
        let arow = self.g1.row(v);
        let brow = self.g2.row(w);
        // entries of used targets are never read, so only free ones are updated
        let free = !(self.used | 1u64 << w) & (u64::MAX >> (64 - n2));
        let update = |score: &dyn Fn(f64, f64) -> f64, dst: &mut [f64]| {
            for x in v + 1..n1 {
                let a = arow[x];
                let (s, d) = (&src[x * n2..(x + 1) * n2], &mut dst[x * n2..(x + 1) * n2]);
                let mut bits = free;
                while bits != 0 {
                    let y = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    d[y] = s[y] + score(a, brow[y]);
                }
            }
        };
        let f = self.f;
        match f.kind() {
            ScoreKind::Product => update(&|a, b| a * b, dst),
            ScoreKind::NegHalfSquaredDiff => update(&|a, b| f.eval(a, b), dst),
            ScoreKind::MleGauss => update(&|a, b| f.eval(a, b), dst),
        }
        self.pairs.push((v, w));
        self.used |= 1u64 << w;
    }

    fn pop_assignment(&mut self, w: usize) {
        self.pairs.pop();
        self.used &= !(1u64 << w);
    }
}

/// Sum of the `r` largest entries (reorders `xs`).
fn top_sum(xs: &mut [f64], r: usize) -> f64 {
    xs.select_nth_unstable_by(r - 1, |p, q| q.total_cmp(p));
    xs[..r].iter().sum()
}

/// `max_b f(a, b)` over a list sorted in decreasing order.
#[inline]
fn best_against(f: &ScoreFn, a: f64, b_desc: &[f64]) -> f64 {
    match f.peak(a) {
        None => f.eval(a, b_desc[0]).max(f.eval(a, b_desc[b_desc.len() - 1])),
        Some(t) => {
            let i = b_desc.partition_point(|&b| b > t);
            let mut g = f64::NEG_INFINITY;
            if i > 0 {
                g = f.eval(a, b_desc[i - 1]);
            }
            if i < b_desc.len() {
                g = g.max(f.eval(a, b_desc[i]));
            }
            g
        }
    }
}

/// Shortest-augmenting-path Hungarian method for a dense `rows x cols`
/// minimization with `rows <= cols`; buffers persist across calls.
#[derive(Default)]
struct Hungarian {
    u: Vec<f64>,
    v: Vec<f64>,
    p: Vec<usize>,
    way: Vec<usize>,
    minv: Vec<f64>,
    used: Vec<bool>,
}

impl Hungarian {
    fn solve(&mut self, a: &[f64], rows: usize, cols: usize) -> f64 {
        debug_assert!(rows <= cols && a.len() == rows * cols);
        // 1-based, column 0 is the virtual root
        self.u.clear();
        self.u.resize(rows + 1, 0.0);
        self.v.clear();
        self.v.resize(cols + 1, 0.0);
        self.p.clear();
        self.p.resize(cols + 1, 0);
        self.way.clear();
        self.way.resize(cols + 1, 0);
        for i in 1..=rows {
            self.p[0] = i;
            let mut j0 = 0;
            self.minv.clear();
            self.minv.resize(cols + 1, f64::INFINITY);
            self.used.clear();
            self.used.resize(cols + 1, false);
            loop {
                self.used[j0] = true;
                let i0 = self.p[j0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                let row = &a[(i0 - 1) * cols..i0 * cols];
                for j in 1..=cols {
                    if !self.used[j] {
                        let cur = row[j - 1] - self.u[i0] - self.v[j];
                        if cur < self.minv[j] {
                            self.minv[j] = cur;
                            self.way[j] = j0;
                        }
                        if self.minv[j] < delta {
                            delta = self.minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=cols {
                    if self.used[j] {
                        self.u[self.p[j]] += delta;
                        self.v[j] -= delta;
                    } else {
                        self.minv[j] -= delta;
                    }
                }
                j0 = j1;
                if self.p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = self.way[j0];
                self.p[j0] = self.p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        (1..=cols)
            .filter(|&j| self.p[j] != 0)
            .map(|j| a[(self.p[j] - 1) * cols + j - 1])
            .sum()
    }
}

/// Maximizes `score(pi) - lambda |pi|^2` over all sizes `0..=m_max`; ties go
/// to the smaller size, then to the lexicographically smaller mapping.
pub fn penalized_align(
    g1: &WeightedGraph,
    g2: &WeightedGraph,
    lambda: f64,
    kind: ScoreKind,
    rho_for_mle: Option<f64>,
    m_max: usize,
    budget: u128,
) -> Result<AlignmentResult> {
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("penalty {lambda} must be nonnegative")));
    }
    check_graphs(g1, g2, m_max)?;
    let mut best: Option<(f64, AlignmentResult)> = None;
    for m in 0..=m_max {
        let res = branch_and_bound_align(g1, g2, m, kind, rho_for_mle, budget)?;
        let obj = res.score - lambda * (m * m) as f64;
        if best.as_ref().map_or(true, |(b, _)| obj > *b) {
            best = Some((obj, res));
        }
    }
    Ok(best.expect("m = 0 is always feasible").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_instance, ModelParams};

    fn map(p: &[(usize, usize)]) -> InjectiveMapping {
        InjectiveMapping::new(p.to_vec()).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(injection_count(4, 4, 2), 72);
        assert_eq!(injection_count(4, 4, 3), 96);
        assert_eq!(injection_count(12, 12, 8), 495 * 495 * 40320);
        assert_eq!(injection_count(3, 3, 4), 0);
    }

    #[test]
    fn colex_and_permutations_enumerate_everything() {
        let mut v = vec![0, 1];
        let mut n = 1;
        while next_colex(&mut v, 5) {
            n += 1;
        }
        assert_eq!(n, 10);
        let mut p = vec![0, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut p) {
            n += 1;
        }
        assert_eq!(n, 24);
    }

    #[test]
    fn score_examples() {
        let tri = WeightedGraph::from_edges(4, &[(1, 2), (1, 3), (2, 3)]).unwrap();
        let id = map(&[(1, 1), (2, 2), (3, 3)]);
        assert_eq!(similarity_score(&tri, &tri, &id, ScoreKind::Product, None).unwrap(), 3.0);
        assert_eq!(similarity_score(&tri, &tri, &map(&[(1, 1)]), ScoreKind::Product, None).unwrap(), 0.0);
        assert!(similarity_score(&tri, &tri, &id, ScoreKind::MleGauss, None).is_err());
        let inst = sample_instance(&ModelParams::gaussian(6, 4, 1.0), 3).unwrap();
        let s = similarity_score(&inst.g1, &inst.g2, &inst.truth, ScoreKind::NegHalfSquaredDiff, None)
            .unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn overlap_and_distance() {
        let truth = map(&[(1, 1), (2, 2), (3, 3)]);
        let cand = map(&[(1, 1), (2, 3), (4, 2)]);
        assert!((overlap(&truth, &cand).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(overlap(&truth, &truth).unwrap(), 1.0);
        assert_eq!(overlap(&truth, &map(&[(5, 1), (6, 2), (7, 3)])).unwrap(), 0.0);
        assert!(overlap(&InjectiveMapping::empty(), &truth).is_err());
        assert_eq!(distance(&truth, &cand).unwrap(), 2);
        assert_eq!(distance(&truth, &truth).unwrap(), 0);
        assert!(distance(&truth, &map(&[(1, 1)])).is_err());
        let five = map(&[(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]);
        let off = map(&[(0, 0), (1, 1), (2, 2), (3, 3), (4, 9)]);
        assert_eq!(distance(&five, &off).unwrap(), 1);
    }

    #[test]
    fn path_instance_tie_break() {
        let g = WeightedGraph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let r = brute_force_align(&g, &g, 3, ScoreKind::Product, None, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.score, 2.0);
        assert_eq!(r.mapping, map(&[(0, 0), (1, 1), (2, 2)]));
        let b = branch_and_bound_align(&g, &g, 3, ScoreKind::Product, None, DEFAULT_BUDGET).unwrap();
        assert_eq!(b, r);
    }

    #[test]
    fn budget_guard() {
        let g = WeightedGraph::empty(12, WeightKind::Real);
        let e = brute_force_align(&g, &g, 8, ScoreKind::Product, None, DEFAULT_BUDGET).unwrap_err();
        assert!(matches!(e, Error::Budget { needed, .. } if needed == injection_count(12, 12, 8)));
        let e = branch_and_bound_align(&g, &g, 8, ScoreKind::Product, None, 10).unwrap_err();
        assert!(e.is_resource());
    }

    #[test]
    fn trivial_sizes() {
        let inst = sample_instance(&ModelParams::gaussian(1, 1, 0.5), 1).unwrap();
        let r = branch_and_bound_align(&inst.g1, &inst.g2, 1, ScoreKind::Product, None, 100).unwrap();
        assert_eq!(r.mapping, map(&[(0, 0)]));
        let inst = sample_instance(&ModelParams::gaussian(5, 3, 0.5), 1).unwrap();
        for m in 0..=2 {
            let a = brute_force_align(&inst.g1, &inst.g2, m, ScoreKind::Product, None, DEFAULT_BUDGET).unwrap();
            let b = branch_and_bound_align(&inst.g1, &inst.g2, m, ScoreKind::Product, None, DEFAULT_BUDGET).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pairing_bound_matches_exhaustive_search() {
        let mut rng = rng_from_seed(17);
        use rand::Rng;
        for _ in 0..2000 {
            let la = rng.random_range(1..7);
            let lb = rng.random_range(1..7);
            let mut a: Vec<f64> = (0..la)
                .map(|i| {
                    let x = rng.random_range(-2.0..2.0f64);
                    if i % 2 == 0 { x.round() } else { x }
                })
                .collect();
            let mut b: Vec<f64> = (0..lb).map(|_| rng.random_range(-2.0..2.0)).collect();
            a.sort_unstable_by(|p, q| q.total_cmp(p));
            b.sort_unstable_by(|p, q| q.total_cmp(p));
            let k = rng.random_range(0..=la.min(lb));
            let fast = max_k_pairing(&a, &b, k);
            let slow = exhaustive_pairing(&a, &b, k);
            assert!((fast - slow).abs() < 1e-9, "{a:?} {b:?} {k}: {fast} vs {slow}");
        }
    }

    fn exhaustive_pairing(a: &[f64], b: &[f64], k: usize) -> f64 {
        fn rec(a: &[f64], b: &[f64], used: &mut Vec<bool>, i: usize, k: usize) -> f64 {
            if k == 0 {
                return 0.0;
            }
            if a.len() - i < k {
                return f64::NEG_INFINITY;
            }
            let mut best = rec(a, b, used, i + 1, k);
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(a[i] * b[j] + rec(a, b, used, i + 1, k - 1));
                    used[j] = false;
                }
            }
            best
        }
        rec(a, b, &mut vec![false; b.len()], 0, k)
    }

    #[test]
    fn penalized_extremes() {
        let inst = sample_instance(&ModelParams::er(6, 4, 0.5, 0.8), 2).unwrap();
        let r = penalized_align(&inst.g1, &inst.g2, 0.0, ScoreKind::Product, None, 4, DEFAULT_BUDGET).unwrap();
        let full = branch_and_bound_align(&inst.g1, &inst.g2, 4, ScoreKind::Product, None, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.score, full.score);
        let r = penalized_align(&inst.g1, &inst.g2, 1e6, ScoreKind::Product, None, 4, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.mapping.len(), 0);
        assert_eq!(r.score, 0.0);
    }
}
