//! Dominant spectra of reversible chains, sign-structure partitions,
//! localization scores and eigenpair matching between nearby chains.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::eigen::{self, LanczosOptions};
use crate::error::{Error, Result};
use crate::markov::{self, ReversibleChain};

/// Chains up to this size use the dense solver under [`Solver::Auto`].
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Leading eigenpairs of `Q`, descending, with `pi`-orthonormal right vectors.
#[derive(Clone, Debug)]
pub struct SpectralSet {
    pub values: Vec<f64>,
    /// Right eigenvectors `X_i`.
    pub vectors: Vec<Vec<f64>>,
    /// `||Q X_i - lambda_i X_i||_2`.
    pub residuals: Vec<f64>,
    pub pi: Vec<f64>,
}

impl SpectralSet {
    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    /// `U_i = diag(pi) X_i`.
    pub fn left_vector(&self, i: usize) -> Vec<f64> {
        self.vectors[i].iter().zip(&self.pi).map(|(x, p)| x * p).collect()
    }

    /// Re-expresses the set on a larger state space; `states[k]` is the
    /// position of local state `k`, everything else is zero.
    pub fn embed(&self, states: &[usize], n_full: usize) -> SpectralSet {
        let spread = |v: &Vec<f64>| {
            let mut out = vec![0.0; n_full];
            for (&s, x) in states.iter().zip(v) {
                out[s] = *x;
            }
            out
        };
        SpectralSet {
            values: self.values.clone(),
            vectors: self.vectors.iter().map(spread).collect(),
            residuals: self.residuals.clone(),
            pi: spread(&self.pi),
        }
    }
}

/// Entry of largest magnitude made positive (first such entry on ties).
fn fix_sign(x: &mut [f64]) {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    if x[best] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `m` largest eigenpairs of the reversible chain.
pub fn dominant_spectrum(chain: &ReversibleChain, m: usize) -> Result<SpectralSet> {
    dominant_spectrum_with(chain, m, Solver::Auto)
}

/// As [`dominant_spectrum`] with an explicit solver choice.
///
/// Works on `S = D^{1/2} Q D^{-1/2}`, symmetric by detailed balance, and maps
/// its eigenvectors back through `X = D^{-1/2} v`.
pub fn dominant_spectrum_with(chain: &ReversibleChain, m: usize, solver: Solver) -> Result<SpectralSet> {
    let n = chain.n();
    if m == 0 || m > n {
        return Err(Error::Domain(format!("cannot compute {m} eigenpairs of a {n}-state chain")));
    }
    let pi = &chain.pi.pi;
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let q = &chain.q;
    // Symmetric entry from the two stored halves.
    let s_entry = |i: usize, j: usize, qij: f64| 0.5 * (sq[i] / sq[j] * qij + sq[j] / sq[i] * q.get(j, i));

    let dense = match solver {
        Solver::Dense => true,
        Solver::Lanczos => false,
        Solver::Auto => n <= DENSE_LIMIT,
    };
    let sym = if dense {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for (j, v) in q.row(i) {
                a[i * n + j] = s_entry(i, j, v);
            }
        }
        eigen::dense_top(&a, n, m)?
    } else {
        let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| q.row(i).map(|(j, v)| (j, s_entry(i, j, v))).collect()).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for (i, row) in rows.iter().enumerate() {
                y[i] = row.iter().map(|&(j, v)| v * x[j]).sum();
            }
        };
        let opts = LanczosOptions { ..Default::default() };
        eigen::lanczos_top(n, m, apply, opts)?
    };

    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (lambda, v) in sym.values.iter().zip(&sym.vectors) {
        let mut x: Vec<f64> = v.iter().zip(&sq).map(|(a, s)| a / s).collect();
        fix_sign(&mut x);
        let qx = q.mul_vec(&x);
        let r = qx.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        residuals.push(r);
        vectors.push(x);
    }
    Ok(SpectralSet { values: sym.values, vectors, residuals, pi: pi.clone() })
}

/// Almost-invariant sets read off one eigenvector's sign structure.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPartition {
    /// Set id per state.
    pub labels: Vec<usize>,
    /// Members of each set, ascending; sets ordered by smallest member.
    pub sets: Vec<Vec<usize>>,
    /// Invariance ratio of each set.
    pub ratios: Vec<f64>,
}

/// Splits the states into `j` sets using the signs of `U_j` (1-based, so the
/// `j`-th eigenvector). Entries below `dead_zone * max|U_j|` start undecided;
/// sign components are grown from the `j` heaviest (by `pi` mass), the rest
/// join the neighbouring set they touch most.
pub fn sign_partition(
    spectrum: &SpectralSet,
    j: usize,
    adjacency: &[Vec<usize>],
    dead_zone: f64,
    chain: &ReversibleChain,
) -> Result<LabeledPartition> {
    if j < 2 || j > spectrum.m() {
        return Err(Error::Domain(format!("j = {j} outside [2, {}]", spectrum.m())));
    }
    if !(dead_zone >= 0.0) {
        return Err(Error::Domain(format!("dead zone {dead_zone} must be nonnegative")));
    }
    let n = spectrum.n();
    if adjacency.len() != n || chain.n() != n {
        return Err(Error::Domain("adjacency / chain size does not match the spectrum".into()));
    }
    let u = spectrum.left_vector(j - 1);
    let cut = dead_zone * u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sign: Vec<i8> = u.iter().map(|&v| if v.abs() <= cut { 0 } else if v > 0.0 { 1 } else { -1 }).collect();
    let pi = &spectrum.pi;

    // Sign components under the adjacency.
    const NONE: usize = usize::MAX;
    let mut comp = vec![NONE; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if sign[s] == 0 || comp[s] != NONE {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut queue = VecDeque::from([s]);
        while let Some(a) = queue.pop_front() {
            for &b in &adjacency[a] {
                if comp[b] == NONE && sign[b] == sign[s] {
                    comp[b] = id;
                    members.push(b);
                    queue.push_back(b);
                }
            }
        }
        comps.push(members);
    }
    if comps.len() < j {
        return Err(Error::Partition { achievable: comps.len(), requested: j });
    }
    let mass = |c: &[usize]| c.iter().map(|&s| pi[s]).sum::<f64>();
    let mut order: Vec<usize> = (0..comps.len()).collect();
    order.sort_by(|&a, &b| mass(&comps[b]).total_cmp(&mass(&comps[a])).then(comps[a][0].cmp(&comps[b][0])));

    let mut label = vec![NONE; n];
    for (set, &c) in order.iter().take(j).enumerate() {
        comps[c].iter().for_each(|&s| label[s] = set);
    }
    let contact = |members: &[usize], label: &[usize]| {
        let mut counts = vec![0usize; j];
        for &a in members {
            for &b in &adjacency[a] {
                if label[b] != NONE {
                    counts[label[b]] += 1;
                }
            }
        }
        counts
    };
    let best = |counts: &[usize]| {
        let (arg, &top) = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).unwrap();
        (top > 0).then_some(arg)
    };

    // Remaining components, heaviest first; those without a labelled
    // neighbour wait for a later pass.
    let mut pending: Vec<usize> = order[j..].to_vec();
    while !pending.is_empty() {
        let mut deferred = Vec::new();
        for &c in &pending {
            match best(&contact(&comps[c], &label)) {
                Some(set) => comps[c].iter().for_each(|&s| label[s] = set),
                None => deferred.push(c),
            }
        }
        if deferred.len() == pending.len() {
            // Disconnected leftovers join the heaviest set.
            for &c in &deferred {
                comps[c].iter().for_each(|&s| label[s] = 0);
            }
            break;
        }
        pending = deferred;
    }

    // Undecided states, attached in index order pass by pass.
    let mut pending: Vec<usize> = (0..n).filter(|&s| label[s] == NONE).collect();
    while !pending.is_empty() {
        let mut deferred = Vec::new();
        for &s in &pending {
            match best(&contact(&[s], &label)) {
                Some(set) => label[s] = set,
                None => deferred.push(s),
            }
        }
        if deferred.len() == pending.len() {
            deferred.iter().for_each(|&s| label[s] = 0);
            break;
        }
        pending = deferred;
    }

    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); j];
    for (s, &l) in label.iter().enumerate() {
        sets[l].push(s);
    }
    sets.sort_by_key(|s| s[0]);
    let mut labels = vec![0; n];
    for (id, set) in sets.iter().enumerate() {
        set.iter().for_each(|&s| labels[s] = id);
    }
    let ratios = sets.iter().map(|s| markov::invariance_ratio(s, chain)).collect::<Result<Vec<_>>>()?;
    Ok(LabeledPartition { labels, sets, ratios })
}

/// `pi`-mass of the normalized eigenvector `X_i` inside `region`.
pub fn localization_score(spectrum: &SpectralSet, i: usize, region: &[usize]) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Domain("empty localization region".into()));
    }
    let x = &spectrum.vectors[i];
    let pi = &spectrum.pi;
    let total: f64 = x.iter().zip(pi).map(|(v, p)| p * v * v).sum();
    let inside: f64 = region.iter().map(|&s| pi[s] * x[s] * x[s]).sum();
    Ok(inside / total)
}

/// `<X, R X>_pi / <X, X>_pi` for a state permutation `reflect`; its sign
/// tells whether the vector is even or odd under the reflection.
pub fn reflection_parity(x: &[f64], pi: &[f64], reflect: &[usize]) -> f64 {
    let num: f64 = (0..x.len()).map(|s| pi[s] * x[s] * x[reflect[s]]).sum();
    let den: f64 = x.iter().zip(pi).map(|(v, p)| p * v * v).sum();
    num / den
}

/// Tuning for [`match_eigenpairs_with`].
#[derive(Clone, Debug)]
pub struct MatchOptions {
    /// Eigenvalues closer than this are treated as one degenerate cluster.
    pub degeneracy_tol: f64,
    /// Optional symmetry labels of the previous and next vectors; pairs with
    /// different labels have their overlap scaled by `cross_label_weight`.
    pub labels: Option<(Vec<u8>, Vec<u8>)>,
    pub cross_label_weight: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions { degeneracy_tol: 1e-10, labels: None, cross_label_weight: 1e-3 }
    }
}

/// Assignment of next eigenpairs to previous ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// For each next index, the matched previous index.
    pub assignment: Vec<Option<usize>>,
    /// `|<X_prev, X_next>_pi|` (subspace overlap inside degenerate clusters).
    pub overlaps: Vec<f64>,
}

/// Greedy maximum-overlap matching with default options.
pub fn match_eigenpairs(prev: &SpectralSet, next: &SpectralSet, pi: &[f64]) -> Result<Matching> {
    match_eigenpairs_with(prev, next, pi, &MatchOptions::default())
}

fn clusters(values: &[f64], tol: f64) -> Vec<usize> {
    let mut id = vec![0; values.len()];
    for k in 1..values.len() {
        id[k] = if (values[k - 1] - values[k]).abs() <= tol { id[k - 1] } else { id[k - 1] + 1 };
    }
    id
}

/// Pairs are taken in decreasing overlap (ties: smaller eigenvalue gap);
/// inside degenerate clusters the overlap is the root mean square of the
/// pairwise overlaps between the two eigenspaces.
pub fn match_eigenpairs_with(prev: &SpectralSet, next: &SpectralSet, pi: &[f64], opts: &MatchOptions) -> Result<Matching> {
    if prev.n() != next.n() || pi.len() != next.n() {
        return Err(Error::Domain(format!("state spaces differ: {} / {} / {}", prev.n(), next.n(), pi.len())));
    }
    let (mp, mn) = (prev.m(), next.m());
    let raw: Vec<Vec<f64>> = prev
        .vectors
        .iter()
        .map(|a| next.vectors.iter().map(|b| markov::weighted_inner(a, b, pi).map(f64::abs)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let (cp, cn) = (clusters(&prev.values, opts.degeneracy_tol), clusters(&next.values, opts.degeneracy_tol));
    let mut score = raw.clone();
    for i in 0..mp {
        for k in 0..mn {
            let pa: Vec<usize> = (0..mp).filter(|&a| cp[a] == cp[i]).collect();
            let nb: Vec<usize> = (0..mn).filter(|&b| cn[b] == cn[k]).collect();
            if pa.len() > 1 || nb.len() > 1 {
                let ss: f64 = pa.iter().flat_map(|&a| nb.iter().map(move |&b| (a, b))).map(|(a, b)| raw[a][b].powi(2)).sum();
                score[i][k] = (ss / pa.len().max(nb.len()) as f64).sqrt();
            }
            if let Some((lp, ln)) = &opts.labels
                && lp[i] != ln[k]
            {
                score[i][k] *= opts.cross_label_weight;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (0..mp).flat_map(|i| (0..mn).map(move |k| (i, k))).collect();
    pairs.sort_by(|&(i, k), &(a, b)| {
        score[a][b]
            .total_cmp(&score[i][k])
            .then((prev.values[i] - next.values[k]).abs().total_cmp(&(prev.values[a] - next.values[b]).abs()))
            .then((i, k).cmp(&(a, b)))
    });
    let mut used_prev = vec![false; mp];
    let mut assignment = vec![None; mn];
    let mut overlaps = vec![0.0; mn];
    let mut left = mp.min(mn);
    for (i, k) in pairs {
        if left == 0 {
            break;
        }
        if used_prev[i] || assignment[k].is_some() {
            continue;
        }
        used_prev[i] = true;
        assignment[k] = Some(i);
        overlaps[k] = score[i][k];
        left -= 1;
    }
    Ok(Matching { assignment, overlaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{reversibilize, stationary};
    use crate::matrix::StochasticMatrix;

    fn ring(n: usize, stay: f64) -> ReversibleChain {
        let rows = (0..n)
            .map(|i| vec![(i, stay), ((i + 1) % n, (1.0 - stay) / 2.0), ((i + n - 1) % n, (1.0 - stay) / 2.0)])
            .collect();
        let p = StochasticMatrix::from_rows(n, rows).unwrap();
        let pi = stationary(&p, 1e-12, 1000).unwrap();
        reversibilize(&p, &pi).unwrap()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let p = StochasticMatrix::identity(5);
        let pi = markov::stationary_mixture(&p, 1e-12, 10).unwrap();
        let c = reversibilize(&p, &pi).unwrap();
        let s = dominant_spectrum(&c, 5).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn ring_spectrum_is_cosine() {
        let n = 12;
        let c = ring(n, 0.5);
        let s = dominant_spectrum(&c, 3).unwrap();
        let cos = (2.0 * std::f64::consts::PI / n as f64).cos();
        assert!((s.values[0] - 1.0).abs() < 1e-12);
        assert!((s.values[1] - (0.5 + 0.5 * cos)).abs() < 1e-12);
        assert!((s.values[2] - (0.5 + 0.5 * cos)).abs() < 1e-12);
        assert!(s.vectors[0].iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(s.residuals.iter().all(|r| *r < 1e-10));
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let c = ring(200, 0.3);
        let a = dominant_spectrum_with(&c, 6, Solver::Dense).unwrap();
        let b = dominant_spectrum_with(&c, 6, Solver::Lanczos).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn localization_extremes() {
        let c = ring(4, 0.5);
        let s = dominant_spectrum(&c, 1).unwrap();
        assert!((localization_score(&s, 0, &[0, 1, 2, 3]).unwrap() - 1.0).abs() < 1e-12);
        assert!((localization_score(&s, 0, &[0, 1]).unwrap() - 0.5).abs() < 1e-12);
        assert!(localization_score(&s, 0, &[]).is_err());
    }

    #[test]
    fn matching_follows_vectors_not_order() {
        let c = ring(10, 0.5);
        let s = dominant_spectrum(&c, 4).unwrap();
        let m = match_eigenpairs(&s, &s, &s.pi).unwrap();
        assert_eq!(m.assignment[0], Some(0));
        assert_eq!(m.assignment[3], Some(3));
        assert!(m.overlaps.iter().all(|o| (o - 1.0).abs() < 1e-10));

        let mut swapped = s.clone();
        swapped.values.swap(0, 3);
        swapped.vectors.swap(0, 3);
        let m = match_eigenpairs(&s, &swapped, &s.pi).unwrap();
        assert_eq!(m.assignment[0], Some(3));
        assert_eq!(m.assignment[3], Some(0));
    }
}
