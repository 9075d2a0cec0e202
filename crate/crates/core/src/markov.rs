//! Stationary distributions, reversibilization and set statistics.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::matrix::StochasticMatrix;

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// `||pi P - pi||_1` at exit.
    pub residual: f64,
    pub iterations: usize,
}

impl StationaryDistribution {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// Reversibilized chain together with the weight it is reversible for.
#[derive(Clone, Debug)]
pub struct ReversibleChain {
    pub q: StochasticMatrix,
    pub pi: StationaryDistribution,
}

fn l1_residual(p: &StochasticMatrix, pi: &[f64]) -> f64 {
    p.left_mul(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// Strongly connected components, each sorted, listed by smallest member.
pub fn communicating_classes(p: &StochasticMatrix) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(p.n(), p.nnz());
    let nodes: Vec<_> = (0..p.n()).map(|_| g.add_node(())).collect();
    for i in 0..p.n() {
        for (j, _) in p.row(i) {
            g.add_edge(nodes[i], nodes[j], ());
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    classes
}

/// Communicating classes with no transitions leaving them.
pub fn closed_classes(p: &StochasticMatrix) -> Vec<Vec<usize>> {
    let classes = communicating_classes(p);
    let mut label = vec![0usize; p.n()];
    for (c, members) in classes.iter().enumerate() {
        for &s in members {
            label[s] = c;
        }
    }
    classes
        .into_iter()
        .enumerate()
        .filter(|(c, members)| members.iter().all(|&i| p.row(i).all(|(j, _)| label[j] == *c)))
        .map(|(_, m)| m)
        .collect()
}

pub fn is_irreducible(p: &StochasticMatrix) -> bool {
    communicating_classes(p).len() == 1
}

fn power_iteration(p: &StochasticMatrix, start: Vec<f64>, tol: f64, max_iter: usize) -> Result<StationaryDistribution> {
    let mut pi = start;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let mut next = p.left_mul(&pi);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual <= tol {
            return Ok(StationaryDistribution { pi, residual, iterations: it + 1 });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

/// Unique stationary distribution by power iteration from the uniform vector.
///
/// Chains with more than one closed class have no unique answer and are
/// rejected up front; periodic chains surface as non-convergence.
pub fn stationary(p: &StochasticMatrix, tol: f64, max_iter: usize) -> Result<StationaryDistribution> {
    let n = p.n();
    if n == 0 {
        return Err(Error::Domain("empty chain".into()));
    }
    let closed = closed_classes(p).len();
    if closed > 1 {
        return Err(Error::NotUnique { classes: closed });
    }
    let uniform = vec![1.0 / n as f64; n];
    let r = l1_residual(p, &uniform);
    if r <= tol {
        return Ok(StationaryDistribution { pi: uniform, residual: r, iterations: 0 });
    }
    power_iteration(p, uniform, tol, max_iter)
}

/// Stationary vector of a chain whose states all lie in closed classes,
/// mixing the per-class solutions in proportion to class size (equal box
/// measure makes this the normalized-measure weighting).
pub fn stationary_mixture(p: &StochasticMatrix, tol: f64, max_iter: usize) -> Result<StationaryDistribution> {
    let n = p.n();
    let classes = closed_classes(p);
    let covered: usize = classes.iter().map(|c| c.len()).sum();
    if covered != n {
        return Err(Error::Degenerate(format!("{} transient states carry no stationary mass", n - covered)));
    }
    let mut pi = vec![0.0; n];
    let mut iterations = 0;
    for class in &classes {
        let sub = p.restrict(class);
        let local = stationary(&sub, tol, max_iter)?;
        iterations = iterations.max(local.iterations);
        let w = class.len() as f64 / n as f64;
        for (&s, v) in class.iter().zip(&local.pi) {
            pi[s] = w * v;
        }
    }
    let residual = l1_residual(p, &pi);
    Ok(StationaryDistribution { pi, residual, iterations })
}

/// `Q = (L + P) / 2` with `L_ij = pi_j P_ji / pi_i`.
///
/// Off-diagonal entries follow the formula; the diagonal absorbs the
/// stationarity defect so rows sum to one without touching detailed balance.
pub fn reversibilize(p: &StochasticMatrix, pi: &StationaryDistribution) -> Result<ReversibleChain> {
    let n = p.n();
    if pi.len() != n {
        return Err(Error::Domain(format!("pi has length {}, chain has {n} states", pi.len())));
    }
    if let Some(i) = pi.pi.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Degenerate(format!("pi[{i}] = {} is not positive", pi.pi[i])));
    }
    let r = l1_residual(p, &pi.pi);
    if r > 1e-8 {
        return Err(Error::Degenerate(format!("pi is not stationary (residual {r:e})")));
    }
    let w = &pi.pi;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, v) in p.row(i) {
            if i != j {
                rows[i].push((j, 0.5 * v));
                rows[j].push((i, 0.5 * w[i] * v / w[j]));
            }
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let off: f64 = row.iter().map(|(_, v)| v).sum();
        row.push((i, (1.0 - off).max(0.0)));
    }
    let q = StochasticMatrix::from_rows(n, rows)?;
    Ok(ReversibleChain { q, pi: pi.clone() })
}

impl ReversibleChain {
    pub fn n(&self) -> usize {
        self.q.n()
    }

    /// Largest `|pi_j Q_ji - pi_i Q_ij| / max(pi_i, pi_j)` over stored entries.
    pub fn detailed_balance_residual(&self) -> f64 {
        let w = &self.pi.pi;
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            for (j, v) in self.q.row(i) {
                let d = (w[j] * self.q.get(j, i) - w[i] * v).abs() / w[i].max(w[j]);
                worst = worst.max(d);
            }
        }
        worst
    }
}

fn check_set(a: &[usize], n: usize) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Domain("empty state set".into()));
    }
    if let Some(&s) = a.iter().find(|&&s| s >= n) {
        return Err(Error::Domain(format!("state {s} out of range")));
    }
    Ok(())
}

/// `w(Aj, Ai) = sum_{i in Ai, j in Aj} pi_i Q_ij / sum_{i in Ai} pi_i`.
pub fn conditional_transition(ai: &[usize], aj: &[usize], chain: &ReversibleChain) -> Result<f64> {
    let n = chain.n();
    check_set(ai, n)?;
    if let Some(&s) = aj.iter().find(|&&s| s >= n) {
        return Err(Error::Domain(format!("state {s} out of range")));
    }
    let mut target = vec![false; n];
    aj.iter().for_each(|&j| target[j] = true);
    let w = &chain.pi.pi;
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in ai {
        den += w[i];
        num += w[i] * chain.q.row(i).filter(|&(j, _)| target[j]).map(|(_, v)| v).sum::<f64>();
    }
    Ok(num / den)
}

/// Probability of staying in `a` for one step, weighted by `pi`.
pub fn invariance_ratio(a: &[usize], chain: &ReversibleChain) -> Result<f64> {
    conditional_transition(a, a, chain)
}

/// `<x, y>_pi = sum x_i y_i pi_i`.
pub fn weighted_inner(x: &[f64], y: &[f64], pi: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != pi.len() {
        return Err(Error::Domain(format!("lengths {} / {} / {}", x.len(), y.len(), pi.len())));
    }
    Ok(x.iter().zip(y).zip(pi).map(|((a, b), w)| a * b * w).sum())
}
