//! Ulam discretization of a flow map over a box partition.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FlowMap, Point};
use crate::error::{Error, Result};
use crate::markov::{self, StationaryDistribution};
use crate::matrix::StochasticMatrix;
use crate::partition::{sample_points, BoxPartition, Located, SamplePlan};

/// What happens to samples that leave the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinkPolicy {
    /// Collect escapes in an extra absorbing state `N`.
    Absorb,
    /// Drop escaped samples and normalize over the ones that stay.
    DiscardAfter,
}

#[derive(Clone, Debug)]
pub struct UlamConfig {
    pub flow: FlowMap,
    pub partition: BoxPartition,
    pub plan: SamplePlan,
    /// Radius of the uniform disk noise applied before and after the flow.
    pub epsilon: f64,
    pub sink: SinkPolicy,
}

impl UlamConfig {
    pub fn new(flow: FlowMap, partition: BoxPartition, plan: SamplePlan) -> Self {
        UlamConfig { flow, partition, plan, epsilon: 0.0, sink: SinkPolicy::Absorb }
    }

    pub fn validate(&self) -> Result<()> {
        if self.plan.per_box == 0 {
            return Err(Error::Config("at least one sample per box is required".into()));
        }
        let min_side = self.partition.dx.min(self.partition.dy);
        if !(self.epsilon >= 0.0) || (self.epsilon > 0.0 && self.epsilon >= min_side) {
            return Err(Error::Config(format!(
                "epsilon {} must be >= 0 and below the smallest box side {min_side}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-assembly diagnostics.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub n_boxes: usize,
    pub has_sink: bool,
    pub nnz: usize,
    pub samples_per_box: usize,
    /// Fraction of each box's samples that left the domain.
    pub escape_mass: Vec<f64>,
    pub failed_samples: usize,
    /// Wall-clock time; excluded from serialized output to keep files reproducible.
    #[serde(skip)]
    pub elapsed_ms: f64,
}

const DIFFUSION_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn disk_draw(rng: &mut ChaCha8Rng, eps: f64) -> Point {
    loop {
        let u = 2.0 * rng.r#gen::<f64>() - 1.0;
        let v = 2.0 * rng.r#gen::<f64>() - 1.0;
        if u * u + v * v <= 1.0 {
            return [eps * u, eps * v];
        }
    }
}

/// Where each sample of `box_index` ends up; `None` marks an integration failure.
pub fn map_samples(config: &UlamConfig, box_index: usize) -> Vec<Option<Located>> {
    let part = &config.partition;
    let mut rng = (config.epsilon > 0.0).then(|| {
        let mut r = ChaCha8Rng::seed_from_u64(config.plan.seed ^ DIFFUSION_STREAM_SALT);
        r.set_stream(box_index as u64);
        r
    });
    sample_points(part, box_index, &config.plan)
        .into_iter()
        .map(|mut x| {
            if let Some(r) = rng.as_mut() {
                let d = disk_draw(r, config.epsilon);
                x = [x[0] + d[0], x[1] + d[1]];
            }
            let mut y = config.flow.integrate(x).ok()?;
            if let Some(r) = rng.as_mut() {
                let d = disk_draw(r, config.epsilon);
                y = [y[0] + d[0], y[1] + d[1]];
            }
            Some(part.locate_finite(y))
        })
        .collect()
}

/// Assembles the row-stochastic transition matrix; a sink row/column is
/// appended under [`SinkPolicy::Absorb`] whenever some sample escapes.
///
/// Samples whose integration blows up count as escapes; a box in which every
/// sample fails is an error.
pub fn build_ulam(config: &UlamConfig) -> Result<(StochasticMatrix, AssemblyReport)> {
    config.validate()?;
    let start = Instant::now();
    let n = config.partition.n_boxes();
    let rows: Vec<(BTreeMap<usize, usize>, usize, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let mut counts = BTreeMap::new();
            let (mut escaped, mut failed) = (0, 0);
            let hits = map_samples(config, b);
            let total = hits.len();
            for h in hits {
                match h {
                    Some(Located::Box(j)) => *counts.entry(j).or_insert(0) += 1,
                    Some(Located::Sink) => escaped += 1,
                    None => {
                        failed += 1;
                        escaped += 1;
                    }
                }
            }
            (counts, escaped, failed, total)
        })
        .collect();

    let mut failed_samples = 0;
    let mut escape_mass = Vec::with_capacity(n);
    for (b, (_, escaped, failed, total)) in rows.iter().enumerate() {
        if *failed == *total {
            return Err(Error::Assembly(b));
        }
        failed_samples += failed;
        escape_mass.push(*escaped as f64 / *total as f64);
    }
    let any_escape = rows.iter().any(|r| r.1 > 0);
    let with_sink = any_escape && config.sink == SinkPolicy::Absorb;
    let size = if with_sink { n + 1 } else { n };

    let mut triplets: Vec<Vec<(usize, f64)>> = rows
        .into_iter()
        .enumerate()
        .map(|(b, (counts, escaped, _, total))| {
            let kept = match config.sink {
                SinkPolicy::Absorb => total,
                SinkPolicy::DiscardAfter => total - escaped,
            };
            if kept == 0 {
                // Everything left: the box maps to itself so the row stays stochastic.
                return vec![(b, 1.0)];
            }
            let denom = kept as f64;
            let mut row: Vec<(usize, f64)> = counts.into_iter().map(|(j, c)| (j, c as f64 / denom)).collect();
            if with_sink && escaped > 0 {
                row.push((n, escaped as f64 / denom));
            }
            row
        })
        .collect();
    if with_sink {
        triplets.push(vec![(n, 1.0)]);
    }
    let matrix = StochasticMatrix::from_rows(size, triplets)?;
    let report = AssemblyReport {
        n_boxes: n,
        has_sink: with_sink,
        nnz: matrix.nnz(),
        samples_per_box: config.plan.per_box,
        escape_mass,
        failed_samples,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((matrix, report))
}

/// Principal `N x N` block after removing the sink state.
#[derive(Clone, Debug)]
pub struct Stripped {
    pub matrix: StochasticMatrix,
    /// True when at least one row had mass removed and was rescaled.
    pub renormalized: bool,
    /// Mass each row sent to the sink.
    pub escape: Vec<f64>,
    /// Rows that lost more than half their mass.
    pub lossy_rows: Vec<usize>,
}

/// Drops state `n_boxes` (the sink) and rescales the affected rows.
/// A row that sent everything to the sink becomes a self-loop.
pub fn strip_sink(matrix: &StochasticMatrix, partition: &BoxPartition) -> Result<Stripped> {
    let n = partition.n_boxes();
    if matrix.n() != n + 1 {
        return Err(Error::Domain(format!("expected {} states with sink, found {}", n + 1, matrix.n())));
    }
    let mut renormalized = false;
    let mut escape = Vec::with_capacity(n);
    let mut lossy_rows = Vec::new();
    let rows = (0..n)
        .map(|i| {
            let out = matrix.get(i, n);
            escape.push(out);
            if out > 0.5 {
                lossy_rows.push(i);
            }
            let kept: Vec<(usize, f64)> = matrix.row(i).filter(|&(j, _)| j < n).collect();
            if out == 0.0 {
                return kept;
            }
            renormalized = true;
            let s: f64 = kept.iter().map(|(_, v)| v).sum();
            if s == 0.0 {
                return vec![(i, 1.0)];
            }
            kept.into_iter().map(|(j, v)| (j, v / s)).collect()
        })
        .collect();
    Ok(Stripped { matrix: StochasticMatrix::from_rows(n, rows)?, renormalized, escape, lossy_rows })
}

/// Recurrent part of a box chain on which the reversible analysis runs.
#[derive(Clone, Debug)]
pub struct Core {
    /// Box indices kept, ascending.
    pub states: Vec<usize>,
    pub matrix: StochasticMatrix,
    pub pi: StationaryDistribution,
    /// Number of closed classes kept.
    pub classes: usize,
}

/// Restricts a chain to the union of its closed classes among the large
/// communicating classes.
///
/// Classes smaller than `min_fraction` of the largest one are treated as
/// discretization debris (isolated boxes, leaky boundary rows) and removed;
/// after renormalizing, only classes without exits are kept. The stationary
/// weight mixes the per-class solutions in proportion to box count.
pub fn restrict_to_core(p: &StochasticMatrix, min_fraction: f64) -> Result<Core> {
    let classes = markov::communicating_classes(p);
    let largest = classes.iter().map(|c| c.len()).max().unwrap_or(0);
    if largest == 0 {
        return Err(Error::Degenerate("empty chain".into()));
    }
    let threshold = (min_fraction * largest as f64).max(1.0);
    let mut states: Vec<usize> = classes.iter().filter(|c| c.len() as f64 >= threshold).flatten().copied().collect();
    states.sort_unstable();
    let mut sub = p.restrict(&states);
    sub.normalize_rows();

    let closed = markov::closed_classes(&sub);
    let mut keep: Vec<usize> = closed.iter().flatten().copied().collect();
    keep.sort_unstable();
    let mut matrix = sub.restrict(&keep);
    matrix.normalize_rows();
    let states: Vec<usize> = keep.iter().map(|&k| states[k]).collect();
    let pi = markov::stationary_mixture(&matrix, markov::STATIONARY_TOL, markov::STATIONARY_MAX_ITER)?;
    Ok(Core { states, matrix, pi, classes: closed.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VectorField;
    use crate::partition::Rect;

    fn config(field: VectorField, domain: Rect, depth: u32, t: f64, per_box: usize) -> UlamConfig {
        UlamConfig::new(
            FlowMap::new(field, t, 0.01).unwrap(),
            BoxPartition::new(domain, depth).unwrap(),
            SamplePlan::grid(per_box),
        )
    }

    #[test]
    fn zero_time_gives_identity() {
        let (p, report) = build_ulam(&config(VectorField::SingleGyre, Rect::unit(), 4, 0.0, 9)).unwrap();
        assert_eq!(p, StochasticMatrix::identity(16));
        assert!(!report.has_sink);
    }

    #[test]
    fn escapes_go_to_an_absorbing_sink() {
        let drift = VectorField::custom("drift", 0.0, |_| [1.0, 0.0]);
        let cfg = config(drift, Rect::unit(), 2, 0.5, 4);
        let (p, report) = build_ulam(&cfg).unwrap();
        assert_eq!(p.n(), 5);
        assert_eq!(p.get(4, 4), 1.0);
        // Right column boxes lose every sample.
        assert_eq!(report.escape_mass, vec![0.0, 1.0, 0.0, 1.0]);
        p.check_stochastic().unwrap();

        let mut discard = cfg.clone();
        discard.sink = SinkPolicy::DiscardAfter;
        let (q, _) = build_ulam(&discard).unwrap();
        assert_eq!(q.n(), 4);
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.get(1, 1), 1.0);
    }

    #[test]
    fn strip_rescales_leaky_rows() {
        let part = BoxPartition::new(Rect::unit(), 2).unwrap();
        let mut rows = vec![vec![(0, 0.6), (1, 0.3), (4, 0.1)]];
        rows.extend((1..4).map(|i| vec![(i, 1.0)]));
        rows.push(vec![(4, 1.0)]);
        let p = StochasticMatrix::from_rows(5, rows).unwrap();
        let s = strip_sink(&p, &part).unwrap();
        assert!(s.renormalized);
        assert!((s.matrix.get(0, 0) - 0.6 / 0.9).abs() < 1e-15);
        assert!((s.matrix.get(0, 1) - 0.3 / 0.9).abs() < 1e-15);
        assert!(s.lossy_rows.is_empty());
        s.matrix.check_stochastic().unwrap();
    }

    #[test]
    fn strip_without_escape_is_unchanged() {
        let part = BoxPartition::new(Rect::unit(), 2).unwrap();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..4).map(|i| vec![(i, 0.5), ((i + 1) % 4, 0.5)]).collect();
        rows.push(vec![(4, 1.0)]);
        let s = strip_sink(&StochasticMatrix::from_rows(5, rows).unwrap(), &part).unwrap();
        assert!(!s.renormalized);
        assert_eq!(s.matrix.get(3, 0), 0.5);
    }

    #[test]
    fn rejects_large_epsilon() {
        let mut cfg = config(VectorField::SingleGyre, Rect::unit(), 4, 1.0, 4);
        cfg.epsilon = 0.3;
        assert!(matches!(build_ulam(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn box_with_only_failures_is_an_error() {
        let bad = VectorField::custom("bad", 0.0, |[x, _]| if x < 0.5 { [f64::NAN, 0.0] } else { [0.0, 0.0] });
        let cfg = config(bad, Rect::unit(), 2, 0.01, 4);
        assert_eq!(build_ulam(&cfg).unwrap_err(), Error::Assembly(0));
    }

    #[test]
    fn core_keeps_closed_recurrent_classes() {
        // 0 -> {1,2} recurrent pair, 3 <-> 4 recurrent pair, 5 isolated self-loop.
        let p = StochasticMatrix::from_dense(&[
            vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let core = restrict_to_core(&p, 0.6).unwrap();
        assert_eq!(core.states, vec![1, 2, 3, 4]);
        assert_eq!(core.classes, 2);
        assert_eq!(core.pi.pi, vec![0.25; 4]);
    }
}
