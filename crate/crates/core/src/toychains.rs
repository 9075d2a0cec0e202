//! Synthetic block-structured chains and parameterized morph families.
//!
//! Random entries are keyed by `(seed, i, j)` so that two chains built from
//! the same seed share every weight they have in common; a morph step only
//! changes which weights are switched on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov;
use crate::matrix::StochasticMatrix;

/// Intra-block weights are drawn from `[WEIGHT_LO, 1)`.
pub const WEIGHT_LO: f64 = 0.5;
/// Coupling weights are drawn from `[COUPLING_LO, 1)`.
pub const COUPLING_LO: f64 = 0.9;
/// Half-width (in states) of the band coupling two neighbouring blocks.
pub const COUPLING_BAND: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockChainSpec {
    pub block_sizes: Vec<usize>,
    pub intra_density: f64,
    pub seed: u64,
}

impl BlockChainSpec {
    pub fn new(block_sizes: Vec<usize>, seed: u64) -> Self {
        BlockChainSpec { block_sizes, intra_density: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.iter().any(|&s| s < 2) {
            return Err(Error::Config(format!("block sizes {:?} must all be >= 2", self.block_sizes)));
        }
        if !(self.intra_density > 0.0 && self.intra_density <= 1.0) {
            return Err(Error::Config(format!("intra density {} outside (0, 1]", self.intra_density)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Block index of every state.
    pub fn labels(&self) -> Vec<usize> {
        labels_from_sizes(&self.block_sizes)
    }
}

fn labels_from_sizes(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect()
}

/// Two uniforms for the unordered pair `{i, j}`: presence draw and weight.
fn pair_draw(seed: u64, salt: u64, i: usize, j: usize) -> (f64, f64) {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(((a as u64) << 32) | b as u64);
    (rng.r#gen(), rng.r#gen())
}

const WEIGHT_SALT: u64 = 0x243f_6a88_85a3_08d3;
const COUPLING_SALT: u64 = 0x1319_8a2e_0370_7344;

/// Symmetric weight of the pair inside a block, or zero if switched off.
fn intra_weight(spec_seed: u64, density: f64, i: usize, j: usize) -> f64 {
    let (presence, u) = pair_draw(spec_seed, WEIGHT_SALT, i, j);
    // Diagonal and chain links are always present so each block stays primitive.
    let forced = i == j || i.abs_diff(j) == 1;
    if forced || presence < density { WEIGHT_LO + (1.0 - WEIGHT_LO) * u } else { 0.0 }
}

fn coupling_weight(seed: u64, i: usize, j: usize) -> f64 {
    let (_, u) = pair_draw(seed, COUPLING_SALT, i, j);
    COUPLING_LO + (1.0 - COUPLING_LO) * u
}

/// Row-normalizes a symmetric weight pattern given as a predicate on pairs.
fn chain_from_weights(n: usize, weight: impl Fn(usize, usize) -> f64) -> Result<StochasticMatrix> {
    let rows = (0..n)
        .map(|i| (0..n).map(|j| (j, weight(i, j))).filter(|&(_, w)| w > 0.0).collect::<Vec<_>>())
        .map(|row: Vec<(usize, f64)>| {
            let s: f64 = row.iter().map(|(_, w)| w).sum();
            row.into_iter().map(|(j, w)| (j, w / s)).collect()
        })
        .collect();
    StochasticMatrix::from_rows(n, rows)
}

/// Exactly reducible block-diagonal chain; each block is the row
/// normalization of a symmetric positive pattern, hence reversible.
pub fn build_block_chain(spec: &BlockChainSpec) -> Result<StochasticMatrix> {
    spec.validate()?;
    let labels = spec.labels();
    chain_from_weights(spec.n(), |i, j| {
        if labels[i] == labels[j] { intra_weight(spec.seed, spec.intra_density, i, j) } else { 0.0 }
    })
}

/// Contiguous index ranges of the closed classes, ordered by first state.
fn blocks_of(p: &StochasticMatrix) -> Vec<Vec<usize>> {
    markov::closed_classes(p)
}

/// Adds `epsilon`-scaled banded mass between index-adjacent blocks, then
/// renormalizes rows. Blocks are the closed classes of `p`.
pub fn perturb_chain(p: &StochasticMatrix, epsilon: f64, seed: u64) -> Result<StochasticMatrix> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::Config(format!("perturbation strength {epsilon} outside (0, 0.1]")));
    }
    let n = p.n();
    let blocks = blocks_of(p);
    let mut label = vec![usize::MAX; n];
    for (b, members) in blocks.iter().enumerate() {
        members.iter().for_each(|&s| label[s] = b);
    }
    for attempt in 0..4 {
        let band = COUPLING_BAND << attempt;
        let rows = (0..n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = p.row(i).collect();
                for j in 0..n {
                    let adjacent = label[i] != usize::MAX && label[j] != usize::MAX && label[i].abs_diff(label[j]) == 1;
                    if adjacent && i.abs_diff(j) <= band {
                        row.push((j, epsilon * coupling_weight(seed, i, j)));
                    }
                }
                let s: f64 = row.iter().map(|(_, w)| w).sum();
                row.into_iter().map(|(j, w)| (j, w / s)).collect()
            })
            .collect();
        let q = StochasticMatrix::from_rows(n, rows)?;
        if markov::is_irreducible(&q) {
            return Ok(q);
        }
    }
    Err(Error::Degenerate("perturbed chain is still reducible after densifying the coupling".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphKind {
    BoundaryShrink,
    InteriorSplit,
    Combined,
}

impl MorphKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "boundary_shrink" => Ok(MorphKind::BoundaryShrink),
            "interior_split" => Ok(MorphKind::InteriorSplit),
            "combined" => Ok(MorphKind::Combined),
            other => Err(Error::Config(format!("unknown morph kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MorphKind::BoundaryShrink => "boundary_shrink",
            MorphKind::InteriorSplit => "interior_split",
            MorphKind::Combined => "combined",
        }
    }
}

/// Geometry of a morph family; the defaults are the ones used throughout
/// the toy experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphShape {
    /// States the shrinking block loses per side (boundary shrink) or in
    /// total (combined) by the last step.
    pub shrink: usize,
    /// Sub-block size at the first and last step.
    pub sub_start: usize,
    pub sub_end: usize,
    /// Block hosting the sub-block and its center state (interior split).
    pub host_block: usize,
    pub sub_center: usize,
    /// Coupling multiplier between sub-block and host at the last step.
    pub split_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphFamily {
    pub kind: MorphKind,
    pub base: BlockChainSpec,
    pub steps: usize,
    /// Off-block leak used for every snapshot.
    pub strength: f64,
    pub shape: MorphShape,
}

impl MorphFamily {
    /// The standard family of each kind.
    pub fn standard(kind: MorphKind, steps: usize, seed: u64) -> Self {
        let (sizes, shape) = match kind {
            MorphKind::BoundaryShrink => (
                vec![15, 30, 15],
                MorphShape { shrink: 12, sub_start: 0, sub_end: 0, host_block: 1, sub_center: 0, split_floor: 1.0 },
            ),
            MorphKind::InteriorSplit => (
                vec![10, 30, 20],
                MorphShape { shrink: 0, sub_start: 4, sub_end: 12, host_block: 1, sub_center: 25, split_floor: 0.003 },
            ),
            MorphKind::Combined => (
                vec![30, 30],
                MorphShape { shrink: 16, sub_start: 4, sub_end: 14, host_block: 0, sub_center: 15, split_floor: 0.003 },
            ),
        };
        MorphFamily { kind, base: BlockChainSpec::new(sizes, seed), steps, strength: 0.01, shape }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.steps < 2 {
            return Err(Error::Config(format!("a morph family needs at least 2 steps, got {}", self.steps)));
        }
        if !(self.strength > 0.0 && self.strength <= 0.1) {
            return Err(Error::Config(format!("strength {} outside (0, 0.1]", self.strength)));
        }
        let s = &self.shape;
        if !(s.split_floor > 0.0 && s.split_floor <= 1.0) {
            return Err(Error::Config(format!("split floor {} outside (0, 1]", s.split_floor)));
        }
        let sizes = &self.base.block_sizes;
        match self.kind {
            MorphKind::BoundaryShrink => {
                if sizes.len() < 3 || 2 * s.shrink + 2 > sizes[1] {
                    return Err(Error::Config("boundary shrink needs three blocks and a middle block that survives".into()));
                }
            }
            MorphKind::InteriorSplit => {
                let host = sizes.get(s.host_block).ok_or_else(|| Error::Config("host block out of range".into()))?;
                if s.sub_end.max(s.sub_start) + 2 > *host || s.sub_start < 2 {
                    return Err(Error::Config("sub-block must stay inside its host block".into()));
                }
            }
            MorphKind::Combined => {
                if sizes.len() != 2 || s.shrink + 2 > sizes[1] || s.sub_end.max(s.sub_start) + 2 > sizes[0] {
                    return Err(Error::Config("combined morph needs two blocks with room for shrink and split".into()));
                }
            }
        }
        Ok(())
    }

    /// Block labels, sub-block range and host coupling multiplier at `step`.
    fn layout(&self, step: usize) -> (Vec<usize>, Option<(usize, usize)>, f64) {
        let t = step as f64 / (self.steps - 1) as f64;
        let s = &self.shape;
        let sizes = &self.base.block_sizes;
        let sub_size = (s.sub_start as f64 + t * (s.sub_end as f64 - s.sub_start as f64)).round() as usize;
        let factor = 1.0 - (1.0 - s.split_floor) * t;
        match self.kind {
            MorphKind::BoundaryShrink => {
                let d = (t * s.shrink as f64).round() as usize;
                let mut moved = sizes.clone();
                moved[0] += d;
                moved[1] -= 2 * d;
                moved[2] += d;
                (labels_from_sizes(&moved), None, 1.0)
            }
            MorphKind::InteriorSplit => {
                let lo = s.sub_center - sub_size / 2;
                (labels_from_sizes(sizes), Some((lo, lo + sub_size)), factor)
            }
            MorphKind::Combined => {
                let d = (t * s.shrink as f64).round() as usize;
                let first = sizes[0] + d;
                let center = first / 2;
                let lo = center - sub_size / 2;
                (labels_from_sizes(&[first, sizes[1] - d]), Some((lo, lo + sub_size)), factor)
            }
        }
    }
}

/// Chain of `family` at `step`, perturbed with the family strength and a
/// step-independent seed.
pub fn morph_snapshot(family: &MorphFamily, step: usize) -> Result<StochasticMatrix> {
    family.validate()?;
    if step >= family.steps {
        return Err(Error::Domain(format!("step {step} out of range for {} steps", family.steps)));
    }
    let (labels, sub, factor) = family.layout(step);
    let spec = &family.base;
    let inside = |s: usize| sub.is_some_and(|(lo, hi)| s >= lo && s < hi);
    let p = chain_from_weights(labels.len(), |i, j| {
        if labels[i] != labels[j] {
            return 0.0;
        }
        let w = intra_weight(spec.seed, spec.intra_density, i, j);
        if inside(i) != inside(j) { w * factor } else { w }
    })?;
    perturb_chain(&p, family.strength, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_chain_is_reducible_and_stochastic() {
        let p = build_block_chain(&BlockChainSpec::new(vec![10, 30, 20], 1)).unwrap();
        p.check_stochastic().unwrap();
        assert_eq!(markov::closed_classes(&p).len(), 3);
        let single = build_block_chain(&BlockChainSpec::new(vec![2], 1)).unwrap();
        assert!(markov::is_irreducible(&single));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = BlockChainSpec::new(vec![5, 5], 42);
        assert_eq!(build_block_chain(&spec).unwrap(), build_block_chain(&spec).unwrap());
    }

    #[test]
    fn sparse_blocks_stay_connected() {
        let spec = BlockChainSpec { block_sizes: vec![20, 20], intra_density: 0.1, seed: 3 };
        let p = build_block_chain(&spec).unwrap();
        assert_eq!(markov::closed_classes(&p).len(), 2);
        assert_eq!(markov::communicating_classes(&p).len(), 2);
    }

    #[test]
    fn perturbation_connects_blocks() {
        let p = build_block_chain(&BlockChainSpec::new(vec![10, 30, 20], 1)).unwrap();
        let q = perturb_chain(&p, 0.01, 1).unwrap();
        q.check_stochastic().unwrap();
        assert!(markov::is_irreducible(&q));
        assert_eq!(q.get(0, 10), 0.0);
        assert!(q.get(9, 10) > 0.0);
        assert_eq!(q.get(5, 41), 0.0);
        assert!(perturb_chain(&p, 0.0, 1).is_err());
    }

    #[test]
    fn shrink_layout_moves_boundaries() {
        let f = MorphFamily::standard(MorphKind::BoundaryShrink, 8, 1);
        let (labels, _, _) = f.layout(7);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 6);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 27);
        let (labels, _, _) = f.layout(0);
        assert_eq!(labels, f.base.labels());
    }

    #[test]
    fn split_layout_grows_and_decouples() {
        let f = MorphFamily::standard(MorphKind::InteriorSplit, 8, 1);
        assert_eq!(f.layout(0).1, Some((23, 27)));
        assert_eq!(f.layout(7).1, Some((19, 31)));
        assert!((f.layout(7).2 - 0.003).abs() < 1e-15);
        let c = MorphFamily::standard(MorphKind::Combined, 8, 1);
        let (labels, sub, _) = c.layout(7);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 46);
        assert_eq!(sub, Some((16, 30)));
    }

    #[test]
    fn snapshot_bounds() {
        let f = MorphFamily::standard(MorphKind::Combined, 8, 1);
        assert!(morph_snapshot(&f, 8).is_err());
        let mut bad = f.clone();
        bad.steps = 1;
        assert!(morph_snapshot(&bad, 0).is_err());
    }
}
