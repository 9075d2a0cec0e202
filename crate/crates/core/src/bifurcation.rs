//! Parameter sweeps: eigenvalue branches, weak-mode tagging, crossings and
//! trend signatures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{self, ReversibleChain};
use crate::partition::Rect;
use crate::pipeline::{self, FlowSpec};
use crate::spectral::{self, MatchOptions, Solver, SpectralSet};
use crate::toychains::{self, MorphFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SweepSystem {
    Flow(FlowSpec),
    /// The grid values are ignored; step `s` of the family is used at grid point `s`.
    Morph(MorphFamily),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub system: SweepSystem,
    pub p_grid: Vec<f64>,
    /// Eigenpairs computed per step.
    pub m: usize,
    /// Dominant branches including the trivial one.
    pub k: usize,
    /// Region scored for weak-mode localization (flows only).
    pub region_d: Option<Rect>,
    /// Minimum localization for a mode to anchor a weak branch.
    pub weak_threshold: f64,
    /// Number of weak branches to tag.
    pub n_weak: usize,
    /// Use grid-reflection parity classes in matching (flows only).
    pub symmetry: bool,
    pub window: usize,
    pub theta: f64,
    /// Keep every step's eigenvectors in the result.
    #[serde(default)]
    pub keep_spectra: bool,
    /// Keep every step's reversible chain in the result.
    #[serde(default)]
    pub keep_chains: bool,
}

impl SweepConfig {
    pub fn flow(spec: FlowSpec, p_grid: Vec<f64>, m: usize, k: usize) -> Self {
        let region = pipeline::default_region(&spec.domain);
        SweepConfig {
            system: SweepSystem::Flow(spec),
            p_grid,
            m,
            k,
            region_d: Some(region),
            weak_threshold: 0.8,
            n_weak: 2,
            symmetry: false,
            window: 5,
            theta: 1e-3,
            keep_spectra: false,
            keep_chains: false,
        }
    }

    pub fn morph(family: MorphFamily, m: usize, k: usize) -> Self {
        let p_grid = (0..family.steps).map(|s| s as f64).collect();
        SweepConfig {
            system: SweepSystem::Morph(family),
            p_grid,
            m,
            k,
            region_d: None,
            weak_threshold: 0.0,
            n_weak: 0,
            symmetry: false,
            window: 3,
            theta: 1e-3,
            keep_spectra: false,
            keep_chains: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_grid.len() < 2 {
            return Err(Error::Config("a sweep needs at least two grid points".into()));
        }
        let up = self.p_grid.windows(2).all(|w| w[1] > w[0]);
        let down = self.p_grid.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Config("p grid must be strictly monotone".into()));
        }
        if self.m < 4 || self.k < 1 || self.k > self.m {
            return Err(Error::Config(format!("need m >= 4 and 1 <= k <= m, got m = {}, k = {}", self.m, self.k)));
        }
        if self.window < 3 {
            return Err(Error::Config("trend window must cover at least 3 grid points".into()));
        }
        if let SweepSystem::Morph(f) = &self.system {
            f.validate()?;
            if f.steps != self.p_grid.len() {
                return Err(Error::Config("morph sweep grid must have one point per step".into()));
            }
        }
        Ok(())
    }
}

/// Regular grid from `lo` to `hi` inclusive with spacing `step`.
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).map(|p| (p * 1e12).round() / 1e12).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Trivial,
    Dominant,
    Weak,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub p: f64,
    pub lambda: f64,
    pub residual: f64,
    /// Overlap with the previous point of the branch; `None` at its start.
    pub overlap: Option<f64>,
    pub localization: Option<f64>,
    /// Position in that step's descending spectrum.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenCurve {
    pub id: usize,
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

impl EigenCurve {
    pub fn at_step(&self, step: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|q| q.step == step)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.lambda).collect()
    }
}

/// Per-step spectrum digest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub p: f64,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub localization: Option<Vec<f64>>,
    /// Reflection parity classes (bit 0: odd in x, bit 1: odd in y).
    pub classes: Option<Vec<u8>>,
    /// States carried by the reversible chain.
    pub core_size: usize,
    pub states: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub p_lo: f64,
    pub p_hi: f64,
    /// Branch whose eigenvalue moves from below to above the other.
    pub rising: usize,
    pub falling: usize,
    pub weak: usize,
    pub dominant: usize,
    pub p_star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagKind {
    EarlyWarning,
    Split,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Flag {
    pub kind: FlagKind,
    pub p: f64,
    pub step: Option<usize>,
    pub branches: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Signature {
    /// Trend per branch id and step (`None` until the window has two points).
    pub trends: Vec<Vec<Option<Trend>>>,
    pub flags: Vec<Flag>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub steps: Vec<StepSummary>,
    pub curves: Vec<EigenCurve>,
    pub crossings: Vec<CrossingEvent>,
    pub signature: Signature,
    /// Dominance constraint per step.
    pub dominance: Vec<bool>,
    /// Per-step spectra, on the full state space; empty unless requested.
    pub spectra: Vec<SpectralSet>,
    /// Per-step reversible chains (core states only for flows); empty unless requested.
    pub chains: Vec<ReversibleChain>,
}

struct StepData {
    summary: StepSummary,
    spectrum: SpectralSet,
    chain: Option<ReversibleChain>,
}

fn parity_classes(spec: &SpectralSet, rx: &[usize], ry: &[usize]) -> Vec<u8> {
    spec.vectors
        .iter()
        .map(|x| {
            let ox = spectral::reflection_parity(x, &spec.pi, rx) < 0.0;
            let oy = spectral::reflection_parity(x, &spec.pi, ry) < 0.0;
            ox as u8 | (oy as u8) << 1
        })
        .collect()
}

fn compute_step(config: &SweepConfig, step: usize, p: f64) -> Result<StepData> {
    match &config.system {
        SweepSystem::Flow(spec) => {
            let a = pipeline::analyze_flow(spec, p, config.m, Solver::Auto)?;
            let full = a.embedded();
            let localization = match &config.region_d {
                Some(r) => {
                    let region = a.partition.boxes_in(r);
                    Some((0..full.m()).map(|i| spectral::localization_score(&full, i, &region)).collect::<Result<Vec<_>>>()?)
                }
                None => None,
            };
            let classes =
                config.symmetry.then(|| parity_classes(&full, &a.partition.reflect_x(), &a.partition.reflect_y()));
            let summary = StepSummary {
                step,
                p,
                eigenvalues: full.values.clone(),
                residuals: full.residuals.clone(),
                localization,
                classes,
                core_size: a.core.states.len(),
                states: a.partition.n_boxes(),
            };
            Ok(StepData { summary, spectrum: full, chain: config.keep_chains.then_some(a.chain) })
        }
        SweepSystem::Morph(family) => {
            let pmat = toychains::morph_snapshot(family, step)?;
            let pi = markov::stationary(&pmat, markov::STATIONARY_TOL, markov::STATIONARY_MAX_ITER)?;
            let chain = markov::reversibilize(&pmat, &pi)?;
            let spectrum = spectral::dominant_spectrum(&chain, config.m.min(chain.n()))?;
            let summary = StepSummary {
                step,
                p,
                eigenvalues: spectrum.values.clone(),
                residuals: spectrum.residuals.clone(),
                localization: None,
                classes: None,
                core_size: chain.n(),
                states: chain.n(),
            };
            Ok(StepData { summary, spectrum, chain: config.keep_chains.then_some(chain) })
        }
    }
}

/// Builds, solves and threads every grid point.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let data: Vec<StepData> = config
        .p_grid
        .par_iter()
        .enumerate()
        .map(|(s, &p)| compute_step(config, s, p).map_err(|e| Error::Sweep { p, cause: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;

    // Thread branches step by step.
    let mut curves: Vec<EigenCurve> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    for (s, d) in data.iter().enumerate() {
        let sm = &d.summary;
        let point = |i: usize, overlap: Option<f64>| CurvePoint {
            step: s,
            p: sm.p,
            lambda: sm.eigenvalues[i],
            residual: sm.residuals[i],
            overlap,
            localization: sm.localization.as_ref().map(|l| l[i]),
            index: i,
        };
        if s == 0 {
            for i in 0..sm.eigenvalues.len() {
                curves.push(EigenCurve { id: i, kind: CurveKind::Other, points: vec![point(i, None)] });
            }
            owner = (0..sm.eigenvalues.len()).collect();
            continue;
        }
        let prev = &data[s - 1];
        let pi: Vec<f64> = prev.spectrum.pi.iter().zip(&d.spectrum.pi).map(|(a, b)| 0.5 * (a + b)).collect();
        let opts = MatchOptions {
            labels: match (&prev.summary.classes, &sm.classes) {
                (Some(a), Some(b)) => Some((a.clone(), b.clone())),
                _ => None,
            },
            ..Default::default()
        };
        let matching = spectral::match_eigenpairs_with(&prev.spectrum, &d.spectrum, &pi, &opts)?;
        let mut next_owner = Vec::with_capacity(sm.eigenvalues.len());
        for (j, a) in matching.assignment.iter().enumerate() {
            let id = match a {
                Some(i) => {
                    let id = owner[*i];
                    curves[id].points.push(point(j, Some(matching.overlaps[j])));
                    id
                }
                None => {
                    let id = curves.len();
                    curves.push(EigenCurve { id, kind: CurveKind::Other, points: vec![point(j, None)] });
                    id
                }
            };
            next_owner.push(id);
        }
        owner = next_owner;
    }

    tag_curves(config, &data, &mut curves);
    let crossings = detect_crossings(&curves);
    let signature = classify_signature(&curves, &crossings, config.window, config.theta);
    let dominance = (0..data.len()).map(|s| check_dominance_constraint(&curves, s)).collect();
    let mut steps = Vec::with_capacity(data.len());
    let mut spectra = Vec::new();
    let mut chains = Vec::new();
    for d in data {
        steps.push(d.summary);
        if config.keep_spectra {
            spectra.push(d.spectrum);
        }
        chains.extend(d.chain);
    }
    Ok(SweepResult { steps, curves, crossings, signature, dominance, spectra, chains })
}

/// Trivial and dominant branches are the top `k` at the first step. Weak
/// branches are anchored at the highest eigenvalue, over the whole sweep, of
/// a non-dominant mode localized at least `weak_threshold` on the region;
/// with symmetry classes on, each further anchor must come from a new class.
/// Without a region every non-dominant branch is weak.
fn tag_curves(config: &SweepConfig, data: &[StepData], curves: &mut [EigenCurve]) {
    for c in curves.iter_mut() {
        if let Some(first) = c.points.first().filter(|q| q.step == 0) {
            c.kind = match first.index {
                0 => CurveKind::Trivial,
                i if i < config.k => CurveKind::Dominant,
                _ => CurveKind::Other,
            };
        }
    }
    if config.region_d.is_none() {
        for c in curves.iter_mut().filter(|c| c.kind == CurveKind::Other) {
            c.kind = CurveKind::Weak;
        }
        return;
    }
    let mut used_classes: Vec<u8> = Vec::new();
    for _ in 0..config.n_weak {
        let mut best: Option<(f64, usize, u8)> = None;
        for c in curves.iter().filter(|c| c.kind == CurveKind::Other) {
            for q in &c.points {
                let class = data[q.step].summary.classes.as_ref().map_or(0, |cl| cl[q.index]);
                if config.symmetry && used_classes.contains(&class) {
                    continue;
                }
                if q.localization.unwrap_or(0.0) >= config.weak_threshold && best.is_none_or(|b| q.lambda > b.0) {
                    best = Some((q.lambda, c.id, class));
                }
            }
        }
        let Some((_, id, class)) = best else { break };
        curves[id].kind = CurveKind::Weak;
        used_classes.push(class);
    }
}

/// Sign changes of `lambda_weak - lambda_dominant` between consecutive grid
/// points, for weak branches that rise overall. Sorted by `p_star`.
pub fn detect_crossings(curves: &[EigenCurve]) -> Vec<CrossingEvent> {
    let mut events = Vec::new();
    let rising = curves.iter().filter(|c| {
        c.kind == CurveKind::Weak && c.points.len() >= 2 && c.points.last().unwrap().lambda > c.points[0].lambda
    });
    for w in rising {
        for d in curves.iter().filter(|c| c.kind == CurveKind::Dominant) {
            let common: Vec<(&CurvePoint, &CurvePoint)> =
                w.points.iter().filter_map(|a| d.at_step(a.step).map(|b| (a, b))).collect();
            for pair in common.windows(2) {
                let (a0, b0) = pair[0];
                let (a1, b1) = pair[1];
                if a1.step != a0.step + 1 {
                    continue;
                }
                let (d0, d1) = (a0.lambda - b0.lambda, a1.lambda - b1.lambda);
                if d0 == 0.0 || !(d0 * d1 < 0.0 || d1 == 0.0) {
                    continue;
                }
                let p_star = a0.p + (a1.p - a0.p) * d0 / (d0 - d1);
                let (rising, falling) = if d0 < 0.0 { (w.id, d.id) } else { (d.id, w.id) };
                events.push(CrossingEvent { p_lo: a0.p, p_hi: a1.p, rising, falling, weak: w.id, dominant: d.id, p_star });
            }
        }
    }
    events.sort_by(|a, b| a.p_star.total_cmp(&b.p_star).then(a.weak.cmp(&b.weak)).then(a.dominant.cmp(&b.dominant)));
    events
}

fn slope(points: &[&CurvePoint]) -> f64 {
    let n = points.len() as f64;
    let mp = points.iter().map(|q| q.p).sum::<f64>() / n;
    let ml = points.iter().map(|q| q.lambda).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|q| (q.p - mp) * (q.lambda - ml)).sum();
    let sxx: f64 = points.iter().map(|q| (q.p - mp).powi(2)).sum();
    sxy / sxx
}

/// Trailing-window least-squares trend for each branch and step.
pub fn branch_trends(curve: &EigenCurve, n_steps: usize, window: usize, theta: f64) -> Vec<Option<Trend>> {
    (0..n_steps)
        .map(|s| {
            let pts: Vec<&CurvePoint> = curve.points.iter().filter(|q| q.step <= s && q.step + window > s).collect();
            if pts.len() < 2 || pts.last().unwrap().step != s {
                return None;
            }
            // Slopes are taken per unit p along the direction of the sweep.
            let dir = (pts.last().unwrap().p - pts[0].p).signum();
            let sl = dir * slope(&pts);
            Some(if sl > theta {
                Trend::Increasing
            } else if sl < -theta {
                Trend::Decreasing
            } else {
                Trend::Flat
            })
        })
        .collect()
}

/// Trend labels plus flags: EARLY_WARNING at steps before any crossing where
/// a dominant branch decreases while a weak branch increases, SPLIT at each
/// crossing.
pub fn classify_signature(curves: &[EigenCurve], crossings: &[CrossingEvent], window: usize, theta: f64) -> Signature {
    let n_steps = curves.iter().flat_map(|c| c.points.iter().map(|q| q.step + 1)).max().unwrap_or(0);
    let trends: Vec<Vec<Option<Trend>>> = curves.iter().map(|c| branch_trends(c, n_steps, window, theta)).collect();
    let mut flags = Vec::new();
    let first_crossing = crossings.first().map(|e| (e.p_lo, e.p_star));
    for s in 0..n_steps {
        let Some(p) = curves.iter().find_map(|c| c.at_step(s).map(|q| q.p)) else { continue };
        if let Some((p_lo, p_star)) = first_crossing {
            let dir = (p_star - p_lo).signum();
            if dir * (p - p_star) >= 0.0 {
                break;
            }
        }
        let of_kind = |k: CurveKind, t: Trend| -> Vec<usize> {
            curves.iter().filter(|c| c.kind == k && trends[c.id][s] == Some(t)).map(|c| c.id).collect()
        };
        let falling = of_kind(CurveKind::Dominant, Trend::Decreasing);
        let rising = of_kind(CurveKind::Weak, Trend::Increasing);
        if !falling.is_empty() && !rising.is_empty() {
            flags.push(Flag {
                kind: FlagKind::EarlyWarning,
                p,
                step: Some(s),
                branches: falling.into_iter().chain(rising).collect(),
            });
        }
    }
    for e in crossings {
        flags.push(Flag { kind: FlagKind::Split, p: e.p_star, step: None, branches: vec![e.rising, e.falling] });
    }
    Signature { trends, flags }
}

/// True when every dominant eigenvalue strictly exceeds every weak one at `step`.
pub fn check_dominance_constraint(curves: &[EigenCurve], step: usize) -> bool {
    let at = |k: CurveKind| curves.iter().filter(move |c| c.kind == k).filter_map(move |c| c.at_step(step)).map(|q| q.lambda);
    let min_dom = at(CurveKind::Dominant).fold(f64::INFINITY, f64::min);
    let max_weak = at(CurveKind::Weak).fold(f64::NEG_INFINITY, f64::max);
    min_dom > max_weak
}
