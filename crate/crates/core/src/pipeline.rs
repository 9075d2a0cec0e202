//! Flow to spectrum in one call: assembly, sink removal, core restriction,
//! reversibilization and eigensolve.

use serde::{Deserialize, Serialize};

use crate::dynamics::{FlowMap, VectorField};
use crate::error::Result;
use crate::markov::{self, ReversibleChain};
use crate::matrix::StochasticMatrix;
use crate::partition::{BoxPartition, Rect, SamplePlan, SampleScheme};
use crate::spectral::{self, Solver, SpectralSet};
use crate::ulam::{self, AssemblyReport, Core, SinkPolicy, UlamConfig};

/// Everything needed to discretize one member of a field family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub field: String,
    pub domain: Rect,
    pub depth: u32,
    pub samples: usize,
    pub scheme: SampleScheme,
    pub seed: u64,
    pub t_final: f64,
    pub h: f64,
    pub epsilon: f64,
    pub sink: SinkPolicy,
    /// Communicating classes smaller than this fraction of the largest are dropped.
    pub core_fraction: f64,
}

impl FlowSpec {
    /// Defaults for a built-in field: domain, flow time 1, step 0.01, grid sampling.
    pub fn standard(field: &str, depth: u32, samples: usize) -> Self {
        FlowSpec {
            field: field.to_string(),
            domain: default_domain(field),
            depth,
            samples,
            scheme: SampleScheme::Grid,
            seed: 0,
            t_final: 1.0,
            h: 0.01,
            epsilon: 0.0,
            sink: SinkPolicy::Absorb,
            core_fraction: 0.1,
        }
    }

    pub fn ulam_config(&self, p: f64) -> Result<UlamConfig> {
        let field = VectorField::from_id(&self.field, p)?;
        let flow = FlowMap::new(field, self.t_final, self.h)?;
        let partition = BoxPartition::new(self.domain, self.depth)?;
        let plan = SamplePlan { per_box: self.samples, scheme: self.scheme, seed: self.seed };
        let cfg = UlamConfig { flow, partition, plan, epsilon: self.epsilon, sink: self.sink };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Computational domain used when none is given.
pub fn default_domain(field: &str) -> Rect {
    match field {
        "duffing" => Rect::centered(1.4),
        _ => Rect::unit(),
    }
}

/// Default weak-mode region: square of side `0.4 * width` at the domain center.
pub fn default_region(domain: &Rect) -> Rect {
    let [cx, cy] = domain.center();
    let half = 0.2 * domain.width();
    Rect::new(cx - half, cx + half, cy - half, cy + half)
}

/// Intermediate and final products of one discretization.
#[derive(Clone, Debug)]
pub struct FlowAnalysis {
    pub partition: BoxPartition,
    /// Assembled matrix, sink included when present.
    pub matrix: StochasticMatrix,
    pub report: AssemblyReport,
    pub core: Core,
    pub chain: ReversibleChain,
    /// Spectrum on the core states.
    pub spectrum: SpectralSet,
}

impl FlowAnalysis {
    /// Spectrum spread onto all boxes, zero outside the core.
    pub fn embedded(&self) -> SpectralSet {
        self.spectrum.embed(&self.core.states, self.partition.n_boxes())
    }
}

/// Runs the full pipeline at parameter `p`, keeping `m` eigenpairs.
pub fn analyze_flow(spec: &FlowSpec, p: f64, m: usize, solver: Solver) -> Result<FlowAnalysis> {
    let cfg = spec.ulam_config(p)?;
    let (matrix, report) = ulam::build_ulam(&cfg)?;
    let boxes = if report.has_sink { ulam::strip_sink(&matrix, &cfg.partition)?.matrix } else { matrix.clone() };
    let core = ulam::restrict_to_core(&boxes, spec.core_fraction)?;
    let chain = markov::reversibilize(&core.matrix, &core.pi)?;
    let spectrum = spectral::dominant_spectrum_with(&chain, m.min(chain.n()), solver)?;
    Ok(FlowAnalysis { partition: cfg.partition, matrix, report, core, chain, spectrum })
}
