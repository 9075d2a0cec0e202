//! Run configuration: JSON file and command-line flags merged over
//! per-system defaults, validated before anything is computed.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{self, SweepConfig};
use crate::dynamics::VectorField;
use crate::error::{Error, Result};
use crate::partition::{Rect, SampleScheme};
use crate::pipeline::{self, FlowSpec};
use crate::spectral::Solver;
use crate::toychains::{MorphFamily, MorphKind};
use crate::ulam::SinkPolicy;

/// Reducible three-block example chain addressed as a system id.
pub const TOY_EXAMPLE: &str = "toy:example31";
pub const TOY_EXAMPLE_BLOCKS: [usize; 3] = [10, 30, 20];
/// Sign-partition dead zone, relative to the largest eigenvector entry.
pub const DEAD_ZONE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Spectrum,
    Sweep,
    Toy,
}

/// Parses a unit enum variant from its serialized name.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unrecognized value '{s}'"))
}

macro_rules! from_str_by_name {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                parse_name(s)
            }
        }
    )*};
}

from_str_by_name!(SampleScheme, SinkPolicy, Solver, MorphKind);

/// Settings shared by config files and flags. Unset fields fall back to the
/// file, then to the defaults of the chosen system.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// System id: single_gyre, double_gyre, duffing or toy:example31.
    #[arg(long)]
    pub system: Option<String>,
    /// Parameter value for a single spectrum.
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<f64>,
    /// Explicit sweep grid, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p_grid: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub p_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p_max: Option<f64>,
    #[arg(long)]
    pub p_step: Option<f64>,
    #[arg(long)]
    pub depth: Option<u32>,
    /// Test points per box.
    #[arg(long)]
    pub samples: Option<usize>,
    /// grid or random.
    #[arg(long)]
    pub scheme: Option<SampleScheme>,
    /// Flow time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Integrator step.
    #[arg(long)]
    pub h: Option<f64>,
    /// Noise radius for flows, coupling strength for toy chains.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// absorb or discard-after.
    #[arg(long)]
    pub sink: Option<SinkPolicy>,
    /// Drop communicating classes smaller than this fraction of the largest.
    #[arg(long)]
    pub core_fraction: Option<f64>,
    /// Eigenpairs per chain.
    #[arg(long)]
    pub m: Option<usize>,
    /// Dominant eigenvalues, the trivial one included.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sign partition into this many sets; 0 skips it.
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub dead_zone: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Computational domain as xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub domain: Option<Vec<f64>>,
    /// Weak-mode region as xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub region: Option<Vec<f64>>,
    #[arg(long)]
    pub weak_threshold: Option<f64>,
    #[arg(long)]
    pub n_weak: Option<usize>,
    /// Use reflection parity classes when threading branches.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub symmetry: Option<bool>,
    /// Trailing window of the trend fit, in grid points.
    #[arg(long)]
    pub window: Option<usize>,
    /// Slope threshold separating flat from increasing/decreasing.
    #[arg(long)]
    pub theta: Option<f64>,
    /// auto, dense or lanczos.
    #[arg(long)]
    pub solver: Option<Solver>,
    /// Morph family for the toy command.
    #[arg(long)]
    pub kind: Option<MorphKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write per-step eigenvector fields (sweep) or matrices (toy).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dump: Option<bool>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `top` win.
    pub fn overlay(mut self, top: &Overrides) -> Self {
        let base = &mut self;
        overlay!(base, top; system, p, p_grid, p_min, p_max, p_step, depth, samples, scheme, t, h, epsilon,
            sink, core_fraction, m, k, j, dead_zone, seed, domain, region, weak_threshold, n_weak, symmetry,
            window, theta, solver, kind, steps, dump, output);
        self
    }

    /// Pretty JSON with unset fields left out.
    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.retain(|_, x| !x.is_null());
        }
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub system: String,
    pub p: Option<f64>,
    pub p_grid: Option<Vec<f64>>,
    pub flow: Option<FlowSpec>,
    pub morph: Option<MorphFamily>,
    /// Coupling strength of the example chain; zero keeps it reducible.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub m: usize,
    pub k: usize,
    pub j: Option<usize>,
    pub dead_zone: f64,
    pub region: Option<Rect>,
    pub weak_threshold: f64,
    pub n_weak: usize,
    pub symmetry: bool,
    pub window: usize,
    pub theta: f64,
    pub solver: Solver,
    pub dump: bool,
    pub output: PathBuf,
}

fn rect_from(v: &[f64], what: &str) -> Result<Rect> {
    match *v {
        [x0, x1, y0, y1] if x0 < x1 && y0 < y1 && v.iter().all(|c| c.is_finite()) => Ok(Rect::new(x0, x1, y0, y1)),
        _ => Err(Error::Config(format!("{what} must be xmin,xmax,ymin,ymax with xmin < xmax and ymin < ymax"))),
    }
}

fn rect_to(r: &Rect) -> Vec<f64> {
    vec![r.xmin, r.xmax, r.ymin, r.ymax]
}

fn is_flow(system: &str) -> bool {
    matches!(system, "single_gyre" | "double_gyre" | "duffing")
}

/// Default number of dominant eigenvalues per system.
pub fn default_k(system: &str) -> usize {
    match system {
        "single_gyre" => 4,
        _ => 3,
    }
}

impl RunConfig {
    /// Merges flags over an optional file and fills in defaults.
    pub fn resolve(command: Command, file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let o = match file {
            Some(path) => Overrides::from_file(path)?.overlay(flags),
            None => flags.clone(),
        };
        Self::from_overrides(command, &o)
    }

    pub fn from_overrides(command: Command, o: &Overrides) -> Result<Self> {
        let seed = o.seed.unwrap_or(0);
        let output = o.output.clone().ok_or_else(|| Error::Config("an output directory is required".into()))?;

        let (system, flow, morph, epsilon, k) = match command {
            Command::Toy => {
                let kind = o.kind.ok_or_else(|| Error::Config("toy needs --kind".into()))?;
                let mut fam = MorphFamily::standard(kind, o.steps.unwrap_or(8), seed);
                if let Some(e) = o.epsilon {
                    fam.strength = e;
                }
                let k = if kind == MorphKind::Combined { 2 } else { 3 };
                (format!("toy:{}", kind.name()), None, Some(fam), None, o.k.unwrap_or(k))
            }
            _ => {
                let system = o.system.clone().ok_or_else(|| Error::Config("--system is required".into()))?;
                if system == TOY_EXAMPLE {
                    (system, None, None, Some(o.epsilon.unwrap_or(0.01)), o.k.unwrap_or(3))
                } else if is_flow(&system) {
                    let mut spec = FlowSpec::standard(&system, o.depth.unwrap_or(10), o.samples.unwrap_or(200));
                    spec.seed = seed;
                    if let Some(d) = &o.domain {
                        spec.domain = rect_from(d, "domain")?;
                    }
                    macro_rules! set {
                        ($($src:ident => $dst:ident),*) => { $( if let Some(v) = o.$src { spec.$dst = v; } )* };
                    }
                    set!(scheme => scheme, t => t_final, h => h, epsilon => epsilon, sink => sink, core_fraction => core_fraction);
                    let k = o.k.unwrap_or(default_k(&system));
                    (system, Some(spec), None, None, k)
                } else {
                    return Err(Error::Config(format!(
                        "unknown system '{system}' (expected single_gyre, double_gyre, duffing or {TOY_EXAMPLE})"
                    )));
                }
            }
        };

        let p_grid = match command {
            Command::Sweep => Some(match (&o.p_grid, o.p_min, o.p_max, o.p_step) {
                (Some(g), ..) => g.clone(),
                (None, Some(lo), Some(hi), Some(st)) => {
                    if !(st > 0.0 && hi > lo) {
                        return Err(Error::Config("need p_min < p_max and p_step > 0".into()));
                    }
                    bifurcation::linear_grid(lo, hi, st)
                }
                (None, None, None, None) => match system.as_str() {
                    "duffing" => bifurcation::linear_grid(-1.0, 1.0, 0.05),
                    "double_gyre" => bifurcation::linear_grid(0.0, 1.0, 0.05),
                    _ => return Err(Error::Config(format!("no default p grid for '{system}'"))),
                },
                _ => return Err(Error::Config("p_min, p_max and p_step must be given together".into())),
            }),
            _ => None,
        };

        let m_default = match (command, system.as_str()) {
            (Command::Sweep, "duffing") => 250,
            (Command::Sweep, _) => 20,
            (Command::Toy, _) => 6,
            _ => 8,
        };
        let region = match (&o.region, &flow) {
            (Some(r), _) => Some(rect_from(r, "region")?),
            (None, Some(spec)) if command == Command::Sweep => Some(pipeline::default_region(&spec.domain)),
            _ => None,
        };
        let j = match command {
            Command::Spectrum => Some(o.j.unwrap_or(if system == TOY_EXAMPLE { 3 } else { 2 })),
            _ => None,
        };
        let cfg = RunConfig {
            command,
            p: (command == Command::Spectrum).then(|| o.p.unwrap_or(0.0)),
            p_grid,
            flow,
            morph,
            epsilon,
            seed,
            m: o.m.unwrap_or(m_default),
            k,
            j,
            dead_zone: o.dead_zone.unwrap_or(DEAD_ZONE),
            region,
            weak_threshold: o.weak_threshold.unwrap_or(0.8),
            n_weak: o.n_weak.unwrap_or(if command == Command::Sweep { 2 } else { 0 }),
            symmetry: o.symmetry.unwrap_or(system == "duffing"),
            window: o.window.unwrap_or(if command == Command::Toy { 3 } else { 5 }),
            theta: o.theta.unwrap_or(1e-3),
            solver: o.solver.unwrap_or(Solver::Auto),
            dump: o.dump.unwrap_or(false),
            output,
            system,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every setting spelled out; resolving it again gives back `self`.
    pub fn echo(&self) -> Overrides {
        let mut o = Overrides {
            p: self.p,
            p_grid: self.p_grid.clone(),
            seed: Some(self.seed),
            m: Some(self.m),
            k: Some(self.k),
            j: self.j,
            dead_zone: Some(self.dead_zone),
            theta: Some(self.theta),
            window: Some(self.window),
            solver: Some(self.solver),
            dump: Some(self.dump),
            output: Some(self.output.clone()),
            ..Default::default()
        };
        if let Some(spec) = &self.flow {
            o.system = Some(spec.field.clone());
            o.domain = Some(rect_to(&spec.domain));
            o.depth = Some(spec.depth);
            o.samples = Some(spec.samples);
            o.scheme = Some(spec.scheme);
            o.t = Some(spec.t_final);
            o.h = Some(spec.h);
            o.epsilon = Some(spec.epsilon);
            o.sink = Some(spec.sink);
            o.core_fraction = Some(spec.core_fraction);
        }
        if let Some(fam) = &self.morph {
            o.kind = Some(fam.kind);
            o.steps = Some(fam.steps);
            o.epsilon = Some(fam.strength);
        } else if self.flow.is_none() {
            o.system = Some(self.system.clone());
            o.epsilon = self.epsilon;
        }
        if self.command == Command::Sweep {
            o.region = self.region.as_ref().map(rect_to);
            o.weak_threshold = Some(self.weak_threshold);
            o.n_weak = Some(self.n_weak);
            o.symmetry = Some(self.symmetry);
        }
        o
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m < 2 || self.k < 1 || self.k > self.m {
            return bad(format!("need m >= 2 and 1 <= k <= m, got m = {}, k = {}", self.m, self.k));
        }
        if !(self.dead_zone >= 0.0 && self.dead_zone < 1.0) {
            return bad(format!("dead zone {} outside [0, 1)", self.dead_zone));
        }
        if !(self.theta >= 0.0) || !(0.0..=1.0).contains(&self.weak_threshold) {
            return bad("theta must be >= 0 and the weak threshold in [0, 1]".into());
        }
        if let Some(j) = self.j
            && j != 0
            && (j < 2 || j > self.m)
        {
            return bad(format!("sign partition size j = {j} must be 0 (off) or lie in [2, m]"));
        }
        if let Some(spec) = &self.flow {
            if !(2..=26).contains(&spec.depth) {
                return bad(format!("depth {} outside [2, 26]", spec.depth));
            }
            if spec.samples == 0 {
                return bad("at least one sample per box is required".into());
            }
            if !(spec.t_final > 0.0 && spec.h > 0.0) {
                return bad("flow time and step must be positive".into());
            }
            if !(0.0..=1.0).contains(&spec.core_fraction) {
                return bad(format!("core fraction {} outside [0, 1]", spec.core_fraction));
            }
            for &p in self.p_grid.iter().flatten().chain(self.p.iter()) {
                VectorField::from_id(&spec.field, p)?;
            }
            let p0 = self.p.or_else(|| self.p_grid.as_ref().and_then(|g| g.first().copied())).unwrap_or(0.0);
            spec.ulam_config(p0)?;
        }
        if let Some(fam) = &self.morph {
            fam.validate()?;
        }
        if let Some(e) = self.epsilon
            && !(0.0..=0.1).contains(&e)
        {
            return bad(format!("coupling strength {e} outside [0, 0.1]"));
        }
        if self.command == Command::Sweep {
            let n = self.p_grid.as_ref().map_or(0, Vec::len);
            if n < 2 {
                return bad(format!("a sweep needs at least two grid points, got {n}"));
            }
            if self.flow.is_none() {
                return bad(format!("system '{}' cannot be swept; use the toy command for chain families", self.system));
            }
        }
        if self.command != Command::Spectrum {
            self.sweep_config()?.validate()?;
        }
        Ok(())
    }

    /// Sweep settings for the sweep and toy commands.
    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let mut sc = match (&self.flow, &self.morph) {
            (Some(spec), _) => {
                let grid = self.p_grid.clone().unwrap_or_default();
                SweepConfig::flow(spec.clone(), grid, self.m, self.k)
            }
            (None, Some(fam)) => SweepConfig::morph(fam.clone(), self.m, self.k),
            _ => return Err(Error::Config(format!("system '{}' has no sweep", self.system))),
        };
        if self.flow.is_some() {
            sc.region_d = self.region;
            sc.weak_threshold = self.weak_threshold;
            sc.n_weak = self.n_weak;
            sc.symmetry = self.symmetry;
        }
        sc.window = self.window;
        sc.theta = self.theta;
        Ok(sc)
    }
}
