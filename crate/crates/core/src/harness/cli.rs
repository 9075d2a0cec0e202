//! Command-line entry: `spectrum`, `sweep` and `toy`.

use std::collections::HashMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::{Command, Overrides, RunConfig, TOY_EXAMPLE, TOY_EXAMPLE_BLOCKS};
use super::export::{self, OutputDir};
use crate::bifurcation::{self, CurveKind};
use crate::error::{Error, Result};
use crate::markov;
use crate::partition::BoxPartition;
use crate::pipeline;
use crate::spectral::{self, SpectralSet};
use crate::toychains::{self, BlockChainSpec};

#[derive(Parser, Debug)]
#[command(name = "boxflow", version, about = "Transfer-operator spectra of planar flows and block chains")]
pub struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Subcommand, Debug)]
pub enum Sub {
    /// Dominant spectrum, eigenvector fields and sign partition at one parameter.
    Spectrum(RunArgs),
    /// Eigenvalue branches, crossings and trend flags over a parameter grid.
    Sweep(RunArgs),
    /// Branches of a morphing block-chain family.
    Toy(RunArgs),
}

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    /// JSON config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Overrides,
}

impl Sub {
    fn parts(&self) -> (Command, &RunArgs) {
        match self {
            Sub::Spectrum(a) => (Command::Spectrum, a),
            Sub::Sweep(a) => (Command::Sweep, a),
            Sub::Toy(a) => (Command::Toy, a),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (command, args) = cli.command.parts();
    let cfg = RunConfig::resolve(command, args.config.as_deref(), &args.flags)?;
    run(&cfg).map(|_| ())
}

/// Runs a resolved configuration; on failure nothing written is left behind.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut out = OutputDir::create(&cfg.output)?;
    let result = match cfg.command {
        Command::Spectrum => spectrum(cfg, &mut out),
        Command::Sweep | Command::Toy => sweep(cfg, &mut out),
    }
    .and_then(|()| out.write_text("config.json", &cfg.echo().to_json()?));
    match result {
        Ok(()) => Ok(out.files().to_vec()),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn write_fields(out: &mut OutputDir, bp: Option<&BoxPartition>, spec: &SpectralSet, dir: &str) -> Result<()> {
    for i in 0..spec.m() {
        out.write_text(&format!("{dir}eigenvector_{}.csv", i + 1), &export::field_csv(bp, &spec.left_vector(i)))?;
    }
    Ok(())
}

fn spectrum(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    if let Some(spec) = &cfg.flow {
        let a = pipeline::analyze_flow(spec, cfg.p.unwrap_or(0.0), cfg.m, cfg.solver)?;
        let full = a.embedded();
        out.write_text("eigenvalues.json", &export::eigenvalues_json(&full)?)?;
        write_fields(out, Some(&a.partition), &full, "")?;
        if let Some(j) = cfg.j.filter(|&j| j > 0) {
            let adj_full = a.partition.adjacency();
            let pos: HashMap<usize, usize> = a.core.states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
            let adj: Vec<Vec<usize>> = a
                .core
                .states
                .iter()
                .map(|&s| adj_full[s].iter().filter_map(|t| pos.get(t).copied()).collect())
                .collect();
            let part = spectral::sign_partition(&a.spectrum, j, &adj, cfg.dead_zone, &a.chain)?;
            let n = a.partition.n_boxes();
            out.write_text("partition.csv", &export::partition_csv(Some(&a.partition), n, &a.core.states, &part.labels))?;
            out.write_text("partition_sets.csv", &export::partition_sets_csv(&part, &a.spectrum.pi))?;
        }
        out.write_matrix("matrix.mtx", &a.matrix)?;
        out.write_json("assembly.json", &a.report)?;
        out.write_json("grid.json", &a.partition)?;
        return Ok(());
    }
    if cfg.system != TOY_EXAMPLE {
        return Err(Error::Config(format!("system '{}' has no single spectrum", cfg.system)));
    }
    let base = toychains::build_block_chain(&BlockChainSpec::new(TOY_EXAMPLE_BLOCKS.to_vec(), cfg.seed))?;
    let eps = cfg.epsilon.unwrap_or(0.0);
    let p = if eps > 0.0 { toychains::perturb_chain(&base, eps, cfg.seed)? } else { base };
    let pi = markov::stationary_mixture(&p, markov::STATIONARY_TOL, markov::STATIONARY_MAX_ITER)?;
    let chain = markov::reversibilize(&p, &pi)?;
    let spec = spectral::dominant_spectrum_with(&chain, cfg.m.min(chain.n()), cfg.solver)?;
    out.write_text("eigenvalues.json", &export::eigenvalues_json(&spec)?)?;
    write_fields(out, None, &spec, "")?;
    if let Some(j) = cfg.j.filter(|&j| j > 0) {
        let adj = p.successors();
        let part = spectral::sign_partition(&spec, j, &adj, cfg.dead_zone, &chain)?;
        let states: Vec<usize> = (0..p.n()).collect();
        out.write_text("partition.csv", &export::partition_csv(None, p.n(), &states, &part.labels))?;
        out.write_text("partition_sets.csv", &export::partition_sets_csv(&part, &spec.pi))?;
    }
    out.write_matrix("matrix.mtx", &p)?;
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let mut sc = cfg.sweep_config()?;
    sc.keep_spectra = cfg.dump && cfg.flow.is_some();
    let r = bifurcation::run_sweep(&sc)?;
    out.write_text("curves.csv", &export::curves_csv(&r.curves))?;
    out.write_text("trends.csv", &export::trends_csv(&r.curves, &r.signature))?;
    out.write_text("events.json", &export::events_json(&r.crossings, &r.signature.flags, &r.dominance)?)?;
    out.write_text("steps.json", &export::steps_json(&r.steps)?)?;
    let grid = match &cfg.flow {
        Some(spec) => Some(BoxPartition::new(spec.domain, spec.depth)?),
        None => None,
    };
    if let Some(bp) = &grid {
        out.write_json("grid.json", bp)?;
    }
    if !cfg.dump {
        return Ok(());
    }
    if let Some(bp) = &grid {
        for c in r.curves.iter().filter(|c| c.kind != CurveKind::Other) {
            for q in &c.points {
                let u = r.spectra[q.step].left_vector(q.index);
                out.write_text(&format!("fields/step_{:03}/branch_{}.csv", q.step, c.id), &export::field_csv(Some(bp), &u))?;
            }
        }
    } else if let Some(fam) = &cfg.morph {
        for s in 0..fam.steps {
            out.write_matrix(&format!("matrices/step_{s:03}.mtx"), &toychains::morph_snapshot(fam, s)?)?;
        }
    }
    Ok(())
}
