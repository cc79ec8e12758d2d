use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use labscene_core::evaluator::{evaluate_scene, summary_csv};
use labscene_core::issue::has_errors;
use labscene_core::navigation::{f_reach, goal_pairs_json, nav_targets, pair_targets, plan_pairs, rasterize};
use labscene_core::optimizer::{optimize, trace_to_jsonl};
use labscene_core::pipeline::{generate, write_outputs};
use labscene_core::protocol::{load_corpus, protocol_stats, validate_protocol_with, LocationRules};
use labscene_core::refine::refine_loop;
use labscene_core::render::{render_svg, Overlay};
use labscene_core::{
    run_pipeline, AssetBase, AssetError, EvaluationReport, Issue, Layout, PipelineConfig, Protocol, ProtocolError,
    SceneError,
};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "labscene",
    version,
    about = "Generate, repair and score laboratory scene layouts"
)]
struct Cli {
    /// Seed for initialization; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    assets: PathBuf,
}

#[derive(Args)]
struct SceneInputs {
    #[arg(long)]
    layout: PathBuf,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Subcommand)]
enum Command {
    /// Check an asset file.
    ValidateAssets {
        #[arg(long)]
        assets: PathBuf,
    },
    /// Check a protocol against an asset file.
    ValidateProtocol(Inputs),
    /// Summary statistics over a directory of protocols.
    Stats {
        #[arg(long)]
        protocols: PathBuf,
    },
    /// Build an initial layout for a protocol.
    Generate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repair geometry and improve chemical safety of a layout.
    Optimize {
        #[command(flatten)]
        scene: SceneInputs,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check that every consecutive pair of protocol steps is reachable.
    Navcheck {
        #[command(flatten)]
        scene: SceneInputs,
        #[arg(long)]
        goal_pairs: Option<PathBuf>,
        /// Occupancy grid as binary PGM.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Adjust a layout until all navigation pairs are reachable.
    Refine {
        #[command(flatten)]
        scene: SceneInputs,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration history as JSON lines.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score one or more layouts.
    Evaluate {
        /// Layout files; several are scored in parallel.
        #[arg(long, required = true, num_args = 1..)]
        layout: Vec<PathBuf>,
        #[command(flatten)]
        inputs: Inputs,
        /// Report JSON (single layout only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary table with one row per layout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw a layout as SVG.
    Render {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        assets: PathBuf,
        /// Adds navigation targets and planned paths.
        #[arg(long)]
        protocol: Option<PathBuf>,
        /// Shade occupied grid cells.
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, optimize, refine and evaluate in one go.
    Pipeline {
        #[command(flatten)]
        inputs: Inputs,
        /// Start from this layout instead of generating one.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Invalid(String),
    Operational(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Operational(e.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn report_issues(what: &Path, issues: &[Issue]) -> Result<()> {
    for i in issues {
        eprintln!("{}: {i}", what.display());
    }
    if has_errors(issues) {
        return Err(Failure::Invalid(format!("{} failed validation", what.display())));
    }
    Ok(())
}

fn load_assets(path: &Path) -> Result<AssetBase> {
    match AssetBase::load(path) {
        Ok(base) => {
            report_issues(path, base.warnings())?;
            Ok(base)
        }
        Err(e @ AssetError::Io { .. }) => Err(Failure::Operational(e.into())),
        Err(e) => Err(Failure::Invalid(format!("{}: {e}", path.display()))),
    }
}

/// With a layout at hand, step locations may also name its floor instances.
fn load_protocol(path: &Path, base: &AssetBase, scene: Option<&Layout>) -> Result<Protocol> {
    let p = match Protocol::load(path) {
        Ok(p) => p,
        Err(e @ ProtocolError::Io { .. }) => return Err(Failure::Operational(e.into())),
        Err(e) => return Err(Failure::Invalid(format!("{}: {e}", path.display()))),
    };
    let mut rules = LocationRules::default();
    if let Some(l) = scene {
        rules
            .tokens
            .extend(l.objects.iter().filter(|o| o.is_floor()).map(|o| o.instance_id.clone()));
    }
    report_issues(path, &validate_protocol_with(&p, base, &rules))?;
    Ok(p)
}

fn load_layout(path: &Path, base: &AssetBase) -> Result<Layout> {
    let l = match Layout::load(path) {
        Ok(l) => l,
        Err(e @ SceneError::Io { .. }) => return Err(Failure::Operational(e.into())),
        Err(e) => return Err(Failure::Invalid(format!("{}: {e}", path.display()))),
    };
    report_issues(path, &l.validate(base))?;
    Ok(l)
}

fn load_inputs(i: &Inputs) -> Result<(AssetBase, Protocol)> {
    let base = load_assets(&i.assets)?;
    let p = load_protocol(&i.protocol, &base, None)?;
    Ok((base, p))
}

fn load_scene(s: &SceneInputs) -> Result<(AssetBase, Protocol, Layout)> {
    let base = load_assets(&s.inputs.assets)?;
    let l = load_layout(&s.layout, &base)?;
    let p = load_protocol(&s.inputs.protocol, &base, Some(&l))?;
    Ok((base, p, l))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn evaluate_one(path: &Path, protocol: &Path, base: &AssetBase, cfg: &PipelineConfig) -> Result<EvaluationReport> {
    let l = load_layout(path, base)?;
    let p = load_protocol(protocol, base, Some(&l))?;
    let scorer = cfg.scorer();
    let report = evaluate_scene(&l, &p, base, &cfg.eval_config(), scorer.as_ref())?;
    Ok(report)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::ValidateAssets { assets } => {
            let base = load_assets(assets)?;
            println!("{}: {} assets ok", assets.display(), base.len());
        }
        Command::ValidateProtocol(i) => {
            let (_, p) = load_inputs(i)?;
            println!("{}: {} steps ok", i.protocol.display(), p.steps.len());
        }
        Command::Stats { protocols } => {
            let corpus = load_corpus(protocols)?;
            print!("{}", protocol_stats(&corpus)?.to_table());
        }
        Command::Generate { inputs, out } => {
            let (base, p) = load_inputs(inputs)?;
            let l = generate(&p, &base, &cfg)?;
            write(out, l.to_json_string())?;
        }
        Command::Optimize { scene, out, trace } => {
            let (base, p, l) = load_scene(scene)?;
            let proposer = cfg.proposer();
            let res = optimize(&l, &p, &base, proposer.as_ref(), &cfg.optimizer_config())?;
            write(out, res.layout.to_json_string())?;
            if let Some(path) = trace {
                write(path, trace_to_jsonl(&res.trace))?;
            }
            if let Some(last) = res.trace.last() {
                log::info!("optimize: {} iterations, reward {:.4}", res.trace.len(), last.f);
            }
        }
        Command::Navcheck {
            scene,
            goal_pairs,
            grid,
        } => {
            let (base, p, l) = load_scene(scene)?;
            let nav = &cfg.navigation;
            let reach = f_reach(&l, &p, &base, nav)?;
            for f in reach.failures() {
                println!("{} -> {}: {}", f.pair.start.step, f.pair.end.step, f.outcome.status);
            }
            println!("f_reach={}", reach.f_reach);
            if let Some(path) = goal_pairs {
                let targets = nav_targets(&p, &l, &base, nav.offset_radius)?;
                write(path, goal_pairs_json(&pair_targets(&targets), targets.len(), 3) + "\n")?;
            }
            if let Some(path) = grid {
                write(
                    path,
                    rasterize(&l, &base, nav.resolution, nav.agent_radius, nav.inflation).to_pgm(),
                )?;
            }
            if reach.f_reach < 1.0 {
                return Err(Failure::Invalid(format!("{} unreachable pair(s)", reach.unreachable())));
            }
        }
        Command::Refine { scene, out, history } => {
            let (base, p, l) = load_scene(scene)?;
            let res = refine_loop(&l, &p, &base, &cfg.navigation, &cfg.refine)?;
            write(out, res.layout.to_json_string())?;
            if let Some(path) = history {
                write(path, res.to_jsonl())?;
            }
            if !res.converged() {
                log::warn!("refinement stopped with unreachable pairs left");
            }
        }
        Command::Evaluate {
            layout,
            inputs,
            out,
            csv,
        } => {
            let base = load_assets(&inputs.assets)?;
            let reports = layout
                .par_iter()
                .map(|path| evaluate_one(path, &inputs.protocol, &base, &cfg))
                .collect::<Result<Vec<_>>>()?;
            if let Some(path) = out {
                if reports.len() != 1 {
                    return Err(anyhow::anyhow!("--out takes a single layout; use --csv for several").into());
                }
                write(path, reports[0].to_json_string() + "\n")?;
            }
            let rows: Vec<(String, &EvaluationReport)> = layout
                .iter()
                .zip(&reports)
                .map(|(path, r)| (path.display().to_string(), r))
                .collect();
            let table = summary_csv(&rows);
            match csv {
                Some(path) => write(path, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Render {
            layout,
            assets,
            protocol,
            grid,
            out,
        } => {
            let base = load_assets(assets)?;
            let l = load_layout(layout, &base)?;
            let nav = &cfg.navigation;
            let occupancy = rasterize(&l, &base, nav.resolution, nav.agent_radius, nav.inflation);
            let targets = match protocol {
                Some(path) => nav_targets(&load_protocol(path, &base, Some(&l))?, &l, &base, nav.offset_radius)?,
                None => Vec::new(),
            };
            let paths = plan_pairs(&occupancy, &pair_targets(&targets))
                .into_iter()
                .filter_map(|p| p.outcome.path)
                .map(|cells| cells.into_iter().map(|c| occupancy.cell_center(c)).collect())
                .collect();
            let overlay = Overlay {
                grid: grid.then_some(&occupancy),
                paths,
                markers: targets.iter().collect(),
                violations: Vec::new(),
            };
            write(out, render_svg(&l, &base, &overlay))?;
        }
        Command::Pipeline { inputs, layout, out } => {
            let base = load_assets(&inputs.assets)?;
            let initial = layout.as_deref().map(|path| load_layout(path, &base)).transpose()?;
            let p = load_protocol(&inputs.protocol, &base, initial.as_ref())?;
            let res = run_pipeline(&p, &base, &cfg, initial.as_ref())?;
            write_outputs(&res, out)?;
            println!("overall={:.2}", res.report.overall);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("invalid: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Operational(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
