//! `specsense`: generate datasets, train detectors, run experiments, and
//! print reports.

mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use specsense::config::RunConfig;
use specsense::dataset::{NnCondition, Role};
use specsense::harness::{ExperimentBundle, ExperimentId};
use specsense::workspace::Workspace;

#[derive(Parser, Debug)]
#[command(name = "specsense", version, about = "Spectrum-sensing testbed: learned detectors versus energy detection")]
struct Cli {
    /// Run configuration (`key: value` lines); defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set data.train_size=3000`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Workspace directory (overrides the config file).
    #[arg(long, env = "SPECSENSE_WORKSPACE", global = true)]
    workspace: Option<PathBuf>,

    /// Worker threads for generation and evaluation. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Print the resolved plan and write nothing.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate datasets for a training condition.
    Gen {
        #[arg(long, value_parser = parse_condition)]
        condition: NnCondition,
        /// Dataset role; all three roles when omitted.
        #[arg(long, value_parser = parse_role)]
        role: Option<Role>,
    },
    /// Train a detector on its stored train and val datasets.
    Train {
        #[arg(long, value_parser = parse_condition)]
        condition: NnCondition,
    },
    /// Run an experiment (I, II.A, II.B, II.C) with stored models.
    Experiment {
        #[arg(value_parser = parse_experiment)]
        id: ExperimentId,
    },
    /// Print a report bundle as aligned tables.
    Report {
        /// Experiment id (read from the workspace) or a bundle directory.
        target: String,
    },
}

fn parse_condition(s: &str) -> Result<NnCondition, String> {
    s.parse().map_err(|e: specsense::Error| e.to_string())
}

fn parse_role(s: &str) -> Result<Role, String> {
    s.parse().map_err(|e: specsense::Error| e.to_string())
}

fn parse_experiment(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: specsense::Error| e.to_string())
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| specsense::Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(ws) = &cli.workspace {
        cfg.workspace = ws.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plan(ws: &Workspace, cmd: &Command) -> Vec<String> {
    let cfg = ws.config();
    let mut lines = vec![
        format!("workspace: {}", ws.root().display()),
        format!("master_seed: {}", cfg.master_seed),
        format!("config_hash: {}", cfg.hash()),
    ];
    match cmd {
        Command::Gen { condition, role } => {
            for r in roles(*role) {
                let spec = ws.dataset_spec(*condition, r);
                lines.push(format!(
                    "write {} ({} examples, base seed {}, offset law {})",
                    ws.dataset_path(*condition, r).display(),
                    spec.size,
                    spec.base_seed,
                    spec.offset_law
                ));
            }
        }
        Command::Train { condition } => {
            for r in [Role::Train, Role::Val] {
                lines.push(format!("read {}", ws.dataset_path(*condition, r).display()));
            }
            let (init, shuffle) = ws.training_seeds(*condition);
            lines.push(format!("init seed {init}, shuffle seed {shuffle}"));
            lines.push(format!("write {}", ws.model_path(*condition).display()));
            lines.push(format!("write {}", ws.history_path(*condition).display()));
        }
        Command::Experiment { id } => {
            for c in id.required_models() {
                lines.push(format!("read {}", ws.model_path(*c).display()));
            }
            for s in id.sweep_specs(cfg) {
                lines.push(format!(
                    "sweep {} over {} points in scenario {} (seed {})",
                    s.axis,
                    s.grid.len(),
                    s.scenario,
                    s.seed
                ));
            }
            lines.push(format!("write {}", ws.report_dir(*id).display()));
        }
        Command::Report { .. } => {}
    }
    lines.push("resolved config:".into());
    lines.extend(cfg.to_text().lines().map(|l| format!("  {l}")));
    lines
}

fn roles(role: Option<Role>) -> Vec<Role> {
    role.map_or_else(|| vec![Role::Train, Role::Val, Role::Test], |r| vec![r])
}

fn report_dir(ws: Option<&Workspace>, target: &str) -> anyhow::Result<PathBuf> {
    if let Ok(id) = target.parse::<ExperimentId>() {
        if let Some(ws) = ws {
            return Ok(ws.report_dir(id));
        }
    }
    Ok(PathBuf::from(target))
}

fn print_bundle(dir: &Path) -> anyhow::Result<()> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt"))
        .with_context(|| format!("no report bundle at {}", dir.display()))?;
    for line in manifest.lines().filter(|l| !l.starts_with("config.")) {
        println!("{line}");
    }
    let mut csvs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    for path in csvs {
        let text = std::fs::read_to_string(&path)?;
        println!("\n{}", path.file_name().unwrap().to_string_lossy());
        print!("{}", table::render(&text));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(specsense::Error::Config("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = resolve_config(&cli)?;
    let ws = Workspace::open(cfg)?;
    if cli.dry_run {
        for line in plan(&ws, &cli.command) {
            println!("{line}");
        }
        return Ok(());
    }
    match &cli.command {
        Command::Gen { condition, role } => {
            for r in roles(*role) {
                let ds = ws.generate(*condition, r)?;
                println!("wrote {} ({} examples)", ws.dataset_path(*condition, r).display(), ds.len());
            }
        }
        Command::Train { condition } => {
            let (model, history) = ws.train(*condition, &mut |e| {
                eprintln!(
                    "epoch {:>3}  train {:.6}  val {:.6}  best {}",
                    e.epoch, e.train_loss, e.val_loss, e.best_epoch
                );
            })?;
            println!(
                "wrote {} (best epoch {} of {}, val loss {:.6})",
                ws.model_path(*condition).display(),
                model.meta.best_epoch,
                history.epochs(),
                model.meta.best_val_loss
            );
        }
        Command::Experiment { id } => {
            let bundle = ws.experiment(*id)?;
            let dir = ws.report_dir(*id);
            for r in &bundle.reports {
                println!("wrote {}", dir.join(ExperimentBundle::csv_name(r)).display());
            }
            println!("wrote {}", dir.join("manifest.txt").display());
        }
        Command::Report { target } => print_bundle(&report_dir(Some(&ws), target)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<specsense::Error>() {
                Some(specsense::Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
