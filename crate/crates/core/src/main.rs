use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use auxopt::format::sci6;
use auxopt::harness::{emit_report, run_experiment, AuxInit, Model, RunConfig, Task};

#[derive(Parser)]
#[command(
    name = "auxopt",
    version,
    about = "Train networks with LS, PM or SAPM over several seeds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regression of a target function (`sin1d`, `ball10`).
    FitFnn(Flags),
    /// Physics-informed solve of a transport problem (`t1d`, `t3d`).
    SolveTransport(Flags),
}

#[derive(Args)]
struct Flags {
    /// ls, pm or sapm.
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Output directory (default `runs/<problem>_<model>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// random or feasible.
    #[arg(long)]
    aux_init: Option<AuxInit>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn configure(task: Task, f: Flags) -> auxopt::Result<RunConfig> {
    let mut c = match &f.config {
        Some(path) => RunConfig::load(path, task)?,
        None => RunConfig::new(task, Model::Sapm),
    };
    if let Some(m) = f.model {
        c.model = m;
    }
    if let Some(p) = f.problem {
        c.problem = p;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $( if let Some(v) = f.$flag { c.$field = v; } )* };
    }
    set!(depth => depth, width => width, iters => iterations, seeds => seeds, master_seed => master_seed,
         aux_init => aux_init, workers => workers);
    if f.out.is_some() {
        c.out = f.out;
    }
    c.validate()?;
    Ok(c)
}

fn run(task: Task, flags: Flags) -> auxopt::Result<()> {
    let cfg = configure(task, flags)?;
    let dir = cfg.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "runs/{}_{}",
            cfg.problem,
            cfg.model.name().to_lowercase()
        ))
    });
    let outcome = run_experiment(&cfg)?;
    emit_report(&outcome, &dir)?;
    let report = &outcome.report;
    for s in &report.seeds {
        let loss = |v: Option<f64>| v.map(sci6).unwrap_or_else(|| "-".into());
        println!(
            "seed {:>2}: {} -> {}{}",
            s.seed,
            loss(s.initial_loss),
            loss(s.final_loss),
            if s.failed { " *" } else { "" }
        );
    }
    if let Some(b) = report.best() {
        println!(
            "best seed {}: original loss {}, test error {}",
            b.seed,
            b.final_original_loss.map(sci6).unwrap_or_default(),
            b.test_error.map(sci6).unwrap_or_default()
        );
    }
    println!(
        "{} failed of {}; written to {}",
        report.failures,
        report.seeds.len(),
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FitFnn(f) => run(Task::Fnn, f),
        Command::SolveTransport(f) => run(Task::Pinn, f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
