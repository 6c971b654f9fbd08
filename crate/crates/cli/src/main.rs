//! `qlab`: solve, train, sweep and inspect tabular models from the shell.
//!
//! Exit status: 0 success, 1 usage error, 2 invalid input or failed
//! computation, 3 numerical non-convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qlab::chain::{diagnose, DEFAULT_MIXING_CAP};
use qlab::error::{Error, Result};
use qlab::experiments::{
    execute_run, exact_oracle, fit_exponent, run_sweep_with_progress, threshold_table, with_workers, FitAxis,
};
use qlab::hard::{build_hard_mdp, hard_oracle, matched_mrp};
use qlab::io::{self, ExperimentFile, Model, SolveOutput, SweepSummary};
use qlab::mdp::{backward_induction, value_iteration, QTable, VTable};
use qlab::sampling::BehaviorPolicy;

#[derive(Parser)]
#[command(name = "qlab", version, about = "Tabular Q-learning and TD learning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model exactly and print Q* and V* as JSON.
    Solve(SolveArgs),
    /// Run one learner from an experiment file and write its run record.
    Train(TrainArgs),
    /// Run a (γ, T) sweep from an experiment file.
    Sweep(SweepArgs),
    /// Emit the hard instance or print its closed-form optimal values.
    HardMdp(HardArgs),
    /// Stationary distribution, μ_min and mixing time of a behaviour chain.
    Diagnose(DiagnoseArgs),
    /// Check a model file and list every violated constraint.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Model file (discounted or finite-horizon).
    #[arg(long)]
    mdp: PathBuf,
    /// Stop when consecutive iterates differ by at most this much.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000_000)]
    max_iters: usize,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment file holding a `run` section.
    #[arg(long)]
    config: PathBuf,
    /// Score checkpoints against the output of `qlab solve` instead of
    /// solving the model in-process.
    #[arg(long)]
    oracle_from_solve: Option<PathBuf>,
    /// Skip scoring; checkpoints carry no error.
    #[arg(long, conflicts_with = "oracle_from_solve")]
    no_oracle: bool,
    /// Run record destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the checkpoint series as CSV.
    #[arg(long)]
    checkpoints_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitArg {
    Horizon,
    Iterations,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment file holding a `sweep` section.
    #[arg(long)]
    config: PathBuf,
    /// Directory for `runs.csv` and `summary.json`; defaults to the
    /// config's `output` or the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write per-cell statistics in long CSV form.
    #[arg(long)]
    plot_data: Option<PathBuf>,
    /// Fit the power-law exponent along this axis.
    #[arg(long, value_enum)]
    fit: Vec<FitArg>,
    /// Report the smallest T reaching each error level.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    /// Suppress the progress line on standard error.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct HardArgs {
    #[arg(long)]
    gamma: f64,
    /// Print V* and Q* instead of the instance.
    #[arg(long)]
    oracle: bool,
    /// Emit the matched single-action chain instead of the MDP.
    #[arg(long, conflicts_with = "oracle")]
    matched_mrp: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Behaviour policy file; uniform over allowed actions when omitted.
    #[arg(long)]
    behavior: Option<PathBuf>,
    /// Largest mixing time searched.
    #[arg(long, default_value_t = DEFAULT_MIXING_CAP)]
    cap: u64,
}

#[derive(Args)]
struct ValidateArgs {
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(e: &Error) {
    match e {
        Error::Invalid(list) => {
            eprintln!("error: model failed validation with {} violation(s)", list.len());
            for v in list {
                eprintln!("  {v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::HardMdp(a) => hard(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::Validate(a) => validate(a),
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))
}

/// Writes `text` to `out` (through the output directory override) or prints it.
fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let p = io::output_path(p);
            io::write_atomic(&p, format!("{text}\n").as_bytes())?;
            eprintln!("wrote {}", p.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn state_values(q: &QTable) -> VTable {
    VTable((0..q.num_states()).map(|s| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect())
}

fn solve(a: SolveArgs) -> Result<()> {
    let out = match io::load_model(&a.mdp)? {
        Model::Discounted(m) => {
            let sol = value_iteration(&m, a.tol, a.max_iters)?;
            SolveOutput::Discounted {
                q: sol.q,
                v: sol.v,
                iterations: sol.iterations,
                residual: sol.residual,
            }
        }
        Model::FiniteHorizon(f) => {
            let q = backward_induction(&f)?;
            let v = q.iter().map(state_values).collect();
            SolveOutput::FiniteHorizon { q, v }
        }
    };
    emit(&io::solve_output_to_json(&out)?, a.out.as_deref())
}

fn train(a: TrainArgs) -> Result<()> {
    let ExperimentFile::Run(spec) = io::load_experiment(&a.config)? else {
        return Err(Error::Schema {
            pointer: "/run".into(),
            message: "train needs a `run` section; use `qlab sweep` for sweeps".into(),
        });
    };
    let oracle = match (&a.oracle_from_solve, a.no_oracle) {
        (Some(p), _) => Some(io::load_solve_output(p)?.oracle_for(spec.algorithm)?),
        (None, true) => None,
        (None, false) => Some(exact_oracle(&spec.problem()?)?),
    };
    let rec = execute_run(&spec, oracle.as_ref())?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &a.checkpoints_csv {
        io::write_atomic(&io::output_path(p), rec.checkpoints_csv().as_bytes())?;
    }
    emit(&io::run_record_to_json(&rec)?, a.out.as_deref())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let ExperimentFile::Sweep(cfg) = io::load_experiment(&a.config)? else {
        return Err(Error::Schema {
            pointer: "/sweep".into(),
            message: "sweep needs a `sweep` section; use `qlab train` for single runs".into(),
        });
    };
    cfg.validate()?;
    let dir = io::output_path(&a.out_dir.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| ".".into()));
    let shown = AtomicUsize::new(0);
    let progress = |done: usize, total: usize| {
        // one line per percent keeps logs short
        let pct = done * 100 / total.max(1);
        if shown.fetch_max(pct + 1, Ordering::Relaxed) <= pct {
            eprint!("\r{done}/{total} runs");
            if done == total {
                eprintln!();
            }
        }
    };
    let progress: Option<&(dyn Fn(usize, usize) + Sync)> = if a.quiet { None } else { Some(&progress) };
    let outcome = with_workers(|| run_sweep_with_progress(&cfg, progress))??;

    let mut notes = Vec::new();
    let mut fits = Vec::new();
    for axis in &a.fit {
        let axis = match axis {
            FitArg::Horizon => FitAxis::Horizon,
            FitArg::Iterations => FitAxis::Iterations,
        };
        match fit_exponent(&outcome, axis) {
            Ok(f) => fits.push(f),
            Err(e) => notes.push(format!("{axis:?} fit skipped: {e}")),
        }
    }
    let thresholds = if a.thresholds.is_empty() { Vec::new() } else { threshold_table(&outcome, &a.thresholds)? };
    for c in &outcome.aborted {
        eprintln!("warning: cell γ={} T={} aborted: {}", c.gamma, c.t, c.reason);
    }

    io::write_atomic(&dir.join("runs.csv"), &io::runs_csv(&outcome)?)?;
    let summary = SweepSummary {
        config: outcome.config.clone(),
        cells: outcome.cells.clone(),
        aborted: outcome.aborted.clone(),
        fits,
        thresholds,
        notes,
    };
    io::save_sweep_summary(&summary, &dir.join("summary.json"))?;
    if let Some(p) = &a.plot_data {
        io::write_atomic(&io::output_path(p), &io::plot_data_csv(&outcome)?)?;
    }
    for f in &summary.fits {
        println!(
            "{:?} slope {:.4} ± {:.4} (r² {:.4}){}",
            f.axis,
            f.slope,
            f.stderr,
            f.r_squared,
            if f.flags.is_empty() { String::new() } else { format!(" [{}]", f.flags.join(", ")) }
        );
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn hard(a: HardArgs) -> Result<()> {
    if a.oracle {
        return emit(&json(&hard_oracle(a.gamma)?)?, a.out.as_deref());
    }
    let mdp = if a.matched_mrp { matched_mrp(a.gamma)?.to_mdp() } else { build_hard_mdp(a.gamma)? };
    match &a.out {
        Some(p) => {
            let p = io::output_path(p);
            io::save_mdp(&mdp, &p)?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        None => emit(&io::mdp_to_json(&mdp), None),
    }
}

fn diagnose_cmd(a: DiagnoseArgs) -> Result<()> {
    let mdp = io::load_mdp(&a.mdp)?;
    let behavior = match &a.behavior {
        Some(p) => io::load_behavior(p)?,
        None => BehaviorPolicy::uniform(&mdp),
    };
    let d = diagnose(&mdp, &behavior, a.cap)?;
    if !d.ergodic {
        eprintln!("warning: behaviour chain is not ergodic; mixing time is undefined");
    }
    emit(&json(&d)?, None)
}

fn validate(a: ValidateArgs) -> Result<()> {
    match io::load_model(&a.path)? {
        Model::Discounted(m) => println!(
            "ok: {} states, {} actions, discount {}",
            m.num_states(),
            m.num_actions(),
            m.discount()
        ),
        Model::FiniteHorizon(f) => println!(
            "ok: {} states, {} actions, horizon {}",
            f.num_states(),
            f.num_actions(),
            f.horizon()
        ),
    }
    Ok(())
}
