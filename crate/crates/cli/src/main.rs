//! `spikectl` — train, merge, prune, evaluate and export spiking attitude
//! controllers against the built-in quadrotor simulator.

mod ops;

use clap::{Parser, Subcommand};


#[derive(Parser)]
#[command(name = "spikectl", version, about)]
struct Cli {
    /// Pipeline config file (TOML). Defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Run directory for all artifacts. Falls back to $SPIKECTL_RUN_ROOT,
    /// then ./run.
    #[arg(long, global = true)]
    run_dir: Option<std::path::PathBuf>,

    /// Override the master seed (same as --set run.seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Force single-threaded execution.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Override a config key, e.g. --set training.controller.epochs=5.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a round of simulated flight episodes.
    GenData {
        /// Round name: expert | snn | disturbed.
        #[arg(long, default_value = "expert")]
        round: String,
        /// Flight minutes (defaults to the config value for the round).
        #[arg(long)]
        minutes: Option<f64>,
        /// Estimator checkpoint (snn round).
        #[arg(long)]
        est: Option<std::path::PathBuf>,
        /// Controller checkpoint (snn round).
        #[arg(long)]
        ctl: Option<std::path::PathBuf>,
    },
    /// Train the attitude-estimation sub-network.
    TrainEst {
        /// Comma-separated data rounds to train on.
        #[arg(long, default_value = "expert")]
        rounds: String,
    },
    /// Pretrain the integrator block on integral targets.
    TrainIntegrator {
        #[arg(long, default_value = "expert")]
        rounds: String,
    },
    /// Train the attitude-control sub-network.
    TrainCtl {
        #[arg(long, default_value = "expert")]
        rounds: String,
        /// Pretrained integrator checkpoint to seed the frozen tail.
        #[arg(long)]
        integrator: Option<std::path::PathBuf>,
        /// Override the target time shift d.
        #[arg(long)]
        shift: Option<usize>,
        /// Checkpoint name (default "controller").
        #[arg(long, default_value = "controller")]
        name: String,
    },
    /// Merge estimator and controller checkpoints into one network.
    Merge {
        #[arg(long)]
        est: std::path::PathBuf,
        #[arg(long)]
        ctl: std::path::PathBuf,
        #[arg(long, default_value = "merged")]
        name: String,
    },
    /// Contribution-prune a merged checkpoint.
    Prune {
        #[arg(long)]
        net: std::path::PathBuf,
        #[arg(long, default_value = "expert")]
        rounds: String,
        /// Target widths, e.g. 150,100,80 (defaults to config).
        #[arg(long)]
        widths: Option<String>,
        #[arg(long, default_value = "pruned")]
        name: String,
    },
    /// Open-loop diagnostics: correlation vs shift, sparsity, open-loop MSE.
    Eval {
        #[arg(long)]
        net: std::path::PathBuf,
        #[arg(long, default_value = "expert")]
        rounds: String,
        /// Target shift applied during the network's training (for MSE).
        #[arg(long, default_value_t = 0)]
        shift: usize,
    },
    /// Closed-loop step-response suite.
    ClosedLoop {
        /// "expert" or a merged checkpoint path.
        #[arg(long, default_value = "expert")]
        controller: String,
        /// Estimator checkpoint (pipeline mode, together with --ctl).
        #[arg(long)]
        est: Option<std::path::PathBuf>,
        #[arg(long)]
        ctl: Option<std::path::PathBuf>,
        /// Script: roll-step | hover.
        #[arg(long, default_value = "roll-step")]
        script: String,
        #[arg(long)]
        n_runs: Option<usize>,
    },
    /// Write the flat binary deployment blob.
    Export {
        #[arg(long)]
        net: std::path::PathBuf,
        /// Output path (default export/<name>.snnx).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Time single-step inference of an exported network.
    Bench {
        /// Exported .snnx blob.
        #[arg(long)]
        export: std::path::PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Re-hash every artifact in the run directory against the manifest.
    Verify,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> spikectl_core::Result<()> {
    let mut ctx = ops::Context::new(
        cli.config.as_deref(),
        cli.run_dir.as_deref(),
        cli.seed,
        cli.threads,
        cli.deterministic,
        &cli.set,
    )?;
    match cli.command {
        Command::GenData {
            round,
            minutes,
            est,
            ctl,
        } => ops::gen_data(&mut ctx, &round, minutes, est.as_deref(), ctl.as_deref()),
        Command::TrainEst { rounds } => ops::train_est(&mut ctx, &rounds),
        Command::TrainIntegrator { rounds } => ops::train_integrator(&mut ctx, &rounds),
        Command::TrainCtl {
            rounds,
            integrator,
            shift,
            name,
        } => ops::train_ctl(&mut ctx, &rounds, integrator.as_deref(), shift, &name),
        Command::Merge { est, ctl, name } => ops::merge(&mut ctx, &est, &ctl, &name),
        Command::Prune {
            net,
            rounds,
            widths,
            name,
        } => ops::prune(&mut ctx, &net, &rounds, widths.as_deref(), &name),
        Command::Eval { net, rounds, shift } => ops::eval(&mut ctx, &net, &rounds, shift),
        Command::ClosedLoop {
            controller,
            est,
            ctl,
            script,
            n_runs,
        } => ops::closed_loop(&mut ctx, &controller, est.as_deref(), ctl.as_deref(), &script, n_runs),
        Command::Export { net, out } => ops::export(&mut ctx, &net, out.as_deref()),
        Command::Bench { export, steps } => ops::bench(&mut ctx, &export, steps),
        Command::Verify => ops::verify(&ctx),
    }
}
