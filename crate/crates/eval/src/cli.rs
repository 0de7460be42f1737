//! The `roq` command line. [`run`] is the whole program; the binary only
//! forwards `std::env::args` and the exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::experiments::{choices, predict_queries, split_ids};
use crate::output::comment_line;
use crate::reports::{
    ablation_table, decompose_table, metrics_table, scenario_table, selection_table, shift_table, sweep_table,
    training_table,
};
use crate::{
    default_cells, evaluate_strategies, run_ablation, run_inference_sweep, run_workload_shift, write_atomic, EvalError,
    LabConfig, Table,
};
use clap::{Args, Parser, Subcommand};
use roq_bench::{decompose_variance_closed_form, decompose_variance_monte_carlo, generate_with_config, LinearPcf};
use roq_core::{read_workload_file, write_workload_file, Split, WorkloadSample};
use roq_model::{prediction_csv, train, CostModel};
use roq_risk::Uncertainty;
use roq_select::{SelectionParams, Strategy};

#[derive(Parser)]
#[command(
    name = "roq",
    version,
    about = "Risk-aware plan selection with a probabilistic learned cost model"
)]
struct Cli {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// TOML file with optional [generator], [model] and [eval] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "roq-out")]
    out: PathBuf,
    /// Write NA instead of wall-clock measurements.
    #[arg(long, global = true)]
    no_timing: bool,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct WorkloadArg {
    #[arg(long)]
    workload: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// MC-dropout passes; defaults to model.mc_iterations.
    #[arg(long)]
    t: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload.
    Generate {
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        templates: Option<usize>,
    },
    /// Train a cost model on the train and validation splits.
    Train(WorkloadArg),
    /// Per-plan cost distributions.
    Predict {
        #[command(flatten)]
        m: ModelArgs,
        /// train, validation, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Choose one plan per test query with fixed parameters.
    Select {
        #[command(flatten)]
        m: ModelArgs,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value_t = 1.0)]
        f_s: f64,
        #[arg(long, default_value_t = 1.0)]
        f_er: f64,
        #[arg(long, default_value_t = 1.0)]
        f_pr: f64,
        #[arg(long, default_value = "total")]
        uncertainty: Uncertainty,
    },
    /// Tune every strategy on validation and report test metrics.
    Evaluate(ModelArgs),
    /// Risk and conservative selection under model, data and total uncertainty.
    Ablate(ModelArgs),
    /// Accuracy loss when templates are absent from training.
    Shift {
        #[arg(long)]
        workload: PathBuf,
        /// Comma-separated template ids.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        held_out: Vec<u32>,
        /// Training seeds; defaults to --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        t: Option<usize>,
    },
    /// Inference time and selection stability across T.
    Sweep {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',')]
        t_values: Vec<usize>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Pairwise risk for means 8 and 10 under standard deviations 1 and 4.
    Table1,
    /// Closed-form vs Monte Carlo variance decomposition of a linear cost function.
    Decompose {
        /// mu_a,sigma_a,mu_b,sigma_b,cov_ab,mu_x,sigma_x
        #[arg(long, value_delimiter = ',', default_value = "2,0.5,1,0.3,0,5,1")]
        pcf: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    timing: bool,
    quiet: bool,
    cfg: LabConfig,
    hash: String,
}

impl Ctx {
    fn write(&self, name: &str, table: &Table) -> Result<PathBuf, EvalError> {
        self.write_raw(name, &table.render(self.seed, &self.hash))
    }

    fn write_raw(&self, name: &str, text: &str) -> Result<PathBuf, EvalError> {
        let path = self.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.say(&format!("wrote {}\n", path.display()));
        Ok(path)
    }

    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn comment(&self) -> String {
        comment_line(self.seed, &self.hash)
    }

    fn t(&self, t: Option<usize>) -> Result<usize, EvalError> {
        match t.unwrap_or(self.cfg.model.mc_iterations) {
            0 => Err(EvalError::Invalid("--t must be >= 1".into())),
            t => Ok(t),
        }
    }
}

fn load(workload: &Path, model: &Path) -> Result<(Vec<WorkloadSample>, CostModel), EvalError> {
    Ok((read_workload_file(workload)?, CostModel::load(model)?))
}

fn execute(cli: Cli) -> Result<(), EvalError> {
    let cfg = match &cli.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        timing: !cli.no_timing,
        quiet: cli.quiet,
        hash: cfg.hash(),
        cfg,
    };
    match cli.command {
        Command::Generate { queries, templates } => {
            let mut g = ctx.cfg.generator.clone();
            g.seed = ctx.seed;
            g.n_queries = queries.unwrap_or(g.n_queries);
            g.n_templates = templates.unwrap_or(g.n_templates);
            let samples = generate_with_config(&g)?;
            let path = ctx.out.join("workload.jsonl");
            std::fs::create_dir_all(&ctx.out)?;
            write_workload_file(&path, &samples)?;
            ctx.say(&format!("wrote {}\n", path.display()));
        }
        Command::Train(a) => {
            let samples = read_workload_file(&a.workload)?;
            let (model, log) = train(&samples, &ctx.cfg.model, ctx.seed)?;
            std::fs::create_dir_all(&ctx.out)?;
            let path = ctx.out.join("model.json");
            model.save(&path)?;
            ctx.say(&format!("wrote {}\n", path.display()));
            ctx.write("training.csv", &training_table(&log))?;
        }
        Command::Predict { m, split } => {
            let (samples, model) = load(&m.workload, &m.model)?;
            let t = ctx.t(m.t)?;
            let ids: Vec<usize> = if split == "all" {
                (0..samples.len()).collect()
            } else {
                split_ids(&samples, split.parse::<Split>().map_err(EvalError::Invalid)?)
            };
            let preds = model.predict_workload(ids.iter().map(|&i| (i, &samples[i])), t, ctx.seed)?;
            ctx.write_raw(
                "predictions.csv",
                &(ctx.comment() + &prediction_csv(&preds, ctx.timing)),
            )?;
        }
        Command::Select {
            m,
            strategy,
            f_s,
            f_er,
            f_pr,
            uncertainty,
        } => {
            let params = SelectionParams {
                f_s,
                f_er,
                f_pr,
                uncertainty,
            };
            params.check()?;
            let (samples, model) = load(&m.workload, &m.model)?;
            let test = predict_queries(
                &model,
                &samples,
                &split_ids(&samples, Split::Test),
                ctx.t(m.t)?,
                ctx.seed,
                false,
            )?;
            let chosen = choices(strategy, &test, &params)?;
            ctx.write("selections.csv", &selection_table(&test, &chosen))?;
        }
        Command::Evaluate(m) => {
            let (samples, model) = load(&m.workload, &m.model)?;
            let t = ctx.t(m.t)?;
            let val = predict_queries(
                &model,
                &samples,
                &split_ids(&samples, Split::Validation),
                t,
                ctx.seed,
                false,
            )?;
            let test = predict_queries(
                &model,
                &samples,
                &split_ids(&samples, Split::Test),
                t,
                ctx.seed,
                ctx.timing,
            )?;
            let e = &ctx.cfg.eval;
            let report = evaluate_strategies(&model, &val, &test, &default_cells(), &e.grid, e.threshold)?;
            ctx.write("metrics.csv", &metrics_table(&report, ctx.timing))?;
        }
        Command::Ablate(m) => {
            let (samples, model) = load(&m.workload, &m.model)?;
            let e = &ctx.cfg.eval;
            let report = run_ablation(&model, &samples, ctx.t(m.t)?, ctx.seed, &e.grid, e.threshold)?;
            ctx.write("ablation.csv", &ablation_table(&report))?;
        }
        Command::Shift {
            workload,
            held_out,
            seeds,
            t,
        } => {
            let samples = read_workload_file(&workload)?;
            let seeds = if seeds.is_empty() { vec![ctx.seed] } else { seeds };
            let rows = run_workload_shift(&samples, &held_out, &ctx.cfg.model, &seeds, ctx.t(t)?)?;
            ctx.write("shift.csv", &shift_table(&rows))?;
        }
        Command::Sweep {
            workload,
            model,
            t_values,
            runs,
        } => {
            let (samples, model) = load(&workload, &model)?;
            let e = &ctx.cfg.eval;
            let t_values = if t_values.is_empty() {
                e.t_values.clone()
            } else {
                t_values
            };
            let rows = run_inference_sweep(&model, &samples, &t_values, runs.unwrap_or(e.sweep_runs), ctx.seed)?;
            ctx.write("sweep.csv", &sweep_table(&rows, ctx.timing))?;
        }
        Command::Table1 => {
            let table = scenario_table();
            ctx.say(&table.render(ctx.seed, &ctx.hash));
            ctx.write("table1.csv", &table)?;
        }
        Command::Decompose { pcf, samples } => {
            let [mu_a, sigma_a, mu_b, sigma_b, cov_ab, mu_x, sigma_x] = pcf[..] else {
                return Err(EvalError::Invalid(format!("--pcf needs 7 values, got {}", pcf.len())));
            };
            let pcf = LinearPcf::new(mu_a, sigma_a, mu_b, sigma_b, cov_ab, mu_x, sigma_x)?;
            let closed = decompose_variance_closed_form(&pcf);
            let mc = decompose_variance_monte_carlo(&pcf, samples, ctx.seed)?;
            let table = decompose_table(&closed, &mc);
            ctx.say(&table.render(ctx.seed, &ctx.hash));
            ctx.write("decompose.csv", &table)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand. Returns 0
/// on success, 1 for usage or validation errors, 2 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
