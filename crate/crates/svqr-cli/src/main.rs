use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use svqr::error::Error;
use svqr::kernel::KernelSpec;
use svqr::model::{FitConfig, ModelKind, DEFAULT_MAX_ITER, DEFAULT_TOL};
use svqr::synth::{generate, true_quantile, SynthSpec};
use svqr_cli::dataio;
use svqr_cli::experiments::{self, ExperimentOpts};
use svqr_cli::gridsearch::{self, GridSearchSpec};
use svqr_cli::report::{cell, ExperimentReport, ReportMeta, Table};

#[derive(Parser)]
#[command(
    name = "svqr",
    about = "Kernel quantile regression: dataset generation, fitting, prediction, grid search and benchmark experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV (header x,y[,q_tau]).
    Generate(GenerateArgs),
    /// Fit a model on CSV data and write model.json.
    Fit(FitArgs),
    /// Predict with a saved model on feature CSV rows.
    Predict(PredictArgs),
    /// Exhaustive hyperparameter search scored by validation pinball loss.
    Gridsearch(GridArgs),
    /// Run one of the five benchmark experiments (1-5).
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Dataset family: ad1 (Gaussian noise) or ad2 (uniform noise).
    #[arg(long, value_parser = ["ad1", "ad2"])]
    dataset: String,
    /// Sample count.
    #[arg(long)]
    l: usize,
    /// Gaussian noise standard deviation (ad1).
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Uniform noise lower bound (ad2).
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    a: f64,
    /// Uniform noise upper bound (ad2).
    #[arg(long, default_value_t = 0.1)]
    b: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also emit the true tau-quantile as a q_tau column.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Model family.
    #[arg(long, value_parser = ["standard", "eps", "nu"], default_value = "nu")]
    model: String,
    #[arg(long)]
    tau: f64,
    /// Trade-off parameter C.
    #[arg(long)]
    c: f64,
    /// Tube budget (nu model).
    #[arg(long)]
    nu: Option<f64>,
    /// Fixed tube width (eps model).
    #[arg(long)]
    eps: Option<f64>,
    /// RBF kernel width q.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

impl ModelArgs {
    fn kind(&self) -> ModelKind {
        match self.model.as_str() {
            "standard" => ModelKind::Standard,
            "eps" => ModelKind::Eps,
            _ => ModelKind::Nu,
        }
    }

    fn config(&self) -> Result<FitConfig, Error> {
        let tau = svqr::loss::Tau::new(self.tau)?;
        let kernel = KernelSpec::rbf(self.q);
        let cfg = match self.kind() {
            ModelKind::Nu => FitConfig::nu_svqr(
                tau,
                self.c,
                self.nu.ok_or_else(|| Error::invalid("--nu is required for the nu model"))?,
                kernel,
            ),
            ModelKind::Eps => FitConfig::eps_svqr(
                tau,
                self.c,
                self.eps.ok_or_else(|| Error::invalid("--eps is required for the eps model"))?,
                kernel,
            ),
            ModelKind::Standard => FitConfig::standard_svqr(tau, self.c, kernel),
        }
        .with_solver(self.tol, self.max_iter);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV (response column 'y').
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Min-max scale features to [0,1] before fitting (stored with the model).
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model.json.
    #[arg(long)]
    model_file: PathBuf,
    /// Feature CSV ('y' and 'q_*' columns are ignored when present).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = ["standard", "eps", "nu"], default_value = "nu")]
    model: String,
    #[arg(long)]
    tau: f64,
    /// Comma-separated exponents i for the q and C grids 2^i.
    #[arg(long, default_value = "-15,-12,-9,-6,-3,0,3,6,9,12,15", allow_hyphen_values = true)]
    grid_exponents: String,
    /// Comma-separated nu grid (nu model).
    #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
    nu_grid: String,
    /// Comma-separated eps grid (eps model).
    #[arg(long, default_value = "0.0,0.01,0.1,1.0")]
    eps_grid: String,
    /// Held-out validation fraction.
    #[arg(long, default_value_t = 0.2)]
    val_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    jobs: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment id, 1 through 5.
    #[arg(long)]
    id: u8,
    /// Trials per grid cell (defaults: exp1 10, exp2 1, exp3/4 3, exp5 100).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Gaussian noise level for exp1/exp2 (the source tables leave it unstated).
    #[arg(long)]
    sigma: Option<f64>,
    /// Path to the UCI servo.data file (exp5).
    #[arg(long, default_value = "data/servo.data")]
    servo: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Solver budget; experiment cells at l >= 3000 need a few hundred
    /// thousand iterations.
    #[arg(long, default_value_t = 4_000_000)]
    max_iter: usize,
    /// Cap the exp2 training sizes at this value.
    #[arg(long)]
    max_l: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(args) => {
            let spec = match args.dataset.as_str() {
                "ad1" => SynthSpec::ad1(args.l, args.sigma, args.seed),
                _ => SynthSpec::ad2(args.l, args.a, args.b, args.seed),
            };
            let data = generate(&spec)?;
            std::fs::create_dir_all(&args.out)
                .map_err(|e| Error::invalid(format!("cannot create {}: {e}", args.out.display())))?;
            let path = args.out.join("data.csv");
            match args.tau {
                Some(t) => {
                    let tau = svqr::loss::Tau::new(t)?;
                    let qs: Vec<f64> = (0..data.len())
                        .map(|i| true_quantile(&spec, tau, data.x.get(i, 0)))
                        .collect::<Result<_, Error>>()?;
                    dataio::write_xy_csv(&path, &data, Some(("q_tau", &qs)))?;
                }
                None => dataio::write_xy_csv(&path, &data, None)?,
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Fit(args) => {
            let cfg = args.model.config()?;
            let path = svqr_cli::cmd_fit(&args.data, cfg, args.normalize, &args.out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Predict(args) => {
            let path = svqr_cli::cmd_predict(&args.model_file, &args.data, &args.out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Gridsearch(args) => run_gridsearch(args),
        Command::Experiment(args) => {
            let opts = ExperimentOpts {
                trials: args.trials,
                seed: args.seed,
                jobs: args.jobs.max(1),
                out: args.out.clone(),
                sigma: args.sigma,
                servo: args.servo.clone(),
                tol: args.tol,
                max_iter: args.max_iter,
                max_l: args.max_l,
            };
            let report = experiments::run(args.id, &opts)?;
            println!(
                "experiment {} finished: {} records -> {}",
                args.id,
                report.records.len(),
                args.out.display()
            );
            Ok(())
        }
    }
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad {what} entry '{s}': {e}")))
        })
        .collect()
}

fn run_gridsearch(args: GridArgs) -> Result<(), Error> {
    let loaded = dataio::read_xy_csv(&args.data)?;
    let exponents = args
        .grid_exponents
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<i32>()
                .map_err(|e| Error::invalid(format!("bad exponent '{s}': {e}")))
        })
        .collect::<Result<Vec<i32>, Error>>()?;
    let kind = match args.model.as_str() {
        "standard" => ModelKind::Standard,
        "eps" => ModelKind::Eps,
        _ => ModelKind::Nu,
    };
    let spec = GridSearchSpec {
        model: kind,
        tau: svqr::loss::Tau::new(args.tau)?,
        exponents,
        nu_grid: parse_f64_list(&args.nu_grid, "nu grid")?,
        eps_grid: parse_f64_list(&args.eps_grid, "eps grid")?,
        val_frac: args.val_frac,
        seed: args.seed,
        tol: args.tol,
        max_iter: args.max_iter,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| gridsearch::search(&loaded.dataset, &spec))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", args.out.display())))?;
    let mut table = Table::new(
        ["q", "c", "nu", "eps", "validation_loss"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for r in &outcome.records {
        table.push(vec![
            dataio::fmt_f64(r.q),
            dataio::fmt_f64(r.c),
            cell(r.nu),
            cell(r.eps_param),
            cell(r.validation_loss),
        ]);
    }
    table.write(&args.out.join("table.csv"))?;
    let report = ExperimentReport::new(
        ReportMeta {
            experiment: "gridsearch".into(),
            seed: args.seed,
            trials: 1,
            jobs: args.jobs,
            solver_tol: args.tol,
            solver_max_iter: args.max_iter,
            sigma: None,
            preprocessing: "none".into(),
            grid: format!(
                "exponents {:?}; model {kind}; tau {}",
                spec.exponents,
                spec.tau.value()
            ),
        },
        outcome.records.clone(),
    );
    report.write_json(&args.out)?;

    let b = outcome.best;
    println!(
        "best: model={} tau={} q={} C={} nu={:?} eps={:?} validation_pinball={}",
        b.model,
        b.tau.value(),
        match b.kernel {
            KernelSpec::Rbf { q } => q,
            KernelSpec::Linear => f64::NAN,
        },
        b.c,
        b.nu,
        b.eps,
        outcome.best_loss
    );
    Ok(())
}
