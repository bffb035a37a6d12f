use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use krrcheck::app::{
    emit_report, run_test_command, summary, tune_csv, witness_csv, witness_for, LambdaSetting, RunConfig,
    DEFAULT_SEED, WITNESS_FILE,
};
use krrcheck::simulate::{
    generate, load_experiments, run_cell, run_power_vs_j, with_workers, write_cell_table, write_power_table,
    DgpId, DgpSpec, ExperimentSpec, MAX_POWER_J,
};
use krrcheck::witness::witness_grid_export;
use krrcheck::{Error, Result};

#[derive(Parser)]
#[command(name = "krrcheck", version, about = "Kernel ridge regression model-checking tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a fitted model on a CSV data set.
    Test(DataArgs),
    /// Cross-validate (γ, λ) on the model residuals and write cv_table.csv.
    Tune(DataArgs),
    /// Estimate the witness function and write witness_grid.csv.
    Witness(WitnessArgs),
    /// Run the Monte Carlo cells of an experiment file.
    Simulate(SimulateArgs),
    /// Rejection rate of rand1/rand2 against the number of locations.
    PowerVsJ(PowerArgs),
}

#[derive(Args)]
struct DataArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// ols, probit, joint or nsw.
    #[arg(long)]
    model: Option<String>,
    /// Statistics to run (repeat or comma-separate).
    #[arg(long = "statistic", alias = "statistics", value_delimiter = ',')]
    statistics: Vec<String>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    bootstrap: Option<usize>,
    /// Random locations for rand1/rand2.
    #[arg(long = "J")]
    locations: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// A number, or `cv`.
    #[arg(long)]
    lambda: Option<String>,
    /// mammen or rademacher.
    #[arg(long)]
    multipliers: Option<String>,
    #[arg(long)]
    y_col: Option<String>,
    #[arg(long)]
    t_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    x_cols: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, env = "KRRCHECK_OUT")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WitnessArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Use a simulated DGP with its true residuals instead of --input.
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment file with one or more [[cell]] tables.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = "KRRCHECK_OUT")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// Experiment file holding a single cell; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long = "R")]
    replications: Option<usize>,
    #[arg(long = "B")]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "statistic", value_delimiter = ',')]
    statistics: Vec<String>,
    /// Largest number of locations.
    #[arg(long, default_value_t = MAX_POWER_J)]
    j_max: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = "KRRCHECK_OUT")]
    output: Option<PathBuf>,
}

fn nonempty(v: Vec<String>) -> Option<Vec<String>> {
    (!v.is_empty()).then_some(v)
}

impl DataArgs {
    fn run_config(self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let lambda = self.lambda.as_deref().map(LambdaSetting::parse).transpose()?;
        Ok(base.overlay(RunConfig {
            input: self.input,
            model: self.model,
            statistics: nonempty(self.statistics),
            bootstrap: self.bootstrap,
            locations: self.locations,
            level: self.level,
            seed: self.seed,
            output: self.output,
            gamma: self.gamma,
            lambda,
            multipliers: self.multipliers,
            y_col: self.y_col,
            t_col: self.t_col,
            x_cols: nonempty(self.x_cols),
            workers: self.workers,
        }))
    }
}

fn output_dir(p: Option<&PathBuf>) -> PathBuf {
    p.cloned().unwrap_or_else(|| PathBuf::from("."))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn test(args: DataArgs) -> Result<()> {
    let cfg = args.run_config()?;
    let out = output_dir(cfg.output.as_ref());
    let report = with_workers(cfg.workers, || run_test_command(&cfg))??;
    let (json, _) = emit_report(&report, &out)?;
    print!("{}", summary(&report));
    eprintln!("wrote {}", json.display());
    Ok(())
}

fn tune(args: DataArgs) -> Result<()> {
    let cfg = args.run_config()?;
    let out = output_dir(cfg.output.as_ref());
    let r = with_workers(cfg.workers, || tune_csv(&cfg, &out))??;
    println!("gamma = {}\nlambda = {}\ncv_error = {}", r.gamma, r.lambda, r.cv_error);
    Ok(())
}

fn witness(args: WitnessArgs) -> Result<()> {
    let dgp = args.dgp.clone();
    let (n, d) = (args.n, args.d);
    let cfg = args.data.run_config()?;
    let out = output_dir(cfg.output.as_ref());
    let field = match dgp {
        Some(name) => {
            let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
            let data = generate(&DgpSpec::new(DgpId::parse(&name)?, n, d, seed)?)?;
            let eps = DMatrix::from_column_slice(n, 1, data.true_residual.as_slice());
            let field = witness_for(&data.dataset.x, &eps, cfg.tuning()?, seed)?;
            create_dir(&out)?;
            witness_grid_export(&field, &out.join(WITNESS_FILE))?;
            field
        }
        None => witness_csv(&cfg, &out)?,
    };
    println!(
        "gamma = {}\nlambda = {}\nmean |w| = {}\npoints = {}",
        field.gamma,
        field.lambda,
        field.mean_abs(),
        field.grid.nrows()
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cells = load_experiments(&args.config)?;
    let out = output_dir(args.output.as_ref());
    let results = with_workers(args.workers, || {
        cells
            .iter()
            .map(|c| {
                eprintln!("cell {} n={} d={} R={} B={}", c.dgp.as_str(), c.n, c.d, c.replications, c.bootstrap);
                run_cell(c)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    create_dir(&out)?;
    let path = out.join("cells.csv");
    write_cell_table(&path, &results)?;
    for c in &results {
        for row in c.rows(c.spec.level) {
            println!(
                "{} n={} d={} {:<6} {:.3} (se {:.3})",
                c.spec.dgp.as_str(),
                c.spec.n,
                c.spec.d,
                row.statistic,
                row.rejection_rate,
                row.mc_se
            );
        }
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn power_vs_j(args: PowerArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(p) => {
            let mut cells = load_experiments(p)?;
            if cells.len() != 1 {
                return Err(Error::Input(format!("{} holds {} cells; expected one", p.display(), cells.len())));
            }
            cells.remove(0)
        }
        None => {
            let dgp = args
                .dgp
                .as_deref()
                .ok_or_else(|| Error::Input("--dgp or --config is required".into()))?;
            let id = DgpId::parse(dgp)?;
            let d = args.d.or(id.required_d()).unwrap_or(10);
            ExperimentSpec::new(id, 200, d, 200, 199, DEFAULT_SEED).with_statistics(&["rand1", "rand2"])
        }
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(d) = args.d {
        spec.d = d;
    }
    if let Some(r) = args.replications {
        spec.replications = r;
    }
    if let Some(b) = args.bootstrap {
        spec.bootstrap = b;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if !args.statistics.is_empty() {
        spec.statistics = args.statistics.clone();
    }
    let js: Vec<usize> = (1..=args.j_max).collect();
    let rows = with_workers(args.workers, || run_power_vs_j(&spec, &js))??;
    let out = output_dir(args.output.as_ref());
    create_dir(&out)?;
    let path = out.join("power_vs_j.csv");
    write_power_table(&path, &rows)?;
    for r in &rows {
        println!("J={:<2} {} {:.3}", r.locations.unwrap_or(0), r.statistic, r.rejection_rate);
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => test(a),
        Command::Tune(a) => tune(a),
        Command::Witness(a) => witness(a),
        Command::Simulate(a) => simulate(a),
        Command::PowerVsJ(a) => power_vs_j(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
