//! Command-line front end: estimation, augmentation testing, data
//! generation, and study reproduction. Thin wrapper over the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cuped_trigger::csv_io::{load_csv, write_csv, CsvSchema};
use cuped_trigger::data::TriggerMode;
use cuped_trigger::error::Error;
use cuped_trigger::estimator::{naive_delta, trigger_dilute};
use cuped_trigger::inference::{
    estimate_one_sided, estimate_two_sided, mean_zero_test, BootstrapConfig, ResampleMode,
    RngKey, TestMethod, WeightSpec,
};
use cuped_trigger::scoring::FitOptions;
use cuped_trigger::sim::{
    generate, mask_to_one_sided, run_study, DgpParams, StudyConfig, StudyId,
};
use cuped_trigger::DEFAULT_SEED;

#[derive(Parser)]
#[command(
    name = "cuped-trigger",
    version,
    about = "Variance-reduced ITT estimation for experiments with one-sided triggering",
    after_help = "All randomness flows from --seed (default 1729); identical \
                  invocations produce identical output for any --threads value."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads (default: all cores, or CUPED_TRIGGER_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Emit machine-readable JSON instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the ITT effect from a CSV of units.
    Estimate(EstimateArgs),
    /// Wald test of the mean-zero assumption behind the augmentation.
    TestAugmentation(TestArgs),
    /// Generate a synthetic experiment CSV.
    Simulate(SimulateArgs),
    /// Run one of the Monte Carlo studies (s1..s4).
    Study(StudyArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Column holding the unit identifier.
    #[arg(long, default_value = "unit_id")]
    col_id: String,
    /// Column holding the assignment.
    #[arg(long, default_value = "assignment")]
    col_assignment: String,
    /// Column holding the trigger indicator (1/0/empty).
    #[arg(long, default_value = "triggered")]
    col_trigger: String,
    /// Column holding the outcome.
    #[arg(long, default_value = "y")]
    col_outcome: String,
    /// Assignment value marking treatment rows.
    #[arg(long, default_value = "treatment")]
    treatment_value: String,
    /// Assignment value marking control rows.
    #[arg(long, default_value = "control")]
    control_value: String,
    /// Declare the trigger mode instead of inferring it.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Covariate columns (default: every unmapped column).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

impl SchemaArgs {
    fn to_schema(&self) -> CsvSchema {
        CsvSchema {
            unit_id: self.col_id.clone(),
            assignment: self.col_assignment.clone(),
            triggered: self.col_trigger.clone(),
            outcome: self.col_outcome.clone(),
            covariates: self.covariates.clone(),
            treatment_value: self.treatment_value.clone(),
            control_value: self.control_value.clone(),
            declared_mode: self.mode.map(ModeArg::to_mode),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    OneSided,
    TwoSided,
}

impl ModeArg {
    fn to_mode(self) -> TriggerMode {
        match self {
            ModeArg::OneSided => TriggerMode::OneSided,
            ModeArg::TwoSided => TriggerMode::TwoSided,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Difference in outcome means with the closed-form SE.
    Naive,
    /// Triggered-subgroup difference diluted by the triggering rate.
    TriggerDilute,
    /// Two-sided CUPED (needs control trigger labels).
    TwoSided,
    /// One-sided CUPED with out-of-sample triggering-probability weights.
    OneSidedPrincipal,
    /// One-sided CUPED with in-sample propensity weights.
    OneSidedPropensity,
    /// One-sided CUPED with entropy-balance weights.
    OneSidedEntropy,
    /// One-sided CUPED with ground-truth probabilities from --truth-column.
    OneSidedTruth,
}

#[derive(Args)]
struct WeightArgs {
    /// Covariates for score models (default: every covariate column).
    #[arg(long, value_delimiter = ',')]
    model_covariates: Option<Vec<String>>,
    /// Columns to balance for entropy weights (default: model covariates).
    #[arg(long, value_delimiter = ',')]
    balance_columns: Option<Vec<String>>,
    /// Column with ground-truth triggering probabilities.
    #[arg(long)]
    truth_column: Option<String>,
    /// Ridge penalty for near-separated logistic fits.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
}

impl WeightArgs {
    fn model_covariates(&self, ds: &cuped_trigger::data::ExperimentDataset) -> Vec<String> {
        self.model_covariates
            .clone()
            .unwrap_or_else(|| ds.covariate_names().to_vec())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            ridge: self.ridge,
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV.
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Bootstrap resamples for CUPED methods.
    #[arg(long = "bootstrap", default_value_t = 1000)]
    bootstrap_b: usize,
    /// Resample within each arm instead of pooling.
    #[arg(long)]
    stratified: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Dump the fitted score model as JSON.
    #[arg(long)]
    dump_model: Option<PathBuf>,
    /// Dump bootstrap draws as CSV.
    #[arg(long)]
    dump_draws: Option<PathBuf>,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    schema: SchemaArgs,
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV.
    input: PathBuf,
    /// SE source for the Wald statistic.
    #[arg(long, value_enum, default_value = "bootstrap")]
    method: TestMethodArg,
    #[arg(long = "bootstrap", default_value_t = 1000)]
    bootstrap_b: usize,
    /// Weighting pipeline under test (same choices as estimate).
    #[arg(long, value_enum, default_value = "one-sided-principal")]
    pipeline: MethodArg,
    #[command(flatten)]
    weights: WeightArgs,
    #[command(flatten)]
    schema: SchemaArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestMethodArg {
    Bootstrap,
    Delta,
}

#[derive(Args, Clone)]
struct DgpArgs {
    /// JSON file with generator parameters (field names match the report).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    n_control: Option<usize>,
    #[arg(long)]
    n_treatment: Option<usize>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    trials_per_unit: Option<u32>,
    #[arg(long)]
    r_low: Option<f64>,
    #[arg(long)]
    r_high: Option<f64>,
    #[arg(long)]
    r_effect: Option<f64>,
}

impl DgpArgs {
    fn to_params(&self) -> Result<DgpParams, Error> {
        let mut p = match &self.params {
            Some(path) => serde_json::from_reader(std::fs::File::open(path)?)
                .map_err(|e| Error::Validation(format!("bad params file: {e}")))?,
            None => DgpParams::default(),
        };
        macro_rules! merge {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { p.$field = v; })*
            };
        }
        merge!(n_control => n_control, n_treatment => n_treatment, p0 => p_0, p1 => p_1,
               c1 => c_1, c2 => c_2, c3 => c_3, trials_per_unit => trials_per_unit,
               r_low => r_low, r_high => r_high, r_effect => r_effect);
        Ok(p)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Output CSV path.
    #[arg(long, short)]
    out: PathBuf,
    /// Drop control trigger labels (one-sided twin).
    #[arg(long)]
    one_sided: bool,
    /// Covariate columns to hide entirely (implies --one-sided).
    #[arg(long, value_delimiter = ',')]
    hide: Vec<String>,
    #[command(flatten)]
    dgp: DgpArgs,
}

#[derive(Args)]
struct StudyArgs {
    /// Which study to run.
    #[arg(value_enum)]
    study: StudyArg,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long = "bootstrap", default_value_t = 200)]
    bootstrap_b: usize,
    /// Write <prefix>.txt, <prefix>.csv, and <prefix>.json reports.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write per-trial results to this CSV.
    #[arg(long)]
    dump_trials: Option<PathBuf>,
    /// Skip failed trials instead of aborting.
    #[arg(long)]
    skip_failed: bool,
    #[command(flatten)]
    dgp: DgpArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    S1,
    S2,
    S3,
    S4,
}

impl StudyArg {
    fn to_id(self) -> StudyId {
        match self {
            StudyArg::S1 => StudyId::S1,
            StudyArg::S2 => StudyId::S2,
            StudyArg::S3 => StudyId::S3,
            StudyArg::S4 => StudyId::S4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("CUPED_TRIGGER_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(cli, args),
        Command::TestAugmentation(args) => cmd_test_augmentation(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Study(args) => cmd_study(cli, args),
    }
}

fn build_weight_spec(
    method: MethodArg,
    weights: &WeightArgs,
    ds: &cuped_trigger::data::ExperimentDataset,
) -> Result<WeightSpec, Error> {
    match method {
        MethodArg::OneSidedPrincipal => Ok(WeightSpec::Principal {
            covariates: weights.model_covariates(ds),
        }),
        MethodArg::OneSidedPropensity => Ok(WeightSpec::Propensity {
            covariates: weights.model_covariates(ds),
        }),
        MethodArg::OneSidedEntropy => Ok(WeightSpec::EntropyBalance {
            columns: weights
                .balance_columns
                .clone()
                .unwrap_or_else(|| weights.model_covariates(ds)),
        }),
        MethodArg::OneSidedTruth => {
            let column = weights.truth_column.clone().ok_or_else(|| {
                Error::Validation("--truth-column is required for this method".into())
            })?;
            Ok(WeightSpec::GroundTruth { column })
        }
        _ => Err(Error::Validation(
            "method does not use a weighting pipeline".into(),
        )),
    }
}

fn emit(cli: &Cli, output: Option<&PathBuf>, human: String, json: String) -> Result<(), Error> {
    let text = if cli.json { json } else { human };
    match output {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_estimate(cli: &Cli, args: &EstimateArgs) -> Result<(), Error> {
    let ds = load_csv(&args.input, &args.schema.to_schema())?;
    let config = BootstrapConfig {
        b: args.bootstrap_b,
        mode: if args.stratified {
            ResampleMode::StratifiedByArm
        } else {
            ResampleMode::Pooled
        },
        fit: args.weights.fit_options(),
        ..BootstrapConfig::default()
    };
    let key = RngKey::new(cli.seed);

    let (report, boot) = match args.method {
        MethodArg::Naive => (naive_delta(&ds)?, None),
        MethodArg::TriggerDilute => {
            let report = trigger_dilute(&ds).map_err(|e| match e {
                Error::ModeMismatch { .. } => Error::Validation(
                    "trigger-dilute requires two-sided trigger labels".into(),
                ),
                other => other,
            })?;
            (report, None)
        }
        MethodArg::TwoSided => {
            let (report, boot) = estimate_two_sided(&ds, &config, key)?;
            (report, Some(boot))
        }
        _ => {
            let spec = build_weight_spec(args.method, &args.weights, &ds)?;
            if let Some(path) = &args.dump_model {
                dump_model(&spec, &ds, &config, path)?;
            }
            let (report, boot) = estimate_one_sided(&ds, &spec, &config, key)?;
            (report, Some(boot))
        }
    };

    if let (Some(path), Some(boot)) = (&args.dump_draws, boot.as_ref()) {
        let mut out = String::from("resample,delta_y,augmentation\n");
        for (i, (d, t)) in boot.delta_y_draws.iter().zip(&boot.tau0_draws).enumerate() {
            out.push_str(&format!("{i},{d},{t}\n"));
        }
        std::fs::write(path, out)?;
    }

    let mut human = format!(
        "method          {:?}\nitt estimate    {:.6}\nstandard error  {}\n",
        report.method,
        report.itt_estimate,
        report
            .standard_error
            .map_or("n/a".into(), |s| format!("{s:.6}")),
    );
    if let Some(theta) = report.theta {
        human.push_str(&format!("theta           {theta:.6}\n"));
    }
    if let Some(aug) = report.augmentation_value {
        human.push_str(&format!("augmentation    {aug:.6}\n"));
    }
    if let Some(w) = &report.weights {
        human.push_str(&format!("weights         {w}\n"));
    }
    if let Some(boot) = &boot {
        human.push_str(&format!(
            "bootstrap       B={} seed={} stream={} ({})\n",
            boot.b, boot.seed, boot.stream, boot.rng_algorithm
        ));
    }
    let json = serde_json::json!({
        "report": report,
        "bootstrap": boot,
    });
    emit(cli, args.output.as_ref(), human, serde_json::to_string_pretty(&json).unwrap())
}

fn dump_model(
    spec: &WeightSpec,
    ds: &cuped_trigger::data::ExperimentDataset,
    config: &BootstrapConfig,
    path: &PathBuf,
) -> Result<(), Error> {
    // refit on the full data for the dump; cheap next to the bootstrap
    let scores = spec.compute(ds, &config.fit)?;
    let payload = serde_json::json!({
        "spec": spec,
        "spec_display": spec.to_string(),
        "kind": scores.kind,
        "control_weights": scores.control_weights,
    });
    std::fs::write(path, serde_json::to_string_pretty(&payload).unwrap())?;
    Ok(())
}

fn cmd_test_augmentation(cli: &Cli, args: &TestArgs) -> Result<(), Error> {
    let ds = load_csv(&args.input, &args.schema.to_schema())?;
    let spec = build_weight_spec(args.pipeline, &args.weights, &ds)?;
    let config = BootstrapConfig {
        b: args.bootstrap_b,
        fit: args.weights.fit_options(),
        ..BootstrapConfig::default()
    };
    let method = match args.method {
        TestMethodArg::Bootstrap => TestMethod::Bootstrap,
        TestMethodArg::Delta => TestMethod::DeltaMethod,
    };
    let test = mean_zero_test(&ds, &spec, method, &config, RngKey::new(cli.seed))?;
    let human = format!(
        "augmentation    {:.6}\nstandard error  {:.6}\nwald z          {:.4}\np-value         {:.6}\nmethod          {:?}\npipeline        {spec}\n",
        test.tau0_hat, test.se_tau0, test.wald_z, test.p_value, test.method
    );
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "test": test,
        "pipeline": spec,
    }))
    .unwrap();
    emit(cli, None, human, json)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), Error> {
    let params = args.dgp.to_params()?;
    let ds = generate(&params, RngKey::new(cli.seed))?;
    let ds = if args.one_sided || !args.hide.is_empty() {
        mask_to_one_sided(&ds, &args.hide)?
    } else {
        ds
    };
    write_csv(&ds, &args.out, &CsvSchema::default())?;
    let summary = serde_json::json!({
        "rows": ds.len(),
        "mode": ds.mode(),
        "out": args.out,
        "true_itt": params.true_itt(),
        "seed": cli.seed,
    });
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    } else {
        eprintln!(
            "wrote {} rows ({:?}) to {}",
            ds.len(),
            ds.mode(),
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_study(cli: &Cli, args: &StudyArgs) -> Result<(), Error> {
    let config = StudyConfig {
        trials: args.trials,
        bootstrap_b: args.bootstrap_b,
        params: args.dgp.to_params()?,
        skip_failed: args.skip_failed,
        keep_trials: args.dump_trials.is_some(),
    };
    let report = run_study(args.study.to_id(), &config, RngKey::new(cli.seed))?;
    if let (Some(path), Some(csv)) = (&args.dump_trials, report.trials_csv()) {
        std::fs::write(path, csv)?;
    }
    match &args.output {
        Some(prefix) => {
            let base = prefix.display();
            std::fs::write(format!("{base}.txt"), report.text_table())?;
            std::fs::write(format!("{base}.csv"), report.to_csv())?;
            let mut slim = report.clone();
            slim.trial_results = None;
            std::fs::write(
                format!("{base}.json"),
                serde_json::to_string_pretty(&slim).unwrap(),
            )?;
            eprintln!("wrote {base}.txt, {base}.csv, {base}.json");
        }
        None => {
            if cli.json {
                let mut slim = report.clone();
                slim.trial_results = None;
                println!("{}", serde_json::to_string_pretty(&slim).unwrap());
            } else {
                print!("{}", report.text_table());
            }
        }
    }
    Ok(())
}
