mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgrao::environment::{ChildPolicy, World};
use mgrao::scenarios::{
    compare, emit, run_all, AlgorithmVariant, OutputFormat, ScenarioConfig, ScenarioName,
};
use mgrao::verify;

use config::Overrides;

#[derive(Parser, Debug)]
#[command(
    name = "mgrao",
    version,
    about = "Simulate child agents learning resource allocations from parent feedback",
    after_help = defaults_table()
)]
struct Cli {
    /// More progress output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario. Defaults: scenario single, one seed, fixed-uniform and mgrao-max.
    #[command(after_help = defaults_table())]
    Run(RunArgs),
    /// Run every variant of a scenario (uniform, all group sizes, 1:1, max) over
    /// 20 seeds. Defaults to the large scenario.
    #[command(after_help = defaults_table())]
    Sweep(RunArgs),
    /// Check the learner against the reference formulas and its invariants.
    Verify(VerifyArgs),
    /// Run one seed and print a child's learner state as JSON.
    DumpState(DumpArgs),
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Key = value file with scenario fields. Flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// single, multi, volatile, large or custom.
    #[arg(long)]
    scenario: Option<ScenarioName>,

    /// Root seed. A single run uses it directly; a sweep uses SEED..SEED+20.
    #[arg(long, env = "MGRAO_SEED", default_value_t = 0)]
    seed: u64,

    /// Explicit seeds: `a..b`, `a,b,c` or one number. Overrides --seed.
    #[arg(long, value_parser = parse_seed_list)]
    seeds: Option<SeedList>,

    /// Episodes per run.
    #[arg(long, value_parser = config::positive::<u64>)]
    episodes: Option<u64>,

    /// Number of parent agents.
    #[arg(long, value_parser = config::positive::<usize>)]
    parents: Option<usize>,

    /// Number of child agents.
    #[arg(long, value_parser = config::positive::<usize>)]
    children: Option<usize>,

    /// Parents per group, comma separated. Each size adds one learner variant.
    #[arg(long, value_delimiter = ',', value_parser = config::positive::<usize>)]
    group_sizes: Option<Vec<usize>>,

    /// Learning rate, in [0, 1].
    #[arg(long, value_parser = config::unit_interval)]
    alpha: Option<f64>,

    /// Eligibility trace decay, in [0, 1).
    #[arg(long, value_parser = config::decay)]
    gamma: Option<f64>,

    /// Probability a parent picks a child by Boltzmann draw instead of greedily.
    #[arg(long, value_parser = config::unit_interval)]
    epsilon: Option<f64>,

    /// Per-episode probability that each parent leaves or rejoins.
    #[arg(long, value_parser = config::unit_interval)]
    churn_probability: Option<f64>,

    /// Number of atomic task types.
    #[arg(long, value_parser = config::positive::<usize>)]
    atomic_types: Option<usize>,

    /// Atomic tasks per composite task.
    #[arg(long, value_parser = config::positive::<usize>)]
    composite_size: Option<usize>,

    /// Number of composite task types.
    #[arg(long, value_parser = config::positive::<usize>)]
    composite_types: Option<usize>,

    /// Resources held by each child.
    #[arg(long, value_parser = config::positive::<usize>)]
    resources: Option<usize>,

    /// Episodes between arrivals of each composite type.
    #[arg(long, value_parser = config::positive::<u32>)]
    task_frequency: Option<u32>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Variant labels, comma separated (fixed-uniform, mgrao-1:1, mgrao-x:1, mgrao-max).
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,

    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,

    #[arg(long, default_value = "both", value_parser = ["csv", "json", "both"])]
    format: String,

    /// Worker threads for running seeds in parallel (default: all cores).
    #[arg(long, value_parser = config::positive::<usize>)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Seed for the randomised checks.
    #[arg(long, env = "MGRAO_SEED", default_value_t = 0)]
    seed: u64,

    /// Randomised learner runs compared against the reference.
    #[arg(long, default_value_t = 500)]
    cases: usize,

    /// Random updates in the invariant suite.
    #[arg(long, default_value_t = 10_000)]
    updates: usize,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Learner variant to run.
    #[arg(long, default_value = "mgrao-max")]
    variant: String,

    /// Child whose state is dumped.
    #[arg(long, default_value_t = 0)]
    child: usize,

    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    config::seeds(s).map(SeedList)
}

/// Run failures and their exit codes.
enum Failure {
    /// Bad configuration or unwritable output: exit 2.
    Usage(String),
    /// The simulation or a check failed: exit 1.
    Run(String),
}

impl From<mgrao::Error> for Failure {
    fn from(e: mgrao::Error) -> Self {
        match e {
            mgrao::Error::Io { .. }
            | mgrao::Error::LearnerConfig(_)
            | mgrao::Error::ScenarioConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn defaults_table() -> String {
    let presets: Vec<ScenarioConfig> = [
        ScenarioName::Single,
        ScenarioName::Multi,
        ScenarioName::Volatile,
        ScenarioName::Large,
    ]
    .into_iter()
    .map(ScenarioConfig::preset)
    .collect();
    fn join(xs: &[usize]) -> String {
        xs.iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
    type Field = fn(&ScenarioConfig) -> String;
    let rows: [(&str, Field); 13] = [
        ("parents", |c| c.parents.to_string()),
        ("children", |c| c.children.to_string()),
        ("group_sizes", |c| join(&c.group_sizes)),
        ("churn_probability", |c| c.churn_probability.to_string()),
        ("epsilon", |c| c.epsilon.to_string()),
        ("episodes", |c| c.episodes.to_string()),
        ("alpha", |c| c.alpha.to_string()),
        ("gamma", |c| c.gamma.to_string()),
        ("atomic_types", |c| c.atomic_types.to_string()),
        ("composite_size", |c| c.composite_size.to_string()),
        ("composite_types", |c| c.composite_types.to_string()),
        ("resources", |c| c.resources.to_string()),
        ("task_frequency", |c| c.task_frequency.to_string()),
    ];
    let mut out = String::from("Scenario defaults (config keys use these names):\n");
    out.push_str(&format!(
        "  {:<18} {:>8} {:>8} {:>9} {:>16}\n",
        "parameter", "single", "multi", "volatile", "large"
    ));
    for (key, get) in &rows {
        out.push_str(&format!(
            "  {:<18} {:>8} {:>8} {:>9} {:>16}\n",
            key,
            get(&presets[0]),
            get(&presets[1]),
            get(&presets[2]),
            get(&presets[3])
        ));
    }
    out.push_str("  seeds: --seed (or MGRAO_SEED, default 0) for run; SEED..SEED+20 for sweep\n");
    out.push_str(
        "Exit codes: 0 success, 1 run or check failure, 2 bad arguments or unwritable output.",
    );
    out
}

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            name: self.scenario,
            parents: self.parents,
            children: self.children,
            group_sizes: self.group_sizes.clone(),
            churn_probability: self.churn_probability,
            epsilon: self.epsilon,
            episodes: self.episodes,
            seeds: self.seeds.as_ref().map(|s| s.0.clone()),
            alpha: self.alpha,
            gamma: self.gamma,
            atomic_types: self.atomic_types,
            composite_size: self.composite_size,
            composite_types: self.composite_types,
            resources: self.resources,
            task_frequency: self.task_frequency,
        }
    }

    /// Preset for the chosen scenario, then the config file, then flags.
    /// Without explicit seeds, `replications` seeds starting at the root seed.
    fn resolve(&self, default: ScenarioName, replications: u64) -> Result<ScenarioConfig, Failure> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                Overrides::parse_file(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => Overrides::default(),
        };
        let merged = file.overlay(&self.overrides());
        let mut cfg = ScenarioConfig::preset(merged.name.unwrap_or(default));
        cfg.seeds = (self.seed..self.seed + replications).collect();
        merged.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes to stdout, ignoring a reader that went away (`mgrao ... | head`).
fn print_out(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn log(cli: &Cli, level: u8, msg: impl AsRef<str>) {
    if !cli.quiet && cli.verbose >= level {
        eprintln!("{}", msg.as_ref());
    }
}

fn run(cli: &Cli, args: &RunArgs, sweep: bool) -> Result<(), Failure> {
    let cfg = if sweep {
        args.scenario
            .resolve(ScenarioName::Large, ScenarioConfig::DEFAULT_SEEDS)?
    } else {
        args.scenario.resolve(ScenarioName::Single, 1)?
    };
    let variants = match &args.variants {
        Some(tags) => tags
            .iter()
            .map(|t| AlgorithmVariant::parse(t, cfg.parents))
            .collect::<mgrao::Result<Vec<_>>>()?,
        None if sweep || args.scenario.group_sizes.is_some() => cfg.variants(),
        None => vec![
            AlgorithmVariant::FixedUniform,
            AlgorithmVariant::max_groups(),
        ],
    };
    for v in &variants {
        if let AlgorithmVariant::Mgrao { group_size } = v {
            if *group_size > cfg.parents {
                return Err(Failure::Usage(format!(
                    "group size {group_size} exceeds {} parents",
                    cfg.parents
                )));
            }
        }
    }
    let format: OutputFormat = args.format.parse()?;
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Run(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.out.display())))?;

    let labels: Vec<String> = variants.iter().map(|v| v.label(cfg.parents)).collect();
    log(
        cli,
        1,
        format!(
            "{}: {} x {} seeds x {} episodes",
            cfg.name,
            labels.join(", "),
            cfg.seeds.len(),
            cfg.episodes
        ),
    );
    let result = run_all(&cfg, &variants)?;
    let summary = compare(&result.records)?;
    let mut written = emit(&result.records, &summary, format, &args.out)?;
    written.push(write_run_config(&cfg, &labels, &args.out)?);
    for path in &written {
        log(cli, 2, format!("wrote {}", path.display()));
    }
    log(
        cli,
        1,
        format!(
            "max |sum atv - taq| {:.1e}; {} files in {}",
            result.feedback_residual,
            written.len(),
            args.out.display()
        ),
    );
    if !cli.quiet {
        print_out(&summary.table());
    }
    Ok(())
}

/// Records the fully resolved configuration next to the outputs.
fn write_run_config(
    cfg: &ScenarioConfig,
    labels: &[String],
    dir: &Path,
) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("{}_config.json", cfg.name));
    let doc = serde_json::json!({ "config": cfg, "variants": labels });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn verify_cmd(cli: &Cli, args: &VerifyArgs) -> Result<(), Failure> {
    let report = verify::run_all(args.seed, args.cases)?;
    for check in &report.checks {
        if !check.passed() || cli.verbose >= 1 {
            log(cli, 0, check.to_string());
        }
    }
    let invariants = verify::learner_invariants(args.seed, args.updates)?;
    if !cli.quiet {
        print_out(&format!(
            "reference checks: {}/{} passed\n",
            report.checks.len() - report.failures().count(),
            report.checks.len()
        ));
        print_out(&format!(
            "invariants: {} over {} updates (max |row sum - 1| {:.1e}, max |E - gamma^k| {:.1e})\n",
            if invariants.passed() { "ok" } else { "FAILED" },
            invariants.updates,
            invariants.max_row_error,
            invariants.max_decay_error
        ));
        for v in &invariants.violations {
            print_out(&format!("  {v}\n"));
        }
    }
    if report.all_passed() && invariants.passed() {
        Ok(())
    } else {
        Err(Failure::Run("verification failed".into()))
    }
}

fn dump_state(args: &DumpArgs) -> Result<(), Failure> {
    let cfg = args.scenario.resolve(ScenarioName::Single, 1)?;
    let variant = AlgorithmVariant::parse(&args.variant, cfg.parents)?;
    if variant == AlgorithmVariant::FixedUniform {
        return Err(Failure::Usage(
            "fixed-uniform keeps no learner state; pick an mgrao variant".into(),
        ));
    }
    if args.child >= cfg.children {
        return Err(Failure::Usage(format!(
            "--child {} out of range: the system has {} children",
            args.child, cfg.children
        )));
    }
    let mut world = World::build(&cfg.world_config(), variant.policy(&cfg), cfg.seeds[0])?;
    for _ in 0..cfg.episodes {
        world.step()?;
    }
    let ChildPolicy::Mgrao(learner) = &world.children[args.child].policy else {
        return Err(Failure::Run("child has no learner".into()));
    };
    let json = learner.dump().to_json()?;
    match &args.out {
        Some(path) => fs::write(path, json + "\n")
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => print_out(&(json + "\n")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(&cli, a, false),
        Command::Sweep(a) => run(&cli, a, true),
        Command::Verify(a) => verify_cmd(&cli, a),
        Command::DumpState(a) => dump_state(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
