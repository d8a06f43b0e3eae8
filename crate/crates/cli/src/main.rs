use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ghm_cli::{run_pipeline, CliError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "ghm", version, about = "Absolute continuity checks for fat solenoidal attractors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; its keys override the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    sequential: bool,
    #[arg(long, global = true, value_enum)]
    family: Option<Family>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true)]
    b: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Baker,
    Affine,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the hyperbolicity conditions.
    Validate,
    /// Enumerate the cylinder antichains M(r).
    Enumerate,
    /// Invariant density of the base map.
    Acip,
    /// Lift the base density to the SRB estimate.
    Lift,
    /// Fiber L2 criterion I(r).
    Criterion,
    /// Fatness fit.
    Fatness,
    /// Non-transversal sums over the r sweep.
    Transversality,
    /// Distortion and adapted-frame constants.
    Diagnostics,
    /// Strip figures.
    Figure,
    /// Every stage.
    All,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Validate => vec![Stage::Validate],
            Command::Enumerate => vec![Stage::Enumerate],
            Command::Acip => vec![Stage::Acip],
            Command::Lift => vec![Stage::Lift],
            Command::Criterion => vec![Stage::Criterion],
            Command::Fatness => vec![Stage::Fatness],
            Command::Transversality => vec![Stage::Transversality],
            Command::Diagnostics => vec![Stage::Diagnostics],
            Command::Figure => vec![Stage::Figure],
            Command::All => Stage::ALL.to_vec(),
        }
    }
}

fn flag_table(c: &Common) -> Result<toml::Table, CliError> {
    let mut t = toml::Table::new();
    if let Some(seed) = c.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} does not fit in TOML")))?;
        t.insert("seed".into(), seed.into());
    }
    if c.sequential {
        t.insert("exec".into(), "sequential".into());
    }
    if let Some(dir) = &c.out {
        let mut out = toml::Table::new();
        out.insert("directory".into(), dir.to_string_lossy().into_owned().into());
        t.insert("output".into(), out.into());
    }
    if let Some(family) = c.family {
        let mut map = toml::Table::new();
        match family {
            Family::Baker => {
                map.insert("family".into(), "baker".into());
                map.insert("lambda".into(), c.lambda.unwrap_or(0.5).into());
            }
            Family::Affine => {
                map.insert("family".into(), "affine".into());
                map.insert("a".into(), c.a.unwrap_or(0.8).into());
                map.insert("b".into(), c.b.unwrap_or(0.55).into());
            }
        }
        t.insert("map".into(), map.into());
    } else if c.lambda.is_some() || c.a.is_some() || c.b.is_some() {
        return Err(CliError::Config("--lambda/--a/--b need --family".into()));
    }
    Ok(t)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let base = flag_table(&cli.common)?;
    let file = match &cli.common.config {
        Some(p) => RunConfig::load_file(p)?,
        None => toml::Table::new(),
    };
    let cfg = RunConfig::merged(base, file)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = run_pipeline(&cfg, &cli.command.stages())?;
    if let Some(v) = out.state.verdict {
        println!("{}", serde_json::to_string(&v).expect("verdict serializes"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ghm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
