//! Command-line driver: suite generation, training, evaluation, stability
//! sweeps, artifact inspection and manifest replay.

pub mod commands;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wavetune::{SuiteSpec, TunerConfig};

pub use manifest::{RunManifest, Seeds, MANIFEST_FILE};

pub const TOOL: &str = "wavetune";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCOMPATIBLE: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wavetune", version, about = "Reinforcement-learning autotuner for wavefront-size selection")]
pub struct Cli {
    /// Worker threads for benchmark evaluation; outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark suite.
    GenSuite(GenSuiteArgs),
    /// Train a policy on a suite.
    Train(TrainArgs),
    /// Measure a policy's frame-rate uplift.
    Eval(EvalArgs),
    /// Sweep a frozen policy across simulated compiler updates.
    Stability(StabilityArgs),
    /// Summarize a suite, policy or Q-table file.
    Inspect {
        path: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded locations.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Reference,
    ReferenceVariant,
    Contention,
}

impl Preset {
    pub fn spec(self) -> SuiteSpec {
        match self {
            Preset::Default => SuiteSpec::default(),
            Preset::Reference => SuiteSpec::reference(),
            Preset::ReferenceVariant => SuiteSpec::reference_variant(),
            Preset::Contention => SuiteSpec::contention(),
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true)))]
pub struct GenSuiteArgs {
    /// Suite spec (JSON); missing fields take their defaults.
    #[arg(long, group = "source")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, group = "source")]
    pub preset: Option<Preset>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub suite: PathBuf,
    /// Tuner config (JSON); missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Start from an earlier run's Q-table and policy.
    #[arg(long, num_args = 2, value_names = ["QTABLE", "POLICY"])]
    pub warm_start: Option<Vec<PathBuf>>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Histogram bin width in percent.
    #[arg(long, default_value_t = 0.5)]
    pub bin_width: f64,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Also compare exact table lookup with default fallback.
    #[arg(long)]
    pub qtable: Option<PathBuf>,
    #[arg(long, default_value_t = 2500)]
    pub horizon: u64,
    #[arg(long, default_value_t = 250)]
    pub stride: u64,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Measurement noise for the sweep instead of the suite's own.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSuiteRequest {
    pub spec: SuiteSpec,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartPaths {
    pub qtable: PathBuf,
    pub policy: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub suite: PathBuf,
    pub config: TunerConfig,
    pub warm_start: Option<WarmStartPaths>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub suite: PathBuf,
    pub policy: PathBuf,
    pub samples: usize,
    pub seed: u64,
    pub bin_width: f64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRequest {
    pub suite: PathBuf,
    pub policy: PathBuf,
    pub qtable: Option<PathBuf>,
    pub horizon: u64,
    pub stride: u64,
    pub samples: usize,
    pub seed: u64,
    pub noise: Option<f64>,
    pub out_dir: PathBuf,
}

/// A command with every input resolved: running it twice gives the same
/// output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Request {
    GenSuite(GenSuiteRequest),
    Train(TrainRequest),
    Eval(EvalRequest),
    Stability(StabilityRequest),
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::GenSuite(_) => "gen-suite",
            Request::Train(_) => "train",
            Request::Eval(_) => "eval",
            Request::Stability(_) => "stability",
        }
    }

    /// Where the manifest of this request goes.
    pub fn manifest_path(&self) -> PathBuf {
        match self {
            Request::GenSuite(r) => {
                let mut name = r.out.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                r.out.with_file_name(name)
            }
            Request::Train(r) => r.out_dir.join(MANIFEST_FILE),
            Request::Eval(r) => r.out_dir.join(MANIFEST_FILE),
            Request::Stability(r) => r.out_dir.join(MANIFEST_FILE),
        }
    }

    /// The same request with outputs written under `dir`.
    pub fn redirected(&self, dir: &Path) -> Request {
        let mut r = self.clone();
        match &mut r {
            Request::GenSuite(g) => g.out = dir.join(g.out.file_name().unwrap_or_default()),
            Request::Train(t) => t.out_dir = dir.to_path_buf(),
            Request::Eval(e) => e.out_dir = dir.to_path_buf(),
            Request::Stability(s) => s.out_dir = dir.to_path_buf(),
        }
        r
    }
}

fn absolute(p: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| wavetune::Error::Format(format!("{what} {}: {e}", path.display())).into())
}

/// Turn parsed arguments into a self-contained request.
pub fn resolve(command: &Command) -> anyhow::Result<Option<Request>> {
    Ok(Some(match command {
        Command::GenSuite(a) => {
            let mut spec = match (&a.spec, a.preset) {
                (Some(path), _) => read_json::<SuiteSpec>(path, "suite spec")?,
                (None, Some(p)) => p.spec(),
                (None, None) => unreachable!("clap enforces one source"),
            };
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            spec.validate()?;
            Request::GenSuite(GenSuiteRequest { spec, out: absolute(&a.out)? })
        }
        Command::Train(a) => {
            let mut config = match &a.config {
                Some(path) => read_json::<TunerConfig>(path, "tuner config")?,
                None => TunerConfig::default(),
            };
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            config.validate()?;
            let warm_start = match a.warm_start.as_deref() {
                Some([q, p]) => Some(WarmStartPaths { qtable: absolute(q)?, policy: absolute(p)? }),
                Some(_) => unreachable!("clap takes exactly two values"),
                None => None,
            };
            Request::Train(TrainRequest { suite: absolute(&a.suite)?, config, warm_start, out_dir: absolute(&a.out_dir)? })
        }
        Command::Eval(a) => Request::Eval(EvalRequest {
            suite: absolute(&a.suite)?,
            policy: absolute(&a.policy)?,
            samples: a.samples,
            seed: a.seed,
            bin_width: a.bin_width,
            out_dir: absolute(&a.out_dir)?,
        }),
        Command::Stability(a) => Request::Stability(StabilityRequest {
            suite: absolute(&a.suite)?,
            policy: absolute(&a.policy)?,
            qtable: a.qtable.as_deref().map(absolute).transpose()?,
            horizon: a.horizon,
            stride: a.stride,
            samples: a.samples,
            seed: a.seed,
            noise: a.noise,
            out_dir: absolute(&a.out_dir)?,
        }),
        Command::Inspect { .. } | Command::Replay { .. } => return Ok(None),
    }))
}

/// Execute a request and write its manifest.
pub fn execute(request: &Request, jobs: Option<usize>) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let (outputs, seeds) = match request {
        Request::GenSuite(r) => commands::gen_suite(r)?,
        Request::Train(r) => commands::train(r)?,
        Request::Eval(r) => commands::eval(r)?,
        Request::Stability(r) => commands::stability(r)?,
    };
    let manifest = RunManifest {
        tool: TOOL.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: request.name().into(),
        request: request.clone(),
        seeds,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        jobs,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.write(&request.manifest_path())?;
    Ok(manifest)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            anyhow::bail!(wavetune::Error::InvalidConfig("--jobs must be >= 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("starting worker pool")?;
    pool.install(|| match &cli.command {
        Command::Inspect { path } => {
            use std::io::Write as _;
            let _ = std::io::stdout().write_all(commands::inspect(path)?.as_bytes());
            Ok(())
        }
        Command::Replay { manifest, out_dir } => {
            let recorded = RunManifest::read(manifest)?;
            let request = match out_dir {
                Some(dir) => recorded.request.redirected(&absolute(dir)?),
                None => recorded.request,
            };
            execute(&request, cli.jobs)?;
            Ok(())
        }
        other => {
            let request = resolve(other)?.expect("resolvable command");
            execute(&request, cli.jobs)?;
            Ok(())
        }
    })
}

/// Process exit code for an error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use wavetune::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e.root() {
                E::TrainingDiverged { .. } => EXIT_DIVERGED,
                E::Incompatible(_) => EXIT_INCOMPATIBLE,
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INPUT
}

/// Parse `args`, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
