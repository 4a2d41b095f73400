use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmm_es_core::io::{read_csv, write_csv};
use lmm_es_core::{
    analyze, curve, generate, AnalysisConfig, DatasetFrame, ErrorKind, GenConfig, GroupAssignment,
    ModelSpec, X2Distribution,
};

mod grid;

#[derive(Parser)]
#[command(
    name = "lmm-es",
    version,
    about = "Cohen's f² and related effect sizes for linear mixed models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and report every effect size for block 1.
    Analyze(AnalyzeArgs),
    /// Tabulate f² against the variance ratio k (single random factor).
    Curve(CurveArgs),
    /// Write a synthetic dataset with columns Y, X1, X2, Z.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    response: String,
    /// Columns of the tested block, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    block1: Vec<String>,
    /// Nuisance fixed-effect columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    block2: Vec<String>,
    /// Random-intercept grouping columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    random: Vec<String>,
    /// Columns to read as categorical even if they look numeric.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Known variance ratios (one per random factor); skips estimation.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Grid of k values: `start:stop:step` or a comma separated list.
    #[arg(long)]
    k_grid: String,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    levels: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    beta0: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta1: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta2: f64,
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    sigma_u2: f64,
    #[arg(long, default_value_t = 0.313)]
    p_group1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x2_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    x2_sd: f64,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    x2_corr: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    prevalence_spread: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: io::Error) -> Self {
        Self {
            code: 4,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<lmm_es_core::Error> for Failure {
    fn from(err: lmm_es_core::Error) -> Self {
        let code = match err.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("lmm-es: {}", f.message);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Analyze(args) => run_analyze(args),
        Command::Curve(args) => run_curve(args),
        Command::Generate(args) => run_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lmm-es: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("LMM_ES_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        Failure::validation(format!(
            "LMM_ES_THREADS must be a non-negative integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::validation(format!("cannot configure thread pool: {e}")))
}

fn load(model: &ModelArgs) -> Result<(DatasetFrame, AnalysisConfig), Failure> {
    let file = File::open(&model.input).map_err(|e| Failure::io(&model.input, e))?;
    let mut categorical = model.categorical.clone();
    for r in &model.random {
        if !categorical.contains(r) {
            categorical.push(r.clone());
        }
    }
    let frame = read_csv(BufReader::new(file), &model.response, &categorical)?;
    let config = AnalysisConfig {
        spec: ModelSpec::new(
            model.block1.clone(),
            model.block2.clone(),
            model.random.clone(),
        ),
        k_override: model.k.clone(),
        ..Default::default()
    };
    Ok((frame, config))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Failure::io(p, e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    let target = path.unwrap_or(Path::new("<stdout>"));
    let mut out = open_output(path)?;
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(target, e))
}

fn run_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let (frame, config) = load(&args.model)?;
    let report = analyze(&frame, &config)?;
    let body = match args.format {
        Format::Text => report.to_text(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)
                .map_err(|e| Failure::validation(format!("cannot serialize report: {e}")))?;
            s.push('\n');
            s
        }
    };
    emit(args.model.output.as_deref(), &body)
}

fn run_curve(args: CurveArgs) -> Result<(), Failure> {
    let k_grid = grid::parse(&args.k_grid).map_err(Failure::validation)?;
    let (frame, config) = load(&args.model)?;
    let out = curve(&frame, &config, &k_grid)?;
    let mut body = String::from("k,f2\n");
    for p in &out.points {
        body.push_str(&format!("{},{}\n", p.k, p.f2));
    }
    if let Some(p) = out.estimated {
        body.push_str("# estimated k\n");
        body.push_str(&format!("{},{}\n", p.k, p.f2));
    }
    emit(args.model.output.as_deref(), &body)
}

fn run_generate(args: GenerateArgs) -> Result<(), Failure> {
    let config = GenConfig {
        p_group1: args.p_group1,
        x2: X2Distribution {
            mean: args.x2_mean,
            sd: args.x2_sd,
            corr_with_x1: args.x2_corr,
        },
        group_assignment: GroupAssignment {
            prevalence_spread: args.prevalence_spread,
        },
        ..GenConfig::new(
            args.n,
            args.levels,
            [args.beta0, args.beta1, args.beta2],
            args.sigma2,
            args.sigma_u2,
            args.seed,
        )
    };
    let frame = generate(&config)?;
    let target = args.output.as_deref();
    let out = open_output(target)?;
    write_csv(&frame, out).map_err(|e| match e {
        lmm_es_core::Error::Csv(_) | lmm_es_core::Error::Io(_) => Failure {
            code: 4,
            message: format!("{}: {e}", target.unwrap_or(Path::new("<stdout>")).display()),
        },
        other => other.into(),
    })
}
