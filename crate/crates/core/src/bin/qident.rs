use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qident::catalog::Catalog;
use qident::expr::{free_symbols, parse, ParamEnv};
use qident::verifier::{emit, from_json, verify, verify_all, ReportFormat, SampleConfig, VerificationReport};
use qident::{Error, PrecisionComplex, QBase, TruncationControl};

// stdout writes that end the process quietly once the reader has gone away
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        if writeln!(std::io::stdout(), $($t)*).is_err() {
            std::process::exit(0);
        }
    }};
}

macro_rules! say_raw {
    ($($t:tt)*) => {{
        use std::io::Write;
        if write!(std::io::stdout(), $($t)*).is_err() {
            std::process::exit(0);
        }
    }};
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SAMPLING: u8 = 3;

/// Numerical verification of basic hypergeometric identities.
#[derive(Parser)]
#[command(name = "qident", version)]
struct Cli {
    /// Catalog directory (overrides QIDENT_CATALOG).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List catalog identities.
    List,
    /// Print one identity with its derived guards.
    Show { id: String },
    /// Evaluate an expression.
    Eval {
        expr: String,
        /// Binding `name=value`; values accept `re+imi` forms.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value_t = 30)]
        digits: u32,
    },
    /// Verify one identity.
    Verify {
        id: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Verify every identity in the catalog.
    VerifyAll {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convert a JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Summary,
    Json,
    Markdown,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = SampleConfig::default().trials)]
    trials: usize,
    #[arg(long, default_value_t = SampleConfig::default().digits)]
    digits: u32,
    #[arg(long, default_value_t = SampleConfig::default().seed)]
    seed: u64,
    #[arg(long)]
    complex_q: bool,
    #[arg(long, default_value_t = SampleConfig::default().margin)]
    margin: f64,
    /// Output format on stdout.
    #[arg(long, value_enum, default_value_t = Format::Summary)]
    format: Format,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> SampleConfig {
        SampleConfig {
            seed: self.seed,
            trials: self.trials,
            digits: self.digits,
            margin: self.margin,
            complex_q: self.complex_q,
            ..SampleConfig::default()
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn load(cli: &Cli) -> Result<Catalog, ExitCode> {
    let dir = cli.catalog.clone().unwrap_or_else(Catalog::default_dir);
    Catalog::load(&dir).map_err(config_error)
}

fn finish(reports: &[VerificationReport], run: &RunArgs) -> ExitCode {
    match run.format {
        Format::Summary => {
            for r in reports {
                say!("{}", r.summary());
            }
        }
        Format::Json => say!("{}", emit(reports, ReportFormat::Json)),
        Format::Markdown => say_raw!("{}", emit(reports, ReportFormat::Markdown)),
    }
    if let Some(path) = &run.out {
        if let Err(e) = std::fs::write(path, emit(reports, ReportFormat::Json)) {
            return config_error(e);
        }
    }
    if reports.iter().any(|r| r.aggregate.failed > 0 || (!r.passed() && !r.aggregate.sampling_exhausted)) {
        ExitCode::from(EXIT_FAIL)
    } else if reports.iter().any(|r| r.aggregate.sampling_exhausted) {
        ExitCode::from(EXIT_SAMPLING)
    } else {
        ExitCode::SUCCESS
    }
}

fn eval_command(text: &str, set: &[String], digits: u32) -> ExitCode {
    let e = match parse(text) {
        Ok(e) => e,
        Err(err) => return config_error(err),
    };
    let mut q = None;
    let mut bindings = Vec::new();
    for s in set {
        let Some((name, value)) = s.split_once('=') else {
            return config_error(format!("expected NAME=VALUE, got `{s}`"));
        };
        let v = match PrecisionComplex::parse(value.trim(), digits) {
            Ok(v) => v,
            Err(err) => return config_error(err),
        };
        if name.trim() == "q" {
            q = Some(v);
        } else {
            bindings.push((name.trim().to_string(), v));
        }
    }
    let q = match q {
        Some(q) => q,
        None if !free_symbols(&e).contains("q") => PrecisionComplex::real(0.5, digits),
        None => return config_error("the expression uses q; pass --set q=..."),
    };
    let q = match QBase::new(q) {
        Ok(q) => q,
        Err(err) => return config_error(err),
    };
    let mut env = ParamEnv::new(q);
    for (k, v) in bindings {
        env.bindings.insert(k, v);
    }
    match e.eval(&env, &TruncationControl::for_digits(digits)) {
        Ok(v) => {
            say!("{}", v.to_pair_string(digits as usize));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::List => {
            let cat = match load(&cli) {
                Ok(c) => c,
                Err(code) => return code,
            };
            for i in cat.identities() {
                let aliases = if i.aliases.is_empty() {
                    String::new()
                } else {
                    format!(" (alias {})", i.aliases.join(", "))
                };
                say!("{:<6} {:<24} {} form(s){aliases}", i.id, i.paper_label, i.rhs_forms.len());
            }
            ExitCode::SUCCESS
        }
        Command::Show { id } => {
            let cat = match load(&cli) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cat.get(id) {
                Ok(i) => {
                    say_raw!("{}", i.render());
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(e),
            }
        }
        Command::Eval { expr, set, digits } => eval_command(expr, set, *digits),
        Command::Verify { id, run } => {
            let cat = match load(&cli) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let report = cat.get(id).and_then(|i| verify(i, &run.config()));
            match report {
                Ok(r) => finish(&[r], run),
                Err(e) => config_error(e),
            }
        }
        Command::VerifyAll { run } => {
            let cat = match load(&cli) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match verify_all(&cat, &run.config()) {
                Ok(rs) => finish(&rs, run),
                Err(e) => config_error(e),
            }
        }
        Command::Report { input, format } => {
            let text = match std::fs::read_to_string(input) {
                Ok(t) => t,
                Err(e) => return config_error(Error::from(e)),
            };
            let reports = match from_json(&text) {
                Ok(r) => r,
                Err(e) => return config_error(e),
            };
            match format {
                Format::Summary => reports.iter().for_each(|r| say!("{}", r.summary())),
                Format::Json => say!("{}", emit(&reports, ReportFormat::Json)),
                Format::Markdown => say_raw!("{}", emit(&reports, ReportFormat::Markdown)),
            }
            ExitCode::SUCCESS
        }
    }
}
