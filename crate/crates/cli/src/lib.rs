//! Command-line front end: `analyze`, `simulate`, `gen` and `verify`.

pub mod report;
pub mod simulate;
pub mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use markov_hamilton::format::{parse_csv, parse_json, to_json};
use markov_hamilton::markov::random_chain;
use markov_hamilton::{ChainKind, Convention, Error, GeneratorMatrix};

use crate::simulate::{FlowGenerator, Frame, SchemeArg, SimulateOptions};
use crate::verify::VerifyOptions;

#[derive(Debug, Parser)]
#[command(name = "markov-hamilton", version, about = "Gradient and Hamiltonian structure of Markov generators")]
pub struct Cli {
    /// Matrix convention of input files: column means q_ij is the rate j -> i.
    #[arg(long, global = true, value_enum, default_value_t = ConventionArg::Column)]
    pub convention: ConventionArg,
    /// Write the primary output to this path instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Include full matrices and per-edge detail.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Column,
    Row,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Column => Convention::Column,
            ConventionArg::Row => Convention::Row,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Reversible,
    Cycle,
    General,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full analysis of a generator file as a JSON report.
    Analyze {
        /// Generator file (.json or .csv).
        input: PathBuf,
    },
    /// Integrate a flow and export the trajectory as CSV.
    Simulate {
        /// Generator file (.json or .csv).
        input: PathBuf,
        /// Initial distribution, comma separated (default: all mass on state 1).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p0: Option<Vec<f64>>,
        /// Raw initial amplitudes; only with --frame u --generator A.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        u0: Option<Vec<f64>>,
        /// End time.
        #[arg(long, default_value_t = 10.0)]
        t: f64,
        /// Step size, also the sampling interval.
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, value_enum, default_value_t = Frame::P)]
        frame: Frame,
        #[arg(long, value_enum, default_value_t = FlowGenerator::Sa)]
        generator: FlowGenerator,
        #[arg(long, value_enum, default_value_t = SchemeArg::Rk4)]
        scheme: SchemeArg,
    },
    /// Generate a seeded chain in the JSON format.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = KindArg::General)]
        kind: KindArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Forward ring rate (cycle only).
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        /// Backward ring rate (cycle only).
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        /// Overall rate scale.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Run the invariant suites over seeded random chains.
    Verify {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 12)]
        nmax: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

fn error_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(Error::Markov(_) | Error::Format(_)) | None => 1,
        Some(_) => 2,
    }
}

/// Parses generator text, choosing the format by extension or content.
pub fn parse_generator(path: &Path, text: &str, convention: Convention) -> Result<GeneratorMatrix, Error> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let q = match ext.as_deref() {
        Some("json") => parse_json(text, convention),
        Some("csv") => parse_csv(text, convention),
        _ if text.trim_start().starts_with('{') => parse_json(text, convention),
        _ => parse_csv(text, convention),
    };
    Ok(q?)
}

fn read_input(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|source| {
        Error::Format(markov_hamilton::FormatError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

fn analyze(cli: &Cli, input: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> anyhow::Result<i32> {
    let convention = cli.convention.into();
    let file = input.display().to_string();
    let parsed = read_input(input).and_then(|bytes| {
        let text = String::from_utf8_lossy(&bytes).into_owned();
        parse_generator(input, &text, convention).map(|q| (bytes, q))
    });
    let report = match parsed {
        Ok((bytes, q)) => report::analyze(&file, &bytes, convention, &q, cli.verbose),
        Err(e) => {
            let bytes = fs::read(input).unwrap_or_default();
            report::failed_input(&file, &bytes, convention, &e)
        }
    };
    if let Some(e) = &report.error {
        writeln!(stderr, "error: {}", e.message)?;
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        writeln!(stderr, "violation: {} = {:e} (limit {:e})", c.name, c.value, c.limit)?;
    }
    emit(cli.out.as_deref(), &report.to_json(), stdout)?;
    Ok(report.exit_code())
}

fn run_command(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Analyze { input } => analyze(cli, input, stdout, stderr),
        Command::Simulate {
            input,
            p0,
            u0,
            t,
            h,
            frame,
            generator,
            scheme,
        } => {
            let bytes = read_input(input)?;
            let q = parse_generator(input, &String::from_utf8_lossy(&bytes), cli.convention.into())?;
            let opts = SimulateOptions {
                p0: p0.clone(),
                u0: u0.clone(),
                t: *t,
                h: *h,
                frame: *frame,
                generator: *generator,
                scheme: *scheme,
            };
            let mut buf = Vec::new();
            simulate::run(&q, &opts, &mut buf)?;
            emit(cli.out.as_deref(), &String::from_utf8(buf)?, stdout)?;
            Ok(0)
        }
        Command::Gen {
            n,
            kind,
            seed,
            a,
            b,
            scale,
        } => {
            let kind = match kind {
                KindArg::Reversible => ChainKind::Reversible,
                KindArg::General => ChainKind::General,
                KindArg::Cycle => ChainKind::Cycle {
                    forward: *a,
                    backward: *b,
                },
            };
            let q = random_chain(*n, *seed, kind, *scale).map_err(Error::from)?;
            let mut text = to_json(&q);
            text.push('\n');
            emit(cli.out.as_deref(), &text, stdout)?;
            Ok(0)
        }
        Command::Verify {
            trials,
            nmax,
            seed,
            inject_fault,
        } => {
            if *trials == 0 {
                anyhow::bail!("--trials must be at least 1");
            }
            if *nmax < 2 {
                anyhow::bail!("--nmax must be at least 2");
            }
            let summary = verify::run(&VerifyOptions {
                trials: *trials,
                nmax: *nmax,
                seed: *seed,
                inject_fault: *inject_fault,
            });
            stdout.write_all(summary.render().as_bytes())?;
            if let Some(path) = &cli.out {
                let mut json = serde_json::to_string_pretty(&summary)?;
                json.push('\n');
                fs::write(path, json)?;
            }
            Ok(if summary.pass { 0 } else { 2 })
        }
    }
}

/// Runs the CLI on `args` and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run_command(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            error_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("markov-hamilton").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("analyze"));
        assert!(!out.contains("inject"));
    }

    #[test]
    fn unknown_flag_is_input_error() {
        assert_eq!(run_args(&["gen", "--bogus"]).0, 1);
    }

    #[test]
    fn gen_rejects_single_state() {
        let (code, _, err) = run_args(&["gen", "--n", "1"]);
        assert_eq!(code, 1);
        assert!(err.contains("BadSize") || err.contains("at least 2"), "{err}");
    }

    #[test]
    fn verify_rejects_zero_trials() {
        assert_eq!(run_args(&["verify", "--trials", "0"]).0, 1);
    }

    #[test]
    fn parse_by_content() {
        let q = parse_generator(Path::new("x"), "-1,1\n1,-1\n", Convention::Column).unwrap();
        assert_eq!(q.n(), 2);
        let q = parse_generator(Path::new("x"), r#"{"n":2,"q":[[-1,1],[1,-1]]}"#, Convention::Column).unwrap();
        assert_eq!(q.n(), 2);
    }
}
