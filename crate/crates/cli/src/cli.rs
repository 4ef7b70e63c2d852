use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ldrec_core::action::{exit_action_closed_form, minimize_exit_action, ExitProblem};
use ldrec_core::noise::legendre;
use ldrec_core::{NoiseModel, RateProfile, RecursionModel};

use crate::config::ExperimentConfig;
use crate::experiment::{run, RunError};
use crate::recipes::{reproduce, Recipe, REPORT_FILE};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LDREC_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "ldrec-out";

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ldrec", version, about = "Large-deviation experiments for small-noise recursions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `output` and the environment default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned reproduction recipe and write a pass/fail report.
    Reproduce {
        recipe: Recipe,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the Legendre transform of a noise law on a uniform grid.
    Legendre {
        #[arg(long, value_enum)]
        noise: NoiseArg,
        #[arg(long, allow_hyphen_values = true)]
        v_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        v_max: f64,
        /// Number of intervals; the table has `steps + 1` rows.
        #[arg(long)]
        steps: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Minimal Gaussian exit action of `X_k = a X_{k-1} + eps xi_k` from the origin.
    ExitAction {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long)]
        horizon: usize,
        /// Also run the numeric minimizer.
        #[arg(long)]
        numeric: bool,
        #[arg(long, default_value_t = 1.0)]
        level: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Skellam,
}

impl NoiseArg {
    fn model(self) -> NoiseModel {
        match self {
            NoiseArg::Gaussian => NoiseModel::Gaussian01,
            NoiseArg::Skellam => NoiseModel::SkellamUnit,
        }
    }
}

enum Failure {
    Usage(String),
    Failed(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Failed(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Failed(format!("csv: {e}"))
    }
}

/// Entry point; exit code 2 for usage and config errors, 1 for runtime errors
/// and failed checks.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

/// `flag`, else `configured`, else `$LDREC_OUT_DIR`, else `./ldrec-out`, with
/// `suffix` appended to the two defaults.
pub fn resolve_out_dir(flag: Option<&Path>, configured: Option<&Path>, suffix: Option<&str>) -> PathBuf {
    if let Some(p) = flag.or(configured) {
        return p.to_path_buf();
    }
    let base = std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    match suffix {
        Some(s) => base.join(s),
        None => base,
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out } => {
            let text = fs::read_to_string(&config).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: invalid config at {e}", config.display())))?;
            let dir = resolve_out_dir(out.as_deref(), cfg.output.as_deref(), None);
            let summary = run(&cfg, &dir)?;
            for name in &summary.manifest.outputs {
                println!("{}", summary.out_dir.join(name).display());
            }
            Ok(())
        }
        Command::Reproduce { recipe, out } => {
            let dir = resolve_out_dir(out.as_deref(), None, Some(recipe.name()));
            let report = reproduce(recipe, &dir)?;
            for c in &report.checks {
                println!("{c}");
            }
            let passed = report.checks.iter().filter(|c| c.pass).count();
            println!(
                "{recipe}: {passed}/{} checks pass, report at {}",
                report.checks.len(),
                dir.join(REPORT_FILE).display()
            );
            if report.all_pass() {
                Ok(())
            } else {
                Err(Failure::Failed(format!("{recipe}: {} check(s) failed", report.checks.len() - passed)))
            }
        }
        Command::Legendre {
            noise,
            v_min,
            v_max,
            steps,
            csv,
        } => {
            if !(v_min.is_finite() && v_max.is_finite() && v_min <= v_max) {
                return Err(Failure::Usage("need finite --v-min <= --v-max".into()));
            }
            if steps == 0 && v_min != v_max {
                return Err(Failure::Usage("--steps must be at least 1 unless --v-min equals --v-max".into()));
            }
            let sink: Box<dyn Write> = match &csv {
                Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(["v", "legendre"])?;
            let model = noise.model();
            let width = v_max - v_min;
            for i in 0..=steps {
                let v = if i == steps { v_max } else { v_min + width * i as f64 / steps as f64 };
                w.write_record([v.to_string(), legendre(&model, v).to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::ExitAction { a, horizon, numeric, level } => {
            let problem = ExitProblem::new(a, horizon, level, RateProfile::gaussian()).map_err(|e| Failure::Usage(e.to_string()))?;
            let closed = exit_action_closed_form(&problem).map_err(|e| Failure::Usage(e.to_string()))?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            if numeric {
                let model = RecursionModel::ar1(a, 0.0, NoiseModel::Gaussian01, 0.0).map_err(|e| Failure::Usage(e.to_string()))?;
                let r = minimize_exit_action(&model, horizon, level, &problem.rate).map_err(|e| Failure::Failed(e.to_string()))?;
                w.write_record(["a", "horizon", "level", "closed_form", "numeric", "abs_diff", "hit_index", "converged"])?;
                w.write_record([
                    a.to_string(),
                    horizon.to_string(),
                    level.to_string(),
                    closed.to_string(),
                    r.value.to_string(),
                    (closed - r.value).abs().to_string(),
                    r.hit_index.to_string(),
                    r.converged.to_string(),
                ])?;
            } else {
                w.write_record(["a", "horizon", "level", "closed_form"])?;
                w.write_record([a.to_string(), horizon.to_string(), level.to_string(), closed.to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn explicit_directories_win() {
        let flag = Path::new("/tmp/flag");
        let cfg = Path::new("/tmp/cfg");
        assert_eq!(resolve_out_dir(Some(flag), Some(cfg), Some("x")), flag);
        assert_eq!(resolve_out_dir(None, Some(cfg), Some("x")), cfg);
    }

    #[test]
    fn parses_negative_coefficients() {
        let cli = Cli::try_parse_from(["ldrec", "exit-action", "--a", "-0.5", "--horizon", "3"]).unwrap();
        match cli.command {
            Command::ExitAction { a, horizon, numeric, .. } => {
                assert_eq!((a, horizon, numeric), (-0.5, 3, false));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["ldrec", "reproduce", "theorem-9-9"]).is_err());
    }
}
