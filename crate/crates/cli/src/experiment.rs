//! Dispatch of a validated configuration to the core routines, writing CSV
//! outputs and a run manifest into one directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ldrec_core::action::{exit_action_closed_form, minimize_exit_action, write_exit_minima_csv, ExitProblem};
use ldrec_core::noise::{check_conditions, legendre, scaled_rate};
use ldrec_core::rare_event::{
    crude_mc_exceedance, exit_time_mc, rate_sweep, survival_vs_geometric, tilted_is_exceedance, write_exceedance_csv, MonteCarlo,
};
use ldrec_core::TransitionMap;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Kind, SCHEMA_VERSION};
use crate::manifest::{config_hash, git_describe, Manifest, Versions};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config at {0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Runtime { context: String, message: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub(crate) fn runtime(context: impl Into<String>, e: impl ToString) -> Self {
        RunError::Runtime {
            context: context.into(),
            message: e.to_string(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Output files of one run, in creation order.
pub(crate) struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    pub(crate) fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    pub(crate) fn create(&mut self, name: &str) -> io::Result<BufWriter<File>> {
        debug_assert!(!self.names.iter().any(|n| n == name), "duplicate output {name}");
        self.names.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

pub(crate) fn finish(
    out: Outputs,
    config: serde_json::Value,
    seed: u64,
    workers: usize,
    started_at: chrono::DateTime<chrono::Utc>,
    clock: Instant,
) -> Result<RunSummary, RunError> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash(&config),
        config,
        seed,
        workers,
        git_describe: git_describe(),
        versions: Versions::current(),
        started_at: started_at.to_rfc3339(),
        duration_s: clock.elapsed().as_secs_f64(),
        outputs: out.names().to_vec(),
    };
    manifest.write(&out.dir)?;
    Ok(RunSummary {
        out_dir: out.dir,
        manifest,
    })
}

/// Runs the experiment described by `cfg`, writing into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let mut out = Outputs::new(out_dir)?;
    let workers = cfg.sampling.workers.unwrap_or_else(default_workers);
    let mc = MonteCarlo::new(cfg.sampling.seed).with_workers(workers);
    match cfg.kind {
        Kind::LegendreTable => legendre_table(cfg, &mut out)?,
        Kind::ConditionsCheck => conditions(cfg, &mut out)?,
        Kind::ExitAction => exit_action(cfg, &mut out)?,
        Kind::McExceedance => exceedance(cfg, &mc, &mut out)?,
        Kind::ExitTime => exit_time(cfg, &mc, &mut out)?,
        Kind::SurvivalCheck => survival(cfg, &mc, &mut out)?,
    }
    let config = serde_json::to_value(cfg).expect("config serializes");
    finish(out, config, cfg.sampling.seed, workers, started_at, clock)
}

fn grid<T: Clone>(g: &Option<Vec<T>>) -> Vec<T> {
    g.clone().expect("validated")
}

fn legendre_table(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let noise = cfg.noise();
    let mut w = csv::Writer::from_writer(out.create("legendre.csv")?);
    w.write_record(["v", "legendre"])?;
    for v in grid(&cfg.grids.v) {
        w.write_record([v.to_string(), legendre(&noise, v).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn conditions(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let report = check_conditions(&cfg.noise(), &grid(&cfg.grids.eps), &grid(&cfg.grids.v)).map_err(|e| RunError::runtime("conditions-check", e))?;
    report.write_csv(out.create("conditions.csv")?)?;
    let mut w = csv::Writer::from_writer(out.create("conditions_summary.csv")?);
    w.write_record(["v", "speed_bounded", "curvature_decays"])?;
    for s in &report.summaries {
        w.write_record([s.v.to_string(), s.speed_bounded.to_string(), s.curvature_decays.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn exit_action(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let noise = cfg.noise();
    let rate = scaled_rate(&noise).map_err(|e| RunError::runtime("exit-action", e))?;
    let model = cfg.recursion(0.0).map_err(|e| RunError::runtime("exit-action", e))?;
    // the closed form is for X_k = a X_{k-1} + ε ξ_k from the origin
    let scalar_a = match model.map() {
        TransitionMap::ScalarAr1 { a } if rate.is_gaussian() && model.initial() == [0.0] => Some(*a),
        _ => None,
    };
    let mut w = csv::Writer::from_writer(out.create("exit_action.csv")?);
    w.write_record(["horizon", "closed_form", "numeric", "abs_diff", "hit_index", "converged"])?;
    let mut minima = Vec::new();
    for m in grid(&cfg.grids.horizon) {
        let numeric = minimize_exit_action(&model, m, cfg.level, &rate).map_err(|e| RunError::runtime(format!("exit-action horizon {m}"), e))?;
        let closed = scalar_a
            .map(|a| exit_action_closed_form(&ExitProblem::new(a, m, cfg.level, rate.clone())?))
            .transpose()
            .map_err(|e| RunError::runtime(format!("exit-action horizon {m}"), e))?;
        w.write_record([
            m.to_string(),
            closed.map(|c| c.to_string()).unwrap_or_default(),
            numeric.value.to_string(),
            closed.map(|c| (c - numeric.value).abs().to_string()).unwrap_or_default(),
            numeric.hit_index.to_string(),
            numeric.converged.to_string(),
        ])?;
        minima.push(numeric);
    }
    w.flush()?;
    write_exit_minima_csv(out.create("exit_paths.csv")?, &minima)?;
    Ok(())
}

/// Grid point `i` of horizon `h` uses seed `mc.derive(h).derive(i)` for the tilted
/// estimate and `mc.derive(h).derive(CRUDE_OFFSET + i)` for the crude one.
const CRUDE_OFFSET: u64 = 1 << 32;

fn exceedance(cfg: &ExperimentConfig, mc: &MonteCarlo, out: &mut Outputs) -> Result<(), RunError> {
    let eps = grid(&cfg.grids.eps);
    let n = cfg.sampling.n.expect("validated");
    let template = cfg.recursion(1.0).map_err(|e| RunError::runtime("mc-exceedance", e))?;
    let sweepable = eps.len() >= 3 && eps.windows(2).all(|w| w[1] < w[0]);
    for (hi, m) in grid(&cfg.grids.horizon).into_iter().enumerate() {
        let base = mc.derive(hi as u64);
        let ctx = |e: &dyn ToString| RunError::runtime(format!("mc-exceedance horizon {m}"), e.to_string());
        let tilted = if sweepable {
            let sweep = rate_sweep(&template, m, cfg.level, &eps, n, &base).map_err(|e| ctx(&e))?;
            let mut w = csv::Writer::from_writer(out.create(&format!("rate_fit_h{m}.csv"))?);
            w.write_record(["horizon", "extrapolated", "slope", "fit_eps", "residuals", "warnings"])?;
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            w.write_record([
                m.to_string(),
                sweep.extrapolated.map(|x| x.to_string()).unwrap_or_default(),
                sweep.slope.map(|x| x.to_string()).unwrap_or_default(),
                join(&sweep.fit_eps),
                join(&sweep.residuals),
                sweep.warnings.join("; "),
            ])?;
            w.flush()?;
            sweep.results
        } else {
            eps.iter()
                .enumerate()
                .map(|(i, &e)| {
                    let model = template.with_eps(e).map_err(|e| ctx(&e))?;
                    tilted_is_exceedance(&model, m, cfg.level, n, &base.derive(i as u64)).map_err(|e| ctx(&e))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut rows = Vec::with_capacity(2 * eps.len());
        for (i, (&e, t)) in eps.iter().zip(tilted).enumerate() {
            let model = template.with_eps(e).map_err(|e| ctx(&e))?;
            rows.push(crude_mc_exceedance(&model, m, cfg.level, n, &base.derive(CRUDE_OFFSET + i as u64)).map_err(|e| ctx(&e))?);
            rows.push(t);
        }
        write_exceedance_csv(out.create(&format!("exceedance_h{m}.csv"))?, &rows)?;
    }
    Ok(())
}

fn exit_time(cfg: &ExperimentConfig, mc: &MonteCarlo, out: &mut Outputs) -> Result<(), RunError> {
    let template = cfg.recursion(1.0).map_err(|e| RunError::runtime("exit-time", e))?;
    let r = exit_time_mc(
        &template,
        cfg.level,
        &grid(&cfg.grids.eps),
        cfg.sampling.n.expect("validated"),
        cfg.sampling.cap.expect("validated"),
        mc,
    )
    .map_err(|e| RunError::runtime("exit-time", e))?;
    r.write_csv(out.create("exit_time.csv")?)?;
    let mut w = csv::Writer::from_writer(out.create("exit_time_fit.csv")?);
    w.write_record(["slope", "intercept", "ci_low", "ci_high", "resamples", "unreliable_eps"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let unreliable: Vec<String> = r.eps_grid.iter().zip(&r.unreliable).filter(|p| *p.1).map(|p| p.0.to_string()).collect();
    w.write_record([
        opt(r.slope),
        opt(r.intercept),
        opt(r.slope_ci.map(|c| c.0)),
        opt(r.slope_ci.map(|c| c.1)),
        r.resamples.to_string(),
        unreliable.join(" "),
    ])?;
    w.flush()?;
    Ok(())
}

fn survival(cfg: &ExperimentConfig, mc: &MonteCarlo, out: &mut Outputs) -> Result<(), RunError> {
    let eps = grid(&cfg.grids.eps)[0];
    let block = grid(&cfg.grids.horizon)[0];
    let model = cfg.recursion(eps).map_err(|e| RunError::runtime("survival-check", e))?;
    let t = survival_vs_geometric(&model, block, cfg.blocks.expect("validated"), cfg.sampling.n.expect("validated"), cfg.level, mc)
        .map_err(|e| RunError::runtime("survival-check", e))?;
    let mut file = out.create("survival.csv")?;
    t.write_csv(&mut file)?;
    file.flush()?;
    Ok(())
}
