use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dynmpi::eval::{default_reference_frame, reconstruct_reference, run_experiment_suite, EstimatorMethod, EstimatorSpec, MetricsReport};
use dynmpi::io::{self, ImageFormat, MetricsRow, RunConfig};
use dynmpi::{Algorithm, DynamicDataset, Error, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::Command;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_io() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CmdResult<T = ExitCode> = Result<T, Failure>;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: &'a [String],
    config_hash: Option<String>,
    seed: Option<u64>,
}

fn write_manifest(dir: &Path, command: &str, args: &[String], config_hash: Option<String>, seed: Option<u64>) -> CmdResult<()> {
    let m = Manifest {
        tool: "dynmpi",
        version: env!("CARGO_PKG_VERSION"),
        command,
        args,
        config_hash,
        seed,
    };
    io::write_json(&dir.join("manifest.json"), &m)?;
    Ok(())
}

fn create_dir(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: 3,
        message: format!("cannot create {}: {e}", dir.display()),
    })
}

/// Parse errors in a config file are configuration errors, not I/O errors.
fn load_config(path: &Path) -> CmdResult<RunConfig> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Failure::from(e),
        other => Failure::usage(other.to_string()),
    })
}

fn parse<T: std::str::FromStr<Err = Error>>(text: &str) -> CmdResult<T> {
    text.parse().map_err(|e: Error| Failure::usage(e.to_string()))
}

/// Sidecar describing a reconstruction directory.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconInfo {
    algorithm: Algorithm,
    lambda: Option<f64>,
    levels: Option<PathBuf>,
    subproblems_per_frame: usize,
    reference_frame: usize,
    sweeps_run: usize,
    termination: dynmpi::solvers::Termination,
}

pub fn run(command: Command, args: &[String]) -> CmdResult {
    match command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed, args),
        Command::EstimateLevels {
            data,
            method,
            subsize,
            scale,
            zeta_noise,
            seed,
            prior_lambda,
            prior_iters,
            reference_frame,
            out,
        } => {
            let method: EstimatorMethod = parse(&method)?;
            let spec = EstimatorSpec {
                method,
                zeta_noise,
                prior_lambda,
                prior_iters,
            };
            estimate_levels(&data, spec, &subsize, scale, seed, reference_frame, &out, args)
        }
        Command::Reconstruct {
            data,
            algo,
            levels,
            lambda,
            subsize,
            sweeps,
            reference_frame,
            no_positivity,
            out,
        } => {
            let algorithm: Algorithm = parse(&algo)?;
            let subsize = io::parse_subsize(&subsize)?;
            let cfg = match algorithm {
                Algorithm::RegKaczmarz => SolverConfig::reg_kaczmarz(
                    lambda.ok_or_else(|| Failure::usage("reg-kaczmarz requires --lambda"))?,
                ),
                Algorithm::Sesop => SolverConfig::sesop(),
                Algorithm::Resesop => SolverConfig::resesop(),
            };
            let cfg = match sweeps {
                Some(n) => cfg.with_sweeps(n),
                None => cfg,
            }
            .with_positivity(!no_positivity);
            cfg.validate()?;
            reconstruct(&data, cfg, levels.as_deref(), subsize, reference_frame, &out, args)
        }
        Command::Evaluate { rec, truth, out } => evaluate(&rec, &truth, &out, args),
        Command::Sweep { config, out } => sweep(&config, &out, args),
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, args: &[String]) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seeds.noise = s;
    }
    log::info!("simulating {} frames", cfg.partition.n_frames);
    let dataset = cfg.simulate()?;
    io::write_dataset(out, &dataset)?;
    write_manifest(out, "simulate", args, Some(cfg.hash()), Some(cfg.seeds.noise))?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn estimate_levels(
    data: &Path,
    spec: EstimatorSpec,
    subsize: &str,
    scale: f64,
    seed: u64,
    reference_frame: Option<usize>,
    out: &Path,
    args: &[String],
) -> CmdResult {
    let s = io::parse_subsize(subsize)?;
    let dataset = io::read_dataset(data)?;
    let reference_frame = reference_frame.unwrap_or_else(|| default_reference_frame(dataset.partition.n_frames()));
    let dataset = dataset
        .with_reference_frame(reference_frame)?
        .with_subproblems(s)?;
    let levels = spec.levels(&dataset, scale, seed)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    io::write_levels(out, &levels)?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_manifest(dir, "estimate-levels", args, dataset.provenance.config_hash.clone(), Some(seed))?;
    Ok(ExitCode::SUCCESS)
}

fn reconstruct(
    data: &Path,
    cfg: SolverConfig,
    levels_path: Option<&Path>,
    subsize: usize,
    reference_frame: Option<usize>,
    out: &Path,
    args: &[String],
) -> CmdResult {
    let dataset = io::read_dataset(data)?;
    let reference_frame = reference_frame.unwrap_or_else(|| default_reference_frame(dataset.partition.n_frames()));
    let levels = match (cfg.algorithm, levels_path) {
        (Algorithm::Resesop, None) => return Err(Failure::usage("resesop requires --levels")),
        (Algorithm::Resesop, Some(p)) => {
            let l = io::read_levels(p)?;
            let expected = dataset.partition.n_frames() * subsize;
            if l.len() != expected {
                return Err(Failure::usage(format!(
                    "levels file has {} entries but subsize {} needs {expected}",
                    l.len(),
                    io::subsize_label(subsize)
                )));
            }
            Some(l)
        }
        _ => None,
    };
    let result = reconstruct_reference(&dataset, &cfg, levels.as_ref(), reference_frame, subsize)?;
    create_dir(out)?;
    let c = &result.reconstruction;
    io::write_vector(&out.join("reconstruction.dirv"), c)?;
    io::export_image(c, &dataset.grid, &out.join("reconstruction.pgm"), ImageFormat::Pgm16)?;
    io::export_image(c, &dataset.grid, &out.join("reconstruction.csv"), ImageFormat::Csv)?;
    io::atomic_write(&out.join("trace.csv"), io::trace_rows(&result).as_bytes())?;
    let info = ReconInfo {
        algorithm: cfg.algorithm,
        lambda: (cfg.algorithm == Algorithm::RegKaczmarz).then_some(cfg.lambda),
        levels: levels_path.map(Path::to_path_buf),
        subproblems_per_frame: subsize,
        reference_frame,
        sweeps_run: result.sweeps_run,
        termination: result.termination,
    };
    io::write_json(&out.join("info.json"), &info)?;
    write_manifest(out, "reconstruct", args, dataset.provenance.config_hash.clone(), dataset.provenance.seed)?;
    Ok(ExitCode::SUCCESS)
}

fn evaluate(rec: &Path, truth: &Path, out: &Path, args: &[String]) -> CmdResult {
    let reference = io::read_dataset(truth)?;
    if reference.truth.is_none() {
        return Err(Failure::usage(format!("{} has no ground truth", truth.display())));
    }
    let grid = reference.grid;
    let mut rows = Vec::new();
    if rec.join("reconstruction.dirv").exists() {
        let info: ReconInfo = io::read_json(&rec.join("info.json"))?;
        let c = io::read_vector(&rec.join("reconstruction.dirv"))?;
        let t = reference
            .frame_truth(info.reference_frame)
            .ok_or_else(|| Failure::usage(format!("reference frame {} not in truth dataset", info.reference_frame)))?;
        rows.push(MetricsRow {
            cell_id: "rec".into(),
            algorithm: info.algorithm.name().into(),
            estimator: String::new(),
            scale: 1.0,
            subsize: info.subproblems_per_frame,
            lambda: info.lambda.unwrap_or(0.0),
            report: Some(MetricsReport::compute(&c, t, &grid, info.reference_frame, None)?),
        });
    } else {
        // A dataset directory: compare its ground truth frame by frame.
        let other: DynamicDataset = io::read_dataset(rec)?;
        for f in 0..reference.partition.n_frames() {
            let t = reference.frame_truth(f).expect("checked above");
            let c = other
                .frame_truth(f)
                .ok_or_else(|| Failure::usage(format!("{} has no ground truth for frame {f}", rec.display())))?;
            rows.push(MetricsRow {
                cell_id: format!("f{f:03}"),
                algorithm: "truth".into(),
                estimator: String::new(),
                scale: 1.0,
                subsize: 1,
                lambda: 0.0,
                report: Some(MetricsReport::compute(c, t, &grid, f, None)?),
            });
        }
    }
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    io::atomic_write(out, io::metrics_csv(&rows).as_bytes())?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_manifest(dir, "evaluate", args, reference.provenance.config_hash.clone(), reference.provenance.seed)?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(config: &Path, out: &Path, args: &[String]) -> CmdResult {
    let cfg = load_config(config)?;
    let exp = cfg
        .experiment
        .clone()
        .ok_or_else(|| Failure::usage(format!("{}: sweep requires an `experiment` section", config.display())))?;
    let dataset = cfg.simulate()?;
    let outcomes = run_experiment_suite(&dataset, &exp);
    create_dir(&out.join("traces"))?;
    create_dir(&out.join("images"))?;
    let mut failed = 0;
    for o in &outcomes {
        match &o.outcome {
            Ok((_, result)) => {
                let id = &o.cell.id;
                io::atomic_write(&out.join("traces").join(format!("{id}.csv")), io::trace_rows(result).as_bytes())?;
                io::export_image(
                    &result.reconstruction,
                    &dataset.grid,
                    &out.join("images").join(format!("{id}.pgm")),
                    ImageFormat::Pgm16,
                )?;
            }
            Err(e) => {
                failed += 1;
                log::warn!("cell {} failed: {e}", o.cell.id);
            }
        }
    }
    let rows: Vec<MetricsRow> = outcomes.iter().map(MetricsRow::from).collect();
    io::atomic_write(&out.join("metrics.csv"), io::metrics_csv(&rows).as_bytes())?;
    let failures: String = outcomes
        .iter()
        .filter_map(|o| o.outcome.as_ref().err().map(|e| format!("{}: {e}\n", o.cell.id)))
        .collect();
    io::atomic_write(&out.join("failures.txt"), failures.as_bytes())?;
    write_manifest(out, "sweep", args, Some(cfg.hash()), Some(cfg.seeds.noise))?;
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see failures.txt", outcomes.len());
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}
