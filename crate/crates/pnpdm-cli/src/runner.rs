//! Builds a sampling problem from a config and executes it deterministically.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use pnpdm::denoiser::{Covariance, Denoiser, GaussianPrior, GmmPrior};
use pnpdm::forward::{
    random_unit_mask, BlockDownsample, CdpModel, CirculantConv2d, ComplexLinear, DenseOperator,
    FprModel, LinearGaussianPotential, LinearOperator, MagnitudePotential, Potential,
};
use pnpdm::likelihood::{ConjugateGaussianSampler, LmcConfig};
use pnpdm::prior_step::{PriorStep, Solver};
use pnpdm::sampler::{chain_stream_seed, run_chain, splitmix64, Init, LikelihoodStep, RunConfig};
use pnpdm::schedules::{CouplingSchedule, DiffusionSchedule, ScheduleFamily};
use pnpdm::ImageVector;

use crate::config::{resolve, Config};
use crate::manifest::{sha256_hex, FileRef, Manifest, ScheduleInfo};
use crate::metrics::{coverage_stats, psnr, MetricsReport};
use crate::npy::{self, Array};

/// Independent RNG stream labels derived from the run seed.
const STREAM_SIMULATION: u64 = 0x5349_4d55_4c41_5445; // "SIMULATE"
const STREAM_MASK: u64 = 0x4d41_534b_4d41_534b; // "MASKMASK"

pub struct Problem {
    pub config: Config,
    pub dim: usize,
    pub denoiser: Arc<dyn Denoiser>,
    pub likelihood: LikelihoodStep,
    /// Data-mismatch potential, for metrics (present for every model).
    pub potential: Arc<dyn Potential>,
    pub truth: Option<Vec<f64>>,
    pub measurement: Vec<f64>,
    pub files: Vec<FileRef>,
}

fn read_vector(path: &Path, role: &str, files: &mut Vec<FileRef>) -> Result<Vec<f64>> {
    let array = npy::read_array(path)?;
    files.push(FileRef {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&npy::to_bytes(&array)),
    });
    Ok(array.to_f64())
}

fn read_shaped(path: &Path, role: &str, files: &mut Vec<FileRef>) -> Result<(Vec<usize>, Vec<f64>)> {
    let array = npy::read_array(path)?;
    files.push(FileRef {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&npy::to_bytes(&array)),
    });
    Ok((array.shape.clone(), array.to_f64()))
}

fn build_denoiser(
    config: &Config,
    config_dir: &Path,
    files: &mut Vec<FileRef>,
) -> Result<(Arc<dyn Denoiser>, usize)> {
    let pr = &config.prior;
    match pr.kind.as_str() {
        "gaussian" => {
            let mean = read_vector(&resolve(config_dir, pr.mean.as_ref().unwrap()), "prior.mean", files)?;
            let (cshape, cdata) = read_shaped(
                &resolve(config_dir, pr.covariance.as_ref().unwrap()),
                "prior.covariance",
                files,
            )?;
            let n = mean.len();
            if cshape != vec![n, n] {
                bail!("prior.covariance: expected shape ({n}, {n}), got {cshape:?}");
            }
            let cov = DMatrix::from_row_slice(n, n, &cdata);
            let prior = GaussianPrior::new(DVector::from_vec(mean), Covariance::dense(cov)?)?;
            Ok((Arc::new(prior), n))
        }
        "gmm" => {
            let weights = read_vector(
                &resolve(config_dir, pr.weights.as_ref().unwrap()),
                "prior.weights",
                files,
            )?;
            let (mshape, mdata) = read_shaped(
                &resolve(config_dir, pr.means.as_ref().unwrap()),
                "prior.means",
                files,
            )?;
            let (cshape, cdata) = read_shaped(
                &resolve(config_dir, pr.covariances.as_ref().unwrap()),
                "prior.covariances",
                files,
            )?;
            let k = weights.len();
            if mshape.len() != 2 || mshape[0] != k {
                bail!("prior.means: expected shape ({k}, n), got {mshape:?}");
            }
            let n = mshape[1];
            if cshape != vec![k, n, n] {
                bail!("prior.covariances: expected shape ({k}, {n}, {n}), got {cshape:?}");
            }
            let mut components = Vec::with_capacity(k);
            for i in 0..k {
                let mean = DVector::from_row_slice(&mdata[i * n..(i + 1) * n]);
                let cov = DMatrix::from_row_slice(n, n, &cdata[i * n * n..(i + 1) * n * n]);
                components.push(GaussianPrior::new(mean, Covariance::dense(cov)?)?);
            }
            let prior = GmmPrior::new(weights, components)?;
            Ok((Arc::new(prior), n))
        }
        other => bail!("prior.kind: unknown kind '{other}'"),
    }
}

fn complex_mask_from_array(shape: &[usize], data: &[f64], h: usize, w: usize) -> Result<Vec<Complex64>> {
    if shape != [2, h, w] {
        bail!("likelihood.mask: expected shape (2, {h}, {w}), got {shape:?}");
    }
    let n = h * w;
    Ok((0..n)
        .map(|i| Complex64::new(data[i], data[n + i]))
        .collect())
}

fn mask_to_array(mask: &[Complex64], h: usize, w: usize) -> Result<Array> {
    let mut data = Vec::with_capacity(2 * mask.len());
    data.extend(mask.iter().map(|c| c.re));
    data.extend(mask.iter().map(|c| c.im));
    Array::from_f64(vec![2, h, w], data)
}

enum ForwardModel {
    Linear(Arc<dyn LinearOperator>),
    Magnitude(Arc<dyn ComplexLinear>),
}

impl ForwardModel {
    fn input_dim(&self) -> usize {
        match self {
            ForwardModel::Linear(op) => op.input_dim(),
            ForwardModel::Magnitude(op) => op.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            ForwardModel::Linear(op) => op.output_dim(),
            ForwardModel::Magnitude(op) => op.output_dim(),
        }
    }

    /// Noiseless measurement of `x` (magnitudes for the nonlinear models).
    fn clean(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ForwardModel::Linear(op) => op.apply(x),
            ForwardModel::Magnitude(op) => op.forward_magnitudes(x),
        }
    }
}

fn build_forward(
    config: &Config,
    config_dir: &Path,
    out_dir: Option<&Path>,
    files: &mut Vec<FileRef>,
) -> Result<ForwardModel> {
    let lk = &config.likelihood;
    match lk.model.as_str() {
        "dense" => {
            let (shape, data) = read_shaped(
                &resolve(config_dir, lk.matrix.as_ref().unwrap()),
                "likelihood.matrix",
                files,
            )?;
            if shape.len() != 2 {
                bail!("likelihood.matrix: expected a 2-d array, got shape {shape:?}");
            }
            let a = DMatrix::from_row_slice(shape[0], shape[1], &data);
            Ok(ForwardModel::Linear(Arc::new(DenseOperator::new(a)?)))
        }
        "conv" => {
            let (h, w) = (lk.height.unwrap(), lk.width.unwrap());
            let (shape, data) = read_shaped(
                &resolve(config_dir, lk.kernel.as_ref().unwrap()),
                "likelihood.kernel",
                files,
            )?;
            if shape.len() != 2 {
                bail!("likelihood.kernel: expected a 2-d array, got shape {shape:?}");
            }
            let kernel = ImageVector::from_slice(&data, shape[0], shape[1])?;
            Ok(ForwardModel::Linear(Arc::new(CirculantConv2d::new(&kernel, h, w)?)))
        }
        "downsample" => {
            let (h, w) = (lk.height.unwrap(), lk.width.unwrap());
            let factor = lk.factor.unwrap();
            Ok(ForwardModel::Linear(Arc::new(BlockDownsample::new(h, w, factor)?)))
        }
        "cdp" => {
            let (h, w) = (lk.height.unwrap(), lk.width.unwrap());
            let mask = match &lk.mask {
                Some(path) => {
                    let (shape, data) = read_shaped(&resolve(config_dir, path), "likelihood.mask", files)?;
                    complex_mask_from_array(&shape, &data, h, w)?
                }
                None => {
                    // Generate from the run seed and persist for reproduction.
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(splitmix64(config.sampler.seed ^ STREAM_MASK));
                    let mask = random_unit_mask(h * w, &mut rng);
                    if let Some(dir) = out_dir {
                        let array = mask_to_array(&mask, h, w)?;
                        let path = dir.join("mask.npy");
                        npy::write_array(&path, &array)?;
                        files.push(FileRef {
                            role: "likelihood.mask (generated)".to_string(),
                            path: path.display().to_string(),
                            sha256: sha256_hex(&npy::to_bytes(&array)),
                        });
                    }
                    mask
                }
            };
            Ok(ForwardModel::Magnitude(Arc::new(CdpModel::new(mask, h, w)?)))
        }
        "fpr" => {
            let (h, w) = (lk.height.unwrap(), lk.width.unwrap());
            Ok(ForwardModel::Magnitude(Arc::new(FprModel::new(h, w, lk.pad_factor)?)))
        }
        other => bail!("likelihood.model: unknown model '{other}'"),
    }
}

/// Assemble the full problem: prior, forward model, data, likelihood step.
///
/// `out_dir` is where generated artifacts (e.g. a CDP mask) are persisted;
/// pass `None` for validation-only runs.
pub fn build_problem(config: &Config, config_path: &Path, out_dir: Option<&Path>) -> Result<Problem> {
    let mut files = Vec::new();
    let (denoiser, dim) = build_denoiser(config, config_path, &mut files)?;
    let forward = build_forward(config, config_path, out_dir, &mut files)?;
    if forward.input_dim() != dim {
        bail!(
            "forward model input dimension {} does not match prior dimension {}",
            forward.input_dim(),
            dim
        );
    }
    let lk = &config.likelihood;

    let (truth, measurement) = match (&lk.measurement, &lk.truth) {
        (Some(path), None) => {
            let y = read_vector(&resolve(config_path, path), "likelihood.measurement", &mut files)?;
            (None, y)
        }
        (None, Some(path)) => {
            let t = read_vector(&resolve(config_path, path), "likelihood.truth", &mut files)?;
            if t.len() != dim {
                bail!(
                    "likelihood.truth: expected {} entries to match the prior, got {}",
                    dim,
                    t.len()
                );
            }
            let clean = forward.clean(&DVector::from_vec(t.clone()));
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix64(config.sampler.seed ^ STREAM_SIMULATION));
            let y: Vec<f64> = clean
                .iter()
                .map(|&v| v + lk.sigma_y * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (Some(t), y)
        }
        _ => unreachable!("config validation enforces exactly one of measurement/truth"),
    };
    if measurement.len() != forward.output_dim() {
        bail!(
            "measurement length {} does not match forward model output dimension {}",
            measurement.len(),
            forward.output_dim()
        );
    }
    let y = DVector::from_vec(measurement.clone());

    let potential: Arc<dyn Potential> = match &forward {
        ForwardModel::Linear(op) => Arc::new(LinearGaussianPotential::new(
            Arc::clone(op),
            y.clone(),
            lk.sigma_y,
        )),
        ForwardModel::Magnitude(op) => Arc::new(MagnitudePotential::new(
            Arc::clone(op),
            y.clone(),
            lk.sigma_y,
        )),
    };

    let likelihood = match (config.method(), &forward) {
        ("exact", ForwardModel::Linear(op)) => LikelihoodStep::Exact(
            ConjugateGaussianSampler::new(Arc::clone(op), &y, lk.sigma_y)?,
        ),
        ("exact", ForwardModel::Magnitude(_)) => {
            bail!("exact conjugate sampling requires a linear model")
        }
        (_, _) => {
            let default = match lk.model.as_str() {
                "cdp" => LmcConfig::cdp_default(),
                _ => LmcConfig::fpr_default(),
            };
            let gamma = lk.gamma.unwrap_or(default.gamma);
            let steps = lk.lmc_steps.unwrap_or(default.iterations);
            LikelihoodStep::Lmc {
                potential: Arc::clone(&potential),
                config: LmcConfig::new(gamma, steps)?,
            }
        }
    };

    Ok(Problem {
        config: config.clone(),
        dim,
        denoiser,
        likelihood,
        potential,
        truth,
        measurement,
        files,
    })
}

fn schedule_family(name: &str) -> Result<ScheduleFamily> {
    Ok(match name {
        "edm" => ScheduleFamily::Edm,
        "ve" => ScheduleFamily::Ve,
        "vp" => ScheduleFamily::Vp,
        other => bail!("unknown schedule family '{other}'"),
    })
}

fn init_mode(name: &str) -> Result<Init> {
    Ok(match name {
        "zeros" => Init::Zeros,
        "std_normal" => Init::StdNormal,
        "uniform" => Init::Uniform01,
        other => bail!("unknown init '{other}'"),
    })
}

pub struct RunOutput {
    pub manifest_path: PathBuf,
    pub metrics_path: PathBuf,
    pub sample_paths: Vec<PathBuf>,
}

/// Execute the configured experiment and write all artifacts into `out_dir`.
pub fn run_experiment(
    config: &Config,
    canonical_config: &str,
    config_path: &Path,
    out_dir: &Path,
) -> Result<RunOutput> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("failed to create output dir {}", out_dir.display()))?;
    let problem = build_problem(config, config_path, Some(out_dir))?;

    let family = schedule_family(&config.schedule.family)?;
    let schedule = DiffusionSchedule::new(
        family,
        config.schedule.sigma_min,
        config.schedule.sigma_max,
        config.schedule.steps,
    )?;
    let solver = match config.schedule.solver.as_str() {
        "ode" => Solver::Ode,
        _ => Solver::Sde,
    };
    let coupling = CouplingSchedule::new(
        config.coupling.rho0,
        config.coupling.rho_min,
        config.coupling.alpha,
    )?;

    let run_config = RunConfig {
        iterations: config.sampler.iterations,
        coupling,
        likelihood: problem.likelihood,
        prior: PriorStep::new(schedule, solver),
        denoiser: Arc::clone(&problem.denoiser),
        init: init_mode(&config.sampler.init)?,
        burn_in: config.sampler.burn_in,
        thin: config.sampler.thin,
        chains: config.sampler.chains,
        seed: config.sampler.seed,
        dim: problem.dim,
        keep_iterates: config.sampler.keep_iterates,
    };
    run_config.validate().map_err(|e| anyhow!("{e}"))?;

    let records: Vec<_> = (0..config.sampler.chains)
        .into_par_iter()
        .map(|i| run_chain(&run_config, i))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| anyhow!("chain aborted: {e}"))?;

    // Per-chain sample arrays (samples × dim).
    let mut sample_paths = Vec::new();
    let mut all_samples: Vec<Vec<f64>> = Vec::new();
    for record in &records {
        let rows = record.samples.len();
        let mut flat = Vec::with_capacity(rows * problem.dim);
        for s in &record.samples {
            flat.extend_from_slice(s.as_slice());
            all_samples.push(s.as_slice().to_vec());
        }
        let array = Array::from_f64(vec![rows, problem.dim], flat)?;
        let path = out_dir.join(format!("samples_chain{}.npy", record.chain_index));
        npy::write_array(&path, &array)?;
        sample_paths.push(path);
    }

    let rho_trace = records[0].rho_trace.clone();
    npy::write_array(
        &out_dir.join("rho_trace.npy"),
        &Array::from_f64(vec![rho_trace.len()], rho_trace.clone())?,
    )?;

    // Metrics on the pooled sample set.
    let peak = config.io.peak.unwrap_or(1.0);
    let mut report = match (&problem.truth, all_samples.len()) {
        (Some(truth), n) if n >= 2 => {
            let mut r = coverage_stats(&all_samples, truth)?;
            r.psnr_db = psnr(&r.mean, truth, peak)?;
            r
        }
        _ => {
            // Without a truth image (or with a single sample) only the mean
            // and data mismatch are reported.
            let n = all_samples.len().max(1) as f64;
            let mut mean = vec![0.0; problem.dim];
            for s in &all_samples {
                for (m, &x) in mean.iter_mut().zip(s) {
                    *m += x;
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            MetricsReport {
                psnr_db: None,
                mean,
                std: vec![],
                z_score: vec![],
                outlier_fraction: 0.0,
                data_mismatch: None,
            }
        }
    };
    report.data_mismatch = Some(
        problem
            .potential
            .value(&DVector::from_vec(report.mean.clone())),
    );
    npy::write_array(
        &out_dir.join("mean.npy"),
        &Array::from_f64(vec![problem.dim], report.mean.clone())?,
    )?;
    if !report.std.is_empty() {
        npy::write_array(
            &out_dir.join("std.npy"),
            &Array::from_f64(vec![problem.dim], report.std.clone())?,
        )?;
    }
    let metrics_path = out_dir.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&report)?)?;

    let manifest = Manifest {
        config_digest: sha256_hex(canonical_config.as_bytes()),
        seed: config.sampler.seed,
        chain_seeds: (0..config.sampler.chains)
            .map(|i| chain_stream_seed(config.sampler.seed, i))
            .collect(),
        schedule: ScheduleInfo {
            family: config.schedule.family.clone(),
            sigma_min: config.schedule.sigma_min,
            sigma_max: config.schedule.sigma_max,
            steps: config.schedule.steps,
            solver: config.schedule.solver.clone(),
            rho0: config.coupling.rho0,
            rho_min: config.coupling.rho_min,
            alpha: config.coupling.alpha,
        },
        rho_trace,
        files: problem.files,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        peak,
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    Ok(RunOutput {
        manifest_path,
        metrics_path,
        sample_paths,
    })
}

/// Recompute a metrics report from stored per-chain sample arrays.
pub fn recompute_metrics(run_dir: &Path, truth_path: &Path, peak: f64) -> Result<MetricsReport> {
    let truth = npy::read_array(truth_path)?.to_f64();
    let mut chain_files: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .with_context(|| format!("failed to list {}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("samples_chain") && n.ends_with(".npy"))
                .unwrap_or(false)
        })
        .collect();
    chain_files.sort();
    if chain_files.is_empty() {
        bail!("no samples_chain*.npy files found in {}", run_dir.display());
    }
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for path in &chain_files {
        let array = npy::read_array(path)?;
        if array.shape.len() != 2 || array.shape[1] != truth.len() {
            bail!(
                "{}: expected shape (samples, {}), got {:?}",
                path.display(),
                truth.len(),
                array.shape
            );
        }
        let data = array.to_f64();
        for row in data.chunks(truth.len()) {
            samples.push(row.to_vec());
        }
    }
    let mut report = coverage_stats(&samples, &truth)?;
    report.psnr_db = psnr(&report.mean, &truth, peak)?;
    Ok(report)
}
