use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use listrecon::io::{read_image_file, read_lmev_file, write_image_file, write_pgm_file};
use listrecon::metrics::{psnr, ssim};
use listrecon::recon::{poisson_loglik, reconstruct, Algorithm, ReconConfig, ReconProblem};
use listrecon::{EventList, Image2D};
use listrecon_lpd::checkpoint::read_checkpoint_for;
use listrecon_lpd::toy::TRUTH_SCALE;
use listrecon_lpd::{lmpd_forward, Mode, NetOperator};

use crate::config::{missing, Config};
use crate::error::CliError;
use crate::sidecar::{hash_hex, path_for, Sidecar};

pub struct Inputs<'a> {
    pub events: &'a Path,
    pub algorithm: Option<&'a str>,
    pub checkpoint: Option<&'a Path>,
    pub truth: Option<&'a Path>,
    pub seed: Option<u64>,
}

/// Events and sidecar, with both hashes checked against the configuration.
pub fn load_events(path: &Path, expected_hash: u64) -> Result<(EventList, Sidecar), CliError> {
    let (header, events) = read_lmev_file(path).map_err(|e| CliError::from(e).at(path))?;
    if header.geometry_hash != expected_hash {
        return Err(CliError::Hash(format!(
            "{}: geometry hash {} but the configuration gives {}",
            path.display(),
            hash_hex(header.geometry_hash),
            hash_hex(expected_hash)
        )));
    }
    let side_path = path_for(path);
    let sidecar = Sidecar::read(&side_path)?;
    sidecar.check_hash(expected_hash, &side_path)?;
    Ok((events, sidecar))
}

enum Method {
    Classical(Algorithm),
    Lmpd,
}

fn parse_method(name: &str) -> Result<Method, CliError> {
    if name == "lmpd" {
        return Ok(Method::Lmpd);
    }
    name.parse()
        .map(Method::Classical)
        .map_err(|_| CliError::Config(format!("unknown algorithm '{name}'")))
}

pub fn run(config: &Config, inputs: &Inputs, out: &Path) -> Result<(), CliError> {
    let section = config.recon()?;
    let method = parse_method(inputs.algorithm.unwrap_or(&section.algorithm))?;
    let projector = config.projector()?;
    let (events, sidecar) = load_events(inputs.events, config.geometry_hash()?)?;
    let side_path = path_for(inputs.events);
    let sens_path = sidecar.resolve(&side_path, &sidecar.sensitivity);
    let sensitivity = read_image_file(&sens_path).map_err(|e| CliError::from(e).at(&sens_path))?;
    let truth = match inputs.truth {
        Some(p) => Some(read_image_file(p).map_err(|e| CliError::from(e).at(p))?),
        None => None,
    };
    let problem = ReconProblem::new(
        &projector,
        &events,
        &sensitivity,
        sidecar.contamination_mean,
        sidecar.n_bins_total,
    )?;

    // One image per row of the CSV.
    let mut iterates: Vec<(usize, Image2D, f64)> = Vec::new();
    let image = match method {
        Method::Classical(algorithm) => {
            let iterations = section
                .iterations
                .ok_or_else(|| missing("recon.iterations"))?;
            let mut cfg = ReconConfig::new(algorithm, iterations, section.subsets.unwrap_or(1))
                .with_seed(config.seed(inputs.seed)?);
            if let Some(b) = section.beta {
                cfg = cfg.with_beta(b);
            }
            if let Some(g) = section.gamma {
                cfg = cfg.with_gamma(g);
            }
            let mut images = Vec::new();
            let mut keep = |_: usize, img: &Image2D| {
                if truth.is_some() {
                    images.push(img.clone());
                }
            };
            let result = reconstruct(&problem, &cfg, Some(&mut keep))?;
            for (k, rec) in result.history.iter().enumerate() {
                let img = images
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| Image2D::zeros(projector.grid()));
                iterates.push((rec.iteration, img, rec.objective));
            }
            result.image
        }
        Method::Lmpd => {
            let path = inputs
                .checkpoint
                .or(section.checkpoint.as_deref())
                .ok_or_else(|| {
                    CliError::Config(
                        "lmpd requires a checkpoint: missing key `recon.checkpoint`".into(),
                    )
                })?;
            let file =
                File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let params = read_checkpoint_for(&mut BufReader::new(file), &config.network())
                .map_err(|e| CliError::from(e).at(path))?;
            let op = NetOperator::new(&projector, &events)?;
            let fwd = lmpd_forward(&params, &op, Mode::Eval, false)?;
            for (k, f) in fwd.phase_outputs.iter().enumerate() {
                let img = f.scaled(1.0 / TRUTH_SCALE);
                let objective = poisson_loglik(&problem, &img)
                    .map(|l| -l)
                    .unwrap_or(f64::INFINITY);
                iterates.push((k + 1, img, objective));
            }
            fwd.output.scaled(1.0 / TRUTH_SCALE)
        }
    };

    let mut csv = String::from("iteration,objective");
    if truth.is_some() {
        csv.push_str(",psnr,ssim");
    }
    csv.push('\n');
    for (k, img, objective) in &iterates {
        write!(csv, "{k},{objective:e}").expect("string write");
        if let Some(t) = &truth {
            write!(csv, ",{},{}", psnr(img, t)?.value(), ssim(img, t)?).expect("string write");
        }
        csv.push('\n');
    }
    std::fs::write(out.join("recon.csv"), csv)?;
    write_image_file(&out.join("recon.img"), &image)?;
    write_pgm_file(&out.join("recon.pgm"), &image)?;
    Ok(())
}
