use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use listrecon::io::read_image_file;
use listrecon::metrics::{background_std, bias, cnr, crc, psnr, rmse, ssim, RoiSpec};
use listrecon::simulate::{make_phantom, PhantomKind, RoiKind, HOT_LESION_VALUE};
use listrecon::Image2D;

use crate::config::Config;
use crate::error::CliError;

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Metrics undefined for the given images are reported as NaN.
fn defined(r: listrecon::Result<f64>) -> Result<f64, CliError> {
    match r {
        Err(listrecon::Error::InvalidMetric(msg)) => {
            log::warn!("{msg}");
            Ok(f64::NAN)
        }
        other => Ok(other?),
    }
}

fn read(path: &Path) -> Result<Image2D, CliError> {
    read_image_file(path).map_err(|e| CliError::from(e).at(path))
}

/// Writes `metrics.csv`; lesion metrics need a `[simulate]` section to
/// regenerate the phantom regions, and the realization metrics need at least
/// two images.
pub fn run(
    config: &Config,
    seed: Option<u64>,
    truth: &Path,
    images: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    let truth = read(truth)?;
    let recons = images
        .iter()
        .map(|p| read(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let per_image = |f: &dyn Fn(&Image2D) -> listrecon::Result<f64>| -> Result<f64, CliError> {
        Ok(mean(
            &recons
                .iter()
                .map(|r| defined(f(r)))
                .collect::<Result<Vec<_>, _>>()?,
        ))
    };
    rows.push(("psnr", per_image(&|r| psnr(r, &truth).map(|p| p.value()))?));
    rows.push(("ssim", per_image(&|r| ssim(r, &truth))?));
    rows.push(("rmse", per_image(&|r| rmse(r, &truth))?));

    if let Some(section) = &config.simulate {
        let kind: PhantomKind = section.phantom.parse()?;
        let phantom = make_phantom(kind, truth.grid(), config.seed(seed)?)?;
        let rois = RoiSpec {
            targets: phantom
                .masks(RoiKind::HotLesion)
                .map(|m| m.mask.clone())
                .collect(),
            backgrounds: phantom
                .masks(RoiKind::Background)
                .map(|m| m.mask.clone())
                .collect(),
            a_true: HOT_LESION_VALUE,
            b_true: phantom.white_matter_value,
        };
        if !rois.targets.is_empty() && !rois.backgrounds.is_empty() {
            let (target, background) = (rois.target_union(), rois.background_union());
            rows.push((
                "bias_hot",
                defined(bias(&recons, &target, HOT_LESION_VALUE))?,
            ));
            rows.push(("cnr_hot", per_image(&|r| cnr(r, &target, &background))?));
            if recons.len() >= 2 {
                rows.push(("crc_hot", defined(crc(&recons, &rois))?));
                rows.push(("background_std", defined(background_std(&recons, &rois))?));
            }
        }
    }

    let mut csv = String::from("metric,value\n");
    for (name, value) in rows {
        writeln!(csv, "{name},{value}").expect("string write");
    }
    std::fs::write(out.join("metrics.csv"), csv)?;
    Ok(())
}
