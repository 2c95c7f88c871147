//! Image-quality metrics: PSNR, global SSIM, CRC, background STD, bias, CNR.

use crate::error::{Error, Result};
use crate::image::Image2D;

/// Peak signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    /// Reconstruction equals the truth.
    Identical,
}

impl Psnr {
    /// dB value, `+∞` for identical images.
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Identical => f64::INFINITY,
        }
    }
}

fn check_shapes(a: &Image2D, b: &Image2D) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "images are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Root-mean-square difference.
pub fn rmse(recon: &Image2D, truth: &Image2D) -> Result<f64> {
    check_shapes(recon, truth)?;
    let n = recon.values().len() as f64;
    let sq: f64 = recon
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((sq / n).sqrt())
}

/// `20·log10(max(truth)/RMSE)`.
pub fn psnr(recon: &Image2D, truth: &Image2D) -> Result<Psnr> {
    let peak = truth.max();
    if !(peak > 0.0) {
        return Err(Error::InvalidMetric(
            "truth maximum must be positive".into(),
        ));
    }
    let e = rmse(recon, truth)?;
    if e == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Finite(20.0 * (peak / e).log10()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Whole-image SSIM with `C₁ = 0.01·max(a)` and `C₂ = 0.03·max(a)`.
pub fn ssim(a: &Image2D, b: &Image2D) -> Result<f64> {
    check_shapes(a, b)?;
    let peak = a.max();
    if !(peak > 0.0) {
        return Err(Error::InvalidMetric(
            "reference image maximum must be positive".into(),
        ));
    }
    let (c1, c2) = (0.01 * peak, 0.03 * peak);
    let (av, bv) = (a.values(), b.values());
    let (ma, mb) = (mean(av), mean(bv));
    let n = av.len() as f64;
    let var_a = av.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let var_b = bv.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = av
        .iter()
        .zip(bv)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    Ok((2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2)))
}

/// Target and background regions with their true values.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSpec {
    pub targets: Vec<Vec<bool>>,
    pub backgrounds: Vec<Vec<bool>>,
    pub a_true: f64,
    pub b_true: f64,
}

impl RoiSpec {
    pub fn target_union(&self) -> Vec<bool> {
        union(&self.targets)
    }

    pub fn background_union(&self) -> Vec<bool> {
        union(&self.backgrounds)
    }
}

fn union(masks: &[Vec<bool>]) -> Vec<bool> {
    let len = masks.first().map_or(0, Vec::len);
    (0..len).map(|j| masks.iter().any(|m| m[j])).collect()
}

/// Mean of the image over a mask.
pub fn masked_mean(img: &Image2D, mask: &[bool]) -> Result<f64> {
    if mask.len() != img.values().len() {
        return Err(Error::Dimension(format!(
            "mask has {} pixels, image {}",
            mask.len(),
            img.values().len()
        )));
    }
    let (sum, count) = img
        .values()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count == 0 {
        return Err(Error::InvalidMetric("empty region mask".into()));
    }
    Ok(sum / count as f64)
}

fn masked_std(img: &Image2D, mask: &[bool]) -> Result<f64> {
    let m = masked_mean(img, mask)?;
    let (sq, count) = img
        .values()
        .iter()
        .zip(mask)
        .filter(|(_, &k)| k)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + (v - m).powi(2), c + 1));
    Ok((sq / count as f64).sqrt())
}

fn check_realizations(recons: &[Image2D]) -> Result<()> {
    if recons.len() < 2 {
        return Err(Error::InvalidMetric(format!(
            "need at least 2 realizations, got {}",
            recons.len()
        )));
    }
    Ok(())
}

/// Contrast recovery coefficient averaged over realizations.
pub fn crc(recons: &[Image2D], rois: &RoiSpec) -> Result<f64> {
    check_realizations(recons)?;
    if rois.a_true == rois.b_true || rois.b_true == 0.0 {
        return Err(Error::InvalidMetric("true contrast is undefined".into()));
    }
    let (target, background) = (rois.target_union(), rois.background_union());
    let true_contrast = rois.a_true / rois.b_true - 1.0;
    let mut total = 0.0;
    for r in recons {
        let a = masked_mean(r, &target)?;
        let b = masked_mean(r, &background)?;
        if b == 0.0 {
            return Err(Error::InvalidMetric("background mean is zero".into()));
        }
        total += (a / b - 1.0) / true_contrast;
    }
    Ok(total / recons.len() as f64)
}

/// Mean over background ROIs of the across-realization coefficient of variation.
pub fn background_std(recons: &[Image2D], rois: &RoiSpec) -> Result<f64> {
    check_realizations(recons)?;
    if rois.backgrounds.is_empty() {
        return Err(Error::InvalidMetric("no background ROIs".into()));
    }
    let s = recons.len() as f64;
    let mut total = 0.0;
    for mask in &rois.backgrounds {
        let values = recons
            .iter()
            .map(|r| masked_mean(r, mask))
            .collect::<Result<Vec<_>>>()?;
        let m = mean(&values);
        if m == 0.0 {
            return Err(Error::InvalidMetric("background ROI mean is zero".into()));
        }
        let std = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s - 1.0)).sqrt();
        total += std / m;
    }
    Ok(total / rois.backgrounds.len() as f64)
}

/// `(Ā − B)/B` for the across-realization mean `Ā` of the target mean.
pub fn bias(recons: &[Image2D], target: &[bool], truth_value: f64) -> Result<f64> {
    if recons.is_empty() {
        return Err(Error::InvalidMetric("no realizations".into()));
    }
    if truth_value == 0.0 {
        return Err(Error::InvalidMetric("true value is zero".into()));
    }
    let values = recons
        .iter()
        .map(|r| masked_mean(r, target))
        .collect::<Result<Vec<_>>>()?;
    Ok((mean(&values) - truth_value) / truth_value)
}

/// `(mean_ROI − mean_bg)/std_bg` with the population standard deviation.
pub fn cnr(recon: &Image2D, roi: &[bool], background: &[bool]) -> Result<f64> {
    let std = masked_std(recon, background)?;
    if std == 0.0 {
        return Err(Error::InvalidMetric(
            "background standard deviation is zero".into(),
        ));
    }
    Ok((masked_mean(recon, roi)? - masked_mean(recon, background)?) / std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Grid;

    fn img(values: Vec<f64>) -> Image2D {
        let n = values.len();
        Image2D::from_values(Grid::new(n, 1, 1.0).unwrap(), values).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let truth = img(vec![0.0, 0.5, 1.0, 0.25]);
        assert_eq!(psnr(&truth, &truth).unwrap(), Psnr::Identical);
        assert_eq!(Psnr::Identical.value(), f64::INFINITY);
        let shifted = truth.map(|v| v + 0.1);
        let p = psnr(&shifted, &truth).unwrap().value();
        assert!((p - 20.0).abs() < 1e-12, "{p}");
        let doubled = truth.map(|v| v + 0.2);
        let q = psnr(&doubled, &truth).unwrap().value();
        assert!((p - q - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!(psnr(&truth, &img(vec![0.0; 4])).is_err());
    }

    #[test]
    fn ssim_cases() {
        let a = img(vec![1.0, -1.0, 2.0, -2.0]);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg = a.map(|v| -v);
        let s = ssim(&a, &neg).unwrap();
        // means 0, var 2.5 each, covariance -2.5, C1 = 0.02, C2 = 0.06
        let expected = (0.02 * (-5.0 + 0.06)) / (0.02 * (5.0 + 0.06));
        assert!((s - expected).abs() < 1e-15);
        assert!(s < 0.0);
        let c = img(vec![3.0; 4]);
        assert_eq!(ssim(&c, &c).unwrap(), 1.0);
        assert!(ssim(&img(vec![0.0; 4]), &c).is_err());
    }

    fn rois() -> RoiSpec {
        RoiSpec {
            targets: vec![vec![true, false, false, false]],
            backgrounds: vec![vec![false, true, true, false]],
            a_true: 1.5,
            b_true: 1.0,
        }
    }

    #[test]
    fn crc_cases() {
        let truth = img(vec![1.5, 1.0, 1.0, 0.0]);
        assert!((crc(&[truth.clone(), truth.clone()], &rois()).unwrap() - 1.0).abs() < 1e-15);
        let half = img(vec![1.25, 1.0, 1.0, 0.0]);
        assert!((crc(&vec![half.clone(); 5], &rois()).unwrap() - 0.5).abs() < 1e-12);
        assert!(crc(&[half.clone()], &rois()).is_err());
        let flat = RoiSpec {
            a_true: 1.0,
            ..rois()
        };
        assert!(crc(&[half.clone(), half], &flat).is_err());
    }

    #[test]
    fn background_std_cases() {
        let a = img(vec![0.0, 1.0, 1.0, 0.0]);
        let b = img(vec![0.0, 3.0, 3.0, 0.0]);
        let v = background_std(&[a.clone(), b.clone()], &rois()).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            background_std(&[a.clone(), a.clone()], &rois()).unwrap(),
            0.0
        );
        let w = background_std(&[a.scaled(5.0), b.scaled(5.0)], &rois()).unwrap();
        assert!((v - w).abs() < 1e-15);
    }

    #[test]
    fn bias_cases() {
        let mask = [true, false, false, false];
        let r = img(vec![1.2, 0.0, 0.0, 0.0]);
        assert!((bias(&[r.clone(), r], &mask, 1.0).unwrap() - 0.2).abs() < 1e-12);
        let exact = img(vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(bias(&[exact.clone()], &mask, 2.0).unwrap(), 0.0);
        assert!(bias(&[exact.clone()], &mask, 3.0).unwrap() < 0.0);
        assert!(bias(&[exact], &mask, 0.0).is_err());
    }

    #[test]
    fn cnr_cases() {
        let roi = [true, false, false, false];
        let bg = [false, true, true, false];
        let r = img(vec![5.0, 2.5, 3.5, 0.0]);
        assert!((cnr(&r, &roi, &bg).unwrap() - 4.0).abs() < 1e-12);
        let shifted = r.map(|v| v + 10.0);
        assert!((cnr(&shifted, &roi, &bg).unwrap() - 4.0).abs() < 1e-12);
        let same = img(vec![3.0, 2.5, 3.5, 0.0]);
        assert_eq!(cnr(&same, &roi, &bg).unwrap(), 0.0);
        assert!(cnr(&img(vec![1.0, 2.0, 2.0, 0.0]), &roi, &bg).is_err());
    }
}
