//! Quality, robustness, and localization metrics.

use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::marks::BitMatrix;

/// PSNR/SSIM/MSE of a watermarked image against its cover. `psnr` is `None`
/// for identical inputs (infinite ratio).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr: Option<f64>,
    pub ssim: f64,
}

/// BER/NC of an extracted binary mark against the original.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessReport {
    pub ber: f64,
    pub nc: f64,
}

fn check_same_images(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "images {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared error over all samples (all channels jointly for color).
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_same_images(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn mse_planes(a: &Plane, b: &Plane) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("plane sizes differ".into()));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// 8-bit PSNR in dB; `None` when the images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<Option<f64>> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(None);
    }
    Ok(Some(10.0 * (255.0 * 255.0 / e).log10()))
}

/// Single-scale SSIM with the standard 11x11 Gaussian window (sigma 1.5),
/// C1 = (0.01*255)^2, C2 = (0.03*255)^2, averaged over the valid map.
/// Color images are compared on their luminance plane.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_images(a, b)?;
    let pa = crate::image::luminance(a)?;
    let pb = crate::image::luminance(b)?;
    ssim_planes(&pa, &pb)
}

pub fn ssim_planes(a: &Plane, b: &Plane) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("plane sizes differ".into()));
    }
    const WIN: usize = 11;
    if a.rows < WIN || a.cols < WIN {
        return Err(Error::BadDimensions(format!(
            "ssim needs at least {WIN}x{WIN}, got {}x{}",
            a.rows, a.cols
        )));
    }
    let window = gaussian_window(WIN, 1.5);
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(a.rows - WIN) {
        for c0 in 0..=(a.cols - WIN) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for r in 0..WIN {
                for c in 0..WIN {
                    let w = window[r * WIN + c];
                    mu_a += w * a.at(r0 + r, c0 + c);
                    mu_b += w * b.at(r0 + r, c0 + c);
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for r in 0..WIN {
                for c in 0..WIN {
                    let w = window[r * WIN + c];
                    let da = a.at(r0 + r, c0 + c) - mu_a;
                    let db = b.at(r0 + r, c0 + c) - mu_b;
                    var_a += w * da * da;
                    var_b += w * db * db;
                    cov += w * da * db;
                }
            }
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn gaussian_window(side: usize, sigma: f64) -> Vec<f64> {
    let half = (side / 2) as f64;
    let mut w = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let dr = r as f64 - half;
            let dc = c as f64 - half;
            w.push((-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

fn check_same_marks(a: &BitMatrix, b: &BitMatrix) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "marks {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// Fraction of mismatched bits.
pub fn ber(a: &BitMatrix, b: &BitMatrix) -> Result<f64> {
    check_same_marks(a, b)?;
    let wrong: usize = a
        .bits
        .iter()
        .zip(&b.bits)
        .map(|(x, y)| (x ^ y) as usize)
        .sum();
    Ok(wrong as f64 / a.len() as f64)
}

/// Normalized cross-correlation of binary marks; 0/0 (two all-zero marks)
/// is defined as 1.
pub fn nc(a: &BitMatrix, b: &BitMatrix) -> Result<f64> {
    check_same_marks(a, b)?;
    let dot: usize = a
        .bits
        .iter()
        .zip(&b.bits)
        .map(|(x, y)| (x & y) as usize)
        .sum();
    let ea: usize = a.bits.iter().map(|&v| v as usize).sum();
    let eb: usize = b.bits.iter().map(|&v| v as usize).sum();
    if ea == 0 && eb == 0 {
        return Ok(1.0);
    }
    if ea == 0 || eb == 0 {
        return Ok(0.0);
    }
    Ok(dot as f64 / ((ea as f64) * (eb as f64)).sqrt())
}

pub fn robustness(original: &BitMatrix, extracted: &BitMatrix) -> Result<RobustnessReport> {
    Ok(RobustnessReport {
        ber: ber(original, extracted)?,
        nc: nc(original, extracted)?,
    })
}

/// Block-level localization scores against a ground-truth tamper mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationScores {
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
}

pub fn localization_scores(pred: &BitMatrix, truth: &BitMatrix) -> Result<LocalizationScores> {
    check_same_marks(pred, truth)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.bits.iter().zip(&truth.bits) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    let tpr = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let fpr = if fp + tn == 0 {
        0.0
    } else {
        fp as f64 / (fp + tn) as f64
    };
    Ok(LocalizationScores {
        tpr,
        fpr,
        accuracy: (tp + tn) as f64 / pred.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: u8, n: usize) -> Image {
        Image::new(n, n, 1, vec![v; n * n]).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = flat(100, 16);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), None);

        let b = flat(101, 16);
        let p = psnr(&a, &b).unwrap().unwrap();
        assert!((p - 48.1308036).abs() < 1e-6, "one-level difference: {p}");

        let c = flat(255, 16);
        let z = flat(0, 16);
        assert!((psnr(&z, &c).unwrap().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_negative_on_inversion() {
        let img = Image::new(
            16,
            16,
            1,
            (0..256)
                .map(|i| if (i / 16 + i % 16) % 2 == 0 { 28 } else { 228 })
                .collect(),
        )
        .unwrap();
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);

        let neg = Image::new(16, 16, 1, img.data().iter().map(|&v| 255 - v).collect()).unwrap();
        let s = ssim(&img, &neg).unwrap();
        assert!(s < 0.0, "mid-gray symmetric negation should anticorrelate: {s}");
        assert!(ssim(&flat(9, 8), &flat(9, 8)).is_err(), "too small");
    }

    #[test]
    fn ber_nc_conventions() {
        let mut a = BitMatrix::zeros(8, 8);
        for i in 0..a.len() {
            a.bits[i] = (i % 3 == 0) as u8;
        }
        assert_eq!(ber(&a, &a).unwrap(), 0.0);
        assert_eq!(nc(&a, &a).unwrap(), 1.0);

        let comp = BitMatrix {
            rows: 8,
            cols: 8,
            bits: a.bits.iter().map(|b| b ^ 1).collect(),
        };
        assert_eq!(ber(&a, &comp).unwrap(), 1.0);
        assert_eq!(nc(&a, &comp).unwrap(), 0.0);

        let z = BitMatrix::zeros(8, 8);
        assert_eq!(nc(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn ber_complement_sums_to_one() {
        let a = crate::marks::gen_binary_sequence(1, 64, 64);
        let b = crate::marks::gen_binary_sequence(2, 64, 64);
        let e = ber(&a, &b).unwrap();
        let matching = a
            .bits
            .iter()
            .zip(&b.bits)
            .filter(|(x, y)| x == y)
            .count() as f64
            / a.len() as f64;
        assert!((e + matching - 1.0).abs() < 1e-15);
    }

    #[test]
    fn localization_confusion_arithmetic() {
        let mut truth = BitMatrix::zeros(8, 8);
        for r in 0..4 {
            for c in 0..4 {
                truth.set(r, c, 1);
            }
        }
        let perfect = truth.clone();
        let s = localization_scores(&perfect, &truth).unwrap();
        assert_eq!((s.tpr, s.fpr, s.accuracy), (1.0, 0.0, 1.0));

        let all = BitMatrix {
            rows: 8,
            cols: 8,
            bits: vec![1; 64],
        };
        let s = localization_scores(&all, &truth).unwrap();
        assert_eq!((s.tpr, s.fpr, s.accuracy), (1.0, 1.0, 0.25));

        let empty_truth = BitMatrix::zeros(8, 8);
        let s = localization_scores(&BitMatrix::zeros(8, 8), &empty_truth).unwrap();
        assert_eq!(s.tpr, 1.0);
    }
}
