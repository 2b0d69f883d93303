//! Image quality metrics for detector-plane images: MAE, NRMSE, PSNR and
//! single-scale SSIM. All accumulation is in f64.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::projection::Projection;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// SSIM and PSNR assume unit-normalized images.
pub const DATA_RANGE: f64 = 1.0;

fn check_same_shape(a: &Projection, b: &Projection) -> Result<()> {
    if a.rows != b.rows || a.cols != b.cols || a.channels != b.channels {
        return Err(Error::ShapeMismatch(format!(
            "projections are {}x{}x{} vs {}x{}x{}",
            a.channels, a.rows, a.cols, b.channels, b.rows, b.cols
        )));
    }
    Ok(())
}

/// Mean absolute error over all channels.
pub fn mae(pred: &Projection, reference: &Projection) -> Result<f64> {
    check_same_shape(pred, reference)?;
    let n = pred.data.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&reference.data)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / n)
}

fn mse(pred: &Projection, reference: &Projection) -> f64 {
    let n = pred.data.len() as f64;
    pred.data
        .iter()
        .zip(&reference.data)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / n
}

/// Root-mean-square error normalized by the reference dynamic range. A
/// constant reference has no range to normalize by and is rejected.
pub fn nrmse(pred: &Projection, reference: &Projection) -> Result<f64> {
    check_same_shape(pred, reference)?;
    let (lo, hi) = reference.min_max();
    let range = (hi - lo) as f64;
    if range <= 0.0 {
        return Err(Error::InvalidData(
            "reference projection has zero dynamic range, NRMSE is undefined".into(),
        ));
    }
    Ok(mse(pred, reference).sqrt() / range)
}

/// Peak signal-to-noise ratio in dB for the given data range. Identical
/// images have zero error and return positive infinity.
pub fn psnr(pred: &Projection, reference: &Projection, data_range: f64) -> Result<f64> {
    check_same_shape(pred, reference)?;
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "data range must be positive and finite, got {data_range}"
        )));
    }
    let m = mse(pred, reference);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-0.5 * ((i as f64 - c) / SSIM_SIGMA).powi(2)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable valid-mode convolution of an `rows x cols` map with the SSIM
/// window, horizontal then vertical.
fn window_filter(img: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out_cols = cols - SSIM_WINDOW + 1;
    let out_rows = rows - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0f64; rows * out_cols];
    for r in 0..rows {
        for c in 0..out_cols {
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                acc += wj * img[r * cols + c + j];
            }
            horiz[r * out_cols + c] = acc;
        }
    }
    let mut out = vec![0.0f64; out_rows * out_cols];
    for r in 0..out_rows {
        for c in 0..out_cols {
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                acc += wj * horiz[(r + j) * out_cols + c];
            }
            out[r * out_cols + c] = acc;
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 and unit data range, over valid window positions,
/// averaged across channels. Images must be at least 11x11.
pub fn ssim(pred: &Projection, reference: &Projection) -> Result<f64> {
    check_same_shape(pred, reference)?;
    if pred.rows < SSIM_WINDOW || pred.cols < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            pred.rows, pred.cols
        )));
    }
    let w = gaussian_window();
    let c1 = (SSIM_K1 * DATA_RANGE) * (SSIM_K1 * DATA_RANGE);
    let c2 = (SSIM_K2 * DATA_RANGE) * (SSIM_K2 * DATA_RANGE);
    let (rows, cols) = (pred.rows, pred.cols);

    let mut channel_means = Vec::with_capacity(pred.channels);
    for ch in 0..pred.channels {
        let a: Vec<f64> = pred.channel(ch).iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = reference.channel(ch).iter().map(|&v| v as f64).collect();
        let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();

        let mu_a = window_filter(&a, rows, cols, &w);
        let mu_b = window_filter(&b, rows, cols, &w);
        let m_aa = window_filter(&aa, rows, cols, &w);
        let m_bb = window_filter(&bb, rows, cols, &w);
        let m_ab = window_filter(&ab, rows, cols, &w);

        let mut sum = 0.0f64;
        for i in 0..mu_a.len() {
            let va = m_aa[i] - mu_a[i] * mu_a[i];
            let vb = m_bb[i] - mu_b[i] * mu_b[i];
            let cab = m_ab[i] - mu_a[i] * mu_b[i];
            let num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cab + c2);
            let den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
            sum += num / den;
        }
        channel_means.push(sum / mu_a.len() as f64);
    }
    Ok(channel_means.iter().sum::<f64>() / channel_means.len() as f64)
}

/// All four metrics of a prediction against its reference. PSNR uses the
/// unit data range and serializes infinity as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub nrmse: f64,
    #[serde(with = "psnr_serde")]
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(pred: &Projection, reference: &Projection) -> Result<Self> {
        Ok(MetricReport {
            mae: mae(pred, reference)?,
            nrmse: nrmse(pred, reference)?,
            psnr: psnr(pred, reference, DATA_RANGE)?,
            ssim: ssim(pred, reference)?,
        })
    }
}

mod psnr_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| D::Error::custom("psnr is not an f64")),
            serde_json::Value::String(s) if s == "inf" => Ok(f64::INFINITY),
            other => Err(D::Error::custom(format!("unexpected psnr value {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(rows: usize, cols: usize, v: f32) -> Projection {
        Projection::new(rows, cols, 1, 0.0, vec![v; rows * cols]).unwrap()
    }

    fn noisy(rows: usize, cols: usize, seed: u64) -> Projection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| rng.random_range(0.0f32..1.0))
            .collect();
        Projection::new(rows, cols, 1, 0.0, data).unwrap()
    }

    #[test]
    fn mae_oracle() {
        let a = Projection::new(1, 4, 1, 0.0, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let b = Projection::new(1, 4, 1, 0.0, vec![1.0, 1.0, 0.0, 0.25]).unwrap();
        assert_eq!(mae(&a, &b).unwrap(), (1.0 + 0.0 + 0.5 + 0.0) / 4.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn nrmse_oracle_and_degenerate_reference() {
        let a = Projection::new(1, 3, 1, 0.0, vec![1.0, 2.0, 3.0]).unwrap();
        let b = Projection::new(1, 3, 1, 0.0, vec![2.0, 2.0, 4.0]).unwrap();
        // MSE = (1 + 0 + 1) / 3; reference range = 2.
        let expect = (2.0f64 / 3.0).sqrt() / 2.0;
        assert!((nrmse(&a, &b).unwrap() - expect).abs() < 1e-15);

        let c = flat(1, 3, 5.0);
        assert!(matches!(nrmse(&a, &c), Err(Error::InvalidData(_))));
    }

    #[test]
    fn psnr_golden_value_and_infinity() {
        // Uniform error of 0.1 over a unit range: PSNR = 20 dB.
        let a = flat(8, 8, 0.1);
        let b = flat(8, 8, 0.0);
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 20.0).abs() < 1e-6, "psnr {v}");

        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        // Doubling the range adds 20*log10(2) dB.
        let v2 = psnr(&a, &b, 2.0).unwrap();
        assert!((v2 - v - 20.0 * 2.0f64.log10()).abs() < 1e-9);
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn ssim_of_identical_images_is_exactly_one() {
        let p = noisy(16, 20, 7);
        assert_eq!(ssim(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_images_match_closed_form() {
        // For constants the variance terms vanish and SSIM reduces to
        // (2ab + C1) / (a^2 + b^2 + C1), evaluated on the f32-rounded values.
        let a = flat(12, 12, 0.4);
        let b = flat(12, 12, 0.6);
        let (av, bv) = (0.4f32 as f64, 0.6f32 as f64);
        let c1 = 1e-4;
        let expect = (2.0 * av * bv + c1) / (av * av + bv * bv + c1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn ssim_is_symmetric_and_penalizes_noise() {
        let a = noisy(16, 16, 1);
        let b = noisy(16, 16, 2);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &b).unwrap() < 1.0);
        assert!(ssim(&a, &b).unwrap() < ssim(&a, &a).unwrap());
    }

    #[test]
    fn ssim_needs_a_full_window() {
        let a = flat(10, 12, 0.5);
        let b = flat(10, 12, 0.5);
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn report_computes_and_serializes_infinity() {
        let p = noisy(16, 16, 3);
        let r = MetricReport::compute(&p, &p).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.nrmse, 0.0);
        assert_eq!(r.psnr, f64::INFINITY);
        assert_eq!(r.ssim, 1.0);

        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"psnr\":\"inf\""), "{text}");
        let back: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);

        let finite = MetricReport {
            mae: 0.1,
            nrmse: 0.2,
            psnr: 20.0,
            ssim: 0.9,
        };
        let text = serde_json::to_string(&finite).unwrap();
        assert!(text.contains("\"psnr\":20.0"), "{text}");
        assert_eq!(serde_json::from_str::<MetricReport>(&text).unwrap(), finite);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let a = flat(12, 12, 0.5);
        let b = flat(12, 13, 0.5);
        assert!(mae(&a, &b).is_err());
        assert!(nrmse(&a, &b).is_err());
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn metric_ranges_hold(seed_a in 0u64..200, seed_b in 200u64..400) {
            let a = noisy(12, 12, seed_a);
            let b = noisy(12, 12, seed_b);
            prop_assert!(mae(&a, &b).unwrap() >= 0.0);
            prop_assert!(nrmse(&a, &b).unwrap() >= 0.0);
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            let p = psnr(&a, &b, 1.0).unwrap();
            prop_assert!(p.is_finite());
        }
    }
}
