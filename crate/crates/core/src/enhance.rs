//! Image restoration from refined shading: `I_out = I / s`.

use crate::error::{Error, Result};
use crate::imageio::{ensure_same_dims, ImagePlane, ImageRGB};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    pub s_min: f64,
    /// Percentile of face shading that is mapped to 1.
    pub norm_percentile: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            s_min: 0.01,
            norm_percentile: 99.0,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.norm_percentile > 0.0 && self.norm_percentile <= 100.0) {
            return Err(Error::InvalidParameter(format!(
                "normalization percentile {} outside (0, 100]",
                self.norm_percentile
            )));
        }
        if !(self.s_min > 0.0 && self.s_min < 1.0) {
            return Err(Error::InvalidParameter(format!("s_min {}", self.s_min)));
        }
        Ok(())
    }
}

/// Linear-interpolated percentile of a sample (`p` in `[0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

/// Divides `s` by its `p`-th percentile over `mask`, floored at `s_min`.
pub fn normalize_shading(s: &ImagePlane, mask: &ImagePlane, p: f64, s_min: f64) -> Result<ImagePlane> {
    ensure_same_dims(s.dims(), mask.dims())?;
    let inside: Vec<f64> = s
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m > 0.5)
        .map(|(&v, _)| v)
        .collect();
    let q = percentile(&inside, p).ok_or(Error::EmptyMask)?.max(s_min);
    Ok(s.map(|v| v / q))
}

/// `clamp(c / s, 0, 1)` per channel.
pub fn apply_shading(img: &ImageRGB, s: &ImagePlane, s_min: f64) -> Result<ImageRGB> {
    ensure_same_dims(img.dims(), s.dims())?;
    debug_assert!(s.as_slice().iter().all(|&v| v >= s_min));
    let divide = |c: &ImagePlane| c.zip_map(s, |v, sv| (v / sv).clamp(0.0, 1.0));
    ImageRGB::new(divide(img.r())?, divide(img.g())?, divide(img.b())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_normalizes_to_one() {
        let s = ImagePlane::filled(10, 10, 0.4);
        let m = ImagePlane::filled(10, 10, 1.0);
        let n = normalize_shading(&s, &m, 99.0, 0.05).unwrap();
        assert!(n.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn max_percentile_of_unit_peak_is_identity() {
        let s = ImagePlane::from_fn(10, 2, |_, y| if y == 0 { 0.5 } else { 1.0 });
        let m = ImagePlane::filled(10, 2, 1.0);
        assert_eq!(normalize_shading(&s, &m, 100.0, 0.05).unwrap(), s);
    }

    #[test]
    fn median_of_ramp_against_sorted_oracle() {
        let vals: Vec<f64> = (0..100).rev().map(|i| 0.1 + 0.9 * i as f64 / 99.0).collect();
        let s = ImagePlane::new(10, 10, vals.clone()).unwrap();
        let m = ImagePlane::filled(10, 10, 1.0);
        let mut sorted = vals;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // rank 49.5 sits halfway between the 50th and 51st order statistics
        let q = 0.5 * (sorted[49] + sorted[50]);
        let n = normalize_shading(&s, &m, 50.0, 0.05).unwrap();
        for (a, b) in n.as_slice().iter().zip(s.as_slice()) {
            assert!((a - b / q).abs() < 1e-14);
        }
    }

    #[test]
    fn percentile_uses_mask_and_floor() {
        let s = ImagePlane::new(4, 1, vec![0.01, 0.02, 9.0, 9.0]).unwrap();
        let m = ImagePlane::new(4, 1, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let n = normalize_shading(&s, &m, 100.0, 0.05).unwrap();
        assert!((n.get(2, 0) - 9.0 / 0.05).abs() < 1e-9);
        let empty = ImagePlane::filled(4, 1, 0.0);
        assert!(matches!(normalize_shading(&s, &empty, 50.0, 0.05), Err(Error::EmptyMask)));
    }

    #[test]
    fn shading_division() {
        let gray = |v| ImageRGB::from_gray(&ImagePlane::filled(2, 2, v));
        let img = gray(0.25);
        assert_eq!(apply_shading(&img, &ImagePlane::filled(2, 2, 1.0), 0.05).unwrap(), img);
        let half = apply_shading(&img, &ImagePlane::filled(2, 2, 0.5), 0.05).unwrap();
        assert_eq!(half, gray(0.5));
        let clipped = apply_shading(&gray(0.9), &ImagePlane::filled(2, 2, 0.5), 0.05).unwrap();
        assert_eq!(clipped, gray(1.0));
    }

    #[test]
    fn rejects_bad_percentile() {
        for p in [0.0, -5.0, 100.5, f64::NAN] {
            let e = EnhanceParams { norm_percentile: p, ..Default::default() };
            assert!(e.validate().is_err());
        }
    }
}
