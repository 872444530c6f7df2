//! Under/over-exposure likelihood in CIELAB and the binary region masks.
//!
//! ```text
//!          tanh(delta (127 + aT - (A + C))) + 1
//! L(p) = ----------------------------------------
//!        tanh(delta (127 - aT + (A - C))) + 1 + eps
//! ```
//!
//! with `A = (G_sigma * L*)^2`, `C = a*^2 + b*^2` and `L*` on a 0..255 scale.
//! Pixels with `L(p) >= 1` are underexposed, the rest overexposed.

use crate::error::{Error, Result};
use crate::imageio::{self, ensure_same_dims, ImagePlane, LabPlanes};

/// How the blurred lightness enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LightnessTerm {
    /// `(G * L*)^2`, the form the detector is defined with.
    #[default]
    Squared,
    /// `G * L*` without squaring; puts the class boundary near mid-gray.
    Linear,
}

impl std::str::FromStr for LightnessTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Self::Squared),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::InvalidParameter(format!(
                "exposure lightness term `{s}` (expected squared|linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureParams {
    pub delta: f64,
    pub alpha_t: f64,
    /// Gaussian blur applied to `L*`, in pixels.
    pub sigma: f64,
    pub epsilon: f64,
    pub lightness: LightnessTerm,
}

impl Default for ExposureParams {
    fn default() -> Self {
        Self {
            delta: 1.0 / 60.0,
            alpha_t: 128.0,
            sigma: 3.0,
            epsilon: 1e-6,
            lightness: LightnessTerm::Squared,
        }
    }
}

impl ExposureParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidParameter(format!("exposure {what} = {v}")))
        };
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", self.delta);
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma);
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", self.epsilon);
        }
        if !(self.alpha_t > 0.0 && self.alpha_t < 255.0) {
            return bad("alpha_T", self.alpha_t);
        }
        Ok(())
    }

    /// Likelihood for one pixel given its already-blurred lightness.
    pub fn likelihood_at(&self, blurred_l: f64, a: f64, b: f64) -> f64 {
        let lum = match self.lightness {
            LightnessTerm::Squared => blurred_l * blurred_l,
            LightnessTerm::Linear => blurred_l,
        };
        let chroma = a * a + b * b;
        let num = (self.delta * (127.0 + self.alpha_t - (lum + chroma))).tanh() + 1.0;
        let den = (self.delta * (127.0 - self.alpha_t + (lum - chroma))).tanh() + 1.0 + self.epsilon;
        num / den
    }
}

/// Likelihood plane and the two disjoint masks (1.0 = member).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMasks {
    pub likelihood: ImagePlane,
    pub under: ImagePlane,
    pub over: ImagePlane,
}

impl ExposureMasks {
    pub fn under_count(&self) -> usize {
        self.under.as_slice().iter().filter(|&&v| v > 0.5).count()
    }

    pub fn over_count(&self) -> usize {
        self.over.as_slice().iter().filter(|&&v| v > 0.5).count()
    }

    /// Masks restricted to `region` (another 0/1 plane). The likelihood is kept.
    pub fn intersect(&self, region: &ImagePlane) -> Result<Self> {
        Ok(Self {
            likelihood: self.likelihood.clone(),
            under: self.under.zip_map(region, |m, r| m * r)?,
            over: self.over.zip_map(region, |m, r| m * r)?,
        })
    }
}

pub fn exposure_likelihood(
    l: &ImagePlane,
    a: &ImagePlane,
    b: &ImagePlane,
    params: &ExposureParams,
) -> Result<ImagePlane> {
    params.validate()?;
    ensure_same_dims(l.dims(), a.dims())?;
    ensure_same_dims(l.dims(), b.dims())?;
    let blurred = imageio::gaussian_blur(l, params.sigma)?;
    let (w, h) = l.dims();
    let data = blurred
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .zip(b.as_slice())
        .map(|((&bl, &av), &bv)| params.likelihood_at(bl, av, bv))
        .collect();
    ImagePlane::new(w, h, data)
}

pub fn classify(likelihood: &ImagePlane) -> ExposureMasks {
    let under = likelihood.map(|v| if v >= 1.0 { 1.0 } else { 0.0 });
    let over = under.map(|u| 1.0 - u);
    ExposureMasks {
        likelihood: likelihood.clone(),
        under,
        over,
    }
}

/// Convenience: likelihood and masks straight from Lab planes.
pub fn detect(lab: &LabPlanes, params: &ExposureParams) -> Result<ExposureMasks> {
    Ok(classify(&exposure_likelihood(&lab.l, &lab.a, &lab.b, params)?))
}

/// Maps the unbounded likelihood into `[0, 1)` for viewing; `L = 1` maps to 0.5.
pub fn likelihood_display(likelihood: &ImagePlane) -> ImagePlane {
    likelihood.map(|v| v / (1.0 + v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(l: f64, params: &ExposureParams) -> ImagePlane {
        let lp = ImagePlane::filled(16, 16, l);
        let z = ImagePlane::filled(16, 16, 0.0);
        exposure_likelihood(&lp, &z, &z, params).unwrap()
    }

    #[test]
    fn black_is_underexposed() {
        let p = ExposureParams::default();
        // independent scalar evaluation
        let num = (255.0f64 / 60.0).tanh() + 1.0;
        let den = (-1.0f64 / 60.0).tanh() + 1.0 + 1e-6;
        let expect = num / den;
        assert!((num - 1.999_57).abs() < 5e-5 && (den - 0.983_34).abs() < 1e-5);
        assert!((expect - 2.034).abs() < 1e-3);
        let lk = uniform(0.0, &p);
        assert!(lk.as_slice().iter().all(|v| (v - expect).abs() < 1e-12));
        let m = classify(&lk);
        assert_eq!(m.under_count(), 256);
    }

    #[test]
    fn white_is_overexposed() {
        let lk = uniform(255.0, &ExposureParams::default());
        assert!(lk.as_slice().iter().all(|&v| (0.0..1e-12).contains(&v)));
        assert_eq!(classify(&lk).over_count(), 256);
    }

    #[test]
    fn epsilon_keeps_ratio_finite() {
        let p = ExposureParams {
            delta: 10.0,
            ..Default::default()
        };
        // numerator and denominator tanh both saturate at -1 when chroma dominates
        let v = p.likelihood_at(0.0, 300.0, 300.0);
        assert!(v.is_finite() && v.abs() < 1e-6);
    }

    #[test]
    fn tie_goes_to_under() {
        let lk = ImagePlane::new(3, 1, vec![1.0, 0.999_999, 2.034]).unwrap();
        let m = classify(&lk);
        assert_eq!(m.under.as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(m.over.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn boundary_between_11_and_12() {
        let p = ExposureParams::default();
        assert!(p.likelihood_at(11.0, 0.0, 0.0) >= 1.0);
        assert!(p.likelihood_at(12.0, 0.0, 0.0) < 1.0);
        // root of 127 + aT - A = -(127 - aT + A) at A = 128, nudged down by eps
        let root = 128f64.sqrt();
        assert!(p.likelihood_at(root - 1e-3, 0.0, 0.0) > 1.0);
        assert!(p.likelihood_at(root + 1e-3, 0.0, 0.0) < 1.0);
    }

    #[test]
    fn linear_mode_boundary_near_mid_gray() {
        let p = ExposureParams {
            lightness: LightnessTerm::Linear,
            ..Default::default()
        };
        assert!(p.likelihood_at(127.0, 0.0, 0.0) >= 1.0);
        assert!(p.likelihood_at(129.0, 0.0, 0.0) < 1.0);
    }

    #[test]
    fn monotone_in_lightness() {
        let p = ExposureParams::default();
        let vals: Vec<f64> = (0..=255).map(|l| p.likelihood_at(f64::from(l), 0.0, 0.0)).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn rejects_bad_params() {
        for p in [
            ExposureParams { delta: 0.0, ..Default::default() },
            ExposureParams { sigma: -1.0, ..Default::default() },
            ExposureParams { epsilon: 0.0, ..Default::default() },
            ExposureParams { alpha_t: 255.0, ..Default::default() },
        ] {
            assert!(p.validate().is_err());
        }
        assert!("cubic".parse::<LightnessTerm>().is_err());
    }
}
