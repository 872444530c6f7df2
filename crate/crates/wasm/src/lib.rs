//! Browser bindings: render a synthetic portrait under a chosen light, relight
//! it with adjustable weights, and plot the exposure likelihood.

use relight_core::exposure::{self, ExposureParams};
use relight_core::imageio::{self, ImagePlane, ImageRGB};
use relight_core::pipeline::{self, PipelineParams};
use relight_core::sh::Direction;
use relight_core::synth::{self, Portrait};
use relight_core::{metrics, Result};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(img: &ImageRGB) -> Vec<u8> {
    img.to_rgb8()
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

fn gray_rgba(plane: &ImagePlane) -> Vec<u8> {
    rgba(&ImageRGB::from_gray(plane))
}

/// Unit vector toward the light; azimuth 0 is frontal, positive is viewer's right.
fn light_direction(azimuth_deg: f64, elevation_deg: f64) -> Result<Direction> {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Direction::normalize([az.sin() * el.cos(), el.sin(), az.cos() * el.cos()])
}

fn face_rmse(a: &ImageRGB, b: &ImageRGB, face: &ImagePlane) -> f64 {
    let (mut sum, mut n) = (0.0, 0.0);
    for (ca, cb) in a.channels().into_iter().zip(b.channels()) {
        for ((x, y), &m) in ca.as_slice().iter().zip(cb.as_slice()).zip(face.as_slice()) {
            if m > 0.5 {
                sum += (x - y) * (x - y);
                n += 1.0;
            }
        }
    }
    if n > 0.0 {
        (sum / n).sqrt()
    } else {
        0.0
    }
}

#[wasm_bindgen]
pub struct Demo {
    portrait: Portrait,
    size: usize,
}

impl Demo {
    fn render(size: usize, azimuth_deg: f64, elevation_deg: f64, ambient: f64) -> Result<Self> {
        let light = synth::directional_irradiance(light_direction(azimuth_deg, elevation_deg)?, 1.1, ambient);
        let portrait = synth::render_portrait(
            size,
            size,
            synth::default_face(size),
            &light,
            &synth::textured_albedo(size, size),
            [1.0, 0.86, 0.74],
        )?;
        Ok(Self { portrait, size })
    }

    fn relight(&self, lambda_g: f64, lambda_u: f64, alpha_t: f64) -> Result<Relit> {
        let mut params = PipelineParams::default();
        params.refine.lambda_g = lambda_g;
        params.refine.lambda_u = lambda_u;
        params.exposure.alpha_t = alpha_t;
        let img = &self.portrait.image;
        let out = pipeline::run(img, &self.portrait.normals, &params).map_err(|e| e.source)?;
        let face_masks = out.masks.intersect(&out.face)?;

        let mut masks = Vec::with_capacity(4 * img.width() * img.height());
        for ((&u, &o), &f) in face_masks
            .under
            .as_slice()
            .iter()
            .zip(face_masks.over.as_slice())
            .zip(out.face.as_slice())
        {
            let px = match (f > 0.5, u > 0.5, o > 0.5) {
                (false, _, _) => [0, 0, 0, 255],
                (true, true, _) => [40, 110, 230, 255],
                (true, _, true) => [240, 160, 40, 255],
                _ => [90, 90, 90, 255],
            };
            masks.extend_from_slice(&px);
        }

        let y0 = imageio::rgb_to_luminance(img);
        let y1 = imageio::rgb_to_luminance(&out.enhanced);
        let peak = out.shading.min_max().1.max(f64::MIN_POSITIVE);
        Ok(Relit {
            enhanced: rgba(&out.enhanced),
            shading: gray_rgba(&out.shading.map(|v| v / peak)),
            masks,
            lom: metrics::lom(&y0, &y1, metrics::DEFAULT_LOM_GRID, metrics::DEFAULT_LOM_TIE)?,
            eme_before: metrics::eme(&y0, metrics::DEFAULT_EME_BLOCK)?,
            eme_after: metrics::eme(&y1, metrics::DEFAULT_EME_BLOCK)?,
            rmse_before: face_rmse(img, &self.portrait.evenly_lit, &out.face),
            rmse_after: face_rmse(&out.enhanced, &self.portrait.evenly_lit, &out.face),
            iterations: out.refine.solution.iterations,
            under_pixels: face_masks.under_count(),
            over_pixels: face_masks.over_count(),
        })
    }
}

#[wasm_bindgen]
impl Demo {
    /// Renders a `size x size` portrait lit from the given direction.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, azimuth_deg: f64, elevation_deg: f64, ambient: f64) -> std::result::Result<Demo, JsError> {
        Self::render(size, azimuth_deg, elevation_deg, ambient).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn original_rgba(&self) -> Vec<u8> {
        rgba(&self.portrait.image)
    }

    /// The same face evenly lit, for comparison.
    pub fn reference_rgba(&self) -> Vec<u8> {
        rgba(&self.portrait.evenly_lit)
    }

    pub fn normals_rgba(&self) -> Vec<u8> {
        rgba(&self.portrait.normals.to_image())
    }

    /// Runs the full pipeline with the given weights and exposure threshold.
    pub fn enhance(&self, lambda_g: f64, lambda_u: f64, alpha_t: f64) -> std::result::Result<Relit, JsError> {
        self.relight(lambda_g, lambda_u, alpha_t).map_err(js)
    }
}

#[wasm_bindgen]
pub struct Relit {
    enhanced: Vec<u8>,
    shading: Vec<u8>,
    masks: Vec<u8>,
    lom: f64,
    eme_before: f64,
    eme_after: f64,
    rmse_before: f64,
    rmse_after: f64,
    iterations: usize,
    under_pixels: usize,
    over_pixels: usize,
}

#[wasm_bindgen]
impl Relit {
    pub fn enhanced_rgba(&self) -> Vec<u8> {
        self.enhanced.clone()
    }

    /// Refined shading scaled to its maximum.
    pub fn shading_rgba(&self) -> Vec<u8> {
        self.shading.clone()
    }

    /// Face pixels colored by exposure class.
    pub fn masks_rgba(&self) -> Vec<u8> {
        self.masks.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn lom(&self) -> f64 {
        self.lom
    }

    #[wasm_bindgen(getter)]
    pub fn eme_before(&self) -> f64 {
        self.eme_before
    }

    #[wasm_bindgen(getter)]
    pub fn eme_after(&self) -> f64 {
        self.eme_after
    }

    #[wasm_bindgen(getter)]
    pub fn rmse_before(&self) -> f64 {
        self.rmse_before
    }

    #[wasm_bindgen(getter)]
    pub fn rmse_after(&self) -> f64 {
        self.rmse_after
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn under_pixels(&self) -> usize {
        self.under_pixels
    }

    #[wasm_bindgen(getter)]
    pub fn over_pixels(&self) -> usize {
        self.over_pixels
    }
}

fn likelihood_curve(alpha_t: f64, delta: f64) -> Result<Vec<f64>> {
    let params = ExposureParams {
        alpha_t,
        delta,
        ..Default::default()
    };
    params.validate()?;
    Ok((0..=255).map(|l| params.likelihood_at(f64::from(l), 0.0, 0.0)).collect())
}

/// Exposure likelihood of a neutral pixel for lightness 0..=255.
#[wasm_bindgen]
pub fn exposure_curve(alpha_t: f64, delta: f64) -> std::result::Result<Vec<f64>, JsError> {
    likelihood_curve(alpha_t, delta).map_err(js)
}

/// Likelihood mapped to `[0, 1)` as the demo plots it.
#[wasm_bindgen]
pub fn display_likelihood(v: f64) -> f64 {
    let p = ImagePlane::filled(1, 1, v);
    exposure::likelihood_display(&p).get(0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontal_light_points_at_viewer() {
        let d = light_direction(0.0, 0.0).unwrap().xyz();
        assert!((d[2] - 1.0).abs() < 1e-12);
        let right = light_direction(90.0, 0.0).unwrap().xyz();
        assert!((right[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn buffers_are_rgba_sized() {
        let demo = Demo::render(48, 60.0, 10.0, 0.08).unwrap();
        let n = 48 * 48 * 4;
        assert_eq!(demo.original_rgba().len(), n);
        assert_eq!(demo.normals_rgba().len(), n);
        let r = demo.relight(0.15, 1.0, 128.0).unwrap();
        assert_eq!(r.enhanced_rgba().len(), n);
        assert_eq!(r.shading_rgba().len(), n);
        assert_eq!(r.masks_rgba().len(), n);
        assert!(r.enhanced_rgba().chunks(4).all(|p| p[3] == 255));
    }

    #[test]
    fn relighting_brings_the_render_closer_to_even_light() {
        let demo = Demo::render(96, 65.0, 8.0, 0.08).unwrap();
        let r = demo.relight(0.15, 1.0, 128.0).unwrap();
        assert!(r.rmse_after() < r.rmse_before());
        assert!(r.lom() < 0.25);
        assert!(r.under_pixels() > 0 && r.over_pixels() > 0);
    }

    #[test]
    fn curve_crosses_one_between_11_and_12() {
        let c = likelihood_curve(128.0, 1.0 / 60.0).unwrap();
        assert_eq!(c.len(), 256);
        assert!(c[11] >= 1.0 && c[12] < 1.0);
        assert!(likelihood_curve(300.0, 0.1).is_err());
        assert_eq!(display_likelihood(1.0), 0.5);
    }
}
