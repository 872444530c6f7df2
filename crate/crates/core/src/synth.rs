//! Synthetic portraits with exactly known geometry, albedo and lighting.

use std::f64::consts::PI;

use crate::error::Result;
use crate::imageio::{ImagePlane, ImageRGB};
use crate::normals::{Ellipsoid, NormalMap};
use crate::sh::{sh_basis9, Direction, ShCoeffs9, SH_ORDER};

/// Ambient fill of [`side_lit_portrait`].
pub const SIDE_AMBIENT: f64 = 0.08;

/// Band attenuation of the clamped-cosine kernel for `l = 0, 1, 2`.
const COSINE_LOBE: [f64; 3] = [PI, 2.0 * PI / 3.0, PI / 4.0];

/// Band-limited irradiance of a distant light of `intensity` from `toward`
/// plus a uniform `ambient` term.
pub fn directional_irradiance(toward: Direction, intensity: f64, ambient: f64) -> ShCoeffs9 {
    let y = sh_basis9(&toward);
    let mut h = [0.0; 9];
    for (i, (l, _)) in SH_ORDER.iter().enumerate() {
        h[i] = COSINE_LOBE[*l] * y[i] * intensity;
    }
    h[0] += ambient * (4.0 * PI).sqrt();
    ShCoeffs9(h)
}

/// Gray albedo with a mild periodic texture, roughly in `[0.62, 0.78]`.
pub fn textured_albedo(width: usize, height: usize) -> ImagePlane {
    ImagePlane::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        0.7 + 0.05 * (2.0 * PI * x / 9.0).sin() * (2.0 * PI * y / 11.0).sin()
            + 0.03 * (2.0 * PI * (x + 2.0 * y) / 23.0).cos()
    })
}

#[derive(Debug, Clone)]
pub struct Portrait {
    pub image: ImageRGB,
    pub normals: NormalMap,
    pub albedo: ImagePlane,
    /// Non-negative shading on the face, 0 on the background.
    pub shading: ImagePlane,
    /// The same face under uniform light at the peak face shading.
    pub evenly_lit: ImageRGB,
}

/// Renders `albedo * max(0, light(n))` over the ellipsoid, black outside.
///
/// `tint` scales the three channels of the albedo.
pub fn render_portrait(
    width: usize,
    height: usize,
    face: Ellipsoid,
    light: &ShCoeffs9,
    albedo: &ImagePlane,
    tint: [f64; 3],
) -> Result<Portrait> {
    let normals = face.normals(width, height)?;
    let mut shading = ImagePlane::filled(width, height, 0.0);
    for (i, n) in normals.iter_valid() {
        shading.as_mut_slice()[i] = light.evaluate(&n).max(0.0);
    }
    let peak = shading.min_max().1;
    let even = shading.zip_map(
        &crate::normals::face_mask(&normals),
        |_, m| if m > 0.5 { peak } else { 0.0 },
    )?;
    let compose = |s: &ImagePlane, t: f64| s.zip_map(albedo, |sv, a| sv * a * t);
    let image = ImageRGB::new(
        compose(&shading, tint[0])?,
        compose(&shading, tint[1])?,
        compose(&shading, tint[2])?,
    )?;
    let evenly_lit = ImageRGB::new(
        compose(&even, tint[0])?,
        compose(&even, tint[1])?,
        compose(&even, tint[2])?,
    )?;
    Ok(Portrait {
        image,
        normals,
        albedo: albedo.clone(),
        shading,
        evenly_lit,
    })
}

/// Default face geometry for a `size x size` frame.
pub fn default_face(size: usize) -> Ellipsoid {
    let s = size as f64;
    Ellipsoid {
        center: (s / 2.0, s / 2.0),
        radii: (0.34 * s, 0.44 * s, 0.31 * s),
    }
}

/// A face lit hard from the viewer's right with a weak ambient fill, leaving
/// the left side dim but not black.
pub fn side_lit_portrait(size: usize) -> Result<Portrait> {
    let light = directional_irradiance(Direction::normalize([0.8, 0.15, 0.55])?, 1.1, SIDE_AMBIENT);
    render_portrait(
        size,
        size,
        default_face(size),
        &light,
        &textured_albedo(size, size),
        [1.0; 3],
    )
}

/// A face under uniform light of the given level.
pub fn uniform_lit_portrait(size: usize, level: f64) -> Result<Portrait> {
    uniform_lit_with_albedo(size, level, &textured_albedo(size, size))
}

/// [`uniform_lit_portrait`] with a caller-supplied albedo plane.
pub fn uniform_lit_with_albedo(size: usize, level: f64, albedo: &ImagePlane) -> Result<Portrait> {
    render_portrait(
        size,
        size,
        default_face(size),
        &ShCoeffs9::constant(level),
        albedo,
        [1.0; 3],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irradiance_matches_clamped_cosine_expansion() {
        // E(n) = 1/4 + (n.d)/2 + 5/32 (3 (n.d)^2 - 1) for a unit light
        let d = Direction::normalize([0.3, -0.2, 0.9]).unwrap();
        let h = directional_irradiance(d, 1.0, 0.0);
        for k in 0..30 {
            let n = Direction::from_angles(0.1 * k as f64, 0.7 * k as f64);
            let c: f64 = n.xyz().iter().zip(d.xyz()).map(|(a, b)| a * b).sum();
            let expect = 0.25 + 0.5 * c + 5.0 / 32.0 * (3.0 * c * c - 1.0);
            assert!((h.evaluate(&n) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn side_lit_has_dark_and_bright_halves() {
        let p = side_lit_portrait(96).unwrap();
        let face = default_face(96);
        let cy = face.center.1 as usize;
        let left = p.shading.get((face.center.0 - 0.9 * face.radii.0) as usize, cy);
        let right = p.shading.get((face.center.0 + 0.6 * face.radii.0) as usize, cy);
        assert!(left > 0.0 && left < 0.15 && right > 0.6, "left {left} right {right}");
    }
}
