//! Per-pixel face normals and the face mask.
//!
//! Normals arrive either from an 8-bit normal-map image (`c = 255 (n + 1) / 2`
//! per component, black marks background) or from [`synth_ellipsoid`], an
//! analytic face proxy. Camera convention: +z toward the viewer, +y up, while
//! image rows grow downward.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imageio::{self, ImagePlane, ImageRGB};
use crate::sh::Direction;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<[f64; 3]>,
    valid: Vec<bool>,
}

impl NormalMap {
    /// A map with every pixel invalid.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normals: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Sets a pixel's normal (normalized here) or marks it invalid with `None`.
    ///
    /// Zero or non-finite vectors are stored as invalid.
    pub fn set(&mut self, x: usize, y: usize, n: Option<[f64; 3]>) {
        let i = y * self.width + x;
        match n.and_then(|v| Direction::normalize(v).ok()) {
            Some(d) => {
                self.normals[i] = d.xyz();
                self.valid[i] = true;
            }
            None => {
                self.normals[i] = [0.0; 3];
                self.valid[i] = false;
            }
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.normals[i])
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `(linear index, direction)` for every valid pixel, row-major.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, Direction)> + '_ {
        self.valid
            .iter()
            .zip(&self.normals)
            .enumerate()
            .filter(|(_, (v, _))| **v)
            .map(|(i, (_, n))| (i, Direction::new(n[0], n[1], n[2]).expect("stored normals are unit")))
    }

    /// Encodes as an 8-bit normal-map image; invalid pixels become black.
    pub fn to_image(&self) -> ImageRGB {
        let mut bytes = Vec::with_capacity(self.normals.len() * 3);
        for (n, &v) in self.normals.iter().zip(&self.valid) {
            if v {
                // keep a valid pixel from colliding with the black sentinel
                let enc = n.map(|c| imageio::quantize((c + 1.0) / 2.0));
                if enc == [0, 0, 0] {
                    bytes.extend_from_slice(&[1, 0, 0]);
                } else {
                    bytes.extend_from_slice(&enc);
                }
            } else {
                bytes.extend_from_slice(&[0, 0, 0]);
            }
        }
        ImageRGB::from_rgb8(self.width, self.height, &bytes).expect("buffer sized from map")
    }

    /// Decodes an 8-bit normal-map image.
    pub fn from_image(img: &ImageRGB) -> Self {
        let (w, h) = img.dims();
        let mut nm = Self::empty(w, h);
        let bytes = img.to_rgb8();
        for (i, px) in bytes.chunks_exact(3).enumerate() {
            if px == [0, 0, 0] {
                continue;
            }
            let v = [0, 1, 2].map(|c| 2.0 * f64::from(px[c]) / 255.0 - 1.0);
            nm.set(i % w, i / w, Some(v));
        }
        nm
    }
}

/// Reads a normal-map file (PPM or PNG). Pixel `(0, 0, 0)` is background.
pub fn load_normal_map(path: impl AsRef<Path>) -> Result<NormalMap> {
    Ok(NormalMap::from_image(&imageio::load_image(path)?))
}

pub fn save_normal_map(nm: &NormalMap, path: impl AsRef<Path>) -> Result<()> {
    imageio::save_image(&nm.to_image(), path)
}

/// Ellipsoid geometry in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: (f64, f64),
    pub radii: (f64, f64, f64),
}

impl Ellipsoid {
    /// Parses `cx,cy,rx,ry,rz`.
    pub fn parse(spec: &str) -> Result<Self> {
        let vals: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("ellipsoid `{spec}`: {e}")))?;
        match vals[..] {
            [cx, cy, rx, ry, rz] => Ok(Self {
                center: (cx, cy),
                radii: (rx, ry, rz),
            }),
            _ => Err(Error::InvalidParameter(format!(
                "ellipsoid `{spec}` must be cx,cy,rx,ry,rz"
            ))),
        }
    }
}

/// Normals of the viewer-facing half of an axis-aligned ellipsoid.
///
/// A pixel `(x, y)` is on the face when `u^2 + v^2 < 1` with
/// `u = (x - cx) / rx`, `v = (y - cy) / ry`. The surface there has depth
/// `z = rz sqrt(1 - u^2 - v^2)` and normal `∝ (u / rx, -v / ry, z / rz^2)`.
pub fn synth_ellipsoid(
    width: usize,
    height: usize,
    center: (f64, f64),
    radii: (f64, f64, f64),
) -> Result<NormalMap> {
    let (rx, ry, rz) = radii;
    if !(rx > 0.0 && ry > 0.0 && rz > 0.0) || !(rx.is_finite() && ry.is_finite() && rz.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ellipsoid radii must be positive, got {radii:?}"
        )));
    }
    let (cx, cy) = center;
    let mut nm = NormalMap::empty(width, height);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 - cx) / rx;
            let v = (y as f64 - cy) / ry;
            let rho = u * u + v * v;
            if rho < 1.0 {
                let z = rz * (1.0 - rho).sqrt();
                nm.set(x, y, Some([u / rx, -v / ry, z / (rz * rz)]));
            }
        }
    }
    Ok(nm)
}

impl Ellipsoid {
    pub fn normals(&self, width: usize, height: usize) -> Result<NormalMap> {
        synth_ellipsoid(width, height, self.center, self.radii)
    }
}

/// 1.0 on valid pixels, 0.0 elsewhere.
pub fn face_mask(nm: &NormalMap) -> ImagePlane {
    let data = nm.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    ImagePlane::new(nm.width, nm.height, data).expect("mask sized from map")
}
