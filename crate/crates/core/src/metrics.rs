//! Lightness-order error (LOM), block contrast (EME) and discrete entropy (DE).
//!
//! Each metric has a masked variant used when scoring only the face region.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imageio::{ensure_same_dims, ImagePlane};

pub const DEFAULT_EME_BLOCK: usize = 8;
pub const DEFAULT_LOM_GRID: usize = 32;
pub const DEFAULT_LOM_TIE: f64 = 2.0 / 255.0;

/// One line of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub image: String,
    pub lom: f64,
    pub eme: f64,
    pub de: f64,
}

fn inside(mask: Option<&ImagePlane>, i: usize) -> bool {
    mask.is_none_or(|m| m.as_slice()[i] > 0.5)
}

/// Mean of `20 log10(max / min)` over non-overlapping `block x block` tiles,
/// with pixel codes `255 v + 1`. Partial tiles at the right/bottom are dropped.
pub fn eme(gray: &ImagePlane, block: usize) -> Result<f64> {
    eme_impl(gray, block, None)
}

/// [`eme`] over tiles that lie entirely inside `mask`; 0 if there are none.
pub fn eme_masked(gray: &ImagePlane, block: usize, mask: &ImagePlane) -> Result<f64> {
    ensure_same_dims(gray.dims(), mask.dims())?;
    eme_impl(gray, block, Some(mask))
}

fn eme_impl(gray: &ImagePlane, block: usize, mask: Option<&ImagePlane>) -> Result<f64> {
    let (w, h) = gray.dims();
    if block == 0 || w < block || h < block {
        return Err(Error::InvalidParameter(format!(
            "EME block {block} does not fit a {w}x{h} image"
        )));
    }
    let (bx, by) = (w / block, h / block);
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..by {
        'tile: for i in 0..bx {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for y in j * block..(j + 1) * block {
                for x in i * block..(i + 1) * block {
                    if !inside(mask, y * w + x) {
                        continue 'tile;
                    }
                    let c = 255.0 * gray.get(x, y).clamp(0.0, 1.0) + 1.0;
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
            total += 20.0 * (hi / lo).log10();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Shannon entropy in bits of the 256-bin histogram of `round(255 v)`.
pub fn discrete_entropy(gray: &ImagePlane) -> f64 {
    entropy_impl(gray, None)
}

pub fn discrete_entropy_masked(gray: &ImagePlane, mask: &ImagePlane) -> Result<f64> {
    ensure_same_dims(gray.dims(), mask.dims())?;
    Ok(entropy_impl(gray, Some(mask)))
}

fn entropy_impl(gray: &ImagePlane, mask: Option<&ImagePlane>) -> f64 {
    let mut hist = [0usize; 256];
    let mut n = 0usize;
    for (i, &v) in gray.as_slice().iter().enumerate() {
        if inside(mask, i) {
            hist[crate::imageio::quantize(v) as usize] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.log2()
        })
        .sum();
    // a single occupied bin yields -0.0
    h.max(0.0)
}

/// Fraction of cell pairs whose lightness order flips from `orig` to `enhanced`.
///
/// Both planes are reduced to `grid x grid` cell means; pairs whose original
/// means differ by no more than `tie_tol` are ignored.
pub fn lom(orig: &ImagePlane, enhanced: &ImagePlane, grid: usize, tie_tol: f64) -> Result<f64> {
    lom_impl(orig, enhanced, grid, tie_tol, None)
}

/// [`lom`] on cells that are at least half covered by `mask`, averaging only
/// masked pixels.
pub fn lom_masked(
    orig: &ImagePlane,
    enhanced: &ImagePlane,
    grid: usize,
    tie_tol: f64,
    mask: &ImagePlane,
) -> Result<f64> {
    ensure_same_dims(orig.dims(), mask.dims())?;
    lom_impl(orig, enhanced, grid, tie_tol, Some(mask))
}

fn cell_means(
    plane: &ImagePlane,
    gx: usize,
    gy: usize,
    mask: Option<&ImagePlane>,
) -> Vec<Option<f64>> {
    let (w, h) = plane.dims();
    let mut out = Vec::with_capacity(gx * gy);
    for j in 0..gy {
        let (y0, y1) = (j * h / gy, (j + 1) * h / gy);
        for i in 0..gx {
            let (x0, x1) = (i * w / gx, (i + 1) * w / gx);
            let (mut sum, mut n) = (0.0, 0usize);
            for y in y0..y1 {
                for x in x0..x1 {
                    if inside(mask, y * w + x) {
                        sum += plane.get(x, y);
                        n += 1;
                    }
                }
            }
            let cell = (x1 - x0) * (y1 - y0);
            out.push((n > 0 && 2 * n >= cell).then(|| sum / n as f64));
        }
    }
    out
}

fn sign(d: f64) -> i8 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

fn lom_impl(
    orig: &ImagePlane,
    enhanced: &ImagePlane,
    grid: usize,
    tie_tol: f64,
    mask: Option<&ImagePlane>,
) -> Result<f64> {
    ensure_same_dims(orig.dims(), enhanced.dims())?;
    if grid == 0 {
        return Err(Error::InvalidParameter("LOM grid must be positive".into()));
    }
    let (w, h) = orig.dims();
    let (gx, gy) = (grid.min(w), grid.min(h));
    if gx == 0 || gy == 0 {
        return Ok(0.0);
    }
    let a: Vec<(f64, f64)> = cell_means(orig, gx, gy, mask)
        .into_iter()
        .zip(cell_means(enhanced, gx, gy, mask))
        .filter_map(|(o, e)| Some((o?, e?)))
        .collect();
    let (mut eligible, mut flipped) = (0u64, 0u64);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            let d_orig = a[i].0 - a[j].0;
            if d_orig.abs() <= tie_tol {
                continue;
            }
            eligible += 1;
            if sign(d_orig) != sign(a[i].1 - a[j].1) {
                flipped += 1;
            }
        }
    }
    Ok(if eligible == 0 {
        0.0
    } else {
        flipped as f64 / eligible as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImagePlane {
        ImagePlane::from_fn(w, h, |x, y| (x + y * w) as f64 / (w * h - 1) as f64)
    }

    #[test]
    fn eme_constant_and_checkerboard() {
        assert_eq!(eme(&ImagePlane::filled(16, 16, 0.4), 8).unwrap(), 0.0);
        let cb = ImagePlane::from_fn(16, 16, |x, y| ((x + y) % 2) as f64);
        let expect = 20.0 * 256f64.log10();
        assert!((eme(&cb, 8).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 48.165).abs() < 1e-3);
    }

    #[test]
    fn eme_drops_partial_blocks() {
        // only the 8x8 top-left tile counts; the rest is high contrast noise
        let p = ImagePlane::from_fn(12, 11, |x, y| if x < 8 && y < 8 { 0.5 } else { ((x * y) % 2) as f64 });
        assert_eq!(eme(&p, 8).unwrap(), 0.0);
        assert!(eme(&ImagePlane::filled(7, 20, 0.1), 8).is_err());
    }

    #[test]
    fn eme_grows_with_contrast() {
        let base = ImagePlane::from_fn(32, 32, |x, y| 0.4 + 0.2 * (((x * 7 + y * 3) % 10) as f64 / 10.0));
        let mean = base.sum() / base.len() as f64;
        let mut prev = eme(&base, 8).unwrap();
        for k in [1.5, 2.0, 3.0] {
            let s = base.map(|v| ((v - mean) * k + mean).clamp(0.0, 1.0));
            let e = eme(&s, 8).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn entropy_axioms() {
        assert_eq!(discrete_entropy(&ImagePlane::filled(9, 9, 0.3)), 0.0);
        let uniform = ImagePlane::from_fn(16, 16, |x, y| (x + 16 * y) as f64 / 255.0);
        assert_eq!(discrete_entropy(&uniform), 8.0);
        let coin = ImagePlane::from_fn(4, 4, |x, _| if x < 2 { 0.0 } else { 1.0 });
        assert_eq!(discrete_entropy(&coin), 1.0);
    }

    #[test]
    fn lom_axioms() {
        let r = ramp(64, 64);
        assert_eq!(lom(&r, &r, 32, DEFAULT_LOM_TIE).unwrap(), 0.0);
        let neg = r.map(|v| 1.0 - v);
        assert_eq!(lom(&r, &neg, 32, DEFAULT_LOM_TIE).unwrap(), 1.0);
        let gamma = r.map(|v| v.powf(0.5));
        assert_eq!(lom(&r, &gamma, 32, DEFAULT_LOM_TIE).unwrap(), 0.0);
        let flat = ImagePlane::filled(64, 64, 0.5);
        assert_eq!(lom(&flat, &neg, 32, DEFAULT_LOM_TIE).unwrap(), 0.0);
    }

    #[test]
    fn lom_counts_flattened_pairs_as_flips() {
        let r = ramp(8, 8);
        let flat = ImagePlane::filled(8, 8, 0.5);
        assert_eq!(lom(&r, &flat, 8, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn masked_variants_ignore_background() {
        let mask = ImagePlane::from_fn(32, 32, |x, _| if x < 16 { 1.0 } else { 0.0 });
        let img = ImagePlane::from_fn(32, 32, |x, y| if x < 16 { 0.5 } else { ((x + y) % 2) as f64 });
        assert_eq!(eme_masked(&img, 8, &mask).unwrap(), 0.0);
        assert_eq!(discrete_entropy_masked(&img, &mask).unwrap(), 0.0);
        let flipped_bg = img.map(|v| 1.0 - v);
        let r = ramp(32, 32);
        let enh = ImagePlane::from_fn(32, 32, |x, y| if x < 16 { r.get(x, y) } else { flipped_bg.get(x, y) });
        assert_eq!(lom_masked(&r, &enh, 16, 0.0, &mask).unwrap(), 0.0);
    }

    #[test]
    fn report_serializes_as_one_line() {
        let r = MetricReport { image: "a.ppm".into(), lom: 0.1, eme: 2.5, de: 7.0 };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"image":"a.ppm","lom":0.1,"eme":2.5,"de":7.0}"#);
    }
}
