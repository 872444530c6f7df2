//! Raster buffers, PPM/PNG file I/O and the colour conversions used by the
//! rest of the pipeline.
//!
//! All pixel values are `f64` in `[0, 1]` and remain gamma-encoded (sRGB);
//! only [`rgb_to_lab`] linearizes, internally, on its way to CIELAB.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A single-channel row-major raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane data has {} values, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("plane value at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixel-wise combination of two planes of identical size.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "{}x{} does not match {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// An sRGB-encoded three-channel image with values clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    r: ImagePlane,
    g: ImagePlane,
    b: ImagePlane,
}

impl ImageRGB {
    /// Builds an image from three planes, clamping every value into `[0, 1]`.
    pub fn new(r: ImagePlane, g: ImagePlane, b: ImagePlane) -> Result<Self> {
        ensure_same_dims(r.dims(), g.dims())?;
        ensure_same_dims(r.dims(), b.dims())?;
        let clamp = |p: ImagePlane| p.map(|v| v.clamp(0.0, 1.0));
        Ok(Self {
            r: clamp(r),
            g: clamp(g),
            b: clamp(b),
        })
    }

    pub fn from_gray(gray: &ImagePlane) -> Self {
        let p = gray.map(|v| v.clamp(0.0, 1.0));
        Self {
            r: p.clone(),
            g: p.clone(),
            b: p,
        }
    }

    /// Decodes interleaved 8-bit RGB; each code `c` maps to `c / 255`.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let n = width * height;
        if bytes.len() != n * 3 {
            return Err(Error::Format(format!(
                "expected {} RGB bytes, got {}",
                n * 3,
                bytes.len()
            )));
        }
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for px in bytes.chunks_exact(3) {
            for (plane, &c) in planes.iter_mut().zip(px) {
                plane.push(f64::from(c) / 255.0);
            }
        }
        let [r, g, b] = planes;
        Ok(Self {
            r: ImagePlane { width, height, data: r },
            g: ImagePlane { width, height, data: g },
            b: ImagePlane { width, height, data: b },
        })
    }

    /// Encodes to interleaved 8-bit RGB with `round(255 * clamp(v, 0, 1))`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.r.len() * 3);
        for i in 0..self.r.len() {
            out.push(quantize(self.r.data[i]));
            out.push(quantize(self.g.data[i]));
            out.push(quantize(self.b.data[i]));
        }
        out
    }

    pub fn width(&self) -> usize {
        self.r.width
    }

    pub fn height(&self) -> usize {
        self.r.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn r(&self) -> &ImagePlane {
        &self.r
    }

    pub fn g(&self) -> &ImagePlane {
        &self.g
    }

    pub fn b(&self) -> &ImagePlane {
        &self.b
    }

    pub fn channels(&self) -> [&ImagePlane; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [self.r.get(x, y), self.g.get(x, y), self.b.get(x, y)]
    }
}

/// 8-bit quantization with round-half-up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Reads a binary PPM (P6, maxval 255) or an 8-bit RGB/RGBA PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory PPM or PNG file, chosen by its magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageRGB> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        Err(Error::Format(
            "unrecognized image format (expected P6 PPM or PNG)".into(),
        ))
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<ImageRGB> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PPM header".into()));
        }
        let token = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = token
            .parse()
            .map_err(|_| Error::Format(format!("PPM header value {token} out of range")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PPM maxval {maxval} (only 255)"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PPM header".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::Format("PPM dimensions overflow".into()))?;
    let pixels = &bytes[pos..];
    if pixels.len() < need {
        return Err(Error::Format(format!(
            "truncated PPM pixel data: {} of {} bytes",
            pixels.len(),
            need
        )));
    }
    ImageRGB::from_rgb8(width, height, &pixels[..need])
}

fn decode_png(bytes: &[u8]) -> Result<ImageRGB> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| Error::Format("PNG: image too large".into()))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "unsupported PNG bit depth {:?} (only 8-bit)",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&c| [c, c, c]).collect(),
        png::ColorType::GrayscaleAlpha => data
            .chunks_exact(2)
            .flat_map(|px| [px[0], px[0], px[0]])
            .collect(),
        other => {
            return Err(Error::Format(format!(
                "unsupported PNG color type {other:?}"
            )))
        }
    };
    ImageRGB::from_rgb8(w, h, &rgb)
}

/// Serializes as binary PPM: `"P6\n<w> <h>\n255\n"` then interleaved RGB.
pub fn encode_ppm(img: &ImageRGB) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_rgb8());
    out
}

pub fn encode_png(img: &ImageRGB) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
        writer
            .write_image_data(&img.to_rgb8())
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    }
    Ok(out)
}

/// Writes PNG when the extension is `.png` (any case), P6 PPM otherwise.
///
/// The file is first written next to its destination and then renamed, so a
/// failed write never leaves a partial output behind.
pub fn save_image(img: &ImageRGB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_ppm(img) };
    write_atomic(path, &bytes)
}

/// Saves a plane as a gray image (identical R, G, B). Values are clamped.
pub fn save_plane(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    save_image(&ImageRGB::from_gray(plane), path)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    let write = || -> std::io::Result<()> {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// BT.601 full-range luma on the stored (gamma-encoded) values.
pub fn rgb_to_luminance(img: &ImageRGB) -> ImagePlane {
    let (w, h) = img.dims();
    let data = img
        .r
        .data
        .iter()
        .zip(&img.g.data)
        .zip(&img.b.data)
        .map(|((&r, &g), &b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
        .collect();
    ImagePlane {
        width: w,
        height: h,
        data,
    }
}

/// CIELAB planes of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabPlanes {
    /// Lightness rescaled from `[0, 100]` to `[0, 255]`.
    pub l: ImagePlane,
    pub a: ImagePlane,
    pub b: ImagePlane,
}

/// Scale applied to native `L*` so lightness lives on a 0..255 range.
pub const LIGHTNESS_SCALE: f64 = 255.0 / 100.0;

// linear sRGB -> XYZ, D65
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

#[inline]
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIELAB of one sRGB-encoded pixel; `L*` is on its native 0..100 scale.
pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    // white point taken from the matrix itself so that gray maps to a* = b* = 0
    let white = SRGB_TO_XYZ.map(|row| row[0] + row[1] + row[2]);
    let fx = lab_f(xyz[0] / white[0]);
    let fy = lab_f(xyz[1] / white[1]);
    let fz = lab_f(xyz[2] / white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// sRGB -> linear -> XYZ (D65) -> CIELAB, with `L*` rescaled to `[0, 255]`.
pub fn rgb_to_lab(img: &ImageRGB) -> LabPlanes {
    let (w, h) = img.dims();
    let n = w * h;
    let (mut l, mut a, mut b) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for i in 0..n {
        let [ls, as_, bs] =
            srgb_pixel_to_lab([img.r.data[i], img.g.data[i], img.b.data[i]]);
        l.push((ls * LIGHTNESS_SCALE).clamp(0.0, 255.0));
        a.push(as_);
        b.push(bs);
    }
    let plane = |data| ImagePlane {
        width: w,
        height: h,
        data,
    };
    LabPlanes {
        l: plane(l),
        a: plane(a),
        b: plane(b),
    }
}

/// Normalized 1-D Gaussian taps for radius `ceil(3 sigma)`, centre first.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps[0] + 2.0 * taps[1..].iter().sum::<f64>();
    for t in &mut taps {
        *t /= total;
    }
    Ok(taps)
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(plane: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
    let taps = gaussian_kernel(sigma)?;
    let (w, h) = plane.dims();
    if w == 0 || h == 0 {
        return Ok(plane.clone());
    }
    let r = taps.len() as isize - 1;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for k in -r..=r {
                acc += taps[k.unsigned_abs()] * row[clamp(x as isize + k, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for k in -r..=r {
                acc += taps[k.unsigned_abs()] * tmp[clamp(y as isize + k, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Ok(ImagePlane {
        width: w,
        height: h,
        data: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ppm(w: usize, h: usize, px: &[u8]) -> Vec<u8> {
        let mut v = format!("P6\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(px);
        v
    }

    #[test]
    fn decodes_single_pixel_ppm() {
        let white = decode_image(&ppm(1, 1, &[255, 255, 255])).unwrap();
        assert_eq!(white.pixel(0, 0), [1.0, 1.0, 1.0]);
        let black = decode_image(&ppm(1, 1, &[0, 0, 0])).unwrap();
        assert_eq!(black.pixel(0, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn separates_channels() {
        let img = decode_image(&ppm(2, 1, &[255, 0, 0, 0, 255, 0])).unwrap();
        assert_eq!(img.r().as_slice(), &[1.0, 0.0]);
        assert_eq!(img.g().as_slice(), &[0.0, 1.0]);
        assert_eq!(img.b().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let bytes = b"P6 # made by hand\n1 1\n# max\n255\n\x01\x02\x03".to_vec();
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.to_rgb8(), vec![1, 2, 3]);
    }

    #[test]
    fn rejects_bad_ppm() {
        let truncated = ppm(2, 2, &[0; 5]);
        assert!(matches!(decode_image(&truncated), Err(Error::Format(_))));
        let deep = b"P6\n1 1\n65535\n\0\0\0\0\0\0".to_vec();
        assert!(matches!(decode_image(&deep), Err(Error::Format(_))));
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/nonexistent/relight/input.ppm").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn quantizes_half_up() {
        let gray = ImageRGB::from_gray(&ImagePlane::filled(1, 1, 0.5));
        assert_eq!(gray.to_rgb8(), vec![128, 128, 128]);
        let mag = ImageRGB::new(
            ImagePlane::filled(1, 1, 1.0),
            ImagePlane::filled(1, 1, 0.0),
            ImagePlane::filled(1, 1, 1.0),
        )
        .unwrap();
        assert_eq!(encode_ppm(&mag)[11..], [255, 0, 255]);
    }

    #[test]
    fn every_code_round_trips_through_both_formats() {
        let codes: Vec<u8> = (0..=255u8).flat_map(|c| [c, 255 - c, c / 2]).collect();
        let img = ImageRGB::from_rgb8(16, 16, &codes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["all.ppm", "all.png"] {
            let path = dir.path().join(name);
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back.to_rgb8(), codes, "{name}");
            for (a, b) in img.channels().iter().zip(back.channels()) {
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((x - y).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn construction_clamps() {
        let img = ImageRGB::new(
            ImagePlane::filled(1, 1, 1.5),
            ImagePlane::filled(1, 1, -0.2),
            ImagePlane::filled(1, 1, 0.3),
        )
        .unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 0.3]);
    }

    #[test]
    fn luminance_weights() {
        let px = |r, g, b| {
            let img = ImageRGB::new(
                ImagePlane::filled(1, 1, r),
                ImagePlane::filled(1, 1, g),
                ImagePlane::filled(1, 1, b),
            )
            .unwrap();
            rgb_to_luminance(&img).get(0, 0)
        };
        assert!((px(1.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(px(0.0, 0.0, 0.0), 0.0);
        assert!((px(1.0, 0.0, 0.0) - 0.299).abs() < 1e-15);
    }

    #[test]
    fn lab_reference_points() {
        let black = srgb_pixel_to_lab([0.0; 3]);
        assert!(black.iter().all(|v| v.abs() < 1e-12));
        let white = srgb_pixel_to_lab([1.0; 3]);
        assert!((white[0] - 100.0).abs() < 1e-9);
        assert!(white[1].abs() < 1e-9 && white[2].abs() < 1e-9);

        // reference: L* = 116 * cbrt(Y) - 16 with Y = ((0.5 + 0.055) / 1.055)^2.4
        let y_lin: f64 = ((0.5f64 + 0.055) / 1.055).powf(2.4);
        let expected = 116.0 * y_lin.cbrt() - 16.0;
        let gray = rgb_to_lab(&ImageRGB::from_gray(&ImagePlane::filled(1, 1, 0.5)));
        assert!((gray.l.get(0, 0) - expected * 2.55).abs() < 1e-9);
        assert!((expected - 53.389).abs() < 1e-2);
        assert!((gray.l.get(0, 0) - 136.1).abs() < 0.1);
        assert!(gray.a.get(0, 0).abs() < 1e-3 && gray.b.get(0, 0).abs() < 1e-3);
    }

    #[test]
    fn gray_axis_is_neutral() {
        for i in 0..=100 {
            let v = f64::from(i) / 100.0;
            let [l, a, b] = srgb_pixel_to_lab([v; 3]);
            assert!((0.0..=100.0 + 1e-9).contains(&l));
            assert!(a.abs() < 1e-3 && b.abs() < 1e-3, "v={v} a={a} b={b}");
        }
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let p = ImagePlane::filled(3, 3, 1.0);
        assert!(gaussian_blur(&p, 0.0).is_err());
        assert!(gaussian_blur(&p, -1.0).is_err());
        assert!(gaussian_blur(&p, f64::NAN).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let p = ImagePlane::filled(9, 7, 0.37);
        let b = gaussian_blur(&p, 2.5).unwrap();
        assert!(b.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn blur_matches_direct_2d_convolution() {
        let n = 33;
        let sigma = 2.0;
        let mut impulse = ImagePlane::filled(n, n, 0.0);
        impulse.set(16, 16, 1.0);
        let blurred = gaussian_blur(&impulse, sigma).unwrap();

        // direct 2-D oracle: normalized product kernel over the square support
        let r = (3.0 * sigma).ceil() as i64;
        let g = |dx: i64, dy: i64| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
        let mut norm = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                norm += g(dx, dy);
            }
        }
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = (x as i64 - 16, y as i64 - 16);
                let expect = if dx.abs() <= r && dy.abs() <= r { g(dx, dy) / norm } else { 0.0 };
                assert!((blurred.get(x, y) - expect).abs() < 1e-14);
            }
        }
        // close to the continuous peak 1/(2 pi sigma^2)
        let peak = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
        assert!((blurred.get(16, 16) - peak).abs() / peak < 0.01);
        assert!((blurred.sum() - 1.0).abs() < 1e-6);
    }
}
