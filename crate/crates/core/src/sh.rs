//! Real spherical harmonics up to band 2.
//!
//! The basis is built from the associated Legendre recurrence without the
//! Condon-Shortley phase, with normalization
//! `K(l, m) = sqrt((2l + 1) / 4pi * (l - |m|)! / (l + |m|)!)` and a `sqrt(2)`
//! factor on the `m != 0` terms. Coefficients are ordered
//! `(0,0) (1,-1) (1,0) (1,1) (2,-2) (2,-1) (2,0) (2,1) (2,2)`.

use std::f64::consts::PI;
use std::ops::Index;

use crate::error::{Error, Result};
use crate::imageio::{ensure_same_dims, ImagePlane};
use crate::normals::NormalMap;

/// Number of basis functions for bands `l <= 2`.
pub const SH_COUNT: usize = 9;

/// `(l, m)` pairs in coefficient order.
pub const SH_ORDER: [(usize, i32); SH_COUNT] = [
    (0, 0),
    (1, -1),
    (1, 0),
    (1, 1),
    (2, -2),
    (2, -1),
    (2, 0),
    (2, 1),
    (2, 2),
];

/// Associated Legendre polynomial `P_l^m(x)` for `0 <= m <= l <= 2`.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> Result<f64> {
    if m > l || l > 2 {
        return Err(Error::InvalidParameter(format!(
            "Legendre index (l={l}, m={m}) outside 0 <= m <= l <= 2"
        )));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Legendre argument {x} outside [-1, 1]"
        )));
    }
    Ok(legendre_unchecked(l, m, x))
}

fn legendre_unchecked(l: usize, m: usize, x: f64) -> f64 {
    // P_m^m = (2m - 1)!! (1 - x^2)^(m/2)
    let mut pmm = 1.0;
    if m > 0 {
        let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut odd = 1.0;
        for _ in 0..m {
            pmm *= odd * s;
            odd += 2.0;
        }
    }
    if l == m {
        return pmm;
    }
    let mut pmm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmm1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * (2 * ll - 1) as f64 * pmm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmm1;
        pmm1 = pll;
    }
    pll
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Normalization constant `K(l, m)`.
pub fn sh_norm(l: usize, m: i32) -> f64 {
    let am = m.unsigned_abs() as usize;
    ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt()
}

/// A unit direction on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction([f64; 3]);

impl Direction {
    /// Accepts vectors within `1e-3` of unit length and renormalizes them.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let len = (x * x + y * y + z * z).sqrt();
        if !len.is_finite() || (len - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidParameter(format!(
                "direction ({x}, {y}, {z}) has length {len}, expected 1"
            )));
        }
        Ok(Self([x / len, y / len, z / len]))
    }

    /// Normalizes any nonzero finite vector.
    pub fn normalize(v: [f64; 3]) -> Result<Self> {
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize vector {v:?}"
            )));
        }
        Ok(Self(v.map(|c| c / len)))
    }

    /// `theta` is the polar angle from +z, `phi` the azimuth from +x.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self([
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        ])
    }

    pub fn xyz(&self) -> [f64; 3] {
        self.0
    }

    pub fn theta(&self) -> f64 {
        self.0[2].clamp(-1.0, 1.0).acos()
    }

    pub fn phi(&self) -> f64 {
        self.0[1].atan2(self.0[0])
    }
}

/// The nine real basis functions evaluated at `dir`.
pub fn sh_basis9(dir: &Direction) -> [f64; SH_COUNT] {
    let cos_theta = dir.0[2].clamp(-1.0, 1.0);
    let phi = dir.phi();
    SH_ORDER.map(|(l, m)| {
        let am = m.unsigned_abs() as usize;
        let p = legendre_unchecked(l, am, cos_theta);
        let k = sh_norm(l, m);
        match m {
            0 => k * p,
            m if m > 0 => std::f64::consts::SQRT_2 * k * (f64::from(m) * phi).cos() * p,
            m => std::f64::consts::SQRT_2 * k * (f64::from(-m) * phi).sin() * p,
        }
    })
}

/// Lighting coefficients for the nine basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShCoeffs9(pub [f64; SH_COUNT]);

impl ShCoeffs9 {
    pub fn new(h: [f64; SH_COUNT]) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SH coefficient".into()));
        }
        Ok(Self(h))
    }

    /// Coefficients of a lighting field that is `c` everywhere.
    pub fn constant(c: f64) -> Self {
        let mut h = [0.0; SH_COUNT];
        h[0] = c * (4.0 * PI).sqrt();
        Self(h)
    }

    pub fn evaluate(&self, dir: &Direction) -> f64 {
        sh_basis9(dir).iter().zip(&self.0).map(|(y, h)| y * h).sum()
    }

    pub fn as_array(&self) -> &[f64; SH_COUNT] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Index<usize> for ShCoeffs9 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Least-squares fit of `y` over the valid pixels of `normals`.
///
/// Minimizes `sum_p (Y_p - sum_i h_i y_i(n_p))^2` through the 9x9 normal
/// equations, factored with a diagonally pivoted Cholesky so a degenerate
/// normal distribution is reported with its numerical rank.
pub fn project_lighting(y: &ImagePlane, normals: &NormalMap) -> Result<ShCoeffs9> {
    ensure_same_dims(y.dims(), normals.dims())?;
    let mut gram = [[0.0; SH_COUNT]; SH_COUNT];
    let mut rhs = [0.0; SH_COUNT];
    let mut count = 0usize;
    for (i, n) in normals.iter_valid() {
        let basis = sh_basis9(&n);
        let v = y.as_slice()[i];
        for a in 0..SH_COUNT {
            rhs[a] += basis[a] * v;
            for b in a..SH_COUNT {
                gram[a][b] += basis[a] * basis[b];
            }
        }
        count += 1;
    }
    if count < SH_COUNT {
        return Err(Error::TooFewSamples {
            needed: SH_COUNT,
            found: count,
        });
    }
    for a in 0..SH_COUNT {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }
    let h = solve_spd_pivoted(gram, rhs)?;
    ShCoeffs9::new(h)
}

/// Solves a small SPD system with symmetric pivoting; fails on rank loss.
fn solve_spd_pivoted(
    mut a: [[f64; SH_COUNT]; SH_COUNT],
    b: [f64; SH_COUNT],
) -> Result<[f64; SH_COUNT]> {
    const N: usize = SH_COUNT;
    let mut perm: [usize; N] = std::array::from_fn(|i| i);
    let scale = (0..N).map(|i| a[i][i]).fold(0.0, f64::max);
    let tol = scale * 1e-11;
    let mut l = [[0.0; N]; N];
    let mut rank = 0;
    for k in 0..N {
        // largest remaining Schur-complement diagonal
        let (piv, d) = (k..N)
            .map(|i| (i, a[i][i]))
            .fold((k, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        if !(d > tol) {
            break;
        }
        a.swap(k, piv);
        for row in a.iter_mut() {
            row.swap(k, piv);
        }
        l.swap(k, piv);
        perm.swap(k, piv);

        let lkk = d.sqrt();
        l[k][k] = lkk;
        for i in (k + 1)..N {
            l[i][k] = a[i][k] / lkk;
        }
        for i in (k + 1)..N {
            for j in (k + 1)..=i {
                let v = a[i][j] - l[i][k] * l[j][k];
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        rank += 1;
    }
    if rank < N {
        return Err(Error::RankDeficient { rank });
    }
    // P A P^T = L L^T
    let pb: [f64; N] = std::array::from_fn(|i| b[perm[i]]);
    let mut z = [0.0; N];
    for i in 0..N {
        let s: f64 = (0..i).map(|j| l[i][j] * z[j]).sum();
        z[i] = (pb[i] - s) / l[i][i];
    }
    let mut w = [0.0; N];
    for i in (0..N).rev() {
        let s: f64 = ((i + 1)..N).map(|j| l[j][i] * w[j]).sum();
        w[i] = (z[i] - s) / l[i][i];
    }
    let mut x = [0.0; N];
    for i in 0..N {
        x[perm[i]] = w[i];
    }
    Ok(x)
}

/// Fill used for pixels without a normal: neutral shading.
pub const SHADING_FILL: f64 = 1.0;

/// Evaluates the fitted lighting at every valid pixel; others get `1.0`.
pub fn reconstruct_irradiance(h: &ShCoeffs9, normals: &NormalMap) -> ImagePlane {
    let (w, ht) = normals.dims();
    let mut out = ImagePlane::filled(w, ht, SHADING_FILL);
    let data = out.as_mut_slice();
    for (i, n) in normals.iter_valid() {
        data[i] = h.evaluate(&n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_base_cases() {
        assert_eq!(assoc_legendre(0, 0, 0.3).unwrap(), 1.0);
        assert_eq!(assoc_legendre(1, 0, 0.5).unwrap(), 0.5);
        assert!((assoc_legendre(2, 0, 0.5).unwrap() + 0.125).abs() < 1e-15);
    }

    #[test]
    fn legendre_rejects_bad_indices() {
        assert!(assoc_legendre(3, 0, 0.0).is_err());
        assert!(assoc_legendre(1, 2, 0.0).is_err());
        assert!(assoc_legendre(1, 1, 1.5).is_err());
        assert!(assoc_legendre(1, 1, f64::NAN).is_err());
    }

    #[test]
    fn basis_reference_values() {
        let any = Direction::from_angles(1.1, -2.0);
        assert!((sh_basis9(&any)[0] - 0.282_094_8).abs() < 1e-7);
        let up = Direction::new(0.0, 0.0, 1.0).unwrap();
        assert!((sh_basis9(&up)[2] - 0.488_602_5).abs() < 1e-7);
    }

    #[test]
    fn basis_matches_cartesian_forms() {
        // no Condon-Shortley phase: y(1,1) = +sqrt(3/4pi) x and so on
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        let c2 = (15.0 / (4.0 * PI)).sqrt();
        let c20 = (5.0 / (16.0 * PI)).sqrt();
        let c22 = (15.0 / (16.0 * PI)).sqrt();
        for k in 0..50 {
            let d = Direction::from_angles(0.06 * k as f64, 0.37 * k as f64 - 3.0);
            let [x, y, z] = d.xyz();
            let expect = [
                (1.0 / (4.0 * PI)).sqrt(),
                c1 * y,
                c1 * z,
                c1 * x,
                c2 * x * y,
                c2 * y * z,
                c20 * (3.0 * z * z - 1.0),
                c2 * x * z,
                c22 * (x * x - y * y),
            ];
            for (got, want) in sh_basis9(&d).iter().zip(expect) {
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn direction_validation() {
        let d = Direction::new(0.0, 0.0, 1.0005).unwrap();
        assert!((d.xyz()[2] - 1.0).abs() < 1e-15);
        assert!(Direction::new(0.0, 0.0, 1.1).is_err());
        assert!(Direction::normalize([0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_coefficients_reconstruct_constant() {
        let h = ShCoeffs9::constant(0.7);
        for k in 0..20 {
            let d = Direction::from_angles(0.15 * k as f64, k as f64);
            assert!((h.evaluate(&d) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn all_invalid_reconstructs_fill() {
        let nm = NormalMap::empty(4, 3);
        let s = reconstruct_irradiance(&ShCoeffs9::constant(0.2), &nm);
        assert!(s.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn projection_errors() {
        let nm = NormalMap::empty(4, 4);
        let y = ImagePlane::filled(4, 4, 0.5);
        assert!(matches!(
            project_lighting(&y, &nm),
            Err(Error::TooFewSamples { found: 0, .. })
        ));

        let mut flat = NormalMap::empty(4, 4);
        for i in 0..16 {
            flat.set(i % 4, i / 4, Some([0.0, 0.0, 1.0]));
        }
        assert!(matches!(
            project_lighting(&y, &flat),
            Err(Error::RankDeficient { rank: 1 })
        ));

        let small = ImagePlane::filled(3, 4, 0.5);
        assert!(matches!(project_lighting(&small, &flat), Err(Error::Dimension(_))));
    }
}
