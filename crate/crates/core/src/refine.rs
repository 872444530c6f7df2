//! Shading refinement as a sparse SPD linear system.
//!
//! The refined shading `s` minimizes
//!
//! ```text
//! |s - S'|^2 + lambda_g (s^T Dx^T Ax Dx s + s^T Dy^T Ay Dy s) + lambda_u s^T G s
//! ```
//!
//! whose stationarity condition is `(I + lambda_g H + lambda_u G) s = S'` with
//! `H = Dx^T Ax Dx + Dy^T Ay Dy`. `Dx`, `Dy` are forward differences with a
//! zero last column/row, so `H` is the weighted 5-point grid Laplacian with
//! natural boundaries. `G` is the global exposure-balance term, see
//! [`GlobalMode`]. The operator is applied matrix-free and solved with
//! Jacobi-preconditioned conjugate gradients.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::exposure::ExposureMasks;
use crate::imageio::{ensure_same_dims, ImagePlane};

/// Formulation of the global under/over balance penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlobalMode {
    /// `G = k k^T` with `k = Mu / (Nu (Y + e)) - Mo / (No (Y + e))`: penalizes
    /// the squared difference of the two region means of `s / Y`.
    #[default]
    MeanDiff,
    /// `G = K^T K` with diagonal `K = (Mu - Mo) / (Y + e)`.
    Diagonal,
}

impl std::str::FromStr for GlobalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_diff" => Ok(Self::MeanDiff),
            "diagonal" => Ok(Self::Diagonal),
            _ => Err(Error::InvalidParameter(format!(
                "global mode `{s}` (expected mean_diff|diagonal)"
            ))),
        }
    }
}

impl std::fmt::Display for GlobalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MeanDiff => "mean_diff",
            Self::Diagonal => "diagonal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub lambda_g: f64,
    pub lambda_u: f64,
    /// Exponent on the luminance gradient in the smoothness weights.
    pub alpha: f64,
    /// Floor added to `|dY|^alpha` before inversion.
    pub epsilon_w: f64,
    /// Lower bound on shading, applied before and after the solve.
    pub s_min: f64,
    pub global_mode: GlobalMode,
    /// Offset in `1 / (Y + e)` of the global term.
    pub y_epsilon: f64,
    pub cg_tol: f64,
    /// `None` picks `10 sqrt(N)` clamped to `[100, 5000]`.
    pub cg_max_iter: Option<usize>,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            lambda_g: 0.15,
            lambda_u: 1.0,
            alpha: 1.2,
            epsilon_w: 1e-4,
            s_min: 0.01,
            global_mode: GlobalMode::MeanDiff,
            y_epsilon: 1e-3,
            cg_tol: 1e-8,
            cg_max_iter: None,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda_g,
            self.lambda_u,
            self.alpha,
            self.epsilon_w,
            self.s_min,
            self.y_epsilon,
            self.cg_tol,
        ]
        .iter()
        .all(|v| v.is_finite());
        let ok = finite
            && self.lambda_g >= 0.0
            && self.lambda_u >= 0.0
            && self.alpha > 0.0
            && self.epsilon_w > 0.0
            && self.s_min > 0.0
            && self.s_min < 1.0
            && self.y_epsilon > 0.0
            && self.cg_tol > 0.0
            && self.cg_max_iter != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("refine parameters {self:?}")))
        }
    }

    pub fn max_iterations(&self, pixels: usize) -> usize {
        self.cg_max_iter
            .unwrap_or_else(|| ((10.0 * (pixels as f64).sqrt()) as usize).clamp(100, 5000))
    }
}

/// Forward difference along x; the last column is 0.
pub fn forward_dx(p: &ImagePlane) -> ImagePlane {
    let (w, _) = p.dims();
    ImagePlane::from_fn(p.width(), p.height(), |x, y| {
        if x + 1 < w {
            p.get(x + 1, y) - p.get(x, y)
        } else {
            0.0
        }
    })
}

/// Forward difference along y; the last row is 0.
pub fn forward_dy(p: &ImagePlane) -> ImagePlane {
    let (_, h) = p.dims();
    ImagePlane::from_fn(p.width(), p.height(), |x, y| {
        if y + 1 < h {
            p.get(x, y + 1) - p.get(x, y)
        } else {
            0.0
        }
    })
}

/// Smoothness weights `(|dY|^alpha + eps)^-1` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientWeights {
    pub ax: ImagePlane,
    pub ay: ImagePlane,
}

pub fn gradient_weights(y: &ImagePlane, alpha: f64, epsilon_w: f64) -> GradientWeights {
    let w = |g: f64| 1.0 / (g.abs().powf(alpha) + epsilon_w);
    GradientWeights {
        ax: forward_dx(y).map(w),
        ay: forward_dy(y).map(w),
    }
}

/// Zeroes the weights of edges that join a face pixel to a background pixel,
/// so the background fill does not bleed into the face shading.
pub fn decouple_background(weights: &mut GradientWeights, face: &ImagePlane) -> Result<()> {
    ensure_same_dims(weights.ax.dims(), face.dims())?;
    let (w, h) = face.dims();
    let inside = |x: usize, y: usize| face.get(x, y) > 0.5;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && inside(x, y) != inside(x + 1, y) {
                weights.ax.set(x, y, 0.0);
            }
            if y + 1 < h && inside(x, y) != inside(x, y + 1) {
                weights.ay.set(x, y, 0.0);
            }
        }
    }
    Ok(())
}

/// `S' = max(s0, s_min, Y)` so that `Y / S' <= 1` and never divides by ~0.
pub fn truncate_init(s0: &ImagePlane, y: &ImagePlane, s_min: f64) -> Result<ImagePlane> {
    s0.zip_map(y, |s, l| s.max(s_min.max(l)))
}

/// The global balance term `G`.
#[derive(Debug, Clone, PartialEq)]
pub enum GlobalTerm {
    /// No global penalty (one of the regions was empty or `lambda_u = 0`).
    None,
    /// `G = k k^T`.
    RankOne(Vec<f64>),
    /// `G = diag(k)^2`.
    Diagonal(Vec<f64>),
}

impl GlobalTerm {
    /// `G[p][p]`.
    fn diag(&self, p: usize) -> f64 {
        match self {
            Self::None => 0.0,
            Self::RankOne(k) | Self::Diagonal(k) => k[p] * k[p],
        }
    }

    /// `x^T G x`, evaluated directly: `(k.x)^2` or `sum (k_p x_p)^2`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        match self {
            Self::None => 0.0,
            Self::RankOne(k) => {
                let d: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                d * d
            }
            Self::Diagonal(k) => k.iter().zip(x).map(|(a, b)| (a * b) * (a * b)).sum(),
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, Self::None)
    }
}

/// `A = I + lambda_g H + lambda_u G` together with its right-hand side `S'`.
#[derive(Debug, Clone)]
pub struct RefineSystem {
    width: usize,
    height: usize,
    ax: Vec<f64>,
    ay: Vec<f64>,
    lambda_g: f64,
    lambda_u: f64,
    global: GlobalTerm,
    rhs: ImagePlane,
}

/// Assembles the system.
///
/// `masks` must already be restricted to the face; if either region is then
/// empty the global term is dropped with a warning.
pub fn build_system(
    s_prime: &ImagePlane,
    weights: &GradientWeights,
    masks: &ExposureMasks,
    y: &ImagePlane,
    params: &RefineParams,
) -> Result<RefineSystem> {
    params.validate()?;
    let dims = s_prime.dims();
    ensure_same_dims(dims, weights.ax.dims())?;
    ensure_same_dims(dims, weights.ay.dims())?;
    ensure_same_dims(dims, masks.under.dims())?;
    ensure_same_dims(dims, masks.over.dims())?;
    ensure_same_dims(dims, y.dims())?;
    if weights
        .ax
        .as_slice()
        .iter()
        .chain(weights.ay.as_slice())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("smoothness weight".into()));
    }

    let n_under = masks.under_count();
    let n_over = masks.over_count();
    if n_under + n_over == 0 {
        return Err(Error::EmptyMask);
    }

    let mu = masks.under.as_slice();
    let mo = masks.over.as_slice();
    let inv_y: Vec<f64> = y
        .as_slice()
        .iter()
        .map(|&v| 1.0 / (v + params.y_epsilon))
        .collect();
    let global = if params.lambda_u == 0.0 {
        GlobalTerm::None
    } else if n_under == 0 || n_over == 0 {
        warn!(
            "global uniformity term dropped: {} underexposed and {} overexposed face pixels",
            n_under, n_over
        );
        GlobalTerm::None
    } else {
        match params.global_mode {
            GlobalMode::MeanDiff => {
                let (nu, no) = (n_under as f64, n_over as f64);
                GlobalTerm::RankOne(
                    (0..inv_y.len())
                        .map(|p| (mu[p] / nu - mo[p] / no) * inv_y[p])
                        .collect(),
                )
            }
            GlobalMode::Diagonal => GlobalTerm::Diagonal(
                (0..inv_y.len())
                    .map(|p| (mu[p] - mo[p]) * inv_y[p])
                    .collect(),
            ),
        }
    };
    let lambda_u = if global.is_active() { params.lambda_u } else { 0.0 };

    Ok(RefineSystem {
        width: dims.0,
        height: dims.1,
        ax: weights.ax.as_slice().to_vec(),
        ay: weights.ay.as_slice().to_vec(),
        lambda_g: params.lambda_g,
        lambda_u,
        global,
        rhs: s_prime.clone(),
    })
}

impl RefineSystem {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rhs(&self) -> &ImagePlane {
        &self.rhs
    }

    pub fn global_term(&self) -> &GlobalTerm {
        &self.global
    }

    pub fn lambda_g(&self) -> f64 {
        self.lambda_g
    }

    /// Effective global weight (0 when the term was dropped).
    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        assert_eq!(x.len(), w * h);
        assert_eq!(out.len(), w * h);
        out.copy_from_slice(x);
        if self.lambda_g != 0.0 {
            let lg = self.lambda_g;
            for yy in 0..h {
                for xx in 0..w {
                    let p = yy * w + xx;
                    if xx + 1 < w {
                        // edge p -- p+1, weight ax[p]
                        let f = lg * self.ax[p] * (x[p + 1] - x[p]);
                        out[p] -= f;
                        out[p + 1] += f;
                    }
                    if yy + 1 < h {
                        let f = lg * self.ay[p] * (x[p + w] - x[p]);
                        out[p] -= f;
                        out[p + w] += f;
                    }
                }
            }
        }
        if self.lambda_u != 0.0 {
            match &self.global {
                GlobalTerm::None => {}
                GlobalTerm::RankOne(k) => {
                    let d: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * self.lambda_u;
                    for (o, kp) in out.iter_mut().zip(k) {
                        *o += d * kp;
                    }
                }
                GlobalTerm::Diagonal(k) => {
                    for ((o, kp), xp) in out.iter_mut().zip(k).zip(x) {
                        *o += self.lambda_u * kp * kp * xp;
                    }
                }
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }

    /// Diagonal of `A`, used as the Jacobi preconditioner.
    pub fn diagonal(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut d = vec![1.0; w * h];
        for yy in 0..h {
            for xx in 0..w {
                let p = yy * w + xx;
                if xx + 1 < w {
                    d[p] += self.lambda_g * self.ax[p];
                    d[p + 1] += self.lambda_g * self.ax[p];
                }
                if yy + 1 < h {
                    d[p] += self.lambda_g * self.ay[p];
                    d[p + w] += self.lambda_g * self.ay[p];
                }
                d[p] += self.lambda_u * self.global.diag(p);
            }
        }
        d
    }

    /// `A s - S'`, which is half the gradient of [`RefineSystem::loss`].
    pub fn residual(&self, s: &[f64]) -> Vec<f64> {
        let mut r = self.apply_vec(s);
        for (ri, bi) in r.iter_mut().zip(self.rhs.as_slice()) {
            *ri -= bi;
        }
        r
    }

    /// `|A s - S'| / |S'|`.
    pub fn relative_residual(&self, s: &[f64]) -> f64 {
        norm(&self.residual(s)) / norm(self.rhs.as_slice())
    }

    /// The objective, evaluated term by term from its definition.
    pub fn loss(&self, s: &[f64]) -> f64 {
        let (w, h) = (self.width, self.height);
        let base: f64 = s
            .iter()
            .zip(self.rhs.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mut smooth = 0.0;
        for yy in 0..h {
            for xx in 0..w {
                let p = yy * w + xx;
                let dx = if xx + 1 < w { s[p + 1] - s[p] } else { 0.0 };
                let dy = if yy + 1 < h { s[p + w] - s[p] } else { 0.0 };
                smooth += self.ax[p] * dx * dx + self.ay[p] * dy * dy;
            }
        }
        base + self.lambda_g * smooth + self.lambda_u * self.global.quadratic(s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate-gradient output.
#[derive(Debug, Clone)]
pub struct Solution {
    /// The CG iterate, before the `s_min` floor.
    pub raw: ImagePlane,
    /// `raw` floored at `s_min`.
    pub shading: ImagePlane,
    pub iterations: usize,
    /// `|A raw - S'| / |S'|`, recomputed from the operator.
    pub residual: f64,
    /// Recurrence residual after each iteration, starting with the initial one.
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned CG started from `S'`.
pub fn solve(system: &RefineSystem, params: &RefineParams) -> Result<Solution> {
    params.validate()?;
    let n = system.len();
    let b = system.rhs.as_slice();
    let b_norm = norm(b);
    let max_iter = params.max_iterations(n);
    let tol = params.cg_tol;

    let mut x = b.to_vec();
    let (w, h) = system.dims();
    let finish = |x: Vec<f64>, iterations, history| -> Result<Solution> {
        let raw = ImagePlane::new(w, h, x)?;
        let residual = if b_norm > 0.0 {
            system.relative_residual(raw.as_slice())
        } else {
            0.0
        };
        let shading = raw.map(|v| v.max(params.s_min));
        Ok(Solution {
            raw,
            shading,
            iterations,
            residual,
            history,
        })
    };
    if b_norm == 0.0 {
        return finish(vec![0.0; n], 0, vec![0.0]);
    }

    let inv_diag: Vec<f64> = system.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r: Vec<f64> = system.residual(&x).iter().map(|v| -v).collect();
    let mut rel = norm(&r) / b_norm;
    let mut history = vec![rel];
    if rel <= tol {
        return finish(x, 0, history);
    }

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        system.apply(&p, &mut ap);
        let step = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rel = norm(&r) / b_norm;
        history.push(rel);
        if rel <= tol {
            // confirm against the true residual; restart if rounding drifted
            r = system.residual(&x).iter().map(|v| -v).collect();
            let true_rel = norm(&r) / b_norm;
            if true_rel <= tol {
                debug!("cg converged in {it} iterations, residual {true_rel:e}");
                return finish(x, it, history);
            }
            z = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: system.relative_residual(&x),
    })
}

/// Everything produced while refining one shading field.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    /// Truncated initialization `S'`.
    pub initial: ImagePlane,
    pub weights: GradientWeights,
    pub solution: Solution,
    /// Whether the global term took part in the solve.
    pub global_active: bool,
}

impl RefineOutcome {
    pub fn shading(&self) -> &ImagePlane {
        &self.solution.shading
    }
}

/// `truncate_init -> gradient_weights -> build_system -> solve`.
///
/// `masks` are intersected with `face` before assembly and smoothness edges
/// crossing the face boundary are cut (see [`decouple_background`]).
pub fn refine_shading(
    y: &ImagePlane,
    s0: &ImagePlane,
    face: &ImagePlane,
    masks: &ExposureMasks,
    params: &RefineParams,
) -> Result<RefineOutcome> {
    params.validate()?;
    ensure_same_dims(y.dims(), s0.dims())?;
    ensure_same_dims(y.dims(), face.dims())?;
    let initial = truncate_init(s0, y, params.s_min)?;
    let mut weights = gradient_weights(y, params.alpha, params.epsilon_w);
    decouple_background(&mut weights, face)?;
    let face_masks = masks.intersect(face)?;
    let system = build_system(&initial, &weights, &face_masks, y, params)?;
    let solution = solve(&system, params)?;
    Ok(RefineOutcome {
        initial,
        weights,
        global_active: system.global_term().is_active(),
        solution,
    })
}
