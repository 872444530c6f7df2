//! One-image enhancement: luminance and Lab -> SH lighting fit -> exposure
//! masks -> refinement -> normalization -> division.

use std::fmt;

use crate::enhance::{self, EnhanceParams};
use crate::error::Error;
use crate::exposure::{self, ExposureMasks, ExposureParams};
use crate::imageio::{self, ImagePlane, ImageRGB};
use crate::metrics::{self, MetricReport};
use crate::normals::{self, NormalMap};
use crate::refine::{self, RefineOutcome, RefineParams};
use crate::sh::{self, ShCoeffs9};

/// Pipeline stage, used to label failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Normals,
    Lighting,
    Exposure,
    Refine,
    Enhance,
    Metrics,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Normals => "normals",
            Stage::Lighting => "lighting",
            Stage::Exposure => "exposure",
            Stage::Refine => "refine",
            Stage::Enhance => "enhance",
            Stage::Metrics => "metrics",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineParams {
    pub exposure: ExposureParams,
    pub refine: RefineParams,
    pub enhance: EnhanceParams,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), Error> {
        self.exposure.validate()?;
        self.refine.validate()?;
        self.enhance.validate()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub luminance: ImagePlane,
    pub face: ImagePlane,
    pub coeffs: ShCoeffs9,
    /// SH reconstruction before truncation.
    pub shading_sh: ImagePlane,
    /// Whole-image masks (not yet restricted to the face).
    pub masks: ExposureMasks,
    pub refine: RefineOutcome,
    /// Refined shading after percentile normalization; what the image is divided by.
    pub shading: ImagePlane,
    pub enhanced: ImageRGB,
}

pub fn run(img: &ImageRGB, normals: &NormalMap, params: &PipelineParams) -> Result<PipelineOutput, StageError> {
    if img.dims() != normals.dims() {
        return Err(StageError {
            stage: Stage::Normals,
            source: Error::Dimension(format!(
                "normal map {}x{} does not match image {}x{}",
                normals.width(),
                normals.height(),
                img.width(),
                img.height()
            )),
        });
    }
    let s_min = params.refine.s_min;
    let luminance = imageio::rgb_to_luminance(img);
    let face = normals::face_mask(normals);

    let coeffs = sh::project_lighting(&luminance, normals).at(Stage::Lighting)?;
    let shading_sh = sh::reconstruct_irradiance(&coeffs, normals);

    let lab = imageio::rgb_to_lab(img);
    let masks = exposure::detect(&lab, &params.exposure).at(Stage::Exposure)?;

    let refined = refine::refine_shading(&luminance, &shading_sh, &face, &masks, &params.refine)
        .at(Stage::Refine)?;

    let shading = enhance::normalize_shading(
        refined.shading(),
        &face,
        params.enhance.norm_percentile,
        s_min,
    )
    .at(Stage::Enhance)?
    .map(|v| v.max(s_min));
    let enhanced = enhance::apply_shading(img, &shading, s_min).at(Stage::Enhance)?;

    Ok(PipelineOutput {
        luminance,
        face,
        coeffs,
        shading_sh,
        masks,
        refine: refined,
        shading,
        enhanced,
    })
}

/// Metric lines for the original (LOM against itself, so 0) and the result.
pub fn metric_reports(
    name: &str,
    original: &ImageRGB,
    enhanced: &ImageRGB,
    face_only: Option<&ImagePlane>,
) -> Result<[MetricReport; 2], Error> {
    let y0 = imageio::rgb_to_luminance(original);
    let y1 = imageio::rgb_to_luminance(enhanced);
    let block = metrics::DEFAULT_EME_BLOCK;
    let (grid, tie) = (metrics::DEFAULT_LOM_GRID, metrics::DEFAULT_LOM_TIE);
    let score = |y: &ImagePlane| -> Result<(f64, f64, f64), Error> {
        Ok(match face_only {
            Some(m) => (
                metrics::lom_masked(&y0, y, grid, tie, m)?,
                metrics::eme_masked(y, block, m)?,
                metrics::discrete_entropy_masked(y, m)?,
            ),
            None => (
                metrics::lom(&y0, y, grid, tie)?,
                metrics::eme(y, block)?,
                metrics::discrete_entropy(y),
            ),
        })
    };
    let (lom0, eme0, de0) = score(&y0)?;
    let (lom1, eme1, de1) = score(&y1)?;
    Ok([
        MetricReport {
            image: name.to_string(),
            lom: lom0,
            eme: eme0,
            de: de0,
        },
        MetricReport {
            image: format!("{name}_enhanced"),
            lom: lom1,
            eme: eme1,
            de: de1,
        },
    ])
}
