use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{debug, info};
use relight_core::exposure;
use relight_core::imageio::{self, ImagePlane};
use relight_core::metrics::MetricReport;
use relight_core::normals::{self, NormalMap};
use relight_core::pipeline::{self, AtStage, PipelineOutput, Stage, StageError};
use relight_core::Error;

use crate::config::{Job, NormalSource};

/// Result of one image: metric lines (if requested) or the failure.
pub type ItemResult = Result<Vec<MetricReport>, StageError>;

fn output_extension(input: &Path) -> &'static str {
    match input.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => "png",
        _ => "ppm",
    }
}

fn stem(input: &Path) -> String {
    input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string())
}

fn load_normals(job: &Job, index: usize, dims: (usize, usize)) -> Result<NormalMap, StageError> {
    match &job.normals {
        NormalSource::Files(paths) => normals::load_normal_map(&paths[index]).at(Stage::Normals),
        NormalSource::Ellipsoid(e) => e.normals(dims.0, dims.1).at(Stage::Normals),
    }
}

fn dump(out: &PipelineOutput, dir: &Path, stem: &str, ext: &str) -> Result<(), Error> {
    let path = |suffix: &str| dir.join(format!("{stem}_{suffix}.{ext}"));
    imageio::save_plane(&out.refine.initial, path("shading_init"))?;
    imageio::save_plane(&out.shading, path("shading_refined"))?;
    imageio::save_plane(&out.masks.under, path("mask_u"))?;
    imageio::save_plane(&out.masks.over, path("mask_o"))?;
    imageio::save_plane(&exposure::likelihood_display(&out.masks.likelihood), path("likelihood"))?;
    let mut text = String::new();
    for (i, r) in out.refine.solution.history.iter().enumerate() {
        text.push_str(&format!("{i} {r:e}\n"));
    }
    imageio::write_atomic(&dir.join(format!("{stem}_residuals.txt")), text.as_bytes())
}

/// Runs the whole pipeline for input `index` and writes its artifacts.
pub fn process(job: &Job, index: usize) -> ItemResult {
    let start = Instant::now();
    let input = &job.inputs[index];
    let img = imageio::load_image(input).at(Stage::Load)?;
    let nm = load_normals(job, index, img.dims())?;
    let out = pipeline::run(&img, &nm, &job.params)?;
    debug!(
        "{}: {} under / {} over pixels, {} CG iterations, residual {:e}",
        input.display(),
        out.masks.intersect(&out.face).map(|m| m.under_count()).unwrap_or(0),
        out.masks.intersect(&out.face).map(|m| m.over_count()).unwrap_or(0),
        out.refine.solution.iterations,
        out.refine.solution.residual
    );

    let (stem, ext) = (stem(input), output_extension(input));
    std::fs::create_dir_all(&job.out_dir)
        .map_err(|e| Error::Io {
            path: job.out_dir.clone(),
            source: e,
        })
        .at(Stage::Write)?;
    let target: PathBuf = job.out_dir.join(format!("{stem}_enhanced.{ext}"));
    imageio::save_image(&out.enhanced, &target).at(Stage::Write)?;
    if job.dump {
        dump(&out, &job.out_dir, &stem, ext).at(Stage::Write)?;
    }

    let reports = if job.metrics {
        let face: Option<&ImagePlane> = job.metrics_face_only.then_some(&out.face);
        pipeline::metric_reports(&stem, &img, &out.enhanced, face)
            .at(Stage::Metrics)?
            .to_vec()
    } else {
        Vec::new()
    };
    info!("{} -> {} in {:.0?}", input.display(), target.display(), start.elapsed());
    Ok(reports)
}

/// Processes every input, `job.jobs` at a time; results keep input order.
pub fn run_all(job: &Job) -> Vec<ItemResult> {
    let n = job.inputs.len();
    let workers = job.jobs.min(n).max(1);
    if workers == 1 {
        return (0..n).map(|i| process(job, i)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ItemResult>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = process(job, i);
                slots.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every input processed"))
        .collect()
}
