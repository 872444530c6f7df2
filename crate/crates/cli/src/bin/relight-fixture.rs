//! Writes a synthetic portrait, its normal map and the evenly lit reference.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use relight_core::{imageio, normals, synth, ImagePlane};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    /// Hard light from the right
    Side,
    /// Uniform light
    Uniform,
}

#[derive(Debug, Parser)]
#[command(name = "relight-fixture", version, about = "Generate synthetic test portraits")]
struct Args {
    #[arg(long, value_enum, default_value = "side")]
    kind: Kind,
    /// Frame width and height in pixels
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Light level for --kind uniform
    #[arg(long, default_value_t = 0.8)]
    level: f64,
    /// Constant albedo instead of the default texture (--kind uniform)
    #[arg(long, value_name = "VALUE")]
    flat_albedo: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Image format for the portrait and reference
    #[arg(long, default_value = "ppm", value_parser = ["ppm", "png"])]
    format: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (name, portrait) = match args.kind {
        Kind::Side => ("side", synth::side_lit_portrait(args.size)),
        Kind::Uniform => match args.flat_albedo {
            Some(a) => (
                "uniform",
                synth::uniform_lit_with_albedo(args.size, args.level, &ImagePlane::filled(args.size, args.size, a)),
            ),
            None => ("uniform", synth::uniform_lit_portrait(args.size, args.level)),
        },
    };
    let run = || -> relight_core::Result<()> {
        let p = portrait?;
        std::fs::create_dir_all(&args.out_dir).map_err(|e| relight_core::Error::Io {
            path: args.out_dir.clone(),
            source: e,
        })?;
        let ext = &args.format;
        imageio::save_image(&p.image, args.out_dir.join(format!("{name}.{ext}")))?;
        imageio::save_image(&p.evenly_lit, args.out_dir.join(format!("{name}_reference.{ext}")))?;
        normals::save_normal_map(&p.normals, args.out_dir.join(format!("{name}_normals.png")))
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relight-fixture: {e}");
            ExitCode::FAILURE
        }
    }
}
