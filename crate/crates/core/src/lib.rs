//! Face-lighting enhancement driven by surface normals.
//!
//! An initial shading field is fitted to the image luminance with nine
//! real spherical harmonics evaluated at per-pixel face normals. It is then
//! refined by a quadratic objective (fidelity, gradient-weighted smoothness and
//! an under/over-exposure balance term) solved as a sparse SPD system, and the
//! image is divided by the result.
//!
//! ```no_run
//! use relight_core::{imageio, normals, pipeline};
//!
//! let img = imageio::load_image("face.ppm")?;
//! let nm = normals::load_normal_map("face_normals.png")?;
//! let out = pipeline::run(&img, &nm, &Default::default())?;
//! imageio::save_image(&out.enhanced, "face_enhanced.ppm")?;
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod enhance;
pub mod error;
pub mod exposure;
pub mod imageio;
pub mod metrics;
pub mod normals;
pub mod pipeline;
pub mod refine;
pub mod sh;
pub mod synth;

pub use error::{Error, Result};
pub use imageio::{ImagePlane, ImageRGB};
pub use normals::NormalMap;
pub use sh::ShCoeffs9;
