//! Flags, config files and their merge into one validated job description.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Parser;
use relight_core::exposure::LightnessTerm;
use relight_core::normals::Ellipsoid;
use relight_core::pipeline::PipelineParams;
use relight_core::refine::GlobalMode;

#[derive(Debug, Parser)]
#[command(
    name = "relight",
    version,
    allow_negative_numbers = true,
    about = "Even out face lighting using surface normals",
    after_help = "Flags override values from --config, which override built-in defaults.\n\
                  Set RELIGHT_LOG=error|warn|info|debug for diagnostics on stderr."
)]
pub struct Cli {
    /// Input image (PPM or PNG). Repeat for a batch.
    #[arg(long, value_name = "PATH", num_args = 1.., action = clap::ArgAction::Append)]
    pub input: Vec<PathBuf>,

    /// Normal map: one for every input, or one per input in the same order.
    #[arg(long, value_name = "PATH", num_args = 1.., action = clap::ArgAction::Append, conflicts_with = "ellipsoid")]
    pub normals: Vec<PathBuf>,

    /// Synthesize normals from an ellipsoid instead: cx,cy,rx,ry,rz in pixels.
    #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
    pub ellipsoid: Option<String>,

    /// Output directory (created if missing) [default: .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Smoothness weight [default: 0.15]
    #[arg(long)]
    pub lambda_g: Option<f64>,

    /// Under/over balance weight [default: 1.0]
    #[arg(long)]
    pub lambda_u: Option<f64>,

    /// Gradient sensitivity exponent [default: 1.2]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Exposure threshold on the 0..255 lightness scale [default: 128]
    #[arg(long)]
    pub alpha_t: Option<f64>,

    /// Exposure sigmoid steepness [default: 1/60]
    #[arg(long)]
    pub delta: Option<f64>,

    /// Lightness blur radius in pixels [default: 3]
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Shading floor [default: 0.01]
    #[arg(long)]
    pub s_min: Option<f64>,

    /// Form of the balance term [default: mean_diff]
    #[arg(long, value_name = "MODE", value_parser = ["mean_diff", "diagonal"])]
    pub global_mode: Option<String>,

    /// Face shading percentile mapped to 1 [default: 99]
    #[arg(long)]
    pub norm_percentile: Option<f64>,

    /// How lightness enters the exposure test [default: squared]
    #[arg(long, value_name = "TERM", value_parser = ["squared", "linear"])]
    pub exposure_mode: Option<String>,

    /// Report LOM / EME / DE as JSON lines
    #[arg(long)]
    pub metrics: bool,

    /// Restrict metrics to the face mask (implies --metrics)
    #[arg(long)]
    pub metrics_face_only: bool,

    /// Also write intermediate shading, masks, likelihood and CG residuals
    #[arg(long)]
    pub dump: bool,

    /// Images processed concurrently [default: 1]
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,

    /// Read defaults from a `key = value` file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Where the normals for each image come from.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalSource {
    /// One file per input, already paired.
    Files(Vec<PathBuf>),
    Ellipsoid(Ellipsoid),
}

#[derive(Debug, Clone)]
pub struct Job {
    pub inputs: Vec<PathBuf>,
    pub normals: NormalSource,
    pub out_dir: PathBuf,
    pub params: PipelineParams,
    pub metrics: bool,
    pub metrics_face_only: bool,
    pub dump: bool,
    pub jobs: usize,
}

/// Values gathered from a config file; every field optional.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct FileConfig {
    pub input: Vec<PathBuf>,
    pub normals: Vec<PathBuf>,
    pub ellipsoid: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub lambda_g: Option<f64>,
    pub lambda_u: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_t: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub s_min: Option<f64>,
    pub global_mode: Option<String>,
    pub norm_percentile: Option<f64>,
    pub exposure_mode: Option<String>,
    pub metrics: Option<bool>,
    pub metrics_face_only: Option<bool>,
    pub dump: Option<bool>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }

    /// Parses `key = value` lines. Relative paths are resolved against `base`.
    /// `input` and `normals` may repeat; other keys take the last value.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", n + 1));
            };
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            let at = |msg: String| ConfigError(format!("line {}: {msg}", n + 1));
            let num = || value.parse::<f64>().map_err(|_| at(format!("`{key}` needs a number, got `{value}`")));
            let flag = || match value {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(at(format!("`{key}` needs true or false, got `{value}`"))),
            };
            let path = || base.join(value);
            match key.as_str() {
                "input" => c.input.push(path()),
                "normals" => c.normals.push(path()),
                "ellipsoid" => c.ellipsoid = Some(value.to_string()),
                "out_dir" => c.out_dir = Some(path()),
                "lambda_g" => c.lambda_g = Some(num()?),
                "lambda_u" => c.lambda_u = Some(num()?),
                "alpha" => c.alpha = Some(num()?),
                "alpha_t" => c.alpha_t = Some(num()?),
                "delta" => c.delta = Some(num()?),
                "sigma" => c.sigma = Some(num()?),
                "s_min" => c.s_min = Some(num()?),
                "global_mode" => c.global_mode = Some(value.to_string()),
                "norm_percentile" => c.norm_percentile = Some(num()?),
                "exposure_mode" => c.exposure_mode = Some(value.to_string()),
                "metrics" => c.metrics = Some(flag()?),
                "metrics_face_only" => c.metrics_face_only = Some(flag()?),
                "dump" => c.dump = Some(flag()?),
                "jobs" => {
                    c.jobs = Some(
                        value
                            .parse()
                            .map_err(|_| at(format!("`jobs` needs a positive integer, got `{value}`")))?,
                    )
                }
                _ => return Err(at(format!("unknown key `{key}`"))),
            }
        }
        Ok(c)
    }
}

impl Job {
    /// Merges flags over `file` (if any) over defaults and validates the result.
    pub fn resolve(cli: &Cli, file: Option<FileConfig>) -> Result<Self, ConfigError> {
        let file = file.unwrap_or_default();
        let inputs = if cli.input.is_empty() { file.input } else { cli.input.clone() };
        if inputs.is_empty() {
            return err("no input images (use --input)");
        }

        // a normals source given on the command line replaces the file's
        let (normal_files, ellipsoid) = if !cli.normals.is_empty() || cli.ellipsoid.is_some() {
            (cli.normals.clone(), cli.ellipsoid.clone())
        } else {
            (file.normals, file.ellipsoid)
        };
        let normals = match (normal_files.is_empty(), ellipsoid) {
            (true, None) => return err("no normals source (use --normals or --ellipsoid)"),
            (false, Some(_)) => return err("give exactly one of --normals and --ellipsoid"),
            (true, Some(spec)) => {
                NormalSource::Ellipsoid(Ellipsoid::parse(&spec).map_err(|e| ConfigError(e.to_string()))?)
            }
            (false, None) if normal_files.len() == 1 => NormalSource::Files(vec![normal_files[0].clone(); inputs.len()]),
            (false, None) if normal_files.len() == inputs.len() => NormalSource::Files(normal_files),
            (false, None) => {
                return err(format!(
                    "{} normal maps for {} inputs (give one, or one per input)",
                    normal_files.len(),
                    inputs.len()
                ))
            }
        };

        let mut params = PipelineParams::default();
        let pick = |flag: Option<f64>, file: Option<f64>, slot: &mut f64| {
            if let Some(v) = flag.or(file) {
                *slot = v;
            }
        };
        pick(cli.lambda_g, file.lambda_g, &mut params.refine.lambda_g);
        pick(cli.lambda_u, file.lambda_u, &mut params.refine.lambda_u);
        pick(cli.alpha, file.alpha, &mut params.refine.alpha);
        pick(cli.alpha_t, file.alpha_t, &mut params.exposure.alpha_t);
        pick(cli.delta, file.delta, &mut params.exposure.delta);
        pick(cli.sigma, file.sigma, &mut params.exposure.sigma);
        pick(cli.s_min, file.s_min, &mut params.refine.s_min);
        pick(cli.norm_percentile, file.norm_percentile, &mut params.enhance.norm_percentile);
        params.enhance.s_min = params.refine.s_min;
        if let Some(mode) = cli.global_mode.clone().or(file.global_mode) {
            params.refine.global_mode = mode.parse::<GlobalMode>().map_err(|e| ConfigError(e.to_string()))?;
        }
        if let Some(mode) = cli.exposure_mode.clone().or(file.exposure_mode) {
            params.exposure.lightness = mode.parse::<LightnessTerm>().map_err(|e| ConfigError(e.to_string()))?;
        }
        params.validate().map_err(|e| ConfigError(e.to_string()))?;

        let metrics_face_only = cli.metrics_face_only || file.metrics_face_only.unwrap_or(false);
        let jobs = cli.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return err("--jobs must be at least 1");
        }
        Ok(Self {
            inputs,
            normals,
            out_dir: cli.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            params,
            metrics: metrics_face_only || cli.metrics || file.metrics.unwrap_or(false),
            metrics_face_only,
            dump: cli.dump || file.dump.unwrap_or(false),
            jobs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("relight").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn parses_config_lines() {
        let text = "# comment\nlambda-g = 0.3  # trailing\n\ninput = a.ppm\ninput = b.png\ndump = yes\nglobal_mode = diagonal\n";
        let c = FileConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(c.lambda_g, Some(0.3));
        assert_eq!(c.input, vec![PathBuf::from("/data/a.ppm"), PathBuf::from("/data/b.png")]);
        assert_eq!(c.dump, Some(true));
        assert_eq!(c.global_mode.as_deref(), Some("diagonal"));
    }

    #[test]
    fn config_errors_name_the_line() {
        for (text, needle) in [
            ("lambda_g 0.3", "line 1"),
            ("\nfoo = 1", "unknown key `foo`"),
            ("sigma = wide", "needs a number"),
            ("dump = maybe", "true or false"),
        ] {
            let e = FileConfig::parse(text, Path::new("")).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
        }
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let file = FileConfig::parse("lambda_g = 0.5\nlambda_u = 3\ninput = f.ppm\nellipsoid = 1,1,1,1,1", Path::new("")).unwrap();
        let job = Job::resolve(&cli(&["--lambda-g", "0.7"]), Some(file)).unwrap();
        assert_eq!(job.params.refine.lambda_g, 0.7);
        assert_eq!(job.params.refine.lambda_u, 3.0);
        assert_eq!(job.params.refine.alpha, 1.2);
        assert_eq!(job.inputs, vec![PathBuf::from("f.ppm")]);
    }

    #[test]
    fn normals_source_rules() {
        let both = Cli::try_parse_from(["relight", "--input", "a.ppm", "--normals", "n.png", "--ellipsoid", "1,1,1,1,1"]);
        assert!(both.is_err());
        assert!(Job::resolve(&cli(&["--input", "a.ppm"]), None).is_err());

        let shared = Job::resolve(&cli(&["--input", "a.ppm", "b.ppm", "--normals", "n.png"]), None).unwrap();
        assert_eq!(shared.normals, NormalSource::Files(vec![PathBuf::from("n.png"); 2]));
        let mismatch = Job::resolve(
            &cli(&["--input", "a.ppm", "b.ppm", "c.ppm", "--normals", "n.png", "m.png"]),
            None,
        );
        assert!(mismatch.unwrap_err().to_string().contains("2 normal maps for 3 inputs"));
    }

    #[test]
    fn rejects_out_of_range_values() {
        for args in [
            ["--lambda-g", "-1"],
            ["--sigma", "0"],
            ["--s-min", "1.5"],
            ["--norm-percentile", "0"],
            ["--jobs", "0"],
        ] {
            let mut all = vec!["--input", "a.ppm", "--ellipsoid", "4,4,3,3,3"];
            all.extend(args);
            assert!(Job::resolve(&cli(&all), None).is_err(), "{args:?}");
        }
    }

    #[test]
    fn face_only_implies_metrics() {
        let job = Job::resolve(&cli(&["--input", "a.ppm", "--ellipsoid", "4,4,3,3,3", "--metrics-face-only"]), None).unwrap();
        assert!(job.metrics && job.metrics_face_only);
    }
}
