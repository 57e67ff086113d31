use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hifst::eval::run_dataset;
use hifst::focus::{dof_estimate, focus_points, magnify_blur_rgb};
use hifst::imageio::{load_rgb, save_rgb_png8};
use hifst::synthetic::{generate_suite, write_suite, SuiteSpec};
use hifst::{detect, load_image, save_map, Error, GrayImage, MapFormat, PipelineConfig};

/// Blur detection maps, camera focus points, blur magnification and
/// evaluation against ground-truth masks.
#[derive(Debug, Parser)]
#[command(name = "hifst", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    config: ConfigArgs,
}

/// Pipeline settings. Precedence: flag, then environment, then `--config`
/// file, then built-in default.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines using the flag names below
    #[arg(long, global = true, env = "HIFST_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,

    /// Comma-separated odd patch sizes, strictly increasing [default: 7,15,31,63]
    #[arg(long, global = true, env = "HIFST_SCALES", value_name = "LIST")]
    scales: Option<String>,

    /// Pre-filter standard deviation in pixels [default: 0.5]
    #[arg(
        long,
        global = true,
        env = "HIFST_GAUSSIAN_SIGMA",
        value_name = "SIGMA"
    )]
    gaussian_sigma: Option<String>,

    /// Pre-filter kernel radius in pixels [default: 1]
    #[arg(long, global = true, env = "HIFST_GAUSSIAN_RADIUS", value_name = "N")]
    gaussian_radius: Option<String>,

    /// Odd side of the local entropy window [default: 7]
    #[arg(long, global = true, env = "HIFST_ENTROPY_WINDOW", value_name = "K")]
    entropy_window: Option<String>,

    /// Histogram bins over [0, 1] for local entropy [default: 256]
    #[arg(long, global = true, env = "HIFST_ENTROPY_BINS", value_name = "N")]
    entropy_bins: Option<String>,

    /// Edge-preserving smoothing spatial sigma in pixels [default: 15]
    #[arg(long, global = true, env = "HIFST_SIGMA_S", value_name = "SIGMA")]
    sigma_s: Option<String>,

    /// Edge-preserving smoothing range sigma [default: 0.3]
    #[arg(long, global = true, env = "HIFST_SIGMA_R", value_name = "SIGMA")]
    sigma_r: Option<String>,

    /// Edge-preserving smoothing iterations [default: 3]
    #[arg(long, global = true, env = "HIFST_SMOOTH_ITERATIONS", value_name = "N")]
    smooth_iterations: Option<String>,

    /// Smoothing guide: input-image or map-itself [default: input-image]
    #[arg(long, global = true, env = "HIFST_GUIDE", value_name = "GUIDE")]
    guide: Option<String>,

    /// Focus point threshold in (0, 1] [default: 0.98]
    #[arg(long, global = true, env = "HIFST_FOCUS_TH", value_name = "TH")]
    focus_th: Option<String>,

    /// Gaussian pre-smoothing sigma for focus points in pixels [default: 5]
    #[arg(long, global = true, env = "HIFST_FOCUS_SIGMA", value_name = "SIGMA")]
    focus_sigma: Option<String>,

    /// Evaluate the transform every N pixels, 1 = full resolution [default: 1]
    #[arg(long, global = true, env = "HIFST_STRIDE", value_name = "N")]
    stride: Option<String>,

    /// Worker count or 'auto'; outputs do not depend on it [default: auto]
    #[arg(long, global = true, env = "HIFST_THREADS", value_name = "N")]
    threads: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> [(&'static str, Option<&String>); 13] {
        [
            ("scales", self.scales.as_ref()),
            ("gaussian-sigma", self.gaussian_sigma.as_ref()),
            ("gaussian-radius", self.gaussian_radius.as_ref()),
            ("entropy-window", self.entropy_window.as_ref()),
            ("entropy-bins", self.entropy_bins.as_ref()),
            ("sigma-s", self.sigma_s.as_ref()),
            ("sigma-r", self.sigma_r.as_ref()),
            ("smooth-iterations", self.smooth_iterations.as_ref()),
            ("guide", self.guide.as_ref()),
            ("focus-th", self.focus_th.as_ref()),
            ("focus-sigma", self.focus_sigma.as_ref()),
            ("stride", self.stride.as_ref()),
            ("threads", self.threads.as_ref()),
        ]
    }

    fn resolve(&self) -> hifst::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(value) = value {
                cfg.set(key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the blur map of an image (higher is sharper) and print its
    /// depth-of-field estimate
    Detect {
        /// Input image (PNG, JPEG, PGM/PPM, BMP or PFM)
        input: PathBuf,
        /// Output map; `.pfm` writes 32-bit floats, anything else 8-bit PNG.
        /// May be given more than once
        #[arg(short, long, required = true, value_name = "PATH")]
        output: Vec<PathBuf>,
        /// Write 8-bit outputs as 1 - map; PFM data is never inverted
        #[arg(long)]
        invert: bool,
    },
    /// Write the binary camera focus points map (white = focus point)
    Focus {
        /// Input image
        input: PathBuf,
        /// Output PNG
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Blur the out-of-focus regions further, keeping sharp regions intact
    Magnify {
        /// Input image; colour images keep their colour
        input: PathBuf,
        /// Output PNG
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
        /// Gaussian sigma in pixels applied where the map is 0
        #[arg(long, default_value_t = 4.0)]
        strength: f64,
    },
    /// Precision-recall evaluation of a dataset against same-stem masks
    Eval {
        /// Directory of input images
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Directory of ground-truth masks (white = sharp)
        #[arg(long, value_name = "DIR")]
        masks: PathBuf,
        /// Directory receiving one CSV per image plus aggregate.csv
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write a seeded suite of synthetic images with sharp regions over
    /// blurred backgrounds, plus their masks
    GenSynthetic {
        /// Output directory; receives images/ and masks/
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of image/mask pairs
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Random seed
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Side length of the square images in pixels
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Background blur sigmas, cycled through by image index
        #[arg(long, value_delimiter = ',', default_value = "2,4")]
        blur_sigmas: Vec<f64>,
    },
}

fn write_map(map: &GrayImage, path: &Path, invert: bool) -> hifst::Result<()> {
    match MapFormat::from_path(path) {
        Some(MapFormat::Pfm32) => save_map(map, path, MapFormat::Pfm32),
        _ if invert => save_map(&map.map(|v| 1.0 - v), path, MapFormat::Png8),
        _ => save_map(map, path, MapFormat::Png8),
    }
}

fn run(command: Command, cfg: &PipelineConfig) -> hifst::Result<()> {
    match command {
        Command::Detect {
            input,
            output,
            invert,
        } => {
            let blur_map = detect(&load_image(&input)?, cfg)?;
            for path in &output {
                write_map(&blur_map.map, path, invert)?;
            }
            println!("dof_estimate: {:.6}", dof_estimate(&blur_map));
        }
        Command::Focus { input, output } => {
            let blur_map = detect(&load_image(&input)?, cfg)?;
            let points = focus_points(&blur_map, &cfg.focus_params())?;
            save_map(&points, &output, MapFormat::Png8)?;
            let count = points.as_slice().iter().filter(|&&v| v > 0.0).count();
            println!("focus_points: {count}");
        }
        Command::Magnify {
            input,
            output,
            strength,
        } => {
            let rgb = load_rgb(&input)?;
            let gray = load_image(&input)?;
            let blur_map = detect(&gray, cfg)?;
            save_rgb_png8(&magnify_blur_rgb(&rgb, &blur_map, strength)?, &output)?;
        }
        Command::Eval { images, masks, out } => {
            let report = run_dataset(&images, &masks, cfg, &out)?;
            for (name, reason) in &report.errors {
                eprintln!("warning: skipped {name}: {reason}");
            }
            println!("images: {}", report.per_image.len());
            println!("warnings: {}", report.warning_count());
            println!("max_f_measure: {:.6}", report.aggregate.max_f_measure(1.0));
        }
        Command::GenSynthetic {
            out,
            count,
            seed,
            size,
            blur_sigmas,
        } => {
            let spec = SuiteSpec {
                count,
                seed,
                size,
                blur_sigmas,
            };
            write_suite(&generate_suite(&spec)?, &out)?;
            println!("wrote {count} pairs to {}", out.display());
        }
    }
    Ok(())
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = match cli.config.resolve() {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(cli.command, &cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
