//! Spatially-varying blur detection from a single image.
//!
//! Each pixel is described by the high-frequency DCT coefficients of the
//! gradient magnitudes in centred patches of several sizes. Those
//! coefficients are fused across scales and sorted, and the smallest ones
//! are grouped into layers. Each layer is normalized over the image and the
//! layers are max-pooled. The pooled response is weighted by its local
//! entropy and smoothed with an edge-preserving filter, which yields a map
//! where higher values mean sharper.
//!
//! ```no_run
//! use hifst::{detect, load_image, PipelineConfig};
//!
//! let img = load_image("photo.png")?;
//! let map = detect(&img, &PipelineConfig::default())?;
//! println!("depth of field estimate: {}", hifst::focus::dof_estimate(&map));
//! # Ok::<(), hifst::Error>(())
//! ```

pub mod config;
pub mod error;
pub mod eval;
pub mod focus;
pub mod gray;
pub mod imageio;
pub mod pipeline;
pub mod postproc;
pub mod preproc;
pub mod sliding_dct;
pub mod synthetic;
pub mod transform;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use gray::GrayImage;
pub use imageio::{load_image, save_map, MapFormat};
pub use pipeline::{detect, detect_stages, DetectionStages};
pub use postproc::BlurMap;
pub use sliding_dct::ScaleSet;
