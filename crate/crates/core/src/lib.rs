//! Monocular depth from selectively distilled stereo proxies.
//!
//! A monocular network is trained on stereo pairs whose proxy disparity is
//! only partly reliable. Two learned binary masks decide, per pixel, whether
//! the proxy beats the current monocular estimate photometrically; the proxy
//! supervises only there. An optional teacher-student module distils frozen
//! stereo features into the monocular encoder.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod networks;
pub mod ops;
pub mod photometric;
pub mod seed;
pub mod select;
pub mod trainer;
pub mod ts;
pub mod types;
pub mod warping;

pub use config::{load_config, DistillMode, ProxyMode, TrainConfig};
pub use error::{Error, Result};
pub use seed::{seed_everything, Seeds};
