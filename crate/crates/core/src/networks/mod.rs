//! Network definitions: the trainable monocular network and the frozen
//! proxy teachers.

pub mod layers;
pub mod mono;
pub mod params;
pub mod teacher;

pub use mono::{MonoNet, MonoNetOutputs, NetConfig, DECODER_SCALES, ENCODER_LEVELS};
pub use params::ParamStore;
pub use teacher::{file_proxy, FileProxy, ProxyTeacher, SampleProxy, SyntheticTeacher};
