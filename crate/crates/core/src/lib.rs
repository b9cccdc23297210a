//! Event-camera stream tooling: I/O, SBT/SBE stacking, high-frame-rate video
//! schedules, a contrast-threshold simulator, image-quality metrics and
//! training-pair preparation.

pub mod dataset;
pub mod events;
pub mod image;
pub mod metrics;
pub mod simulator;
pub mod stacking;
pub mod video;

pub use events::{ApsFrame, Event, EventStream, Micros};
pub use image::{GrayImage, RgbImage};
