//! Lips-state detection and command decoding over facial landmark streams.
//!
//! Frames of face landmarks come in, one JSON line each. For every frame the
//! six lip points are selected, five distances between them are computed, a
//! classifier labels the mouth open or closed and a debouncing engine turns
//! labels into stable states and actions. Stable states are cut into time
//! slots whose bit patterns are looked up in a codebook.
//!
//! [`Pipeline`] runs that path for one stream, offline or behind
//! [`io::serve`]. The guide in `book/` walks through each stage.
//!
//! ```
//! use lipsignal::classifier::{mlp_train, TrainConfig};
//! use lipsignal::engine::EngineConfig;
//! use lipsignal::landmarks::SchemeRegistry;
//! use lipsignal::slots::{Codebook, SlotConfig, SlotMode, SlotTracker};
//! use lipsignal::synth::{synth_dataset, synth_stream, SynthConfig};
//! use lipsignal::io::serialize_frame;
//! use lipsignal::Pipeline;
//!
//! let cfg = TrainConfig { max_epochs: 40, ..TrainConfig::default() };
//! let (model, _) = mlp_train(&synth_dataset(400, 7), &cfg)?;
//! let slots = SlotConfig::new(600, 4, SlotMode::Bits)?;
//! let mut pipeline = Pipeline::new(
//!     model,
//!     SchemeRegistry::default(),
//!     EngineConfig::default(),
//!     SlotTracker::new(slots, Codebook::identity(SlotMode::Bits, 4))?,
//! )?;
//!
//! let stream = synth_stream(&SynthConfig { duration_s: 4.0, ..SynthConfig::default() })?;
//! let lines: Vec<String> = stream.frames.iter().map(serialize_frame).collect();
//! let messages = pipeline.process_lines(lines.iter().map(String::as_str));
//! assert!(!messages.is_empty());
//! assert_eq!(pipeline.stats().errors, 0);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod classifier;
pub mod engine;
pub mod features;
pub mod io;
pub mod landmarks;
pub mod pipeline;
pub mod slots;
pub mod synth;

pub use classifier::{LipsState, TrainedModel};
pub use io::FeedMessage;
pub use landmarks::LandmarkFrame;
pub use pipeline::{Pipeline, PipelineError, PipelineStats};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/landmarks.md")]
    mod landmarks {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/slots.md")]
    mod slots {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/serving.md")]
    mod serving {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
}
