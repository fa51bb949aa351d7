//! External formats and the stream server.

pub mod dataset;
pub mod feed;
pub mod frame;
pub mod replay;
pub mod server;

pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetError, DatasetRow};
pub use feed::FeedMessage;
pub use frame::{parse_frame, serialize_frame, FrameError, FRAME_VERSION};
pub use replay::{replay, Recording, ReplayError};
pub use server::{serve, ServeConfig, ServeError, ServerHandle, ServerStats, StatsSnapshot};
