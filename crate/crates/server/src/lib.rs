//! TCP operation mode for mobilisim scenes: length-prefixed JSON frames,
//! a free-running stepper, and clock synchronisation.

pub mod client;
pub mod protocol;
pub mod server;
pub mod sync;

pub use protocol::{decode_frame, encode_frame, FrameDecoder, MessageType, ProtocolError, WireMessage};
pub use server::{resolve_addr, serve, ServerError, ServerHandle, SessionConfig};
pub use sync::{sync_time, SyncError, TimeSample};
