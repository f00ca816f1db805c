//! Networked deployment of the `scauth` protocols: frame transport, the TCP
//! authentication service, the client, and the files both sides keep.

pub mod client;
mod error;
pub mod image;
pub mod service;
pub mod store;
pub mod transport;

pub use error::{NetError, NetResult};
