//! Shared pieces of the `rcvr` binary: prediction bodies and the HTTP service.

pub mod api;
pub mod server;
