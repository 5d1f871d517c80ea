//! HTTP/JSON service for the annotation store, plus the facade the
//! command-line tool shares with it.

pub mod api;
pub mod config;
pub mod service;

pub use api::{router, serve, ErrorBody, USER_HEADER};
pub use config::{Config, ConfigError};
pub use service::{Listing, ListParams, Service, ServiceError};
