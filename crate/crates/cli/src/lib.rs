//! Command-line front end and live WebSocket service for the simulator.

pub mod commands;
pub mod service;
