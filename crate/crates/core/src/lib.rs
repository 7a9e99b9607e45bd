//! Real-time suture-thread simulation: node velocities come from a sparse
//! quadratic program that keeps adjacent nodes connected, keeps every node
//! clear of obstacles and pulls the thread back towards its natural shape.

pub mod constraints;
pub mod geometry;
pub mod qp;
pub mod scenario_io;
#[cfg(feature = "service")]
pub mod service;
pub mod sim;
