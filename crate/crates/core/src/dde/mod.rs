//! Lang-Kobayashi delay-differential laser model and its fixed-step integrator.

mod drive;
mod history;
mod integrator;
mod params;

pub use drive::DriveSignal;
pub use history::History;
pub use integrator::{integrate, lk_rhs, rk4_step, Derivative, InitialCondition, Simulator};
pub use params::{grid_steps, LaserParams, SystemState};
