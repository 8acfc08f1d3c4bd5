//! Fixed-step scenario simulation: ego kinematics, scripted objects and sensors.

pub mod kinematics;
pub mod lidar;
pub mod runner;
pub mod scenario;
