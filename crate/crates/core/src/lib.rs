//! Learned point-cloud attribute codec and multi-generation compression lab.

pub mod codec;
pub mod multigen;
pub mod pointcloud;
pub mod tensor;
pub mod training;
