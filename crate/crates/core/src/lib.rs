//! Functional and analytical simulator of a near-memory training
//! accelerator built from NTX streaming co-processors.

pub mod cluster;
pub mod datacenter;
pub mod kernels;
pub mod mesh;
pub mod ntx;
pub mod perf;
pub mod verify;
pub mod workload;
