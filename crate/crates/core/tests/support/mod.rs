//! Shared scene generators and reference implementations for the
//! integration tests. Each test binary uses a different subset.
#![allow(dead_code)]

pub mod gnn_ref;
pub mod cases;
pub mod gt_ref;
pub mod rotation;
pub mod scenes;
pub mod wire_ref;
