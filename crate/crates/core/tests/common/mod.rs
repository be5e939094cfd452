//! Independent reference implementations and shared fixtures for the
//! integration tests.
#![allow(dead_code)]

pub mod oracles;
pub mod scenes;
