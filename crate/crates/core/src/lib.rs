pub mod assets;
pub mod bench;
pub mod controllers;
pub mod dynamics;
pub mod envs;
pub mod kinematics;
pub mod learn;
pub mod model;
pub mod pose;
pub mod record;
pub mod render;
pub mod scene;
pub mod spatial;
pub mod tasks;
