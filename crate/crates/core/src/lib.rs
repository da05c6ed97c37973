//! Depth-aware virtual-light relighting.
//!
//! A scene is lit by `K` parametric lights plus an ambient term; the
//! resulting light map multiplies the input frame. The crate provides the
//! shading model and its gradients, a two-stage estimator that fits light
//! parameters to a target, temporal smoothing for video, and the file
//! formats and harnesses the command line tools are built on.

// `!(x > 0.0)` checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod albedo;
pub mod config;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod lighting;
pub mod protocol;
pub mod raster;
pub mod render;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use geometry::{normals_from_depth, pixel_positions, NormalMap};
pub use lighting::{
    denormalize, project_valid, regularization_loss, LightingParams, ParamBounds, ParamStats, ParamVector, VirtualLight,
};
pub use raster::{DepthMap, Image, LightMap, Raster, Raster64};
pub use render::{
    compose, compose64, light_map, light_map64, light_map_reference, light_map_vjp, render, render_light_map,
    ShadingConfig, ShadingGeometry,
};
