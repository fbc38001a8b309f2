//! Annotated semantic map navigation engine.
//!
//! The pipeline per timestep is sense -> [`geometry::depth_to_points`] ->
//! [`geometry::project_to_grid`] -> [`semantic_map::SemanticMap::update`] ->
//! [`annotation`] -> policy text -> [`actions::parse_action`] -> simulator step.

pub mod actions;
pub mod annotation;
pub mod dataset;
pub mod geometry;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod semantic_map;
pub mod simenv;
