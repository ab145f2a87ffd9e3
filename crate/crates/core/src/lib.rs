//! Building Information Robotic System: turns an IFC building model and GIS
//! site context into navigation artifacts for a mobile robot.
//!
//! Pipeline: [`step`] parses the STEP file, [`model`] resolves a plan-view
//! building model, [`gis`] brings in site obstacles, [`ontology`] classifies
//! everything, [`topo`] and [`grid`] derive topological and occupancy-grid
//! maps, [`progress`] turns as-built grid differences into findings, and
//! [`service`] serves all of it over TCP.

pub mod config;
pub mod geometry;
pub mod gis;
pub mod grid;
pub mod model;
pub mod ontology;
pub mod pipeline;
pub mod progress;
pub mod service;
pub mod step;
pub mod topo;
