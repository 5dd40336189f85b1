//! Dispersing billiard dynamics on the two-torus.
//!
//! A finite set of disjoint circular scatterers is removed from a torus; a
//! point particle flies in straight lines between specular reflections. This
//! crate builds such tables (hexagonal and square lattice families plus
//! custom layouts), applies the collision map and its inverse, locates
//! singularity curves and counts continuity cells, finds periodic orbits by
//! a length-functional Newton method, and evaluates entropy and pressure
//! estimates from those primitives.
//!
//! Geometry and dynamics are generic over the floating-point scalar (f32 or
//! f64); the estimator layers are fixed to f64. The crate root re-exports
//! f64 aliases for the common types.

pub mod dynamics;
pub mod geometry;
pub mod orbits;
pub mod scalar;
pub mod singularity;
pub mod thermo;

/// f64 aliases for the generic core types.
pub type BilliardTable = geometry::BilliardTable<f64>;
pub type BoundaryFrame = geometry::BoundaryFrame<f64>;
pub type Scatterer = geometry::Scatterer<f64>;
pub type PhasePoint = dynamics::PhasePoint<f64>;
pub type CollisionStep = dynamics::CollisionStep<f64>;
pub type FlowState = dynamics::FlowState<f64>;
pub type FlightBounds = dynamics::FlightBounds<f64>;
pub type Vec2 = scalar::Vec2<f64>;

pub use orbits::{OrbitCensus, PeriodicOrbit};
pub use thermo::{BoundReport, EmpiricalMeasure, Potential, S0Estimate};
