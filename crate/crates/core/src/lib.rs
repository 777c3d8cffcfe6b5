// index loops run over several arrays in lockstep throughout the kernels
#![allow(clippy::needless_range_loop)]

//! Mixed finite-element models of elastic strut networks (stents).
//!
//! A stent is modeled as an undirected graph whose edges are straight
//! elastic struts. Displacements and rotations live on the struts, while
//! contact forces, contact couples and junction values are explicit
//! unknowns coupled through a saddle-point system. The crate covers
//!
//! * geometry generation and refinement ([`network`]),
//! * section/material models and local frames ([`rod`]),
//! * assembly of the saddle-point system ([`assembly`]),
//! * direct static solves, solution checks and convergence studies
//!   ([`solver`]),
//! * the second-order differential-algebraic evolution problem with an
//!   implicit-midpoint integrator and a canonical-form analysis of the
//!   matrix pencil ([`dynamics`]).

pub mod assembly;
pub mod basis;
pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod layout;
pub mod linalg;
pub mod loads;
pub mod network;
pub mod quadrature;
pub mod rod;
pub mod solver;
pub mod vtk;

pub use assembly::SaddleSystem;
pub use error::CoreError;
pub use fields::MixedSolution;
pub use layout::{DofLayout, FeOrders};
pub use loads::Load;
pub use network::{StentNetwork, Strut, Vertex};
pub use rod::{CrossSection, Material};
pub use solver::{StaticProblem, StaticSolution};
