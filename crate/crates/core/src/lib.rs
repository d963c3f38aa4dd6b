//! Semi-discrete optimal transport in the plane and on the flat torus.
//!
//! A source measure is discretized over a point cloud, the discrete
//! Monge-Ampère equation `m_i(phi) = f_i` is solved on Laguerre diagrams by
//! damped Newton, and the piecewise-affine potential and piecewise-constant
//! transport map are rebuilt from the lower convex hull of the lifted sites.

pub mod cli;
pub mod convexity;
pub mod error;
pub mod geom;
pub mod hull;
pub mod laguerre;
pub mod linalg;
pub mod measures;
pub mod periodic;
pub mod quadrature;
pub mod reference;
pub mod solver;
pub mod tol;

pub use convexity::{extend_pwa, transport_map, verify_facet_vertex_bijection, PiecewiseAffineConvex, TransportMapPWC};
pub use error::{Error, Result, SolveFailure};
pub use geom::{ConvexPolygon, Density, Point2, Uniform};
pub use laguerre::{build_diagram, LaguerreDiagram, PotentialVector};
pub use measures::{DiscreteMeasure, SourceCloud, SourceMeasure, TargetDomain};
pub use periodic::{periodic_diagram, periodic_solve, QuasiPeriodicPotential, TorusCloud, TorusDensity};
pub use solver::{damped_newton, SolveReport, SolveSettings, Solution};
