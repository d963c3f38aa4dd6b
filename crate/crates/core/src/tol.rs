//! Shared tolerances. Relative values are scaled by the domain diameter.

/// Diagram vertices closer than this (relative) are one vertex.
pub const VERTEX_MERGE_REL: f64 = 1e-7;

/// Lifted points within this (relative to the lift's value range) of a hull
/// facet plane belong to that facet.
pub const HULL_PLANE_REL: f64 = 1e-10;

/// Distance a facet gradient may lie outside the target domain.
pub const GRADIENT_CONTAINMENT: f64 = 1e-9;
