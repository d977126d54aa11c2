//! Strictly conservative P2–P1 mixed finite elements on triangles.
//!
//! The velocity element is a 12-DOF quadratic vector element whose normal
//! component is continuous and whose tangential component is continuous in
//! the edge mean; paired with discontinuous P1 pressure it satisfies
//! `div V_h ⊆ Q_h`, so discrete velocities are exactly divergence-free.

pub mod analysis;
pub mod assembly;
pub mod element;
pub mod experiments;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod sparse;
