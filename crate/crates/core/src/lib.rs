//! Flat and helicoidal surfaces in the unit 3-sphere: constructions,
//! numerical verification of their geometric identities, and mesh export.

pub mod construct;
pub mod curves;
pub mod error;
pub mod forms;
pub mod lame;
pub mod mesh;
pub mod profile_ode;
pub mod report;
pub mod s3core;
pub mod verify;

pub use construct::{
    bianchi_spivak, helicoidal_params, helicoidal_patch, hopf_cylinder_patch, mo_constants, mo_patch, reconstruct, theorem1_orbit_profile,
    theorem1_patch, HelicoidalParams, MOData, ReconstructionResult,
};
pub use curves::{base_curve, curve_ca, curve_cb, ClosedProfile, CurveS3, Profile};
pub use error::{GeomError, Result};
pub use forms::{fit_linear_angle, AngleFit, Domain, FormCoefficients, FormSource, GridSpec, SurfacePatch};
pub use lame::{LameFamily, LameSolution};
pub use mesh::{mesh_from_patch, MeshR3};
pub use profile_ode::{integrate, ProfileSolution};
pub use report::{Check, VerificationReport};
pub use s3core::{AmbientVector, HelicoidalMotion, S3Point, Stereographic};
pub use verify::{verify, Kind, VerifyInput};
