//! Finite-element side: meshes refined around spike sites, the discrete
//! Newton solve and the linearized eigenvalue problem.

pub mod eigen;
pub mod fem;
pub mod identities;
pub mod io;
pub mod mesh;
pub mod newton;

pub use eigen::{eigen_spectrum, EigenOptions, IdentityRecord, SpectrumReport};
pub use fem::{FemSystem, Quadrature, WeightedMass};
pub use mesh::{Mesh, MeshOptions, SpikePatch, SpikeSite};
pub use newton::{perturbed_start, solve_lane_emden, solve_with_continuation, DiscreteSolution, NewtonOptions};
pub use identities::{eigenfunction_span, limit_profile_check, pohozaev_check, quadform_green_check, BallOptions, LimitProfileReport};
