//! Imprimitivity Fell bundles of demi-equivalences over finite groupoids.
//!
//! The crate models finite groupoids and their free actions, finite-dimensional
//! Fell bundles given by structure tensors, demi-equivalences over principal
//! groupoid spaces, and the imprimitivity bundle `M ⊗_B M^op` built from them,
//! together with validators for every axiom involved.

#![allow(clippy::needless_range_loop)]
#![forbid(unsafe_code)]

pub mod applications;
pub mod cstar;
pub mod demiequiv;
pub mod error;
pub mod fellbundle;
pub mod groupoid;
pub mod hilbmod;
pub mod imprimitivity;
pub mod linalg;
pub mod report;
pub mod specfile;

pub use applications::{
    bundle_by_name, fixture_by_name, fixture_kumjian, fixture_matrix, fixture_self,
    fixture_transformation_group, kumjian_demi, run_fixture, transformation_groupoid, AutAction,
    FixtureReport, NamedFixture, StageResult, TransformationGroupoid,
};
pub use cstar::{gram_factorize, is_positive, operator_norm, AlgebraElement, BlockAlgebra};
pub use demiequiv::{
    derived_properties_check, induced_demi, random_demi, self_demi, validate_demi, DemiEquivalence,
    DemiProfile,
};
pub use error::{Error, Result};
pub use fellbundle::{
    fibre_norm, random_fell_bundle, validate_fell_bundle, BundleProfile, FellBundle,
};
pub use groupoid::{
    groupoid_isomorphic, imprimitivity_groupoid, leoq, reoq, validate_action, validate_groupoid,
    validate_left_action, FiniteGroupoid, ImprimitivityGroupoid, LeftAction, PrincipalAction,
};
pub use hilbmod::{
    adjoint_map, compacts_norm, compacts_space, norm_of_compacts_check, rank_one, HilbertModule,
    ModuleMapSpace,
};
pub use imprimitivity::{
    build_imprimitivity_bundle, flip, k_fibre, operator_properties_check, phi_apply, psi_transport,
    u_compose, uniqueness_iso, validate_equivalence, BundleIsomorphism, Equivalence,
    ImprimitivityFellBundle, KElem, KFibre,
};
pub use linalg::{Bilinear, CMat, CVec, C64};
pub use report::{AxiomStatus, ValidationReport, Witness};
pub use specfile::BundleSpecFile;

/// Default relative tolerance for all numerical comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;
