//! Rigid registration: closed-form fitting, ICP, binary shape descriptors,
//! descriptor-based coarse alignment, hierarchical multi-station alignment
//! and hybrid-metric global registration across epochs.

mod coarse;
mod eval;
mod features;
mod fit;
mod hungarian;
mod hybrid;
mod icp;
mod multiview;
mod transform;

pub use coarse::{
    candidate_matches, coarse_match, coarse_register, consistent_sets, consistent_subset, mutual_matches, CoarseMatch,
    CoarseParams,
};
pub use eval::{
    evaluate_registration, evaluate_registration_at, evaluation_points, pose_rmse, Evaluation,
    DEFAULT_SUCCESS_THRESHOLD,
};
pub use features::{
    extract_descriptors, prepare_cloud, select_keypoints, BinaryDescriptor, FeatureParams, FeatureSet, PreparedCloud,
    AZIMUTH_BINS, DESCRIPTOR_BITS, ELEVATION_BINS, MIN_SUPPORT, RADIAL_BINS,
};
pub use fit::{fit_rigid, pair_rmse};
pub use hungarian::min_cost_assignment;
pub use hybrid::{alpha_schedule, register_global_hybrid, HybridParams, HybridResult};
pub use icp::{icp, icp_with_initial, IcpMetric, IcpParams, RegistrationResult};
pub use multiview::{register_multiview, MultiviewParams};
pub use transform::RigidTransform;
