//! Cluster analysis of spectra and class activation maps.

mod cam;
mod kmeans;

pub use cam::{cam_csv, class_activation_map, Cam, Upsample};
pub use kmeans::{
    cluster_profiles, crosstab, elbow_scan, kmeans, ClusterProfile, ClusterResult, Crosstab, ElbowPoint, ELBOW_RESTARTS,
};
