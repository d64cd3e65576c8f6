//! Incremental Gaussian-mixture occupancy maps from depth images.
//!
//! Each depth image is compressed in a single pass into occupied Gaussians
//! (surfaces) and free Gaussians (observed empty space), moved into the
//! world frame, and merged into a global map indexed by an R-tree.
//! Occupancy at any point is obtained by Gaussian mixture regression
//! against an unexplored prior of 0.5.
//!
//! ```
//! use gmmap::{CameraIntrinsics, DepthImage, GmmapParams, MapBuilder, Pose, Vec3};
//!
//! let cam = CameraIntrinsics { width: 32, height: 32, fx: 30.0, fy: 30.0,
//!     cx: 15.5, cy: 15.5, ..CameraIntrinsics::default() };
//! let params = GmmapParams::default().scaled_for_pixels(cam.pixels());
//! let mut builder = MapBuilder::new(cam, params).unwrap();
//! builder.integrate(&DepthImage::filled(32, 32, 2.0), &Pose::identity()).unwrap();
//! let (m, _v) = builder.map().query(&Vec3::new(0.0, 0.0, 1.0));
//! assert!(m < 0.5);
//! ```

pub mod depth;
pub mod error;
pub mod eval;
pub mod free_space;
pub mod fusion;
pub mod io;
pub mod local_map;
pub mod map;
pub mod moments;
pub mod pipeline;
pub mod query;
pub mod spatial_index;
pub mod spgf;
pub mod types;

pub use depth::DepthImage;
pub use error::{GmmapError, Result};
pub use free_space::{FreeBasis, FrustumPartition};
pub use fusion::fuse_local_into_global;
pub use local_map::{construct_local_map, LocalMap};
pub use map::{GaussianMap, GmMap, MapGaussian};
pub use pipeline::MapBuilder;
pub use query::{classify, query_batch, query_occupancy, OccupancyClass};
pub use spatial_index::RTree;
pub use types::{
    Aabb, CameraIntrinsics, DistGaussian, GaussianKind, GmmapParams, MomentGaussian, Pose,
    SymMat3, UnexploredPrior, Vec3,
};
