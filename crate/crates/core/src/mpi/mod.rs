//! Multiplane images: storage, plane warping, compositing and rendering.

mod camera;
mod manifest;
mod merge;
mod render;
mod stack;

pub use camera::{
    apply as apply_homography, det, inverse_plane_homography, invert, mat_mul, plane_homography,
    sample_render_pose, transpose, CameraModel, Mat3, PoseSamplerConfig, RelativePose, IDENTITY3,
};
pub use manifest::{quantize_to_8bit, save_mpi, MpiManifest, MANIFEST_FILE};
pub use merge::{merge_groups, merge_planes};
pub use render::{
    composite, composite_planes, composite_tensor, render_novel_view, render_tensor, warp_plane,
    warp_planes_tensor, warp_tables, WarpTable,
};
pub use stack::{default_depths, inverse_depth_planes, MpiStack};
