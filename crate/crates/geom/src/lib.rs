//! Triangle-mesh geometry for the synthetic furniture pipeline: OBJ loading,
//! ray-cast rendering to depth/normal maps, viewpoint sampling, Lambertian
//! shading, depth-to-normal plane fitting, and Manhattan-frame rectification.

pub mod camera;
pub mod depth_normals;
pub mod error;
pub mod manhattan;
pub mod maps;
pub mod mesh;
pub mod raycast;
pub mod shade;
pub mod shapes;
pub mod vec3;
pub mod views;

pub use camera::{CamFrame, Camera, Intrinsics, ViewPose, DEFAULT_FOV_DEG, DEFAULT_RADIUS};
pub use depth_normals::{normals_from_depth, valid_mask};
pub use error::{GeomError, Result};
pub use manhattan::{estimate_manhattan_frame, rectify_normals, ManhattanFrame};
pub use maps::{composite_background, DepthMap, Image, NormalMap};
pub use mesh::{load_obj, write_obj, TriMesh};
pub use raycast::render_view;
pub use shade::{albedo, shade_normals, shade_view};
pub use shapes::{append_box, icosphere, unit_cube};
pub use views::{sample_views, DEFAULT_ELEVATIONS};
