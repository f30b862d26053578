//! Synthetic multi-frame stereo scenes with analytic ground truth.
//!
//! Scenes are textured fronto-parallel rectangles over a textured background
//! plane, viewed by a rectified stereo rig across three time steps. Keeping
//! every surface a constant-depth plane per frame makes flow, disparity, and
//! occlusion exactly computable at pixel centers: no rasterization, no
//! interpolation, no tolerance juggling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, SceneFlowField, CH_D0, CH_D1, CH_U, CH_V};
use crate::grid::Grid2D;
use crate::mask::{MaskKind, PixelMask};
use crate::sample::{DirectionalGt, FrameTripletSample};

/// One moving rectangle, fronto-parallel to the world XY plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    /// Full extent in meters (width, height).
    pub extent: (f64, f64),
    /// Center position at the reference time, world frame, meters.
    pub position: [f64; 3],
    /// Meters per frame.
    pub velocity: [f64; 3],
    /// Meters per frame squared.
    pub acceleration: [f64; 3],
    pub texture_seed: u64,
}

impl ObjectSpec {
    /// Center at reference time + dt frames (constant acceleration).
    fn center_at(&self, dt: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.position[a] + self.velocity[a] * dt + 0.5 * self.acceleration[a] * dt * dt;
        }
        p
    }
}

/// Rigid camera motion per frame step: translation in world meters, then
/// yaw (about y) and pitch (about x) in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraMotion {
    pub translation: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
}

/// Full description of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Focal length in pixels.
    pub focal: f64,
    /// Stereo baseline in meters.
    pub baseline: f64,
    /// Depth of the background plane, meters.
    pub background_depth: f64,
    pub objects: Vec<ObjectSpec>,
    pub camera: CameraMotion,
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 1 || self.width < 1 {
            return Err(Error::Scene("image size must be at least 1x1".into()));
        }
        if self.focal <= 0.0 {
            return Err(Error::Scene(format!("focal must be > 0, got {}", self.focal)));
        }
        if self.baseline <= 0.0 {
            return Err(Error::Scene(format!(
                "baseline must be > 0, got {}",
                self.baseline
            )));
        }
        if self.background_depth <= 0.0 {
            return Err(Error::Scene("background depth must be > 0".into()));
        }
        for obj in &self.objects {
            if obj.extent.0 <= 0.0 || obj.extent.1 <= 0.0 {
                return Err(Error::Scene("object extent must be positive".into()));
            }
        }
        Ok(())
    }
}

const TIME_OFFSETS: [f64; 3] = [-1.0, 0.0, 1.0];

/// Row-major 3x3 rotation.
#[derive(Debug, Clone, Copy)]
struct Mat3([f64; 9]);

impl Mat3 {
    fn yaw_pitch(yaw: f64, pitch: f64) -> Mat3 {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        // R = R_y(yaw) * R_x(pitch)
        Mat3([
            cy,
            sy * sp,
            sy * cp,
            0.0,
            cp,
            -sp,
            -sy,
            cy * sp,
            cy * cp,
        ])
    }

    #[inline]
    fn mul(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
            m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
        ]
    }

    /// Multiply by the transpose (inverse, for rotations).
    #[inline]
    fn mul_t(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0] * v[0] + m[3] * v[1] + m[6] * v[2],
            m[1] * v[0] + m[4] * v[1] + m[7] * v[2],
            m[2] * v[0] + m[5] * v[1] + m[8] * v[2],
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    rotation: Mat3,
    center: [f64; 3],
}

/// Which camera of the rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eye {
    Left,
    Right,
}

/// Identifier of the surface visible at a query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SurfaceId {
    Background,
    Object(usize),
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    id: SurfaceId,
    /// Camera-frame depth (positive).
    depth: f64,
    /// World-space intersection point.
    point: [f64; 3],
}

/// A validated scene with resolved trajectories, ready for rendering and
/// ground-truth queries.
#[derive(Debug, Clone)]
pub struct SceneInstance {
    config: SceneConfig,
    /// Camera poses at t-1, t, t+1.
    poses: [Pose; 3],
    cx: f64,
    cy: f64,
}

impl SceneInstance {
    pub fn new(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let poses = TIME_OFFSETS.map(|dt| Pose {
            rotation: Mat3::yaw_pitch(config.camera.yaw * dt, config.camera.pitch * dt),
            center: [
                config.camera.translation[0] * dt,
                config.camera.translation[1] * dt,
                config.camera.translation[2] * dt,
            ],
        });
        let scene = SceneInstance {
            cx: (config.width as f64 - 1.0) / 2.0,
            cy: (config.height as f64 - 1.0) / 2.0,
            config,
            poses,
        };
        // every surface must stay strictly in front of both cameras at all frames
        for ti in 0..3 {
            let dt = TIME_OFFSETS[ti];
            for (k, obj) in scene.config.objects.iter().enumerate() {
                let c = obj.center_at(dt);
                for eye in [Eye::Left, Eye::Right] {
                    let cam = scene.camera_point(ti, eye, c);
                    if cam[2] < 0.1 {
                        return Err(Error::Scene(format!(
                            "object {k} reaches depth {:.3} m at frame offset {dt}",
                            cam[2]
                        )));
                    }
                }
            }
            let bg_point = [0.0, 0.0, scene.config.background_depth];
            if scene.camera_point(ti, Eye::Left, bg_point)[2] < 0.1 {
                return Err(Error::Scene("camera crosses the background plane".into()));
            }
        }
        Ok(scene)
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    fn eye_center(&self, ti: usize, eye: Eye) -> [f64; 3] {
        let pose = &self.poses[ti];
        match eye {
            Eye::Left => pose.center,
            Eye::Right => {
                let offset = pose.rotation.mul([self.config.baseline, 0.0, 0.0]);
                [
                    pose.center[0] + offset[0],
                    pose.center[1] + offset[1],
                    pose.center[2] + offset[2],
                ]
            }
        }
    }

    /// World point expressed in the camera frame of (time, eye).
    fn camera_point(&self, ti: usize, eye: Eye, p: [f64; 3]) -> [f64; 3] {
        let c = self.eye_center(ti, eye);
        self.poses[ti]
            .rotation
            .mul_t([p[0] - c[0], p[1] - c[1], p[2] - c[2]])
    }

    /// Projects a world point; returns continuous pixel coordinates and depth.
    fn project(&self, ti: usize, eye: Eye, p: [f64; 3]) -> (f64, f64, f64) {
        let cam = self.camera_point(ti, eye, p);
        let x = self.config.focal * cam[0] / cam[2] + self.cx;
        let y = self.config.focal * cam[1] / cam[2] + self.cy;
        (x, y, cam[2])
    }

    /// Casts the pixel ray of (x, y) and returns the nearest surface.
    ///
    /// Every ray hits the background plane, so a hit always exists as long
    /// as the validated depth bounds hold.
    fn surface_at(&self, ti: usize, eye: Eye, x: f64, y: f64) -> Hit {
        let pose = &self.poses[ti];
        let center = self.eye_center(ti, eye);
        let dir_cam = [
            (x - self.cx) / self.config.focal,
            (y - self.cy) / self.config.focal,
            1.0,
        ];
        let dir = pose.rotation.mul(dir_cam);
        let dt = TIME_OFFSETS[ti];

        let mut best = {
            // background plane z = background_depth; dir[2] > 0 after validation
            let t = (self.config.background_depth - center[2]) / dir[2];
            Hit {
                id: SurfaceId::Background,
                depth: t,
                point: [
                    center[0] + t * dir[0],
                    center[1] + t * dir[1],
                    self.config.background_depth,
                ],
            }
        };
        for (k, obj) in self.config.objects.iter().enumerate() {
            let c = obj.center_at(dt);
            let t = (c[2] - center[2]) / dir[2];
            if t <= 0.0 || t >= best.depth {
                continue;
            }
            let px = center[0] + t * dir[0];
            let py = center[1] + t * dir[1];
            if (px - c[0]).abs() <= obj.extent.0 / 2.0 && (py - c[1]).abs() <= obj.extent.1 / 2.0 {
                best = Hit {
                    id: SurfaceId::Object(k),
                    depth: t,
                    point: [px, py, c[2]],
                };
            }
        }
        best
    }

    /// Displacement of a surface point between the reference frame and
    /// frame offset `dt` (background is static).
    fn surface_motion(&self, id: SurfaceId, dt: f64) -> [f64; 3] {
        match id {
            SurfaceId::Background => [0.0; 3],
            SurfaceId::Object(k) => {
                let obj = &self.config.objects[k];
                let now = obj.center_at(0.0);
                let then = obj.center_at(dt);
                [then[0] - now[0], then[1] - now[1], then[2] - now[2]]
            }
        }
    }

    fn time_index(direction: FlowDirection) -> usize {
        match direction {
            FlowDirection::Forward => 2,
            FlowDirection::Backward => 0,
        }
    }

    /// Analytic scene flow at every reference pixel center.
    ///
    /// The visible surface point is moved rigidly to the target time and
    /// re-projected; `d1` is its disparity there, registered to the
    /// reference pixel.
    pub fn analytic_field(&self, direction: FlowDirection) -> SceneFlowField<f64> {
        let (h, w) = (self.config.height, self.config.width);
        let ti = Self::time_index(direction);
        let dt = TIME_OFFSETS[ti];
        let fb = self.config.focal * self.config.baseline;
        let mut grid = Grid2D::new(h, w, 4);
        for i in 0..h {
            for j in 0..w {
                let (x, y) = (j as f64, i as f64);
                let hit = self.surface_at(1, Eye::Left, x, y);
                let motion = self.surface_motion(hit.id, dt);
                let moved = [
                    hit.point[0] + motion[0],
                    hit.point[1] + motion[1],
                    hit.point[2] + motion[2],
                ];
                let (tx, ty, tz) = self.project(ti, Eye::Left, moved);
                let px = grid.pixel_mut(i, j);
                px[CH_U] = tx - x;
                px[CH_V] = ty - y;
                px[CH_D0] = fb / hit.depth;
                px[CH_D1] = fb / tz;
            }
        }
        SceneFlowField::new(grid, direction).expect("4 channels by construction")
    }

    /// Exact (valid, noc) masks for a direction.
    ///
    /// A reference pixel is occluded when its target projection leaves the
    /// image or a strictly nearer surface covers that location at the
    /// target time. Validity covers the whole image.
    pub fn occlusion_masks(&self, direction: FlowDirection) -> (PixelMask, PixelMask) {
        let (h, w) = (self.config.height, self.config.width);
        let ti = Self::time_index(direction);
        let dt = TIME_OFFSETS[ti];
        let valid = PixelMask::filled(h, w, MaskKind::Valid, true);
        let mut noc = PixelMask::filled(h, w, MaskKind::Noc, true);
        let (x_max, y_max) = (w as f64 - 0.5, h as f64 - 0.5);
        for i in 0..h {
            for j in 0..w {
                let (x, y) = (j as f64, i as f64);
                let hit = self.surface_at(1, Eye::Left, x, y);
                let motion = self.surface_motion(hit.id, dt);
                let moved = [
                    hit.point[0] + motion[0],
                    hit.point[1] + motion[1],
                    hit.point[2] + motion[2],
                ];
                let (tx, ty, tz) = self.project(ti, Eye::Left, moved);
                let occluded = if !((-0.5..x_max).contains(&tx) && (-0.5..y_max).contains(&ty)) {
                    true // out of view
                } else {
                    let front = self.surface_at(ti, Eye::Left, tx, ty);
                    front.id != hit.id && front.depth < tz - 1e-9
                };
                if occluded {
                    noc.set(i, j, false);
                }
            }
        }
        (valid, noc)
    }

    /// Renders the image seen by (time, eye) as one grayscale channel.
    ///
    /// Painter's order falls out of the per-pixel depth query; textures are
    /// attached to surface coordinates so they move with their object.
    pub fn render(&self, ti: usize, eye: Eye) -> Grid2D<f64> {
        let (h, w) = (self.config.height, self.config.width);
        let dt = TIME_OFFSETS[ti];
        let bg_seed = self.config.seed ^ 0x9e3779b97f4a7c15;
        let mut img = Grid2D::new(h, w, 1);
        for i in 0..h {
            for j in 0..w {
                let hit = self.surface_at(ti, eye, j as f64, i as f64);
                let value = match hit.id {
                    SurfaceId::Background => {
                        value_noise(bg_seed, hit.point[0] * 1.5, hit.point[1] * 1.5)
                    }
                    SurfaceId::Object(k) => {
                        let obj = &self.config.objects[k];
                        let c = obj.center_at(dt);
                        // object-local texture coordinates
                        value_noise(
                            obj.texture_seed,
                            (hit.point[0] - c[0]) * 6.0,
                            (hit.point[1] - c[1]) * 6.0,
                        )
                    }
                };
                img.set(i, j, 0, 0.1 + 0.8 * value);
            }
        }
        img
    }
}

/// Deterministic integer hash (splitmix-style), stable across platforms.
fn hash_u64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = hash_u64(
        seed ^ (ix as u64).wrapping_mul(0x85eb_ca6b) ^ (iy as u64).wrapping_mul(0xc2b2_ae35),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in [0, 1).
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (ix, iy) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    let sx = fx * fx * (3.0 - 2.0 * fx);
    let sy = fy * fy * (3.0 - 2.0 * fy);
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let a = v00 * (1.0 - sx) + v10 * sx;
    let b = v01 * (1.0 - sx) + v11 * sx;
    a * (1.0 - sy) + b * sy
}

/// Renders a full sample: six images plus bi-directional ground truth and
/// occlusion masks. The sample id is derived from the scene seed; callers
/// building datasets overwrite it with their own numbering.
pub fn generate_sample(config: &SceneConfig) -> Result<FrameTripletSample<f64>> {
    let scene = SceneInstance::new(config.clone())?;
    let mut left = Vec::with_capacity(3);
    let mut right = Vec::with_capacity(3);
    for ti in 0..3 {
        left.push(scene.render(ti, Eye::Left));
        right.push(scene.render(ti, Eye::Right));
    }
    let make_gt = |direction: FlowDirection| {
        let field = scene.analytic_field(direction);
        let (valid, noc) = scene.occlusion_masks(direction);
        DirectionalGt { field, valid, noc }
    };
    let sample = FrameTripletSample {
        id: format!("{:06}", config.seed % 1_000_000),
        left: [left.remove(0), left.remove(0), left.remove(0)],
        right: [right.remove(0), right.remove(0), right.remove(0)],
        forward: make_gt(FlowDirection::Forward),
        backward: Some(make_gt(FlowDirection::Backward)),
    };
    sample.validate()?;
    Ok(sample)
}

/// Random scene family for dataset generation.
///
/// `accel_coupling` ties each object's acceleration to its velocity
/// (`a = c * v` with `c` drawn per object), which makes the forward field
/// statistically predictable from the backward one; `accel_jitter` adds an
/// independent component on top.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDistribution {
    pub height: usize,
    pub width: usize,
    pub focal: f64,
    pub baseline: f64,
    pub background_depth: f64,
    pub n_objects: usize,
    /// Object extent range in meters.
    pub extent: (f64, f64),
    /// Object depth range in meters.
    pub depth: (f64, f64),
    /// Transverse speed magnitude range, m/frame.
    pub speed: (f64, f64),
    /// Depth-velocity magnitude bound, m/frame (signed uniform).
    pub speed_z: f64,
    /// Acceleration-velocity coupling factor range.
    pub accel_coupling: (f64, f64),
    /// Independent acceleration bound per axis, m/frame^2.
    pub accel_jitter: f64,
    pub camera: CameraMotion,
}

impl Default for SceneDistribution {
    fn default() -> Self {
        SceneDistribution {
            height: 32,
            width: 48,
            focal: 80.0,
            baseline: 0.5,
            background_depth: 22.0,
            n_objects: 3,
            extent: (0.8, 2.2),
            depth: (3.5, 9.0),
            speed: (0.1, 0.45),
            speed_z: 0.0,
            accel_coupling: (0.0, 0.0),
            accel_jitter: 0.0,
            camera: CameraMotion::default(),
        }
    }
}

impl SceneDistribution {
    /// Deterministically samples the config of dataset entry `index`.
    pub fn sample_config(&self, seed: u64, index: u64) -> SceneConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(seed ^ hash_u64(index)));
        let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> f64 {
            if hi > lo {
                rng.random::<f64>() * (hi - lo) + lo
            } else {
                lo
            }
        };
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let mut objects = Vec::with_capacity(self.n_objects);
        for _ in 0..self.n_objects {
            let z = uniform(&mut rng, self.depth.0, self.depth.1);
            // anchor the object inside the view at the reference time
            let px = uniform(&mut rng, 0.15 * self.width as f64, 0.85 * self.width as f64);
            let py = uniform(&mut rng, 0.2 * self.height as f64, 0.8 * self.height as f64);
            let x = (px - cx) * z / self.focal;
            let y = (py - cy) * z / self.focal;
            let speed = uniform(&mut rng, self.speed.0, self.speed.1);
            let angle = uniform(&mut rng, 0.0, std::f64::consts::TAU);
            let vz = uniform(&mut rng, -self.speed_z, self.speed_z);
            let velocity = [speed * angle.cos(), 0.4 * speed * angle.sin(), vz];
            let coupling = uniform(&mut rng, self.accel_coupling.0, self.accel_coupling.1);
            let jitter = self.accel_jitter;
            let acceleration = [
                coupling * velocity[0] + uniform(&mut rng, -jitter, jitter),
                coupling * velocity[1] + uniform(&mut rng, -jitter, jitter),
                coupling * velocity[2],
            ];
            objects.push(ObjectSpec {
                extent: (
                    uniform(&mut rng, self.extent.0, self.extent.1),
                    uniform(&mut rng, self.extent.0, self.extent.1),
                ),
                position: [x, y, z],
                velocity,
                acceleration,
                texture_seed: rng.random::<u64>(),
            });
        }
        SceneConfig {
            height: self.height,
            width: self.width,
            focal: self.focal,
            baseline: self.baseline,
            background_depth: self.background_depth,
            objects,
            camera: self.camera,
            seed: hash_u64(seed ^ hash_u64(index ^ 0xabcd)),
        }
    }

    /// Generates `count` samples with zero-padded sequential ids.
    pub fn generate(&self, seed: u64, count: usize) -> Result<Vec<FrameTripletSample<f64>>> {
        (0..count)
            .map(|k| {
                let mut sample = generate_sample(&self.sample_config(seed, k as u64))?;
                sample.id = format!("{k:06}");
                Ok(sample)
            })
            .collect()
    }
}
