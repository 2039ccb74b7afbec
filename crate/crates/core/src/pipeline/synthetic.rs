//! Procedural desk-scale test scene: a ground plane, boxes and spheres seen
//! by a stereo rig, rendered by ray casting.

use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{write_labeled_points, LabeledPoints};
use crate::scene_io::{
    write_calibration, write_depth_png, write_labels_png, write_palette, write_poses,
    CameraIntrinsics, ClassPalette, DepthMap, LabelMap, Pose, SequenceLayout, StereoRig,
};

pub const GROUND: u8 = 0;
pub const BOX: u8 = 1;
pub const SPHERE: u8 = 2;
pub const SKY: u8 = 3;

/// Geometry and cameras must stay inside `[-5, 5]³`.
pub const SCENE_HALF_EXTENT: f64 = 5.0;

const SKY_COLOR: [u8; 3] = [150, 190, 230];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Analytic scene with a z-up ground plane at `z = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    /// Half side of the square ground plane; `None` for no ground.
    pub ground: Option<f64>,
    pub boxes: Vec<AxisBox>,
    pub spheres: Vec<Sphere>,
    /// Left camera poses, one per frame.
    pub trajectory: Vec<Pose>,
}

/// `ground`, `box`, `sphere`, `sky`.
pub fn synthetic_palette() -> ClassPalette {
    ClassPalette::new(
        vec!["ground".into(), "box".into(), "sphere".into(), "sky".into()],
        vec![[90, 160, 60], [200, 120, 40], [60, 90, 200], [150, 190, 230]],
    )
    .expect("valid palette")
}

/// Rig used by the synthetic sequences: focal length 250 px at 320 px width,
/// scaled with the image, and a 10 cm baseline.
pub fn synthetic_rig(width: u32, height: u32) -> Result<StereoRig> {
    let f = 250.0 * width as f64 / 320.0;
    let intrinsics = CameraIntrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)?;
    StereoRig::new(intrinsics, 0.1)
}

struct Hit {
    t: f64,
    class: u8,
    point: Vector3<f64>,
}

impl SyntheticScene {
    /// Ground, three boxes and a sphere, with `frames` cameras on a circular
    /// orbit looking at the middle of the desk.
    pub fn desk(frames: usize) -> Self {
        let target = Point3::new(0.0, 0.0, 0.2);
        let trajectory = (0..frames)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / frames as f64;
                let eye = Point3::new(2.0 * a.cos(), 2.0 * a.sin(), 1.5);
                Pose::look_at(eye, target, Vector3::z()).expect("valid orbit pose")
            })
            .collect();
        Self {
            ground: Some(4.0),
            boxes: vec![
                AxisBox {
                    min: [-0.9, -0.5, 0.0],
                    max: [-0.35, 0.1, 0.5],
                },
                AxisBox {
                    min: [0.3, 0.4, 0.0],
                    max: [0.8, 0.9, 0.3],
                },
                AxisBox {
                    min: [0.2, -0.9, 0.0],
                    max: [0.6, -0.5, 0.8],
                },
            ],
            spheres: vec![Sphere {
                center: [0.0, 0.1, 0.35],
                radius: 0.3,
            }],
            trajectory,
        }
    }

    /// A lone sphere at the origin seen from the 12 vertex directions of an
    /// icosahedron, at `distance` from its centre.
    pub fn sphere_views(radius: f64, distance: f64) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut dirs = Vec::with_capacity(12);
        for a in [-1.0, 1.0] {
            for b in [-phi, phi] {
                dirs.push(Vector3::new(0.0, a, b));
                dirs.push(Vector3::new(a, b, 0.0));
                dirs.push(Vector3::new(b, 0.0, a));
            }
        }
        let trajectory = dirs
            .into_iter()
            .map(|d| {
                let eye = Point3::from(d.normalize() * distance);
                Pose::look_at(eye, Point3::origin(), Vector3::z()).expect("no view along z")
            })
            .collect();
        Self {
            ground: None,
            boxes: Vec::new(),
            spheres: vec![Sphere {
                center: [0.0; 3],
                radius,
            }],
            trajectory,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::invalid("synthetic scene", reason));
        let inside = |p: [f64; 3]| p.iter().all(|c| c.abs() <= SCENE_HALF_EXTENT);
        if let Some(g) = self.ground {
            if !(g > 0.0 && g <= SCENE_HALF_EXTENT) {
                return fail(format!("ground half extent {g} outside (0, {SCENE_HALF_EXTENT}]"));
            }
        }
        for b in &self.boxes {
            if (0..3).any(|k| !(b.min[k] < b.max[k])) {
                return fail(format!("box {:?}..{:?} is empty", b.min, b.max));
            }
            if !inside(b.min) || !inside(b.max) {
                return fail(format!("box {:?}..{:?} leaves the scene bounds", b.min, b.max));
            }
        }
        for s in &self.spheres {
            if !(s.radius > 0.0) {
                return fail(format!("sphere radius must be > 0, got {}", s.radius));
            }
            if !inside(s.center.map(|c| c.abs() + s.radius)) {
                return fail(format!("sphere at {:?} leaves the scene bounds", s.center));
            }
        }
        for (k, pose) in self.trajectory.iter().enumerate() {
            let c = pose.center();
            if !inside([c.x, c.y, c.z]) {
                return fail(format!("camera {k} at {:?} leaves the scene bounds", [c.x, c.y, c.z]));
            }
        }
        Ok(())
    }

    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |t: f64, class: u8| {
            if t > 1e-9 && best.as_ref().is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    class,
                    point: origin + dir * t,
                });
            }
        };
        if let Some(g) = self.ground {
            if dir.z != 0.0 {
                let t = -origin.z / dir.z;
                let p = origin + dir * t;
                if p.x.abs() <= g && p.y.abs() <= g {
                    consider(t, GROUND);
                }
            }
        }
        for b in &self.boxes {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..3 {
                if dir[k] == 0.0 {
                    if origin[k] < b.min[k] || origin[k] > b.max[k] {
                        t0 = f64::INFINITY;
                    }
                    continue;
                }
                let a = (b.min[k] - origin[k]) / dir[k];
                let c = (b.max[k] - origin[k]) / dir[k];
                t0 = t0.max(a.min(c));
                t1 = t1.min(a.max(c));
            }
            if t0 <= t1 {
                consider(t0, BOX);
            }
        }
        for s in &self.spheres {
            let oc = origin - Vector3::from(s.center);
            let a = dir.norm_squared();
            let half_b = oc.dot(dir);
            let c = oc.norm_squared() - s.radius * s.radius;
            let disc = half_b * half_b - a * c;
            if disc >= 0.0 {
                consider((-half_b - disc.sqrt()) / a, SPHERE);
            }
        }
        best
    }

    fn pixel_ray(pose: &Pose, k: &CameraIntrinsics, u: f64, v: f64) -> Vector3<f64> {
        pose.rotation() * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
    }

    /// Exact depth and class at every pixel centre. Rays that miss the scene
    /// get invalid depth and the sky class.
    pub fn render_depth(&self, pose: &Pose, k: &CameraIntrinsics) -> (DepthMap, LabelMap) {
        let (w, h) = k.size();
        let origin = *pose.translation();
        let samples: Vec<(f32, u8)> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let dir = Self::pixel_ray(pose, k, (i % w) as f64, (i / w) as f64);
                // the ray has unit camera z, so its parameter is the depth
                self.cast(&origin, &dir)
                    .map_or((0.0, SKY), |hit| (hit.t as f32, hit.class))
            })
            .collect();
        let (depth, labels): (Vec<f32>, Vec<u8>) = samples.into_iter().unzip();
        (
            DepthMap::new(w, h, depth).expect("finite depth"),
            LabelMap::new(w, h, labels, 4).expect("labels below 4"),
        )
    }

    /// Textured colour image, 2×2 supersampled.
    pub fn render_color(&self, pose: &Pose, k: &CameraIntrinsics) -> RgbImage {
        let (w, h) = k.size();
        let origin = *pose.translation();
        let pixels: Vec<[u8; 3]> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let mut acc = [0.0f64; 3];
                for (dx, dy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                    let dir = Self::pixel_ray(pose, k, x + dx, y + dy);
                    let c = match self.cast(&origin, &dir) {
                        Some(hit) => surface_color(&hit.point, hit.class),
                        None => SKY_COLOR.map(f64::from),
                    };
                    for ch in 0..3 {
                        acc[ch] += c[ch] / 4.0;
                    }
                }
                acc.map(|c| c.round().clamp(0.0, 255.0) as u8)
            })
            .collect();
        RgbImage::from_fn(w as u32, h as u32, |x, y| Rgb(pixels[y as usize * w + x as usize]))
    }

    fn visible(&self, p: &Vector3<f64>, pose: &Pose, k: &CameraIntrinsics, max_depth: f64) -> bool {
        let cam = pose.world_to_camera(&Point3::from(*p));
        if cam.z <= 1e-6 || cam.z > max_depth {
            return false;
        }
        let Some((u, v)) = k.project(&cam) else {
            return false;
        };
        if u < -0.5 || v < -0.5 || u >= k.width as f64 - 0.5 || v >= k.height as f64 - 0.5 {
            return false;
        }
        let origin = *pose.translation();
        let dir = p - origin;
        match self.cast(&origin, &dir) {
            Some(hit) => hit.t >= 1.0 - 1e-6,
            None => true,
        }
    }

    /// Surface samples on a grid of roughly `spacing`, kept when at least
    /// one camera of the trajectory sees them at a depth of at most
    /// `max_depth`.
    pub fn surface_points(&self, spacing: f64, max_depth: f64, k: &CameraIntrinsics) -> Result<LabeledPoints> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("surface sampling", format!("spacing must be > 0, got {spacing}")));
        }
        let mut candidates: Vec<(Vector3<f64>, u8)> = Vec::new();
        let steps = |len: f64| (len / spacing).ceil().max(1.0) as usize;
        let mut grid = |o: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>, class: u8| {
            let (na, nb) = (steps(a.norm()), steps(b.norm()));
            for i in 0..=na {
                for j in 0..=nb {
                    candidates.push((o + a * (i as f64 / na as f64) + b * (j as f64 / nb as f64), class));
                }
            }
        };
        if let Some(g) = self.ground {
            grid(Vector3::new(-g, -g, 0.0), Vector3::x() * 2.0 * g, Vector3::y() * 2.0 * g, GROUND);
        }
        for b in &self.boxes {
            let (lo, hi) = (Vector3::from(b.min), Vector3::from(b.max));
            let e = hi - lo;
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut a = Vector3::zeros();
                a[u] = e[u];
                let mut c = Vector3::zeros();
                c[v] = e[v];
                for side in [lo[axis], hi[axis]] {
                    let mut o = lo;
                    o[axis] = side;
                    grid(o, a, c, BOX);
                }
            }
        }
        for s in &self.spheres {
            let n = (4.0 * std::f64::consts::PI * s.radius * s.radius / (spacing * spacing)).ceil() as usize;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for i in 0..n {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                let dir = Vector3::new(r * a.cos(), r * a.sin(), z);
                candidates.push((Vector3::from(s.center) + dir * s.radius, SPHERE));
            }
        }
        let kept: Vec<([f32; 3], u8)> = candidates
            .par_iter()
            .filter(|(p, _)| self.trajectory.iter().any(|pose| self.visible(p, pose, k, max_depth)))
            .map(|(p, c)| ([p.x as f32, p.y as f32, p.z as f32], *c))
            .collect();
        let (points, labels) = kept.into_iter().unzip();
        LabeledPoints::new(points, labels)
    }
}

fn hash3(x: i64, y: i64, z: i64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear value noise in `[0, 1]` on the integer lattice.
fn value_noise(p: [f64; 3]) -> f64 {
    let base = p.map(f64::floor);
    let f = [0, 1, 2].map(|k| {
        let t = p[k] - base[k];
        t * t * (3.0 - 2.0 * t)
    });
    let b = base.map(|c| c as i64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let w: f64 = (0..3)
            .map(|k| if o[k] == 1 { f[k] } else { 1.0 - f[k] })
            .product();
        acc += w * hash3(b[0] + o[0] as i64, b[1] + o[1] as i64, b[2] + o[2] as i64);
    }
    acc
}

fn surface_color(p: &Vector3<f64>, class: u8) -> [f64; 3] {
    let at = |scale: f64, shift: f64| value_noise([p.x / scale + shift, p.y / scale + shift, p.z / scale + shift]);
    let n = 0.5 * at(0.02, 0.0) + 0.3 * at(0.06, 17.0) + 0.2 * at(0.2, 41.0);
    let intensity = 30.0 + 200.0 * n;
    let tint = match class {
        GROUND => [0.85, 1.0, 0.75],
        BOX => [1.0, 0.85, 0.7],
        _ => [0.75, 0.85, 1.0],
    };
    tint.map(|t| t * intensity)
}

/// Rendering options for [`render_synthetic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    /// Standard deviation of additive Gaussian image noise, grey levels.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Ground-truth point spacing, meters.
    pub gt_spacing: f64,
    /// Ground-truth points are kept when seen at most this deep.
    pub gt_max_depth: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            seed: 0,
            gt_spacing: 0.015,
            gt_max_depth: f64::INFINITY,
        }
    }
}

fn add_noise(img: &mut RgbImage, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for v in img.iter_mut() {
        *v = (*v as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
    }
}

/// Writes a complete sequence for `scene` under `root`: calibration, poses,
/// palette, left and right images, ground-truth depth and labels, and the
/// visible ground-truth surface samples.
pub fn render_synthetic(
    scene: &SyntheticScene,
    rig: &StereoRig,
    options: &SynthOptions,
    root: &Path,
) -> Result<SequenceLayout> {
    if !(options.gt_max_depth > 0.0) {
        return Err(Error::invalid(
            "synthetic rendering",
            format!("ground-truth depth limit must be > 0, got {}", options.gt_max_depth),
        ));
    }
    if !(options.noise_sigma >= 0.0 && options.noise_sigma.is_finite()) {
        return Err(Error::invalid(
            "synthetic rendering",
            format!("noise sigma must be >= 0, got {}", options.noise_sigma),
        ));
    }
    scene.validate()?;
    rig.validate()?;
    let layout = SequenceLayout::new(root);
    let k = &rig.intrinsics;
    for dir in ["left", "right", "gt_depth", "gt_labels"] {
        let d = root.join(dir);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    write_calibration(rig, &layout.calibration())?;
    write_poses(&scene.trajectory, &layout.poses())?;
    write_palette(&synthetic_palette(), &layout.palette())?;

    for (id, pose) in scene.trajectory.iter().enumerate() {
        let id = id as u32;
        let (depth, labels) = scene.render_depth(pose, k);
        if labels.labels().iter().all(|&l| l == SKY) {
            return Err(Error::invalid(
                "synthetic scene",
                format!("camera {id} sees no geometry"),
            ));
        }
        let right_center = pose.camera_to_world(&Point3::new(rig.baseline, 0.0, 0.0));
        let right_pose = Pose::new(*pose.rotation(), right_center.coords)?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(id as u64));
        let mut left = scene.render_color(pose, k);
        let mut right = scene.render_color(&right_pose, k);
        add_noise(&mut left, options.noise_sigma, &mut rng);
        add_noise(&mut right, options.noise_sigma, &mut rng);
        for (img, path) in [(&left, layout.left(id)), (&right, layout.right(id))] {
            img.save(&path).map_err(|source| Error::Image { path, source })?;
        }
        write_depth_png(&depth, &layout.gt_depth(id))?;
        write_labels_png(&labels, &layout.gt_labels(id))?;
    }
    let points = scene.surface_points(options.gt_spacing, options.gt_max_depth, k)?;
    write_labeled_points(&points, &layout.gt_points())?;
    Ok(layout)
}
