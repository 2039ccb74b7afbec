use std::collections::{HashMap, HashSet};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::FusionParams;
use crate::error::{Error, Result};
use crate::scene_io::{CameraIntrinsics, DepthMap, LabelMap, Pose, SemanticScores};

/// Voxels per chunk edge.
pub const CHUNK_SIZE: i32 = 16;
const CHUNK_VOXELS: usize = (CHUNK_SIZE * CHUNK_SIZE * CHUNK_SIZE) as usize;

pub type ChunkKey = [i32; 3];

/// Copy of one voxel's state.
#[derive(Clone, Debug, PartialEq)]
pub struct TsdfVoxel {
    pub sdf: f32,
    pub weight: f32,
    pub class_scores: Vec<f32>,
}

#[derive(Clone, Debug)]
pub(crate) struct Chunk {
    pub(crate) sdf: Vec<f32>,
    pub(crate) weight: Vec<f32>,
    /// `CHUNK_VOXELS × classes`, voxel-major.
    pub(crate) scores: Vec<f32>,
}

impl Chunk {
    fn new(classes: usize) -> Self {
        Self {
            sdf: vec![0.0; CHUNK_VOXELS],
            weight: vec![0.0; CHUNK_VOXELS],
            scores: vec![0.0; CHUNK_VOXELS * classes],
        }
    }

    fn is_empty(&self) -> bool {
        self.weight.iter().all(|&w| w == 0.0)
    }
}

#[inline]
pub(crate) fn local_index(x: i32, y: i32, z: i32) -> usize {
    ((z * CHUNK_SIZE + y) * CHUNK_SIZE + x) as usize
}

/// Splits a global voxel index into chunk key and in-chunk offset.
#[inline]
pub(crate) fn split_index(index: [i32; 3]) -> (ChunkKey, usize) {
    let key = index.map(|i| i.div_euclid(CHUNK_SIZE));
    let [x, y, z] = index.map(|i| i.rem_euclid(CHUNK_SIZE));
    (key, local_index(x, y, z))
}

/// Sparse chunked TSDF volume with per-voxel class score accumulators.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    params: FusionParams,
    origin: Point3<f64>,
    classes: usize,
    pub(crate) chunks: HashMap<ChunkKey, Chunk>,
}

impl VoxelGrid {
    pub fn new(params: FusionParams, classes: usize) -> Result<Self> {
        Self::with_origin(params, classes, Point3::origin())
    }

    pub fn with_origin(params: FusionParams, classes: usize, origin: Point3<f64>) -> Result<Self> {
        params.validate()?;
        if classes == 0 {
            return Err(Error::invalid("voxel grid", "needs at least one class"));
        }
        Ok(Self {
            params,
            origin,
            classes,
            chunks: HashMap::new(),
        })
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    /// Chunk keys in ascending order.
    pub fn chunk_keys(&self) -> Vec<ChunkKey> {
        let mut keys: Vec<_> = self.chunks.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    /// Voxels with non-zero weight.
    pub fn observed_voxels(&self) -> usize {
        self.chunks
            .values()
            .map(|c| c.weight.iter().filter(|&&w| w > 0.0).count())
            .sum()
    }

    /// World position of a voxel: `origin + index · voxel_size`.
    pub fn voxel_position(&self, index: [i32; 3]) -> Point3<f64> {
        let s = self.params.voxel_size;
        self.origin + Vector3::new(index[0] as f64, index[1] as f64, index[2] as f64) * s
    }

    /// Index of the voxel nearest to a world point.
    pub fn voxel_index(&self, p: &Point3<f64>) -> [i32; 3] {
        let q = (p - self.origin) / self.params.voxel_size;
        [q.x.round() as i32, q.y.round() as i32, q.z.round() as i32]
    }

    pub fn voxel(&self, index: [i32; 3]) -> Option<TsdfVoxel> {
        let (key, i) = split_index(index);
        let chunk = self.chunks.get(&key)?;
        Some(TsdfVoxel {
            sdf: chunk.sdf[i],
            weight: chunk.weight[i],
            class_scores: chunk.scores[i * self.classes..(i + 1) * self.classes].to_vec(),
        })
    }

    /// Overwrites one voxel, allocating its chunk if needed. `sdf` is clamped
    /// to the truncation band.
    pub fn set_voxel(&mut self, index: [i32; 3], voxel: &TsdfVoxel) -> Result<()> {
        if voxel.class_scores.len() != self.classes {
            return Err(Error::invalid(
                "voxel",
                format!(
                    "{} class scores for a {}-class grid",
                    voxel.class_scores.len(),
                    self.classes
                ),
            ));
        }
        if !(voxel.weight >= 0.0 && voxel.sdf.is_finite()) {
            return Err(Error::invalid("voxel", "weight must be >= 0 and sdf finite"));
        }
        let trunc = self.params.truncation() as f32;
        let classes = self.classes;
        let (key, i) = split_index(index);
        let chunk = self.chunks.entry(key).or_insert_with(|| Chunk::new(classes));
        chunk.sdf[i] = voxel.sdf.clamp(-trunc, trunc);
        chunk.weight[i] = voxel.weight;
        chunk.scores[i * classes..(i + 1) * classes].copy_from_slice(&voxel.class_scores);
        Ok(())
    }

    /// Resets voxels with weight below `min_weight` and frees empty chunks.
    pub fn prune(&mut self) {
        let min_weight = self.params.min_weight;
        let classes = self.classes;
        self.chunks.retain(|_, chunk| {
            for i in 0..CHUNK_VOXELS {
                if chunk.weight[i] < min_weight {
                    chunk.sdf[i] = 0.0;
                    chunk.weight[i] = 0.0;
                    chunk.scores[i * classes..(i + 1) * classes].fill(0.0);
                }
            }
            !chunk.is_empty()
        });
    }

    /// Chunks whose voxels may fall inside the truncation band of `depth`.
    fn touched_chunks(&self, depth: &DepthMap, pose: &Pose, k: &CameraIntrinsics) -> Vec<ChunkKey> {
        let p = &self.params;
        let trunc = p.truncation();
        let vs = p.voxel_size;
        let step = vs / 2.0;
        let min_f = k.fx.min(k.fy);
        let mut keys = HashSet::new();
        let (w, h) = depth.size();
        for v in 0..h {
            for u in 0..w {
                let Some(d) = depth.depth(u, v) else { continue };
                let d = d as f64;
                if d < p.clip_near || d > p.clip_far {
                    continue;
                }
                let mut t = (d - trunc).max(1e-6);
                while t <= d + trunc + step {
                    let world = pose.camera_to_world(&k.unproject(u as f64, v as f64, t));
                    let q = (world - self.origin) / vs;
                    // pixel footprint plus one voxel
                    let margin = 1.0 + t / min_f / vs;
                    let lo = q.map(|c| ((c - margin).floor() as i32).div_euclid(CHUNK_SIZE));
                    let hi = q.map(|c| ((c + margin).ceil() as i32).div_euclid(CHUNK_SIZE));
                    for cz in lo.z..=hi.z {
                        for cy in lo.y..=hi.y {
                            for cx in lo.x..=hi.x {
                                keys.insert([cx, cy, cz]);
                            }
                        }
                    }
                    t += step;
                }
            }
        }
        let mut keys: Vec<_> = keys.into_iter().collect();
        keys.sort_unstable();
        keys
    }
}

/// Semantic input accompanying a depth map.
#[derive(Clone, Copy, Debug)]
pub enum FrameSemantics<'a> {
    None,
    Scores(&'a SemanticScores),
    /// Converted to one-hot scores.
    Labels(&'a LabelMap),
}

/// Fuses one depth map into the grid by projective association: each voxel
/// centre is projected to its nearest pixel and, when `|depth − z| ≤
/// truncation`, the sample `depth − z` is averaged into the voxel. Depths
/// outside `[clip_near, clip_far]` are ignored. Returns the number of voxel
/// updates.
pub fn integrate_frame(
    grid: &mut VoxelGrid,
    depth: &DepthMap,
    semantics: FrameSemantics<'_>,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
) -> Result<usize> {
    let size = depth.size();
    if size != intrinsics.size() {
        return Err(Error::DimensionMismatch {
            expected: intrinsics.size(),
            actual: size,
        });
    }
    match semantics {
        FrameSemantics::Scores(s) => {
            if s.size() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    actual: s.size(),
                });
            }
            if s.classes() != grid.classes {
                return Err(Error::invalid(
                    "semantic scores",
                    format!("{} classes for a {}-class grid", s.classes(), grid.classes),
                ));
            }
        }
        FrameSemantics::Labels(l) => {
            if l.size() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    actual: l.size(),
                });
            }
            if l.classes() > grid.classes {
                return Err(Error::invalid(
                    "label map",
                    format!("{} classes for a {}-class grid", l.classes(), grid.classes),
                ));
            }
        }
        FrameSemantics::None => {}
    }

    let keys = grid.touched_chunks(depth, pose, intrinsics);
    if keys.is_empty() {
        return Ok(0);
    }
    let classes = grid.classes;
    let mut work: Vec<(ChunkKey, Chunk)> = keys
        .into_iter()
        .map(|k| {
            let chunk = grid.chunks.remove(&k).unwrap_or_else(|| Chunk::new(classes));
            (k, chunk)
        })
        .collect();

    let params = grid.params.clone();
    let origin = grid.origin;
    let updates: usize = work
        .par_iter_mut()
        .map(|(key, chunk)| {
            integrate_chunk(*key, chunk, origin, &params, classes, depth, semantics, pose, intrinsics)
        })
        .sum();

    for (key, chunk) in work {
        if !chunk.is_empty() {
            grid.chunks.insert(key, chunk);
        }
    }
    Ok(updates)
}

#[allow(clippy::too_many_arguments)]
fn integrate_chunk(
    key: ChunkKey,
    chunk: &mut Chunk,
    origin: Point3<f64>,
    params: &FusionParams,
    classes: usize,
    depth: &DepthMap,
    semantics: FrameSemantics<'_>,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> usize {
    let trunc = params.truncation();
    let band = trunc * (1.0 + 1e-9);
    let vs = params.voxel_size;
    let (w, h) = depth.size();
    let mut updates = 0;
    for z in 0..CHUNK_SIZE {
        for y in 0..CHUNK_SIZE {
            for x in 0..CHUNK_SIZE {
                let g = [
                    key[0] * CHUNK_SIZE + x,
                    key[1] * CHUNK_SIZE + y,
                    key[2] * CHUNK_SIZE + z,
                ];
                let world = origin + Vector3::new(g[0] as f64, g[1] as f64, g[2] as f64) * vs;
                let cam = pose.world_to_camera(&world);
                let Some((u, v)) = k.project(&cam) else { continue };
                let (u, v) = (u.round(), v.round());
                if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
                    continue;
                }
                let (u, v) = (u as usize, v as usize);
                let Some(d) = depth.depth(u, v) else { continue };
                let d = d as f64;
                if d < params.clip_near || d > params.clip_far {
                    continue;
                }
                let sample = d - cam.z;
                if sample.abs() > band {
                    continue;
                }
                let sample = sample.clamp(-trunc, trunc) as f32;
                let i = local_index(x, y, z);
                let wt = chunk.weight[i];
                chunk.sdf[i] = (wt * chunk.sdf[i] + sample) / (wt + 1.0);
                chunk.weight[i] = (wt + 1.0).min(params.max_weight);
                let acc = &mut chunk.scores[i * classes..(i + 1) * classes];
                match semantics {
                    FrameSemantics::Scores(s) => {
                        for (a, p) in acc.iter_mut().zip(s.pixel(u, v)) {
                            *a += p;
                        }
                    }
                    FrameSemantics::Labels(l) => acc[l.get(u, v) as usize] += 1.0,
                    FrameSemantics::None => {}
                }
                updates += 1;
            }
        }
    }
    updates
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(80.0, 80.0, 40.0, 30.0, 80, 60).unwrap()
    }

    fn plane_grid() -> VoxelGrid {
        // origin chosen so that world z = 2 falls on a voxel layer
        VoxelGrid::with_origin(FusionParams::default(), 3, Point3::new(0.0, 0.0, 0.02)).unwrap()
    }

    #[test]
    fn empty_depth_leaves_grid_unchanged() {
        let mut grid = plane_grid();
        let depth = DepthMap::invalid(80, 60);
        let n = integrate_frame(&mut grid, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
            .unwrap();
        assert_eq!(n, 0);
        assert_eq!(grid.chunk_count(), 0);
    }

    #[test]
    fn frontal_plane_sdf() {
        let mut grid = plane_grid();
        let depth = DepthMap::filled(80, 60, 2.0);
        integrate_frame(&mut grid, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
            .unwrap();
        let vs: f64 = 0.03;
        let trunc = grid.params().truncation();
        let surface_k = ((2.0 - 0.02) / vs).round() as i32;
        let front_k = surface_k - 4;
        let mut checked = 0;
        for i in -5..5 {
            for j in -5..5 {
                let at = grid.voxel([i, j, surface_k]).unwrap();
                let zw = grid.voxel_position([i, j, surface_k]).z;
                assert!((zw - 2.0).abs() < 1e-9);
                assert!(at.sdf.abs() <= (vs / 2.0) as f32);
                assert_eq!(at.weight, 1.0);
                let front = grid.voxel([i, j, front_k]).unwrap();
                assert!((front.sdf as f64 - trunc).abs() < 1e-5, "{}", front.sdf);
                checked += 1;
            }
        }
        assert_eq!(checked, 100);
        // every stored sdf stays within the band
        for c in grid.chunks.values() {
            assert!(c.sdf.iter().all(|s| s.abs() as f64 <= trunc + 1e-6));
        }
    }

    #[test]
    fn repeated_integration_doubles_weight() {
        let depth = DepthMap::filled(80, 60, 1.7);
        let labels = LabelMap::filled(80, 60, 2, 3).unwrap();
        let mut once = plane_grid();
        integrate_frame(&mut once, &depth, FrameSemantics::Labels(&labels), &Pose::identity(), &intrinsics())
            .unwrap();
        let mut twice = once.clone();
        integrate_frame(&mut twice, &depth, FrameSemantics::Labels(&labels), &Pose::identity(), &intrinsics())
            .unwrap();
        assert_eq!(once.chunk_keys(), twice.chunk_keys());
        for key in once.chunk_keys() {
            let (a, b) = (&once.chunks[&key], &twice.chunks[&key]);
            for i in 0..CHUNK_VOXELS {
                assert_eq!(a.sdf[i], b.sdf[i]);
                assert_eq!(b.weight[i], 2.0 * a.weight[i]);
                for c in 0..3 {
                    assert_eq!(b.scores[i * 3 + c], 2.0 * a.scores[i * 3 + c]);
                }
            }
        }
    }

    #[test]
    fn out_of_clip_range_is_ignored() {
        let mut grid = plane_grid();
        let depth = DepthMap::filled(80, 60, 0.3);
        integrate_frame(&mut grid, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
            .unwrap();
        assert_eq!(grid.chunk_count(), 0);
        let depth = DepthMap::filled(80, 60, 20.0);
        integrate_frame(&mut grid, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
            .unwrap();
        assert_eq!(grid.chunk_count(), 0);
    }

    #[test]
    fn weight_is_capped() {
        let params = FusionParams {
            max_weight: 3.0,
            ..FusionParams::default()
        };
        let mut grid = VoxelGrid::new(params, 1).unwrap();
        let depth = DepthMap::filled(80, 60, 2.0);
        for _ in 0..5 {
            integrate_frame(&mut grid, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
                .unwrap();
        }
        for c in grid.chunks.values() {
            assert!(c.weight.iter().all(|&w| w == 0.0 || w == 3.0));
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let mut grid = plane_grid();
        let depth = DepthMap::filled(40, 60, 2.0);
        assert!(matches!(
            integrate_frame(&mut grid, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics()),
            Err(Error::DimensionMismatch { .. })
        ));
        let depth = DepthMap::filled(80, 60, 2.0);
        let scores = SemanticScores::from_labels(&LabelMap::filled(80, 60, 0, 2).unwrap());
        assert!(integrate_frame(
            &mut grid,
            &depth,
            FrameSemantics::Scores(&scores),
            &Pose::identity(),
            &intrinsics()
        )
        .is_err());
    }

    #[test]
    fn frame_order_changes_sdf_by_rounding_only() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<DepthMap> = (0..4)
            .map(|_| {
                let values = (0..80 * 60).map(|_| rng.random_range(1.9f32..2.1)).collect();
                DepthMap::new(80, 60, values).unwrap()
            })
            .collect();
        let run = |order: &[usize]| {
            let mut grid = plane_grid();
            for &i in order {
                integrate_frame(&mut grid, &frames[i], FrameSemantics::None, &Pose::identity(), &intrinsics())
                    .unwrap();
            }
            grid
        };
        let a = run(&[0, 1, 2, 3]);
        let b = run(&[3, 1, 0, 2]);
        assert_eq!(a.chunk_keys(), b.chunk_keys());
        for key in a.chunk_keys() {
            let (ca, cb) = (&a.chunks[&key], &b.chunks[&key]);
            assert_eq!(ca.weight, cb.weight);
            for (x, y) in ca.sdf.iter().zip(&cb.sdf) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn prune_cases() {
        let depth = DepthMap::filled(80, 60, 2.0);
        let mut keep = VoxelGrid::new(FusionParams { min_weight: 0.0, ..FusionParams::default() }, 1).unwrap();
        integrate_frame(&mut keep, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
            .unwrap();
        let before = keep.observed_voxels();
        keep.prune();
        assert_eq!(keep.observed_voxels(), before);
        let mut drop = VoxelGrid::new(FusionParams::default(), 1).unwrap();
        integrate_frame(&mut drop, &depth, FrameSemantics::None, &Pose::identity(), &intrinsics())
            .unwrap();
        drop.prune();
        assert_eq!(drop.chunk_count(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prune_survivors_match_count(seed in any::<u64>(), min_weight in 0.0f32..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let params = FusionParams { min_weight, ..FusionParams::default() };
            let mut grid = VoxelGrid::new(params, 2).unwrap();
            let mut expected = HashMap::new();
            for _ in 0..300 {
                let idx = [rng.random_range(-40..40), rng.random_range(-40..40), rng.random_range(-40..40)];
                let weight = rng.random_range(0u32..6) as f32;
                grid.set_voxel(idx, &TsdfVoxel { sdf: 0.01, weight, class_scores: vec![weight, 0.0] }).unwrap();
                expected.insert(idx, weight);
            }
            let survivors = expected.values().filter(|&&w| w >= min_weight && w > 0.0).count();
            grid.prune();
            prop_assert_eq!(grid.observed_voxels(), survivors);
            for (idx, w) in expected {
                let v = grid.voxel(idx);
                if w >= min_weight && w > 0.0 {
                    prop_assert_eq!(v.unwrap().weight, w);
                } else if let Some(v) = v {
                    prop_assert_eq!(v, TsdfVoxel { sdf: 0.0, weight: 0.0, class_scores: vec![0.0, 0.0] });
                }
            }
        }
    }
}
