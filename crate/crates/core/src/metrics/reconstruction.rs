use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::segmentation::{segmentation_scores_from_pairs, SegmentationReport};
use super::spatial::{KdTree, TriangleBvh, Vec3};
use crate::error::{Error, Result};
use crate::fusion::SemanticMesh;
use crate::scene_io::ply::{read_ply, write_ply, PlyData};

/// Ground-truth point cloud with one class label per point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPoints {
    pub points: Vec<[f32; 3]>,
    pub labels: Vec<u8>,
}

impl LabeledPoints {
    pub fn new(points: Vec<[f32; 3]>, labels: Vec<u8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(
                "labeled points",
                format!("{} points but {} labels", points.len(), labels.len()),
            ));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn write_labeled_points(points: &LabeledPoints, path: &Path) -> Result<()> {
    write_ply(
        &PlyData {
            positions: points.points.clone(),
            colors: None,
            labels: Some(points.labels.clone()),
            faces: None,
        },
        path,
    )
}

/// Reads a point PLY; points without a label property get label 0.
pub fn read_labeled_points(path: &Path) -> Result<LabeledPoints> {
    let data = read_ply(path)?;
    let n = data.positions.len();
    LabeledPoints::new(data.positions, data.labels.unwrap_or_else(|| vec![0; n]))
}

/// Keeps the points with `z ≤ z_max`.
pub fn crop_ground_truth(points: &LabeledPoints, z_max: f64) -> LabeledPoints {
    let (points, labels) = points
        .points
        .iter()
        .zip(&points.labels)
        .filter(|(p, _)| p[2] as f64 <= z_max)
        .map(|(p, l)| (*p, *l))
        .unzip();
    LabeledPoints { points, labels }
}

fn to_f64(p: &[f32; 3]) -> Vec3 {
    p.map(|c| c as f64)
}

/// Distance target: a triangle surface or a bare point cloud.
#[derive(Clone, Copy, Debug)]
pub enum Surface<'a> {
    Mesh(&'a SemanticMesh),
    Cloud(&'a [[f32; 3]]),
}

/// Distance from every query point to the nearest point of `target`. A mesh
/// without triangles is treated as its vertex cloud.
pub fn cloud_to_surface(points: &[[f32; 3]], target: Surface<'_>) -> Result<Vec<f64>> {
    match target {
        Surface::Mesh(mesh) if !mesh.triangles.is_empty() => {
            let tris = mesh
                .triangles
                .iter()
                .map(|t| t.map(|i| to_f64(&mesh.vertices[i as usize])))
                .collect();
            let bvh = TriangleBvh::new(tris);
            Ok(points
                .par_iter()
                .map(|p| bvh.nearest_distance_sq(to_f64(p)).expect("non-empty").sqrt())
                .collect())
        }
        Surface::Mesh(mesh) => cloud_to_surface(points, Surface::Cloud(&mesh.vertices)),
        Surface::Cloud(cloud) => {
            if cloud.is_empty() {
                return Err(Error::Empty("distance target"));
            }
            let tree = KdTree::new(cloud.iter().map(to_f64).collect());
            Ok(points
                .par_iter()
                .map(|p| tree.nearest(to_f64(p)).expect("non-empty").1.sqrt())
                .collect())
        }
    }
}

/// Smallest distance within which at least a fraction `q` of the samples
/// lie: the order statistic at rank `ceil(q · n)`.
pub fn completeness_quantile(distances: &[f64], q: f64) -> Option<f64> {
    if distances.is_empty() {
        return None;
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Some(sorted[rank - 1])
}

/// Percentage of distances strictly below `threshold`.
pub fn accuracy_pct(distances: &[f64], threshold: f64) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    100.0 * distances.iter().filter(|&&d| d < threshold).count() as f64 / distances.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtToRecon {
    pub avg_dist: f64,
    pub completeness_d90: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconToGt {
    pub avg_dist: f64,
    pub accuracy_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub gt_to_recon: GtToRecon,
    pub recon_to_gt: ReconToGt,
    pub threshold: f64,
    pub quantile: f64,
    pub n_gt_points: usize,
    pub n_mesh_vertices: usize,
}

/// Ground-truth points against the mesh surface (average distance and
/// completeness quantile), and mesh vertices against the ground-truth points
/// (average distance and percentage under `threshold`).
pub fn reconstruction_report(
    gt: &[[f32; 3]],
    mesh: &SemanticMesh,
    threshold: f64,
    quantile: f64,
) -> Result<ReconstructionReport> {
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth points"));
    }
    if mesh.vertices.is_empty() {
        return Err(Error::Empty("reconstructed mesh"));
    }
    let forward = cloud_to_surface(gt, Surface::Mesh(mesh))?;
    let backward = cloud_to_surface(&mesh.vertices, Surface::Cloud(gt))?;
    Ok(ReconstructionReport {
        gt_to_recon: GtToRecon {
            avg_dist: mean(&forward),
            completeness_d90: completeness_quantile(&forward, quantile).expect("non-empty"),
        },
        recon_to_gt: ReconToGt {
            avg_dist: mean(&backward),
            accuracy_pct: accuracy_pct(&backward, threshold),
        },
        threshold,
        quantile,
        n_gt_points: gt.len(),
        n_mesh_vertices: mesh.vertices.len(),
    })
}

/// Label each ground-truth point with its nearest mesh vertex (lowest index
/// on ties).
pub fn transfer_labels(gt: &LabeledPoints, mesh: &SemanticMesh) -> Result<Vec<u8>> {
    if mesh.vertices.is_empty() {
        return Err(Error::Empty("reconstructed mesh"));
    }
    let tree = KdTree::new(mesh.vertices.iter().map(to_f64).collect());
    Ok(gt
        .points
        .par_iter()
        .map(|p| mesh.vertex_labels[tree.nearest(to_f64(p)).expect("non-empty").0])
        .collect())
}

/// Segmentation scores of nearest-vertex labels against ground-truth labels.
pub fn semantic_3d_transfer(
    gt: &LabeledPoints,
    mesh: &SemanticMesh,
    classes: usize,
    ignore: &[u8],
) -> Result<SegmentationReport> {
    let pred = transfer_labels(gt, mesh)?;
    segmentation_scores_from_pairs(&pred, &gt.labels, classes, ignore)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::spatial::point_triangle_distance_sq;
    use rand::{Rng, SeedableRng};

    fn mesh(vertices: Vec<[f32; 3]>, triangles: Vec<[u32; 3]>, labels: Vec<u8>) -> SemanticMesh {
        let n = vertices.len();
        SemanticMesh {
            vertices,
            triangles,
            vertex_labels: labels,
            vertex_colors: vec![[0; 3]; n],
        }
    }

    fn unit_triangle() -> SemanticMesh {
        mesh(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
            vec![0; 3],
        )
    }

    #[test]
    fn point_on_and_above_face() {
        let m = unit_triangle();
        let d = cloud_to_surface(&[[0.25, 0.25, 0.0], [0.25, 0.25, 0.3]], Surface::Mesh(&m)).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn empty_targets_are_errors() {
        let empty = SemanticMesh::default();
        assert!(cloud_to_surface(&[[0.0; 3]], Surface::Mesh(&empty)).is_err());
        assert!(cloud_to_surface(&[[0.0; 3]], Surface::Cloud(&[])).is_err());
        assert!(reconstruction_report(&[[0.0; 3]], &empty, 0.05, 0.9).is_err());
        let gt = LabeledPoints::new(vec![[0.0; 3]], vec![0]).unwrap();
        assert!(semantic_3d_transfer(&gt, &empty, 2, &[]).is_err());
    }

    #[test]
    fn random_points_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let vertices: Vec<[f32; 3]> = (0..150).map(|_| rng.random::<[f32; 3]>()).collect();
        let triangles: Vec<[u32; 3]> = (0..50).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
        let m = mesh(vertices, triangles, vec![0; 150]);
        let points: Vec<[f32; 3]> = (0..200).map(|_| rng.random::<[f32; 3]>().map(|c| c * 1.5 - 0.25)).collect();
        let got = cloud_to_surface(&points, Surface::Mesh(&m)).unwrap();
        for (p, d) in points.iter().zip(&got) {
            let brute = m
                .triangles
                .iter()
                .map(|t| point_triangle_distance_sq(to_f64(p), &t.map(|i| to_f64(&m.vertices[i as usize]))))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert_eq!(*d, brute);
        }
    }

    #[test]
    fn identical_geometry_gives_zero_report() {
        let m = unit_triangle();
        let r = reconstruction_report(&m.vertices, &m, 0.05, 0.9).unwrap();
        assert_eq!(r.gt_to_recon.avg_dist, 0.0);
        assert_eq!(r.gt_to_recon.completeness_d90, 0.0);
        assert_eq!(r.recon_to_gt.avg_dist, 0.0);
        assert_eq!(r.recon_to_gt.accuracy_pct, 100.0);
    }

    #[test]
    fn quantile_and_accuracy_oracles() {
        let mut d = vec![0.01; 9];
        d.push(1.0);
        assert_eq!(completeness_quantile(&d, 0.9), Some(0.01));
        assert_eq!(accuracy_pct(&[0.04, 0.06], 0.05), 50.0);
        assert_eq!(accuracy_pct(&[0.05], 0.05), 0.0);
        assert_eq!(completeness_quantile(&[], 0.9), None);
        assert_eq!(completeness_quantile(&[3.0], 0.9), Some(3.0));
    }

    #[test]
    fn d90_never_decreases_with_outliers() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut d: Vec<f64> = (0..57).map(|_| rng.random_range(0.0..1.0)).collect();
        for i in 0..20 {
            let before = completeness_quantile(&d, 0.9).unwrap();
            d.push(10.0 + i as f64);
            assert!(completeness_quantile(&d, 0.9).unwrap() >= before);
        }
    }

    #[test]
    fn transfer_cases() {
        let gt = LabeledPoints::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0, 1, 2],
        )
        .unwrap();
        let same = mesh(gt.points.clone(), vec![], gt.labels.clone());
        assert_eq!(semantic_3d_transfer(&gt, &same, 3, &[]).unwrap().overall_acc, 1.0);
        let single = mesh(vec![[5.0, 5.0, 5.0]], vec![], vec![2]);
        assert_eq!(transfer_labels(&gt, &single).unwrap(), vec![2, 2, 2]);
    }

    #[test]
    fn transfer_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let gt = LabeledPoints::new(
            (0..100).map(|_| rng.random::<[f32; 3]>()).collect(),
            (0..100).map(|_| rng.random_range(0..4)).collect(),
        )
        .unwrap();
        let m = mesh(
            (0..20).map(|_| rng.random::<[f32; 3]>()).collect(),
            vec![],
            (0..20).map(|_| rng.random_range(0..4)).collect(),
        );
        let got = transfer_labels(&gt, &m).unwrap();
        for (p, l) in gt.points.iter().zip(&got) {
            let best = (0..20)
                .min_by(|&a, &b| {
                    let da = super::super::spatial::distance_sq(to_f64(p), to_f64(&m.vertices[a]));
                    let db = super::super::spatial::distance_sq(to_f64(p), to_f64(&m.vertices[b]));
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(*l, m.vertex_labels[best]);
        }
    }

    #[test]
    fn crop_cases() {
        let pts = LabeledPoints::new(
            vec![[0.0, 0.0, 0.5], [0.0, 0.0, 1.0], [0.0, 0.0, 1.5], [0.0, 0.0, -2.0]],
            vec![0, 1, 2, 3],
        )
        .unwrap();
        assert_eq!(crop_ground_truth(&pts, 10.0), pts);
        assert!(crop_ground_truth(&pts, -5.0).is_empty());
        let mixed = crop_ground_truth(&pts, 1.0);
        assert_eq!(mixed.labels, vec![0, 1, 3]);
    }

    #[test]
    fn labeled_points_ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.ply");
        let pts = LabeledPoints::new(vec![[1.0, 2.0, 3.0], [-0.5, 0.25, 9.0]], vec![3, 0]).unwrap();
        write_labeled_points(&pts, &path).unwrap();
        assert_eq!(read_labeled_points(&path).unwrap(), pts);
    }
}
