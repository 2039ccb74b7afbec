//! Exact nearest-surface and nearest-point queries.

use std::cmp::Ordering;

pub type Vec3 = [f64; 3];

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn add_scaled(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s]
}

#[inline]
pub fn distance_sq(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Closest point to `p` on triangle `(a, b, c)`, by Voronoi region of the
/// triangle's vertices, edges and face.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return add_scaled(a, ab, d1 / (d1 - d3));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return add_scaled(a, ac, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return add_scaled(b, sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = va + vb + vc;
    if denom == 0.0 {
        // collinear or coincident corners
        let candidates = [
            closest_point_on_segment(p, a, b),
            closest_point_on_segment(p, b, c),
            closest_point_on_segment(p, a, c),
        ];
        return candidates
            .into_iter()
            .min_by(|x, y| distance_sq(p, *x).total_cmp(&distance_sq(p, *y)))
            .expect("three candidates");
    }
    let v = vb / denom;
    let w = vc / denom;
    add_scaled(add_scaled(a, ab, v), ac, w)
}

pub fn closest_point_on_segment(p: Vec3, a: Vec3, b: Vec3) -> Vec3 {
    let ab = sub(b, a);
    let len = dot(ab, ab);
    if len == 0.0 {
        return a;
    }
    let t = (dot(sub(p, a), ab) / len).clamp(0.0, 1.0);
    add_scaled(a, ab, t)
}

pub fn point_triangle_distance_sq(p: Vec3, tri: &[Vec3; 3]) -> f64 {
    distance_sq(p, closest_point_on_triangle(p, tri[0], tri[1], tri[2]))
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    fn grow(&mut self, p: Vec3) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    fn merge(&mut self, o: &Aabb) {
        self.grow(o.min);
        self.grow(o.max);
    }

    fn distance_sq(&self, p: Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = (self.min[k] - p[k]).max(0.0).max(p[k] - self.max[k]);
            d += e * e;
        }
        d
    }

    fn longest_axis(&self) -> usize {
        let ext = sub(self.max, self.min);
        (0..3).max_by(|&a, &b| ext[a].total_cmp(&ext[b])).unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
enum BvhNode {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl BvhNode {
    fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Axis-aligned bounding-volume hierarchy over triangles for exact
/// point-to-surface distance.
#[derive(Clone, Debug)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl TriangleBvh {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Self {
        let mut bvh = Self {
            order: (0..triangles.len()).collect(),
            triangles,
            nodes: Vec::new(),
        };
        if !bvh.triangles.is_empty() {
            let centroids: Vec<Vec3> = bvh
                .triangles
                .iter()
                .map(|t| [0, 1, 2].map(|k| (t[0][k] + t[1][k] + t[2][k]) / 3.0))
                .collect();
            bvh.build(0, bvh.triangles.len(), &centroids);
        }
        bvh
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        for &i in &self.order[start..end] {
            for v in self.triangles[i] {
                bounds.grow(v);
            }
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(BvhNode::Leaf { bounds, start, end });
            return id;
        }
        let mut cbounds = Aabb::empty();
        for &i in &self.order[start..end] {
            cbounds.grow(centroids[i]);
        }
        let axis = cbounds.longest_axis();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        self.nodes.push(BvhNode::Leaf { bounds, start, end });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        let mut merged = *self.nodes[left].bounds();
        merged.merge(self.nodes[right].bounds());
        self.nodes[id] = BvhNode::Inner {
            bounds: merged,
            left,
            right,
        };
        id
    }

    /// Squared distance from `p` to the nearest triangle, `None` when empty.
    pub fn nearest_distance_sq(&self, p: Vec3) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds().distance_sq(p) > best {
                continue;
            }
            match *node {
                BvhNode::Leaf { start, end, .. } => {
                    for &i in &self.order[start..end] {
                        best = best.min(point_triangle_distance_sq(p, &self.triangles[i]));
                    }
                }
                BvhNode::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_sq(p);
                    let dr = self.nodes[right].bounds().distance_sq(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        Some(best)
    }
}

#[derive(Clone, Debug)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static 3D kd-tree. Nearest queries break distance ties towards the
/// lowest point index.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut tree = Self {
            nodes: Vec::with_capacity(points.len()),
            root: None,
            points,
        };
        let mut idx: Vec<usize> = (0..tree.points.len()).collect();
        tree.root = tree.build(&mut idx);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, idx: &mut [usize]) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let mut b = Aabb::empty();
        for &i in idx.iter() {
            b.grow(self.points[i]);
        }
        let axis = b.longest_axis();
        let mid = idx.len() / 2;
        let pts = &self.points;
        idx.select_nth_unstable_by(mid, |&a, &c| {
            pts[a][axis].total_cmp(&pts[c][axis]).then(a.cmp(&c))
        });
        let point = idx[mid];
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let left = self.build(lo);
        let right = self.build(&mut rest[1..]);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        Some(id)
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut stack = Vec::new();
        if let Some(r) = self.root {
            stack.push(r);
        }
        let better = |cand: (usize, f64), best: Option<(usize, f64)>| match best {
            None => true,
            Some((bi, bd)) => match cand.1.total_cmp(&bd) {
                Ordering::Less => true,
                Ordering::Equal => cand.0 < bi,
                Ordering::Greater => false,
            },
        };
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let p = self.points[node.point];
            let d = distance_sq(q, p);
            if better((node.point, d), best) {
                best = Some((node.point, d));
            }
            let diff = q[node.axis] - p[node.axis];
            let (near, far) = if diff < 0.0 {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            // equal splitting values may sit on either side, so only prune
            // strictly farther slabs
            if let Some(f) = far {
                if best.is_none_or(|(_, bd)| diff * diff <= bd) {
                    stack.push(f);
                }
            }
            if let Some(n) = near {
                stack.push(n);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rand_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
        [0, 1, 2].map(|_| rng.random_range(-scale..scale))
    }

    /// Independent formulation: plane projection when the foot lies inside
    /// (barycentric test), otherwise the nearest of the three edges.
    fn oracle_distance_sq(p: Vec3, t: &[Vec3; 3]) -> f64 {
        let [a, b, c] = *t;
        let ab = sub(b, a);
        let ac = sub(c, a);
        let n = [
            ab[1] * ac[2] - ab[2] * ac[1],
            ab[2] * ac[0] - ab[0] * ac[2],
            ab[0] * ac[1] - ab[1] * ac[0],
        ];
        let nn = dot(n, n);
        let edges = [(a, b), (b, c), (c, a)]
            .map(|(s, e)| distance_sq(p, closest_point_on_segment(p, s, e)))
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if nn == 0.0 {
            return edges;
        }
        let h = dot(sub(p, a), n) / nn;
        let foot = add_scaled(p, n, -h);
        // barycentric coordinates of the foot via sub-triangle areas
        let area = |u: Vec3, v: Vec3, w: Vec3| {
            let e1 = sub(v, u);
            let e2 = sub(w, u);
            dot(
                [
                    e1[1] * e2[2] - e1[2] * e2[1],
                    e1[2] * e2[0] - e1[0] * e2[2],
                    e1[0] * e2[1] - e1[1] * e2[0],
                ],
                n,
            )
        };
        let inside = area(foot, b, c) >= 0.0 && area(a, foot, c) >= 0.0 && area(a, b, foot) >= 0.0;
        if inside {
            h * h * nn
        } else {
            edges
        }
    }

    #[test]
    fn triangle_distance_examples() {
        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(point_triangle_distance_sq([0.2, 0.3, 0.0], &t) < 1e-30);
        let d = point_triangle_distance_sq([0.25, 0.25, 0.3], &t).sqrt();
        assert!((d - 0.3).abs() < 1e-15);
        // vertex and edge regions
        assert!((point_triangle_distance_sq([-1.0, -1.0, 0.0], &t) - 2.0).abs() < 1e-15);
        assert!((point_triangle_distance_sq([0.5, -2.0, 0.0], &t) - 4.0).abs() < 1e-15);
        assert!((point_triangle_distance_sq([1.0, 1.0, 0.0], &t) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_triangle_uses_segments() {
        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!((point_triangle_distance_sq([1.5, 1.0, 0.0], &t) - 1.0).abs() < 1e-15);
        let point = [[1.0, 1.0, 1.0]; 3];
        assert!((point_triangle_distance_sq([1.0, 1.0, 3.0], &point) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn bvh_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (n_tri, n_pts) in [(1, 50), (50, 200), (200, 1000)] {
            let tris: Vec<[Vec3; 3]> = (0..n_tri)
                .map(|_| {
                    let c = rand_vec(&mut rng, 2.0);
                    [0, 1, 2].map(|_| add_scaled(c, rand_vec(&mut rng, 0.3), 1.0))
                })
                .collect();
            let bvh = TriangleBvh::new(tris.clone());
            for _ in 0..n_pts {
                let p = rand_vec(&mut rng, 3.0);
                let brute = tris
                    .iter()
                    .map(|t| point_triangle_distance_sq(p, t))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(bvh.nearest_distance_sq(p), Some(brute));
            }
        }
        assert_eq!(TriangleBvh::new(Vec::new()).nearest_distance_sq([0.0; 3]), None);
    }

    #[test]
    fn kd_tree_ties_go_to_lowest_index() {
        let pts = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let tree = KdTree::new(pts);
        assert_eq!(tree.nearest([0.0, 0.0, 0.0]).unwrap().0, 0);
        assert_eq!(tree.nearest([2.0, 0.0, 0.0]).unwrap().0, 0);
        assert_eq!(KdTree::new(Vec::new()).nearest([0.0; 3]), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn kernel_agrees_with_oracle(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = [0, 1, 2].map(|_| rand_vec(&mut rng, 1.0));
            for _ in 0..20 {
                let p = rand_vec(&mut rng, 2.0);
                let a = point_triangle_distance_sq(p, &t);
                let b = oracle_distance_sq(p, &t);
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b), "{a} vs {b}");
            }
        }

        #[test]
        fn kd_tree_matches_brute_force(seed in any::<u64>(), n in 1usize..200, grid in any::<bool>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // integer grids force many exact distance ties
            let pts: Vec<Vec3> = (0..n)
                .map(|_| if grid {
                    [0, 1, 2].map(|_| rng.random_range(-3i32..3) as f64)
                } else {
                    rand_vec(&mut rng, 1.0)
                })
                .collect();
            let tree = KdTree::new(pts.clone());
            for _ in 0..50 {
                let q = if grid {
                    [0, 1, 2].map(|_| rng.random_range(-8i32..8) as f64 / 2.0)
                } else {
                    rand_vec(&mut rng, 1.5)
                };
                let brute = (0..n)
                    .map(|i| (i, distance_sq(q, pts[i])))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .unwrap();
                prop_assert_eq!(tree.nearest(q), Some(brute));
            }
        }
    }
}
