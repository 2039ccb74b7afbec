//! Marching cubes over the pruned grid.
//!
//! Instead of a case table, each cube face is walked counter-clockwise as
//! seen from outside the cube. Every sign change along the walk is an edge
//! crossing; on each face, crossings entering the negative region are joined
//! to crossings leaving it, which yields closed, consistently oriented loops
//! that are triangulated without adding edges across cube faces. Faces with four crossings are disambiguated by
//! the bilinear saddle value, which only depends on the face itself, so
//! neighbouring cubes always agree and the surface is watertight.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::grid::{split_index, Chunk, ChunkKey, VoxelGrid, CHUNK_SIZE};
use crate::error::{Error, Result};
use crate::scene_io::ply::{read_ply, write_ply, PlyData};
use crate::scene_io::{argmax_lowest, ClassPalette};

/// Indexed triangle mesh with per-vertex class labels and colours.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SemanticMesh {
    pub vertices: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_labels: Vec<u8>,
    pub vertex_colors: Vec<[u8; 3]>,
}

impl SemanticMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Checks index bounds, attribute lengths and degenerate triangles.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.vertex_labels.len() != n || self.vertex_colors.len() != n {
            return Err(Error::invalid(
                "mesh",
                format!(
                    "{n} vertices but {} labels and {} colours",
                    self.vertex_labels.len(),
                    self.vertex_colors.len()
                ),
            ));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= n) {
                return Err(Error::invalid(
                    "mesh",
                    format!("triangle {t} indexes past {n} vertices"),
                ));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid("mesh", format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }

    /// Area-weighted vertex normals, normalised. Isolated vertices get zero.
    pub fn vertex_normals(&self) -> Vec<[f64; 3]> {
        let mut acc = vec![[0.0f64; 3]; self.vertices.len()];
        for tri in &self.triangles {
            let p = tri.map(|i| self.vertices[i as usize].map(|c| c as f64));
            let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
            let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
            let n = [
                e1[1] * e2[2] - e1[2] * e2[1],
                e1[2] * e2[0] - e1[0] * e2[2],
                e1[0] * e2[1] - e1[1] * e2[0],
            ];
            for &i in tri {
                for c in 0..3 {
                    acc[i as usize][c] += n[c];
                }
            }
        }
        for n in &mut acc {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if len > 0.0 {
                *n = n.map(|c| c / len);
            }
        }
        acc
    }

    /// Undirected edges with the number of triangles using each.
    pub fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut edges = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }
}

// Corner `c` of a cube sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const fn corner(x: usize, y: usize, z: usize) -> usize {
    x | (y << 1) | (z << 2)
}

/// Face corner cycles, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [corner(0, 0, 0), corner(0, 0, 1), corner(0, 1, 1), corner(0, 1, 0)],
    [corner(1, 0, 0), corner(1, 1, 0), corner(1, 1, 1), corner(1, 0, 1)],
    [corner(0, 0, 0), corner(1, 0, 0), corner(1, 0, 1), corner(0, 0, 1)],
    [corner(0, 1, 0), corner(0, 1, 1), corner(1, 1, 1), corner(1, 1, 0)],
    [corner(0, 0, 0), corner(0, 1, 0), corner(1, 1, 0), corner(1, 0, 0)],
    [corner(0, 0, 1), corner(1, 0, 1), corner(1, 1, 1), corner(0, 1, 1)],
];

/// Cube edge id between two adjacent corners: the lower corner and axis.
#[inline]
fn edge_id(a: usize, b: usize) -> usize {
    let lo = a.min(b);
    let axis = (a ^ b).trailing_zeros() as usize;
    lo * 3 + axis
}

/// Closed, oriented loops of cube edge ids for one cube.
fn cube_loops(values: &[f32; 8], loops: &mut Vec<Vec<usize>>) {
    loops.clear();
    let inside = values.map(|v| v < 0.0);
    if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
        return;
    }
    // next[e] = edge reached from crossing e
    let mut next = [usize::MAX; 24];
    for face in FACES {
        let crossing = |k: usize| inside[face[k]] != inside[face[(k + 1) % 4]];
        let entering = |k: usize| !inside[face[k]] && inside[face[(k + 1) % 4]];
        let edge = |k: usize| edge_id(face[k], face[(k + 1) % 4]);
        let count = (0..4).filter(|&k| crossing(k)).count();
        match count {
            0 => {}
            2 => {
                let from = (0..4).find(|&k| entering(k)).expect("one entering crossing");
                let to = (0..4).find(|&k| crossing(k) && !entering(k)).expect("one exit");
                next[edge(from)] = edge(to);
            }
            4 => {
                let v = face.map(|c| values[c] as f64);
                let denom = v[0] + v[2] - v[1] - v[3];
                let saddle = if denom != 0.0 {
                    (v[0] * v[2] - v[1] * v[3]) / denom
                } else {
                    0.0
                };
                let joined = saddle < 0.0;
                for k in 0..4 {
                    if !entering(k) {
                        continue;
                    }
                    // Entering edge k ends at an inside corner. Separate inside
                    // regions: leave around that same corner via edge k + 1.
                    // Joined: the outside corner before edge k is cut off,
                    // so leave via edge k − 1.
                    let to = if joined { (k + 3) % 4 } else { (k + 1) % 4 };
                    next[edge(k)] = edge(to);
                }
            }
            _ => unreachable!("a closed face cycle has an even number of crossings"),
        }
    }
    let mut seen = [false; 24];
    for start in 0..24 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            cycle.push(e);
            e = next[e];
        }
        loops.push(cycle);
    }
}

/// Global key of a cube edge (lower voxel index, axis 0..3), or of a loop
/// centre (cube index, 3 + loop number).
type VertexKey = ([i32; 3], u8);

struct ChunkMesh {
    keys: Vec<VertexKey>,
    positions: Vec<[f32; 3]>,
    labels: Vec<u8>,
    triangles: Vec<[u32; 3]>,
}

impl ChunkMesh {
    fn push_vertex(&mut self, key: VertexKey, position: [f32; 3], label: u8) -> u32 {
        self.keys.push(key);
        self.positions.push(position);
        self.labels.push(label);
        (self.keys.len() - 1) as u32
    }
}

/// True when two cube edges lie on a common cube face.
fn share_face(a: usize, b: usize) -> bool {
    let (ca, ia) = (a / 3, a % 3);
    let (cb, ib) = (b / 3, b % 3);
    (0..3).any(|k| k != ia && k != ib && (ca >> k) & 1 == (cb >> k) & 1)
}

/// Loop position from which every fan diagonal runs through the cube
/// interior. A diagonal between two crossings on one face could coincide
/// with an edge of the neighbouring cube.
fn fan_apex(cycle: &[usize]) -> Option<usize> {
    let n = cycle.len();
    (0..n).find(|&s| (2..n - 1).all(|k| !share_face(cycle[s], cycle[(s + k) % n])))
}

/// `(sdf, weight, chunk, local index)` for the `(CHUNK_SIZE + 1)³` voxels a
/// chunk's cubes touch.
fn gather(grid: &VoxelGrid, key: ChunkKey) -> Vec<Option<(f32, &Chunk, usize)>> {
    let n = (CHUNK_SIZE + 1) as usize;
    let mut out = Vec::with_capacity(n * n * n);
    for z in 0..=CHUNK_SIZE {
        for y in 0..=CHUNK_SIZE {
            for x in 0..=CHUNK_SIZE {
                let g = [
                    key[0] * CHUNK_SIZE + x,
                    key[1] * CHUNK_SIZE + y,
                    key[2] * CHUNK_SIZE + z,
                ];
                let (k, i) = split_index(g);
                out.push(
                    grid.chunks
                        .get(&k)
                        .filter(|c| c.weight[i] > 0.0)
                        .map(|c| (c.sdf[i], c, i)),
                );
            }
        }
    }
    out
}

fn mesh_chunk(grid: &VoxelGrid, key: ChunkKey) -> ChunkMesh {
    let classes = grid.classes();
    let n = (CHUNK_SIZE + 1) as usize;
    let samples = gather(grid, key);
    let at = |x: usize, y: usize, z: usize| &samples[(z * n + y) * n + x];
    let mut out = ChunkMesh {
        keys: Vec::new(),
        positions: Vec::new(),
        labels: Vec::new(),
        triangles: Vec::new(),
    };
    let mut local: HashMap<VertexKey, u32> = HashMap::new();
    let mut loops = Vec::new();
    let base = key.map(|k| k * CHUNK_SIZE);
    let cs = CHUNK_SIZE as usize;
    for z in 0..cs {
        for y in 0..cs {
            for x in 0..cs {
                let mut corners = [None; 8];
                let mut complete = true;
                for (c, slot) in corners.iter_mut().enumerate() {
                    *slot = *at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                    complete &= slot.is_some();
                }
                if !complete {
                    continue;
                }
                let corners = corners.map(|c| c.expect("checked"));
                let values = corners.map(|c| c.0);
                cube_loops(&values, &mut loops);
                for (loop_index, cycle) in loops.iter().enumerate() {
                    let ids: Vec<u32> = cycle
                        .iter()
                        .map(|&e| {
                            let (lo, axis) = (e / 3, e % 3);
                            let hi = lo | (1 << axis);
                            let gk = (
                                [
                                    base[0] + (x + (lo & 1)) as i32,
                                    base[1] + (y + ((lo >> 1) & 1)) as i32,
                                    base[2] + (z + ((lo >> 2) & 1)) as i32,
                                ],
                                axis as u8,
                            );
                            *local.entry(gk).or_insert_with(|| {
                                let (va, vb) = (values[lo] as f64, values[hi] as f64);
                                let t = va / (va - vb);
                                let mut p = grid.voxel_position(gk.0);
                                p[axis] += t * grid.params().voxel_size;
                                let (_, chunk, i) = if t <= 0.5 { corners[lo] } else { corners[hi] };
                                let label = argmax_lowest(&chunk.scores[i * classes..(i + 1) * classes]);
                                out.push_vertex(gk, [p.x as f32, p.y as f32, p.z as f32], label as u8)
                            })
                        })
                        .collect();
                    let n = ids.len();
                    if let Some(apex) = fan_apex(cycle) {
                        for k in 1..n - 1 {
                            out.triangles.push([
                                ids[apex],
                                ids[(apex + k) % n],
                                ids[(apex + k + 1) % n],
                            ]);
                        }
                    } else {
                        let mut c = [0.0f32; 3];
                        for &i in &ids {
                            for (a, b) in c.iter_mut().zip(out.positions[i as usize]) {
                                *a += b / n as f32;
                            }
                        }
                        let label = out.labels[ids[0] as usize];
                        let key = (
                            [base[0] + x as i32, base[1] + y as i32, base[2] + z as i32],
                            3 + loop_index as u8,
                        );
                        let centre = out.push_vertex(key, c, label);
                        for k in 0..n {
                            out.triangles.push([centre, ids[k], ids[(k + 1) % n]]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Labelled zero-level surface of the grid. Cubes touching an unobserved
/// voxel are skipped. Each vertex takes the highest-scoring class of the
/// nearer voxel on its edge and the matching palette colour.
pub fn extract_mesh(grid: &VoxelGrid, palette: &ClassPalette) -> SemanticMesh {
    let keys = grid.chunk_keys();
    let parts: Vec<ChunkMesh> = keys.par_iter().map(|&k| mesh_chunk(grid, k)).collect();
    let mut mesh = SemanticMesh::default();
    let mut index: HashMap<VertexKey, u32> = HashMap::new();
    for part in parts {
        let remap: Vec<u32> = part
            .keys
            .iter()
            .enumerate()
            .map(|(i, key)| {
                *index.entry(*key).or_insert_with(|| {
                    mesh.vertices.push(part.positions[i]);
                    mesh.vertex_labels.push(part.labels[i]);
                    mesh.vertex_colors.push(palette.color(part.labels[i]));
                    (mesh.vertices.len() - 1) as u32
                })
            })
            .collect();
        mesh.triangles
            .extend(part.triangles.iter().map(|t| t.map(|i| remap[i as usize])));
    }
    mesh
}

pub fn export_mesh(mesh: &SemanticMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    write_ply(
        &PlyData {
            positions: mesh.vertices.clone(),
            colors: Some(mesh.vertex_colors.clone()),
            labels: Some(mesh.vertex_labels.clone()),
            faces: Some(mesh.triangles.clone()),
        },
        path,
    )
}

/// Reads a mesh PLY. Missing colours default to grey, missing labels to 0.
pub fn import_mesh(path: &Path) -> Result<SemanticMesh> {
    let data = read_ply(path)?;
    let n = data.positions.len();
    let mesh = SemanticMesh {
        vertex_colors: data.colors.unwrap_or_else(|| vec![[128; 3]; n]),
        vertex_labels: data.labels.unwrap_or_else(|| vec![0; n]),
        triangles: data.faces.unwrap_or_default(),
        vertices: data.positions,
    };
    mesh.validate()?;
    Ok(mesh)
}
