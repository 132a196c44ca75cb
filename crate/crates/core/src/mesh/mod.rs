//! Triangle meshes of lattice regions and boundary electrodes.

mod electrodes;
mod triangulate;

pub use electrodes::{place_electrodes, boundary_loops, Electrode, ElectrodeSet, ElectrodeSpec};
pub use triangulate::triangulate;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Conforming P1 triangle mesh, coordinates in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    /// Edges used by exactly one triangle, oriented with the interior on the left.
    boundary_edges: Vec<[usize; 2]>,
    /// `neighbors[t][k]` is the triangle across edge `(v[k], v[k+1])`.
    neighbors: Vec<[Option<usize>; 3]>,
}

impl Mesh {
    /// Builds a mesh, turning clockwise triangles counterclockwise. Fails on
    /// degenerate triangles and on edges shared by more than two triangles.
    pub fn new(nodes: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::Meshing(format!("triangle {t} references a missing node")));
            }
            let [a, b, c] = tri.map(|v| nodes[v]);
            let area2 = (b - a).cross(c - a);
            if !(area2.abs() > 0.0) {
                return Err(Error::Meshing(format!("triangle {t} has zero area")));
            }
            if area2 < 0.0 {
                tri.swap(1, 2);
            }
        }
        let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * triangles.len());
        let mut neighbors = vec![[None; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if owner.contains_key(&(a, b)) {
                    return Err(Error::Meshing(format!("edge ({a}, {b}) is used twice with the same orientation")));
                }
                if let Some(&(s, sk)) = owner.get(&(b, a)) {
                    if neighbors[s][sk].is_some() {
                        return Err(Error::Meshing(format!("edge ({a}, {b}) shared by more than two triangles")));
                    }
                    neighbors[s][sk] = Some(t);
                    neighbors[t][k] = Some(s);
                }
                owner.insert((a, b), (t, k));
            }
        }
        let mut boundary_edges = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                if neighbors[t][k].is_none() {
                    boundary_edges.push([tri[k], tri[(k + 1) % 3]]);
                }
            }
        }
        Ok(Self {
            nodes,
            triangles,
            boundary_edges,
            neighbors,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices_of(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.nodes[v])
    }

    pub fn element_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices_of(t);
        0.5 * (b - a).cross(c - a)
    }

    pub fn element_centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices_of(t);
        (a + b + c) * (1.0 / 3.0)
    }

    pub fn area(&self) -> f64 {
        (0..self.element_count()).map(|t| self.element_area(t)).sum()
    }

    /// Shared-edge adjacency lists, sorted.
    pub fn element_adjacency(&self) -> Vec<Vec<usize>> {
        self.neighbors
            .iter()
            .map(|n| {
                let mut v: Vec<usize> = n.iter().flatten().copied().collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    pub fn stats(&self) -> MeshStats {
        let mut min_angle = f64::INFINITY;
        let mut max_edge: f64 = 0.0;
        for t in 0..self.element_count() {
            let p = self.vertices_of(t);
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                max_edge = max_edge.max(a.dist(b));
                let (u, v) = (b - a, c - a);
                let ang = u.cross(v).abs().atan2(u.dot(v)).to_degrees();
                min_angle = min_angle.min(ang);
            }
        }
        let perimeter = self
            .boundary_edges
            .iter()
            .map(|&[a, b]| self.nodes[a].dist(self.nodes[b]))
            .sum();
        MeshStats {
            elements: self.element_count(),
            nodes: self.node_count(),
            min_angle,
            max_edge,
            perimeter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub elements: usize,
    pub nodes: usize,
    /// degrees
    pub min_angle: f64,
    pub max_edge: f64,
    /// Total boundary length, holes included.
    pub perimeter: f64,
}
