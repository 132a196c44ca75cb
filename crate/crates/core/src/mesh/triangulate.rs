use std::collections::{HashMap, HashSet};

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{PlanarRegion, Point};
use crate::mesh::Mesh;

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

const MIN_ANGLE_DEG: f64 = 20.0;

/// A triangle with every angle >= 20° and area <= this factor times h² has
/// no edge longer than h.
const SAFE_AREA_FACTOR: f64 = 0.09;

fn split_rings(region: &PlanarRegion, max_edge: f64) -> (Vec<Point2<f64>>, Vec<[usize; 2]>) {
    let mut verts = Vec::new();
    let mut edges = Vec::new();
    for ring in region.oriented_rings() {
        let base = verts.len();
        let n = ring.len();
        for k in 0..n {
            let (a, b) = (ring[k], ring[(k + 1) % n]);
            let pieces = (a.dist(b) / max_edge).ceil().max(1.0) as usize;
            for s in 0..pieces {
                let p = a + (b - a) * (s as f64 / pieces as f64);
                verts.push(Point2::new(p.x, p.y));
            }
        }
        let m = verts.len() - base;
        for k in 0..m {
            edges.push([base + k, base + (k + 1) % m]);
        }
    }
    (verts, edges)
}

fn inner_triangles(cdt: &Cdt, excluded: &HashSet<usize>) -> Vec<[usize; 3]> {
    cdt.inner_faces()
        .filter(|f| !excluded.contains(&f.fix().index()))
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect()
}

fn longest_edge(cdt: &Cdt, tris: &[[usize; 3]]) -> f64 {
    let pos: Vec<Point2<f64>> = cdt.vertices().map(|v| v.position()).collect();
    tris.iter()
        .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
        .map(|(a, b)| (pos[a].x - pos[b].x).hypot(pos[a].y - pos[b].y))
        .fold(0.0, f64::max)
}

/// Constrained Delaunay triangulation of `region` refined until no edge is
/// longer than `max_edge` and (away from sharp input corners) no angle is
/// below 20°.
pub fn triangulate(region: &PlanarRegion, max_edge: f64) -> Result<Mesh> {
    if !(max_edge > 0.0) {
        return Err(Error::invalid("max_edge must be > 0"));
    }
    let (verts, edges) = split_rings(region, max_edge);
    let expected_vertices = verts.len();
    let mut conflicts = 0usize;
    let mut cdt = Cdt::try_bulk_load_cdt(verts, edges, |_| conflicts += 1)
        .map_err(|e| Error::Meshing(format!("{e:?}")))?;
    if conflicts > 0 || cdt.num_vertices() != expected_vertices {
        return Err(Error::Meshing(format!(
            "region boundary self-intersects ({conflicts} crossing edges, {} duplicate vertices)",
            expected_vertices - cdt.num_vertices()
        )));
    }

    let h2 = max_edge * max_edge;
    let mut area = 0.35 * h2;
    let budget = (40.0 * region.area() / (SAFE_AREA_FACTOR * h2)) as usize + 10 * expected_vertices;
    let tris = loop {
        let params = RefinementParameters::<f64>::new()
            .exclude_outer_faces(true)
            .with_angle_limit(AngleLimit::from_deg(MIN_ANGLE_DEG))
            .with_max_allowed_area(area)
            .with_max_additional_vertices(budget);
        let result = cdt.refine(params);
        if !result.refinement_complete {
            return Err(Error::Meshing("refinement exceeded its vertex budget".into()));
        }
        let excluded: HashSet<usize> = result.excluded_faces.iter().map(|f| f.index()).collect();
        let tris = inner_triangles(&cdt, &excluded);
        if longest_edge(&cdt, &tris) <= max_edge * (1.0 + 1e-12) || area < 0.25 * SAFE_AREA_FACTOR * h2 {
            break tris;
        }
        area *= 0.5;
    };

    // keep only vertices used by interior triangles, in spade's order
    let pos: Vec<Point> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            Point::new(p.x, p.y)
        })
        .collect();
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut used: Vec<usize> = tris.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let nodes: Vec<Point> = used
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            remap.insert(old, new);
            pos[old]
        })
        .collect();
    let triangles = tris.iter().map(|t| t.map(|v| remap[&v])).collect();
    let mesh = Mesh::new(nodes, triangles)?;
    let rel = (mesh.area() - region.area()).abs() / region.area();
    if rel > 1e-6 {
        return Err(Error::Meshing(format!(
            "mesh area {} differs from region area {} (relative {rel:e})",
            mesh.area(),
            region.area()
        )));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;

    #[test]
    fn unit_square_coarse() {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(1.0, 1.0)));
        let m = triangulate(&r, 2.0).unwrap();
        assert!(m.element_count() >= 2);
        assert!((m.area() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn refined_square_meets_bounds() {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(10.0, 6.0)));
        let m = triangulate(&r, 0.6).unwrap();
        let s = m.stats();
        assert!(s.max_edge <= 0.6 + 1e-12, "max edge {}", s.max_edge);
        assert!(s.min_angle >= 20.0 - 1e-9, "min angle {}", s.min_angle);
        assert!((s.perimeter - 32.0).abs() < 1e-9);
    }

    #[test]
    fn hole_is_respected() {
        let r = PlanarRegion::new(
            vec![Polygon::rectangle(Point::new(0.0, 0.0), Point::new(12.0, 12.0))],
            vec![Polygon::rectangle(Point::new(4.0, 4.0), Point::new(8.0, 8.0))],
        )
        .unwrap();
        let m = triangulate(&r, 1.0).unwrap();
        assert!((m.area() - 128.0).abs() < 1e-9);
        for t in 0..m.element_count() {
            assert!(r.contains(m.element_centroid(t)));
        }
    }

    #[test]
    fn crossing_boundaries_rejected() {
        let bow = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 4.0),
            Point::new(2.0, -1.0),
            Point::new(0.0, 4.0),
        ])
        .unwrap();
        let r = PlanarRegion::from_polygon(bow);
        assert!(triangulate(&r, 1.0).is_err());
    }
}
