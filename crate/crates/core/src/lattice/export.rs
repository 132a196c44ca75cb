//! Prism extrusion of a planar region, written as an ASCII STL solid.

use std::fmt::Write as _;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{Point, PlanarRegion};

pub type Vertex3 = [f64; 3];
pub type Facet = [Vertex3; 3];

/// Triangulates the region without adding vertices; triangles are
/// counterclockwise.
pub fn triangulate_caps(region: &PlanarRegion) -> Result<Vec<[Point; 3]>> {
    let mut verts = Vec::new();
    let mut edges = Vec::new();
    for ring in region.oriented_rings() {
        let base = verts.len();
        let n = ring.len();
        for (k, p) in ring.iter().enumerate() {
            verts.push(Point2::new(p.x, p.y));
            edges.push([base + k, base + (k + 1) % n]);
        }
    }
    let mut conflicts = 0usize;
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(verts, edges, |_| conflicts += 1)
        .map_err(|e| Error::Meshing(format!("cap triangulation: {e:?}")))?;
    if conflicts > 0 {
        return Err(Error::Meshing(format!("{conflicts} boundary edges cross each other")));
    }
    let mut tris = Vec::new();
    for f in cdt.inner_faces() {
        let [a, b, c] = f.vertices().map(|v| {
            let p = v.position();
            Point::new(p.x, p.y)
        });
        let g = (a + b + c) * (1.0 / 3.0);
        if region.contains(g) {
            tris.push(if (b - a).cross(c - a) > 0.0 { [a, b, c] } else { [a, c, b] });
        }
    }
    Ok(tris)
}

/// Watertight prism of height `h` with outward-facing facets.
pub fn extrude(region: &PlanarRegion, h: f64) -> Result<Vec<Facet>> {
    if !(h > 0.0) {
        return Err(Error::invalid("extrusion height must be > 0"));
    }
    let lift = |p: Point, z: f64| [p.x, p.y, z];
    let mut facets = Vec::new();
    for [a, b, c] in triangulate_caps(region)? {
        facets.push([lift(a, 0.0), lift(c, 0.0), lift(b, 0.0)]);
        facets.push([lift(a, h), lift(b, h), lift(c, h)]);
    }
    // material lies left of each oriented ring edge, so (a, b, b', a') faces out
    for ring in region.oriented_rings() {
        let n = ring.len();
        for k in 0..n {
            let (a, b) = (ring[k], ring[(k + 1) % n]);
            facets.push([lift(a, 0.0), lift(b, 0.0), lift(b, h)]);
            facets.push([lift(a, 0.0), lift(b, h), lift(a, h)]);
        }
    }
    Ok(facets)
}

/// Divergence-theorem volume; positive when facets face outward.
pub fn signed_volume(facets: &[Facet]) -> f64 {
    facets
        .iter()
        .map(|[a, b, c]| {
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0])
        })
        .sum::<f64>()
        / 6.0
}

fn normal(&[a, b, c]: &Facet) -> Vertex3 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if len > 0.0 {
        n.map(|x| x / len)
    } else {
        [0.0; 3]
    }
}

pub fn to_stl(name: &str, facets: &[Facet]) -> String {
    let mut s = format!("solid {name}\n");
    for f in facets {
        let n = normal(f);
        let _ = writeln!(s, "  facet normal {:e} {:e} {:e}", n[0], n[1], n[2]);
        s.push_str("    outer loop\n");
        for v in f {
            let _ = writeln!(s, "      vertex {:e} {:e} {:e}", v[0], v[1], v[2]);
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    let _ = writeln!(s, "endsolid {name}");
    s
}

/// Extrudes `region` by `h` and formats the result as ASCII STL.
pub fn extrude_export(region: &PlanarRegion, h: f64) -> Result<String> {
    Ok(to_stl("lattice", &extrude(region, h)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;

    #[test]
    fn unit_square_box() {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(1.0, 1.0)));
        let f = extrude(&r, 4.0).unwrap();
        assert_eq!(f.len(), 12);
        assert!((signed_volume(&f) - 4.0).abs() < 1e-12);
        let stl = extrude_export(&r, 4.0).unwrap();
        assert_eq!(stl.matches("facet normal").count(), 12);
    }

    #[test]
    fn frame_with_hole_volume() {
        let r = PlanarRegion::new(
            vec![Polygon::rectangle(Point::new(0.0, 0.0), Point::new(12.0, 12.0))],
            vec![Polygon::rectangle(Point::new(3.0, 4.0), Point::new(8.0, 9.0))],
        )
        .unwrap();
        let f = extrude(&r, 4.0).unwrap();
        let v = signed_volume(&f);
        assert!(((v - r.area() * 4.0) / v).abs() < 1e-9);
    }
}
