//! Per-stem cell unions and their contraction.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{clean_ring, Point, Polygon, VertexWelder};

/// Vertices closer than this are treated as the same Voronoi vertex.
pub const WELD_TOL: f64 = 1e-7;

/// Union of edge-sharing cells as a single simple polygon.
///
/// Vertices are welded, every interior edge appears twice with opposite
/// direction and cancels, and the surviving edges are chained into loops.
/// More than one loop means the union is disconnected or has a hole.
pub fn union_cells(cells: &[Polygon]) -> Result<Polygon> {
    if cells.is_empty() {
        return Err(Error::DegenerateStem {
            stem: 0,
            reason: "no cells to merge".into(),
        });
    }
    if cells.len() == 1 {
        return Ok(cells[0].clone());
    }
    let mut welder = VertexWelder::new(WELD_TOL);
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for cell in cells {
        let ids: Vec<usize> = cell.vertices().iter().map(|&p| welder.insert(p)).collect();
        for k in 0..ids.len() {
            let (a, b) = (ids[k], ids[(k + 1) % ids.len()]);
            if a == b {
                continue;
            }
            if let Some(n) = edges.get_mut(&(b, a)) {
                *n -= 1;
                if *n == 0 {
                    edges.remove(&(b, a));
                }
            } else {
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let degenerate = |reason: String| Error::DegenerateStem { stem: 0, reason };
    let mut next: HashMap<usize, usize> = HashMap::with_capacity(edges.len());
    let mut sorted: Vec<(usize, usize)> = edges.keys().copied().collect();
    sorted.sort_unstable();
    for &(a, b) in &sorted {
        if edges[&(a, b)] > 1 || next.insert(a, b).is_some() {
            return Err(degenerate(format!("union pinches at vertex {a}")));
        }
    }
    let start = sorted[0].0;
    let mut ring = vec![welder.points[start]];
    let mut cur = next[&start];
    while cur != start {
        ring.push(welder.points[cur]);
        cur = *next
            .get(&cur)
            .ok_or_else(|| degenerate("open boundary chain".into()))?;
        if ring.len() > sorted.len() {
            return Err(degenerate("boundary chain does not close".into()));
        }
    }
    if ring.len() != sorted.len() {
        return Err(degenerate(format!(
            "union boundary splits into several loops ({} of {} edges on the first)",
            ring.len(),
            sorted.len()
        )));
    }
    let ring = clean_ring(ring, 1e-9);
    let poly = Polygon::new(ring).map_err(|e| degenerate(e.to_string()))?;
    if poly.area() <= 0.0 {
        return Err(degenerate("union has no positive area".into()));
    }
    Ok(poly)
}

/// Arithmetic mean of the polygon vertices (not the area centroid).
pub fn centroid(poly: &Polygon) -> Point {
    let n = poly.len() as f64;
    let s = poly
        .vertices()
        .iter()
        .fold(Point::default(), |acc, &p| acc + p);
    s * (1.0 / n)
}

/// G + α(U − G) about the vertex-average centroid G.
pub fn contract(poly: &Polygon, alpha: f64) -> Result<Polygon> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("contraction alpha must lie in (0, 1], got {alpha}")));
    }
    let g = centroid(poly);
    Ok(poly.map(|p| g + (p - g) * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Polygon {
        Polygon::rectangle(Point::new(0.0, 0.0), Point::new(1.0, 1.0))
    }

    #[test]
    fn single_cell_is_itself() {
        assert_eq!(union_cells(&[unit_square()]).unwrap(), unit_square());
    }

    #[test]
    fn shared_edge_removed() {
        let b = unit_square().translated(Point::new(1.0, 0.0));
        let u = union_cells(&[unit_square(), b]).unwrap();
        assert_eq!(u.len(), 4);
        assert!((u.area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_cells_rejected() {
        let b = unit_square().translated(Point::new(3.0, 0.0));
        assert!(matches!(union_cells(&[unit_square(), b]), Err(Error::DegenerateStem { .. })));
    }

    #[test]
    fn ring_with_hole_rejected() {
        let cells: Vec<Polygon> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| (i, j) != (1, 1))
            .map(|(i, j)| unit_square().translated(Point::new(i as f64, j as f64)))
            .collect();
        assert!(union_cells(&cells).is_err());
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&unit_square()), Point::new(0.5, 0.5));
        let tri = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(3.0, 0.0), Point::new(0.0, 3.0)]).unwrap();
        assert_eq!(centroid(&tri), Point::new(1.0, 1.0));
    }

    #[test]
    fn contract_examples() {
        assert_eq!(contract(&unit_square(), 1.0).unwrap(), unit_square());
        let half = contract(&unit_square(), 0.5).unwrap();
        let bb = half.bbox();
        assert!((bb.width() - 0.5).abs() < 1e-15);
        assert_eq!(bb.center(), Point::new(0.5, 0.5));
        assert!(contract(&unit_square(), 0.0).is_err());
        assert!(contract(&unit_square(), -0.3).is_err());
    }

    fn polygon_strategy() -> impl Strategy<Value = Polygon> {
        // star-shaped polygons from sorted angles and radii
        prop::collection::vec((0.2f64..3.0, 0.0f64..1.0), 3..12).prop_filter_map("degenerate", |v| {
            let n = v.len();
            let pts = v
                .iter()
                .enumerate()
                .map(|(k, &(r, jitter))| {
                    let a = (k as f64 + 0.8 * jitter) / n as f64 * std::f64::consts::TAU;
                    Point::new(r * a.cos(), r * a.sin())
                })
                .collect();
            Polygon::new(pts).ok()
        })
    }

    proptest! {
        #[test]
        fn contraction_is_similarity(poly in polygon_strategy(), alpha in 0.05f64..1.0) {
            let g = centroid(&poly);
            let c = contract(&poly, alpha).unwrap();
            for (p, q) in poly.vertices().iter().zip(c.vertices()) {
                prop_assert!((q.dist(g) - alpha * p.dist(g)).abs() < 1e-12 * (1.0 + p.dist(g)));
            }
            prop_assert!((c.area() - alpha * alpha * poly.area()).abs() < 1e-10 * poly.area());
        }

        #[test]
        fn centroid_translates(poly in polygon_strategy(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let d = Point::new(dx, dy);
            let moved = centroid(&poly.translated(d));
            prop_assert!(moved.dist(centroid(&poly) + d) < 1e-12 * (1.0 + d.norm()));
        }
    }
}
