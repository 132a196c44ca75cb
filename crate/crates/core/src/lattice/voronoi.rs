//! Clipped Euclidean Voronoi cells by successive half-plane clipping.
//!
//! Each cell starts as the (convex) clip polygon and is cut by the bisector
//! half-plane of every other seed, nearest first. Clipping stops once the next
//! seed is more than twice the current cell radius away, since no farther
//! bisector can reach the cell.

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::lattice::stem::PointSet;

/// Keeps the part of `poly` where `(q - m)·n <= 0`.
fn clip_half_plane(poly: &[Point], m: Point, n: Point) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let k = poly.len();
    for i in 0..k {
        let a = poly[i];
        let b = poly[(i + 1) % k];
        let da = (a - m).dot(n);
        let db = (b - m).dot(n);
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn all_collinear(seeds: &[Point]) -> bool {
    if seeds.len() < 3 {
        return true;
    }
    let a = seeds[0];
    let Some(&b) = seeds.iter().find(|p| p.dist(a) > 0.0) else {
        return true;
    };
    let scale = seeds.iter().map(|p| p.dist(a)).fold(0.0, f64::max);
    seeds
        .iter()
        .all(|&p| (b - a).cross(p - a).abs() <= 1e-12 * scale * scale)
}

/// Voronoi cell of `seeds[target]` intersected with the convex `clip` polygon.
fn cell_of(seeds: &[Point], order: &mut Vec<(f64, usize)>, target: usize, clip: &[Point]) -> Vec<Point> {
    let p = seeds[target];
    order.clear();
    order.extend(
        seeds
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != target)
            .map(|(k, q)| ((*q - p).dot(*q - p), k)),
    );
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cell = clip.to_vec();
    let mut radius2 = cell.iter().map(|v| (*v - p).dot(*v - p)).fold(0.0, f64::max);
    for &(d2, k) in order.iter() {
        // bisector at distance sqrt(d2)/2 cannot reach a cell of radius r when d2/4 >= r^2
        if d2 >= 4.0 * radius2 {
            break;
        }
        let q = seeds[k];
        cell = clip_half_plane(&cell, (p + q) * 0.5, q - p);
        if cell.is_empty() {
            break;
        }
        radius2 = cell.iter().map(|v| (*v - p).dot(*v - p)).fold(0.0, f64::max);
    }
    cell
}

/// Cells for the listed `targets` only; the remaining seeds still shape them.
pub(crate) fn cells_for(seeds: &[Point], clip: &Polygon, targets: &[usize]) -> Result<Vec<Polygon>> {
    if seeds.len() < 2 {
        return Err(Error::invalid("voronoi needs at least 2 seeds"));
    }
    if all_collinear(seeds) {
        return Err(Error::CollinearSeeds { count: seeds.len() });
    }
    for &t in targets {
        if !clip.contains(seeds[t]) {
            return Err(Error::invalid(format!(
                "seed ({}, {}) lies outside the clip polygon",
                seeds[t].x, seeds[t].y
            )));
        }
    }
    let mut order = Vec::with_capacity(seeds.len());
    targets
        .iter()
        .map(|&t| {
            let cell = cell_of(seeds, &mut order, t, clip.vertices());
            Polygon::new(crate::geometry::clean_ring(cell, 1e-12)).map_err(|_| {
                Error::invalid(format!("empty voronoi cell for seed {t}"))
            })
        })
        .collect()
}

/// One clipped Voronoi cell per seed, in seed order. `clip` must be convex
/// and contain every seed.
pub fn voronoi(seeds: &PointSet, clip: &Polygon) -> Result<Vec<Polygon>> {
    let pts = seeds.points();
    let targets: Vec<usize> = (0..pts.len()).collect();
    cells_for(pts, clip, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(h: f64) -> Polygon {
        Polygon::rectangle(Point::new(-h, -h), Point::new(h, h))
    }

    #[test]
    fn two_seeds_split_by_bisector() {
        let seeds = PointSet::new([Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(1.0, 5.0)]);
        let cells = voronoi(&seeds, &bx(10.0)).unwrap();
        // cell of (0,0) never extends past x = 1
        assert!(cells[0].vertices().iter().all(|v| v.x <= 1.0 + 1e-12));
        assert!(cells[1].vertices().iter().all(|v| v.x >= 1.0 - 1e-12));
    }

    #[test]
    fn pure_two_seed_case() {
        // two seeds are collinear by definition, so this is rejected
        let seeds = PointSet::new([Point::new(0.0, 0.0), Point::new(2.0, 0.0)]);
        assert!(matches!(voronoi(&seeds, &bx(10.0)), Err(Error::CollinearSeeds { .. })));
    }

    #[test]
    fn grid_cells_are_congruent_quadrants() {
        let seeds = PointSet::new([
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ]);
        let clip = Polygon::rectangle(Point::new(-2.0, -2.0), Point::new(3.0, 3.0));
        let cells = voronoi(&seeds, &clip).unwrap();
        let center = Point::new(0.5, 0.5);
        for c in &cells {
            assert!((c.area() - 6.25).abs() < 1e-12);
            assert!(c.vertices().iter().any(|v| v.dist(center) < 1e-12));
        }
    }

    #[test]
    fn collinear_seeds_rejected() {
        let seeds = PointSet::new((0..5).map(|k| Point::new(k as f64, 2.0 * k as f64)));
        assert!(matches!(voronoi(&seeds, &bx(20.0)), Err(Error::CollinearSeeds { count: 5 })));
    }

    #[test]
    fn cells_partition_the_box() {
        let seeds = PointSet::new((0..40).map(|k| {
            let t = k as f64;
            Point::new(4.0 * (1.3 * t).sin(), 4.0 * (0.7 * t + 0.3).cos())
        }));
        let clip = bx(6.0);
        let cells = voronoi(&seeds, &clip).unwrap();
        let total: f64 = cells.iter().map(Polygon::area).sum();
        assert!(((total - clip.area()) / clip.area()).abs() < 1e-6);
    }
}
