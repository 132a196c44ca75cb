//! Planar geometry primitives shared by lattice generation, meshing and rendering.
//!
//! Coordinates are millimeters throughout. Polygons are stored counterclockwise;
//! a [`PlanarRegion`] carries outer boundaries and holes as separate lists.

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Rotate counterclockwise about the origin by `deg` degrees.
    pub fn rotated_deg(self, deg: f64) -> Point {
        let (s, c) = deg.to_radians().sin_cos();
        // exact for multiples of 90 degrees
        let (s, c) = (snap_unit(s), snap_unit(c));
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn snapped(self, grid: f64) -> Point {
        Point::new(
            (self.x / grid).round() * grid,
            (self.y / grid).round() * grid,
        )
    }
}

fn snap_unit(v: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (v - target).abs() < 1e-15 {
            return target;
        }
    }
    v
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = BoundingBox {
            min: first,
            max: first,
        };
        for p in it {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point {
        (self.min + self.max) * 0.5
    }
}

/// Signed area of a closed ring (positive when counterclockwise).
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += ring[i].cross(ring[(i + 1) % n]);
    }
    0.5 * acc
}

/// A simple polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon, reorienting clockwise input. Rejects fewer than three
    /// vertices and zero area.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::invalid(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let a = signed_area(&vertices);
        if !(a.abs() > 0.0) || !a.is_finite() {
            return Err(Error::invalid("polygon has zero area"));
        }
        if a < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn rectangle(min: Point, max: Point) -> Self {
        Self {
            vertices: vec![min, Point::new(max.x, min.y), max, Point::new(min.x, max.y)],
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].dist(self.vertices[(i + 1) % n]))
            .sum()
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::of_points(&self.vertices).expect("polygon has vertices")
    }

    pub fn translated(&self, d: Point) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&p| p + d).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Even-odd containment test; boundary points may go either way.
    pub fn contains(&self, p: Point) -> bool {
        ring_contains(&self.vertices, p)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

pub fn ring_contains(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A multiply-connected planar domain: outer boundaries (counterclockwise) and
/// holes (stored counterclockwise, subtracted).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarRegion {
    pub outers: Vec<Polygon>,
    pub holes: Vec<Polygon>,
}

impl PlanarRegion {
    pub fn new(outers: Vec<Polygon>, holes: Vec<Polygon>) -> Result<Self> {
        let region = Self { outers, holes };
        if region.outers.is_empty() {
            return Err(Error::invalid("region has no outer boundary"));
        }
        if !(region.area() > 0.0) {
            return Err(Error::invalid("region has non-positive area"));
        }
        Ok(region)
    }

    pub fn from_polygon(p: Polygon) -> Self {
        Self {
            outers: vec![p],
            holes: vec![],
        }
    }

    pub fn area(&self) -> f64 {
        self.outers.iter().map(Polygon::area).sum::<f64>()
            - self.holes.iter().map(Polygon::area).sum::<f64>()
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::of_points(self.outers.iter().flat_map(|p| p.vertices().iter()))
            .expect("region has an outer boundary")
    }

    pub fn perimeter(&self) -> f64 {
        self.outers
            .iter()
            .chain(self.holes.iter())
            .map(Polygon::perimeter)
            .sum()
    }

    pub fn translated(&self, d: Point) -> PlanarRegion {
        PlanarRegion {
            outers: self.outers.iter().map(|p| p.translated(d)).collect(),
            holes: self.holes.iter().map(|p| p.translated(d)).collect(),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.outers.iter().any(|o| o.contains(p)) && !self.holes.iter().any(|h| h.contains(p))
    }

    /// Boundary rings with orientation such that the material lies on the left:
    /// outers counterclockwise, holes clockwise.
    pub fn oriented_rings(&self) -> Vec<Vec<Point>> {
        let mut rings: Vec<Vec<Point>> = self.outers.iter().map(|p| p.vertices().to_vec()).collect();
        for h in &self.holes {
            let mut r = h.vertices().to_vec();
            r.reverse();
            rings.push(r);
        }
        rings
    }

    pub(crate) fn to_geo(&self) -> geo::MultiPolygon<f64> {
        use geo::{Coord, LineString};
        let ring = |p: &Polygon| -> LineString<f64> {
            let mut c: Vec<Coord<f64>> = p.vertices().iter().map(|v| Coord { x: v.x, y: v.y }).collect();
            c.push(c[0]);
            LineString::new(c)
        };
        let polys = self
            .outers
            .iter()
            .map(|o| {
                let holes = self
                    .holes
                    .iter()
                    .filter(|h| o.contains(h.vertices()[0]))
                    .map(ring)
                    .collect();
                geo::Polygon::new(ring(o), holes)
            })
            .collect();
        geo::MultiPolygon::new(polys)
    }

    /// Converts boolean-operation output back into a region, snapping to
    /// `grid` and dropping degenerate rings. Returns `None` when nothing with
    /// positive area remains.
    pub(crate) fn from_geo(mp: &geo::MultiPolygon<f64>, grid: f64) -> Option<Self> {
        let mut outers = Vec::new();
        let mut holes = Vec::new();
        let convert = |ls: &geo::LineString<f64>| -> Option<Polygon> {
            let pts: Vec<Point> = ls.coords().map(|c| Point::new(c.x, c.y).snapped(grid)).collect();
            let pts = clean_ring(pts, grid);
            Polygon::new(pts).ok()
        };
        for poly in &mp.0 {
            if let Some(o) = convert(poly.exterior()) {
                outers.push(o);
                holes.extend(poly.interiors().iter().filter_map(convert));
            }
        }
        if outers.is_empty() {
            return None;
        }
        let region = PlanarRegion { outers, holes };
        (region.area() > 0.0).then_some(region)
    }

    /// Number of outer boundaries; a connected region has exactly one.
    pub fn piece_count(&self) -> usize {
        self.outers.len()
    }
}

/// Removes repeated closing vertex, consecutive duplicates (within `tol`) and
/// collinear vertices.
pub fn clean_ring(mut pts: Vec<Point>, tol: f64) -> Vec<Point> {
    if pts.len() > 1 && pts[0].dist(*pts.last().unwrap()) <= tol {
        pts.pop();
    }
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q: &Point| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(*out.last().unwrap()) <= tol {
        out.pop();
    }
    // collinear removal, iterated until stable
    loop {
        let n = out.len();
        if n < 3 {
            return out;
        }
        let mut keep = vec![true; n];
        let mut removed = false;
        let mut i = 0;
        while i < n {
            let prev = (0..n).rev().map(|k| (i + k) % n).find(|&k| k != i && keep[k]);
            let next = (1..n).map(|k| (i + k) % n).find(|&k| keep[k]);
            if let (Some(a), Some(c)) = (prev, next) {
                let (pa, pb, pc) = (out[a], out[i], out[c]);
                let base = pa.dist(pc);
                let twice_area = (pb - pa).cross(pc - pa).abs();
                // distance of pb from line pa-pc, and pb must lie between them
                if base > 0.0 && twice_area / base <= tol * 1e-2 && (pb - pa).dot(pc - pa) > 0.0 && (pb - pc).dot(pa - pc) > 0.0 {
                    keep[i] = false;
                    removed = true;
                }
            }
            i += 1;
        }
        if !removed {
            return out;
        }
        out = out.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect();
    }
}

/// Douglas–Peucker simplification of a polygon boundary. The input is
/// returned unchanged when the simplified ring would not be a valid simple
/// polygon.
pub fn simplify_polygon(p: &Polygon, tol: f64) -> Polygon {
    use geo::{Simplify, Validation};
    if !(tol > 0.0) {
        return p.clone();
    }
    let g = PlanarRegion::from_polygon(p.clone()).to_geo().0.remove(0);
    let s = g.simplify(tol);
    if !s.is_valid() {
        return p.clone();
    }
    let pts: Vec<Point> = s.exterior().coords().map(|c| Point::new(c.x, c.y)).collect();
    Polygon::new(pts).unwrap_or_else(|_| p.clone())
}

/// Closest distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, o: f64| {
        o == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// True when the segment `a`-`b` touches the closed triangle.
pub fn segment_hits_triangle(a: Point, b: Point, tri: [Point; 3]) -> bool {
    let inside = |p: Point| {
        let s0 = orient(tri[0], tri[1], p);
        let s1 = orient(tri[1], tri[2], p);
        let s2 = orient(tri[2], tri[0], p);
        (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) || (s0 <= 0.0 && s1 <= 0.0 && s2 <= 0.0)
    };
    if inside(a) || inside(b) {
        return true;
    }
    (0..3).any(|k| segments_intersect(a, b, tri[k], tri[(k + 1) % 3]))
}

/// Merges points closer than `tol` onto a single representative, using a
/// hashed grid. Representatives are the first point seen in each cluster.
pub(crate) struct VertexWelder {
    tol: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    pub points: Vec<Point>,
}

impl VertexWelder {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            buckets: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p.x / self.tol).floor() as i64, (p.y / self.tol).floor() as i64)
    }

    pub fn insert(&mut self, p: Point) -> usize {
        let (kx, ky) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        if self.points[id].dist(p) <= self.tol {
                            return id;
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.buckets.entry((kx, ky)).or_default().push(id);
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_orientation_is_normalized() {
        let cw = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!((cw.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert!(Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        assert!(Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0)
        ])
        .is_err());
    }

    #[test]
    fn rotation_by_right_angles_is_exact() {
        let p = Point::new(1.0, 0.0).rotated_deg(90.0);
        assert_eq!(p, Point::new(0.0, 1.0));
        let q = Point::new(2.0, 3.0).rotated_deg(180.0);
        assert_eq!(q, Point::new(-2.0, -3.0));
    }

    #[test]
    fn clean_ring_drops_collinear_and_duplicates() {
        let ring = vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let c = clean_ring(ring, 1e-9);
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn segment_triangle_hits() {
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(segment_hits_triangle(Point::new(-1.0, 0.2), Point::new(2.0, 0.2), tri));
        assert!(segment_hits_triangle(Point::new(0.1, 0.1), Point::new(0.2, 0.2), tri));
        assert!(!segment_hits_triangle(Point::new(1.0, 1.0), Point::new(2.0, 2.0), tri));
    }

    #[test]
    fn simplify_drops_small_zigzag() {
        let mut pts = vec![Point::new(0.0, 0.0)];
        for k in 1..20 {
            pts.push(Point::new(k as f64 * 0.5, if k % 2 == 0 { 0.0 } else { -0.01 }));
        }
        pts.extend([Point::new(10.0, 0.0), Point::new(10.0, 5.0), Point::new(0.0, 5.0)]);
        let p = Polygon::new(pts).unwrap();
        let s = simplify_polygon(&p, 0.05);
        assert_eq!(s.len(), 4);
        assert!((s.area() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn welder_merges_close_points() {
        let mut w = VertexWelder::new(1e-6);
        let a = w.insert(Point::new(1.0, 1.0));
        let b = w.insert(Point::new(1.0 + 1e-9, 1.0 - 1e-9));
        let c = w.insert(Point::new(1.1, 1.0));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
