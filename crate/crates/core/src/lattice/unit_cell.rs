//! Unit cell by boolean subtraction, and its periodic tiling.

use geo::BooleanOps;

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon, PlanarRegion};

/// Boolean results are snapped to this grid (mm).
pub const SNAP_GRID: f64 = 1e-7;

fn geo_polygon(p: &Polygon) -> geo::Polygon<f64> {
    PlanarRegion::from_polygon(p.clone()).to_geo().0.remove(0)
}

/// Ligament web of one unit cell: the cell square minus the contracted
/// polygons. Polygons are also subtracted at their translates by the square's
/// width and height, so material cut away near one side is cut away on the
/// opposite side too and the cell tiles seamlessly.
pub fn make_unit_cell(contracted: &[Polygon], cell_square: &Polygon) -> Result<PlanarRegion> {
    let bb = cell_square.bbox();
    let (w, h) = (bb.width(), bb.height());
    let mut cutters = Vec::new();
    for p in contracted {
        for a in -1..=1 {
            for b in -1..=1 {
                let q = p.translated(Point::new(a as f64 * w, b as f64 * h));
                let qb = q.bbox();
                if qb.max.x > bb.min.x && qb.min.x < bb.max.x && qb.max.y > bb.min.y && qb.min.y < bb.max.y {
                    cutters.push(geo_polygon(&q));
                }
            }
        }
    }
    let square = geo::MultiPolygon::new(vec![geo_polygon(cell_square)]);
    // contracted polygons of non-convex unions may overlap one another
    let holes = geo::unary_union(&cutters);
    let web = square.difference(&holes);
    PlanarRegion::from_geo(&web, SNAP_GRID).ok_or(Error::EmptyUnitCell)
}

/// Union of `nx × ny` copies of `cell` shifted by multiples of `pitch`.
pub fn tile_unit_cell(cell: &PlanarRegion, nx: usize, ny: usize, pitch: (f64, f64)) -> Result<PlanarRegion> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("tiling counts must be >= 1"));
    }
    if nx == 1 && ny == 1 {
        return Ok(cell.clone());
    }
    // build each row first, then stack rows; keeps the operands balanced
    let base = cell.to_geo();
    let mut row = base.clone();
    for i in 1..nx {
        let shifted = cell.translated(Point::new(i as f64 * pitch.0, 0.0)).to_geo();
        row = row.union(&shifted);
    }
    let row = PlanarRegion::from_geo(&row, SNAP_GRID).ok_or(Error::EmptyUnitCell)?;
    let mut all = row.to_geo();
    for j in 1..ny {
        all = all.union(&row.translated(Point::new(0.0, j as f64 * pitch.1)).to_geo());
    }
    let region = PlanarRegion::from_geo(&all, SNAP_GRID).ok_or(Error::EmptyUnitCell)?;
    if region.piece_count() != 1 {
        return Err(Error::DisconnectedTiling {
            pieces: region.piece_count(),
        });
    }
    Ok(region)
}

/// Material area over gross area.
pub fn relative_density(region: &PlanarRegion, cell_area: f64) -> f64 {
    region.area() / cell_area
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(s: f64) -> Polygon {
        Polygon::rectangle(Point::new(0.0, 0.0), Point::new(s, s))
    }

    #[test]
    fn central_hole_leaves_frame() {
        let hole = Polygon::rectangle(Point::new(3.0, 3.0), Point::new(9.0, 9.0));
        let cell = make_unit_cell(&[hole], &square(12.0)).unwrap();
        assert_eq!(cell.holes.len(), 1);
        assert!((cell.area() - 108.0).abs() < 1e-9);
        assert!((relative_density(&cell, 144.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn overhanging_polygon_cut_on_both_sides() {
        // sticks out past x = 12 by 1; its translate eats x in [0, 1]
        let p = Polygon::rectangle(Point::new(10.0, 4.0), Point::new(13.0, 8.0));
        let cell = make_unit_cell(&[p], &square(12.0)).unwrap();
        assert!((cell.area() - (144.0 - 12.0)).abs() < 1e-9);
    }

    #[test]
    fn covering_polygon_leaves_nothing() {
        let p = Polygon::rectangle(Point::new(-1.0, -1.0), Point::new(13.0, 13.0));
        assert!(matches!(make_unit_cell(&[p], &square(12.0)), Err(Error::EmptyUnitCell)));
    }

    #[test]
    fn tiling_identity_and_area() {
        let hole = Polygon::rectangle(Point::new(3.0, 3.0), Point::new(9.0, 9.0));
        let cell = make_unit_cell(&[hole], &square(12.0)).unwrap();
        assert_eq!(tile_unit_cell(&cell, 1, 1, (12.0, 12.0)).unwrap(), cell);
        let tiled = tile_unit_cell(&cell, 4, 5, (12.0, 12.0)).unwrap();
        let bb = tiled.bbox();
        assert!((bb.width() - 48.0).abs() < 1e-9 && (bb.height() - 60.0).abs() < 1e-9);
        assert!(((tiled.area() - 20.0 * cell.area()) / tiled.area()).abs() < 1e-6);
        assert_eq!(tiled.holes.len(), 20);
    }

    #[test]
    fn islands_do_not_tile() {
        let island = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(4.0, 4.0), Point::new(8.0, 8.0)));
        assert!(matches!(
            tile_unit_cell(&island, 2, 2, (12.0, 12.0)),
            Err(Error::DisconnectedTiling { pieces: 4 })
        ));
    }
}
