//! p4 arrangement of rotated stem copies on a 4×4 grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::lattice::stem::PointSet;

pub const GRID: usize = 4;

/// Rotation angle in degrees for each grid position, indexed `[i][j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationMap(pub [[f64; GRID]; GRID]);

impl RotationMap {
    /// Pinwheel arrangement: 0°, 90°, 180°, 270° around every 2×2 block,
    /// so that a quarter turn about the block center permutes the stems.
    pub fn pinwheel() -> Self {
        const QUARTER: [[f64; 2]; 2] = [[0.0, 270.0], [90.0, 180.0]];
        let mut m = [[0.0; GRID]; GRID];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, a) in row.iter_mut().enumerate() {
                *a = QUARTER[i % 2][j % 2];
            }
        }
        RotationMap(m)
    }

    /// θ(i, j) = 90°·((i + j) mod 4).
    pub fn diagonal() -> Self {
        Self::from_fn(|i, j| 90.0 * ((i + j) % 4) as f64)
    }

    pub fn uniform(angle: f64) -> Self {
        Self::from_fn(|_, _| angle)
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = [[0.0; GRID]; GRID];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, a) in row.iter_mut().enumerate() {
                *a = f(i, j);
            }
        }
        RotationMap(m)
    }

    pub fn angle(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.0 {
            for &a in row {
                if !a.is_finite() || (a / 90.0 - (a / 90.0).round()).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "rotation angle {a} is not a multiple of 90 degrees"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for RotationMap {
    fn default() -> Self {
        Self::pinwheel()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilingSpec {
    /// Translation period L in mm: T_x = (L, 0), T_y = (0, L).
    pub period: f64,
    #[serde(default)]
    pub rotation: RotationMap,
}

impl TilingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::invalid("tiling period must be > 0"));
        }
        self.rotation.validate()
    }

    /// Translation of grid position (i, j).
    pub fn offset(&self, i: usize, j: usize) -> Point {
        Point::new(i as f64 * self.period, j as f64 * self.period)
    }

    /// Side of the square covered by the 4×4 block of stems.
    pub fn block_size(&self) -> f64 {
        GRID as f64 * self.period
    }
}

/// The 16 placed stems, indexed by `i * 4 + j`.
#[derive(Debug, Clone)]
pub struct TiledStems {
    pub stems: Vec<PointSet>,
}

impl TiledStems {
    /// The combined seed domain D.
    pub fn union(&self) -> PointSet {
        PointSet::new(self.stems.iter().flat_map(|s| s.points().iter().copied()))
    }

    /// Seeds of all stems in order, with the owning stem index of each.
    pub fn labelled_seeds(&self) -> (Vec<crate::geometry::Point>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut owner = Vec::new();
        for (s, stem) in self.stems.iter().enumerate() {
            for &p in stem.points() {
                pts.push(p);
                owner.push(s);
            }
        }
        (pts, owner)
    }
}

pub fn stem_index(i: usize, j: usize) -> usize {
    i * GRID + j
}

/// S_ij = R(θ_ij)·S + i·T_x + j·T_y for i, j in 0..4.
pub fn tile_stems(stem: &PointSet, tiling: &TilingSpec) -> Result<TiledStems> {
    tiling.validate()?;
    let mut stems = Vec::with_capacity(GRID * GRID);
    for i in 0..GRID {
        for j in 0..GRID {
            let theta = tiling.rotation.angle(i, j);
            let shift = tiling.offset(i, j);
            stems.push(stem.map(|p| p.rotated_deg(theta) + shift));
        }
    }
    Ok(TiledStems { stems })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::stem::{build_stem, Attach, BranchSpec, Placement, StemSpec};

    fn asymmetric_stem() -> PointSet {
        build_stem(&StemSpec {
            trunk_length: 8.0,
            branches: vec![
                BranchSpec::new(2.0, 50.0, Attach::EndA, Placement::MirrorPair),
                BranchSpec::new(2.0, 50.0, Attach::EndB, Placement::MirrorPair),
                BranchSpec::new(5.0, 70.0, Attach::Midpoint, Placement::Upper),
                BranchSpec::new(2.0, 110.0, Attach::Midpoint, Placement::Lower),
            ],
            sample_spacing: 0.5,
        })
        .unwrap()
    }

    #[test]
    fn pure_translation() {
        let stem = PointSet::new([Point::new(0.0, 0.0)]);
        let tiled = tile_stems(
            &stem,
            &TilingSpec {
                period: 12.0,
                rotation: RotationMap::uniform(0.0),
            },
        )
        .unwrap();
        assert_eq!(tiled.stems[stem_index(0, 0)].points()[0], Point::new(0.0, 0.0));
        assert_eq!(tiled.stems[stem_index(1, 0)].points()[0], Point::new(12.0, 0.0));
        assert_eq!(tiled.stems[stem_index(3, 3)].points()[0], Point::new(36.0, 36.0));
    }

    #[test]
    fn rotation_of_first_stem() {
        let stem = PointSet::new([Point::new(1.0, 0.0)]);
        let mut rot = RotationMap::uniform(0.0);
        rot.0[0][0] = 90.0;
        let tiled = tile_stems(&stem, &TilingSpec { period: 12.0, rotation: rot }).unwrap();
        assert_eq!(tiled.stems[0].points()[0], Point::new(0.0, 1.0));
    }

    #[test]
    fn union_counts_all_points() {
        let stem = asymmetric_stem();
        let tiled = tile_stems(&stem, &TilingSpec { period: 12.0, rotation: RotationMap::pinwheel() }).unwrap();
        assert_eq!(tiled.union().len(), 16 * stem.len());
    }

    #[test]
    fn non_right_angles_rejected() {
        let stem = PointSet::new([Point::new(1.0, 0.0)]);
        let spec = TilingSpec {
            period: 12.0,
            rotation: RotationMap::uniform(45.0),
        };
        assert!(tile_stems(&stem, &spec).is_err());
    }

    fn quarter_turn_maps_onto_itself(rotation: RotationMap, stem: &PointSet) -> bool {
        let spec = TilingSpec { period: 12.0, rotation };
        let d = tile_stems(stem, &spec).unwrap().union();
        let c = Point::new(1.5 * 12.0, 1.5 * 12.0);
        d.points().iter().all(|&p| {
            let q = (p - c).rotated_deg(90.0) + c;
            d.points().iter().any(|&r| r.dist(q) < 1e-9)
        })
    }

    #[test]
    fn pinwheel_is_p4_for_asymmetric_stem() {
        assert!(quarter_turn_maps_onto_itself(RotationMap::pinwheel(), &asymmetric_stem()));
    }

    #[test]
    fn diagonal_map_is_not_p4_for_asymmetric_stem() {
        assert!(!quarter_turn_maps_onto_itself(RotationMap::diagonal(), &asymmetric_stem()));
    }
}
