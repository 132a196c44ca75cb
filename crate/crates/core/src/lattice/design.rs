//! Full lattice design and the end-to-end generation pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{simplify_polygon, Point, PlanarRegion, Polygon};
use crate::lattice::cells::{contract, union_cells};
use crate::lattice::stem::{build_stem, Attach, BranchSpec, Placement, PointSet, StemSpec};
use crate::lattice::tiling::{tile_stems, RotationMap, TilingSpec, GRID};
use crate::lattice::unit_cell::{make_unit_cell, relative_density, tile_unit_cell};
use crate::lattice::voronoi::cells_for;

fn default_cell_size() -> f64 {
    12.0
}
fn default_nx() -> usize {
    4
}
fn default_ny() -> usize {
    5
}
fn default_thickness() -> f64 {
    4.0
}
fn default_bracket() -> [f64; 2] {
    [0.1, 1.0]
}
fn default_density_tol() -> f64 {
    1e-3
}
fn default_simplify_tol() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDesign {
    #[serde(default)]
    pub name: String,
    pub stem: StemSpec,
    /// Stem period L in stem units; derived from the stem extent when absent.
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub rotation: RotationMap,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub target_density: Option<f64>,
    /// mm
    #[serde(default = "default_cell_size")]
    pub unit_cell_size: f64,
    #[serde(default = "default_nx")]
    pub grid_nx: usize,
    #[serde(default = "default_ny")]
    pub grid_ny: usize,
    /// Extrusion height, mm.
    #[serde(default = "default_thickness")]
    pub thickness: f64,
    /// Search interval for alpha when solving for a target density.
    #[serde(default = "default_bracket")]
    pub alpha_bracket: [f64; 2],
    #[serde(default = "default_density_tol")]
    pub density_tol: f64,
    /// Douglas–Peucker tolerance applied to each stem union, mm. The raw
    /// unions carry one vertex per seed-pair bisector.
    #[serde(default = "default_simplify_tol")]
    pub simplify_tol: f64,
}

impl LatticeDesign {
    pub fn validate(&self) -> Result<()> {
        self.stem.validate()?;
        match (self.alpha, self.target_density) {
            (Some(a), None) if !(a > 0.0 && a <= 1.0) => {
                return Err(Error::invalid(format!("alpha must lie in (0, 1], got {a}")))
            }
            (None, Some(d)) if !(d > 0.0 && d < 1.0) => {
                return Err(Error::invalid(format!("target_density must lie in (0, 1), got {d}")))
            }
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::invalid("set exactly one of alpha and target_density")),
        }
        if !(self.unit_cell_size > 0.0) {
            return Err(Error::invalid("unit_cell_size must be > 0"));
        }
        if self.grid_nx == 0 || self.grid_ny == 0 {
            return Err(Error::invalid("grid counts must be >= 1"));
        }
        if !(self.thickness > 0.0) {
            return Err(Error::invalid("thickness must be > 0"));
        }
        let [lo, hi] = self.alpha_bracket;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return Err(Error::invalid("alpha_bracket must satisfy 0 < lo < hi <= 1"));
        }
        if !(self.density_tol > 0.0) {
            return Err(Error::invalid("density_tol must be > 0"));
        }
        if !(self.simplify_tol >= 0.0) {
            return Err(Error::invalid("simplify_tol must be >= 0"));
        }
        if let Some(p) = self.period {
            if !(p > 0.0) {
                return Err(Error::invalid("period must be > 0"));
            }
        }
        self.rotation.validate()
    }

    /// One of the four shipped geometries, `"A"` to `"D"`.
    pub fn preset(name: &str) -> Option<Self> {
        // (trunk, [(length, angle); 4])
        let (t, b): (f64, [(f64, f64); 4]) = match name {
            "A" => (14.0, [(1.1, 90.0); 4]),
            "B" => (8.0, [(2.0, 50.0), (2.0, 50.0), (5.0, 70.0), (2.0, 110.0)]),
            "C" => (11.0, [(2.0, 70.0), (2.0, 150.0), (2.0, 50.0), (2.0, 130.0)]),
            "D" => (8.0, [(2.0, 110.0), (2.0, 110.0), (2.0, 150.0), (5.0, 70.0)]),
            _ => return None,
        };
        let slots = [
            (Attach::EndA, Placement::MirrorPair),
            (Attach::EndB, Placement::MirrorPair),
            (Attach::Midpoint, Placement::Upper),
            (Attach::Midpoint, Placement::Lower),
        ];
        let branches = b
            .iter()
            .zip(slots)
            .map(|(&(l, a), (at, pl))| BranchSpec::new(l, a, at, pl))
            .collect();
        Some(LatticeDesign {
            name: name.to_string(),
            stem: StemSpec {
                trunk_length: t,
                branches,
                sample_spacing: 0.5,
            },
            period: None,
            rotation: RotationMap::default(),
            alpha: None,
            target_density: Some(0.4),
            unit_cell_size: default_cell_size(),
            grid_nx: default_nx(),
            grid_ny: default_ny(),
            thickness: default_thickness(),
            alpha_bracket: default_bracket(),
            density_tol: default_density_tol(),
            simplify_tol: default_simplify_tol(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let d: LatticeDesign = toml::from_str(text).map_err(|e| Error::invalid(format!("design file: {e}")))?;
        d.validate()?;
        Ok(d)
    }
}

/// Period wide enough that a stem and its quarter-turned neighbour keep
/// clear of each other: max|x| + max|y| of the stem plus two seed spacings.
pub fn default_period(stem: &PointSet, spacing: f64) -> f64 {
    let ax = stem.points().iter().map(|p| p.x.abs()).fold(0.0, f64::max);
    let ay = stem.points().iter().map(|p| p.y.abs()).fold(0.0, f64::max);
    ax + ay + 2.0 * spacing
}

/// The alpha-independent part of the construction: stem unions, already
/// mapped into unit-cell millimeters.
#[derive(Debug, Clone)]
pub struct LatticeSkeleton {
    pub period: f64,
    pub seeds_per_stem: usize,
    /// U(S_ij) in unit-cell coordinates, indexed `i * 4 + j`.
    pub unions: Vec<Polygon>,
    pub cell_square: Polygon,
}

impl LatticeSkeleton {
    pub fn build(design: &LatticeDesign) -> Result<Self> {
        design.validate()?;
        let stem = build_stem(&design.stem)?;
        let period = design
            .period
            .unwrap_or_else(|| default_period(&stem, design.stem.sample_spacing));
        let tiling = TilingSpec {
            period,
            rotation: design.rotation,
        };
        let tiled = tile_stems(&stem, &tiling)?;
        let block = tiling.block_size();

        // central block first, then its eight periodic images
        let (central, owner) = tiled.labelled_seeds();
        let mut seeds = central.clone();
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                if (a, b) != (0, 0) {
                    let d = Point::new(a as f64 * block, b as f64 * block);
                    seeds.extend(central.iter().map(|&p| p + d));
                }
            }
        }
        let lo = -0.5 * period - period;
        let hi = block - 0.5 * period + period;
        let clip = Polygon::rectangle(Point::new(lo, lo), Point::new(hi, hi));
        let targets: Vec<usize> = (0..central.len()).collect();
        let cells = cells_for(&seeds, &clip, &targets)?;

        let scale = design.unit_cell_size / block;
        let to_cell = |p: Point| (p + Point::new(0.5 * period, 0.5 * period)) * scale;
        let mut unions = Vec::with_capacity(GRID * GRID);
        for s in 0..GRID * GRID {
            let own: Vec<Polygon> = cells
                .iter()
                .zip(&owner)
                .filter(|(_, &o)| o == s)
                .map(|(c, _)| c.clone())
                .collect();
            let u = union_cells(&own).map_err(|e| match e {
                Error::DegenerateStem { reason, .. } => Error::DegenerateStem { stem: s, reason },
                other => other,
            })?;
            unions.push(simplify_polygon(&u.map(to_cell), design.simplify_tol));
        }
        let size = design.unit_cell_size;
        Ok(Self {
            period,
            seeds_per_stem: stem.len(),
            unions,
            cell_square: Polygon::rectangle(Point::new(0.0, 0.0), Point::new(size, size)),
        })
    }

    pub fn contracted(&self, alpha: f64) -> Result<Vec<Polygon>> {
        self.unions.iter().map(|u| contract(u, alpha)).collect()
    }

    pub fn unit_cell(&self, alpha: f64) -> Result<PlanarRegion> {
        make_unit_cell(&self.contracted(alpha)?, &self.cell_square)
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_square.area()
    }

    /// Relative density of the unit cell; zero when no material remains.
    pub fn density(&self, alpha: f64) -> Result<f64> {
        match self.unit_cell(alpha) {
            Ok(cell) => Ok(relative_density(&cell, self.cell_area())),
            Err(Error::EmptyUnitCell) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Bisection on alpha over `bracket` until the density is within `tol`
    /// of `target`. Density falls as alpha grows; every midpoint is checked
    /// against that ordering.
    pub fn solve_alpha(&self, target: f64, tol: f64, bracket: [f64; 2]) -> Result<AlphaSolution> {
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid(format!("target density must lie in (0, 1), got {target}")));
        }
        let [mut lo, mut hi] = bracket;
        let mut d_lo = self.density(lo)?;
        let mut d_hi = self.density(hi)?;
        let unreachable = || Error::UnreachableDensity {
            target,
            lo: d_hi,
            hi: d_lo,
        };
        if (d_lo - target).abs() <= tol {
            return Ok(AlphaSolution { alpha: lo, density: d_lo, iterations: 0 });
        }
        if (d_hi - target).abs() <= tol {
            return Ok(AlphaSolution { alpha: hi, density: d_hi, iterations: 0 });
        }
        if !(d_hi < target && target < d_lo) {
            return Err(unreachable());
        }
        for it in 1..=60 {
            let mid = 0.5 * (lo + hi);
            let d = self.density(mid)?;
            if !(d <= d_lo && d >= d_hi) {
                return Err(Error::invalid(format!(
                    "relative density is not monotone in alpha near {mid}"
                )));
            }
            if (d - target).abs() <= tol {
                return Ok(AlphaSolution { alpha: mid, density: d, iterations: it });
            }
            if d > target {
                lo = mid;
                d_lo = d;
            } else {
                hi = mid;
                d_hi = d;
            }
        }
        Err(Error::invalid("alpha bisection did not converge"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSolution {
    pub alpha: f64,
    pub density: f64,
    pub iterations: usize,
}

/// Generation output: the single cell and the tiled lattice region.
#[derive(Debug, Clone)]
pub struct GeneratedLattice {
    pub alpha: f64,
    pub relative_density: f64,
    pub period: f64,
    pub seeds_per_stem: usize,
    pub unit_cell: PlanarRegion,
    pub region: PlanarRegion,
}

pub fn generate(design: &LatticeDesign) -> Result<GeneratedLattice> {
    let skeleton = LatticeSkeleton::build(design)?;
    let alpha = match (design.alpha, design.target_density) {
        (Some(a), _) => a,
        (None, Some(t)) => skeleton.solve_alpha(t, design.density_tol, design.alpha_bracket)?.alpha,
        (None, None) => unreachable!("validated"),
    };
    let unit_cell = skeleton.unit_cell(alpha)?;
    let s = design.unit_cell_size;
    let region = tile_unit_cell(&unit_cell, design.grid_nx, design.grid_ny, (s, s))?;
    Ok(GeneratedLattice {
        alpha,
        relative_density: relative_density(&unit_cell, skeleton.cell_area()),
        period: skeleton.period,
        seeds_per_stem: skeleton.seeds_per_stem,
        unit_cell,
        region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for n in ["A", "B", "C", "D"] {
            LatticeDesign::preset(n).unwrap().validate().unwrap();
        }
        assert!(LatticeDesign::preset("E").is_none());
    }

    #[test]
    fn alpha_and_density_are_exclusive() {
        let mut d = LatticeDesign::preset("A").unwrap();
        d.alpha = Some(0.8);
        assert!(d.validate().is_err());
        d.target_density = None;
        d.validate().unwrap();
        d.alpha = None;
        assert!(d.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let d = LatticeDesign::preset("B").unwrap();
        let text = toml::to_string(&d).unwrap();
        assert_eq!(LatticeDesign::from_toml(&text).unwrap(), d);
    }

    #[test]
    fn skeleton_unions_tile_the_cell() {
        let d = LatticeDesign::preset("A").unwrap();
        let sk = LatticeSkeleton::build(&d).unwrap();
        assert_eq!(sk.unions.len(), 16);
        let total: f64 = sk.unions.iter().map(Polygon::area).sum();
        // simplification moves each boundary by at most the tolerance
        let slack: f64 = sk.unions.iter().map(|u| u.perimeter() * d.simplify_tol).sum();
        assert!((total - 144.0).abs() < slack, "union area {total}");
        let mut raw = d.clone();
        raw.simplify_tol = 0.0;
        let sk = LatticeSkeleton::build(&raw).unwrap();
        let total: f64 = sk.unions.iter().map(Polygon::area).sum();
        assert!((total - 144.0).abs() < 1e-6 * 144.0, "union area {total}");
    }
}
