//! Lattice generation: stem motif, p4 tiling, Voronoi cells, contraction,
//! unit cell, periodic tiling and extrusion.

pub mod cells;
pub mod design;
pub mod export;
pub mod stem;
pub mod tiling;
pub mod unit_cell;
pub mod voronoi;

pub use cells::{centroid, contract, union_cells};
pub use design::{generate, AlphaSolution, GeneratedLattice, LatticeDesign, LatticeSkeleton};
pub use export::{extrude, extrude_export, signed_volume};
pub use stem::{build_stem, Attach, BranchSpec, Placement, PointSet, StemSpec};
pub use tiling::{tile_stems, RotationMap, TiledStems, TilingSpec};
pub use unit_cell::{make_unit_cell, relative_density, tile_unit_cell};
pub use voronoi::voronoi;
