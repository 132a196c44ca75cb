//! Branch–trunk–branch stem motif.
//!
//! The trunk runs along the local x axis, centered on the origin, from end A
//! at `(-T/2, 0)` to end B at `(T/2, 0)`. Branch angles are measured
//! counterclockwise from the +x trunk direction; the lower branch of a pair is
//! the reflection of the upper one across the trunk axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point, VertexWelder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attach {
    EndA,
    EndB,
    Midpoint,
}

/// Which side(s) of the trunk a branch occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Upper branch plus its mirror image below the trunk.
    #[default]
    MirrorPair,
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    /// mm
    pub length: f64,
    /// degrees from the trunk axis, in (0, 180)
    pub angle: f64,
    pub attach: Attach,
    #[serde(default)]
    pub placement: Placement,
}

impl BranchSpec {
    pub fn new(length: f64, angle: f64, attach: Attach, placement: Placement) -> Self {
        Self {
            length,
            angle,
            attach,
            placement,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::invalid(format!("branch length must be > 0, got {}", self.length)));
        }
        if !(self.angle > 0.0 && self.angle < 180.0) {
            return Err(Error::invalid(format!(
                "branch angle must lie in (0, 180), got {}",
                self.angle
            )));
        }
        Ok(())
    }

    /// Unit directions of the placed branch(es).
    pub fn directions(&self) -> Vec<Point> {
        let (s, c) = self.angle.to_radians().sin_cos();
        let upper = Point::new(c, s);
        let lower = Point::new(c, -s);
        match self.placement {
            Placement::MirrorPair => vec![upper, lower],
            Placement::Upper => vec![upper],
            Placement::Lower => vec![lower],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemSpec {
    /// mm
    pub trunk_length: f64,
    pub branches: Vec<BranchSpec>,
    /// Seed spacing along trunk and branches, mm.
    pub sample_spacing: f64,
}

impl StemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.trunk_length > 0.0) {
            return Err(Error::invalid("trunk length must be > 0"));
        }
        if !(self.sample_spacing > 0.0) {
            return Err(Error::invalid("sample spacing must be > 0"));
        }
        if self.sample_spacing > self.trunk_length {
            return Err(Error::invalid(format!(
                "sample spacing {} exceeds trunk length {}: midpoint cannot be sampled",
                self.sample_spacing, self.trunk_length
            )));
        }
        if self.branches.is_empty() {
            return Err(Error::invalid("stem needs at least one branch"));
        }
        self.branches.iter().try_for_each(BranchSpec::validate)
    }

    pub fn attachment(&self, attach: Attach) -> Point {
        let h = 0.5 * self.trunk_length;
        match attach {
            Attach::EndA => Point::new(-h, 0.0),
            Attach::EndB => Point::new(h, 0.0),
            Attach::Midpoint => Point::new(0.0, 0.0),
        }
    }
}

/// A set of seed points without duplicates (within 1e-9 mm).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    points: Vec<Point>,
}

pub const POINT_DUPLICATE_TOL: f64 = 1e-9;

impl PointSet {
    /// Builds a set, dropping later duplicates of earlier points.
    pub fn new(points: impl IntoIterator<Item = Point>) -> Self {
        let mut welder = VertexWelder::new(POINT_DUPLICATE_TOL);
        let mut out = Vec::new();
        for p in points {
            let before = welder.points.len();
            welder.insert(p);
            if welder.points.len() > before {
                out.push(p);
            }
        }
        Self { points: out }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        BoundingBox::of_points(&self.points)
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> PointSet {
        PointSet::new(self.points.iter().map(|&p| f(p)))
    }
}

/// Samples seed points along the trunk and every placed branch.
///
/// The trunk is split into an even number of equal segments no longer than
/// the sample spacing, so its midpoint is always a seed. Branch samples start
/// one step away from the attachment point, which is already a trunk seed.
pub fn build_stem(spec: &StemSpec) -> Result<PointSet> {
    spec.validate()?;
    let t = spec.trunk_length;
    let half_segments = (0.5 * t / spec.sample_spacing).ceil().max(1.0) as usize;
    let n = 2 * half_segments;
    let mut pts = Vec::with_capacity(n + 1);
    for k in 0..=n {
        pts.push(Point::new(-0.5 * t + t * k as f64 / n as f64, 0.0));
    }
    for b in &spec.branches {
        let origin = spec.attachment(b.attach);
        let m = (b.length / spec.sample_spacing).ceil().max(1.0) as usize;
        for dir in b.directions() {
            for k in 1..=m {
                pts.push(origin + dir * (b.length * k as f64 / m as f64));
            }
        }
    }
    Ok(PointSet::new(pts))
}
