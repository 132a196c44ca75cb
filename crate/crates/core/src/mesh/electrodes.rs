use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{signed_area, Point};
use crate::mesh::Mesh;

fn default_count() -> usize {
    16
}
fn default_contact() -> f64 {
    4.0
}
fn default_z() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrodeSpec {
    #[serde(default = "default_count")]
    pub count: usize,
    /// Arc length covered by each electrode, mm.
    #[serde(default = "default_contact")]
    pub contact_length: f64,
    /// Contact impedance, Ω·m.
    #[serde(default = "default_z")]
    pub z: f64,
    /// Arc length of the first center from the start node, mm; half a pitch
    /// when absent.
    #[serde(default)]
    pub offset: Option<f64>,
}

impl Default for ElectrodeSpec {
    fn default() -> Self {
        Self {
            count: default_count(),
            contact_length: default_contact(),
            z: default_z(),
            offset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Electrode {
    /// Contiguous run of boundary edges, in boundary order.
    pub edges: Vec<[usize; 2]>,
    /// Ω·m
    pub z: f64,
    pub center: Point,
    /// Arc length of the center from the start node, mm.
    pub arc_center: f64,
}

impl Electrode {
    pub fn contact_length(&self, mesh: &Mesh) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| mesh.nodes()[a].dist(mesh.nodes()[b]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSet {
    pub electrodes: Vec<Electrode>,
    /// Length of the outer boundary loop, mm.
    pub perimeter: f64,
    pub start_node: usize,
}

impl ElectrodeSet {
    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }
}

/// Boundary loops as node cycles, interior on the left. Where a node carries
/// several outgoing boundary edges, the walk takes the one that turns
/// sharpest to the right, which keeps every loop simple.
pub fn boundary_loops(mesh: &Mesh) -> Result<Vec<Vec<usize>>> {
    let edges = mesh.boundary_edges();
    let nodes = mesh.nodes();
    let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &[a, _]) in edges.iter().enumerate() {
        out.entry(a).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for first in 0..edges.len() {
        if used[first] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut e = first;
        loop {
            used[e] = true;
            let [a, b] = edges[e];
            cycle.push(a);
            let back = nodes[a] - nodes[b];
            let candidates = out.get(&b).map(Vec::as_slice).unwrap_or(&[]);
            let next = candidates
                .iter()
                .copied()
                .filter(|&c| !used[c] || c == first)
                .max_by(|&x, &y| {
                    let ang = |c: usize| {
                        let d = nodes[edges[c][1]] - nodes[b];
                        let t = back.cross(d).atan2(back.dot(d));
                        if t <= 0.0 { t + std::f64::consts::TAU } else { t }
                    };
                    ang(x).total_cmp(&ang(y)).then(y.cmp(&x))
                });
            match next {
                Some(n) if n == first => break,
                Some(n) => e = n,
                None => return Err(Error::Electrodes("open boundary chain".into())),
            }
        }
        loops.push(cycle);
    }
    Ok(loops)
}

fn loop_area(mesh: &Mesh, cycle: &[usize]) -> f64 {
    let pts: Vec<Point> = cycle.iter().map(|&v| mesh.nodes()[v]).collect();
    signed_area(&pts)
}

/// Places `spec.count` electrodes at equal arc-length spacing along the outer
/// boundary loop, numbered counterclockwise from the boundary node nearest
/// the bottom-left corner of the bounding box.
pub fn place_electrodes(mesh: &Mesh, spec: &ElectrodeSpec) -> Result<ElectrodeSet> {
    let l = spec.count;
    if l < 2 {
        return Err(Error::invalid("need at least 2 electrodes"));
    }
    if !(spec.contact_length > 0.0) || !(spec.z > 0.0) {
        return Err(Error::invalid("contact length and contact impedance must be > 0"));
    }
    let loops = boundary_loops(mesh)?;
    let outer = loops
        .iter()
        .max_by(|a, b| loop_area(mesh, a).total_cmp(&loop_area(mesh, b)))
        .ok_or_else(|| Error::Electrodes("mesh has no boundary".into()))?;
    let nodes = mesh.nodes();
    let bb = crate::geometry::BoundingBox::of_points(nodes).expect("mesh has nodes");
    let start_pos = outer
        .iter()
        .enumerate()
        .min_by(|(_, &a), (_, &b)| {
            nodes[a]
                .dist(bb.min)
                .total_cmp(&nodes[b].dist(bb.min))
                .then(a.cmp(&b))
        })
        .map(|(k, _)| k)
        .unwrap();
    let cycle: Vec<usize> = outer[start_pos..].iter().chain(&outer[..start_pos]).copied().collect();
    let n = cycle.len();
    let mut s = vec![0.0; n + 1];
    for k in 0..n {
        s[k + 1] = s[k] + nodes[cycle[k]].dist(nodes[cycle[(k + 1) % n]]);
    }
    let perimeter = s[n];
    let pitch = perimeter / l as f64;
    if spec.contact_length >= pitch {
        return Err(Error::Electrodes(format!(
            "contact length {} mm is not shorter than the electrode pitch {pitch:.4} mm: electrodes would overlap",
            spec.contact_length
        )));
    }
    let offset = spec.offset.unwrap_or(0.5 * pitch);
    let mut electrodes = Vec::with_capacity(l);
    for k in 0..l {
        let c = (offset + k as f64 * pitch).rem_euclid(perimeter);
        let cyc_dist = |x: f64| {
            let d = (x - c).rem_euclid(perimeter);
            d.min(perimeter - d)
        };
        // walk outwards from the edge containing the center so the run stays in boundary order
        let home = (0..n).find(|&i| s[i] <= c && c < s[i + 1]).unwrap_or(n - 1);
        let covered = |i: usize| cyc_dist(0.5 * (s[i] + s[i + 1])) <= 0.5 * spec.contact_length;
        let mut lo = home;
        let mut steps = 0;
        while steps + 1 < n && covered((lo + n - 1) % n) {
            lo = (lo + n - 1) % n;
            steps += 1;
        }
        let edge = |i: usize| [cycle[i], cycle[(i + 1) % n]];
        let mut run = Vec::new();
        let mut i = lo;
        loop {
            run.push(edge(i));
            if i == home {
                break;
            }
            i = (i + 1) % n;
        }
        let mut j = (home + 1) % n;
        while j != lo && covered(j) {
            run.push(edge(j));
            j = (j + 1) % n;
        }
        let (a, b) = (nodes[cycle[home]], nodes[cycle[(home + 1) % n]]);
        let t = (c - s[home]) / (s[home + 1] - s[home]);
        electrodes.push(Electrode {
            edges: run,
            z: spec.z,
            center: a + (b - a) * t,
            arc_center: c,
        });
    }
    for a in 0..l {
        for b in a + 1..l {
            if electrodes[a].edges.iter().any(|e| electrodes[b].edges.contains(e)) {
                return Err(Error::Electrodes(format!("electrodes {a} and {b} share boundary edges")));
            }
        }
    }
    Ok(ElectrodeSet {
        electrodes,
        perimeter,
        start_node: cycle[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PlanarRegion, Polygon};
    use crate::mesh::triangulate;

    fn box_mesh(w: f64, h: f64, edge: f64) -> Mesh {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(w, h)));
        triangulate(&r, edge).unwrap()
    }

    #[test]
    fn rectangle_pitch() {
        let m = box_mesh(48.0, 60.0, 3.0);
        let set = place_electrodes(&m, &ElectrodeSpec::default()).unwrap();
        assert!((set.perimeter - 216.0).abs() < 1e-9);
        assert_eq!(m.nodes()[set.start_node], Point::new(0.0, 0.0));
        for k in 1..16 {
            let d = set.electrodes[k].arc_center - set.electrodes[k - 1].arc_center;
            assert!((d - 13.5).abs() < 1e-9);
        }
        // first electrode sits on the bottom side, second-to-last runs up the left side
        assert!(set.electrodes[0].center.y.abs() < 1e-12);
        assert!(set.electrodes[15].center.x.abs() < 1e-12);
    }

    #[test]
    fn runs_are_contiguous() {
        let m = box_mesh(48.0, 60.0, 1.0);
        let set = place_electrodes(&m, &ElectrodeSpec::default()).unwrap();
        for e in &set.electrodes {
            for w in e.edges.windows(2) {
                assert_eq!(w[0][1], w[1][0]);
            }
            assert!((e.contact_length(&m) - 4.0).abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn two_electrodes_on_a_circle_are_antipodal() {
        let ring: Vec<Point> = (0..96)
            .map(|k| {
                let a = k as f64 / 96.0 * std::f64::consts::TAU;
                Point::new(10.0 * a.cos(), 10.0 * a.sin())
            })
            .collect();
        let m = triangulate(&PlanarRegion::from_polygon(Polygon::new(ring).unwrap()), 2.0).unwrap();
        let spec = ElectrodeSpec {
            count: 2,
            contact_length: 2.0,
            ..Default::default()
        };
        let set = place_electrodes(&m, &spec).unwrap();
        let (a, b) = (set.electrodes[0].center, set.electrodes[1].center);
        assert!((a + b).norm() < 1e-9, "{a:?} {b:?}");
    }

    #[test]
    fn overlapping_contacts_rejected() {
        let m = box_mesh(48.0, 60.0, 3.0);
        let spec = ElectrodeSpec {
            contact_length: 14.0,
            ..Default::default()
        };
        assert!(matches!(place_electrodes(&m, &spec), Err(Error::Electrodes(_))));
    }

    #[test]
    fn hole_is_a_separate_clockwise_loop() {
        let r = PlanarRegion::new(
            vec![Polygon::rectangle(Point::new(0.0, 0.0), Point::new(12.0, 12.0))],
            vec![Polygon::rectangle(Point::new(4.0, 4.0), Point::new(8.0, 8.0))],
        )
        .unwrap();
        let m = triangulate(&r, 1.0).unwrap();
        let loops = boundary_loops(&m).unwrap();
        assert_eq!(loops.len(), 2);
        let mut areas: Vec<f64> = loops.iter().map(|l| loop_area(&m, l)).collect();
        areas.sort_by(f64::total_cmp);
        assert!((areas[0] + 16.0).abs() < 1e-9 && (areas[1] - 144.0).abs() < 1e-9);
    }
}
