//! Plain-text artifact formats and the provenance header that chains them.
//!
//! Every artifact starts with
//! `# lattice-eit <kind> sha256=<body hash> upstream=<hash>[,<hash>...]`
//! followed by the body. The body hash is recomputed on read, and each
//! stage checks that the artifacts it consumes name the upstream it was
//! given.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fem::Frame;
use crate::geometry::{PlanarRegion, Point, Polygon};
use crate::mesh::{Electrode, ElectrodeSet, Mesh};
use crate::reconstruction::{ConductivityImage, Indicators};
use crate::sensitivity::SensitivityMap;

const MAGIC: &str = "# lattice-eit";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: String,
    pub sha256: String,
    pub upstream: Vec<String>,
    pub body: String,
}

impl Artifact {
    pub fn new(kind: &str, upstream: Vec<String>, body: String) -> Self {
        Self {
            kind: kind.to_string(),
            sha256: sha256_hex(body.as_bytes()),
            upstream,
            body,
        }
    }

    pub fn to_text(&self) -> String {
        let up = if self.upstream.is_empty() {
            "-".to_string()
        } else {
            self.upstream.join(",")
        };
        format!("{MAGIC} {} sha256={} upstream={up}\n{}", self.kind, self.sha256, self.body)
    }

    /// Parses and verifies the body hash.
    pub fn parse(text: &str) -> Result<Self> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Provenance("missing artifact header".into()))?;
        let fields: Vec<&str> = rest.split_whitespace().collect();
        let [kind, hash, up] = fields[..] else {
            return Err(Error::Provenance(format!("malformed artifact header: {header}")));
        };
        let sha = hash
            .strip_prefix("sha256=")
            .ok_or_else(|| Error::Provenance("header lacks sha256".into()))?;
        let up = up
            .strip_prefix("upstream=")
            .ok_or_else(|| Error::Provenance("header lacks upstream".into()))?;
        let actual = sha256_hex(body.as_bytes());
        if actual != sha {
            return Err(Error::Provenance(format!(
                "{kind} body hash {actual} does not match its header {sha}; the file was modified"
            )));
        }
        Ok(Self {
            kind: kind.to_string(),
            sha256: sha.to_string(),
            upstream: if up == "-" {
                vec![]
            } else {
                up.split(',').map(String::from).collect()
            },
            body: body.to_string(),
        })
    }

    pub fn read(path: &Path, kind: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let a = Self::parse(&text).map_err(|e| match e {
            Error::Provenance(m) => Error::Provenance(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if a.kind != kind {
            return Err(Error::Provenance(format!(
                "{}: expected a {kind} artifact, found {}",
                path.display(),
                a.kind
            )));
        }
        Ok(a)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn require_upstream(&self, hash: &str, what: &str) -> Result<()> {
        if !self.upstream.iter().any(|h| h == hash) {
            return Err(Error::Provenance(format!(
                "{} artifact was not derived from the current {what} ({hash}); rerun the upstream stages",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Rounds to 12 significant digits, the precision of the mesh format.
pub fn round12(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {what}")))
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn lines(body: &str) -> impl Iterator<Item = (usize, &str)> {
    body.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

// ---- region ----

pub fn write_region(region: &PlanarRegion) -> String {
    let mut s = String::new();
    let blocks = region
        .outers
        .iter()
        .map(|p| ("outer", p))
        .chain(region.holes.iter().map(|p| ("hole", p)));
    for (flag, p) in blocks {
        let _ = writeln!(s, "polygon {flag} {}", p.len());
        for v in p.vertices() {
            let _ = writeln!(s, "{} {}", v.x, v.y);
        }
    }
    s
}

pub fn read_region(body: &str) -> Result<PlanarRegion> {
    let mut outers = Vec::new();
    let mut holes = Vec::new();
    let mut it = lines(body);
    while let Some((ln, l)) = it.next() {
        let mut t = l.split_whitespace();
        if t.next() != Some("polygon") {
            return Err(Error::parse(ln, "expected 'polygon outer|hole <n>'"));
        }
        let hole = match t.next() {
            Some("outer") => false,
            Some("hole") => true,
            _ => return Err(Error::parse(ln, "polygon flag must be outer or hole")),
        };
        let n: usize = num(t.next(), ln, "vertex count")?;
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = it.next().ok_or_else(|| Error::parse(ln, "truncated polygon"))?;
            let mut t = l.split_whitespace();
            pts.push(Point::new(num(t.next(), ln, "x")?, num(t.next(), ln, "y")?));
        }
        let p = Polygon::new(pts)?;
        if hole {
            holes.push(p)
        } else {
            outers.push(p)
        }
    }
    PlanarRegion::new(outers, holes)
}

// ---- mesh ----

fn e12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Rounds node coordinates and electrode metadata to the file precision so
/// that the in-memory mesh equals what a reader of its file sees.
pub fn quantize_mesh(mesh: &Mesh, electrodes: &ElectrodeSet) -> Result<(Mesh, ElectrodeSet)> {
    let nodes = mesh.nodes().iter().map(|p| Point::new(round12(p.x), round12(p.y))).collect();
    let m = Mesh::new(nodes, mesh.triangles().to_vec())?;
    let el = ElectrodeSet {
        electrodes: electrodes
            .electrodes
            .iter()
            .map(|e| Electrode {
                edges: e.edges.clone(),
                z: round12(e.z),
                center: Point::new(round12(e.center.x), round12(e.center.y)),
                arc_center: round12(e.arc_center),
            })
            .collect(),
        perimeter: round12(electrodes.perimeter),
        start_node: electrodes.start_node,
    };
    Ok((m, el))
}

pub fn write_mesh(mesh: &Mesh, electrodes: &ElectrodeSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.node_count());
    let _ = writeln!(s, "triangles {}", mesh.element_count());
    let _ = writeln!(s, "boundary_edges {}", mesh.boundary_edges().len());
    let _ = writeln!(
        s,
        "electrodes {} perimeter {} start {}",
        electrodes.len(),
        e12(electrodes.perimeter),
        electrodes.start_node
    );
    for (i, p) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(s, "{i} {} {}", e12(p.x), e12(p.y));
    }
    for (i, t) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]);
    }
    for [a, b] in mesh.boundary_edges() {
        let _ = writeln!(s, "{a} {b}");
    }
    for (k, e) in electrodes.electrodes.iter().enumerate() {
        let _ = write!(
            s,
            "electrode {k} {} center {} {} arc {}:",
            e12(e.z),
            e12(e.center.x),
            e12(e.center.y),
            e12(e.arc_center)
        );
        for [a, b] in &e.edges {
            let _ = write!(s, " {a}-{b}");
        }
        s.push('\n');
    }
    s
}

pub fn read_mesh(body: &str) -> Result<(Mesh, ElectrodeSet)> {
    let mut it = lines(body);
    let mut count = |key: &str| -> Result<(usize, Vec<String>)> {
        let (ln, l) = it.next().ok_or_else(|| Error::parse(0, format!("missing '{key}' header")))?;
        let mut t = l.split_whitespace();
        if t.next() != Some(key) {
            return Err(Error::parse(ln, format!("expected '{key}' header")));
        }
        let n = num(t.next(), ln, key)?;
        Ok((n, t.map(String::from).collect()))
    };
    let (nn, _) = count("nodes")?;
    let (nt, _) = count("triangles")?;
    let (nb, _) = count("boundary_edges")?;
    let (ne, extra) = count("electrodes")?;
    let (perimeter, start_node) = match &extra[..] {
        [p, per, s, st] if p == "perimeter" && s == "start" => (
            num(Some(per), 4, "perimeter")?,
            num(Some(st), 4, "start node")?,
        ),
        _ => return Err(Error::parse(4, "expected 'perimeter <p> start <node>'")),
    };
    let mut nodes = Vec::with_capacity(nn);
    for i in 0..nn {
        let (ln, l) = it.next().ok_or_else(|| Error::parse(0, "truncated node list"))?;
        let mut t = l.split_whitespace();
        if num::<usize>(t.next(), ln, "node id")? != i {
            return Err(Error::parse(ln, "node ids must be consecutive from 0"));
        }
        nodes.push(Point::new(num(t.next(), ln, "x")?, num(t.next(), ln, "y")?));
    }
    let mut tris = Vec::with_capacity(nt);
    for i in 0..nt {
        let (ln, l) = it.next().ok_or_else(|| Error::parse(0, "truncated triangle list"))?;
        let mut t = l.split_whitespace();
        if num::<usize>(t.next(), ln, "triangle id")? != i {
            return Err(Error::parse(ln, "triangle ids must be consecutive from 0"));
        }
        tris.push([num(t.next(), ln, "n1")?, num(t.next(), ln, "n2")?, num(t.next(), ln, "n3")?]);
    }
    let mut bedges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = it.next().ok_or_else(|| Error::parse(0, "truncated boundary edge list"))?;
        let mut t = l.split_whitespace();
        bedges.push([num(t.next(), ln, "edge start")?, num(t.next(), ln, "edge end")?]);
    }
    let mesh = Mesh::new(nodes, tris)?;
    if mesh.boundary_edges() != &bedges[..] {
        return Err(Error::parse(0, "boundary edges do not match the triangles"));
    }
    let mut electrodes = Vec::with_capacity(ne);
    for k in 0..ne {
        let (ln, l) = it.next().ok_or_else(|| Error::parse(0, "truncated electrode list"))?;
        let (head, edges) = l
            .split_once(':')
            .ok_or_else(|| Error::parse(ln, "electrode line needs ':'"))?;
        let t: Vec<&str> = head.split_whitespace().collect();
        let ["electrode", id, z, "center", cx, cy, "arc", arc] = t[..] else {
            return Err(Error::parse(ln, "expected 'electrode k z center x y arc s: edges'"));
        };
        if num::<usize>(Some(id), ln, "electrode id")? != k {
            return Err(Error::parse(ln, "electrode ids must be consecutive from 0"));
        }
        let edges = edges
            .split_whitespace()
            .map(|e| {
                let (a, b) = e.split_once('-').ok_or_else(|| Error::parse(ln, "edge must be 'a-b'"))?;
                Ok([num(Some(a), ln, "edge node")?, num(Some(b), ln, "edge node")?])
            })
            .collect::<Result<Vec<[usize; 2]>>>()?;
        electrodes.push(Electrode {
            edges,
            z: num(Some(z), ln, "z")?,
            center: Point::new(num(Some(cx), ln, "center x")?, num(Some(cy), ln, "center y")?),
            arc_center: num(Some(arc), ln, "arc")?,
        });
    }
    if let Some((ln, _)) = it.next() {
        return Err(Error::parse(ln, "trailing content"));
    }
    Ok((
        mesh,
        ElectrodeSet {
            electrodes,
            perimeter,
            start_node,
        },
    ))
}

// ---- frames ----

pub fn write_frame(frame: &Frame) -> String {
    let mut s = String::from("protocol_hash,scheme,electrodes,current,strain\n");
    let _ = writeln!(
        s,
        "{},{},{},{:e},{:e}",
        frame.protocol_hash, frame.scheme, frame.electrodes, frame.current, frame.strain
    );
    s.push_str("drive_pos,drive_neg,sense_pos,sense_neg,voltage,resistance\n");
    for (r, v) in frame.rows.iter().zip(&frame.voltages) {
        let _ = writeln!(s, "{},{},{},{},{:e},{:e}", r[0], r[1], r[2], r[3], v, v / frame.current);
    }
    s
}

pub fn read_frame(body: &str) -> Result<Frame> {
    let mut it = lines(body);
    let mut next = |what: &str| it.next().ok_or_else(|| Error::parse(0, format!("missing {what}")));
    let (ln, h) = next("header")?;
    if h != "protocol_hash,scheme,electrodes,current,strain" {
        return Err(Error::parse(ln, "bad frame header"));
    }
    let (ln, meta) = next("header values")?;
    let m: Vec<&str> = meta.split(',').collect();
    let [hash, scheme, l, i, strain] = m[..] else {
        return Err(Error::parse(ln, "expected five header values"));
    };
    let mut frame = Frame {
        protocol_hash: hash.to_string(),
        scheme: scheme.to_string(),
        electrodes: num(Some(l), ln, "electrode count")?,
        current: num(Some(i), ln, "current")?,
        strain: num(Some(strain), ln, "strain")?,
        rows: vec![],
        voltages: vec![],
    };
    let (ln, cols) = next("column header")?;
    if cols != "drive_pos,drive_neg,sense_pos,sense_neg,voltage,resistance" {
        return Err(Error::parse(ln, "bad column header"));
    }
    for (ln, l) in it {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 {
            return Err(Error::parse(ln, "expected six columns"));
        }
        let mut row = [0; 4];
        for (r, tok) in row.iter_mut().zip(&f) {
            *r = num(Some(tok), ln, "electrode index")?;
        }
        frame.rows.push(row);
        frame.voltages.push(num(Some(f[4]), ln, "voltage")?);
    }
    Ok(frame)
}

// ---- per-element fields ----

fn write_field_rows(s: &mut String, mesh: &Mesh, cols: &[&[f64]]) {
    for e in 0..mesh.element_count() {
        let c = mesh.element_centroid(e);
        let _ = write!(s, "{e},{:e},{:e}", c.x, c.y);
        for col in cols {
            let _ = write!(s, ",{:e}", col[e]);
        }
        s.push('\n');
    }
}

/// Column `col` (0-based, after the id) of a per-element CSV body.
fn read_field_column(body: &str, header: &str, col: usize) -> Result<Vec<f64>> {
    let mut it = lines(body);
    match it.next() {
        Some((_, h)) if h == header => {}
        Some((ln, _)) => return Err(Error::parse(ln, format!("expected header '{header}'"))),
        None => return Err(Error::parse(0, "empty field file")),
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (ln, l) in it {
        if l.starts_with('[') {
            break;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != width {
            return Err(Error::parse(ln, format!("expected {width} columns")));
        }
        if num::<usize>(Some(f[0]), ln, "element id")? != out.len() {
            return Err(Error::parse(ln, "element ids must be consecutive from 0"));
        }
        out.push(num(Some(f[col + 1]), ln, "value")?);
    }
    Ok(out)
}

const SENS_HEADER: &str = "element,cx,cy,s";

pub fn write_sensitivity(map: &SensitivityMap, mesh: &Mesh) -> String {
    let mut s = format!("{SENS_HEADER}\n");
    write_field_rows(&mut s, mesh, &[&map.values]);
    let st = &map.stats;
    let _ = write!(
        s,
        "[summary]\nmean = {:e}\np25 = {:e}\nmin = {:e}\nmax = {:e}\nmeasurements = {}\nelements = {}\n",
        st.mean,
        st.p25,
        st.min,
        st.max,
        map.measurements,
        map.values.len()
    );
    s
}

pub fn read_sensitivity(body: &str) -> Result<Vec<f64>> {
    read_field_column(body, SENS_HEADER, 2)
}

const IMAGE_HEADER: &str = "element,cx,cy,delta_sigma,normalized";

pub fn write_image(img: &ConductivityImage, ind: &Indicators, mesh: &Mesh) -> String {
    let mut s = format!("{IMAGE_HEADER}\n");
    write_field_rows(&mut s, mesh, &[&img.delta_sigma, &ind.normalized]);
    s
}

pub fn read_image(body: &str) -> Result<ConductivityImage> {
    Ok(ConductivityImage {
        delta_sigma: read_field_column(body, IMAGE_HEADER, 2)?,
    })
}

pub fn read_image_normalized(body: &str) -> Result<Vec<f64>> {
    read_field_column(body, IMAGE_HEADER, 3)
}

/// One indicator-log line.
pub fn indicator_line(frame: usize, strain: f64, ind: &Indicators) -> String {
    let el = ind.min_element.map_or("-".to_string(), |e| e.to_string());
    format!(
        "frame {frame} strain {strain:e} min_element {el} magnitude {:e} amplitude {:e} log_amplitude {:e}\n",
        ind.min_magnitude, ind.amplitude, ind.log_amplitude
    )
}
