//! Complete electrode model on P1 triangles.
//!
//! Unknowns are the node potentials followed by one voltage per electrode.
//! Every element contributes `σ_e·K̂_e`, where `K̂_e` holds the sheet stiffness
//! (thickness times the dimensionless P1 gradient matrix) plus, for elements
//! that own electrode edges, the contact terms. The contact admittance of an
//! edge is `σ_e / (σ_ref·z)`: it follows the conductivity of the element it
//! belongs to, so the system matrix is exactly linear in σ.

mod protocol;

pub use protocol::{Drive, DrivePattern, Protocol, Scheme};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rcm, Skyline};
use crate::mesh::{ElectrodeSet, Mesh};

const MM: f64 = 1e-3;

fn default_current() -> f64 {
    1e-3
}
fn default_thickness() -> Option<f64> {
    Some(0.004)
}
fn default_sigma0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    /// Drive current, A.
    #[serde(default = "default_current")]
    pub current: f64,
    /// Sheet thickness in m; `None` solves the pure 2D problem.
    #[serde(default = "default_thickness")]
    pub thickness: Option<f64>,
    /// Background conductivity σ₀, S/m. Also the reference conductivity of
    /// the contact terms.
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            current: default_current(),
            thickness: default_thickness(),
            sigma0: default_sigma0(),
        }
    }
}

/// Per-element conductivity, S/m.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField(pub Vec<f64>);

impl ConductivityField {
    pub fn uniform(n: usize, sigma: f64) -> Self {
        Self(vec![sigma; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|s| s * c).collect())
    }

    fn check(&self, elements: usize) -> Result<()> {
        if self.0.len() != elements {
            return Err(Error::invalid(format!(
                "conductivity has {} entries for {elements} elements",
                self.0.len()
            )));
        }
        if let Some(e) = self.0.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("conductivity of element {e} is not positive")));
        }
        Ok(())
    }
}

/// Element matrix `K̂_e` over up to five degrees of freedom: three nodes and
/// at most two electrode voltages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMatrix {
    pub dofs: [usize; 5],
    pub len: usize,
    pub m: [[f64; 5]; 5],
}

impl LocalMatrix {
    pub fn dofs(&self) -> &[usize] {
        &self.dofs[..self.len]
    }

    /// xᵀ·K̂_e·y over global vectors.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len {
            let xi = x[self.dofs[i]];
            let mut row = 0.0;
            for j in 0..self.len {
                row += self.m[i][j] * y[self.dofs[j]];
            }
            acc += xi * row;
        }
        acc
    }

    fn slot(&mut self, dof: usize) -> usize {
        if let Some(k) = self.dofs[..self.len].iter().position(|&d| d == dof) {
            return k;
        }
        let k = self.len;
        self.dofs[k] = dof;
        self.len += 1;
        k
    }
}

/// P1 gradient matrix of a triangle; dimensionless in 2D.
pub fn p1_stiffness(p: [crate::geometry::Point; 3]) -> [[f64; 3]; 3] {
    let area2 = (p[1] - p[0]).cross(p[2] - p[0]);
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = p[j].y - p[k].y;
        c[i] = p[k].x - p[j].x;
    }
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = (b[i] * b[j] + c[i] * c[j]) / (2.0 * area2);
        }
    }
    g
}

/// Discretized forward model: mesh, electrodes and the σ-independent
/// element matrices, plus a fill-reducing dof ordering.
#[derive(Debug, Clone)]
pub struct FEModel {
    pub mesh: Mesh,
    pub electrodes: ElectrodeSet,
    pub config: ForwardConfig,
    locals: Vec<LocalMatrix>,
    /// `perm[dof]` = position in the factored system.
    perm: Vec<usize>,
    pattern: Vec<(usize, usize)>,
}

impl FEModel {
    pub fn new(mesh: Mesh, electrodes: ElectrodeSet, config: ForwardConfig) -> Result<Self> {
        if !(config.sigma0 > 0.0) {
            return Err(Error::invalid("sigma0 must be > 0"));
        }
        if let Some(t) = config.thickness {
            if !(t > 0.0) {
                return Err(Error::invalid("thickness must be > 0"));
            }
        }
        let n = mesh.node_count();
        let l = electrodes.len();
        let t = config.thickness.unwrap_or(1.0);
        let mut locals: Vec<LocalMatrix> = (0..mesh.element_count())
            .map(|e| {
                let g = p1_stiffness(mesh.vertices_of(e));
                let mut lm = LocalMatrix {
                    dofs: [0; 5],
                    len: 3,
                    m: [[0.0; 5]; 5],
                };
                lm.dofs[..3].copy_from_slice(&mesh.triangles()[e]);
                for i in 0..3 {
                    for j in 0..3 {
                        lm.m[i][j] = t * g[i][j];
                    }
                }
                lm
            })
            .collect();

        // owner element of every boundary edge
        let mut owner = std::collections::HashMap::new();
        for (e, tri) in mesh.triangles().iter().enumerate() {
            for k in 0..3 {
                owner.insert((tri[k], tri[(k + 1) % 3]), e);
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (li, el) in electrodes.electrodes.iter().enumerate() {
            if !(el.z > 0.0) {
                return Err(Error::invalid(format!("electrode {li} has non-positive contact impedance")));
            }
            let y = 1.0 / (config.sigma0 * el.z);
            for &[a, b] in &el.edges {
                if !seen.insert((a, b)) {
                    return Err(Error::Electrodes(format!("edge ({a}, {b}) assigned to two electrodes")));
                }
                let e = *owner
                    .get(&(a, b))
                    .ok_or_else(|| Error::Electrodes(format!("electrode {li} edge ({a}, {b}) is not a mesh edge")))?;
                let len = mesh.nodes()[a].dist(mesh.nodes()[b]) * MM;
                let lm = &mut locals[e];
                let (ia, ib, iv) = (lm.slot(a), lm.slot(b), lm.slot(n + li));
                let w = y * len;
                lm.m[ia][ia] += w / 3.0;
                lm.m[ib][ib] += w / 3.0;
                lm.m[ia][ib] += w / 6.0;
                lm.m[ib][ia] += w / 6.0;
                lm.m[ia][iv] -= w / 2.0;
                lm.m[iv][ia] -= w / 2.0;
                lm.m[ib][iv] -= w / 2.0;
                lm.m[iv][ib] -= w / 2.0;
                lm.m[iv][iv] += w;
            }
        }

        let mut adj = vec![Vec::new(); n];
        for tri in mesh.triangles() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        check_connected(n, l, &adj, &locals)?;
        let order = rcm(&adj);
        let mut perm = vec![0; n + l];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        for k in 0..l {
            perm[n + k] = n + k;
        }
        let mut pattern = Vec::new();
        for lm in &locals {
            for &a in lm.dofs() {
                for &b in lm.dofs() {
                    if perm[a] > perm[b] {
                        pattern.push((perm[a], perm[b]));
                    }
                }
            }
        }
        for a in 0..l {
            for b in 0..a {
                pattern.push((n + a, n + b));
            }
        }
        pattern.sort_unstable();
        pattern.dedup();
        Ok(Self {
            mesh,
            electrodes,
            config,
            locals,
            perm,
            pattern,
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn electrode_count(&self) -> usize {
        self.electrodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.mesh.element_count()
    }

    pub fn dofs(&self) -> usize {
        self.node_count() + self.electrode_count()
    }

    pub fn locals(&self) -> &[LocalMatrix] {
        &self.locals
    }

    pub fn uniform_sigma(&self) -> ConductivityField {
        ConductivityField::uniform(self.element_count(), self.config.sigma0)
    }

    /// Assembles and factors the grounded system for `sigma`.
    pub fn factor(&self, sigma: &ConductivityField) -> Result<FactoredSystem<'_>> {
        sigma.check(self.element_count())?;
        let n = self.node_count();
        let l = self.electrode_count();
        let mut k = Skyline::with_pattern(n + l, self.pattern.iter().copied());
        for (lm, &s) in self.locals.iter().zip(&sigma.0) {
            for i in 0..lm.len {
                for j in 0..=i {
                    let (a, b) = (self.perm[lm.dofs[i]], self.perm[lm.dofs[j]]);
                    k.add_exact(a, b, s, lm.m[i][j]);
                }
            }
        }
        // zero-mean electrode voltages: add c·eeᵀ on the electrode block.
        // c is rounded to a power of two so small changes of σ leave it
        // (and the rounding of the block) untouched.
        let mean = (0..l).map(|i| k.get(n + i, n + i)).sum::<f64>() / l as f64;
        let c = mean.log2().round().exp2();
        for a in 0..l {
            for b in 0..=a {
                k.add_exact(n + a, n + b, c, 1.0);
            }
        }
        let a = k.clone();
        k.factor()?;
        Ok(FactoredSystem { model: self, a, k })
    }

    /// Drive current vector over electrodes.
    pub fn currents(&self, drive: &DrivePattern) -> Result<Vec<f64>> {
        let l = self.electrode_count();
        if drive.source >= l || drive.sink >= l || drive.source == drive.sink {
            return Err(Error::invalid(format!(
                "drive ({}, {}) is not a pair of distinct electrodes",
                drive.source, drive.sink
            )));
        }
        let mut i = vec![0.0; l];
        i[drive.source] = drive.current;
        i[drive.sink] = -drive.current;
        Ok(i)
    }

    pub fn solve(&self, sigma: &ConductivityField, drive: &DrivePattern) -> Result<FieldSolution> {
        let sys = self.factor(sigma)?;
        Ok(sys.solve(&self.currents(drive)?))
    }

    /// Net current leaving each electrode into the body, from the electrode
    /// rows of the ungrounded system.
    pub fn electrode_currents(&self, sigma: &ConductivityField, sol: &FieldSolution) -> Vec<f64> {
        let n = self.node_count();
        let mut out = vec![0.0; self.electrode_count()];
        let u = sol.dof_vector();
        for (lm, &s) in self.locals.iter().zip(&sigma.0) {
            for i in 0..lm.len {
                let d = lm.dofs[i];
                if d >= n {
                    let row: f64 = (0..lm.len).map(|j| lm.m[i][j] * u[lm.dofs[j]]).sum();
                    out[d - n] += s * row;
                }
            }
        }
        out
    }
}

fn check_connected(n: usize, l: usize, adj: &[Vec<usize>], locals: &[LocalMatrix]) -> Result<()> {
    let mut comp = vec![usize::MAX; n + l];
    let mut full_adj: Vec<Vec<usize>> = adj.to_vec();
    full_adj.resize(n + l, Vec::new());
    for lm in locals {
        for &d in lm.dofs() {
            if d >= n {
                for &v in &lm.dofs()[..3] {
                    full_adj[d].push(v);
                    full_adj[v].push(d);
                }
            }
        }
    }
    let mut sizes = Vec::new();
    for root in 0..n + l {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![root];
        comp[root] = id;
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &full_adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    if sizes.len() > 1 {
        let main = comp[n];
        let (bad, &size) = sizes
            .iter()
            .enumerate()
            .find(|&(c, _)| c != main)
            .expect("more than one component");
        let sample = comp.iter().position(|&c| c == bad).unwrap();
        return Err(Error::DisconnectedComponent {
            nodes: size,
            sample_node: sample,
        });
    }
    Ok(())
}

/// Factored system matrix for one conductivity field.
pub struct FactoredSystem<'a> {
    model: &'a FEModel,
    /// assembled matrix, kept for residuals
    a: Skyline,
    k: Skyline,
}

impl FactoredSystem<'_> {
    /// Solves for electrode injection currents `currents` (A, summing to zero).
    pub fn solve(&self, currents: &[f64]) -> FieldSolution {
        let n = self.model.node_count();
        let l = self.model.electrode_count();
        let mut rhs = vec![0.0; n + l];
        rhs[n..].copy_from_slice(currents);
        self.solve_dofs(&rhs)
    }

    /// Solves with an arbitrary right-hand side over all dofs, in model order.
    pub fn solve_dofs(&self, rhs: &[f64]) -> FieldSolution {
        let n = self.model.node_count();
        let perm = &self.model.perm;
        let mut b = vec![0.0; rhs.len()];
        // permuted into factor order
        for (d, &v) in rhs.iter().enumerate() {
            b[perm[d]] = v;
        }
        let mut x = self.k.solve(&b);
        // refinement against the double-double assembly: the answer is then
        // accurate to working precision, which finite differences need
        for _ in 0..3 {
            let r = self.a.residual(&x, &b);
            let dx = self.k.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        }
        let b = x;
        let phi = (0..n).map(|d| b[perm[d]]).collect();
        let v = (n..rhs.len()).map(|d| b[perm[d]]).collect();
        FieldSolution { phi, v }
    }
}

/// Node potentials and electrode voltages, V.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub phi: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldSolution {
    pub fn dof_vector(&self) -> Vec<f64> {
        self.phi.iter().chain(&self.v).copied().collect()
    }
}

/// One acquisition cycle: measured voltages in protocol order.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub protocol_hash: String,
    pub scheme: String,
    pub electrodes: usize,
    pub current: f64,
    pub strain: f64,
    /// (drive+, drive−, sense+, sense−) per measurement.
    pub rows: Vec<[usize; 4]>,
    pub voltages: Vec<f64>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    pub fn resistances(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v / self.current).collect()
    }

    pub fn check_protocol(&self, hash: &str) -> Result<()> {
        if self.protocol_hash != hash {
            return Err(Error::ProtocolMismatch {
                expected: hash.to_string(),
                found: self.protocol_hash.clone(),
            });
        }
        Ok(())
    }

    /// V₁ − V₀ after checking both frames belong to the same protocol.
    pub fn difference(&self, reference: &Frame) -> Result<Vec<f64>> {
        self.check_protocol(&reference.protocol_hash)?;
        Ok(self.voltages.iter().zip(&reference.voltages).map(|(a, b)| a - b).collect())
    }
}

/// All drive solutions of a protocol from a single factorization, computed
/// in parallel and collected in drive order.
pub fn solve_drives(model: &FEModel, sigma: &ConductivityField, protocol: &Protocol) -> Result<Vec<FieldSolution>> {
    if protocol.electrodes != model.electrode_count() {
        return Err(Error::invalid(format!(
            "protocol uses {} electrodes, model has {}",
            protocol.electrodes,
            model.electrode_count()
        )));
    }
    let sys = model.factor(sigma)?;
    protocol
        .drives
        .par_iter()
        .enumerate()
        .map(|(d, drive)| {
            let i = model.currents(&drive.pattern).map_err(|e| Error::Drive {
                drive: d,
                source: Box::new(e),
            })?;
            Ok(sys.solve(&i))
        })
        .collect()
}

pub fn run_protocol(model: &FEModel, sigma: &ConductivityField, protocol: &Protocol) -> Result<Frame> {
    let fields = solve_drives(model, sigma, protocol)?;
    let mut voltages = Vec::with_capacity(protocol.measurement_count());
    for (drive, f) in protocol.drives.iter().zip(&fields) {
        voltages.extend(drive.measurements.iter().map(|&(p, m)| f.v[p] - f.v[m]));
    }
    let current = protocol.drives.first().map(|d| d.pattern.current).unwrap_or(0.0);
    Ok(Frame {
        protocol_hash: protocol.hash(),
        scheme: protocol.scheme.tag(),
        electrodes: protocol.electrodes,
        current,
        strain: 0.0,
        rows: protocol
            .rows()
            .into_iter()
            .map(|(d, p, m)| {
                let pat = &protocol.drives[d].pattern;
                [pat.source, pat.sink, p, m]
            })
            .collect(),
        voltages,
    })
}

/// (V(sense+) − V(sense−)) / I for current driven from `drive.0` to `drive.1`.
pub fn transfer_resistance(
    model: &FEModel,
    sigma: &ConductivityField,
    drive: (usize, usize),
    sense: (usize, usize),
) -> Result<f64> {
    let i = model.config.current;
    let sol = model.solve(
        sigma,
        &DrivePattern {
            source: drive.0,
            sink: drive.1,
            current: i,
        },
    )?;
    Ok((sol.v[sense.0] - sol.v[sense.1]) / i)
}

/// Driving-point resistance (V(source) − V(sink)) / I of each drive.
pub fn driving_point_resistances(model: &FEModel, sigma: &ConductivityField, protocol: &Protocol) -> Result<Vec<f64>> {
    let fields = solve_drives(model, sigma, protocol)?;
    Ok(protocol
        .drives
        .iter()
        .zip(&fields)
        .map(|(d, f)| (f.v[d.pattern.source] - f.v[d.pattern.sink]) / d.pattern.current)
        .collect())
}
