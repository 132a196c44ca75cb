//! One-step MAP difference imaging with a Laplace prior.
//!
//! `B = (HᵀWH + μQ)⁻¹HᵀW`. The normal matrix has one row per element, which
//! rules out dense factorizations at lattice scale, so `B` is built through
//! the Woodbury identity: `HᵀWH + μQ = μQ̃ + U·C·Uᵀ` with `Q̃ = Q + P`
//! (`P` projects onto per-component constants, which `Q` annihilates),
//! `U = [Hᵀ√W | E]` and `C = diag(I, −μI)`. Only sparse solves with `Q̃`
//! and one small dense saddle-point system are needed, and everything
//! except that small system is independent of μ.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{Frame, Protocol};
use crate::linalg::{rcm, Skyline};
use crate::mesh::Mesh;

/// Graph Laplacian on element adjacency, optionally shifted by `τ·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    adj: Vec<Vec<usize>>,
    pub tau: f64,
}

impl Regularizer {
    pub fn from_adjacency(adj: Vec<Vec<usize>>) -> Result<Self> {
        for (i, a) in adj.iter().enumerate() {
            for &j in a {
                if j >= adj.len() || j == i || !adj[j].contains(&i) {
                    return Err(Error::invalid(format!("adjacency of {i} is not symmetric")));
                }
            }
        }
        Ok(Self { adj, tau: 0.0 })
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::invalid("tau must be >= 0"));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adj
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.adj
            .iter()
            .enumerate()
            .map(|(i, a)| (a.len() as f64 + self.tau) * x[i] - a.iter().map(|&j| x[j]).sum::<f64>())
            .collect()
    }

    /// xᵀQx.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.adj[i].len() as f64 + self.tau
            } else if self.adj[i].contains(&j) {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// Component label of every element, labels in order of first element.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for root in 0..n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = next;
            let mut stack = vec![root];
            while let Some(v) = stack.pop() {
                for &w in &self.adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Laplace prior on shared-edge element adjacency.
pub fn laplace_prior(mesh: &Mesh) -> Regularizer {
    Regularizer {
        adj: mesh.element_adjacency(),
        tau: 0.0,
    }
}

/// Solves `Q̃x = b`. With τ = 0 each component is pinned at one element,
/// which gives a particular solution of `Qx = b_⊥`; removing the component
/// mean and adding back `P·b` yields `Q̃⁻¹b`.
struct PriorSolver {
    a: Skyline,
    k: Skyline,
    perm: Vec<usize>,
    label: Vec<usize>,
    sizes: Vec<usize>,
    pinned: Vec<bool>,
    tau: f64,
}

impl PriorSolver {
    fn new(q: &Regularizer) -> Result<Self> {
        let n = q.len();
        let order = rcm(&q.adj);
        let mut perm = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        let label = if q.tau > 0.0 { vec![0; n] } else { q.components() };
        let k_count = label.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0; k_count];
        let mut pinned = vec![false; n];
        let mut seen = vec![false; k_count];
        for (i, &c) in label.iter().enumerate() {
            sizes[c] += 1;
            if q.tau == 0.0 && !seen[c] {
                seen[c] = true;
                pinned[i] = true;
            }
        }
        let pairs = (0..n).flat_map(|i| q.adj[i].iter().map(move |&j| (i, j)));
        let mut a = Skyline::with_pattern(n, pairs.map(|(i, j)| (perm[i], perm[j])));
        for i in 0..n {
            if pinned[i] {
                a.add(perm[i], perm[i], 1.0);
                continue;
            }
            a.add(perm[i], perm[i], q.adj[i].len() as f64 + q.tau);
            for &j in &q.adj[i] {
                if j < i && !pinned[j] {
                    a.add(perm[i], perm[j], -1.0);
                }
            }
        }
        let mut k = a.clone();
        k.factor()?;
        Ok(Self {
            a,
            k,
            perm,
            label,
            sizes,
            pinned,
            tau: q.tau,
        })
    }

    fn component_means(&self, x: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.sizes.len()];
        for (i, &v) in x.iter().enumerate() {
            m[self.label[i]] += v;
        }
        m.iter_mut().zip(&self.sizes).for_each(|(m, &s)| *m /= s as f64);
        m
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let means = if self.tau > 0.0 {
            vec![0.0; self.sizes.len()]
        } else {
            self.component_means(b)
        };
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            if !self.pinned[i] {
                rhs[self.perm[i]] = b[i] - means[self.label[i]];
            }
        }
        let mut y = self.k.solve(&rhs);
        for _ in 0..2 {
            let r = self.a.residual(&y, &rhs);
            let d = self.k.solve(&r);
            y.iter_mut().zip(&d).for_each(|(y, d)| *y += d);
        }
        let mut x: Vec<f64> = (0..n).map(|i| y[self.perm[i]]).collect();
        if self.tau == 0.0 {
            let xm = self.component_means(&x);
            for i in 0..n {
                x[i] += means[self.label[i]] - xm[self.label[i]];
            }
        }
        x
    }

    /// Orthonormal basis of the null space of Q (empty when τ > 0).
    fn null_basis(&self) -> DMatrix<f64> {
        if self.tau > 0.0 {
            return DMatrix::zeros(self.label.len(), 0);
        }
        let mut e = DMatrix::zeros(self.label.len(), self.sizes.len());
        for (i, &c) in self.label.iter().enumerate() {
            e[(i, c)] = 1.0 / (self.sizes[c] as f64).sqrt();
        }
        e
    }
}

/// The μ-independent part of the Woodbury construction.
pub struct MapProblem {
    h: DMatrix<f64>,
    w: Vec<f64>,
    q: Regularizer,
    solver: PriorSolver,
    /// U = [Hᵀ√W | E]
    u: DMatrix<f64>,
    /// Z = Q̃⁻¹U
    z: DMatrix<f64>,
    /// UᵀZ
    g: DMatrix<f64>,
    /// ZᵀZ
    ztz: DMatrix<f64>,
    m: usize,
    pub protocol_hash: String,
}

impl MapProblem {
    /// `w` holds the diagonal of W (1 for normal rows, 0 to mask).
    pub fn new(h: DMatrix<f64>, w: Vec<f64>, q: Regularizer, protocol_hash: impl Into<String>) -> Result<Self> {
        let (m, n) = h.shape();
        if w.len() != m || q.len() != n {
            return Err(Error::invalid(format!(
                "dimension mismatch: H is {m}x{n}, W has {} entries, Q has {}",
                w.len(),
                q.len()
            )));
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("W entries must be finite and >= 0"));
        }
        let solver = PriorSolver::new(&q)?;
        let e = solver.null_basis();
        let k = e.ncols();
        let mut u = DMatrix::zeros(n, m + k);
        for r in 0..m {
            let s = w[r].sqrt();
            for c in 0..n {
                u[(c, r)] = s * h[(r, c)];
            }
        }
        u.columns_mut(m, k).copy_from(&e);
        let cols: Vec<Vec<f64>> = (0..m + k)
            .into_par_iter()
            .map(|j| solver.solve(u.column(j).as_slice()))
            .collect();
        let mut z = DMatrix::zeros(n, m + k);
        for (j, c) in cols.iter().enumerate() {
            z.column_mut(j).copy_from_slice(c);
        }
        let g = u.tr_mul(&z);
        let g = (&g + g.transpose()) * 0.5;
        let ztz = z.tr_mul(&z);
        Ok(Self {
            h,
            w,
            q,
            solver,
            u,
            z,
            g,
            ztz,
            m,
            protocol_hash: protocol_hash.into(),
        })
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn prior(&self) -> &Regularizer {
        &self.q
    }

    pub fn elements(&self) -> usize {
        self.h.ncols()
    }

    pub fn measurements(&self) -> usize {
        self.m
    }

    /// Y with B = Z·Y, from the saddle-point system S = C⁻¹ + G/μ.
    fn small_factor(&self, mu: f64) -> Result<DMatrix<f64>> {
        let m = self.m;
        let k = self.u.ncols() - m;
        let mut s = &self.g / mu;
        for i in 0..m {
            s[(i, i)] += 1.0;
        }
        for i in m..m + k {
            s[(i, i)] -= 1.0 / mu;
        }
        let mut rhs = DMatrix::zeros(m + k, m);
        for r in 0..m {
            rhs[(r, r)] = self.w[r].sqrt() / mu;
        }
        let lu = s.clone().lu();
        let mut y = lu.solve(&rhs).ok_or(Error::SingularNormalMatrix { mu })?;
        // one refinement step on the small system
        let r = &rhs - &s * &y;
        y += lu.solve(&r).ok_or(Error::SingularNormalMatrix { mu })?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularNormalMatrix { mu });
        }
        Ok(y)
    }

    /// Applies M⁻¹ = (HᵀWH + μQ)⁻¹ to the columns of `r` (elements × c).
    fn apply_inverse(&self, r: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
        let n = self.elements();
        let cols: Vec<Vec<f64>> = (0..r.ncols())
            .into_par_iter()
            .map(|j| self.solver.solve(r.column(j).as_slice()))
            .collect();
        let mut ar = DMatrix::zeros(n, r.ncols());
        for (j, c) in cols.iter().enumerate() {
            ar.column_mut(j).copy_from_slice(c);
        }
        ar /= mu;
        // M⁻¹r = A⁻¹r − A⁻¹U·S⁻¹·UᵀA⁻¹r
        let m = self.m;
        let k = self.u.ncols() - m;
        let mut s = &self.g / mu;
        for i in 0..m {
            s[(i, i)] += 1.0;
        }
        for i in m..m + k {
            s[(i, i)] -= 1.0 / mu;
        }
        let t = s.lu().solve(&self.u.tr_mul(&ar)).ok_or(Error::SingularNormalMatrix { mu })?;
        Ok(ar - (&self.z / mu) * t)
    }

    /// M·x for a matrix of element vectors.
    fn normal_mul(&self, x: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
        let mut hx = &self.h * x;
        for (r, mut row) in hx.row_iter_mut().enumerate() {
            row *= self.w[r];
        }
        let mut out = self.h.tr_mul(&hx);
        for j in 0..x.ncols() {
            let qx = self.q.mul(x.column(j).as_slice());
            for (o, v) in out.column_mut(j).iter_mut().zip(qx) {
                *o += mu * v;
            }
        }
        out
    }

    fn htw(&self) -> DMatrix<f64> {
        let mut t = self.h.transpose();
        for (r, mut col) in t.column_iter_mut().enumerate() {
            col *= self.w[r];
        }
        t
    }

    /// Builds the reconstructor, with one step of iterative refinement on B.
    pub fn reconstructor(&self, mu: f64) -> Result<Reconstructor> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::invalid("mu must be > 0"));
        }
        let y = self.small_factor(mu)?;
        let mut b = &self.z * y;
        let resid = self.htw() - self.normal_mul(&b, mu);
        b += self.apply_inverse(&resid, mu)?;
        Ok(Reconstructor {
            b,
            mu,
            w: self.w.clone(),
            protocol_hash: self.protocol_hash.clone(),
        })
    }

    /// ‖(HᵀWH + μQ)x − HᵀWΔV‖ / ‖HᵀWΔV‖.
    pub fn normal_residual(&self, x: &[f64], dv: &[f64], mu: f64) -> f64 {
        let xm = DMatrix::from_column_slice(x.len(), 1, x);
        let lhs = self.normal_mul(&xm, mu);
        let wdv = DVector::from_iterator(dv.len(), dv.iter().zip(&self.w).map(|(v, w)| v * w));
        let rhs = self.h.tr_mul(&wdv);
        (lhs.column(0) - &rhs).norm() / rhs.norm()
    }

    /// NF at μ for reference perturbation `target`, without forming B.
    pub fn noise_figure(&self, mu: f64, target: &[f64]) -> Result<f64> {
        let y = self.small_factor(mu)?;
        let signal = &self.h * DVector::from_column_slice(target);
        let image = &self.z * (&y * &signal);
        // ‖B‖_F² = tr(Yᵀ·ZᵀZ·Y)
        let frob2 = (y.transpose() * &self.ztz * &y).trace();
        nf_from_parts(&signal, &image, frob2.max(0.0).sqrt(), self.elements())
    }

    /// Default search scale tr(HᵀWH)/tr(Q).
    pub fn mu_scale(&self) -> f64 {
        let hwh: f64 = self
            .h
            .row_iter()
            .zip(&self.w)
            .map(|(r, w)| w * r.norm_squared())
            .sum();
        let trq: f64 = self.q.adj.iter().map(|a| a.len() as f64 + self.q.tau).sum();
        hwh / trq
    }
}

fn nf_from_parts(signal: &DVector<f64>, image: &DVector<f64>, frob: f64, n: usize) -> Result<f64> {
    let mean = |v: &DVector<f64>| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let sv = mean(signal);
    let si = mean(image);
    if sv == 0.0 || si == 0.0 {
        return Err(Error::ZeroSignal("reference perturbation produces no signal".into()));
    }
    Ok(sv * frob / ((n as f64).sqrt() * si))
}

/// Immutable reconstruction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructor {
    /// elements × measurements
    pub b: DMatrix<f64>,
    pub mu: f64,
    pub w: Vec<f64>,
    pub protocol_hash: String,
}

impl Reconstructor {
    /// Dense construction for small systems; `q = None` gives the
    /// unregularized least-squares estimate.
    pub fn dense(h: &DMatrix<f64>, w: &[f64], q: Option<&DMatrix<f64>>, mu: f64, protocol_hash: &str) -> Result<Self> {
        let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
        let htw = h.transpose() * wm;
        let mut m = &htw * h;
        if let Some(q) = q {
            m += q * mu;
        }
        let b = m.lu().solve(&htw).ok_or(Error::SingularNormalMatrix { mu })?;
        Ok(Self {
            b,
            mu,
            w: w.to_vec(),
            protocol_hash: protocol_hash.to_string(),
        })
    }

    pub fn elements(&self) -> usize {
        self.b.nrows()
    }

    pub fn apply(&self, dv: &[f64]) -> Result<ConductivityImage> {
        if dv.len() != self.b.ncols() {
            return Err(Error::invalid(format!(
                "expected {} measurements, got {}",
                self.b.ncols(),
                dv.len()
            )));
        }
        let x = &self.b * DVector::from_column_slice(dv);
        Ok(ConductivityImage {
            delta_sigma: x.as_slice().to_vec(),
        })
    }

    /// Δσ = B·(V₁ − V₀).
    pub fn reconstruct(&self, frame0: &Frame, frame1: &Frame) -> Result<ConductivityImage> {
        frame0.check_protocol(&self.protocol_hash)?;
        let dv = frame1.difference(frame0)?;
        self.apply(&dv)
    }

    /// NF with the propagated-noise definition, from the stored B.
    pub fn noise_figure(&self, h: &DMatrix<f64>, target: &[f64], noise_std: f64) -> Result<f64> {
        if !(noise_std > 0.0) {
            return Err(Error::invalid("noise_std must be > 0"));
        }
        let signal = h * DVector::from_column_slice(target);
        let image = &self.b * &signal;
        let snr_v = signal.iter().map(|x| x.abs()).sum::<f64>() / signal.len() as f64 / noise_std;
        let n = self.b.nrows();
        let img_noise = noise_std * self.b.norm() / (n as f64).sqrt();
        let mean_img = image.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        if snr_v == 0.0 || mean_img == 0.0 {
            return Err(Error::ZeroSignal("reference perturbation produces no signal".into()));
        }
        Ok(snr_v / (mean_img / img_noise))
    }
}

/// W with rows touching any faulty electrode set to zero.
pub fn electrode_mask(protocol: &Protocol, faulty: &[usize]) -> Vec<f64> {
    protocol
        .drives
        .iter()
        .flat_map(|d| {
            let driven = faulty.contains(&d.pattern.source) || faulty.contains(&d.pattern.sink);
            d.measurements
                .iter()
                .map(move |(p, m)| if driven || faulty.contains(p) || faulty.contains(m) { 0.0 } else { 1.0 })
        })
        .collect()
}

/// Point target: a unit perturbation on the element nearest the mesh
/// bounding-box center.
pub fn central_target(mesh: &Mesh) -> Vec<f64> {
    let bb = crate::geometry::BoundingBox::of_points(mesh.nodes()).expect("mesh has nodes");
    let c = bb.center();
    let best = (0..mesh.element_count())
        .min_by(|&a, &b| {
            mesh.element_centroid(a)
                .dist(c)
                .total_cmp(&mesh.element_centroid(b).dist(c))
        })
        .expect("mesh has elements");
    let mut t = vec![0.0; mesh.element_count()];
    t[best] = 1.0;
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuSelection {
    pub mu: f64,
    pub nf: f64,
    /// (μ, NF) at every evaluation, in order
    pub trace: Vec<(f64, f64)>,
}

/// Bisection on log μ for NF(μ) = target within `tol`.
pub fn select_mu(problem: &MapProblem, target: &[f64], nf_target: f64, bracket: [f64; 2], tol: f64) -> Result<MuSelection> {
    let [mut lo, mut hi] = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("mu bracket must satisfy 0 < lo < hi"));
    }
    let mut trace = Vec::new();
    let eval = |mu: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let nf = problem.noise_figure(mu, target)?;
        trace.push((mu, nf));
        Ok(nf)
    };
    let nf_lo = eval(lo, &mut trace)?;
    let nf_hi = eval(hi, &mut trace)?;
    if !(nf_lo > nf_target && nf_hi < nf_target) {
        return Err(Error::BracketNoStraddle { nf_lo, nf_hi });
    }
    for _ in 0..100 {
        let mid = (lo.ln() * 0.5 + hi.ln() * 0.5).exp();
        let nf = eval(mid, &mut trace)?;
        if (nf - nf_target).abs() <= tol {
            return Ok(MuSelection { mu: mid, nf, trace });
        }
        if nf > nf_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BracketNoStraddle { nf_lo, nf_hi })
}

/// Per-element Δσ, S/m.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityImage {
    pub delta_sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Indicators {
    /// most negative element and |Δσ| there
    pub min_element: Option<usize>,
    pub min_magnitude: f64,
    /// |Δσ| / frame max, in [0, 1]
    pub normalized: Vec<f64>,
    /// max|Δσ| / reference_max
    pub amplitude: f64,
    pub log_amplitude: f64,
    pub all_zero: bool,
}

impl ConductivityImage {
    pub fn len(&self) -> usize {
        self.delta_sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_sigma.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.delta_sigma.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Most negative element, if any value is negative.
    pub fn min_element(&self) -> Option<usize> {
        self.delta_sigma
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    pub fn indicators(&self, reference_max: f64) -> Result<Indicators> {
        if !(reference_max > 0.0) {
            return Err(Error::invalid("reference_max must be > 0"));
        }
        let max = self.max_abs();
        if max == 0.0 {
            return Ok(Indicators {
                min_element: None,
                min_magnitude: 0.0,
                normalized: vec![0.0; self.len()],
                amplitude: 0.0,
                log_amplitude: 0.0,
                all_zero: true,
            });
        }
        let min_element = self.min_element();
        let amplitude = max / reference_max;
        Ok(Indicators {
            min_element,
            min_magnitude: min_element.map_or(0.0, |e| -self.delta_sigma[e]),
            normalized: self.delta_sigma.iter().map(|v| v.abs() / max).collect(),
            amplitude,
            log_amplitude: amplitude.log10(),
            all_zero: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_prior(n: usize) -> Regularizer {
        let adj = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        Regularizer::from_adjacency(adj).unwrap()
    }

    fn toy_h(m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |r, c| ((r * 7 + c * 3) as f64 * 0.37).sin() - 0.3 + 0.05 * c as f64)
    }

    #[test]
    fn two_element_prior() {
        let q = path_prior(2);
        assert_eq!(q.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(q.mul(&[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn woodbury_matches_dense() {
        let h = toy_h(12, 30);
        let q = path_prior(30);
        let mu = 0.7;
        let p = MapProblem::new(h.clone(), vec![1.0; 12], q.clone(), "x").unwrap();
        let rec = p.reconstructor(mu).unwrap();
        let dense = Reconstructor::dense(&h, &[1.0; 12], Some(&q.to_dense()), mu, "x").unwrap();
        let err = (&rec.b - &dense.b).amax() / dense.b.amax();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn disconnected_prior_components() {
        // two path components: 0-1-2 and 3-4
        let adj = vec![vec![1], vec![0, 2], vec![1], vec![4], vec![3]];
        let q = Regularizer::from_adjacency(adj).unwrap();
        assert_eq!(q.components(), vec![0, 0, 0, 1, 1]);
        let h = toy_h(6, 5);
        let p = MapProblem::new(h.clone(), vec![1.0; 6], q.clone(), "x").unwrap();
        let rec = p.reconstructor(0.3).unwrap();
        let dense = Reconstructor::dense(&h, &[1.0; 6], Some(&q.to_dense()), 0.3, "x").unwrap();
        assert!((&rec.b - &dense.b).amax() < 1e-10 * dense.b.amax());
    }

    #[test]
    fn residual_and_zero_input() {
        let h = toy_h(20, 40);
        let p = MapProblem::new(h, vec![1.0; 20], path_prior(40), "x").unwrap();
        let rec = p.reconstructor(0.05).unwrap();
        let dv: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let x = rec.apply(&dv).unwrap();
        assert!(p.normal_residual(&x.delta_sigma, &dv, 0.05) < 1e-10);
        assert!(rec.apply(&[0.0; 20]).unwrap().delta_sigma.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn orthogonal_columns_recover_exactly_without_prior() {
        // H = first 3 columns of the identity (orthogonal), Q absent
        let h = DMatrix::from_fn(5, 3, |r, c| if r == c { 2.0 } else { 0.0 });
        let rec = Reconstructor::dense(&h, &[1.0; 5], None, 1.0, "x").unwrap();
        let truth = DVector::from_column_slice(&[0.5, -1.0, 3.0]);
        let dv = &h * &truth;
        let x = rec.apply(dv.as_slice()).unwrap();
        for (a, b) in x.delta_sigma.iter().zip(truth.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn masking_equals_reduced_system() {
        let h = toy_h(10, 8);
        let q = path_prior(8).with_tau(0.1).unwrap();
        let mut w = vec![1.0; 10];
        w[3] = 0.0;
        w[7] = 0.0;
        let masked = MapProblem::new(h.clone(), w, q.clone(), "x").unwrap().reconstructor(0.2).unwrap();
        let keep: Vec<usize> = (0..10).filter(|r| *r != 3 && *r != 7).collect();
        let hr = h.select_rows(&keep);
        let reduced = MapProblem::new(hr, vec![1.0; 8], q, "x").unwrap().reconstructor(0.2).unwrap();
        let dv: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        let dvr: Vec<f64> = keep.iter().map(|&r| dv[r]).collect();
        let a = masked.apply(&dv).unwrap().delta_sigma;
        let b = reduced.apply(&dvr).unwrap().delta_sigma;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn noise_figure_agrees_with_explicit_b() {
        let h = toy_h(15, 25);
        let p = MapProblem::new(h.clone(), vec![1.0; 15], path_prior(25), "x").unwrap();
        let mut t = vec![0.0; 25];
        t[12] = 1.0;
        for mu in [1e-3, 1e-1, 10.0] {
            let fast = p.noise_figure(mu, &t).unwrap();
            let rec = p.reconstructor(mu).unwrap();
            let slow = rec.noise_figure(&h, &t, 1e-3).unwrap();
            // the fast path skips the refinement step applied to B
            assert!((fast - slow).abs() < 1e-4 * slow, "{mu}: {fast} {slow}");
            let doubled = rec.noise_figure(&h, &t, 2e-3).unwrap();
            assert!((doubled - slow).abs() < 1e-14 * slow);
        }
    }

    #[test]
    fn indicators_of_single_negative_element() {
        let img = ConductivityImage {
            delta_sigma: vec![0.0, 1.0, -5.0, 2.0],
        };
        let ind = img.indicators(5.0).unwrap();
        assert_eq!(ind.min_element, Some(2));
        assert_eq!(ind.min_magnitude, 5.0);
        assert_eq!(ind.normalized, vec![0.0, 0.2, 1.0, 0.4]);
        assert_eq!(ind.log_amplitude, 0.0);
        let zero = ConductivityImage { delta_sigma: vec![0.0; 3] };
        assert!(zero.indicators(1.0).unwrap().all_zero);
    }
}
