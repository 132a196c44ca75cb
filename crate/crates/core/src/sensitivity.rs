//! Measurement Jacobian and the column-norm sensitivity metric.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{run_protocol, ConductivityField, FEModel, Protocol};
use crate::lattice::{generate, LatticeDesign};
use crate::pipeline::SolverSetup;

/// ∂(measurement)/∂σ_e, rows in protocol order, one column per element.
/// Units V per (S/m).
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub protocol_hash: String,
}

impl Jacobian {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Unit-current fields: `g[k]` solves the grounded system with 1 A
/// injected at electrode `k`. Drive fields and adjoint fields are both
/// differences of these.
fn unit_fields(model: &FEModel, sigma: &ConductivityField) -> Result<Vec<Vec<f64>>> {
    let sys = model.factor(sigma)?;
    let l = model.electrode_count();
    Ok((0..l)
        .into_par_iter()
        .map(|k| {
            let mut i = vec![0.0; l];
            i[k] = 1.0;
            sys.solve(&i).dof_vector()
        })
        .collect())
}

/// Adjoint Jacobian. For drive d with field `u_d` and measurement
/// `V(p) − V(m)` with adjoint field `w = g_p − g_m`,
/// `H[r, e] = −wᵀ·K̂_e·u_d`.
pub fn jacobian(model: &FEModel, sigma: &ConductivityField, protocol: &Protocol) -> Result<Jacobian> {
    if protocol.electrodes != model.electrode_count() {
        return Err(Error::invalid("protocol and model disagree on electrode count"));
    }
    let g = unit_fields(model, sigma)?;
    let l = model.electrode_count();
    let rows = protocol.rows();
    let drives: Vec<(usize, usize, f64)> = protocol
        .drives
        .iter()
        .map(|d| (d.pattern.source, d.pattern.sink, d.pattern.current))
        .collect();
    let cols: Vec<Vec<f64>> = model
        .locals()
        .par_iter()
        .map(|lm| {
            let n = lm.len;
            // a[k][j] = (K̂_e · g_k)_j restricted to the element
            let mut gk = vec![[0.0; 5]; l];
            for (k, gk) in gk.iter_mut().enumerate() {
                for (j, v) in gk.iter_mut().take(n).enumerate() {
                    *v = g[k][lm.dofs[j]];
                }
            }
            // m[a][b] = g_aᵀ K̂_e g_b
            let mut m = vec![0.0; l * l];
            for a in 0..l {
                let mut kg = [0.0; 5];
                for i in 0..n {
                    kg[i] = (0..n).map(|j| lm.m[i][j] * gk[a][j]).sum();
                }
                for b in 0..l {
                    m[a * l + b] = (0..n).map(|i| kg[i] * gk[b][i]).sum();
                }
            }
            rows.iter()
                .map(|&(d, p, q)| {
                    let (s, t, cur) = drives[d];
                    let f = |a: usize| m[a * l + s] - m[a * l + t];
                    -cur * (f(p) - f(q))
                })
                .collect()
        })
        .collect();
    let mut h = DMatrix::zeros(rows.len(), cols.len());
    for (e, c) in cols.iter().enumerate() {
        h.column_mut(e).copy_from_slice(c);
    }
    Ok(Jacobian {
        matrix: h,
        protocol_hash: protocol.hash(),
    })
}

/// Central-difference Jacobian, `2·elements` protocol runs. Test oracle for
/// small meshes.
pub fn jacobian_fd(model: &FEModel, sigma: &ConductivityField, protocol: &Protocol, delta: f64) -> Result<Jacobian> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be > 0"));
    }
    let ne = model.element_count();
    let cols: Vec<Vec<f64>> = (0..ne)
        .into_par_iter()
        .map(|e| {
            let mut plus = sigma.clone();
            plus.0[e] += delta;
            let mut minus = sigma.clone();
            minus.0[e] -= delta;
            let vp = run_protocol(model, &plus, protocol)?.voltages;
            let vm = run_protocol(model, &minus, protocol)?.voltages;
            Ok(vp.iter().zip(&vm).map(|(a, b)| (a - b) / (2.0 * delta)).collect())
        })
        .collect::<Result<_>>()?;
    let mut h = DMatrix::zeros(protocol.measurement_count(), ne);
    for (e, c) in cols.iter().enumerate() {
        h.column_mut(e).copy_from_slice(c);
    }
    Ok(Jacobian {
        matrix: h,
        protocol_hash: protocol.hash(),
    })
}

/// max |a − b| / max(|b|, floor) over entries, with `floor = 1e-6·max|b|`
/// so entries that vanish in the reference do not dominate.
pub fn max_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let floor = 1e-6 * b.amax();
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityStats {
    pub mean: f64,
    pub p25: f64,
    pub min: f64,
    pub max: f64,
}

/// `s_e = ‖column e of H‖₂ / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    pub values: Vec<f64>,
    pub measurements: usize,
    pub stats: SensitivityStats,
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn sensitivity_map(h: &DMatrix<f64>, n: usize) -> Result<SensitivityMap> {
    if n != h.nrows() || n == 0 || h.ncols() == 0 {
        return Err(Error::invalid(format!(
            "N = {n} must equal the row count {} of a non-empty Jacobian",
            h.nrows()
        )));
    }
    let values: Vec<f64> = h.column_iter().map(|c| c.norm() / n as f64).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let stats = SensitivityStats {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        p25: percentile(&sorted, 0.25),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    };
    Ok(SensitivityMap {
        values,
        measurements: n,
        stats,
    })
}

#[derive(Debug)]
pub struct DesignReport {
    pub name: String,
    pub elements: usize,
    pub measurements: usize,
    pub outcome: Result<SensitivityStats>,
}

/// Full pipeline per design under one solver setup. Failures are reported
/// per design. Successful rows come first, sorted by decreasing mean.
pub fn compare_designs(designs: &[LatticeDesign], setup: &SolverSetup) -> Result<Vec<DesignReport>> {
    if designs.len() < 2 {
        return Err(Error::invalid("compare_designs needs at least two designs"));
    }
    let protocol = setup.protocol()?;
    let mut reports: Vec<DesignReport> = designs
        .iter()
        .map(|d| {
            let mut elements = 0;
            let outcome = (|| {
                let lattice = generate(d)?;
                let model = setup.model(&lattice.region)?;
                elements = model.element_count();
                let h = jacobian(&model, &model.uniform_sigma(), &protocol)?;
                Ok(sensitivity_map(&h.matrix, h.rows())?.stats)
            })();
            DesignReport {
                name: d.name.clone(),
                elements,
                measurements: protocol.measurement_count(),
                outcome,
            }
        })
        .collect();
    reports.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => y.mean.total_cmp(&x.mean),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => std::cmp::Ordering::Equal,
    });
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{ForwardConfig, Scheme};
    use crate::geometry::{PlanarRegion, Point, Polygon};
    use crate::mesh::{place_electrodes, triangulate, ElectrodeSpec};

    fn small_model() -> FEModel {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(30.0, 20.0)));
        let mesh = triangulate(&r, 4.0).unwrap();
        let spec = ElectrodeSpec {
            count: 8,
            contact_length: 3.0,
            ..Default::default()
        };
        let el = place_electrodes(&mesh, &spec).unwrap();
        FEModel::new(mesh, el, ForwardConfig::default()).unwrap()
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let m = small_model();
        let p = Protocol::new(Scheme::Adjacent, 8, 1e-3).unwrap();
        let sigma = m.uniform_sigma();
        let h = jacobian(&m, &sigma, &p).unwrap();
        let fd = jacobian_fd(&m, &sigma, &p, 1e-6).unwrap();
        let err = max_relative_error(&h.matrix, &fd.matrix);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn scaling_identity() {
        let m = small_model();
        let p = Protocol::new(Scheme::Across { offset: 3 }, 8, 1e-3).unwrap();
        let sigma = m.uniform_sigma().scaled(2.5);
        let h = jacobian(&m, &sigma, &p).unwrap();
        let v = run_protocol(&m, &sigma, &p).unwrap().voltages;
        let row_sums = h.matrix.column_sum();
        for (s, v) in row_sums.iter().zip(&v) {
            assert!((s + v / 2.5).abs() <= 1e-8 * v.abs(), "{s} {v}");
        }
    }

    #[test]
    fn map_of_single_column() {
        let mut h = DMatrix::zeros(1, 3);
        h[(0, 1)] = -4.0;
        let s = sensitivity_map(&h, 1).unwrap();
        assert_eq!(s.values, vec![0.0, 4.0, 0.0]);
        let mut h2 = DMatrix::zeros(4, 2);
        h2[(2, 0)] = 3.0;
        h2[(3, 0)] = 4.0;
        assert_eq!(sensitivity_map(&h2, 4).unwrap().values[0], 5.0 / 4.0);
        assert!(sensitivity_map(&h2, 3).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.25), 1.0);
        assert_eq!(percentile(&[0.0, 4.0], 0.25), 1.0);
    }
}
