//! Simulated damage sequences and the scalar metrics derived from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fem::{driving_point_resistances, run_protocol, ConductivityField, FEModel, Frame, Protocol};
use crate::geometry::{point_segment_distance, segment_hits_triangle, PlanarRegion, Point};
use crate::mesh::Mesh;
use crate::reconstruction::ConductivityImage;

/// Conductivity floor as a fraction of σ₀.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            a: Point::new(x1, y1),
            b: Point::new(x2, y2),
        }
    }

    pub fn distance(&self, p: Point) -> f64 {
        point_segment_distance(p, self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DamageTarget {
    Cut(Segment),
    Elements(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageStep {
    pub target: DamageTarget,
    /// σ_e is multiplied by this, then floored at `SIGMA_FLOOR·σ₀`.
    pub multiplier: f64,
    pub strain: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DamageScenario {
    pub steps: Vec<DamageStep>,
    /// g in the optional global law σ(ε) = σ/(1 + g·ε)
    pub piezo: f64,
}

impl DamageScenario {
    pub fn validate(&self) -> Result<()> {
        let mut last = 0.0;
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.multiplier > 0.0 && s.multiplier <= 1.0) {
                return Err(Error::invalid(format!("step {i}: multiplier must lie in (0, 1]")));
            }
            if !(s.strain >= last) {
                return Err(Error::invalid(format!("step {i}: strain tags must be nondecreasing from 0")));
            }
            last = s.strain;
        }
        if !self.piezo.is_finite() {
            return Err(Error::invalid("piezo coefficient must be finite"));
        }
        Ok(())
    }

    /// Parses the line format
    ///
    /// ```text
    /// # comment
    /// piezo 2.0
    /// cut 10 20 12 20 mult 1e-6 strain 0.01
    /// elements 4 5 6 mult 0.5 strain 0.02
    /// ```
    ///
    /// `mult` defaults to the conductivity floor and `strain` to the
    /// previous step's strain.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = DamageScenario::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tok: Vec<&str> = body.split_whitespace().collect();
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line, format!("expected a number, found `{s}`")))
            };
            match tok[0] {
                "piezo" => {
                    if tok.len() != 2 {
                        return Err(Error::parse(line, "usage: piezo <g>"));
                    }
                    out.piezo = num(tok[1])?;
                }
                kind @ ("cut" | "elements") => {
                    let split = tok.iter().position(|t| *t == "mult" || *t == "strain").unwrap_or(tok.len());
                    let args = &tok[1..split];
                    let target = if kind == "cut" {
                        if args.len() != 4 {
                            return Err(Error::parse(line, "usage: cut x1 y1 x2 y2 [mult m] [strain e]"));
                        }
                        DamageTarget::Cut(Segment::new(num(args[0])?, num(args[1])?, num(args[2])?, num(args[3])?))
                    } else {
                        let ids = args
                            .iter()
                            .map(|a| a.parse::<usize>().map_err(|_| Error::parse(line, format!("bad element id `{a}`"))))
                            .collect::<Result<Vec<_>>>()?;
                        if ids.is_empty() {
                            return Err(Error::parse(line, "elements needs at least one id"));
                        }
                        DamageTarget::Elements(ids)
                    };
                    let mut multiplier = SIGMA_FLOOR;
                    let mut strain = out.steps.last().map_or(0.0, |s| s.strain);
                    let mut rest = tok[split..].iter();
                    while let Some(key) = rest.next() {
                        let v = rest
                            .next()
                            .ok_or_else(|| Error::parse(line, format!("`{key}` needs a value")))?;
                        match *key {
                            "mult" => multiplier = num(v)?,
                            "strain" => strain = num(v)?,
                            other => return Err(Error::parse(line, format!("unknown key `{other}`"))),
                        }
                    }
                    out.steps.push(DamageStep {
                        target,
                        multiplier,
                        strain,
                    });
                }
                other => return Err(Error::parse(line, format!("unknown directive `{other}`"))),
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.piezo != 0.0 {
            s.push_str(&format!("piezo {}\n", self.piezo));
        }
        for st in &self.steps {
            match &st.target {
                DamageTarget::Cut(c) => s.push_str(&format!("cut {} {} {} {}", c.a.x, c.a.y, c.b.x, c.b.y)),
                DamageTarget::Elements(ids) => {
                    s.push_str("elements");
                    for i in ids {
                        s.push_str(&format!(" {i}"));
                    }
                }
            }
            s.push_str(&format!(" mult {:e} strain {}\n", st.multiplier, st.strain));
        }
        s
    }
}

/// Elements whose closed triangle touches the segment.
pub fn cut_elements(mesh: &Mesh, cut: &Segment) -> Vec<usize> {
    (0..mesh.element_count())
        .filter(|&e| segment_hits_triangle(cut.a, cut.b, mesh.vertices_of(e)))
        .collect()
}

pub fn step_elements(mesh: &Mesh, step: &DamageStep) -> Result<Vec<usize>> {
    let els = match &step.target {
        DamageTarget::Cut(c) => cut_elements(mesh, c),
        DamageTarget::Elements(ids) => {
            if let Some(bad) = ids.iter().find(|&&i| i >= mesh.element_count()) {
                return Err(Error::invalid(format!("element {bad} out of range")));
            }
            ids.clone()
        }
    };
    if els.is_empty() {
        return Err(Error::EmptyDamage);
    }
    Ok(els)
}

/// Returns a new field with the step's elements scaled and floored.
pub fn apply_damage(sigma: &ConductivityField, mesh: &Mesh, step: &DamageStep, sigma0: f64) -> Result<ConductivityField> {
    let mut out = sigma.clone();
    for e in step_elements(mesh, step)? {
        out.0[e] = (out.0[e] * step.multiplier).max(SIGMA_FLOOR * sigma0);
    }
    Ok(out)
}

/// Baseline field followed by the cumulative field after each step, with
/// the global strain law applied.
pub fn damage_fields(model: &FEModel, scenario: &DamageScenario) -> Result<Vec<(f64, ConductivityField)>> {
    scenario.validate()?;
    let sigma0 = model.config.sigma0;
    let mut damaged = model.uniform_sigma();
    let mut out = vec![(0.0, damaged.clone())];
    for step in &scenario.steps {
        damaged = apply_damage(&damaged, &model.mesh, step, sigma0)?;
        let scale = 1.0 / (1.0 + scenario.piezo * step.strain);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!("strain law gives non-positive conductivity at ε = {}", step.strain)));
        }
        out.push((step.strain, damaged.scaled(scale)));
    }
    Ok(out)
}

/// Noise std (V) for a relative level: `noise_std × mean|V|`.
pub fn absolute_noise(baseline: &Frame, noise_std: f64) -> f64 {
    noise_std * baseline.voltages.iter().map(|v| v.abs()).sum::<f64>() / baseline.len() as f64
}

/// Adds iid Gaussian noise of std `abs_std` to every frame, in order.
pub fn add_noise(frames: &mut [Frame], abs_std: f64, seed: u64) -> Result<()> {
    if abs_std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, abs_std).map_err(|e| Error::invalid(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for f in frames {
        for v in &mut f.voltages {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(())
}

/// Baseline frame at ε = 0, then one frame per cumulative damage step.
pub fn simulate_sequence(
    model: &FEModel,
    scenario: &DamageScenario,
    protocol: &Protocol,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<Frame>> {
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be >= 0"));
    }
    let mut frames = damage_fields(model, scenario)?
        .into_iter()
        .map(|(strain, sigma)| {
            let mut f = run_protocol(model, &sigma, protocol)?;
            f.strain = strain;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let std = absolute_noise(&frames[0], noise_std);
    add_noise(&mut frames, std, seed)?;
    Ok(frames)
}

/// Σ of driving-point relative resistance changes after each step, relative
/// to the baseline (first entry is 0).
pub fn driving_point_series(model: &FEModel, scenario: &DamageScenario, protocol: &Protocol) -> Result<Vec<f64>> {
    let fields = damage_fields(model, scenario)?;
    let base = driving_point_resistances(model, &fields[0].1, protocol)?;
    fields
        .iter()
        .map(|(_, s)| {
            let r = driving_point_resistances(model, s, protocol)?;
            Ok(r.iter().zip(&base).map(|(r, r0)| (r - r0) / r0).sum())
        })
        .collect()
}

fn slope_through_origin(x: &[f64], y: &[f64]) -> Result<f64> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("degenerate series: all strains are zero"));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

/// Slope of (R − R₀)/R₀ against ε by least squares through the origin.
/// `strains[0]` must be 0 (the reference); `upto` limits the fit to the
/// first `upto` points after it.
pub fn gauge_factor(strains: &[f64], resistances: &[f64], upto: Option<usize>) -> Result<f64> {
    if strains.len() != resistances.len() || strains.len() < 2 {
        return Err(Error::invalid("series must have equal length >= 2"));
    }
    if strains[0] != 0.0 {
        return Err(Error::invalid("first strain must be the zero reference"));
    }
    let end = upto.map_or(strains.len(), |u| (u + 1).min(strains.len()));
    let r0 = resistances[0];
    let y: Vec<f64> = resistances[1..end].iter().map(|r| (r - r0) / r0).collect();
    slope_through_origin(&strains[1..end], &y)
}

/// Σ over channels of relative change of each frame against the first.
pub fn summed_relative_change(frames: &[Frame]) -> Result<Vec<f64>> {
    let base = frames.first().ok_or_else(|| Error::invalid("no frames"))?;
    frames
        .iter()
        .map(|f| {
            f.check_protocol(&base.protocol_hash)?;
            Ok(f.voltages
                .iter()
                .zip(&base.voltages)
                .map(|(v, v0)| (v - v0) / v0)
                .sum())
        })
        .collect()
}

/// Slope of the summed channel-wise relative resistance change against ε.
/// Resistances are V/I with fixed I, so the relative change of V is used.
pub fn effective_gauge_factor(frames: &[Frame]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::invalid("need at least two frames"));
    }
    if frames[0].strain != 0.0 {
        return Err(Error::invalid("first frame must be the zero-strain reference"));
    }
    let y = summed_relative_change(frames)?;
    let x: Vec<f64> = frames.iter().map(|f| f.strain).collect();
    slope_through_origin(&x[1..], &y[1..])
}

/// Distance from the area-weighted centroid of the top 1% most negative
/// elements to the nearest point of the cut.
pub fn localization_error(img: &ConductivityImage, mesh: &Mesh, cut: &Segment) -> Result<f64> {
    Ok(cut.distance(hotspot(img, mesh)?))
}

/// Area-weighted centroid of the ceil(1%) elements with the most negative Δσ.
pub fn hotspot(img: &ConductivityImage, mesh: &Mesh) -> Result<Point> {
    if img.len() != mesh.element_count() {
        return Err(Error::invalid("image and mesh sizes differ"));
    }
    let mut neg: Vec<usize> = (0..img.len()).filter(|&e| img.delta_sigma[e] < 0.0).collect();
    if neg.is_empty() {
        return Err(Error::ZeroSignal("image has no negative elements".into()));
    }
    neg.sort_by(|&a, &b| img.delta_sigma[a].total_cmp(&img.delta_sigma[b]).then(a.cmp(&b)));
    let take = (img.len() as f64 * 0.01).ceil().max(1.0) as usize;
    let (mut sx, mut sy, mut sa) = (0.0, 0.0, 0.0);
    for &e in neg.iter().take(take) {
        let a = mesh.element_area(e);
        let c = mesh.element_centroid(e);
        sx += a * c.x;
        sy += a * c.y;
        sa += a;
    }
    Ok(Point::new(sx / sa, sy / sa))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionGroup {
    pub drive: usize,
    pub source: usize,
    pub sink: usize,
    /// (sense+, sense−, R, R − R_ref)
    pub rows: Vec<(usize, usize, f64, f64)>,
}

/// Measurements grouped by drive, with deltas against a reference frame.
pub fn resistance_by_injection(frame: &Frame, reference: &Frame, protocol: &Protocol) -> Result<Vec<InjectionGroup>> {
    frame.check_protocol(&protocol.hash())?;
    reference.check_protocol(&protocol.hash())?;
    let mut k = 0;
    Ok(protocol
        .drives
        .iter()
        .enumerate()
        .map(|(d, drive)| {
            let rows = drive
                .measurements
                .iter()
                .map(|&(p, m)| {
                    let r = frame.voltages[k] / frame.current;
                    let r0 = reference.voltages[k] / reference.current;
                    k += 1;
                    (p, m, r, r - r0)
                })
                .collect();
            InjectionGroup {
                drive: d,
                source: drive.pattern.source,
                sink: drive.pattern.sink,
                rows,
            }
        })
        .collect())
}

/// Shortest chord through `p` across the material, extended by `margin`
/// at both ends: a cut that severs the ligament containing `p`.
pub fn ligament_cut(region: &PlanarRegion, p: Point, margin: f64) -> Option<Segment> {
    if !region.contains(p) {
        return None;
    }
    let step = 0.02;
    let reach = |d: Point| {
        let mut t = 0.0;
        while t < 50.0 && region.contains(p + d * (t + step)) {
            t += step;
        }
        t + step
    };
    (0..180)
        .map(|k| {
            let a = (k as f64).to_radians();
            let d = Point::new(a.cos(), a.sin());
            let (t1, t2) = (reach(d), reach(d * -1.0));
            (t1 + t2, d, t1, t2)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, d, t1, t2)| Segment {
            a: p + d * -(t2 + margin),
            b: p + d * (t1 + margin),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{DrivePattern, ForwardConfig, Scheme};
    use crate::geometry::Polygon;
    use crate::mesh::{place_electrodes, triangulate, ElectrodeSpec};

    fn frame(v: Vec<f64>, strain: f64) -> Frame {
        Frame {
            protocol_hash: "p".into(),
            scheme: "adjacent".into(),
            electrodes: 4,
            current: 1e-3,
            strain,
            rows: vec![],
            voltages: v,
        }
    }

    #[test]
    fn gauge_factor_arithmetic() {
        assert!((gauge_factor(&[0.0, 0.1], &[100.0, 110.0], None).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(gauge_factor(&[0.0, 0.1, 0.2], &[5.0, 5.0, 5.0], None).unwrap(), 0.0);
        assert!(gauge_factor(&[0.0, 0.0], &[1.0, 2.0], None).is_err());
        // fit range stops before the outlier
        let gf = gauge_factor(&[0.0, 0.1, 0.2, 0.3], &[1.0, 1.1, 1.2, 9.0], Some(2)).unwrap();
        assert!((gf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_frames_have_zero_gf_e() {
        let f = vec![frame(vec![1.0, -2.0], 0.0), frame(vec![1.0, -2.0], 0.1)];
        assert_eq!(effective_gauge_factor(&f).unwrap(), 0.0);
    }

    #[test]
    fn scenario_text_round_trip() {
        let s = DamageScenario::parse("# test\npiezo 2\ncut 1 2 3 4 strain 0.01\nelements 5 6 mult 0.5 strain 0.02\n")
            .unwrap();
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.steps[0].multiplier, SIGMA_FLOOR);
        assert_eq!(DamageScenario::parse(&s.to_text()).unwrap(), s);
        assert!(matches!(DamageScenario::parse("cut 1 2 3"), Err(Error::Parse { line: 1, .. })));
        assert!(DamageScenario::parse("cut 0 0 1 1 strain 0.2\ncut 0 0 1 1 strain 0.1").is_err());
        assert!(matches!(DamageScenario::parse("\nfoo"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn damage_on_a_strip() {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(30.0, 6.0)));
        let mesh = triangulate(&r, 1.5).unwrap();
        let spec = ElectrodeSpec { count: 4, contact_length: 2.0, ..Default::default() };
        let model = FEModel::new(mesh, place_electrodes(&triangulate(&r, 1.5).unwrap(), &spec).unwrap(), ForwardConfig::default()).unwrap();
        let sigma = model.uniform_sigma();
        let step = |x: f64, mult: f64| DamageStep {
            target: DamageTarget::Cut(Segment::new(x, 1.0, x, 5.0)),
            multiplier: mult,
            strain: 0.0,
        };
        assert_eq!(apply_damage(&sigma, &model.mesh, &step(15.0, 1.0), 1.0).unwrap(), sigma);
        let a = apply_damage(&sigma, &model.mesh, &step(10.0, 0.5), 1.0).unwrap();
        let ab = apply_damage(&a, &model.mesh, &step(20.0, 0.3), 1.0).unwrap();
        let b = apply_damage(&sigma, &model.mesh, &step(20.0, 0.3), 1.0).unwrap();
        assert_eq!(apply_damage(&b, &model.mesh, &step(10.0, 0.5), 1.0).unwrap(), ab);
        let off = DamageStep {
            target: DamageTarget::Cut(Segment::new(40.0, 0.0, 41.0, 0.0)),
            multiplier: 0.5,
            strain: 0.0,
        };
        assert!(matches!(apply_damage(&sigma, &model.mesh, &off, 1.0), Err(Error::EmptyDamage)));
        // a partial cut raises the end-to-end resistance
        let d = DrivePattern { source: 0, sink: 2, current: 1e-3 };
        let r0 = model.solve(&sigma, &d).unwrap();
        let r1 = model.solve(&a, &d).unwrap();
        assert!((r1.v[0] - r1.v[2]).abs() > (r0.v[0] - r0.v[2]).abs());
        let p = Protocol::new(Scheme::Adjacent, 4, 1e-3).unwrap();
        let scenario = DamageScenario::default();
        let frames = simulate_sequence(&model, &scenario, &p, 0.0, 1).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn chord_across_a_strip() {
        let r = PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(30.0, 2.0)));
        let c = ligament_cut(&r, Point::new(10.0, 0.7), 0.1).unwrap();
        assert!((c.a.x - 10.0).abs() < 1e-9 && (c.b.x - 10.0).abs() < 1e-9);
        assert!((c.a.y.min(c.b.y) + 0.1).abs() < 0.03 && (c.a.y.max(c.b.y) - 2.1).abs() < 0.03);
    }
}
