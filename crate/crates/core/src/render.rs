//! SVG tomograms: one filled triangle per element, electrode ticks and a
//! colour legend. Output bytes depend only on the inputs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point};
use crate::mesh::{ElectrodeSet, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    /// Blue, white at zero, red. The range is forced symmetric about zero.
    Diverging,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log10,
}

fn default_width() -> u32 {
    640
}
fn default_height() -> u32 {
    640
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    pub colormap: Colormap,
    pub scale: Scale,
    /// Value range; data extent when absent.
    #[serde(default)]
    pub range: Option<[f64; 2]>,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
}

impl RenderSpec {
    pub fn diverging() -> Self {
        Self {
            colormap: Colormap::Diverging,
            scale: Scale::Linear,
            range: None,
            width: default_width(),
            height: default_height(),
        }
    }

    pub fn sequential() -> Self {
        Self {
            colormap: Colormap::Sequential,
            ..Self::diverging()
        }
    }
}

const DIVERGING: [[u8; 3]; 3] = [[0x21, 0x66, 0xac], [0xff, 0xff, 0xff], [0xb2, 0x18, 0x2b]];
const SEQUENTIAL: [[u8; 3]; 5] = [
    [0x44, 0x01, 0x54],
    [0x3b, 0x52, 0x8b],
    [0x21, 0x91, 0x8c],
    [0x5e, 0xc9, 0x62],
    [0xfd, 0xe7, 0x25],
];

/// Piecewise-linear colour at `t` in [0, 1]; anchors are hit exactly.
pub fn color_at(map: Colormap, t: f64) -> [u8; 3] {
    let anchors: &[[u8; 3]] = match map {
        Colormap::Diverging => &DIVERGING,
        Colormap::Sequential => &SEQUENTIAL,
    };
    let t = if t.is_nan() { 0.5 } else { t.clamp(0.0, 1.0) };
    let pos = t * (anchors.len() - 1) as f64;
    let i = (pos.floor() as usize).min(anchors.len() - 2);
    let f = pos - i as f64;
    let mut c = [0; 3];
    for k in 0..3 {
        let (a, b) = (anchors[i][k] as f64, anchors[i + 1][k] as f64);
        c[k] = (a + (b - a) * f).round() as u8;
    }
    c
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Resolved mapping from data values to [0, 1].
struct Mapping {
    lo: f64,
    hi: f64,
    log: bool,
    degenerate: bool,
}

impl Mapping {
    fn new(values: &[f64], spec: &RenderSpec) -> Result<Self> {
        let log = spec.scale == Scale::Log10;
        if log && spec.colormap == Colormap::Diverging {
            return Err(Error::invalid("log scale is only defined for the sequential colormap"));
        }
        if log && values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("log scale requires strictly positive values"));
        }
        let tr = |v: f64| if log { v.log10() } else { v };
        let (lo, hi) = match spec.range {
            Some([lo, hi]) => {
                if !(lo < hi) {
                    return Err(Error::invalid(format!("render range [{lo}, {hi}] needs lo < hi")));
                }
                if log && !(lo > 0.0) {
                    return Err(Error::invalid(format!("log scale range must be positive, got lo = {lo}")));
                }
                (tr(lo), tr(hi))
            }
            None => {
                let (lo, hi) = values
                    .iter()
                    .map(|&v| tr(v))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                (if log { lo.max(hi - LOG_DECADES) } else { lo }, hi)
            }
        };
        let (lo, hi) = if spec.colormap == Colormap::Diverging {
            let m = lo.abs().max(hi.abs());
            (-m, m)
        } else {
            (lo, hi)
        };
        Ok(Self {
            lo,
            hi,
            log,
            degenerate: !(lo < hi),
        })
    }

    fn t(&self, v: f64) -> f64 {
        if self.degenerate {
            return 0.5;
        }
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }
}

/// Automatic log ranges span at most this many decades below the maximum;
/// smaller values take the bottom colour.
pub const LOG_DECADES: f64 = 6.0;

const MARGIN: f64 = 24.0;
const LEGEND_W: f64 = 110.0;

/// SVG document for a per-element field.
pub fn render_svg(values: &[f64], mesh: &Mesh, electrodes: Option<&ElectrodeSet>, spec: &RenderSpec) -> Result<String> {
    if values.len() != mesh.element_count() {
        return Err(Error::invalid(format!(
            "field has {} values, mesh has {} elements",
            values.len(),
            mesh.element_count()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("field contains non-finite values"));
    }
    if spec.width < 200 || spec.height < 100 {
        return Err(Error::invalid("canvas must be at least 200 x 100"));
    }
    let map = Mapping::new(values, spec)?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let bb = BoundingBox::of_points(mesh.nodes()).ok_or_else(|| Error::invalid("empty mesh"))?;
    let avail_w = w - LEGEND_W - 2.0 * MARGIN;
    let avail_h = h - 2.0 * MARGIN;
    let scale = (avail_w / bb.width()).min(avail_h / bb.height());
    let ox = MARGIN + 0.5 * (avail_w - scale * bb.width());
    let oy = MARGIN + 0.5 * (avail_h - scale * bb.height());
    let to_px = |p: Point| (ox + (p.x - bb.min.x) * scale, oy + (bb.max.y - p.y) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##, spec.width, spec.height);
    s.push_str("<g id=\"elements\" stroke-width=\"0.25\" stroke-linejoin=\"round\">\n");
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let c = hex(color_at(spec.colormap, map.t(values[e])));
        let pts: Vec<String> = tri
            .iter()
            .map(|&n| {
                let (x, y) = to_px(mesh.nodes()[n]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{c}" stroke="{c}"/>"#, pts.join(" "));
    }
    s.push_str("</g>\n");
    // outline, so white (zero) fill still shows the part
    let mut d = String::new();
    for &[a, b] in mesh.boundary_edges() {
        let (xa, ya) = to_px(mesh.nodes()[a]);
        let (xb, yb) = to_px(mesh.nodes()[b]);
        let _ = write!(d, "M{xa:.2},{ya:.2}L{xb:.2},{yb:.2}");
    }
    let _ = writeln!(s, r##"<path id="boundary" d="{d}" fill="none" stroke="#606060" stroke-width="0.6"/>"##);

    if let Some(el) = electrodes {
        s.push_str("<g id=\"electrodes\" stroke=\"#000000\" stroke-width=\"2\" font-family=\"sans-serif\" font-size=\"10\">\n");
        for (k, e) in el.electrodes.iter().enumerate() {
            let mid = e.edges[e.edges.len() / 2];
            let (a, b) = (mesh.nodes()[mid[0]], mesh.nodes()[mid[1]]);
            // boundary edges keep the material on their left
            let d = b - a;
            let n = Point::new(d.y, -d.x) * (1.0 / d.norm());
            let (x0, y0) = to_px(e.center);
            let (nx, ny) = (n.x, -n.y);
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                x0 + 7.0 * nx,
                y0 + 7.0 * ny
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" stroke="none" text-anchor="middle" dominant-baseline="central">{}</text>"#,
                x0 + 15.0 * nx,
                y0 + 15.0 * ny,
                k + 1
            );
        }
        s.push_str("</g>\n");
    }

    // legend: 64 stripes, top = hi
    let lx = w - LEGEND_W + 10.0;
    let (ly, lh, stripes) = (MARGIN, h - 2.0 * MARGIN, 64);
    s.push_str("<g id=\"legend\" font-family=\"sans-serif\" font-size=\"10\">\n");
    for i in 0..stripes {
        let t = if map.degenerate { 0.5 } else { 1.0 - (i as f64 + 0.5) / stripes as f64 };
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            ly + lh * i as f64 / stripes as f64,
            lh / stripes as f64 + 0.01,
            hex(color_at(spec.colormap, t))
        );
    }
    let unit = if map.log { "log10 " } else { "" };
    let label = |y: f64, v: f64, s: &mut String| {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" dominant-baseline="central">{unit}{v:.3e}</text>"#, lx + 20.0);
    };
    label(ly, map.hi, &mut s);
    label(ly + lh, map.lo, &mut s);
    if map.degenerate {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" dominant-baseline="central">degenerate range</text>"#,
            lx + 20.0,
            ly + 0.5 * lh
        );
    } else if spec.colormap == Colormap::Diverging {
        label(ly + 0.5 * lh, 0.0, &mut s);
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PlanarRegion, Polygon};
    use crate::mesh::triangulate;

    fn mesh() -> Mesh {
        triangulate(
            &PlanarRegion::from_polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(10.0, 6.0))),
            3.0,
        )
        .unwrap()
    }

    fn fills(svg: &str) -> Vec<&str> {
        svg.lines()
            .filter(|l| l.starts_with("<polygon"))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect()
    }

    #[test]
    fn anchors_are_exact() {
        assert_eq!(color_at(Colormap::Diverging, 0.5), [255, 255, 255]);
        assert_eq!(color_at(Colormap::Diverging, 0.0), DIVERGING[0]);
        assert_eq!(color_at(Colormap::Sequential, 1.0), SEQUENTIAL[4]);
    }

    #[test]
    fn zero_renders_midpoint_colour() {
        let m = mesh();
        let mut v = vec![0.0; m.element_count()];
        v[0] = -3.0;
        v[1] = 1.7;
        let svg = render_svg(&v, &m, None, &RenderSpec::diverging()).unwrap();
        let f = fills(&svg);
        assert_eq!(f[0], "#2166ac");
        assert!(f[2..].iter().all(|c| *c == "#ffffff"));
    }

    #[test]
    fn constant_field_is_single_colour_and_flagged() {
        let m = mesh();
        let v = vec![2.5; m.element_count()];
        let svg = render_svg(&v, &m, None, &RenderSpec::sequential()).unwrap();
        let f = fills(&svg);
        assert!(f.iter().all(|c| *c == f[0]));
        assert!(svg.contains("degenerate range"));
    }

    #[test]
    fn log_scale_rejects_non_positive() {
        let m = mesh();
        let mut v = vec![0.5; m.element_count()];
        let spec = RenderSpec {
            scale: Scale::Log10,
            ..RenderSpec::sequential()
        };
        assert!(render_svg(&v, &m, None, &spec).is_ok());
        v[3] = 0.0;
        assert!(render_svg(&v, &m, None, &spec).is_err());
        let bad = RenderSpec {
            range: Some([0.0, 1.0]),
            ..spec
        };
        assert!(render_svg(&[0.5; 1], &m, None, &bad).is_err());
        let inverted = RenderSpec {
            range: Some([1.0, 1.0]),
            ..RenderSpec::sequential()
        };
        assert!(render_svg(&vec![0.5; m.element_count()], &m, None, &inverted).is_err());
    }
}
