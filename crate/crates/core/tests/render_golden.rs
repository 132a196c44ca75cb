use lattice_eit::experiments::Segment;
use lattice_eit::geometry::{PlanarRegion, Point, Polygon};
use lattice_eit::mesh::{place_electrodes, triangulate, ElectrodeSpec, Mesh, ElectrodeSet};
use lattice_eit::render::{render_svg, RenderSpec};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/cut_image.svg");

fn scene() -> (Mesh, ElectrodeSet, Segment, Vec<f64>) {
    let outer = Polygon::rectangle(Point::new(0.0, 0.0), Point::new(40.0, 24.0));
    let hole = Polygon::rectangle(Point::new(26.0, 8.0), Point::new(32.0, 16.0));
    let region = PlanarRegion::new(vec![outer], vec![hole]).unwrap();
    let mesh = triangulate(&region, 2.5).unwrap();
    let spec = ElectrodeSpec {
        count: 8,
        contact_length: 3.0,
        ..Default::default()
    };
    let el = place_electrodes(&mesh, &spec).unwrap();
    let cut = Segment::new(12.0, 9.0, 12.0, 15.0);
    // dark blob on the cut, weak positive halo around it
    let field = (0..mesh.element_count())
        .map(|e| {
            let d = cut.distance(mesh.element_centroid(e));
            -(-(d / 2.0).powi(2)).exp() + 0.15 * (-((d - 6.0) / 3.0).powi(2)).exp()
        })
        .collect();
    (mesh, el, cut, field)
}

#[test]
fn synthetic_cut_matches_golden_svg() {
    let (mesh, el, cut, field) = scene();
    let svg = render_svg(&field, &mesh, Some(&el), &RenderSpec::diverging()).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(GOLDEN, &svg).unwrap();
    }
    let golden = std::fs::read_to_string(GOLDEN).expect("golden file; run with UPDATE_GOLDEN=1 to create");
    assert!(svg == golden, "render differs from {GOLDEN}");

    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polys: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polygon")).collect();
    assert_eq!(polys.len(), mesh.element_count());
    let labels = doc
        .descendants()
        .filter(|n| n.has_tag_name("text") && n.text().is_some_and(|t| t.parse::<usize>().is_ok()))
        .count();
    assert_eq!(labels, 8);

    // the darkest fills sit on the cut
    let lum = |hex: &str| {
        let v = u32::from_str_radix(&hex[1..], 16).unwrap();
        ((v >> 16) & 255) + ((v >> 8) & 255) + (v & 255)
    };
    let darkest = (0..polys.len())
        .min_by_key(|&e| (lum(polys[e].attribute("fill").unwrap()), e))
        .unwrap();
    assert!(cut.distance(mesh.element_centroid(darkest)) < 2.0);
}

#[test]
fn repeated_render_is_byte_identical() {
    let (mesh, el, _, field) = scene();
    let a = render_svg(&field, &mesh, Some(&el), &RenderSpec::diverging()).unwrap();
    let b = render_svg(&field, &mesh, Some(&el), &RenderSpec::diverging()).unwrap();
    assert_eq!(a, b);
}
