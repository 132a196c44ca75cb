//! One function per subcommand. Each stage re-verifies the provenance chain
//! from the design file down to the artifacts it consumes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lattice_eit::experiments::{localization_error, simulate_sequence, summed_relative_change, DamageScenario, DamageTarget};
use lattice_eit::fem::{run_protocol, FEModel, Frame, Protocol};
use lattice_eit::geometry::PlanarRegion;
use lattice_eit::io::{self, sha256_hex, Artifact};
use lattice_eit::lattice::{generate as generate_lattice, LatticeDesign};
use lattice_eit::mesh::{place_electrodes, triangulate};
use lattice_eit::reconstruction::{
    central_target, electrode_mask, laplace_prior, select_mu, ConductivityImage, Indicators, MapProblem,
};
use lattice_eit::render::{render_svg, Colormap, RenderSpec, Scale};
use lattice_eit::sensitivity::{compare_designs, jacobian, sensitivity_map};

use crate::{CliError, RunConfig};

type Result<T> = std::result::Result<T, CliError>;

pub const REGION: &str = "region.txt";
pub const DESIGN_REPORT: &str = "design_report.txt";
pub const MESH: &str = "mesh.txt";
pub const PROTOCOL: &str = "protocol.txt";
pub const FORWARD: &str = "forward.csv";
pub const SENSITIVITY: &str = "sensitivity.csv";
pub const FRAMES: &str = "frames";
pub const IMAGES: &str = "images";
pub const RENDERS: &str = "renders";
pub const INDICATORS: &str = "indicators.txt";
pub const SUMMARY: &str = "summary.txt";
pub const RANKING: &str = "ranking.txt";

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub quiet: bool,
}

/// A loaded mesh together with the artifacts it was checked against.
struct Chain {
    model: FEModel,
    mesh: Artifact,
    protocol: Protocol,
    protocol_art: Artifact,
}

impl Context {
    pub fn new(cfg: RunConfig, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Self {
        let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let seed = seed.unwrap_or(cfg.seed);
        Self { cfg, out, seed, quiet }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn write(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&p, text)?;
        Ok(())
    }

    fn read(&self, rel: &str, kind: &str, producer: &str) -> Result<Artifact> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(CliError::provenance(format!(
                "missing upstream artifact {}; run `{producer}` first",
                p.display()
            )));
        }
        Ok(Artifact::read(&p, kind)?)
    }

    fn design(&self) -> Result<(LatticeDesign, String)> {
        let path = self.cfg.design_path()?;
        let text = std::fs::read_to_string(path)?;
        let d = LatticeDesign::from_toml(&text)?;
        Ok((d, sha256_hex(text.as_bytes())))
    }

    fn region(&self) -> Result<(PlanarRegion, Artifact)> {
        let (_, dh) = self.design()?;
        let a = self.read(REGION, "region", "generate")?;
        a.require_upstream(&dh, "design file")?;
        Ok((io::read_region(&a.body)?, a))
    }

    fn chain(&self) -> Result<Chain> {
        let (_, region) = self.region()?;
        let mesh = self.read(MESH, "mesh", "mesh")?;
        mesh.require_upstream(&region.sha256, "region")?;
        mesh.require_upstream(&sha256_hex(self.cfg.mesh_settings().as_bytes()), "mesh settings")?;
        let (m, el) = io::read_mesh(&mesh.body)?;
        let model = FEModel::new(m, el, self.cfg.forward)?;
        let protocol = self.cfg.setup().protocol()?;
        let f = &self.cfg.forward;
        let body = format!(
            "{}thickness = {:?}\nsigma0 = {:e}\n",
            protocol.canonical_text(),
            f.thickness,
            f.sigma0
        );
        let protocol_art = Artifact::new("protocol", vec![mesh.sha256.clone()], body);
        Ok(Chain {
            model,
            mesh,
            protocol,
            protocol_art,
        })
    }

    fn clear(&self, dir: &str) -> Result<()> {
        let p = self.path(dir);
        if p.is_dir() {
            std::fs::remove_dir_all(&p)?;
        }
        std::fs::create_dir_all(&p)?;
        Ok(())
    }

    fn listing(&self, dir: &str, prefix: &str, ext: &str) -> Result<Vec<String>> {
        let p = self.path(dir);
        let mut names: Vec<String> = match std::fs::read_dir(&p) {
            Ok(rd) => rd
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.starts_with(prefix) && n.ends_with(ext))
                .collect(),
            Err(_) => vec![],
        };
        names.sort();
        Ok(names.into_iter().map(|n| format!("{dir}/{n}")).collect())
    }
}

pub fn generate(ctx: &Context) -> Result<()> {
    let (design, dh) = ctx.design()?;
    let g = generate_lattice(&design)?;
    let bb = g.region.bbox();
    let region = Artifact::new("region", vec![dh.clone()], io::write_region(&g.region));
    let report = format!(
        "name = {:?}\nalpha = {:e}\nrelative_density = {:e}\nperiod = {:e}\nseeds_per_stem = {}\n\
         width_mm = {:e}\nheight_mm = {:e}\narea_mm2 = {:e}\nperimeter_mm = {:e}\npieces = {}\n",
        design.name,
        g.alpha,
        g.relative_density,
        g.period,
        g.seeds_per_stem,
        bb.width(),
        bb.height(),
        g.region.area(),
        g.region.perimeter(),
        g.region.piece_count()
    );
    ctx.write(REGION, &region.to_text())?;
    ctx.write(DESIGN_REPORT, &Artifact::new("design_report", vec![dh], report).to_text())?;
    ctx.say(format!(
        "design {}: alpha {:.4}, relative density {:.4}, {:.3} x {:.3} mm",
        design.name,
        g.alpha,
        g.relative_density,
        bb.width(),
        bb.height()
    ));
    Ok(())
}

pub fn mesh(ctx: &Context) -> Result<()> {
    let (region, ra) = ctx.region()?;
    let m = triangulate(&region, ctx.cfg.mesh.max_edge)?;
    let el = place_electrodes(&m, &ctx.cfg.electrodes)?;
    let (m, el) = io::quantize_mesh(&m, &el)?;
    let model = FEModel::new(m, el, ctx.cfg.forward)?;
    let settings = sha256_hex(ctx.cfg.mesh_settings().as_bytes());
    let body = io::write_mesh(&model.mesh, &model.electrodes);
    ctx.write(MESH, &Artifact::new("mesh", vec![ra.sha256, settings], body).to_text())?;
    let s = model.mesh.stats();
    ctx.say(format!(
        "mesh: {} elements, {} nodes, min angle {:.1} deg, max edge {:.3} mm, {} electrodes",
        s.elements,
        s.nodes,
        s.min_angle,
        s.max_edge,
        model.electrode_count()
    ));
    Ok(())
}

pub fn forward(ctx: &Context) -> Result<()> {
    let c = ctx.chain()?;
    ctx.write(PROTOCOL, &c.protocol_art.to_text())?;
    let frame = run_protocol(&c.model, &c.model.uniform_sigma(), &c.protocol)?;
    let up = vec![c.mesh.sha256.clone(), c.protocol_art.sha256.clone()];
    ctx.write(FORWARD, &Artifact::new("frame", up, io::write_frame(&frame)).to_text())?;
    ctx.say(format!(
        "forward: {} measurements ({}), protocol {}",
        frame.len(),
        frame.scheme,
        &frame.protocol_hash[..12]
    ));
    Ok(())
}

pub fn sensitivity(ctx: &Context) -> Result<()> {
    let c = ctx.chain()?;
    ctx.write(PROTOCOL, &c.protocol_art.to_text())?;
    let h = jacobian(&c.model, &c.model.uniform_sigma(), &c.protocol)?;
    let map = sensitivity_map(&h.matrix, h.rows())?;
    let up = vec![c.mesh.sha256.clone(), c.protocol_art.sha256.clone()];
    let body = io::write_sensitivity(&map, &c.model.mesh);
    ctx.write(SENSITIVITY, &Artifact::new("sensitivity", up, body).to_text())?;
    let s = &map.stats;
    ctx.say(format!(
        "sensitivity: mean {:.4e}, p25 {:.4e}, min {:.4e}, max {:.4e} over {} elements, N = {}",
        s.mean,
        s.p25,
        s.min,
        s.max,
        map.values.len(),
        map.measurements
    ));
    Ok(())
}

/// Images of every frame against the first, written with the indicator
/// log. Returns them in frame order (from the second frame on).
fn reconstruct_frames(ctx: &Context, c: &Chain, frames: &[(Frame, Artifact)]) -> Result<Vec<(ConductivityImage, Indicators)>> {
    if frames.len() < 2 {
        return Err(CliError::provenance("need a reference frame and at least one more frame"));
    }
    for (f, _) in frames {
        f.check_protocol(&c.protocol.hash())?;
    }
    let r = &ctx.cfg.reconstruction;
    let h = jacobian(&c.model, &c.model.uniform_sigma(), &c.protocol)?;
    let w = electrode_mask(&c.protocol, &r.faulty_electrodes);
    let q = laplace_prior(&c.model.mesh).with_tau(r.tau)?;
    let problem = MapProblem::new(h.matrix, w, q, h.protocol_hash)?;
    let target = central_target(&c.model.mesh);
    let (mu, nf) = match r.mu {
        Some(mu) => (mu, problem.noise_figure(mu, &target)?),
        None => {
            let s = problem.mu_scale();
            let sel = select_mu(&problem, &target, r.nf_target, [1e-6 * s, 1e4 * s], r.nf_tol)?;
            (sel.mu, sel.nf)
        }
    };
    let rec = problem.reconstructor(mu)?;
    let images = frames[1..]
        .iter()
        .map(|(f, _)| rec.reconstruct(&frames[0].0, f))
        .collect::<lattice_eit::Result<Vec<_>>>()?;
    let reference = images.iter().map(|i| i.max_abs()).fold(0.0, f64::max);
    let reference = if reference > 0.0 { reference } else { 1.0 };
    ctx.clear(IMAGES)?;
    let mut log = format!("mu = {mu:e}\nnoise_figure = {nf:e}\nreference_max = {reference:e}\n");
    let mut out = Vec::with_capacity(images.len());
    for (k, img) in images.into_iter().enumerate() {
        let k = k + 1;
        let ind = img.indicators(reference)?;
        let up = vec![c.mesh.sha256.clone(), frames[0].1.sha256.clone(), frames[k].1.sha256.clone()];
        let body = io::write_image(&img, &ind, &c.model.mesh);
        ctx.write(&format!("{IMAGES}/image_{k:03}.csv"), &Artifact::new("image", up, body).to_text())?;
        log.push_str(&io::indicator_line(k, frames[k].0.strain, &ind));
        out.push((img, ind));
    }
    let mut up = vec![c.mesh.sha256.clone(), c.protocol_art.sha256.clone()];
    up.extend(frames.iter().map(|(_, a)| a.sha256.clone()));
    ctx.write(INDICATORS, &Artifact::new("indicators", up, log).to_text())?;
    ctx.say(format!("reconstruct: {} images, mu {mu:.4e}, NF {nf:.4}", out.len()));
    Ok(out)
}

pub fn reconstruct(ctx: &Context) -> Result<()> {
    let c = ctx.chain()?;
    let names = ctx.listing(FRAMES, "frame_", ".csv")?;
    let frames = names
        .iter()
        .map(|n| {
            let a = ctx.read(n, "frame", "simulate")?;
            a.require_upstream(&c.mesh.sha256, "mesh")?;
            a.require_upstream(&c.protocol_art.sha256, "protocol")?;
            Ok((io::read_frame(&a.body)?, a))
        })
        .collect::<Result<Vec<_>>>()?;
    reconstruct_frames(ctx, &c, &frames).map(|_| ())
}

pub fn simulate(ctx: &Context) -> Result<()> {
    let path = ctx
        .cfg
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::config("simulate needs a scenario file in the config"))?;
    let text = std::fs::read_to_string(path)?;
    let scenario = DamageScenario::parse(&text)?;
    let c = ctx.chain()?;
    ctx.write(PROTOCOL, &c.protocol_art.to_text())?;
    let noise = ctx.cfg.reconstruction.noise_std;
    let frames = simulate_sequence(&c.model, &scenario, &c.protocol, noise, ctx.seed)?;
    let run = sha256_hex(format!("{text}\nnoise_std = {noise:e}\nseed = {}\n", ctx.seed).as_bytes());
    ctx.clear(FRAMES)?;
    let up = vec![c.mesh.sha256.clone(), c.protocol_art.sha256.clone(), run];
    let frames = frames
        .into_iter()
        .enumerate()
        .map(|(k, f)| {
            let a = Artifact::new("frame", up.clone(), io::write_frame(&f));
            ctx.write(&format!("{FRAMES}/frame_{k:03}.csv"), &a.to_text())?;
            Ok((f, a))
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.say(format!("simulate: {} frames, noise {noise}, seed {}", frames.len(), ctx.seed));
    let images = reconstruct_frames(ctx, &c, &frames)?;
    let plain: Vec<Frame> = frames.iter().map(|(f, _)| f.clone()).collect();
    let sums = summed_relative_change(&plain)?;
    let mut table = String::from("step,strain,sum_rel_dR,abs_dsigma_min,localization_mm\n");
    for (k, (img, ind)) in images.iter().enumerate() {
        let step = &scenario.steps[k];
        let loc = match &step.target {
            DamageTarget::Cut(seg) => format!("{:e}", localization_error(img, &c.model.mesh, seg)?),
            DamageTarget::Elements(_) => "-".into(),
        };
        let _ = writeln!(table, "{},{:e},{:e},{:e},{loc}", k + 1, step.strain, sums[k + 1], ind.min_magnitude);
    }
    let up: Vec<String> = frames.iter().map(|(_, a)| a.sha256.clone()).collect();
    ctx.write(SUMMARY, &Artifact::new("summary", up, table.clone()).to_text())?;
    ctx.say(table.trim_end());
    Ok(())
}

pub fn render(ctx: &Context) -> Result<()> {
    let c = ctx.chain()?;
    let rs = &ctx.cfg.render;
    let mut jobs: Vec<(String, Vec<f64>, RenderSpec)> = Vec::new();
    for name in ctx.listing(IMAGES, "image_", ".csv")? {
        let a = ctx.read(&name, "image", "reconstruct")?;
        a.require_upstream(&c.mesh.sha256, "mesh")?;
        let (values, colormap) = match rs.image_scale {
            Scale::Linear => (io::read_image(&a.body)?.delta_sigma, Colormap::Diverging),
            Scale::Log10 => (io::read_image_normalized(&a.body)?, Colormap::Sequential),
        };
        let stem = Path::new(&name).file_stem().unwrap().to_string_lossy().into_owned();
        jobs.push((
            stem,
            values,
            RenderSpec {
                colormap,
                scale: rs.image_scale,
                range: None,
                width: rs.width,
                height: rs.height,
            },
        ));
    }
    if ctx.path(SENSITIVITY).is_file() {
        let a = ctx.read(SENSITIVITY, "sensitivity", "sensitivity")?;
        a.require_upstream(&c.mesh.sha256, "mesh")?;
        jobs.push((
            "sensitivity".into(),
            io::read_sensitivity(&a.body)?,
            RenderSpec {
                colormap: Colormap::Sequential,
                scale: rs.sensitivity_scale,
                range: None,
                width: rs.width,
                height: rs.height,
            },
        ));
    }
    if jobs.is_empty() {
        return Err(CliError::provenance("nothing to render; run sensitivity, simulate or reconstruct first"));
    }
    for (stem, values, spec) in &jobs {
        let svg = render_svg(values, &c.model.mesh, Some(&c.model.electrodes), spec)?;
        ctx.write(&format!("{RENDERS}/{stem}.svg"), &svg)?;
    }
    ctx.say(format!("render: {} files in {}", jobs.len(), ctx.path(RENDERS).display()));
    Ok(())
}

pub fn compare(ctx: &Context) -> Result<()> {
    let paths = &ctx.cfg.compare.designs;
    let mut designs = Vec::with_capacity(paths.len());
    let mut hashes = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(p)?;
        designs.push(LatticeDesign::from_toml(&text).map_err(|e| CliError::from(e).in_stage("design file"))?);
        hashes.push(sha256_hex(text.as_bytes()));
    }
    let reports = compare_designs(&designs, &ctx.cfg.setup())?;
    let mut table = String::from("rank,design,elements,measurements,mean,p25,min,max\n");
    for (i, r) in reports.iter().enumerate() {
        match &r.outcome {
            Ok(s) => {
                let _ = writeln!(
                    table,
                    "{},{},{},{},{:e},{:e},{:e},{:e}",
                    i + 1,
                    r.name,
                    r.elements,
                    r.measurements,
                    s.mean,
                    s.p25,
                    s.min,
                    s.max
                );
            }
            Err(e) => {
                let _ = writeln!(table, "-,{},{},{},failed: {e}", r.name, r.elements, r.measurements);
            }
        }
    }
    ctx.write(RANKING, &Artifact::new("ranking", hashes, table.clone()).to_text())?;
    ctx.say(table.trim_end());
    Ok(())
}
