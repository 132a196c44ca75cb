//! Run configuration. One TOML file with sections; relative paths resolve
//! against the directory holding the config.

use std::path::{Path, PathBuf};

use lattice_eit::fem::{ForwardConfig, Scheme};
use lattice_eit::mesh::ElectrodeSpec;
use lattice_eit::pipeline::SolverSetup;
use lattice_eit::render::Scale;
use serde::Deserialize;

use crate::CliError;

fn default_max_edge() -> f64 {
    2.0
}
fn default_nf() -> f64 {
    1.0
}
fn default_nf_tol() -> f64 {
    0.01
}
fn default_width() -> u32 {
    640
}
fn default_image_scale() -> Scale {
    Scale::Linear
}
fn default_sens_scale() -> Scale {
    Scale::Log10
}
fn default_scheme() -> Scheme {
    Scheme::Adjacent
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// mm
    #[serde(default = "default_max_edge")]
    pub max_edge: f64,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            max_edge: default_max_edge(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSection {
    /// Fixed hyperparameter; selected by the noise figure when absent.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_nf")]
    pub nf_target: f64,
    #[serde(default = "default_nf_tol")]
    pub nf_tol: f64,
    /// Relative noise added to simulated frames (fraction of mean |V|).
    #[serde(default)]
    pub noise_std: f64,
    /// Weight of the identity term added to the Laplace prior.
    #[serde(default)]
    pub tau: f64,
    /// Electrodes whose measurements get zero weight, 0-based.
    #[serde(default)]
    pub faulty_electrodes: Vec<usize>,
}

impl Default for ReconSection {
    fn default() -> Self {
        Self {
            mu: None,
            nf_target: default_nf(),
            nf_tol: default_nf_tol(),
            noise_std: 0.0,
            tau: 0.0,
            faulty_electrodes: vec![],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_width")]
    pub height: u32,
    /// linear: Δσ on the diverging map; log10: normalized |Δσ| on the
    /// sequential map.
    #[serde(default = "default_image_scale")]
    pub image_scale: Scale,
    #[serde(default = "default_sens_scale")]
    pub sensitivity_scale: Scale,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            width: default_width(),
            height: default_width(),
            image_scale: default_image_scale(),
            sensitivity_scale: default_sens_scale(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default)]
    pub designs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub design: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub electrodes: ElectrodeSpec,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default = "default_scheme")]
    pub protocol: Scheme,
    #[serde(default)]
    pub reconstruction: ReconSection,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub compare: CompareSection,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.design.as_mut().map(resolve);
        cfg.scenario.as_mut().map(resolve);
        cfg.out.as_mut().map(resolve);
        cfg.compare.designs.iter_mut().for_each(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn validate(&self) -> Result<(), CliError> {
        let files = self
            .design
            .iter()
            .chain(&self.scenario)
            .chain(&self.compare.designs);
        for f in files {
            if !f.is_file() {
                return Err(CliError::config(format!("referenced file {} does not exist", f.display())));
            }
        }
        let r = &self.reconstruction;
        let checks = [
            (self.mesh.max_edge > 0.0 && self.mesh.max_edge <= 50.0, "mesh.max_edge must lie in (0, 50] mm"),
            (r.mu.is_none_or(|m| m > 0.0 && m.is_finite()), "reconstruction.mu must be > 0"),
            (r.nf_target > 0.0 && r.nf_target.is_finite(), "reconstruction.nf_target must be > 0"),
            (r.nf_tol > 0.0 && r.nf_tol < 1.0, "reconstruction.nf_tol must lie in (0, 1)"),
            ((0.0..1.0).contains(&r.noise_std), "reconstruction.noise_std must lie in [0, 1)"),
            (r.tau >= 0.0 && r.tau.is_finite(), "reconstruction.tau must be >= 0"),
            (
                r.faulty_electrodes.iter().all(|&k| k < self.electrodes.count),
                "reconstruction.faulty_electrodes out of range",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(CliError::config(*msg)),
            None => Ok(()),
        }
    }

    pub fn setup(&self) -> SolverSetup {
        SolverSetup {
            max_edge: self.mesh.max_edge,
            electrodes: self.electrodes,
            forward: self.forward,
            protocol: self.protocol,
        }
    }

    pub fn design_path(&self) -> Result<&Path, CliError> {
        self.design
            .as_deref()
            .ok_or_else(|| CliError::config("config has no design file"))
    }

    /// Canonical text of the settings that shape the mesh file.
    pub fn mesh_settings(&self) -> String {
        let e = &self.electrodes;
        format!(
            "max_edge = {:e}\ncount = {}\ncontact_length = {:e}\nz = {:e}\noffset = {:?}\n",
            self.mesh.max_edge, e.count, e.contact_length, e.z, e.offset
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_with_defaults() {
        let cfg = RunConfig::parse(
            "seed = 3\n[mesh]\nmax_edge = 1.5\n[protocol]\nscheme = \"across\"\noffset = 11\n[reconstruction]\nnoise_std = 0.001\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.protocol, Scheme::Across { offset: 11 });
        assert_eq!(cfg.electrodes.count, 16);
        assert_eq!(cfg.reconstruction.nf_target, 1.0);
        assert_eq!(cfg.setup().max_edge, 1.5);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[mesh]\nmax_edge = -1\n",
            "[reconstruction]\nmu = 0\n",
            "design = \"no/such/file.toml\"\n",
            "unknown = 1\n",
        ] {
            let e = RunConfig::parse(text, Path::new(".")).unwrap_err();
            assert_eq!(e.code, 2, "{text}");
        }
    }
}
