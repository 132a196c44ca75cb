//! Shared solver setup: region → mesh → electrodes → model + protocol.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{FEModel, ForwardConfig, Protocol, Scheme};
use crate::geometry::PlanarRegion;
use crate::mesh::{place_electrodes, triangulate, ElectrodeSpec};

fn default_max_edge() -> f64 {
    1.2
}
fn default_scheme() -> Scheme {
    Scheme::Adjacent
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSetup {
    /// Longest mesh edge, mm.
    #[serde(default = "default_max_edge")]
    pub max_edge: f64,
    #[serde(default)]
    pub electrodes: ElectrodeSpec,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default = "default_scheme")]
    pub protocol: Scheme,
}

impl Default for SolverSetup {
    fn default() -> Self {
        Self {
            max_edge: default_max_edge(),
            electrodes: ElectrodeSpec::default(),
            forward: ForwardConfig::default(),
            protocol: default_scheme(),
        }
    }
}

impl SolverSetup {
    pub fn protocol(&self) -> Result<Protocol> {
        Protocol::new(self.protocol, self.electrodes.count, self.forward.current)
    }

    pub fn model(&self, region: &PlanarRegion) -> Result<FEModel> {
        let mesh = triangulate(region, self.max_edge)?;
        let electrodes = place_electrodes(&mesh, &self.electrodes)?;
        FEModel::new(mesh, electrodes, self.forward)
    }
}
