//! Experiment configuration.
//!
//! A configuration file is TOML. It names a model preset and overrides any
//! of the preset's keys; unknown keys are rejected.
//!
//! ```toml
//! model = "diffusion"
//! eps = [0.01]
//! n_real = 2
//! methods = ["mlmc", "mc"]
//!
//! [mesh]
//! l_star = 6
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cdf::{NodeGrid, ReferenceSettings};
use crate::cost::WorkModel;
use crate::error::{Error, Result};
use crate::estimators::{
    EstimatorKind, Method, RunConfig, GILES_DEGREE, STRATUM_FLOOR, WARMUP_PLAIN, WARMUP_SMOOTHED,
    WARMUP_STRATIFIED_PLAIN, WARMUP_STRATIFIED_SMOOTHED,
};
use crate::inputs::{Stratification, TruncatedLognormal, TruncatedLognormalParams};
use crate::models::{MeshHierarchy, ModelKind, ModelSpec};
use crate::smoothing::{BandwidthRule, SmootherKind};

/// Method families named in a configuration; the stratified ones are run
/// once per entry of `strata`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodName {
    #[serde(rename = "mc")]
    Mc,
    #[serde(rename = "mlmc")]
    Mlmc,
    #[serde(rename = "mlmc+giles")]
    MlmcGiles,
    #[serde(rename = "mlmc+kde")]
    MlmcKde,
    #[serde(rename = "smlmc")]
    Smlmc,
    #[serde(rename = "smlmc+giles")]
    SmlmcGiles,
    #[serde(rename = "smlmc+kde")]
    SmlmcKde,
}

impl MethodName {
    pub const PROTOCOL: [MethodName; 6] = [
        MethodName::Mlmc,
        MethodName::Mc,
        MethodName::MlmcGiles,
        MethodName::MlmcKde,
        MethodName::Smlmc,
        MethodName::SmlmcKde,
    ];

    fn methods(self, strata: &[usize]) -> Vec<Method> {
        let stratified = |s: SmootherKind| strata.iter().map(move |&r| Method::smlmc(s, r)).collect();
        match self {
            MethodName::Mc => vec![Method::MC],
            MethodName::Mlmc => vec![Method::mlmc(SmootherKind::None)],
            MethodName::MlmcGiles => vec![Method::mlmc(SmootherKind::Giles)],
            MethodName::MlmcKde => vec![Method::mlmc(SmootherKind::Kde)],
            MethodName::Smlmc => stratified(SmootherKind::None),
            MethodName::SmlmcGiles => stratified(SmootherKind::Giles),
            MethodName::SmlmcKde => stratified(SmootherKind::Kde),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupConfig {
    pub mlmc: usize,
    pub mlmc_smoothed: usize,
    pub smlmc: usize,
    pub smlmc_smoothed: usize,
    pub stratum_floor: usize,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            mlmc: WARMUP_PLAIN,
            mlmc_smoothed: WARMUP_SMOOTHED,
            smlmc: WARMUP_STRATIFIED_PLAIN,
            smlmc_smoothed: WARMUP_STRATIFIED_SMOOTHED,
            stratum_floor: STRATUM_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Reference mesh relative to the finest level of the hierarchy.
    pub mesh_factor: usize,
    pub anchors: usize,
    pub quadrature_cells: usize,
    /// Whether `run` compares every estimate with the reference CDF.
    pub compare: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub eps: Vec<f64>,
    pub strata: Vec<usize>,
    pub methods: Vec<MethodName>,
    pub n_real: usize,
    pub seed: u64,
    pub work_model: WorkModel,
    pub giles_degree: usize,
    pub bandwidth_rule: BandwidthRule,
    pub output_dir: String,
    pub mesh: MeshHierarchy,
    pub warmup: WarmupConfig,
    pub input: TruncatedLognormalParams,
    pub nodes: NodeGrid,
    pub reference: ReferenceConfig,
}

impl ExperimentConfig {
    /// The unmodified experiment setup for `kind`.
    pub fn preset(kind: ModelKind) -> Self {
        let (mesh, input) = match kind {
            ModelKind::Diffusion => (
                MeshHierarchy {
                    m0: 16,
                    factor: 2,
                    l_star: 7,
                },
                TruncatedLognormalParams {
                    mu: 3.0,
                    sigma: 3.0,
                    w_lo: 1.0,
                    w_hi: 4.0,
                },
            ),
            ModelKind::Burgers => (
                MeshHierarchy {
                    m0: 32,
                    factor: 2,
                    l_star: 7,
                },
                TruncatedLognormalParams {
                    mu: 1.5,
                    sigma: 1.0,
                    w_lo: 0.0,
                    w_hi: 2.0,
                },
            ),
        };
        Self {
            model: kind,
            eps: vec![0.01, 0.008, 0.005],
            strata: vec![8, 16],
            methods: MethodName::PROTOCOL.to_vec(),
            n_real: 50,
            seed: 2024,
            work_model: WorkModel::Wallclock,
            giles_degree: GILES_DEGREE,
            bandwidth_rule: BandwidthRule::Max,
            output_dir: format!("out/{kind}"),
            mesh,
            warmup: WarmupConfig::default(),
            input,
            nodes: NodeGrid::preset(kind),
            reference: ReferenceConfig {
                mesh_factor: 4,
                anchors: 65,
                quadrature_cells: 1 << 18,
                compare: true,
            },
        }
    }

    /// Parses a TOML document layered over the preset named by its `model`
    /// key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        let kind: ModelKind = match user.get("model") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::config("`model` must be a string")),
            None => return Err(Error::config("missing `model` key")),
        };
        let mut base = toml::Table::try_from(Self::preset(kind)).map_err(|e| Error::config(e.to_string()))?;
        merge(&mut base, user);
        let config: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::config("`eps` must list positive tolerances"));
        }
        if self.n_real == 0 {
            return Err(Error::config("`n_real` must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("`methods` is empty"));
        }
        let stratified = self
            .methods
            .iter()
            .any(|m| matches!(m, MethodName::Smlmc | MethodName::SmlmcGiles | MethodName::SmlmcKde));
        if stratified && (self.strata.is_empty() || self.strata.contains(&0)) {
            return Err(Error::config("stratified methods need positive `strata` counts"));
        }
        if self.methods.contains(&MethodName::Mc) && !self.methods.contains(&MethodName::Mlmc) {
            return Err(Error::config("`mc` reuses the samples of `mlmc`, which must also be listed"));
        }
        MeshHierarchy::new(self.mesh.m0, self.mesh.factor, self.mesh.l_star).map_err(|e| Error::config(e.to_string()))?;
        NodeGrid::new(self.nodes.a, self.nodes.b, self.nodes.intervals).map_err(|e| Error::config(e.to_string()))?;
        self.distribution().map_err(|e| Error::config(e.to_string()))?;
        self.reference_settings().validate()?;
        for m in self.expanded_methods() {
            self.run_config(m, self.eps[0], self.seed).validate()?;
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::preset(self.model)
    }

    pub fn distribution(&self) -> Result<TruncatedLognormal> {
        TruncatedLognormal::try_from(self.input)
    }

    pub fn stratification(&self, r: usize) -> Result<Stratification> {
        Stratification::equal_width(&self.distribution()?, r)
    }

    pub fn reference_settings(&self) -> ReferenceSettings {
        ReferenceSettings {
            mesh_cells: self.mesh.m0 * self.mesh.factor.pow(self.mesh.l_star as u32) * self.reference.mesh_factor,
            anchors: self.reference.anchors,
            quadrature_cells: self.reference.quadrature_cells,
        }
    }

    /// Methods in protocol order, stratified families expanded per `r`.
    pub fn expanded_methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for name in MethodName::PROTOCOL
            .iter()
            .chain([MethodName::SmlmcGiles].iter())
            .filter(|n| self.methods.contains(n))
        {
            out.extend(name.methods(&self.strata));
        }
        out
    }

    pub fn run_config(&self, method: Method, eps: f64, seed: u64) -> RunConfig {
        let smoothed = method.smoother != SmootherKind::None;
        let warmup = match (method.kind, smoothed) {
            (EstimatorKind::Smlmc, false) => self.warmup.smlmc,
            (EstimatorKind::Smlmc, true) => self.warmup.smlmc_smoothed,
            (_, false) => self.warmup.mlmc,
            (_, true) => self.warmup.mlmc_smoothed,
        };
        RunConfig {
            eps,
            hierarchy: self.mesh,
            smoother: method.smoother,
            giles_degree: self.giles_degree,
            bandwidth_rule: self.bandwidth_rule,
            warmup,
            stratum_floor: self.warmup.stratum_floor,
            seed,
            work_model: self.work_model,
        }
    }
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for kind in [ModelKind::Diffusion, ModelKind::Burgers] {
            let p = ExperimentConfig::preset(kind);
            p.validate().unwrap();
            let text = p.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), p);
        }
        let d = ExperimentConfig::preset(ModelKind::Diffusion);
        assert_eq!(d.nodes.len(), 29);
        assert_eq!(d.mesh.l_star, 7);
        assert_eq!(d.eps, vec![0.01, 0.008, 0.005]);
    }

    #[test]
    fn overrides_and_expansion() {
        let c = ExperimentConfig::from_toml_str(
            "model = \"diffusion\"\neps = [0.01]\nn_real = 2\nmethods = [\"mc\", \"mlmc\", \"smlmc+kde\"]\n[mesh]\nl_star = 5\n",
        )
        .unwrap();
        assert_eq!(c.mesh.l_star, 5);
        assert_eq!(c.mesh.m0, 16);
        assert_eq!(c.n_real, 2);
        let labels: Vec<String> = c.expanded_methods().iter().map(Method::label).collect();
        assert_eq!(labels, ["mlmc", "mc", "smlmc+kde-r8", "smlmc+kde-r16"]);
        let rc = c.run_config(Method::smlmc(SmootherKind::Kde, 8), 0.01, 7);
        assert_eq!(rc.warmup, WARMUP_STRATIFIED_SMOOTHED);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "eps = [0.01]",
            "model = \"heat\"",
            "model = \"diffusion\"\nfoo = 1",
            "model = \"diffusion\"\n[mesh]\nm1 = 3",
            "model = \"diffusion\"\neps = []",
            "model = \"diffusion\"\nmethods = [\"mc\"]",
            "model = \"diffusion\"\nmethods = [\"mlmc+foo\"]",
            "model = \"burgers\"\n[input]\nsigma = -1.0",
        ] {
            assert!(ExperimentConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }
}
