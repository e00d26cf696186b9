//! Experiment configuration: a TOML file plus `--set path=value` overrides.

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use mgbound::multigrid::{A0Policy, Coarsening};
use mgbound::smoothers::SmootherKind;
use mgbound::transfer::PerturbMode;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub smoother: SmootherConfig,
    pub transfer: TransferConfig,
    pub coarse: CoarseConfig,
    pub multigrid: MultigridConfig,
    pub sweep: SweepConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemConfig::default(),
            smoother: SmootherConfig::default(),
            transfer: TransferConfig::default(),
            coarse: CoarseConfig::default(),
            multigrid: MultigridConfig::default(),
            sweep: SweepConfig::default(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// poisson1d | poisson2d | random_spd
    pub kind: String,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    pub seed: u64,
    pub condition: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            kind: "poisson1d".into(),
            n: 31,
            nx: 7,
            ny: 7,
            seed: 1,
            condition: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmootherConfig {
    /// gauss_seidel | jacobi
    pub kind: String,
    pub omega: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            kind: "gauss_seidel".into(),
            omega: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    /// geometric | amg_direct
    pub method: String,
    pub strong_threshold: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            method: "geometric".into(),
            strong_threshold: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseConfig {
    /// exact | scale | spd_noise | sparsify | identity_scale
    pub mode: String,
    pub alpha: f64,
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        CoarseConfig {
            mode: "exact".into(),
            alpha: 1.0,
            magnitude: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultigridConfig {
    pub levels: usize,
    pub gamma: u32,
    /// exact | scaled | spsd_bump
    pub a0_policy: String,
    pub a0_beta: f64,
    pub a0_magnitude: f64,
    pub a0_seed: u64,
}

impl Default for MultigridConfig {
    fn default() -> Self {
        MultigridConfig {
            levels: 3,
            gamma: 1,
            a0_policy: "exact".into(),
            a0_beta: 1.0,
            a0_magnitude: 0.0,
            a0_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// alpha | random
    pub kind: String,
    pub alphas: Vec<f64>,
    pub seed_start: u64,
    pub seed_end: u64,
    pub modes: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kind: "alpha".into(),
            alphas: vec![0.5, 0.8, 1.0, 1.25, 2.0, 1e8],
            seed_start: 0,
            seed_end: 99,
            modes: vec!["scale".into(), "spd_noise".into(), "sparsify".into()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub dense_cap: usize,
    pub zero_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            dense_cap: mgbound::DEFAULT_DENSE_CAP,
            zero_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// csv | structured | both
    pub format: String,
    pub dump_split: bool,
    pub dump_matrix: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            format: "both".into(),
            dump_split: false,
            dump_matrix: false,
        }
    }
}

impl ExperimentConfig {
    /// Loads a TOML file (or defaults when `path` is None) and applies
    /// `--set path=value` overrides before deserializing.
    pub fn load(path: Option<&std::path::Path>, sets: &[String]) -> anyhow::Result<Self> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Value>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Value::Table(Default::default()),
        };
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let config: ExperimentConfig = value
            .try_into()
            .map_err(|e| anyhow!("config schema: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match self.problem.kind.as_str() {
            "poisson1d" | "poisson2d" | "random_spd" => {}
            other => bail!("problem.kind: unknown kind {other:?}"),
        }
        match self.smoother.kind.as_str() {
            "gauss_seidel" | "jacobi" => {}
            other => bail!("smoother.kind: unknown kind {other:?}"),
        }
        match self.transfer.method.as_str() {
            "geometric" | "amg_direct" => {}
            other => bail!("transfer.method: unknown method {other:?}"),
        }
        match self.coarse.mode.as_str() {
            "exact" | "scale" | "spd_noise" | "sparsify" | "identity_scale" => {}
            other => bail!("coarse.mode: unknown mode {other:?}"),
        }
        match self.multigrid.a0_policy.as_str() {
            "exact" | "scaled" | "spsd_bump" => {}
            other => bail!("multigrid.a0_policy: unknown policy {other:?}"),
        }
        match self.sweep.kind.as_str() {
            "alpha" | "random" => {}
            other => bail!("sweep.kind: unknown kind {other:?}"),
        }
        for m in &self.sweep.modes {
            match m.as_str() {
                "scale" | "spd_noise" | "sparsify" | "identity_scale" => {}
                other => bail!("sweep.modes: unknown mode {other:?}"),
            }
        }
        match self.output.format.as_str() {
            "csv" | "structured" | "both" => {}
            other => bail!("output.format: unknown format {other:?}"),
        }
        if !(1..=8).contains(&self.multigrid.gamma) {
            bail!("multigrid.gamma: must lie in [1, 8]");
        }
        Ok(())
    }

    pub fn smoother_kind(&self) -> SmootherKind {
        match self.smoother.kind.as_str() {
            "jacobi" => SmootherKind::Jacobi {
                omega: self.smoother.omega,
            },
            _ => SmootherKind::GaussSeidel,
        }
    }

    pub fn coarsening(&self) -> Coarsening {
        match self.transfer.method.as_str() {
            "amg_direct" => Coarsening::AmgDirect {
                strong_threshold: self.transfer.strong_threshold,
            },
            _ => Coarsening::Geometric,
        }
    }

    pub fn a0_policy(&self) -> A0Policy {
        match self.multigrid.a0_policy.as_str() {
            "scaled" => A0Policy::Scaled {
                beta: self.multigrid.a0_beta,
            },
            "spsd_bump" => A0Policy::SpsdBump {
                magnitude: self.multigrid.a0_magnitude,
                seed: self.multigrid.a0_seed,
            },
            _ => A0Policy::Exact,
        }
    }

    pub fn perturb_mode(&self) -> PerturbMode {
        mode_from(&self.coarse.mode, &self.coarse)
    }
}

pub fn mode_from(name: &str, c: &CoarseConfig) -> PerturbMode {
    match name {
        "scale" => PerturbMode::Scale { alpha: c.alpha },
        "spd_noise" => PerturbMode::SpdNoise {
            magnitude: c.magnitude,
            seed: c.seed,
        },
        "sparsify" => PerturbMode::Sparsify {
            magnitude: c.magnitude,
        },
        "identity_scale" => PerturbMode::IdentityScale { alpha: c.alpha },
        _ => PerturbMode::Exact,
    }
}

/// Applies one `a.b.c=value` override onto the raw TOML tree. The value is
/// parsed as a TOML literal, falling back to a plain string.
fn apply_set(root: &mut toml::Value, spec: &str) -> anyhow::Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("--set needs path=value, got {spec:?}"))?;
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(t)) => t.get("v").cloned().unwrap(),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("--set {path}: {part} is not a table"))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    unreachable!("loop returns on the last component")
}
