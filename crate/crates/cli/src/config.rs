//! TOML experiment configuration and its resolution into core types.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use nestenv_core::{
    DissipatorSubStep, EnsembleKind, InitialState, PropagationSettings, TimeGrid,
    fitting::{FitConfig, FitObjective, FitWindow},
};

/// On-disk schema. Sections map one-to-one onto the TOML file; see
/// `presets/` for complete examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub title: Option<String>,
    pub central: CentralSection,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub initial_state: InitialStateSection,
    #[serde(default)]
    pub dissipator: DissipatorSection,
    #[serde(default)]
    pub grid: GridSection,
    pub run: RunSection,
    #[serde(default)]
    pub fit: FitSection,
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationSection>,
}

/// Central-system levels: `levels[j] = [epsilon_j, nu_j]`; the tracked
/// coherence is the `pair = [j, k]` element and
/// `lambda = nu_j - nu_k` exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralSection {
    pub levels: Vec<[f64; 2]>,
    pub pair: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub kind: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSection {
    pub kind: String,
}

impl Default for InitialStateSection {
    fn default() -> Self {
        Self {
            kind: "maximally_mixed".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipatorSection {
    /// Absolute decay rates; exclusive with `gamma_over_lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Rates as multiples of lambda; exclusive with `gammas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_over_lambda: Option<Vec<f64>>,
    #[serde(default = "default_vprime_kind")]
    pub vprime_kind: String,
    #[serde(default = "default_true")]
    pub resample_vprime: bool,
}

impl Default for DissipatorSection {
    fn default() -> Self {
        Self {
            gammas: None,
            gamma_over_lambda: None,
            vprime_kind: default_vprime_kind(),
            resample_vprime: true,
        }
    }
}

fn default_vprime_kind() -> String {
    "gue".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub dt_out: f64,
    pub dt: f64,
    pub integrator: String,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_max: 30.0,
            dt_out: 0.1,
            dt: 0.01,
            integrator: "strang_rk4".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_run: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub freeze_veff: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub t_min: f64,
    pub t_max: f64,
    pub objective: String,
    pub gamma_max: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 15.0,
            objective: "complex".into(),
            gamma_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

/// Saturation aggregates fit tables over several scenario config files
/// (paths relative to the referencing config).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSection {
    pub configs: Vec<String>,
}

/// Resolved, validated run parameters.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ConfigFile,
    pub config_dir: PathBuf,
    pub lambda: f64,
    pub kind: EnsembleKind,
    pub dimension: usize,
    pub initial_state: InitialState,
    pub gammas: Vec<f64>,
    pub vprime_kind: EnsembleKind,
    pub resample_vprime: bool,
    pub freeze_veff: bool,
    pub grid: TimeGrid,
    pub settings: PropagationSettings,
    pub n_run: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub fit: FitConfig,
    pub out_dir: PathBuf,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides<'a> {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<&'a Path>,
}

pub fn load(path: &Path, overrides: Overrides) -> anyhow::Result<Resolved> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut config: ConfigFile =
        toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
    if let Some(seed) = overrides.seed {
        config.run.base_seed = seed;
    }
    if let Some(workers) = overrides.workers {
        config.run.workers = workers;
    }
    if let Some(out) = overrides.out {
        config.output.dir = out.display().to_string();
    }
    let config_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    resolve(config, config_dir)
}

pub fn resolve(config: ConfigFile, config_dir: PathBuf) -> anyhow::Result<Resolved> {
    let central = &config.central;
    let [j, k] = central.pair;
    if j == k {
        bail!("central.pair must select two distinct levels, got [{j}, {k}]");
    }
    let nu = |idx: usize| -> anyhow::Result<f64> {
        central
            .levels
            .get(idx)
            .map(|lv| lv[1])
            .with_context(|| format!("central.pair index {idx} out of range"))
    };
    let lambda = nu(j)? - nu(k)?;

    let kind = EnsembleKind::from_str(&config.ensemble.kind)?;
    let dimension = config.ensemble.dimension;
    if dimension < 2 {
        bail!("ensemble.dimension must be >= 2, got {dimension}");
    }
    let initial_state = InitialState::from_str(&config.initial_state.kind)?;
    let vprime_kind = EnsembleKind::from_str(&config.dissipator.vprime_kind)?;

    let gammas = match (&config.dissipator.gammas, &config.dissipator.gamma_over_lambda) {
        (Some(_), Some(_)) => {
            bail!("specify either dissipator.gammas or dissipator.gamma_over_lambda, not both")
        }
        (Some(g), None) => g.clone(),
        (None, Some(ratios)) => ratios.iter().map(|r| r * lambda).collect(),
        (None, None) => vec![0.0],
    };
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        bail!("damping rates must be >= 0, got {gammas:?}");
    }

    let grid = TimeGrid::uniform(config.grid.t_max, config.grid.dt_out)?;
    let substep = DissipatorSubStep::from_str(&config.grid.integrator)?;
    if !(config.grid.dt > 0.0) {
        bail!("grid.dt must be positive, got {}", config.grid.dt);
    }
    let settings = PropagationSettings {
        dt: config.grid.dt,
        substep,
    };

    if config.run.n_run == 0 {
        bail!("run.n_run must be >= 1");
    }

    let window = FitWindow::new(config.fit.t_min, config.fit.t_max)?;
    if config.fit.t_max > config.grid.t_max + 1e-9 {
        bail!(
            "fit window reaches {} but the grid ends at {}",
            config.fit.t_max,
            config.grid.t_max
        );
    }
    let objective = FitObjective::from_str(&config.fit.objective)?;
    if !(config.fit.gamma_max > 0.0) {
        bail!("fit.gamma_max must be positive");
    }
    let fit = FitConfig {
        window,
        objective,
        gamma_max: config.fit.gamma_max,
    };

    let out_dir = {
        let p = PathBuf::from(&config.output.dir);
        if p.is_absolute() {
            p
        } else {
            config_dir.join(p)
        }
    };

    Ok(Resolved {
        lambda,
        kind,
        dimension,
        initial_state,
        gammas,
        vprime_kind,
        resample_vprime: config.dissipator.resample_vprime,
        freeze_veff: config.run.freeze_veff,
        grid,
        settings,
        n_run: config.run.n_run,
        base_seed: config.run.base_seed,
        workers: config.run.workers,
        fit,
        out_dir,
        config_dir,
        config,
    })
}

/// Canonical serialization used for hashing and the manifest.
pub fn canonical_toml(config: &ConfigFile) -> anyhow::Result<String> {
    Ok(toml::to_string(config)?)
}
