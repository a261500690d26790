//! Scenario configuration (TOML) and its resolution into the objects the
//! engines run on.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{inf_norm, r_hat, r_hat_index, r_index, rate_bounds, RateBounds};
use crate::constraints::{ChannelLimits, ConstraintProfile, ProfileError, ProfileKind, DEFAULT_WAVEFORM_FLOOR};
use crate::distributed::{consensus_detrend, DistributedError};
use crate::geometry::{ChannelGeometry, ChannelShape, GeometryError};
use crate::graph::{build_line_graph, ChannelTopology, GraphError, JunctionTopology};
use crate::rgp::{detrend, eta_upper_bound, Detrended, ProtocolParams, RgpError};
use crate::weights::{build_mh_weights, omega_bound, spectral_summary, xi_bounds, ConsensusWeights, SpectralSummary, WeightsError};

pub const DEFAULT_GAMMA: f64 = 0.6;
pub const DEFAULT_ZETA: f64 = crate::weights::DEFAULT_ZETA;
pub const DEFAULT_K_MAX: usize = 100;
pub const DEFAULT_SAMPLE_TIME: f64 = 1.0;
pub const DEFAULT_TARGET_INF_NORM: f64 = 4.64;
pub const CONSENSUS_DETREND_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("topology: {0}")]
    Graph(#[from] GraphError),
    #[error("weights: {0}")]
    Weights(#[from] WeightsError),
    #[error("geometry of channel {channel}: {source}")]
    Geometry { channel: usize, source: GeometryError },
    #[error("constraints: {0}")]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Rgp(#[from] RgpError),
    #[error(transparent)]
    Distributed(#[from] DistributedError),
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_zeta() -> f64 {
    DEFAULT_ZETA
}
fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_sample_time() -> f64 {
    DEFAULT_SAMPLE_TIME
}
fn default_workers() -> usize {
    1
}
fn default_target() -> f64 {
    DEFAULT_TARGET_INF_NORM
}
fn default_true() -> bool {
    true
}
fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_sample_time")]
    pub sample_time: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub detrend_mode: DetrendMode,
    #[serde(default, skip_serializing_if = "is_false")]
    pub precompute_constraints: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    pub topology: TopologySpec,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub constraints: ConstraintsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Centralized,
    Distributed,
    Compare,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "centralized" => Ok(Self::Centralized),
            "distributed" => Ok(Self::Distributed),
            "compare" => Ok(Self::Compare),
            other => Err(format!("unknown mode `{other}` (expected centralized, distributed or compare)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetrendMode {
    #[default]
    Exact,
    Consensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Copy the initial state onto the complete graph on the same
    /// junctions, zero on the extra channels, and run there.
    EmbedIntoComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Complete { m: usize },
    Path { m: usize },
    Star { m: usize },
    /// Edge-list file, relative to the scenario file.
    File { path: PathBuf },
    /// Inline 1-based junction pairs.
    Edges { m: usize, edges: Vec<[usize; 2]> },
    /// Shipped 22-junction, 25-channel demo network (not a real system).
    #[serde(rename = "synthetic_22_25")]
    Synthetic2225,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    #[default]
    None,
    Uniform {
        length: f64,
        width: f64,
        theta: f64,
        h_zero: f64,
        h_section: f64,
    },
    PerChannel {
        channels: Vec<ChannelShape>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Height,
    Flow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsSpec {
    #[serde(default)]
    pub units: Units,
    pub download: ConstraintProfile,
    pub upload: ConstraintProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
}

impl Default for ConstraintsSpec {
    fn default() -> Self {
        Self {
            units: Units::Height,
            download: ProfileKind::constant(5.0).into(),
            upload: ProfileKind::waveform_clamped(DEFAULT_WAVEFORM_FLOOR).into(),
            fault: None,
        }
    }
}

/// From step `start` on, every channel switches to the given profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub start: usize,
    pub download: ProfileKind,
    pub upload: ProfileKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Explicit {
        values: Vec<f64>,
    },
    /// ChaCha8 stream seeded from `seed`; entries uniform on [-1, 1],
    /// optionally made zero-mean, then scaled to the target sup norm.
    Random {
        seed: u64,
        #[serde(default = "default_target")]
        target_inf_norm: f64,
        #[serde(default = "default_true")]
        zero_mean: bool,
    },
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, PathBuf), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parse_scenario(&text)?, base))
}

impl Scenario {
    pub fn minimal(topology: TopologySpec, init: Option<InitSpec>) -> Self {
        Self {
            name: None,
            gamma: DEFAULT_GAMMA,
            zeta: DEFAULT_ZETA,
            k_max: DEFAULT_K_MAX,
            sample_time: DEFAULT_SAMPLE_TIME,
            mode: Mode::default(),
            detrend_mode: DetrendMode::default(),
            precompute_constraints: false,
            workers: 1,
            transform: None,
            topology,
            geometry: GeometrySpec::None,
            constraints: ConstraintsSpec::default(),
            init,
        }
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0, 1), got {}", self.zeta));
        }
        if !(self.sample_time > 0.0) {
            return bad(format!("sample_time must be positive, got {}", self.sample_time));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let Some(InitSpec::Random { target_inf_norm, .. }) = &self.init {
            if !(*target_inf_norm > 0.0 && target_inf_norm.is_finite()) {
                return bad(format!("target_inf_norm must be positive, got {target_inf_norm}"));
            }
        }
        if self.constraints.units == Units::Flow && self.geometry == GeometrySpec::None {
            return bad("flow-unit constraints need a channel geometry".into());
        }
        if self.transform.is_some() && matches!(self.geometry, GeometrySpec::PerChannel { .. }) {
            return bad("embed_into_complete cannot carry per-channel geometry".into());
        }
        self.constraints.download.default.validate()?;
        self.constraints.upload.default.validate()?;
        if let Some(f) = &self.constraints.fault {
            f.download.validate()?;
            f.upload.validate()?;
        }
        Ok(())
    }

    /// Replaces the seed of a random init, or installs a default random
    /// init when none is configured.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init = Some(match self.init {
            Some(InitSpec::Random {
                target_inf_norm,
                zero_mean,
                ..
            }) => InitSpec::Random {
                seed,
                target_inf_norm,
                zero_mean,
            },
            _ => InitSpec::Random {
                seed,
                target_inf_norm: DEFAULT_TARGET_INF_NORM,
                zero_mean: true,
            },
        });
        self
    }

    pub fn seed(&self) -> Option<u64> {
        match self.init {
            Some(InitSpec::Random { seed, .. }) => Some(seed),
            _ => None,
        }
    }

    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedScenario, ScenarioError> {
        ResolvedScenario::new(self.clone(), base_dir)
    }
}

/// Uniform draws on [-1, 1], optionally detrended, scaled to `target`.
pub fn random_init(n: usize, seed: u64, target: f64, zero_mean: bool) -> Result<Vec<f64>, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    if zero_mean {
        x = detrend(&x).x0;
    }
    let norm = inf_norm(&x);
    if norm == 0.0 {
        return Err(ScenarioError::Invalid("random init degenerated to zero".into()));
    }
    let scale = target / norm;
    Ok(x.into_iter().map(|v| v * scale).collect())
}

/// Carries a state on `source` over to `target` on the same junctions:
/// shared channels keep their value, the others start at zero.
pub fn embed_state(source: &JunctionTopology, target: &JunctionTopology, x: &[f64]) -> Vec<f64> {
    target
        .channels()
        .iter()
        .map(|&(a, b)| source.channel_index(a, b).map_or(0.0, |c| x[c]))
        .collect()
}

fn junctions_for(spec: &TopologySpec, base_dir: &Path) -> Result<JunctionTopology, ScenarioError> {
    Ok(match spec {
        TopologySpec::Complete { m } => JunctionTopology::complete(*m)?,
        TopologySpec::Path { m } => JunctionTopology::path(*m)?,
        TopologySpec::Star { m } => JunctionTopology::star(*m)?,
        TopologySpec::Synthetic2225 => JunctionTopology::synthetic_22_25(),
        TopologySpec::File { path } => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|source| ScenarioError::Io { path: full, source })?;
            JunctionTopology::parse_edge_list(&text)?
        }
        TopologySpec::Edges { m, edges } => {
            let mut pairs = Vec::with_capacity(edges.len());
            for (idx, &[a, b]) in edges.iter().enumerate() {
                if a == 0 || b == 0 {
                    return Err(ScenarioError::Invalid(format!("edge {} uses junction 0; ids are 1-based", idx + 1)));
                }
                pairs.push((a - 1, b - 1));
            }
            JunctionTopology::new(*m, pairs)?
        }
    })
}

/// Everything the engines need, derived once from a scenario.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub junctions: JunctionTopology,
    pub channels: ChannelTopology,
    pub weights: ConsensusWeights,
    pub spectral: SpectralSummary,
    pub geometry: Vec<ChannelGeometry>,
    /// Limits the run faces, fault included.
    pub limits: ChannelLimits,
    /// Limits the protocol was designed for.
    pub design_limits: ChannelLimits,
    /// Initial heights before detrending; absent when no init is configured.
    pub raw_init: Option<Vec<f64>>,
}

impl ResolvedScenario {
    fn new(scenario: Scenario, base_dir: &Path) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let source = junctions_for(&scenario.topology, base_dir)?;
        let source_n = source.channel_count();
        let mut raw_init = match &scenario.init {
            None => None,
            Some(InitSpec::Explicit { values }) => {
                if values.len() != source_n {
                    return Err(ScenarioError::Invalid(format!(
                        "init has {} values but the topology has {source_n} channels",
                        values.len()
                    )));
                }
                Some(values.clone())
            }
            Some(InitSpec::Random {
                seed,
                target_inf_norm,
                zero_mean,
            }) => Some(random_init(source_n, *seed, *target_inf_norm, *zero_mean)?),
        };
        let junctions = match scenario.transform {
            None => source,
            Some(Transform::EmbedIntoComplete) => {
                let complete = JunctionTopology::complete(source.junction_count())?;
                raw_init = raw_init.map(|x| embed_state(&source, &complete, &x));
                complete
            }
        };
        let channels = build_line_graph(&junctions)?;
        let n = channels.node_count();
        let weights = build_mh_weights(&channels);
        let spectral = spectral_summary(&weights, scenario.zeta)?;

        let shapes: Vec<ChannelShape> = match &scenario.geometry {
            GeometrySpec::None => Vec::new(),
            GeometrySpec::Uniform {
                length,
                width,
                theta,
                h_zero,
                h_section,
            } => vec![
                ChannelShape {
                    length: *length,
                    width: *width,
                    theta: *theta,
                    h_zero: *h_zero,
                    h_section: *h_section,
                };
                n
            ],
            GeometrySpec::PerChannel { channels } => {
                if channels.len() != n {
                    return Err(ScenarioError::Invalid(format!(
                        "geometry lists {} channels, topology has {n}",
                        channels.len()
                    )));
                }
                channels.clone()
            }
        };
        let geometry = shapes
            .into_iter()
            .enumerate()
            .map(|(i, s)| ChannelGeometry::new(s).map_err(|source| ScenarioError::Geometry { channel: i + 1, source }))
            .collect::<Result<Vec<_>, _>>()?;

        let c = &scenario.constraints;
        let design_limits = match c.units {
            Units::Height => ChannelLimits::new(n, c.download.clone(), c.upload.clone())?,
            Units::Flow => ChannelLimits::from_flows(c.download.clone(), c.upload.clone(), &geometry)?,
        };
        let limits = match &c.fault {
            None => design_limits.clone(),
            Some(f) => design_limits.with_fault(f.start, &f.download, &f.upload)?,
        };
        for k in 0..=scenario.k_max {
            limits.network_min(k)?;
        }
        Ok(Self {
            scenario,
            junctions,
            channels,
            weights,
            spectral,
            geometry,
            limits,
            design_limits,
            raw_init,
        })
    }

    pub fn n(&self) -> usize {
        self.channels.node_count()
    }

    pub fn params(&self) -> ProtocolParams {
        ProtocolParams {
            gamma: self.scenario.gamma,
            k_max: self.scenario.k_max,
            eta_lower: self.spectral.eta_lower,
            omega: omega_bound(&self.channels),
        }
    }

    /// Detrended initial state and the consensus steps it took (zero for
    /// exact detrending).
    pub fn initial_state(&self) -> Result<(Detrended, usize), ScenarioError> {
        let raw = self
            .raw_init
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("scenario has no init".into()))?;
        match self.scenario.detrend_mode {
            DetrendMode::Exact => Ok((detrend(raw), 0)),
            DetrendMode::Consensus => Ok(consensus_detrend(raw, &self.weights, CONSENSUS_DETREND_TOL, 1_000_000)?),
        }
    }

    /// eta_H for `x0_inf` under the given limits over the whole horizon.
    pub fn eta_upper_for(&self, x0_inf: f64, limits: &ChannelLimits) -> Result<f64, ScenarioError> {
        let p = self.params();
        Ok(eta_upper_bound(x0_inf, limits.horizon_min(p.k_max)?, p.omega, p.eta_lower))
    }

    pub fn topology_report(&self) -> Result<TopologyReport, ScenarioError> {
        let ct = &self.channels;
        let xi = xi_bounds(ct);
        let (rho, phi) = (ct.radius(), ct.diameter());
        let (eta_upper, x0_inf, rate) = match &self.raw_init {
            Some(_) => {
                let x0_inf = inf_norm(&self.initial_state()?.0.x0);
                let eta_h = self.eta_upper_for(x0_inf, &self.design_limits)?;
                (Some(eta_h), Some(x0_inf), Some(rate_bounds(eta_h, xi, rho)))
            }
            None => (None, None, None),
        };
        Ok(TopologyReport {
            name: self.scenario.name.clone(),
            junctions: self.junctions.junction_count(),
            channels: ct.node_count(),
            adjoint_edges: ct.edge_count(),
            varsigma_p: self.spectral.varsigma_p,
            d_min: ct.d_min(),
            d_max: ct.d_max(),
            omega: omega_bound(ct),
            eta_star: self.spectral.eta_star,
            eta_lower: self.spectral.eta_lower,
            eta_upper,
            x0_inf,
            min_limit: self.design_limits.horizon_min(self.scenario.k_max)?,
            xi_lower: xi.lower,
            xi_upper: xi.upper,
            rho,
            phi,
            r_index: r_index(ct.d_min(), ct.d_max(), rho, phi),
            r_hat_index: r_hat_index(ct.d_min(), ct.d_max(), rho),
            lambda_1: self.spectral.lambda_1,
            lambda_n_minus_1: self.spectral.lambda_n_minus_1,
            rate,
            r_hat: r_hat(ct.d_min(), ct.d_max(), rho),
        })
    }
}

/// Topological constants of a scenario's channel graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub name: Option<String>,
    pub junctions: usize,
    pub channels: usize,
    pub adjoint_edges: usize,
    pub varsigma_p: f64,
    pub d_min: usize,
    pub d_max: usize,
    pub omega: f64,
    pub eta_star: f64,
    pub eta_lower: f64,
    /// Needs an initial state; `None` otherwise.
    pub eta_upper: Option<f64>,
    pub x0_inf: Option<f64>,
    pub min_limit: f64,
    pub xi_lower: f64,
    pub xi_upper: f64,
    pub rho: usize,
    pub phi: usize,
    pub r_index: f64,
    pub r_hat_index: f64,
    pub lambda_1: f64,
    pub lambda_n_minus_1: f64,
    pub rate: Option<RateBounds>,
    pub r_hat: f64,
}

impl TopologyReport {
    pub fn to_text(&self) -> String {
        let na = || "n/a".to_string();
        let rows: Vec<(&str, String)> = vec![
            ("junctions", self.junctions.to_string()),
            ("channels", self.channels.to_string()),
            ("adjoint edges", self.adjoint_edges.to_string()),
            ("varsigma_P", format!("{:.3}", self.varsigma_p)),
            ("d_m", self.d_min.to_string()),
            ("d_M", self.d_max.to_string()),
            ("omega", format!("{:.3}", self.omega)),
            ("eta_star", format!("{:.4}", self.eta_star)),
            ("eta_L", format!("{:.4}", self.eta_lower)),
            ("eta_H", self.eta_upper.map_or_else(na, |v| format!("{v:.3}"))),
            ("||x(0)||_inf", self.x0_inf.map_or_else(na, |v| format!("{v:.3}"))),
            ("min c", format!("{:.4}", self.min_limit)),
            ("xi_lower", format!("{:.3}", self.xi_lower)),
            ("xi_upper", format!("{:.3}", self.xi_upper)),
            ("rho", self.rho.to_string()),
            ("phi", self.phi.to_string()),
            ("R", format!("{:.1}", self.r_index)),
            ("R_hat", format!("{:.1}", self.r_hat_index)),
            ("lambda_1", format!("{:.6}", self.lambda_1)),
            ("lambda_n-1", format!("{:.6}", self.lambda_n_minus_1)),
            ("r_upper", self.rate.map_or_else(na, |r| format!("{:.6}", r.upper))),
            ("r_lower", self.rate.map_or_else(na, |r| format!("{:.6}", r.lower))),
            ("r_hat", format!("{:.6}", self.r_hat)),
        ];
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        if let Some(name) = &self.name {
            out.push_str(&format!("# {name}\n"));
        }
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }
}
