//! Scenario configuration files (TOML).
//!
//! Every table rejects unknown keys. See `configs/case1.toml` in the
//! repository for an annotated example of each section.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ingest_trajectories;
use crate::micro::{
    AccelSegment, CutIn, InitialCondition, Integrator, LeaderMotion, Maneuver, Mode,
    OscillationSpec, Scenario, SuperposedOscillation, Topology,
};
use crate::model::ControlParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub params: ControlParams,
    pub platoon: PlatoonConfig,
    pub leader: LeaderConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    2024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonConfig {
    /// Vehicles including the leader.
    pub vehicles: usize,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub initial: InitialConfig,
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Equilibrium,
    SteadyOscillation,
    Gaps {
        gaps: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        speed: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LeaderConfig {
    Oscillation {
        v_e: f64,
        #[serde(default)]
        modes: Vec<Mode>,
    },
    Maneuver {
        #[serde(default)]
        x0: f64,
        v0: f64,
        #[serde(default)]
        segments: Vec<AccelSegment>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oscillation: Option<SuperposedOscillation>,
    },
    /// Trajectory CSV; relative paths resolve against the config file.
    Recorded {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vehicle_id: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventConfig {
    CutIn {
        time: f64,
        ahead_of: usize,
        gap: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    /// Characteristic paths from the leader against constant-speed paths.
    #[default]
    Characteristic,
    /// Engagement front, shock and bounded characteristics for a free-flow start.
    PhaseTransition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub analysis: Analysis,
    /// First origin time on the leader [s].
    #[serde(default)]
    pub origin_start: f64,
    /// Origins are placed strictly before this time; defaults to the end of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_end: Option<f64>,
    #[serde(default = "default_origin_spacing")]
    pub origin_spacing: f64,
    /// Constant-speed baseline slope; defaults to `-L / tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_speed: Option<f64>,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionConfig>,
}

fn default_origin_spacing() -> f64 {
    1.0
}

fn default_bin_width() -> f64 {
    crate::metrics::DEFAULT_BIN_WIDTH
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            analysis: Analysis::Characteristic,
            origin_start: 0.0,
            origin_end: None,
            origin_spacing: default_origin_spacing(),
            baseline_speed: None,
            bin_width: default_bin_width(),
            transition: None,
        }
    }
}

/// Settings for the phase-transition analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    /// Congested equilibrium speed; when absent it is the mean of the leader
    /// speed over `[fourier_start, fourier_end]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_e: Option<f64>,
    #[serde(default)]
    pub fourier_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_end: Option<f64>,
    #[serde(default = "default_modes")]
    pub fourier_modes: usize,
    #[serde(default = "default_settle_margin")]
    pub settle_margin: f64,
}

fn default_modes() -> usize {
    crate::signal::DEFAULT_MODES
}

fn default_settle_margin() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    /// Vehicles on the ring used for the micro/PDE comparison.
    #[serde(default = "default_ring_vehicles")]
    pub ring_vehicles: usize,
    #[serde(default = "default_cells")]
    pub cells: usize,
    /// Target cell width [m]; overrides `cells` once the ring length is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_output_step")]
    pub output_step: f64,
    /// Controller used on the ring; the scenario's own parameters when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ControlParams>,
}

fn default_ring_vehicles() -> usize {
    100
}
fn default_cells() -> usize {
    200
}
fn default_cfl() -> f64 {
    0.5
}
fn default_horizon() -> f64 {
    60.0
}
fn default_output_step() -> f64 {
    1.0
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            ring_vehicles: default_ring_vehicles(),
            cells: default_cells(),
            dx: None,
            cfl: default_cfl(),
            horizon: default_horizon(),
            output_step: default_output_step(),
            params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write full round-trip precision instead of 6 significant digits.
    #[serde(default)]
    pub full_precision: bool,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; a recorded leader path is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let LeaderConfig::Recorded { path: p, .. } = &mut cfg.leader {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn leader_motion(&self) -> Result<LeaderMotion> {
        Ok(match &self.leader {
            LeaderConfig::Oscillation { v_e, modes } => {
                LeaderMotion::Oscillation(OscillationSpec {
                    v_e: *v_e,
                    modes: modes.clone(),
                })
            }
            LeaderConfig::Maneuver {
                x0,
                v0,
                segments,
                oscillation,
            } => LeaderMotion::Maneuver(Maneuver {
                x0: *x0,
                v0: *v0,
                segments: segments.clone(),
                oscillation: oscillation.clone(),
            }),
            LeaderConfig::Recorded { path, vehicle_id } => {
                let trajs = ingest_trajectories(path)?;
                let traj = match vehicle_id {
                    Some(id) => {
                        trajs
                            .into_iter()
                            .find(|t| t.vehicle_id == *id)
                            .ok_or_else(|| {
                                Error::Config(format!(
                                    "vehicle {id} not found in {}",
                                    path.display()
                                ))
                            })?
                    }
                    None => trajs.into_iter().next().ok_or_else(|| {
                        Error::Empty(format!("trajectory file {}", path.display()))
                    })?,
                };
                LeaderMotion::Recorded(crate::io::rebase_time(traj))
            }
        })
    }

    /// The open-road platoon simulation described by this config.
    pub fn scenario(&self) -> Result<Scenario> {
        let initial = match &self.platoon.initial {
            InitialConfig::Equilibrium => InitialCondition::Equilibrium,
            InitialConfig::SteadyOscillation => InitialCondition::SteadyOscillation,
            InitialConfig::Gaps { gaps, speed } => InitialCondition::Gaps {
                gaps: gaps.clone(),
                speed: *speed,
            },
        };
        let cut_ins = self
            .events
            .iter()
            .map(|e| match *e {
                EventConfig::CutIn {
                    time,
                    ahead_of,
                    gap,
                } => CutIn {
                    time,
                    ahead_of,
                    gap,
                },
            })
            .collect();
        let sc = Scenario {
            params: self.params,
            vehicles: self.platoon.vehicles,
            topology: Topology::Open {
                leader: self.leader_motion()?,
            },
            initial,
            cut_ins,
            duration: self.platoon.duration,
            dt: self.platoon.dt,
            integrator: self.platoon.integrator,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.metrics.origin_spacing > 0.0) || !(self.metrics.bin_width > 0.0) {
            return Err(Error::Config(
                "metrics.origin_spacing and metrics.bin_width must be > 0".into(),
            ));
        }
        if self.metrics.analysis == Analysis::PhaseTransition && self.metrics.transition.is_none() {
            return Err(Error::Config(
                "phase-transition analysis needs a [metrics.transition] table".into(),
            ));
        }
        if self.pde.ring_vehicles < 2
            || self.pde.cells < 4
            || !(self.pde.cfl > 0.0 && self.pde.cfl < 1.0)
            || self.pde.dx.is_some_and(|dx| !(dx > 0.0))
        {
            return Err(Error::Config(
                "pde needs ring_vehicles >= 2, cells >= 4, dx > 0 and 0 < cfl < 1".into(),
            ));
        }
        Ok(())
    }
}
