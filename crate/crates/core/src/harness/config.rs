//! Harness configuration, read from TOML. Every key has a default, so an empty
//! file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintForm;
use crate::coordinator::MethodKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_agents: usize,
    pub n_obstacles: usize,
    /// Arena width and height; the arena spans `[0, w] × [0, h]`.
    pub arena: [f64; 2],
    pub r: f64,
    pub clearance: f64,
    /// Obstacle centers lie within this distance of the straight start-to-goal path.
    pub path_band: f64,
    /// Minimum obstacle separation as a multiple of `r`.
    pub separation: f64,
    pub gamma: f64,
    pub dist: f64,
    pub slack: f64,
    pub dt: f64,
    pub t_e: usize,
    pub horizon: usize,
    pub goal_weight: f64,
    pub velocity_weight: f64,
    pub effort_weight: f64,
    pub lookahead: f64,
    /// As a multiple of `r`.
    pub match_tol_factor: f64,
    /// Generate starts that satisfy the safety-certificate premises.
    pub certificate: bool,
    pub form: ConstraintForm,
    pub method: MethodKind,
    /// Stop once every agent is this close to its goal and nearly at rest.
    pub goal_tol: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_agents: 2,
            n_obstacles: 3,
            arena: [10.0, 10.0],
            r: 1.0,
            clearance: 0.5,
            path_band: 2.0,
            separation: 3.0,
            gamma: 0.3,
            dist: 1.5,
            slack: 0.3,
            dt: 0.1,
            t_e: 300,
            horizon: 20,
            goal_weight: 1.0,
            velocity_weight: 1.0,
            effort_weight: 0.05,
            lookahead: 1.5,
            match_tol_factor: 0.25,
            certificate: false,
            form: ConstraintForm::Cbf,
            method: MethodKind::Kkt,
            goal_tol: 0.05,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Config("n_agents must be at least 1".into()));
        }
        let positive = [
            ("arena width", self.arena[0]),
            ("arena height", self.arena[1]),
            ("r", self.r),
            ("path_band", self.path_band),
            ("dist", self.dist),
            ("slack", self.slack),
            ("dt", self.dt),
            ("match_tol_factor", self.match_tol_factor),
            ("goal_tol", self.goal_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.slack >= self.dist {
            return Err(Error::Config("slack must be smaller than dist".into()));
        }
        if self.horizon == 0 || self.t_e == 0 {
            return Err(Error::Config("horizon and t_e must be positive".into()));
        }
        Ok(())
    }

    pub fn match_tol(&self) -> f64 {
        self.match_tol_factor * self.r
    }
}

/// One cell of the method matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodConfig {
    pub form: ConstraintForm,
    pub method: MethodKind,
}

impl MethodConfig {
    pub const ALL: [MethodConfig; 4] = [
        MethodConfig { form: ConstraintForm::Cbf, method: MethodKind::Kkt },
        MethodConfig { form: ConstraintForm::Cbf, method: MethodKind::InputMatching },
        MethodConfig { form: ConstraintForm::Circle, method: MethodKind::Kkt },
        MethodConfig { form: ConstraintForm::Circle, method: MethodKind::InputMatching },
    ];

    pub fn label(&self) -> &'static str {
        match (self.form, self.method) {
            (ConstraintForm::Cbf, MethodKind::Kkt) => "cbf-kkt",
            (ConstraintForm::Cbf, MethodKind::InputMatching) => "cbf-im",
            (ConstraintForm::Circle, MethodKind::Kkt) => "circle-kkt",
            (ConstraintForm::Circle, MethodKind::InputMatching) => "circle-im",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown configuration `{s}`; expected one of cbf-kkt, cbf-im, circle-kkt, circle-im")))
    }

    /// Parses a comma-separated list such as `cbf-kkt,circle-im`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloParams {
    pub rollouts: usize,
    pub base_seed: u64,
    pub matrix: Vec<String>,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        Self {
            rollouts: 20,
            base_seed: 0,
            matrix: MethodConfig::ALL.iter().map(|m| m.label().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub resolution: usize,
    /// Half-width of the box around the learner, as a multiple of `r`.
    pub half_width_factor: f64,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self { resolution: 41, half_width_factor: 2.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiTeamParams {
    pub agents_per_team: usize,
    pub dist: f64,
    pub slack: f64,
    /// Required distance between team centers.
    pub threshold: f64,
    pub v_max: f64,
    pub t_e: usize,
}

impl Default for MultiTeamParams {
    fn default() -> Self {
        Self { agents_per_team: 2, dist: 1.0, slack: 0.2, threshold: 1.0, v_max: 3.0, t_e: 300 }
    }
}

/// Overrides applied to `scenario` for safety-certificate runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateParams {
    pub n_obstacles: usize,
    pub seeds: usize,
}

impl Default for CertificateParams {
    fn default() -> Self {
        Self { n_obstacles: 1, seeds: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub scenario: ScenarioParams,
    pub montecarlo: MonteCarloParams,
    pub sweep: SweepParams,
    pub multi_team: MultiTeamParams,
    pub certificate: CertificateParams,
}

impl HarnessConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Scenario parameters with the certificate premises switched on.
    pub fn certificate_scenario(&self) -> ScenarioParams {
        ScenarioParams {
            certificate: true,
            n_obstacles: self.certificate.n_obstacles,
            form: ConstraintForm::Cbf,
            ..self.scenario.clone()
        }
    }

    pub fn matrix(&self) -> Result<Vec<MethodConfig>> {
        self.montecarlo.matrix.iter().map(|s| MethodConfig::parse(s)).collect()
    }
}
