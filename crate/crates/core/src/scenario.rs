//! Declarative scenario files (TOML) and the built-in six-agent example.
//!
//! A scenario file has sections `meta`, `graph`, `plants`, `costs`,
//! `controller` and `sim`. Unknown keys are rejected during parsing so typos
//! surface before any computation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, Scheme};
use crate::costs::{self, CostEnsemble, CostFunction, CostTerm};
use crate::graph;
use crate::plant::{self, AgentPlant, GainPair};
use crate::sim::{InitialState, Scenario};
use crate::{Error, Result};

/// Seed for the built-in scenario. Chosen so that agent 5's output stays
/// inside its logarithm's domain (`y_b > -3`) under all three schemes over
/// the default horizons.
pub const EXAMPLE1_SEED: u64 = 35;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub meta: MetaSection,
    pub graph: GraphSection,
    pub plants: Vec<PlantSection>,
    pub costs: CostsSection,
    pub controller: ControllerSection,
    pub sim: SimSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub nodes: usize,
    /// Undirected weighted edges `(i, j, weight)`.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// Row-major state matrix.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Explicit gains override pseudo-inverse synthesis when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_alpha: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_beta: Option<Vec<Vec<f64>>>,
    /// Explicit initial state; absent means drawn from the sim init box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    /// Named built-in ensemble; currently only `"example1"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<CostSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub dim: usize,
    pub terms: Vec<CostTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_convexity_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub scheme: Scheme,
    /// Ensemble curvature constants; required when any cost lacks analytic
    /// constants (the bounds cannot be derived otherwise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_under: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub strict_bounds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Uniform box for initial states without an explicit vector.
    #[serde(default = "default_init_box")]
    pub init_box: (f64, f64),
    #[serde(default = "default_lambda_gamma")]
    pub lambda_gamma: f64,
}

fn default_record_every() -> usize {
    10
}

fn default_init_box() -> (f64, f64) {
    (-10.0, 10.0)
}

fn default_lambda_gamma() -> f64 {
    1.0
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Resolve the declarative file into a runnable scenario, synthesizing
    /// gains where none are given and validating every cross-section
    /// dimension.
    pub fn build(&self) -> Result<Scenario> {
        let graph = graph::build_graph(self.graph.nodes, &self.graph.edges)?;
        let costs = self.build_costs()?;

        let mut plants = Vec::with_capacity(self.plants.len());
        let mut gains = Vec::with_capacity(self.plants.len());
        let mut explicit_init = Vec::new();
        for (i, ps) in self.plants.iter().enumerate() {
            let p = AgentPlant::new(
                to_matrix(&ps.a, &format!("plant {i} A"))?,
                to_matrix(&ps.b, &format!("plant {i} B"))?,
                to_matrix(&ps.c, &format!("plant {i} C"))?,
            )?;
            let g = match (&ps.k_alpha, &ps.k_beta) {
                (Some(ka), Some(kb)) => GainPair {
                    k_alpha: to_matrix(ka, &format!("plant {i} k_alpha"))?,
                    k_beta: to_matrix(kb, &format!("plant {i} k_beta"))?,
                },
                (None, None) => plant::synthesize_gains(&p)?,
                _ => {
                    return Err(Error::InvalidScenario(format!(
                        "plant {i}: k_alpha and k_beta must be given together"
                    )))
                }
            };
            if let Some(x0) = &ps.initial_state {
                explicit_init.push(DVector::from_vec(x0.clone()));
            }
            plants.push(p);
            gains.push(g);
        }
        if !explicit_init.is_empty() && explicit_init.len() != plants.len() {
            return Err(Error::InvalidScenario(
                "initial states must be given for all agents or none".into(),
            ));
        }

        let w_bar = self
            .controller
            .w_bar
            .or_else(|| costs.w_bar())
            .ok_or_else(|| {
                Error::InvalidScenario(
                    "controller.w_bar is required when costs lack analytic constants".into(),
                )
            })?;
        let m_under = self
            .controller
            .m_under
            .or_else(|| costs.m_under())
            .ok_or_else(|| {
                Error::InvalidScenario(
                    "controller.m_under is required when costs lack analytic constants".into(),
                )
            })?;
        let mut controller = ControllerConfig::new(
            self.controller.scheme,
            w_bar,
            m_under,
            graph.lambda_max(),
            self.controller.delta,
        )?;
        if let Some(xi) = self.controller.xi {
            controller.xi = xi;
        }
        if let Some(kappa) = self.controller.kappa {
            controller.kappa = kappa;
        }
        controller.strict_bounds = self.controller.strict_bounds;

        let init = if explicit_init.is_empty() {
            let (lo, hi) = self.sim.init_box;
            InitialState::RandomBox { lo, hi }
        } else {
            InitialState::Explicit(explicit_init)
        };

        Ok(Scenario {
            graph,
            plants,
            gains,
            costs,
            controller,
            horizon: self.sim.horizon,
            dt: self.sim.dt,
            seed: self.sim.seed,
            record_every: self.sim.record_every,
            init,
            initial_eta: None,
            lambda_gamma: self.sim.lambda_gamma,
        })
    }

    fn build_costs(&self) -> Result<CostEnsemble> {
        match (&self.costs.builtin, self.costs.functions.is_empty()) {
            (Some(name), true) => match name.as_str() {
                "example1" => Ok(costs::example1_costs()),
                other => Err(Error::InvalidScenario(format!(
                    "unknown built-in cost ensemble {other:?}"
                ))),
            },
            (None, false) => CostEnsemble::new(
                self.costs
                    .functions
                    .iter()
                    .map(|s| {
                        CostFunction::new(
                            s.dim,
                            s.terms.clone(),
                            s.lipschitz_w,
                            s.strong_convexity_m,
                        )
                    })
                    .collect(),
            ),
            _ => Err(Error::InvalidScenario(
                "costs must give exactly one of `builtin` or `functions`".into(),
            )),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::InvalidScenario(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidScenario(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// The built-in six-agent scenario: ring topology with unit weights,
/// heterogeneous plants, the six example costs, and the default sampling
/// period 0.2.
///
/// The curvature constants are effective ensemble values over the initial
/// box (the log-sum-exp cost has no positive global strong-convexity
/// constant); they feed the `xi`/`kappa`/`tau0` bounds only.
pub fn example1(scheme: Scheme) -> ScenarioFile {
    let plants = plant::example1_plants();
    let plant_sections = plants
        .iter()
        .map(|p| PlantSection {
            a: matrix_rows(p.a_mat()),
            b: matrix_rows(p.b_mat()),
            c: matrix_rows(p.c_mat()),
            k_alpha: None,
            k_beta: None,
            initial_state: None,
        })
        .collect();
    let horizon = match scheme {
        Scheme::Continuous => 30.0,
        Scheme::Periodic | Scheme::EventTriggered => 60.0,
    };
    ScenarioFile {
        meta: MetaSection {
            name: "example1".into(),
            description: "Six heterogeneous agents on a unit-weight ring with the built-in \
                          cost ensemble"
                .into(),
        },
        graph: GraphSection {
            nodes: 6,
            edges: (0..6).map(|i| (i, (i + 1) % 6, 1.0)).collect(),
        },
        plants: plant_sections,
        costs: CostsSection {
            builtin: Some("example1".into()),
            functions: Vec::new(),
        },
        controller: ControllerSection {
            scheme,
            w_bar: Some(4.0),
            m_under: Some(1.0),
            xi: None,
            kappa: None,
            delta: if scheme.is_sampled() { Some(0.2) } else { None },
            strict_bounds: false,
        },
        sim: SimSection {
            horizon,
            dt: 1e-3,
            seed: EXAMPLE1_SEED,
            record_every: 10,
            init_box: (-10.0, 10.0),
            lambda_gamma: 1.0,
        },
    }
}

/// Look up a scenario by path or built-in name.
pub fn load(path_or_name: &str) -> Result<ScenarioFile> {
    if path_or_name == "example1" {
        return Ok(example1(Scheme::Continuous));
    }
    let text = std::fs::read_to_string(path_or_name)?;
    ScenarioFile::from_toml(&text)
}
