use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::ProtocolConfig;
use crate::SimTime;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Per-second probabilities of the three churn events.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Churn {
    pub insertion_request: f64,
    pub node_turn_off: f64,
    pub node_turn_on: f64,
}

impl Churn {
    pub const NONE: Churn = Churn {
        insertion_request: 0.0,
        node_turn_off: 0.0,
        node_turn_on: 0.0,
    };

    /// Same probability for all three events.
    pub fn uniform(p: f64) -> Self {
        Churn {
            insertion_request: p,
            node_turn_off: p,
            node_turn_on: p,
        }
    }
}

/// Random-waypoint field. Lengths in meters, speeds in m/s, pause in
/// seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometric {
    pub area_side: f64,
    pub speed_max: f64,
    pub pause: f64,
    pub data_range: f64,
    pub secure_range: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Everyone hears everyone, secure channel included.
    FullMesh,
    Geometric(Geometric),
}

/// A timed action, for hand-written scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// A new device asks `authenticator` for admission, optionally spliced
    /// between two cycle-adjacent vertices.
    Insert {
        authenticator: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        between: Option<[u32; 2]>,
    },
    TurnOff {
        node: u32,
    },
    TurnOn {
        node: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verifier: Option<u32>,
    },
    /// A foreign device asks for access under `claimed_id`.
    SybilAccess {
        claimed_id: u32,
    },
    /// A foreign device announces the insertion of `claimed_id`.
    SybilInsert {
        claimed_id: u32,
    },
    /// A foreign device answers the next proof-of-life window under every
    /// id in `ids`.
    SybilAnswers {
        ids: Vec<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAction {
    /// Seconds.
    pub at: f64,
    #[serde(flatten)]
    pub action: Action,
}

/// One simulation run. Times are in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_initial: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub l: u32,
    pub duration: f64,
    pub seed: u64,
    pub churn: Churn,
    pub connectivity: Connectivity,
    pub termination_threshold: usize,
    #[serde(default)]
    pub admission_deny_prob: f64,
    /// Dealer's cycle over ids `0..n_initial`; drawn at random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_cycle: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptedAction>,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if self.n_initial < 4 {
            return invalid("n_initial must be at least 4");
        }
        if self.m < self.n_initial || self.m > self.n_initial * (self.n_initial - 1) / 2 {
            return invalid("m must lie between n_initial and n_initial*(n_initial-1)/2");
        }
        if !(2 * self.m).is_multiple_of(self.n_initial) || 2 * self.m / self.n_initial >= self.n_initial {
            return invalid("2m/n_initial must be an integer below n_initial");
        }
        if !finite_pos(self.t) {
            return invalid("T must be positive");
        }
        if self.l == 0 {
            return invalid("l must be at least 1");
        }
        if !finite_pos(self.duration) {
            return invalid("duration must be positive");
        }
        let c = self.churn;
        if ![
            c.insertion_request,
            c.node_turn_off,
            c.node_turn_on,
            self.admission_deny_prob,
        ]
        .into_iter()
        .all(prob)
        {
            return invalid("probabilities must lie in [0, 1]");
        }
        if self.termination_threshold < 3 {
            return invalid("termination_threshold must be at least 3");
        }
        if let Connectivity::Geometric(g) = self.connectivity {
            if ![g.area_side, g.speed_max, g.data_range, g.secure_range]
                .into_iter()
                .all(finite_pos)
            {
                return invalid("geometric lengths and speed must be positive");
            }
            if !(g.pause.is_finite() && g.pause >= 0.0) {
                return invalid("pause must be non-negative");
            }
            if g.secure_range > g.data_range {
                return invalid("secure_range cannot exceed data_range");
            }
        }
        if let Some(cycle) = &self.initial_cycle {
            let ids: BTreeSet<u32> = cycle.iter().copied().collect();
            if cycle.len() != self.n_initial || ids != (0..self.n_initial as u32).collect() {
                return invalid("initial_cycle must visit ids 0..n_initial exactly once");
            }
        }
        if self.script.iter().any(|a| !(a.at.is_finite() && a.at >= 0.0)) {
            return invalid("script times must be non-negative");
        }
        Ok(())
    }

    /// Degree of the initial graph, used for inserted nodes too.
    pub fn insert_degree(&self) -> usize {
        (2 * self.m / self.n_initial).max(2)
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, ConfigError> {
        ProtocolConfig::new(
            SimTime::from_secs_f64(self.t),
            self.l,
            self.termination_threshold,
            self.insert_degree(),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Full-mesh scenario with uniform churn `p` and `m = 2n`.
    pub fn full_mesh(n: usize, t: f64, p: f64, duration: f64, seed: u64) -> Self {
        ScenarioConfig {
            n_initial: n,
            m: 2 * n,
            t,
            l: 20,
            duration,
            seed,
            churn: Churn::uniform(p),
            connectivity: Connectivity::FullMesh,
            termination_threshold: 3,
            admission_deny_prob: 0.0,
            initial_cycle: None,
            script: Vec::new(),
        }
    }
}
