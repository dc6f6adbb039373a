use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NodeSpec, ScenarioTree, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeriesKind {
    /// Period return rate `exp(g) - 1`; zero at the root.
    Return,
    /// Level driven by log-increments, e.g. a price; `initial` at the root.
    Level { initial: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: SeriesKind,
    /// Mean of the Gaussian log-increment.
    pub drift: f64,
    /// Standard deviation of the Gaussian log-increment.
    pub volatility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub series: Vec<SeriesSpec>,
}

impl Default for SyntheticParams {
    /// Three assets and an oil price that starts at the regime threshold.
    fn default() -> Self {
        let asset = |name: &str, drift, volatility| SeriesSpec {
            name: name.into(),
            kind: SeriesKind::Return,
            drift,
            volatility,
        };
        Self {
            series: vec![
                asset("r1", 0.004, 0.03),
                asset("r2", 0.006, 0.05),
                asset("r3", 0.008, 0.07),
                SeriesSpec {
                    name: "oil".into(),
                    kind: SeriesKind::Level { initial: 60.0 },
                    drift: 0.0,
                    volatility: 0.08,
                },
            ],
        }
    }
}

/// Seeded synthetic tree with equal conditional probabilities per branching.
///
/// Nodes are created breadth-first; each child draws one Gaussian increment per
/// series, in series order, from a single ChaCha stream seeded with `seed`.
pub fn generate_synthetic(branching: &[usize], params: &SyntheticParams, seed: u64) -> Result<ScenarioTree, TreeError> {
    if branching.is_empty() {
        return Err(TreeError::InvalidParams("branching vector is empty".into()));
    }
    if let Some(pos) = branching.iter().position(|&b| b == 0) {
        return Err(TreeError::InvalidParams(format!("branching count at stage {pos} is zero")));
    }
    let mut dists = Vec::with_capacity(params.series.len());
    for s in &params.series {
        if !(s.volatility > 0.0 && s.volatility.is_finite()) {
            return Err(TreeError::InvalidParams(format!("series {} has volatility {}", s.name, s.volatility)));
        }
        if !s.drift.is_finite() {
            return Err(TreeError::InvalidParams(format!("series {} has drift {}", s.name, s.drift)));
        }
        if let SeriesKind::Level { initial } = s.kind {
            if !(initial > 0.0 && initial.is_finite()) {
                return Err(TreeError::InvalidParams(format!("series {} starts at {initial}", s.name)));
            }
        }
        dists.push(Normal::new(s.drift, s.volatility).expect("checked parameters"));
    }

    let root_values = params
        .series
        .iter()
        .map(|s| match s.kind {
            SeriesKind::Return => 0.0,
            SeriesKind::Level { initial } => initial,
        })
        .collect();
    let mut specs = vec![NodeSpec { parent: None, stage: 0, prob_conditional: 1.0, realization: root_values }];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frontier = vec![0usize];
    for (t, &b) in branching.iter().enumerate() {
        let prob = 1.0 / b as f64;
        let mut next = Vec::with_capacity(frontier.len() * b);
        for &parent in &frontier {
            for _ in 0..b {
                let realization = params
                    .series
                    .iter()
                    .zip(&dists)
                    .enumerate()
                    .map(|(k, (s, d))| {
                        let g: f64 = d.sample(&mut rng);
                        match s.kind {
                            SeriesKind::Return => g.exp() - 1.0,
                            SeriesKind::Level { .. } => specs[parent].realization[k] * g.exp(),
                        }
                    })
                    .collect();
                next.push(specs.len());
                specs.push(NodeSpec { parent: Some(parent), stage: t + 1, prob_conditional: prob, realization });
            }
        }
        frontier = next;
    }
    let names = params.series.iter().map(|s| s.name.clone()).collect();
    ScenarioTree::from_nodes(branching.len(), names, specs)
}
