use super::{ExperimentConfig, Model};
use crate::ambiguity::{build_state_dependent, default_lipschitz, default_lipschitz_slope, SpecPolicy};
use crate::lp::Relation;
use crate::multistage::{AffineReward, DecisionBox, MultistageProblem, NodeConstraint};
use crate::tree::ScenarioTree;
use crate::utility::Grid;
use crate::{Error, Result};

/// Column positions of the market data in a tree.
#[derive(Debug, Clone)]
pub struct Market {
    pub assets: Vec<usize>,
    pub price: usize,
}

impl Market {
    pub fn locate(tree: &ScenarioTree, config: &ExperimentConfig) -> Result<Self> {
        let find = |name: &str| {
            tree.series_index(name).ok_or_else(|| Error::Config(format!("tree has no series named {name:?}")))
        };
        let assets = config.assets.iter().map(|a| find(a)).collect::<Result<Vec<_>>>()?;
        if assets.is_empty() {
            return Err(Error::Config("at least one asset series is needed".into()));
        }
        let price = find(&config.price_series)?;
        for s in 0..tree.len() {
            let p = tree.realization(s, price);
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidInput(format!("node {s}: price {p} is not positive")));
            }
        }
        Ok(Self { assets, price })
    }
}

/// Upper bound on the wealth available at every node, starting from `w0`
/// and letting every asset earn the best return on offer.
pub fn wealth_bounds(tree: &ScenarioTree, market: &Market, w0: f64) -> Vec<f64> {
    let mut w = vec![0.0; tree.len()];
    for s in 0..tree.len() {
        w[s] = match tree.parent(s) {
            None => w0,
            Some(p) => {
                let growth = market.assets.iter().map(|&k| 1.0 + tree.realization(s, k)).fold(0.0, f64::max);
                w[p] * growth
            }
        };
    }
    w
}

/// Largest reward `q(s) p(i)` any child can see, the scale that maps rewards
/// into `[0, 1]`.
pub fn reward_scale(tree: &ScenarioTree, market: &Market, w0: f64) -> f64 {
    let w = wealth_bounds(tree, market, w0);
    let mut c: f64 = 0.0;
    for s in tree.non_leaves() {
        let ps = tree.realization(s, market.price);
        for &i in tree.children(s) {
            c = c.max(w[s] * tree.realization(i, market.price) / ps);
        }
    }
    c
}

/// Investment and consumption on `tree`. At node `s` the decision is
/// `(x_1, ..., x_n, q)`: holdings after rebalancing and the quantity of the
/// good bought at price `p(s)`. The root spends `w0`; other nodes spend what
/// the parent's holdings earned. Nodes whose children are leaves consume
/// everything. The reward at child `i` is `q(s) p(i) / C`. Pairwise answers
/// are drawn with the first of `config.seeds`.
pub fn build_investment_consumption(tree: &ScenarioTree, config: &ExperimentConfig) -> Result<MultistageProblem> {
    let market = Market::locate(tree, config)?;
    let n = market.assets.len();
    let w0 = config.initial_wealth;
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(Error::Config(format!("initial wealth must be positive, got {w0}")));
    }
    let wealth = wealth_bounds(tree, &market, w0);
    let c = match config.reward_scale {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(Error::Config(format!("reward scale must be positive, got {c}"))),
        None => reward_scale(tree, &market, w0),
    };
    let grid = Grid::uniform(0.0, 1.0, config.breakpoints)?;

    let len = tree.len();
    let mut boxes = vec![DecisionBox::default(); len];
    let mut constraints = vec![Vec::new(); len];
    let mut rewards = vec![None; len];
    for s in tree.non_leaves() {
        let ps = tree.realization(s, market.price);
        let last = tree.children(s).iter().all(|&i| tree.is_leaf(i));
        let hold = if last { 0.0 } else { wealth[s] };
        let mut upper = vec![hold; n];
        upper.push(wealth[s] / ps);
        boxes[s] = DecisionBox::new(vec![0.0; n + 1], upper)?;
        let mut own: Vec<(usize, f64)> = (0..n).map(|k| (k, 1.0)).collect();
        own.push((n, ps));
        let (parent, rhs) = match tree.parent(s) {
            None => (Vec::new(), w0),
            Some(_) => (
                market.assets.iter().enumerate().map(|(k, &col)| (k, -(1.0 + tree.realization(s, col)))).collect(),
                0.0,
            ),
        };
        constraints[s].push(NodeConstraint { own, parent, relation: Relation::Eq, rhs });
        for &i in tree.children(s) {
            let mut coeffs = vec![0.0; n + 1];
            coeffs[n] = tree.realization(i, market.price) / c;
            rewards[i] = Some(AffineReward { coeffs, offset: 0.0 });
        }
    }

    let l = config.lipschitz.unwrap_or_else(default_lipschitz);
    let l_tilde = config.lipschitz_slope.unwrap_or_else(default_lipschitz_slope);
    let policy = match config.model {
        Model::ProPc => SpecPolicy::PairwiseRegime {
            k: config.questions,
            seed: config.seeds.first().copied().unwrap_or(0),
            l,
            l_tilde,
            price_series: market.price,
        },
        Model::ProKan => SpecPolicy::KantorovichRegime { radius: config.radius, l, l_tilde, price_series: market.price },
        Model::MspTrue | Model::MspPln => {
            SpecPolicy::KantorovichRegime { radius: 0.0, l, l_tilde, price_series: market.price }
        }
    };
    let ambiguity = build_state_dependent(tree, &grid, &policy)?;
    MultistageProblem::new(tree.clone(), boxes, rewards, constraints, ambiguity, grid)
}
