use mspro::experiment::{
    build_investment_consumption, rows_to_csv, run, run_with_policy, solve_model, summarize, sweep, with_param,
    ExperimentConfig, Model, SweepParam, CSV_HEADER,
};
use mspro::tree::{NodeSpec, ScenarioTree};
use mspro::utility::UtilityFunction;

fn small(model: Model) -> ExperimentConfig {
    ExperimentConfig { branching: vec![2, 2], breakpoints: 8, model, seeds: vec![3], ..Default::default() }
}

/// A chain with one asset, zero returns and unit price.
fn flat_chain(stages: usize) -> ScenarioTree {
    let specs = (0..=stages)
        .map(|t| NodeSpec {
            parent: t.checked_sub(1),
            stage: t,
            prob_conditional: 1.0,
            realization: vec![0.0, 1.0],
        })
        .collect();
    ScenarioTree::from_nodes(stages, vec!["r1".into(), "oil".into()], specs).unwrap()
}

fn flat_config(model: Model) -> ExperimentConfig {
    ExperimentConfig {
        assets: vec!["r1".into()],
        price_series: "oil".into(),
        breakpoints: 5,
        model,
        ..Default::default()
    }
}

#[test]
fn degenerate_single_stage_market() {
    let tree = flat_chain(1);
    let cfg = flat_config(Model::MspPln);
    let problem = build_investment_consumption(&tree, &cfg).unwrap();
    let policy = solve_model(&problem, &cfg).unwrap();
    // Holdings are zero at the last stage, so the whole budget is consumed.
    assert!((policy.decisions[0][1] - 1.0).abs() < 1e-9);
    assert!(policy.decisions[0][0].abs() < 1e-9);
    let u = mspro::ambiguity::regime_nominal(1.0);
    let expected = mspro::utility::project(&u, problem.grid()).unwrap().value(1.0);
    assert!((policy.value - expected).abs() < 1e-9);
}

#[test]
fn two_stage_chain_with_linear_utilities_is_split_invariant() {
    let tree = flat_chain(2);
    let cfg = ExperimentConfig {
        lipschitz: Some(1.0),
        lipschitz_slope: Some(f64::INFINITY),
        ..flat_config(Model::MspPln)
    };
    let mut problem = build_investment_consumption(&tree, &cfg).unwrap();
    // Swap the regime nominals for the identity; the ball has radius 0.
    let grid = problem.grid().clone();
    let id = mspro::utility::PiecewiseLinearUtility::identity(grid.clone());
    let mut map = std::collections::BTreeMap::new();
    for s in tree.non_leaves() {
        let spec = mspro::ambiguity::KantorovichBallSpec::new(id.clone(), 0.0, 1.0, f64::INFINITY).unwrap();
        map.insert(s, mspro::ambiguity::AmbiguitySpec::Kantorovich(spec));
    }
    let amb = mspro::ambiguity::StateDependentAmbiguity::new(&tree, &grid, map).unwrap();
    problem = problem.with_ambiguity(amb).unwrap();
    let policy = mspro::multistage::solve_holistic(&problem).unwrap();
    // Wealth never grows, C = 1, and the value is q1 + q2 = 1.
    assert!((policy.value - 1.0).abs() < 1e-8);
    let q1 = policy.decisions[0][1];
    let q2 = policy.decisions[1][1];
    assert!((q1 + q2 - 1.0).abs() < 1e-8);
}

#[test]
fn wealth_balance_holds_at_the_optimum() {
    for model in [Model::ProKan, Model::MspPln] {
        let cfg = small(model);
        let (_, policy) = run_with_policy(&cfg, 3).unwrap();
        let tree = mspro::experiment::tree_for(&cfg, 3).unwrap();
        let assets: Vec<usize> = ["r1", "r2", "r3"].iter().map(|a| tree.series_index(a).unwrap()).collect();
        let price = tree.series_index("oil").unwrap();
        for s in tree.non_leaves() {
            let x = &policy.decisions[s];
            let spent: f64 = x[..3].iter().sum::<f64>() + x[3] * tree.realization(s, price);
            let available = match tree.parent(s) {
                None => cfg.initial_wealth,
                Some(p) => {
                    assets.iter().enumerate().map(|(k, &c)| (1.0 + tree.realization(s, c)) * policy.decisions[p][k]).sum()
                }
            };
            assert!((spent - available).abs() < 1e-7, "node {s}: {spent} vs {available}");
        }
    }
}

#[test]
fn zero_radius_matches_projected_nominal() {
    let kan = run(&ExperimentConfig { radius: 0.0, ..small(Model::ProKan) }).unwrap();
    let pln = run(&small(Model::MspPln)).unwrap();
    assert!((kan[0].value - pln[0].value).abs() < 1e-6, "{} vs {}", kan[0].value, pln[0].value);
}

#[test]
fn robust_value_is_below_nominal() {
    let kan = run(&ExperimentConfig { radius: 0.01, ..small(Model::ProKan) }).unwrap();
    let pln = run(&small(Model::MspPln)).unwrap();
    assert!(kan[0].value <= pln[0].value + 1e-9);
}

#[test]
fn q1_is_root_consumption() {
    let (row, policy) = run_with_policy(&small(Model::ProKan), 3).unwrap();
    assert_eq!(row.q1, policy.decisions[0][3]);
    assert_eq!(row.value, policy.value);
}

#[test]
fn projection_approaches_truth_as_mesh_shrinks() {
    let base = ExperimentConfig { tree_seed: Some(11), ..small(Model::MspTrue) };
    let truth = run(&base).unwrap()[0].value;
    let mut gaps = Vec::new();
    for n in [5, 10, 20, 40] {
        let v = run(&ExperimentConfig { breakpoints: n, model: Model::MspPln, ..base.clone() }).unwrap()[0].value;
        gaps.push((truth - v).abs());
    }
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{gaps:?}");
    }
}

#[test]
fn sweep_order_and_repeatability() {
    let cfg = ExperimentConfig { seeds: vec![1, 2], ..small(Model::ProKan) };
    let values = [0.0, 0.01, 0.1];
    let a = sweep(&cfg, SweepParam::Radius, &values).unwrap();
    let b = sweep(&cfg, SweepParam::Radius, &values).unwrap();
    assert_eq!(rows_to_csv(&a), rows_to_csv(&b));
    let ids: Vec<usize> = a.iter().map(|r| r.run_id).collect();
    assert_eq!(ids, (0..6).collect::<Vec<_>>());
    assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 1, 2, 1, 2]);
    let summary = summarize(&a, SweepParam::Radius, &values);
    assert_eq!(summary.len(), 3);
    assert!(summary.iter().all(|s| s.runs == 2));
}

#[test]
fn horizon_sweep_extends_branching() {
    let cfg = ExperimentConfig { branching: vec![3, 2], ..Default::default() };
    let c = with_param(&cfg, SweepParam::Horizon, 4.0).unwrap();
    assert_eq!(c.branching, vec![3, 2, 2, 2]);
    let c = with_param(&cfg, SweepParam::Horizon, 1.0).unwrap();
    assert_eq!(c.branching, vec![3]);
    assert!(with_param(&cfg, SweepParam::Breakpoints, 2.5).is_err());
}

#[test]
fn csv_header_is_stable() {
    assert_eq!(CSV_HEADER, "run_id,model,T,N,R,K,seed,value,q1,ms");
    let rows = run(&small(Model::MspPln)).unwrap();
    let text = rows_to_csv(&rows);
    assert!(text.starts_with(&format!("{CSV_HEADER}\n")));
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0,msp_pln,2,8,"));
}

#[test]
fn config_round_trips_and_validates() {
    let cfg = ExperimentConfig { radius: 0.3, model: Model::ProPc, ..Default::default() };
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(ExperimentConfig::from_toml("breakpoints = 1").is_err());
    assert!(ExperimentConfig::from_toml("radius = -0.1").is_err());
    assert!(ExperimentConfig::from_toml("branching = [2, 2]\nhorizon = 3").is_err());
    assert!(ExperimentConfig::from_toml("model = \"pro_xyz\"").is_err());
}

#[test]
fn missing_series_and_bad_prices_are_rejected() {
    let tree = flat_chain(1);
    let cfg = ExperimentConfig { assets: vec!["r9".into()], ..flat_config(Model::MspPln) };
    assert!(build_investment_consumption(&tree, &cfg).is_err());
    let specs = vec![
        NodeSpec { parent: None, stage: 0, prob_conditional: 1.0, realization: vec![0.0, 0.0] },
        NodeSpec { parent: Some(0), stage: 1, prob_conditional: 1.0, realization: vec![0.0, 1.0] },
    ];
    let tree = ScenarioTree::from_nodes(1, vec!["r1".into(), "oil".into()], specs).unwrap();
    assert!(build_investment_consumption(&tree, &flat_config(Model::MspPln)).is_err());
}
