//! One line per acceptance criterion, then a single assertion over all of them.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::problems::{random_problem, SetKind};
use common::{random_small_lp, vertex_oracle, Oracle};
use mspro::ambiguity::KantorovichBallSpec;
use mspro::experiment::{rows_to_csv, run, sweep, summarize, ExperimentConfig, Model, SweepParam};
use mspro::lp::{solve, LpStatus};
use mspro::multistage::{check_time_consistency, counterexample_problem, solve_counterexample, solve_holistic, Policy};
use mspro::utility::{
    kantorovich_exact, kantorovich_lp, lipschitz_moduli, project, ClosedFormUtility, Grid, PiecewiseLinearUtility,
    UtilityFunction,
};
use mspro::worst_case::{worst_case_kantorovich_dual, worst_case_kantorovich_primal, OutcomeDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || format!("{what} took {:.1}s, limit {limit}s", elapsed.as_secs_f64()))
}

fn counterexample() -> Check {
    let start = Instant::now();
    let report = solve_counterexample().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for line in report.lines() {
        ensure(line.pass(), || format!("{line:?}"))?;
    }
    within(elapsed, 5.0, "counterexample")?;
    Ok(format!("{} values, {:.2}s", report.lines().len(), elapsed.as_secs_f64()))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Grid, KantorovichBallSpec, OutcomeDistribution) {
    let n = rng.random_range(3..=40);
    let grid = if rng.random_bool(0.5) {
        Grid::uniform(0.0, 1.0, n).unwrap()
    } else {
        let gaps: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = gaps.iter().sum();
        let mut pts = vec![0.0];
        for g in &gaps[..n - 2] {
            pts.push(pts.last().unwrap() + g / total);
        }
        pts.push(1.0);
        Grid::new(pts).unwrap()
    };
    let nominal = project(&ClosedFormUtility::exponential(rng.random_range(0.2..5.0)).unwrap(), &grid).unwrap();
    let (lo, lto) = lipschitz_moduli(&nominal);
    let slack = rng.random_range(1.0..3.0);
    let spec = KantorovichBallSpec::new(nominal, rng.random_range(0.0..0.2), lo * slack, (lto + 0.1) * slack).unwrap();
    let m = rng.random_range(1..=10);
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(1..10) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut outcomes: Vec<(f64, f64)> = weights.iter().map(|w| (rng.random_range(0.0..=1.0), w / total)).collect();
    let s: f64 = outcomes.iter().map(|o| o.1).sum();
    outcomes[0].1 += 1.0 - s;
    (grid, spec, OutcomeDistribution::new(outcomes).unwrap())
}

fn primal_dual() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let (grid, spec, dist) = random_instance(&mut rng);
        let p = worst_case_kantorovich_primal(&dist, &spec, &grid).map_err(|e| format!("instance {k}: {e}"))?;
        let d = worst_case_kantorovich_dual(&dist, &spec, &grid).map_err(|e| format!("instance {k}: {e}"))?;
        let gap = (p.value - d.value).abs();
        ensure(gap <= 1e-7, || format!("instance {k}: primal {} dual {}", p.value, d.value))?;
        worst = worst.max(gap);
    }
    within(start.elapsed(), 60.0, "100 instances")?;
    Ok(format!("max gap {worst:.1e}, {:.1}s", start.elapsed().as_secs_f64()))
}

fn random_pl(rng: &mut ChaCha8Rng) -> PiecewiseLinearUtility {
    let n = rng.random_range(2..10);
    let gaps: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.01..1.0)).collect();
    let incs: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.0..1.0)).collect();
    let gsum: f64 = gaps.iter().sum();
    let isum = incs.iter().sum::<f64>().max(1e-12);
    let mut y = vec![0.0];
    let mut v = vec![0.0];
    for k in 0..n - 1 {
        y.push(y[k] + gaps[k] / gsum);
        v.push(v[k] + incs[k] / isum);
    }
    y[n - 1] = 1.0;
    v[n - 1] = 1.0;
    PiecewiseLinearUtility::new(Grid::new(y).unwrap(), v).unwrap()
}

fn metric_ordering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..100 {
        let (u, v) = (random_pl(&mut rng), random_pl(&mut rng));
        let lp = kantorovich_lp(&u, &v).map_err(|e| e.to_string())?;
        let exact = kantorovich_exact(&u, &v).map_err(|e| e.to_string())?;
        ensure(lp >= exact - 1e-8, || format!("pair {k}: lp {lp} < exact {exact}"))?;
        let zero = kantorovich_lp(&u, &u).map_err(|e| e.to_string())?;
        ensure(zero.abs() <= 1e-12, || format!("pair {k}: d(u, u) = {zero}"))?;
    }
    let u = ClosedFormUtility::exponential(2.0).unwrap();
    let v = ClosedFormUtility::quadratic();
    let mut gaps = Vec::new();
    for n in [5, 10, 20, 40] {
        let g = Grid::uniform(0.0, 1.0, n).unwrap();
        let (pu, pv) = (project(&u, &g).unwrap(), project(&v, &g).unwrap());
        gaps.push(kantorovich_lp(&pu, &pv).unwrap() - kantorovich_exact(&pu, &pv).unwrap());
    }
    ensure(gaps.windows(2).all(|w| w[1] <= w[0]), || format!("gaps {gaps:?}"))?;
    Ok(format!("refinement gaps {}", fmt_list(&gaps)))
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

fn projection_bounds() -> Check {
    let u = ClosedFormUtility::exponential(3.0).unwrap();
    let l = 3.0 / (1.0 - (-3.0f64).exp());
    ensure((u.lipschitz() - l).abs() < 1e-12, || format!("L = {}", u.lipschitz()))?;
    let samples = 10_000;
    let mut out = Vec::new();
    for n in [5, 10, 20, 40] {
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        let p = project(&u, &grid).unwrap();
        let beta = grid.mesh();
        // Sup over sample points, L1 by the midpoint rule on the same points.
        let diff = |i: usize| {
            let x = (i as f64 + 0.5) / samples as f64;
            (u.value(x) - p.value(x)).abs()
        };
        let sup = (0..samples).map(diff).fold(0.0, f64::max);
        let kolmogorov = (0..=samples)
            .map(|i| {
                let x = i as f64 / samples as f64;
                (u.value(x) - p.value(x)).abs()
            })
            .fold(0.0, f64::max);
        let l1 = (0..samples).map(diff).sum::<f64>() / samples as f64;
        ensure(sup < l * beta, || format!("N = {n}: sup {sup} vs {}", l * beta))?;
        ensure(kolmogorov < l * beta, || format!("N = {n}: kolmogorov {kolmogorov} vs {}", l * beta))?;
        ensure(l1 < 2.0 * beta, || format!("N = {n}: kantorovich {l1} vs {}", 2.0 * beta))?;
        out.push(sup / (l * beta));
    }
    Ok(format!("sup / (L beta) = {}", fmt_list(&out)))
}

fn fixed(model: Model) -> ExperimentConfig {
    ExperimentConfig { branching: vec![2, 2], tree_seed: Some(17), seeds: vec![0], model, ..Default::default() }
}

fn error_bound() -> Check {
    let value = |n: usize| -> Result<f64, String> {
        let rows = run(&ExperimentConfig { breakpoints: n, ..fixed(Model::ProKan) }).map_err(|e| e.to_string())?;
        Ok(rows[0].value)
    };
    let fine = value(80)?;
    let t = 2.0;
    let l = 3.0 / (1.0 - (-3.0f64).exp());
    let mut ratios = Vec::new();
    for n in [5, 10, 20, 40] {
        let beta = Grid::uniform(0.0, 1.0, n).unwrap().mesh();
        let bound = 6.0 * t * l.max(2.0) * beta;
        let err = (value(n)? - fine).abs();
        ensure(err <= bound, || format!("N = {n}: |error| {err} > {bound}"))?;
        ratios.push(err / bound);
    }
    Ok(format!("error / bound = {}", fmt_list(&ratios)))
}

fn time_consistency() -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let branching: &[usize] = if k < 10 { &[2, 2] } else { &[3, 3] };
        let problem = random_problem(branching, 6, 100 + k, SetKind::Kantorovich { max_radius: 0.05 });
        let policy = solve_holistic(&problem).map_err(|e| format!("problem {k}: {e}"))?;
        let report = check_time_consistency(&problem, &policy, 1e-6).map_err(|e| e.to_string())?;
        ensure(report.is_consistent(), || format!("problem {k}: {:?}", report.entries))?;
        worst = worst.max(report.max_discrepancy);
    }
    let problem = counterexample_problem().map_err(|e| e.to_string())?;
    let tree = problem.tree();
    let decisions = (0..tree.len()).map(|s| if tree.is_leaf(s) { vec![] } else { vec![1.0, 0.0] }).collect();
    let policy = Policy { decisions, value: f64::NAN, per_node: Default::default(), lp_objective: None };
    let report = check_time_consistency(&problem, &policy, 1e-6).map_err(|e| e.to_string())?;
    ensure(report.max_discrepancy > 0.0 && !report.is_consistent(), || "counterexample not flagged".into())?;
    let global = report.sequence_global_value.ok_or("no sequence-global value")?;
    let gap = global - report.nested_value;
    ensure((report.nested_value - 1.26).abs() <= 1e-9, || format!("nested {}", report.nested_value))?;
    ensure((global - 1.275).abs() <= 1e-9, || format!("sequence-global {global}"))?;
    ensure((gap - 0.015).abs() <= 1e-3, || format!("gap {gap}"))?;
    Ok(format!("random max discrepancy {worst:.1e}; counterexample gap {gap:.4}"))
}

fn radius_monotone() -> Check {
    let radii = [0.0, 0.001, 0.01, 0.1, 0.3];
    let rows = sweep(&fixed(Model::ProKan), SweepParam::Radius, &radii).map_err(|e| e.to_string())?;
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    ensure(values.windows(2).all(|w| w[1] <= w[0] + 1e-9), || format!("values {values:?}"))?;
    let pln = run(&fixed(Model::MspPln)).map_err(|e| e.to_string())?[0].value;
    ensure((values[0] - pln).abs() <= 1e-6, || format!("R = 0 gives {} but msp_pln {pln}", values[0]))?;
    Ok(format!("values {}", values.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>().join(" ")))
}

fn elicitation() -> Check {
    let ks = [0.0, 10.0, 50.0, 200.0];
    let cfg = ExperimentConfig { seeds: (0..10).collect(), ..fixed(Model::ProPc) };
    let rows = sweep(&cfg, SweepParam::Questions, &ks).map_err(|e| e.to_string())?;
    let summary = summarize(&rows, SweepParam::Questions, &ks);
    let truth = run(&fixed(Model::MspTrue)).map_err(|e| e.to_string())?[0].value;
    for w in summary.windows(2) {
        let pooled = ((w[0].std.powi(2) + w[1].std.powi(2)) / 2.0).sqrt();
        ensure(w[1].mean >= w[0].mean - pooled, || format!("K = {} mean {} after {}", w[1].param_value, w[1].mean, w[0].mean))?;
    }
    for s in &summary {
        ensure(s.mean <= truth + 1e-6, || format!("K = {} mean {} above msp_true {truth}", s.param_value, s.mean))?;
    }
    let means: Vec<f64> = summary.iter().map(|s| s.mean).collect();
    Ok(format!("means {} <= msp_true {truth:.5}", means.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>().join(" ")))
}

fn lp_backend() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut seen = [0usize; 3];
    for k in 0..200 {
        let lp = random_small_lp(&mut rng);
        let got = solve(&lp).map_err(|e| format!("instance {k}: {e}"))?;
        let want = vertex_oracle(&lp);
        match (want, got.status) {
            (Oracle::Optimal(v), LpStatus::Optimal) => {
                ensure((v - got.objective_value).abs() <= 1e-8, || format!("instance {k}: {} vs {v}", got.objective_value))?;
                seen[0] += 1;
            }
            (Oracle::Infeasible, LpStatus::Infeasible) => seen[1] += 1,
            (Oracle::Unbounded, LpStatus::Unbounded) => seen[2] += 1,
            (w, g) => return Err(format!("instance {k}: oracle {w:?}, solver {g:?}")),
        }
    }
    ensure(seen[1] > 0 && seen[2] > 0, || format!("status mix {seen:?}"))?;
    Ok(format!("optimal {} infeasible {} unbounded {}", seen[0], seen[1], seen[2]))
}

fn determinism() -> Check {
    let cfg = ExperimentConfig { seeds: vec![0, 1], breakpoints: 10, ..fixed(Model::ProKan) };
    let a = rows_to_csv(&run(&cfg).map_err(|e| e.to_string())?);
    let b = rows_to_csv(&run(&cfg).map_err(|e| e.to_string())?);
    ensure(a == b, || "run output differs".into())?;
    let values = [0.0, 0.01, 0.1];
    let s1 = rows_to_csv(&sweep(&cfg, SweepParam::Radius, &values).map_err(|e| e.to_string())?);
    let s2 = rows_to_csv(&sweep(&cfg, SweepParam::Radius, &values).map_err(|e| e.to_string())?);
    ensure(s1 == s2, || "sweep output differs".into())?;
    Ok(format!("{} + {} bytes identical", a.len(), s1.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("counterexample values", counterexample),
        ("primal-dual agreement", primal_dual),
        ("metric ordering", metric_ordering),
        ("projection bounds", projection_bounds),
        ("discretization error bound", error_bound),
        ("time consistency", time_consistency),
        ("radius monotonicity", radius_monotone),
        ("elicitation convergence", elicitation),
        ("LP backend", lp_backend),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("FAIL {:>2} {name} ({secs:.1}s): {why}", i + 1)
            }
        };
        // Straight to the stream so the lines show up without --nocapture.
        writeln!(std::io::stderr(), "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
