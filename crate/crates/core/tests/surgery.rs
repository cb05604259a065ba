mod common;

use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use common::{arb_dag, fixture, random_model, rng};
use fairdag::criteria::{Criterion, Verdict};
use fairdag::discrete::{DiscreteModel, DEFAULT_TOL};
use fairdag::graph::NodeId;
use fairdag::io::parse_model;
use fairdag::scenarios::{
    attach_binary_predictor, discrete_scenario, scenario1_model, scenario1_predictors, DiscreteCpts, Scenario1Params, ScenarioId,
};
use fairdag::surgery::{
    cde_equal, do_distribution, gaussian_do_distribution, is_identifiable, te_equal, CausalModel, DoOutcome, GaussianMarginal, Intervene,
    Intervention, Value,
};
use proptest::prelude::*;
use rand::Rng;

fn label(s: usize) -> Value {
    Value::Label(s.to_string())
}

/// P(target | do(v = x)) by truncated factorization: the product over every
/// node except `v`, with `v` pinned at `x`.
fn truncated_factorization(model: &DiscreteModel, target: NodeId, v: NodeId, x: usize) -> Vec<f64> {
    let dag = model.dag();
    let cards: Vec<usize> = dag.nodes().map(|u| model.domain(u).len()).collect();
    let total: usize = cards.iter().product();
    let mut out = vec![0.0; cards[target.0]];
    for mut code in 0..total {
        let mut st = vec![0; cards.len()];
        for i in (0..cards.len()).rev() {
            st[i] = code % cards[i];
            code /= cards[i];
        }
        if st[v.0] != x {
            continue;
        }
        let mut p = 1.0;
        for u in dag.nodes().filter(|&u| u != v) {
            let row = dag.parents(u).iter().fold(0, |acc, w| acc * cards[w.0] + st[w.0]);
            p *= model.cpt(u).row(row)[st[u.0]];
        }
        out[st[target.0]] += p;
    }
    out
}

fn figure4(name: &str) -> DiscreteModel {
    match parse_model(&fixture(name)).unwrap() {
        CausalModel::Discrete(m) => m,
        CausalModel::Gaussian(_) => panic!("discrete fixture expected"),
    }
}

#[test]
fn hidden_confounder_blocks_identification() {
    let m = figure4("figure4.json");
    let (v2, v3) = (m.dag().id("V2").unwrap(), m.dag().id("V3").unwrap());
    let iv = Intervention::new().set(v2, label(1));
    assert!(do_distribution(&m, v3, &iv).unwrap().is_unidentifiable());
    // Intervening on the effect says nothing about the cause's law.
    let on_v3 = Intervention::new().set(v3, label(0));
    assert!(!do_distribution(&m, v2, &on_v3).unwrap().is_unidentifiable());
}

#[test]
fn observed_confounder_gives_adjustment_formula() {
    let m = figure4("figure4_observed.json");
    let (v2, v3) = (m.dag().id("V2").unwrap(), m.dag().id("V3").unwrap());
    let iv = Intervention::new().set(v2, label(1));
    let table = do_distribution(&m, v3, &iv).unwrap().identified().unwrap();
    // Σ_v1 P(v1) P(V3 = 1 | v1, V2 = 1).
    assert_abs_diff_eq!(table.probs()[1], 0.4 * 0.5 + 0.6 * 0.9, epsilon = 1e-12);
    // Seeing differs from doing here.
    let see = m.joint_distribution().unwrap().query(&[v3], &[(v2, 1)]).unwrap();
    assert!((see.probs()[1] - table.probs()[1]).abs() > 0.01);
}

#[test]
fn truncated_factorization_oracle() {
    let mut r = rng(31);
    for _ in 0..40 {
        let n = r.random_range(2..=5);
        let dag = common::random_dag(&mut r, n, 0.5);
        let model = random_model(&mut r, dag, 3);
        let v = NodeId(r.random_range(0..n));
        let t = NodeId((v.0 + 1 + r.random_range(0..n - 1)) % n);
        let x = r.random_range(0..model.domain(v).len());
        let got = do_distribution(&model, t, &Intervention::new().set(v, label(x))).unwrap().identified().unwrap();
        for (a, b) in got.probs().iter().zip(truncated_factorization(&model, t, v, x)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn scenario3_cde_matches_conditional_independence() {
    for seed in 0..20 {
        let cpts = DiscreteCpts::Dirichlet(seed);
        let m = attach_binary_predictor(&discrete_scenario(ScenarioId::College, cpts).unwrap(), "R", &["X2"], cpts).unwrap();
        let dag = m.dag();
        let [a, x2, rr] = [dag.id("A").unwrap(), dag.id("X2").unwrap(), dag.id("R").unwrap()];
        let cde = cde_equal(&CausalModel::Discrete(m.clone()), rr, a, &BTreeSet::from([x2]), DEFAULT_TOL).unwrap();
        let ci = m.conditional_independent(rr, a, &BTreeSet::from([x2]), DEFAULT_TOL).unwrap();
        assert_eq!(cde.verdict == Verdict::Satisfied, ci, "seed {seed}");
        assert_eq!(cde.criterion, Criterion::CDEEqual);
    }
}

#[test]
fn scenario4_total_effect_is_null() {
    let m =
        attach_binary_predictor(&discrete_scenario(ScenarioId::Insurance, DiscreteCpts::Fixed).unwrap(), "R", &["X"], DiscreteCpts::Fixed)
            .unwrap();
    let dag = m.dag();
    let [a, rr] = [dag.id("A").unwrap(), dag.id("R").unwrap()];
    let te = te_equal(&CausalModel::Discrete(m.clone()), rr, a, DEFAULT_TOL).unwrap();
    assert_eq!(te.verdict, Verdict::Satisfied);
    assert!(is_identifiable(dag, rr, &BTreeSet::from([a])).unwrap());
    // Observationally R still tracks A through the hidden U.
    assert!(!m.conditional_independent(rr, a, &BTreeSet::new(), DEFAULT_TOL).unwrap());
}

#[test]
fn trivial_effect_cases() {
    let dag = fairdag::graph::Dag::build(&[("A", true), ("R", true), ("Q", true)], &[("A", "R")]).unwrap();
    let m = random_model(&mut rng(2), dag, 2);
    let cm = CausalModel::Discrete(m);
    let [a, r, q] = [NodeId(0), NodeId(1), NodeId(2)];
    assert_eq!(te_equal(&cm, r, a, DEFAULT_TOL).unwrap().verdict, Verdict::Violated);
    assert_eq!(te_equal(&cm, q, a, DEFAULT_TOL).unwrap().verdict, Verdict::Satisfied);
    assert_eq!(cde_equal(&cm, q, a, &BTreeSet::new(), DEFAULT_TOL).unwrap().verdict, Verdict::Satisfied);
    assert_eq!(te_equal(&cm, a, r, DEFAULT_TOL).unwrap().verdict, Verdict::Satisfied);
}

#[test]
fn loan_interventions() {
    let p = Scenario1Params::default();
    let model = scenario1_model(&p).unwrap();
    let dag = model.dag();
    let [x2, y] = [dag.id("X2").unwrap(), dag.id("Y").unwrap()];
    let iv = Intervention::new().set(x2, Value::Real(1.0));
    let out = gaussian_do_distribution(&model, y, &iv).unwrap().identified().unwrap();
    let GaussianMarginal::Mixture { components } = out else { panic!("continuous target") };
    assert_eq!(components.len(), 2);
    for c in components {
        assert_abs_diff_eq!(c.mean, p.beta + p.gamma * p.x3_mean, epsilon = 1e-12);
        assert_abs_diff_eq!(c.variance, p.gamma * p.gamma * p.x3_var + p.sigma2, epsilon = 1e-12);
    }

    let preds = scenario1_predictors(&p).unwrap();
    let with = |name: &str| {
        let m = preds[name].attach(&model).unwrap();
        let r = m.dag().id(name).unwrap();
        let a = m.dag().id("A").unwrap();
        te_equal(&CausalModel::Gaussian(m), r, a, 1e-9).unwrap()
    };
    assert_eq!(with("naive").verdict, Verdict::Violated);
    assert_eq!(with("independence_demeaned").verdict, Verdict::Satisfied);
}

#[test]
fn biased_ratings_hide_the_rating_noise() {
    let p = Scenario1Params { biased_ratings: true, ..Default::default() };
    let model = scenario1_model(&p).unwrap();
    let dag = model.dag();
    let [x2, y] = [dag.id("X2").unwrap(), dag.id("Y").unwrap()];
    let iv = Intervention::new().set(x2, Value::Real(0.0));
    assert!(matches!(gaussian_do_distribution(&model, y, &iv).unwrap(), DoOutcome::Identified(_)));
    let ex2 = dag.id("EX2").unwrap();
    let on_hidden = Intervention::new().set(ex2, Value::Real(0.0));
    assert!(gaussian_do_distribution(&model, y, &on_hidden).unwrap().is_unidentifiable());
}

fn arb_model() -> impl Strategy<Value = DiscreteModel> {
    (arb_dag(5), any::<u64>())
        .prop_filter_map("need two nodes", |(dag, seed)| (dag.len() >= 2).then(|| random_model(&mut rng(seed), dag, 3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_intervention_equals_conditioning(model in arb_model(), pick in any::<u64>()) {
        let dag = model.dag();
        let roots: Vec<NodeId> = dag.roots().into_iter().collect();
        let v = roots[pick as usize % roots.len()];
        let t = dag.nodes().find(|&u| u != v).unwrap();
        let x = (pick >> 8) as usize % model.domain(v).len();
        let done = do_distribution(&model, t, &Intervention::new().set(v, label(x))).unwrap().identified().unwrap();
        let seen = model.joint_distribution().unwrap().query(&[t], &[(v, x)]).unwrap();
        for (a, b) in done.probs().iter().zip(seen.probs()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn intervention_is_idempotent(model in arb_model(), pick in any::<u64>()) {
        let v = NodeId(pick as usize % model.dag().len());
        let x = (pick >> 8) as usize % model.domain(v).len();
        let iv = Intervention::new().set(v, label(x));
        let once = model.intervene(&iv).unwrap();
        let twice = once.intervene(&iv).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.joint_distribution().unwrap(), twice.joint_distribution().unwrap());
    }

    #[test]
    fn mutilated_separation_gives_null_total_effect(model in arb_model(), pick in any::<u64>()) {
        let n = model.dag().len();
        let a = NodeId(pick as usize % n);
        let r = NodeId((a.0 + 1 + (pick >> 8) as usize % (n - 1)) % n);
        let mutilated = model.dag().without_incoming(&BTreeSet::from([a]));
        let te = te_equal(&CausalModel::Discrete(model.clone()), r, a, 1e-9).unwrap();
        if mutilated.is_d_separated(a, r, &BTreeSet::new()).unwrap() {
            prop_assert_eq!(te.verdict, Verdict::Satisfied);
        }
        if !model.dag().ancestors(r).contains(&a) {
            prop_assert_eq!(te.verdict, Verdict::Satisfied);
        }
    }
}
