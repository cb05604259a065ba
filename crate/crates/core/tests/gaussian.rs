mod common;

use approx::assert_abs_diff_eq;
use common::{arb_dag, random_dag, rng};
use fairdag::gaussian::{conditional_gaussian, DiscreteConfig, GaussianBuilder, GaussianJoint, GaussianLinearModel, Mechanism};
use fairdag::graph::{Dag, NodeId};
use fairdag::scenarios::{scenario1_model, unfaithful_fixture, unfaithful_fixture_with, Scenario1Params};
use fairdag::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// All-continuous model with random coefficients, intercepts and noise.
fn random_linear(r: &mut ChaCha8Rng, dag: Dag) -> GaussianLinearModel {
    let n = dag.len();
    let mechanisms = dag
        .nodes()
        .map(|v| {
            vec![Mechanism {
                intercept: r.random_range(-2.0..2.0),
                coefficients: dag.parents(v).iter().map(|&p| (p, r.random_range(-1.5..1.5))).collect(),
                noise_variance: r.random_range(0.2..2.0),
            }]
        })
        .collect();
    GaussianLinearModel::new(dag, vec![None; n], mechanisms).unwrap()
}

/// Reduced form X = (I − B)⁻¹(c + e): mean (I − B)⁻¹c, covariance
/// (I − B)⁻¹ D (I − B)⁻ᵀ.
fn reduced_form(model: &GaussianLinearModel) -> (DVector<f64>, DMatrix<f64>) {
    let dag = model.dag();
    let n = dag.len();
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    let mut d = DMatrix::<f64>::zeros(n, n);
    for v in dag.nodes() {
        let m = &model.mechanisms(v)[0];
        c[v.0] = m.intercept;
        d[(v.0, v.0)] = m.noise_variance;
        for &(p, coef) in &m.coefficients {
            b[(v.0, p.0)] += coef;
        }
    }
    let inv = (DMatrix::identity(n, n) - b).try_inverse().unwrap();
    (&inv * c, &inv * d * inv.transpose())
}

fn empty_config() -> DiscreteConfig {
    DiscreteConfig::new()
}

fn group(model: &GaussianLinearModel, label: &str) -> GaussianJoint {
    let a = model.dag().id("A").unwrap();
    let s = model.state_index(a, label).unwrap();
    model.joint_gaussian(&DiscreteConfig::from([(a, s)])).unwrap()
}

#[test]
fn moments_match_reduced_form() {
    let mut r = rng(21);
    for _ in 0..50 {
        let n = r.random_range(1..=7);
        let dag = random_dag(&mut r, n, 0.5);
        let model = random_linear(&mut r, dag);
        let joint = model.joint_gaussian(&empty_config()).unwrap();
        let (mean, cov) = reduced_form(&model);
        for i in 0..n {
            assert_abs_diff_eq!(joint.mean[i], mean[i], epsilon = 1e-10);
            for j in 0..n {
                assert_abs_diff_eq!(joint.cov[(i, j)], cov[(i, j)], epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn sampling_matches_analytic_moments() {
    let model = scenario1_model(&Scenario1Params::default()).unwrap();
    let n = 400_000;
    let data = model.sample(n, 5).unwrap();
    let (codes, labels) = data.categorical("A").unwrap();
    for (k, label) in labels.iter().enumerate() {
        let joint = group(&model, label);
        let rows: Vec<usize> = (0..n).filter(|&i| codes[i] as usize == k).collect();
        let m = rows.len() as f64;
        let cols: Vec<Vec<f64>> = joint.names.iter().map(|name| rows.iter().map(|&i| data.real(name).unwrap()[i]).collect()).collect();
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / m).collect();
        for i in 0..cols.len() {
            let se = (joint.cov[(i, i)] / m).sqrt();
            assert!((means[i] - joint.mean[i]).abs() <= 5.0 * se, "{label} mean {}", joint.names[i]);
            for j in 0..cols.len() {
                let cij: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>() / (m - 1.0);
                let (sii, sjj, sij) = (joint.cov[(i, i)], joint.cov[(j, j)], joint.cov[(i, j)]);
                let se = ((sii * sjj + sij * sij) / m).sqrt();
                assert!((cij - sij).abs() <= 5.0 * se, "{label} cov {} {}", joint.names[i], joint.names[j]);
            }
        }
    }
    let p = data.categorical("A").unwrap().0.iter().filter(|&&c| c == 0).count() as f64 / n as f64;
    assert!((p - 0.5).abs() <= 5.0 * (0.25 / n as f64).sqrt());
}

#[test]
fn single_node_and_independent_pair() {
    let one = GaussianBuilder::new(Dag::build(&[("V", true)], &[]).unwrap()).mechanism("V", "", 1.5, &[], 2.5).unwrap().build().unwrap();
    let j = one.joint_gaussian(&empty_config()).unwrap();
    assert_eq!(j.mean.as_slice(), &[1.5]);
    assert_eq!(j.cov.as_slice(), &[2.5]);

    let pair = GaussianBuilder::new(Dag::build(&[("a", true), ("b", true)], &[]).unwrap())
        .mechanism("a", "", 1.0, &[], 2.0)
        .unwrap()
        .mechanism("b", "", -1.0, &[], 3.0)
        .unwrap()
        .build()
        .unwrap();
    let j = pair.joint_gaussian(&empty_config()).unwrap();
    let c = conditional_gaussian(&j, &[NodeId(1)], &[(NodeId(0), 7.0)]).unwrap();
    assert_eq!((c.mean[0], c.cov[(0, 0)]), (-1.0, 3.0));
}

#[test]
fn singular_conditioning_detected() {
    let dag = Dag::build(&[("a", true), ("b", true), ("c", true)], &[("a", "b")]).unwrap();
    let model = GaussianBuilder::new(dag)
        .mechanism("a", "", 0.0, &[], 1.0)
        .unwrap()
        .mechanism("b", "", 0.0, &[("a", 1.0)], 0.0)
        .unwrap()
        .mechanism("c", "", 0.0, &[], 1.0)
        .unwrap()
        .build()
        .unwrap();
    let j = model.joint_gaussian(&empty_config()).unwrap();
    let r = j.condition(&[NodeId(2)], &[(NodeId(0), 0.0), (NodeId(1), 0.0)]);
    assert!(matches!(r, Err(Error::SingularConditioning(_))));
}

#[test]
fn categorical_nodes_must_be_roots() {
    let dag = Dag::build(&[("x", true), ("a", true)], &[("x", "a")]).unwrap();
    let r = GaussianBuilder::new(dag).discrete("a", &["p", "q"], &[0.5, 0.5]).unwrap().mechanism("x", "", 0.0, &[], 1.0).unwrap().build();
    assert!(matches!(r, Err(Error::InvalidModel(_))));
}

#[test]
fn cancelling_paths_give_zero_covariance() {
    let model = unfaithful_fixture();
    let dag = model.dag();
    let (v1, v4) = (dag.id("V1").unwrap(), dag.id("V4").unwrap());
    let j = model.joint_gaussian(&empty_config()).unwrap();
    assert_eq!(j.cov_of(v1, v4).unwrap(), 0.0);
    assert!(!dag.is_d_separated(v1, v4, &Default::default()).unwrap());
    // V4 = 3e3 − 2e2 + e4 carries variance 9 + 4 + 1.
    assert_abs_diff_eq!(j.cov_of(v4, v4).unwrap(), 14.0, epsilon = 1e-12);

    let bent = unfaithful_fixture_with(-2.1);
    let j = bent.joint_gaussian(&empty_config()).unwrap();
    assert_abs_diff_eq!(j.cov_of(v1, v4).unwrap(), -0.3, epsilon = 1e-12);
}

#[test]
fn rating_given_repayment_closed_form() {
    // Without the interest-rate term: X2 | Y, A ~ N((1 − ρ)μ + ρY/β, σ²ρ/β²).
    for beta in [1.0, 2.0] {
        let p = Scenario1Params { beta, gamma: 0.0, ..Default::default() };
        let model = scenario1_model(&p).unwrap();
        let (x2, y) = (model.dag().id("X2").unwrap(), model.dag().id("Y").unwrap());
        for (k, g) in p.groups.iter().enumerate() {
            let rho = beta * beta * g.var / (beta * beta * g.var + p.sigma2);
            assert_abs_diff_eq!(p.rho(k), rho, epsilon = 1e-15);
            let j = group(&model, &g.label);
            for yv in [-1.0, 0.5, 3.0] {
                let c = j.condition(&[x2], &[(y, yv)]).unwrap();
                assert_abs_diff_eq!(c.mean[0], (1.0 - rho) * g.mu + rho * yv / beta, epsilon = 1e-12);
                assert_abs_diff_eq!(c.cov[(0, 0)], p.sigma2 * rho / (beta * beta), epsilon = 1e-12);
            }
        }
    }
    let p = Scenario1Params { beta: 2.0, gamma: 0.0, ..Default::default() };
    let m = scenario1_model(&p).unwrap();
    let j = group(&m, "g2");
    let c = j.condition(&[m.dag().id("X2").unwrap()], &[(m.dag().id("Y").unwrap(), 0.0)]).unwrap();
    assert_abs_diff_eq!(c.cov[(0, 0)], 0.2, epsilon = 1e-12);
}

fn arb_linear() -> impl Strategy<Value = GaussianLinearModel> {
    (arb_dag(6), any::<u64>()).prop_map(|(dag, seed)| random_linear(&mut rng(seed), dag))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sequential_conditioning_matches_one_shot(model in arb_linear(), seed in any::<u64>()) {
        let n = model.dag().len();
        prop_assume!(n >= 3);
        let mut r = rng(seed);
        let j = model.joint_gaussian(&empty_config()).unwrap();
        let mut ids: Vec<NodeId> = model.dag().nodes().collect();
        rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut r);
        let (t, rest) = ids.split_at(1);
        let k = r.random_range(2..=rest.len());
        let given: Vec<(NodeId, f64)> = rest[..k].iter().map(|&v| (v, r.random_range(-3.0..3.0))).collect();
        let keep: Vec<NodeId> = t.iter().chain(given[1..].iter().map(|(v, _)| v)).copied().collect();
        let first = j.condition(&keep, &given[..1]).unwrap();
        let two_step = first.condition(t, &given[1..]).unwrap();
        let one_shot = j.condition(t, &given).unwrap();
        prop_assert!((two_step.mean[0] - one_shot.mean[0]).abs() <= 1e-10);
        prop_assert!((two_step.cov[(0, 0)] - one_shot.cov[(0, 0)]).abs() <= 1e-10);
    }

    #[test]
    fn covariances_are_psd(model in arb_linear(), seed in any::<u64>()) {
        let j = model.joint_gaussian(&empty_config()).unwrap();
        prop_assert!(j.min_eigenvalue() >= -1e-10);
        let ids: Vec<NodeId> = model.dag().nodes().collect();
        if ids.len() >= 2 {
            let mut r = rng(seed);
            let split = r.random_range(1..ids.len());
            let given: Vec<(NodeId, f64)> = ids[split..].iter().map(|&v| (v, r.random_range(-3.0..3.0))).collect();
            let c = j.condition(&ids[..split], &given).unwrap();
            prop_assert!(c.min_eigenvalue() >= -1e-10);
        }
    }
}

#[test]
fn scenario_covariances_are_psd() {
    for biased in [false, true] {
        let model = scenario1_model(&Scenario1Params { biased_ratings: biased, ..Default::default() }).unwrap();
        for (cfg, _) in model.discrete_configs() {
            assert!(model.joint_gaussian(&cfg).unwrap().min_eigenvalue() >= -1e-10);
        }
    }
}
