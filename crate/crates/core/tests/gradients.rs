mod common;

use common::{gradient_check, toy_example, toy_model, worst};
use mhqg_core::autograd::Graph;
use mhqg_core::nn::Dropout;
use mhqg_core::trainer::adaptive_scst_loss;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_all_within(checks: &[common::TensorCheck], tol: f64, what: &str) {
    for c in checks {
        println!("{what} {:<40} rel {:.2e} |grad| {:.3e}", c.name, c.relative_error, c.analytic_norm);
    }
    let w = worst(checks);
    assert!(w.relative_error <= tol, "{what}: {} off by {:.3e}", w.name, w.relative_error);
}

#[test]
fn hard_supporting_fact_tags_are_stable_under_perturbation() {
    let model = toy_model(11);
    let g = Graph::new(&model.params);
    let pass = model.forward(&g, &toy_example(), &mut Dropout::off(), true).unwrap();
    for p in pass.sf_probs.value().iter() {
        assert!((p - 0.5).abs() > 1e-3, "probability {p} too close to the threshold");
    }
}

#[test]
fn likelihood_gradients_match_finite_differences() {
    let model = toy_model(11);
    let ex = toy_example();
    let checks = gradient_check(&model.params, |g| {
        let pass = model.forward(g, &ex, &mut Dropout::off(), true).unwrap();
        model.teacher_forced(g, &pass, &ex).unwrap().loss
    });
    assert_all_within(&checks, 1e-4, "ml");
    let touched = checks.iter().filter(|c| c.analytic_norm > 0.0).count();
    assert!(touched > checks.len() / 2);
}

#[test]
fn supporting_fact_gradients_match_finite_differences() {
    let model = toy_model(11);
    let ex = toy_example();
    let checks = gradient_check(&model.params, |g| {
        let pass = model.forward(g, &ex, &mut Dropout::off(), true).unwrap();
        model.sf_loss(&pass, &ex).unwrap()
    });
    assert_all_within(&checks, 1e-4, "sp");
    for c in &checks {
        if c.name.starts_with("decoder") {
            assert_eq!(c.analytic_norm, 0.0, "{} receives supporting-fact gradient", c.name);
        }
    }
}

#[test]
fn policy_gradients_match_finite_differences() {
    let model = toy_model(11);
    let ex = toy_example();
    let advantage = 0.37;
    let checks = gradient_check(&model.params, |g| {
        let pass = model.forward(g, &ex, &mut Dropout::off(), true).unwrap();
        let (_, log_prob) = model.sample(g, &pass, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        adaptive_scst_loss(advantage, log_prob)
    });
    assert_all_within(&checks, 1e-3, "rl");
}
