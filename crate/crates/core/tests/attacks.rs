use interlab_core::attacks::{
    attack_interaction_only, attack_ir, attack_mi, attack_opt, attack_pgd, attack_single,
    attack_vr, momentum_update, noise_baseline, project, project_feasible, run_attack,
    smoothed_gradient, AttackConfig, AttackTrace, Method, MomentumMode, Norm, UpdateRule,
    INTERACTION_ONLY_INIT,
};
use interlab_core::game::SamplingPlan;
use interlab_core::nn::{input_gradient, Activation, Architecture, Dense, Layer, LossKind, Model};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp(seed: u64) -> Model {
    Model::init(
        &Architecture::Mlp { hidden: vec![16] },
        16,
        3,
        Activation::default(),
        seed,
    )
    .unwrap()
}

fn linear(weights: Vec<f64>, classes: usize) -> Model {
    let n = weights.len() / classes;
    let dense = Dense::new(n, classes, weights, vec![0.0; classes]).unwrap();
    Model::new(n, classes, Activation::default(), vec![Layer::Dense(dense)]).unwrap()
}

fn input(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..16).map(|_| rng.random_range(0.1..0.9)).collect()
}

fn small_cfg() -> AttackConfig {
    AttackConfig {
        steps: 10,
        grid: 4,
        sampling: SamplingPlan {
            k: 4,
            batchsize: 4,
            seed: 7,
        },
        ..AttackConfig::default()
    }
}

fn plus(x: &[f64], d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + b).collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[test]
fn projection_examples() {
    assert_eq!(project(&[0.05, -0.02], Norm::Inf, 0.1), vec![0.05, -0.02]);
    assert_eq!(project(&[0.3, -0.3], Norm::Inf, 0.1), vec![0.1, -0.1]);
    let p = project(&[3.0, 4.0], Norm::L2, 1.0);
    assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    assert_eq!(project(&[0.3, 0.4], Norm::L2, 1.0), vec![0.3, 0.4]);
    let boxed = project_feasible(&[0.95, 0.02], &[0.1, -0.1], Norm::Inf, 0.1);
    assert!((boxed[0] - 0.05).abs() < 1e-15 && (boxed[1] + 0.02).abs() < 1e-15);
}

#[test]
fn single_step_on_constant_model_is_zero() {
    let model = linear(vec![0.0; 32], 2);
    let trace = attack_single(&model, &input(1)[..16], 0, &small_cfg()).unwrap();
    assert!(trace.final_delta.iter().all(|&d| d == 0.0));
}

#[test]
fn single_step_on_linear_model_follows_weight_difference() {
    let w: Vec<f64> = (0..32).map(|k| ((k * 13 % 7) as f64 - 3.0) * 0.1).collect();
    let model = linear(w.clone(), 2);
    let x = vec![0.5; 16];
    let cfg = AttackConfig {
        loss: LossKind::Margin,
        update: UpdateRule::Raw,
        norm: Norm::L2,
        epsilon: 100.0,
        step_size: 1e-3,
        ..small_cfg()
    };
    let trace = attack_single(&model, &x, 0, &cfg).unwrap();
    let expect: Vec<f64> = (0..16)
        .map(|i| cfg.step_size * cfg.steps as f64 * (w[16 + i] - w[i]))
        .collect();
    for (a, b) in trace.final_delta.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn single_step_beyond_budget_saturates() {
    let model = mlp(3);
    let x = vec![0.5; 16];
    let cfg = small_cfg();
    let g = input_gradient(&model, &x, 1, cfg.loss).unwrap();
    let trace = attack_single(&model, &x, 1, &cfg).unwrap();
    for (d, gi) in trace.final_delta.iter().zip(&g) {
        if *gi != 0.0 {
            assert!((d.abs() - cfg.epsilon).abs() < 1e-15);
            assert_eq!(d.signum(), gi.signum());
        }
    }
}

/// Independent PGD loop built from the model gradient only.
fn reference_pgd(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Vec<Vec<f64>> {
    let mut delta = vec![0.0; x.len()];
    let mut out = vec![delta.clone()];
    for _ in 0..cfg.steps {
        let g = input_gradient(model, &plus(x, &delta), y, cfg.loss).unwrap();
        for i in 0..x.len() {
            let s = if g[i] > 0.0 {
                1.0
            } else if g[i] < 0.0 {
                -1.0
            } else {
                0.0
            };
            let mut d = delta[i] + cfg.step_size * s;
            d = d.max(-cfg.epsilon).min(cfg.epsilon);
            d = (x[i] + d).max(0.0).min(1.0) - x[i];
            delta[i] = d;
        }
        out.push(delta.clone());
    }
    out
}

#[test]
fn pgd_matches_reference_loop() {
    let model = mlp(5);
    let x = input(5);
    let cfg = small_cfg();
    let trace = attack_pgd(&model, &x, 2, &cfg).unwrap();
    assert_eq!(trace.deltas, reference_pgd(&model, &x, 2, &cfg));
    assert_eq!(trace.step_indices, (0..=10).collect::<Vec<_>>());
    let one = attack_pgd(
        &model,
        &x,
        2,
        &AttackConfig {
            steps: 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    let g = input_gradient(&model, &x, 2, cfg.loss).unwrap();
    for ((d, gi), xi) in one.final_delta.iter().zip(&g).zip(&x) {
        let want = (xi + cfg.step_size * gi.signum()).clamp(0.0, 1.0) - xi;
        assert_eq!(*d, if *gi == 0.0 { 0.0 } else { want });
    }
}

#[test]
fn pgd_ignores_lambda() {
    let model = mlp(6);
    let x = input(6);
    let a = attack_pgd(&model, &x, 0, &small_cfg()).unwrap();
    let b = attack_pgd(
        &model,
        &x,
        0,
        &AttackConfig {
            lambda: 3.0,
            ..small_cfg()
        },
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn pgd_l2_zero_gradient_takes_no_step() {
    let model = linear(vec![0.0; 32], 2);
    let cfg = AttackConfig {
        norm: Norm::L2,
        epsilon: 1.0,
        ..small_cfg()
    };
    let trace = attack_pgd(&model, &input(2), 0, &cfg).unwrap();
    assert!(trace.final_delta.iter().all(|&d| d == 0.0));
}

#[test]
fn momentum_schedule_properties() {
    let g = vec![0.3, -1.2, 0.0, 2.5];
    let mut acc = vec![0.0; 4];
    momentum_update(&mut acc, &g, 1, MomentumMode::Schedule);
    assert_eq!(acc, g);
    for t in 2..50 {
        momentum_update(&mut acc, &g, t, MomentumMode::Schedule);
        for (a, b) in acc.iter().zip(&g) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn mi_first_step_equals_pgd_and_two_steps_unroll() {
    let model = mlp(8);
    let x = input(8);
    let cfg = AttackConfig {
        update: UpdateRule::Raw,
        step_size: 0.01,
        epsilon: 1.0,
        steps: 2,
        ..small_cfg()
    };
    let mi = attack_mi(&model, &x, 1, &cfg).unwrap();
    let pgd = attack_pgd(&model, &x, 1, &cfg).unwrap();
    assert_eq!(mi.deltas[1], pgd.deltas[1]);
    // g1 = grad(x); g2 = g1/2 + grad(x + d1)/2; d2 = d1 + alpha g2
    let g1 = input_gradient(&model, &x, 1, cfg.loss).unwrap();
    let d1: Vec<f64> = g1.iter().map(|g| cfg.step_size * g).collect();
    let h = input_gradient(&model, &plus(&x, &d1), 1, cfg.loss).unwrap();
    for i in 0..16 {
        let g2 = 0.5 * g1[i] + 0.5 * h[i];
        let want = (x[i] + d1[i] + cfg.step_size * g2).clamp(0.0, 1.0) - x[i];
        assert!((mi.final_delta[i] - want).abs() < 1e-14);
    }
}

#[test]
fn vr_with_tiny_sigma_tracks_pgd() {
    let model = mlp(9);
    let x = input(9);
    let cfg = AttackConfig {
        vr_sigma: 1e-8,
        ..small_cfg()
    };
    let vr = attack_vr(&model, &x, 0, &cfg).unwrap();
    let pgd = attack_pgd(&model, &x, 0, &cfg).unwrap();
    for (a, b) in vr.deltas.iter().zip(&pgd.deltas) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() < 1e-6);
        }
    }
}

#[test]
fn smoothed_gradient_of_linear_model_is_plain_gradient() {
    let w: Vec<f64> = (0..48).map(|k| (k as f64 * 0.37).sin()).collect();
    let model = linear(w, 3);
    let x = input(3);
    let plain = input_gradient(&model, &x, 2, LossKind::Margin).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // small sigma keeps the runner-up class fixed
    let smooth = smoothed_gradient(
        |p| input_gradient(&model, p, 2, LossKind::Margin),
        &x,
        1e-6,
        8,
        &mut rng,
    )
    .unwrap();
    for (a, b) in smooth.iter().zip(&plain) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
    }
}

#[test]
fn smoothed_gradient_of_quadratic_matches_expectation() {
    let a = [[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, 3.0]];
    let grad = |p: &[f64]| -> interlab_core::Result<Vec<f64>> {
        Ok((0..3)
            .map(|i| (0..3).map(|j| a[i][j] * p[j]).sum())
            .collect())
    };
    let x = [0.4, -0.2, 0.7];
    let sigma = 0.5;
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let est = smoothed_gradient(grad, &x, sigma, n, &mut rng).unwrap();
    let ax = grad(&x).unwrap();
    for i in 0..3 {
        let sd = sigma * a[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((est[i] - ax[i]).abs() < 3.0 * se, "coordinate {i}");
    }
}

#[test]
fn ir_without_penalty_is_pgd_bitwise() {
    let model = mlp(10);
    let x = input(10);
    let ir = attack_ir(&model, &x, 1, &small_cfg().with_method(Method::Ir)).unwrap();
    let pgd = attack_pgd(&model, &x, 1, &small_cfg()).unwrap();
    assert_eq!(ir.deltas, pgd.deltas);
    assert_eq!(ir.final_delta, pgd.final_delta);
    assert_eq!(ir.interaction_loss.len(), 10);
    let again = attack_ir(&model, &x, 1, &small_cfg().with_method(Method::Ir)).unwrap();
    assert_eq!(ir, again);
}

#[test]
fn ir_rejects_negative_lambda() {
    let model = mlp(10);
    let cfg = AttackConfig {
        lambda: -0.5,
        ..small_cfg().with_method(Method::Ir)
    };
    assert!(attack_ir(&model, &input(1), 0, &cfg).is_err());
}

#[test]
fn opt_penalty_and_stopping() {
    let model = mlp(12);
    let x = input(12);
    let base = AttackConfig {
        method: Method::Opt,
        step_size: 0.05,
        tau: 0.5,
        max_opt_steps: 300,
        ..small_cfg()
    };
    let heavy = attack_opt(
        &model,
        &x,
        0,
        &AttackConfig {
            c: 45.0,
            step_size: 0.01,
            ..base.clone()
        },
    )
    .unwrap();
    assert!(heavy.reached_max_steps);
    assert!(
        l2(&heavy.final_delta) < 0.1 * base.tau,
        "{}",
        l2(&heavy.final_delta)
    );

    let mut taken = Vec::new();
    for c in [0.0, 0.05, 0.2] {
        let t = attack_opt(&model, &x, 0, &AttackConfig { c, ..base.clone() }).unwrap();
        assert!(!t.reached_max_steps, "c = {c}");
        assert!((l2(&t.final_delta) - base.tau).abs() < 1e-12);
        taken.push(t.steps_taken());
    }
    assert!(taken[0] <= taken[1] && taken[0] <= taken[2], "{taken:?}");

    for p in [2.0, 5.0] {
        let t = attack_opt(
            &model,
            &x,
            0,
            &AttackConfig {
                p_relax: p,
                ..base.clone()
            },
        )
        .unwrap();
        assert!(l2(&t.final_delta) <= base.tau + 1e-12);
    }
}

#[test]
fn opt_long_runs_are_strided() {
    let model = mlp(12);
    let cfg = AttackConfig {
        method: Method::Opt,
        c: 9.0,
        max_opt_steps: 1000,
        ..small_cfg()
    };
    let t = attack_opt(&model, &input(4), 0, &cfg).unwrap();
    assert_eq!(t.stride, 10);
    assert_eq!(t.step_indices.len(), 101);
    assert_eq!(t.loss.len(), 1001);
}

#[test]
fn interaction_only_properties() {
    let model = mlp(13);
    let x = input(13);
    let cfg = AttackConfig {
        lambda: 1.0,
        steps: 1,
        ..small_cfg().with_method(Method::InteractionOnly)
    };
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    };
    let first = attack_interaction_only(&model, &x, 0, &cfg).unwrap();
    for lambda in [0.1, 7.0] {
        let other = attack_interaction_only(
            &model,
            &x,
            0,
            &AttackConfig {
                lambda,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(argmax(&other.final_delta), argmax(&first.final_delta));
    }
    assert!(first.deltas[0].iter().all(|&d| d == 0.0));

    let long = attack_interaction_only(
        &model,
        &x,
        0,
        &AttackConfig {
            steps: 30,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert!(long
        .final_delta
        .iter()
        .all(|d| d.abs() <= cfg.epsilon + 1e-12));
    assert_eq!(long.interaction_loss.len(), 30);
}

#[test]
fn interaction_only_leaves_linear_two_class_model_alone() {
    let w: Vec<f64> = (0..32).map(|k| (k as f64 * 0.71).cos()).collect();
    let model = linear(w, 2);
    let cfg = AttackConfig {
        lambda: 1.0,
        ..small_cfg().with_method(Method::InteractionOnly)
    };
    let t = attack_interaction_only(&model, &input(14), 1, &cfg).unwrap();
    assert!(t
        .final_delta
        .iter()
        .all(|d| d.abs() <= INTERACTION_ONLY_INIT));
}

#[test]
fn noise_baseline_properties() {
    let x = vec![0.5; 16];
    let cfg = small_cfg();
    let a = noise_baseline(&x, &cfg);
    assert!(a.iter().all(|d| d.abs() == cfg.epsilon));
    assert_eq!(a, noise_baseline(&x, &cfg));
    let draws = 2000;
    let mut mean = [0.0; 16];
    for seed in 0..draws {
        let d = noise_baseline(
            &x,
            &AttackConfig {
                seed,
                ..cfg.clone()
            },
        );
        for (m, v) in mean.iter_mut().zip(&d) {
            *m += v / draws as f64;
        }
    }
    // 4 standard errors of a +-eps coin
    let bound = 4.0 * cfg.epsilon / (draws as f64).sqrt();
    assert!(mean.iter().all(|m| m.abs() < bound));
}

#[test]
fn pgd_loss_rises_with_small_steps() {
    let mut monotone = 0;
    let runs = 40;
    for seed in 0..runs {
        let model = mlp(100 + seed);
        let x = input(200 + seed);
        let cfg = AttackConfig {
            step_size: 1e-3,
            steps: 20,
            ..small_cfg()
        };
        let t = attack_pgd(&model, &x, (seed % 3) as usize, &cfg).unwrap();
        if t.loss.windows(2).all(|w| w[1] >= w[0] - 1e-12) {
            monotone += 1;
        }
    }
    assert!(monotone as f64 >= 0.95 * runs as f64, "{monotone}/{runs}");
}

#[test]
fn traces_round_trip_through_files() {
    let model = mlp(15);
    let t = run_attack(&model, &input(15), 2, &small_cfg().with_method(Method::Mi)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    t.save(dir.path(), "mi").unwrap();
    assert_eq!(AttackTrace::load(dir.path(), "mi").unwrap(), t);
}

fn method_strategy() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Single),
        Just(Method::Pgd),
        Just(Method::Mi),
        Just(Method::Vr),
        Just(Method::Ir),
        Just(Method::InteractionOnly),
        Just(Method::Noise),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_attack_stays_feasible(
        method in method_strategy(),
        l2_norm in any::<bool>(),
        eps in 0.01f64..0.5,
        alpha in 0.001f64..0.2,
        raw in any::<bool>(),
        seed in 0u64..1000,
        label in 0usize..3,
    ) {
        let model = mlp(seed);
        let x = input(seed + 1);
        let cfg = AttackConfig {
            method,
            norm: if l2_norm { Norm::L2 } else { Norm::Inf },
            epsilon: eps,
            step_size: alpha,
            update: if raw { UpdateRule::Raw } else { UpdateRule::Steepest },
            lambda: 1.0,
            steps: 5,
            vr_samples: 2,
            seed,
            ..small_cfg()
        };
        let t = run_attack(&model, &x, label, &cfg).unwrap();
        for d in t.deltas.iter().chain(std::iter::once(&t.final_delta)) {
            let size = if l2_norm { l2(d) } else { d.iter().fold(0.0f64, |m, v| m.max(v.abs())) };
            prop_assert!(size <= eps + 1e-9);
            for (xi, di) in x.iter().zip(d) {
                prop_assert!(xi + di >= -1e-12 && xi + di <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn opt_stays_inside_tau(c in 0.0f64..1.0, p in 1.0f64..6.0, tau in 0.05f64..1.0, seed in 0u64..100) {
        let model = mlp(seed);
        let x = input(seed);
        let cfg = AttackConfig {
            method: Method::Opt,
            c,
            p_relax: p,
            tau,
            step_size: 0.05,
            max_opt_steps: 200,
            ..small_cfg()
        };
        let t = attack_opt(&model, &x, 0, &cfg).unwrap();
        for d in &t.deltas {
            prop_assert!(l2(d) <= tau + 1e-9);
            for (xi, di) in x.iter().zip(d) {
                prop_assert!(xi + di >= -1e-12 && xi + di <= 1.0 + 1e-12);
            }
        }
    }
}
