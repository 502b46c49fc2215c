use interlab_core::analysis::{
    correlation_csv, correlation_sweep, curve_csv, evaluate_transfer, grid_interaction,
    heatmap_csv, interaction_only_curve, lambda_csv, lambda_sweep, loo_select, loo_select_matrix,
    loo_transferability, magnitude_match, multi_single_leading_term, neighbor_heatmap, pearson,
    proposition_suite, success_matrix, transfer_utility, NamedModel, PropositionConfig, Tags,
};
use interlab_core::attacks::{attack_pgd, AttackConfig, UpdateRule};
use interlab_core::game::{
    mean_interaction_eq4, GridPartition, PairEstimator, Partition, QuadraticGame, SamplingPlan,
};
use interlab_core::nn::{Activation, Architecture, Dense, Layer, LossKind, Model, Sample};
use interlab_core::tensor::norm2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear(weights: Vec<f64>, classes: usize) -> Model {
    let n = weights.len() / classes;
    let dense = Dense::new(n, classes, weights, vec![0.0; classes]).unwrap();
    Model::new(n, classes, Activation::default(), vec![Layer::Dense(dense)]).unwrap()
}

fn named(id: &str, model: Model) -> NamedModel {
    NamedModel {
        id: id.into(),
        arch: "test".into(),
        model,
        train_accuracy: 0.0,
        test_accuracy: 0.0,
    }
}

fn mlp(seed: u64) -> Model {
    Model::init(
        &Architecture::Mlp { hidden: vec![12] },
        16,
        3,
        Activation::default(),
        seed,
    )
    .unwrap()
}

fn samples(count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| Sample {
            x: (0..16).map(|_| rng.random_range(0.1..0.9)).collect(),
            label: k % 3,
        })
        .collect()
}

fn small_cfg() -> AttackConfig {
    AttackConfig {
        steps: 8,
        grid: 4,
        epsilon: 0.2,
        step_size: 0.05,
        sampling: SamplingPlan {
            k: 4,
            batchsize: 4,
            seed: 3,
        },
        ..AttackConfig::default()
    }
}

fn textbook_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1.0);
    let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    cov / (sx * sy)
}

#[test]
fn pearson_matches_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let xs: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.4 * x + rng.random_range(-2.0..2.0))
            .collect();
        let r = pearson(&xs, &ys).r.unwrap();
        assert!((r - textbook_pearson(&xs, &ys)).abs() < 1e-12);
    }
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys: Vec<f64> = xs.iter().map(|x| -x).collect();
    assert!((pearson(&xs, &ys).r.unwrap() + 1.0).abs() < 1e-15);
    assert!(pearson(&[2.0, 2.0], &[5.0, 5.0]).is_undefined());
}

#[test]
fn transfer_utility_oracles() {
    let w: Vec<f64> = (0..32).map(|k| (k as f64 * 0.37).sin()).collect();
    let target = linear(w.clone(), 2);
    let x: Vec<f64> = (0..16).map(|k| 0.3 + 0.02 * k as f64).collect();
    let d: Vec<f64> = (0..16).map(|k| 0.01 * (k as f64 - 7.5)).collect();
    assert_eq!(
        transfer_utility(&target, &x, 0, &vec![0.0; 16]).unwrap(),
        0.0
    );
    let closed: f64 = (0..16).map(|a| (w[16 + a] - w[a]) * d[a]).sum();
    assert!((transfer_utility(&target, &x, 0, &d).unwrap() - closed).abs() < 1e-12);
    assert!(transfer_utility(&target, &x, 2, &d).is_err());
    assert!(transfer_utility(&target, &x, 0, &d[..3]).is_err());
}

#[test]
fn white_box_transfer_is_positive() {
    let model = mlp(1);
    let cfg = small_cfg();
    for s in samples(6, 2) {
        let t = attack_pgd(&model, &s.x, s.label, &cfg).unwrap();
        assert!(transfer_utility(&model, &s.x, s.label, &t.final_delta).unwrap() > 0.0);
    }
}

#[test]
fn transfer_report_records() {
    let model = mlp(4);
    let data = samples(5, 9);
    let deltas: Vec<Vec<f64>> = (0..5).map(|k| vec![0.01 * k as f64; 16]).collect();
    let rep = evaluate_transfer("s", "t", &model, &data, &deltas, Tags::default()).unwrap();
    for (r, (s, d)) in rep.records.iter().zip(data.iter().zip(&deltas)) {
        assert_eq!(r.transfer_utility, r.perturbed_margin - r.clean_margin);
        let xd: Vec<f64> = s.x.iter().zip(d).map(|(a, b)| a + b).collect();
        assert_eq!(r.success, model.predict(&xd).unwrap() != s.label);
    }
    assert!(evaluate_transfer("s", "t", &model, &data[..2], &deltas, Tags::default()).is_err());
}

fn brute_force_loo(m: &[Vec<bool>]) -> Vec<usize> {
    let n = m.len();
    let steps = m[0].len();
    let mut picks = Vec::new();
    for i in 0..n {
        let mut best = (0, -1.0);
        for t in 0..steps {
            let mut hits = 0.0;
            for (k, row) in m.iter().enumerate() {
                if k != i && row[t] {
                    hits += 1.0;
                }
            }
            let rate = hits / (n - 1) as f64;
            if rate > best.1 {
                best = (t, rate);
            }
        }
        picks.push(best.0);
    }
    picks
}

#[test]
fn loo_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m: Vec<Vec<bool>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_bool(0.5)).collect())
            .collect();
        assert_eq!(loo_select_matrix(&m).unwrap(), brute_force_loo(&m));
    }
}

proptest! {
    #[test]
    fn loo_is_order_invariant(bits in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 6), 2..8), rot in 0usize..8) {
        let picks = loo_select_matrix(&bits).unwrap();
        let r = rot % bits.len();
        let mut rotated = bits.clone();
        rotated.rotate_left(r);
        let mut expected = picks.clone();
        expected.rotate_left(r);
        prop_assert_eq!(loo_select_matrix(&rotated).unwrap(), expected);
        let (p, rate) = loo_transferability(&bits).unwrap();
        let hits = bits.iter().zip(&p).filter(|(row, &t)| row[t]).count();
        prop_assert_eq!(rate, hits as f64 / bits.len() as f64);
    }
}

#[test]
fn loo_select_reports_step_indices() {
    let model = mlp(2);
    let data = samples(4, 3);
    let cfg = AttackConfig {
        steps: 250,
        ..small_cfg()
    };
    let traces: Vec<_> = data
        .iter()
        .map(|s| attack_pgd(&model, &s.x, s.label, &cfg).unwrap())
        .collect();
    let steps = loo_select(&traces, &model, &data).unwrap();
    let matrix = loo_select_matrix(&success_matrix(&model, &data, &traces).unwrap()).unwrap();
    for (s, k) in steps.iter().zip(matrix) {
        assert_eq!(*s, traces[0].step_indices[k]);
        assert!(*s % 3 == 0 || *s == 250);
    }
    assert!(loo_select(&traces[..1], &model, &data[..1]).is_err());
}

#[test]
fn grid_interaction_matches_eq4() {
    let model = mlp(3);
    let s = &samples(1, 4)[0];
    let grid = GridPartition::new(4, 4, 2).unwrap();
    let d: Vec<f64> = (0..16).map(|k| 0.05 * ((k * 7 % 5) as f64 - 2.0)).collect();
    let game = interlab_core::game::CoalitionGame::new(&model, &s.x, &d, grid.partition(), s.label)
        .unwrap();
    let want = mean_interaction_eq4(&game).unwrap().mean_interaction;
    assert_eq!(
        grid_interaction(&model, &s.x, s.label, &d, &grid).unwrap(),
        want
    );
    assert_eq!(
        grid_interaction(&model, &s.x, s.label, &vec![0.0; 16], &grid).unwrap(),
        0.0
    );
}

#[test]
fn magnitude_matching() {
    let d = magnitude_match(&[1.0, 1.0, 0.0], &[3.0, 4.0]);
    assert!((norm2(&d) - 5.0).abs() < 1e-12);
    assert!((d[0] - d[1]).abs() < 1e-15 && d[2] == 0.0);
}

#[test]
fn sweeps_reject_bad_grids() {
    let src = named("src", mlp(1));
    let tgt = vec![named("t", mlp(2))];
    let data = samples(3, 1);
    let grid = GridPartition::new(4, 4, 4).unwrap();
    let cfg = small_cfg();
    assert!(correlation_sweep(&src, &tgt, &data, &[0.0, 1.0], &[2.0], 0.1, &cfg, &grid).is_err());
    assert!(lambda_sweep(&src, &tgt, &data, &[1.0, 2.0], &cfg, &grid).is_err());
}

#[test]
fn correlation_sweep_points_share_examples() {
    let src = named("src", mlp(1));
    let tgt = vec![named("a", mlp(2)), named("b", mlp(3))];
    let data = samples(4, 6);
    let grid = GridPartition::new(4, 4, 4).unwrap();
    let cfg = AttackConfig {
        step_size: 0.05,
        max_opt_steps: 200,
        ..small_cfg()
    };
    let sweep = correlation_sweep(
        &src,
        &tgt,
        &data,
        &[0.0, 0.5, 2.0],
        &[2.0],
        0.3,
        &cfg,
        &grid,
    )
    .unwrap();
    assert_eq!(sweep.points.len(), 6);
    assert!(sweep.points.iter().all(|p| p.examples == 4));
    assert_eq!(sweep.correlations.len(), 2);
    let mut buf = Vec::new();
    correlation_csv(&sweep, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(
        text.starts_with("source,target,c,p_relax,mean_interaction,mean_transfer_utility,examples")
    );
}

#[test]
fn lambda_zero_row_is_the_pgd_baseline() {
    let src = named("src", mlp(5));
    let tgt = vec![named("t", mlp(6))];
    let data = samples(5, 8);
    let grid = GridPartition::new(4, 4, 4).unwrap();
    let cfg = small_cfg();
    let sweep = lambda_sweep(&src, &tgt, &data, &[0.0, 1.0], &cfg, &grid).unwrap();
    let pgd: Vec<_> = data
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let c = AttackConfig {
                seed: k as u64,
                ..cfg.clone()
            };
            attack_pgd(&src.model, &s.x, s.label, &c).unwrap()
        })
        .collect();
    let (_, loo) =
        loo_transferability(&success_matrix(&tgt[0].model, &data, &pgd).unwrap()).unwrap();
    assert_eq!(sweep.row(0.0, "t").unwrap().loo_success_rate, loo);
    let mut buf = Vec::new();
    lambda_csv(&sweep, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
}

#[test]
fn interaction_only_curve_starts_at_clean_error() {
    let src = named("src", mlp(7));
    let tgt = vec![named("t", mlp(8))];
    let data = samples(6, 10);
    let cfg = AttackConfig {
        lambda: 1.0,
        ..small_cfg()
    };
    let curve = interaction_only_curve(&src, &tgt, &data, &cfg).unwrap();
    let clean = data
        .iter()
        .filter(|s| tgt[0].model.predict(&s.x).unwrap() != s.label)
        .count() as f64
        / 6.0;
    assert_eq!(curve.targets[0].success_by_epoch[0], clean);
    assert_eq!(curve.epochs.len(), curve.targets[0].success_by_epoch.len());
    assert_eq!(
        curve,
        interaction_only_curve(&src, &tgt, &data, &cfg).unwrap()
    );
    let mut buf = Vec::new();
    curve_csv(&curve, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + curve.epochs.len() + 1);
    assert!(text.lines().last().unwrap().starts_with("t,noise,"));
}

#[test]
fn linear_models_have_no_interaction_gaps() {
    let w: Vec<f64> = (0..32).map(|k| (k as f64 * 0.91).cos()).collect();
    let model = linear(w, 2);
    let data: Vec<Sample> = samples(6, 12)
        .into_iter()
        .map(|s| Sample {
            label: s.label % 2,
            ..s
        })
        .collect();
    let cfg = PropositionConfig {
        attack: AttackConfig {
            loss: LossKind::Margin,
            vr_samples: 4,
            ..small_cfg()
        },
        grid: 4,
        bootstrap_resamples: 200,
        hessian_examples: 1,
        ..PropositionConfig::default()
    };
    let rep = proposition_suite(&[&model], &data, &cfg).unwrap();
    for c in &rep.comparisons {
        assert_eq!(c.pairs, 6);
        assert!(c.differences.iter().all(|d| d.abs() < 1e-12), "{}", c.name);
    }
    assert!(rep.hessian.max_abs < 1e-6);
}

#[test]
fn proposition_suite_collects_hessians() {
    let models = [mlp(1), mlp(2)];
    let refs: Vec<&Model> = models.iter().collect();
    let cfg = PropositionConfig {
        attack: AttackConfig {
            loss: LossKind::Margin,
            vr_samples: 2,
            ..small_cfg()
        },
        grid: 4,
        bootstrap_resamples: 100,
        hessian_examples: 2,
        ..PropositionConfig::default()
    };
    let rep = proposition_suite(&refs, &samples(3, 1), &cfg).unwrap();
    assert_eq!(rep.comparisons.len(), 4);
    assert!(rep.hessian.n == 2 * 2 * 16 * 15 && rep.hessian.max_abs.is_finite());
    assert_eq!(rep.hessian.counts.iter().sum::<usize>(), rep.hessian.n);
    assert!(rep.comparison("multi-vs-single").is_some());
}

fn quadratic_case(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut h = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = rng.random_range(-1.0..1.0);
            h[a * n + b] = v;
            h[b * n + a] = v;
        }
    }
    (g, h)
}

#[test]
fn multi_step_gap_matches_leading_term() {
    let n = 6;
    let alpha = 1e-3;
    let m = 5;
    for seed in 0..20 {
        let (g, h) = quadratic_case(seed);
        let mut multi = vec![0.0; n];
        for _ in 0..m {
            let grad: Vec<f64> = (0..n)
                .map(|a| g[a] + (0..n).map(|b| h[a * n + b] * multi[b]).sum::<f64>())
                .collect();
            for a in 0..n {
                multi[a] += alpha * grad[a];
            }
        }
        let single: Vec<f64> = g.iter().map(|v| m as f64 * alpha * v).collect();
        let mean_pair = |d: &[f64]| {
            let game =
                QuadraticGame::new(g.clone(), h.clone(), d.to_vec(), Partition::singletons(n))
                    .unwrap();
            let mut total = 0.0;
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        total += game.analytic_interaction(a, b);
                    }
                }
            }
            total / (n * (n - 1)) as f64
        };
        let gap = mean_pair(&multi) - mean_pair(&single);
        let lead = multi_single_leading_term(&g, &h, alpha, m);
        assert_eq!(gap.signum(), lead.signum(), "seed {seed}");
        assert!(
            (gap - lead).abs() < 0.05 * lead.abs(),
            "seed {seed}: {gap} vs {lead}"
        );
    }
}

#[test]
fn raw_update_rule_is_available_for_propositions() {
    let cfg = AttackConfig {
        update: UpdateRule::Raw,
        ..small_cfg()
    };
    assert!(cfg.validate(16).is_ok());
}

#[test]
fn neighbor_heatmap_cells() {
    let model = mlp(9);
    let s = &samples(1, 2)[0];
    let grid = GridPartition::new(4, 4, 2).unwrap();
    let d = vec![0.05; 16];
    let cells = neighbor_heatmap(&model, &s.x, s.label, &d, &grid, PairEstimator::Exact).unwrap();
    assert_eq!(cells.len(), 4);
    assert_eq!((cells[3].row, cells[3].col), (1, 1));
    let zero = neighbor_heatmap(
        &model,
        &s.x,
        s.label,
        &vec![0.0; 16],
        &grid,
        PairEstimator::Exact,
    )
    .unwrap();
    assert!(zero.iter().all(|c| c.value == 0.0));
    let mut buf = Vec::new();
    heatmap_csv(&cells, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("row,col,value\n0,0,"));
    assert_eq!(text.lines().count(), 5);
}
