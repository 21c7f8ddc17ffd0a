use irl_lab::airl::{airl_fit, stationary_soft_advantage, AirlConfig, DiscriminatorForm};
use irl_lab::envs::{make_gridworld, make_random_mdp, GridworldConfig, RandomMdpConfig};
use irl_lab::gcl::{gcl_fit, GclConfig, GclMode};
use irl_lab::mce::{dual_gradient, mce_irl_fit, FitConfig, LearningRate};
use irl_lab::occupancy::expected_return;
use irl_lab::soft_vi::plan;
use irl_lab::trajectory::{discounted_return, sample_trajectories};
use irl_lab::{DemonstrationSet, FeatureMap, Horizon, Policy, RewardModel, TabularMdp, TabularShape};

#[test]
fn expected_return_agrees_with_monte_carlo() {
    for seed in 0..3 {
        let b = make_random_mdp::<f64>(&RandomMdpConfig {
            seed,
            horizon: Horizon::Finite(6),
            ..Default::default()
        })
        .unwrap();
        let r = RewardModel::linear(vec![1.0, -0.5, 2.0], b.features.clone()).unwrap();
        let (_, pi) = plan(&b.mdp, &r).unwrap();
        let exact = expected_return(&b.mdp, &pi, &r).unwrap();
        let n = 20_000;
        let returns: Vec<f64> = sample_trajectories(&b.mdp, &pi, n, seed)
            .unwrap()
            .iter()
            .map(|t| discounted_return(t, &r, 0.9))
            .collect();
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "seed {seed}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn mce_fit_matches_gridworld_expert() {
    let b = make_gridworld::<f64>(&GridworldConfig {
        width: 4,
        height: 3,
        goal_rewards: vec![(11, 1.0), (5, -0.5)],
        ..Default::default()
    })
    .unwrap();
    let (_, expert) = plan(&b.mdp, b.reward.as_ref().unwrap()).unwrap();
    let demos = DemonstrationSet::ExactPolicy(expert);
    let model = RewardModel::linear(vec![0.0; 12], b.features.clone()).unwrap();
    let cfg = FitConfig {
        learning_rate: LearningRate::Constant(0.5),
        stop_grad_norm: 1e-9,
        ..Default::default()
    };
    let fit = mce_irl_fit(&b.mdp, &demos, &model, &cfg).unwrap();
    assert!(fit.trace.converged);
    assert!(fit.trace.failure.is_none());
    assert!(fit.trace.final_grad_norm() <= 1e-9);
}

#[test]
fn mce_fit_reports_numerical_failure_with_trace() {
    let b = make_gridworld::<f64>(&GridworldConfig {
        goal_rewards: vec![(8, 1.0)],
        ..Default::default()
    })
    .unwrap();
    let (_, expert) = plan(&b.mdp, b.reward.as_ref().unwrap()).unwrap();
    let model = RewardModel::linear(vec![0.0; 9], b.features.clone()).unwrap();
    let cfg = FitConfig {
        learning_rate: LearningRate::Constant(1e306),
        max_iters: 50,
        ..Default::default()
    };
    let fit = mce_irl_fit(&b.mdp, &DemonstrationSet::ExactPolicy(expert), &model, &cfg).unwrap();
    assert!(fit.trace.failure.is_some());
    assert!(!fit.trace.converged);
    assert!(!fit.trace.records.is_empty());
}

#[test]
fn sampled_gcl_closes_feature_gap_on_gridworld() {
    let b = make_gridworld::<f64>(&GridworldConfig {
        width: 3,
        height: 2,
        stay_action: true,
        gamma: 1.0,
        horizon: Horizon::Finite(4),
        goal_rewards: vec![(5, 1.0), (1, -1.0)],
    })
    .unwrap();
    let (_, expert) = plan(&b.mdp, b.reward.as_ref().unwrap()).unwrap();
    let demos = DemonstrationSet::ExactPolicy(expert);
    let model = RewardModel::linear(vec![0.0; 6], b.features.clone()).unwrap();
    let cfg = GclConfig {
        outer_iters: 300,
        n_samples: 4000,
        lr: 0.2,
        seed: 7,
        mode: GclMode::Sampled,
        ..Default::default()
    };
    let out = gcl_fit(&b.mdp, &demos, &model, &cfg).unwrap();
    assert!(out.fit.trace.records.iter().all(|r| r.ess.is_none_or(|e| e > 1.0)));
    let demo_grad = demos.grad_expectations(&b.mdp, &out.fit.model).unwrap();
    let gap = dual_gradient(&b.mdp, &out.fit.model, &demo_grad).unwrap();
    let worst = gap.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    assert!(worst < 0.05, "feature gap {worst}");
}

#[test]
fn free_form_airl_recovers_expert_advantage_on_chain() {
    // 4-state chain, actions left/right, right end absorbing-free
    let next = vec![vec![0, 1], vec![0, 2], vec![1, 3], vec![2, 3]];
    let mdp = TabularMdp::<f64>::deterministic(0.9, Horizon::Finite(8), vec![1.0, 0.0, 0.0, 0.0], &next, vec![false; 4]).unwrap();
    let truth = RewardModel::tabular(TabularShape::State, 4, 2, vec![0.0, 0.1, -0.2, 1.0]).unwrap();
    let adv = stationary_soft_advantage(&mdp, &truth).unwrap();
    let expert = Policy::stationary(4, 2, adv.iter().map(|a| a.exp()).collect()).unwrap();
    let cfg = AirlConfig {
        outer_iters: 3000,
        form: DiscriminatorForm::Free,
        ..Default::default()
    };
    let out = airl_fit(&mdp, &DemonstrationSet::ExactPolicy(expert), &cfg).unwrap();
    assert!(!out.diverged);
    let f = out.discriminator.params();
    let worst = f.iter().zip(&adv).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(worst < 0.05, "max |f - A| = {worst}");
}

#[test]
fn zero_feature_model_is_already_optimal() {
    let b = make_random_mdp::<f64>(&RandomMdpConfig::default()).unwrap();
    let zeros = FeatureMap::new(4, 2, 1, vec![0.0; 8]).unwrap();
    let model = RewardModel::linear(vec![0.0], zeros).unwrap();
    let demos = DemonstrationSet::ExactPolicy(Policy::uniform(4, 2));
    let fit = mce_irl_fit(&b.mdp, &demos, &model, &FitConfig::default()).unwrap();
    assert!(fit.trace.converged);
    assert_eq!(fit.trace.records.len(), 1);
    assert_eq!(fit.theta(), &[0.0]);
}
