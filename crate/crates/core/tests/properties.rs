use irl_lab::envs::{make_random_mdp, EnvBundle, RandomMdpConfig};
use irl_lab::io::{mdp_spec_to_string, parse_mdp_spec, MdpSpec, TransitionEncoding};
use irl_lab::me::me_density_table;
use irl_lab::occupancy::compute_occupancy;
use irl_lab::shaping::{linked_states, potential_shape, Potential};
use irl_lab::soft_vi::{plan, soft_advantage, soft_vi_infinite};
use irl_lab::trajectory::{enumerate_trajectories, trajectory_log_prob};
use irl_lab::{Horizon, RewardModel, TabularMdp};
use proptest::prelude::*;

fn env(seed: u64, n_states: usize, n_actions: usize, deterministic: bool, horizon: Horizon, gamma: f64) -> EnvBundle<f64> {
    make_random_mdp(&RandomMdpConfig {
        seed,
        n_states,
        n_actions,
        gamma,
        horizon,
        deterministic,
        feature_dim: 3,
    })
    .unwrap()
}

fn reward(b: &EnvBundle<f64>, theta: &[f64]) -> RewardModel<f64> {
    RewardModel::linear(theta.to_vec(), b.features.clone()).unwrap()
}

fn relabel(mdp: &TabularMdp<f64>, perm: &[usize]) -> TabularMdp<f64> {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut p = vec![0.0; n_s * n_a * n_s];
    let mut init = vec![0.0; n_s];
    let mut term = vec![false; n_s];
    for s in 0..n_s {
        init[perm[s]] = mdp.initial()[s];
        term[perm[s]] = mdp.is_terminal(s);
        for a in 0..n_a {
            for &(s2, q) in mdp.successors(s, a) {
                p[(perm[s] * n_a + a) * n_s + perm[s2]] = q;
            }
        }
    }
    TabularMdp::new(n_s, n_a, mdp.gamma(), mdp.horizon(), init, p, term).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn soft_policy_trajectory_probabilities_sum_to_one(
        seed in 0u64..1000, n_s in 1usize..5, n_a in 1usize..4, t in 1usize..4,
        theta in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let b = env(seed, n_s, n_a, false, Horizon::Finite(t), 0.9);
        let (_, pi) = plan(&b.mdp, &reward(&b, &theta)).unwrap();
        let total: f64 = enumerate_trajectories(&b.mdp, t).unwrap()
            .iter()
            .map(|(tr, _)| trajectory_log_prob(&b.mdp, &pi, tr).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn policy_rows_are_distributions(
        seed in 0u64..1000, n_s in 1usize..6, n_a in 1usize..4,
        theta in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let b = env(seed, n_s, n_a, false, Horizon::Infinite, 0.8);
        let (_, pi) = plan(&b.mdp, &reward(&b, &theta)).unwrap();
        for s in 0..n_s {
            let row = pi.row(0, s);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupancy_mass_is_geometric(
        seed in 0u64..1000, n_s in 1usize..6, n_a in 1usize..4, t in 1usize..8, gamma in 0.1f64..1.0,
    ) {
        let b = env(seed, n_s, n_a, false, Horizon::Finite(t), gamma);
        let (_, pi) = plan(&b.mdp, &reward(&b, &[1.0, -1.0, 0.5])).unwrap();
        let occ = compute_occupancy(&b.mdp, &pi).unwrap();
        let mass: f64 = occ.total_state().iter().sum();
        let expected: f64 = (0..t).map(|k| gamma.powi(k as i32)).sum();
        prop_assert!((mass - expected).abs() < 1e-10);
    }

    #[test]
    fn me_density_is_normalized_at_unit_discount(
        seed in 0u64..1000, n_s in 1usize..5, n_a in 1usize..4, t in 1usize..4,
        theta in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let b = env(seed, n_s, n_a, true, Horizon::Finite(t), 1.0);
        let table = me_density_table(&b.mdp, &reward(&b, &theta)).unwrap();
        prop_assert!((table.total_mass() - 1.0).abs() < 1e-9);
        let rel = (table.enumerated_log_partition() - table.log_partition).abs()
            / table.log_partition.abs().max(1.0);
        prop_assert!(rel < 1e-9);
    }

    #[test]
    fn linkage_ignores_state_order(
        seed in 0u64..1000, n_s in 2usize..7, n_a in 1usize..4, det in any::<bool>(),
        keys in prop::collection::vec(any::<u32>(), 7),
    ) {
        let b = env(seed, n_s, n_a, det, Horizon::Infinite, 0.9);
        let mut perm: Vec<usize> = (0..n_s).collect();
        perm.sort_by_key(|&i| (keys[i], i));
        let before = linked_states(&b.mdp);
        let after = linked_states(&relabel(&b.mdp, &perm));
        let mut mapped: Vec<Vec<usize>> = before
            .classes
            .iter()
            .map(|c| {
                let mut c: Vec<usize> = c.iter().map(|&s| perm[s]).collect();
                c.sort_unstable();
                c
            })
            .collect();
        mapped.sort();
        prop_assert_eq!(mapped, after.classes);
        prop_assert_eq!(before.decomposable, after.decomposable);
        let mut orphans: Vec<usize> = before.orphans.iter().map(|&s| perm[s]).collect();
        orphans.sort_unstable();
        prop_assert_eq!(orphans, after.orphans);
    }

    #[test]
    fn shaping_shifts_soft_q_by_potential(
        seed in 0u64..1000, n_s in 1usize..6, n_a in 1usize..4, gamma in 0.1f64..0.95,
        phi in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let b = env(seed, n_s, n_a, false, Horizon::Infinite, gamma);
        let r = reward(&b, &[1.0, 0.5, -2.0]);
        let phi = Potential::new(phi[..n_s].to_vec()).unwrap();
        let shaped = potential_shape(&r, &phi, gamma).unwrap();
        let (v, _) = soft_vi_infinite(&b.mdp, &r, 1e-13, 100_000).unwrap();
        let (v2, _) = soft_vi_infinite(&b.mdp, &shaped, 1e-13, 100_000).unwrap();
        for s in 0..n_s {
            for a in 0..n_a {
                let i = s * n_a + a;
                prop_assert!((v2.q[0][i] - (v.q[0][i] - phi.values()[s])).abs() < 1e-8);
            }
        }
        let (a1, a2) = (soft_advantage(&v), soft_advantage(&v2));
        for (x, y) in a1[0].iter().zip(&a2[0]) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn spec_round_trip(
        seed in 0u64..1000, n_s in 1usize..6, n_a in 1usize..4, det in any::<bool>(), t in 1usize..6,
        sparse in any::<bool>(),
    ) {
        let spec: MdpSpec<f64> = env(seed, n_s, n_a, det, Horizon::Finite(t), 0.95).into();
        let enc = if sparse { TransitionEncoding::Sparse } else { TransitionEncoding::Dense };
        let text = mdp_spec_to_string(&spec, enc);
        let back = parse_mdp_spec::<f64>(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(mdp_spec_to_string(&back, enc), text);
    }
}
