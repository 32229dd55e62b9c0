//! REINFORCE on an MDP small enough to enumerate: the sample-mean gradient
//! must approach the exact gradient of the expected reward.

use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reic::nn::{finite_diff_grad, Parameterized};
use reic::rltrain::{policy_gradient, Rollout};
use reic::selector::{select, trajectory_log_prob, PolicyConfig, PolicyNetwork, SelectorConfig};

fn reward(choices: &[usize]) -> f64 {
    match choices {
        [1, 2] => 1.0,
        [2, 1] => -0.4,
        _ => unreachable!("only two trajectories exist"),
    }
}

fn expected_reward_gradient(net: &PolicyNetwork, z: &Array2<f64>) -> Vec<f64> {
    let mut probe = net.clone();
    finite_diff_grad(
        |p| {
            probe.set_flat_params(p);
            [[1, 2], [2, 1]]
                .iter()
                .map(|c| trajectory_log_prob(&probe, z.view(), 0, c, false).unwrap().exp() * reward(c))
                .sum()
        },
        &net.flat_params(),
        1e-6,
    )
}

#[test]
fn sampled_gradient_matches_enumeration() {
    let z = array![[0.4, -0.3], [0.9, 0.2], [-0.5, 0.7]];
    let mut init = ChaCha8Rng::seed_from_u64(12);
    let mut net = PolicyNetwork::new(
        PolicyConfig {
            embed_dim: 2,
            hidden_dim: 3,
            scorer_hidden: 4,
        },
        &mut init,
    );
    let exact = expected_reward_gradient(&net, &z);
    let cfg = SelectorConfig {
        max_steps: 2,
        ..SelectorConfig::default()
    };
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut rollouts: Vec<Rollout> = (0..n)
        .map(|_| {
            let s = select(&net, z.view(), 0, &cfg, &mut rng).unwrap();
            Rollout {
                reward: reward(&s.selected[1..]),
                traces: vec![s.trace],
            }
        })
        .collect();
    let mc = policy_gradient(&mut net, &mut rollouts).unwrap();
    let scale = exact.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for (i, (a, b)) in mc.iter().zip(&exact).enumerate() {
        if b.abs() > 1e-6 * scale {
            assert!(
                (a - b).abs() <= 0.02 * b.abs(),
                "coordinate {i}: sampled {a} vs exact {b}"
            );
        }
    }
}
