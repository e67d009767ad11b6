mod common;

use common::{gradient_check, random_input, random_mini_config};
use mrsdistill::nn::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..8 {
        let cfg = random_mini_config(&mut rng);
        let mut net = Network::new(cfg.clone(), case).unwrap();
        let batch = rng.random_range(2..=4);
        let x = random_input(&mut rng, batch, 16);
        let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();
        let check = gradient_check(&mut net, &x, &labels, 100 + case, 1e-5);
        assert!(
            check.worst_rel < 1e-4,
            "case {case} {cfg:?}: worst {} ({})",
            check.worst_rel,
            check.worst_name
        );
    }
}
