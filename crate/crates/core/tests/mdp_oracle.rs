use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpitch_core::mdp::{dp_q_pi, rollout_corpus, TinyMdp};

fn draw(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|v| *v > 0.0).unwrap()
}

/// Plain rollout sampler, independent of the crate's.
fn mc_return(mdp: &TinyMdp, s0: usize, a0: usize, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut total = 0.0;
    for _ in 0..n {
        let mut s = draw(&mdp.transitions[s0][a0], rng);
        while !mdp.terminal[s] {
            let a = draw(&mdp.policy[s], rng);
            s = draw(&mdp.transitions[s][a], rng);
        }
        total += mdp.terminal_reward[s];
    }
    total / n as f64
}

#[test]
fn dp_matches_monte_carlo_on_random_mdp() {
    let mdp = TinyMdp::random(11, 5, 2, 2).unwrap();
    let q = dp_q_pi(&mdp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for s in (0..mdp.n_states()).filter(|&s| !mdp.terminal[s]) {
        for a in 0..mdp.n_actions() {
            let mc = mc_return(&mdp, s, a, 1_000_000, &mut rng);
            assert!((mc - q[s][a]).abs() < 0.01, "Q({s},{a}) dp {} mc {mc}", q[s][a]);
        }
    }
}

#[test]
fn dp_matches_monte_carlo_on_shipped_mdp() {
    let mdp = TinyMdp::shipped();
    let q = dp_q_pi(&mdp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for s in 0..3 {
        for a in 0..2 {
            let mc = mc_return(&mdp, s, a, 200_000, &mut rng);
            assert!((mc - q[s][a]).abs() < 0.01, "Q({s},{a}) dp {} mc {mc}", q[s][a]);
        }
    }
}

/// s0 -> s1; s1 -> s2 (0.3), T (0.3), s0 (0.4); s2 -> T. One action, start at s0.
fn occupancy_chain() -> TinyMdp {
    TinyMdp {
        transitions: vec![
            vec![vec![0.0, 1.0, 0.0, 0.0]],
            vec![vec![0.4, 0.0, 0.3, 0.3]],
            vec![vec![0.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0; 4]],
        ],
        terminal: vec![false, false, false, true],
        terminal_reward: vec![0.0, 0.0, 0.0, 1.0],
        policy: vec![vec![1.0]; 4],
        start: vec![1.0, 0.0, 0.0, 0.0],
    }
}

#[test]
fn visit_frequencies_match_closed_form_occupancy() {
    // Expected visits per episode: v0 = 1 + 0.4 v1, v1 = v0, v2 = 0.3 v1.
    let v0 = 1.0 / (1.0 - 0.4);
    let expected = [v0, v0, 0.3 * v0];
    let total: f64 = expected.iter().sum();

    let eps = rollout_corpus(&occupancy_chain(), 2024, 100_000).unwrap();
    let mut counts = [0usize; 3];
    for e in &eps {
        for &s in &e.states {
            counts[s] += 1;
        }
        assert_eq!(e.terminal_state, 3);
        assert_eq!(e.reward, 1.0);
    }
    let n: usize = counts.iter().sum();
    for s in 0..3 {
        let got = counts[s] as f64 / n as f64;
        let want = expected[s] / total;
        assert!((got - want).abs() < 0.01, "state {s}: {got} vs {want}");
    }
    // Fraction check alone would miss a uniform rescaling of episode length.
    let per_episode = n as f64 / eps.len() as f64;
    assert!((per_episode - total).abs() < 0.05, "{per_episode} vs {total}");
}

#[test]
fn dp_on_chain_is_one_everywhere() {
    // Iteration stops on a 1e-12 change; the s0-s1 loop contracts by about
    // 0.63 per sweep, leaving a few 1e-12 of error.
    let q = dp_q_pi(&occupancy_chain()).unwrap();
    for row in &q[..3] {
        assert!((row[0] - 1.0).abs() < 1e-10, "{}", row[0]);
    }
}
