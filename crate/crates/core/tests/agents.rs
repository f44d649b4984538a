use ndarray::{array, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zcmes::agents::*;
use zcmes::env::Mdp;

/// One-state, one-step problem with reward `-(a - target)^2`.
struct Bandit {
    target: f64,
    scale: f64,
}

impl Mdp for Bandit {
    fn obs_dim(&self) -> usize {
        1
    }
    fn act_dim(&self) -> usize {
        1
    }
    fn action_low(&self) -> Vec<f64> {
        vec![-1.0]
    }
    fn action_high(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn reset_train(&mut self, _: usize) -> Vec<f64> {
        vec![1.0]
    }
    fn reset_eval(&mut self, _: usize) -> Vec<f64> {
        vec![1.0]
    }
    fn step_mdp(&mut self, a: &[f64]) -> (Vec<f64>, f64, bool) {
        (vec![1.0], -self.scale * (a[0] - self.target).powi(2), true)
    }
}

fn small(algo: Algo) -> HyperParams {
    HyperParams {
        net_arch: vec![16, 16],
        batch_size: 32,
        buffer_size: 5000,
        learning_starts: 64,
        lr: 3e-3,
        gamma: 0.9,
        tau: 0.05,
        ..HyperParams::tuned(algo)
    }
}

fn batch() -> Minibatch {
    Minibatch {
        s: array![[0.1, 0.2], [0.3, -0.4], [-0.5, 0.6]],
        a: array![[0.5], [-0.2], [0.9]],
        r: array![1.0, -2.0, 0.5],
        s2: array![[0.2, 0.2], [0.0, 0.1], [0.7, -0.6]],
        done: array![0.0, 1.0, 0.0],
    }
}

fn sac(hp: &HyperParams) -> Sac {
    Sac::new(hp, 2, ActionBox::new(vec![-1.0], vec![1.0]), 3)
}

#[test]
fn sac_learns_bandit_mode() {
    let mut env = Bandit { target: 0.4, scale: 1.0 };
    let out = train(&mut env, &small(Algo::Sac), 3000, 1, &mut |_| true).unwrap();
    let a = out.agent.policy().act(&[1.0])[0];
    assert!((a - 0.4).abs() < 0.1, "mode {a}");
}

#[test]
fn td3_learns_bandit_mode() {
    let mut env = Bandit { target: -0.3, scale: 1.0 };
    let hp = HyperParams { noise_std: 0.3, ..small(Algo::Td3) };
    let out = train(&mut env, &hp, 3000, 2, &mut |_| true).unwrap();
    let a = out.agent.policy().act(&[1.0])[0];
    assert!((a + 0.3).abs() < 0.1, "action {a}");
}

#[test]
fn larger_entropy_weight_keeps_policy_wider() {
    let entropy = |alpha: f64| {
        let mut env = Bandit { target: 0.0, scale: 1.0 };
        let hp = HyperParams { ent_coef: alpha, ..small(Algo::Sac) };
        let out = train(&mut env, &hp, 2000, 5, &mut |_| true).unwrap();
        let Agent::Sac(sac) = out.agent else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = Array2::from_elem((2000, 1), 1.0);
        let smp = sample_gaussian(&sac.actor, s.view(), &sac.bounds, &mut rng, false, false);
        -smp.log_prob.mean().unwrap()
    };
    let (lo, hi) = (entropy(0.0), entropy(0.2));
    assert!(hi > lo, "entropy {lo} at alpha 0, {hi} at alpha 0.2");
}

#[test]
fn critic_targets_respect_discount_and_terminal() {
    let mut hp = small(Algo::Sac);
    hp.gamma = 0.5;
    let mut s = sac(&hp);
    let mb = batch();
    let v = s.v_target.predict(&mb.s2).unwrap();
    let t = s.critic_targets(&mb);
    assert!((t[0] - (1.0 + 0.5 * v[[0, 0]])).abs() < 1e-12);
    assert_eq!(t[1], -2.0);
    s.hp.gamma = 0.0;
    assert_eq!(s.critic_targets(&mb), mb.r);
}

#[test]
fn critic_loss_decreases_on_fixed_batch() {
    let mut s = sac(&small(Algo::Sac));
    let mb = batch();
    let first = s.critic_update(&mb);
    let mut last = first;
    for _ in 0..100 {
        last = s.critic_update(&mb);
    }
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn value_update_soft_update_boundaries() {
    let mb = batch();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = sac(&HyperParams { tau: 1.0, ..small(Algo::Sac) });
    s.value_update(&mb, &mut rng);
    assert_eq!(s.v_target, s.v);

    // an exactly zero rate is outside the validated range but the update rule still holds
    let mut s = sac(&small(Algo::Sac));
    s.hp.tau = 0.0;
    let frozen = s.v_target.clone();
    for _ in 0..5 {
        s.value_update(&mb, &mut rng);
    }
    assert_eq!(s.v_target, frozen);
    assert_ne!(s.v, frozen);
}

#[test]
fn value_targets_drop_entropy_at_zero_weight_and_ignore_critic_order() {
    let mb = batch();
    let s = sac(&HyperParams { ent_coef: 0.0, ..small(Algo::Sac) });
    let t = s.value_targets(&mb.s, &mut ChaCha8Rng::seed_from_u64(9));
    // rebuild the same draw and take the twin minimum by hand
    let smp = sample_gaussian(&s.actor, mb.s.view(), &s.bounds, &mut ChaCha8Rng::seed_from_u64(9), false, false);
    let sa = ndarray::concatenate(ndarray::Axis(1), &[mb.s.view(), smp.actions.view()]).unwrap();
    let q1 = s.q1.predict(&sa).unwrap();
    let q2 = s.q2.predict(&sa).unwrap();
    let expect: Array1<f64> = (0..3).map(|i| q1[[i, 0]].min(q2[[i, 0]])).collect();
    assert_eq!(t, expect);

    let s = sac(&small(Algo::Sac));
    let mut swapped = s.clone();
    std::mem::swap(&mut swapped.q1, &mut swapped.q2);
    let a = s.value_targets(&mb.s, &mut ChaCha8Rng::seed_from_u64(4));
    let b = swapped.value_targets(&mb.s, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(a, b);
}

#[test]
fn actor_step_leaves_critics_alone() {
    let mut s = sac(&small(Algo::Sac));
    let mb = batch();
    let (q1, q2, v, actor) = (s.q1.clone(), s.q2.clone(), s.v.clone(), s.actor.clone());
    s.actor_update(&mb, &mut ChaCha8Rng::seed_from_u64(2));
    assert_eq!((&s.q1, &s.q2, &s.v), (&q1, &q2, &v));
    assert_ne!(s.actor, actor);
}

#[test]
fn tracking_network_stays_within_historical_norm() {
    let mut s = sac(&small(Algo::Sac));
    let mb = batch();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_norm = s.v.norm();
    for _ in 0..200 {
        s.update(&mb, &mut rng);
        max_norm = max_norm.max(s.v.norm());
        assert!(s.v_target.norm() <= max_norm + 1e-12);
    }
}

#[test]
fn td3_delays_actor_updates() {
    for d in [1, 2, 3] {
        let hp = HyperParams { policy_delay: d, ..small(Algo::Td3) };
        let mut t = Td3::new(&hp, 2, ActionBox::new(vec![-1.0], vec![1.0]), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut actor_steps = 0;
        for k in 1..=12u64 {
            let st = t.update(&batch(), &mut rng);
            if st.actor_loss.is_some() {
                actor_steps += 1;
                assert_eq!(k % d as u64, 0);
            }
        }
        assert_eq!(actor_steps, 12 / d);
        assert_eq!(t.actor_updates(), 12 / d as u64);
    }
}

#[test]
fn td3_without_noise_is_deterministic() {
    let hp = HyperParams { noise_std: 0.0, ..small(Algo::Td3) };
    let t = Td3::new(&hp, 2, ActionBox::new(vec![0.0], vec![1.0]), 0);
    let a = t.act(&[0.3, 0.1], &mut ChaCha8Rng::seed_from_u64(1), true);
    let b = t.act(&[0.3, 0.1], &mut ChaCha8Rng::seed_from_u64(2), true);
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a[0]));
}

#[test]
fn training_is_reproducible() {
    let run = |seed| {
        let mut env = Bandit { target: 0.2, scale: 1.0 };
        train(&mut env, &small(Algo::Sac), 600, seed, &mut |_| true).unwrap()
    };
    let (a, b, c) = (run(3), run(3), run(4));
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.agent.policy(), b.agent.policy());
    assert_ne!(a.curve, c.curve);
}

#[test]
fn divergence_aborts_with_diagnostics() {
    let mut env = Bandit { target: 0.0, scale: 1e300 };
    let err = train(&mut env, &small(Algo::Sac), 500, 0, &mut |_| true).unwrap_err();
    match err {
        AgentError::Diverged(msg) => assert!(msg.contains("critic") && msg.contains("|actor|"), "{msg}"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn hook_can_stop_training() {
    let mut env = Bandit { target: 0.0, scale: 1.0 };
    let out = train(&mut env, &small(Algo::Sac), 500, 0, &mut |l| l.step < 100).unwrap();
    assert!(out.stopped);
    assert_eq!(out.steps, 100);
}

#[test]
fn policy_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    for algo in [Algo::Sac, Algo::Td3] {
        let hp = small(algo);
        let bounds = ActionBox::new(vec![0.0, -1.0], vec![1.0, 1.0]);
        let agent = Agent::new(&hp, 3, bounds.clone(), 1).unwrap();
        let pol = agent.policy();
        let m = Manifest::new(&hp, 3, &bounds, "abc", 1, 10);
        save_policy(dir.path(), &pol, &m).unwrap();
        let (back, m2) = load_policy(dir.path()).unwrap();
        assert_eq!(back, pol);
        assert_eq!(m2, m);
        let a = back.act(&[0.1, 0.2, 0.3]);
        assert!((0.0..=1.0).contains(&a[0]) && (-1.0..=1.0).contains(&a[1]));
    }
}

#[test]
fn curve_csv_has_expected_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let mut env = Bandit { target: 0.0, scale: 1.0 };
    let out = train(&mut env, &small(Algo::Td3), 100, 0, &mut |_| true).unwrap();
    write_curve(&path, &out.curve).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("step,return,critic_loss,actor_loss,entropy\n"));
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn invalid_hyperparameters_rejected() {
    for hp in [
        HyperParams { gamma: 1.0, ..small(Algo::Sac) },
        HyperParams { tau: 0.0, ..small(Algo::Sac) },
        HyperParams { batch_size: 10_000, ..small(Algo::Sac) },
        HyperParams { net_arch: vec![0], ..small(Algo::Sac) },
    ] {
        assert!(matches!(hp.validate(), Err(AgentError::Argument(_))));
    }
    let mut env = Bandit { target: 0.0, scale: 1.0 };
    assert!(train(&mut env, &small(Algo::Sac), 10, 0, &mut |_| true).is_err());
}
