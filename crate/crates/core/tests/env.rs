use seqrl_core::data::FRAME_PIXELS;
use seqrl_core::env::{default_suite, generate_dataset, mean_policy_return, GameSpec, Policy, SynthGame};

fn spec() -> GameSpec {
    default_suite()[1].clone()
}

#[test]
fn datasets_are_reproducible() {
    let a = generate_dataset(&spec(), Policy::ScriptedExpert { epsilon: 0.2 }, 5, 9).unwrap();
    let b = generate_dataset(&spec(), Policy::ScriptedExpert { epsilon: 0.2 }, 5, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_dataset(&spec(), Policy::ScriptedExpert { epsilon: 0.2 }, 5, 10).unwrap());
    for ep in a.episodes() {
        assert_eq!(ep.frames().len(), ep.len() * FRAME_PIXELS);
        assert!(ep.len() <= spec().max_episode_len);
        assert!(ep.actions().iter().all(|&x| (x as usize) < spec().action_space_size));
    }
}

#[test]
fn expert_beats_random() {
    for s in default_suite().into_iter().take(3) {
        let random = mean_policy_return(&s, Policy::ScriptedExpert { epsilon: 1.0 }, 100, 1).unwrap();
        let expert = mean_policy_return(&s, Policy::ScriptedExpert { epsilon: 0.1 }, 100, 1).unwrap();
        assert!(random < expert, "{}: {random} vs {expert}", s.name);
    }
}

#[test]
fn suite_spans_the_knobs() {
    let suite = default_suite();
    assert_eq!(suite.len(), 12);
    let actions: Vec<usize> = suite.iter().map(|s| s.action_space_size).collect();
    assert_eq!(actions.iter().min(), Some(&4));
    assert_eq!(actions.iter().max(), Some(&18));
    assert!(suite.iter().any(|s| s.texture_level == 0.0));
    assert!(suite.iter().any(|s| s.texture_level == 1.0));
    for s in &suite {
        SynthGame::new(s.clone()).unwrap();
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec();
    s.action_space_size = 19;
    assert!(SynthGame::new(s).is_err());
    let mut s = spec();
    s.texture_level = 1.5;
    assert!(SynthGame::new(s).is_err());
    assert!(generate_dataset(&spec(), Policy::Random, 0, 1).is_err());
}

#[test]
fn overshooting_with_one_way_moves_ends_the_episode() {
    let s1 = default_suite()[0].clone();
    assert_eq!(s1.action_space_size, 4);
    let game = SynthGame::new(s1.clone()).unwrap();
    let (mut state, _) = game.reset(1);
    let target = state.target.unwrap();
    assert!(!state.stranded);
    let right = game.action_names().iter().position(|n| n == "RIGHT").unwrap();
    let mut steps = 0;
    while !state.done(&s1) {
        let out = game.step(&mut state, right).unwrap();
        steps += 1;
        assert_eq!(out.done, state.done(&s1));
    }
    assert!(steps < s1.max_episode_len);
    assert!(state.stranded || state.agent.0 == target.0);
    assert!(game.step(&mut state, right).is_err());
}
