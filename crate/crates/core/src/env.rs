//! Deterministic synthetic game family.
//!
//! An agent moves on a `width × height` cell grid rendered to an 84×84
//! grayscale frame. One target is visible at a time; collecting it pays
//! 1.0 and spawns the next one roughly `reward_sparsity` moves away, until
//! `n_targets` have been collected or `max_episode_len` steps have passed.
//! Games with `fire_required` only pay out when the agent is armed: any
//! `*FIRE` action arms it, and collecting a target disarms it.
//!
//! The background is a static per-episode texture of 2×2-pixel gray
//! blocks whose density is `texture_level`, which is what drives the
//! entropy and compressibility of rendered frames.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{canonical_prefix, semantics, ActionSemantics};
use crate::data::{Episode, TrajectoryDataset, FRAME_PIXELS, FRAME_SIDE};
use crate::seed::{derive_seed, rng_for};
use crate::{Error, Result};

const AGENT_SHADE: u8 = 150;
const ARMED_SHADE: u8 = 200;
const TARGET_SHADE: u8 = 255;
/// Share of background blocks textured at `texture_level == 1`.
const MAX_TEXTURE_DENSITY: f64 = 0.6;

fn default_targets() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub name: String,
    pub action_space_size: usize,
    /// `(width, height)` in cells.
    pub grid: (usize, usize),
    pub texture_level: f64,
    pub reward_sparsity: usize,
    pub max_episode_len: usize,
    pub fire_required: bool,
    pub seed: u64,
    #[serde(default = "default_targets")]
    pub n_targets: usize,
}

impl GameSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("game {}: {msg}", self.name)));
        if !(2..=18).contains(&self.action_space_size) {
            return bad(format!("action_space_size {} outside 2..=18", self.action_space_size));
        }
        let (w, h) = self.grid;
        if !(2..=FRAME_SIDE).contains(&w) || !(2..=FRAME_SIDE).contains(&h) {
            return bad(format!("grid {w}×{h} outside 2..=84"));
        }
        if !(0.0..=1.0).contains(&self.texture_level) {
            return bad(format!("texture_level {} outside [0, 1]", self.texture_level));
        }
        if self.reward_sparsity == 0 || self.max_episode_len == 0 || self.n_targets == 0 {
            return bad("reward_sparsity, max_episode_len and n_targets must be ≥ 1".into());
        }
        Ok(())
    }
}

/// Mutable per-episode state.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub agent: (i32, i32),
    /// The currently visible target, `None` once all have been collected.
    pub target: Option<(i32, i32)>,
    pub collected: usize,
    pub fired: bool,
    pub step: usize,
    /// The target can no longer be reached with this game's moves, which
    /// ends the episode.
    pub stranded: bool,
    rng: ChaCha8Rng,
    background: Vec<u8>,
}

impl EnvState {
    pub fn done(&self, spec: &GameSpec) -> bool {
        self.target.is_none() || self.stranded || self.step >= spec.max_episode_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub frame: Vec<u8>,
    pub reward: f64,
    pub done: bool,
}

/// A validated game with its action semantics resolved.
#[derive(Debug, Clone)]
pub struct SynthGame {
    spec: GameSpec,
    names: Vec<String>,
    actions: Vec<ActionSemantics>,
    can: Reach,
}

#[derive(Debug, Clone, Copy)]
struct Reach {
    left: bool,
    right: bool,
    up: bool,
    down: bool,
}

impl Reach {
    fn allows(&self, from: (i32, i32), to: (i32, i32)) -> bool {
        let dx = to.0 - from.0;
        let dy = to.1 - from.1;
        (dx >= 0 || self.left) && (dx <= 0 || self.right) && (dy >= 0 || self.up) && (dy <= 0 || self.down)
    }
}

impl SynthGame {
    pub fn new(spec: GameSpec) -> Result<Self> {
        spec.validate()?;
        let names = canonical_prefix(spec.action_space_size)?;
        let actions = names.iter().map(|n| semantics(n)).collect::<Result<Vec<_>>>()?;
        let can = Reach {
            left: actions.iter().any(|a| a.dx < 0),
            right: actions.iter().any(|a| a.dx > 0),
            up: actions.iter().any(|a| a.dy < 0),
            down: actions.iter().any(|a| a.dy > 0),
        };
        Ok(Self {
            spec,
            names,
            actions,
            can,
        })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn action_names(&self) -> &[String] {
        &self.names
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    /// Deterministic initial layout from `(spec.seed, episode_seed)`.
    pub fn reset(&self, episode_seed: u64) -> (EnvState, Vec<u8>) {
        let mut rng = rng_for(derive_seed(self.spec.seed, 0xE5_1D), episode_seed);
        let (w, h) = (self.spec.grid.0 as i32, self.spec.grid.1 as i32);
        let x = match (self.can.left, self.can.right) {
            (true, true) => rng.random_range(0..w),
            (false, _) => 0,
            (true, false) => w - 1,
        };
        let y = match (self.can.up, self.can.down) {
            (true, true) => rng.random_range(0..h),
            (false, _) => 0,
            (true, false) => h - 1,
        };
        let background = self.texture(&mut rng);
        let mut state = EnvState {
            agent: (x, y),
            target: None,
            collected: 0,
            fired: false,
            step: 0,
            stranded: false,
            rng,
            background,
        };
        state.target = Some(self.spawn_target(&mut state));
        state.stranded = !self.reachable(&state);
        let frame = self.render(&state);
        (state, frame)
    }

    fn texture(&self, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let density = self.spec.texture_level * MAX_TEXTURE_DENSITY;
        let mut out = vec![0u8; FRAME_PIXELS];
        for by in (0..FRAME_SIDE).step_by(2) {
            for bx in (0..FRAME_SIDE).step_by(2) {
                let textured = rng.random::<f64>() < density;
                let shade = 32 + 8 * rng.random_range(0..8u8);
                if textured {
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        out[(by + dy) * FRAME_SIDE + bx + dx] = shade;
                    }
                }
            }
        }
        out
    }

    fn reachable(&self, state: &EnvState) -> bool {
        state.target.is_none_or(|t| self.can.allows(state.agent, t))
    }

    /// Fewest moves from `from` to `to` with this game's move set.
    fn move_cost(&self, from: (i32, i32), to: (i32, i32)) -> i32 {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let diagonal = self.actions.iter().any(|a| a.dx == dx.signum() && a.dy == dy.signum());
        if dx != 0 && dy != 0 && diagonal {
            dx.abs().max(dy.abs())
        } else {
            dx.abs() + dy.abs()
        }
    }

    /// Picks a free cell reachable from the agent whose move distance is
    /// as close as possible to `reward_sparsity`.
    fn spawn_target(&self, state: &mut EnvState) -> (i32, i32) {
        let (w, h) = (self.spec.grid.0 as i32, self.spec.grid.1 as i32);
        let want = self.spec.reward_sparsity as i32;
        let from = state.agent;
        let mut best = i32::MAX;
        let mut cands = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if (x, y) == from || !self.can.allows(from, (x, y)) {
                    continue;
                }
                let gap = (self.move_cost(from, (x, y)) - want).abs();
                if gap < best {
                    best = gap;
                    cands.clear();
                }
                if gap == best {
                    cands.push((x, y));
                }
            }
        }
        if cands.is_empty() {
            // Cornered by a restricted action set: any other cell.
            cands = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&c| c != from)
                .collect();
        }
        *cands.choose(&mut state.rng).expect("grid has at least two cells")
    }

    fn cell_rect(&self, cell: (i32, i32)) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (w, h) = self.spec.grid;
        let (cx, cy) = (cell.0 as usize, cell.1 as usize);
        (
            cx * FRAME_SIDE / w..(cx + 1) * FRAME_SIDE / w,
            cy * FRAME_SIDE / h..(cy + 1) * FRAME_SIDE / h,
        )
    }

    pub fn render(&self, state: &EnvState) -> Vec<u8> {
        let mut frame = state.background.clone();
        let mut paint = |cell: (i32, i32), shade: u8| {
            let (xs, ys) = self.cell_rect(cell);
            for y in ys {
                frame[y * FRAME_SIDE + xs.start..y * FRAME_SIDE + xs.end].fill(shade);
            }
        };
        if let Some(t) = state.target {
            paint(t, TARGET_SHADE);
        }
        paint(state.agent, if state.fired { ARMED_SHADE } else { AGENT_SHADE });
        frame
    }

    pub fn step(&self, state: &mut EnvState, action: usize) -> Result<StepOutcome> {
        let Some(sem) = self.actions.get(action).copied() else {
            return Err(Error::InvalidAction {
                id: action,
                size: self.actions.len(),
            });
        };
        if state.done(&self.spec) {
            return Err(Error::InvalidArgument("episode already finished".into()));
        }
        let (w, h) = (self.spec.grid.0 as i32, self.spec.grid.1 as i32);
        state.agent = (
            (state.agent.0 + sem.dx).clamp(0, w - 1),
            (state.agent.1 + sem.dy).clamp(0, h - 1),
        );
        if sem.fire {
            state.fired = true;
        }
        state.step += 1;
        let mut reward = 0.0;
        if state.target == Some(state.agent) && (state.fired || !self.spec.fire_required) {
            reward = 1.0;
            state.fired = false;
            state.collected += 1;
            state.target = if state.collected < self.spec.n_targets {
                Some(self.spawn_target(state))
            } else {
                None
            };
        }
        state.stranded = !self.reachable(state);
        Ok(StepOutcome {
            frame: self.render(state),
            reward,
            done: state.done(&self.spec),
        })
    }

    fn find(&self, dx: i32, dy: i32, fire: bool) -> Option<usize> {
        self.actions
            .iter()
            .position(|a| a.dx == dx && a.dy == dy && a.fire == fire)
    }

    /// Scripted expert: head for the target (diagonally when possible) and
    /// arm on the step that lands on it when the game requires firing.
    pub fn expert_action(&self, state: &EnvState) -> usize {
        let Some(target) = state.target else {
            return 0;
        };
        let dx = (target.0 - state.agent.0).signum();
        let dy = (target.1 - state.agent.1).signum();
        let reachable = |mx: i32, my: i32| self.find(mx, my, false).or(self.find(mx, my, true)).is_some();
        let candidates = [(dx, dy), (dx, 0), (0, dy)];
        let Some(&(mx, my)) = candidates
            .iter()
            .find(|&&(mx, my)| (mx != 0 || my != 0) && reachable(mx, my))
        else {
            return 0;
        };
        let landing = (state.agent.0 + mx, state.agent.1 + my);
        let arm = self.spec.fire_required && !state.fired && landing == target;
        if arm {
            if let Some(a) = self.find(mx, my, true) {
                return a;
            }
            if let Some(a) = self.find(0, 0, true) {
                return a;
            }
        }
        self.find(mx, my, false)
            .or_else(|| self.find(mx, my, true))
            .unwrap_or(0)
    }
}

/// Anything that can be played one action at a time.
pub trait Environment {
    fn action_count(&self) -> usize;
    /// Starts an episode and returns the first frame.
    fn reset(&mut self, episode_seed: u64) -> Vec<u8>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

/// A [`SynthGame`] bundled with its running state.
#[derive(Debug, Clone)]
pub struct SynthEnv {
    game: SynthGame,
    state: Option<EnvState>,
}

impl SynthEnv {
    pub fn new(spec: GameSpec) -> Result<Self> {
        Ok(Self {
            game: SynthGame::new(spec)?,
            state: None,
        })
    }

    pub fn game(&self) -> &SynthGame {
        &self.game
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }
}

impl Environment for SynthEnv {
    fn action_count(&self) -> usize {
        self.game.action_count()
    }

    fn reset(&mut self, episode_seed: u64) -> Vec<u8> {
        let (state, frame) = self.game.reset(episode_seed);
        self.state = Some(state);
        frame
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("step before reset".into()))?;
        self.game.step(state, action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Random,
    /// ε-greedy scripted expert; ε = 1 plays uniformly at random.
    ScriptedExpert { epsilon: f64 },
}

impl Policy {
    fn act(&self, game: &SynthGame, state: &EnvState, rng: &mut ChaCha8Rng) -> usize {
        let epsilon = match *self {
            Policy::Random => 1.0,
            Policy::ScriptedExpert { epsilon } => epsilon,
        };
        let explore = rng.random::<f64>() < epsilon;
        let random = rng.random_range(0..game.action_count());
        if explore {
            random
        } else {
            game.expert_action(state)
        }
    }
}

/// Seed of the `i`-th episode generated under `seed`.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Plays one episode and records (frame, action, reward) triplets.
pub fn play_episode(game: &SynthGame, policy: Policy, episode_seed: u64) -> Result<Episode> {
    let (mut state, mut frame) = game.reset(episode_seed);
    let mut rng = rng_for(episode_seed, 0x0090_11C1);
    let mut frames = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    loop {
        let a = policy.act(game, &state, &mut rng);
        let out = game.step(&mut state, a)?;
        frames.extend_from_slice(&frame);
        actions.push(a as u8);
        rewards.push(out.reward as f32);
        frame = out.frame;
        if out.done {
            break;
        }
    }
    Episode::new(frames, actions, rewards)
}

pub fn generate_dataset(spec: &GameSpec, policy: Policy, episodes: usize, seed: u64) -> Result<TrajectoryDataset> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be ≥ 1".into()));
    }
    let game = SynthGame::new(spec.clone())?;
    let eps = (0..episodes)
        .map(|i| play_episode(&game, policy, episode_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(spec.name.clone(), spec.action_space_size, eps)
}

/// Mean return of `episodes` rollouts of `policy`.
pub fn mean_policy_return(spec: &GameSpec, policy: Policy, episodes: usize, seed: u64) -> Result<f64> {
    let game = SynthGame::new(spec.clone())?;
    let mut total = 0.0;
    for i in 0..episodes {
        total += play_episode(&game, policy, episode_seed(seed, i))?.episode_return();
    }
    Ok(total / episodes as f64)
}

/// The twelve-game default suite, spanning 4–18 actions, texture levels
/// over [0, 1] and reward sparsity over 1..=30.
pub fn default_suite() -> Vec<GameSpec> {
    const ACTIONS: [usize; 12] = [4, 6, 6, 9, 12, 14, 18, 18, 18, 18, 18, 18];
    const SPARSITY: [usize; 12] = [3, 1, 13, 5, 20, 8, 30, 10, 15, 24, 6, 18];
    const TEXTURE: [usize; 12] = [0, 5, 2, 9, 1, 7, 4, 11, 3, 6, 10, 8];
    const FIRE: [bool; 12] = [false, false, true, false, true, false, true, true, false, true, false, true];
    (0..12)
        .map(|i| GameSpec {
            name: format!("S{}", i + 1),
            action_space_size: ACTIONS[i],
            grid: (28, 28),
            texture_level: TEXTURE[i] as f64 / 11.0,
            reward_sparsity: SPARSITY[i],
            max_episode_len: 300,
            fire_required: FIRE[i],
            seed: 1000 + i as u64,
            n_targets: 3,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::image_entropy;

    fn spec(m: usize) -> GameSpec {
        GameSpec {
            name: "T".into(),
            action_space_size: m,
            grid: (12, 12),
            texture_level: 0.5,
            reward_sparsity: 4,
            max_episode_len: 50,
            fire_required: false,
            seed: 5,
            n_targets: 3,
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let g = SynthGame::new(spec(18)).unwrap();
        let (a, fa) = g.reset(3);
        let (b, fb) = g.reset(3);
        assert_eq!(fa, fb);
        assert_eq!(a.agent, b.agent);
        assert_eq!(fa.len(), FRAME_PIXELS);
        assert_ne!(g.reset(4).1, fa);
    }

    #[test]
    fn texture_controls_entropy() {
        let entropy_at = |level: f64| {
            let mut s = spec(6);
            s.texture_level = level;
            let g = SynthGame::new(s).unwrap();
            image_entropy(&g.reset(1).1, FRAME_SIDE, FRAME_SIDE)
        };
        let low = entropy_at(0.0);
        assert!(low < 1.0, "entropy {low}");
        assert!(entropy_at(1.0) > low);
    }

    #[test]
    fn noop_keeps_position_and_bad_ids_fail() {
        let g = SynthGame::new(spec(6)).unwrap();
        let (mut s, _) = g.reset(0);
        let before = s.agent;
        let out = g.step(&mut s, 0).unwrap();
        assert_eq!(s.agent, before);
        assert_eq!(out.frame.len(), FRAME_PIXELS);
        assert!(matches!(g.step(&mut s, 6), Err(Error::InvalidAction { id: 6, size: 6 })));
    }

    #[test]
    fn fire_required_blocks_unarmed_collection() {
        let mut sp = spec(18);
        sp.fire_required = true;
        let g = SynthGame::new(sp).unwrap();
        let (mut s, _) = g.reset(0);
        let t = s.target.unwrap();
        s.agent = (t.0 - 1, t.1);
        let right = g.action_names().iter().position(|n| n == "RIGHT").unwrap();
        let out = g.step(&mut s, right).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(s.agent, t);

        let (mut s, _) = g.reset(0);
        s.agent = (t.0 - 1, t.1);
        let rightfire = g.action_names().iter().position(|n| n == "RIGHTFIRE").unwrap();
        assert_eq!(g.expert_action(&s), rightfire);
        assert_eq!(g.step(&mut s, rightfire).unwrap().reward, 1.0);
        assert!(!s.fired);
    }

    #[test]
    fn rollouts_replay_exactly() {
        for m in [4, 6, 9, 18] {
            let sp = spec(m);
            let a = generate_dataset(&sp, Policy::Random, 5, 9).unwrap();
            let b = generate_dataset(&sp, Policy::Random, 5, 9).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.episodes().len(), 5);
            assert!(a.episodes().iter().all(|e| e.len() <= sp.max_episode_len));
        }
    }

    #[test]
    fn expert_beats_random() {
        for m in [4, 6, 18] {
            let mut sp = spec(m);
            sp.fire_required = m == 18;
            let random = mean_policy_return(&sp, Policy::ScriptedExpert { epsilon: 1.0 }, 100, 1).unwrap();
            let expert = mean_policy_return(&sp, Policy::ScriptedExpert { epsilon: 0.1 }, 100, 1).unwrap();
            assert!(expert > random, "m={m}: expert {expert} random {random}");
            assert_eq!(mean_policy_return(&sp, Policy::ScriptedExpert { epsilon: 0.0 }, 10, 1).unwrap(), 3.0);
        }
    }

    #[test]
    fn default_suite_is_valid() {
        let suite = default_suite();
        assert_eq!(suite.len(), 12);
        let counts: Vec<usize> = suite.iter().map(|s| s.action_space_size).collect();
        assert_eq!(counts, [4, 6, 6, 9, 12, 14, 18, 18, 18, 18, 18, 18]);
        for s in &suite {
            s.validate().unwrap();
            assert!(s.reward_sparsity >= 1 && s.reward_sparsity <= 30);
        }
    }
}
