//! Canonical Atari action vocabulary and its movement semantics.

use crate::{Error, Result};

/// The 18 canonical Atari action names, in ALE index order.
pub const CANONICAL_ACTIONS: [&str; 18] = [
    "NOOP",
    "FIRE",
    "UP",
    "RIGHT",
    "LEFT",
    "DOWN",
    "UPRIGHT",
    "UPLEFT",
    "DOWNRIGHT",
    "DOWNLEFT",
    "UPFIRE",
    "RIGHTFIRE",
    "LEFTFIRE",
    "DOWNFIRE",
    "UPRIGHTFIRE",
    "UPLEFTFIRE",
    "DOWNRIGHTFIRE",
    "DOWNLEFTFIRE",
];

/// The first `n` canonical action names.
pub fn canonical_prefix(n: usize) -> Result<Vec<String>> {
    if !(1..=CANONICAL_ACTIONS.len()).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "action space size {n} outside 1..=18"
        )));
    }
    Ok(CANONICAL_ACTIONS[..n].iter().map(|s| s.to_string()).collect())
}

/// Movement and fire semantics of one named action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSemantics {
    pub dx: i32,
    pub dy: i32,
    pub fire: bool,
}

impl ActionSemantics {
    pub fn is_move(&self) -> bool {
        self.dx != 0 || self.dy != 0
    }
}

/// Parses a canonical name into its movement vector (screen coordinates,
/// y grows downwards) and fire flag.
pub fn semantics(name: &str) -> Result<ActionSemantics> {
    if !CANONICAL_ACTIONS.contains(&name) {
        return Err(Error::UnknownActionName(name.to_string()));
    }
    let (body, fire) = match name.strip_suffix("FIRE") {
        Some(rest) => (rest, true),
        None => (name, false),
    };
    let body = if body == "NOOP" { "" } else { body };
    let (vertical, horizontal) = if let Some(rest) = body.strip_prefix("UP") {
        (-1, rest)
    } else if let Some(rest) = body.strip_prefix("DOWN") {
        (1, rest)
    } else {
        (0, body)
    };
    let dx = match horizontal {
        "RIGHT" => 1,
        "LEFT" => -1,
        "" => 0,
        other => return Err(Error::UnknownActionName(other.to_string())),
    };
    Ok(ActionSemantics {
        dx,
        dy: vertical,
        fire,
    })
}

/// Name of the action with the given movement and fire flag, if canonical.
pub fn name_for(dx: i32, dy: i32, fire: bool) -> Option<&'static str> {
    CANONICAL_ACTIONS.iter().copied().find(|n| {
        semantics(n)
            .map(|s| s.dx == dx && s.dy == dy && s.fire == fire)
            .unwrap_or(false)
    })
}
