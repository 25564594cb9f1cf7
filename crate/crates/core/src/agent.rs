//! Depth-limited dodging agent used as a playability probe.
//!
//! Each frame the agent searches the action tree `horizon` frames ahead for
//! the path whose smallest clearance to any bullet is largest (a widest-path
//! search), and takes that path's first action.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::codec::{DanmakuProgram, ParametricSequence, SEQ_LEN};
use crate::corpus::templates::Shooter;
use crate::error::{Error, Result};
use crate::sim::{run_recorded, spawn, BulletState, Disc, Point, SimConfig, SimTrace};

/// Unit moves; index 0 is "stay" and wins ties.
pub const ACTIONS: [(i32, i32); 9] = [(0, 0), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Pixels per frame along each axis of a move.
    pub speed: f64,
    pub hit_radius: f64,
    pub horizon: usize,
    pub start: Point,
    /// Clearances above this count as fully safe, so open space does not
    /// make the search wander.
    pub clearance_cap: f64,
    /// Upper bound on search nodes expanded per frame.
    pub max_expansions: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            speed: 4.0,
            hit_radius: 3.0,
            horizon: 30,
            start: Point::new(192.0, 400.0),
            clearance_cap: 48.0,
            max_expansions: 6000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("agent horizon must be at least 1".into()));
        }
        if !(self.speed > 0.0) {
            return Err(Error::Config("agent speed must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayabilityReport {
    pub survived_frames: u32,
    pub t_total: u32,
    pub survival_ratio: f64,
    /// Smallest distance between the hit circle and a bullet edge over the
    /// survived frames; absent when no bullet was ever on screen.
    pub min_clearance: Option<f64>,
}

/// Distance from the player's hit circle to the nearest bullet edge;
/// negative means a hit.
pub fn clearance(p: Point, discs: &[Disc], hit_radius: f64) -> f64 {
    discs
        .iter()
        .map(|d| ((p.x - d.x).powi(2) + (p.y - d.y).powi(2)).sqrt() - d.radius - hit_radius)
        .fold(f64::INFINITY, f64::min)
}

fn in_bounds(p: Point, screen: &SimConfig) -> bool {
    (0.0..=screen.screen_w).contains(&p.x) && (0.0..=screen.screen_h).contains(&p.y)
}

pub fn apply_action(p: Point, action: usize, speed: f64) -> Point {
    let (dx, dy) = ACTIONS[action];
    Point::new(p.x + dx as f64 * speed, p.y + dy as f64 * speed)
}

#[derive(Debug)]
struct Node {
    value: f64,
    first: usize,
    depth: usize,
    seq: usize,
    pos: Point,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: larger value, then lower first action, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(other.first.cmp(&self.first))
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Chooses an action for the player at `future[0]`'s frame. `future[d]`
/// holds the bullets `d` frames ahead; frames past its end are empty.
pub fn plan_step(player: Point, future: &[Vec<Disc>], cfg: &AgentConfig, screen: &SimConfig) -> usize {
    let empty: Vec<Disc> = Vec::new();
    let at = |d: usize| future.get(d).unwrap_or(&empty);
    let mut heap = BinaryHeap::new();
    let mut closed: HashSet<(usize, i64, i64)> = HashSet::new();
    let mut seq = 0;
    // deepest surviving node seen: (depth, value, first action)
    let mut fallback: Option<(usize, f64, usize)> = None;
    heap.push(Node { value: f64::INFINITY, first: 0, depth: 0, seq, pos: player });
    let mut expansions = 0;
    while let Some(node) = heap.pop() {
        if node.depth > 0 {
            let key = (node.depth, (node.pos.x * 16.0).round() as i64, (node.pos.y * 16.0).round() as i64);
            if !closed.insert(key) {
                continue;
            }
            if node.depth == cfg.horizon {
                return node.first;
            }
        }
        expansions += 1;
        if expansions > cfg.max_expansions {
            break;
        }
        let depth = node.depth + 1;
        for a in 0..ACTIONS.len() {
            let pos = apply_action(node.pos, a, cfg.speed);
            if !in_bounds(pos, screen) {
                continue;
            }
            let c = clearance(pos, at(depth), cfg.hit_radius);
            if c < 0.0 {
                continue;
            }
            let value = node.value.min(c.min(cfg.clearance_cap));
            let first = if node.depth == 0 { a } else { node.first };
            let better = match fallback {
                None => true,
                Some((fd, fv, fa)) => {
                    depth > fd || (depth == fd && (value > fv || (value == fv && first < fa)))
                }
            };
            if better {
                fallback = Some((depth, value, first));
            }
            seq += 1;
            heap.push(Node { value, first, depth, seq, pos });
        }
    }
    fallback.map_or(0, |(_, _, a)| a)
}

fn finish(survived: u32, t_total: u32, min_clear: f64) -> PlayabilityReport {
    PlayabilityReport {
        survived_frames: survived,
        t_total,
        survival_ratio: survived as f64 / t_total as f64,
        min_clearance: min_clear.is_finite().then_some(min_clear),
    }
}

/// Runs the agent through a recorded trace.
pub fn play_trace(trace: &SimTrace, cfg: &AgentConfig, screen: &SimConfig) -> Result<PlayabilityReport> {
    cfg.validate()?;
    let frames = trace
        .frames
        .as_ref()
        .ok_or_else(|| Error::Config("agent needs a trace recorded with frames".into()))?;
    let mut p = cfg.start;
    let mut min_clear = f64::INFINITY;
    let mut survived = 0;
    for f in 0..trace.t_total as usize {
        let c = clearance(p, &frames[f], cfg.hit_radius);
        if c < 0.0 {
            break;
        }
        min_clear = min_clear.min(c);
        survived = f as u32 + 1;
        let end = (f + cfg.horizon + 1).min(frames.len());
        let action = plan_step(p, &frames[f..end], cfg, screen);
        p = apply_action(p, action, cfg.speed);
    }
    Ok(finish(survived, trace.t_total, min_clear))
}

/// Playability of a parametric sequence; bullet angles are taken as encoded.
pub fn playability(seq: &ParametricSequence, cfg: &AgentConfig, screen: &SimConfig) -> Result<PlayabilityReport> {
    play_trace(&run_recorded(seq, screen)?, cfg, screen)
}

fn advance(bullets: &mut Vec<BulletState>, screen: &SimConfig) {
    for b in bullets.iter_mut() {
        b.step();
    }
    bullets.retain(|b| !screen.is_outside(b.x, b.y));
}

fn discs(bullets: &[BulletState]) -> Vec<Disc> {
    bullets.iter().map(|b| Disc { x: b.x, y: b.y, radius: b.radius }).collect()
}

/// Playability of a program, co-simulated so that aimed shots target the
/// agent's position at their spawn frame. The agent plans against the
/// bullets already on screen.
pub fn playability_program(
    program: &DanmakuProgram,
    cfg: &AgentConfig,
    screen: &SimConfig,
) -> Result<PlayabilityReport> {
    cfg.validate()?;
    let mut shooter = Shooter::new(program)?;
    let mut bullets: Vec<BulletState> = Vec::new();
    let mut emitted = 0;
    let mut fired = Vec::new();
    let mut p = cfg.start;
    let mut min_clear = f64::INFINITY;
    let mut survived = 0;
    let mut alive_to = screen.t_max;
    for f in 0..screen.t_max {
        if emitted < SEQ_LEN {
            fired.clear();
            shooter.fire(f, p, &mut fired);
            for b in fired.iter().take(SEQ_LEN - emitted) {
                bullets.push(spawn(b, screen.emitter));
                emitted += 1;
            }
        }
        let c = clearance(p, &discs(&bullets), cfg.hit_radius);
        if c < 0.0 {
            break;
        }
        min_clear = min_clear.min(c);
        survived = f + 1;
        let mut future = Vec::with_capacity(cfg.horizon + 1);
        let mut ghost = bullets.clone();
        future.push(discs(&ghost));
        for _ in 0..cfg.horizon {
            advance(&mut ghost, screen);
            future.push(discs(&ghost));
        }
        let action = plan_step(p, &future, cfg, screen);
        p = apply_action(p, action, cfg.speed);
        advance(&mut bullets, screen);
        if emitted == SEQ_LEN && bullets.is_empty() {
            alive_to = f + 1;
            break;
        }
    }
    // a collision ends the run early; the denominator stays the full duration
    if survived < alive_to && survived < screen.t_max {
        alive_to = run_length(program, screen)?.max(survived + 1);
    }
    Ok(finish(survived, alive_to, min_clear))
}

/// Duration of a program's trace with the default aim point.
fn run_length(program: &DanmakuProgram, screen: &SimConfig) -> Result<u32> {
    let seq = crate::codec::unroll(program)?;
    Ok(crate::sim::run(&seq, screen)?.t_total)
}
