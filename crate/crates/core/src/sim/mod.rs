//! Deterministic frame-stepped bullet simulation.
//!
//! Frame `f` proceeds as: spawn the bullets scheduled at `f`, record the
//! momentum sum and coverage of every live bullet, advance all bullets one
//! step, then drop the ones that left the screen plus margin.

pub mod render;

use serde::{Deserialize, Serialize};

use crate::codec::{BulletSpec, ParametricSequence, ShotEvent};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

pub const EMITTER: Point = Point::new(192.0, 120.0);
/// Player stand-in used by aimed templates during metric runs.
pub const DEFAULT_PLAYER: Point = Point::new(192.0, 400.0);

/// Speeds below this after an acceleration step are snapped to zero so that
/// decelerating bullets stop exactly instead of creeping on round-off.
const SPEED_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub screen_w: f64,
    pub screen_h: f64,
    pub emitter: Point,
    pub margin: f64,
    pub cell: f64,
    pub t_max: u32,
    pub hit_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            screen_w: 384.0,
            screen_h: 448.0,
            emitter: EMITTER,
            margin: 32.0,
            cell: 8.0,
            t_max: 3600,
            hit_radius: 3.0,
        }
    }
}

impl SimConfig {
    pub fn rows(&self) -> usize {
        (self.screen_h / self.cell) as usize
    }

    pub fn cols(&self) -> usize {
        (self.screen_w / self.cell) as usize
    }

    pub fn is_outside(&self, x: f64, y: f64) -> bool {
        x <= -self.margin || y <= -self.margin || x >= self.screen_w + self.margin || y >= self.screen_h + self.margin
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulletState {
    pub x: f64,
    pub y: f64,
    pub angle: f64,
    pub speed: f64,
    pub accel: f64,
    pub ang_vel: f64,
    pub radius: f64,
    pub weight: f64,
}

pub fn spawn(bullet: &BulletSpec, emitter: Point) -> BulletState {
    BulletState {
        x: emitter.x + bullet.spawn_dx,
        y: emitter.y + bullet.spawn_dy,
        angle: bullet.angle,
        speed: bullet.speed,
        accel: bullet.accel,
        ang_vel: bullet.ang_vel,
        radius: bullet.radius,
        weight: bullet.radius / 8.0,
    }
}

impl BulletState {
    /// A bullet at rest with the given position and radius.
    pub fn at(x: f64, y: f64, radius: f64) -> Self {
        BulletState {
            x,
            y,
            angle: 0.0,
            speed: 0.0,
            accel: 0.0,
            ang_vel: 0.0,
            radius,
            weight: radius / 8.0,
        }
    }

    pub fn step(&mut self) {
        self.angle += self.ang_vel;
        let mut speed = (self.speed + self.accel).max(0.0);
        if speed < SPEED_SNAP {
            speed = 0.0;
        }
        self.speed = speed;
        self.x += speed * self.angle.cos();
        self.y += speed * self.angle.sin();
    }

    pub fn momentum(&self) -> f64 {
        self.weight * self.speed
    }
}

/// Position and size of one live bullet at one frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Whether a disc overlaps the axis-aligned rectangle with positive area.
pub fn disc_hits_rect(d: &Disc, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    let cx = d.x.clamp(x0, x1);
    let cy = d.y.clamp(y0, y1);
    let (dx, dy) = (d.x - cx, d.y - cy);
    dx * dx + dy * dy < d.radius * d.radius
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    /// Bullets actually spawned before the frame cap.
    pub l_emitted: usize,
    pub t_shoot: u32,
    pub t_total: u32,
    /// `Σ weight·speed` over live bullets, one entry per simulated frame.
    pub momentum: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols` coverage grid.
    pub coverage: Vec<bool>,
    /// Live bullets per frame, present when frames were recorded.
    pub frames: Option<Vec<Vec<Disc>>>,
}

impl SimTrace {
    pub fn covered_cells(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    pub fn summary(&self, with_momentum: bool) -> TraceSummary {
        TraceSummary {
            l: self.l_emitted,
            t_shoot: self.t_shoot,
            t_total: self.t_total,
            momentum_sum_per_frame: with_momentum.then(|| self.momentum.clone()),
            covered_cells: self.covered_cells(),
            r: self.rows,
            c: self.cols,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "T_shoot")]
    pub t_shoot: u32,
    #[serde(rename = "T_total")]
    pub t_total: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub momentum_sum_per_frame: Option<Vec<f64>>,
    pub covered_cells: usize,
    pub r: usize,
    pub c: usize,
}

fn mark_coverage(cfg: &SimConfig, rows: usize, cols: usize, d: &Disc, grid: &mut [bool]) {
    let lo_c = ((d.x - d.radius) / cfg.cell).floor().max(0.0);
    let hi_c = ((d.x + d.radius) / cfg.cell).floor().min(cols as f64 - 1.0);
    let lo_r = ((d.y - d.radius) / cfg.cell).floor().max(0.0);
    let hi_r = ((d.y + d.radius) / cfg.cell).floor().min(rows as f64 - 1.0);
    if lo_c > hi_c || lo_r > hi_r {
        return;
    }
    for i in lo_r as usize..=hi_r as usize {
        let y0 = i as f64 * cfg.cell;
        for j in lo_c as usize..=hi_c as usize {
            let x0 = j as f64 * cfg.cell;
            if !grid[i * cols + j] && disc_hits_rect(d, x0, y0, x0 + cfg.cell, y0 + cfg.cell) {
                grid[i * cols + j] = true;
            }
        }
    }
}

/// Simulates an explicit spawn schedule of `(frame, bullet)` pairs, which
/// must be sorted by frame.
pub fn simulate(schedule: &[(u32, BulletState)], cfg: &SimConfig, record_frames: bool) -> SimTrace {
    let (rows, cols) = (cfg.rows(), cfg.cols());
    let mut grid = vec![false; rows * cols];
    let mut momentum = Vec::new();
    let mut frames = record_frames.then(Vec::new);
    let mut alive: Vec<BulletState> = Vec::new();
    let mut next = 0;
    let mut t_total = cfg.t_max;
    for f in 0..cfg.t_max {
        while next < schedule.len() && schedule[next].0 <= f {
            alive.push(schedule[next].1);
            next += 1;
        }
        let mut sum = 0.0;
        for b in &alive {
            sum += b.momentum();
            let d = Disc { x: b.x, y: b.y, radius: b.radius };
            mark_coverage(cfg, rows, cols, &d, &mut grid);
        }
        momentum.push(sum);
        if let Some(frames) = frames.as_mut() {
            frames.push(alive.iter().map(|b| Disc { x: b.x, y: b.y, radius: b.radius }).collect());
        }
        for b in alive.iter_mut() {
            b.step();
        }
        alive.retain(|b| !cfg.is_outside(b.x, b.y));
        if next == schedule.len() && alive.is_empty() {
            t_total = f + 1;
            break;
        }
    }
    let last_frame = if next > 0 { schedule[next - 1].0 } else { 0 };
    SimTrace {
        l_emitted: next,
        t_shoot: last_frame.max(1),
        t_total: t_total.max(1),
        momentum,
        rows,
        cols,
        coverage: grid,
        frames,
    }
}

/// Spawn schedule of an event list: event `i` fires at `Σ_{k≤i} itv_k`.
pub fn schedule_events(events: &[ShotEvent], cfg: &SimConfig) -> Vec<(u32, BulletState)> {
    let mut frame = 0u32;
    events
        .iter()
        .map(|e| {
            frame += e.itv;
            (frame, spawn(&e.bullet, cfg.emitter))
        })
        .collect()
}

pub fn run_events(events: &[ShotEvent], cfg: &SimConfig, record_frames: bool) -> SimTrace {
    simulate(&schedule_events(events, cfg), cfg, record_frames)
}

pub fn run(seq: &ParametricSequence, cfg: &SimConfig) -> Result<SimTrace> {
    Ok(run_events(&seq.to_events()?, cfg, false))
}

pub fn run_recorded(seq: &ParametricSequence, cfg: &SimConfig) -> Result<SimTrace> {
    Ok(run_events(&seq.to_events()?, cfg, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn moving(angle: f64, speed: f64, accel: f64, ang_vel: f64) -> BulletState {
        BulletState { angle, speed, accel, ang_vel, ..BulletState::at(0.0, 0.0, 8.0) }
    }

    #[test]
    fn spawn_offsets_and_weight() {
        let spec = BulletSpec { spawn_dx: 0.0, spawn_dy: 0.0, angle: 0.0, speed: 1.0, accel: 0.0, ang_vel: 0.0, radius: 8.0 };
        let b = spawn(&spec, EMITTER);
        assert_eq!((b.x, b.y, b.weight), (192.0, 120.0, 1.0));
        let b = spawn(&BulletSpec { radius: 16.0, spawn_dx: -3.0, ..spec }, EMITTER);
        assert_eq!((b.x, b.y, b.weight), (189.0, 120.0, 2.0));
    }

    #[test]
    fn uniform_motion() {
        let mut b = moving(0.0, 2.0, 0.0, 0.0);
        for _ in 0..3 {
            b.step();
        }
        assert_eq!((b.x, b.y), (6.0, 0.0));
    }

    #[test]
    fn deceleration_stops_exactly() {
        let mut b = moving(0.0, 1.0, -0.1, 0.0);
        for _ in 0..10 {
            b.step();
        }
        assert_eq!(b.speed, 0.0);
        let x = b.x;
        for _ in 0..5 {
            b.step();
            assert_eq!(b.speed, 0.0);
        }
        assert_eq!(b.x, x);
    }

    #[test]
    fn square_path_closes() {
        let mut b = moving(0.0, 1.0, 0.0, FRAC_PI_2);
        for _ in 0..4 {
            b.step();
        }
        assert!(b.x.abs() < 1e-12 && b.y.abs() < 1e-12, "{} {}", b.x, b.y);
        assert!((b.angle - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn straight_down_bullet_leaves_after_sixty_frames() {
        let cfg = SimConfig::default();
        let schedule = [(0, BulletState { angle: FRAC_PI_2, speed: 6.0, ..BulletState::at(192.0, 120.0, 4.0) })];
        let trace = simulate(&schedule, &cfg, false);
        let expected = ((448.0_f64 - 120.0 + 32.0) / 6.0).ceil() as u32;
        assert_eq!(trace.t_total, expected);
        assert_eq!(trace.t_total, 60);
    }

    #[test]
    fn resting_bullets_hit_the_cap() {
        let cfg = SimConfig::default();
        let trace = simulate(&[(0, BulletState::at(100.0, 100.0, 4.0))], &cfg, false);
        assert_eq!(trace.t_total, cfg.t_max);
        assert_eq!(trace.momentum.len(), cfg.t_max as usize);
        assert!(trace.t_shoot <= trace.t_total);
    }

    #[test]
    fn single_cell_coverage() {
        let cfg = SimConfig::default();
        let trace = simulate(&[(0, BulletState::at(100.0, 100.0, 2.0))], &SimConfig { t_max: 5, ..cfg }, false);
        assert_eq!(trace.covered_cells(), 1);
        assert_eq!(trace.rows * trace.cols, 2688);
    }

    #[test]
    fn disc_rect_touching_edge_is_not_overlap() {
        let d = Disc { x: 10.0, y: 4.0, radius: 2.0 };
        assert!(!disc_hits_rect(&d, 0.0, 0.0, 8.0, 8.0));
        assert!(disc_hits_rect(&Disc { x: 9.9, ..d }, 0.0, 0.0, 8.0, 8.0));
    }

    #[test]
    fn empty_schedule() {
        let trace = simulate(&[], &SimConfig::default(), true);
        assert_eq!((trace.l_emitted, trace.t_shoot, trace.t_total), (0, 1, 1));
        assert_eq!(trace.covered_cells(), 0);
    }
}
