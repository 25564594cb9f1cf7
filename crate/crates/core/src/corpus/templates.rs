//! Shooting rules `F(t | p)`: six parametric template families.
//!
//! Every template fires at frame 0 and at least once per 60 frames, so a
//! 64-call sequence is always reached well before the stall limit.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{BulletSpec, DanmakuProgram};
use crate::error::{Error, Result};
use crate::sim::{Point, EMITTER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    RingBurst,
    FanVolley,
    Spiral,
    AimedStream,
    RandomSpray,
    RotatingArms,
}

/// Name, lower bound, upper bound, integer-valued.
pub type ParamBound = (&'static str, f64, f64, bool);

const RING: &[ParamBound] = &[
    ("count", 4.0, 32.0, true),
    ("period", 4.0, 60.0, true),
    ("speed", 0.5, 6.0, false),
    ("radius", 2.0, 12.0, false),
    ("rotation", 0.0, 0.8, false),
    ("accel", -0.05, 0.05, false),
];

const FAN: &[ParamBound] = &[
    ("count", 3.0, 15.0, true),
    ("spread", 0.2, 2.5, false),
    ("period", 6.0, 60.0, true),
    ("speed", 1.0, 6.0, false),
    ("radius", 2.0, 12.0, false),
    ("offset", -0.5, 0.5, false),
];

const SPIRAL: &[ParamBound] = &[
    ("arms", 1.0, 2.0, true),
    ("step", 0.05, 0.6, false),
    ("period", 1.0, 8.0, true),
    ("speed", 1.0, 5.0, false),
    ("radius", 2.0, 10.0, false),
    ("ang_vel", -0.02, 0.02, false),
];

const AIMED: &[ParamBound] = &[
    ("period", 1.0, 12.0, true),
    ("speed", 2.0, 6.0, false),
    ("radius", 2.0, 10.0, false),
    ("burst", 1.0, 10.0, true),
    ("pause", 0.0, 40.0, true),
];

const SPRAY: &[ParamBound] = &[
    ("rate", 0.2, 3.0, false),
    ("speed_lo", 0.5, 3.0, false),
    ("speed_hi", 3.0, 6.0, false),
    ("radius", 2.0, 10.0, false),
    ("spread", 0.0, 64.0, false),
    ("accel", -0.05, 0.05, false),
];

const ARMS: &[ParamBound] = &[
    ("arms", 3.0, 6.0, true),
    ("rotation", 0.01, 0.3, false),
    ("period", 2.0, 10.0, true),
    ("speed", 1.0, 5.0, false),
    ("radius", 2.0, 12.0, false),
    ("curve", -0.03, 0.03, false),
];

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::RingBurst,
        TemplateId::FanVolley,
        TemplateId::Spiral,
        TemplateId::AimedStream,
        TemplateId::RandomSpray,
        TemplateId::RotatingArms,
    ];

    pub fn bounds(self) -> &'static [ParamBound] {
        match self {
            TemplateId::RingBurst => RING,
            TemplateId::FanVolley => FAN,
            TemplateId::Spiral => SPIRAL,
            TemplateId::AimedStream => AIMED,
            TemplateId::RandomSpray => SPRAY,
            TemplateId::RotatingArms => ARMS,
        }
    }

    pub fn arity(self) -> usize {
        self.bounds().len()
    }

    /// Whether bullet angles depend on the player position.
    pub fn is_aimed(self) -> bool {
        self == TemplateId::AimedStream
    }

    /// Clamps every parameter into bounds, rounding integer-valued ones.
    pub fn clamp_params(self, params: &mut [f64]) {
        for (p, &(_, lo, hi, int)) in params.iter_mut().zip(self.bounds()) {
            let v = if int { p.round() } else { *p };
            *p = v.clamp(lo, hi);
        }
    }
}

/// Stateful evaluation of one program's shooting rule. Frames must be
/// requested in increasing order.
pub struct Shooter {
    template: TemplateId,
    p: Vec<f64>,
    rng: ChaCha8Rng,
    spray_acc: f64,
}

fn wrap(angle: f64) -> f64 {
    angle.rem_euclid(TAU)
}

fn bullet(angle: f64, speed: f64, radius: f64) -> BulletSpec {
    BulletSpec {
        spawn_dx: 0.0,
        spawn_dy: 0.0,
        angle: wrap(angle),
        speed,
        accel: 0.0,
        ang_vel: 0.0,
        radius,
    }
}

impl Shooter {
    pub fn new(program: &DanmakuProgram) -> Result<Self> {
        let bounds = program.template.bounds();
        if program.params.len() != bounds.len() {
            return Err(Error::Config(format!(
                "{:?} takes {} parameters, got {}",
                program.template,
                bounds.len(),
                program.params.len()
            )));
        }
        for (&v, &(name, lo, hi, _)) in program.params.iter().zip(bounds) {
            if !(lo..=hi).contains(&v) {
                return Err(Error::OutOfRange { field: name, value: v, lo, hi });
            }
        }
        let mut p = program.params.clone();
        program.template.clamp_params(&mut p);
        Ok(Shooter {
            template: program.template,
            p,
            rng: ChaCha8Rng::seed_from_u64(program.seed),
            spray_acc: 1.0,
        })
    }

    /// Appends the builder calls made at `frame`, in call order.
    pub fn fire(&mut self, frame: u32, target: Point, out: &mut Vec<BulletSpec>) {
        let p = &self.p;
        let f = frame as usize;
        match self.template {
            TemplateId::RingBurst => {
                let (count, period) = (p[0] as usize, p[1] as usize);
                if f % period == 0 {
                    let base = (f / period) as f64 * p[4];
                    for j in 0..count {
                        let mut b = bullet(base + j as f64 * TAU / count as f64, p[2], p[3]);
                        b.accel = p[5];
                        out.push(b);
                    }
                }
            }
            TemplateId::FanVolley => {
                let (count, period) = (p[0] as usize, p[2] as usize);
                if f % period == 0 {
                    let center = FRAC_PI_2 + p[5];
                    for j in 0..count {
                        let a = center - p[1] / 2.0 + j as f64 * p[1] / (count - 1) as f64;
                        out.push(bullet(a, p[3], p[4]));
                    }
                }
            }
            TemplateId::Spiral => {
                let (arms, period) = (p[0] as usize, p[2] as usize);
                if f % period == 0 {
                    let base = (f / period) as f64 * p[1];
                    for a in 0..arms {
                        let mut b = bullet(base + a as f64 * PI, p[3], p[4]);
                        b.ang_vel = p[5];
                        out.push(b);
                    }
                }
            }
            TemplateId::AimedStream => {
                let (period, burst, pause) = (p[0] as usize, p[3] as usize, p[4] as usize);
                let cycle = burst * period + pause;
                let pos = f % cycle;
                if pos < burst * period && pos % period == 0 {
                    let a = (target.y - EMITTER.y).atan2(target.x - EMITTER.x);
                    out.push(bullet(a, p[1], p[2]));
                }
            }
            TemplateId::RandomSpray => {
                self.spray_acc += p[0];
                let n = self.spray_acc.floor();
                self.spray_acc -= n;
                for _ in 0..n as usize {
                    let angle = self.rng.random_range(0.0..TAU);
                    let speed = self.rng.random_range(p[1]..=p[2]);
                    let (dx, dy) = if p[4] > 0.0 {
                        (
                            self.rng.random_range(-p[4]..=p[4]),
                            self.rng.random_range(-p[4] / 2.0..=p[4] / 2.0),
                        )
                    } else {
                        (0.0, 0.0)
                    };
                    let mut b = bullet(angle, speed, p[3]);
                    b.spawn_dx = dx;
                    b.spawn_dy = dy;
                    b.accel = p[5];
                    out.push(b);
                }
            }
            TemplateId::RotatingArms => {
                let (arms, period) = (p[0] as usize, p[2] as usize);
                if f % period == 0 {
                    let base = f as f64 * p[1];
                    for a in 0..arms {
                        let mut b = bullet(base + a as f64 * TAU / arms as f64, p[3], p[4]);
                        b.ang_vel = p[5];
                        out.push(b);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{normalize, unroll, unroll_events, SEQ_LEN, STALL_FRAMES};
    use crate::sim::DEFAULT_PLAYER;

    fn midpoint(t: TemplateId) -> Vec<f64> {
        let mut p: Vec<f64> = t.bounds().iter().map(|&(_, lo, hi, _)| (lo + hi) / 2.0).collect();
        t.clamp_params(&mut p);
        p
    }

    #[test]
    fn ring_interval_pattern() {
        let program = DanmakuProgram::new(TemplateId::RingBurst, vec![8.0, 16.0, 2.0, 4.0, 0.1, 0.0], 0).unwrap();
        let events = unroll_events(&program, DEFAULT_PLAYER).unwrap();
        for (i, e) in events.iter().enumerate() {
            let expected = if i > 0 && i % 8 == 0 { 16 } else { 0 };
            assert_eq!(e.itv, expected, "event {i}");
        }
    }

    #[test]
    fn single_arm_spiral_every_frame_is_a_stream() {
        let program =
            DanmakuProgram::new(TemplateId::Spiral, vec![1.0, 0.2, 1.0, 3.0, 4.0, 0.0], 0).unwrap();
        let events = unroll_events(&program, DEFAULT_PLAYER).unwrap();
        assert_eq!(events[0].itv, 0);
        assert!(events[1..].iter().all(|e| e.itv == 1));
    }

    #[test]
    fn every_family_unrolls_to_valid_sequences() {
        for t in TemplateId::ALL {
            for corner in 0..3 {
                let p: Vec<f64> = t
                    .bounds()
                    .iter()
                    .map(|&(_, lo, hi, _)| match corner {
                        0 => lo,
                        1 => hi,
                        _ => (lo + hi) / 2.0,
                    })
                    .collect();
                let mut p = p;
                t.clamp_params(&mut p);
                let program = DanmakuProgram::new(t, p, 3).unwrap();
                let events = unroll_events(&program, DEFAULT_PLAYER).unwrap();
                assert_eq!(events.len(), SEQ_LEN);
                let total: u32 = events.iter().map(|e| e.itv).sum();
                assert!(total < STALL_FRAMES);
                for e in &events {
                    normalize(e).unwrap();
                }
                unroll(&program).unwrap();
            }
        }
    }

    #[test]
    fn aimed_stream_points_at_target() {
        let program = DanmakuProgram::new(TemplateId::AimedStream, midpoint(TemplateId::AimedStream), 0).unwrap();
        let target = Point { x: EMITTER.x, y: 400.0 };
        let events = unroll_events(&program, target).unwrap();
        assert!((events[0].bullet.angle - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_parameter_is_rejected() {
        let mut p = midpoint(TemplateId::FanVolley);
        p[3] = 9.0;
        let program = DanmakuProgram { template: TemplateId::FanVolley, params: p, seed: 0 };
        assert!(matches!(Shooter::new(&program), Err(Error::OutOfRange { field: "speed", .. })));
    }
}
