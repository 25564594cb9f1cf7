//! Shot-event schema and conversion between danmaku programs, physical shot
//! events and the normalized `64 x 8` parametric sequences the generators
//! learn.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::templates::{Shooter, TemplateId};
use crate::error::{Error, Result};
use crate::sim::{Point, DEFAULT_PLAYER};

/// Number of builder calls per sequence.
pub const SEQ_LEN: usize = 64;
/// Features per builder call.
pub const FEATURE_DIMS: usize = 8;
/// Longest representable gap between two calls, in frames.
pub const ITV_CAP: u32 = 60;
/// A template that has not produced a full sequence after this many frames
/// is considered stalled.
pub const STALL_FRAMES: u32 = 3600;

/// Tolerance for normalized entries that fall just outside `[0, 1]`.
const CLAMP_SLACK: f64 = 1e-9;

/// Feature name and physical range, in feature order.
pub const FEATURE_RANGES: [(&str, f64, f64); FEATURE_DIMS] = [
    ("itv", 0.0, ITV_CAP as f64),
    ("spawn_dx", -64.0, 64.0),
    ("spawn_dy", -64.0, 64.0),
    ("angle", 0.0, TAU),
    ("speed", 0.0, 6.0),
    ("accel", -0.1, 0.1),
    ("ang_vel", -0.2, 0.2),
    ("radius", 2.0, 16.0),
];

/// Parameters of a single bullet, independent of when it is fired.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulletSpec {
    pub spawn_dx: f64,
    pub spawn_dy: f64,
    pub angle: f64,
    pub speed: f64,
    pub accel: f64,
    pub ang_vel: f64,
    pub radius: f64,
}

/// One bullet-builder call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotEvent {
    /// Frames since the previous call; 0 for calls in the same frame and for
    /// the first call of a sequence.
    pub itv: u32,
    #[serde(flatten)]
    pub bullet: BulletSpec,
}

impl ShotEvent {
    pub fn new(itv: u32, bullet: BulletSpec) -> Self {
        ShotEvent { itv, bullet }
    }

    fn fields(&self) -> [f64; FEATURE_DIMS] {
        let b = &self.bullet;
        [
            self.itv as f64,
            b.spawn_dx,
            b.spawn_dy,
            b.angle,
            b.speed,
            b.accel,
            b.ang_vel,
            b.radius,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (&v, &(field, lo, hi)) in self.fields().iter().zip(&FEATURE_RANGES) {
            if !(lo..=hi).contains(&v) {
                return Err(Error::OutOfRange { field, value: v, lo, hi });
            }
        }
        Ok(())
    }
}

/// Affine map of every field onto `[0, 1]`.
pub fn normalize(event: &ShotEvent) -> Result<[f64; FEATURE_DIMS]> {
    event.validate()?;
    let mut row = [0.0; FEATURE_DIMS];
    for ((slot, v), &(_, lo, hi)) in row.iter_mut().zip(event.fields()).zip(&FEATURE_RANGES) {
        *slot = (v - lo) / (hi - lo);
    }
    Ok(row)
}

/// Inverse of [`normalize`]. Entries within 1e-9 of `[0, 1]` are clamped; the
/// interval is rounded half-up to whole frames.
pub fn denormalize(row: &[f64]) -> Result<ShotEvent> {
    if row.len() != FEATURE_DIMS {
        return Err(Error::shape(
            "denormalize",
            "features",
            format!("expected {FEATURE_DIMS}, got {}", row.len()),
        ));
    }
    let mut phys = [0.0; FEATURE_DIMS];
    for ((slot, &f), &(field, lo, hi)) in phys.iter_mut().zip(row).zip(&FEATURE_RANGES) {
        if !(f >= -CLAMP_SLACK && f <= 1.0 + CLAMP_SLACK) {
            return Err(Error::OutOfRange {
                field,
                value: f,
                lo: 0.0,
                hi: 1.0,
            });
        }
        *slot = lo + f.clamp(0.0, 1.0) * (hi - lo);
    }
    Ok(ShotEvent {
        itv: ((phys[0] + 0.5).floor() as u32).min(ITV_CAP),
        bullet: BulletSpec {
            spawn_dx: phys[1],
            spawn_dy: phys[2],
            angle: phys[3],
            speed: phys[4],
            accel: phys[5],
            ang_vel: phys[6],
            radius: phys[7],
        },
    })
}

/// `SEQ_LEN x FEATURE_DIMS` matrix of normalized builder calls.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricSequence {
    rows: Vec<[f64; FEATURE_DIMS]>,
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    version: u32,
    length: usize,
    dims: usize,
    features: Vec<Vec<f64>>,
}

impl ParametricSequence {
    pub fn new(rows: Vec<[f64; FEATURE_DIMS]>) -> Result<Self> {
        if rows.len() != SEQ_LEN {
            return Err(Error::shape(
                "sequence",
                "length",
                format!("expected {SEQ_LEN} rows, got {}", rows.len()),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(&v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Format(format!("row {i}: feature value {v} outside [0, 1]")));
            }
        }
        Ok(ParametricSequence { rows })
    }

    /// From a row-major buffer of `SEQ_LEN * FEATURE_DIMS` values.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != SEQ_LEN * FEATURE_DIMS {
            return Err(Error::shape(
                "sequence",
                "length",
                format!("expected {} values, got {}", SEQ_LEN * FEATURE_DIMS, values.len()),
            ));
        }
        let rows = values
            .chunks_exact(FEATURE_DIMS)
            .map(|c| c.try_into().unwrap())
            .collect();
        Self::new(rows)
    }

    pub fn from_events(events: &[ShotEvent]) -> Result<Self> {
        let rows = events.iter().map(normalize).collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[[f64; FEATURE_DIMS]] {
        &self.rows
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn to_events(&self) -> Result<Vec<ShotEvent>> {
        self.rows.iter().map(|r| denormalize(r)).collect()
    }

    pub fn to_json(&self) -> String {
        let file = SequenceFile {
            version: 1,
            length: SEQ_LEN,
            dims: FEATURE_DIMS,
            features: self.rows.iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("sequence serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SequenceFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("sequence json: {e}")))?;
        if file.version != 1 {
            return Err(Error::Format(format!("unsupported sequence version {}", file.version)));
        }
        if file.length != SEQ_LEN || file.dims != FEATURE_DIMS {
            return Err(Error::Format(format!(
                "sequence declares {}x{}, expected {SEQ_LEN}x{FEATURE_DIMS}",
                file.length, file.dims
            )));
        }
        let rows = file
            .features
            .iter()
            .enumerate()
            .map(|(i, r)| {
                <[f64; FEATURE_DIMS]>::try_from(r.as_slice())
                    .map_err(|_| Error::Format(format!("row {i} has {} features", r.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A shooting rule plus its parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DanmakuProgram {
    pub template: TemplateId,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl DanmakuProgram {
    pub fn new(template: TemplateId, params: Vec<f64>, seed: u64) -> Result<Self> {
        if params.len() != template.arity() {
            return Err(Error::Config(format!(
                "{template:?} takes {} parameters, got {}",
                template.arity(),
                params.len()
            )));
        }
        Ok(DanmakuProgram { template, params, seed })
    }
}

/// Runs the program's shooting rule frame by frame until `SEQ_LEN` calls
/// have been made, aiming at the default player position.
pub fn unroll(program: &DanmakuProgram) -> Result<ParametricSequence> {
    unroll_events(program, DEFAULT_PLAYER).and_then(|ev| ParametricSequence::from_events(&ev))
}

/// Physical shot events of the first `SEQ_LEN` builder calls.
pub fn unroll_events(program: &DanmakuProgram, target: Point) -> Result<Vec<ShotEvent>> {
    let mut shooter = Shooter::new(program)?;
    let mut events = Vec::with_capacity(SEQ_LEN);
    let mut frame_buf = Vec::new();
    let mut last_frame: Option<u32> = None;
    for frame in 0..STALL_FRAMES {
        frame_buf.clear();
        shooter.fire(frame, target, &mut frame_buf);
        for bullet in frame_buf.drain(..) {
            let itv = match last_frame {
                None => 0,
                Some(prev) => (frame - prev).min(ITV_CAP),
            };
            last_frame = Some(frame);
            events.push(ShotEvent::new(itv, bullet));
            if events.len() == SEQ_LEN {
                return Ok(events);
            }
        }
    }
    Err(Error::Stall {
        emitted: events.len(),
        frames: STALL_FRAMES,
    })
}
