//! Time-synchronized CSV recorder, record parser, and replay.
//!
//! Layout of a record document:
//!
//! ```text
//! #twinsim-record v1
//! #meta {"scene_source": ..., "world": ..., "spawns": ...}
//! timestamp,tick,vehicle_id,throttle_fb,...,collision,elements
//! # segment 0 start_tick=0
//! #cmd tick=12 vehicle=V1 throttle=0.8 steering=0
//! #elem tick=40 element=L1 state=green
//! 0.15,15,V1,0.8,...
//! ```
//!
//! `#cmd` and `#elem` lines log every change of effective command and every
//! traffic-light write since the last reset, so a segment can be replayed
//! from the scene-initial state. A new segment starts at each reset.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::vehicle::ActuationCommand;
use crate::error::CoreError;
use crate::scene::{LightState, Scene};
use crate::sensors::SensorFrame;
use crate::world::{VehicleSpawn, World, WorldConfig};

pub const RECORD_MAGIC: &str = "#twinsim-record v1";
const FIXED_COLUMNS: [&str; 23] = [
    "timestamp",
    "tick",
    "vehicle_id",
    "throttle_fb",
    "steer_fb",
    "enc_left",
    "enc_right",
    "ips_x",
    "ips_y",
    "ips_z",
    "imu_ax",
    "imu_ay",
    "imu_az",
    "imu_gx",
    "imu_gy",
    "imu_gz",
    "imu_roll",
    "imu_pitch",
    "imu_yaw",
    "imu_q0",
    "imu_q1",
    "imu_q2",
    "imu_q3",
];
const TAIL_COLUMNS: [&str; 4] = ["cmd_throttle", "cmd_steering", "collision", "elements"];
const IPS_COLUMNS: std::ops::Range<usize> = 7..10;

/// Everything needed to rebuild the world a record came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scene_source: String,
    pub world: WorldConfig,
    pub spawns: Vec<VehicleSpawn>,
}

impl RecordMeta {
    pub fn build_world(&self) -> Result<World, CoreError> {
        let scene = Scene::load(&self.scene_source)?;
        World::new(scene, self.world.clone(), self.spawns.clone())
    }
}

/// One logged input since the last reset.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryEvent {
    /// Effective command for the step that starts at `tick`.
    Cmd {
        tick: u64,
        vehicle: String,
        cmd: ActuationCommand,
    },
    /// Light write applied before the step that starts at `tick`.
    Elem {
        tick: u64,
        element: String,
        state: LightState,
    },
}

impl HistoryEvent {
    fn tick(&self) -> u64 {
        match self {
            HistoryEvent::Cmd { tick, .. } | HistoryEvent::Elem { tick, .. } => *tick,
        }
    }

    fn line(&self) -> String {
        match self {
            HistoryEvent::Cmd { tick, vehicle, cmd } => format!(
                "#cmd tick={tick} vehicle={vehicle} throttle={} steering={}",
                cmd.throttle, cmd.steering
            ),
            HistoryEvent::Elem { tick, element, state } => {
                format!("#elem tick={tick} element={element} state={state}")
            }
        }
    }
}

pub fn header_line(beams: usize) -> String {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((0..beams).map(|i| format!("lidar_{i}")));
    cols.extend(TAIL_COLUMNS.iter().map(|s| s.to_string()));
    cols.join(",")
}

pub fn row_line(frame: &SensorFrame, cmd: &ActuationCommand, elements: &str) -> String {
    let mut s = String::with_capacity(4096);
    let _ = write!(
        s,
        "{},{},{},{},{},{},{}",
        frame.timestamp,
        frame.tick,
        frame.vehicle_id,
        frame.throttle_fb,
        frame.steer_fb,
        frame.enc_ticks[0],
        frame.enc_ticks[1]
    );
    let floats = frame
        .ips
        .iter()
        .chain(&frame.imu_accel)
        .chain(&frame.imu_gyro)
        .chain(&frame.imu_euler)
        .chain(&frame.imu_quat)
        .chain(&frame.lidar);
    for v in floats {
        let _ = write!(s, ",{v}");
    }
    let _ = write!(
        s,
        ",{},{},{},{}",
        cmd.throttle,
        cmd.steering,
        u8::from(frame.collision),
        elements
    );
    s
}

#[derive(Debug, Clone, PartialEq, Default)]
enum RecState {
    #[default]
    Idle,
    Recording,
    Stopped,
}

#[derive(Debug, Clone, Default)]
pub struct Recorder {
    state: RecState,
    buf: String,
    segment: u32,
}

impl Recorder {
    pub fn is_recording(&self) -> bool {
        self.state == RecState::Recording
    }

    /// Starts a fresh document. `history` is everything since the last reset.
    pub fn start(&mut self, meta: &RecordMeta, history: &[HistoryEvent]) -> Result<(), CoreError> {
        if self.is_recording() {
            return Err(CoreError::Recorder("already recording".into()));
        }
        let meta_json = serde_json::to_string(meta).map_err(|e| CoreError::Recorder(e.to_string()))?;
        self.buf.clear();
        self.segment = 0;
        self.buf.push_str(RECORD_MAGIC);
        self.buf.push('\n');
        let _ = writeln!(self.buf, "#meta {meta_json}");
        self.buf.push_str(&header_line(meta.world.vehicle.lidar.beam_count()));
        self.buf.push('\n');
        self.state = RecState::Recording;
        self.write_segment_header();
        for ev in history {
            self.event(ev);
        }
        Ok(())
    }

    fn write_segment_header(&mut self) {
        let _ = writeln!(self.buf, "# segment {} start_tick=0", self.segment);
    }

    pub fn stop(&mut self) -> Result<(), CoreError> {
        if !self.is_recording() {
            return Err(CoreError::Recorder("not recording".into()));
        }
        self.state = RecState::Stopped;
        Ok(())
    }

    pub fn export(&self) -> Result<String, CoreError> {
        match self.state {
            RecState::Stopped => Ok(self.buf.clone()),
            RecState::Recording => Err(CoreError::Recorder("stop the recording before exporting".into())),
            RecState::Idle => Err(CoreError::Recorder("nothing has been recorded".into())),
        }
    }

    pub fn segment_boundary(&mut self) {
        if self.is_recording() {
            self.segment += 1;
            self.write_segment_header();
        }
    }

    pub fn event(&mut self, ev: &HistoryEvent) {
        if self.is_recording() {
            self.buf.push_str(&ev.line());
            self.buf.push('\n');
        }
    }

    pub fn row(&mut self, frame: &SensorFrame, cmd: &ActuationCommand, elements: &str) {
        if self.is_recording() {
            self.buf.push_str(&row_line(frame, cmd, elements));
            self.buf.push('\n');
        }
    }
}

// ---- parsing ----

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub line: usize,
    pub tick: u64,
    pub vehicle_id: String,
    pub ips: [f64; 3],
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub index: u32,
    pub events: Vec<HistoryEvent>,
    pub rows: Vec<RecordRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordDocument {
    pub meta: RecordMeta,
    pub header: String,
    pub segments: Vec<Segment>,
}

fn parse_err(line: usize, message: impl Into<String>) -> CoreError {
    CoreError::RecordParse {
        line,
        message: message.into(),
    }
}

fn kv<'a>(line_no: usize, fields: &'a BTreeMap<&str, &str>, key: &str) -> Result<&'a str, CoreError> {
    fields
        .get(key)
        .copied()
        .ok_or_else(|| parse_err(line_no, format!("missing `{key}=`")))
}

fn num<T: std::str::FromStr>(line_no: usize, text: &str, what: &str) -> Result<T, CoreError> {
    text.parse()
        .map_err(|_| parse_err(line_no, format!("`{text}` is not a valid {what}")))
}

impl RecordDocument {
    pub fn parse(text: &str) -> Result<Self, CoreError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, RECORD_MAGIC)) => {}
            Some((n, other)) if other.starts_with("#twinsim-record") => {
                return Err(parse_err(n, format!("unsupported record version `{other}`")))
            }
            _ => return Err(parse_err(1, "not a twinsim record")),
        }
        let (n, meta_line) = lines.next().ok_or_else(|| parse_err(2, "missing #meta line"))?;
        let meta_json = meta_line
            .strip_prefix("#meta ")
            .ok_or_else(|| parse_err(n, "expected #meta line"))?;
        let meta: RecordMeta =
            serde_json::from_str(meta_json).map_err(|e| parse_err(n, format!("bad meta: {e}")))?;
        let (n, header) = lines.next().ok_or_else(|| parse_err(3, "missing header line"))?;
        let expected = header_line(meta.world.vehicle.lidar.beam_count());
        if header != expected {
            return Err(parse_err(n, "column header does not match this version"));
        }
        let columns = expected.split(',').count();

        let mut segments: Vec<Segment> = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# segment ") {
                let index = rest.split_whitespace().next().unwrap_or("");
                segments.push(Segment {
                    index: num(n, index, "segment index")?,
                    ..Segment::default()
                });
                continue;
            }
            let seg = segments
                .last_mut()
                .ok_or_else(|| parse_err(n, "data before the first segment header"))?;
            if let Some(rest) = line.strip_prefix("#cmd ").or_else(|| line.strip_prefix("#elem ")) {
                let fields: BTreeMap<&str, &str> = rest.split_whitespace().filter_map(|f| f.split_once('=')).collect();
                let tick = num(n, kv(n, &fields, "tick")?, "tick")?;
                let ev = if line.starts_with("#cmd") {
                    HistoryEvent::Cmd {
                        tick,
                        vehicle: kv(n, &fields, "vehicle")?.to_string(),
                        cmd: ActuationCommand::new(
                            num(n, kv(n, &fields, "throttle")?, "throttle")?,
                            num(n, kv(n, &fields, "steering")?, "steering")?,
                        ),
                    }
                } else {
                    HistoryEvent::Elem {
                        tick,
                        element: kv(n, &fields, "element")?.to_string(),
                        state: kv(n, &fields, "state")?.parse().map_err(|e: String| parse_err(n, e))?,
                    }
                };
                seg.events.push(ev);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns {
                return Err(parse_err(
                    n,
                    format!("expected {columns} columns, found {} (truncated record?)", cells.len()),
                ));
            }
            let ips = [
                num(n, cells[IPS_COLUMNS.start], "ips_x")?,
                num(n, cells[IPS_COLUMNS.start + 1], "ips_y")?,
                num(n, cells[IPS_COLUMNS.start + 2], "ips_z")?,
            ];
            seg.rows.push(RecordRow {
                line: n,
                tick: num(n, cells[1], "tick")?,
                vehicle_id: cells[2].to_string(),
                ips,
                raw: line.to_string(),
            });
        }
        if segments.is_empty() {
            return Err(parse_err(text.lines().count(), "record has no segments (truncated?)"));
        }
        Ok(Self {
            meta,
            header: header.to_string(),
            segments,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub rows_compared: usize,
    /// Rows whose full text differs from the re-simulation.
    pub rows_differing: usize,
    /// Largest absolute IPS difference, m.
    pub max_deviation: f64,
    /// First row whose IPS columns differ, if any.
    pub first_divergence: Option<(usize, u64, String)>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.max_deviation == 0.0 && self.first_divergence.is_none()
    }
}

/// Re-simulates every segment from the scene-initial state with its logged
/// inputs and compares the regenerated rows against the recorded ones.
pub fn replay(doc: &RecordDocument) -> Result<ReplayReport, CoreError> {
    let mut world = doc.meta.build_world()?;
    let mut report = ReplayReport {
        rows_compared: 0,
        rows_differing: 0,
        max_deviation: 0.0,
        first_divergence: None,
    };
    for seg in &doc.segments {
        world.reset();
        let Some(last_tick) = seg.rows.iter().map(|r| r.tick).max() else {
            continue;
        };
        let mut recorded: BTreeMap<(u64, &str), &RecordRow> = BTreeMap::new();
        for r in &seg.rows {
            recorded.insert((r.tick, r.vehicle_id.as_str()), r);
        }
        let mut events = seg.events.clone();
        events.sort_by_key(HistoryEvent::tick);
        let mut next_event = 0;
        while world.clock().ticks() < last_tick {
            let now = world.clock().ticks();
            while next_event < events.len() && events[next_event].tick() <= now {
                match &events[next_event] {
                    HistoryEvent::Cmd { vehicle, cmd, .. } => world.set_command(vehicle, *cmd)?,
                    HistoryEvent::Elem { element, state, .. } => {
                        world.set_element(element, *state)?;
                    }
                }
                next_event += 1;
            }
            let out = world.step()?;
            for frame in &out.frames {
                let Some(row) = recorded.get(&(frame.tick, frame.vehicle_id.as_str())) else {
                    continue;
                };
                let cmd = world.command(&frame.vehicle_id).unwrap_or_default();
                let regenerated = row_line(frame, &cmd, &world.elements().summary());
                report.rows_compared += 1;
                if regenerated != row.raw {
                    report.rows_differing += 1;
                }
                let dev = (0..3)
                    .map(|k| (frame.ips[k] - row.ips[k]).abs())
                    .fold(0.0, f64::max);
                if dev > 0.0 || dev.is_nan() {
                    report.max_deviation = report.max_deviation.max(if dev.is_nan() { f64::INFINITY } else { dev });
                    if report.first_divergence.is_none() {
                        report.first_divergence = Some((row.line, row.tick, row.vehicle_id.clone()));
                    }
                }
            }
        }
    }
    Ok(report)
}
