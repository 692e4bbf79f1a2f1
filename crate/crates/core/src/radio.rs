//! Node mobility, free-space propagation and channelized link-layer frame
//! delivery.
//!
//! There is no MAC contention, fading or interference: a frame is delivered
//! iff the receiver is tuned to the frame's channel and inside the
//! transmitter's coverage, after `size / bitrate` seconds.

use std::f64::consts::PI;
use std::fmt;

use crate::engine::SimTime;
use crate::ipv6::Prefix;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Boustrophedon path over a rectangular field, in the manner of a tractor
/// ploughing `row_count` rows.
///
/// The node starts at `(x1, y1)`, drives to `x2`, steps by
/// `(y2 - y1) / row_count` along y, drives back, and so on for `row_count`
/// rows. At the end of the last row it turns around and retraces the path
/// (ping-pong), so the position is defined for any `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TractorPath {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub row_count: u32,
    pub speed: f64,
}

impl TractorPath {
    fn row_len(&self) -> f64 {
        (self.x2 - self.x1).abs()
    }

    fn row_step(&self) -> f64 {
        (self.y2 - self.y1) / self.row_count as f64
    }

    /// Length of one forward traversal of all rows, meters.
    pub fn pass_length(&self) -> f64 {
        let rows = self.row_count as f64;
        rows * self.row_len() + (rows - 1.0) * self.row_step().abs()
    }

    pub fn position(&self, t: SimTime) -> Position {
        tractor_position(self, t)
    }
}

pub fn tractor_position(path: &TractorPath, t: SimTime) -> Position {
    let pass = path.pass_length();
    let travelled = path.speed * t.as_secs();
    let mut along = if pass > 0.0 {
        travelled % (2.0 * pass)
    } else {
        0.0
    };
    if along > pass {
        along = 2.0 * pass - along;
    }

    let row_len = path.row_len();
    let step = path.row_step();
    let block = row_len + step.abs();
    let last_row = path.row_count - 1;
    let row = if block > 0.0 {
        ((along / block).floor() as u32).min(last_row)
    } else {
        0
    };
    let into = along - row as f64 * block;
    let row_y = path.y1 + row as f64 * step;
    let forward = row % 2 == 0;
    let dir = (path.x2 - path.x1).signum();

    if into <= row_len || row == last_row {
        let into = into.min(row_len);
        let x = if forward {
            path.x1 + dir * into
        } else {
            path.x2 - dir * into
        };
        Position::new(x, row_y)
    } else {
        let x = if forward { path.x2 } else { path.x1 };
        Position::new(x, row_y + step.signum() * (into - row_len))
    }
}

/// Free-space path loss in dB at `distance` meters and `frequency` Hz.
pub fn free_space_path_loss(distance: f64, frequency: f64) -> f64 {
    20.0 * distance.log10() + 20.0 * frequency.log10() + 20.0 * (4.0 * PI / SPEED_OF_LIGHT).log10()
}

/// Received power (dBm) under free-space propagation. Distances below
/// `d_ref` are clamped to `d_ref` (near field).
pub fn rx_power(tx_power_dbm: f64, distance: f64, frequency: f64, d_ref: f64) -> f64 {
    debug_assert!(frequency > 0.0);
    tx_power_dbm - free_space_path_loss(distance.max(d_ref), frequency)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub frequency_hz: f64,
    pub sensitivity_dbm: f64,
    pub d_ref: f64,
    pub bitrate_bps: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            frequency_hz: 2.4e9,
            sensitivity_dbm: -85.0,
            d_ref: 1.0,
            bitrate_bps: 2.0e6,
        }
    }
}

impl RadioParams {
    /// Largest distance at which an AP transmitting at `tx_power_dbm` is
    /// received at or above sensitivity.
    pub fn coverage_radius(&self, tx_power_dbm: f64) -> f64 {
        let budget = tx_power_dbm - self.sensitivity_dbm
            - 20.0 * self.frequency_hz.log10()
            - 20.0 * (4.0 * PI / SPEED_OF_LIGHT).log10();
        10f64.powf(budget / 20.0).max(self.d_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ApId(pub u32);

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ap{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApConfig {
    pub ap_id: ApId,
    pub name: String,
    pub position: Position,
    pub channel: u8,
    pub tx_power_dbm: f64,
    pub beacon_interval: f64,
    /// Phase of the first beacon within the interval.
    pub beacon_offset: f64,
    pub prefix: Prefix,
}

impl ApConfig {
    pub fn rx_power_at(&self, pos: &Position, radio: &RadioParams) -> f64 {
        rx_power(
            self.tx_power_dbm,
            self.position.distance(pos),
            radio.frequency_hz,
            radio.d_ref,
        )
    }

    /// Time of the `k`-th beacon.
    pub fn beacon_time(&self, k: u64) -> SimTime {
        SimTime::from_secs(self.beacon_offset + k as f64 * self.beacon_interval)
    }
}

pub fn in_range(node_pos: &Position, ap: &ApConfig, radio: &RadioParams) -> bool {
    ap.rx_power_at(node_pos, radio) >= radio.sensitivity_dbm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkId {
    Ap(ApId),
    Station { node: u32, iface: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Beacon,
    AssocRequest,
    AssocResponse,
    Disassoc,
    Data,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame<P> {
    pub src: LinkId,
    pub dst: LinkId,
    pub channel: u8,
    pub size_bits: u64,
    pub kind: FrameKind,
    pub payload: P,
}

/// What a receiving radio is listening to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tuning {
    Channel(u8),
    /// Unassociated and scanning: hears beacons on every channel, nothing else.
    Scanning,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    OutOfRange,
    ChannelMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Arrival(SimTime),
    Dropped(DropReason),
}

/// Decides the fate of a frame sent at `now`. `receiver_in_range` is the
/// coverage test evaluated at transmission time.
pub fn deliver_frame<P>(
    frame: &Frame<P>,
    now: SimTime,
    bitrate_bps: f64,
    tuning: Tuning,
    receiver_in_range: bool,
) -> Delivery {
    debug_assert!(frame.size_bits > 0);
    let tuned = match tuning {
        Tuning::Channel(ch) => ch == frame.channel,
        Tuning::Scanning => frame.kind == FrameKind::Beacon,
        Tuning::Off => false,
    };
    if !tuned {
        return Delivery::Dropped(DropReason::ChannelMismatch);
    }
    if !receiver_in_range {
        return Delivery::Dropped(DropReason::OutOfRange);
    }
    Delivery::Arrival(now + frame.size_bits as f64 / bitrate_bps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path() -> TractorPath {
        TractorPath {
            x1: 0.0,
            y1: 0.0,
            x2: 100.0,
            y2: 100.0,
            row_count: 5,
            speed: 2.0,
        }
    }

    fn ap() -> ApConfig {
        ApConfig {
            ap_id: ApId(1),
            name: "home".into(),
            position: Position::new(0.0, 0.0),
            channel: 1,
            tx_power_dbm: 20.0,
            beacon_interval: 0.1,
            beacon_offset: 0.0,
            prefix: Prefix(0x2001_0db8_0001_0000),
        }
    }

    #[test]
    fn path_start_and_first_row_end() {
        let p = path();
        assert_eq!(p.position(SimTime::ZERO), Position::new(0.0, 0.0));
        assert_eq!(p.position(SimTime::from_secs(50.0)), Position::new(100.0, 0.0));
    }

    #[test]
    fn path_turns_and_retraces() {
        let p = path();
        // 100 m row + 10 m of the 20 m step.
        let pos = p.position(SimTime::from_secs(55.0));
        assert_abs_diff_eq!(pos.x, 100.0);
        assert_abs_diff_eq!(pos.y, 10.0);
        // One full pass is 5*100 + 4*20 = 580 m; 10 m past the end is 10 m
        // back along the last row.
        assert_abs_diff_eq!(p.pass_length(), 580.0);
        let end = p.position(SimTime::from_secs(290.0));
        assert_abs_diff_eq!(end.x, 100.0);
        assert_abs_diff_eq!(end.y, 80.0);
        let back = p.position(SimTime::from_secs(295.0));
        assert_abs_diff_eq!(back.x, 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(back.y, 80.0);
        // Two passes return to the start.
        let home = p.position(SimTime::from_secs(580.0));
        assert_abs_diff_eq!(home.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(home.y, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn single_row_ping_pongs() {
        let p = TractorPath {
            row_count: 1,
            ..path()
        };
        let pos = p.position(SimTime::from_secs(75.0));
        assert_abs_diff_eq!(pos.x, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pos.y, 0.0);
    }

    #[test]
    fn friis_reference_point() {
        // 20 - FSPL(100 m, 2.4 GHz) = 20 - 80.052
        assert_abs_diff_eq!(rx_power(20.0, 100.0, 2.4e9, 1.0), -60.052008, epsilon = 1e-5);
    }

    #[test]
    fn doubling_distance_costs_six_db() {
        let a = rx_power(20.0, 40.0, 2.4e9, 1.0);
        let b = rx_power(20.0, 80.0, 2.4e9, 1.0);
        assert_abs_diff_eq!(a - b, 20.0 * 2f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn near_field_is_clamped() {
        let at_ref = rx_power(20.0, 1.0, 2.4e9, 1.0);
        assert_eq!(rx_power(20.0, 0.0, 2.4e9, 1.0), at_ref);
        assert_eq!(rx_power(20.0, 0.3, 2.4e9, 1.0), at_ref);
    }

    #[test]
    fn range_checks() {
        let radio = RadioParams::default();
        let a = ap();
        assert!(in_range(&a.position, &a, &radio));
        assert!(!in_range(&Position::new(10_000.0, 0.0), &a, &radio));
        let r = radio.coverage_radius(a.tx_power_dbm);
        assert!(in_range(&Position::new(r * (1.0 - 1e-12), 0.0), &a, &radio));
        assert!(!in_range(&Position::new(r * 1.001, 0.0), &a, &radio));
    }

    #[test]
    fn boundary_is_inclusive() {
        // Pick a sensitivity equal to the received power at 50 m.
        let a = ap();
        let pos = Position::new(50.0, 0.0);
        let radio = RadioParams {
            sensitivity_dbm: a.rx_power_at(&pos, &RadioParams::default()),
            ..RadioParams::default()
        };
        assert!(in_range(&pos, &a, &radio));
    }

    fn frame(kind: FrameKind, channel: u8) -> Frame<()> {
        Frame {
            src: LinkId::Ap(ApId(1)),
            dst: LinkId::Station { node: 0, iface: 0 },
            channel,
            size_bits: 2000,
            kind,
            payload: (),
        }
    }

    #[test]
    fn frame_airtime() {
        let d = deliver_frame(
            &frame(FrameKind::Data, 1),
            SimTime::from_secs(3.0),
            2e6,
            Tuning::Channel(1),
            true,
        );
        assert_eq!(d, Delivery::Arrival(SimTime::from_secs(3.001)));
    }

    #[test]
    fn frame_drops() {
        let f = frame(FrameKind::Data, 1);
        assert_eq!(
            deliver_frame(&f, SimTime::ZERO, 2e6, Tuning::Channel(1), false),
            Delivery::Dropped(DropReason::OutOfRange)
        );
        assert_eq!(
            deliver_frame(&f, SimTime::ZERO, 2e6, Tuning::Channel(6), true),
            Delivery::Dropped(DropReason::ChannelMismatch)
        );
        assert_eq!(
            deliver_frame(&f, SimTime::ZERO, 2e6, Tuning::Scanning, true),
            Delivery::Dropped(DropReason::ChannelMismatch)
        );
        assert!(matches!(
            deliver_frame(&frame(FrameKind::Beacon, 6), SimTime::ZERO, 2e6, Tuning::Scanning, true),
            Delivery::Arrival(_)
        ));
    }
}
