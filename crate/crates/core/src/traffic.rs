//! Application traffic: a constant-bit-rate video source, an on/off VoIP
//! talker, receiving sinks with the VoIP playout deadline, and the derived
//! loss-rate and MOS metrics.

use std::fmt;

use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::engine::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "flow{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Video,
    Voip,
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowKind::Video => "video",
            FlowKind::Voip => "voip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppPacket {
    pub flow_id: FlowId,
    pub seq: u64,
    pub payload_bits: u64,
    pub sent_at: SimTime,
    /// Talk spurt index for VoIP, 0 for video.
    pub spurt: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("flow sent no packets")]
    NoTraffic,
    #[error("invalid traffic parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Constant-bit-rate stream: one `packet_bits` packet every
/// `packet_bits / rate_bps` seconds starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoSource {
    pub rate_bps: f64,
    pub packet_bits: u64,
    pub start: SimTime,
}

impl VideoSource {
    pub fn new(rate_bps: f64, packet_bits: u64, start: SimTime) -> Result<Self, TrafficError> {
        if !(rate_bps > 0.0) {
            return Err(TrafficError::InvalidParameter {
                name: "rate",
                value: rate_bps,
            });
        }
        if packet_bits == 0 {
            return Err(TrafficError::InvalidParameter {
                name: "packet_size",
                value: 0.0,
            });
        }
        Ok(VideoSource {
            rate_bps,
            packet_bits,
            start,
        })
    }

    pub fn interval(&self) -> f64 {
        self.packet_bits as f64 / self.rate_bps
    }

    pub fn send_time(&self, k: u64) -> SimTime {
        self.start + k as f64 * self.interval()
    }

    /// Packets whose send time falls in `[start, end)`.
    pub fn packets_before(&self, end: SimTime) -> u64 {
        let span = end - self.start;
        if span <= 0.0 {
            return 0;
        }
        let mut n = (span / self.interval()).ceil() as u64;
        while n > 0 && self.send_time(n - 1) >= end {
            n -= 1;
        }
        while self.send_time(n) < end {
            n += 1;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoipConfig {
    pub packetization_interval: f64,
    pub playout_delay: f64,
    pub spurt_mean: f64,
    pub silence_mean: f64,
    pub codec_rate: f64,
}

impl Default for VoipConfig {
    fn default() -> Self {
        VoipConfig {
            packetization_interval: 0.020,
            playout_delay: 0.005,
            spurt_mean: 1.0,
            silence_mean: 1.35,
            codec_rate: 64_000.0,
        }
    }
}

impl VoipConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        for (name, value) in [
            ("packetization_interval", self.packetization_interval),
            ("playout_delay", self.playout_delay),
            ("spurt_mean", self.spurt_mean),
            ("silence_mean", self.silence_mean),
            ("codec_rate", self.codec_rate),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(TrafficError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    pub fn payload_bits(&self) -> u64 {
        (self.codec_rate * self.packetization_interval).round() as u64
    }

    /// Packets emitted during a spurt of `duration` seconds: one at every
    /// multiple of the packetization interval strictly inside the spurt.
    pub fn packets_in_spurt(&self, duration: f64) -> u64 {
        let n = duration / self.packetization_interval;
        // Guard against 1.0 / 0.02 landing a hair above 50.
        (n - 1e-9).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spurt {
    pub index: u32,
    pub start: SimTime,
    pub duration: f64,
    pub packets: u64,
}

impl Spurt {
    pub fn packet_time(&self, k: u64, interval: f64) -> SimTime {
        self.start + k as f64 * interval
    }
}

/// On/off talker with exponentially distributed talk and silence periods.
#[derive(Debug, Clone)]
pub struct VoipSource {
    cfg: VoipConfig,
    rng: RngStream,
    talk: Exp<f64>,
    silence: Exp<f64>,
    cursor: SimTime,
    next_index: u32,
}

impl VoipSource {
    pub fn new(cfg: VoipConfig, rng: RngStream, start: SimTime) -> Result<Self, TrafficError> {
        cfg.validate()?;
        Ok(VoipSource {
            talk: Exp::new(1.0 / cfg.spurt_mean).expect("validated"),
            silence: Exp::new(1.0 / cfg.silence_mean).expect("validated"),
            cfg,
            rng,
            cursor: start,
            next_index: 0,
        })
    }

    pub fn config(&self) -> &VoipConfig {
        &self.cfg
    }

    /// Draws the next talk spurt; the following one starts after a silence.
    pub fn next_spurt(&mut self) -> Spurt {
        let duration = self.talk.sample(&mut self.rng);
        let gap = self.silence.sample(&mut self.rng);
        let spurt = Spurt {
            index: self.next_index,
            start: self.cursor,
            duration,
            packets: self.cfg.packets_in_spurt(duration),
        };
        self.next_index += 1;
        self.cursor = self.cursor + (duration + gap);
        spurt
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub sent: u64,
    pub received: u64,
    pub late: u64,
    pub lost_in_network: u64,
    pub duplicates: u64,
    /// One-way delays of packets counted as received.
    pub delays: Vec<f64>,
}

impl FlowStats {
    pub fn mean_delay(&self) -> f64 {
        if self.delays.is_empty() {
            0.0
        } else {
            self.delays.iter().sum::<f64>() / self.delays.len() as f64
        }
    }

    /// Packets neither received, late nor lost: still travelling.
    pub fn unaccounted(&self) -> i64 {
        self.sent as i64 - (self.received + self.late + self.lost_in_network) as i64
    }

    pub fn merge(&mut self, other: &FlowStats) {
        self.sent += other.sent;
        self.received += other.received;
        self.late += other.late;
        self.lost_in_network += other.lost_in_network;
        self.duplicates += other.duplicates;
        self.delays.extend_from_slice(&other.delays);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Received,
    Late,
    Duplicate,
}

/// Receiving end of one flow.
///
/// For VoIP the deadline is `budget + playout_delay`, where `budget` is the
/// smallest one-way delay seen during the first talk spurt that delivered
/// anything. Video has no deadline.
#[derive(Debug, Clone)]
pub struct Sink {
    pub kind: FlowKind,
    pub playout_delay: f64,
    pub stats: FlowStats,
    budget: Option<f64>,
    budget_spurt: Option<u32>,
    seen: Vec<bool>,
}

impl Sink {
    pub fn new(kind: FlowKind, playout_delay: f64) -> Self {
        Sink {
            kind,
            playout_delay,
            stats: FlowStats::default(),
            budget: None,
            budget_spurt: None,
            seen: Vec::new(),
        }
    }

    pub fn network_delay_budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn has_seen(&self, seq: u64) -> bool {
        self.seen.get(seq as usize).copied().unwrap_or(false)
    }

    pub fn on_receive(&mut self, pkt: &AppPacket, now: SimTime) -> Classification {
        let idx = pkt.seq as usize;
        if idx >= self.seen.len() {
            self.seen.resize(idx + 1, false);
        }
        if self.seen[idx] {
            self.stats.duplicates += 1;
            return Classification::Duplicate;
        }
        self.seen[idx] = true;
        let delay = now - pkt.sent_at;
        let on_time = match self.kind {
            FlowKind::Video => true,
            FlowKind::Voip => {
                let spurt = *self.budget_spurt.get_or_insert(pkt.spurt);
                if pkt.spurt == spurt {
                    self.budget = Some(self.budget.map_or(delay, |b| b.min(delay)));
                }
                let budget = self.budget.unwrap_or(delay);
                delay <= budget + self.playout_delay
            }
        };
        if on_time {
            self.stats.received += 1;
            self.stats.delays.push(delay);
            Classification::Received
        } else {
            self.stats.late += 1;
            Classification::Late
        }
    }
}

/// `(sent - received) / sent`; late VoIP packets are not in `received`.
pub fn packet_loss_rate(stats: &FlowStats) -> Result<f64, TrafficError> {
    if stats.sent == 0 {
        return Err(TrafficError::NoTraffic);
    }
    Ok((stats.sent - stats.received) as f64 / stats.sent as f64)
}

/// Identifier of the MOS model, written into result metadata.
pub const MOS_MODEL: &str = "ITU-T G.107 simplified E-model (R0=93.2, Ie=0, Bpl=25.1)";

const R0: f64 = 93.2;
const IE: f64 = 0.0;
const BPL: f64 = 25.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosReport {
    pub r_factor: f64,
    pub mos: f64,
    pub mean_delay: f64,
    pub effective_loss: f64,
}

/// Delay impairment for a one-way delay in milliseconds.
fn delay_impairment(d_ms: f64) -> f64 {
    let knee = if d_ms > 177.3 { 0.11 * (d_ms - 177.3) } else { 0.0 };
    0.024 * d_ms + knee
}

/// Effective equipment impairment for a loss fraction in [0, 1].
fn loss_impairment(loss: f64) -> f64 {
    let ppl = loss * 100.0;
    IE + (95.0 - IE) * ppl / (ppl + BPL)
}

pub fn r_to_mos(r: f64) -> f64 {
    if r < 0.0 {
        1.0
    } else if r > 100.0 {
        4.5
    } else {
        (1.0 + 0.035 * r + 7.0e-6 * r * (r - 60.0) * (100.0 - r)).clamp(1.0, 4.5)
    }
}

/// E-model score for a loss fraction and a mean one-way delay in seconds.
pub fn mos_for(loss: f64, mean_delay: f64) -> MosReport {
    let r = R0 - delay_impairment(mean_delay * 1000.0) - loss_impairment(loss);
    MosReport {
        r_factor: r,
        mos: r_to_mos(r),
        mean_delay,
        effective_loss: loss,
    }
}

pub fn compute_mos(stats: &FlowStats) -> Result<MosReport, TrafficError> {
    let loss = packet_loss_rate(stats)?;
    Ok(mos_for(loss, stats.mean_delay()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StreamId;
    use approx::assert_abs_diff_eq;

    fn pkt(seq: u64, sent: f64, spurt: u32) -> AppPacket {
        AppPacket {
            flow_id: FlowId(1),
            seq,
            payload_bits: 1280,
            sent_at: SimTime::from_secs(sent),
            spurt,
        }
    }

    #[test]
    fn video_intervals() {
        let v = VideoSource::new(0.5e6, 10_000, SimTime::ZERO).unwrap();
        assert_abs_diff_eq!(v.interval(), 0.02);
        let v = VideoSource::new(2e6, 10_000, SimTime::ZERO).unwrap();
        assert_abs_diff_eq!(v.interval(), 0.005);
        assert!(VideoSource::new(0.0, 10_000, SimTime::ZERO).is_err());
    }

    #[test]
    fn video_count_over_duration() {
        let v = VideoSource::new(0.5e6, 10_000, SimTime::from_secs(2.0)).unwrap();
        let n = v.packets_before(SimTime::from_secs(12.0));
        let expect = (10.0_f64 * 0.5e6 / 10_000.0).floor() as i64;
        assert!((n as i64 - expect).abs() <= 1, "{n} vs {expect}");
        assert_eq!(v.packets_before(SimTime::from_secs(1.0)), 0);
    }

    #[test]
    fn one_second_spurt_has_fifty_packets() {
        let cfg = VoipConfig::default();
        assert_eq!(cfg.packets_in_spurt(1.0), 50);
        assert_eq!(cfg.packets_in_spurt(0.0), 0);
        assert_eq!(cfg.packets_in_spurt(0.021), 2);
        assert_eq!(cfg.payload_bits(), 1280);
    }

    #[test]
    fn voip_config_rejects_non_positive() {
        let cfg = VoipConfig {
            silence_mean: 0.0,
            ..VoipConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn spurts_do_not_overlap() {
        let mut src = VoipSource::new(
            VoipConfig::default(),
            RngStream::new(3, StreamId::VoipForward),
            SimTime::from_secs(2.0),
        )
        .unwrap();
        let mut prev_end = 0.0;
        for i in 0..200 {
            let s = src.next_spurt();
            assert_eq!(s.index, i);
            assert!(s.start.as_secs() >= prev_end);
            prev_end = s.start.as_secs() + s.duration;
        }
    }

    #[test]
    fn talk_fraction_matches_means() {
        // Monte Carlo over the seeded stream for 2000 s of conversation.
        let cfg = VoipConfig::default();
        let mut src = VoipSource::new(cfg, RngStream::new(1, StreamId::VoipForward), SimTime::ZERO).unwrap();
        let mut talk = 0.0;
        let end;
        loop {
            let s = src.next_spurt();
            if s.start.as_secs() + s.duration >= 2000.0 {
                talk += (2000.0 - s.start.as_secs()).max(0.0);
                end = 2000.0;
                break;
            }
            talk += s.duration;
        }
        let expected = cfg.spurt_mean / (cfg.spurt_mean + cfg.silence_mean);
        let observed = talk / end;
        assert!(
            (observed - expected).abs() <= 0.03 * expected,
            "talk fraction {observed} vs {expected}"
        );
    }

    #[test]
    fn voip_deadline_classification() {
        let mut sink = Sink::new(FlowKind::Voip, 0.005);
        // First spurt sets the budget at 10 ms.
        assert_eq!(sink.on_receive(&pkt(0, 0.0, 0), SimTime::from_secs(0.010)), Classification::Received);
        assert_eq!(sink.on_receive(&pkt(1, 0.02, 0), SimTime::from_secs(0.031)), Classification::Received);
        assert_eq!(sink.network_delay_budget(), Some(0.010));
        // Within budget + playout.
        assert_eq!(sink.on_receive(&pkt(2, 5.0, 1), SimTime::from_secs(5.0149)), Classification::Received);
        // Past the deadline.
        assert_eq!(sink.on_receive(&pkt(3, 5.02, 1), SimTime::from_secs(5.036)), Classification::Late);
        assert_eq!(sink.stats.received, 3);
        assert_eq!(sink.stats.late, 1);
    }

    #[test]
    fn video_has_no_deadline() {
        let mut sink = Sink::new(FlowKind::Video, 0.005);
        assert_eq!(sink.on_receive(&pkt(0, 0.0, 0), SimTime::from_secs(0.01)), Classification::Received);
        assert_eq!(sink.on_receive(&pkt(1, 1.0, 0), SimTime::from_secs(9.0)), Classification::Received);
    }

    #[test]
    fn duplicates_count_once() {
        let mut sink = Sink::new(FlowKind::Video, 0.005);
        sink.on_receive(&pkt(4, 0.0, 0), SimTime::from_secs(0.01));
        assert_eq!(sink.on_receive(&pkt(4, 0.0, 0), SimTime::from_secs(0.02)), Classification::Duplicate);
        assert_eq!(sink.stats.received, 1);
        assert_eq!(sink.stats.duplicates, 1);
    }

    #[test]
    fn loss_rate_arithmetic() {
        let s = FlowStats {
            sent: 1000,
            received: 1000,
            ..Default::default()
        };
        assert_eq!(packet_loss_rate(&s).unwrap(), 0.0);
        let s = FlowStats {
            sent: 1000,
            received: 900,
            late: 50,
            ..Default::default()
        };
        assert_abs_diff_eq!(packet_loss_rate(&s).unwrap(), 0.1);
        assert_eq!(packet_loss_rate(&FlowStats::default()), Err(TrafficError::NoTraffic));
    }

    #[test]
    fn mos_reference_points() {
        let best = mos_for(0.0, 0.0);
        assert_abs_diff_eq!(best.r_factor, 93.2);
        assert_abs_diff_eq!(best.mos, 4.409285824, epsilon = 1e-9);
        let worst = mos_for(1.0, 0.0);
        assert_abs_diff_eq!(loss_impairment(1.0), 95.0 * 100.0 / 125.1, epsilon = 1e-12);
        assert!(worst.mos < 1.2);
        assert_eq!(mos_for(1.0, 0.3).mos, 1.0);
    }

    #[test]
    fn compute_mos_uses_flow_stats() {
        let s = FlowStats {
            sent: 10,
            received: 9,
            delays: vec![0.05; 9],
            ..Default::default()
        };
        let r = compute_mos(&s).unwrap();
        assert_abs_diff_eq!(r.effective_loss, 0.1);
        assert_abs_diff_eq!(r.mean_delay, 0.05);
        assert_abs_diff_eq!(r.mos, mos_for(0.1, 0.05).mos);
    }

    #[test]
    fn r_to_mos_is_bounded() {
        for r in [-50.0, -1.0, 0.0, 3.0, 50.0, 100.0, 150.0] {
            let m = r_to_mos(r);
            assert!((1.0..=4.5).contains(&m));
        }
    }
}
