//! Deterministic discrete-event core: simulation clock, a cancellable event
//! queue with a stable tie-break, and seeded per-consumer random streams.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulation time in seconds.
///
/// Ordering is total (`f64::total_cmp`) and exact. Periodic activities must
/// derive their fire times as `start + k * period` rather than by repeated
/// addition so that two runs agree bit-for-bit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input; a bad clock value is a
    /// programming error, not a runtime condition.
    pub fn from_secs(secs: f64) -> Self {
        assert!(secs.is_finite() && secs >= 0.0, "invalid simulation time {secs}");
        SimTime(secs)
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;

    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Index of a network interface on its node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IfaceId(pub u32);

impl fmt::Display for IfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "if{}", self.0)
    }
}

/// Protocol layer an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Module {
    Radio,
    Llc,
    Ipv6,
    Mipv6,
    App,
    Wired,
}

impl Module {
    pub fn as_str(self) -> &'static str {
        match self {
            Module::Radio => "radio",
            Module::Llc => "llc",
            Module::Ipv6 => "ipv6",
            Module::Mipv6 => "mipv6",
            Module::App => "app",
            Module::Wired => "wired",
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Target {
    pub node: NodeId,
    pub module: Module,
}

impl Target {
    pub fn new(node: NodeId, module: Module) -> Self {
        Target { node, module }
    }
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: Target,
    pub payload: P,
}

/// Handle returned by [`Scheduler::schedule`], used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("event scheduled at {at} but clock is already at {now}")]
    InPast { at: SimTime, now: SimTime },
    #[error("cannot run until {end}: clock is already at {now}")]
    EndInPast { end: SimTime, now: SimTime },
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_at
            .cmp(&self.0.fire_at)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Single-threaded event queue. Events with equal `fire_at` run in the order
/// they were scheduled.
pub struct Scheduler<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    live: HashSet<u64>,
    executed: u64,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events executed since creation.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Number of events still pending (cancelled events excluded).
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: Target,
        payload: P,
    ) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::InPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.queue.push(Queued(Event {
            fire_at,
            seq,
            target,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` seconds after the current clock. `delay` must be
    /// non-negative.
    pub fn schedule_in(&mut self, delay: f64, target: Target, payload: P) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, target, payload)
            .expect("non-negative delay is never in the past")
    }

    /// Returns true iff the event was pending and is now removed.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.live.contains(&handle.0)
    }

    /// Pops the next live event with `fire_at <= end` and advances the clock
    /// to it.
    pub fn pop_due(&mut self, end: SimTime) -> Option<Event<P>> {
        loop {
            let top = self.queue.peek()?;
            if top.0.fire_at > end {
                return None;
            }
            let Queued(event) = self.queue.pop().expect("peeked");
            if self.live.remove(&event.seq) {
                self.now = event.fire_at;
                self.executed += 1;
                return Some(event);
            }
        }
    }

    /// Executes every event with `fire_at <= end` in `(fire_at, seq)` order,
    /// then sets the clock to `end`. Returns the number of events executed.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<u64, EngineError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if end < self.now {
            return Err(EngineError::EndInPast { end, now: self.now });
        }
        let mut count = 0;
        while let Some(event) = self.pop_due(end) {
            handler(self, event);
            count += 1;
        }
        self.now = end;
        Ok(count)
    }

    /// Live pending events in unspecified order.
    pub fn pending_events(&self) -> impl Iterator<Item = &Event<P>> {
        self.queue
            .iter()
            .map(|q| &q.0)
            .filter(|e| self.live.contains(&e.seq))
    }
}

/// Consumer label for an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Mobility,
    VoipForward,
    VoipReverse,
    Other(u32),
}

impl StreamId {
    fn index(self) -> u64 {
        match self {
            StreamId::Mobility => 1,
            StreamId::VoipForward => 2,
            StreamId::VoipReverse => 3,
            StreamId::Other(n) => 0x1_0000_0000 | n as u64,
        }
    }
}

/// Seeded random stream. The same `(seed, stream)` pair always produces the
/// same sequence, and streams never share state, so adding a consumer does
/// not perturb the draws of existing ones.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.index());
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
