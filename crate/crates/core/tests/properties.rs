use proptest::prelude::*;

use vhosim::engine::{Module, Scheduler, Target};
use vhosim::harness::{parse_csv, write_csv, MetricsRecord};
use vhosim::ipv6::{Ipv6Address, Prefix};
use vhosim::mipv6::{decapsulate, encapsulate, BindingCache, BindingStatus, BindingUpdate, TunnelHeader};
use vhosim::packet::{Body, Packet};
use vhosim::radio::{rx_power, tractor_position, TractorPath};
use vhosim::traffic::{mos_for, AppPacket, FlowId, FlowKind};
use vhosim::{HandoverScheme, NodeId, SimTime};

fn path(speed: f64, rows: u32) -> TractorPath {
    TractorPath {
        x1: 4.0,
        y1: 0.0,
        x2: 196.0,
        y2: 50.0,
        row_count: rows,
        speed,
    }
}

fn addr() -> impl Strategy<Value = Ipv6Address> {
    (any::<u64>(), any::<u64>()).prop_map(|(p, iid)| Ipv6Address { prefix: Prefix(p), iid })
}

fn app_packet() -> impl Strategy<Value = AppPacket> {
    (0u32..4, any::<u64>(), 1u64..20_000, 0.0..1e4f64, any::<u32>()).prop_map(|(f, seq, bits, t, spurt)| AppPacket {
        flow_id: FlowId(f),
        seq,
        payload_bits: bits,
        sent_at: SimTime::from_secs(t),
        spurt,
    })
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..1e6f64, -1e3..1e3f64, Just(0.1), Just(1.0 / 3.0)]
}

fn record() -> impl Strategy<Value = MetricsRecord> {
    (
        (any::<bool>(), any::<bool>(), finite(), finite(), any::<u64>(), finite(), 0u32..100),
        (any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>()),
        (finite(), proptest::option::of(finite()), finite(), proptest::collection::vec(finite(), 0..12)),
    )
        .prop_map(|((soft, voip, rate, speed, seed, sim_time, ho), (sent, rx, late, lost, fl), (lr, mos, md, gaps))| {
            MetricsRecord {
                scheme: if soft { HandoverScheme::Soft } else { HandoverScheme::Hard },
                application: if voip { FlowKind::Voip } else { FlowKind::Video },
                rate,
                speed,
                seed,
                sim_time,
                handover_count: ho,
                sent,
                received: rx,
                late,
                lost,
                in_flight: fl,
                loss_rate: lr,
                mos,
                mean_delay: md,
                handover_gaps: gaps,
            }
        })
}

proptest! {
    #[test]
    fn tractor_moves_continuously(speed in 0.1..20.0f64, rows in 1u32..8, t in 0.0..5000.0f64, dt in 0.0..0.5f64) {
        let p = path(speed, rows);
        let a = tractor_position(&p, SimTime::from_secs(t));
        let b = tractor_position(&p, SimTime::from_secs(t + dt));
        prop_assert!(a.distance(&b) <= speed * dt + 1e-6);
        prop_assert!((4.0 - 1e-9..=196.0 + 1e-9).contains(&a.x));
        prop_assert!((-1e-9..=50.0 + 1e-9).contains(&a.y));
    }

    #[test]
    fn tractor_round_trip_returns_to_start(speed in 0.5..20.0f64, rows in 1u32..8, k in 1u32..4) {
        let p = path(speed, rows);
        let t = 2.0 * k as f64 * p.pass_length() / speed;
        let pos = tractor_position(&p, SimTime::from_secs(t));
        prop_assert!((pos.x - 4.0).abs() < 1e-6 && pos.y.abs() < 1e-6);
    }

    #[test]
    fn rx_power_decreases_with_distance(d in 1.0..1e5f64, extra in 0.0..1e4f64, f in 1e8..1e10f64, tx in -30.0..30.0f64) {
        prop_assert!(rx_power(tx, d + extra, f, 1.0) <= rx_power(tx, d, f, 1.0));
    }

    #[test]
    fn decapsulation_undoes_encapsulation(src in addr(), dst in addr(), os in addr(), od in addr(), app in app_packet()) {
        let inner = Packet::new(src, dst, Body::App(app));
        let hdr = TunnelHeader { outer_src: os, outer_dst: od };
        let outer = encapsulate(hdr, inner.clone());
        prop_assert_eq!(outer.size_bits(), inner.size_bits() + 320);
        let (h, back) = decapsulate(outer).unwrap();
        prop_assert_eq!(h, hdr);
        prop_assert_eq!(back, inner);
    }

    #[test]
    fn mos_is_monotone(l in 0.0..1.0f64, dl in 0.0..0.5f64, d in 0.0..0.6f64, dd in 0.0..0.3f64) {
        let base = mos_for(l, d).mos;
        prop_assert!((1.0..=4.5).contains(&base));
        prop_assert!(mos_for((l + dl).min(1.0), d).mos <= base + 1e-12);
        prop_assert!(mos_for(l, d + dd).mos <= base + 1e-12);
    }

    #[test]
    fn csv_round_trip(records in proptest::collection::vec(record(), 0..6)) {
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        prop_assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), records.len() + 1);
        prop_assert_eq!(parse_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn scheduler_clock_never_goes_back(
        times in proptest::collection::vec(0.0..100.0f64, 1..60),
        cancel in proptest::collection::vec(any::<bool>(), 60),
        follow in proptest::collection::vec(0.0..5.0f64, 60),
    ) {
        let mut s: Scheduler<usize> = Scheduler::new();
        let tgt = Target::new(NodeId(0), Module::App);
        let mut handles = Vec::new();
        for (i, t) in times.iter().enumerate() {
            handles.push(s.schedule(SimTime::from_secs(*t), tgt, i).unwrap());
        }
        let mut cancelled = 0;
        for (h, c) in handles.iter().zip(&cancel) {
            if *c && s.cancel(*h) {
                cancelled += 1;
            }
        }
        let mut fired: Vec<(SimTime, usize)> = Vec::new();
        let n = times.len();
        s.run_until(SimTime::from_secs(200.0), |s, ev| {
            if ev.payload < n {
                s.schedule_in(follow[ev.payload], tgt, n + ev.payload);
            }
            fired.push((ev.fire_at, ev.payload));
        }).unwrap();
        prop_assert!(fired.windows(2).all(|w| w[0].0 <= w[1].0));
        // Original events at equal times fire in scheduling order.
        for w in fired.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 < n && w[1].1 < n {
                prop_assert!(w[0].1 < w[1].1);
            }
        }
        prop_assert_eq!(fired.len(), 2 * (n - cancelled));
        prop_assert_eq!(s.now(), SimTime::from_secs(200.0));
    }

    #[test]
    fn accepted_sequence_numbers_only_advance(ops in proptest::collection::vec((0u16..12, any::<bool>(), any::<bool>()), 1..40)) {
        let hoa = Ipv6Address { prefix: Prefix(1), iid: 1 };
        let coas = [Ipv6Address { prefix: Prefix(2), iid: 1 }, Ipv6Address { prefix: Prefix(3), iid: 1 }];
        let mut cache = BindingCache::default();
        let mut last: Option<u16> = None;
        for (i, (seq, which, dereg)) in ops.into_iter().enumerate() {
            let bu = BindingUpdate {
                hoa,
                coa: if dereg { hoa } else { coas[which as usize] },
                seq,
                lifetime: if dereg { 0.0 } else { 420.0 },
            };
            let ack = cache.process(&bu, SimTime::from_secs(i as f64));
            if ack.status == BindingStatus::Accepted {
                if let Some(l) = last {
                    prop_assert!(seq >= l);
                }
                last = Some(seq);
                let entry = cache.entries().next().copied();
                if dereg {
                    prop_assert!(entry.is_none());
                } else {
                    prop_assert_eq!(entry.map(|e| e.coa), Some(bu.coa));
                }
            }
            prop_assert!(cache.entries().count() <= 1);
        }
    }
}
