use std::collections::{BTreeMap, BTreeSet};

use rpluw::protocol::Mode;
use rpluw::sim::energy::pj_to_joules;
use rpluw::sim::{run_scenario, RunOutput, Scenario};
use rpluw::trace::{TraceKind, TraceRecord};

fn scenario(seed: u64, mode: Mode) -> Scenario {
    Scenario { seed, mode, sim_duration_s: 300.0, ..Scenario::default() }
}

fn run(s: &Scenario) -> RunOutput {
    run_scenario(s).expect("valid scenario")
}

fn is_frame_activity(r: &TraceRecord) -> bool {
    matches!(r.kind, TraceKind::Tx | TraceKind::Rx | TraceKind::RxLost | TraceKind::Fwd | TraceKind::Deliver)
}

#[test]
fn dao_ack_only_answers_a_dao() {
    let mut acks = 0;
    for mode in [Mode::Rpluw, Mode::Rpluwm] {
        for seed in 1..=4 {
            let out = run(&scenario(seed, mode));
            let mut heard: BTreeSet<(u32, u32)> = BTreeSet::new();
            for r in &out.trace {
                match (r.kind, r.label()) {
                    (TraceKind::Rx, "DAO") => {
                        heard.insert((r.node, r.peer.unwrap()));
                    }
                    (TraceKind::Tx, "DAO-ACK") => {
                        acks += 1;
                        let child = r.peer.expect("DAO-ACK is unicast");
                        assert!(heard.contains(&(r.node, child)), "unpaired DAO-ACK: {r}");
                    }
                    _ => {}
                }
            }
        }
    }
    assert!(acks > 0);
}

#[test]
fn static_mode_emits_no_neighbor_discovery() {
    for seed in 1..=4 {
        let s = Scenario { mobile_fraction: 0.0, ..scenario(seed, Mode::Rpluw) };
        let out = run(&s);
        let nd = out
            .trace
            .iter()
            .filter(|r| matches!(r.kind, TraceKind::Tx | TraceKind::Rx | TraceKind::RxLost))
            .filter(|r| matches!(r.label(), "NS" | "NA" | "RS" | "RA"))
            .count();
        assert_eq!(nd, 0);
    }
    let out = run(&scenario(1, Mode::Rpluwm));
    assert!(out.trace.iter().any(|r| r.kind == TraceKind::Tx && r.label() == "RS"));
}

#[test]
fn same_seed_same_bytes() {
    let s = scenario(7, Mode::Rpluwm);
    let a = run(&s);
    let b = run(&s);
    assert_eq!(a.trace_text(), b.trace_text());
    assert_eq!(a.report, b.report);
    let c = run(&Scenario { seed: 8, ..s });
    assert_ne!(a.trace_text(), c.trace_text());
}

#[test]
fn clock_never_runs_backwards() {
    let out = run(&scenario(2, Mode::Rpluwm));
    assert!(out.trace.windows(2).all(|w| w[0].time_s <= w[1].time_s));
}

#[test]
fn energy_ledger_balances() {
    for seed in 1..=3 {
        let s = Scenario { initial_node_energy_j: 3.0, ..scenario(seed, Mode::Rpluwm) };
        let out = run(&s);
        for n in &out.nodes {
            assert!(n.energy.balanced(), "node {}", n.node_id);
            let lhs = pj_to_joules(n.energy.initial_pj) - pj_to_joules(n.energy.total_debits_pj());
            assert!((lhs - n.energy.residual_j()).abs() <= 1e-9);
        }
    }
}

#[test]
fn dead_nodes_stay_silent() {
    let s = Scenario { initial_node_energy_j: 2.0, ..scenario(3, Mode::Rpluwm) };
    let out = run(&s);
    let deaths: BTreeMap<u32, f64> =
        out.trace.iter().filter(|r| r.kind == TraceKind::Death).map(|r| (r.node, r.time_s)).collect();
    assert!(!deaths.is_empty(), "scenario should exhaust some batteries");
    for r in out.trace.iter().filter(|r| is_frame_activity(r)) {
        if let Some(&t) = deaths.get(&r.node) {
            assert!(r.time_s <= t, "node {} active after death at {t}: {r}", r.node);
        }
    }
    assert_eq!(out.report.alive_node_count + deaths.len(), s.node_count);
    assert_eq!(out.report.first_death_s, deaths.values().copied().min_by(f64::total_cmp));
}

#[test]
fn positions_stay_in_the_box() {
    let s = Scenario { mobile_fraction: 1.0, speed_range_mps: (4.0, 5.0), ..scenario(4, Mode::Rpluwm) };
    let out = run(&s);
    let mut seen = 0;
    for r in out.trace.iter().filter(|r| r.kind == TraceKind::Pos) {
        let p: Vec<f64> = r.detail.split_whitespace().map(|v| v.parse().unwrap()).collect();
        for (x, hi) in p.iter().zip(s.area) {
            assert!((0.0..=hi).contains(x), "{r}");
        }
        seen += 1;
    }
    assert!(seen > 0);
    for n in &out.nodes {
        for (x, hi) in n.final_position.iter().zip(s.area) {
            assert!((0.0..=hi).contains(x));
        }
    }
}

#[test]
fn delivered_packets_have_positive_delay() {
    for seed in 1..=3 {
        let out = run(&scenario(seed, Mode::Rpluwm));
        let mut sent: BTreeMap<(String, String), f64> = BTreeMap::new();
        for r in &out.trace {
            match r.kind {
                TraceKind::Gen => {
                    sent.insert((r.field("origin").unwrap().into(), r.field("seq").unwrap().into()), r.time_s);
                }
                TraceKind::Deliver => {
                    let key = (r.field("origin").unwrap().into(), r.field("seq").unwrap().into());
                    let t0 = sent[&key];
                    assert!(r.time_s > t0);
                    let d: f64 = r.field("delay").unwrap().parse().unwrap();
                    assert!(d > 0.0);
                }
                _ => {}
            }
        }
        if let Some(m) = out.report.mean_e2e_delay_s {
            assert!(m > 0.0);
        }
    }
}

#[test]
fn safety_holds_on_short_runs() {
    for mode in [Mode::Rpluw, Mode::Rpluwm] {
        for seed in 1..=5 {
            let out = run(&scenario(seed, mode));
            assert!(out.safety.is_safe(), "{mode:?} seed {seed}: {:?}", out.safety);
            assert!(out.safety.max_parent_table <= 4);
            assert!(out.trace.iter().all(|r| r.kind != TraceKind::Violation));
        }
    }
}

#[test]
fn report_validates_and_counts_agree() {
    let out = run(&scenario(5, Mode::Rpluwm));
    out.report.validate().unwrap();
    let gen = out.trace.iter().filter(|r| r.kind == TraceKind::Gen).count() as u64;
    let del = out.trace.iter().filter(|r| r.kind == TraceKind::Deliver).count() as u64;
    assert_eq!(out.report.data_sent, gen);
    assert_eq!(out.report.data_delivered, del);
}

#[test]
fn trace_lines_round_trip() {
    let out = run(&scenario(6, Mode::Rpluwm));
    for line in out.trace_text().lines().take(2000) {
        let r: TraceRecord = line.parse().unwrap();
        assert_eq!(r.to_string(), line);
    }
}
