use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rpluw::protocol::*;

#[derive(Debug, Clone)]
enum Step {
    Msg { kind: usize, sender: u32, rank: f64, seq: u16, snr: f64 },
    Timer(usize),
    Link { neighbor: u32, acked: bool },
}

const TIMERS: [TimerKind; 6] = [
    TimerKind::Trickle,
    TimerKind::Linkage,
    TimerKind::Mobility,
    TimerKind::Response,
    TimerKind::DaoRetry,
    TimerKind::DaoRefresh,
];

fn arb_step() -> impl Strategy<Value = Step> {
    prop_oneof![
        4 => (0usize..8, 0u32..6, prop_oneof![Just(0.0), 0.5..20.0f64, Just(f64::INFINITY)], 0u16..8, 0.0..60.0f64)
            .prop_map(|(kind, sender, rank, seq, snr)| Step::Msg { kind, sender, rank, seq, snr }),
        2 => (0usize..6).prop_map(Step::Timer),
        1 => (0u32..6, any::<bool>()).prop_map(|(neighbor, acked)| Step::Link { neighbor, acked }),
    ]
}

fn message(kind: MessageKind, sender: u32, rank: f64, seq: u16, target: u32) -> ControlMessage {
    ControlMessage {
        kind,
        sender_id: sender,
        rank,
        depth_m: 20.0 * sender as f64,
        arssi: 30.0,
        dodag_root_id: 0,
        root_position: [500.0, 500.0, 0.0],
        sequence: seq,
        size_bytes: kind.size_bytes(),
        hop_count: if rank == 0.0 { 0 } else { 1 + sender % 3 },
        residual_energy_j: 40.0,
        target_id: target,
    }
}

/// Drive one node through `steps`, checking invariants after every transition.
fn drive(mode: Mode, steps: &[Step], rng_seed: u64) -> (NodeState, Vec<Transition>) {
    let cfg = ProtocolConfig { mode, ..ProtocolConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut node = NodeState::new_sensor(3, [400.0, 400.0, 150.0], 50.0, mode == Mode::Rpluwm, &cfg);
    let mut out = vec![node.start(0.0, &cfg, &mut rng)];
    let mut now = 0.0;
    for step in steps {
        now += 0.75;
        let t = match *step {
            Step::Msg { kind, sender, rank, seq, snr } => {
                let kind = MessageKind::ALL[kind];
                let rank = if sender == 0 { 0.0 } else { rank };
                let target = if kind == MessageKind::Dao { sender + 10 } else { 0 };
                let msg = message(kind, sender, rank, seq, target);
                node.process_control_message(&msg, RxInfo { snr_db: snr, delay_s: 0.1 }, now, &cfg, &mut rng)
            }
            Step::Timer(i) => {
                let timer = TIMERS[i];
                match node.timers.get(timer) {
                    Some(at) => {
                        now = now.max(at);
                        node.timer_expiry(timer, at, &cfg, &mut rng)
                    }
                    None => node.timer_expiry(timer, now, &cfg, &mut rng),
                }
            }
            Step::Link { neighbor, acked } => node.link_result(neighbor, acked, now, &cfg),
        };
        node.check_invariants(&cfg).unwrap();
        assert!(node.parent_table.len() <= cfg.max_parents);
        assert!(node.trickle.is_valid());
        if let Some(p) = node.preferred_parent_rank() {
            assert!(node.rank > p);
        }
        for o in &t.outbound {
            if mode == Mode::Rpluw {
                assert!(!o.msg.kind.is_neighbor_discovery());
            }
            if o.msg.kind == MessageKind::DaoAck {
                assert!(matches!(step, Step::Msg { kind, .. } if MessageKind::ALL[*kind] == MessageKind::Dao));
            }
        }
        out.push(t);
    }
    (node, out)
}

proptest! {
    #[test]
    fn state_machine_is_deterministic(
        steps in prop::collection::vec(arb_step(), 0..120),
        rpluwm in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mode = if rpluwm { Mode::Rpluwm } else { Mode::Rpluw };
        let (a, ta) = drive(mode, &steps, seed);
        let (b, tb) = drive(mode, &steps, seed);
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta, tb);
    }
}

#[test]
fn root_advertises_at_start() {
    let cfg = ProtocolConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut root = NodeState::new_root(0, [500.0, 500.0, 0.0], 50_000.0, &cfg);
    let t = root.start(0.0, &cfg, &mut rng);
    assert_eq!(t.outbound.len(), 1);
    assert_eq!(t.outbound[0].msg.kind, MessageKind::Dio);
    assert_eq!(t.outbound[0].msg.rank, ROOT_RANK);
    assert_eq!(t.timers[0].at_s, 4.096);
}

#[test]
fn sensor_attaches_to_root_dio() {
    let cfg = ProtocolConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut node = NodeState::new_sensor(5, [500.0, 500.0, 90.0], 50.0, false, &cfg);
    node.start(0.0, &cfg, &mut rng);
    let dio = message(MessageKind::Dio, 0, ROOT_RANK, 1, 0);
    let rx = RxInfo { snr_db: 40.0, delay_s: 0.06 };
    let t = node.process_control_message(&dio, rx, 1.0, &cfg, &mut rng);
    assert!(t.outbound.iter().any(|o| o.msg.kind == MessageKind::Dao && o.dest == Destination::Unicast(0)));
    assert!(!node.is_attached());

    let ack = message(MessageKind::DaoAck, 0, ROOT_RANK, 1, 0);
    node.process_control_message(&ack, rx, 1.2, &cfg, &mut rng);
    assert_eq!(node.preferred_parent_id, Some(0));
    assert!(node.rank > ROOT_RANK && node.rank.is_finite());
    node.check_invariants(&cfg).unwrap();
}
