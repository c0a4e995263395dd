use std::sync::Arc;

use super::*;
use crate::geometry::Vec2;
use crate::traffic::{
    CarFollowModel, Edge, Junction, Owner, RoadNetwork, VehicleDemand, VehicleType,
};
use crate::wire::{encode_message, CMD_GET_VEHICLE, CMD_SIMSTEP};

fn network() -> Arc<RoadNetwork> {
    Arc::new(
        RoadNetwork::new(
            vec![
                Junction {
                    id: "a".into(),
                    position: Vec2::new(0.0, 0.0),
                },
                Junction {
                    id: "b".into(),
                    position: Vec2::new(1000.0, 0.0),
                },
            ],
            vec![Edge {
                id: "e".into(),
                from: "a".into(),
                to: "b".into(),
                length: 1000.0,
                speed_limit: 13.9,
                shape: vec![],
                explicit_shape: false,
            }],
            vec![],
        )
        .unwrap(),
    )
}

fn demand(id: &str, depart: f64) -> VehicleDemand {
    VehicleDemand {
        id: id.into(),
        vtype: VehicleType::defaults("car", CarFollowModel::Krauss),
        depart,
        route: vec!["e".into()],
    }
}

fn coordinator(clients: u32, demand: Vec<VehicleDemand>) -> Coordinator {
    let world = World::new(network(), demand, vec![], 100_000).unwrap();
    Coordinator::new(
        world,
        CoordinatorConfig {
            expected_clients: clients,
            end_us: Some(60_000_000),
            record_trajectory: true,
        },
    )
    .unwrap()
}

/// Connects and orders `n` sessions 1..=n.
fn started(n: u32, demand: Vec<VehicleDemand>) -> (Coordinator, Vec<SessionId>) {
    let mut c = coordinator(n, demand);
    let sids: Vec<_> = (1..=n)
        .map(|o| {
            let s = c.connect();
            c.register_order(s, o as i32).unwrap();
            s
        })
        .collect();
    assert!(c.is_started());
    (c, sids)
}

fn single_value(r: &Reaction) -> &TypedValue {
    match r.outgoing[0].commands.as_slice() {
        [Command::Status(s), Command::VehicleValue(v)] if s.is_ok() => &v.value,
        other => panic!("unexpected reply {other:?}"),
    }
}

#[test]
fn zero_clients_rejected() {
    let world = World::new(network(), vec![], vec![], 100_000).unwrap();
    let err = Coordinator::new(
        world,
        CoordinatorConfig {
            expected_clients: 0,
            end_us: None,
            record_trajectory: false,
        },
    )
    .unwrap_err();
    assert_eq!(err, CoordError::InvalidClientCount);
}

#[test]
fn waits_for_all_clients() {
    let mut c = coordinator(2, vec![]);
    let a = c.connect();
    c.register_order(a, 1).unwrap();
    assert!(!c.is_started());
    assert_eq!(c.now_us(), 0);
    assert_eq!(c.client_state(a), Some(ClientState::Ordered));
    let b = c.connect();
    c.register_order(b, 2).unwrap();
    assert!(c.is_started());
    assert_eq!(c.client_state(a), Some(ClientState::Ready));
}

#[test]
fn third_client_admitted() {
    let (c, _) = started(3, vec![]);
    assert_eq!(c.registered_clients(), 3);
}

#[test]
fn duplicate_and_out_of_range_orders() {
    let mut c = coordinator(2, vec![]);
    let a = c.connect();
    c.register_order(a, 1).unwrap();
    let b = c.connect();
    assert_eq!(c.register_order(b, 1), Err(CoordError::DuplicateOrder(1)));
    assert_eq!(
        c.register_order(b, 5),
        Err(CoordError::OutOfRange {
            order: 5,
            expected: 2
        })
    );
    assert!(matches!(
        c.register_order(b, 0),
        Err(CoordError::OutOfRange { .. })
    ));
    assert_eq!(c.register_order(a, 2), Err(CoordError::AlreadyOrdered));
}

#[test]
fn duplicate_order_over_the_wire_closes_connection() {
    let mut c = coordinator(2, vec![]);
    let a = c.connect();
    c.handle_frame(a, &encode_message(&[Command::SetOrder(1)]).unwrap());
    let b = c.connect();
    let r = c.handle_frame(b, &encode_message(&[Command::SetOrder(1)]).unwrap());
    assert_eq!(r.close, vec![b]);
    match r.outgoing[0].commands.as_slice() {
        [Command::Status(s)] => assert!(!s.is_ok() && s.request_id == CMD_SETORDER),
        other => panic!("{other:?}"),
    }
    assert!(!r.finished);
    // the order is still free for a new connection
    let d = c.connect();
    assert!(c.register_order(d, 2).is_ok());
}

#[test]
fn batch_before_start_is_not_started() {
    let mut c = coordinator(2, vec![]);
    let a = c.connect();
    c.register_order(a, 1).unwrap();
    assert_eq!(
        c.submit_batch(a, vec![Command::get_vehicle(var::ID_LIST, "")]),
        Err(CoordError::NotStarted)
    );
}

#[test]
fn wire_batch_before_start_is_held_until_start() {
    let mut c = coordinator(2, vec![]);
    let a = c.connect();
    c.register_order(a, 1).unwrap();
    let r = c.handle_frame(
        a,
        &encode_message(&[Command::get_vehicle(var::ID_LIST, "")]).unwrap(),
    );
    assert!(r.outgoing.is_empty());
    let b = c.connect();
    let r = c.register_order(b, 2).unwrap();
    assert_eq!(r.outgoing.len(), 2);
    assert_eq!(r.outgoing[1].session, a);
}

#[test]
fn empty_world_has_empty_id_list() {
    let (mut c, s) = started(1, vec![]);
    let r = c
        .submit_batch(s[0], vec![Command::get_vehicle(var::ID_LIST, "")])
        .unwrap();
    assert_eq!(single_value(&r), &TypedValue::StringList(vec![]));
}

#[test]
fn read_your_writes_within_a_step() {
    let (mut c, s) = started(2, vec![demand("ego0", 0.0)]);
    let r = c
        .submit_batch(
            s[0],
            vec![
                Command::set_vehicle(var::SPEED, "ego0", TypedValue::Double(7.5)),
                Command::get_vehicle(var::SPEED, "ego0"),
            ],
        )
        .unwrap();
    match r.outgoing[0].commands.as_slice() {
        [Command::Status(a), Command::Status(b), Command::VehicleValue(v)] => {
            assert!(a.is_ok() && b.is_ok());
            assert_eq!(v.value, TypedValue::Double(7.5));
        }
        other => panic!("{other:?}"),
    }
    // another client still sees the committed value
    let r = c
        .submit_batch(s[1], vec![Command::get_vehicle(var::SPEED, "ego0")])
        .unwrap();
    assert_eq!(single_value(&r), &TypedValue::Double(0.0));
}

#[test]
fn set_speed_zero_then_get() {
    let (mut c, s) = started(1, vec![demand("ego0", 0.0)]);
    let r = c
        .submit_batch(
            s[0],
            vec![
                Command::set_vehicle(var::SPEED, "ego0", TypedValue::Double(0.0)),
                Command::get_vehicle(var::SPEED, "ego0"),
            ],
        )
        .unwrap();
    assert_eq!(
        r.outgoing[0].commands[2],
        Command::VehicleValue(VariableValue {
            variable: var::SPEED,
            object: "ego0".into(),
            value: TypedValue::Double(0.0)
        })
    );
}

#[test]
fn single_vote_freezes_time() {
    let (mut c, s) = started(2, vec![demand("v", 0.0)]);
    let r = c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    assert!(r.outgoing.is_empty());
    assert_eq!(c.now_us(), 0);
    assert_eq!(c.client_state(s[0]), Some(ClientState::StepRequested));
    // the other client keeps reading the frozen world
    let r = c
        .submit_batch(s[1], vec![Command::get_vehicle(var::SPEED, "v")])
        .unwrap();
    assert_eq!(single_value(&r), &TypedValue::Double(0.0));
    assert_eq!(c.now_us(), 0);

    let r = c.submit_batch(s[1], vec![Command::SimStep(0.0)]).unwrap();
    assert_eq!(c.now_us(), 100_000);
    let order: Vec<_> = r.outgoing.iter().map(|o| o.session).collect();
    assert_eq!(order, vec![s[0], s[1]]);
    for o in &r.outgoing {
        assert_eq!(
            o.commands,
            vec![Command::Status(StatusResponse::ok(CMD_SIMSTEP))]
        );
    }
    assert!(c.votes().is_empty());
}

#[test]
fn single_client_steps_immediately() {
    let (mut c, s) = started(1, vec![]);
    let r = c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    assert_eq!(r.outgoing.len(), 1);
    assert_eq!(c.now_us(), 100_000);
}

#[test]
fn release_order_follows_execution_order_not_arrival() {
    let (mut c, s) = started(3, vec![]);
    c.submit_batch(s[2], vec![Command::SimStep(0.0)]).unwrap();
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    let r = c.submit_batch(s[1], vec![Command::SimStep(0.0)]).unwrap();
    let order: Vec<_> = r.outgoing.iter().map(|o| o.session).collect();
    assert_eq!(order, s);
}

#[test]
fn duplicate_vote_is_an_error() {
    let (mut c, s) = started(2, vec![]);
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    assert_eq!(
        c.submit_batch(s[0], vec![Command::SimStep(0.0)]),
        Err(CoordError::DuplicateVote(1))
    );
    // a second SIMSTEP inside one batch is answered with an error, not counted
    let r = c
        .submit_batch(s[1], vec![Command::SimStep(0.0), Command::SimStep(0.0)])
        .unwrap();
    match r.outgoing[1].commands.as_slice() {
        [Command::Status(a), Command::Status(b)] => assert!(a.is_ok() && !b.is_ok()),
        other => panic!("{other:?}"),
    }
    assert_eq!(c.now_us(), 100_000);
}

#[test]
fn step_target_must_be_next_boundary() {
    let (mut c, s) = started(1, vec![]);
    let r = c.submit_batch(s[0], vec![Command::SimStep(0.25)]).unwrap();
    assert!(matches!(&r.outgoing[0].commands[0], Command::Status(st) if !st.is_ok()));
    assert_eq!(c.now_us(), 0);
    c.submit_batch(s[0], vec![Command::SimStep(0.1)]).unwrap();
    assert_eq!(c.now_us(), 100_000);
}

#[test]
fn writes_commit_at_barrier() {
    let (mut c, s) = started(2, vec![demand("ego0", 0.0)]);
    c.submit_batch(
        s[1],
        vec![
            Command::set_vehicle(var::CLAIM, "ego0", TypedValue::UByte(1)),
            Command::set_vehicle(var::SPEED, "ego0", TypedValue::Double(5.0)),
            Command::SimStep(0.0),
        ],
    )
    .unwrap();
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    let v = c.world().vehicle("ego0").unwrap();
    assert_eq!(v.owner, Owner::Ego);
    assert_eq!(v.speed, 5.0);
    // ego-owned vehicles are not integrated by the kernel
    assert_eq!(v.lane_pos, 0.0);
}

#[test]
fn inbox_is_delivered_after_barrier() {
    let (mut c, s) = started(2, vec![demand("ego0", 0.0)]);
    let inbox = |c: &mut Coordinator, sid| {
        let r = c
            .submit_batch(sid, vec![Command::get_vehicle(var::V2X_INBOX, "ego0")])
            .unwrap();
        single_value(&r).clone()
    };
    c.submit_batch(
        s[0],
        vec![Command::set_vehicle(
            var::V2X_INBOX,
            "ego0",
            TypedValue::StringList(vec!["bsm".into()]),
        )],
    )
    .unwrap();
    assert_eq!(inbox(&mut c, s[1]), TypedValue::StringList(vec![]));
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    c.submit_batch(s[1], vec![Command::SimStep(0.0)]).unwrap();
    assert_eq!(
        inbox(&mut c, s[1]),
        TypedValue::StringList(vec!["bsm".into()])
    );
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    c.submit_batch(s[1], vec![Command::SimStep(0.0)]).unwrap();
    assert_eq!(inbox(&mut c, s[1]), TypedValue::StringList(vec![]));
}

#[test]
fn traffic_vehicle_cannot_be_moved() {
    let (mut c, s) = started(1, vec![demand("v", 0.0)]);
    let r = c
        .submit_batch(
            s[0],
            vec![Command::set_vehicle(
                var::LANE_POSITION,
                "v",
                TypedValue::Double(10.0),
            )],
        )
        .unwrap();
    assert!(matches!(&r.outgoing[0].commands[0], Command::Status(st) if !st.is_ok()));
}

#[test]
fn unknown_vehicle_get_is_error_status() {
    let (mut c, s) = started(1, vec![]);
    let r = c
        .submit_batch(s[0], vec![Command::get_vehicle(var::SPEED, "ghost")])
        .unwrap();
    match r.outgoing[0].commands.as_slice() {
        [Command::Status(st)] => {
            assert_eq!(st.request_id, CMD_GET_VEHICLE);
            assert!(!st.is_ok() && !st.description.is_empty());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn close_ends_run_and_releases_pending_votes() {
    let (mut c, s) = started(2, vec![]);
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    let r = c.submit_batch(s[1], vec![Command::Close]).unwrap();
    assert!(r.finished);
    assert_eq!(r.outgoing.len(), 2);
    assert_eq!(r.outgoing[1].session, s[0]);
    assert_eq!(
        r.outgoing[1].commands,
        vec![Command::Status(StatusResponse::ok(CMD_SIMSTEP))]
    );
    assert_eq!(r.close.len(), 2);
    assert_eq!(c.end(), Some(&RunEnd::ClosedByClient(2)));
    assert!(c.end().unwrap().is_clean());
}

#[test]
fn close_before_start_exits_without_starting() {
    let mut c = coordinator(2, vec![demand("v", 0.0)]);
    let a = c.connect();
    c.register_order(a, 1).unwrap();
    let r = c.handle_frame(a, &encode_message(&[Command::Close]).unwrap());
    assert!(r.finished);
    assert!(!c.is_started());
    assert_eq!(c.world().vehicle_count(), 0);
}

#[test]
fn eof_mid_run_aborts() {
    let (mut c, s) = started(2, vec![]);
    let r = c.disconnect(s[1]);
    assert!(r.finished);
    match c.end() {
        Some(RunEnd::Aborted(reason)) => assert!(reason.contains("truncated")),
        other => panic!("{other:?}"),
    }
    assert!(c.events().last().unwrap().contains("abort"));
}

#[test]
fn unordered_disconnect_is_ignored() {
    let mut c = coordinator(2, vec![]);
    let a = c.connect();
    let r = c.disconnect(a);
    assert!(!r.finished);
    assert!(!c.is_finished());
}

#[test]
fn malformed_frame_aborts_ordered_client() {
    let (mut c, s) = started(1, vec![]);
    let r = c.handle_frame(s[0], &[0, 0, 0, 6, 2, 0x55]);
    assert!(r.finished);
    match r.outgoing[0].commands.as_slice() {
        [Command::Status(st)] => assert_eq!(st.request_id, 0x55),
        other => panic!("{other:?}"),
    }
}

#[test]
fn second_frame_while_waiting_is_protocol_error() {
    let (mut c, s) = started(2, vec![]);
    c.handle_frame(s[0], &encode_message(&[Command::SimStep(0.0)]).unwrap());
    let r = c.handle_frame(s[0], &encode_message(&[Command::SimStep(0.0)]).unwrap());
    assert!(r.finished);
    assert!(!c.end().unwrap().is_clean());
}

#[test]
fn run_completes_at_end_time() {
    let world = World::new(network(), vec![], vec![], 100_000).unwrap();
    let mut c = Coordinator::new(
        world,
        CoordinatorConfig {
            expected_clients: 1,
            end_us: Some(300_000),
            record_trajectory: false,
        },
    )
    .unwrap();
    let a = c.connect();
    c.register_order(a, 1).unwrap();
    for _ in 0..2 {
        assert!(
            !c.submit_batch(a, vec![Command::SimStep(0.0)])
                .unwrap()
                .finished
        );
    }
    let r = c.submit_batch(a, vec![Command::SimStep(0.0)]).unwrap();
    assert!(r.finished);
    assert_eq!(r.outgoing.len(), 1);
    assert_eq!(c.end(), Some(&RunEnd::Completed));
    assert_eq!(c.now_us(), 300_000);
}

#[test]
fn log_is_sorted_by_order_within_a_step() {
    let run = |first: usize| {
        let (mut c, s) = started(2, vec![demand("v", 0.0)]);
        let second = 1 - first;
        c.submit_batch(s[first], vec![Command::get_vehicle(var::SPEED, "v")])
            .unwrap();
        c.submit_batch(s[second], vec![Command::get_vehicle(var::ID_LIST, "")])
            .unwrap();
        c.submit_batch(s[second], vec![Command::SimStep(0.0)])
            .unwrap();
        c.submit_batch(s[first], vec![Command::SimStep(0.0)])
            .unwrap();
        c.into_report().events
    };
    let a = run(0);
    let b = run(1);
    assert_ne!(a, b, "different commands per order should differ");
    // same per-client batches in a different arrival order give the same log
    let interleaved = {
        let (mut c, s) = started(2, vec![demand("v", 0.0)]);
        c.submit_batch(s[1], vec![Command::get_vehicle(var::ID_LIST, "")])
            .unwrap();
        c.submit_batch(s[0], vec![Command::get_vehicle(var::SPEED, "v")])
            .unwrap();
        c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
        c.submit_batch(s[1], vec![Command::SimStep(0.0)]).unwrap();
        c.into_report().events
    };
    assert_eq!(a, interleaved);
    assert!(a.iter().any(|l| l == "0.000000 1 0x02 VOTE"));
    assert!(a.iter().any(|l| l == "0.100000 server advance step=1"));
}

#[test]
fn trajectory_recorded_each_step() {
    let (mut c, s) = started(1, vec![demand("v", 0.0)]);
    c.submit_batch(s[0], vec![Command::SimStep(0.0)]).unwrap();
    let report = c.into_report();
    assert_eq!(report.trajectory.len(), 2);
    assert_eq!(report.trajectory[1].step, 1);
    assert!((report.trajectory[1].vehicle.speed - 0.26).abs() < 1e-12);
}
