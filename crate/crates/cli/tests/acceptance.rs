//! Acceptance checks, one PASS/FAIL line each. Run with
//! `cargo test -p cosim-cli --test acceptance`; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use clap::Parser;
use cosim_cli::{main_with, Cli, EXIT_OK};
use cosim_core::coordinator::server::Server;
use cosim_core::coordinator::{Coordinator, CoordinatorConfig};
use cosim_core::radio::{
    free_space_path_loss, link_budget, obstacle_loss, AttackSpec, BsmPayload, PacketEvent,
    RadioConfig, RadioKernel, RadioParams, VehicleState,
};
use cosim_core::traffic::{
    CarFollowModel, Connection, Edge, Junction, KernelEvent, VehicleDemand, VehicleType,
};
use cosim_core::wire::{
    client_handshake, decode_requests, encode_message, Command, SessionError, TypedValue,
    VariableQuery, VariableValue,
};
use cosim_core::{load_sumocfg, Owner, Polygon, RoadNetwork, Vec2, World};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;
type Entry = (&'static str, Option<f64>, Box<dyn FnOnce() -> Check>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

// ---- wire ----

fn random_string(rng: &mut StdRng) -> String {
    let len = if rng.random_bool(0.05) {
        rng.random_range(256..300)
    } else {
        rng.random_range(0..12)
    };
    (0..len)
        .map(|_| char::from(rng.random_range(b'a'..=b'z')))
        .collect()
}

fn random_value(rng: &mut StdRng, depth: u32) -> TypedValue {
    match rng.random_range(0..if depth < 2 { 7 } else { 6 }) {
        0 => TypedValue::UByte(rng.random()),
        1 => TypedValue::Int(rng.random()),
        2 => TypedValue::Double(rng.random_range(-1e9..1e9)),
        3 => TypedValue::String(random_string(rng)),
        4 => TypedValue::StringList(
            (0..rng.random_range(0..4))
                .map(|_| random_string(rng))
                .collect(),
        ),
        5 => TypedValue::Position2D(rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4)),
        _ => TypedValue::Compound(
            (0..rng.random_range(0..4))
                .map(|_| random_value(rng, depth + 1))
                .collect(),
        ),
    }
}

fn random_command(rng: &mut StdRng) -> Command {
    let query = |rng: &mut StdRng| VariableQuery {
        variable: rng.random(),
        object: random_string(rng),
    };
    let value = |rng: &mut StdRng| VariableValue {
        variable: rng.random(),
        object: random_string(rng),
        value: random_value(rng, 0),
    };
    match rng.random_range(0..7) {
        0 => Command::SetOrder(rng.random()),
        1 => Command::SimStep(rng.random_range(0.0..1e6)),
        2 => Command::GetVehicle(query(rng)),
        3 => Command::SetVehicle(value(rng)),
        4 => Command::GetTls(query(rng)),
        5 => Command::SetTls(value(rng)),
        _ => Command::Close,
    }
}

fn wire_round_trip() -> Check {
    let mut rng = StdRng::seed_from_u64(1);
    for i in 0..1000 {
        let batch: Vec<Command> = (0..rng.random_range(0..8))
            .map(|_| random_command(&mut rng))
            .collect();
        let bytes = encode_message(&batch).map_err(|e| e.to_string())?;
        let back = decode_requests(&bytes).map_err(|e| format!("batch {i}: {e}"))?;
        ensure(back.commands == batch && back.remainder.is_empty(), || {
            format!("batch {i} differs")
        })?;
    }
    let golden = encode_message(&[Command::SetOrder(2)]).map_err(|e| e.to_string())?;
    ensure(golden == [0, 0, 0, 0x0A, 0x06, 0x03, 0, 0, 0, 2], || {
        format!("SETORDER(2) = {golden:02x?}")
    })?;
    Ok("1000 batches round-trip; SETORDER(2) = 00 00 00 0A 06 03 00 00 00 02".into())
}

// ---- barrier ----

fn corridor_server(end_s: f64) -> Result<Server, String> {
    let bundle =
        load_sumocfg(&repo("scenarios/corridor/corridor.sumocfg")).map_err(|e| e.to_string())?;
    let world = World::new(
        Arc::clone(&bundle.network),
        bundle.demand.vehicles.clone(),
        bundle.programs.clone(),
        bundle.step_us(),
    )
    .map_err(|e| e.to_string())?;
    let coordinator = Coordinator::new(
        world,
        CoordinatorConfig {
            expected_clients: 2,
            end_us: Some((end_s * 1e6) as u64),
            record_trajectory: false,
        },
    )
    .map_err(|e| e.to_string())?;
    Server::bind("127.0.0.1:0", coordinator, Duration::from_secs(10)).map_err(|e| e.to_string())
}

/// Reads the vehicle list and votes, pausing `delay(step)` first, until the
/// server closes the session. Returns how long each vote blocked.
fn stepping_client(
    addr: std::net::SocketAddr,
    order: u32,
    mut delay: impl FnMut(u64) -> Duration,
) -> Result<Vec<Duration>, String> {
    let stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let mut session = client_handshake(stream, order).map_err(|e| e.to_string())?;
    let mut waits = Vec::new();
    for step in 0.. {
        thread::sleep(delay(step));
        match session.vehicle_ids() {
            Ok(_) => {}
            Err(SessionError::Closed) => break,
            Err(e) => return Err(e.to_string()),
        }
        let t = Instant::now();
        match session.simulation_step() {
            Ok(()) => waits.push(t.elapsed()),
            Err(SessionError::Closed) => break,
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(waits)
}

/// Splits an event log into per-step windows ended by `advance` lines.
fn windows(events: &[String]) -> Vec<Vec<&str>> {
    let mut out = vec![Vec::new()];
    for line in events {
        if line.contains(" server advance ") {
            out.push(Vec::new());
        } else {
            out.last_mut().unwrap().push(line.as_str());
        }
    }
    out
}

fn barrier_run(seed: u64) -> Result<Vec<String>, String> {
    let server = corridor_server(20.0)?;
    let addr = server.local_addr();
    let srv = thread::spawn(move || server.run());
    let clients: Vec<_> = [1u32, 2]
        .into_iter()
        .map(|order| {
            let mut rng = StdRng::seed_from_u64(seed * 10 + u64::from(order));
            thread::spawn(move || {
                stepping_client(addr, order, |_| {
                    Duration::from_millis(rng.random_range(0..=50))
                })
            })
        })
        .collect();
    for c in clients {
        c.join().map_err(|_| "client panicked")??;
    }
    let report = srv.join().map_err(|_| "server panicked")?;
    Ok(report.events)
}

fn barrier_semantics() -> Check {
    // five repetitions with different delay draws, run side by side
    let runs: Vec<_> = (0..5u64)
        .map(|rep| thread::spawn(move || barrier_run(rep)))
        .collect();
    let mut logs = Vec::new();
    for r in runs {
        logs.push(r.join().map_err(|_| "run panicked")??);
    }
    let log = &logs[0];
    let advances = log
        .iter()
        .filter(|l| l.contains(" server advance "))
        .count();
    ensure(advances == 200, || {
        format!("{advances} advances, expected 200")
    })?;
    for (step, w) in windows(log).iter().enumerate().take(200) {
        for order in ["1", "2"] {
            let votes = w
                .iter()
                .filter(|l| l.split(' ').nth(1) == Some(order) && l.ends_with("0x02 VOTE"))
                .count();
            ensure(votes == 1, || {
                format!("step {step}: client {order} cast {votes} votes before advance")
            })?;
        }
    }
    for (i, other) in logs.iter().enumerate().skip(1) {
        ensure(other == log, || format!("repetition {i} log differs"))?;
    }
    Ok(format!(
        "200 steps, 2 votes before every advance, {} log lines identical x5",
        log.len()
    ))
}

fn freeze_semantics() -> Check {
    let server = corridor_server(8.0)?;
    let addr = server.local_addr();
    let srv = thread::spawn(move || server.run());
    let fast = thread::spawn(move || stepping_client(addr, 1, |_| Duration::ZERO));
    let slow = thread::spawn(move || {
        stepping_client(addr, 2, |step| {
            if step == 50 {
                Duration::from_secs(1)
            } else {
                Duration::ZERO
            }
        })
    });
    let waits = fast.join().map_err(|_| "client panicked")??;
    slow.join().map_err(|_| "client panicked")??;
    let report = srv.join().map_err(|_| "server panicked")?;

    let blocked = waits[50];
    ensure(blocked >= Duration::from_millis(900), || {
        format!("client 1 blocked only {blocked:?} at step 50")
    })?;
    let stall = &windows(&report.events)[50];
    for line in stall {
        ensure(line.starts_with("5.000000 "), || {
            format!("line during stall: {line}")
        })?;
    }
    let votes = stall.iter().filter(|l| l.ends_with("0x02 VOTE")).count();
    ensure(votes == 2, || format!("{votes} votes in the stalled step"))?;
    ensure(
        report
            .events
            .iter()
            .any(|l| l == "5.100000 server advance step=51"),
        || "no advance to step 51".into(),
    )?;
    Ok(format!(
        "client 1 blocked {:.2} s at t=5.0; no line after 5.0 before both votes",
        blocked.as_secs_f64()
    ))
}

// ---- traffic ----

fn straight(len: f64, limit: f64) -> Result<Arc<RoadNetwork>, String> {
    let j = |id: &str, x: f64| Junction {
        id: id.into(),
        position: Vec2::new(x, 0.0),
    };
    let e = |id: &str, from: &str, to: &str| Edge {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        length: len,
        speed_limit: limit,
        shape: vec![],
        explicit_shape: false,
    };
    RoadNetwork::new(
        vec![j("a", 0.0), j("b", len), j("c", 2.0 * len)],
        vec![e("e1", "a", "b"), e("e2", "b", "c")],
        vec![Connection {
            from: "e1".into(),
            to: "e2".into(),
            signal: None,
        }],
    )
    .map(Arc::new)
    .map_err(|e| e.to_string())
}

fn demand(id: &str, vtype: &VehicleType) -> VehicleDemand {
    VehicleDemand {
        id: id.into(),
        vtype: vtype.clone(),
        depart: 0.0,
        route: vec!["e1".into(), "e2".into()],
    }
}

/// Moves an externally driven vehicle one 0.1 s step at `speed`.
fn drive(w: &mut World, id: &str, speed: f64) -> Result<(), String> {
    let pos = w.vehicle(id).ok_or("no such vehicle")?.lane_pos;
    w.set_speed(id, speed).map_err(|e| e.to_string())?;
    w.set_lane_position(id, pos + speed * 0.1)
        .map(|_| ())
        .map_err(|e| e.to_string())
}

fn krauss_safety() -> Check {
    let car = VehicleType::defaults("car", CarFollowModel::Krauss);
    let mut w =
        World::new(straight(5000.0, 13.9)?, vec![], vec![], 100_000).map_err(|e| e.to_string())?;
    let v0 = 13.9;
    let spacing = car.length + car.min_gap + v0 * car.tau;
    for i in 0..10 {
        let owner = if i == 0 { Owner::Ego } else { Owner::Traffic };
        w.spawn(
            demand(&format!("v{i}"), &car),
            0,
            1000.0 - i as f64 * spacing,
            v0,
            owner,
        )
        .map_err(|e| e.to_string())?;
    }
    let mut lead = v0;
    let mut min_gap = f64::INFINITY;
    for step in 0..600 {
        if step >= 50 {
            lead = (lead - 4.5 * 0.1).max(0.0);
        }
        drive(&mut w, "v0", lead)?;
        let events = w.step_world(100_000).map_err(|e| e.to_string())?;
        ensure(
            !events
                .iter()
                .any(|e| matches!(e, KernelEvent::Collision { .. })),
            || format!("collision at step {step}"),
        )?;
        for id in w.vehicle_ids() {
            if let Some(l) = w.leader(&id) {
                min_gap = min_gap.min(l.gap);
            }
        }
    }
    ensure(min_gap > 0.0, || format!("min gap {min_gap}"))?;
    Ok(format!(
        "10 vehicles, 600 steps, min bumper gap {min_gap:.3} m"
    ))
}

fn idm_equilibrium() -> Check {
    // s_eq = (s0 + v T) / sqrt(1 - (v/v0)^4) with v=20, v0=30, T=1.5, s0=2
    let r = 20.0f64 / 30.0;
    let expected = (2.0 + 20.0 * 1.5) / (1.0 - r * r * r * r).sqrt();
    ensure((expected - 288.0 / 65f64.sqrt()).abs() < 1e-12, || {
        "formula".into()
    })?;
    let follower = VehicleType {
        accel: 1.0,
        decel: 1.5,
        tau: 1.5,
        min_gap: 2.0,
        delta: 4.0,
        desired_speed: Some(30.0),
        max_speed: 30.0,
        ..VehicleType::defaults("idm", CarFollowModel::Idm)
    };
    let lead = VehicleType::defaults("lead", CarFollowModel::Krauss);
    let mut w = World::new(straight(50_000.0, 40.0)?, vec![], vec![], 100_000)
        .map_err(|e| e.to_string())?;
    w.spawn(demand("lead", &lead), 0, 100.0, 20.0, Owner::Ego)
        .map_err(|e| e.to_string())?;
    w.spawn(demand("f", &follower), 0, 10.0, 20.0, Owner::Traffic)
        .map_err(|e| e.to_string())?;
    for _ in 0..3000 {
        drive(&mut w, "lead", 20.0)?;
        w.step_world(100_000).map_err(|e| e.to_string())?;
    }
    // measured where the follower plans: after the leader's move
    drive(&mut w, "lead", 20.0)?;
    let gap = w.leader("f").ok_or("no leader")?.gap;
    let err = (gap - expected).abs() / expected;
    ensure(err < 0.01, || format!("gap {gap:.3} vs {expected:.3}"))?;
    Ok(format!(
        "settled gap {gap:.3} m vs s_eq {expected:.3} m ({:.3}%)",
        err * 100.0
    ))
}

// ---- radio ----

type Rect = [f64; 4];

fn rect_polygon(i: usize, r: &Rect) -> Polygon {
    Polygon {
        id: format!("p{i}"),
        vertices: vec![
            Vec2::new(r[0], r[1]),
            Vec2::new(r[2], r[1]),
            Vec2::new(r[2], r[3]),
            Vec2::new(r[0], r[3]),
        ],
    }
}

/// Liang-Barsky: parameter interval of a-b inside the box.
fn clip(a: Vec2, b: Vec2, r: &Rect) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.x - r[0]),
        (dx, r[2] - a.x),
        (-dy, a.y - r[1]),
        (dy, r[3] - a.y),
    ] {
        if p == 0.0 {
            if q <= 0.0 {
                return None;
            }
        } else if p < 0.0 {
            t0 = t0.max(q / p);
        } else {
            t1 = t1.min(q / p);
        }
    }
    (t1 > t0).then_some((t0, t1))
}

fn oracle_rx(a: Vec2, b: Vec2, rects: &[Rect]) -> f64 {
    let d = a.distance(b);
    let pl = 20.0 * d.max(1.0).log10() + 20.0 * 5.9e9f64.log10() - 147.55;
    let mut loss = 0.0;
    for r in rects {
        if let Some((t0, t1)) = clip(a, b, r) {
            loss += 9.0 * f64::from(u8::from(t0 > 0.0) + u8::from(t1 < 1.0)) + 0.4 * (t1 - t0) * d;
        }
    }
    23.0 - pl - loss
}

fn radio_budget() -> Check {
    let pl = free_space_path_loss(100.0, 5.9e9);
    ensure((pl - 87.87).abs() <= 0.01, || format!("PL(100 m) = {pl}"))?;

    let (a, b) = (Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0));
    let r = [45.0, -5.0, 55.0, 5.0];
    let samples = 100_000;
    let inside = (0..samples)
        .filter(|i| {
            let p = a.lerp(b, (f64::from(*i) + 0.5) / f64::from(samples));
            p.x > r[0] && p.x < r[2] && p.y > r[1] && p.y < r[3]
        })
        .count() as f64
        / f64::from(samples)
        * 100.0;
    ensure((9.0 * 2.0 + 0.4 * inside - 22.0).abs() < 1e-2, || {
        format!("sampled interior {inside}")
    })?;
    let loss = obstacle_loss(a, b, &[rect_polygon(0, &r)], &RadioParams::default());
    ensure(
        loss.walls == 2 && (loss.loss_db - 22.0).abs() < 1e-9,
        || format!("{loss:?}"),
    )?;
    let budget = link_budget(a, b, 23.0, &[rect_polygon(0, &r)], &RadioParams::default());
    ensure(
        (budget.rx_power_dbm - (23.0 - pl - 22.0)).abs() < 1e-9,
        || format!("{budget:?}"),
    )?;

    let mut rng = StdRng::seed_from_u64(7);
    let (mut fixtures, mut links) = (0, 0);
    while fixtures < 500 {
        let pt = |rng: &mut StdRng| {
            Vec2::new(
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
            )
        };
        let nodes: Vec<Vec2> = (0..rng.random_range(1..=5)).map(|_| pt(&mut rng)).collect();
        let rects: Vec<Rect> = (0..rng.random_range(0..=3))
            .map(|_| {
                let (x, y) = (
                    rng.random_range(-250.0..250.0),
                    rng.random_range(-250.0..250.0),
                );
                [
                    x,
                    y,
                    x + rng.random_range(2.0..80.0),
                    y + rng.random_range(2.0..80.0),
                ]
            })
            .collect();
        let mut expected = BTreeSet::new();
        let mut tie = false;
        for (i, p) in nodes.iter().enumerate() {
            for (j, q) in nodes.iter().enumerate() {
                if i != j {
                    let rx = oracle_rx(*p, *q, &rects);
                    tie |= (rx + 89.0).abs() < 1e-6;
                    if rx >= -89.0 {
                        expected.insert((format!("n{i}"), format!("n{j}")));
                    }
                }
            }
        }
        if tie {
            continue;
        }
        let vehicles: Vec<VehicleState> = nodes
            .iter()
            .enumerate()
            .map(|(i, p)| VehicleState {
                id: format!("n{i}"),
                position: *p,
                speed: 0.0,
                heading: 0.0,
            })
            .collect();
        let polys = rects
            .iter()
            .enumerate()
            .map(|(i, r)| rect_polygon(i, r))
            .collect();
        let mut k = RadioKernel::new(RadioConfig::default(), polys, &[], &[], 1, 100_000);
        k.step(0, &vehicles).map_err(|e| e.to_string())?;
        let got: BTreeSet<(String, String)> = k
            .packets()
            .iter()
            .filter(|p| p.event == PacketEvent::Received)
            .map(|p| (p.sender.clone(), p.receiver.clone().unwrap_or_default()))
            .collect();
        ensure(got == expected, || {
            format!("fixture {fixtures}: {got:?} vs {expected:?}")
        })?;
        links += expected.len();
        fixtures += 1;
    }
    Ok(format!(
        "PL(100 m) = {pl:.4} dB; 10 m box adds {:.1} dB; 500 fixtures ({links} links) match",
        loss.loss_db
    ))
}

// ---- end to end ----

fn cosim(args: &[&str]) -> Result<String, String> {
    let cli = Cli::try_parse_from(std::iter::once("cosim").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(cli, &mut out, &mut err);
    if code != EXIT_OK {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn fcw_run(out: &Path, extra: &[&str]) -> Result<(), String> {
    let cfg = repo("scenarios/fcw/fcw.sumocfg");
    let mut args = vec![
        "run",
        cfg.to_str().unwrap(),
        "--port",
        "0",
        "--ego-ids",
        "ego",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    cosim(&args).map(|_| ())
}

fn scalars(dir: &Path) -> Result<BTreeMap<String, f64>, String> {
    let text = std::fs::read_to_string(dir.join("result.sca")).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| {
            let f: Vec<&str> = l.split(' ').collect();
            Some((format!("{}.{}", f[0], f[1]), f.get(2)?.parse().ok()?))
        })
        .collect())
}

fn read(dir: &Path, name: &str) -> Result<String, String> {
    std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))
}

fn closed_loop_fcw(tmp: &Path) -> Check {
    let (on, off) = (tmp.join("fcw-on"), tmp.join("fcw-off"));
    fcw_run(&on, &["--radio", "on"])?;
    fcw_run(&off, &["--radio", "off"])?;
    let (s_on, s_off) = (scalars(&on)?, scalars(&off)?);
    let gap = |s: &BTreeMap<String, f64>| {
        s.get("traffic.min_gap.ego")
            .copied()
            .ok_or("no min_gap.ego scalar")
    };
    let (g_on, g_off) = (gap(&s_on)?, gap(&s_off)?);
    ensure(g_on > g_off, || {
        format!("min gap on {g_on:.3} <= off {g_off:.3}")
    })?;
    ensure(!read(&on, "events.log")?.contains(" collision "), || {
        "collision with radio on".into()
    })?;
    Ok(format!(
        "min gap on {g_on:.3} m > off {g_off:.3} m; no collision with radio on"
    ))
}

fn attack_plumbing(tmp: &Path) -> Check {
    let dir = tmp.join("sybil");
    let sybil = repo("scenarios/attacks/sybil.toml");
    fcw_run(&dir, &["--attack", sybil.to_str().unwrap()])?;
    let packets = read(&dir, "packets.csv")?;
    let flagged = packets
        .lines()
        .filter(|l| l.contains(",sent,") && l.ends_with(",1"))
        .count();
    ensure(flagged == 500, || format!("{flagged} attack-flagged BSMs"))?;

    let replay = AttackSpec::Replay {
        victim: "lead".into(),
        capture_start: 3.0,
        capture_end: 3.0,
        delay: 2.0,
        position: None,
    };
    let mut k = RadioKernel::new(RadioConfig::default(), vec![], &[], &[replay], 42, 100_000);
    let mut stale = Vec::new();
    for step in 0..60u64 {
        let at = |id: &str, x: f64| VehicleState {
            id: id.into(),
            position: Vec2::new(x, 0.0),
            speed: 10.0,
            heading: 90.0,
        };
        let inbox = k
            .step(
                step,
                &[at("lead", step as f64), at("ego", step as f64 - 20.0)],
            )
            .map_err(|e| e.to_string())?;
        for p in inbox.get("ego").into_iter().flatten() {
            let bsm = BsmPayload::decode(p).ok_or("undecodable payload")?;
            if bsm.timestamp_us != step * 100_000 {
                stale.push((step, bsm.timestamp_us));
            }
        }
    }
    ensure(stale == [(50, 3_000_000)], || {
        format!("replayed deliveries {stale:?}")
    })?;
    Ok("sybil: 500 flagged BSMs; replay: payload t=3.0 s delivered at t=5.0 s".into())
}

fn determinism(tmp: &Path) -> Check {
    let (a, b) = (tmp.join("det-a"), tmp.join("det-b"));
    fcw_run(&a, &[])?;
    fcw_run(&b, &[])?;
    let files = [
        "events.log",
        "packets.csv",
        "ego.csv",
        "result.sca",
        "result.vec",
    ];
    for f in files {
        ensure(read(&a, f)? == read(&b, f)?, || format!("{f} differs"))?;
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path().to_path_buf();
    let t2 = t.clone();
    let t3 = t.clone();
    let checks: Vec<Entry> = vec![
        ("wire-round-trip", Some(5.0), Box::new(wire_round_trip)),
        ("barrier-semantics", Some(30.0), Box::new(barrier_semantics)),
        ("freeze-semantics", None, Box::new(freeze_semantics)),
        ("krauss-safety", Some(5.0), Box::new(krauss_safety)),
        ("idm-equilibrium", Some(10.0), Box::new(idm_equilibrium)),
        ("radio-budget", None, Box::new(radio_budget)),
        (
            "closed-loop-fcw",
            Some(20.0),
            Box::new(move || closed_loop_fcw(&t)),
        ),
        (
            "attack-plumbing",
            None,
            Box::new(move || attack_plumbing(&t2)),
        ),
        (
            "end-to-end-determinism",
            None,
            Box::new(move || determinism(&t3)),
        ),
    ];
    let mut failed = 0;
    for (name, limit, check) in checks {
        let start = Instant::now();
        let mut result = check();
        let secs = start.elapsed().as_secs_f64();
        if let (Ok(_), Some(max)) = (&result, limit) {
            if secs >= max {
                result = Err(format!("took {secs:.2} s, limit {max} s"));
            }
        }
        let budget = limit.map(|m| format!(" < {m} s")).unwrap_or_default();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2} s{budget}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.2} s{budget}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
