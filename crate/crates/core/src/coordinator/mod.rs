//! Lockstep barrier: admits a fixed number of ordered clients, serves their
//! get/set batches against the frozen world and advances the traffic kernel
//! once every live client has voted with SIMSTEP.
//!
//! [`Coordinator`] is the I/O-free state machine; [`server`] puts it behind a
//! TCP listener.
//!
//! Reads see the world as of the last barrier plus the reading client's own
//! writes from the current step. Writes are committed at the barrier in
//! ascending client order, so no client observes another's writes before the
//! step they belong to has closed. Log lines produced while serving a step are
//! buffered per client and emitted in ascending order, which makes the event
//! log independent of network timing.

mod log;
pub mod server;

pub use log::{event_line, render_trajectory, Actor, TrajectoryRow, TRAJECTORY_HEADER};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::scenario::ResultStore;
use crate::time::{seconds_to_us, us_to_seconds};
use crate::traffic::{KernelError, KernelEvent, World};
use crate::wire::{
    decode_requests, var, Command, StatusResponse, TypedValue, VariableQuery, VariableValue,
    WireError, CMD_CLOSE, CMD_SETORDER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordError {
    #[error("expected client count must be at least 1")]
    InvalidClientCount,
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("execution order {0} is already taken")]
    DuplicateOrder(u32),
    #[error("execution order {order} outside 1..={expected}")]
    OutOfRange { order: i64, expected: u32 },
    #[error("session already has an execution order")]
    AlreadyOrdered,
    #[error("session has no execution order")]
    NotOrdered,
    #[error("simulation has not started")]
    NotStarted,
    #[error("client {0} already voted in this step")]
    DuplicateVote(u32),
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("run has finished")]
    Finished,
}

/// Connection handle assigned by [`Coordinator::connect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientState {
    Connected,
    Ordered,
    Ready,
    StepRequested,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunEnd {
    /// End time reached, or all demand has left the network.
    Completed,
    ClosedByClient(u32),
    Aborted(String),
}

impl RunEnd {
    pub fn is_clean(&self) -> bool {
        !matches!(self, RunEnd::Aborted(_))
    }
}

/// A reply frame for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub session: SessionId,
    pub commands: Vec<Command>,
}

/// What the transport must do after an input: write `outgoing` in order,
/// then close the listed sessions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reaction {
    pub outgoing: Vec<Output>,
    pub close: Vec<SessionId>,
    pub finished: bool,
}

impl Reaction {
    fn absorb(&mut self, other: Reaction) {
        self.outgoing.extend(other.outgoing);
        self.close.extend(other.close);
        self.finished |= other.finished;
    }
}

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    pub expected_clients: u32,
    /// Stop once the clock reaches this time; `None` stops when all demand has
    /// been inserted and has arrived.
    pub end_us: Option<u64>,
    pub record_trajectory: bool,
}

#[derive(Debug, Clone)]
enum WriteOp {
    Claim(String),
    Speed(String, f64),
    LanePosition(String, f64),
    TlsState(String, String),
}

#[derive(Debug)]
struct Session {
    order: Option<u32>,
    state: ClientState,
    held: VecDeque<Vec<Command>>,
    deferred: Option<Vec<Command>>,
    /// Committed world plus this session's writes in the current step.
    shadow: Option<World>,
    ops: Vec<WriteOp>,
    mail: BTreeMap<String, Vec<String>>,
    step_log: Vec<String>,
}

impl Session {
    fn new() -> Self {
        Self {
            order: None,
            state: ClientState::Connected,
            held: VecDeque::new(),
            deferred: None,
            shadow: None,
            ops: Vec::new(),
            mail: BTreeMap::new(),
            step_log: Vec::new(),
        }
    }
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct RunReport {
    pub end: RunEnd,
    pub events: Vec<String>,
    pub trajectory: Vec<TrajectoryRow>,
    pub results: ResultStore,
    pub world: World,
}

#[derive(Debug)]
pub struct Coordinator {
    config: CoordinatorConfig,
    world: World,
    sessions: BTreeMap<SessionId, Session>,
    orders: BTreeMap<u32, SessionId>,
    next_session: u64,
    started: bool,
    votes: BTreeSet<u32>,
    inbox: BTreeMap<String, Vec<String>>,
    handshakes: BTreeMap<u32, String>,
    events: Vec<String>,
    trajectory: Vec<TrajectoryRow>,
    results: ResultStore,
    end: Option<RunEnd>,
}

fn hex(id: u8) -> String {
    format!("0x{id:02x}")
}

fn err_status(id: u8, message: impl Into<String>) -> Command {
    let mut message = message.into();
    if message.is_empty() {
        message.push_str("error");
    }
    Command::Status(StatusResponse::error(id, message))
}

impl Coordinator {
    pub fn new(world: World, config: CoordinatorConfig) -> Result<Self, CoordError> {
        if config.expected_clients == 0 {
            return Err(CoordError::InvalidClientCount);
        }
        Ok(Self {
            config,
            world,
            sessions: BTreeMap::new(),
            orders: BTreeMap::new(),
            next_session: 0,
            started: false,
            votes: BTreeSet::new(),
            inbox: BTreeMap::new(),
            handshakes: BTreeMap::new(),
            events: Vec::new(),
            trajectory: Vec::new(),
            results: ResultStore::new(),
            end: None,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn now_us(&self) -> u64 {
        self.world.now_us()
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    pub fn is_finished(&self) -> bool {
        self.end.is_some()
    }

    pub fn end(&self) -> Option<&RunEnd> {
        self.end.as_ref()
    }

    pub fn expected_clients(&self) -> u32 {
        self.config.expected_clients
    }

    pub fn registered_clients(&self) -> u32 {
        self.orders.len() as u32
    }

    pub fn votes(&self) -> &BTreeSet<u32> {
        &self.votes
    }

    pub fn events(&self) -> &[String] {
        &self.events
    }

    pub fn client_state(&self, session: SessionId) -> Option<ClientState> {
        self.sessions.get(&session).map(|s| s.state)
    }

    pub fn session_for_order(&self, order: u32) -> Option<SessionId> {
        self.orders.get(&order).copied()
    }

    pub fn connect(&mut self) -> SessionId {
        let id = SessionId(self.next_session);
        self.next_session += 1;
        self.sessions.insert(id, Session::new());
        id
    }

    fn session(&self, id: SessionId) -> Result<&Session, CoordError> {
        self.sessions
            .get(&id)
            .ok_or(CoordError::UnknownSession(id.0))
    }

    fn log(&mut self, actor: log::Actor, text: &str) {
        self.events
            .push(event_line(self.world.now_us(), actor, text));
    }

    /// Assigns an execution order. Starts the simulation once every expected
    /// order is taken.
    pub fn register_order(
        &mut self,
        session: SessionId,
        order: i32,
    ) -> Result<Reaction, CoordError> {
        if self.end.is_some() {
            return Err(CoordError::Finished);
        }
        let s = self.session(session)?;
        if s.order.is_some() {
            return Err(CoordError::AlreadyOrdered);
        }
        let expected = self.config.expected_clients;
        if order < 1 || order as i64 > i64::from(expected) {
            return Err(CoordError::OutOfRange {
                order: i64::from(order),
                expected,
            });
        }
        let order = order as u32;
        if self.orders.contains_key(&order) {
            return Err(CoordError::DuplicateOrder(order));
        }
        let s = self.sessions.get_mut(&session).expect("checked above");
        s.order = Some(order);
        s.state = ClientState::Ordered;
        self.orders.insert(order, session);
        self.handshakes
            .insert(order, format!("{} OK order={order}", hex(CMD_SETORDER)));

        let mut reaction = Reaction {
            outgoing: vec![Output {
                session,
                commands: vec![Command::Status(StatusResponse::ok(CMD_SETORDER))],
            }],
            ..Reaction::default()
        };
        if self.orders.len() as u32 == expected {
            reaction.absorb(self.start());
        }
        Ok(reaction)
    }

    fn start(&mut self) -> Reaction {
        self.started = true;
        for (order, line) in std::mem::take(&mut self.handshakes) {
            self.log(log::Actor::Client(order), &line);
        }
        let expected = self.config.expected_clients;
        self.log(log::Actor::Server, &format!("start clients={expected}"));
        let inserted = self.world.insert_vehicles();
        self.log_kernel_events(&inserted);
        for s in self.sessions.values_mut() {
            if s.order.is_some() {
                s.state = ClientState::Ready;
            }
        }
        self.record_step();

        let mut reaction = Reaction::default();
        let held: Vec<(SessionId, Vec<Command>)> = self
            .orders
            .values()
            .filter_map(|sid| {
                let s = self.sessions.get_mut(sid)?;
                s.held.pop_front().map(|b| (*sid, b))
            })
            .collect();
        for (sid, batch) in held {
            if self.end.is_some() {
                break;
            }
            reaction.absorb(self.run_batch(sid, batch));
        }
        reaction
    }

    /// In-process entry point for an ordered client's request batch.
    pub fn submit_batch(
        &mut self,
        session: SessionId,
        commands: Vec<Command>,
    ) -> Result<Reaction, CoordError> {
        if self.end.is_some() {
            return Err(CoordError::Finished);
        }
        let s = self.session(session)?;
        let order = s.order.ok_or(CoordError::NotOrdered)?;
        if !self.started {
            return Err(CoordError::NotStarted);
        }
        if s.deferred.is_some() {
            return Err(CoordError::DuplicateVote(order));
        }
        Ok(self.run_batch(session, commands))
    }

    /// Transport entry point: one raw frame from a connection.
    pub fn handle_frame(&mut self, session: SessionId, frame: &[u8]) -> Reaction {
        if self.end.is_some() || !self.sessions.contains_key(&session) {
            return Reaction::default();
        }
        let commands = match decode_requests(frame) {
            Ok(d) => d.commands,
            Err(e) => return self.reject_frame(session, &e),
        };
        let s = &self.sessions[&session];
        let Some(order) = s.order else {
            return match commands.as_slice() {
                [Command::SetOrder(order)] => match self.register_order(session, *order) {
                    Ok(r) => r,
                    Err(e) => self.refuse(session, err_status(CMD_SETORDER, e.to_string())),
                },
                _ => self.refuse(
                    session,
                    err_status(
                        commands.first().map_or(CMD_SETORDER, Command::id),
                        "SETORDER must be the first and only command",
                    ),
                ),
            };
        };
        if s.deferred.is_some() || !s.held.is_empty() {
            return self.abort(
                &format!("client {order} sent a frame while awaiting a reply"),
                Some((
                    session,
                    err_status(
                        commands.first().map_or(0, Command::id),
                        "one request batch may be in flight",
                    ),
                )),
            );
        }
        if !self.started {
            if commands.contains(&Command::Close) {
                self.sessions
                    .get_mut(&session)
                    .unwrap()
                    .step_log
                    .push(format!("{} CLOSE", hex(CMD_CLOSE)));
                let mut reaction = Reaction {
                    outgoing: vec![Output {
                        session,
                        commands: vec![Command::Status(StatusResponse::ok(CMD_CLOSE))],
                    }],
                    ..Reaction::default()
                };
                reaction.absorb(self.finish(RunEnd::ClosedByClient(order)));
                return reaction;
            }
            self.sessions
                .get_mut(&session)
                .unwrap()
                .held
                .push_back(commands);
            return Reaction::default();
        }
        self.run_batch(session, commands)
    }

    fn reject_frame(&mut self, session: SessionId, e: &WireError) -> Reaction {
        let id = match e {
            WireError::UnregisteredCommand(id) => *id,
            WireError::MalformedCommand { id: Some(id), .. } => *id,
            _ => 0,
        };
        let reply = err_status(id, e.to_string());
        match self.sessions[&session].order {
            Some(order) => self.abort(
                &format!("malformed frame from client {order}: {e}"),
                Some((session, reply)),
            ),
            None => self.refuse(session, reply),
        }
    }

    /// Replies to an unordered connection and drops it.
    fn refuse(&mut self, session: SessionId, reply: Command) -> Reaction {
        self.sessions.remove(&session);
        Reaction {
            outgoing: vec![Output {
                session,
                commands: vec![reply],
            }],
            close: vec![session],
            finished: false,
        }
    }

    /// Connection dropped without CLOSE.
    pub fn disconnect(&mut self, session: SessionId) -> Reaction {
        if self.end.is_some() {
            return Reaction::default();
        }
        let Some(s) = self.sessions.get(&session) else {
            return Reaction::default();
        };
        match s.order {
            None => {
                self.sessions.remove(&session);
                Reaction::default()
            }
            Some(order) => self.abort(
                &format!("client {order} disconnected without CLOSE; run truncated"),
                None,
            ),
        }
    }

    /// Read failure on a connection (reset, truncated or oversize frame).
    pub fn connection_error(&mut self, session: SessionId, detail: &str) -> Reaction {
        if self.end.is_some() {
            return Reaction::default();
        }
        match self.sessions.get(&session).map(|s| s.order) {
            None => Reaction::default(),
            Some(None) => {
                self.sessions.remove(&session);
                Reaction {
                    close: vec![session],
                    ..Reaction::default()
                }
            }
            Some(Some(order)) => self.abort(
                &format!("client {order} connection failed: {detail}; run truncated"),
                None,
            ),
        }
    }

    /// Ends the run with a fault, e.g. a connect timeout.
    pub fn abort(&mut self, reason: &str, reply: Option<(SessionId, Command)>) -> Reaction {
        let mut reaction = Reaction::default();
        if let Some((session, command)) = reply {
            reaction.outgoing.push(Output {
                session,
                commands: vec![command],
            });
        }
        reaction.absorb(self.finish(RunEnd::Aborted(reason.to_string())));
        reaction
    }

    fn run_batch(&mut self, session: SessionId, commands: Vec<Command>) -> Reaction {
        let order = self.sessions[&session]
            .order
            .expect("only ordered sessions run batches");
        let mut replies = Vec::with_capacity(commands.len() * 2);
        let mut lines = Vec::new();
        let mut voted = false;
        let mut closed = false;
        for command in commands {
            let id = command.id();
            if voted {
                replies.push(err_status(id, "command after SIMSTEP in the same batch"));
                lines.push(format!("{} ERR after-simstep", hex(id)));
                continue;
            }
            match command {
                Command::SimStep(target) => match self.check_step_target(target) {
                    Ok(()) => {
                        voted = true;
                        replies.push(Command::Status(StatusResponse::ok(id)));
                        lines.push(format!("{} VOTE", hex(id)));
                    }
                    Err(msg) => {
                        lines.push(format!("{} ERR {msg}", hex(id)));
                        replies.push(err_status(id, msg));
                    }
                },
                Command::GetVehicle(q) => {
                    let result = self.get_vehicle(session, &q);
                    lines.push(query_line(id, &q, result.as_ref().err()));
                    match result {
                        Ok(value) => {
                            replies.push(Command::Status(StatusResponse::ok(id)));
                            replies.push(Command::VehicleValue(VariableValue {
                                variable: q.variable,
                                object: q.object,
                                value,
                            }));
                        }
                        Err(msg) => replies.push(err_status(id, msg)),
                    }
                }
                Command::GetTls(q) => {
                    let result = self.get_tls(session, &q);
                    lines.push(query_line(id, &q, result.as_ref().err()));
                    match result {
                        Ok(value) => {
                            replies.push(Command::Status(StatusResponse::ok(id)));
                            replies.push(Command::TlsValue(VariableValue {
                                variable: q.variable,
                                object: q.object,
                                value,
                            }));
                        }
                        Err(msg) => replies.push(err_status(id, msg)),
                    }
                }
                Command::SetVehicle(v) => {
                    let result = self.set_vehicle(session, &v);
                    lines.push(set_line(id, &v, result.as_ref().err()));
                    replies.push(match result {
                        Ok(()) => Command::Status(StatusResponse::ok(id)),
                        Err(msg) => err_status(id, msg),
                    });
                }
                Command::SetTls(v) => {
                    let result = self.set_tls(session, &v);
                    lines.push(set_line(id, &v, result.as_ref().err()));
                    replies.push(match result {
                        Ok(()) => Command::Status(StatusResponse::ok(id)),
                        Err(msg) => err_status(id, msg),
                    });
                }
                Command::Close => {
                    closed = true;
                    replies.push(Command::Status(StatusResponse::ok(id)));
                    lines.push(format!("{} CLOSE", hex(id)));
                    break;
                }
                Command::SetOrder(_) => {
                    replies.push(err_status(id, "execution order already set"));
                    lines.push(format!("{} ERR already-ordered", hex(id)));
                }
                Command::Status(_) | Command::VehicleValue(_) | Command::TlsValue(_) => {
                    replies.push(err_status(id, "not a request"));
                    lines.push(format!("{} ERR not-a-request", hex(id)));
                }
            }
        }

        let s = self.sessions.get_mut(&session).unwrap();
        s.step_log.extend(lines);
        let mut reaction = Reaction::default();
        if closed {
            reaction.outgoing.push(Output {
                session,
                commands: replies,
            });
            reaction.absorb(self.finish(RunEnd::ClosedByClient(order)));
        } else if voted {
            s.deferred = Some(replies);
            s.state = ClientState::StepRequested;
            self.votes.insert(order);
            if self.votes.len() == self.orders.len() {
                reaction.absorb(self.advance());
            }
        } else {
            reaction.outgoing.push(Output {
                session,
                commands: replies,
            });
        }
        reaction
    }

    fn check_step_target(&self, target: f64) -> Result<(), String> {
        if target == 0.0 {
            return Ok(());
        }
        let next = self.world.clock().next_us();
        if target.is_finite() && target > 0.0 && seconds_to_us(target) == next {
            Ok(())
        } else {
            Err(format!(
                "target time {target} is neither 0 nor the next step boundary {}",
                us_to_seconds(next)
            ))
        }
    }

    fn view(&self, session: SessionId) -> &World {
        self.sessions[&session]
            .shadow
            .as_ref()
            .unwrap_or(&self.world)
    }

    fn get_vehicle(&self, session: SessionId, q: &VariableQuery) -> Result<TypedValue, String> {
        let world = self.view(session);
        if q.variable == var::ID_LIST {
            return Ok(TypedValue::StringList(world.vehicle_ids()));
        }
        if q.variable == var::V2X_INBOX {
            return Ok(TypedValue::StringList(
                self.inbox.get(&q.object).cloned().unwrap_or_default(),
            ));
        }
        let v = world
            .vehicle(&q.object)
            .ok_or_else(|| format!("unknown vehicle '{}'", q.object))?;
        let snap = world.snapshot(&q.object).expect("vehicle exists");
        Ok(match q.variable {
            var::SPEED => TypedValue::Double(snap.speed),
            var::POSITION => TypedValue::Position2D(snap.position.x, snap.position.y),
            var::ANGLE => TypedValue::Double(snap.heading),
            var::LENGTH => TypedValue::Double(snap.length),
            var::ROAD_ID => TypedValue::String(snap.edge),
            var::EDGES => TypedValue::StringList(v.route.clone()),
            var::LANE_POSITION => TypedValue::Double(snap.lane_pos),
            var::ROUTE_INDEX => TypedValue::Int(snap.route_index as i32),
            other => return Err(format!("unsupported vehicle variable 0x{other:02x}")),
        })
    }

    fn get_tls(&self, session: SessionId, q: &VariableQuery) -> Result<TypedValue, String> {
        let world = self.view(session);
        match q.variable {
            var::ID_LIST => Ok(TypedValue::StringList(world.tls_ids())),
            var::TLS_STATE => world
                .tls_state(&q.object)
                .map(|s| TypedValue::String(s.to_string()))
                .ok_or_else(|| format!("unknown traffic light '{}'", q.object)),
            other => Err(format!("unsupported traffic light variable 0x{other:02x}")),
        }
    }

    /// Applies `op` to the session's shadow world and remembers it for the
    /// barrier commit.
    fn stage(&mut self, session: SessionId, op: WriteOp) -> Result<(), String> {
        let committed = &self.world;
        let s = self.sessions.get_mut(&session).unwrap();
        let shadow = s.shadow.get_or_insert_with(|| committed.clone());
        apply_op(shadow, &op).map_err(|e| e.to_string())?;
        s.ops.push(op);
        Ok(())
    }

    fn set_vehicle(&mut self, session: SessionId, v: &VariableValue) -> Result<(), String> {
        let id = v.object.clone();
        match v.variable {
            var::SPEED => {
                let speed = v.value.as_f64().ok_or("speed must be a double")?;
                self.stage(session, WriteOp::Speed(id, speed))
            }
            var::LANE_POSITION => {
                let pos = v.value.as_f64().ok_or("lane position must be a double")?;
                self.stage(session, WriteOp::LanePosition(id, pos))
            }
            var::CLAIM => self.stage(session, WriteOp::Claim(id)),
            var::V2X_INBOX => {
                let TypedValue::StringList(items) = &v.value else {
                    return Err("inbox payload must be a string list".into());
                };
                let s = self.sessions.get_mut(&session).unwrap();
                s.mail.entry(id).or_default().extend(items.iter().cloned());
                Ok(())
            }
            other => Err(format!("unsupported vehicle variable 0x{other:02x}")),
        }
    }

    fn set_tls(&mut self, session: SessionId, v: &VariableValue) -> Result<(), String> {
        match v.variable {
            var::TLS_STATE => {
                let state = v.value.as_str().ok_or("state must be a string")?;
                self.stage(
                    session,
                    WriteOp::TlsState(v.object.clone(), state.to_string()),
                )
            }
            other => Err(format!("unsupported traffic light variable 0x{other:02x}")),
        }
    }

    fn flush_step_logs(&mut self) {
        let orders: Vec<(u32, SessionId)> = self.orders.iter().map(|(o, s)| (*o, *s)).collect();
        for (order, sid) in orders {
            let Some(s) = self.sessions.get_mut(&sid) else {
                continue;
            };
            let lines = std::mem::take(&mut s.step_log);
            for line in lines {
                self.log(log::Actor::Client(order), &line);
            }
        }
    }

    fn log_kernel_events(&mut self, events: &[KernelEvent]) {
        for e in events {
            let text = match e {
                KernelEvent::Inserted { id } => format!("insert id={id}"),
                KernelEvent::Arrived { id } => format!("arrive id={id}"),
                KernelEvent::Collision {
                    follower,
                    leader,
                    gap,
                } => format!("collision follower={follower} leader={leader} gap={gap:.3}"),
            };
            self.log(log::Actor::Kernel, &text);
        }
    }

    fn record_step(&mut self) {
        let now = self.world.now_us();
        let count = self.world.vehicle_count() as f64;
        let _ = self
            .results
            .record("traffic", "vehicle_count", us_to_seconds(now), count);
        if !self.config.record_trajectory {
            return;
        }
        let step = self.world.clock().step_index();
        for vehicle in self.world.snapshots() {
            self.trajectory.push(TrajectoryRow {
                step,
                time_us: now,
                vehicle,
            });
        }
    }

    fn advance(&mut self) -> Reaction {
        self.flush_step_logs();

        let mut mail: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut commit_events = Vec::new();
        let mut commit_errors = Vec::new();
        let sids: Vec<SessionId> = self.orders.values().copied().collect();
        for sid in &sids {
            let s = self.sessions.get_mut(sid).unwrap();
            s.shadow = None;
            for op in std::mem::take(&mut s.ops) {
                match apply_op(&mut self.world, &op) {
                    Ok(Some(e)) => commit_events.push(e),
                    Ok(None) => {}
                    Err(e) => commit_errors.push(e.to_string()),
                }
            }
            for (to, items) in std::mem::take(&mut s.mail) {
                mail.entry(to).or_default().extend(items);
            }
        }
        self.inbox = mail;
        for e in commit_errors {
            self.log(log::Actor::Server, &format!("commit-error {e}"));
        }
        self.log_kernel_events(&commit_events);

        let step_us = u64::from(self.world.clock().step_us());
        let events = match self.world.step_world(step_us) {
            Ok(events) => events,
            Err(e) => return self.abort(&format!("kernel fault: {e}"), None),
        };
        let step = self.world.clock().step_index();
        self.log(log::Actor::Server, &format!("advance step={step}"));
        self.log_kernel_events(&events);
        self.record_step();

        let mut reaction = Reaction::default();
        for sid in &sids {
            let s = self.sessions.get_mut(sid).unwrap();
            if let Some(commands) = s.deferred.take() {
                reaction.outgoing.push(Output {
                    session: *sid,
                    commands,
                });
            }
            s.state = ClientState::Ready;
        }
        self.votes.clear();

        let done = match self.config.end_us {
            Some(end) => self.world.now_us() >= end,
            None => self.world.vehicle_count() == 0 && self.world.pending_count() == 0,
        };
        if done {
            reaction.absorb(self.finish(RunEnd::Completed));
        }
        reaction
    }

    fn finish(&mut self, end: RunEnd) -> Reaction {
        let mut reaction = Reaction {
            finished: true,
            ..Reaction::default()
        };
        if self.end.is_some() {
            return reaction;
        }
        self.flush_step_logs();
        let line = match &end {
            RunEnd::Completed => "end completed".to_string(),
            RunEnd::ClosedByClient(order) => format!("end closed-by={order}"),
            RunEnd::Aborted(reason) => format!("abort {reason}"),
        };
        self.log(log::Actor::Server, &line);

        for (sid, s) in &mut self.sessions {
            if let Some(commands) = s.deferred.take() {
                reaction.outgoing.push(Output {
                    session: *sid,
                    commands,
                });
            }
            s.state = ClientState::Closed;
            reaction.close.push(*sid);
        }
        reaction
            .outgoing
            .sort_by_key(|o| self.sessions[&o.session].order.unwrap_or(u32::MAX));

        let w = &self.world;
        let r = &mut self.results;
        r.set_scalar("traffic", "inserted", w.inserted() as f64);
        r.set_scalar("traffic", "arrived", w.arrived() as f64);
        r.set_scalar("traffic", "collisions", w.collisions() as f64);
        r.set_scalar("traffic", "steps", w.clock().step_index() as f64);
        r.set_scalar("traffic", "end_time", w.clock().now_s());
        for (id, gap) in w.min_gaps() {
            r.set_scalar("traffic", &format!("min_gap.{id}"), *gap);
        }
        self.end = Some(end);
        reaction
    }

    pub fn into_report(self) -> RunReport {
        RunReport {
            end: self
                .end
                .unwrap_or_else(|| RunEnd::Aborted("run did not finish".into())),
            events: self.events,
            trajectory: self.trajectory,
            results: self.results,
            world: self.world,
        }
    }
}

fn apply_op(world: &mut World, op: &WriteOp) -> Result<Option<KernelEvent>, KernelError> {
    match op {
        WriteOp::Claim(id) => world.claim_vehicles(std::slice::from_ref(id)).map(|_| None),
        WriteOp::Speed(id, v) => world.set_speed(id, *v).map(|_| None),
        WriteOp::LanePosition(id, p) => world.set_lane_position(id, *p),
        WriteOp::TlsState(id, s) => world.set_tls_state(id, s).map(|_| None),
    }
}

fn query_line(id: u8, q: &VariableQuery, err: Option<&String>) -> String {
    match err {
        None => format!("{} OK var=0x{:02x} obj={}", hex(id), q.variable, q.object),
        Some(e) => format!(
            "{} ERR var=0x{:02x} obj={} {e}",
            hex(id),
            q.variable,
            q.object
        ),
    }
}

fn set_line(id: u8, v: &VariableValue, err: Option<&String>) -> String {
    match err {
        None => format!("{} OK var=0x{:02x} obj={}", hex(id), v.variable, v.object),
        Some(e) => format!(
            "{} ERR var=0x{:02x} obj={} {e}",
            hex(id),
            v.variable,
            v.object
        ),
    }
}

#[cfg(test)]
mod tests;
