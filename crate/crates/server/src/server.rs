//! Asynchronous operation: one thread owns and steps the scene on a
//! wall-clock schedule while client threads exchange frames with it.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use base64::Engine as _;
use log::{debug, warn};
use mobilisim::asset::JointKind;
use mobilisim::scene::{ArticulationId, AttachmentId, BodyCommand, BodyId, Scene, DEFAULT_BREAK_FORCE, MAX_DT};
use mobilisim::sensors::{read_imu, render_primitives, world_primitives, CameraIntrinsics};
use mobilisim::Vec3;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::protocol::*;

pub const DEFAULT_PORT: u16 = 7511;
pub const ADDR_ENV: &str = "MOBILISIM_ADDR";

/// Bind address: explicit flag, else `MOBILISIM_ADDR`, else localhost:7511.
pub fn resolve_addr(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(ADDR_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| format!("127.0.0.1:{DEFAULT_PORT}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Simulation steps per simulated second; sets the scene time step.
    pub sim_rate: f64,
    /// STATE broadcasts per simulated second.
    pub state_broadcast_rate: f64,
    /// Simulated seconds per wall-clock second.
    pub realtime_factor: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { sim_rate: 500.0, state_broadcast_rate: 50.0, realtime_factor: 1.0 }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.sim_rate) && ok(self.state_broadcast_rate) && ok(self.realtime_factor)) {
            return Err(ServerError::InvalidConfig("rates and realtime factor must be positive".into()));
        }
        if 1.0 / self.sim_rate > MAX_DT {
            return Err(ServerError::InvalidConfig(format!("sim_rate {} gives a step above {MAX_DT} s", self.sim_rate)));
        }
        if self.state_broadcast_rate > self.sim_rate {
            return Err(ServerError::InvalidConfig("state_broadcast_rate exceeds sim_rate".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim_rate
    }

    /// Steps between STATE broadcasts.
    pub fn broadcast_interval(&self) -> u64 {
        (self.sim_rate / self.state_broadcast_rate).round().max(1.0) as u64
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("invalid scene: {0}")]
    Scene(String),
}

/// Simulation time shared with client threads, stored as `f64` bits.
#[derive(Debug, Default)]
struct SimClock(AtomicU64);

impl SimClock {
    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::SeqCst))
    }

    fn set(&self, t: f64) {
        self.0.store(t.to_bits(), Ordering::SeqCst)
    }
}

#[derive(Default)]
struct OutboxState {
    frames: VecDeque<(bool, Arc<Vec<u8>>)>,
    closed: bool,
}

/// Per-client send queue. A new STATE frame replaces any unsent one, so a
/// slow reader sees the latest state and never holds up the stepper.
#[derive(Default)]
struct Outbox {
    state: Mutex<OutboxState>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl Outbox {
    fn push(&self, frame: Arc<Vec<u8>>, is_state: bool) {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return;
        }
        if is_state {
            let before = s.frames.len();
            s.frames.retain(|(st, _)| !st);
            self.dropped.fetch_add((before - s.frames.len()) as u64, Ordering::Relaxed);
        }
        s.frames.push_back((is_state, frame));
        self.ready.notify_one();
    }

    /// Stamps with the current simulation time inside the queue lock, which
    /// keeps timestamps non-decreasing on the connection.
    fn push_now(&self, clock: &SimClock, build: impl FnOnce(f64) -> WireMessage) {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return;
        }
        let msg = build(clock.get());
        match encode_frame(&msg) {
            Ok(f) => s.frames.push_back((false, Arc::new(f))),
            Err(e) => warn!("dropping unencodable {}: {e}", msg.msg_type),
        }
        self.ready.notify_one();
    }

    fn pop(&self) -> Option<Arc<Vec<u8>>> {
        let mut s = self.state.lock().unwrap();
        loop {
            if let Some((_, f)) = s.frames.pop_front() {
                return Some(f);
            }
            if s.closed {
                return None;
            }
            s = self.ready.wait(s).unwrap();
        }
    }

    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }
}

struct ClientLink {
    id: u64,
    outbox: Arc<Outbox>,
}

enum Event {
    Connected(ClientLink),
    Message(u64, WireMessage),
    Disconnected(u64),
}

/// Running server. Dropping it shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    clock: Arc<SimClock>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn sim_time(&self) -> f64 {
        self.clock.get()
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for s in self.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_all();
    }
}

/// Starts serving `scene` on `address`. The scene time step is set from
/// `config.sim_rate`.
pub fn serve(mut scene: Scene, config: SessionConfig, address: &str) -> Result<ServerHandle, ServerError> {
    config.validate()?;
    scene.config.dt = config.dt();
    scene.config.validate().map_err(|e| ServerError::Scene(e.to_string()))?;
    let listener = TcpListener::bind(address).map_err(|source| ServerError::Bind { addr: address.to_string(), source })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind { addr: address.to_string(), source })?;
    listener.set_nonblocking(true).map_err(|source| ServerError::Bind { addr: address.to_string(), source })?;

    let stop = Arc::new(AtomicBool::new(false));
    let clock = Arc::new(SimClock::default());
    clock.set(scene.time());
    let streams = Arc::new(Mutex::new(Vec::new()));
    let (tx, rx) = mpsc::channel();

    let stepper = {
        let (stop, clock) = (stop.clone(), clock.clone());
        std::thread::Builder::new()
            .name("mobilisim-stepper".into())
            .spawn(move || Stepper { scene, config, clock, clients: Vec::new() }.run(rx, &stop))
            .expect("spawn stepper")
    };
    let acceptor = {
        let (stop, clock, streams) = (stop.clone(), clock.clone(), streams.clone());
        std::thread::Builder::new()
            .name("mobilisim-accept".into())
            .spawn(move || accept_loop(listener, tx, stop, clock, streams))
            .expect("spawn acceptor")
    };
    Ok(ServerHandle { addr, stop, clock, streams, threads: vec![stepper, acceptor] })
}

fn accept_loop(
    listener: TcpListener,
    events: Sender<Event>,
    stop: Arc<AtomicBool>,
    clock: Arc<SimClock>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
) {
    let mut next_id = 0u64;
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("client {next_id} connected from {peer}");
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let (Ok(read_half), Ok(registry)) = (stream.try_clone(), stream.try_clone()) else { continue };
                streams.lock().unwrap().push(registry);
                let outbox = Arc::new(Outbox::default());
                let id = next_id;
                next_id += 1;
                let _ = events.send(Event::Connected(ClientLink { id, outbox: outbox.clone() }));
                let ob = outbox.clone();
                workers.push(std::thread::spawn(move || write_loop(stream, ob)));
                let (ev, ck) = (events.clone(), clock.clone());
                workers.push(std::thread::spawn(move || read_loop(id, read_half, outbox, ev, ck)));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(5));
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn write_loop(mut stream: TcpStream, outbox: Arc<Outbox>) {
    while let Some(frame) = outbox.pop() {
        if stream.write_all(&frame).is_err() {
            break;
        }
    }
    outbox.close();
    let _ = stream.shutdown(std::net::Shutdown::Both);
}

fn read_loop(id: u64, mut stream: TcpStream, outbox: Arc<Outbox>, events: Sender<Event>, clock: Arc<SimClock>) {
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        decoder.push(&buf[..n]);
        while let Some(r) = decoder.next_message() {
            match r {
                Ok(msg) if msg.msg_type == MessageType::Ping => {
                    outbox.push_now(&clock, |t| WireMessage::new(MessageType::Pong, t, msg.payload.clone()));
                }
                Ok(msg) => {
                    if events.send(Event::Message(id, msg)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let code = match e {
                        ProtocolError::FrameTooLarge(_) => "frame_too_large",
                        ProtocolError::MalformedFrame(_) => "malformed_frame",
                        ProtocolError::UnknownType(_) => "unknown_type",
                    };
                    outbox.push_now(&clock, |t| WireMessage::error(t, code, e.to_string()));
                }
            }
        }
    }
    let _ = events.send(Event::Disconnected(id));
    outbox.close();
}

struct Stepper {
    scene: Scene,
    config: SessionConfig,
    clock: Arc<SimClock>,
    clients: Vec<ClientLink>,
}

impl Stepper {
    fn run(mut self, events: Receiver<Event>, stop: &AtomicBool) {
        let period = self.config.dt() / self.config.realtime_factor;
        let interval = self.config.broadcast_interval();
        let start = Instant::now();
        let mut stepped = 0u64;
        while !stop.load(Ordering::SeqCst) {
            while let Ok(ev) = events.try_recv() {
                self.handle(ev);
            }
            if let Err(e) = self.scene.step() {
                warn!("simulation halted: {e}");
                let msg = WireMessage::error(self.scene.time(), "simulation_halted", e.to_string());
                for c in &self.clients {
                    c.outbox.push_now(&self.clock, |_| msg.clone());
                }
                break;
            }
            stepped += 1;
            self.clock.set(self.scene.time());
            if self.scene.step_count() % interval == 0 {
                self.broadcast_state();
            }
            let due = start + Duration::from_secs_f64(stepped as f64 * period);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        for c in &self.clients {
            c.outbox.close();
        }
    }

    fn broadcast_state(&self) {
        let snap = self.scene.snapshot();
        let msg = WireMessage::with(MessageType::State, snap.time, &snap);
        match encode_frame(&msg) {
            Ok(f) => {
                let f = Arc::new(f);
                for c in &self.clients {
                    c.outbox.push(f.clone(), true);
                }
            }
            Err(e) => warn!("STATE not sent: {e}"),
        }
    }

    fn welcome(&self) -> WelcomePayload {
        let articulations = self
            .scene
            .articulations
            .iter()
            .enumerate()
            .map(|(id, a)| ArticulationDescription {
                id,
                name: a.model.name.clone(),
                dof: a.model.dof,
                links: a.model.links.iter().map(|l| l.name.clone()).collect(),
                joints: a
                    .model
                    .joints()
                    .map(|j| JointDescription {
                        name: j.name.clone(),
                        kind: match j.kind {
                            JointKind::Fixed => "fixed",
                            JointKind::Hinge => "hinge",
                            JointKind::Slider => "slider",
                            JointKind::Screw => "screw",
                        }
                        .into(),
                        dof_offset: j.offset,
                        dof: j.ndof,
                        lower: j.lower[..j.ndof].to_vec(),
                        upper: j.upper[..j.ndof].to_vec(),
                    })
                    .collect(),
            })
            .collect();
        let bodies = self.scene.bodies.iter().enumerate().map(|(id, b)| BodyDescription { id, name: b.name.clone() }).collect();
        WelcomePayload {
            protocol: PROTOCOL_VERSION,
            dt: self.config.dt(),
            sim_rate: self.config.sim_rate,
            state_broadcast_rate: self.config.state_broadcast_rate,
            realtime_factor: self.config.realtime_factor,
            articulations,
            bodies,
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Connected(link) => {
                let w = self.welcome();
                link.outbox.push_now(&self.clock, |t| WireMessage::with(MessageType::Welcome, t, &w));
                self.clients.push(link);
            }
            Event::Disconnected(id) => self.clients.retain(|c| c.id != id),
            Event::Message(id, msg) => {
                let Some(outbox) = self.clients.iter().find(|c| c.id == id).map(|c| c.outbox.clone()) else { return };
                let ty = msg.msg_type;
                match self.apply(msg, &outbox) {
                    Ok(Some(reply)) => outbox.push_now(&self.clock, |t| WireMessage::new(ty, t, reply)),
                    Ok(None) => {}
                    Err((code, message)) => outbox.push_now(&self.clock, |t| WireMessage::error(t, code, message)),
                }
            }
        }
    }

    /// Applies one client request between steps. Returns the reply payload
    /// (sent with the request's type), or an error code and message.
    fn apply(&mut self, msg: WireMessage, outbox: &Arc<Outbox>) -> Result<Option<serde_json::Value>, (&'static str, String)> {
        let bad = |e: ProtocolError| ("bad_payload", e.to_string());
        let failed = |e: &dyn std::fmt::Display| ("command_failed", e.to_string());
        let ack = |index: Option<usize>| Ok(Some(serde_json::to_value(AckPayload { ok: true, index }).expect("ack")));
        match msg.msg_type {
            MessageType::Hello => {
                let w = self.welcome();
                outbox.push_now(&self.clock, |t| WireMessage::with(MessageType::Welcome, t, &w));
                Ok(None)
            }
            MessageType::SetController => {
                let p: SetControllerPayload = msg.parse_payload().map_err(bad)?;
                let id = ArticulationId(p.articulation);
                if p.replace {
                    self.scene.set_controller(id, p.controller).map_err(|e| failed(&e))?;
                    ack(Some(0))
                } else {
                    let k = self.scene.add_controller(id, p.controller).map_err(|e| failed(&e))?;
                    ack(Some(k))
                }
            }
            MessageType::SetTarget => {
                let p: SetTargetPayload = msg.parse_payload().map_err(bad)?;
                if let Some(b) = p.body {
                    let cmd = p.command.ok_or(("bad_payload", "body target needs `command`".to_string()))?;
                    let body = self.scene.body_mut(BodyId(b)).map_err(|e| failed(&e))?;
                    body.command = match cmd {
                        BodyCommandWire::Idle => BodyCommand::Idle,
                        BodyCommandWire::Wrench { force, torque } => {
                            BodyCommand::Wrench { force: Vec3::from(force), torque: Vec3::from(torque) }
                        }
                        BodyCommandWire::Velocity { linear, angular } => {
                            BodyCommand::Velocity { linear: Vec3::from(linear), angular: Vec3::from(angular) }
                        }
                        BodyCommandWire::Pose { target } => BodyCommand::Pose { target },
                    };
                    return ack(None);
                }
                let target = p.target.ok_or(("bad_payload", "joint target needs `target`".to_string()))?;
                let id = ArticulationId(p.articulation.unwrap_or(0));
                let art = self.scene.articulation(id).map_err(|e| failed(&e))?;
                let index = match (p.controller, &p.joints) {
                    (Some(k), _) => k,
                    (None, Some(joints)) => art
                        .controllers
                        .iter()
                        .position(|c| &c.spec.joints == joints)
                        .ok_or_else(|| ("command_failed", format!("no controller drives joints {joints:?}")))?,
                    (None, None) => 0,
                };
                self.scene.controller_mut(id, index).map_err(|e| failed(&e))?.set_target(target).map_err(|e| failed(&e))?;
                ack(Some(index))
            }
            MessageType::Attach => {
                let p: AttachPayload = msg.parse_payload().map_err(bad)?;
                if p.detach {
                    let k = self
                        .scene
                        .attachments
                        .iter()
                        .position(|c| c.active && c.body == p.body)
                        .ok_or_else(|| ("command_failed", format!("body {} is not attached", p.body)))?;
                    self.scene.detach(AttachmentId(k));
                    return ack(Some(k));
                }
                let link = p.link.ok_or(("bad_payload", "attach needs `link`".to_string()))?;
                let force = p.break_force.unwrap_or(DEFAULT_BREAK_FORCE);
                let a = self
                    .scene
                    .attach(BodyId(p.body), ArticulationId(p.articulation.unwrap_or(0)), &link, force)
                    .map_err(|e| failed(&e))?;
                ack(Some(a.0))
            }
            MessageType::Imu => {
                let p: ImuPayload = msg.parse_payload().map_err(bad)?;
                let reading = read_imu(&self.scene, &p.link).map_err(|e| failed(&e))?;
                Ok(Some(serde_json::to_value(ImuPayload { link: p.link, reading: Some(reading) }).expect("imu")))
            }
            MessageType::RenderRequest => {
                let p: RenderRequestPayload = msg.parse_payload().map_err(bad)?;
                let intr = p.intrinsics.unwrap_or_default();
                intr.validate().map_err(|e| failed(&e))?;
                let prims = world_primitives(&self.scene);
                let captured_at = self.scene.time();
                let (clock, outbox) = (self.clock.clone(), outbox.clone());
                std::thread::spawn(move || render_reply(prims, p.camera, intr, captured_at, &clock, &outbox));
                Ok(None)
            }
            other => Err(("unexpected_type", format!("{other} is sent by the server, not accepted from clients"))),
        }
    }
}

fn render_reply(
    prims: Vec<mobilisim::sensors::WorldPrimitive>,
    camera: mobilisim::Transform,
    intr: CameraIntrinsics,
    captured_at: f64,
    clock: &SimClock,
    outbox: &Outbox,
) {
    let result = render_primitives(&prims, &camera, &intr).and_then(|mut frame| {
        frame.timestamp = captured_at;
        let mut bytes = Vec::new();
        frame.write_to(&mut bytes)?;
        Ok(bytes)
    });
    match result {
        Ok(bytes) => {
            let payload = RenderResponsePayload {
                width: intr.width,
                height: intr.height,
                captured_at,
                data: base64::engine::general_purpose::STANDARD.encode(bytes),
            };
            outbox.push_now(clock, |t| WireMessage::with(MessageType::RenderResponse, t, &payload));
        }
        Err(e) => outbox.push_now(clock, |t| WireMessage::new(MessageType::Error, t, json!({"code": "command_failed", "message": e.to_string()}))),
    }
}
