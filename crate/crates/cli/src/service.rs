//! Live engine behind a WebSocket.
//!
//! The engine runs on its own thread at the scene time step. Clients reach
//! it only through a latest-wins device-input slot and an ordered control
//! queue; they read immutable snapshots from a watch channel. One client at
//! a time holds the input token.

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc as std_mpsc, Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, oneshot, watch};

use fracsim_core::engine::{Engine, HcInput, TrajectorySample};
use fracsim_core::fluoro::{capture_scene, CArmPose};
use fracsim_core::geom::{rotation_to_euler, EulerAngles, Pose, Twist};
use fracsim_core::protocol::{
    decode_client, encode_server, ClientMessage, DeviceInput, FaultCode, ProtocolFault, Raster, ServerMessage,
    SessionControl,
};
use fracsim_core::scene::Scene;
use fracsim_core::script::ScriptRow;
use fracsim_core::trajectory::{TrajectoryRecord, TRAJECTORY_HEADER};

/// Raster blocks per side averaged into one streamed pixel.
const RASTER_DOWNSAMPLE: usize = 4;
/// Falling further behind real time than this drops the backlog.
const MAX_LAG: Duration = Duration::from_millis(50);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub scene: Scene,
    pub snapshot_hz: f64,
    /// Directory for `session.csv` (replayable input) and `trajectory.csv`.
    pub record: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Snapshot {
    sample: TrajectorySample,
    tick: u64,
}

type ControlReply = oneshot::Sender<Result<u64, String>>;

struct Shared {
    input: Mutex<Option<(DeviceInput, bool)>>,
    controls: Mutex<std_mpsc::Sender<(SessionControl, ControlReply)>>,
    snapshot: watch::Receiver<Snapshot>,
    events: broadcast::Sender<ServerMessage>,
    token: Mutex<Option<u64>>,
    carm: Mutex<CArmPose>,
    scene: RwLock<Scene>,
    next_client: AtomicU64,
    running: AtomicBool,
    snapshot_period: Duration,
}

pub struct ServiceHandle {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: oneshot::Sender<()>,
    server: tokio::task::JoinHandle<()>,
    engine: std::thread::JoinHandle<Result<()>>,
}

impl ServiceHandle {
    /// Current engine tick, for tests and logging.
    pub fn tick(&self) -> u64 {
        self.shared.snapshot.borrow().tick
    }

    /// Stops the engine (flushing any recording) and the listener.
    pub async fn shutdown(self) -> Result<()> {
        self.shared.running.store(false, Ordering::SeqCst);
        let _ = self.shutdown.send(());
        let engine = self.engine;
        tokio::task::spawn_blocking(move || engine.join())
            .await?
            .map_err(|_| anyhow::anyhow!("engine thread panicked"))??;
        if tokio::time::timeout(Duration::from_secs(2), self.server).await.is_err() {
            tracing::warn!("listener did not stop within 2 s");
        }
        Ok(())
    }
}

/// Binds and starts the service; returns once it is accepting connections.
pub async fn start(config: ServiceConfig, bind: SocketAddr) -> Result<ServiceHandle> {
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    let addr = listener.local_addr()?;
    let scene = config.scene.clone();
    let engine = Engine::new(scene.clone(), Pose::identity())?;
    let first = Snapshot { sample: engine.state.sample(&scene), tick: 0 };
    let (snap_tx, snap_rx) = watch::channel(first);
    let (events, _) = broadcast::channel(64);
    let (ctl_tx, ctl_rx) = std_mpsc::channel();
    let shared = Arc::new(Shared {
        input: Mutex::new(None),
        controls: Mutex::new(ctl_tx),
        snapshot: snap_rx,
        events,
        token: Mutex::new(None),
        carm: Mutex::new(CArmPose::new(Default::default(), scene.fluoro.center)),
        scene: RwLock::new(scene.clone()),
        next_client: AtomicU64::new(1),
        running: AtomicBool::new(true),
        snapshot_period: Duration::from_secs_f64(1.0 / config.snapshot_hz.max(1e-3)),
    });

    let recorder = match &config.record {
        Some(dir) => Some(Recorder::create(dir)?),
        None => None,
    };
    let engine_shared = shared.clone();
    let engine = std::thread::Builder::new()
        .name("fracsim-engine".into())
        .spawn(move || engine_loop(engine_shared, engine, ctl_rx, snap_tx, recorder))?;

    let app = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/scene", get(get_scene))
        .route("/health", get(|| async { "ok" }))
        .with_state(shared.clone());
    let (shutdown, stop) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        let stop = async {
            let _ = stop.await;
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
            tracing::error!("listener failed: {e}");
        }
    });
    tracing::info!("serving on {addr}");
    Ok(ServiceHandle { addr, shared, shutdown, server, engine })
}

/// Runs until Ctrl-C.
pub async fn serve(config: ServiceConfig, bind: SocketAddr) -> Result<()> {
    let handle = start(config, bind).await?;
    println!("listening on ws://{}/ws", handle.addr);
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await
}

async fn get_scene(State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    let scene = shared.scene.read().expect("scene lock").clone();
    Json(scene)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_session(socket, shared))
}

/// Session recording: the exact per-tick input rows and the resulting log.
struct Recorder {
    dir: PathBuf,
    session: csv::Writer<BufWriter<File>>,
    log: csv::Writer<BufWriter<File>>,
}

impl Recorder {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
        };
        let session = csv::Writer::from_writer(open("session.csv")?);
        let mut log = csv::WriterBuilder::new().has_headers(false).from_writer(open("trajectory.csv")?);
        log.write_record(TRAJECTORY_HEADER.split(','))?;
        let mut r = Self { dir: dir.to_path_buf(), session, log };
        r.session.serialize(idle_input().to_row(0.0))?;
        Ok(r)
    }

    fn push(&mut self, row: &ScriptRow, sample: &TrajectorySample) -> Result<()> {
        self.session.serialize(row)?;
        self.log.serialize(TrajectoryRecord::from_sample(sample))?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.session.flush()?;
        self.log.flush()?;
        Ok(())
    }
}

fn idle_input() -> DeviceInput {
    DeviceInput { hc_px: 0.0, hc_py: 0.0, hc_pz: 0.0, hc_qa: 0.0, hc_qb: 0.0, hc_qg: 0.0, engaged: true, grip: None, twist: None }
}

fn apply_param(scene: &mut Scene, name: &str, value: f64) -> Result<(), String> {
    let mut s = scene.clone();
    match name {
        "max_v" => s.scaling.max_v = value,
        "max_w" => s.scaling.max_w = value,
        "k" => s.force.k = value,
        "c" => s.force.c = value,
        "f_max" => s.force.f_max = (value > 0.0).then_some(value),
        "linear_stiffness" => s.drives.linear.stiffness = value,
        "linear_damping" => s.drives.linear.damping = value,
        "linear_force_limit" => s.drives.linear.force_limit = value,
        "rotary_stiffness" => s.drives.rotary.stiffness = value,
        "rotary_damping" => s.drives.rotary.damping = value,
        "rotary_force_limit" => s.drives.rotary.force_limit = value,
        other => return Err(format!("unknown parameter {other:?}")),
    }
    s.validate().map_err(|e| e.to_string())?;
    *scene = s;
    Ok(())
}

fn engine_loop(
    shared: Arc<Shared>,
    mut engine: Engine,
    controls: std_mpsc::Receiver<(SessionControl, ControlReply)>,
    snapshots: watch::Sender<Snapshot>,
    mut recorder: Option<Recorder>,
) -> Result<()> {
    let mut held = idle_input();
    let mut prev_pose = Pose::identity();
    let mut paused = false;
    let mut was_unreachable = false;
    let mut was_fault = false;
    let mut deadline = Instant::now();
    while shared.running.load(Ordering::SeqCst) {
        while let Ok((ctl, reply)) = controls.try_recv() {
            let result = match ctl {
                SessionControl::Pause => {
                    paused = true;
                    if let Some(r) = &mut recorder {
                        r.flush()?;
                    }
                    Ok(())
                }
                SessionControl::Resume => {
                    paused = false;
                    deadline = Instant::now();
                    Ok(())
                }
                SessionControl::Reset => {
                    engine = Engine::new(engine.scene.clone(), Pose::identity())?;
                    held = idle_input();
                    prev_pose = Pose::identity();
                    *shared.input.lock().expect("input lock") = None;
                    if let Some(r) = &mut recorder {
                        r.flush()?;
                        *r = Recorder::create(&r.dir.clone())?;
                    }
                    snapshots.send_replace(Snapshot { sample: engine.state.sample(&engine.scene), tick: 0 });
                    Ok(())
                }
                SessionControl::SetParam { name, value } => {
                    let r = apply_param(&mut engine.scene, &name, value);
                    if r.is_ok() {
                        *shared.scene.write().expect("scene lock") = engine.scene.clone();
                    }
                    r
                }
            };
            let _ = reply.send(result.map(|()| engine.state.tick));
        }
        if paused {
            // Inputs that arrive while paused are dropped.
            shared.input.lock().expect("input lock").take();
            std::thread::sleep(Duration::from_millis(1));
            continue;
        }

        let dt = engine.scene.dt;
        let mut input = held;
        if let Some((d, reseat)) = shared.input.lock().expect("input lock").take() {
            held = d;
            input = d;
            // A new operator's first pose re-anchors the leader like a clutch.
            if reseat {
                input.engaged = false;
            }
        }
        let row = input.to_row((engine.state.tick + 1) as f64 * dt);
        let pose = row.pose();
        let twist = row.twist().unwrap_or_else(|| Twist::from_pose_delta(&prev_pose, &pose, dt));
        prev_pose = pose;
        let sample = engine.step(&HcInput { pose, twist, engaged: row.engaged, grip: row.grip.unwrap_or(0.0) });
        if let Some(r) = &mut recorder {
            r.push(&row, &sample)?;
        }

        let flags = &engine.state.flags;
        if flags.unreachable && !was_unreachable {
            let _ = shared.events.send(
                ProtocolFault::new(FaultCode::Unreachable, "follower target outside the workspace; holding").to_message(),
            );
        }
        if let (Some(msg), false) = (&flags.fault, was_fault) {
            let _ = shared.events.send(ProtocolFault::new(FaultCode::KinematicsFault, msg.clone()).to_message());
        }
        was_unreachable = flags.unreachable;
        was_fault = flags.fault.is_some();
        snapshots.send_replace(Snapshot { sample, tick: engine.state.tick });

        deadline += Duration::from_secs_f64(dt);
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else if now - deadline > MAX_LAG {
            deadline = now;
        }
    }
    if let Some(r) = &mut recorder {
        r.flush()?;
    }
    Ok(())
}

fn fluoro_frame(shared: &Shared) -> ServerMessage {
    let scene = shared.scene.read().expect("scene lock").clone();
    let carm = *shared.carm.lock().expect("carm lock");
    let ring = shared.snapshot.borrow().sample.rsr_actual;
    let img = capture_scene(&scene, &ring, &carm);
    let (width, height, data) = img.downsample(RASTER_DOWNSAMPLE);
    ServerMessage::FluoroFrame {
        carm: rotation_to_euler(&carm.rotation).to_degrees(),
        mm_per_px: img.mm_per_px * RASTER_DOWNSAMPLE as f64,
        overlay: img.overlay,
        raster: Raster { width, height, data },
    }
}

async fn compute_frame(shared: &Arc<Shared>) -> ServerMessage {
    let s = shared.clone();
    tokio::task::spawn_blocking(move || fluoro_frame(&s)).await.expect("fluoro task")
}

/// True if `id` holds the token or nobody does.
fn may_control(shared: &Shared, id: u64) -> bool {
    shared.token.lock().expect("token lock").is_none_or(|holder| holder == id)
}

async fn handle_text(shared: &Arc<Shared>, id: u64, text: &str) -> Vec<ServerMessage> {
    let msg = match decode_client(text) {
        Ok(m) => m,
        Err(f) => return vec![f.to_message()],
    };
    let held = || ProtocolFault::new(FaultCode::InputTokenHeld, "another client holds the input token").to_message();
    match msg {
        ClientMessage::DeviceInput(d) => {
            let fresh = {
                let mut token = shared.token.lock().expect("token lock");
                match *token {
                    Some(holder) if holder != id => return vec![held()],
                    Some(_) => false,
                    None => {
                        *token = Some(id);
                        true
                    }
                }
            };
            let mut slot = shared.input.lock().expect("input lock");
            let reseat = fresh || slot.is_some_and(|(_, r)| r);
            *slot = Some((d, reseat));
            Vec::new()
        }
        ClientMessage::CarmDelta { alpha, beta, gamma } => {
            {
                let mut carm = shared.carm.lock().expect("carm lock");
                *carm = fracsim_core::fluoro::set_carm(&carm, EulerAngles::from_degrees(alpha, beta, gamma));
            }
            let frame = compute_frame(shared).await;
            let _ = shared.events.send(frame);
            Vec::new()
        }
        ClientMessage::FluoroRequest => vec![compute_frame(shared).await],
        ClientMessage::SessionControl(ctl) => {
            if !may_control(shared, id) {
                return vec![held()];
            }
            let action = match &ctl {
                SessionControl::Pause => "pause",
                SessionControl::Resume => "resume",
                SessionControl::Reset => "reset",
                SessionControl::SetParam { .. } => "set_param",
            }
            .to_string();
            let (tx, rx) = oneshot::channel();
            if shared.controls.lock().expect("control lock").send((ctl, tx)).is_err() {
                return vec![ProtocolFault::new(FaultCode::KinematicsFault, "engine stopped").to_message()];
            }
            match rx.await {
                Ok(Ok(tick)) => vec![ServerMessage::Ack { action, tick }],
                Ok(Err(e)) => vec![ProtocolFault::new(FaultCode::InvalidValue, e).to_message()],
                Err(_) => vec![ProtocolFault::new(FaultCode::KinematicsFault, "engine stopped").to_message()],
            }
        }
    }
}

async fn client_session(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    let mut ticker = tokio::time::interval(shared.snapshot_period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut events = shared.events.subscribe();
    loop {
        let outgoing: Vec<ServerMessage> = tokio::select! {
            _ = ticker.tick() => {
                let sample = shared.snapshot.borrow().sample;
                vec![ServerMessage::Snapshot(TrajectoryRecord::from_sample(&sample))]
            }
            ev = events.recv() => match ev {
                Ok(m) => vec![m],
                Err(broadcast::error::RecvError::Lagged(_)) => Vec::new(),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = stream.next() => match msg {
                Some(Ok(Message::Text(t))) => handle_text(&shared, id, t.as_str()).await,
                Some(Ok(Message::Binary(_))) => {
                    vec![ProtocolFault::new(FaultCode::MalformedMessage, "binary frames are not supported").to_message()]
                }
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => Vec::new(),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
        };
        for m in outgoing {
            if sink.send(Message::Text(encode_server(&m).into())).await.is_err() {
                release(&shared, id);
                return;
            }
        }
    }
    release(&shared, id);
    let _ = sink.close().await;
}

fn release(shared: &Shared, id: u64) {
    let mut token = shared.token.lock().expect("token lock");
    if *token == Some(id) {
        *token = None;
    }
}
