//! Realtime teleop server.
//!
//! One task owns the simulation and ticks it at the controller rate. Socket
//! readers push operator input into a queue drained once per tick; state
//! frames fan out through a broadcast channel, and a viewer that falls behind
//! is disconnected.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use platoon_core::scenario::{load_scenario, ScenarioSpec};
use platoon_core::sim::{Simulation, Snapshot, LOST_TRACK_HOLD};
use platoon_core::vehicle::ChassisCommand;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc};
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use crate::CliError;

const BROADCAST_CAPACITY: usize = 64;

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ClientMsg {
    Cmd { steer: f64, speed: f64 },
    Reset,
}

#[derive(Debug, Serialize)]
struct VehicleFrame<'a> {
    id: &'a str,
    x: f64,
    y: f64,
    psi: f64,
    v: f64,
    delta: f64,
    d_measure: f64,
    obs_valid: bool,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename = "state")]
struct StateFrame<'a> {
    t: f64,
    vehicles: Vec<VehicleFrame<'a>>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename = "error")]
struct ErrorFrame<'a> {
    msg: &'a str,
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn state_json(s: &Snapshot) -> String {
    let frame = StateFrame {
        t: s.t,
        vehicles: s
            .vehicles
            .iter()
            .map(|v| VehicleFrame {
                id: &v.id,
                x: finite(v.x),
                y: finite(v.y),
                psi: finite(v.psi),
                v: finite(v.v),
                delta: finite(v.delta),
                d_measure: finite(v.d_measure),
                obs_valid: v.obs_valid,
            })
            .collect(),
    };
    serde_json::to_string(&frame).expect("state frame serializes")
}

fn error_json(msg: &str) -> String {
    serde_json::to_string(&ErrorFrame { msg }).expect("error frame serializes")
}

#[derive(Debug)]
enum Input {
    Cmd(ChassisCommand),
    Reset,
    OperatorLeft,
}

struct Shared {
    inputs: mpsc::UnboundedSender<Input>,
    frames: broadcast::Sender<Arc<str>>,
    operator: Mutex<Option<u64>>,
    next_id: AtomicU64,
    max_steer: f64,
    max_speed: f64,
}

impl Shared {
    /// Claims the operator role for `conn` if it is free. Returns whether
    /// `conn` is the operator.
    fn claim(&self, conn: u64) -> bool {
        let mut op = self.operator.lock().expect("operator lock");
        match *op {
            None => {
                *op = Some(conn);
                true
            }
            Some(o) => o == conn,
        }
    }

    fn release(&self, conn: u64) -> bool {
        let mut op = self.operator.lock().expect("operator lock");
        if *op == Some(conn) {
            *op = None;
            true
        } else {
            false
        }
    }
}

/// Ticks the simulation forever at its controller rate.
async fn sim_loop(
    mut sim: Simulation,
    mut inputs: mpsc::UnboundedReceiver<Input>,
    frames: broadcast::Sender<Arc<str>>,
) {
    let rate = sim.spec().controller_rate;
    let hold_ticks = (LOST_TRACK_HOLD * rate).ceil() as u64;
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / rate));
    interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let mut stop_at: Option<u64> = None;
    loop {
        interval.tick().await;
        let mut pending = None;
        while let Ok(input) = inputs.try_recv() {
            match input {
                Input::Cmd(c) => {
                    pending = Some(c);
                    stop_at = None;
                }
                Input::Reset => {
                    sim.reset();
                    pending = None;
                    stop_at = None;
                    let _ = frames.send(state_json(&sim.snapshot()).into());
                }
                Input::OperatorLeft => {
                    stop_at = Some(sim.tick_index() + hold_ticks);
                }
            }
        }
        if stop_at.is_some_and(|k| sim.tick_index() >= k) {
            pending = Some(ChassisCommand::STOP);
            stop_at = None;
        }
        let snap = sim.step_realtime(pending);
        // No receivers is fine; frames are fire-and-forget.
        let _ = frames.send(state_json(&snap).into());
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(socket: WebSocket, shared: Arc<Shared>) {
    let conn = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    let mut frames = shared.frames.subscribe();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();

    let writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                frame = frames.recv() => match frame {
                    Ok(f) => {
                        if sink.send(Message::Text(f.as_ref().into())).await.is_err() {
                            break;
                        }
                    }
                    // Too slow to keep up: drop the viewer.
                    Err(broadcast::error::RecvError::Lagged(_)) => {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                reply = reply_rx.recv() => match reply {
                    Some(r) => {
                        if sink.send(Message::Text(r.into())).await.is_err() {
                            break;
                        }
                    }
                    None => break,
                },
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            Message::Binary(_) => {
                let _ = reply_tx.send(error_json("binary frames are not supported"));
                continue;
            }
            _ => continue,
        };
        if let Err(e) = handle_text(&text, conn, &shared) {
            let _ = reply_tx.send(error_json(&e));
        }
        if writer.is_finished() {
            break;
        }
    }
    drop(reply_tx);
    writer.abort();
    if shared.release(conn) {
        let _ = shared.inputs.send(Input::OperatorLeft);
    }
}

fn handle_text(text: &str, conn: u64, shared: &Shared) -> Result<(), String> {
    let msg: ClientMsg = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if !shared.claim(conn) {
        return Err("another client is the operator; this connection is view-only".into());
    }
    let input = match msg {
        ClientMsg::Cmd { steer, speed } => {
            if !(steer.is_finite() && speed.is_finite()) {
                return Err("steer and speed must be finite".into());
            }
            Input::Cmd(ChassisCommand::new(
                speed.clamp(-shared.max_speed, shared.max_speed),
                steer.clamp(-shared.max_steer, shared.max_steer),
            ))
        }
        ClientMsg::Reset => Input::Reset,
    };
    shared.inputs.send(input).map_err(|_| "simulation stopped".to_string())
}

fn load(scenario: &str, seed: Option<u64>) -> Result<ScenarioSpec, CliError> {
    let mut spec = load_scenario(scenario)?;
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    Ok(spec)
}

pub fn serve(
    scenario: &str,
    host: &str,
    port: u16,
    ui_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let spec = load(scenario, seed)?;
    if let Some(dir) = &ui_dir {
        if !dir.is_dir() {
            return Err(CliError::Config(format!("--ui-dir {} is not a directory", dir.display())));
        }
    }
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Config(format!("bad address {host}:{port}: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(run_server(spec, addr, ui_dir))
}

async fn run_server(spec: ScenarioSpec, addr: SocketAddr, ui_dir: Option<PathBuf>) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let lead = spec.vehicles[0].geometry;
    let sim = Simulation::new(spec)?;
    let (inputs_tx, inputs_rx) = mpsc::unbounded_channel();
    let (frames_tx, _) = broadcast::channel(BROADCAST_CAPACITY);
    let shared = Arc::new(Shared {
        inputs: inputs_tx,
        frames: frames_tx.clone(),
        operator: Mutex::new(None),
        next_id: AtomicU64::new(0),
        max_steer: lead.max_steer,
        max_speed: lead.max_speed,
    });
    tokio::spawn(sim_loop(sim, inputs_rx, frames_tx));

    let mut app = Router::new().route("/ws", get(ws_handler)).with_state(shared);
    if let Some(dir) = ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }

    println!("listening on ws://{local}/ws");
    use std::io::Write as _;
    let _ = std::io::stdout().flush();

    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMsg = serde_json::from_str(r#"{"type":"cmd","steer":0.1,"speed":0.2}"#).unwrap();
        assert!(matches!(m, ClientMsg::Cmd { steer, speed } if steer == 0.1 && speed == 0.2));
        assert!(matches!(serde_json::from_str(r#"{"type":"reset"}"#).unwrap(), ClientMsg::Reset));
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"warp"}"#).is_err());
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"cmd","steer":0.1}"#).is_err());
    }

    #[test]
    fn frames_have_the_wire_shape() {
        let spec = load_scenario("teleop").unwrap();
        let sim = Simulation::new(spec).unwrap();
        let v: serde_json::Value = serde_json::from_str(&state_json(&sim.snapshot())).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["t"], 0.0);
        let lead = &v["vehicles"][0];
        for key in ["id", "x", "y", "psi", "v", "delta", "d_measure", "obs_valid"] {
            assert!(lead.get(key).is_some(), "{key}");
        }
        assert_eq!(lead["id"], "lead");
        let e: serde_json::Value = serde_json::from_str(&error_json("nope")).unwrap();
        assert_eq!(e, serde_json::json!({"type": "error", "msg": "nope"}));
    }
}
