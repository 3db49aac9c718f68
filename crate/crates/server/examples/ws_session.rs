//! Starts the steering server on an ephemeral port with the Wine data, then
//! drives it over WebSocket the way a browser client would: read the state,
//! move a centroid, edit weights, save a snapshot. Shuts down when done.
//!
//! `cargo run -p ulca-server --example ws_session`

use std::path::PathBuf;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use ulca_server::app;
use ulca_server::{AppState, ServerConfig};

type Ws =
    tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn send(ws: &mut Ws, seq: u64, kind: &str, payload: Value) {
    let frame = json!({"type": kind, "seq": seq, "payload": payload});
    ws.send(Message::text(frame.to_string())).await.unwrap();
}

/// Next non-progress frame; progress frames are printed as they pass.
async fn reply(ws: &mut Ws) -> Value {
    while let Some(msg) = ws.next().await {
        let Message::Text(t) = msg.unwrap() else {
            continue;
        };
        let v: Value = serde_json::from_str(&t).unwrap();
        match v["type"].as_str() {
            Some("progress") => println!(
                "  progress: {} evaluations, best {:.4}",
                v["payload"]["evaluations"],
                v["payload"]["best_cost"].as_f64().unwrap_or(f64::NAN)
            ),
            _ => return v,
        }
    }
    panic!("connection closed");
}

fn center(state: &Value, g: usize) -> [f64; 2] {
    let c = &state["ellipses"][g]["center"];
    [c[0].as_f64().unwrap(), c[1].as_f64().unwrap()]
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let snapshots = std::env::temp_dir().join(format!("ulca-example-{}", std::process::id()));
    let config = ServerConfig {
        dataset_path: Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/wine.csv")),
        label_col: "label".into(),
        standardize: true,
        snapshot_dir: Some(snapshots.clone()),
        ..Default::default()
    };
    let state = AppState::new(config)?;
    let listener = app::bind("127.0.0.1:0".parse()?).await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(app::serve(listener, state, async {
        let _ = stopped.await;
    }));
    println!("serving on http://{addr}");

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await?;
    let hello = reply(&mut ws).await;
    println!("hello: {}", hello["payload"]);

    send(&mut ws, 1, "get_state", json!({})).await;
    let s = reply(&mut ws).await;
    println!(
        "l(1,2) = {:.3}",
        s["payload"]["distances"][1][2].as_f64().unwrap()
    );

    let (c1, c2) = (center(&s["payload"], 1), center(&s["payload"], 2));
    let to = [c1[0] + 0.2 * (c2[0] - c1[0]), c1[1] + 0.2 * (c2[1] - c1[1])];
    send(
        &mut ws,
        2,
        "gesture_move",
        json!({"group": 2, "x": to[0], "y": to[1]}),
    )
    .await;
    let s = reply(&mut ws).await;
    println!(
        "after move: l(1,2) = {:.3}, cost {:.3} -> {:.3}",
        s["payload"]["distances"][1][2].as_f64().unwrap(),
        s["payload"]["cost"]["cost_init"].as_f64().unwrap(),
        s["payload"]["cost"]["cost"].as_f64().unwrap()
    );

    send(
        &mut ws,
        3,
        "set_params",
        json!({"w_tg": [0.0, 0.0, 1.0], "w_bg": [1.0, 1.0, 0.0]}),
    )
    .await;
    let s = reply(&mut ws).await;
    println!(
        "after set_params: revision {}, params {}",
        s["payload"]["revision"], s["payload"]["params"]
    );

    send(&mut ws, 4, "save", json!({"name": "boosted"})).await;
    let s = reply(&mut ws).await;
    println!("snapshots: {}", s["payload"]["snapshots"]);

    send(&mut ws, 5, "restore", json!({"name": "nope"})).await;
    let e = reply(&mut ws).await;
    println!(
        "restore unknown: {} {}",
        e["payload"]["code"], e["payload"]["message"]
    );

    drop(ws);
    let _ = stop.send(());
    server.await??;
    let file = std::fs::read_to_string(snapshots.join(app::SNAPSHOT_FILE))?;
    println!(
        "{} written on shutdown ({} bytes)",
        app::SNAPSHOT_FILE,
        file.len()
    );
    std::fs::remove_dir_all(&snapshots)?;
    Ok(())
}
