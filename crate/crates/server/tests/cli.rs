use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_ulca");

fn wine() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/wine.csv")
}

fn ulca(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn numeric(rows: &[Vec<String>], skip: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r[skip..].iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn fit_writes_projection_and_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let (proj, emb) = (dir.path().join("m.csv"), dir.path().join("z.csv"));
    let w = wine();
    let out = ulca(&[
        "fit",
        "--data",
        w.to_str().unwrap(),
        "--preset",
        "lda",
        "--out-proj",
        proj.to_str().unwrap(),
        "--out-embedding",
        emb.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["objective"].as_f64().unwrap() > 0.0);
    assert_eq!(report["alpha_used"], report["objective"]);
    assert!(report["iterations"].as_u64().unwrap() >= 1);

    let (h, rows) = read_csv(&proj);
    assert_eq!(h, ["attribute", "m1", "m2"]);
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[0][0], "alcohol");
    let (h, rows) = read_csv(&emb);
    assert_eq!(h, ["z1", "z2"]);
    assert_eq!(rows.len(), 178);

    // Transform with the written projection reproduces the embedding.
    let out = ulca(&[
        "transform",
        "--data",
        w.to_str().unwrap(),
        "--proj",
        proj.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let z: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    let expect = numeric(&rows, 0);
    for (a, b) in z.iter().zip(&expect) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn fit_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let w = wine();
    let run = |tag: &str| {
        let p = dir.path().join(format!("m{tag}.csv"));
        let z = dir.path().join(format!("z{tag}.csv"));
        let out = ulca(&[
            "fit",
            "--data",
            w.to_str().unwrap(),
            "--standardize",
            "--w-tg",
            "1,0,0",
            "--w-bg",
            "0,1,1",
            "--alpha",
            "auto",
            "--out-proj",
            p.to_str().unwrap(),
            "--out-embedding",
            z.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            out.stdout,
            std::fs::read(p).unwrap(),
            std::fs::read(z).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

fn subspace_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    // ‖P_a − P_b‖_max for the column spans of two n×2 matrices, via
    // orthonormalizing each with Gram-Schmidt.
    let ortho = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let k = m[0].len();
        let mut cols: Vec<Vec<f64>> = (0..k).map(|j| m.iter().map(|r| r[j]).collect()).collect();
        for j in 0..k {
            for i in 0..j {
                let dot: f64 = cols[j].iter().zip(&cols[i]).map(|(x, y)| x * y).sum();
                let ci = cols[i].clone();
                cols[j].iter_mut().zip(ci).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            cols[j].iter_mut().for_each(|x| *x /= norm);
        }
        cols
    };
    let (qa, qb) = (ortho(a), ortho(b));
    let n = a.len();
    let mut gap: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pa: f64 = qa.iter().map(|c| c[i] * c[j]).sum();
            let pb: f64 = qb.iter().map(|c| c[i] * c[j]).sum();
            gap = gap.max((pa - pb).abs());
        }
    }
    gap
}

#[test]
fn cpca_with_zero_alpha_matches_pca_on_target() {
    let dir = tempfile::tempdir().unwrap();
    let w = wine();
    let fit = |preset: &str, extra: &[&str], tag: &str| {
        let p = dir.path().join(format!("{tag}.csv"));
        let mut args = vec![
            "fit",
            "--data",
            w.to_str().unwrap(),
            "--standardize",
            "--preset",
            preset,
            "--target",
            "1",
        ];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out-proj", p.to_str().unwrap()]);
        let out = ulca(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        numeric(&read_csv(&p).1, 1)
    };
    let cpca = fit("cpca", &["--alpha", "0"], "cpca");
    let pca = fit("pca", &[], "pca");
    assert!(subspace_gap(&cpca, &pca) < 1e-8);
}

#[test]
fn usage_errors_exit_2() {
    let w = wine();
    let w = w.to_str().unwrap();
    for args in [
        vec!["fit", "--data", w, "--preset", "lda", "--dims", "20"],
        vec!["fit", "--data", w, "--preset", "lda", "--w-tg", "1,0,0"],
        vec!["fit", "--data", w, "--w-tg", "1,0"],
        vec!["fit", "--data", w],
        vec!["fit", "--data", w, "--preset", "lda", "--alpha", "soon"],
        vec!["fit", "--data", w, "--preset", "pca", "--target", "9"],
        vec!["eval-backward", "--m", "0"],
        vec!["eval-backward", "--c", "1"],
        vec!["frobnicate"],
    ] {
        assert_eq!(ulca(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bad_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,label\n1,oops,x\n2,3,y\n").unwrap();
    let missing_label = dir.path().join("nolabel.csv");
    std::fs::write(&missing_label, "a,b\n1,2\n").unwrap();
    for path in [
        bad.as_path(),
        missing_label.as_path(),
        Path::new("/definitely/not/here.csv"),
    ] {
        let out = ulca(&["fit", "--data", path.to_str().unwrap(), "--preset", "lda"]);
        assert_eq!(out.status.code(), Some(3), "{}", path.display());
    }
}

#[test]
fn eval_backward_reports_json() {
    let out = ulca(&[
        "eval-backward",
        "--n",
        "200",
        "--d",
        "5",
        "--c",
        "2",
        "--m",
        "10,40",
        "--trials",
        "0",
    ]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["kept"], 0);
    assert_eq!(r["budgets"], serde_json::json!([]));

    let out = ulca(&[
        "eval-backward",
        "--n",
        "200",
        "--d",
        "5",
        "--c",
        "2",
        "--m",
        "10,40",
        "--trials",
        "3",
        "--seed",
        "4",
    ]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["kept"], 3);
    assert_eq!(r["budgets"][1]["m"], 40);
    let acc = r["budgets"][1]["mean_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0 + 1e-12).contains(&acc));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn http_get(addr: SocketAddr, path: &str) -> Option<(u16, String)> {
    let mut s = TcpStream::connect_timeout(&addr, Duration::from_millis(200)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(10))).ok()?;
    write!(
        s,
        "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .ok()?;
    let mut text = String::new();
    s.read_to_string(&mut text).ok()?;
    let status = text.split_whitespace().nth(1)?.parse().ok()?;
    let body = text.split_once("\r\n\r\n")?.1.to_string();
    Some((status, body))
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_serve(port: u16, extra: &[&str]) -> Server {
    let port = port.to_string();
    let mut args = vec!["serve", "--port", port.as_str()];
    args.extend_from_slice(extra);
    Server(
        Command::new(BIN)
            .args(&args)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    )
}

fn wait_ready(addr: SocketAddr) -> (u16, String) {
    let start = Instant::now();
    loop {
        if let Some(resp) = http_get(addr, "/api/state") {
            return resp;
        }
        assert!(
            start.elapsed() < Duration::from_secs(20),
            "server did not start"
        );
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn serve_without_data_requires_upload() {
    let port = free_port();
    let _server = spawn_serve(port, &[]);
    let (status, body) = wait_ready(SocketAddr::from(([127, 0, 0, 1], port)));
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(body.trim()).unwrap();
    assert_eq!(v["status"], "no_dataset");
}

#[test]
fn serve_with_data_answers_state_and_flushes_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let w = wine();
    let mut server = spawn_serve(
        port,
        &[
            "--data",
            w.to_str().unwrap(),
            "--snapshot-dir",
            dir.path().to_str().unwrap(),
        ],
    );
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let (status, body) = wait_ready(addr);
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(body.trim()).unwrap();
    assert_eq!(v["status"], "ready");
    assert_eq!(
        v["state"]["params"]["w_bg"],
        serde_json::json!([1.0, 1.0, 1.0])
    );

    // A second server on the same port fails with exit 5.
    let busy = ulca(&["serve", "--port", &port.to_string()]);
    assert_eq!(busy.status.code(), Some(5));

    #[cfg(unix)]
    {
        let pid = server.0.id().to_string();
        assert!(Command::new("kill")
            .args(["-TERM", &pid])
            .status()
            .unwrap()
            .success());
        let status = server.0.wait().unwrap();
        assert!(status.success(), "{status:?}");
        let file: Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("snapshots.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(file["format"], "ulca-snapshots");
    }
    #[cfg(not(unix))]
    let _ = &mut server;
}

#[test]
fn serve_with_bad_data_exits_3() {
    let out = ulca(&[
        "serve",
        "--port",
        &free_port().to_string(),
        "--data",
        "/definitely/not/here.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
}
