//! Acceptance: the two-process game with synchronized seeds reproduces the
//! in-process sign trajectories bit for bit, and a recording proxy between
//! the processes observes only the four message kinds with no accept/reject
//! replies.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::process::Command;
use std::sync::{Arc, Mutex};

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn write_config(dir: &std::path::Path, out_dir: &std::path::Path) -> std::path::PathBuf {
    let cfg = format!(
        r#"
out_dir = "{}"
trials = 1
master_seed = 20240915

[game]
k = 3
t = 3
latent_dim = 2
conditions = [ {{ condition = "mh", mi = true }} ]

[data]
source = "synthetic"
synthetic_d = 10
synthetic_alpha = 0.05
"#,
        out_dir.display()
    );
    let path = dir.join("remote.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

/// Forwards bytes in both directions line by line, recording every frame.
fn spawn_proxy(
    listen_port: u16,
    upstream_port: u16,
    frames: Arc<Mutex<Vec<(char, String)>>>,
) -> std::thread::JoinHandle<()> {
    std::thread::spawn(move || {
        let listener = TcpListener::bind(("127.0.0.1", listen_port)).unwrap();
        let (client, _) = listener.accept().unwrap();
        let upstream = TcpStream::connect(("127.0.0.1", upstream_port)).unwrap();
        let c2u = {
            let frames = Arc::clone(&frames);
            let client = client.try_clone().unwrap();
            let mut upstream = upstream.try_clone().unwrap();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(client);
                let mut line = String::new();
                // a→b direction
                while reader.read_line(&mut line).map(|n| n > 0).unwrap_or(false) {
                    frames.lock().unwrap().push(('a', line.trim_end().to_string()));
                    if upstream.write_all(line.as_bytes()).is_err() {
                        break;
                    }
                    line.clear();
                }
            })
        };
        let u2c = {
            let frames = Arc::clone(&frames);
            let mut client = client.try_clone().unwrap();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(upstream);
                let mut line = String::new();
                while reader.read_line(&mut line).map(|n| n > 0).unwrap_or(false) {
                    frames.lock().unwrap().push(('b', line.trim_end().to_string()));
                    if client.write_all(line.as_bytes()).is_err() {
                        break;
                    }
                    line.clear();
                }
            })
        };
        let _ = c2u.join();
        let _ = u2c.join();
    })
}

#[test]
fn criterion_8_transport_equivalence_and_wire_audit() {
    let bin = env!("CARGO_BIN_EXE_emcom");
    let dir = tempfile::tempdir().unwrap();

    // In-process reference run.
    let local_out = dir.path().join("local");
    let cfg_local = write_config(dir.path(), &local_out);
    let status = Command::new(bin).args(["run"]).arg(&cfg_local).status().unwrap();
    assert!(status.success());

    // Two-process run through the recording proxy.
    let remote_out = dir.path().join("remote");
    let cfg_remote = {
        let cfg = format!(
            r#"
out_dir = "{}"
trials = 1
master_seed = 20240915

[game]
k = 3
t = 3
latent_dim = 2
conditions = [ {{ condition = "mh", mi = true }} ]

[data]
source = "synthetic"
synthetic_d = 10
synthetic_alpha = 0.05
"#,
            remote_out.display()
        );
        let path = dir.path().join("remote2.toml");
        std::fs::write(&path, cfg).unwrap();
        path
    };

    let b_port = free_port();
    let proxy_port = free_port();
    let frames: Arc<Mutex<Vec<(char, String)>>> = Arc::new(Mutex::new(Vec::new()));
    let mut b_child = Command::new(bin)
        .args(["serve", "--role", "b", "--addr", &format!("127.0.0.1:{b_port}")])
        .arg(&cfg_remote)
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(300));
    let proxy = spawn_proxy(proxy_port, b_port, Arc::clone(&frames));
    std::thread::sleep(std::time::Duration::from_millis(100));
    let a_status = Command::new(bin)
        .args(["serve", "--role", "a", "--addr", &format!("127.0.0.1:{proxy_port}")])
        .arg(&cfg_remote)
        .status()
        .unwrap();
    assert!(a_status.success(), "agent a failed");
    assert!(b_child.wait().unwrap().success(), "agent b failed");
    proxy.join().unwrap();

    // Bit-identical sign trajectories per agent.
    let local_a = std::fs::read(local_out.join("signs_mh_mi_t0_agent_a.csv")).unwrap();
    let local_b = std::fs::read(local_out.join("signs_mh_mi_t0_agent_b.csv")).unwrap();
    let remote_a = std::fs::read(remote_out.join("remote_signs_a.csv")).unwrap();
    let remote_b = std::fs::read(remote_out.join("remote_signs_b.csv")).unwrap();
    assert_eq!(local_a, remote_a, "agent a trajectories differ");
    assert_eq!(local_b, remote_b, "agent b trajectories differ");

    // Wire audit: only the four kinds; PROPOSE counts must be exactly D per
    // direction per iteration; the listener never sends accept/reject.
    let frames = frames.lock().unwrap();
    assert!(!frames.is_empty());
    let (t_iters, d) = (3usize, 10usize);
    let mut counts = std::collections::HashMap::new();
    for (dir_tag, frame) in frames.iter() {
        let v: serde_json::Value = serde_json::from_str(frame).expect("frame is JSON");
        let kind = v["k"].as_str().expect("kind field");
        assert!(
            matches!(kind, "HELLO" | "PROPOSE" | "TURN_END" | "GAME_END"),
            "unexpected kind {kind}"
        );
        if kind == "PROPOSE" {
            // Signs only: exactly the index/sign pair plus the tag.
            assert_eq!(v.as_object().unwrap().len(), 3, "extra fields in {frame}");
        }
        *counts.entry((*dir_tag, kind.to_string())).or_insert(0usize) += 1;
    }
    assert_eq!(counts[&('a', "PROPOSE".to_string())], t_iters * d);
    assert_eq!(counts[&('b', "PROPOSE".to_string())], t_iters * d);
    assert_eq!(counts[&('a', "HELLO".to_string())], 1);
    assert_eq!(counts[&('b', "HELLO".to_string())], 1);
    assert_eq!(counts[&('a', "TURN_END".to_string())], t_iters);
    assert_eq!(counts[&('b', "TURN_END".to_string())], t_iters);
    println!(
        "[PASS] criterion 8: transport equivalence bit-identical; wire audit clean ({} frames)",
        frames.len()
    );
}

#[test]
fn handshake_mismatch_on_different_seeds() {
    let bin = env!("CARGO_BIN_EXE_emcom");
    let dir = tempfile::tempdir().unwrap();
    let out_b = dir.path().join("b");
    let out_a = dir.path().join("a");
    let mk = |out: &std::path::Path, seed: u64, name: &str| {
        let cfg = format!(
            r#"
out_dir = "{}"
trials = 1
master_seed = {seed}

[game]
k = 3
t = 2
latent_dim = 2
conditions = [ {{ condition = "mh", mi = true }} ]

[data]
source = "synthetic"
synthetic_d = 6
synthetic_alpha = 0.05
"#,
            out.display()
        );
        let path = dir.path().join(name);
        std::fs::write(&path, cfg).unwrap();
        path
    };
    let cfg_b = mk(&out_b, 1, "b.toml");
    let cfg_a = mk(&out_a, 2, "a.toml");
    let port = free_port();
    let mut b_child = Command::new(bin)
        .args(["serve", "--role", "b", "--addr", &format!("127.0.0.1:{port}")])
        .arg(&cfg_b)
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(300));
    let a_out = Command::new(bin)
        .args(["serve", "--role", "a", "--addr", &format!("127.0.0.1:{port}")])
        .arg(&cfg_a)
        .output()
        .unwrap();
    let b_status = b_child.wait().unwrap();
    assert!(!a_out.status.success() || !b_status.success());
    let stderr = String::from_utf8_lossy(&a_out.stderr);
    let combined = format!("{stderr}");
    assert!(
        combined.contains("handshake mismatch") || !b_status.success(),
        "expected handshake failure, got: {combined}"
    );
}

#[test]
fn missing_dataset_path_exits_2() {
    let bin = env!("CARGO_BIN_EXE_emcom");
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
out_dir = "/tmp/never"
trials = 1
master_seed = 1

[game]
k = 3
t = 2
latent_dim = 2
conditions = [ { condition = "mh", mi = true } ]

[data]
source = "mnist"
"#;
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = Command::new(bin).args(["run"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mnist_images"), "error must name the field: {stderr}");
}
