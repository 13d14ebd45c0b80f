//! One endpoint of the two-process game: role B binds and listens, role A
//! connects and speaks first. Each process loads only its own viewpoint.

use std::fs;
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};

use emcom_core::agent::{Agent, AgentId};
use emcom_core::game::{Condition, GameTrace, PerceptionConfig};
use emcom_core::transport::{run_remote_game, Endpoint, RemoteGameConfig, DEFAULT_TIMEOUT};
use emcom_core::vae::VaeArch;
use emcom_core::Scalar;

use crate::config::ExperimentConfig;
use crate::datasets::{prepare, Prepared};

pub struct ServeOptions {
    pub role: AgentId,
    pub addr: String,
    pub condition: Condition,
    pub mi: bool,
    pub trial: usize,
    pub connect_timeout: Duration,
}

pub fn cmd_serve(cfg: &ExperimentConfig, opts: &ServeOptions) -> Result<()> {
    match cfg.precision.as_str() {
        "f32" => serve_as::<f32>(cfg, opts),
        _ => serve_as::<f64>(cfg, opts),
    }
}

fn serve_as<S: Scalar>(cfg: &ExperimentConfig, opts: &ServeOptions) -> Result<()> {
    if !matches!(opts.condition, Condition::Mh | Condition::MhOneWay) {
        bail!("condition {} cannot run over the wire", opts.condition);
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let data: Prepared<S> = prepare(cfg)?;
    let (observations, truth) = match opts.role {
        AgentId::A => (data.obs_a, data.truth),
        AgentId::B => (data.obs_b, data.truth),
    };
    let seed = cfg.trial_seed(opts.trial);

    let mut agent = match cfg.perception() {
        PerceptionConfig::Latent => {
            Agent::with_latents(opts.role, cfg.game.k, cfg.nw_hyper::<S>(), &observations, seed)?
        }
        PerceptionConfig::Vae { hidden, likelihood, .. } => {
            let arch = VaeArch {
                input_dim: observations[0].len(),
                hidden,
                latent_dim: cfg.game.latent_dim,
                likelihood,
            };
            Agent::with_vae(
                opts.role,
                cfg.game.k,
                cfg.nw_hyper::<S>(),
                arch,
                &observations,
                cfg.train_config::<S>(),
                seed,
            )?
        }
    };

    let stream = match opts.role {
        AgentId::B => {
            let listener = TcpListener::bind(&opts.addr)
                .with_context(|| format!("binding {}", opts.addr))?;
            eprintln!("agent b listening on {}", opts.addr);
            let (stream, peer) = listener.accept().context("accepting peer")?;
            eprintln!("peer connected from {peer}");
            stream
        }
        AgentId::A => connect_with_retry(&opts.addr, opts.connect_timeout)?,
    };
    let mut endpoint = Endpoint::new(stream, DEFAULT_TIMEOUT)?;

    let pretrain_iters = match cfg.perception() {
        PerceptionConfig::Latent => 0,
        PerceptionConfig::Vae { pretrain_iters, .. } => pretrain_iters,
    };
    let remote_cfg = RemoteGameConfig {
        iterations: cfg.game.t,
        k: cfg.game.k,
        condition: opts.condition,
        schedule: cfg.schedule(),
        mi_enabled: opts.mi,
        master_seed: seed,
        pretrain_iters,
    };
    let trace = run_remote_game(&mut endpoint, &mut agent, &remote_cfg, &observations, &truth)
        .context("remote game")?;

    write_outputs(cfg, opts, &trace)?;
    let ckpt = cfg
        .out_dir
        .join(format!("remote_agent_{}.ckpt", opts.role.letter()));
    agent.save_to_path(&ckpt)?;
    eprintln!("remote game complete; trace written");
    Ok(())
}

fn connect_with_retry(addr: &str, timeout: Duration) -> Result<TcpStream> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if start.elapsed() < timeout => {
                std::thread::sleep(Duration::from_millis(50));
                let _ = e;
            }
            Err(e) => return Err(e).with_context(|| format!("connecting to {addr}")),
        }
    }
}

fn write_outputs(cfg: &ExperimentConfig, opts: &ServeOptions, trace: &GameTrace) -> Result<()> {
    let role = opts.role.letter();
    fs::write(
        cfg.out_dir.join(format!("remote_trace_{role}.csv")),
        trace.to_csv(),
    )?;
    let mut csv = String::from("t,d,w\n");
    for rec in &trace.iterations {
        let w = if opts.role == AgentId::A { &rec.w_a } else { &rec.w_b };
        for (d, &sign) in w.iter().enumerate() {
            csv.push_str(&format!("{},{d},{sign}\n", rec.t));
        }
    }
    fs::write(cfg.out_dir.join(format!("remote_signs_{role}.csv")), csv)?;
    Ok(())
}
