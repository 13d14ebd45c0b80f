//! Two-process execution: each agent lives in its own OS process and only
//! sign messages traverse a byte stream. The protocol is newline-delimited
//! JSON over one reliable stream, strictly half-duplex by turn structure,
//! and deliberately has no accept/reject reply — the listener's verdict
//! stays local.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentError, AgentId, MiSchedule};
use crate::game::{Condition, GameError, GameTrace, IterationRecord};
use crate::gmm::Sign;
use crate::metrics::adjusted_rand_index;
use crate::Scalar;

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_BYTES: usize = 4096;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown message kind")]
    UnknownKind,
    #[error("frame exceeds {MAX_FRAME_BYTES} bytes")]
    OversizeFrame,
    #[error("handshake mismatch: {0}")]
    HandshakeMismatch(String),
    #[error("peer disconnected mid-game")]
    PeerDisconnected,
    #[error("unexpected message {got} while waiting for {expected}")]
    UnexpectedMessage { expected: &'static str, got: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// The complete wire vocabulary. PROPOSE carries exactly one `(d, w)` pair;
/// no message kind can carry latents, parameters, or gradients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "k", deny_unknown_fields)]
pub enum WireMessage {
    #[serde(rename = "HELLO")]
    Hello {
        protocol_version: u32,
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "D")]
        d: usize,
        seed_echo: u64,
    },
    #[serde(rename = "PROPOSE")]
    Propose { d: usize, w: Sign },
    #[serde(rename = "TURN_END")]
    TurnEnd { t: usize },
    #[serde(rename = "GAME_END")]
    GameEnd,
}

/// Encodes one message as a JSON line (trailing newline included).
pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = serde_json::to_vec(msg).expect("wire message serializes");
    out.push(b'\n');
    out
}

/// Decodes one JSON line; the input must not contain the newline.
pub fn decode(frame: &[u8]) -> Result<WireMessage, TransportError> {
    if frame.len() > MAX_FRAME_BYTES {
        return Err(TransportError::OversizeFrame);
    }
    let msg: WireMessage = serde_json::from_slice(frame).map_err(|e| {
        if e.to_string().contains("unknown variant") {
            TransportError::UnknownKind
        } else {
            TransportError::MalformedFrame(e.to_string())
        }
    })?;
    Ok(msg)
}

/// Blocking line-framed reader/writer over a stream socket.
pub struct Endpoint {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Endpoint {
    pub fn new(stream: TcpStream, timeout: Duration) -> Result<Self, TransportError> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self { reader: BufReader::new(stream), writer })
    }

    pub fn send(&mut self, msg: &WireMessage) -> Result<(), TransportError> {
        self.writer.write_all(&encode(msg))?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<WireMessage, TransportError> {
        let mut line = Vec::new();
        // Enforce the frame cap even when no newline ever arrives.
        let mut take = (&mut self.reader).take(MAX_FRAME_BYTES as u64 + 1);
        let n = take.read_until(b'\n', &mut line)?;
        if n == 0 {
            return Err(TransportError::PeerDisconnected);
        }
        if line.last() != Some(&b'\n') {
            return Err(if line.len() > MAX_FRAME_BYTES {
                TransportError::OversizeFrame
            } else {
                TransportError::PeerDisconnected
            });
        }
        line.pop();
        decode(&line)
    }
}

/// Config for one endpoint of a remote game.
#[derive(Clone, Debug)]
pub struct RemoteGameConfig {
    pub iterations: usize,
    pub k: usize,
    pub condition: Condition,
    pub schedule: MiSchedule,
    pub mi_enabled: bool,
    pub master_seed: u64,
    pub pretrain_iters: usize,
}

fn handshake(
    endpoint: &mut Endpoint,
    cfg: &RemoteGameConfig,
    d: usize,
    speak_first: bool,
) -> Result<(), TransportError> {
    let hello = WireMessage::Hello {
        protocol_version: PROTOCOL_VERSION,
        k: cfg.k,
        d,
        seed_echo: cfg.master_seed,
    };
    if speak_first {
        endpoint.send(&hello)?;
    }
    match endpoint.recv()? {
        WireMessage::Hello { protocol_version, k, d: peer_d, seed_echo } => {
            if protocol_version != PROTOCOL_VERSION {
                return Err(TransportError::HandshakeMismatch(format!(
                    "protocol {protocol_version} vs {PROTOCOL_VERSION}"
                )));
            }
            if k != cfg.k {
                return Err(TransportError::HandshakeMismatch(format!("K {k} vs {}", cfg.k)));
            }
            if peer_d != d {
                return Err(TransportError::HandshakeMismatch(format!("D {peer_d} vs {d}")));
            }
            if seed_echo != cfg.master_seed {
                return Err(TransportError::HandshakeMismatch(format!(
                    "seed {seed_echo} vs {}",
                    cfg.master_seed
                )));
            }
        }
        other => {
            return Err(TransportError::UnexpectedMessage {
                expected: "HELLO",
                got: format!("{other:?}"),
            })
        }
    }
    if !speak_first {
        endpoint.send(&hello)?;
    }
    Ok(())
}

/// Runs one side of the naming game across the wire. Agent A speaks first.
/// The trace carries only what this process can know: its own agent's signs
/// and ARI, and the acceptance count of the direction in which it listened.
pub fn run_remote_game<S: Scalar>(
    endpoint: &mut Endpoint,
    agent: &mut Agent<S>,
    cfg: &RemoteGameConfig,
    observations: &[Vec<S>],
    truth: &[usize],
) -> Result<GameTrace, TransportError> {
    if !matches!(cfg.condition, Condition::Mh | Condition::MhOneWay) {
        return Err(TransportError::Game(GameError::Config(format!(
            "condition {} cannot run over the wire",
            cfg.condition
        ))));
    }
    let d = agent.d();
    let role = agent.id();
    handshake(endpoint, cfg, d, role == AgentId::A)?;

    if cfg.pretrain_iters > 0 {
        agent.pretrain_standard_prior(observations, cfg.pretrain_iters)?;
    }
    let schedule = if cfg.mi_enabled {
        cfg.schedule
    } else {
        MiSchedule { mi_rounds: 1, vae_iters_per_round: 0 }
    };

    let mut trace = GameTrace::default();
    let one_way = cfg.condition == Condition::MhOneWay;
    for t in 1..=cfg.iterations {
        let start = std::time::Instant::now();
        let mut accepted_as_listener = 0usize;
        let mut proposals_heard = 0usize;
        let listen = |agent: &mut Agent<S>,
                          endpoint: &mut Endpoint|
         -> Result<(usize, usize), TransportError> {
            let mut accepted = 0;
            let mut heard = 0;
            loop {
                match endpoint.recv()? {
                    WireMessage::Propose { d: dd, w } => {
                        heard += 1;
                        let adopted = agent.judge(dd, w)?;
                        if adopted == w {
                            accepted += 1;
                        }
                    }
                    WireMessage::TurnEnd { .. } => return Ok((accepted, heard)),
                    other => {
                        return Err(TransportError::UnexpectedMessage {
                            expected: "PROPOSE/TURN_END",
                            got: format!("{other:?}"),
                        })
                    }
                }
            }
        };

        match role {
            AgentId::A => {
                for dd in 0..d {
                    let w = agent.utter(dd)?;
                    endpoint.send(&WireMessage::Propose { d: dd, w })?;
                }
                endpoint.send(&WireMessage::TurnEnd { t })?;
                if one_way {
                    for dd in 0..d {
                        agent.resample_own_sign(dd)?;
                    }
                } else {
                    let (acc, heard) = listen(agent, endpoint)?;
                    accepted_as_listener = acc;
                    proposals_heard = heard;
                }
                agent.learn(observations, &schedule)?;
            }
            AgentId::B => {
                let (acc, heard) = listen(agent, endpoint)?;
                accepted_as_listener = acc;
                proposals_heard = heard;
                agent.learn(observations, &schedule)?;
                if !one_way {
                    for dd in 0..d {
                        let w = agent.utter(dd)?;
                        endpoint.send(&WireMessage::Propose { d: dd, w })?;
                    }
                    endpoint.send(&WireMessage::TurnEnd { t })?;
                }
            }
        }

        let w_own = agent.signs().as_slice().to_vec();
        let ari = adjusted_rand_index(&w_own, truth).unwrap_or(f64::NAN);
        // The other agent's signs never cross, so kappa and the peer's ARI
        // are unknowable here.
        let (w_a, w_b, ari_a, ari_b) = match role {
            AgentId::A => (w_own, Vec::new(), ari, f64::NAN),
            AgentId::B => (Vec::new(), w_own, f64::NAN, ari),
        };
        let (accepted_ab, accepted_ba, proposals_ab, proposals_ba) = match role {
            AgentId::A => (None, Some(accepted_as_listener), d, proposals_heard),
            AgentId::B => (Some(accepted_as_listener), None, proposals_heard, 0),
        };
        trace.iterations.push(IterationRecord {
            t,
            ari_a,
            ari_b,
            kappa: None,
            accepted_ab,
            accepted_ba,
            proposals_ab,
            proposals_ba,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            w_a,
            w_b,
        });
    }

    if role == AgentId::A {
        endpoint.send(&WireMessage::GameEnd)?;
        match endpoint.recv() {
            Ok(WireMessage::GameEnd) | Err(TransportError::PeerDisconnected) => {}
            Ok(other) => {
                return Err(TransportError::UnexpectedMessage {
                    expected: "GAME_END",
                    got: format!("{other:?}"),
                })
            }
            Err(e) => return Err(e),
        }
    } else {
        match endpoint.recv()? {
            WireMessage::GameEnd => {}
            other => {
                return Err(TransportError::UnexpectedMessage {
                    expected: "GAME_END",
                    got: format!("{other:?}"),
                })
            }
        }
        endpoint.send(&WireMessage::GameEnd)?;
    }
    Ok(trace)
}
