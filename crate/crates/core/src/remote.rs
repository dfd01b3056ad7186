//! Networked sessions: Alice serves and co-hosts the physics referee; Bob
//! connects with two framed TCP connections, one for protocol messages and
//! one for his oracle requests.
//!
//! Both sides derive per-game seeds the same way the local driver does, so a
//! fixed shared seed yields transcripts identical to in-process runs.

use crate::protocol::{
    derive_seed, game_oracle, settle, AliceSession, AliceStrategy, BobSession, BobStrategy,
    GameOutcome, GameParams, GameRecord, ProtocolError,
};
use crate::transport::{
    connect, decode_oracle_request, encode_oracle_response, ChannelError, Endpoint, GameOracle,
    OracleError, OracleHandle, OracleRequest, OracleResponse, Party, RemoteOracle, SocketEndpoint,
    WireMessage,
};
use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;

type OracleMap = Arc<Mutex<HashMap<String, GameOracle>>>;

/// Alice-side oracle handle backed by the shared per-game referee map.
struct SharedOracle {
    map: OracleMap,
    game_id: String,
}

impl OracleHandle for SharedOracle {
    fn request(&mut self, party: Party, req: OracleRequest) -> Result<OracleResponse, OracleError> {
        let mut map = self.map.lock().expect("oracle map poisoned");
        let oracle = map
            .get_mut(&self.game_id)
            .ok_or_else(|| OracleError::Transport(format!("no oracle for game {}", self.game_id)))?;
        oracle.handle(party, req)
    }
}

/// Serve Bob's oracle requests on the dedicated referee connection until the
/// peer disconnects.
fn serve_oracle_requests(mut stream: TcpStream, map: OracleMap) {
    let mut buf: VecDeque<u8> = VecDeque::new();
    loop {
        let contiguous: Vec<u8> = buf.iter().copied().collect();
        match decode_oracle_request(&contiguous) {
            Ok((game_id, req, used)) => {
                buf.drain(..used);
                let result = {
                    let mut map = map.lock().expect("oracle map poisoned");
                    match map.get_mut(&game_id) {
                        Some(oracle) => oracle
                            .handle(Party::Bob, req)
                            .map_err(|e| e.to_string()),
                        None => Err(format!("no oracle for game {game_id}")),
                    }
                };
                let frame = match encode_oracle_response(&game_id, &result) {
                    Ok(f) => f,
                    Err(_) => return,
                };
                if stream.write_all(&frame).is_err() {
                    return;
                }
            }
            Err(crate::transport::CodecError::Incomplete(_)) => {
                let mut chunk = [0u8; 4096];
                match stream.read(&mut chunk) {
                    Ok(0) | Err(_) => return,
                    Ok(n) => buf.extend(&chunk[..n]),
                }
            }
            Err(_) => return,
        }
    }
}

fn game_index(game_id: &str) -> u64 {
    game_id
        .strip_prefix('g')
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Accept one client (protocol connection, then referee connection) and play
/// games until the client disconnects. Returns Alice's game records.
pub fn serve_session(
    listener: &TcpListener,
    alice_cfg: &AliceStrategy,
    seed: u64,
) -> Result<Vec<GameRecord>, ProtocolError> {
    let (proto_stream, _) = listener.accept().map_err(ChannelError::Io)?;
    let mut endpoint = SocketEndpoint::new(proto_stream)?;
    let (oracle_stream, _) = listener.accept().map_err(ChannelError::Io)?;

    let map: OracleMap = Arc::new(Mutex::new(HashMap::new()));
    let oracle_map = Arc::clone(&map);
    let oracle_thread = thread::spawn(move || serve_oracle_requests(oracle_stream, oracle_map));

    let mut records = Vec::new();
    let mut session: Option<(AliceSession, GameParams, Vec<(Party, WireMessage)>)> = None;

    loop {
        let msg = match endpoint.recv() {
            Ok(msg) => msg,
            Err(ChannelError::Disconnected) => {
                // connection loss mid-game voids the run
                if let Some((alice, params, transcript)) = session.take() {
                    if !alice.is_done() {
                        records.push(canceled_record(&params, transcript));
                    }
                }
                break;
            }
            Err(e) => return Err(e.into()),
        };

        if session.is_none() {
            if let WireMessage::Hello { game_id, reward_ratio } = &msg {
                let game_seed = derive_seed(seed, game_index(game_id));
                let params = GameParams {
                    reward_ratio: *reward_ratio,
                    game_id: game_id.clone(),
                    seed: game_seed,
                };
                map.lock()
                    .expect("oracle map poisoned")
                    .insert(game_id.clone(), game_oracle(game_seed));
                session = Some((
                    AliceSession::new(params.clone(), alice_cfg.clone()),
                    params,
                    Vec::new(),
                ));
            } else {
                return Err(ProtocolError::UnknownGame(msg.game_id().into()));
            }
        }

        let (alice, params, transcript) = session.as_mut().expect("session just ensured");
        transcript.push((Party::Bob, msg.clone()));
        let mut oracle = SharedOracle {
            map: Arc::clone(&map),
            game_id: params.game_id.clone(),
        };
        let outgoing = alice.step(&msg, &mut oracle)?;
        for out in outgoing {
            transcript.push((Party::Alice, out.clone()));
            endpoint.send(&out)?;
        }
        if alice.is_done() {
            let (alice, params, transcript) = session.take().expect("session present");
            let outcome = alice.outcome.unwrap_or(GameOutcome::Canceled);
            let (bob_gain, alice_gain) = settle(outcome, params.reward_ratio);
            map.lock().expect("oracle map poisoned").remove(&params.game_id);
            records.push(GameRecord {
                game_id: params.game_id.clone(),
                reward_ratio: params.reward_ratio,
                seed: params.seed,
                transcript,
                outcome,
                bob_gain,
                alice_gain,
            });
        }
    }

    drop(endpoint);
    let _ = oracle_thread.join();
    Ok(records)
}

/// Connect to a serving Alice and play `games` games as Bob. Returns Bob's
/// game records; with a shared seed they match the server's and the local
/// driver's transcripts.
pub fn run_client(
    addr: impl ToSocketAddrs + Copy,
    reward_ratio: f64,
    games: u64,
    bob_cfg: &BobStrategy,
    seed: u64,
    p_err: f64,
) -> Result<Vec<GameRecord>, ProtocolError> {
    let mut endpoint = connect(addr)?;
    let mut oracle = RemoteOracle::connect(addr).map_err(ProtocolError::Channel)?;

    let mut records = Vec::with_capacity(games as usize);
    for i in 0..games {
        let game_seed = derive_seed(seed, i);
        let params = GameParams {
            reward_ratio,
            game_id: format!("g{i}"),
            seed: game_seed,
        };
        oracle.set_game(&params.game_id);
        let mut bob = BobSession::new(params.clone(), bob_cfg.clone(), p_err);
        let mut transcript: Vec<(Party, WireMessage)> = Vec::new();
        for msg in bob.start()? {
            transcript.push((Party::Bob, msg.clone()));
            endpoint.send(&msg)?;
        }
        while !bob.is_done() {
            let msg = match endpoint.recv() {
                Ok(msg) => msg,
                Err(ChannelError::Disconnected) | Err(ChannelError::Timeout) => {
                    records.push(canceled_record(&params, transcript));
                    return Ok(records);
                }
                Err(e) => return Err(e.into()),
            };
            transcript.push((Party::Alice, msg.clone()));
            let outgoing = bob.step(&msg, &mut oracle)?;
            for out in outgoing {
                transcript.push((Party::Bob, out.clone()));
                endpoint.send(&out)?;
            }
        }
        let outcome = bob.outcome.unwrap_or(GameOutcome::Canceled);
        let (bob_gain, alice_gain) = settle(outcome, reward_ratio);
        records.push(GameRecord {
            game_id: params.game_id,
            reward_ratio,
            seed: game_seed,
            transcript,
            outcome,
            bob_gain,
            alice_gain,
        });
    }
    Ok(records)
}

fn canceled_record(params: &GameParams, transcript: Vec<(Party, WireMessage)>) -> GameRecord {
    GameRecord {
        game_id: params.game_id.clone(),
        reward_ratio: params.reward_ratio,
        seed: params.seed,
        transcript,
        outcome: GameOutcome::Canceled,
        bob_gain: 0.0,
        alice_gain: 0.0,
    }
}
