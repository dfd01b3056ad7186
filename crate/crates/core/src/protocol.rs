//! Alice and Bob session state machines and game settlement.
//!
//! Both sessions are driven purely by incoming [`WireMessage`]s; quantum
//! operations go through an [`OracleHandle`]. The same step functions run
//! behind the in-process queue pair and the socket transport.

use crate::quantum::Preparation;
use crate::transport::{
    OracleHandle, OracleRequest, OracleResponse, Party, WireMessage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::VecDeque;
use thiserror::Error;

/// Parameters of a single game. The bet is fixed at one coin.
#[derive(Debug, Clone, PartialEq)]
pub struct GameParams {
    pub reward_ratio: f64,
    pub game_id: String,
    pub seed: u64,
}

/// Alice's strategy: what she actually prepares.
#[derive(Debug, Clone, PartialEq)]
pub enum AliceStrategy {
    Honest,
    /// One-parameter deviation; `Biased(0.0)` is equivalent to `Honest`.
    Biased(f64),
    General(Preparation),
}

impl AliceStrategy {
    pub fn preparation(&self) -> Preparation {
        match self {
            AliceStrategy::Honest => Preparation::Epsilon(0.0),
            AliceStrategy::Biased(eps) => Preparation::Epsilon(*eps),
            AliceStrategy::General(p) => p.clone(),
        }
    }

    /// Whether Alice can refute a false detection claim: only if she
    /// provably prepared the honest state.
    fn can_refute(&self) -> bool {
        matches!(self, AliceStrategy::Honest) || matches!(self, AliceStrategy::Biased(e) if *e == 0.0)
    }
}

/// Bob's strategy after a negative box-B measurement.
#[derive(Debug, Clone, PartialEq)]
pub enum BobStrategy {
    /// Verify the preparation and report truthfully.
    Honest { eta: f64 },
    /// Concede lost rounds without verifying.
    NeverVerify { eta: f64 },
    /// With probability `lie_prob`, claim detection regardless of any
    /// measurement; otherwise behave honestly.
    Liar { eta: f64, lie_prob: f64 },
}

impl BobStrategy {
    pub fn eta(&self) -> f64 {
        match self {
            BobStrategy::Honest { eta }
            | BobStrategy::NeverVerify { eta }
            | BobStrategy::Liar { eta, .. } => *eta,
        }
    }
}

/// Terminal result of one game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameOutcome {
    BobFoundParticle,
    BobDetectedPreparation,
    AliceWins,
    BobLieCaught,
    /// Bob claimed detection Alice knows to be false; unsettled, flagged.
    Disputed,
    /// Result disagreement (channel error); void run.
    Canceled,
}

impl GameOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            GameOutcome::BobFoundParticle => "BOB_FOUND_PARTICLE",
            GameOutcome::BobDetectedPreparation => "BOB_DETECTED_PREPARATION",
            GameOutcome::AliceWins => "ALICE_WINS",
            GameOutcome::BobLieCaught => "BOB_LIE_CAUGHT",
            GameOutcome::Disputed => "DISPUTED",
            GameOutcome::Canceled => "CANCELED",
        }
    }

    pub fn from_tag(tag: &str) -> Option<GameOutcome> {
        Some(match tag {
            "BOB_FOUND_PARTICLE" => GameOutcome::BobFoundParticle,
            "BOB_DETECTED_PREPARATION" => GameOutcome::BobDetectedPreparation,
            "ALICE_WINS" => GameOutcome::AliceWins,
            "BOB_LIE_CAUGHT" => GameOutcome::BobLieCaught,
            "DISPUTED" => GameOutcome::Disputed,
            "CANCELED" => GameOutcome::Canceled,
            _ => return None,
        })
    }

    /// Settled games transfer coins; disputes and cancellations do not.
    pub fn is_settled(&self) -> bool {
        !matches!(self, GameOutcome::Disputed | GameOutcome::Canceled)
    }
}

/// Zero-sum settlement: (bob_gain, alice_gain) in coins.
pub fn settle(outcome: GameOutcome, reward_ratio: f64) -> (f64, f64) {
    match outcome {
        GameOutcome::BobFoundParticle => (1.0, -1.0),
        GameOutcome::BobDetectedPreparation => (reward_ratio, -reward_ratio),
        GameOutcome::AliceWins | GameOutcome::BobLieCaught => (-1.0, 1.0),
        GameOutcome::Disputed | GameOutcome::Canceled => (0.0, 0.0),
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("game {game_id}: message {got} illegal in phase {phase}")]
    OutOfPhase {
        game_id: String,
        got: String,
        phase: String,
    },
    #[error("unknown game id {0}")]
    UnknownGame(String),
    #[error("oracle failure: {0}")]
    Oracle(#[from] crate::transport::OracleError),
    #[error("channel failure: {0}")]
    Channel(#[from] crate::transport::ChannelError),
    #[error("session aborted by peer: {0}")]
    Aborted(String),
}

/// Full transcript of one game, replayable under a fixed seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub game_id: String,
    pub reward_ratio: f64,
    pub seed: u64,
    /// Every message in delivery order, tagged with its sender.
    pub transcript: Vec<(Party, WireMessage)>,
    pub outcome: GameOutcome,
    pub bob_gain: f64,
    pub alice_gain: f64,
}

impl GameRecord {
    /// Line-oriented export: game id, outcome and gains plus the message
    /// type sequence. Stable across transports.
    pub fn export_line(&self) -> String {
        let msgs: Vec<String> = self
            .transcript
            .iter()
            .map(|(from, m)| format!("{from}:{}", m.type_tag()))
            .collect();
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.game_id,
            self.outcome.tag(),
            self.bob_gain,
            self.alice_gain,
            msgs.join(",")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AlicePhase {
    AwaitHello,
    AwaitBobMove,
    AwaitVerify,
    AwaitAck,
    Done,
}

/// Alice's per-game session.
pub struct AliceSession {
    params: GameParams,
    strategy: AliceStrategy,
    phase: AlicePhase,
    pub outcome: Option<GameOutcome>,
}

impl AliceSession {
    pub fn new(params: GameParams, strategy: AliceStrategy) -> Self {
        AliceSession {
            params,
            strategy,
            phase: AlicePhase::AwaitHello,
            outcome: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == AlicePhase::Done
    }

    fn out_of_phase(&self, msg: &WireMessage) -> ProtocolError {
        ProtocolError::OutOfPhase {
            game_id: self.params.game_id.clone(),
            got: msg.type_tag().into(),
            phase: format!("{:?}", self.phase),
        }
    }

    fn settle_msgs(&mut self, outcome: GameOutcome) -> Vec<WireMessage> {
        let (bob_gain, alice_gain) = settle(outcome, self.params.reward_ratio);
        self.outcome = Some(outcome);
        self.phase = AlicePhase::AwaitAck;
        vec![WireMessage::Settle {
            game_id: self.params.game_id.clone(),
            outcome: outcome.tag().into(),
            bob_gain,
            alice_gain,
        }]
    }

    pub fn step(
        &mut self,
        msg: &WireMessage,
        oracle: &mut dyn OracleHandle,
    ) -> Result<Vec<WireMessage>, ProtocolError> {
        if msg.game_id() != self.params.game_id {
            return Err(ProtocolError::UnknownGame(msg.game_id().into()));
        }
        if let WireMessage::Abort { reason, .. } = msg {
            self.phase = AlicePhase::Done;
            return Err(ProtocolError::Aborted(reason.clone()));
        }
        let id = self.params.game_id.clone();
        match (self.phase, msg) {
            (AlicePhase::AwaitHello, WireMessage::Hello { .. }) => {
                oracle.request(
                    Party::Alice,
                    OracleRequest::Prepare(self.strategy.preparation()),
                )?;
                self.phase = AlicePhase::AwaitBobMove;
                Ok(vec![
                    WireMessage::Accept { game_id: id.clone() },
                    WireMessage::BoxBReady { game_id: id },
                ])
            }
            (AlicePhase::AwaitBobMove, WireMessage::ClaimWin { .. }) => {
                let found_in_a =
                    match oracle.request(Party::Alice, OracleRequest::OpenA)? {
                        OracleResponse::Measurement { found } => found,
                        OracleResponse::Ack => false,
                    };
                let outcome = if found_in_a {
                    GameOutcome::BobLieCaught
                } else {
                    GameOutcome::BobFoundParticle
                };
                let mut out = vec![WireMessage::OpenAResult {
                    game_id: id,
                    found_in_a,
                }];
                out.extend(self.settle_msgs(outcome));
                Ok(out)
            }
            (AlicePhase::AwaitBobMove, WireMessage::RequestBoxA { .. }) => {
                self.phase = AlicePhase::AwaitVerify;
                Ok(vec![WireMessage::BoxAReady { game_id: id }])
            }
            (
                AlicePhase::AwaitBobMove | AlicePhase::AwaitVerify,
                WireMessage::VerifyResult { detected, .. },
            ) => {
                let outcome = if *detected {
                    if self.strategy.can_refute() {
                        GameOutcome::Disputed
                    } else {
                        GameOutcome::BobDetectedPreparation
                    }
                } else {
                    GameOutcome::AliceWins
                };
                Ok(self.settle_msgs(outcome))
            }
            (AlicePhase::AwaitAck, WireMessage::Settle { .. }) => {
                self.phase = AlicePhase::Done;
                Ok(vec![])
            }
            (AlicePhase::AwaitAck, WireMessage::Cancel { .. }) => {
                self.outcome = Some(GameOutcome::Canceled);
                self.phase = AlicePhase::Done;
                Ok(vec![])
            }
            _ => Err(self.out_of_phase(msg)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BobPhase {
    Start,
    AwaitAccept,
    AwaitBoxB,
    AwaitBoxA,
    AwaitOpenA,
    AwaitSettle,
    Done,
}

/// Bob's per-game session.
pub struct BobSession {
    params: GameParams,
    strategy: BobStrategy,
    phase: BobPhase,
    rng: ChaCha12Rng,
    /// Per-run channel corruption: surfaces as settlement disagreement.
    corrupted: bool,
    found_particle: Option<bool>,
    pub outcome: Option<GameOutcome>,
}

impl BobSession {
    pub fn new(params: GameParams, strategy: BobStrategy, p_err: f64) -> Self {
        let rng = ChaCha12Rng::seed_from_u64(derive_seed(params.seed, 0xb0b));
        let mut err_rng = ChaCha12Rng::seed_from_u64(derive_seed(params.seed, 0xe44));
        let corrupted = p_err > 0.0 && err_rng.gen::<f64>() < p_err;
        BobSession {
            params,
            strategy,
            phase: BobPhase::Start,
            rng,
            corrupted,
            found_particle: None,
            outcome: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == BobPhase::Done
    }

    fn out_of_phase(&self, msg: &WireMessage) -> ProtocolError {
        ProtocolError::OutOfPhase {
            game_id: self.params.game_id.clone(),
            got: msg.type_tag().into(),
            phase: format!("{:?}", self.phase),
        }
    }

    /// Opening move: propose the game.
    pub fn start(&mut self) -> Result<Vec<WireMessage>, ProtocolError> {
        assert_eq!(self.phase, BobPhase::Start);
        self.phase = BobPhase::AwaitAccept;
        Ok(vec![WireMessage::Hello {
            game_id: self.params.game_id.clone(),
            reward_ratio: self.params.reward_ratio,
        }])
    }

    fn verify_and_report(
        &mut self,
        oracle: &mut dyn OracleHandle,
    ) -> Result<Vec<WireMessage>, ProtocolError> {
        let eta = self.strategy.eta();
        let matched = match oracle.request(Party::Bob, OracleRequest::ProjectVerify { eta })? {
            OracleResponse::Measurement { found } => found,
            OracleResponse::Ack => true,
        };
        self.phase = BobPhase::AwaitSettle;
        Ok(vec![WireMessage::VerifyResult {
            game_id: self.params.game_id.clone(),
            detected: !matched,
        }])
    }

    pub fn step(
        &mut self,
        msg: &WireMessage,
        oracle: &mut dyn OracleHandle,
    ) -> Result<Vec<WireMessage>, ProtocolError> {
        if msg.game_id() != self.params.game_id {
            return Err(ProtocolError::UnknownGame(msg.game_id().into()));
        }
        if let WireMessage::Abort { reason, .. } = msg {
            self.phase = BobPhase::Done;
            return Err(ProtocolError::Aborted(reason.clone()));
        }
        let id = self.params.game_id.clone();
        match (self.phase, msg) {
            (BobPhase::AwaitAccept, WireMessage::Accept { .. }) => {
                self.phase = BobPhase::AwaitBoxB;
                Ok(vec![])
            }
            (BobPhase::AwaitBoxB, WireMessage::BoxBReady { .. }) => {
                let eta = self.strategy.eta();
                oracle.request(Party::Bob, OracleRequest::Split { eta })?;
                let found = match oracle.request(Party::Bob, OracleRequest::MeasureB)? {
                    OracleResponse::Measurement { found } => found,
                    OracleResponse::Ack => false,
                };
                self.found_particle = Some(found);
                if found {
                    self.phase = BobPhase::AwaitOpenA;
                    return Ok(vec![WireMessage::ClaimWin { game_id: id }]);
                }
                match self.strategy.clone() {
                    BobStrategy::Honest { .. } => {
                        self.phase = BobPhase::AwaitBoxA;
                        Ok(vec![WireMessage::RequestBoxA { game_id: id }])
                    }
                    BobStrategy::NeverVerify { .. } => {
                        self.phase = BobPhase::AwaitSettle;
                        Ok(vec![WireMessage::VerifyResult {
                            game_id: id,
                            detected: false,
                        }])
                    }
                    BobStrategy::Liar { lie_prob, .. } => {
                        if self.rng.gen::<f64>() < lie_prob {
                            self.phase = BobPhase::AwaitSettle;
                            Ok(vec![WireMessage::VerifyResult {
                                game_id: id,
                                detected: true,
                            }])
                        } else {
                            self.phase = BobPhase::AwaitBoxA;
                            Ok(vec![WireMessage::RequestBoxA { game_id: id }])
                        }
                    }
                }
            }
            (BobPhase::AwaitBoxA, WireMessage::BoxAReady { .. }) => self.verify_and_report(oracle),
            (BobPhase::AwaitOpenA, WireMessage::OpenAResult { .. }) => {
                self.phase = BobPhase::AwaitSettle;
                Ok(vec![])
            }
            (BobPhase::AwaitSettle, WireMessage::Settle { outcome, .. }) => {
                self.phase = BobPhase::Done;
                if self.corrupted {
                    // result disagreement: void the run
                    self.outcome = Some(GameOutcome::Canceled);
                    return Ok(vec![WireMessage::Cancel { game_id: id }]);
                }
                self.outcome = GameOutcome::from_tag(outcome);
                Ok(vec![WireMessage::Settle {
                    game_id: id,
                    outcome: outcome.clone(),
                    bob_gain: settle(self.outcome.unwrap_or(GameOutcome::Canceled), self.params.reward_ratio).0,
                    alice_gain: settle(self.outcome.unwrap_or(GameOutcome::Canceled), self.params.reward_ratio).1,
                }])
            }
            _ => Err(self.out_of_phase(msg)),
        }
    }
}

/// Mix a seed with a tag/stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15_u64.wrapping_mul(tag.wrapping_add(1)))
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Fresh per-game oracle seeded deterministically from the game seed.
pub fn game_oracle(seed: u64) -> crate::transport::GameOracle {
    crate::transport::GameOracle::new(ChaCha12Rng::seed_from_u64(derive_seed(seed, 0x04ac1e)))
}

/// Drive both sessions to completion over an in-process queue. Deterministic
/// under a fixed `params.seed`; the transcript is byte-replayable.
pub fn run_game(
    params: &GameParams,
    alice_cfg: &AliceStrategy,
    bob_cfg: &BobStrategy,
    p_err: f64,
) -> Result<GameRecord, ProtocolError> {
    let mut oracle = game_oracle(params.seed);
    let mut alice = AliceSession::new(params.clone(), alice_cfg.clone());
    let mut bob = BobSession::new(params.clone(), bob_cfg.clone(), p_err);

    let mut transcript: Vec<(Party, WireMessage)> = Vec::new();
    let mut queue: VecDeque<(Party, WireMessage)> = VecDeque::new();
    for msg in bob.start()? {
        transcript.push((Party::Bob, msg.clone()));
        queue.push_back((Party::Alice, msg));
    }
    while let Some((to, msg)) = queue.pop_front() {
        let outgoing = match to {
            Party::Alice => alice.step(&msg, &mut oracle)?,
            Party::Bob => bob.step(&msg, &mut oracle)?,
        };
        for out in outgoing {
            transcript.push((to, out.clone()));
            queue.push_back((to.other(), out));
        }
    }

    let outcome = bob
        .outcome
        .or(alice.outcome)
        .unwrap_or(GameOutcome::Canceled);
    let (bob_gain, alice_gain) = settle(outcome, params.reward_ratio);
    Ok(GameRecord {
        game_id: params.game_id.clone(),
        reward_ratio: params.reward_ratio,
        seed: params.seed,
        transcript,
        outcome,
        bob_gain,
        alice_gain,
    })
}

/// Session-level verdict from the cancellation/dispute monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionVerdict {
    Clean,
    CheatingSuspected,
    Indeterminate,
}

/// Compare the observed rate of void runs (canceled or disputed) against a
/// binomial model at the expected channel error rate. Excess beyond
/// `threshold_sigma` standard deviations means someone is cheating and the
/// game should stop.
pub fn session_monitor(
    outcomes: impl IntoIterator<Item = GameOutcome>,
    expected_error_rate: f64,
    threshold_sigma: f64,
) -> SessionVerdict {
    let mut n = 0u64;
    let mut void = 0u64;
    for outcome in outcomes {
        n += 1;
        if !outcome.is_settled() {
            void += 1;
        }
    }
    if n == 0 {
        return SessionVerdict::Indeterminate;
    }
    let n_f = n as f64;
    let expected = n_f * expected_error_rate;
    let sigma = (n_f * expected_error_rate * (1.0 - expected_error_rate)).sqrt();
    if void as f64 > expected + threshold_sigma * sigma {
        SessionVerdict::CheatingSuspected
    } else {
        SessionVerdict::Clean
    }
}
