//! Complex state-vector simulator over the labeled box modes.
//!
//! This is the trusted "physics" layer: a particle distributed over boxes
//! `A`, `B`, an auxiliary mode `B'` created by splitting, and optional extra
//! boxes `C_i`, possibly correlated with a small ancilla. States are dense
//! complex vectors over (mode, ancilla index) pairs. All operations are pure;
//! only measurement consumes randomness.

use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Normalization tolerance applied when validating externally supplied states.
pub const NORM_TOL: f64 = 1e-9;

/// Box modes of the particle. `BPrime` only exists after [`split_b`] has
/// been applied; preparations must not populate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeLabel {
    A,
    B,
    BPrime,
    C(usize),
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeLabel::A => write!(f, "a"),
            ModeLabel::B => write!(f, "b"),
            ModeLabel::BPrime => write!(f, "b'"),
            ModeLabel::C(i) => write!(f, "c{i}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("invalid preparation: {0}")]
    InvalidPreparation(String),
    #[error("parameter out of range: {0}")]
    InvalidParameter(String),
    #[error("internal consistency failure: {0}")]
    Inconsistency(String),
}

/// A pure state: complex amplitudes over (mode, ancilla index).
/// `ancilla_dim == 1` means "no ancilla".
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: BTreeMap<(ModeLabel, usize), Complex64>,
    ancilla_dim: usize,
}

impl QuantumState {
    /// Build a state from raw amplitudes, dropping exact zeros.
    /// The caller is responsible for normalization.
    fn from_amplitudes(
        amplitudes: impl IntoIterator<Item = ((ModeLabel, usize), Complex64)>,
        ancilla_dim: usize,
    ) -> Self {
        let amplitudes = amplitudes
            .into_iter()
            .filter(|(_, amp)| amp.norm_sqr() > 0.0)
            .collect();
        QuantumState {
            amplitudes,
            ancilla_dim,
        }
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    /// Amplitude on `(mode, ancilla index)`, zero if absent.
    pub fn amplitude(&self, mode: ModeLabel, ancilla: usize) -> Complex64 {
        self.amplitudes
            .get(&(mode, ancilla))
            .copied()
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    /// Iterator over the nonzero amplitudes in canonical (mode, ancilla) order.
    pub fn iter(&self) -> impl Iterator<Item = (&(ModeLabel, usize), &Complex64)> {
        self.amplitudes.iter()
    }

    fn renormalized(mut self) -> Result<Self, QuantumError> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(QuantumError::Inconsistency(
                "cannot renormalize a zero vector".into(),
            ));
        }
        for amp in self.amplitudes.values_mut() {
            *amp /= norm;
        }
        Ok(self)
    }
}

/// Alice's choice of initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum Preparation {
    /// The one-parameter family sqrt(1/2+eps)|a> + sqrt(1/2-eps)|b>,
    /// eps in [-1/2, 1/2]. `Epsilon(0.0)` is the honest preparation.
    Epsilon(f64),
    /// Arbitrary amplitudes over (mode, ancilla index); normalized on
    /// preparation. Must not reference `BPrime`.
    General {
        amplitudes: Vec<((ModeLabel, usize), Complex64)>,
        ancilla_dim: usize,
    },
}

/// Result of a projective measurement: which branch occurred, the
/// renormalized post-measurement state, and the Born probability of the
/// reported branch.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub found: bool,
    pub post_state: QuantumState,
    pub probability_used: f64,
}

/// Prepare Alice's initial state.
pub fn prepare(p: &Preparation) -> Result<QuantumState, QuantumError> {
    match p {
        Preparation::Epsilon(eps) => {
            if !(-0.5..=0.5).contains(eps) {
                return Err(QuantumError::InvalidPreparation(format!(
                    "epsilon {eps} outside [-1/2, 1/2]"
                )));
            }
            Ok(QuantumState::from_amplitudes(
                [
                    ((ModeLabel::A, 0), Complex64::new((0.5 + eps).sqrt(), 0.0)),
                    ((ModeLabel::B, 0), Complex64::new((0.5 - eps).sqrt(), 0.0)),
                ],
                1,
            ))
        }
        Preparation::General {
            amplitudes,
            ancilla_dim,
        } => {
            if *ancilla_dim < 1 {
                return Err(QuantumError::InvalidPreparation(
                    "ancilla_dim must be >= 1".into(),
                ));
            }
            for ((mode, k), _) in amplitudes {
                if *mode == ModeLabel::BPrime {
                    return Err(QuantumError::InvalidPreparation(
                        "b' does not exist before splitting".into(),
                    ));
                }
                if *k >= *ancilla_dim {
                    return Err(QuantumError::InvalidPreparation(format!(
                        "ancilla index {k} >= ancilla_dim {ancilla_dim}"
                    )));
                }
            }
            let state = QuantumState::from_amplitudes(amplitudes.iter().copied(), *ancilla_dim);
            if state.norm_sqr() <= 0.0 {
                return Err(QuantumError::InvalidPreparation(
                    "all amplitudes are zero".into(),
                ));
            }
            state.renormalized()
        }
    }
}

/// Bob's splitting operation: |b> -> sqrt(1-eta)|b> + sqrt(eta)|b'>,
/// applied coherently on every ancilla index. Unitary on the full space.
pub fn split_b(s: &QuantumState, eta: f64) -> Result<QuantumState, QuantumError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(QuantumError::InvalidParameter(format!(
            "eta {eta} outside [0, 1]"
        )));
    }
    let keep = (1.0 - eta).sqrt();
    let moved = eta.sqrt();
    let mut out = BTreeMap::new();
    for (&(mode, k), &amp) in s.iter() {
        if mode == ModeLabel::B {
            if keep > 0.0 {
                *out.entry((ModeLabel::B, k)).or_insert(Complex64::default()) += amp * keep;
            }
            if moved > 0.0 {
                *out.entry((ModeLabel::BPrime, k))
                    .or_insert(Complex64::default()) += amp * moved;
            }
        } else {
            *out.entry((mode, k)).or_insert(Complex64::default()) += amp;
        }
    }
    Ok(QuantumState::from_amplitudes(out, s.ancilla_dim))
}

/// Born probability of finding the particle in mode `m`, summed over the
/// ancilla.
pub fn prob_in_mode(s: &QuantumState, m: ModeLabel) -> f64 {
    s.iter()
        .filter(|(&(mode, _), _)| mode == m)
        .map(|(_, amp)| amp.norm_sqr())
        .sum()
}

/// Projective measurement of "is the particle in mode `m`?".
///
/// The branch is sampled by comparing one uniform draw against the Born
/// probability, so a zero-probability branch can never be selected and the
/// certain branch never divides by zero.
pub fn measure_mode<R: Rng + ?Sized>(
    s: &QuantumState,
    m: ModeLabel,
    rng: &mut R,
) -> Result<MeasurementOutcome, QuantumError> {
    let p = prob_in_mode(s, m);
    let found = rng.gen::<f64>() < p;
    let post = QuantumState::from_amplitudes(
        s.iter()
            .filter(|(&(mode, _), _)| (mode == m) == found)
            .map(|(&key, &amp)| (key, amp)),
        s.ancilla_dim,
    )
    .renormalized()?;
    Ok(MeasurementOutcome {
        found,
        post_state: post,
        probability_used: if found { p } else { 1.0 - p },
    })
}

/// The state Bob expects after an honest preparation fails the box-B
/// measurement: sqrt(1/(1+eta))|a> + sqrt(eta/(1+eta))|b'>.
pub fn reference_state(eta: f64) -> QuantumState {
    QuantumState::from_amplitudes(
        [
            (
                (ModeLabel::A, 0),
                Complex64::new((1.0 / (1.0 + eta)).sqrt(), 0.0),
            ),
            (
                (ModeLabel::BPrime, 0),
                Complex64::new((eta / (1.0 + eta)).sqrt(), 0.0),
            ),
        ],
        1,
    )
}

/// Partial inner product of the (ancilla-free) reference state with `s`:
/// one complex component per ancilla index.
fn reference_overlap(s: &QuantumState, eta: f64) -> Vec<Complex64> {
    let reference = reference_state(eta);
    let mut overlap = vec![Complex64::default(); s.ancilla_dim];
    for (&(mode, k), &amp) in s.iter() {
        let r = reference.amplitude(mode, 0);
        if r.norm_sqr() > 0.0 {
            overlap[k] += r.conj() * amp;
        }
    }
    overlap
}

/// Probability that Bob's verification projection fails, certifying that
/// Alice deviated from the honest preparation.
pub fn prob_detect(s_after_not_found: &QuantumState, eta: f64) -> f64 {
    let matched: f64 = reference_overlap(s_after_not_found, eta)
        .iter()
        .map(|v| v.norm_sqr())
        .sum();
    (1.0 - matched).clamp(0.0, 1.0)
}

/// Bob's verification measurement: project onto the reference state
/// (tensored with the ancilla identity). `found == false` means the
/// projection failed, i.e. a different preparation was detected.
pub fn verify_preparation<R: Rng + ?Sized>(
    s_after_not_found: &QuantumState,
    eta: f64,
    rng: &mut R,
) -> Result<MeasurementOutcome, QuantumError> {
    let overlap = reference_overlap(s_after_not_found, eta);
    let p_match: f64 = overlap.iter().map(|v| v.norm_sqr()).sum::<f64>().min(1.0);
    let found = rng.gen::<f64>() < p_match;
    let reference = reference_state(eta);
    let post = if found {
        // Projected branch: |psi_2> tensor (overlap vector), renormalized.
        QuantumState::from_amplitudes(
            reference.iter().flat_map(|(&(mode, _), &r)| {
                overlap
                    .iter()
                    .enumerate()
                    .map(move |(k, v)| ((mode, k), r * v))
            }),
            s_after_not_found.ancilla_dim,
        )
    } else {
        // Complement branch: subtract the projection.
        QuantumState::from_amplitudes(
            s_after_not_found.iter().map(|(&(mode, k), &amp)| {
                let r = reference.amplitude(mode, 0);
                ((mode, k), amp - r * overlap[k])
            }),
            s_after_not_found.ancilla_dim,
        )
    }
    .renormalized()?;
    Ok(MeasurementOutcome {
        found,
        post_state: post,
        probability_used: if found { p_match } else { 1.0 - p_match },
    })
}
