//! Closed-form gain/security formulas and an independent numeric
//! minimax oracle.
//!
//! Bob's guaranteed expected gain is `delta(R) = max_eta min_eps G_B(R, eta,
//! eps)`. The closed forms ([`delta_closed`], [`eta_tilde`]) are cross-checked
//! by [`minimax_numeric`], which knows nothing about them: it only evaluates
//! [`gain_bob`] on nested one-dimensional searches.

use std::cell::Cell;

/// Parameters of a single evaluation of Bob's expected gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainParams {
    /// Reward ratio R > 0, in coins.
    pub reward_ratio: f64,
    /// Bob's splitting parameter, in [0, 1].
    pub eta: f64,
    /// Alice's preparation parameter, in [-1/2, 1/2].
    pub eps: f64,
}

/// Output of the numeric minimax search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxResult {
    /// max over eta of min over eps of Bob's gain, in coins.
    pub delta: f64,
    /// The maximizing splitting parameter.
    pub eta_star: f64,
    /// Alice's minimizing preparation parameter at `eta_star`.
    pub eps_star_at_eta_star: f64,
    /// Number of gain-function evaluations spent.
    pub evaluations: u64,
}

/// Bob's expected gain from the branch probabilities:
/// `P_b + (1 - P_b) [P_D R - (1 - P_D)]`.
pub fn gain_from_probs(p_b: f64, p_d: f64, reward_ratio: f64) -> f64 {
    p_b + (1.0 - p_b) * (p_d * reward_ratio - (1.0 - p_d))
}

/// Probability that Bob finds the particle in box B for the one-parameter
/// preparation family: `(1/2 - eps)(1 - eta)`.
pub fn prob_b_eps(eta: f64, eps: f64) -> f64 {
    (0.5 - eps) * (1.0 - eta)
}

/// Probability that Bob's verification detects a deviating preparation,
/// for the one-parameter family:
/// `2 eta (1 - sqrt(1 - 4 eps^2)) / ((1 + eta)^2 + 2 eps (1 - eta^2))`.
pub fn prob_detect_eps(eta: f64, eps: f64) -> f64 {
    let root = (1.0 - 4.0 * eps * eps).max(0.0).sqrt();
    2.0 * eta * (1.0 - root) / ((1.0 + eta).powi(2) + 2.0 * eps * (1.0 - eta * eta))
}

/// Bob's expected gain in closed form over (R, eta, eps).
pub fn gain_bob(p: GainParams) -> f64 {
    let GainParams {
        reward_ratio: r,
        eta,
        eps,
    } = p;
    let root = (1.0 - 4.0 * eps * eps).max(0.0).sqrt();
    -(2.0 * eps * (1.0 - eta * eta) + eta * (eta + root) - eta * (1.0 - root) * r) / (1.0 + eta)
}

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9; // (sqrt(5) - 1) / 2

/// Golden-section minimization of `f` on `[a, b]` to argument tolerance
/// `tol`. Assumes unimodality on the bracket; returns (argmin, min).
fn golden_min(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN_INV * (b - a);
    let mut d = a + GOLDEN_INV * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN_INV * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN_INV * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// Scan `f` on `n` equally spaced points of `[a, b]`, then golden-section
/// refine inside the bracket around the best sample.
fn scan_then_refine(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    n: usize,
    tol: f64,
) -> (f64, f64) {
    let step = (b - a) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let x = a + step * i as f64;
        let fx = f(x);
        if fx < best {
            best = fx;
            best_i = i;
        }
    }
    let lo = (a + step * (best_i as f64 - 1.0)).max(a);
    let hi = (a + step * (best_i as f64 + 1.0)).min(b);
    let (x, fx) = golden_min(f, lo, hi, tol);
    if fx < best {
        (x, fx)
    } else {
        (a + step * best_i as f64, best)
    }
}

/// Alice's best response: the eps in [-1/2, 1/2] minimizing Bob's gain at
/// fixed (R, eta). A full-interval guard scan precedes the refinement, even
/// though the minimizer is provably nonnegative.
pub fn min_gain_over_eps(reward_ratio: f64, eta: f64, tol: f64) -> (f64, f64) {
    let counter = Cell::new(0u64);
    min_gain_over_eps_counted(reward_ratio, eta, tol, &counter)
}

fn min_gain_over_eps_counted(
    reward_ratio: f64,
    eta: f64,
    tol: f64,
    evals: &Cell<u64>,
) -> (f64, f64) {
    let mut f = |eps: f64| {
        evals.set(evals.get() + 1);
        gain_bob(GainParams {
            reward_ratio,
            eta,
            eps,
        })
    };
    scan_then_refine(&mut f, -0.5, 0.5, 101, tol)
}

/// Numeric minimax: max over eta in [0, 1] of the eps-minimized gain.
/// Coarse 1001-point scan plus golden-section refinement; independent of
/// the printed closed forms.
pub fn minimax_numeric(reward_ratio: f64, tol: f64) -> MinimaxResult {
    let evals = Cell::new(0u64);
    let mut negated = |eta: f64| -min_gain_over_eps_counted(reward_ratio, eta, tol, &evals).1;
    let (eta_star, neg_delta) = scan_then_refine(&mut negated, 0.0, 1.0, 1001, tol);
    let (eps_star, delta) = min_gain_over_eps_counted(reward_ratio, eta_star, tol, &evals);
    debug_assert!((delta + neg_delta).abs() < 1e-9);
    MinimaxResult {
        delta,
        eta_star,
        eps_star_at_eta_star: eps_star,
        evaluations: evals.get(),
    }
}

/// sqrt((R+2)^2 - 1), shared by the closed forms.
fn disc(r: f64) -> f64 {
    ((r + 2.0) * (r + 2.0) - 1.0).sqrt()
}

/// Bob's optimal splitting parameter: sqrt(R + 2 - sqrt((R+2)^2 - 1)).
/// Evaluated via the reciprocal form to avoid cancellation at large R.
pub fn eta_tilde(r: f64) -> f64 {
    (1.0 / (r + 2.0 + disc(r))).sqrt()
}

/// The security bound delta(R): Bob's guaranteed expected gain in coins
/// (negative, approaching zero as R grows).
pub fn delta_closed(r: f64) -> f64 {
    let eta = eta_tilde(r);
    -(2.0 + (r - disc(r)) * (1.0 - eta)) / (1.0 + eta)
}

/// Large-R approximations: (delta ~ -sqrt(2/R), eta ~ sqrt(1/(2R))).
pub fn asymptotics(r: f64) -> (f64, f64) {
    (-(2.0 / r).sqrt(), (1.0 / (2.0 * r)).sqrt())
}

/// Bob's expected gain when both parties follow the protocol honestly:
/// `-eta_tilde(R)` (Alice gains the opposite).
pub fn honest_play_gain(r: f64) -> f64 {
    -eta_tilde(r)
}

/// Detection probability at the adversarial point (eta_tilde, eps*):
/// how often Bob's verification actually fires against worst-case Alice.
/// Approximately sqrt(2/R^3) for large R.
pub fn worst_case_detection_prob(r: f64) -> f64 {
    let eta = eta_tilde(r);
    let (eps_star, _) = min_gain_over_eps(r, eta, 1e-9);
    prob_detect_eps(eta, eps_star)
}

/// Advisory ceiling on the number of games: 1/delta^2. Bob should only
/// play N games for N well below this value.
pub fn max_games_advisory(r: f64) -> f64 {
    let d = delta_closed(r);
    1.0 / (d * d)
}
