//! Batch command-line front end: analysis tables, minimax verification,
//! Monte Carlo experiments, and networked game execution.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification failure, 3 network
//! failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use qgamble::analysis;
use qgamble::harness::{self, ExperimentSpec, ExperimentStats};
use qgamble::protocol::{AliceStrategy, BobStrategy, GameOutcome, GameRecord, SessionVerdict};
use qgamble::remote;
use qgamble::transport::DEFAULT_PORT;
use rand::SeedableRng;
use std::collections::BTreeMap;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qgamble", version, about = "Two-party quantum gambling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Print the security bounds and related quantities for given reward ratios
    Analyze(AnalyzeArgs),
    /// Check the numeric minimax oracle against the closed forms over a range of R
    Verify(VerifyArgs),
    /// Run a Monte Carlo experiment and compare with the analytic prediction
    Simulate(SimulateArgs),
    /// Host games (Alice side) on a TCP port, co-hosting the physics referee
    Serve(ServeArgs),
    /// Connect to a host and play games (Bob side)
    Connect(ConnectArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Reward ratios R (one or more, all > 0)
    #[arg(long = "R", num_args = 1.., required = true, value_delimiter = ',')]
    reward_ratios: Vec<f64>,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "1.0")]
    r_min: f64,
    #[arg(long, default_value = "1000000.0")]
    r_max: f64,
    /// Number of log-spaced sample points
    #[arg(long, default_value = "25")]
    points: usize,
    /// Maximum allowed |numeric - closed form| deviation
    #[arg(long, default_value = "1e-6")]
    tol: f64,
    /// Self-test: perturb the closed form and confirm the checker fails
    #[arg(long, hide = true)]
    self_test: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "R")]
    reward_ratio: f64,
    #[arg(long)]
    games: u64,
    /// Alice strategy: honest | eps=<x> | eps=worst | general-seed=<s>
    #[arg(long, default_value = "honest")]
    alice: String,
    /// Bob strategy: honest | eta=<x> | liar=<p> | never-verify
    #[arg(long, default_value = "honest")]
    bob: String,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long, default_value = "0.0")]
    p_err: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
    #[arg(long, default_value_t = rayon::current_num_threads())]
    parallelism: usize,
}

#[derive(Args)]
struct ServeArgs {
    /// Must be "alice"
    #[arg(long)]
    role: String,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Alice strategy: honest | eps=<x> | eps=worst | general-seed=<s>
    #[arg(long, default_value = "honest")]
    alice: String,
    /// Shared session seed (both sides must agree for reproducible runs)
    #[arg(long, default_value = "0")]
    seed: u64,
}

#[derive(Args)]
struct ConnectArgs {
    /// Must be "bob"
    #[arg(long)]
    role: String,
    #[arg(long, default_value = "127.0.0.1:7201")]
    addr: String,
    #[arg(long = "R")]
    reward_ratio: f64,
    #[arg(long)]
    games: u64,
    /// Bob strategy: honest | eta=<x> | liar=<p> | never-verify
    #[arg(long, default_value = "honest")]
    bob: String,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long, default_value = "0.0")]
    p_err: f64,
}

const ALICE_GRAMMAR: &str = "alice strategy grammar: honest | eps=<x in [-0.5,0.5]> | eps=worst | general-seed=<u64>";
const BOB_GRAMMAR: &str = "bob strategy grammar: honest | eta=<x in [0,1]> | liar=<p in [0,1]> | never-verify";

fn parse_alice(desc: &str, reward_ratio: f64) -> Result<AliceStrategy, String> {
    if desc == "honest" {
        return Ok(AliceStrategy::Honest);
    }
    if let Some(rest) = desc.strip_prefix("eps=") {
        if rest == "worst" {
            // resolved numerically at Bob's optimal splitting parameter
            return Ok(AliceStrategy::Biased(harness::worst_eps(reward_ratio)));
        }
        let eps: f64 = rest.parse().map_err(|_| ALICE_GRAMMAR.to_owned())?;
        if !(-0.5..=0.5).contains(&eps) {
            return Err(ALICE_GRAMMAR.to_owned());
        }
        return Ok(AliceStrategy::Biased(eps));
    }
    if let Some(rest) = desc.strip_prefix("general-seed=") {
        let seed: u64 = rest.parse().map_err(|_| ALICE_GRAMMAR.to_owned())?;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        return Ok(AliceStrategy::General(harness::random_general_preparation(
            &mut rng, 2,
        )));
    }
    Err(ALICE_GRAMMAR.to_owned())
}

fn parse_bob(desc: &str, reward_ratio: f64) -> Result<BobStrategy, String> {
    let eta_opt = analysis::eta_tilde(reward_ratio);
    if desc == "honest" {
        return Ok(BobStrategy::Honest { eta: eta_opt });
    }
    if desc == "never-verify" {
        return Ok(BobStrategy::NeverVerify { eta: 0.0 });
    }
    if let Some(rest) = desc.strip_prefix("eta=") {
        let eta: f64 = rest.parse().map_err(|_| BOB_GRAMMAR.to_owned())?;
        if !(0.0..=1.0).contains(&eta) {
            return Err(BOB_GRAMMAR.to_owned());
        }
        return Ok(BobStrategy::Honest { eta });
    }
    if let Some(rest) = desc.strip_prefix("liar=") {
        let p: f64 = rest.parse().map_err(|_| BOB_GRAMMAR.to_owned())?;
        if !(0.0..=1.0).contains(&p) {
            return Err(BOB_GRAMMAR.to_owned());
        }
        return Ok(BobStrategy::Liar {
            eta: eta_opt,
            lie_prob: p,
        });
    }
    Err(BOB_GRAMMAR.to_owned())
}

/// Format with six significant digits for tables.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let prec = (5 - mag).max(0) as usize;
    format!("{x:.prec$}")
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<ExitCode, String> {
    for &r in &args.reward_ratios {
        if r <= 0.0 {
            return Err(format!("R must be > 0, got {r}"));
        }
    }
    let header = [
        "R",
        "delta",
        "eta_tilde",
        "delta_approx",
        "eta_approx",
        "G_B_prot",
        "P_D_worst",
        "N_advisory",
    ];
    let mut rows = Vec::new();
    for &r in &args.reward_ratios {
        let (delta_approx, eta_approx) = analysis::asymptotics(r);
        rows.push(vec![
            r,
            analysis::delta_closed(r),
            analysis::eta_tilde(r),
            delta_approx,
            eta_approx,
            analysis::honest_play_gain(r),
            analysis::worst_case_detection_prob(r),
            analysis::max_games_advisory(r),
        ]);
    }
    match args.format {
        OutputFormat::Csv => {
            println!("{}", header.join(","));
            for row in rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                println!("{}", cells.join(","));
            }
        }
        OutputFormat::Table => {
            println!("{}", header.map(|h| format!("{h:>14}")).join(" "));
            for row in rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{:>14}", sig6(*v))).collect();
                println!("{}", cells.join(" "));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode, String> {
    if args.r_min <= 0.0 || args.r_max < args.r_min || args.points == 0 {
        return Err("need 0 < r-min <= r-max and points >= 1".into());
    }
    let closed_delta = |r: f64| {
        let d = analysis::delta_closed(r);
        if args.self_test {
            d + 10.0 * args.tol
        } else {
            d
        }
    };
    let mut worst_delta = 0.0f64;
    let mut worst_eta = 0.0f64;
    let mut worst_r = args.r_min;
    let mut failed_at = None;
    for i in 0..args.points {
        let t = if args.points == 1 {
            0.0
        } else {
            i as f64 / (args.points - 1) as f64
        };
        let r = (args.r_min.ln() + t * (args.r_max.ln() - args.r_min.ln())).exp();
        let numeric = analysis::minimax_numeric(r, 1e-10);
        let d_dev = (numeric.delta - closed_delta(r)).abs();
        let e_dev = (numeric.eta_star - analysis::eta_tilde(r)).abs();
        if d_dev > worst_delta {
            worst_delta = d_dev;
            worst_r = r;
        }
        worst_eta = worst_eta.max(e_dev);
        if (d_dev > args.tol || e_dev > args.tol) && failed_at.is_none() {
            failed_at = Some(r);
        }
        println!(
            "R={} delta_numeric={} delta_dev={:.3e} eta_dev={:.3e} evals={}",
            sig6(r),
            sig6(numeric.delta),
            d_dev,
            e_dev,
            numeric.evaluations
        );
    }
    println!(
        "max |delta_numeric - delta_closed| = {worst_delta:.3e} at R={} ; max eta deviation = {worst_eta:.3e} ; tol = {:.1e}",
        sig6(worst_r),
        args.tol
    );
    if let Some(r) = failed_at {
        println!("VERIFY FAIL at R={}", sig6(r));
        return Ok(ExitCode::from(2));
    }
    println!("VERIFY PASS");
    Ok(ExitCode::SUCCESS)
}

fn print_stats(stats: &ExperimentStats, format: OutputFormat) {
    match format {
        OutputFormat::Csv => {
            println!("field,value");
            println!("reward_ratio,{}", stats.reward_ratio);
            println!("games,{}", stats.games);
            println!("settled,{}", stats.settled);
            println!("mean_bob_gain,{}", stats.mean_bob_gain);
            println!("mean_alice_gain,{}", stats.mean_alice_gain);
            println!("stddev_bob_gain,{}", stats.stddev_bob_gain);
            println!("stderr,{}", stats.stderr);
            println!("total_bob_gain,{}", stats.total_bob_gain);
            for (tag, count) in &stats.outcome_counts {
                println!("count_{tag},{count}");
            }
            println!("canceled_rate,{}", stats.canceled_rate);
            println!("disputed_rate,{}", stats.disputed_rate);
            if let Some(a) = stats.analytic_reference {
                println!("analytic_reference,{a}");
            }
            if let Some(z) = stats.z_score {
                println!("z_score,{z}");
            }
            println!("verdict,{:?}", stats.verdict);
            println!("games_times_delta_sq,{}", stats.games_over_advisory);
        }
        OutputFormat::Table => {
            println!("experiment: {}", stats.spec_label);
            println!(
                "games {} | settled {} | canceled_rate {} | disputed_rate {}",
                stats.games,
                stats.settled,
                sig6(stats.canceled_rate),
                sig6(stats.disputed_rate)
            );
            println!(
                "mean bob gain {} | mean alice gain {} | stddev {} | stderr {}",
                sig6(stats.mean_bob_gain),
                sig6(stats.mean_alice_gain),
                sig6(stats.stddev_bob_gain),
                sig6(stats.stderr)
            );
            for (tag, count) in &stats.outcome_counts {
                println!("  {tag}: {count}");
            }
            match (stats.analytic_reference, stats.z_score) {
                (Some(a), Some(z)) => {
                    println!("analytic reference {} | z-score {}", sig6(a), sig6(z));
                }
                (Some(a), None) => println!("analytic reference {}", sig6(a)),
                _ => println!("analytic reference: none for this strategy pair"),
            }
            println!("N*delta^2 = {} (play only while this stays << 1)", sig6(stats.games_over_advisory));
            match stats.verdict {
                SessionVerdict::Clean => println!("session verdict: CLEAN"),
                SessionVerdict::CheatingSuspected => {
                    println!("session verdict: CHEATING SUSPECTED - stop the game")
                }
                SessionVerdict::Indeterminate => println!("session verdict: INDETERMINATE"),
            }
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode, String> {
    if args.reward_ratio <= 0.0 {
        return Err("R must be > 0".into());
    }
    if !(0.0..=1.0).contains(&args.p_err) {
        return Err("p-err must be in [0, 1]".into());
    }
    let spec = ExperimentSpec {
        reward_ratio: args.reward_ratio,
        games: args.games,
        alice: parse_alice(&args.alice, args.reward_ratio)?,
        bob: parse_bob(&args.bob, args.reward_ratio)?,
        p_err: args.p_err,
        seed: args.seed,
        parallelism: args.parallelism,
    };
    let stats = harness::run_experiment(&spec);
    print_stats(&stats, args.format);
    Ok(ExitCode::SUCCESS)
}

fn settlement_summary(records: &[GameRecord]) -> String {
    let mut bob_total = 0.0;
    let mut alice_total = 0.0;
    let mut counts: BTreeMap<&'static str, u64> = BTreeMap::new();
    for rec in records {
        bob_total += rec.bob_gain;
        alice_total += rec.alice_gain;
        *counts.entry(rec.outcome.tag()).or_insert(0) += 1;
    }
    let counts: Vec<String> = counts.iter().map(|(t, c)| format!("{t}={c}")).collect();
    format!(
        "games={} bob_total={bob_total} alice_total={alice_total} [{}]",
        records.len(),
        counts.join(" ")
    )
}

fn cmd_serve(args: &ServeArgs) -> Result<ExitCode, String> {
    if args.role != "alice" {
        return Err("serve requires --role alice".into());
    }
    let alice = parse_alice(&args.alice, 1.0)?;
    let listener = qgamble::transport::listen(("0.0.0.0", args.port))
        .map_err(|e| format!("network: {e}"))?;
    eprintln!("listening on port {}", args.port);
    match remote::serve_session(&listener, &alice, args.seed) {
        Ok(records) => {
            let canceled = records
                .iter()
                .filter(|r| r.outcome == GameOutcome::Canceled)
                .count();
            println!("settlement {}", settlement_summary(&records));
            let verdict =
                qgamble::protocol::session_monitor(records.iter().map(|r| r.outcome), 0.0, 4.0);
            if verdict == SessionVerdict::CheatingSuspected {
                println!("session verdict: CHEATING SUSPECTED - stop the game");
            }
            if canceled > 0 {
                println!("canceled games: {canceled}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("session failed: {e}");
            Ok(ExitCode::from(3))
        }
    }
}

fn cmd_connect(args: &ConnectArgs) -> Result<ExitCode, String> {
    if args.role != "bob" {
        return Err("connect requires --role bob".into());
    }
    if args.reward_ratio <= 0.0 {
        return Err("R must be > 0".into());
    }
    let bob = parse_bob(&args.bob, args.reward_ratio)?;
    match remote::run_client(
        args.addr.as_str(),
        args.reward_ratio,
        args.games,
        &bob,
        args.seed,
        args.p_err,
    ) {
        Ok(records) => {
            let canceled = records
                .iter()
                .filter(|r| r.outcome == GameOutcome::Canceled)
                .count();
            println!("settlement {}", settlement_summary(&records));
            if canceled > 0 {
                println!("canceled games: {canceled}");
            }
            if (records.len() as u64) < args.games {
                eprintln!("session ended early after {} games", records.len());
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("connection failed: {e}");
            Ok(ExitCode::from(3))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Connect(args) => cmd_connect(args),
    };
    match result {
        Ok(code) => code,
        Err(usage) => {
            eprintln!("error: {usage}");
            ExitCode::from(1)
        }
    }
}
