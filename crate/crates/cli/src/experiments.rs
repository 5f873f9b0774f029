//! Experiment runners behind `dache validate` and the acceptance suite.
//! Every runner is a pure function of its options and seed; trial-level
//! randomness comes from per-trial streams, so thread count never changes
//! a report.

use std::time::Instant;

use dache::chaos::{
    estimate_lyapunov, ks_entropy_relation, mean_lyapunov_over_layouts, measure_mean_free_time, ChaosError,
    LyapunovParams,
};
use dache::crypto::{decrypt_shard, decrypt_shard_bytes, serialize_shard, ChaChaPoly, CryptoError};
use dache::geometry::{place_obstacles, Arena, Ball, GeometryError, Shape, Surface, Vec2};
use dache::orchestrator::{convergence_time, setup_epoch, MapMode, OrchestratorError, Payload, SimulationConfig};
use dache::par::{map_items, map_trials, trial_rng, Execution};
use dache::query::gen::{random_database, random_plan};
use dache::query::{execute_oracle, QueryError, QueryPlan};
use dache::stats::{
    all_collide_cdf, expected_max_time, fit_exponential, geometric_limit_check, mean, sample_first_collision,
    sup_cdf_gap, Layout, StatsError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ExpFit,
    Rate,
    AllCollide,
    Mft,
    KsEntropy,
    GeomLimit,
    LyapunovTrend,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::ExpFit => "exp-fit",
            Suite::Rate => "rate",
            Suite::AllCollide => "all-collide",
            Suite::Mft => "mft",
            Suite::KsEntropy => "ks-entropy",
            Suite::GeomLimit => "geom-limit",
            Suite::LyapunovTrend => "lyapunov-trend",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Trials per sample (first-collision suites) or trajectories (mft).
    pub trials: usize,
    /// Independent seeds or layouts per configuration.
    pub seeds: usize,
    /// Simulated time per Lyapunov trajectory; suite default when `None`.
    pub horizon: Option<f64>,
    /// Matched pairs for `all-collide`.
    pub pairs: u32,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 0, trials: 10_000, seeds: 20, horizon: None, pairs: 8 }
    }
}

/// One measured-versus-predicted comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub predicted: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    fn relative(name: impl Into<String>, measured: f64, predicted: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            predicted,
            tolerance: format!("relative {tol}"),
            passed: ((measured - predicted) / predicted).abs() <= tol,
        }
    }

    fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, predicted: bound, tolerance: format!("<= {bound}"), passed: measured <= bound }
    }

    fn positive(name: impl Into<String>, measured: f64) -> Self {
        Self { name: name.into(), measured, predicted: 0.0, tolerance: "> 0".into(), passed: measured > 0.0 }
    }

    fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self { name: name.into(), measured, predicted: bound, tolerance: format!(">= {bound}"), passed: measured >= bound }
    }
}

/// Tidy table for plotting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Frame {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(|x| format!("{x:?}"))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub options: SuiteOptions,
    pub checks: Vec<Check>,
    /// Context that is reported but not judged.
    pub notes: Vec<String>,
    #[serde(skip)]
    pub frame: Frame,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const RADIUS: f64 = 0.05;

fn cdf_frame(sorted: &[f64], analytic: impl Fn(f64) -> f64) -> Frame {
    let mut f = Frame::new(&["t", "empirical_cdf", "analytic_cdf"]);
    let n = sorted.len();
    if n == 0 {
        return f;
    }
    let hi = sorted[((n as f64 * 0.995) as usize).min(n - 1)];
    for k in 0..=200 {
        let t = hi * k as f64 / 200.0;
        let below = sorted.partition_point(|&x| x <= t);
        f.rows.push(vec![t, below as f64 / n as f64, analytic(t)]);
    }
    f
}

fn single_target() -> Layout {
    Layout::Random { shape: Shape::unit_square(), count: 1, radius: RADIUS, targets: 1 }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions, exec: Execution) -> Result<Report, ExperimentError> {
    let mut rng = trial_rng(opts.seed, 0);
    let mut report =
        Report { suite: suite.name().into(), options: opts.clone(), checks: vec![], notes: vec![], frame: Frame::default() };
    match suite {
        Suite::Rate => {
            let s = sample_first_collision(&single_target(), 1.0, opts.trials, 1000.0, exec, &mut rng)?;
            let predicted = 1.0 / s.lambda_predicted;
            report.checks.push(Check::relative("mean first-collision time", s.mean(), predicted, 0.10));
            report.checks.push(Check::at_most("censored fraction", s.censored_fraction(), 0.01));
            report.notes.push(format!(
                "predicted lambda = {:.6} (2r|v|/A, A = free area; {:.6} with A = 1), measured lambda_hat = {:.6}",
                s.lambda_predicted,
                dache::stats::predicted_rate(RADIUS, 1.0, 1.0),
                1.0 / s.mean()
            ));
            let mut t = s.times.clone();
            t.sort_by(f64::total_cmp);
            let lam = s.lambda_predicted;
            report.frame = cdf_frame(&t, |x| 1.0 - (-lam * x).exp());
        }
        Suite::ExpFit => {
            let mut frame = Frame::new(&["seed", "lambda_hat", "ks_statistic", "ks_critical", "passed"]);
            let mut passes = 0;
            for k in 0..opts.seeds {
                let mut r = trial_rng(opts.seed, 1 + k as u64);
                let s = sample_first_collision(&single_target(), 1.0, opts.trials, 1000.0, exec, &mut r)?;
                let fit = fit_exponential(&s.times)?;
                passes += usize::from(fit.passed);
                frame.rows.push(vec![k as f64, fit.lambda_hat, fit.ks_statistic, fit.ks_critical, f64::from(u8::from(fit.passed))]);
            }
            let needed = (opts.seeds * 9).div_ceil(10);
            report.checks.push(Check::at_least("seeds passing KS at 5%", passes as f64, needed as f64));
            report.frame = frame;
        }
        Suite::AllCollide => {
            let n = opts.pairs.max(1);
            let layout =
                Layout::Random { shape: Shape::unit_square(), count: n as usize, radius: RADIUS, targets: n as usize };
            let s = sample_first_collision(&layout, 1.0, opts.trials, 5000.0, exec, &mut rng)?;
            let mut t = s.times.clone();
            t.sort_by(f64::total_cmp);
            let lam = s.lambda_predicted;
            let gap = sup_cdf_gap(&t, |x| all_collide_cdf(lam, n, x));
            report.checks.push(Check::at_most(format!("sup |F_emp - (1-e^-lt)^{n}|"), gap, 0.05));
            report.notes.push(format!(
                "mean all-collide time {:.4} vs H_n/lambda {:.4}; censored {}",
                s.mean(),
                expected_max_time(lam, n),
                s.censored
            ));
            report.frame = cdf_frame(&t, |x| all_collide_cdf(lam, n, x));
        }
        Suite::Mft => {
            let mut frame = Frame::new(&["n", "layout", "tau_hat", "tau_predicted"]);
            for n in [1usize, 2, 4] {
                let layouts = opts.seeds.clamp(1, 5);
                let mut ratios = Vec::new();
                for l in 0..layouts {
                    let mut r = trial_rng(opts.seed, 100 * n as u64 + l as u64);
                    let arena = place_obstacles(Shape::unit_square(), n, RADIUS, &mut r)?;
                    let m = measure_mean_free_time(&arena, 1.0, opts.trials / layouts, exec, &mut r)?;
                    frame.rows.push(vec![n as f64, l as f64, m.tau_hat, m.tau_predicted]);
                    ratios.push(m.tau_hat / m.tau_predicted);
                }
                report.checks.push(Check::relative(format!("<tau>/(A/(2rn|v|)) for n={n}"), mean(&ratios), 1.0, 0.10));
            }
            report.frame = frame;
        }
        Suite::KsEntropy => {
            let horizon = opts.horizon.unwrap_or(1e5);
            let mut frame = Frame::new(&["disk_radius", "tau_hat", "lambda_hat", "lhs", "rhs"]);
            for r in [0.05, 0.1] {
                let rel = ks_entropy_relation(r, horizon, &mut rng)?;
                report.checks.push(Check::relative(format!("<tau> lambda vs -2 ln R for R={r}"), rel.lhs, rel.rhs, 0.25));
                frame.rows.push(vec![r, rel.tau_hat, rel.lambda_hat, rel.lhs, rel.rhs]);
            }
            report.frame = frame;
        }
        Suite::GeomLimit => {
            let mut frame = Frame::new(&["p", "chi_square", "chi_critical", "ks_statistic", "ks_critical"]);
            for (p, expect_limit) in [(0.01, true), (0.05, true), (0.5, false)] {
                let g = geometric_limit_check(p, opts.trials, exec, &mut rng)?;
                report.checks.push(Check {
                    name: format!("first-success steps are geometric (p={p})"),
                    measured: g.geometric.statistic,
                    predicted: g.geometric.critical,
                    tolerance: "chi-square at 5%".into(),
                    passed: g.geometric.passed,
                });
                if expect_limit {
                    report.checks.push(Check::at_most(
                        format!("continuous limit KS (p={p})"),
                        g.exponential.ks_statistic,
                        g.exponential.ks_critical,
                    ));
                } else {
                    report.notes.push(format!(
                        "p={p}: KS {:.4} vs critical {:.4}; the exponential limit is not expected at large p",
                        g.exponential.ks_statistic, g.exponential.ks_critical
                    ));
                }
                frame.rows.push(vec![
                    p,
                    g.geometric.statistic,
                    g.geometric.critical,
                    g.exponential.ks_statistic,
                    g.exponential.ks_critical,
                ]);
            }
            report.frame = frame;
        }
        Suite::LyapunovTrend => lyapunov_trend(opts, exec, &mut report)?,
    }
    Ok(report)
}

fn lyapunov_trend(opts: &SuiteOptions, exec: Execution, report: &mut Report) -> Result<(), ExperimentError> {
    let horizon = opts.horizon.unwrap_or(2e4);
    let mut frame = Frame::new(&["obstacles", "mean_lambda_hat"]);
    let mut trend = Vec::new();
    for n in [1usize, 2, 4, 8] {
        let l = mean_lyapunov_over_layouts(Shape::unit_square(), n, RADIUS, horizon, opts.seeds, opts.seed + n as u64, exec)?;
        frame.rows.push(vec![n as f64, l]);
        trend.push(l);
    }
    let increasing = trend.windows(2).filter(|w| w[1] > w[0]).count();
    report.checks.push(Check::at_least("strictly increasing steps over n=1,2,4,8", increasing as f64, 3.0));
    report.notes.push(format!("mean lambda_hat by n: {trend:?}"));

    let singles: Vec<(&str, Arena, Option<Ball>)> = vec![
        ("sinai R=0.1", Arena::new(Shape::sinai(0.1))?, None),
        ("stadium", Arena::new(Shape::default_stadium())?, None),
        ("empty rectangle", Arena::new(Shape::unit_square())?, Some(Ball::new(0, Vec2::new(0.3, 0.4), Vec2::new(1.0, 0.0)))),
    ];
    let values = map_items(exec, &singles, |(_, arena, ball)| -> Result<f64, ChaosError> {
        let mut r = trial_rng(opts.seed, 7);
        let ball = ball.unwrap_or_else(|| dache::stats::random_ball(arena, 0, 1.0, &mut r));
        Ok(estimate_lyapunov(arena, &ball, LyapunovParams::default(), horizon, &mut r)?.lambda_hat)
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_, _>>()?;
    report.checks.push(Check::positive("lambda_hat sinai R=0.1", values[0]));
    report.checks.push(Check::positive("lambda_hat stadium", values[1]));
    report.checks.push(Check::at_most("|lambda_hat rectangle| / lambda_hat sinai", values[2].abs() / values[0], 0.05));
    report.frame = frame;
    Ok(())
}

/// Doubling |v| should halve mean convergence time. Each speed gets its
/// own seed range.
pub fn velocity_scaling(runs: usize, seed: u64, exec: Execution) -> Result<Report, ExperimentError> {
    let db = random_database(&mut trial_rng(seed, 0), 16);
    let plan = QueryPlan::count_all("t");
    let measure = |speed: f64, stream: u64| -> Result<(f64, f64), ExperimentError> {
        let times = map_trials(exec, seed ^ stream, runs, |k, _| {
            let cfg = SimulationConfig {
                shards: 8,
                balls: 8,
                obstacles: 8,
                speed,
                seed: (stream << 32) + k as u64,
                ..Default::default()
            };
            convergence_time(&cfg, &db, &plan)
        });
        let times: Vec<f64> = times.into_iter().collect::<Result<_, _>>()?;
        let epoch = setup_epoch(&SimulationConfig { shards: 8, balls: 8, obstacles: 8, speed, ..Default::default() }, &db, 0)?;
        Ok((mean(&times), epoch.pair_rate()))
    };
    let (slow, lam) = measure(1.0, 1)?;
    let (fast, _) = measure(2.0, 2)?;
    let h8: f64 = (1..=8).map(|k| 1.0 / k as f64).sum();
    let mut frame = Frame::new(&["speed", "mean_convergence_time"]);
    frame.rows = vec![vec![1.0, slow], vec![2.0, fast]];
    Ok(Report {
        suite: "velocity-scaling".into(),
        options: SuiteOptions { seed, trials: runs, ..Default::default() },
        checks: vec![Check::relative("fast / slow mean convergence time", fast / slow, 0.5, 0.10)],
        notes: vec![format!(
            "|v|=1: mean {slow:.4} vs H_8/lambda_pair {:.4} (ratio {:.3}); |v|=2: mean {fast:.4}",
            h8 / lam,
            slow * lam / h8
        )],
        frame,
    })
}

/// Epochs tried per query before giving up. A ball launched almost
/// parallel to a wall can ride a disk-free corridor past the deadline;
/// the query then moves to the next epoch, which re-randomizes the table.
pub const EPOCH_ATTEMPTS: u64 = 3;

/// Random plans over random tables, run through full epochs in both map
/// modes for several shard counts, compared with the unsharded oracle.
pub fn oracle_equivalence(
    plans: usize,
    max_rows: usize,
    shard_counts: &[usize],
    seed: u64,
    exec: Execution,
) -> Result<Report, ExperimentError> {
    #[derive(Default)]
    struct Tally {
        runs: usize,
        mismatches: usize,
        retries: usize,
        nonempty: usize,
    }
    let started = Instant::now();
    let cases: Vec<u64> = (0..plans as u64).collect();
    let outcomes = map_items(exec, &cases, |&case| -> Result<Tally, ExperimentError> {
        let mut rng = trial_rng(seed, case);
        let db = random_database(&mut rng, max_rows);
        let plan = random_plan(&mut rng);
        let want = execute_oracle(&plan, &db)?;
        let mut t = Tally { nonempty: usize::from(!want.rows.is_empty()), ..Default::default() };
        for &n in shard_counts {
            for mode in [MapMode::AtObstacle, MapMode::OnTheFly] {
                let cfg = SimulationConfig {
                    shards: n,
                    balls: n + 1,
                    obstacles: 6,
                    arena: Shape::sinai(0.1),
                    map_mode: mode,
                    seed: rng.random(),
                    ..Default::default()
                };
                let mut attempt = 0;
                let got = loop {
                    match setup_epoch(&cfg, &db, case * EPOCH_ATTEMPTS + attempt)?.run_query(&plan, 0.0) {
                        Err(OrchestratorError::ConvergenceTimeout { .. }) if attempt + 1 < EPOCH_ATTEMPTS => {
                            attempt += 1;
                            t.retries += 1;
                        }
                        other => break other?,
                    }
                };
                t.runs += 1;
                t.mismatches += usize::from(!got.result.same_answer(&want));
            }
        }
        Ok(t)
    });
    let mut total = Tally::default();
    for o in outcomes {
        let o = o?;
        total.runs += o.runs;
        total.mismatches += o.mismatches;
        total.retries += o.retries;
        total.nonempty += o.nonempty;
    }
    let secs = started.elapsed().as_secs_f64();
    Ok(Report {
        suite: "oracle-equivalence".into(),
        options: SuiteOptions { seed, trials: plans, ..Default::default() },
        checks: vec![Check::at_most("queries disagreeing with the oracle", total.mismatches as f64, 0.0)],
        notes: vec![format!(
            "{} queries, {} epoch retries after a timeout, {}/{plans} plans with non-empty answers, {secs:.1}s wall",
            total.runs, total.retries, total.nonempty
        )],
        frame: Frame::default(),
    })
}

/// Counts behind the crypto gate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateCounts {
    pub mismatched_collisions: usize,
    /// Decryptions attempted with a hit obstacle's keys that were not the
    /// ball's key.
    pub foreign_key_attempts: usize,
    pub foreign_key_plaintexts: usize,
    pub tampered_bits: usize,
    pub tamper_accepted: usize,
    pub round_trips: usize,
    pub round_trip_failures: usize,
}

/// Run epochs to convergence and attack every shard envelope: open it
/// with the keys of each wrongly hit obstacle, flip each of its bits, and
/// check the honest round trip.
pub fn crypto_gate(epochs: usize, seed: u64, exec: Execution) -> Result<GateCounts, ExperimentError> {
    let ids: Vec<u64> = (0..epochs as u64).collect();
    let per_epoch = map_items(exec, &ids, |&id| -> Result<GateCounts, ExperimentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let db = random_database(&mut rng, 24);
        let cfg = SimulationConfig { shards: 4, balls: 6, obstacles: 5, seed: rng.random(), ..Default::default() };
        let mut epoch = setup_epoch(&cfg, &db, id)?;
        epoch.run_query(&QueryPlan::count_all("t"), 0.0)?;
        let mut c = GateCounts::default();
        let cipher = ChaChaPoly;
        for ev in epoch.event_log() {
            let Surface::Obstacle(o) = ev.surface else { continue };
            let Payload::Shard(env) = &epoch.carriers()[ev.ball_id as usize].payload else { continue };
            if ev.matched {
                continue;
            }
            c.mismatched_collisions += 1;
            for k in &epoch.arena().obstacle(o).expect("logged obstacle").key_ring {
                c.foreign_key_attempts += 1;
                let key = epoch.registry().key(*k).expect("rings hold registered keys");
                c.foreign_key_plaintexts += usize::from(decrypt_shard(env, key, &cipher).is_ok());
            }
        }
        for carrier in epoch.carriers() {
            let Payload::Shard(env) = &carrier.payload else { continue };
            let key = epoch.registry().key(env.key_id).expect("registered");
            c.round_trips += 1;
            let expected = decrypt_shard(env, key, &cipher).ok().and_then(|s| serialize_shard(&s).ok());
            let ok = decrypt_shard_bytes(env, key, &cipher).ok();
            c.round_trip_failures += usize::from(expected.is_none() || ok != expected);
            for bit in 0..8 * env.ciphertext.len() {
                let mut bad = env.clone();
                bad.ciphertext[bit / 8] ^= 1 << (bit % 8);
                c.tampered_bits += 1;
                c.tamper_accepted += usize::from(decrypt_shard_bytes(&bad, key, &cipher).is_ok());
            }
            for bit in 0..8 * env.auth_tag.len() {
                let mut bad = env.clone();
                bad.auth_tag[bit / 8] ^= 1 << (bit % 8);
                c.tampered_bits += 1;
                c.tamper_accepted += usize::from(decrypt_shard_bytes(&bad, key, &cipher).is_ok());
            }
        }
        Ok(c)
    });
    let mut total = GateCounts::default();
    for c in per_epoch {
        let c = c?;
        total.mismatched_collisions += c.mismatched_collisions;
        total.foreign_key_attempts += c.foreign_key_attempts;
        total.foreign_key_plaintexts += c.foreign_key_plaintexts;
        total.tampered_bits += c.tampered_bits;
        total.tamper_accepted += c.tamper_accepted;
        total.round_trips += c.round_trips;
        total.round_trip_failures += c.round_trip_failures;
    }
    Ok(total)
}
