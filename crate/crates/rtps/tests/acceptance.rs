//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Heavy simulation-based criteria serialize on a global lock so
//! their wall-clock budgets are not distorted by parallel test threads.

use std::path::{Path, PathBuf};
use std::sync::{LazyLock, Mutex, PoisonError};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rtps::experiment::{self, MetricsReport, SweepParam, SweepRun};
use rtps::pfaocm::{self, PfaocmParams, WindowState};
use rtps::rate::RateEstimate;
use rtps::scenario::Scenario;
use rtps::sim::engine::SeriesRow;
use rtps::sim::Variant;
use rtps::social::PopularityProfile;
use rtps::FlowId;

static HEAVY: LazyLock<Mutex<()>> = LazyLock::new(|| Mutex::new(()));

fn heavy_guard() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(PoisonError::into_inner)
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("scenario loads")
}

fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion} failed: {detail}");
}

// ====================================================================
// Criterion 1: allocation exactness against a brute-force re-evaluation
// ====================================================================

#[test]
fn criterion_1_allocation_exactness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA110C);
    let mut floor_branch = 0u32;
    let mut share_branch = 0u32;

    for case in 0..1_000 {
        let m = rng.random_range(1..=25usize);
        let all_zero = case % 97 == 0;
        let centralities: Vec<f64> = (0..m)
            .map(|_| if all_zero { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        let least: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..120_000.0)).collect();
        let l_c = rng.random_range(10_000.0..2_500_000.0);

        let profile = PopularityProfile::from_centralities(centralities.clone()).unwrap();
        let alloc = experiment_alloc(l_c, &least, &profile);

        // Independent brute-force re-evaluation of Eqs. 3 and 4.
        let total_c: f64 = centralities.iter().sum();
        let shares: Vec<f64> = if total_c > 0.0 {
            centralities.iter().map(|&c| c / total_c).collect()
        } else {
            vec![1.0 / m as f64; m]
        };
        let least_total: f64 = least.iter().sum();
        let expected: Vec<f64> = if l_c >= least_total {
            floor_branch += 1;
            (0..m)
                .map(|i| shares[i] * (l_c - least_total) + least[i])
                .collect()
        } else {
            share_branch += 1;
            (0..m).map(|i| l_c * shares[i]).collect()
        };

        let total: f64 = alloc.iter().sum();
        assert!(
            (total - l_c).abs() <= 1e-9 * l_c,
            "conservation violated: sum {total} vs {l_c}"
        );
        for i in 0..m {
            assert!(
                (alloc[i] - expected[i]).abs() <= 1e-9 * l_c,
                "flow {i}: {} vs brute-force {}",
                alloc[i],
                expected[i]
            );
            if l_c >= least_total {
                assert!(alloc[i] >= least[i] - 1e-9, "least-rate floor violated");
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "criterion 1 (allocation exactness)",
        floor_branch > 50 && share_branch > 50 && elapsed < 1.0,
        &format!("1000 cases, {floor_branch} floor / {share_branch} share branch, {elapsed:.3}s"),
    );
}

fn experiment_alloc(l_c: f64, least: &[f64], profile: &PopularityProfile) -> Vec<f64> {
    rtps::drcm::compute_desired_rates(l_c, least, profile)
        .unwrap()
        .desired_rates()
        .to_vec()
}

// ====================================================================
// Criterion 2: analytic reproduction of the bandwidth-division curves
// ====================================================================

#[test]
fn criterion_2_bandwidth_division_curves() {
    let started = Instant::now();
    // Shares are binary-exact so the closed form matches bit for bit.
    let shares = [0.5, 0.3125, 0.1875];
    let profile = PopularityProfile::from_centralities(shares.to_vec()).unwrap();
    let least = [50_000.0; 3];
    let least_total = 150_000.0;

    let mut l_c = 200_000.0;
    let mut points = 0;
    while l_c <= 1_000_000.0 {
        let alloc = rtps::drcm::compute_desired_rates(l_c, &least, &profile).unwrap();
        for i in 0..3 {
            let closed_form = shares[i] * (l_c - least_total) + least[i];
            assert_eq!(
                alloc.desired(FlowId(i as u32)),
                closed_form,
                "closed form mismatch at l_c={l_c}, flow {i}"
            );
        }
        assert!(
            alloc.desired(FlowId(0)) > alloc.desired(FlowId(1))
                && alloc.desired(FlowId(0)) > alloc.desired(FlowId(2)),
            "most popular flow not strictly highest at l_c={l_c}"
        );
        points += 1;
        l_c += 50_000.0;
    }

    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "criterion 2 (bandwidth-division curves)",
        points == 17 && elapsed < 1.0,
        &format!("{points} capacity points matched exactly, {elapsed:.3}s"),
    );
}

// ====================================================================
// Criterion 3: window-engine conformance against the desk oracle
// ====================================================================

const PKT: f64 = 11_680.0;
const SIGMA: f64 = 0.3;
const THETA: f64 = 0.7;
const PHI: f64 = 3.0;

struct SynthEvent {
    arrival: f64,
    rtt_sample: Option<f64>,
    d_r: f64,
    c: f64,
    me: f64,
    out_of_order: bool,
    top_popular: bool,
    timer_expired: bool,
}

/// Straight-line transcription of the receiver-side equations and both
/// acknowledgment algorithms, written before the module implementation and
/// kept independent of it.
struct DeskOracle {
    e: f64,
    last_arrival: f64,
    srtt: f64,
    srtt_init: bool,
    tsm: f64,
    tsm_init: bool,
    w: f64,
    a: u32,
    a_prev: u32,
    da: f64,
    da_prev: f64,
    ac: u32,
    w_ref: f64,
    factor: f64,
}

impl DeskOracle {
    fn new(start: f64, base_rtt: f64) -> Self {
        Self {
            e: 0.0,
            last_arrival: start,
            srtt: base_rtt,
            srtt_init: false,
            tsm: 0.0,
            tsm_init: false,
            w: 0.0,
            a: 1,
            a_prev: 1,
            da: 0.0,
            da_prev: 0.0,
            ac: 0,
            w_ref: 0.0,
            factor: 0.0,
        }
    }

    fn lpda(&mut self) {
        let delta = self.w - self.w_ref;
        if delta > 0.0 {
            self.da = (self.da_prev - (1.0 - self.factor)).max(0.0);
        } else {
            self.da = 0.0;
        }
        self.da_prev = self.da;
        self.ac = 0;
        self.w_ref = self.w;
    }

    fn step(&mut self, ev: &SynthEvent) -> bool {
        // Receiver SRTT from the timestamp echo.
        if let Some(s) = ev.rtt_sample {
            if self.srtt_init {
                self.srtt = (1.0 - 0.125) * self.srtt + 0.125 * s;
            } else {
                self.srtt = s;
                self.srtt_init = true;
            }
        }
        // Rate estimate.
        let gap = ev.arrival - self.last_arrival;
        self.e = (PKT + self.srtt * self.e) / (self.srtt + gap);
        self.last_arrival = ev.arrival;
        // Smoothed inter-arrival.
        if self.tsm_init {
            self.tsm = (1.0 - 0.125) * self.tsm + 0.125 * gap;
        } else {
            self.tsm = gap;
            self.tsm_init = true;
        }
        // Moving average.
        self.w = SIGMA * self.w + (1.0 - SIGMA) * self.e;
        // Advertised window.
        let raw = if self.w < ev.d_r * (1.0 - SIGMA) {
            (THETA * ((ev.d_r - self.w) * self.srtt / PKT)).max(1.0) + f64::from(self.a_prev)
        } else if self.w > ev.d_r * (1.0 + SIGMA) {
            f64::from(self.a_prev) - (0.5 + (self.w - ev.d_r) * self.srtt / PKT)
        } else {
            f64::from(self.a_prev)
        };
        let rounded = raw.round();
        self.a = if rounded < 1.0 { 1 } else { rounded as u32 };
        self.a_prev = self.a;
        // Estimation ratio and factor.
        let e_r = if ev.c > ev.me * PHI {
            (ev.c - ev.me) / ev.c
        } else {
            1.0 - PHI
        };
        self.factor = ((PHI - 1.0) + e_r) / PHI;
        // Acknowledgment decision.
        if ev.timer_expired {
            self.lpda();
            return true;
        }
        if f64::from(self.ac) < self.da {
            if ev.out_of_order || (ev.top_popular && self.w < ev.d_r * (1.0 - SIGMA)) {
                self.lpda();
                return true;
            }
            self.ac += 1;
            return false;
        }
        self.ac = 0;
        let delta = self.w - self.w_ref;
        if self.w >= ev.d_r * (1.0 + SIGMA) {
            if delta > 0.0 {
                self.da = f64::from(self.a).min((1.0 - self.factor) + self.da_prev);
            } else {
                self.da = (self.da_prev - (1.0 - self.factor)).max(0.0);
            }
        } else if self.w < ev.d_r * (1.0 - SIGMA) {
            if delta > 0.0 {
                self.da = (self.da_prev - (1.0 - self.factor)).max(0.0);
            } else {
                self.da = 0.0;
            }
        }
        self.da_prev = self.da;
        true
    }
}

fn synth_trace(n: usize, seed: u64) -> Vec<SynthEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(n);
    let mut t = 0.0;
    let mut d_r = 300_000.0;
    let mut c: f64 = 400_000.0;
    let mut top_popular = true;
    for i in 0..n {
        t += rng.random_range(0.002..0.200);
        if i % 20 == 0 {
            d_r = rng.random_range(20_000.0..900_000.0);
        }
        if i % 37 == 0 {
            top_popular = rng.random_range(0.0..1.0) < 0.3;
        }
        c = (c + rng.random_range(-80_000.0..80_000.0)).clamp(1_000.0, 2_000_000.0);
        let me = rng.random_range(0.0..c * 1.2);
        events.push(SynthEvent {
            arrival: t,
            rtt_sample: (rng.random_range(0.0..1.0) < 0.3)
                .then(|| rng.random_range(0.020..0.400)),
            d_r,
            c,
            me,
            out_of_order: rng.random_range(0.0..1.0) < 0.07,
            top_popular,
            timer_expired: rng.random_range(0.0..1.0) < 0.05,
        });
    }
    events
}

#[test]
fn criterion_3_window_engine_conformance() {
    let params = PfaocmParams::default();
    let base_rtt = 0.1;
    let mut oracle = DeskOracle::new(0.0, base_rtt);
    let mut est = RateEstimate::new(0.0, base_rtt);
    let mut ws = WindowState::new();

    let trace = synth_trace(10_000, 0xF1D0);
    for (i, ev) in trace.iter().enumerate() {
        let oracle_ack = oracle.step(ev);

        if let Some(s) = ev.rtt_sample {
            est.update_srtt(s).unwrap();
        }
        let gap = ev.arrival - est.last_arrival();
        est.update_rate(PKT, ev.arrival).unwrap();
        est.update_smoothed_arrival(gap).unwrap();
        est.update_ewma(params.sigma).unwrap();
        let w = est.ewma();
        pfaocm::adjust_advertised_window(&mut ws, &params, w, ev.d_r, est.srtt(), PKT);
        let (e_r, factor) = pfaocm::compute_factor(&params, ev.c, ev.me);
        ws.e_ratio = e_r;
        ws.factor = factor;
        let decision = if ev.timer_expired {
            pfaocm::lpda(&mut ws, w)
        } else {
            pfaocm::ida(&mut ws, &params, w, ev.d_r, ev.out_of_order, ev.top_popular)
        };
        let module_ack = decision == pfaocm::AckDecision::AckNow;

        assert_eq!(
            w.to_bits(),
            oracle.w.to_bits(),
            "event {i}: ewma diverged: {} vs {}",
            w,
            oracle.w
        );
        assert_eq!(ws.awnd, oracle.a, "event {i}: advertised window diverged");
        assert_eq!(
            ws.da.to_bits(),
            oracle.da.to_bits(),
            "event {i}: delay window diverged: {} vs {}",
            ws.da,
            oracle.da
        );
        assert_eq!(module_ack, oracle_ack, "event {i}: ack decision diverged");
        assert_eq!(ws.ac, oracle.ac, "event {i}: unacked counter diverged");
    }

    verdict(
        "criterion 3 (window-engine conformance)",
        true,
        "10000 events bit-identical to the desk oracle",
    );
}

// ====================================================================
// Criterion 4: factor law
// ====================================================================

#[test]
fn criterion_4_factor_law() {
    let started = Instant::now();
    let params = PfaocmParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xFAC7);
    for _ in 0..10_000 {
        let me = rng.random_range(1.0..1_000_000.0);
        let c = rng.random_range(1.0..6.0 * me);
        let (_, factor) = pfaocm::compute_factor(&params, c, me);
        if c <= 3.0 * me {
            assert_eq!(factor, 0.0, "factor must be exactly 0 for c={c}, me={me}");
        } else {
            assert!(
                factor > 8.0 / 9.0 && factor < 1.0,
                "factor {factor} outside (8/9, 1) for c={c}, me={me}"
            );
        }
    }
    // The boundary itself settles on the congested branch.
    let (_, boundary) = pfaocm::compute_factor(&params, 300.0, 100.0);
    assert_eq!(boundary, 0.0);

    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "criterion 4 (factor law)",
        elapsed < 1.0,
        &format!("10000 samples, boundary exact, {elapsed:.3}s"),
    );
}

// ====================================================================
// Criterion 5: ACK timeliness and loss-free runs without RTOs
// ====================================================================

fn loss_free_scenario(flows: usize, hops: usize) -> Scenario {
    let mut text = String::from("duration = 60\nseed = 5\n\n[topology]\n");
    text.push_str(&format!("hops = {hops}\nhop_delay_ms = 10\n"));
    for i in 0..flows {
        text.push_str(&format!("\n[flow f{i}]\nnode = s{i}\nleast_rate_kbps = 50\n"));
    }
    text.push_str("\n[social]\nnode = r\n");
    for i in 0..flows {
        text.push_str(&format!("edge = s{i} r\n"));
    }
    Scenario::parse("lossfree", &text).unwrap()
}

#[test]
fn criterion_5_ack_timeliness() {
    let _guard = heavy_guard();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut loss_free_runs = 0;
    for (flows, hops) in [(1, 3), (3, 3), (1, 12)] {
        let sc = loss_free_scenario(flows, hops);
        for variant in Variant::ALL {
            let report = experiment::run_scenario(&sc, None, Some(variant)).unwrap();
            let wait_ok = report.max_wait_ratio <= 1.0 + 1e-9;
            let drops = report.queue_drops + report.loss_drops;
            let rto_ok = drops > 0 || report.rto_count == 0;
            if drops == 0 {
                loss_free_runs += 1;
            }
            if !(wait_ok && rto_ok) {
                ok = false;
                lines.push(format!(
                    "{} flows={flows} hops={hops}: wait_ratio={:.3} drops={drops} rtos={}",
                    variant.label(),
                    report.max_wait_ratio,
                    report.rto_count
                ));
            }
        }
    }
    verdict(
        "criterion 5 (ACK timeliness, no loss-free RTO)",
        ok && loss_free_runs >= 8,
        &if ok {
            format!("{loss_free_runs} strictly loss-free runs, all bounds held")
        } else {
            lines.join("; ")
        },
    );
}

// ====================================================================
// Criterion 6: throughput/latency orderings over the three sweeps
// ====================================================================

struct SweepStats {
    goodput: f64,
    latency: f64,
}

fn sweep_three_variants(
    sc: &Scenario,
    param: SweepParam,
    values: &[f64],
) -> Vec<(Variant, Vec<SweepRun>)> {
    [Variant::Rtps, Variant::Daap4, Variant::Dca3]
        .into_iter()
        .map(|v| {
            let runs = experiment::sweep(sc, param, values, 5, Some(v)).unwrap();
            for run in &runs {
                assert!(
                    run.report.max_wait_ratio <= 1.0 + 1e-9,
                    "ack wait bound violated in {} sweep at {}",
                    param.label(),
                    run.value
                );
            }
            (v, runs)
        })
        .collect()
}

fn aggregate(runs: &[SweepRun]) -> SweepStats {
    let n = runs.len() as f64;
    SweepStats {
        goodput: runs.iter().map(|r| r.report.total_goodput_bps).sum::<f64>() / n,
        latency: runs.iter().map(|r| r.report.mean_latency_s).sum::<f64>() / n,
    }
}

fn per_point_wins(
    rtps: &[SweepRun],
    dca3: &[SweepRun],
    values: &[f64],
) -> Vec<(f64, usize, usize)> {
    values
        .iter()
        .map(|&v| {
            let a: Vec<&SweepRun> = rtps.iter().filter(|r| r.value == v).collect();
            let b: Vec<&SweepRun> = dca3.iter().filter(|r| r.value == v).collect();
            let wins = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| {
                    assert_eq!(x.seed, y.seed);
                    x.report.total_goodput_bps > y.report.total_goodput_bps
                })
                .count();
            (v, wins, a.len())
        })
        .collect()
}

fn check_sweep(
    label: &str,
    sc: &Scenario,
    param: SweepParam,
    values: &[f64],
    failures: &mut Vec<String>,
) {
    let results = sweep_three_variants(sc, param, values);
    let stats: Vec<(Variant, SweepStats)> = results
        .iter()
        .map(|(v, runs)| (*v, aggregate(runs)))
        .collect();
    let [rtps, daap4, dca3] = [&stats[0].1, &stats[1].1, &stats[2].1];

    if !(rtps.goodput >= daap4.goodput && daap4.goodput >= dca3.goodput) {
        failures.push(format!(
            "{label}: goodput ordering rtps {:.0} / daap4 {:.0} / dca3 {:.0}",
            rtps.goodput, daap4.goodput, dca3.goodput
        ));
    }
    if !(rtps.latency <= daap4.latency && daap4.latency <= dca3.latency) {
        failures.push(format!(
            "{label}: latency ordering rtps {:.1}ms / daap4 {:.1}ms / dca3 {:.1}ms",
            rtps.latency * 1e3,
            daap4.latency * 1e3,
            dca3.latency * 1e3
        ));
    }
    for (value, wins, seeds) in per_point_wins(&results[0].1, &results[2].1, values) {
        println!("  {label} point {value}: rtps beats dca3 in {wins}/{seeds} seeds");
        if wins * 5 < seeds * 4 {
            failures.push(format!(
                "{label} point {value}: margin positive in only {wins}/{seeds} seeds"
            ));
        }
    }
}

#[test]
fn criterion_6_sweep_orderings() {
    let _guard = heavy_guard();
    let started = Instant::now();
    let mut failures = Vec::new();

    check_sweep(
        "hops sweep",
        &load("hops_sweep.scn"),
        SweepParam::Hops,
        &[3.0, 6.0, 9.0, 12.0, 15.0],
        &mut failures,
    );
    check_sweep(
        "connections sweep",
        &load("connections_sweep.scn"),
        SweepParam::Connections,
        &[1.0, 5.0, 10.0, 15.0, 20.0, 25.0],
        &mut failures,
    );
    check_sweep(
        "loss sweep",
        &load("loss_sweep.scn"),
        SweepParam::Loss,
        &[0.0, 0.02, 0.04, 0.06, 0.08, 0.10],
        &mut failures,
    );

    let elapsed = started.elapsed().as_secs_f64();
    // The 60 s budget is pinned for optimized builds; debug builds get a
    // proportional allowance.
    let budget = if cfg!(debug_assertions) { 600.0 } else { 60.0 };
    if elapsed >= budget {
        failures.push(format!("suite took {elapsed:.1}s, budget {budget}s"));
    }
    verdict(
        "criterion 6 (sweep orderings)",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("three sweeps ordered, {elapsed:.1}s")
        } else {
            failures.join(" | ")
        },
    );
}

// ====================================================================
// Criteria 7-9: bandwidth-division scenarios
// ====================================================================

fn epoch_mean(series: &[SeriesRow], flow: u32, lo: f64, hi: f64) -> f64 {
    let vals: Vec<f64> = series
        .iter()
        .filter(|r| r.flow == flow && r.t > lo && r.t <= hi)
        .map(|r| r.goodput_kbps)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn criterion_7_contention_handoff() {
    let _guard = heavy_guard();
    let sc = load("handoff.scn");
    let report = experiment::run_scenario(&sc, None, None).unwrap();

    // Within 60 s of the cap the second-most-popular flow leads.
    let b = epoch_mean(&report.series, 1, 560.0, 1000.0);
    let a = epoch_mean(&report.series, 0, 560.0, 1000.0);
    let c = epoch_mean(&report.series, 2, 560.0, 1000.0);
    let b_leads = b > a && b > c;

    // The capped flow stays at or under 330 kbps (10 s windows smooth the
    // per-epoch packet quantization).
    let mut a_windows = Vec::new();
    let mut t = 560.0;
    while t + 10.0 <= 1000.0 {
        a_windows.push(epoch_mean(&report.series, 0, t, t + 10.0));
        t += 10.0;
    }
    let a_max = a_windows.iter().cloned().fold(0.0, f64::max);

    verdict(
        "criterion 7 (contention hand-off)",
        b_leads && a_max <= 330.0,
        &format!("post-cap means A={a:.0} B={b:.0} C={c:.0} kbps, capped max {a_max:.0} kbps"),
    );
}

#[test]
fn criterion_8_rtt_independence() {
    let _guard = heavy_guard();
    let sc = load("rtt_popularity.scn");

    let delack = experiment::run_scenario(&sc, None, Some(Variant::DelAck2)).unwrap();
    let d = [
        epoch_mean(&delack.series, 0, 800.0, 1000.0),
        epoch_mean(&delack.series, 1, 800.0, 1000.0),
        epoch_mean(&delack.series, 2, 800.0, 1000.0),
    ];
    let shortest_rtt_wins = d[2] > d[0] && d[2] > d[1];

    let rtps = experiment::run_scenario(&sc, None, Some(Variant::Rtps)).unwrap();
    let r = [
        epoch_mean(&rtps.series, 0, 800.0, 1000.0),
        epoch_mean(&rtps.series, 1, 800.0, 1000.0),
        epoch_mean(&rtps.series, 2, 800.0, 1000.0),
    ];
    let most_popular_wins = r[0] > r[1] && r[0] > r[2];

    verdict(
        "criterion 8 (RTT independence)",
        shortest_rtt_wins && most_popular_wins,
        &format!(
            "delack2 last-200s A/B/C = {:.0}/{:.0}/{:.0}, rtps = {:.0}/{:.0}/{:.0} kbps",
            d[0], d[1], d[2], r[0], r[1], r[2]
        ),
    );
}

#[test]
fn criterion_9_cross_traffic_squeeze() {
    let _guard = heavy_guard();
    let sc = load("cross_traffic.scn");
    let report = experiment::run_scenario(&sc, None, None).unwrap();

    let pre: Vec<f64> = (0..3)
        .map(|f| epoch_mean(&report.series, f, 200.0, 500.0))
        .collect();
    let post: Vec<f64> = (0..3)
        .map(|f| epoch_mean(&report.series, f, 700.0, 1000.0))
        .collect();
    let all_lower = (0..3).all(|f| post[f] < pre[f]);
    let ordered = post[0] > post[1] && post[1] > post[2];

    verdict(
        "criterion 9 (cross-traffic squeeze)",
        all_lower && ordered && report.udp_sent > 0,
        &format!(
            "pre {:.0}/{:.0}/{:.0} kbps, post {:.0}/{:.0}/{:.0} kbps, udp {} packets",
            pre[0], pre[1], pre[2], post[0], post[1], post[2], report.udp_sent
        ),
    );
}

// ====================================================================
// Criterion 10: overhead ratios at scale
// ====================================================================

#[test]
fn criterion_10_overhead_ratios() {
    let _guard = heavy_guard();
    let sc = load("overhead.scn");
    let values = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0];
    let results = sweep_three_variants(&sc, SweepParam::Connections, &values);
    let by_variant = |variant: Variant| -> &Vec<SweepRun> {
        &results.iter().find(|(v, _)| *v == variant).unwrap().1
    };

    let mut failures = Vec::new();
    for &value in &values {
        let pick = |variant: Variant| -> Vec<&MetricsReport> {
            by_variant(variant)
                .iter()
                .filter(|r| r.value == value)
                .map(|r| &r.report)
                .collect()
        };
        let rtps = pick(Variant::Rtps);
        let dca3 = pick(Variant::Dca3);
        let daap4 = pick(Variant::Daap4);
        let mean_ack = |rs: &[&MetricsReport]| {
            rs.iter().map(|r| r.ack_overhead).sum::<f64>() / rs.len() as f64
        };
        let (ra, d3a, d4a) = (mean_ack(&rtps), mean_ack(&dca3), mean_ack(&daap4));
        println!("  overhead point {value}: ack rtps {ra:.3} dca3 {d3a:.3} daap4 {d4a:.3}");
        if value >= 10.0 && !(ra < d3a && ra < d4a) {
            failures.push(format!(
                "ack overhead at {value} connections: rtps {ra:.3} not below dca3 {d3a:.3} / daap4 {d4a:.3}"
            ));
        }
        if value >= 15.0 {
            let coord_wins = rtps
                .iter()
                .zip(&dca3)
                .zip(&daap4)
                .filter(|((r, d3), d4)| {
                    r.coordination_overhead < d3.coordination_overhead
                        && r.coordination_overhead < d4.coordination_overhead
                })
                .count();
            println!("  overhead point {value}: coordination lowest in {coord_wins}/5 seeds");
            if coord_wins < 4 {
                failures.push(format!(
                    "coordination overhead at {value} connections lowest in only {coord_wins}/5 seeds"
                ));
            }
        }
    }

    verdict(
        "criterion 10 (overhead ratios)",
        failures.is_empty(),
        &if failures.is_empty() {
            "ack and coordination overhead ordered at scale".to_string()
        } else {
            failures.join(" | ")
        },
    );
}

// ====================================================================
// Criterion 11: byte-identical replays
// ====================================================================

#[test]
fn criterion_11_determinism() {
    let _guard = heavy_guard();
    let mut sc = load("cross_traffic.scn");
    sc.duration = 120.0;
    let mut identical = true;
    let mut detail = String::new();

    for seed in [42, 1234] {
        let dirs: Vec<PathBuf> = (0..2)
            .map(|i| {
                let dir = std::env::temp_dir().join(format!("rtps-accept-det-{seed}-{i}"));
                let _ = std::fs::remove_dir_all(&dir);
                let report = experiment::run_scenario(&sc, Some(seed), None).unwrap();
                experiment::emit_run(&report, &dir).unwrap();
                dir
            })
            .collect();
        let summary_a = std::fs::read(dirs[0].join("summary.csv")).unwrap();
        let summary_b = std::fs::read(dirs[1].join("summary.csv")).unwrap();
        let ts_name = format!("cross_traffic_rtps_seed{seed}_timeseries.csv");
        let ts_a = std::fs::read(dirs[0].join(&ts_name)).unwrap();
        let ts_b = std::fs::read(dirs[1].join(&ts_name)).unwrap();
        if summary_a != summary_b || ts_a != ts_b {
            identical = false;
            detail = format!("seed {seed} produced diverging CSV output");
        }
        for dir in dirs {
            let _ = std::fs::remove_dir_all(dir);
        }
    }

    verdict(
        "criterion 11 (determinism)",
        identical,
        if detail.is_empty() {
            "two seeds, byte-identical summary and time series"
        } else {
            &detail
        },
    );
}
