//! Experiment execution: single runs, parameter sweeps, metric reports and
//! CSV emission.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError, ScenarioFlow};
use crate::sim::engine::{RunOutcome, SeriesRow, Sim, SimError, Variant};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write outputs: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-flow slice of a run's metrics.
#[derive(Debug, Clone)]
pub struct FlowMetrics {
    pub flow: u32,
    pub goodput_bps: f64,
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    pub data_sent: u64,
    pub retx_sent: u64,
    pub acks_received: u64,
    pub acks_emitted: u64,
    pub delivered_unique: u64,
    pub rto_count: u64,
}

/// Everything measured over one run.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub scenario: String,
    pub variant: Variant,
    pub seed: u64,
    pub duration: f64,
    pub flows: Vec<FlowMetrics>,
    pub total_goodput_bps: f64,
    pub mean_goodput_bps: f64,
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    /// Acknowledgments received at the senders over data packets sent.
    pub ack_overhead: f64,
    /// Retransmitted over total transmitted data packets.
    pub coordination_overhead: f64,
    pub data_sent: u64,
    pub retx_sent: u64,
    pub acks_received: u64,
    pub delivered_unique: u64,
    pub rto_count: u64,
    pub queue_drops: u64,
    pub loss_drops: u64,
    pub max_wait_ratio: f64,
    pub udp_sent: u64,
    pub udp_delivered: u64,
    pub series: Vec<SeriesRow>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn p95(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn compile_report(
    scenario: &str,
    variant: Variant,
    seed: u64,
    outcome: RunOutcome,
) -> MetricsReport {
    let packet_bits = outcome.packet_bits as f64;
    let duration = outcome.duration;
    let mut flows = Vec::with_capacity(outcome.flows.len());
    let mut all_latencies: Vec<f64> = Vec::new();
    for (i, f) in outcome.flows.iter().enumerate() {
        let mut lat = f.latencies.clone();
        lat.sort_by(f64::total_cmp);
        all_latencies.extend_from_slice(&lat);
        flows.push(FlowMetrics {
            flow: i as u32,
            goodput_bps: f.delivered_unique as f64 * packet_bits / duration,
            mean_latency_s: mean(&lat),
            p95_latency_s: p95(&lat),
            data_sent: f.data_sent,
            retx_sent: f.retx_sent,
            acks_received: f.acks_received,
            acks_emitted: f.acks_emitted,
            delivered_unique: f.delivered_unique,
            rto_count: f.rto_count,
        });
    }
    all_latencies.sort_by(f64::total_cmp);

    let data_sent: u64 = flows.iter().map(|f| f.data_sent).sum();
    let retx_sent: u64 = flows.iter().map(|f| f.retx_sent).sum();
    let acks_received: u64 = flows.iter().map(|f| f.acks_received).sum();
    let delivered_unique: u64 = flows.iter().map(|f| f.delivered_unique).sum();
    let total_goodput_bps = delivered_unique as f64 * packet_bits / duration;

    MetricsReport {
        scenario: scenario.to_string(),
        variant,
        seed,
        duration,
        total_goodput_bps,
        mean_goodput_bps: total_goodput_bps / flows.len() as f64,
        mean_latency_s: mean(&all_latencies),
        p95_latency_s: p95(&all_latencies),
        ack_overhead: if data_sent > 0 {
            acks_received as f64 / data_sent as f64
        } else {
            0.0
        },
        coordination_overhead: if data_sent > 0 {
            retx_sent as f64 / data_sent as f64
        } else {
            0.0
        },
        data_sent,
        retx_sent,
        acks_received,
        delivered_unique,
        rto_count: flows.iter().map(|f| f.rto_count).sum(),
        queue_drops: outcome.queue_drops,
        loss_drops: outcome.loss_drops,
        max_wait_ratio: outcome.max_wait_ratio,
        udp_sent: outcome.udp_sent,
        udp_delivered: outcome.udp_delivered,
        flows,
        series: outcome.series,
    }
}

/// Runs one scenario to completion, with optional seed/variant overrides.
pub fn run_scenario(
    sc: &Scenario,
    seed: Option<u64>,
    variant: Option<Variant>,
) -> Result<MetricsReport, ExperimentError> {
    let setup = sc.to_setup(seed, variant)?;
    let outcome = Sim::new(&setup)?.run()?;
    Ok(compile_report(
        &sc.name,
        setup.variant,
        setup.seed,
        outcome,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Hops,
    Connections,
    Loss,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Hops => "hops",
            SweepParam::Connections => "connections",
            SweepParam::Loss => "loss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hops" => Some(SweepParam::Hops),
            "connections" => Some(SweepParam::Connections),
            "loss" => Some(SweepParam::Loss),
            _ => None,
        }
    }
}

/// Rewrites the scenario for one sweep point.
pub fn apply_param(sc: &Scenario, param: SweepParam, value: f64) -> Result<Scenario, ScenarioError> {
    let mut out = sc.clone();
    match param {
        SweepParam::Hops => {
            let hops = value as usize;
            if hops < 1 || value.fract() != 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "hops value {value} must be a positive integer"
                )));
            }
            out.topology.hops = hops;
        }
        SweepParam::Connections => {
            let n = value as usize;
            if n < 1 || value.fract() != 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "connections value {value} must be a positive integer"
                )));
            }
            out = with_connections(&out, n);
        }
        SweepParam::Loss => {
            if !(0.0..=1.0).contains(&value) {
                return Err(ScenarioError::Invalid(format!(
                    "loss value {value} outside [0, 1]"
                )));
            }
            out.loss.per_hop = None;
            out.loss.path = Some(value);
        }
    }
    Ok(out)
}

/// Synthesizes an `n`-connection variant of the scenario. The first flow is
/// the template; senders join a community with the receiver where sender
/// `i` links to the receiver and to every sender `j` with `i + j <= n + 1`,
/// giving earlier flows strictly-or-equal higher popularity. Starts stagger
/// by 50 ms so sends do not phase-lock.
pub fn with_connections(sc: &Scenario, n: usize) -> Scenario {
    let template = sc.flows[0].clone();
    let mut out = sc.clone();
    out.flows = (0..n)
        .map(|i| ScenarioFlow {
            name: format!("f{}", i + 1),
            node: format!("s{}", i + 1),
            least_rate_bps: template.least_rate_bps,
            start: template.start + i as f64 * 0.05,
            base_rtt: template.base_rtt,
            cap: None,
        })
        .collect();
    let mut nodes = vec!["r".to_string()];
    nodes.extend((1..=n).map(|i| format!("s{i}")));
    let mut edges = Vec::new();
    for i in 1..=n {
        edges.push((format!("s{i}"), "r".to_string()));
        for j in (i + 1)..=n {
            if i + j <= n + 1 {
                edges.push((format!("s{i}"), format!("s{j}")));
            }
        }
    }
    out.social_nodes = nodes;
    out.social_edges = edges;
    out
}

/// One sweep cell: parameter value, repetition, derived seed, its report.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub param: SweepParam,
    pub value: f64,
    pub rep: u32,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Derived seed for a sweep cell, documented for replay.
pub fn sweep_seed(base: u64, value_index: usize, rep: u32) -> u64 {
    base + 1000 * value_index as u64 + u64::from(rep)
}

/// Runs `reps` repetitions per value, each with its derived seed. Runs
/// execute in parallel; the result order is (value, rep), canonical.
pub fn sweep(
    sc: &Scenario,
    param: SweepParam,
    values: &[f64],
    reps: u32,
    variant: Option<Variant>,
) -> Result<Vec<SweepRun>, ExperimentError> {
    let mut cells = Vec::new();
    for (vi, &value) in values.iter().enumerate() {
        let scenario = apply_param(sc, param, value)?;
        for rep in 0..reps {
            cells.push((value, rep, sweep_seed(sc.seed, vi, rep), scenario.clone()));
        }
    }
    cells
        .into_par_iter()
        .map(|(value, rep, seed, scenario)| {
            let report = run_scenario(&scenario, Some(seed), variant)?;
            Ok(SweepRun {
                param,
                value,
                rep,
                seed,
                report,
            })
        })
        .collect()
}

const SUMMARY_HEADER: &str = "scenario,variant,seed,param,value,rep,flows,duration_s,\
total_goodput_kbps,mean_goodput_kbps,mean_latency_ms,p95_latency_ms,ack_overhead,\
coordination_overhead,data_sent,retx_sent,acks_received,delivered_unique,rto_count,\
queue_drops,loss_drops,max_wait_ratio,udp_sent,udp_delivered";

fn summary_row(report: &MetricsReport, param: &str, value: &str, rep: u32) -> String {
    format!(
        "{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.6},{:.6},{},{},{},{},{},{},{},{:.6},{},{}",
        report.scenario,
        report.variant.label(),
        report.seed,
        param,
        value,
        rep,
        report.flows.len(),
        report.duration,
        report.total_goodput_bps / 1000.0,
        report.mean_goodput_bps / 1000.0,
        report.mean_latency_s * 1000.0,
        report.p95_latency_s * 1000.0,
        report.ack_overhead,
        report.coordination_overhead,
        report.data_sent,
        report.retx_sent,
        report.acks_received,
        report.delivered_unique,
        report.rto_count,
        report.queue_drops,
        report.loss_drops,
        report.max_wait_ratio,
        report.udp_sent,
        report.udp_delivered,
    )
}

const SERIES_HEADER: &str = "t_s,flow_id,goodput_kbps,awnd_pkts,dawnd,acks_cum,retx_cum";

fn write_lines(path: &Path, lines: &[String]) -> Result<(), ExperimentError> {
    let mut file = std::fs::File::create(path)?;
    for line in lines {
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the per-epoch time series of one run.
pub fn write_timeseries(report: &MetricsReport, path: &Path) -> Result<(), ExperimentError> {
    let mut lines = Vec::with_capacity(report.series.len() + 1);
    lines.push(SERIES_HEADER.to_string());
    for row in &report.series {
        lines.push(format!(
            "{:.3},{},{:.3},{},{:.4},{},{}",
            row.t, row.flow, row.goodput_kbps, row.awnd, row.dawnd, row.acks_cum, row.retx_cum
        ));
    }
    write_lines(path, &lines)
}

/// Emits outputs for a single run: `summary.csv` plus one time-series file.
pub fn emit_run(report: &MetricsReport, out_dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let lines = vec![
        SUMMARY_HEADER.to_string(),
        summary_row(report, "", "", 0),
    ];
    write_lines(&out_dir.join("summary.csv"), &lines)?;
    let ts_name = format!(
        "{}_{}_seed{}_timeseries.csv",
        report.scenario,
        report.variant.label(),
        report.seed
    );
    write_timeseries(report, &out_dir.join(ts_name))
}

/// Emits outputs for a sweep: one `summary.csv` row per run plus per-run
/// time-series files.
pub fn emit_sweep(runs: &[SweepRun], out_dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let mut lines = vec![SUMMARY_HEADER.to_string()];
    for run in runs {
        lines.push(summary_row(
            &run.report,
            run.param.label(),
            &format!("{}", run.value),
            run.rep,
        ));
    }
    write_lines(&out_dir.join("summary.csv"), &lines)?;
    for run in runs {
        let ts_name = format!(
            "{}_{}_{}{}_rep{}_timeseries.csv",
            run.report.scenario,
            run.report.variant.label(),
            run.param.label(),
            run.value,
            run.rep
        );
        write_timeseries(&run.report, &out_dir.join(ts_name))?;
    }
    Ok(())
}
