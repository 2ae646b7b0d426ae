//! Declarative experiment scenarios.
//!
//! The file format is line oriented: top-level `key = value` pairs for the
//! run (duration, seed, variant), then sections `[topology]`, `[flow NAME]`,
//! `[social]`, `[loss]`, `[cross NAME]` and `[constants]`. Lines starting
//! with `#` are comments. Rates are kbps, delays are milliseconds, times
//! are seconds.

use std::path::Path;

use thiserror::Error;

use crate::sim::engine::{
    CapSpec, CrossTraffic, FlowSpec, ProtocolConfig, SimSetup, Topology, Variant,
};
use crate::sim::loss::{per_hop_from_path_loss, LossModel};
use crate::social::{PopularityProfile, SocialGraph};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioFlow {
    pub name: String,
    /// Social community node the sender maps to.
    pub node: String,
    pub least_rate_bps: f64,
    pub start: f64,
    pub base_rtt: Option<f64>,
    pub cap: Option<CapSpec>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossSpec {
    pub per_hop: Option<f64>,
    /// Whole-path loss rate, converted to a per-hop probability over the
    /// scenario's link count.
    pub path: Option<f64>,
    pub collision_beta: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub seed: u64,
    pub variant: Variant,
    pub topology: Topology,
    pub flows: Vec<ScenarioFlow>,
    /// All community node names: flow nodes plus extra declared ones.
    pub social_nodes: Vec<String>,
    pub social_edges: Vec<(String, String)>,
    pub loss: LossSpec,
    pub cross: Vec<CrossTraffic>,
    pub protocol: ProtocolConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: String::new(),
            duration: 1000.0,
            seed: 1,
            variant: Variant::Rtps,
            topology: Topology {
                hops: 3,
                hop_bandwidth_bps: 6e6,
                bottleneck_bps: 1e6,
                hop_delay: 0.002,
                queue_capacity: 50,
                half_duplex: true,
            },
            flows: Vec::new(),
            social_nodes: Vec::new(),
            social_edges: Vec::new(),
            loss: LossSpec::default(),
            cross: Vec::new(),
            protocol: ProtocolConfig::default(),
        }
    }
}

enum Section {
    Top,
    Topology,
    Flow(usize),
    Social,
    Loss,
    Cross(usize),
    Constants,
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ScenarioError> {
    value
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("{key}: expected a number, got '{value}'")))
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64, ScenarioError> {
    value
        .parse::<u64>()
        .map_err(|_| parse_err(line, format!("{key}: expected an integer, got '{value}'")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ScenarioError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(
            line,
            format!("{key}: expected true or false, got '{value}'"),
        )),
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, ScenarioError> {
        let mut sc = Scenario {
            name: name.to_string(),
            ..Scenario::default()
        };
        let mut section = Section::Top;
        let mut extra_nodes: Vec<String> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                    .trim();
                let mut words = header.split_whitespace();
                let kind = words.next().unwrap_or_default();
                let label = words.next().map(str::to_string);
                if words.next().is_some() {
                    return Err(parse_err(line_no, "section header has too many words"));
                }
                section = match kind {
                    "topology" => Section::Topology,
                    "social" => Section::Social,
                    "loss" => Section::Loss,
                    "constants" => Section::Constants,
                    "flow" => {
                        let label = label
                            .ok_or_else(|| parse_err(line_no, "flow section needs a name"))?;
                        if sc.flows.iter().any(|f| f.name == label) {
                            return Err(parse_err(line_no, format!("duplicate flow '{label}'")));
                        }
                        sc.flows.push(ScenarioFlow {
                            name: label.clone(),
                            node: label,
                            least_rate_bps: 50_000.0,
                            start: 0.0,
                            base_rtt: None,
                            cap: None,
                        });
                        Section::Flow(sc.flows.len() - 1)
                    }
                    "cross" => {
                        sc.cross.push(CrossTraffic {
                            rate_bps: 0.0,
                            start: 0.0,
                            stop: None,
                        });
                        Section::Cross(sc.cross.len() - 1)
                    }
                    other => {
                        return Err(parse_err(line_no, format!("unknown section '{other}'")))
                    }
                };
                continue;
            }

            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());

            match section {
                Section::Top => match key {
                    "duration" => sc.duration = parse_f64(line_no, key, value)?,
                    "seed" => sc.seed = parse_u64(line_no, key, value)?,
                    "variant" => {
                        sc.variant = Variant::parse(value).ok_or_else(|| {
                            parse_err(line_no, format!("unknown variant '{value}'"))
                        })?
                    }
                    _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                },
                Section::Topology => match key {
                    "hops" => sc.topology.hops = parse_u64(line_no, key, value)? as usize,
                    "hop_bandwidth_kbps" => {
                        sc.topology.hop_bandwidth_bps = parse_f64(line_no, key, value)? * 1000.0
                    }
                    "bottleneck_kbps" => {
                        sc.topology.bottleneck_bps = parse_f64(line_no, key, value)? * 1000.0
                    }
                    "hop_delay_ms" => {
                        sc.topology.hop_delay = parse_f64(line_no, key, value)? / 1000.0
                    }
                    "queue_capacity" => {
                        sc.topology.queue_capacity = parse_u64(line_no, key, value)? as usize
                    }
                    "half_duplex" => sc.topology.half_duplex = parse_bool(line_no, key, value)?,
                    _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                },
                Section::Flow(i) => {
                    let flow = &mut sc.flows[i];
                    match key {
                        "node" => flow.node = value.to_string(),
                        "least_rate_kbps" => {
                            flow.least_rate_bps = parse_f64(line_no, key, value)? * 1000.0;
                            if flow.least_rate_bps < 0.0 {
                                return Err(parse_err(line_no, "least rate must be non-negative"));
                            }
                        }
                        "start" => flow.start = parse_f64(line_no, key, value)?,
                        "base_rtt_ms" => {
                            flow.base_rtt = Some(parse_f64(line_no, key, value)? / 1000.0)
                        }
                        "cap_rate_kbps" => {
                            let rate = parse_f64(line_no, key, value)? * 1000.0;
                            let cap = flow.cap.get_or_insert(CapSpec {
                                start: 0.0,
                                rate_bps: 0.0,
                            });
                            cap.rate_bps = rate;
                        }
                        "cap_start" => {
                            let start = parse_f64(line_no, key, value)?;
                            let cap = flow.cap.get_or_insert(CapSpec {
                                start: 0.0,
                                rate_bps: 0.0,
                            });
                            cap.start = start;
                        }
                        _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                    }
                }
                Section::Social => match key {
                    "node" => extra_nodes.push(value.to_string()),
                    "edge" => {
                        let mut ends = value.split_whitespace();
                        let a = ends
                            .next()
                            .ok_or_else(|| parse_err(line_no, "edge needs two node names"))?;
                        let b = ends
                            .next()
                            .ok_or_else(|| parse_err(line_no, "edge needs two node names"))?;
                        if ends.next().is_some() {
                            return Err(parse_err(line_no, "edge has too many node names"));
                        }
                        sc.social_edges.push((a.to_string(), b.to_string()));
                    }
                    _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                },
                Section::Loss => match key {
                    "per_hop_loss" => sc.loss.per_hop = Some(parse_f64(line_no, key, value)?),
                    "path_loss" => sc.loss.path = Some(parse_f64(line_no, key, value)?),
                    "collision_beta" => {
                        sc.loss.collision_beta = parse_f64(line_no, key, value)?
                    }
                    _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                },
                Section::Cross(i) => {
                    let cross = &mut sc.cross[i];
                    match key {
                        "rate_kbps" => cross.rate_bps = parse_f64(line_no, key, value)? * 1000.0,
                        "start" => cross.start = parse_f64(line_no, key, value)?,
                        "stop" => cross.stop = Some(parse_f64(line_no, key, value)?),
                        _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                    }
                }
                Section::Constants => match key {
                    "epsilon" => sc.protocol.epsilon = parse_f64(line_no, key, value)?,
                    "sigma" => sc.protocol.pfaocm.sigma = parse_f64(line_no, key, value)?,
                    "theta" => sc.protocol.pfaocm.theta = parse_f64(line_no, key, value)?,
                    "phi" => sc.protocol.pfaocm.phi = parse_f64(line_no, key, value)?,
                    "f" => sc.protocol.pfaocm.tolerance = parse_f64(line_no, key, value)?,
                    "epoch" => sc.protocol.epoch = parse_f64(line_no, key, value)?,
                    "reinit_period" => {
                        sc.protocol.reinit_period = parse_f64(line_no, key, value)?
                    }
                    "packet_bytes" => {
                        sc.protocol.packet_bits = parse_u64(line_no, key, value)? * 8
                    }
                    "ack_bytes" => sc.protocol.ack_bits = parse_u64(line_no, key, value)? * 8,
                    "per_arrival_drcm" => {
                        sc.protocol.per_arrival_drcm = parse_bool(line_no, key, value)?
                    }
                    _ => return Err(parse_err(line_no, format!("unknown key '{key}'"))),
                },
            }
        }

        // Community = every flow's node plus the extra declared ones.
        let mut nodes: Vec<String> = Vec::new();
        for f in &sc.flows {
            if !nodes.contains(&f.node) {
                nodes.push(f.node.clone());
            }
        }
        for n in extra_nodes {
            if !nodes.contains(&n) {
                nodes.push(n);
            }
        }
        sc.social_nodes = nodes;

        sc.validate()?;
        Ok(sc)
    }

    fn node_index(&self, name: &str) -> Option<u32> {
        self.social_nodes
            .iter()
            .position(|n| n == name)
            .map(|i| i as u32)
    }

    /// Builds the community graph from the declared nodes and edges.
    pub fn social_graph(&self) -> Result<SocialGraph, ScenarioError> {
        let edges = self
            .social_edges
            .iter()
            .map(|(a, b)| {
                let a = self
                    .node_index(a)
                    .ok_or_else(|| ScenarioError::Invalid(format!("edge references unknown node '{a}'")))?;
                let b = self
                    .node_index(b)
                    .ok_or_else(|| ScenarioError::Invalid(format!("edge references unknown node '{b}'")))?;
                Ok((NodeId(a), NodeId(b)))
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        SocialGraph::build(self.social_nodes.len(), &edges)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    /// Per-flow degree centralities. Zero for every flow when the community
    /// is too small to define centrality (allocation then falls back to
    /// equal shares).
    pub fn centralities(&self) -> Result<Vec<f64>, ScenarioError> {
        if self.social_nodes.len() < 2 {
            return Ok(vec![0.0; self.flows.len()]);
        }
        let graph = self.social_graph()?;
        let flow_nodes: Vec<NodeId> = self
            .flows
            .iter()
            .map(|f| NodeId(self.node_index(&f.node).expect("validated")))
            .collect();
        let profile = PopularityProfile::compute(&graph, &flow_nodes)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(profile.centralities().to_vec())
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.duration <= 0.0 {
            return fail("duration must be positive".into());
        }
        if self.flows.is_empty() {
            return fail("at least one [flow] section is required".into());
        }
        if self.topology.hops < 1 {
            return fail("hops must be at least 1".into());
        }
        if self.topology.hop_bandwidth_bps <= 0.0 || self.topology.bottleneck_bps <= 0.0 {
            return fail("bandwidths must be positive".into());
        }
        if self.topology.queue_capacity < 1 {
            return fail("queue_capacity must be at least 1".into());
        }
        if self.topology.hop_delay < 0.0 {
            return fail("hop_delay_ms must be non-negative".into());
        }
        for f in &self.flows {
            if f.least_rate_bps < 0.0 {
                return fail(format!("flow '{}': negative least rate", f.name));
            }
            if f.start < 0.0 {
                return fail(format!("flow '{}': negative start time", f.name));
            }
            if let Some(rtt) = f.base_rtt {
                if rtt <= 0.0 {
                    return fail(format!("flow '{}': base RTT must be positive", f.name));
                }
            }
            if let Some(cap) = f.cap {
                if cap.rate_bps <= 0.0 {
                    return fail(format!("flow '{}': cap_rate_kbps must be positive", f.name));
                }
            }
        }
        if let (Some(_), Some(_)) = (self.loss.per_hop, self.loss.path) {
            return fail("per_hop_loss and path_loss are mutually exclusive".into());
        }
        for p in [self.loss.per_hop, self.loss.path].into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("loss rate {p} outside [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.loss.collision_beta) {
            return fail(format!(
                "collision_beta {} outside [0, 1)",
                self.loss.collision_beta
            ));
        }
        for c in &self.cross {
            if c.rate_bps <= 0.0 {
                return fail("cross traffic rate must be positive".into());
            }
            if let Some(stop) = c.stop {
                if stop <= c.start {
                    return fail("cross traffic stop must be after start".into());
                }
            }
        }
        for (a, b) in &self.social_edges {
            if a == b {
                return fail(format!("self-loop on social node '{a}'"));
            }
            for n in [a, b] {
                if self.node_index(n).is_none() {
                    return fail(format!("edge references unknown node '{n}'"));
                }
            }
        }
        if self.protocol.epsilon <= 0.0 || self.protocol.epsilon >= 1.0 {
            return fail(format!("epsilon {} outside (0, 1)", self.protocol.epsilon));
        }
        if self.protocol.epoch <= 0.0 || self.protocol.reinit_period <= 0.0 {
            return fail("epoch and reinit_period must be positive".into());
        }
        if self.protocol.packet_bits == 0 || self.protocol.ack_bits == 0 {
            return fail("packet and ack sizes must be positive".into());
        }
        self.protocol
            .pfaocm
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        // Centrality computation must succeed (or legitimately fall back).
        self.centralities()?;
        Ok(())
    }

    /// Per-hop loss probability, converting a path-level rate over this
    /// scenario's link count when that form was given.
    pub fn loss_model(&self) -> LossModel {
        let links = self.topology.hops + 1;
        let per_hop = match (self.loss.per_hop, self.loss.path) {
            (Some(p), _) => p,
            (None, Some(path)) => per_hop_from_path_loss(path, links),
            (None, None) => 0.0,
        };
        LossModel {
            per_hop_loss: per_hop,
            collision_beta: self.loss.collision_beta,
        }
    }

    /// Materializes the runnable setup, with optional seed and variant
    /// overrides.
    pub fn to_setup(
        &self,
        seed: Option<u64>,
        variant: Option<Variant>,
    ) -> Result<SimSetup, ScenarioError> {
        Ok(SimSetup {
            variant: variant.unwrap_or(self.variant),
            topology: self.topology,
            flows: self
                .flows
                .iter()
                .map(|f| FlowSpec {
                    least_rate_bps: f.least_rate_bps,
                    start: f.start,
                    base_rtt: f.base_rtt,
                    cap: f.cap,
                })
                .collect(),
            centralities: self.centralities()?,
            loss: self.loss_model(),
            cross: self.cross.clone(),
            protocol: self.protocol.clone(),
            duration: self.duration,
            seed: seed.unwrap_or(self.seed),
        })
    }
}
