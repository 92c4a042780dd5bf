//! Declarative experiment description: parsing and testbed validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inventory::{HostRole, RadioCapability, Testbed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phy {
    Ethernet,
    Wifi,
    Lte,
}

impl fmt::Display for Phy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phy::Ethernet => write!(f, "ethernet"),
            Phy::Wifi => write!(f, "wifi"),
            Phy::Lte => write!(f, "lte"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDef {
    pub name: String,
    pub subnet: Ipv4Net,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDef {
    pub client: String,
    pub phy: Phy,
    pub network: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudDef {
    pub region: String,
    pub count: u32,
    pub network: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementRole {
    WorkloadClient,
    EdgeServer,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeMount {
    pub volume: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDef {
    pub name: String,
    pub image: String,
    #[serde(default)]
    pub command: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    pub replicas: u32,
    pub placement_role: PlacementRole,
    #[serde(default)]
    pub networks: Vec<String>,
    #[serde(default)]
    pub volumes: Vec<VolumeMount>,
    pub log_tag: String,
}

/// When an experiment run is considered finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCondition {
    FirstServiceExit,
    AllServicesExit,
    AfterDuration(u64),
}

impl Default for StopCondition {
    fn default() -> Self {
        StopCondition::FirstServiceExit
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub networks: Vec<NetworkDef>,
    #[serde(default)]
    pub links: Vec<LinkDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<CloudDef>,
    #[serde(default)]
    pub services: Vec<ServiceDef>,
    #[serde(rename = "volumes", default)]
    pub shared_volumes: Vec<String>,
    #[serde(default)]
    pub stop: StopCondition,
    pub output_dir: PathBuf,
}

impl Scenario {
    pub fn network(&self, name: &str) -> Option<&NetworkDef> {
        self.networks.iter().find(|n| n.name == name)
    }

    /// Links of one network, sorted by client for deterministic planning.
    pub fn links_of(&self, network: &str) -> Vec<&LinkDef> {
        let mut v: Vec<&LinkDef> = self.links.iter().filter(|l| l.network == network).collect();
        v.sort_by(|a, b| a.client.cmp(&b.client));
        v
    }

    /// All member host names across networks, deduplicated.
    pub fn member_hosts(&self) -> BTreeSet<String> {
        self.networks.iter().flat_map(|n| n.members.iter().cloned()).collect()
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown phy: {0:?} (expected ethernet, wifi or lte)")]
    UnknownPhy(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
}

// Raw mirror of the document so that `phy` and `stop` get typed errors
// instead of opaque serde messages.
#[derive(Deserialize)]
struct RawScenario {
    name: String,
    networks: Vec<NetworkDef>,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default)]
    cloud: Option<CloudDef>,
    #[serde(default)]
    services: Vec<ServiceDef>,
    #[serde(rename = "volumes", default)]
    volumes: Vec<String>,
    #[serde(default)]
    stop: Option<RawStop>,
    output_dir: PathBuf,
}

#[derive(Deserialize)]
struct RawLink {
    client: String,
    phy: String,
    network: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawStop {
    Word(String),
    Map(BTreeMap<String, u64>),
}

fn parse_stop(raw: RawStop) -> Result<StopCondition, ScenarioError> {
    match raw {
        RawStop::Word(w) => match w.as_str() {
            "first-service-exit" => Ok(StopCondition::FirstServiceExit),
            "all-services-exit" => Ok(StopCondition::AllServicesExit),
            other => Err(ScenarioError::Schema(format!("unknown stop condition {other:?}"))),
        },
        RawStop::Map(m) => match (m.get("after-duration"), m.len()) {
            (Some(secs), 1) => Ok(StopCondition::AfterDuration(*secs)),
            _ => Err(ScenarioError::Schema("stop map must be {after-duration: <seconds>}".into())),
        },
    }
}

/// Parses a scenario document, enforcing every intra-scenario invariant.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_yaml::from_str(text).map_err(classify_yaml_error)?;

    let mut links = Vec::with_capacity(raw.links.len());
    for l in raw.links {
        let phy = match l.phy.as_str() {
            "ethernet" => Phy::Ethernet,
            "wifi" => Phy::Wifi,
            "lte" => Phy::Lte,
            other => return Err(ScenarioError::UnknownPhy(other.to_string())),
        };
        links.push(LinkDef { client: l.client, phy, network: l.network });
    }

    let stop = match raw.stop {
        Some(s) => parse_stop(s)?,
        None => StopCondition::default(),
    };

    let scenario = Scenario {
        name: raw.name,
        networks: raw.networks,
        links,
        cloud: raw.cloud,
        services: raw.services,
        shared_volumes: raw.volumes,
        stop,
        output_dir: raw.output_dir,
    };
    check_scenario_invariants(&scenario)?;
    Ok(scenario)
}

pub fn serialize_scenario(scenario: &Scenario) -> String {
    serde_yaml::to_string(scenario).expect("scenario serializes")
}

fn classify_yaml_error(e: serde_yaml::Error) -> ScenarioError {
    let message = e.to_string();
    if message.contains("missing field") {
        return ScenarioError::Schema(message);
    }
    let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
    ScenarioError::Parse { line, column, message }
}

fn check_scenario_invariants(s: &Scenario) -> Result<(), ScenarioError> {
    let mut names = BTreeSet::new();
    for net in &s.networks {
        if !names.insert(net.name.as_str()) {
            return Err(ScenarioError::Constraint(format!("duplicate network {:?}", net.name)));
        }
        if net.members.is_empty() {
            return Err(ScenarioError::Constraint(format!("network {:?} has no members", net.name)));
        }
    }
    for (i, a) in s.networks.iter().enumerate() {
        for b in &s.networks[i + 1..] {
            if a.subnet.contains(&b.subnet.network()) || b.subnet.contains(&a.subnet.network()) {
                return Err(ScenarioError::Constraint(format!(
                    "subnets of {:?} and {:?} overlap",
                    a.name, b.name
                )));
            }
        }
    }
    for link in &s.links {
        let net = s.network(&link.network).ok_or_else(|| {
            ScenarioError::Constraint(format!(
                "link for {:?} names undeclared network {:?}",
                link.client, link.network
            ))
        })?;
        if !net.members.contains(&link.client) {
            return Err(ScenarioError::Constraint(format!(
                "link client {:?} is not a member of network {:?}",
                link.client, link.network
            )));
        }
    }
    if let Some(cloud) = &s.cloud {
        if s.network(&cloud.network).is_none() {
            return Err(ScenarioError::Constraint(format!(
                "cloud names undeclared network {:?}",
                cloud.network
            )));
        }
    }
    let volumes: BTreeSet<&str> = s.shared_volumes.iter().map(String::as_str).collect();
    for svc in &s.services {
        if svc.replicas < 1 {
            return Err(ScenarioError::Constraint(format!(
                "service {:?} must have at least one replica",
                svc.name
            )));
        }
        if svc.log_tag.is_empty() {
            return Err(ScenarioError::Constraint(format!("service {:?} has empty log_tag", svc.name)));
        }
        for net in &svc.networks {
            if s.network(net).is_none() {
                return Err(ScenarioError::Constraint(format!(
                    "service {:?} names undeclared overlay network {:?}",
                    svc.name, net
                )));
            }
        }
        for mount in &svc.volumes {
            if !volumes.contains(mount.volume.as_str()) {
                return Err(ScenarioError::Constraint(format!(
                    "service {:?} mounts undeclared volume {:?}",
                    svc.name, mount.volume
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation against a testbed
// ---------------------------------------------------------------------------

/// One realizability problem. Findings are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Finding {
    UnknownHost { host: String, context: String },
    NoSwitchPort { host: String, network: String },
    InsufficientRadios { capability: RadioCapability, required: usize, available: usize },
    UnknownRegion { region: String },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::UnknownHost { host, context } => {
                write!(f, "unknown host {host:?} ({context})")
            }
            Finding::NoSwitchPort { host, network } => {
                write!(f, "{host:?} has no free switch port for network {network:?}")
            }
            Finding::InsufficientRadios { capability, required, available } => {
                write!(f, "insufficient {capability:?} radios: need {required}, have {available}")
            }
            Finding::UnknownRegion { region } => write!(f, "unknown cloud region {region:?}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_realizable(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks that a scenario can be realized on a testbed: member hosts exist,
/// wired members can get a switch port, radio capacity suffices, and the
/// cloud region is known. Pure: identical inputs yield identical reports.
pub fn validate_against(scenario: &Scenario, testbed: &Testbed) -> ValidationReport {
    let mut findings = Vec::new();

    for net in &scenario.networks {
        for member in &net.members {
            if testbed.host(member).is_err() {
                findings.push(Finding::UnknownHost {
                    host: member.clone(),
                    context: format!("member of network {:?}", net.name),
                });
            }
        }
    }
    for link in &scenario.links {
        if testbed.host(&link.client).is_err() {
            findings.push(Finding::UnknownHost {
                host: link.client.clone(),
                context: format!("client of a {} link", link.phy),
            });
        }
    }
    if !findings.is_empty() {
        // Capacity checks below assume hosts resolve.
        return ValidationReport { findings };
    }

    // Wired attachment check: every member that is not an onboard-wifi
    // station needs an ethernet interface with a switch port, one per
    // network it joins.
    let mut used_ifaces: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut nets: Vec<&NetworkDef> = scenario.networks.iter().collect();
    nets.sort_by(|a, b| a.name.cmp(&b.name));
    for net in &nets {
        let mut members = net.members.clone();
        members.sort();
        for member in &members {
            let link = scenario
                .links
                .iter()
                .find(|l| l.network == net.name && &l.client == member);
            let host = testbed.host(member).expect("checked above");
            if link.map(|l| l.phy) == Some(Phy::Wifi) && host.wifi_iface().is_some() {
                continue; // associates over the air
            }
            let used = used_ifaces.entry(host.name.as_str()).or_default();
            let free = host
                .ethernet_ifaces()
                .into_iter()
                .find(|i| !used.contains(&i.name));
            match free {
                Some(iface) => {
                    used.insert(iface.name.clone());
                }
                None => findings.push(Finding::NoSwitchPort {
                    host: member.clone(),
                    network: net.name.clone(),
                }),
            }
        }
    }

    // Radio capacity: dry-run the same deterministic allocation the
    // physical planner performs.
    if let Err(shortfall) = crate::phys::allocate_radios(scenario, testbed) {
        findings.push(Finding::InsufficientRadios {
            capability: shortfall.capability,
            required: shortfall.required,
            available: shortfall.available,
        });
    }

    if let Some(cloud) = &scenario.cloud {
        if !testbed.cloud_regions.contains(&cloud.region) {
            findings.push(Finding::UnknownRegion { region: cloud.region.clone() });
        }
    }

    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, DemoPlacement};
    use crate::inventory::load_testbed;

    fn demo(n: usize, phy: &str) -> Scenario {
        parse_scenario(&fixtures::demo_scenario_yaml("demo", n, phy, DemoPlacement::Edge, "out"))
            .unwrap()
    }

    #[test]
    fn minimal_document() {
        let s = demo(1, "ethernet");
        assert_eq!(s.links.len(), 1);
        assert!(s.cloud.is_none());
        assert_eq!(s.stop, StopCondition::FirstServiceExit);
    }

    #[test]
    fn ten_wifi_clients() {
        let text = fixtures::demo_scenario_yaml("demo", 10, "wifi", DemoPlacement::Edge, "out");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.links.len(), 10);
        assert_eq!(s.services.iter().map(|s| s.replicas).max(), Some(10));
    }

    #[test]
    fn unknown_phy_rejected() {
        let text = fixtures::demo_scenario_yaml("demo", 1, "zigbee", DemoPlacement::Edge, "out");
        match parse_scenario(&text) {
            Err(ScenarioError::UnknownPhy(p)) => assert_eq!(p, "zigbee"),
            other => panic!("expected UnknownPhy, got {other:?}"),
        }
    }

    #[test]
    fn missing_key_is_schema_error() {
        let err = parse_scenario("name: x\nnetworks: []\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Schema(_)), "got {err:?}");
    }

    #[test]
    fn bad_yaml_is_parse_error_with_location() {
        let err = parse_scenario("name: [unclosed\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { .. }), "got {err:?}");
    }

    #[test]
    fn overlapping_subnets_rejected() {
        let text = "name: x\nnetworks:\n  - {name: a, subnet: 10.0.0.0/16, members: [h1]}\n  - {name: b, subnet: 10.0.1.0/24, members: [h2]}\noutput_dir: out\n";
        assert!(matches!(parse_scenario(text), Err(ScenarioError::Constraint(_))));
    }

    #[test]
    fn link_client_must_be_member() {
        let text = "name: x\nnetworks:\n  - {name: a, subnet: 10.0.0.0/24, members: [h1]}\nlinks:\n  - {client: h2, phy: ethernet, network: a}\noutput_dir: out\n";
        assert!(matches!(parse_scenario(text), Err(ScenarioError::Constraint(_))));
    }

    #[test]
    fn round_trip_identity() {
        let s = demo(3, "wifi");
        let again = parse_scenario(&serialize_scenario(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn stop_condition_forms() {
        let base = "name: x\nnetworks:\n  - {name: a, subnet: 10.0.0.0/24, members: [h1]}\noutput_dir: out\n";
        let s = parse_scenario(&format!("{base}stop: all-services-exit\n")).unwrap();
        assert_eq!(s.stop, StopCondition::AllServicesExit);
        let s = parse_scenario(&format!("{base}stop: {{after-duration: 7}}\n")).unwrap();
        assert_eq!(s.stop, StopCondition::AfterDuration(7));
        assert!(parse_scenario(&format!("{base}stop: whenever\n")).is_err());
    }

    #[test]
    fn validate_flags_unknown_host() {
        let tb = load_testbed(&fixtures::demo_inventory_yaml(2)).unwrap();
        let text = "name: x\nnetworks:\n  - {name: a, subnet: 10.0.0.0/24, members: [client99]}\noutput_dir: out\n";
        let report = validate_against(&parse_scenario(text).unwrap(), &tb);
        assert!(matches!(report.findings[0], Finding::UnknownHost { .. }));
    }

    #[test]
    fn validate_flags_insufficient_radios() {
        // Testbed has exactly one lte-ue radio; two lte links need two.
        let tb = load_testbed(&fixtures::demo_inventory_yaml(2)).unwrap();
        let text = "name: x\nnetworks:\n  - {name: a, subnet: 10.0.0.0/24, members: [client01, client02]}\nlinks:\n  - {client: client01, phy: lte, network: a}\n  - {client: client02, phy: lte, network: a}\noutput_dir: out\n";
        let report = validate_against(&parse_scenario(text).unwrap(), &tb);
        let radios: Vec<_> = report
            .findings
            .iter()
            .filter(|f| matches!(f, Finding::InsufficientRadios { .. }))
            .collect();
        assert_eq!(radios.len(), 1, "report: {report:?}");
    }

    #[test]
    fn validate_flags_unknown_region() {
        let tb = load_testbed(&fixtures::demo_inventory_yaml(1)).unwrap();
        let text = "name: x\nnetworks:\n  - {name: a, subnet: 10.0.0.0/24, members: [client01]}\ncloud: {region: mars-1, count: 1, network: a}\noutput_dir: out\n";
        let report = validate_against(&parse_scenario(text).unwrap(), &tb);
        assert!(report.findings.iter().any(|f| matches!(f, Finding::UnknownRegion { .. })));
    }

    #[test]
    fn realizable_demo_is_clean() {
        let tb = load_testbed(&fixtures::demo_inventory_yaml(10)).unwrap();
        for phy in ["ethernet", "wifi", "lte"] {
            // lte with 10 clients exceeds radio capacity; the demo testbed
            // carries one enb/ue pair, so scale lte to a single client.
            let n = if phy == "lte" { 1 } else { 10 };
            let s = demo(n, phy);
            let report = validate_against(&s, &tb);
            assert!(report.is_realizable(), "{phy}: {:?}", report.findings);
        }
    }
}
