//! Canned inventory and scenario documents.
//!
//! These mirror the reference testbed layout (a rack of client boards, one
//! edge workstation, two VPN gateways, one control host, SDR hosts) and are
//! used by the test suites, the docs, and `gantry example`.

use std::fmt::Write;

/// Inventory with `n_clients` client hosts (each with management, ethernet
/// and wifi interfaces), one edge server, two VPN gateways, one control
/// host, and four single-capability radios on dedicated SDR hosts.
pub fn demo_inventory_yaml(n_clients: usize) -> String {
    inventory_yaml(n_clients, 1)
}

/// Like [`demo_inventory_yaml`] but with `lte_pairs` eNB/UE radio pairs, for
/// scenarios that put many clients on LTE links (one dedicated pair each).
pub fn inventory_yaml(n_clients: usize, lte_pairs: usize) -> String {
    let mut hosts = String::new();
    let mut port = 0u16;
    let mut mac_seq = 0u16;
    let mut next_mac = || {
        mac_seq += 1;
        format!("02:00:00:00:{:02x}:{:02x}", mac_seq >> 8, mac_seq & 0xff)
    };

    for i in 1..=n_clients {
        port += 1;
        let _ = write!(
            hosts,
            "  - name: client{i:02}\n    role: workload-client\n    interfaces:\n      - {{name: mgmt0, kind: management, mac: \"{}\"}}\n      - {{name: eth0, kind: ethernet, switch_port: {port}, mac: \"{}\"}}\n      - {{name: wlan0, kind: wifi, mac: \"{}\"}}\n",
            next_mac(),
            next_mac(),
            next_mac()
        );
    }

    port += 1;
    let _ = write!(
        hosts,
        "  - name: edge01\n    role: edge-server\n    interfaces:\n      - {{name: mgmt0, kind: management, mac: \"{}\"}}\n      - {{name: eth0, kind: ethernet, switch_port: {port}, mac: \"{}\"}}\n",
        next_mac(),
        next_mac()
    );

    for (name, role) in [("gw-ctl", "gateway-control-vpn"), ("gw-wkl", "gateway-workload-vpn")] {
        port += 1;
        let _ = write!(
            hosts,
            "  - name: {name}\n    role: {role}\n    interfaces:\n      - {{name: mgmt0, kind: management, mac: \"{}\"}}\n      - {{name: eth0, kind: ethernet, switch_port: {port}, mac: \"{}\"}}\n",
            next_mac(),
            next_mac()
        );
    }

    let _ = write!(
        hosts,
        "  - name: control01\n    role: control\n    interfaces:\n      - {{name: mgmt0, kind: management, mac: \"{}\"}}\n",
        next_mac()
    );

    let mut radio_specs: Vec<(String, &str)> = vec![
        ("r-ap".to_string(), "wifi-ap"),
        ("r-sta".to_string(), "wifi-sta"),
    ];
    for p in 1..=lte_pairs {
        radio_specs.push((format!("r-enb{p:02}"), "lte-enb"));
        radio_specs.push((format!("r-ue{p:02}"), "lte-ue"));
    }

    let mut radios = String::new();
    for (i, (radio, cap)) in radio_specs.iter().enumerate() {
        port += 1;
        let sdr = format!("sdr{:02}", i + 1);
        let _ = write!(
            hosts,
            "  - name: {sdr}\n    role: sdr-compute\n    interfaces:\n      - {{name: mgmt0, kind: management, mac: \"{}\"}}\n      - {{name: eth0, kind: ethernet, switch_port: {port}, mac: \"{}\"}}\n",
            next_mac(),
            next_mac()
        );
        let _ = write!(radios, "  - {{id: {radio}, capabilities: [{cap}], attached_host: {sdr}}}\n");
    }

    format!(
        "hosts:\n{hosts}switch:\n  port_count: 48\n  vlan_id_range: [100, 999]\n  mgmt_vlan_id: 99\nradios:\n{radios}gateways:\n  control: gw-ctl\n  workload: gw-wkl\ncloud_regions: [eu-north-1, us-east-1]\npublic_ip: 203.0.113.7\nvpn_ports:\n  control: 51820\n  workload: 51821\n"
    )
}

/// Placement flavor of the demo scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoPlacement {
    Edge,
    /// Two cloud instances serve the workload.
    Cloud,
}

/// Client/server scenario: `n` clients generate load against an echo server
/// placed on the edge host or on two cloud instances. The client service
/// exits after five simulated seconds, ending the run.
pub fn demo_scenario_yaml(
    name: &str,
    n: usize,
    phy: &str,
    placement: DemoPlacement,
    output_dir: &str,
) -> String {
    let mut members = String::new();
    let mut links = String::new();
    for i in 1..=n {
        let _ = write!(members, "client{i:02}, ");
        let _ = write!(links, "  - {{client: client{i:02}, phy: {phy}, network: svcnet}}\n");
    }
    members.push_str("edge01");

    let cloud = match placement {
        DemoPlacement::Edge => String::new(),
        DemoPlacement::Cloud => {
            "cloud:\n  region: eu-north-1\n  count: 2\n  network: svcnet\n".to_string()
        }
    };
    let (server_role, server_replicas) = match placement {
        DemoPlacement::Edge => ("edge-server", 1),
        DemoPlacement::Cloud => ("cloud", 2),
    };

    format!(
        "name: {name}\nnetworks:\n  - {{name: svcnet, subnet: 10.0.1.0/24, members: [{members}]}}\nlinks:\n{links}{cloud}services:\n  - name: echo\n    image: registry.local/echo:1\n    command: []\n    replicas: {server_replicas}\n    placement_role: {server_role}\n    networks: [svcnet]\n    log_tag: echo\n  - name: load\n    image: registry.local/loadgen:1\n    command: [exit, \"0\", after, \"5\"]\n    replicas: {n}\n    placement_role: workload-client\n    networks: [svcnet]\n    volumes:\n      - {{volume: shared-data, path: /data}}\n    log_tag: load\nvolumes: [shared-data]\nstop: first-service-exit\noutput_dir: {output_dir}\n"
    )
}

/// Front-end/back-end split: clients 1..k on `frontend`, the rest plus the
/// edge on `backend`. No shared members, so the two networks must stay
/// isolated from each other.
pub fn two_network_scenario_yaml(name: &str, n: usize, split: usize, output_dir: &str) -> String {
    let mut front = String::new();
    let mut back = String::new();
    let mut links = String::new();
    for i in 1..=n {
        let net = if i <= split { "frontend" } else { "backend" };
        let target = if i <= split { &mut front } else { &mut back };
        if !target.is_empty() {
            target.push_str(", ");
        }
        let _ = write!(target, "client{i:02}");
        let _ = write!(links, "  - {{client: client{i:02}, phy: ethernet, network: {net}}}\n");
    }
    if !back.is_empty() {
        back.push_str(", ");
    }
    back.push_str("edge01");

    format!(
        "name: {name}\nnetworks:\n  - {{name: backend, subnet: 10.0.2.0/24, members: [{back}]}}\n  - {{name: frontend, subnet: 10.0.1.0/24, members: [{front}]}}\nlinks:\n{links}services:\n  - name: probe\n    image: registry.local/probe:1\n    command: [exit, \"0\", after, \"3\"]\n    replicas: {n}\n    placement_role: workload-client\n    networks: [backend]\n    log_tag: probe\nstop: first-service-exit\noutput_dir: {output_dir}\n"
    )
}
