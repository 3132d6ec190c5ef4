//! Prompt templates for external agents.

use super::message::Observation;
use crate::model::{App, QuerySpec};

const CP_HEADER: &str = "\
You are a network engineer working on datacenter capacity planning. The \
topology is a directed graph of named nodes (types EK_JUPITER, EK_SPINE_BLOCK, \
EK_SUPER_BLOCK, EK_AGG_BLOCK, EK_PACKET_SWITCH, EK_PORT, EK_CHASSIS, \
EK_CONTROL_POINT, EK_RACK, EK_CONTROL_DOMAIN) joined by RK_CONTAINS and \
RK_CONTROL edges. Capacity of a node is the sum of physical_capacity_bps over \
every EK_PORT it contains, directly or transitively.

Legal containment: EK_JUPITER contains EK_SPINE_BLOCK and EK_SUPER_BLOCK; \
EK_SPINE_BLOCK contains EK_AGG_BLOCK and EK_PACKET_SWITCH; EK_SUPER_BLOCK \
contains EK_AGG_BLOCK; EK_AGG_BLOCK contains EK_PACKET_SWITCH; EK_CHASSIS \
contains EK_CONTROL_POINT and EK_PACKET_SWITCH; EK_CONTROL_POINT contains \
EK_PACKET_SWITCH; EK_RACK contains EK_CHASSIS; EK_PACKET_SWITCH contains \
EK_PORT; EK_CONTROL_DOMAIN contains EK_CONTROL_POINT.

Answer with a single JSON object {\"final_answer\": [...]} whose value is the \
list of operations to run, each as \"op(arg, ...)\". Available operations: \
add(name, type, parent[, key=value]), remove(name), update(name, attribute, \
integer), count(type, node), list(node), rank(node). The result of the last \
operation is your answer.";

const ROUTING_HEADER: &str = "\
You are a network engineer troubleshooting an emulated network. A router \
connects several subnets of hosts, and a misconfiguration on the router leaves \
some hosts unable to reach each other. Restore full reachability so that \
pingall reports no drops.

Start with diagnostic commands. Change configuration only once you know the \
root cause, and never break a connection that currently works.

Reply with one JSON object with the keys 'machine' and 'command'. Send exactly \
one command per reply; commands run one at a time.

Notes:
- Node names carry a prefix, for example p29_r0, p29_h1 and the interface \
p29_r0-eth1. The prefix varies between tasks.
- Do not include sudo in your commands.
- vtysh is not available.
- Do not run ping; reachability results are supplied with every turn.";

const K8S_HEADER: &str = "\
You are a network engineer fixing Kubernetes network policies for a \
microservice application. Intended communication:
- user traffic and loadgenerator reach frontend over HTTP.
- frontend communicates with the following services: checkout, ad, \
recommendation, productcatalog, cart, shipping, currency, payment and email.
- checkout talks to payment, shipping, email and currency.
- recommendation talks to productcatalog.
- cart talks to the redis cache (redis-cart).

Inspect the current policies, compare them with the intended pattern and fix \
any mismatch. Send one kubectl command per reply as a JSON object with the key \
'command'. After every command you receive its output, your earlier commands \
and the current connectivity mismatches.";

pub fn app_header(app: App) -> &'static str {
    match app {
        App::Cp => CP_HEADER,
        App::Routing => ROUTING_HEADER,
        App::K8s => K8S_HEADER,
    }
}

/// Instruction block plus the query text.
pub fn prompt_header(app: App, query: &QuerySpec) -> String {
    format!("{}\n\nTask: {}", app_header(app), query.prompt_text)
}

/// Full prompt for one turn. Pure in its inputs.
pub fn render_prompt(app: App, query: &QuerySpec, obs: &Observation) -> String {
    let mut out = prompt_header(app, query);
    let status_title = match app {
        App::Cp => "Current topology",
        App::Routing => "Latest pingall",
        App::K8s => "Connectivity status",
    };
    out.push_str(&format!("\n\n{status_title}:\n{}", obs.system_status.trim_end()));
    if !obs.history.is_empty() {
        out.push_str("\n\nPrevious commands and outputs:");
        for (i, (cmd, output)) in obs.history.iter().enumerate() {
            out.push_str(&format!("\n[{}] {cmd}\n{}", i + 1, output.trim_end()));
        }
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(app: App) -> QuerySpec {
        QuerySpec {
            id: "q".into(),
            app,
            level: 1,
            action_label: "DR".into(),
            prompt_text: "fix it".into(),
            seed: 1,
        }
    }

    fn obs() -> Observation {
        Observation {
            prompt_header: String::new(),
            system_status: "status".into(),
            history: vec![("ip addr".into(), "out".into())],
        }
    }

    #[test]
    fn routing_prompt_has_prohibitions() {
        let p = render_prompt(App::Routing, &query(App::Routing), &obs());
        assert!(p.contains("Do not include sudo"));
        assert!(p.contains("vtysh"));
        assert!(p.contains("[1] ip addr"));
    }

    #[test]
    fn k8s_prompt_lists_frontend_peers() {
        let p = render_prompt(App::K8s, &query(App::K8s), &obs());
        assert!(p.contains("checkout, ad, recommendation, productcatalog, cart"));
    }

    #[test]
    fn rendering_is_pure() {
        let q = query(App::Cp);
        assert_eq!(render_prompt(App::Cp, &q, &obs()), render_prompt(App::Cp, &q, &obs()));
    }
}
