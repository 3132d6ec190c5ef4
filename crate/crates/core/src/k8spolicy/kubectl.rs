//! Whitelisted kubectl subset over a policy set.

use super::policy::{parse_policies, validate, NetworkPolicy, PolicySet, Selector, SERVICES};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KubectlError {
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    YamlParse(String),
    #[error("Error from server (NotFound): networkpolicies.networking.k8s.io \"{0}\" not found")]
    UnknownPolicy(String),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KubectlOutput {
    pub is_write: bool,
    pub text: String,
}

const SUPPORTED: &str =
    "error: only `kubectl get|describe|apply|patch|delete` on networkpolicy (and `kubectl get pods`) are supported";

fn is_netpol(resource: &str) -> bool {
    matches!(
        resource.to_ascii_lowercase().as_str(),
        "networkpolicy" | "networkpolicies" | "netpol" | "netpols" | "networkpolicy.networking.k8s.io"
    )
}

fn usage(msg: impl Into<String>) -> KubectlError {
    KubectlError::Usage(msg.into())
}

/// Drops namespace flags for the single `default` namespace.
fn strip_namespace(args: &mut Vec<String>) -> Result<(), KubectlError> {
    let mut i = 0;
    while i < args.len() {
        let a = args[i].clone();
        let ns = if a == "-n" || a == "--namespace" {
            let v = args
                .get(i + 1)
                .cloned()
                .ok_or_else(|| usage("error: flag needs an argument: 'n' in -n"))?;
            args.drain(i..i + 2);
            Some(v)
        } else if let Some(v) = a.strip_prefix("--namespace=") {
            args.remove(i);
            Some(v.to_string())
        } else {
            i += 1;
            None
        };
        if let Some(v) = ns {
            if v != "default" {
                return Err(usage(format!("No resources found in {v} namespace.")));
            }
        }
    }
    Ok(())
}

fn output_flag(args: &mut Vec<String>) -> Result<Option<String>, KubectlError> {
    let mut out = None;
    let mut i = 0;
    while i < args.len() {
        let a = args[i].clone();
        if a == "-o" || a == "--output" {
            out = Some(
                args.get(i + 1)
                    .cloned()
                    .ok_or_else(|| usage("error: flag needs an argument: 'o' in -o"))?,
            );
            args.drain(i..i + 2);
        } else if let Some(v) = a
            .strip_prefix("--output=")
            .or_else(|| a.strip_prefix("-o="))
            .or_else(|| a.strip_prefix("-o"))
        {
            out = Some(v.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(out)
}

fn selector_text(s: &Selector) -> String {
    if s.match_labels.is_empty() {
        "<none>".into()
    } else {
        s.match_labels
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn find<'a>(set: &'a PolicySet, name: &str) -> Result<&'a NetworkPolicy, KubectlError> {
    set.get(name)
        .ok_or_else(|| KubectlError::UnknownPolicy(name.to_string()))
}

fn render_table(policies: &[&NetworkPolicy]) -> String {
    let mut out = format!("{:<24}{:<32}{}", "NAME", "POD-SELECTOR", "AGE");
    for p in policies {
        out.push_str(&format!(
            "\n{:<24}{:<32}{}",
            p.name(),
            selector_text(&p.spec.pod_selector),
            "1d"
        ));
    }
    out
}

fn render_describe(p: &NetworkPolicy) -> String {
    let mut s = format!(
        "Name:         {}\nNamespace:    default\nSpec:\n  PodSelector:     {}\n",
        p.name(),
        selector_text(&p.spec.pod_selector)
    );
    let ports = |ports: &[super::policy::PortSpec]| {
        if ports.is_empty() {
            "<any> (traffic allowed to all ports)".to_string()
        } else {
            ports
                .iter()
                .map(|p| format!("{}/{}", p.port, p.protocol))
                .collect::<Vec<_>>()
                .join(", ")
        }
    };
    let peers = |peers: &[super::policy::Peer]| {
        if peers.is_empty() {
            "<any> (traffic not restricted by source)".to_string()
        } else {
            peers
                .iter()
                .map(|p| format!("PodSelector: {}", selector_text(&p.pod_selector)))
                .collect::<Vec<_>>()
                .join("\n      ")
        }
    };
    s.push_str("  Allowing ingress traffic:\n");
    if p.spec.ingress.is_empty() {
        s.push_str("    <none> (Selected pods are isolated for ingress connectivity)\n");
    }
    for (i, r) in p.spec.ingress.iter().enumerate() {
        if i > 0 {
            s.push_str("    ----------\n");
        }
        s.push_str(&format!(
            "    To Port: {}\n    From:\n      {}\n",
            ports(&r.ports),
            peers(&r.from)
        ));
    }
    s.push_str("  Allowing egress traffic:\n");
    if p.spec.egress.is_empty() {
        s.push_str("    <none> (Selected pods are isolated for egress connectivity)\n");
    }
    for (i, r) in p.spec.egress.iter().enumerate() {
        if i > 0 {
            s.push_str("    ----------\n");
        }
        s.push_str(&format!(
            "    To Port: {}\n    To:\n      {}\n",
            ports(&r.ports),
            peers(&r.to)
        ));
    }
    let types: Vec<&str> = [super::policy::PolicyType::Ingress, super::policy::PolicyType::Egress]
        .into_iter()
        .filter(|t| p.spec.governs(*t))
        .map(|t| match t {
            super::policy::PolicyType::Ingress => "Ingress",
            super::policy::PolicyType::Egress => "Egress",
        })
        .collect();
    s.push_str(&format!("  Policy Types: {}", types.join(", ")));
    s
}

fn render_pods(wide: bool) -> String {
    let mut out = format!(
        "{:<24}{:<8}{:<10}{:<10}{}",
        "NAME", "READY", "STATUS", "RESTARTS", "AGE"
    );
    if wide {
        out.push_str("   IP");
    }
    for (i, svc) in SERVICES.iter().enumerate() {
        out.push_str(&format!(
            "\n{:<24}{:<8}{:<10}{:<10}{}",
            svc.name, "1/1", "Running", "0", "1d"
        ));
        if wide {
            out.push_str(&format!("   10.244.0.{}", 10 + i));
        }
    }
    out
}

fn merge_patch(target: &mut serde_json::Value, patch: &serde_json::Value) {
    match patch {
        serde_json::Value::Object(fields) => {
            if !target.is_object() {
                *target = serde_json::Value::Object(Default::default());
            }
            let obj = target.as_object_mut().expect("object");
            for (k, v) in fields {
                if v.is_null() {
                    obj.remove(k);
                } else {
                    merge_patch(obj.entry(k.clone()).or_insert(serde_json::Value::Null), v);
                }
            }
        }
        other => *target = other.clone(),
    }
}

fn normalize(mut p: NetworkPolicy) -> Result<NetworkPolicy, KubectlError> {
    match p.metadata.namespace.as_deref() {
        None => {}
        Some("default") => p.metadata.namespace = None,
        Some(ns) => {
            return Err(usage(format!(
                "Error from server (NotFound): namespaces \"{ns}\" not found"
            )))
        }
    }
    Ok(p)
}

fn apply_yaml(set: &mut PolicySet, body: &str) -> Result<String, KubectlError> {
    let parsed = parse_policies(body).map_err(|e| KubectlError::YamlParse(e.to_string()))?;
    let parsed = parsed.into_iter().map(normalize).collect::<Result<Vec<_>, _>>()?;
    let mut lines = Vec::new();
    for p in parsed {
        let verb = match set.get(p.name()) {
            None => "created",
            Some(old) if *old == p => "unchanged",
            Some(_) => "configured",
        };
        lines.push(format!("networkpolicy.networking.k8s.io/{} {verb}", p.name()));
        set.insert(p);
    }
    Ok(lines.join("\n"))
}

/// Splits `kubectl apply -f - <<EOF ... EOF` into its YAML body.
fn heredoc_body(command: &str) -> Result<Option<String>, KubectlError> {
    let (first, rest) = command.split_once('\n').unwrap_or((command, ""));
    let Some(pos) = first.find("<<") else {
        return Ok(if rest.trim().is_empty() {
            None
        } else {
            Some(rest.to_string())
        });
    };
    let marker = first[pos + 2..]
        .trim()
        .trim_start_matches('-')
        .trim_matches(['\'', '"']);
    if marker.is_empty() {
        return Err(usage("error: heredoc marker missing"));
    }
    let mut body = Vec::new();
    for line in rest.lines() {
        if line.trim() == marker {
            return Ok(Some(body.join("\n") + "\n"));
        }
        body.push(line);
    }
    Ok(Some(body.join("\n") + "\n"))
}

/// Runs one kubectl command. On error the policy set is left untouched.
pub fn exec_kubectl(set: &mut PolicySet, command: &str) -> Result<KubectlOutput, KubectlError> {
    let command = command.trim();
    let first_line = command.lines().next().unwrap_or("");
    let head = first_line.split("<<").next().unwrap_or("");
    let source = if first_line.contains("<<") {
        head
    } else if first_line.split_whitespace().nth(1) == Some("apply") {
        first_line
    } else {
        command
    };
    let mut args = shell_words::split(source).map_err(|e| usage(format!("error: {e}")))?;
    if args.first().map(String::as_str) != Some("kubectl") {
        return Err(KubectlError::Unsupported(SUPPORTED.into()));
    }
    if args.iter().any(|a| matches!(a.as_str(), "|" | "||" | "&&" | ";" | ">")) {
        return Err(KubectlError::Unsupported(
            "error: shell operators are not supported; send one kubectl command".into(),
        ));
    }
    args.remove(0);
    strip_namespace(&mut args)?;
    let verb = args.first().cloned().unwrap_or_default();
    let read = |text: String| Ok(KubectlOutput { is_write: false, text });
    let write = |text: String| Ok(KubectlOutput { is_write: true, text });
    match verb.as_str() {
        "get" => {
            let mut rest = args[1..].to_vec();
            let output = output_flag(&mut rest)?;
            let resource = rest
                .first()
                .cloned()
                .ok_or_else(|| usage("error: You must specify the type of resource to get."))?;
            if matches!(resource.as_str(), "pods" | "pod" | "po") {
                let wide = output.as_deref() == Some("wide");
                return read(render_pods(wide));
            }
            if !is_netpol(&resource) {
                return Err(KubectlError::Unsupported(SUPPORTED.into()));
            }
            let selected: Vec<&NetworkPolicy> = if rest.len() > 1 {
                rest[1..].iter().map(|n| find(set, n)).collect::<Result<_, _>>()?
            } else {
                set.iter().collect()
            };
            match output.as_deref() {
                None | Some("wide") => read(render_table(&selected)),
                Some("yaml") => read(selected.iter().map(|p| p.to_yaml()).collect::<Vec<_>>().join("---\n")),
                Some("json") => read(
                    selected
                        .iter()
                        .map(|p| serde_json::to_string_pretty(p).expect("serializes"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                ),
                Some("name") => read(
                    selected
                        .iter()
                        .map(|p| format!("networkpolicy.networking.k8s.io/{}", p.name()))
                        .collect::<Vec<_>>()
                        .join("\n"),
                ),
                Some(other) => Err(usage(format!(
                    "error: unable to match a printer suitable for the output format \"{other}\""
                ))),
            }
        }
        "describe" => {
            let resource = args
                .get(1)
                .ok_or_else(|| usage("error: You must specify the type of resource to describe."))?;
            if !is_netpol(resource) {
                return Err(KubectlError::Unsupported(SUPPORTED.into()));
            }
            let policies: Vec<&NetworkPolicy> = if args.len() > 2 {
                args[2..].iter().map(|n| find(set, n)).collect::<Result<_, _>>()?
            } else {
                set.iter().collect()
            };
            read(
                policies
                    .into_iter()
                    .map(render_describe)
                    .collect::<Vec<_>>()
                    .join("\n\n\n"),
            )
        }
        "apply" => {
            let rest = &args[1..];
            if rest != ["-f", "-"] && rest != ["-f=-"] && rest != ["--filename=-"] && rest != ["--filename", "-"] {
                return Err(KubectlError::Unsupported(
                    "error: only `kubectl apply -f -` with the manifest inline (heredoc) is supported".into(),
                ));
            }
            let body = heredoc_body(command)?.ok_or_else(|| usage("error: no objects passed to apply"))?;
            let mut next = set.clone();
            let text = apply_yaml(&mut next, &body)?;
            *set = next;
            write(text)
        }
        "patch" => {
            let resource = args
                .get(1)
                .ok_or_else(|| usage("error: You must specify the type of resource to patch."))?;
            if !is_netpol(resource) {
                return Err(KubectlError::Unsupported(SUPPORTED.into()));
            }
            let name = args
                .get(2)
                .cloned()
                .ok_or_else(|| usage("error: resource name may not be empty"))?;
            let mut body = None;
            let mut i = 3;
            while i < args.len() {
                let a = &args[i];
                if a == "-p" || a == "--patch" {
                    body = args.get(i + 1).cloned();
                    i += 2;
                } else if let Some(v) = a.strip_prefix("--patch=").or_else(|| a.strip_prefix("-p=")) {
                    body = Some(v.to_string());
                    i += 1;
                } else if a == "--type" {
                    let t = args.get(i + 1).map(String::as_str).unwrap_or("");
                    if t != "merge" && t != "strategic" {
                        return Err(KubectlError::Unsupported(format!(
                            "error: patch type \"{t}\" is not supported; use merge"
                        )));
                    }
                    i += 2;
                } else if let Some(t) = a.strip_prefix("--type=") {
                    if t != "merge" && t != "strategic" {
                        return Err(KubectlError::Unsupported(format!(
                            "error: patch type \"{t}\" is not supported; use merge"
                        )));
                    }
                    i += 1;
                } else {
                    return Err(usage(format!("error: unknown flag: {a}")));
                }
            }
            let body = body.ok_or_else(|| usage("error: must specify -p to patch"))?;
            let current = find(set, &name)?;
            let patch: serde_json::Value = serde_yaml::from_str(&body)
                .map_err(|e| KubectlError::YamlParse(format!("error: unable to parse patch: {e}")))?;
            let mut value = serde_json::to_value(current).expect("policy serializes");
            merge_patch(&mut value, &patch);
            let patched: NetworkPolicy = serde_json::from_value(value)
                .map_err(|e| KubectlError::YamlParse(format!("error: patched object is invalid: {e}")))?;
            validate(&patched).map_err(|e| KubectlError::YamlParse(e.to_string()))?;
            let patched = normalize(patched)?;
            if patched.name() != name {
                return Err(usage("error: metadata.name may not be changed by a patch"));
            }
            let verb = if patched == *current {
                "patched (no change)"
            } else {
                "patched"
            };
            set.insert(patched);
            write(format!("networkpolicy.networking.k8s.io/{name} {verb}"))
        }
        "delete" => {
            let resource = args
                .get(1)
                .ok_or_else(|| usage("error: You must specify the type of resource to delete."))?;
            if !is_netpol(resource) {
                return Err(KubectlError::Unsupported(SUPPORTED.into()));
            }
            let names = &args[2..];
            if names.is_empty() {
                return Err(usage("error: resource(s) were provided, but no name was specified"));
            }
            for n in names {
                find(set, n)?;
            }
            let mut lines = Vec::new();
            for n in names {
                set.policies.remove(n);
                lines.push(format!("networkpolicy.networking.k8s.io \"{n}\" deleted"));
            }
            write(lines.join("\n"))
        }
        _ => Err(KubectlError::Unsupported(SUPPORTED.into())),
    }
}
