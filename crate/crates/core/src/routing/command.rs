//! Whitelisted command interpreter for the router and hosts.

use std::net::Ipv4Addr;

use ipnet::Ipv4Net;

use super::ping::MIN_MTU;
use super::state::{Chain, FilterRule, Host, IpRule, NetState, Proto, Route, RuleAction, Verdict, DEFAULT_MTU};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("unknown machine `{0}`")]
    UnknownMachine(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Forbidden(String),
    /// Well-formed command rejected by the target (missing device, ...).
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub kind: CommandKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum IfcAction {
    Up,
    Down,
    Mtu(u32),
    Addr(Ipv4Net),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct RouteSpec {
    dest: Option<Ipv4Net>,
    via: Option<Ipv4Addr>,
    dev: Option<String>,
    metric: Option<u32>,
    src: Option<Ipv4Addr>,
    kernel: bool,
    onlink: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cmd {
    IfconfigShow {
        all: bool,
        dev: Option<String>,
    },
    IfconfigSet {
        dev: String,
        actions: Vec<IfcAction>,
    },
    AddrShow {
        dev: Option<String>,
    },
    AddrAdd {
        addr: Ipv4Net,
        dev: String,
    },
    AddrDel {
        addr: Ipv4Net,
        dev: String,
    },
    AddrFlush {
        dev: String,
    },
    LinkShow {
        dev: Option<String>,
    },
    LinkSet {
        dev: String,
        up: Option<bool>,
        mtu: Option<u32>,
    },
    RouteShow,
    RouteGet(Ipv4Addr),
    RouteAdd(RouteSpec),
    RouteDel(RouteSpec),
    RouteReplace(RouteSpec),
    RuleShow,
    RuleAdd(IpRule),
    RuleDel(IpRule),
    IptList {
        chain: Option<Chain>,
        rules_form: bool,
    },
    IptAppend {
        chain: Chain,
        rule: FilterRule,
    },
    IptInsert {
        chain: Chain,
        pos: usize,
        rule: FilterRule,
    },
    IptDeleteRule {
        chain: Chain,
        rule: FilterRule,
    },
    IptDeleteNum {
        chain: Chain,
        pos: usize,
    },
    IptFlush {
        chain: Option<Chain>,
    },
    SysctlRead {
        value_only: bool,
    },
    SysctlWrite {
        value: bool,
    },
    TcShow {
        dev: Option<String>,
    },
    TcAdd {
        dev: String,
        delay_ms: u32,
        replace: bool,
    },
    TcDel {
        dev: String,
    },
}

impl Cmd {
    fn kind(&self) -> CommandKind {
        match self {
            Cmd::IfconfigShow { .. }
            | Cmd::AddrShow { .. }
            | Cmd::LinkShow { .. }
            | Cmd::RouteShow
            | Cmd::RouteGet(_)
            | Cmd::RuleShow
            | Cmd::IptList { .. }
            | Cmd::SysctlRead { .. }
            | Cmd::TcShow { .. } => CommandKind::Read,
            _ => CommandKind::Write,
        }
    }
}

enum Machine<'a> {
    Router,
    Host(&'a Host),
}

fn resolve<'a>(state: &'a NetState, machine: &str) -> Result<Machine<'a>, CommandError> {
    let m = machine.trim();
    if m == state.router_name() || m == "r0" {
        return Ok(Machine::Router);
    }
    let full = if m.starts_with(&state.prefix) {
        m.to_string()
    } else {
        format!("{}{m}", state.prefix)
    };
    state
        .host(&full)
        .map(Machine::Host)
        .ok_or_else(|| CommandError::UnknownMachine(m.to_string()))
}

/// Classifies a command without running it.
pub fn classify(command: &str) -> Result<CommandKind, CommandError> {
    parse(command).map(|c| c.kind())
}

/// Runs `command` on `machine`. On error the state is left untouched.
pub fn exec_command(state: &mut NetState, machine: &str, command: &str) -> Result<CommandOutput, CommandError> {
    let cmd = parse(command)?;
    let kind = cmd.kind();
    match resolve(state, machine)? {
        Machine::Host(host) => {
            if kind == CommandKind::Write {
                return Err(CommandError::Forbidden(format!(
                    "{}: configuration changes are only possible on the router",
                    host.name
                )));
            }
            Ok(CommandOutput {
                kind,
                text: host_read(host, &cmd)?,
            })
        }
        Machine::Router => {
            if kind == CommandKind::Read {
                return Ok(CommandOutput {
                    kind,
                    text: router_read(state, &cmd)?,
                });
            }
            let mut next = state.clone();
            let text = router_write(&mut next, &cmd)?;
            *state = next;
            Ok(CommandOutput { kind, text })
        }
    }
}

// ---------------------------------------------------------------- parsing

fn perr(msg: impl Into<String>) -> CommandError {
    CommandError::Parse(msg.into())
}

fn parse(command: &str) -> Result<Cmd, CommandError> {
    let line = command.trim();
    if line.is_empty() {
        return Err(perr("empty command"));
    }
    if line.contains('\n')
        || ["&&", "||", ";", "|", "`", "$(", ">", "<"]
            .iter()
            .any(|op| line.contains(op))
    {
        return Err(perr(
            "only one plain command per turn is accepted; shell operators are not supported",
        ));
    }
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let (tool, args) = (tokens[0], &tokens[1..]);
    match tool {
        "sudo" => Err(CommandError::Forbidden(
            "sudo is not permitted; commands already run as root".into(),
        )),
        t if t.starts_with("ping") => Err(CommandError::Forbidden(
            "ping is not permitted; pingall results are provided after every command".into(),
        )),
        "vtysh" => Err(CommandError::Unsupported("vtysh: command not permitted".into())),
        "ifconfig" => parse_ifconfig(args),
        "ip" => parse_ip(args),
        "iptables" => parse_iptables(args),
        "sysctl" => parse_sysctl(args),
        "tc" => parse_tc(args),
        other => Err(CommandError::Unsupported(format!("{other}: command not supported"))),
    }
}

fn parse_u32(s: &str, what: &str) -> Result<u32, CommandError> {
    s.parse()
        .map_err(|_| perr(format!("Error: argument \"{s}\" is wrong: invalid {what}")))
}

fn parse_addr(s: &str) -> Result<Ipv4Addr, CommandError> {
    s.parse()
        .map_err(|_| perr(format!("Error: any valid address is expected rather than \"{s}\".")))
}

/// `A.B.C.D[/len]`; a bare address is a /32.
fn parse_net(s: &str) -> Result<Ipv4Net, CommandError> {
    if let Ok(n) = s.parse::<Ipv4Net>() {
        return Ok(n);
    }
    parse_addr(s).map(|a| Ipv4Net::new(a, 32).expect("valid"))
}

fn parse_prefix(s: &str) -> Result<Ipv4Net, CommandError> {
    if s == "default" || s == "all" {
        return Ok("0.0.0.0/0".parse().expect("valid"));
    }
    let n = parse_net(s)?;
    if n.trunc() != n {
        return Err(perr("Error: Invalid prefix for given prefix length."));
    }
    Ok(n)
}

fn classful_len(a: Ipv4Addr) -> u8 {
    match a.octets()[0] {
        0..=127 => 8,
        128..=191 => 16,
        _ => 24,
    }
}

fn parse_ifconfig(args: &[&str]) -> Result<Cmd, CommandError> {
    match args {
        [] => Ok(Cmd::IfconfigShow { all: false, dev: None }),
        ["-a"] => Ok(Cmd::IfconfigShow { all: true, dev: None }),
        [dev] => Ok(Cmd::IfconfigShow {
            all: true,
            dev: Some(dev.to_string()),
        }),
        [dev, rest @ ..] => {
            let mut actions = Vec::new();
            let mut i = 0;
            let mut pending_addr: Option<Ipv4Addr> = None;
            let mut explicit_len: Option<u8> = None;
            while i < rest.len() {
                match rest[i] {
                    "up" => actions.push(IfcAction::Up),
                    "down" => actions.push(IfcAction::Down),
                    "mtu" => {
                        let v = rest.get(i + 1).ok_or_else(|| perr("mtu: missing value"))?;
                        actions.push(IfcAction::Mtu(parse_u32(v, "mtu")?));
                        i += 1;
                    }
                    "netmask" => {
                        let v = rest.get(i + 1).ok_or_else(|| perr("netmask: missing value"))?;
                        let mask = parse_addr(v)?;
                        let len = u32::from(mask).leading_ones() as u8;
                        if u32::from(mask).count_ones() != u32::from(len) {
                            return Err(perr(format!("{v}: invalid netmask")));
                        }
                        explicit_len = Some(len);
                        i += 1;
                    }
                    tok if tok.chars().next().is_some_and(|c| c.is_ascii_digit()) => {
                        if let Ok(n) = tok.parse::<Ipv4Net>() {
                            pending_addr = Some(n.addr());
                            explicit_len = explicit_len.or(Some(n.prefix_len()));
                        } else {
                            pending_addr = Some(parse_addr(tok)?);
                        }
                    }
                    other => return Err(perr(format!("ifconfig: unknown option `{other}`"))),
                }
                i += 1;
            }
            if let Some(a) = pending_addr {
                let len = explicit_len.unwrap_or_else(|| classful_len(a));
                actions.insert(0, IfcAction::Addr(Ipv4Net::new(a, len).expect("len <= 32")));
            } else if explicit_len.is_some() {
                return Err(perr("ifconfig: netmask given without an address"));
            }
            Ok(Cmd::IfconfigSet {
                dev: dev.to_string(),
                actions,
            })
        }
    }
}

fn is_abbrev(tok: &str, full: &str, min: usize) -> bool {
    tok.len() >= min && full.starts_with(tok)
}

fn take_dev<'a>(args: &[&'a str]) -> Result<(Option<&'a str>, Vec<&'a str>), CommandError> {
    let mut dev = None;
    let mut rest = Vec::new();
    let mut i = 0;
    while i < args.len() {
        if args[i] == "dev" {
            dev = Some(
                *args
                    .get(i + 1)
                    .ok_or_else(|| perr("Command line is not complete. Try option \"help\""))?,
            );
            i += 2;
        } else {
            rest.push(args[i]);
            i += 1;
        }
    }
    Ok((dev, rest))
}

fn parse_ip(args: &[&str]) -> Result<Cmd, CommandError> {
    let mut args: Vec<&str> = args.to_vec();
    while let Some(first) = args.first() {
        match *first {
            "-4" | "-c" | "-color" | "-d" | "-details" => {
                args.remove(0);
            }
            opt if opt.starts_with('-') => return Err(perr(format!("Option \"{opt}\" is unknown, try \"ip -help\"."))),
            _ => break,
        }
    }
    let Some((object, rest)) = args.split_first() else {
        return Err(perr("Usage: ip [ OPTIONS ] OBJECT { COMMAND | help }"));
    };
    let rest: Vec<&str> = rest.to_vec();
    let verb = rest.first().copied().unwrap_or("show");
    let tail = if rest.is_empty() { &[][..] } else { &rest[1..] };
    let is_show = |v: &str| matches!(v, "show" | "list" | "ls" | "lst" | "sh");

    if is_abbrev(object, "address", 1) || *object == "addr" {
        match verb {
            v if is_show(v) => {
                let (dev, extra) = take_dev(tail)?;
                let dev = dev.or(extra.first().copied());
                Ok(Cmd::AddrShow {
                    dev: dev.map(str::to_string),
                })
            }
            "add" | "del" | "delete" => {
                let (dev, extra) = take_dev(tail)?;
                let dev = dev.ok_or_else(|| perr("Not enough information: \"dev\" argument is required."))?;
                let mut addr = None;
                let mut i = 0;
                while i < extra.len() {
                    match extra[i] {
                        "brd" | "broadcast" | "scope" | "label" => i += 1,
                        tok => {
                            if addr.is_some() {
                                return Err(perr(format!(
                                    "Error: either \"local\" is duplicate, or \"{tok}\" is a garbage."
                                )));
                            }
                            addr = Some(parse_net(tok)?);
                        }
                    }
                    i += 1;
                }
                let addr = addr.ok_or_else(|| perr("Not enough information: address is required."))?;
                Ok(if verb == "add" {
                    Cmd::AddrAdd {
                        addr,
                        dev: dev.to_string(),
                    }
                } else {
                    Cmd::AddrDel {
                        addr,
                        dev: dev.to_string(),
                    }
                })
            }
            "flush" => {
                let (dev, extra) = take_dev(tail)?;
                let dev = dev
                    .or(extra.first().copied())
                    .ok_or_else(|| perr("Flush requires arguments."))?;
                Ok(Cmd::AddrFlush { dev: dev.to_string() })
            }
            other => Err(perr(format!(
                "Command \"{other}\" is unknown, try \"ip address help\"."
            ))),
        }
    } else if *object == "r" || is_abbrev(object, "route", 2) {
        match verb {
            v if is_show(v) => {
                if tail.iter().any(|t| !matches!(*t, "table" | "main")) {
                    return Err(perr("only `ip route show` of the main table is supported"));
                }
                Ok(Cmd::RouteShow)
            }
            "get" => match tail {
                [a] => Ok(Cmd::RouteGet(parse_addr(a)?)),
                _ => Err(perr("Usage: ip route get ADDRESS")),
            },
            "add" | "del" | "delete" | "replace" => {
                let spec = parse_route_spec(tail)?;
                Ok(match verb {
                    "add" => Cmd::RouteAdd(spec),
                    "replace" => Cmd::RouteReplace(spec),
                    _ => Cmd::RouteDel(spec),
                })
            }
            other => Err(perr(format!("Command \"{other}\" is unknown, try \"ip route help\"."))),
        }
    } else if *object == "l" || is_abbrev(object, "link", 2) {
        match verb {
            v if is_show(v) => {
                let (dev, extra) = take_dev(tail)?;
                let dev = dev.or(extra.first().copied());
                Ok(Cmd::LinkShow {
                    dev: dev.map(str::to_string),
                })
            }
            "set" => {
                let (dev, extra) = take_dev(tail)?;
                let mut extra = extra.into_iter();
                let dev = match dev {
                    Some(d) => d,
                    None => extra
                        .next()
                        .ok_or_else(|| perr("Not enough information: \"dev\" argument is required."))?,
                };
                let (mut up, mut mtu) = (None, None);
                while let Some(tok) = extra.next() {
                    match tok {
                        "up" => up = Some(true),
                        "down" => up = Some(false),
                        "mtu" => {
                            let v = extra.next().ok_or_else(|| perr("mtu: missing value"))?;
                            mtu = Some(parse_u32(v, "mtu")?);
                        }
                        other => {
                            return Err(perr(format!(
                                "Error: either \"dev\" is duplicate, or \"{other}\" is a garbage."
                            )))
                        }
                    }
                }
                if up.is_none() && mtu.is_none() {
                    return Err(perr("ip link set: nothing to change"));
                }
                Ok(Cmd::LinkSet {
                    dev: dev.to_string(),
                    up,
                    mtu,
                })
            }
            other => Err(perr(format!("Command \"{other}\" is unknown, try \"ip link help\"."))),
        }
    } else if is_abbrev(object, "rule", 2) {
        match verb {
            v if is_show(v) => Ok(Cmd::RuleShow),
            "add" | "del" | "delete" => {
                let rule = parse_ip_rule(tail)?;
                Ok(if verb == "add" {
                    Cmd::RuleAdd(rule)
                } else {
                    Cmd::RuleDel(rule)
                })
            }
            other => Err(perr(format!("Command \"{other}\" is unknown, try \"ip rule help\"."))),
        }
    } else {
        Err(CommandError::Unsupported(format!("ip {object}: object not supported")))
    }
}

fn parse_route_spec(args: &[&str]) -> Result<RouteSpec, CommandError> {
    let mut spec = RouteSpec::default();
    let mut i = 0;
    let value = |i: usize| -> Result<&str, CommandError> {
        args.get(i + 1)
            .copied()
            .ok_or_else(|| perr("Command line is not complete. Try option \"help\""))
    };
    while i < args.len() {
        match args[i] {
            "via" => {
                spec.via = Some(parse_addr(value(i)?)?);
                i += 1;
            }
            "dev" | "oif" => {
                spec.dev = Some(value(i)?.to_string());
                i += 1;
            }
            "metric" | "priority" | "preference" => {
                spec.metric = Some(parse_u32(value(i)?, "metric")?);
                i += 1;
            }
            "src" => {
                spec.src = Some(parse_addr(value(i)?)?);
                i += 1;
            }
            "proto" | "protocol" => {
                spec.kernel = value(i)? == "kernel";
                i += 1;
            }
            "scope" | "table" => {
                i += 1;
            }
            "onlink" => spec.onlink = true,
            "to" => {
                spec.dest = Some(parse_prefix(value(i)?)?);
                i += 1;
            }
            tok if spec.dest.is_none() => spec.dest = Some(parse_prefix(tok)?),
            tok => {
                return Err(perr(format!(
                    "Error: either \"to\" is duplicate, or \"{tok}\" is a garbage."
                )))
            }
        }
        i += 1;
    }
    if spec.dest.is_none() {
        return Err(perr("Error: destination prefix is required."));
    }
    Ok(spec)
}

fn parse_ip_rule(args: &[&str]) -> Result<IpRule, CommandError> {
    let mut from = None;
    let mut to = None;
    let mut action = None;
    let mut i = 0;
    let net = |s: &str| -> Result<Option<Ipv4Net>, CommandError> {
        if s == "all" {
            Ok(None)
        } else {
            parse_net(s).map(|n| Some(n.trunc()))
        }
    };
    while i < args.len() {
        match args[i] {
            "from" | "to" => {
                let v = args.get(i + 1).ok_or_else(|| perr("Command line is not complete."))?;
                if args[i] == "from" {
                    from = net(v)?;
                } else {
                    to = net(v)?;
                }
                i += 1;
            }
            "pref" | "priority" | "preference" => {
                args.get(i + 1).ok_or_else(|| perr("Command line is not complete."))?;
                i += 1;
            }
            "type" => {
                i += 1;
                continue;
            }
            "prohibit" => action = Some(RuleAction::Prohibit),
            "blackhole" => action = Some(RuleAction::Blackhole),
            "unreachable" => action = Some(RuleAction::Unreachable),
            "lookup" | "table" => {
                return Err(CommandError::Unsupported(
                    "policy routing tables are not available; only prohibit, blackhole and unreachable rules".into(),
                ))
            }
            other => {
                return Err(perr(format!(
                    "Error: argument \"{other}\" is wrong: Failed to parse rule type"
                )))
            }
        }
        i += 1;
    }
    let action = action.ok_or_else(|| perr("Error: rule action (prohibit, blackhole or unreachable) is required."))?;
    Ok(IpRule { from, to, action })
}

fn parse_iptables(args: &[&str]) -> Result<Cmd, CommandError> {
    let mut i = 0;
    let mut op: Option<(&str, Option<Chain>)> = None;
    let mut rule_tokens: Vec<&str> = Vec::new();
    let mut number: Option<usize> = None;
    let chain_arg = |s: Option<&&str>| -> Result<Option<Chain>, CommandError> {
        match s {
            None => Ok(None),
            Some(c) if c.starts_with('-') => Ok(None),
            Some(c) => Chain::parse(c)
                .map(Some)
                .ok_or_else(|| CommandError::Failed("iptables: No chain/target/match by that name.".to_string())),
        }
    };
    while i < args.len() {
        match args[i] {
            "-t" | "--table" => {
                let t = args
                    .get(i + 1)
                    .ok_or_else(|| perr("iptables: option \"-t\" requires an argument"))?;
                if *t != "filter" {
                    return Err(CommandError::Unsupported(format!(
                        "iptables: table `{t}` is not available; only filter"
                    )));
                }
                i += 2;
            }
            "-n" | "-v" | "--numeric" | "--verbose" | "--line-numbers" => i += 1,
            flag @ ("-L" | "--list" | "-S" | "--list-rules" | "-F" | "--flush") => {
                if op.is_some() {
                    return Err(perr("iptables: Cannot use more than one command option."));
                }
                let chain = chain_arg(args.get(i + 1))?;
                i += if chain.is_some() { 2 } else { 1 };
                op = Some((flag, chain));
            }
            flag @ ("-A" | "--append" | "-I" | "--insert" | "-D" | "--delete") => {
                if op.is_some() {
                    return Err(perr("iptables: Cannot use more than one command option."));
                }
                let chain = chain_arg(args.get(i + 1))?
                    .ok_or_else(|| perr(format!("iptables: option \"{flag}\" requires a chain name")))?;
                op = Some((flag, Some(chain)));
                i += 2;
                if let Some(n) = args.get(i).and_then(|s| s.parse::<usize>().ok()) {
                    number = Some(n);
                    i += 1;
                }
            }
            tok => {
                rule_tokens.push(tok);
                i += 1;
            }
        }
    }
    let (flag, chain) = op.ok_or_else(|| perr("iptables: no command specified"))?;
    let rule = || parse_rule_spec(&rule_tokens);
    match flag {
        "-L" | "--list" | "-S" | "--list-rules" => {
            if !rule_tokens.is_empty() {
                return Err(perr(format!("iptables: unexpected argument `{}`", rule_tokens[0])));
            }
            Ok(Cmd::IptList {
                chain,
                rules_form: flag.starts_with("-S") || flag == "--list-rules",
            })
        }
        "-F" | "--flush" => Ok(Cmd::IptFlush { chain }),
        "-A" | "--append" => {
            if number.is_some() {
                return Err(perr("iptables: -A does not take a rule number"));
            }
            Ok(Cmd::IptAppend {
                chain: chain.expect("set"),
                rule: rule()?,
            })
        }
        "-I" | "--insert" => Ok(Cmd::IptInsert {
            chain: chain.expect("set"),
            pos: number.unwrap_or(1),
            rule: rule()?,
        }),
        _ => match number {
            Some(pos) if rule_tokens.is_empty() => Ok(Cmd::IptDeleteNum {
                chain: chain.expect("set"),
                pos,
            }),
            Some(_) => Err(perr(
                "iptables: rule number and rule specification are mutually exclusive",
            )),
            None => Ok(Cmd::IptDeleteRule {
                chain: chain.expect("set"),
                rule: rule()?,
            }),
        },
    }
}

fn parse_rule_spec(tokens: &[&str]) -> Result<FilterRule, CommandError> {
    let mut rule = FilterRule::new(Verdict::Accept);
    let mut target = None;
    let mut i = 0;
    while i < tokens.len() {
        let v = tokens
            .get(i + 1)
            .copied()
            .ok_or_else(|| perr(format!("iptables: option \"{}\" requires an argument", tokens[i])));
        match tokens[i] {
            "-s" | "--source" => rule.src = Some(parse_net(v?)?.trunc()),
            "-d" | "--destination" => rule.dst = Some(parse_net(v?)?.trunc()),
            "-p" | "--protocol" => {
                let p = v?;
                rule.proto =
                    Proto::parse(p).ok_or_else(|| perr(format!("iptables: unknown protocol \"{p}\" specified")))?;
            }
            "-i" | "--in-interface" => rule.in_iface = Some(v?.to_string()),
            "-o" | "--out-interface" => rule.out_iface = Some(v?.to_string()),
            "-j" | "--jump" => {
                let t = v?;
                target = Some(Verdict::parse(t).ok_or_else(|| {
                    CommandError::Failed(format!(
                        "iptables: Couldn't load target `{t}':No such file or directory"
                    ))
                })?);
            }
            "--reject-with" => {
                v?;
            }
            other => return Err(perr(format!("iptables: Bad argument `{other}'"))),
        }
        i += 2;
    }
    rule.target = target.ok_or_else(|| perr("iptables: a target (-j ACCEPT|DROP|REJECT) is required"))?;
    Ok(rule)
}

fn parse_sysctl(args: &[&str]) -> Result<Cmd, CommandError> {
    let mut write = false;
    let mut value_only = false;
    let mut rest = Vec::new();
    for a in args {
        match *a {
            "-w" => write = true,
            "-n" => value_only = true,
            "-q" => {}
            other => rest.push(other),
        }
    }
    let [expr] = rest[..] else {
        return Err(perr("sysctl: exactly one key is supported"));
    };
    let (key, value) = match expr.split_once('=') {
        Some((k, v)) => (k.trim(), Some(v.trim())),
        None => (expr, None),
    };
    let key = key.replace('/', ".");
    if !matches!(key.as_str(), "net.ipv4.ip_forward" | "net.ipv4.conf.all.forwarding") {
        return Err(CommandError::Failed(format!(
            "sysctl: cannot stat /proc/sys/{}: No such file or directory",
            key.replace('.', "/")
        )));
    }
    match (value, write) {
        (None, false) => Ok(Cmd::SysctlRead { value_only }),
        (None, true) => Err(perr(format!("sysctl: \"{key}\" must be of the form name=value"))),
        (Some(v), _) => match v {
            "0" => Ok(Cmd::SysctlWrite { value: false }),
            "1" => Ok(Cmd::SysctlWrite { value: true }),
            _ => Err(CommandError::Failed(format!(
                "sysctl: setting key \"{key}\": Invalid argument"
            ))),
        },
    }
}

/// Parses a tc time; bare numbers are microseconds.
fn parse_delay_ms(s: &str) -> Result<u32, CommandError> {
    let bad = || perr(format!("Illegal \"delay\" value \"{s}\""));
    let (num, scale_us) = if let Some(n) = s.strip_suffix("ms").or_else(|| s.strip_suffix("msec")) {
        (n, 1_000.0)
    } else if let Some(n) = s.strip_suffix("us").or_else(|| s.strip_suffix("usec")) {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix('s').or_else(|| s.strip_suffix("sec")) {
        (n, 1_000_000.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.parse().map_err(|_| bad())?;
    if !v.is_finite() || v < 0.0 {
        return Err(bad());
    }
    let ms = (v * scale_us / 1_000.0).ceil();
    if ms > f64::from(u32::MAX) {
        return Err(bad());
    }
    Ok(ms as u32)
}

fn parse_tc(args: &[&str]) -> Result<Cmd, CommandError> {
    let Some((&object, rest)) = args.split_first() else {
        return Err(perr("Usage: tc [ OPTIONS ] OBJECT { COMMAND | help }"));
    };
    if object != "qdisc" && object != "qd" {
        return Err(CommandError::Unsupported(format!(
            "tc {object}: object not supported; only qdisc"
        )));
    }
    let verb = rest.first().copied().unwrap_or("show");
    let tail = if rest.is_empty() { &[][..] } else { &rest[1..] };
    let (dev, extra) = take_dev(tail)?;
    match verb {
        "show" | "list" | "ls" => Ok(Cmd::TcShow {
            dev: dev.map(str::to_string),
        }),
        "add" | "replace" | "change" => {
            let dev = dev.ok_or_else(|| perr("Cannot find device \"\""))?;
            let mut delay = None;
            let mut i = 0;
            while i < extra.len() {
                match extra[i] {
                    "root" | "netem" => {}
                    "handle" => i += 1,
                    "delay" => {
                        let v = extra.get(i + 1).ok_or_else(|| perr("Illegal \"delay\""))?;
                        delay = Some(parse_delay_ms(v)?);
                        i += 1;
                    }
                    other => {
                        return Err(CommandError::Unsupported(format!(
                            "tc: `{other}` is not supported; only `root netem delay TIME`"
                        )))
                    }
                }
                i += 1;
            }
            if !extra.contains(&"netem") {
                return Err(CommandError::Unsupported(
                    "tc: only the netem qdisc is supported".into(),
                ));
            }
            Ok(Cmd::TcAdd {
                dev: dev.to_string(),
                delay_ms: delay.unwrap_or(0),
                replace: verb != "add",
            })
        }
        "del" | "delete" => {
            let dev = dev.ok_or_else(|| perr("Cannot find device \"\""))?;
            Ok(Cmd::TcDel { dev: dev.to_string() })
        }
        other => Err(perr(format!("Command \"{other}\" is unknown, try \"tc qdisc help\"."))),
    }
}

// ---------------------------------------------------------------- rendering

fn mask_of(len: u8) -> Ipv4Addr {
    Ipv4Net::new(Ipv4Addr::UNSPECIFIED, len).expect("valid").netmask()
}

fn render_route(r: &Route, state: &NetState) -> String {
    let mut s = r.dest.to_string();
    if r.dest.prefix_len() == 0 {
        s = "default".into();
    }
    if let Some(v) = r.via {
        s.push_str(&format!(" via {v}"));
    }
    s.push_str(&format!(" dev {}", r.dev));
    if r.kernel {
        s.push_str(" proto kernel");
    }
    if r.via.is_none() {
        s.push_str(" scope link");
    }
    if let Some(src) = r.src {
        s.push_str(&format!(" src {src}"));
    }
    if r.metric != 0 {
        s.push_str(&format!(" metric {}", r.metric));
    }
    if state.router.get(&r.dev).is_some_and(|i| !i.up) {
        s.push_str(" linkdown");
    }
    s
}

struct IfView<'a> {
    name: &'a str,
    index: u32,
    mac: String,
    addrs: Vec<Ipv4Net>,
    up: bool,
    mtu: u32,
    delay_ms: u32,
}

fn router_views(state: &NetState) -> Vec<IfView<'_>> {
    state
        .router
        .iter()
        .map(|(name, i)| {
            let k = state.iface_index(name).unwrap_or(0);
            IfView {
                name,
                index: k + 1,
                mac: format!("02:00:00:00:00:{k:02x}"),
                addrs: i.addrs.iter().copied().collect(),
                up: i.up,
                mtu: i.mtu,
                delay_ms: i.delay_ms,
            }
        })
        .collect()
}

fn host_view(host: &Host) -> IfView<'_> {
    let last = host.addr.addr().octets()[3];
    IfView {
        name: &host.iface,
        index: 2,
        mac: format!("02:00:00:00:{:02x}:{last:02x}", host.subnet),
        addrs: vec![host.addr],
        up: true,
        mtu: DEFAULT_MTU,
        delay_ms: 0,
    }
}

fn select<'a>(views: Vec<IfView<'a>>, dev: Option<&str>) -> Result<Vec<IfView<'a>>, CommandError> {
    match dev {
        None => Ok(views),
        Some(d) => {
            let v: Vec<_> = views.into_iter().filter(|v| v.name == d).collect();
            if v.is_empty() {
                Err(CommandError::Failed(format!("Device \"{d}\" does not exist.")))
            } else {
                Ok(v)
            }
        }
    }
}

fn render_ip_link(v: &IfView<'_>) -> String {
    let (flags, state) = if v.up {
        ("BROADCAST,MULTICAST,UP,LOWER_UP", "UP")
    } else {
        ("BROADCAST,MULTICAST", "DOWN")
    };
    let qdisc = if v.delay_ms > 0 { "netem" } else { "noqueue" };
    format!(
        "{}: {}: <{flags}> mtu {} qdisc {qdisc} state {state} mode DEFAULT group default qlen 1000\n    link/ether {} brd ff:ff:ff:ff:ff:ff",
        v.index, v.name, v.mtu, v.mac
    )
}

fn render_ip_addr(v: &IfView<'_>) -> String {
    let mut s = render_ip_link(v).replace(" mode DEFAULT", "");
    for a in &v.addrs {
        let brd = if a.prefix_len() < 31 {
            format!(" brd {}", a.broadcast())
        } else {
            String::new()
        };
        s.push_str(&format!(
            "\n    inet {a}{brd} scope global {}\n       valid_lft forever preferred_lft forever",
            v.name
        ));
    }
    s
}

fn render_ifconfig(v: &IfView<'_>) -> String {
    let flags = if v.up {
        "4163<UP,BROADCAST,RUNNING,MULTICAST>"
    } else {
        "4098<BROADCAST,MULTICAST>"
    };
    let mut s = format!("{}: flags={flags}  mtu {}\n", v.name, v.mtu);
    if let Some(a) = v.addrs.first() {
        s.push_str(&format!(
            "        inet {}  netmask {}  broadcast {}\n",
            a.addr(),
            mask_of(a.prefix_len()),
            a.broadcast()
        ));
    }
    s.push_str(&format!("        ether {}  txqueuelen 1000  (Ethernet)\n", v.mac));
    s
}

const LO_ADDR: &str = "1: lo: <LOOPBACK,UP,LOWER_UP> mtu 65536 qdisc noqueue state UNKNOWN group default qlen 1000\n    link/loopback 00:00:00:00:00:00 brd 00:00:00:00:00:00\n    inet 127.0.0.1/8 scope host lo\n       valid_lft forever preferred_lft forever";

fn render_rules(rules: &[IpRule]) -> String {
    let mut out = vec!["0:\tfrom all lookup local".to_string()];
    for (i, r) in rules.iter().enumerate().rev() {
        let from = r.from.map_or("all".to_string(), |n| n.to_string());
        let to = r.to.map_or(String::new(), |n| format!(" to {n}"));
        out.push(format!("{}:\tfrom {from}{to} {}", 32765 - i, r.action.as_str()));
    }
    out.push("32766:\tfrom all lookup main".into());
    out.push("32767:\tfrom all lookup default".into());
    out.join("\n")
}

fn render_iptables(state: Option<&NetState>, chain: Option<Chain>, rules_form: bool) -> String {
    let chains: Vec<Chain> = chain.map_or(Chain::ALL.to_vec(), |c| vec![c]);
    let empty = Vec::new();
    let rules_of = |c: Chain| state.map_or(&empty[..], |s| s.chain(c));
    if rules_form {
        let mut lines: Vec<String> = chains.iter().map(|c| format!("-P {} ACCEPT", c.as_str())).collect();
        for c in &chains {
            for r in rules_of(*c) {
                lines.push(format!("-A {} {}", c.as_str(), r.spec()));
            }
        }
        return lines.join("\n");
    }
    let mut blocks = Vec::new();
    for c in chains {
        let mut b = format!(
            "Chain {} (policy ACCEPT)\ntarget     prot opt source               destination",
            c.as_str()
        );
        for r in rules_of(c) {
            let src = r.src.map_or("0.0.0.0/0".to_string(), |n| n.to_string());
            let dst = r.dst.map_or("0.0.0.0/0".to_string(), |n| n.to_string());
            let line = format!(
                "{:<10} {:<4} {:<3} {:<20} {:<20}",
                r.target.as_str(),
                r.proto.as_str(),
                "--",
                src,
                dst
            );
            b.push('\n');
            b.push_str(line.trim_end());
        }
        blocks.push(b);
    }
    blocks.join("\n\n")
}

fn render_qdisc(name: &str, delay_ms: u32) -> String {
    if delay_ms == 0 {
        format!("qdisc noqueue 0: dev {name} root refcnt 2")
    } else {
        let d = if delay_ms.is_multiple_of(1000) {
            format!("{}s", delay_ms / 1000)
        } else {
            format!("{delay_ms}ms")
        };
        format!("qdisc netem 8001: dev {name} root refcnt 2 limit 1000 delay {d}")
    }
}

fn render_route_get(state: &NetState, dst: Ipv4Addr) -> Result<String, CommandError> {
    if state.router_owns(dst) {
        return Ok(format!("local {dst} dev lo src {dst} uid 0\n    cache <local>"));
    }
    let best = state
        .routes
        .iter()
        .filter(|r| r.dest.contains(&dst) && state.router.get(&r.dev).is_some_and(|i| i.up))
        .min_by(|a, b| {
            b.dest
                .prefix_len()
                .cmp(&a.dest.prefix_len())
                .then(a.metric.cmp(&b.metric))
                .then(a.dev.cmp(&b.dev))
        })
        .ok_or_else(|| CommandError::Failed("RTNETLINK answers: Network is unreachable".into()))?;
    let via = best.via.map_or(String::new(), |v| format!(" via {v}"));
    let src = best
        .src
        .or_else(|| state.router.get(&best.dev).and_then(|i| i.primary()).map(|a| a.addr()))
        .map_or(String::new(), |s| format!(" src {s}"));
    Ok(format!("{dst}{via} dev {}{src} uid 0\n    cache", best.dev))
}

fn router_read(state: &NetState, cmd: &Cmd) -> Result<String, CommandError> {
    Ok(match cmd {
        Cmd::IfconfigShow { all, dev } => {
            let views = select(router_views(state), dev.as_deref())?;
            views
                .iter()
                .filter(|v| *all || v.up)
                .map(render_ifconfig)
                .collect::<Vec<_>>()
                .join("\n")
        }
        Cmd::AddrShow { dev } => {
            let views = select(router_views(state), dev.as_deref())?;
            let mut parts: Vec<String> = if dev.is_none() {
                vec![LO_ADDR.to_string()]
            } else {
                vec![]
            };
            parts.extend(views.iter().map(render_ip_addr));
            parts.join("\n")
        }
        Cmd::LinkShow { dev } => select(router_views(state), dev.as_deref())?
            .iter()
            .map(render_ip_link)
            .collect::<Vec<_>>()
            .join("\n"),
        Cmd::RouteShow => state
            .routes
            .iter()
            .map(|r| render_route(r, state))
            .collect::<Vec<_>>()
            .join("\n"),
        Cmd::RouteGet(a) => render_route_get(state, *a)?,
        Cmd::RuleShow => render_rules(&state.ip_rules),
        Cmd::IptList { chain, rules_form } => render_iptables(Some(state), *chain, *rules_form),
        Cmd::SysctlRead { value_only } => {
            let v = u8::from(state.ip_forward);
            if *value_only {
                v.to_string()
            } else {
                format!("net.ipv4.ip_forward = {v}")
            }
        }
        Cmd::TcShow { dev } => select(router_views(state), dev.as_deref())?
            .iter()
            .map(|v| render_qdisc(v.name, v.delay_ms))
            .collect::<Vec<_>>()
            .join("\n"),
        _ => unreachable!("writes are dispatched separately"),
    })
}

fn host_read(host: &Host, cmd: &Cmd) -> Result<String, CommandError> {
    let view = || vec![host_view(host)];
    Ok(match cmd {
        Cmd::IfconfigShow { dev, .. } => select(view(), dev.as_deref())?
            .iter()
            .map(render_ifconfig)
            .collect::<Vec<_>>()
            .join("\n"),
        Cmd::AddrShow { dev } => {
            let mut parts: Vec<String> = if dev.is_none() {
                vec![LO_ADDR.to_string()]
            } else {
                vec![]
            };
            parts.extend(select(view(), dev.as_deref())?.iter().map(render_ip_addr));
            parts.join("\n")
        }
        Cmd::LinkShow { dev } => select(view(), dev.as_deref())?
            .iter()
            .map(render_ip_link)
            .collect::<Vec<_>>()
            .join("\n"),
        Cmd::RouteShow => format!(
            "default via {} dev {}\n{} dev {} proto kernel scope link src {}",
            host.gateway,
            host.iface,
            host.addr.trunc(),
            host.iface,
            host.addr.addr()
        ),
        Cmd::RouteGet(a) => {
            if host.addr.contains(a) {
                format!("{a} dev {} src {} uid 0\n    cache", host.iface, host.addr.addr())
            } else {
                format!(
                    "{a} via {} dev {} src {} uid 0\n    cache",
                    host.gateway,
                    host.iface,
                    host.addr.addr()
                )
            }
        }
        Cmd::RuleShow => render_rules(&[]),
        Cmd::IptList { chain, rules_form } => render_iptables(None, *chain, *rules_form),
        Cmd::SysctlRead { value_only } => {
            if *value_only {
                "0".into()
            } else {
                "net.ipv4.ip_forward = 0".into()
            }
        }
        Cmd::TcShow { dev } => select(view(), dev.as_deref())?
            .iter()
            .map(|v| render_qdisc(v.name, 0))
            .collect::<Vec<_>>()
            .join("\n"),
        _ => unreachable!("hosts reject writes"),
    })
}

// ---------------------------------------------------------------- writes

fn no_device(dev: &str) -> CommandError {
    CommandError::Failed(format!("Cannot find device \"{dev}\""))
}

fn add_address(state: &mut NetState, dev: &str, addr: Ipv4Net) -> Result<(), CommandError> {
    let iface = state.router.get_mut(dev).ok_or_else(|| no_device(dev))?;
    if !iface.addrs.insert(addr) {
        return Err(CommandError::Failed("Error: ipv4: Address already assigned.".into()));
    }
    if addr.prefix_len() < 32 {
        state.routes.insert(Route::kernel(addr, dev));
    }
    Ok(())
}

fn del_address(state: &mut NetState, dev: &str, addr: Ipv4Net) -> Result<(), CommandError> {
    let iface = state.router.get_mut(dev).ok_or_else(|| no_device(dev))?;
    if !iface.addrs.remove(&addr) {
        return Err(CommandError::Failed(
            "RTNETLINK answers: Cannot assign requested address".into(),
        ));
    }
    state
        .routes
        .retain(|r| !(r.kernel && r.dev == dev && r.src == Some(addr.addr()) && r.dest == addr.trunc()));
    Ok(())
}

fn validate_mtu(mtu: u32) -> Result<(), CommandError> {
    if mtu < 68 {
        Err(CommandError::Failed("Error: mtu less than device minimum.".into()))
    } else if mtu > 65535 {
        Err(CommandError::Failed("Error: mtu greater than device maximum.".into()))
    } else {
        Ok(())
    }
}

fn build_route(state: &NetState, spec: &RouteSpec) -> Result<Route, CommandError> {
    let dest = spec.dest.expect("parser requires a destination");
    let dev = match (&spec.dev, spec.via) {
        (Some(d), _) => {
            if !state.router.contains_key(d) {
                return Err(no_device(d));
            }
            d.clone()
        }
        (None, Some(gw)) => state
            .router
            .iter()
            .find(|(_, i)| i.on_link(gw))
            .map(|(n, _)| n.clone())
            .ok_or_else(|| CommandError::Failed("Error: Nexthop has invalid gateway.".into()))?,
        (None, None) => return Err(perr("Error: either a device or a gateway is required.")),
    };
    let iface = &state.router[&dev];
    if let Some(gw) = spec.via {
        if !spec.onlink && !iface.on_link(gw) {
            return Err(CommandError::Failed("Error: Nexthop has invalid gateway.".into()));
        }
    }
    if !iface.up && !spec.onlink {
        return Err(CommandError::Failed("Error: Nexthop device is not up.".into()));
    }
    Ok(Route {
        dest,
        metric: spec.metric.unwrap_or(0),
        dev,
        via: spec.via,
        kernel: spec.kernel,
        src: spec.src,
    })
}

fn route_matches(r: &Route, spec: &RouteSpec) -> bool {
    Some(r.dest) == spec.dest
        && spec.dev.as_ref().is_none_or(|d| &r.dev == d)
        && spec.via.is_none_or(|v| r.via == Some(v))
        && spec.metric.is_none_or(|m| r.metric == m)
        && spec.src.is_none_or(|s| r.src == Some(s))
}

fn router_write(state: &mut NetState, cmd: &Cmd) -> Result<String, CommandError> {
    match cmd {
        Cmd::IfconfigSet { dev, actions } => {
            if !state.router.contains_key(dev) {
                return Err(CommandError::Failed(format!(
                    "{dev}: ERROR while getting interface flags: No such device"
                )));
            }
            for a in actions {
                match a {
                    IfcAction::Up => state.router.get_mut(dev).expect("exists").up = true,
                    IfcAction::Down => state.router.get_mut(dev).expect("exists").up = false,
                    IfcAction::Mtu(m) => {
                        validate_mtu(*m)?;
                        state.router.get_mut(dev).expect("exists").mtu = *m;
                    }
                    IfcAction::Addr(addr) => {
                        if let Some(old) = state.router[dev].primary() {
                            del_address(state, dev, old)?;
                        }
                        add_address(state, dev, *addr)?;
                    }
                }
            }
            Ok(String::new())
        }
        Cmd::AddrAdd { addr, dev } => add_address(state, dev, *addr).map(|_| String::new()),
        Cmd::AddrDel { addr, dev } => {
            // `ip addr del A dev X` without a length matches the configured one.
            let iface = state.router.get(dev).ok_or_else(|| no_device(dev))?;
            let target = if addr.prefix_len() == 32 && !iface.addrs.contains(addr) {
                iface
                    .addrs
                    .iter()
                    .find(|a| a.addr() == addr.addr())
                    .copied()
                    .unwrap_or(*addr)
            } else {
                *addr
            };
            del_address(state, dev, target).map(|_| String::new())
        }
        Cmd::AddrFlush { dev } => {
            let addrs: Vec<Ipv4Net> = state
                .router
                .get(dev)
                .ok_or_else(|| no_device(dev))?
                .addrs
                .iter()
                .copied()
                .collect();
            for a in addrs {
                del_address(state, dev, a)?;
            }
            Ok(String::new())
        }
        Cmd::LinkSet { dev, up, mtu } => {
            if let Some(m) = mtu {
                validate_mtu(*m)?;
            }
            let iface = state.router.get_mut(dev).ok_or_else(|| no_device(dev))?;
            if let Some(u) = up {
                iface.up = *u;
            }
            if let Some(m) = mtu {
                iface.mtu = *m;
            }
            Ok(String::new())
        }
        Cmd::RouteAdd(spec) => {
            let route = build_route(state, spec)?;
            if state
                .routes
                .iter()
                .any(|r| r.dest == route.dest && r.metric == route.metric)
            {
                return Err(CommandError::Failed("RTNETLINK answers: File exists".into()));
            }
            state.routes.insert(route);
            Ok(String::new())
        }
        Cmd::RouteReplace(spec) => {
            let route = build_route(state, spec)?;
            state
                .routes
                .retain(|r| !(r.dest == route.dest && r.metric == route.metric));
            state.routes.insert(route);
            Ok(String::new())
        }
        Cmd::RouteDel(spec) => {
            let victim = state
                .routes
                .iter()
                .find(|r| route_matches(r, spec))
                .cloned()
                .ok_or_else(|| CommandError::Failed("RTNETLINK answers: No such process".into()))?;
            state.routes.remove(&victim);
            Ok(String::new())
        }
        Cmd::RuleAdd(rule) => {
            state.add_ip_rule(rule.clone());
            Ok(String::new())
        }
        Cmd::RuleDel(rule) => {
            let pos = state
                .ip_rules
                .iter()
                .position(|r| r == rule)
                .ok_or_else(|| CommandError::Failed("RTNETLINK answers: No such file or directory".into()))?;
            state.ip_rules.remove(pos);
            Ok(String::new())
        }
        Cmd::IptAppend { chain, rule } => {
            state.chain_mut(*chain).push(rule.clone());
            Ok(String::new())
        }
        Cmd::IptInsert { chain, pos, rule } => {
            let rules = state.chain_mut(*chain);
            if *pos == 0 || *pos > rules.len() + 1 {
                return Err(CommandError::Failed("iptables: Index of insertion too big.".into()));
            }
            rules.insert(pos - 1, rule.clone());
            Ok(String::new())
        }
        Cmd::IptDeleteRule { chain, rule } => {
            let rules = state.chain_mut(*chain);
            let at = rules.iter().position(|r| r == rule).ok_or_else(|| {
                CommandError::Failed("iptables: Bad rule (does a matching rule exist in that chain?).".into())
            })?;
            rules.remove(at);
            Ok(String::new())
        }
        Cmd::IptDeleteNum { chain, pos } => {
            let rules = state.chain_mut(*chain);
            if *pos == 0 || *pos > rules.len() {
                return Err(CommandError::Failed("iptables: Index of deletion too big.".into()));
            }
            rules.remove(pos - 1);
            Ok(String::new())
        }
        Cmd::IptFlush { chain } => {
            match chain {
                Some(c) => state.chain_mut(*c).clear(),
                None => state.filters.values_mut().for_each(Vec::clear),
            }
            Ok(String::new())
        }
        Cmd::SysctlWrite { value } => {
            state.ip_forward = *value;
            Ok(format!("net.ipv4.ip_forward = {}", u8::from(*value)))
        }
        Cmd::TcAdd { dev, delay_ms, replace } => {
            let iface = state.router.get_mut(dev).ok_or_else(|| no_device(dev))?;
            if !replace && iface.delay_ms > 0 {
                return Err(CommandError::Failed(
                    "Error: Exclusivity flag on, cannot modify.".into(),
                ));
            }
            iface.delay_ms = *delay_ms;
            Ok(String::new())
        }
        Cmd::TcDel { dev } => {
            let iface = state.router.get_mut(dev).ok_or_else(|| no_device(dev))?;
            if iface.delay_ms == 0 {
                return Err(CommandError::Failed(
                    "Error: Cannot delete qdisc with handle of zero.".into(),
                ));
            }
            iface.delay_ms = 0;
            Ok(String::new())
        }
        _ => unreachable!("reads are dispatched separately"),
    }
}

/// Lowest MTU at which the probe passes; exported for injection sampling.
pub const fn min_working_mtu() -> u32 {
    MIN_MTU
}
