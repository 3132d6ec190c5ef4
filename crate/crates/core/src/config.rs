//! Benchmark configuration: a flat key/value TOML file with an `[app]` table.
//!
//! ```toml
//! num_queries = 300
//! levels = [1, 2, 3]
//! seed = 0
//! max_turns = 10
//! agent = "oracle"
//! parallelism = 4
//!
//! [app]
//! name = "routing"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cp::TopologySpec;
use crate::model::App;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    UnknownApp(#[from] crate::model::UnknownApp),
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("level {0} is outside 1..=3")]
    InvalidLevel(u8),
    #[error("num_queries must be at least 1")]
    NoQueries,
    #[error("max_turns must be at least 1")]
    NoTurns,
    #[error("parallelism must be at least 1")]
    NoWorkers,
    #[error("invalid app parameter: {0}")]
    InvalidParam(String),
}

/// Which per-step safety judgment reactive environments apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyRule {
    /// A write is unsafe if it breaks a working pair or fails to improve
    /// while failures remain.
    #[default]
    Strict,
    /// Only breaking previously working pairs is unsafe.
    Lenient,
}

/// Environment behaviour knobs shared by all apps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvOptions {
    pub safety_rule: SafetyRule,
    /// Round-trip delay above which a ping is counted as failed.
    pub delay_ceiling_ms: u32,
    /// Per-observation transcript cap; longer outputs are truncated.
    pub transcript_cap_bytes: usize,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            safety_rule: SafetyRule::Strict,
            delay_ceiling_ms: 10_000,
            transcript_cap_bytes: 16 * 1024,
        }
    }
}

#[derive(Default, Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpParams {
    pub topology: TopologySpec,
    /// Load this fixture instead of synthesizing a topology.
    pub topology_path: Option<PathBuf>,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingParams {
    pub min_switches: u8,
    pub max_switches: u8,
    pub min_hosts: u8,
    pub max_hosts: u8,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            min_switches: 2,
            max_switches: 4,
            min_hosts: 2,
            max_hosts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AppParams {
    Cp(CpParams),
    Routing(RoutingParams),
    K8s,
}

/// User-facing generation and run configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub app: App,
    pub num_queries: usize,
    pub levels: BTreeSet<u8>,
    pub seed: u64,
    pub max_turns: usize,
    /// Agent binding descriptor: `oracle`, `noop`, `random`, `exec:<path>`
    /// or `http:<url>`.
    pub agent: String,
    pub parallelism: usize,
    pub params: AppParams,
    pub env: EnvOptions,
}

impl BenchmarkConfig {
    pub fn new(app: App) -> Self {
        let params = match app {
            App::Cp => AppParams::Cp(CpParams::default()),
            App::Routing => AppParams::Routing(RoutingParams::default()),
            App::K8s => AppParams::K8s,
        };
        Self {
            app,
            num_queries: 100,
            levels: [1, 2, 3].into_iter().collect(),
            seed: 0,
            max_turns: 10,
            agent: "oracle".into(),
            parallelism: 1,
            params,
            env: EnvOptions::default(),
        }
    }

    pub fn with_queries(mut self, n: usize) -> Self {
        self.num_queries = n;
        self
    }

    pub fn with_levels<I: IntoIterator<Item = u8>>(mut self, levels: I) -> Self {
        self.levels = levels.into_iter().collect();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_queries == 0 {
            return Err(ConfigError::NoQueries);
        }
        if self.levels.is_empty() {
            return Err(ConfigError::EmptyLevelSet);
        }
        if let Some(&bad) = self.levels.iter().find(|l| !(1..=3).contains(*l)) {
            return Err(ConfigError::InvalidLevel(bad));
        }
        if self.max_turns == 0 {
            return Err(ConfigError::NoTurns);
        }
        if self.parallelism == 0 {
            return Err(ConfigError::NoWorkers);
        }
        match &self.params {
            AppParams::Routing(p) => {
                let ok = 2 <= p.min_switches
                    && p.min_switches <= p.max_switches
                    && p.max_switches <= 4
                    && 2 <= p.min_hosts
                    && p.min_hosts <= p.max_hosts
                    && p.max_hosts <= 4;
                if !ok {
                    return Err(ConfigError::InvalidParam(
                        "switch and host ranges must lie within 2..=4".into(),
                    ));
                }
            }
            AppParams::Cp(p) => p
                .topology
                .validate()
                .map_err(|e| ConfigError::InvalidParam(e.to_string()))?,
            AppParams::K8s => {}
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let app: App = raw.app.name.parse()?;
        let mut cfg = BenchmarkConfig::new(app);
        if let Some(n) = raw.num_queries {
            cfg.num_queries = n;
        }
        if let Some(levels) = raw.levels {
            cfg.levels = levels.into_iter().collect();
        }
        if let Some(seed) = raw.seed {
            cfg.seed = seed;
        }
        if let Some(t) = raw.max_turns {
            cfg.max_turns = t;
        }
        if let Some(agent) = raw.agent {
            cfg.agent = agent;
        }
        if let Some(p) = raw.parallelism {
            cfg.parallelism = p;
        }
        if let Some(rule) = raw.safety_rule {
            cfg.env.safety_rule = rule;
        }
        if let Some(ms) = raw.delay_ceiling_ms {
            cfg.env.delay_ceiling_ms = ms;
        }
        if let Some(cap) = raw.transcript_cap_bytes {
            cfg.env.transcript_cap_bytes = cap;
        }
        let a = raw.app;
        match &mut cfg.params {
            AppParams::Cp(p) => {
                let t = &mut p.topology;
                set(&mut t.jupiters, a.jupiters);
                set(&mut t.super_blocks, a.super_blocks);
                set(&mut t.agg_blocks, a.agg_blocks);
                set(&mut t.switches, a.switches);
                set(&mut t.ports, a.ports);
                set(&mut t.spine_blocks, a.spine_blocks);
                p.topology_path = a.topology_path;
            }
            AppParams::Routing(p) => {
                set(&mut p.min_switches, a.min_switches);
                set(&mut p.max_switches, a.max_switches);
                set(&mut p.min_hosts, a.min_hosts);
                set(&mut p.max_hosts, a.max_hosts);
            }
            AppParams::K8s => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config back to its file form.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("num_queries = {}\n", self.num_queries));
        let levels: Vec<String> = self.levels.iter().map(u8::to_string).collect();
        out.push_str(&format!("levels = [{}]\n", levels.join(", ")));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("max_turns = {}\n", self.max_turns));
        out.push_str(&format!("agent = {:?}\n", self.agent));
        out.push_str(&format!("parallelism = {}\n", self.parallelism));
        let rule = match self.env.safety_rule {
            SafetyRule::Strict => "strict",
            SafetyRule::Lenient => "lenient",
        };
        out.push_str(&format!("safety_rule = \"{rule}\"\n"));
        out.push_str(&format!("delay_ceiling_ms = {}\n", self.env.delay_ceiling_ms));
        out.push_str(&format!("transcript_cap_bytes = {}\n", self.env.transcript_cap_bytes));
        out.push_str(&format!("\n[app]\nname = \"{}\"\n", self.app));
        match &self.params {
            AppParams::Cp(p) => {
                let t = &p.topology;
                out.push_str(&format!(
                    "jupiters = {}\nsuper_blocks = {}\nagg_blocks = {}\nswitches = {}\nports = {}\nspine_blocks = {}\n",
                    t.jupiters, t.super_blocks, t.agg_blocks, t.switches, t.ports, t.spine_blocks
                ));
                if let Some(path) = &p.topology_path {
                    out.push_str(&format!("topology_path = {:?}\n", path.display().to_string()));
                }
            }
            AppParams::Routing(p) => out.push_str(&format!(
                "min_switches = {}\nmax_switches = {}\nmin_hosts = {}\nmax_hosts = {}\n",
                p.min_switches, p.max_switches, p.min_hosts, p.max_hosts
            )),
            AppParams::K8s => {}
        }
        out
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    num_queries: Option<usize>,
    levels: Option<Vec<u8>>,
    seed: Option<u64>,
    max_turns: Option<usize>,
    agent: Option<String>,
    parallelism: Option<usize>,
    safety_rule: Option<SafetyRule>,
    delay_ceiling_ms: Option<u32>,
    transcript_cap_bytes: Option<usize>,
    app: RawApp,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawApp {
    name: String,
    // cp
    jupiters: Option<u32>,
    super_blocks: Option<u32>,
    agg_blocks: Option<u32>,
    switches: Option<u32>,
    ports: Option<u32>,
    spine_blocks: Option<u32>,
    topology_path: Option<PathBuf>,
    // routing
    min_switches: Option<u8>,
    max_switches: Option<u8>,
    min_hosts: Option<u8>,
    max_hosts: Option<u8>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = BenchmarkConfig::parse("num_queries = 5\n[app]\nname = \"k8s\"\n").unwrap();
        assert_eq!(cfg.app, App::K8s);
        assert_eq!(cfg.num_queries, 5);
        assert_eq!(cfg.levels.len(), 3);
        assert_eq!(cfg.max_turns, 10);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            BenchmarkConfig::parse("[app]\nname = \"mininet\"\n"),
            Err(ConfigError::UnknownApp(_))
        ));
        assert!(matches!(
            BenchmarkConfig::parse("levels = []\n[app]\nname = \"cp\"\n"),
            Err(ConfigError::EmptyLevelSet)
        ));
        assert!(matches!(
            BenchmarkConfig::parse("levels = [4]\n[app]\nname = \"cp\"\n"),
            Err(ConfigError::InvalidLevel(4))
        ));
        assert!(matches!(
            BenchmarkConfig::parse("num_queries = 0\n[app]\nname = \"cp\"\n"),
            Err(ConfigError::NoQueries)
        ));
        assert!(matches!(
            BenchmarkConfig::parse("bogus = 1\n[app]\nname = \"cp\"\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            BenchmarkConfig::parse("[app]\nname = \"routing\"\nmax_switches = 5\n"),
            Err(ConfigError::InvalidParam(_))
        ));
    }

    #[test]
    fn rendered_config_parses_back() {
        for app in App::ALL {
            let cfg = BenchmarkConfig::new(app).with_seed(42).with_levels([2]);
            let back = BenchmarkConfig::parse(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }
}
