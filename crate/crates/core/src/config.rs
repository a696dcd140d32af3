//! Run configuration: every tunable of the search, loaded from one JSON
//! document with dotted-path overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::GiniVariant;
use crate::reward::RewardParams;
use crate::types::{Direction, ObjectiveSpec};

pub const TOKEN_ENV: &str = "AGENTSEARCH_API_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

/// Connection settings for the remote completion service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub request_timeout_secs: f64,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    /// Dotted path to the assistant text in the reply JSON.
    pub response_path: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: None,
            model: "default".into(),
            temperature: 0.7,
            request_timeout_secs: 120.0,
            token_env: TOKEN_ENV.into(),
            response_path: "choices.0.message.content".into(),
            max_retries: 2,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    /// Interpreter/launcher argv; the program file path is appended.
    pub runtime_command: Vec<String>,
    /// Optional wrapper argv prepended to the runtime command (external jail).
    pub jail_command: Vec<String>,
    pub stdout_cap: usize,
    pub scratch_root: Option<PathBuf>,
    pub retain_workdirs: bool,
    pub program_file_name: String,
    pub train_path: String,
    pub valid_path: String,
    pub test_path: String,
    pub split_seed: u64,
    /// Extra variable names passed through from the parent environment.
    pub env_passthrough: Vec<String>,
    pub trace_cap_bytes: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            runtime_command: vec!["sh".into()],
            jail_command: Vec::new(),
            stdout_cap: 1 << 20,
            scratch_root: None,
            retain_workdirs: false,
            program_file_name: "candidate".into(),
            train_path: "data/train.csv".into(),
            valid_path: "data/valid.csv".into(),
            test_path: "data/test.csv".into(),
            split_seed: 0,
            env_passthrough: vec!["PATH".into()],
            trace_cap_bytes: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub objectives: Vec<ObjectiveSpec>,
    pub beta: f64,
    pub gamma: f64,
    pub c_puct: f64,
    pub num_roots: usize,
    /// Feasible nodes the tree phase stops at.
    pub mcts_budget: usize,
    pub num_islands: usize,
    pub population_size: usize,
    /// Feasible offspring across all islands the evolution phase stops at.
    pub ea_budget: usize,
    pub elite_ratio: f64,
    pub migration_period: u32,
    pub repair_attempts: u32,
    pub exec_timeout_secs: f64,
    pub rng_seed: u64,
    pub generator_backend: BackendKind,
    /// Hard cap on attempts per phase, as a multiple of the phase budget.
    pub attempt_cap_factor: usize,
    /// Regeneration attempts per seeding slot before the slot is dropped.
    pub seed_retry_cap: u32,
    pub max_suggestions: usize,
    /// Prior mass given to the suggestion named by a single-index reply.
    pub lambda_match: f64,
    pub gini_variant: GiniVariant,
    pub task_name: String,
    /// Starting program handed to the root generator (built-in template
    /// skeleton when unset).
    pub base_program: Option<PathBuf>,
    pub remote: RemoteConfig,
    /// Per-role overrides of the remote settings (keyed by role name).
    pub role_backends: BTreeMap<String, RemoteConfig>,
    pub executor: ExecutorConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            objectives: ObjectiveSpec::defaults(),
            beta: 0.1,
            gamma: 0.05,
            c_puct: 1.0,
            num_roots: 4,
            mcts_budget: 100,
            num_islands: 4,
            population_size: 8,
            ea_budget: 100,
            elite_ratio: 0.5,
            migration_period: 5,
            repair_attempts: 3,
            exec_timeout_secs: 600.0,
            rng_seed: 0,
            generator_backend: BackendKind::Mock,
            attempt_cap_factor: 5,
            seed_retry_cap: 3,
            max_suggestions: 5,
            lambda_match: 0.5,
            gini_variant: GiniVariant::Standard,
            task_name: "user lifetime value prediction".into(),
            base_program: None,
            remote: RemoteConfig::default(),
            role_backends: BTreeMap::new(),
            executor: ExecutorConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.objectives.is_empty() {
            return err("objectives: at least one objective is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.objectives {
            if !seen.insert(o.name) {
                return err(format!("objectives: duplicate objective {}", o.name.key()));
            }
            if !(o.weight >= 0.0 && o.weight.is_finite()) {
                return err(format!("objectives: weight of {} must be nonnegative", o.name.key()));
            }
            if o.direction != o.name.natural_direction() {
                let want = match o.name.natural_direction() {
                    Direction::Maximize => "maximize",
                    Direction::Minimize => "minimize",
                };
                return err(format!("objectives: {} must {want}", o.name.key()));
            }
        }
        let sum: f64 = self.objectives.iter().map(|o| o.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return err(format!("objectives: weights must sum to 1 (got {sum})"));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(format!("{name} must be nonnegative"));
            }
        }
        if !(self.c_puct > 0.0 && self.c_puct.is_finite()) {
            return err("c_puct must be positive".into());
        }
        for (name, v) in [
            ("num_roots", self.num_roots),
            ("mcts_budget", self.mcts_budget),
            ("num_islands", self.num_islands),
            ("population_size", self.population_size),
            ("ea_budget", self.ea_budget),
            ("attempt_cap_factor", self.attempt_cap_factor),
            ("max_suggestions", self.max_suggestions),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.max_suggestions > 5 {
            return err("max_suggestions must be at most 5".into());
        }
        if self.migration_period == 0 {
            return err("migration_period must be positive".into());
        }
        if !(self.elite_ratio > 0.0 && self.elite_ratio <= 1.0) {
            return err("elite_ratio must lie in (0, 1]".into());
        }
        if !(self.lambda_match > 0.0 && self.lambda_match < 1.0) {
            return err("lambda_match must lie in (0, 1)".into());
        }
        if !(self.exec_timeout_secs > 0.0 && self.exec_timeout_secs.is_finite()) {
            return err("exec_timeout_secs must be positive".into());
        }
        if self.executor.runtime_command.is_empty() {
            return err("executor.runtime_command must not be empty".into());
        }
        if self.generator_backend == BackendKind::Remote && self.remote.endpoint.is_none() {
            return err("remote backend requires remote.endpoint".into());
        }
        for role in self.role_backends.keys() {
            if crate::generator::PromptRole::from_name(role).is_none() {
                return err(format!("role_backends: unknown role {role}"));
            }
        }
        Ok(())
    }

    pub fn reward_params(&self) -> RewardParams {
        RewardParams {
            objectives: self.objectives.clone(),
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn mcts_attempt_cap(&self) -> usize {
        self.attempt_cap_factor * self.mcts_budget
    }

    pub fn ea_attempt_cap(&self) -> usize {
        self.attempt_cap_factor * self.ea_budget
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?)
    }

    pub fn from_json_value(value: Value) -> Result<Self> {
        let cfg: SearchConfig = serde_json::from_value(value).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file (missing keys take defaults), applies
    /// `key=value` overrides and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::config(format!("config: {e}")))?
            }
            None => Value::Object(Default::default()),
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        Self::from_json_value(value)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies one `dotted.path=value` override. The path must name a key of
/// the configuration schema; the value is parsed as JSON, falling back to
/// a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not key=value")))?;
    let path = path.trim();
    let schema = serde_json::to_value(SearchConfig::default()).expect("defaults serialize");
    let segments: Vec<&str> = path.split('.').collect();
    if !schema_has_path(&schema, &segments) {
        return Err(Error::config(format!("override: unknown key `{path}`")));
    }
    let new_value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if !doc.is_object() {
        return Err(Error::config("config root must be an object"));
    }
    let mut cur = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*seg).to_string(), new_value);
                    return Ok(());
                }
                let default_child = lookup(&schema, &segments[..=i]).cloned().unwrap_or(Value::Null);
                let entry = map.entry((*seg).to_string()).or_insert_with(|| match default_child {
                    Value::Array(_) => default_child.clone(),
                    _ => Value::Object(Default::default()),
                });
                cur = entry;
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::config(format!("override: `{seg}` is not an index")))?;
                let item = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("override: index {idx} out of range")))?;
                if last {
                    *item = new_value;
                    return Ok(());
                }
                cur = item;
            }
            _ => return Err(Error::config(format!("override: `{path}` crosses a scalar"))),
        }
    }
    Ok(())
}

fn lookup<'a>(v: &'a Value, segs: &[&str]) -> Option<&'a Value> {
    let mut cur = v;
    for s in segs {
        cur = match cur {
            Value::Object(m) => m.get(*s)?,
            Value::Array(a) => a.get(s.parse::<usize>().ok()?).or_else(|| a.first())?,
            _ => return None,
        };
    }
    Some(cur)
}

fn schema_has_path(schema: &Value, segs: &[&str]) -> bool {
    let mut cur = schema;
    for (i, s) in segs.iter().enumerate() {
        cur = match cur {
            Value::Object(m) => match m.get(*s) {
                Some(v) => v,
                // Free-form maps (per-role overrides) accept any key.
                None if i > 0 && segs[i - 1] == "role_backends" => {
                    return true;
                }
                None => return false,
            },
            Value::Array(a) => {
                if s.parse::<usize>().is_err() {
                    return false;
                }
                match a.first() {
                    Some(v) => v,
                    None => return true,
                }
            }
            _ => return false,
        };
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SearchConfig::default().validate().unwrap();
    }

    #[test]
    fn weight_sum_violation_is_reported() {
        let mut c = SearchConfig::default();
        c.objectives[0].weight = 0.15;
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("weights must sum to 1"), "{e}");
    }

    #[test]
    fn wrong_direction_rejected() {
        let mut c = SearchConfig::default();
        c.objectives[0].direction = Direction::Maximize;
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let c = SearchConfig::load(
            None,
            &[
                "beta=0.2".into(),
                "executor.stdout_cap=1024".into(),
                "objectives.0.weight=0.4".into(),
                "objectives.1.weight=0.1".into(),
                "task_name=churn".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.beta, 0.2);
        assert_eq!(c.executor.stdout_cap, 1024);
        assert_eq!(c.objectives[0].weight, 0.4);
        assert_eq!(c.task_name, "churn");
    }

    #[test]
    fn unknown_override_key_rejected() {
        let e = SearchConfig::load(None, &["nonsense=1".into()]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(SearchConfig::load(None, &["executor.bogus=1".into()]).is_err());
    }

    #[test]
    fn unknown_file_key_rejected() {
        assert!(SearchConfig::from_json_str(r#"{"c_puct": 1.0, "cpuct": 2}"#).is_err());
    }

    #[test]
    fn echoed_config_round_trips() {
        let mut c = SearchConfig {
            rng_seed: 99,
            ..Default::default()
        };
        c.role_backends.insert("fixer".into(), RemoteConfig::default());
        let back = SearchConfig::from_json_str(&c.to_json_pretty()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn remote_requires_endpoint() {
        let mut c = SearchConfig {
            generator_backend: BackendKind::Remote,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.remote.endpoint = Some("http://127.0.0.1:9/v1/chat".into());
        c.validate().unwrap();
    }
}
