//! The agent boundary: prompt assembly for every role and the pluggable
//! completion backends behind it.

pub mod advice;
pub mod landscape;
pub mod mock;
pub mod remote;
pub mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::config::{BackendKind, SearchConfig};
use crate::error::{Error, Result};
use crate::types::MetricVector;

pub use advice::{AdviceEntry, AdviceLibrary};
pub use mock::MockBackend;
pub use remote::RemoteBackend;
pub use templates::{render_prompt, slots, PromptBundle, PromptRole, Template, FALLBACK_HINT};

/// Anything that turns a rendered prompt into completion text.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<String>;
}

/// What the adviser sees about a node.
#[derive(Debug, Clone, Default)]
pub struct NodeContext {
    pub code: String,
    pub metrics: Option<MetricVector>,
    /// One-line summaries of parent, siblings or fellow elites.
    pub related: Vec<String>,
}

/// Role-level operations over a default backend plus per-role overrides.
#[derive(Clone)]
pub struct Generator {
    default: Arc<dyn CompletionBackend>,
    overrides: BTreeMap<PromptRole, Arc<dyn CompletionBackend>>,
    library: AdviceLibrary,
    task_name: String,
    max_suggestions: usize,
    lambda_match: f64,
    trace_cap: usize,
}

impl Generator {
    pub fn new(backend: Arc<dyn CompletionBackend>, library: AdviceLibrary, cfg: &SearchConfig) -> Self {
        Generator {
            default: backend,
            overrides: BTreeMap::new(),
            library,
            task_name: cfg.task_name.clone(),
            max_suggestions: cfg.max_suggestions,
            lambda_match: cfg.lambda_match,
            trace_cap: cfg.executor.trace_cap_bytes,
        }
    }

    /// Backend wiring described by the configuration.
    pub fn from_config(cfg: &SearchConfig) -> Result<Self> {
        let default: Arc<dyn CompletionBackend> = match cfg.generator_backend {
            BackendKind::Mock => Arc::new(MockBackend::new(cfg.rng_seed)),
            BackendKind::Remote => Arc::new(RemoteBackend::new(cfg.remote.clone())?),
        };
        let mut g = Generator::new(default, AdviceLibrary::shipped(), cfg);
        for (name, rc) in &cfg.role_backends {
            let role = PromptRole::from_name(name)
                .ok_or_else(|| Error::config(format!("role_backends: unknown role {name}")))?;
            g.overrides.insert(role, Arc::new(RemoteBackend::new(rc.clone())?));
        }
        Ok(g)
    }

    pub fn with_role_backend(mut self, role: PromptRole, backend: Arc<dyn CompletionBackend>) -> Self {
        self.overrides.insert(role, backend);
        self
    }

    pub fn library(&self) -> &AdviceLibrary {
        &self.library
    }

    pub fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        self.overrides
            .get(&bundle.role)
            .unwrap_or(&self.default)
            .complete(bundle)
    }

    fn code_from(&self, bundle: &PromptBundle) -> Result<String> {
        extract_code(&self.complete(bundle)?)
    }

    /// Root program seeded with a method hint.
    pub fn generate_root(&self, method_hint: &str, template_code: &str) -> Result<(PromptBundle, String)> {
        let bundle = render_prompt(
            PromptRole::CodeGen,
            slots([
                ("task_name", self.task_name.as_str()),
                ("method_hint", method_hint),
                ("code", template_code),
            ]),
        )?;
        let code = self.code_from(&bundle)?;
        Ok((bundle, code))
    }

    /// Adviser suggestions for a node, deduplicated and passed through the
    /// idea-format prompt. Never returns an empty list.
    pub fn propose_advice(&self, ctx: &NodeContext) -> Result<Vec<String>> {
        let metrics = match &ctx.metrics {
            Some(m) => format!(
                "er = {}, norm_gini = {}, spearman = {}, rmse = {}",
                m.er, m.norm_gini, m.spearman, m.rmse
            ),
            None => "not evaluated".into(),
        };
        let related = if ctx.related.is_empty() {
            "none".to_string()
        } else {
            ctx.related.join("\n")
        };
        let bundle = render_prompt(
            PromptRole::Adviser,
            slots([
                ("task_name", self.task_name.clone()),
                ("code", ctx.code.clone()),
                ("metrics", metrics),
                ("context", related),
                ("max_suggestions", self.max_suggestions.to_string()),
            ]),
        )?;
        let raw = self.complete(&bundle)?;
        let mut ideas = parse_suggestions(&raw);
        ideas.truncate(self.max_suggestions);
        if ideas.is_empty() {
            ideas.push(FALLBACK_HINT.to_string());
        }
        ideas
            .into_iter()
            .map(|idea| {
                let b = render_prompt(PromptRole::FormatIdea, slots([("idea", idea.as_str())]))?;
                let formatted = self.complete(&b)?;
                Ok(if formatted.trim().is_empty() { idea } else { formatted })
            })
            .collect()
    }

    /// Prior per suggestion: positive and summing to one.
    pub fn score_advice(&self, suggestions: &[String], code: &str) -> Result<Vec<f64>> {
        if suggestions.is_empty() {
            return Err(Error::Generation("no suggestions to score".into()));
        }
        if suggestions.len() == 1 {
            return Ok(vec![1.0]);
        }
        let options: Vec<String> = suggestions
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let entry = self.library.best_match(s);
                format!("{}. {} (related: {})", i + 1, one_line(s), entry.name)
            })
            .collect();
        let bundle = render_prompt(
            PromptRole::ExpertSelect,
            slots([
                ("code", code.to_string()),
                ("advice_options", options.join("\n")),
                ("num_options", suggestions.len().to_string()),
            ]),
        )?;
        let reply = self.complete(&bundle)?;
        Ok(priors_from_reply(&reply, suggestions.len(), self.lambda_match))
    }

    /// Child program implementing one suggestion on top of `code`.
    pub fn apply_suggestion(&self, code: &str, suggestion: &str) -> Result<(PromptBundle, String)> {
        let entry = self.library.best_match(suggestion);
        let advice = format!("{suggestion}\n\nBackground: {}", entry.advice);
        let bundle = render_prompt(
            PromptRole::ExpertApply,
            slots([
                ("advice_name", entry.name.as_str()),
                ("advice", advice.as_str()),
                ("code", code),
            ]),
        )?;
        let out = self.code_from(&bundle)?;
        Ok((bundle, out))
    }

    pub fn mutate(&self, code: &str, hint: &str) -> Result<String> {
        let bundle = render_prompt(
            PromptRole::Mutate,
            slots([
                ("task_name", self.task_name.as_str()),
                ("mutation_hint", hint),
                ("code", code),
            ]),
        )?;
        self.code_from(&bundle)
    }

    /// Comparison then hybridization of two programs.
    pub fn crossover(&self, code1: &str, score1: f64, code2: &str, score2: f64) -> Result<String> {
        let cmp = render_prompt(PromptRole::Compare, slots([("code1", code1), ("code2", code2)]))?;
        let comparison = self.complete(&cmp)?;
        let bundle = render_prompt(
            PromptRole::Crossover,
            slots([
                ("comparison", comparison),
                ("score1", format!("{score1:.6}")),
                ("score2", format!("{score2:.6}")),
                ("code1", code1.to_string()),
                ("code2", code2.to_string()),
            ]),
        )?;
        self.code_from(&bundle)
    }

    pub fn repair_prompt(&self, source: &str, error_trace: &str, attempt: u32) -> Result<PromptBundle> {
        repair_prompt(&self.task_name, source, error_trace, attempt, self.trace_cap)
    }

    pub fn repair(&self, source: &str, error_trace: &str, attempt: u32) -> Result<String> {
        let bundle = self.repair_prompt(source, error_trace, attempt)?;
        self.code_from(&bundle)
    }
}

/// Program the root generator starts from when none is configured: the
/// baseline rendering of the template family.
pub fn base_template() -> String {
    landscape::render_program(&landscape::PipelineParams::BASELINE, None)
}

/// Short method label for a program: its grid coordinates when it belongs
/// to the template family, else a slug of the hint that produced it.
pub fn program_label(code: &str, hint: Option<&str>) -> String {
    match landscape::parse_params(code) {
        Some(p) => p.label(),
        None => slugify(hint.unwrap_or(""), 6),
    }
}

pub const EMPTY_TRACE: &str = "process exited without output";

/// Fixer bundle with the trace truncated to `cap` bytes, keeping the tail.
pub fn repair_prompt(
    task_name: &str,
    source: &str,
    error_trace: &str,
    attempt: u32,
    cap: usize,
) -> Result<PromptBundle> {
    let trace = if error_trace.trim().is_empty() {
        EMPTY_TRACE.to_string()
    } else {
        truncate_tail(error_trace, cap)
    };
    render_prompt(
        PromptRole::Fixer,
        slots([
            ("task_name", task_name.to_string()),
            ("attempt", attempt.to_string()),
            ("code", source.to_string()),
            ("error_trace", trace),
        ]),
    )
}

/// Keeps the last `cap` bytes (on a char boundary) behind an elision marker.
pub fn truncate_tail(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let mut start = text.len() - cap;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    format!("[... {start} bytes elided ...]\n{}", &text[start..])
}

/// Last fenced code block, or the whole completion when there is none.
pub fn extract_code(completion: &str) -> Result<String> {
    let fences: Vec<usize> = completion.match_indices("```").map(|(i, _)| i).collect();
    let mut block: Option<&str> = None;
    let mut k = 0;
    while k + 1 < fences.len() {
        let open = fences[k] + 3;
        let close = fences[k + 1];
        let inner = &completion[open..close];
        // Skip a language tag on the opening line.
        let body = match inner.find('\n') {
            Some(nl) if !inner[..nl].contains(char::is_whitespace) => &inner[nl + 1..],
            _ => inner,
        };
        block = Some(body);
        k += 2;
    }
    let code = match block {
        Some(b) => b.to_string(),
        None => completion.trim().to_string(),
    };
    if code.trim().is_empty() {
        return Err(Error::Generation("completion contained no code".into()));
    }
    Ok(code)
}

fn normalize_text(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Bullet or numbered lines of an adviser reply, deduplicated by
/// normalized text.
pub fn parse_suggestions(reply: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in reply.lines() {
        let t = line.trim();
        let body = if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
            rest
        } else {
            let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
            match t[digits..]
                .strip_prefix(". ")
                .or_else(|| t[digits..].strip_prefix(") "))
            {
                Some(rest) if digits > 0 => rest,
                _ => continue,
            }
        };
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if seen.insert(normalize_text(body)) {
            out.push(body.to_string());
        }
    }
    out
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Turns an expert reply into priors.
///
/// A single index in 1..=n gives that suggestion `lambda_match` and splits
/// the rest uniformly; a list of n relevance scores is softmax-normalized;
/// anything else yields uniform priors.
pub fn priors_from_reply(reply: &str, n: usize, lambda_match: f64) -> Vec<f64> {
    let uniform = vec![1.0 / n as f64; n];
    if n == 1 {
        return vec![1.0];
    }
    let numbers: Vec<f64> = reply
        .split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .unwrap_or_default();
    if numbers.len() == 1 {
        let k = numbers[0];
        if k.fract() == 0.0 && k >= 1.0 && k <= n as f64 {
            let rest = (1.0 - lambda_match) / (n - 1) as f64;
            let mut p = vec![rest; n];
            p[k as usize - 1] = lambda_match;
            return p;
        }
        return uniform;
    }
    if numbers.len() == n && numbers.iter().all(|v| v.is_finite()) {
        let max = numbers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = numbers.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        return exps.iter().map(|e| e / z).collect();
    }
    uniform
}

/// Inverse-CDF draw: first index whose cumulative prior exceeds `u`.
pub fn sample_index(priors: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    priors.len().saturating_sub(1)
}

/// Short snake_case method label from free text.
pub fn slugify(text: &str, max_words: usize) -> String {
    let cleaned: String = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('<'))
        .unwrap_or(text)
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    let words: Vec<&str> = cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "edit" | "method"))
        .take(max_words)
        .collect();
    if words.is_empty() {
        "candidate".into()
    } else {
        words.join("_")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_single_and_last_block() {
        assert_eq!(extract_code("intro\n```python\nprint(1)\n```\n").unwrap(), "print(1)\n");
        let two = "```py\na = 1\n```\ntext\n```python\nb = 2\n```";
        assert_eq!(extract_code(two).unwrap(), "b = 2\n");
    }

    #[test]
    fn extract_falls_back_to_whole_text() {
        assert_eq!(extract_code("just some prose").unwrap(), "just some prose");
        assert!(extract_code("   \n").is_err());
        assert!(extract_code("```\n```").is_err());
    }

    #[test]
    fn suggestions_are_deduplicated() {
        let s = parse_suggestions("Ideas:\n- Add lag features.\n- add  LAG features\n2. Use a hurdle model\nnoise");
        assert_eq!(s, vec!["Add lag features.", "Use a hurdle model"]);
    }

    #[test]
    fn single_index_priors() {
        let p = priors_from_reply("2", 3, 0.5);
        assert_eq!(p, vec![0.25, 0.5, 0.25]);
        assert_eq!(priors_from_reply("1", 1, 0.5), vec![1.0]);
        let u = priors_from_reply("I think the second one", 4, 0.5);
        assert_eq!(u, vec![0.25; 4]);
        assert_eq!(priors_from_reply("7", 3, 0.5), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn score_list_priors_are_softmax() {
        let p = priors_from_reply("[0.0, 1.0, 2.0]", 3, 0.5);
        let z = 1.0 + 1f64.exp() + 2f64.exp();
        assert!((p[2] - 2f64.exp() / z).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_cdf_sampling() {
        assert_eq!(sample_index(&[0.5, 0.3, 0.2], 0.6), 1);
        assert_eq!(sample_index(&[0.5, 0.3, 0.2], 0.0), 0);
        assert_eq!(sample_index(&[0.5, 0.3, 0.2], 0.95), 2);
    }

    #[test]
    fn repair_prompt_truncates_and_falls_back() {
        let trace = "x".repeat(100) + "TAIL";
        let b = repair_prompt("ltv", "code", &trace, 2, 10).unwrap();
        assert!(b.rendered_text.contains("[... 94 bytes elided ...]\nxxxxxxTAIL"));
        assert!(b.rendered_text.contains("repair attempt 2"));
        let b = repair_prompt("ltv", "code", "  ", 1, 10).unwrap();
        assert!(b.rendered_text.contains(EMPTY_TRACE));
        assert!(b.rendered_text.contains("score = {score}"));
    }

    #[test]
    fn slug_labels() {
        assert_eq!(
            slugify("Enhanced temporal attention mechanism!", 6),
            "enhanced_temporal_attention_mechanism"
        );
        assert_eq!(
            slugify(
                "<description>\nSwitch the target transform to rank [edit transform:rank]\n",
                4
            ),
            "switch_the_target_transform"
        );
    }

    proptest::proptest! {
        #[test]
        fn priors_positive_and_normalized(reply in ".{0,20}", n in 1usize..8) {
            let p = priors_from_reply(&reply, n, 0.5);
            proptest::prop_assert_eq!(p.len(), n);
            proptest::prop_assert!(p.iter().all(|v| *v > 0.0));
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
