//! `{slot}` prompt templates. `{{` and `}}` are literal braces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FALLBACK_HINT: &str = "Improve this code to achieve a better score.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    CodeGen,
    Adviser,
    Compare,
    ExpertSelect,
    ExpertApply,
    Fixer,
    Crossover,
    Mutate,
    FormatIdea,
}

impl PromptRole {
    pub const ALL: [PromptRole; 9] = [
        PromptRole::CodeGen,
        PromptRole::Adviser,
        PromptRole::Compare,
        PromptRole::ExpertSelect,
        PromptRole::ExpertApply,
        PromptRole::Fixer,
        PromptRole::Crossover,
        PromptRole::Mutate,
        PromptRole::FormatIdea,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptRole::CodeGen => "code_gen",
            PromptRole::Adviser => "adviser",
            PromptRole::Compare => "compare",
            PromptRole::ExpertSelect => "expert_select",
            PromptRole::ExpertApply => "expert_apply",
            PromptRole::Fixer => "fixer",
            PromptRole::Crossover => "crossover",
            PromptRole::Mutate => "mutate",
            PromptRole::FormatIdea => "format_idea",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    /// The shipped template text for this role.
    pub fn asset(self) -> &'static str {
        match self {
            PromptRole::CodeGen => include_str!("../../assets/prompts/code_gen.txt"),
            PromptRole::Adviser => include_str!("../../assets/prompts/adviser.txt"),
            PromptRole::Compare => include_str!("../../assets/prompts/compare.txt"),
            PromptRole::ExpertSelect => include_str!("../../assets/prompts/expert_select.txt"),
            PromptRole::ExpertApply => include_str!("../../assets/prompts/expert_apply.txt"),
            PromptRole::Fixer => include_str!("../../assets/prompts/fixer.txt"),
            PromptRole::Crossover => include_str!("../../assets/prompts/crossover.txt"),
            PromptRole::Mutate => include_str!("../../assets/prompts/mutate.txt"),
            PromptRole::FormatIdea => include_str!("../../assets/prompts/format_idea.txt"),
        }
    }
}

impl fmt::Display for PromptRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Template {
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut lit = String::new();
        let mut chars = text.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if matches!(chars.peek(), Some((_, '{'))) => {
                    chars.next();
                    lit.push('{');
                }
                '}' if matches!(chars.peek(), Some((_, '}'))) => {
                    chars.next();
                    lit.push('}');
                }
                '{' => {
                    let rest = &text[i + 1..];
                    let end = rest
                        .find('}')
                        .ok_or_else(|| Error::Template(format!("unclosed slot at byte {i}")))?;
                    let name = &rest[..end];
                    if !is_slot_name(name) {
                        return Err(Error::Template(format!("bad slot name `{name}` at byte {i}")));
                    }
                    if !lit.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut lit)));
                    }
                    segments.push(Segment::Slot(name.to_string()));
                    for _ in 0..=end {
                        chars.next();
                    }
                }
                '}' => return Err(Error::Template(format!("stray `}}` at byte {i}"))),
                _ => lit.push(c),
            }
        }
        if !lit.is_empty() {
            segments.push(Segment::Literal(lit));
        }
        Ok(Template { segments })
    }

    pub fn slots(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.segments {
            if let Segment::Slot(n) = s {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
        }
        out
    }

    pub fn render(&self, values: &BTreeMap<String, String>) -> Result<String> {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Literal(l) => out.push_str(l),
                Segment::Slot(n) => out.push_str(
                    values
                        .get(n)
                        .ok_or_else(|| Error::Template(format!("missing placeholder `{n}`")))?,
                ),
            }
        }
        Ok(out)
    }

    /// Template source text, with literal braces escaped again.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Literal(l) => out.push_str(&l.replace('{', "{{").replace('}', "}}")),
                Segment::Slot(n) => {
                    out.push('{');
                    out.push_str(n);
                    out.push('}');
                }
            }
        }
        out
    }
}

/// A rendered prompt together with the values that filled it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: PromptRole,
    pub rendered_text: String,
    pub placeholders: BTreeMap<String, String>,
}

impl PromptBundle {
    pub fn get(&self, slot: &str) -> Option<&str> {
        self.placeholders.get(slot).map(String::as_str)
    }
}

/// Fills the role's template. Every slot must be supplied; an empty
/// `method_hint` falls back to the generic improvement instruction.
pub fn render_prompt(role: PromptRole, placeholders: BTreeMap<String, String>) -> Result<PromptBundle> {
    let template = Template::parse(role.asset())?;
    let mut values = placeholders;
    if role == PromptRole::CodeGen {
        if let Some(h) = values.get_mut("method_hint") {
            if h.trim().is_empty() {
                *h = FALLBACK_HINT.to_string();
            }
        }
    }
    let rendered_text = template.render(&values)?;
    Ok(PromptBundle {
        role,
        rendered_text,
        placeholders: values,
    })
}

/// Builds a placeholder map from pairs.
pub fn slots<I, K, V>(pairs: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_asset_round_trips() {
        for role in PromptRole::ALL {
            let t = Template::parse(role.asset()).unwrap();
            assert_eq!(t.to_source(), role.asset(), "{role}");
        }
    }

    #[test]
    fn identity_render_matches_asset_modulo_escapes() {
        for role in PromptRole::ALL {
            let t = Template::parse(role.asset()).unwrap();
            let ident = t
                .slots()
                .into_iter()
                .map(|s| (s.to_string(), format!("{{{s}}}")))
                .collect();
            let rendered = t.render(&ident).unwrap();
            assert_eq!(rendered, role.asset().replace("{{", "{").replace("}}", "}"));
        }
    }

    #[test]
    fn crossover_contains_both_codes_and_scores() {
        let b = render_prompt(
            PromptRole::Crossover,
            slots([
                ("comparison", "they differ"),
                ("score1", "0.81"),
                ("score2", "0.77"),
                ("code1", "print('a')"),
                ("code2", "print('b')"),
            ]),
        )
        .unwrap();
        for needle in ["print('a')", "print('b')", "0.81", "0.77", "USES THE BEST PARTS"] {
            assert!(b.rendered_text.contains(needle), "{needle}");
        }
    }

    #[test]
    fn empty_method_hint_falls_back() {
        let b = render_prompt(
            PromptRole::CodeGen,
            slots([("task_name", "ltv"), ("method_hint", ""), ("code", "x = 1")]),
        )
        .unwrap();
        assert!(b.rendered_text.contains(FALLBACK_HINT));
        assert!(b.rendered_text.contains("print(f\"score = {score}\")"));
    }

    #[test]
    fn missing_slot_is_a_template_error() {
        let e = render_prompt(
            PromptRole::Crossover,
            slots([("score1", "1"), ("score2", "2"), ("code1", "a"), ("code2", "b")]),
        )
        .unwrap_err();
        assert!(matches!(e, Error::Template(m) if m.contains("comparison")));
    }

    #[test]
    fn expert_select_keeps_single_choice_contract() {
        assert!(PromptRole::ExpertSelect
            .asset()
            .contains("select the SINGLE most appropriate"));
        assert!(PromptRole::FormatIdea
            .asset()
            .starts_with("Structure the given idea into the following format"));
    }

    #[test]
    fn parse_errors() {
        assert!(Template::parse("a {unclosed").is_err());
        assert!(Template::parse("a } b").is_err());
        assert!(Template::parse("{Bad Name}").is_err());
    }
}
