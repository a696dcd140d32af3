//! Deterministic stand-in for the completion service.
//!
//! Replies are a pure function of (role, SHA-256 of the rendered prompt,
//! seed). Programs come from the parametric template family in
//! [`super::landscape`], so every search decision lands on an enumerable
//! grid point.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::landscape::{
    has_defect, parse_params, render_program, Defect, Edit, ModelFamily, PipelineParams, Transform, REG_LEVELS,
};
use super::templates::{PromptBundle, PromptRole};
use super::CompletionBackend;

/// Probability that a freshly generated program carries a defect.
const DEFECT_RATE: f64 = 0.15;
/// Probability that one repair attempt removes a defect.
const REPAIR_SUCCESS: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend { seed }
    }

    fn rng_for(&self, bundle: &PromptBundle) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(bundle.role.name().as_bytes());
        h.update([0u8]);
        h.update(Sha256::digest(bundle.rendered_text.as_bytes()));
        h.update(self.seed.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn program(&self, params: PipelineParams, rng: &mut ChaCha8Rng) -> String {
        let defect = if rng.gen_bool(DEFECT_RATE) {
            Some(if rng.gen_bool(0.5) {
                Defect::NameError
            } else {
                Defect::MissingOutput
            })
        } else {
            None
        };
        fenced(&render_program(&params, defect))
    }
}

fn fenced(code: &str) -> String {
    format!("Here is the complete program.\n\n```sh\n{code}```\n")
}

fn random_params(rng: &mut ChaCha8Rng) -> PipelineParams {
    PipelineParams {
        features: rng.gen_range(0..16),
        transform: Transform::ALL[rng.gen_range(0..Transform::ALL.len())],
        reg: rng.gen_range(0..REG_LEVELS),
        model: ModelFamily::ALL[rng.gen_range(0..ModelFamily::ALL.len())],
    }
}

fn random_edit(p: PipelineParams, rng: &mut ChaCha8Rng) -> Edit {
    let edits = p.neighbour_edits();
    edits[rng.gen_range(0..edits.len())]
}

/// Edit matching one of the mutation categories named in a hint.
fn category_edit(hint: &str, p: PipelineParams, rng: &mut ChaCha8Rng) -> Option<Edit> {
    let h = hint.to_lowercase();
    let pool: Vec<Edit> = p
        .neighbour_edits()
        .into_iter()
        .filter(|e| match e {
            Edit::ToggleFeature(_) => h.contains("feature"),
            Edit::SetModel(_) => h.contains("architecture"),
            Edit::SetReg(_) => h.contains("hyperparameter"),
            Edit::SetTransform(_) => h.contains("loss") || h.contains("target"),
        })
        .collect();
    pool.choose(rng).copied()
}

impl CompletionBackend for MockBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        let mut rng = self.rng_for(bundle);
        let get = |k: &str| bundle.get(k).unwrap_or("");
        let reply = match bundle.role {
            PromptRole::CodeGen => {
                let hint = get("method_hint");
                let params = match (parse_params(get("code")), Edit::parse_from(hint)) {
                    (Some(p), Some(e)) => e.apply(p),
                    _ => random_params(&mut rng),
                };
                self.program(params, &mut rng)
            }
            PromptRole::ExpertApply => {
                let base = parse_params(get("code")).unwrap_or(PipelineParams::BASELINE);
                let edit = Edit::parse_from(get("advice")).unwrap_or_else(|| random_edit(base, &mut rng));
                self.program(edit.apply(base), &mut rng)
            }
            PromptRole::Mutate => {
                let base = parse_params(get("code")).unwrap_or(PipelineParams::BASELINE);
                let hint = get("mutation_hint");
                let edit = Edit::parse_from(hint)
                    .or_else(|| category_edit(hint, base, &mut rng))
                    .unwrap_or_else(|| random_edit(base, &mut rng));
                self.program(edit.apply(base), &mut rng)
            }
            PromptRole::Crossover => {
                let a = parse_params(get("code1")).unwrap_or(PipelineParams::BASELINE);
                let b = parse_params(get("code2")).unwrap_or(PipelineParams::BASELINE);
                let mut features = 0u8;
                for k in 0..super::landscape::FEATURE_GROUPS {
                    let src = if rng.gen_bool(0.5) { a.features } else { b.features };
                    features |= src & (1 << k);
                }
                let child = PipelineParams {
                    features,
                    transform: if rng.gen_bool(0.5) { a.transform } else { b.transform },
                    reg: if rng.gen_bool(0.5) { a.reg } else { b.reg },
                    model: if rng.gen_bool(0.5) { a.model } else { b.model },
                };
                self.program(child, &mut rng)
            }
            PromptRole::Fixer => {
                let code = get("code");
                match parse_params(code) {
                    Some(p) if has_defect(code) && rng.gen_bool(REPAIR_SUCCESS) => fenced(&render_program(&p, None)),
                    _ => fenced(code),
                }
            }
            PromptRole::Adviser => {
                let base = parse_params(get("code")).unwrap_or(PipelineParams::BASELINE);
                let max: usize = get("max_suggestions").parse().unwrap_or(5).clamp(1, 5);
                let mut edits = base.neighbour_edits();
                edits.shuffle(&mut rng);
                let k = rng.gen_range(max.min(3)..=max);
                let mut out = String::from("Suggestions:\n");
                for e in edits.into_iter().take(k) {
                    out.push_str(&format!("- {}\n", e.describe(base)));
                }
                out
            }
            PromptRole::Compare => {
                let a = parse_params(get("code1"));
                let b = parse_params(get("code2"));
                match (a, b) {
                    (Some(a), Some(b)) => format!(
                        "1. CODE 1 uses {a}; CODE 2 uses {b}.\n2. They differ in {}.\n3. Each keeps the shared evaluation harness.",
                        differing_fields(a, b)
                    ),
                    _ => "1. Both programs follow the same overall pipeline.\n2. No structural differences detected.\n3. n/a".into(),
                }
            }
            PromptRole::FormatIdea => {
                let idea = get("idea").trim();
                format!(
                    "<description>\n{idea}\n</description>\n<steps>\n1. Apply the change to the pipeline.\n2. Re-run training and evaluation.\n</steps>\n<notes>\nLocal change; effect measured by the evaluation metrics.\n</notes>"
                )
            }
            PromptRole::ExpertSelect => {
                let n: usize = get("num_options").parse().unwrap_or(1).max(1);
                format!("{}", rng.gen_range(1..=n))
            }
        };
        Ok(reply)
    }
}

fn differing_fields(a: PipelineParams, b: PipelineParams) -> String {
    let mut out = Vec::new();
    if a.features != b.features {
        out.push("feature groups");
    }
    if a.transform != b.transform {
        out.push("target transform");
    }
    if a.reg != b.reg {
        out.push("regularization");
    }
    if a.model != b.model {
        out.push("model family");
    }
    if out.is_empty() {
        "nothing".into()
    } else {
        out.join(", ")
    }
}
