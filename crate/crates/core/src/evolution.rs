//! Island-model refinement of the tree-search winner.
//!
//! Every island starts from c_MCTS plus mutated variants. A generation keeps
//! the top-ρ elites, breeds offspring by crossover followed by a guided
//! mutation, and refills the population. Elites are copied between islands
//! every τ generations. Fitness is the composite reward under the
//! normalization bounds frozen at the end of the tree phase, cached when a
//! candidate is first evaluated.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::{program_label, sample_index, NodeContext};
use crate::ledger::{EventKind, Services};
use crate::mcts::evaluate_candidate;
use crate::reward::{composite_rewards, Bounds, RewardParams};
use crate::types::{best_by_reward, CandidateNode, Island, Lineage, MetricVector, NodeId, Origin, ProgramSource};

/// Draws per offspring when hunting for an unused parent pair and hint.
const REDRAWS: usize = 8;

/// Mutation directions used when seeding islands.
pub const MUTATION_CATEGORIES: [&str; 4] = [
    "feature engineering: add, remove or rework one group of input features",
    "model architecture: switch the pipeline to a different model family",
    "hyperparameter: retune the regularization strength",
    "loss / target transform: change how the label is transformed before fitting",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub islands: Vec<Island>,
    /// Completed round-robin rounds over all islands.
    pub generation: u32,
    /// Island the next step works on.
    pub cursor: usize,
    pub frozen_bounds: Bounds,
    /// Every feasible candidate of the phase, in evaluation order.
    pub ea_archive: Vec<CandidateNode>,
    pub feasible_offspring_count: usize,
    /// Offspring attempts so far (feasible, infeasible and aborted).
    pub attempts: usize,
    pub c_mcts: NodeId,
    pub next_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_backend_error: Option<String>,
}

/// F for a candidate evaluated against `archive`: the composite over the
/// archive plus the candidate, under frozen bounds.
pub fn fitness_against(
    metrics: &MetricVector,
    archive: &[MetricVector],
    bounds: &Bounds,
    params: &RewardParams,
) -> f64 {
    let mut all = archive.to_vec();
    all.push(*metrics);
    *composite_rewards(&all, params, Some(bounds))
        .last()
        .expect("archive includes the candidate")
}

/// Cached fitness, or a fresh evaluation against the current EA archive.
pub fn fitness(candidate: &CandidateNode, state: &EvolutionState, params: &RewardParams) -> Option<f64> {
    if let Some(f) = candidate.reward {
        return Some(f);
    }
    let m = candidate.metrics?;
    Some(fitness_against(
        &m,
        &state.archive_metrics(),
        &state.frozen_bounds,
        params,
    ))
}

fn by_fitness(a: &CandidateNode, b: &CandidateNode) -> std::cmp::Ordering {
    let fa = a.reward.unwrap_or(f64::NEG_INFINITY);
    let fb = b.reward.unwrap_or(f64::NEG_INFINITY);
    fb.total_cmp(&fa).then(a.id().cmp(&b.id()))
}

/// Top ceil(ρ·n) feasible members by fitness (lowest id on ties).
pub fn select_elites(population: &[CandidateNode], rho: f64) -> Result<Vec<NodeId>> {
    let mut feasible: Vec<&CandidateNode> = population.iter().filter(|c| c.is_feasible()).collect();
    if feasible.is_empty() {
        return Err(Error::Selection("island has no feasible member".into()));
    }
    feasible.sort_by(|a, b| by_fitness(a, b));
    let n = feasible.len();
    let k = ((rho * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(feasible[..k].iter().map(|c| c.id()).collect())
}

fn source_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Protected members always stay; the rest fill the remaining slots by
/// fitness. Duplicates by source text are dropped first, with priority to
/// protected members and then to `rest` in the given order.
fn form_population(mut protected: Vec<CandidateNode>, rest: Vec<CandidateNode>, size: usize) -> Vec<CandidateNode> {
    protected.sort_by(by_fitness);
    let mut seen = BTreeSet::new();
    let mut keep: Vec<CandidateNode> = protected
        .into_iter()
        .filter(|c| seen.insert(source_hash(&c.program.source_text)))
        .collect();
    let mut others: Vec<CandidateNode> = rest
        .into_iter()
        .filter(|c| seen.insert(source_hash(&c.program.source_text)))
        .collect();
    others.sort_by(by_fitness);
    others.truncate(size.saturating_sub(keep.len()));
    keep.extend(others);
    keep.sort_by(by_fitness);
    keep
}

fn summary(c: &CandidateNode) -> String {
    let m = c.metrics.unwrap_or(MetricVector::new(0.0, 0.0, 0.0, 0.0));
    format!(
        "{} (F={:.4}): er={:.4}, norm_gini={:.4}, spearman={:.4}, rmse={:.4}",
        c.program.label,
        c.reward.unwrap_or(0.0),
        m.er,
        m.norm_gini,
        m.spearman,
        m.rmse
    )
}

impl EvolutionState {
    pub fn archive_metrics(&self) -> Vec<MetricVector> {
        self.ea_archive.iter().filter_map(|c| c.metrics).collect()
    }

    fn allocate_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Evaluates a generated program and, when feasible, assigns its cached
    /// fitness and appends it to the archive.
    fn evaluate(&mut self, svc: &mut Services, program: ProgramSource, generation: u32) -> Result<CandidateNode> {
        let archive = self.archive_metrics();
        let bounds = self.frozen_bounds.clone();
        let params = svc.cfg.reward_params();
        let mut node = evaluate_candidate(svc, program, 1.0, |m| {
            Ok(fitness_against(m, &archive, &bounds, &params))
        })?;
        node.generation = generation;
        if node.is_feasible() {
            self.ea_archive.push(node.clone());
        }
        Ok(node)
    }

    /// Best member across all island populations.
    pub fn best(&self) -> Option<&CandidateNode> {
        best_by_reward(self.islands.iter().flat_map(|i| i.population.iter()))
    }

    pub fn is_done(&self, budget: usize) -> bool {
        self.feasible_offspring_count >= budget
    }
}

/// Builds the islands: c_MCTS in each, plus mutated variants. Infeasible
/// variants are regenerated up to the retry cap, then dropped.
pub fn seed_islands(
    c_mcts: &CandidateNode,
    frozen_bounds: Bounds,
    next_id: u64,
    svc: &mut Services,
) -> Result<EvolutionState> {
    let metrics = c_mcts
        .metrics
        .ok_or_else(|| Error::Seeding("c_MCTS is not feasible".into()))?;
    let params = svc.cfg.reward_params();
    let mut seed = c_mcts.clone();
    seed.mark_feasible(metrics, fitness_against(&metrics, &[], &frozen_bounds, &params));
    seed.parent = None;
    seed.children.clear();
    seed.generation = 0;
    let mut st = EvolutionState {
        islands: Vec::new(),
        generation: 0,
        cursor: 0,
        frozen_bounds,
        ea_archive: vec![seed.clone()],
        feasible_offspring_count: 0,
        attempts: 0,
        c_mcts: seed.id(),
        next_id,
        last_backend_error: None,
    };
    for k in 0..svc.cfg.num_islands {
        let mut island = Island::new(k);
        island.population.push(seed.clone());
        for v in 1..svc.cfg.population_size {
            for retry in 0..=svc.cfg.seed_retry_cap {
                let category = MUTATION_CATEGORIES[(k + v - 1) % MUTATION_CATEGORIES.len()];
                let hint = if retry == 0 {
                    format!("{category} (island {}, variant {v})", k + 1)
                } else {
                    format!("{category} (island {}, variant {v}, retry {retry})", k + 1)
                };
                let id = st.allocate_id();
                let lineage = Lineage::new(Origin::Mutation, vec![seed.id()]).with_hint(hint.clone());
                let node = match svc.generator.mutate(&seed.program.source_text, &hint) {
                    Ok(code) => {
                        let label = program_label(&code, Some(&hint));
                        st.evaluate(svc, ProgramSource::new(id, code, lineage, label), 0)?
                    }
                    Err(Error::Generation(_)) => {
                        svc.log.push(EventKind::Seeding, Some(id), "no code extracted", svc.rng);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                svc.log.push(
                    EventKind::Seeding,
                    Some(id),
                    format!(
                        "island {k} variant {v}: {} {}",
                        node.program.label,
                        node.reward.map_or("infeasible".to_string(), |f| format!("F={f:.6}"))
                    ),
                    svc.rng,
                );
                if node.is_feasible() {
                    island.population.push(node);
                    break;
                }
            }
        }
        if island.population.is_empty() {
            return Err(Error::Seeding(format!("island {k} has no feasible member")));
        }
        island.population.sort_by(by_fitness);
        island.elites = select_elites(&island.population, svc.cfg.elite_ratio)?;
        st.islands.push(island);
    }
    Ok(st)
}

fn is_backend(e: &Error) -> bool {
    matches!(e, Error::Backend { .. })
}

/// One generation on island `k`.
pub fn step_generation(st: &mut EvolutionState, k: usize, svc: &mut Services) -> Result<()> {
    let cfg = svc.cfg;
    if st.islands[k].population.iter().all(|c| !c.is_feasible()) {
        let best = st
            .best()
            .cloned()
            .ok_or_else(|| Error::Selection("every island is extinct".into()))?;
        svc.log.push(
            EventKind::Generation,
            Some(best.id()),
            format!("island {k} reseeded"),
            svc.rng,
        );
        st.islands[k].population = vec![best];
    }
    st.islands[k].population.retain(|c| c.is_feasible());
    let elite_ids = select_elites(&st.islands[k].population, cfg.elite_ratio)?;
    let elites: Vec<CandidateNode> = elite_ids
        .iter()
        .map(|id| {
            st.islands[k]
                .population
                .iter()
                .find(|c| c.id() == *id)
                .cloned()
                .expect("elite in population")
        })
        .collect();

    let ctx = NodeContext {
        code: elites[0].program.source_text.clone(),
        metrics: elites[0].metrics,
        related: elites[1..].iter().map(|e| format!("elite: {}", summary(e))).collect(),
    };
    let advice = svc
        .generator
        .propose_advice(&ctx)
        .and_then(|s| svc.generator.score_advice(&s, &ctx.code).map(|p| (s, p)));
    let (suggestions, priors) = match advice {
        Ok(v) => v,
        Err(e) if is_backend(&e) => {
            st.attempts += 1;
            svc.log.push(
                EventKind::Failure,
                None,
                format!("island {k} advice aborted: {e}"),
                svc.rng,
            );
            st.last_backend_error = Some(e.to_string());
            return Ok(());
        }
        Err(e) => return Err(e),
    };

    let generation = st.islands[k].generation + 1;
    let n_offspring = cfg.population_size.saturating_sub(elites.len()).max(1);
    let mut offspring = Vec::new();
    let mut used = BTreeSet::new();
    for _ in 0..n_offspring {
        if st.is_done(cfg.ea_budget) {
            break;
        }
        if st.attempts >= cfg.ea_attempt_cap() {
            return Err(attempt_cap_error(st, cfg.ea_budget));
        }
        st.attempts += 1;
        // Redraw a few times rather than repeat a (pair, hint) combination
        // already bred this generation.
        let mut draw = (0, 0, 0);
        for _ in 0..REDRAWS {
            let (a, b) = if elites.len() == 1 {
                (0, 0)
            } else {
                let pair = index::sample(svc.rng, elites.len(), 2);
                (pair.index(0), pair.index(1))
            };
            let u: f64 = svc.rng.gen();
            draw = (a.min(b), a.max(b), sample_index(&priors, u));
            if !used.contains(&draw) {
                break;
            }
        }
        used.insert(draw);
        let (p1, p2) = (&elites[draw.0], &elites[draw.1]);
        let hint = suggestions[draw.2].clone();
        let code = svc
            .generator
            .crossover(
                &p1.program.source_text,
                p1.reward.unwrap_or(0.0),
                &p2.program.source_text,
                p2.reward.unwrap_or(0.0),
            )
            .and_then(|child| svc.generator.mutate(&child, &hint));
        let code = match code {
            Ok(c) => Some(c),
            Err(e) if is_backend(&e) => {
                svc.log.push(
                    EventKind::Failure,
                    None,
                    format!("island {k} offspring aborted: {e}"),
                    svc.rng,
                );
                st.last_backend_error = Some(e.to_string());
                continue;
            }
            Err(Error::Generation(_)) => None,
            Err(e) => return Err(e),
        };
        st.last_backend_error = None;
        let id = st.allocate_id();
        let lineage = Lineage::new(Origin::Crossover, vec![p1.id(), p2.id()]).with_hint(hint.clone());
        let node = match code {
            Some(code) => {
                let label = program_label(&code, Some(&hint));
                st.evaluate(svc, ProgramSource::new(id, code, lineage, label), generation)?
            }
            None => {
                let mut n = CandidateNode::pending(
                    ProgramSource::new(id, "(no code)".into(), lineage, "no_code".into()),
                    1.0,
                );
                n.mark_infeasible("no code extracted");
                n
            }
        };
        svc.log.push(
            EventKind::Generation,
            Some(id),
            format!(
                "island {k} gen {generation}: {} x {} -> {} {}",
                p1.id(),
                p2.id(),
                node.program.label,
                node.reward.map_or("infeasible".to_string(), |f| format!("F={f:.6}"))
            ),
            svc.rng,
        );
        if node.is_feasible() {
            st.feasible_offspring_count += 1;
            offspring.push(node);
        }
    }

    let island = &mut st.islands[k];
    island.population = form_population(elites, offspring, cfg.population_size);
    island.elites = elite_ids
        .into_iter()
        .filter(|id| island.population.iter().any(|c| c.id() == *id))
        .collect();
    island.generation = generation;
    Ok(())
}

fn attempt_cap_error(st: &mut EvolutionState, budget: usize) -> Error {
    match st.last_backend_error.take() {
        Some(message) => Error::Backend {
            message,
            status: None,
            attempts: st.attempts as u32,
        },
        None => Error::BudgetExhausted(format!(
            "evolution reached {} feasible offspring of {budget} after {} attempts",
            st.feasible_offspring_count, st.attempts
        )),
    }
}

/// Copies every island's elites into every other island, drops source
/// duplicates and truncates with local elites protected.
pub fn migrate(st: &mut EvolutionState, population_size: usize) {
    let outgoing: Vec<Vec<CandidateNode>> = st
        .islands
        .iter()
        .map(|i| {
            i.population
                .iter()
                .filter(|c| i.elites.contains(&c.id()))
                .cloned()
                .collect()
        })
        .collect();
    for (k, island) in st.islands.iter_mut().enumerate() {
        let (local_elites, mut rest): (Vec<CandidateNode>, Vec<CandidateNode>) = island
            .population
            .drain(..)
            .partition(|c| island.elites.contains(&c.id()));
        for (j, out) in outgoing.iter().enumerate() {
            if j != k {
                rest.extend(out.iter().cloned());
            }
        }
        island.population = form_population(local_elites, rest, population_size);
        let kept: Vec<NodeId> = island.population.iter().map(|c| c.id()).collect();
        island.elites.retain(|id| kept.contains(id));
    }
}

impl EvolutionState {
    /// One island-generation (plus migration when a round completes on a
    /// migration boundary). Returns true once the offspring budget is met.
    pub fn step(&mut self, svc: &mut Services) -> Result<bool> {
        if self.is_done(svc.cfg.ea_budget) {
            return Ok(true);
        }
        if self.attempts >= svc.cfg.ea_attempt_cap() {
            return Err(attempt_cap_error(self, svc.cfg.ea_budget));
        }
        let k = self.cursor;
        let before = self.islands[k].generation;
        step_generation(self, k, svc)?;
        if self.islands[k].generation == before {
            // Aborted on a backend failure; retry the same island.
            return Ok(self.is_done(svc.cfg.ea_budget));
        }
        self.cursor += 1;
        if self.cursor == self.islands.len() {
            self.cursor = 0;
            self.generation += 1;
            if self.generation.is_multiple_of(svc.cfg.migration_period) && self.islands.len() > 1 {
                migrate(self, svc.cfg.population_size);
                svc.log.push(
                    EventKind::Migration,
                    None,
                    format!("round {} migration", self.generation),
                    svc.rng,
                );
            }
        }
        Ok(self.is_done(svc.cfg.ea_budget))
    }

    pub fn result(&self) -> Result<&CandidateNode> {
        self.best()
            .ok_or_else(|| Error::Selection("no feasible candidate in any island".into()))
    }
}

/// Runs the whole phase and returns c* with the final state.
pub fn run_evolution(
    c_mcts: &CandidateNode,
    frozen_bounds: Bounds,
    next_id: u64,
    svc: &mut Services,
) -> Result<(ProgramSource, EvolutionState)> {
    let mut st = seed_islands(c_mcts, frozen_bounds, next_id, svc)?;
    while !st.step(svc)? {}
    let best = st.result()?.program.clone();
    Ok((best, st))
}
