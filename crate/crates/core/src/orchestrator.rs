//! Drives a run through its phases one resumable step at a time.
//!
//! Every piece of mutable search state lives in the [`RunLedger`]; the RNG
//! is re-derived from the seed and the stored word position, so a ledger
//! saved between any two steps resumes exactly where it stopped.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::error::{Error, Result};
use crate::evolution::{seed_islands, EvolutionState};
use crate::executor::Executor;
use crate::generator::{base_template, CompletionBackend, Generator};
use crate::ledger::{EventKind, EventLog, Services};
use crate::mcts::MctsState;
use crate::reporting::RunLedger;
use crate::reward::Bounds;
use crate::types::{CandidateNode, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Mcts,
    Ea,
    Done,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Mcts => "mcts",
            Phase::Ea => "ea",
            Phase::Done => "done",
        }
    }
}

/// Which parts of the pipeline run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Tree search followed by evolution.
    #[default]
    None,
    /// Evolution seeded from the best root; no expansions.
    NoMcts,
    /// The tree-search result is final.
    NoEa,
    /// A uniformly drawn feasible root is final.
    RandomRoot,
}

impl Ablation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Ablation::None),
            "no-mcts" => Some(Ablation::NoMcts),
            "no-ea" => Some(Ablation::NoEa),
            "random-root" => Some(Ablation::RandomRoot),
            _ => None,
        }
    }

    fn expands(self) -> bool {
        matches!(self, Ablation::None | Ablation::NoEa)
    }

    fn evolves(self) -> bool {
        matches!(self, Ablation::None | Ablation::NoMcts)
    }
}

pub struct Orchestrator {
    pub ledger: RunLedger,
    generator: Generator,
    executor: Executor,
    base_code: String,
}

impl Orchestrator {
    /// Fresh run with the backends named in the configuration.
    pub fn new(cfg: SearchConfig, ablation: Ablation) -> Result<Self> {
        let generator = Generator::from_config(&cfg)?;
        Self::with_generator(RunLedger::new(cfg, ablation), generator)
    }

    /// Continues a saved run.
    pub fn resume(ledger: RunLedger) -> Result<Self> {
        let generator = Generator::from_config(&ledger.config)?;
        Self::with_generator(ledger, generator)
    }

    pub fn with_generator(ledger: RunLedger, generator: Generator) -> Result<Self> {
        ledger.config.validate()?;
        let base_code = match &ledger.config.base_program {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read base program {}: {e}", p.display())))?,
            None => base_template(),
        };
        let executor = Executor::from_config(&ledger.config);
        Ok(Orchestrator {
            ledger,
            generator,
            executor,
            base_code,
        })
    }

    /// Replaces the default backend (the run's recorded config is kept).
    pub fn with_backend(ledger: RunLedger, backend: Arc<dyn CompletionBackend>) -> Result<Self> {
        let generator = Generator::new(backend, crate::generator::AdviceLibrary::shipped(), &ledger.config);
        Self::with_generator(ledger, generator)
    }

    pub fn phase(&self) -> Phase {
        self.ledger.phase
    }

    /// Advances by one iteration. Returns the phase afterwards.
    pub fn step(&mut self) -> Result<Phase> {
        let l = &mut self.ledger;
        let mut rng = ChaCha8Rng::seed_from_u64(l.config.rng_seed);
        rng.set_word_pos(l.rng_words as u128);
        let mut svc = Services {
            cfg: &l.config,
            generator: &self.generator,
            executor: &self.executor,
            rng: &mut rng,
            log: &mut l.events,
        };
        let outcome = advance(
            &mut l.phase,
            &mut l.mcts,
            &mut l.evolution,
            &mut l.c_mcts,
            &mut l.c_star,
            l.ablation,
            &self.base_code,
            &mut svc,
        );
        l.rng_words = rng.get_word_pos() as u64;
        outcome?;
        Ok(l.phase)
    }

    /// Steps until the phase reaches `until` (or later). Checks `interrupt`
    /// between steps and returns [`Error::Interrupted`] when it is set.
    pub fn run_until(&mut self, until: Phase, interrupt: Option<&AtomicBool>) -> Result<()> {
        while self.ledger.phase < until {
            if interrupt.is_some_and(|f| f.load(Ordering::SeqCst)) {
                return Err(Error::Interrupted);
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(Phase::Done, None)
    }
}

#[allow(clippy::too_many_arguments)]
fn advance(
    phase: &mut Phase,
    mcts: &mut Option<MctsState>,
    evolution: &mut Option<EvolutionState>,
    c_mcts: &mut Option<NodeId>,
    c_star: &mut Option<NodeId>,
    ablation: Ablation,
    base_code: &str,
    svc: &mut Services,
) -> Result<()> {
    match *phase {
        Phase::Mcts => {
            let Some(st) = mcts.as_mut() else {
                *mcts = Some(MctsState::init(svc, base_code)?);
                return Ok(());
            };
            if ablation.expands() && !st.is_done(svc.cfg.mcts_budget) {
                st.step(svc)?;
                return Ok(());
            }
            let chosen = match ablation {
                Ablation::RandomRoot => {
                    let roots: Vec<NodeId> = st
                        .tree
                        .roots()
                        .iter()
                        .copied()
                        .filter(|r| st.tree.nodes[r].is_feasible())
                        .collect();
                    roots[svc.rng.gen_range(0..roots.len())]
                }
                _ => st.result()?.id(),
            };
            *c_mcts = Some(chosen);
            *phase = if ablation.evolves() { Phase::Ea } else { Phase::Done };
            if *phase == Phase::Done {
                *c_star = Some(chosen);
            }
            svc.log.push(
                EventKind::Phase,
                Some(chosen),
                format!("tree phase done; next {}", phase.name()),
                svc.rng,
            );
        }
        Phase::Ea => {
            let Some(st) = evolution.as_mut() else {
                let tree = &mcts
                    .as_ref()
                    .ok_or_else(|| Error::Phase("no tree-search state".into()))?
                    .tree;
                let id = c_mcts.ok_or_else(|| Error::Phase("no tree-search result".into()))?;
                let seed: CandidateNode = tree.nodes[&id].clone();
                let bounds = Bounds::from_archive(&tree.archive_metrics(), &svc.cfg.objectives)
                    .ok_or_else(|| Error::Phase("empty tree archive".into()))?;
                *evolution = Some(seed_islands(&seed, bounds, tree.peek_next_id().0, svc)?);
                return Ok(());
            };
            if st.step(svc)? {
                let best = st.result()?.id();
                *c_star = Some(best);
                *phase = Phase::Done;
                svc.log.push(EventKind::Phase, Some(best), "evolution done", svc.rng);
            }
        }
        Phase::Done => {}
    }
    Ok(())
}

/// Event log of a ledger, for callers that only need the records.
pub fn events(ledger: &RunLedger) -> &EventLog {
    &ledger.events
}
