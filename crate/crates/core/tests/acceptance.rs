//! Acceptance checks, one PASS/FAIL line each. Every check carries its own
//! oracle; nothing here reuses the code under test to compute an expected
//! value.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use agentsearch::config::SearchConfig;
use agentsearch::error::Result as AsResult;
use agentsearch::evolution::{seed_islands, EvolutionState};
use agentsearch::executor::{ExecStatus, Executor};
use agentsearch::generator::landscape::{landscape_optimum, landscape_quality};
use agentsearch::generator::{base_template, AdviceLibrary, CompletionBackend, Generator, PromptBundle};
use agentsearch::ledger::{EventLog, Services};
use agentsearch::mcts::{backpropagate, select_node, MctsState};
use agentsearch::metrics::{self, GiniVariant, LabeledPredictions};
use agentsearch::orchestrator::{Ablation, Orchestrator, Phase};
use agentsearch::reporting::{decode_state, encode_state, RunLedger};
use agentsearch::reward::{crowding_distance, pareto_front, Bounds};
use agentsearch::tree::SearchTree;
use agentsearch::types::{CandidateNode, Lineage, MetricVector, NodeId, Origin, ProgramSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn node(id: u64, prior: f64, reward: Option<f64>) -> CandidateNode {
    let p = ProgramSource::new(
        NodeId(id),
        format!("p{id}"),
        Lineage::new(Origin::Expansion, vec![]),
        format!("n{id}"),
    );
    let mut n = CandidateNode::pending(p, prior);
    match reward {
        Some(r) => n.mark_feasible(MetricVector::new(0.5, 0.5, 0.5, 1.0), r),
        None => n.mark_infeasible("synthetic"),
    }
    n
}

/// Random tree with up to `max_feasible` feasible nodes plus a few
/// infeasible ones, shaped by random parent picks.
fn random_tree(rng: &mut ChaCha8Rng, max_feasible: usize) -> SearchTree {
    let roots = rng.gen_range(1..=4usize.min(max_feasible));
    let mut tree = SearchTree::new((1..=roots as u64).map(|i| node(i, 0.5, Some(0.5))).collect()).unwrap();
    let target = rng.gen_range(roots..=max_feasible);
    let mut feasible: Vec<NodeId> = tree.archive.clone();
    while feasible.len() < target {
        let parent = feasible[rng.gen_range(0..feasible.len())];
        let id = tree.allocate_id();
        if rng.gen_bool(0.15) {
            tree.insert_child(parent, node(id.0, 0.5, None)).unwrap();
        } else {
            tree.insert_child(parent, node(id.0, 0.5, Some(0.5))).unwrap();
            feasible.push(id);
        }
    }
    tree
}

fn puct_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t0 = Instant::now();
    let mut ties = 0;
    for trial in 0..1000 {
        let mut tree = random_tree(&mut rng, 50);
        let coarse = trial % 2 == 0;
        let ids: Vec<NodeId> = tree.nodes.keys().copied().collect();
        for id in &ids {
            let n = tree.nodes.get_mut(id).unwrap();
            if n.is_feasible() {
                if coarse {
                    n.q_value = rng.gen_range(0..4) as f64 * 0.25;
                    n.visit_count = rng.gen_range(1..4);
                    n.prior = [0.25, 0.5][rng.gen_range(0..2)];
                } else {
                    n.q_value = rng.gen::<f64>() * 1.2;
                    n.visit_count = rng.gen_range(1..40);
                    n.prior = rng.gen::<f64>();
                }
            }
        }
        tree.super_root.visit_count = rng.gen_range(1..200);
        let c = rng.gen_range(0.5..=3.0);
        // Brute force: score every feasible node, keep the first maximum in
        // ascending id order.
        let mut best: Option<(NodeId, f64)> = None;
        let mut at_best = 0;
        for (id, n) in &tree.nodes {
            if !n.is_feasible() {
                continue;
            }
            let nu = match n.parent {
                Some(p) => tree.nodes[&p].visit_count,
                None => tree.super_root.visit_count,
            } as f64;
            let s = n.q_value + c * n.prior * nu.sqrt() / (1.0 + n.visit_count as f64);
            match best {
                Some((_, b)) if s < b => {}
                Some((_, b)) if s == b => at_best += 1,
                _ => {
                    best = Some((*id, s));
                    at_best = 1;
                }
            }
        }
        if at_best > 1 {
            ties += 1;
        }
        let got = select_node(&tree, c).map_err(|e| e.to_string())?;
        let want = best.unwrap();
        ensure(got.node_id == want.0 && got.total == want.1, || {
            format!(
                "trial {trial}: selected {} ({}) expected {} ({})",
                got.node_id, got.total, want.0, want.1
            )
        })?;
    }
    let took = t0.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!(
        "1000 trees exact, {ties} with tied maxima, {:.2}s",
        took.as_secs_f64()
    ))
}

fn backprop_ledger() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let r0 = rng.gen::<f64>();
        let mut tree = SearchTree::new(vec![node(1, 1.0, Some(r0))]).unwrap();
        let mut reward: BTreeMap<u64, f64> = BTreeMap::from([(1, r0)]);
        let mut parent_of: BTreeMap<u64, u64> = BTreeMap::new();
        let mut feasible = vec![1u64];
        for _ in 0..rng.gen_range(1..60) {
            let p = feasible[rng.gen_range(0..feasible.len())];
            let id = tree.allocate_id().0;
            if rng.gen_bool(0.2) {
                tree.insert_child(NodeId(p), node(id, 0.5, None)).unwrap();
                continue;
            }
            let r = rng.gen::<f64>() * 1.2;
            tree.insert_child(NodeId(p), node(id, 0.5, Some(r))).unwrap();
            backpropagate(&mut tree, NodeId(id), r);
            reward.insert(id, r);
            parent_of.insert(id, p);
            feasible.push(id);
        }
        tree.validate().map_err(|e| format!("trial {trial}: {e}"))?;
        for &a in &feasible {
            let mut n = 1u64;
            let mut sum = reward[&a];
            for &d in &feasible {
                let mut cur = parent_of.get(&d).copied();
                while let Some(x) = cur {
                    if x == a {
                        n += 1;
                        sum += reward[&d];
                        break;
                    }
                    cur = parent_of.get(&x).copied();
                }
            }
            let got = &tree.nodes[&NodeId(a)];
            ensure(got.visit_count == n, || {
                format!("trial {trial} node {a}: N {} != {n}", got.visit_count)
            })?;
            let err = (got.q_value * got.visit_count as f64 - sum).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("trial {trial} node {a}: Q*N off by {err:e}"))?;
        }
    }
    Ok(format!("1000 sequences, max |Q*N - sum| = {worst:.1e}"))
}

fn dominance_front(points: &[Vec<f64>]) -> Vec<bool> {
    points
        .iter()
        .map(|p| {
            !points
                .iter()
                .any(|q| q.iter().zip(p).all(|(a, b)| a >= b) && q.iter().zip(p).any(|(a, b)| a > b))
        })
        .collect()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<f64>> {
    let grid = rng.gen_bool(0.5);
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if grid {
                        rng.gen_range(0..4) as f64 / 3.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

fn pareto_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut members = 0;
    for trial in 0..500 {
        let n = rng.gen_range(1..=64);
        let pts = random_points(&mut rng, n, 4);
        let want = dominance_front(&pts);
        ensure(pareto_front(&pts) == want, || format!("archive {trial} differs"))?;
        members += want.iter().filter(|b| **b).count();
    }
    Ok(format!("500 archives exact, {members} front members"))
}

#[allow(clippy::needless_range_loop)]
fn crowding_reference(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![1.0; n];
    }
    let m = front[0].len();
    let mut dist = vec![0.0f64; n];
    for j in 0..m {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| front[a][j].partial_cmp(&front[b][j]).unwrap());
        dist[idx[0]] = f64::INFINITY;
        dist[idx[n - 1]] = f64::INFINITY;
        for k in 1..n - 1 {
            dist[idx[k]] += front[idx[k + 1]][j] - front[idx[k - 1]][j];
        }
    }
    dist.into_iter()
        .map(|d| {
            if d.is_infinite() {
                1.0
            } else {
                (d / (2 * m) as f64).min(1.0)
            }
        })
        .collect()
}

fn crowding_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst: f64 = 0.0;
    let mut dup_cases = 0;
    let mut tiny_cases = 0;
    for trial in 0..500 {
        let n = match trial % 10 {
            0 => rng.gen_range(0..=2),
            _ => rng.gen_range(3..=30),
        };
        let m = rng.gen_range(2..=4);
        let mut pts = random_points(&mut rng, n, m);
        if n >= 2 && trial % 5 == 1 {
            let k = rng.gen_range(0..n);
            pts.push(pts[k].clone());
        }
        if n <= 2 {
            tiny_cases += 1;
        }
        let uniq: HashSet<String> = pts.iter().map(|p| format!("{p:?}")).collect();
        if uniq.len() < pts.len() {
            dup_cases += 1;
        }
        let got = crowding_distance(&pts);
        let want = crowding_reference(&pts);
        ensure(got.len() == want.len(), || format!("front {trial}: length"))?;
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
            ensure((g - w).abs() <= 1e-9, || format!("front {trial}: {g} vs {w}"))?;
        }
    }
    Ok(format!(
        "500 fronts ({dup_cases} with duplicates, {tiny_cases} with <= 2 points), max err {worst:.1e}"
    ))
}

fn pearson_of_average_ranks(a: &[f64], b: &[f64]) -> Option<f64> {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| {
                let less = v.iter().filter(|y| *y < x).count() as f64;
                let eq = v.iter().filter(|y| *y == x).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va.sqrt() * vb.sqrt()))
    }
}

fn lp(y_hat: &[f64], y: &[f64]) -> LabeledPredictions {
    LabeledPredictions::new(y_hat.to_vec(), y.to_vec()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn metrics_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst: f64 = 0.0;
    let mut undefined = 0;
    for trial in 0..1000 {
        let n = rng.gen_range(2..=40);
        let levels = rng.gen_range(2..=8);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 1.5 - 3.0).collect();
        let got = metrics::spearman(&lp(&a, &b)).ok();
        let want = pearson_of_average_ranks(&a, &b);
        match (got, want) {
            (Some(g), Some(w)) => {
                worst = worst.max((g - w).abs());
                ensure(close(g, w), || format!("vector {trial}: {g} vs {w}"))?;
            }
            (None, None) => undefined += 1,
            other => return Err(format!("vector {trial}: definedness differs {other:?}")),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let y: Vec<f64> = (0..rng.gen_range(2..50))
            .map(|_| rng.gen::<f64>() * 10.0 - 2.0)
            .collect();
        let g = metrics::norm_gini(&lp(&y, &y), GiniVariant::Standard).map_err(|e| e.to_string())?;
        ensure(close(g, 1.0), || format!("norm_gini(y, y) = {g}"))?;
    }
    let lit = metrics::norm_gini(&lp(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), GiniVariant::RankSum).unwrap();
    ensure(close(lit, 16.0 / 6.0), || format!("rank-sum gini {lit}"))?;
    let inv = metrics::norm_gini(&lp(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]), GiniVariant::Standard).unwrap();
    ensure(close(inv, -1.0), || format!("inverted gini {inv}"))?;
    let er = metrics::error_rate(&lp(&[10.0, -5.0], &[8.0, -10.0])).unwrap();
    ensure(close(er, 7.0 / 18.0), || format!("er {er}"))?;
    ensure(metrics::error_rate(&lp(&[1.0, 2.0], &[0.0, 0.0])).is_err(), || {
        "zero-label er defined".into()
    })?;
    ensure(
        close(metrics::error_rate(&lp(&[3.0, -1.0], &[3.0, -1.0])).unwrap(), 0.0),
        || "identity er".into(),
    )?;
    let r1 = metrics::rmse(&lp(&[0.0, 0.0], &[3.0, -4.0]));
    ensure(close(r1, 12.5f64.sqrt()), || format!("rmse {r1}"))?;
    let r2 = metrics::rmse(&lp(&[0.0, 0.0, 0.0], &[0.0, 0.0, 30.0]));
    ensure(close(r2, 300f64.sqrt()), || format!("rmse {r2}"))?;
    let s = metrics::spearman(&lp(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0])).unwrap();
    ensure(close(s, -0.5), || format!("spearman {s}"))?;
    Ok(format!(
        "spearman max err {worst:.1e} over 1000 tied vectors ({undefined} constant), gini/er/rmse hand cases exact"
    ))
}

/// Replies with the same failing program to every prompt and counts calls.
struct AlwaysFails {
    counter: std::path::PathBuf,
}

impl AlwaysFails {
    fn code(&self) -> String {
        format!("echo run >> '{}'\necho 'boom' >&2\nexit 3\n", self.counter.display())
    }
}

impl CompletionBackend for AlwaysFails {
    fn complete(&self, _: &PromptBundle) -> AsResult<String> {
        Ok(format!("```sh\n{}```", self.code()))
    }
}

fn executor_checks() -> Outcome {
    let cfg = SearchConfig {
        exec_timeout_secs: 1.0,
        ..Default::default()
    };
    let ex = Executor::from_config(&cfg);
    let prog = |id: u64, src: &str| {
        ProgramSource::new(
            NodeId(id),
            src.to_string(),
            Lineage::new(Origin::RootInit, vec![]),
            "t".into(),
        )
    };
    let t0 = Instant::now();
    let r = ex.execute(&prog(1, "sleep 1000\n")).map_err(|e| e.to_string())?;
    let took = t0.elapsed().as_secs_f64();
    ensure(r.status == ExecStatus::Timeout, || {
        format!("sleeper status {:?}", r.status)
    })?;
    ensure(took <= 1.2, || format!("sleeper lived {took:.3}s"))?;

    let r = ex.execute(&prog(2, "echo hello\n")).map_err(|e| e.to_string())?;
    ensure(r.status == ExecStatus::UnparseableOutput, || {
        format!("silent exit status {:?}", r.status)
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let counter = dir.path().join("runs");
    let backend = Arc::new(AlwaysFails {
        counter: counter.clone(),
    });
    let generator = Generator::new(backend.clone(), AdviceLibrary::shipped(), &cfg);
    let out = ex
        .execute_with_repair(&prog(3, &backend.code()), &generator)
        .map_err(|e| e.to_string())?;
    let runs = std::fs::read_to_string(&counter)
        .map_err(|e| e.to_string())?
        .lines()
        .count();
    ensure(runs == 1 + cfg.repair_attempts as usize, || {
        format!("{runs} executions")
    })?;
    ensure(out.attempts_used == cfg.repair_attempts, || {
        format!("attempts_used {}", out.attempts_used)
    })?;
    ensure(out.result.status == ExecStatus::RuntimeError, || {
        format!("{:?}", out.result.status)
    })?;
    Ok(format!(
        "sleeper killed after {took:.3}s (limit 1.2s), {runs} executions = 1 + {} repairs, silent exit unparseable",
        cfg.repair_attempts
    ))
}

fn ea_properties() -> Outcome {
    let mut generations_run = 0;
    let mut migrations = 0;
    for seed in 0..10u64 {
        let cfg = SearchConfig {
            rng_seed: seed,
            mcts_budget: 20,
            ea_budget: 100_000,
            ..Default::default()
        };
        let g = Generator::from_config(&cfg).map_err(|e| e.to_string())?;
        let ex = Executor::from_config(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log = EventLog::default();
        let mut svc = Services {
            cfg: &cfg,
            generator: &g,
            executor: &ex,
            rng: &mut rng,
            log: &mut log,
        };
        let mut m = MctsState::init(&mut svc, &base_template()).map_err(|e| e.to_string())?;
        while !m.step(&mut svc).map_err(|e| e.to_string())? {}
        let c = m.result().map_err(|e| e.to_string())?.clone();
        let bounds = Bounds::from_archive(&m.tree.archive_metrics(), &cfg.objectives).unwrap();
        let mut st: EvolutionState =
            seed_islands(&c, bounds, m.tree.peek_next_id().0, &mut svc).map_err(|e| e.to_string())?;
        let mut best: Vec<f64> = st.islands.iter().map(|i| i.max_fitness().unwrap()).collect();
        while st.islands.iter().any(|i| i.generation < 30) {
            let before = st.generation;
            st.step(&mut svc).map_err(|e| e.to_string())?;
            for (k, island) in st.islands.iter().enumerate() {
                let now = island.max_fitness().unwrap();
                ensure(now >= best[k], || {
                    format!(
                        "seed {seed} island {k} gen {}: max fitness fell {} -> {now}",
                        island.generation, best[k]
                    )
                })?;
                best[k] = now;
            }
            if st.generation != before && st.generation.is_multiple_of(cfg.migration_period) {
                migrations += 1;
                for island in &st.islands {
                    let texts: HashSet<&str> = island
                        .population
                        .iter()
                        .map(|c| c.program.source_text.as_str())
                        .collect();
                    ensure(texts.len() == island.population.len(), || {
                        format!("seed {seed} island {}: duplicate sources after migration", island.id)
                    })?;
                }
            }
        }
        generations_run += st.islands.iter().map(|i| i.generation).min().unwrap();
    }
    // Offspring accounting at termination, through the full pipeline.
    for seed in 0..10u64 {
        let l = full_run(seed, Ablation::None).map_err(|e| e.to_string())?;
        let ea = l.evolution.as_ref().unwrap();
        ensure(ea.feasible_offspring_count == l.config.ea_budget, || {
            format!(
                "seed {seed}: {} feasible offspring for budget {}",
                ea.feasible_offspring_count, l.config.ea_budget
            )
        })?;
    }
    Ok(format!(
        "10 seeds x {} generations monotone, {migrations} migrations duplicate-free, offspring == budget",
        generations_run / 10
    ))
}

fn e2e_config(seed: u64) -> SearchConfig {
    SearchConfig {
        rng_seed: seed,
        mcts_budget: 60,
        ea_budget: 60,
        population_size: 8,
        num_islands: 4,
        ..Default::default()
    }
}

fn full_run(seed: u64, ablation: Ablation) -> AsResult<RunLedger> {
    let mut o = Orchestrator::new(e2e_config(seed), ablation)?;
    o.run()?;
    Ok(o.ledger)
}

fn quality(l: &RunLedger, id: NodeId) -> f64 {
    landscape_quality(&l.candidate(id).unwrap().metrics.unwrap())
}

fn end_to_end(runs: &mut Vec<RunLedger>) -> Outcome {
    let (_, opt) = landscape_optimum();
    let t0 = Instant::now();
    for seed in 0..10 {
        runs.push(full_run(seed, Ablation::None).map_err(|e| format!("seed {seed}: {e}"))?);
    }
    let took = t0.elapsed();
    let mut hits = 0;
    let mut not_worse = 0;
    let mut qs = Vec::new();
    for l in runs.iter() {
        let star = l.best().unwrap();
        let q = quality(l, star.id());
        qs.push(format!("{q:.3}"));
        if q >= 0.95 * opt {
            hits += 1;
        }
        let ea = l.evolution.as_ref().unwrap();
        let f_mcts = ea
            .ea_archive
            .iter()
            .find(|c| c.id() == ea.c_mcts)
            .unwrap()
            .reward
            .unwrap();
        if star.reward.unwrap() >= f_mcts {
            not_worse += 1;
        }
    }
    ensure(hits >= 8, || {
        format!("{hits}/10 within 5% of {opt:.4}: [{}]", qs.join(", "))
    })?;
    ensure(not_worse == 10, || {
        format!("c* below c_MCTS in {} seeds", 10 - not_worse)
    })?;
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!(
        "{hits}/10 within 5% of optimum {opt:.4} [{}], F(c*) >= F(c_MCTS) 10/10, {:.1}s",
        qs.join(", "),
        took.as_secs_f64()
    ))
}

fn determinism() -> Outcome {
    let a = encode_state(&full_run(3, Ablation::None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let b = encode_state(&full_run(3, Ablation::None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(a == b, || "two runs differ".into())?;

    // Save and reload at every iteration boundary of one run.
    let mut o = Orchestrator::new(e2e_config(3), Ablation::None).map_err(|e| e.to_string())?;
    let mut boundaries = 0;
    while o.phase() != Phase::Done {
        o.step().map_err(|e| e.to_string())?;
        let bytes = encode_state(&o.ledger).map_err(|e| e.to_string())?;
        o = Orchestrator::resume(decode_state(&bytes).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        boundaries += 1;
    }
    let chained = encode_state(&o.ledger).map_err(|e| e.to_string())?;
    ensure(chained == a, || "save/load at every boundary changed the ledger".into())?;

    // Single interruptions at spread-out boundaries.
    for cut in [1, boundaries / 3, boundaries / 2, boundaries - 1] {
        let mut o = Orchestrator::new(e2e_config(3), Ablation::None).map_err(|e| e.to_string())?;
        for _ in 0..cut {
            o.step().map_err(|e| e.to_string())?;
        }
        let saved = decode_state(&encode_state(&o.ledger).unwrap()).map_err(|e| e.to_string())?;
        drop(o);
        let mut r = Orchestrator::resume(saved).map_err(|e| e.to_string())?;
        r.run().map_err(|e| e.to_string())?;
        ensure(encode_state(&r.ledger).unwrap() == a, || {
            format!("resume after step {cut} diverged")
        })?;
    }
    Ok(format!(
        "two runs byte-identical ({} bytes), resume at all {boundaries} boundaries identical",
        a.len()
    ))
}

fn ablation_order(full: &[RunLedger]) -> Outcome {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let full_q: Vec<f64> = full.iter().map(|l| quality(l, l.c_star.unwrap())).collect();
    let mut no_ea = Vec::new();
    let mut random_root = Vec::new();
    let mut no_mcts = Vec::new();
    for seed in 0..10 {
        for (ab, out) in [
            (Ablation::NoEa, &mut no_ea),
            (Ablation::RandomRoot, &mut random_root),
            (Ablation::NoMcts, &mut no_mcts),
        ] {
            let l = full_run(seed, ab).map_err(|e| format!("{ab:?} seed {seed}: {e}"))?;
            out.push(quality(&l, l.c_star.unwrap()));
        }
    }
    let (f, e, r, m) = (mean(&full_q), mean(&no_ea), mean(&random_root), mean(&no_mcts));
    ensure(f >= e && e >= r, || {
        format!("full {f:.4}, no-ea {e:.4}, random-root {r:.4}")
    })?;
    Ok(format!(
        "full {f:.4} >= no-ea {e:.4} >= random-root {r:.4} (no-mcts {m:.4})"
    ))
}

fn main() -> ExitCode {
    let mut full_runs = Vec::new();
    let checks: Vec<Check> = vec![
        ("puct selection matches brute-force argmax", Box::new(puct_oracle)),
        ("backpropagation visit and value ledger", Box::new(backprop_ledger)),
        ("pareto front matches dominance oracle", Box::new(pareto_oracle)),
        ("crowding distance matches reference", Box::new(crowding_oracle)),
        ("metrics match oracles and hand cases", Box::new(metrics_checks)),
        ("executor timeout, repair count, silent exit", Box::new(executor_checks)),
        (
            "evolution monotone, duplicate-free, exact budget",
            Box::new(ea_properties),
        ),
        (
            "end-to-end mock search reaches the optimum",
            Box::new(|| end_to_end(&mut full_runs)),
        ),
        ("determinism and resume", Box::new(determinism)),
    ];
    let mut failed = 0;
    let mut report = |name: &str, res: std::thread::Result<Outcome>| {
        let line = match res {
            Ok(Ok(detail)) => format!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                format!("FAIL  {name}: {why}")
            }
            Err(_) => {
                failed += 1;
                format!("FAIL  {name}: panicked")
            }
        };
        println!("{line}");
    };
    for (name, check) in checks {
        report(name, catch_unwind(AssertUnwindSafe(check)));
    }
    let runs = std::mem::take(&mut full_runs);
    report(
        "ablation ordering full >= no-ea >= random-root",
        catch_unwind(AssertUnwindSafe(|| {
            if runs.len() < 10 {
                return Err("end-to-end runs unavailable".to_string());
            }
            ablation_order(&runs)
        })),
    );
    println!("{} of 10 acceptance checks passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
