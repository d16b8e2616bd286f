use rand::Rng;
use rayon::prelude::*;

use super::infer::{Engine, Patterns};
use super::{Category, ConditionalTable, LatentTreeModel, Variable, PROB_FLOOR};
use crate::data::BinaryMatrix;
use crate::stream_rng;

const CHUNK: usize = 256;

#[inline]
pub(crate) fn squash(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Expected counts: roots use `[n(1), n, -, -]`, edges
/// `[n(pa=0), n(pa=0, x=1), n(pa=1), n(pa=1, x=1)]`.
fn expected_counts(model: &LatentTreeModel, patterns: &Patterns) -> (Vec<[f64; 4]>, f64) {
    let n = model.n_vars();
    let partial: Vec<(Vec<[f64; 4]>, f64)> = patterns
        .rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut engine = Engine::new(model);
            let mut stats = vec![[0.0; 4]; n];
            let mut ll = 0.0;
            for (ones, w) in chunk {
                engine.set_ones(ones);
                ll += w * engine.upward();
                engine.downward();
                for v in 0..n {
                    match model.parent(v) {
                        None => {
                            let p = engine.posterior(v);
                            stats[v][0] += w * p[1];
                            stats[v][1] += w;
                        }
                        Some(_) => {
                            let j = engine.edge_joint(v);
                            stats[v][0] += w * (j[0][0] + j[0][1]);
                            stats[v][1] += w * j[0][1];
                            stats[v][2] += w * (j[1][0] + j[1][1]);
                            stats[v][3] += w * j[1][1];
                        }
                    }
                }
            }
            (stats, ll)
        })
        .collect();
    // fixed-order reduction keeps results independent of the worker count
    let mut total = vec![[0.0; 4]; n];
    let mut ll = 0.0;
    for (stats, l) in partial {
        for (t, s) in total.iter_mut().zip(&stats) {
            for k in 0..4 {
                t[k] += s[k];
            }
        }
        ll += l;
    }
    (total, ll)
}

fn maximize(model: &mut LatentTreeModel, stats: &[[f64; 4]], update: Option<&[bool]>) {
    for (v, s) in stats.iter().enumerate() {
        if update.is_some_and(|u| !u[v]) {
            continue;
        }
        let new = match *model.table(v) {
            ConditionalTable::Root { p1 } => ConditionalTable::Root {
                p1: if s[1] > 0.0 { squash(s[0] / s[1]) } else { p1 },
            },
            ConditionalTable::Edge { p1 } => ConditionalTable::Edge {
                p1: [
                    if s[0] > 0.0 {
                        squash(s[1] / s[0])
                    } else {
                        p1[0]
                    },
                    if s[2] > 0.0 {
                        squash(s[3] / s[2])
                    } else {
                        p1[1]
                    },
                ],
            },
        };
        model.set_table(v, new);
    }
}

/// Runs `steps` EM iterations, updating only variables whose `update` flag is
/// set (all when `None`). Returns the model and the log-likelihood before
/// each step.
pub(crate) fn run_em(
    mut model: LatentTreeModel,
    patterns: &Patterns,
    steps: usize,
    update: Option<&[bool]>,
) -> (LatentTreeModel, Vec<f64>) {
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (stats, ll) = expected_counts(&model, patterns);
        trace.push(ll);
        maximize(&mut model, &stats, update);
    }
    (model, trace)
}

/// `steps` expectation–maximisation iterations over the model's own
/// variables. The M-step is the maximum-likelihood table clipped to
/// `[PROB_FLOOR, 1 - PROB_FLOOR]`, which never lowers the likelihood.
pub fn em_steps(model: &LatentTreeModel, data: &BinaryMatrix, steps: usize) -> LatentTreeModel {
    if steps == 0 {
        return model.clone();
    }
    let patterns = Patterns::from_matrix(model, data);
    run_em(model.clone(), &patterns, steps, None).0
}

/// Like [`em_steps`] but also returns the log-likelihood before every step
/// and after the last one (`steps + 1` values).
pub fn em_trace(
    model: &LatentTreeModel,
    data: &BinaryMatrix,
    steps: usize,
) -> (LatentTreeModel, Vec<f64>) {
    let patterns = Patterns::from_matrix(model, data);
    let (m, mut trace) = run_em(model.clone(), &patterns, steps, None);
    trace.push(super::infer::patterns_log_likelihood(&m, &patterns));
    (m, trace)
}

fn init_lcm(data: &BinaryMatrix, items: &[usize], seed: u64, restart: u64) -> LatentTreeModel {
    let mut rng = stream_rng(seed, "lcm-init", &[restart]);
    let mut cols = items.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let mut vars = vec![Variable::latent(1)];
    let mut parent = vec![None];
    let mut tables = vec![ConditionalTable::Root { p1: 0.5 }];
    for &c in &cols {
        vars.push(Variable::observed(c, 0));
        parent.push(Some(0));
        tables.push(ConditionalTable::Edge {
            p1: [rng.random_range(0.2..=0.8), rng.random_range(0.2..=0.8)],
        });
    }
    let mut active = std::collections::HashSet::new();
    for &c in &cols {
        active.extend(data.col(c).iter().copied());
    }
    let frac = if data.n_users() == 0 {
        0.5
    } else {
        active.len() as f64 / data.n_users() as f64
    };
    tables[0] = ConditionalTable::Root { p1: squash(frac) };
    LatentTreeModel::new(vars, parent, tables).expect("well-formed latent class model")
}

/// Latent class model: one binary latent over the given item columns,
/// random start, `steps` EM iterations, then canonical orientation.
pub fn learn_lcm(data: &BinaryMatrix, items: &[usize], steps: usize, seed: u64) -> Category {
    learn_lcm_restarts(data, items, steps, seed, 1)
}

/// Best of `restarts` independent starts by final log-likelihood.
pub fn learn_lcm_restarts(
    data: &BinaryMatrix,
    items: &[usize],
    steps: usize,
    seed: u64,
    restarts: usize,
) -> Category {
    assert!(
        !items.is_empty(),
        "a latent class model needs at least one item"
    );
    let mut best: Option<(f64, LatentTreeModel)> = None;
    for r in 0..restarts.max(1) {
        let init = init_lcm(data, items, seed, r as u64);
        let patterns = Patterns::from_matrix(&init, data);
        let (m, _) = run_em(init, &patterns, steps, None);
        let ll = super::infer::patterns_log_likelihood(&m, &patterns);
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, m));
        }
    }
    let mut model = best.unwrap().1;
    model.canonicalize();
    Category::new(model).expect("latent class model is a category")
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_model;
    use super::super::{log_likelihood, VarKind};
    use super::*;
    use crate::synth;

    #[test]
    fn zero_steps_is_identity() {
        let mut rng = stream_rng(1, "t", &[]);
        let m = random_model(&mut rng, 5, 0.4);
        let data = BinaryMatrix::from_dense(&vec![vec![1, 0, 1, 0, 1]; 3]);
        assert_eq!(em_steps(&m, &data, 0), m);
    }

    #[test]
    fn monotone_on_random_instances() {
        for case in 0..25u64 {
            let mut rng = stream_rng(case, "em-mono", &[]);
            let n = rng.random_range(2..=8);
            let truth = random_model(&mut rng, n, 0.4);
            let n_obs = truth.observed().len().max(1);
            let users = rng.random_range(20..=200);
            let data = synth::sample_model(&truth, users, n_obs, case);
            let start = random_model(&mut stream_rng(case, "em-start", &[]), n, 0.0);
            // same structure as truth, fresh parameters
            let start = LatentTreeModel::new(
                truth.variables().to_vec(),
                (0..n).map(|v| truth.parent(v)).collect(),
                start
                    .tables()
                    .iter()
                    .zip(truth.tables())
                    .map(|(s, t)| match (s, t) {
                        (_, ConditionalTable::Root { .. }) => {
                            ConditionalTable::Root { p1: s.prob(1, 0) }
                        }
                        (_, ConditionalTable::Edge { .. }) => ConditionalTable::Edge {
                            p1: [s.prob(1, 0), s.prob(1, 1)],
                        },
                    })
                    .collect(),
            )
            .unwrap();
            let (_, trace) = em_trace(&start, &data, 15);
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "case {case}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn single_always_consumed_item_stays_inside_unit_interval() {
        let data = BinaryMatrix::from_dense(&vec![vec![1]; 20]);
        let c = learn_lcm(&data, &[0], 20, 3);
        let t = c.child_table(0).unwrap();
        assert!(t[1] > 0.99 && t[1] < 1.0);
        assert!(log_likelihood(c.model(), &data) < 0.0);
    }

    #[test]
    fn perfectly_correlated_pair_separates_users() {
        let mut rows = vec![vec![1u8, 1]; 50];
        rows.extend(vec![vec![0u8, 0]; 50]);
        let data = BinaryMatrix::from_dense(&rows);
        for seed in 0..5 {
            let c = learn_lcm(&data, &[0, 1], 30, seed);
            assert!(c.child_table(0).unwrap()[1] >= 0.9, "seed {seed}");
            assert!(c.child_table(1).unwrap()[1] >= 0.9, "seed {seed}");
            assert!(matches!(
                c.model().variable(1).kind,
                VarKind::Observed { column: 0 }
            ));
        }
    }

    #[test]
    fn recovers_planted_latent_class_model() {
        let truth = [0.8, 0.7, 0.9, 0.6, 0.75];
        let false_pos = [0.1, 0.05, 0.15, 0.1, 0.2];
        let planted = Category::from_parts(
            1,
            0.4,
            &truth
                .iter()
                .zip(&false_pos)
                .enumerate()
                .map(|(c, (&t, &f))| (c, [f, t]))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let data = synth::sample_model(planted.model(), 2000, 5, 99);
        let fit = learn_lcm(&data, &[0, 1, 2, 3, 4], 50, 5);
        for c in 0..5 {
            let t = fit.child_table(c).unwrap();
            assert!((t[1] - truth[c]).abs() < 0.05, "item {c}: {t:?}");
            assert!((t[0] - false_pos[c]).abs() < 0.05, "item {c}: {t:?}");
        }
    }
}
