use saswise::model::*;
use saswise::numerics::{Rng, Tensor};
use saswise::pruning::*;
use saswise::training::{Dataset, Sample, Split};
use saswise::{Error, Exec};

fn jittered_stack(counts: &[usize], rng: &mut Rng) -> StackedModel {
    let p = counts.len();
    let mut blocks: Vec<BlockSpec> = (0..p - 1).map(|_| BlockSpec::dense(3, 3)).collect();
    blocks.push(BlockSpec::dense(3, 2).with_activation(Activation::Identity));
    let arch = Architecture::new(vec![3], blocks).unwrap();
    let mut m = StackedModel::build_template(arch, rng).unwrap().clone_and_stack(counts).unwrap();
    for (j, &a) in counts.iter().enumerate() {
        for k in 0..a {
            for v in m.candidate_mut(j, k).tensors_mut().flat_map(|t| t.data_mut().iter_mut()) {
                *v += rng.uniform_range(-0.3, 0.3);
            }
        }
    }
    m
}

fn val_set(rng: &mut Rng, n: usize) -> Dataset {
    let samples = (0..n)
        .map(|_| Sample {
            x: Tensor::from_fn(&[3], |_| rng.uniform_range(-1.0, 1.0)),
            y: Tensor::from_fn(&[2], |_| rng.uniform_range(-1.0, 1.0)),
        })
        .collect();
    Dataset::new(samples, Split::Val).unwrap()
}

/// Brute-force per-block means from the flat table, then rank and cut.
fn oracle_select(
    records: &[(usize, usize, f64)],
    pool: &PathPool,
    counts: &[usize],
    keep: &[usize],
    higher: bool,
) -> Vec<Vec<usize>> {
    counts
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let mut ranked: Vec<(usize, f64)> = (0..a)
                .map(|k| {
                    let s: Vec<f64> =
                        records.iter().filter(|(_, p, _)| pool.paths()[*p].indices()[j] == k).map(|r| r.2).collect();
                    (k, s.iter().sum::<f64>() / s.len() as f64)
                })
                .collect();
            ranked.sort_by(|a, b| {
                let o = if higher { b.1.total_cmp(&a.1) } else { a.1.total_cmp(&b.1) };
                o.then(a.0.cmp(&b.0))
            });
            ranked.iter().take(keep[j]).map(|r| r.0).collect()
        })
        .collect()
}

#[test]
fn select_top_matches_exhaustive_oracle_on_2_3_2() {
    let counts = [2, 3, 2];
    for seed in 0..10 {
        let mut rng = Rng::new(seed);
        let m = jittered_stack(&counts, &mut rng);
        let val = val_set(&mut rng, 5);
        let pool = enumerate_paths(&m).unwrap();
        assert_eq!(pool.len(), 12);
        for kind in [MetricKind::Mae, MetricKind::Custom { higher_is_better: true }] {
            let mp = score_paths(&m, &val, &pool, kind, mae_metric, Exec::default()).unwrap();
            assert_eq!(mp.total_scores(), val.len() * pool.len() * counts.len());
            for keep in [[1, 1, 1], [2, 2, 1], [1, 3, 2], [2, 1, 2]] {
                let got = select_top(&mp, &keep).unwrap();
                let want = oracle_select(&mp.records, &pool, &counts, &keep, kind.higher_is_better());
                assert_eq!(got, want, "seed {seed} keep {keep:?}");
            }
        }
    }
}

#[test]
fn rebuilt_paths_equal_parent_paths_under_remapping() {
    let counts = [2, 3, 2];
    let mut rng = Rng::new(42);
    let m = jittered_stack(&counts, &mut rng);
    let kept = vec![vec![1], vec![2, 0], vec![0, 1]];
    let (pm, pool) = rebuild_pruned(&m, &kept).unwrap();
    assert_eq!(pm.counts(), vec![1, 2, 2]);
    assert_eq!(pool.len(), 4);
    for (j, ks) in kept.iter().enumerate() {
        for (new_k, &old_k) in ks.iter().enumerate() {
            assert_eq!(pm.candidate(j, new_k), m.candidate(j, old_k));
        }
    }
    let x = Tensor::from_fn(&[3], |_| rng.uniform_range(-1.0, 1.0));
    for p in pool.iter() {
        let parent = Path::new(p.indices().iter().enumerate().map(|(j, &k)| kept[j][k]).collect());
        assert_eq!(predict(&pm, &x, p).unwrap(), predict(&m, &x, &parent).unwrap());
    }
    // original untouched
    assert_eq!(m.counts(), counts.to_vec());
}

#[test]
fn counting_oracle_on_2_2() {
    let mut rng = Rng::new(1);
    let m = jittered_stack(&[2, 2], &mut rng);
    let val = val_set(&mut rng, 2);
    let pool = enumerate_paths(&m).unwrap();
    let mp = score_paths_builtin(&m, &val, &pool, MetricKind::Mae, Exec::default()).unwrap();
    for pos in &mp.scores {
        for s in pos {
            assert_eq!(s.len(), 4);
        }
    }
    assert_eq!(mp.path_counts(), vec![vec![2, 2], vec![2, 2]]);
    let flat: Vec<(usize, usize)> = mp.records.iter().map(|r| (r.0, r.1)).collect();
    let mut sorted = flat.clone();
    sorted.sort_unstable();
    assert_eq!(flat, sorted, "records merged in (sample, path) order");
}

#[test]
fn single_sample_single_path() {
    let mut rng = Rng::new(2);
    let m = jittered_stack(&[2, 2, 2], &mut rng);
    let val = val_set(&mut rng, 1);
    let p = Path::new(vec![1, 0, 1]);
    let pool = PathPool::new(vec![p.clone()], &m.counts()).unwrap();
    let mp = score_paths_builtin(&m, &val, &pool, MetricKind::Mae, Exec::default()).unwrap();
    for (j, &k) in p.indices().iter().enumerate() {
        assert_eq!(mp.scores[j][k].len(), 1);
        assert!(mp.scores[j][1 - k].is_empty());
    }
    assert!(matches!(select_top(&mp, &[1, 1, 1]), Err(Error::Coverage { .. })));
}

#[test]
fn cloned_stack_scores_identically() {
    let mut rng = Rng::new(3);
    let arch = Architecture::dense_chain(&[3, 4, 2]).unwrap();
    let m = StackedModel::build_template(arch, &mut rng).unwrap().clone_and_stack(&[3, 2]).unwrap();
    let val = val_set(&mut rng, 3);
    let pool = enumerate_paths(&m).unwrap();
    let mp = score_paths_builtin(&m, &val, &pool, MetricKind::Mae, Exec::default()).unwrap();
    for pos in &mp.scores {
        assert!(pos.iter().all(|s| s == &pos[0]));
    }
    // equal means: tie rule keeps the lowest index
    assert_eq!(select_top(&mp, &[1, 1]).unwrap(), vec![vec![0], vec![0]]);
    assert_eq!(select_top(&mp, &[3, 2]).unwrap(), vec![vec![0, 1, 2], vec![0, 1]]);
}

#[test]
fn nan_metric_is_reported_with_context() {
    let mut rng = Rng::new(4);
    let m = jittered_stack(&[2, 2], &mut rng);
    let val = val_set(&mut rng, 2);
    let pool = enumerate_paths(&m).unwrap();
    let r = score_paths(&m, &val, &pool, MetricKind::Mae, |_, _| Ok(f64::NAN), Exec::Sequential);
    assert!(matches!(r, Err(Error::MetricFailure { sample: 0, path: 0, .. })));
}

#[test]
fn sequential_and_parallel_scoring_agree() {
    let mut rng = Rng::new(5);
    let m = jittered_stack(&[2, 3, 2], &mut rng);
    let val = val_set(&mut rng, 4);
    let pool = enumerate_paths(&m).unwrap();
    let a = score_paths_builtin(&m, &val, &pool, MetricKind::Mae, Exec::Sequential).unwrap();
    let b = score_paths_builtin(&m, &val, &pool, MetricKind::Mae, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn keep_all_is_value_preserving() {
    let mut rng = Rng::new(6);
    let m = jittered_stack(&[2, 3, 2], &mut rng);
    let val = val_set(&mut rng, 3);
    let pool = enumerate_paths(&m).unwrap();
    let (pm, ppool, report) = prune(&m, &val, &pool, MetricKind::Mae, &[2, 3, 2], Exec::default()).unwrap();
    assert_eq!(report.paths_before, 12);
    assert_eq!(report.paths_after, 12);
    assert_eq!(ppool.len(), 12);
    for (j, ks) in report.kept.iter().enumerate() {
        let mut sorted = ks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..m.counts()[j]).collect::<Vec<_>>());
        for (nk, &ok) in ks.iter().enumerate() {
            assert_eq!(pm.candidate(j, nk), m.candidate(j, ok));
        }
    }
}

#[test]
fn four_to_two_shrinks_pool() {
    let mut rng = Rng::new(7);
    let arch = Architecture::unet7(16, 1, 2, 1).unwrap();
    let m = StackedModel::build_template(arch, &mut rng).unwrap().clone_and_stack(&[4; 7]).unwrap();
    assert_eq!(m.path_count(), 16384);
    let kept = vec![vec![3, 1]; 7];
    let (pm, pool) = rebuild_pruned(&m, &kept).unwrap();
    assert_eq!(pool.len(), 128);
    assert_eq!(pm.path_count(), 128);
    let one = rebuild_pruned(&m, &vec![vec![2]; 7]).unwrap();
    assert_eq!(one.1.len(), 1);
    assert!(rebuild_pruned(&m, &[vec![0], vec![]]).is_err());
}

#[test]
fn sort_oracle_example() {
    // Direct check on hand-built means.
    let pool = PathPool::new((0..4).map(|k| Path::new(vec![k])).collect(), &[4]).unwrap();
    let mp = MetricPool {
        scores: vec![vec![vec![0.9], vec![0.7], vec![0.8], vec![0.95]]],
        metric_kind: MetricKind::Dice,
        higher_is_better: true,
        records: vec![],
        pool,
    };
    assert_eq!(select_top(&mp, &[2]).unwrap(), vec![vec![3, 0]]);
    assert_eq!(select_top(&mp, &[4]).unwrap(), vec![vec![3, 0, 2, 1]]);
    assert!(select_top(&mp, &[0]).is_err());
    assert!(select_top(&mp, &[5]).is_err());
}
