use std::collections::HashMap;

use motiongen::eval::*;
use motiongen::graph::{embed_kinematic, Embedding};
use motiongen::motion::*;
use motiongen::rng;
use motiongen::rvq::{train_tokenizer, TokenizerConfig};
use motiongen::seq::*;
use proptest::prelude::*;
use rand::Rng as _;

/// All joints at `height(t)`, the whole body translating along x at
/// `speed(t)` m/s.
fn rigid(n: usize, fps: u32, height: impl Fn(usize) -> f64, speed: impl Fn(usize) -> f64) -> Motion {
    let mut x = 0.0;
    let frames = (0..n)
        .map(|t| {
            if t > 0 {
                x += speed(t) / fps as f64;
            }
            let mut f = [0.0; FRAME_DIM];
            for j in 0..NUM_JOINTS {
                f[3 * j] = x;
                f[3 * j + 1] = height(t);
            }
            f
        })
        .collect();
    Motion::new(0, fps, ActionList::empty(), frames).unwrap()
}

#[test]
fn contact_score_examples() {
    let m = rigid(20, 20, |_| 0.03, |_| 0.05);
    for mode in [ContactMode::PerJoint, ContactMode::MinOverFeet] {
        assert_eq!(contact_score(&m, 0.05, 0.075, mode).unwrap(), 1.0);
    }
    let m = rigid(20, 20, |_| 0.15, |_| 0.0);
    let s = contact_score(&m, 0.05, 0.075, ContactMode::PerJoint).unwrap();
    assert!((s - (-0.10f64).exp()).abs() < 1e-12);
    assert!((s - 0.9048).abs() < 1e-4);
    assert_eq!(contact_term(0.05, 0.075, 0.05, 0.075), 1.0);
    assert_eq!(contact_term(-0.05, 0.0, 0.05, 0.075), 1.0);
    let one = Motion::new(0, 20, ActionList::empty(), vec![[0.0; FRAME_DIM]; 1])
        .and_then(|m| contact_score(&m, 0.05, 0.075, ContactMode::PerJoint));
    assert!(matches!(one, Err(motiongen::Error::TooShort { .. })));
}

#[test]
fn min_mode_uses_lowest_foot() {
    // one planted toe, everything else raised and moving
    let frames: Vec<[f64; FRAME_DIM]> = (0..10)
        .map(|t| {
            let mut f = [0.0; FRAME_DIM];
            for j in 0..NUM_JOINTS {
                f[3 * j] = 0.1 * t as f64;
                f[3 * j + 1] = 0.4;
            }
            let b = Joint::FEET[1].index() * 3;
            f[b] = 0.0;
            f[b + 1] = 0.0;
            f
        })
        .collect();
    let m = Motion::new(0, 20, ActionList::empty(), frames).unwrap();
    assert_eq!(contact_score(&m, 0.05, 0.075, ContactMode::MinOverFeet).unwrap(), 1.0);
    let per = contact_score(&m, 0.05, 0.075, ContactMode::PerJoint).unwrap();
    let moving = contact_term(0.4, 2.0, 0.05, 0.075);
    assert!((per - (1.0 + 3.0 * moving) / 4.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn contact_score_bounds_and_monotonicity(h in 0.0f64..0.5, v in 0.0f64..2.0, dh in 0.0f64..0.3, dv in 0.0f64..1.0) {
        let a = contact_term(h, v, 0.05, 0.075);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(contact_term(h + dh, v, 0.05, 0.075) <= a);
        prop_assert!(contact_term(h, v + dv, 0.05, 0.075) <= a);
        prop_assert_eq!(a == 1.0, h <= 0.05 && v <= 0.075);
    }
}

fn unit(v: Vec<f64>) -> Embedding {
    Embedding::from_raw(v)
}

fn axis(i: usize, d: usize) -> Embedding {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    unit(v)
}

#[test]
fn echo_scores_perfectly_against_orthogonal_distractors() {
    let pool: Vec<PoolEntry> = (0..40).map(|i| (i as u64, axis(i, 40))).collect();
    let targets: Vec<PoolEntry> = pool[..5].to_vec();
    let gen: Vec<Embedding> = targets.iter().map(|t| t.1.clone()).collect();
    let m = retrieval_metrics(&gen, &targets, &pool, 32, 20, 1).unwrap();
    assert_eq!(m.r1.mean, 100.0);
    assert_eq!(m.avg_rank.mean, 1.0);
}

#[test]
fn orthogonal_query_has_uniform_rank() {
    let pool: Vec<PoolEntry> = (0..64).map(|i| (i as u64, axis(i, 65))).collect();
    let q = axis(64, 65);
    let m = retrieval_metrics(&[q], &[pool[0].clone()], &pool, 32, 1000, 7).unwrap();
    let ranks: Vec<f64> = m.ranks.iter().map(|r| r[0] as f64).collect();
    let mean = ranks.iter().sum::<f64>() / 1000.0;
    // uniform on 1..=32: variance (32^2 - 1) / 12
    let sd = ((32.0f64 * 32.0 - 1.0) / 12.0 / 1000.0).sqrt();
    assert!((mean - 16.5).abs() <= 3.0 * sd, "mean rank {mean}");
}

#[test]
fn ranks_match_exhaustive_sort() {
    let mut r = rng::seeded(3);
    let gallery: Vec<Embedding> = (0..10).map(|_| unit((0..4).map(|_| r.random_range(-1.0..1.0)).collect())).collect();
    let refs: Vec<&Embedding> = gallery.iter().collect();
    for case in 0..10 {
        let q = unit((0..4).map(|_| r.random_range(-1.0..1.0)).collect());
        let target = case % 10;
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| q.cosine(&gallery[b]).partial_cmp(&q.cosine(&gallery[a])).unwrap().then(a.cmp(&b)));
        let want = order.iter().position(|&i| i == target).unwrap() + 1;
        assert_eq!(rank_in_gallery(&q, &refs, target), want);
    }
    // exact ties go to the lower index
    let same = [axis(0, 2), axis(0, 2), axis(0, 2)];
    let refs: Vec<&Embedding> = same.iter().collect();
    assert_eq!(rank_in_gallery(&axis(0, 2), &refs, 2), 3);
}

#[test]
fn small_pool_is_rejected() {
    let pool: Vec<PoolEntry> = (0..10).map(|i| (i as u64, axis(i, 10))).collect();
    let r = retrieval_metrics(&[axis(0, 10)], &[pool[0].clone()], &pool, 32, 1, 0);
    assert!(matches!(r, Err(motiongen::Error::InsufficientGallery { available: 9, needed: 31 })));
}

#[test]
fn categorize_templates() {
    assert_eq!(categorize_case("use the style of").unwrap(), BenchTask::Style);
    assert_eq!(categorize_case("follow the trajectory of").unwrap(), BenchTask::Trajectory);
    assert_eq!(categorize_case("match the speed of").unwrap(), BenchTask::Speed);
    assert!(matches!(
        categorize_case("copy the motion"),
        Err(motiongen::Error::AmbiguousCase(_))
    ));
    assert!(matches!(
        categorize_case("match the speed and style of"),
        Err(motiongen::Error::AmbiguousCase(_))
    ));
}

fn corpus() -> Vec<Motion> {
    generate_corpus(&CorpusConfig::default(), 42).unwrap()
}

#[test]
fn bench_cases_are_consistent() {
    let c = corpus();
    let cases = build_cases(&c, 1).unwrap();
    let by_id: HashMap<u64, &Motion> = c.iter().map(|m| (m.id, m)).collect();
    for task in BenchTask::ALL {
        assert!(cases.iter().filter(|k| k.task == task).count() >= 10, "too few {task} cases");
    }
    for k in &cases {
        assert_eq!(categorize_case(&k.text).unwrap(), k.task);
        let (s, r, t) = (
            &by_id[&k.source].attrs.0[0],
            &by_id[&k.reference].attrs.0[0],
            &by_id[&k.target].attrs.0[0],
        );
        assert_eq!(s.field_distance(t), 1);
        match k.task {
            BenchTask::Style => assert!(r.style == t.style && s.style != t.style),
            BenchTask::Trajectory => assert!(r.trajectory == t.trajectory && s.trajectory != t.trajectory),
            BenchTask::Speed => assert!(r.duration_class == t.duration_class && s.duration_class != t.duration_class),
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cases.jsonl");
    write_cases(&p, &cases).unwrap();
    assert_eq!(read_cases(&p).unwrap(), cases);
    assert_eq!(build_cases(&c, 1).unwrap(), cases);
}

#[test]
fn echo_and_constant_oracles() {
    let c = corpus();
    let cases = build_cases(&c, 2).unwrap();
    let map: HashMap<u64, Motion> = c.iter().map(|m| (m.id, m.clone())).collect();
    let cfg = EvalConfig {
        repetitions: 5,
        ..Default::default()
    };
    let rep = run_anycontext(&EchoOracle { corpus: &map }, &c, &cases, &cfg, 3).unwrap();
    assert_eq!(rep.rows.len(), 3);
    for row in &rep.rows {
        assert_eq!(row.r1.mean, 100.0);
        assert_eq!(row.avg_rank.mean, 1.0);
        assert_eq!(row.failures, 0);
    }
    let constant = c[5].clone();
    let want = contact_score(&constant, 0.05, 0.075, ContactMode::PerJoint).unwrap();
    let rep = run_anycontext(&ConstantOracle(constant), &c, &cases, &cfg, 3).unwrap();
    for row in &rep.rows {
        assert!((row.physical - want).abs() < 1e-12);
        assert!(row.r1.mean <= row.r3.mean && row.r3.mean <= 100.0);
        assert!(row.avg_rank.mean >= 1.0 && row.avg_rank.mean <= 32.0);
    }
    assert!(rep.to_text().contains("trajectory"));
}

#[test]
fn report_invariants_hold_on_random_oracles() {
    struct Random<'a>(&'a [Motion]);
    impl Generator for Random<'_> {
        fn generate(&self, _c: &BenchCase, seed: u64) -> motiongen::Result<Generated> {
            let mut r = rng::seeded(seed);
            Ok(Generated {
                motion: self.0[r.random_range(0..self.0.len())].clone(),
                rounds: 1,
            })
        }
    }
    let c = corpus();
    let cases = build_cases(&c, 4).unwrap();
    let cfg = EvalConfig {
        repetitions: 3,
        ..Default::default()
    };
    for seed in 0..20 {
        let rep = run_anycontext(&Random(&c), &c, &cases, &cfg, seed).unwrap();
        for row in &rep.rows {
            assert!(row.r1.mean <= row.r3.mean && row.r3.mean <= 100.0);
            assert!(row.avg_rank.mean >= 1.0 && row.avg_rank.mean <= 32.0);
            assert!(row.physical > 0.0 && row.physical <= 1.0);
        }
    }
}

struct Toy {
    corpus: Vec<Motion>,
    tk: motiongen::rvq::TokenizerModel,
    tv: TextVocab,
    pm: PolicyModel,
}

fn toy() -> Toy {
    let corpus = generate_corpus(
        &CorpusConfig {
            count: 12,
            ..Default::default()
        },
        5,
    )
    .unwrap();
    let tcfg = TokenizerConfig {
        levels: 2,
        codebook_size: 8,
        latent_dim: 8,
        steps: 30,
        ..Default::default()
    };
    let (tk, _) = train_tokenizer(&corpus, &tcfg, 1).unwrap();
    let tv = TextVocab::build(std::iter::empty());
    let v = Vocab::new(tv.len(), 2, 8).unwrap();
    let pcfg = PolicyConfig {
        d_model: 16,
        heads: 2,
        layers: 1,
        ffn: 32,
        context: 256,
        init_std: 0.02,
    };
    let mut pm = PolicyModel::new(pcfg, v, 2).unwrap();
    // favour closing spans so random generations stay short
    let (_, off, _) = pm.tensors().into_iter().find(|t| t.0 == "b_out").unwrap();
    pm.params[off + v.motion_close() as usize] = 2.0;
    Toy { corpus, tk, tv, pm }
}

#[test]
fn reflection_without_rounds_is_plain_sampling() {
    let t = toy();
    let v = t.pm.vocab;
    let prompt = t.tv.encode("use the style of");
    let target = embed_kinematic(&t.corpus[0]);
    let cfg = ReflectConfig {
        max_rounds: 0,
        max_new: 40,
        ..Default::default()
    };
    let out = reflect_generate(&t.pm, &t.tk, &t.tv, &prompt, Some(&target), &cfg, 9).unwrap();
    assert_eq!(out.rounds, 1);
    let judge = t.tv.encode(motiongen::graph::text::JUDGE_QUESTION);
    assert!(!out.transcript.windows(judge.len()).any(|w| w == judge.as_slice()));
    let scfg = SampleConfig {
        temperature: 1.0,
        max_new: 40,
        stop_after_span: true,
        force_open: true,
        ..Default::default()
    };
    let plain = sample(&t.pm, &prompt, &scfg, rng::derive_indexed(9, "span", 1)).unwrap();
    assert_eq!(plain.seq.ids, out.transcript);
    let m = motiongen::grpo::decode_completion(plain.generated(), &v, &t.tk).unwrap();
    assert_eq!(m, out.motion);
    assert!((out.similarity.unwrap() - embed_kinematic(&m).cosine(&target)).abs() < 1e-15);
}

#[test]
fn passing_gate_stops_after_one_round() {
    let t = toy();
    let prompt = t.tv.encode("follow the trajectory of");
    let target = embed_kinematic(&t.corpus[1]);
    let cfg = ReflectConfig {
        max_rounds: 3,
        gate_threshold: Some(-1.0),
        use_verdict: false,
        max_new: 40,
        ..Default::default()
    };
    let out = reflect_generate(&t.pm, &t.tk, &t.tv, &prompt, Some(&target), &cfg, 4).unwrap();
    assert_eq!(out.rounds, 1);
    // an unreachable gate uses every round
    let strict = ReflectConfig {
        gate_threshold: Some(1.0),
        ..cfg
    };
    let out = reflect_generate(&t.pm, &t.tk, &t.tv, &prompt, Some(&target), &strict, 4).unwrap();
    assert_eq!(out.rounds, 4);
    let regen = t.tv.encode(motiongen::graph::text::REGENERATE);
    assert_eq!(out.transcript.windows(regen.len()).filter(|w| *w == regen.as_slice()).count(), 3);
}

#[test]
fn exhausted_malformed_generations_fail() {
    let mut t = toy();
    let v = t.pm.vocab;
    let (_, off, _) = t.pm.tensors().into_iter().find(|x| x.0 == "b_out").unwrap();
    t.pm.params[off + v.motion_close() as usize] = -50.0;
    let prompt = t.tv.encode("match the speed of");
    let cfg = ReflectConfig {
        max_rounds: 1,
        max_new: 9,
        ..Default::default()
    };
    let r = reflect_generate(&t.pm, &t.tk, &t.tv, &prompt, Some(&embed_kinematic(&t.corpus[0])), &cfg, 1);
    assert!(matches!(r, Err(motiongen::Error::GenerationFailed { rounds: 2, .. })));
}
