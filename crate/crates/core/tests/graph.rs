use motiongen::graph::text::{caption, parse_edit, render_edit};
use motiongen::graph::*;
use motiongen::motion::*;
use motiongen::rng;
use proptest::prelude::*;
use rand::Rng as _;

fn item(s: &str) -> ActionItem {
    ActionItem::parse(s).unwrap()
}

fn unit(v: Vec<f64>) -> Embedding {
    Embedding::from_raw(v)
}

fn node(id: u64, attrs: ActionList, e: Vec<f64>) -> GraphNode {
    GraphNode {
        id,
        attrs,
        embedding: unit(e),
    }
}

fn random_nodes(seed: u64, n: usize) -> Vec<GraphNode> {
    let mut r = rng::seeded(seed);
    let pool = [
        "walk,legs,neutral,medium,straight_forward",
        "walk,legs,cautious,medium,straight_forward",
        "turn,full_body,neutral,short,in_place",
        "kick,legs,energetic,short,in_place",
    ];
    (0..n)
        .map(|i| {
            let k = r.random_range(1..=2);
            let items: Vec<ActionItem> = (0..k).map(|_| item(pool[r.random_range(0..pool.len())])).collect();
            let mut list = ActionList::new(items);
            list.0.dedup();
            // clustered embeddings so a fair share of pairs clears the threshold
            let c = r.random_range(0..3) as f64;
            let e: Vec<f64> = (0..4)
                .map(|d| if d as f64 == c { 3.0 } else { 0.0 } + r.random_range(-1.0..1.0))
                .collect();
            node(i as u64 * 3 + 1, list, e)
        })
        .collect()
}

#[test]
fn edge_set_matches_brute_force() {
    for seed in 0..5 {
        let nodes = random_nodes(seed, 30);
        let g = build_graph(&nodes, 0.9).unwrap();
        let mut oracle = Vec::new();
        for a in &nodes {
            for b in &nodes {
                let dot: f64 = a.embedding.0.iter().zip(&b.embedding.0).map(|(x, y)| x * y).sum();
                if a.id < b.id && a.attrs != b.attrs && dot > 0.9 {
                    oracle.push((a.id, b.id));
                }
            }
        }
        oracle.sort();
        let got: Vec<(u64, u64)> = g.edges.iter().map(|e| (e.from, e.to)).collect();
        assert_eq!(got, oracle);
        assert!(!got.is_empty());
        g.validate().unwrap();
        let order = g.topological_order().unwrap();
        let pos = |id: u64| order.iter().position(|&x| x == id).unwrap();
        assert!(g.edges.iter().all(|e| pos(e.from) < pos(e.to)));
    }
}

#[test]
fn pruning_and_threshold_examples() {
    let walk = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
    let kick = ActionList::single(item("kick,legs,neutral,short,in_place"));
    // similarity 0.99 between identical lists
    let a = node(0, walk.clone(), vec![1.0, 0.0]);
    let b = node(1, walk.clone(), vec![0.99, (1.0f64 - 0.99 * 0.99).sqrt()]);
    assert!(build_graph(&[a.clone(), b], 0.9).unwrap().edges.is_empty());
    // similarity 0.85 below threshold
    let c = node(2, kick.clone(), vec![0.85, (1.0f64 - 0.85 * 0.85).sqrt()]);
    assert!(build_graph(&[a.clone(), c], 0.9).unwrap().edges.is_empty());
    let d = node(0, kick, vec![0.0, 1.0]);
    assert!(matches!(build_graph(&[a.clone(), d], 0.9), Err(motiongen::Error::DuplicateId(0))));
    assert!(build_graph(&[a], 1.5).is_err());
}

#[test]
fn minimal_in_context_case() {
    let walk = item("walk,legs,neutral,medium,straight_forward");
    let turn = item("turn,full_body,neutral,short,in_place");
    let nodes = vec![
        node(0, ActionList::single(walk), vec![1.0, 0.1]),
        node(1, ActionList::single(turn), vec![1.0, 0.12]),
        node(2, ActionList::new(vec![walk, turn]), vec![1.0, 0.11]),
    ];
    let g = build_graph(&nodes, 0.9).unwrap();
    let ic = extract_in_context(&g, 100, 3, 0);
    assert_eq!(ic.len(), 1);
    assert_eq!(ic[0].target, 2);
    let mut refs = ic[0].motion_refs();
    refs.sort();
    assert_eq!(refs, vec![0, 1, 2]);

    // target action absent from every source
    let kick = item("kick,legs,neutral,short,in_place");
    let nodes2 = vec![
        nodes[0].clone(),
        nodes[1].clone(),
        node(2, ActionList::new(vec![walk, kick]), vec![1.0, 0.11]),
    ];
    let g2 = build_graph(&nodes2, 0.9).unwrap();
    assert!(extract_in_context(&g2, 100, 3, 0).is_empty());
}

/// Exhaustive enumeration of minimal covering predecessor sets.
fn oracle_in_context(g: &MotionGraph, max_sources: usize) -> Vec<(u64, Vec<u64>)> {
    let mut out = Vec::new();
    for t in &g.nodes {
        let preds: Vec<u64> = g.edges.iter().filter(|e| e.to == t.id).map(|e| e.from).collect();
        let covers = |set: &[u64]| {
            t.attrs
                .items()
                .iter()
                .all(|it| set.iter().any(|&s| g.node(s).unwrap().attrs.contains(it)))
        };
        for mask in 1u32..(1 << preds.len()) {
            let set: Vec<u64> = (0..preds.len()).filter(|&i| mask >> i & 1 == 1).map(|i| preds[i]).collect();
            if set.len() < 2 || set.len() > max_sources || !covers(&set) {
                continue;
            }
            let minimal = (0..set.len()).all(|k| {
                let rest: Vec<u64> = set.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &s)| s).collect();
                !covers(&rest)
            });
            if minimal {
                out.push((t.id, set));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn in_context_matches_exhaustive_enumeration() {
    let mut total = 0;
    for seed in 0..6 {
        let nodes = random_nodes(seed + 10, 20);
        let g = build_graph(&nodes, 0.9).unwrap();
        let oracle = oracle_in_context(&g, 3);
        let got = extract_in_context(&g, usize::MAX, 3, seed);
        assert_eq!(got.len(), oracle.len(), "seed {seed}");
        total += got.len();
        let mut keys: Vec<(u64, Vec<u64>)> = got
            .iter()
            .map(|i| {
                let mut s = i.meta.sources.clone();
                s.sort();
                (i.target, s)
            })
            .collect();
        keys.sort();
        assert_eq!(keys, oracle);
        for ins in &got {
            let target = &g.node(ins.target).unwrap().attrs;
            let srcs: Vec<&ActionList> = ins.meta.sources.iter().map(|&s| &g.node(s).unwrap().attrs).collect();
            assert!(target.items().iter().all(|it| srcs.iter().any(|s| s.contains(it))));
            assert!(ins.meta.sources.iter().all(|&s| g.has_edge(s, ins.target)));
        }
    }
    assert!(total > 0);
}

#[test]
fn edits_round_trip_and_cover_edges() {
    let corpus = generate_corpus(
        &CorpusConfig {
            count: 60,
            ..CorpusConfig::default()
        },
        3,
    )
    .unwrap();
    let g = build_graph_from_motions(&corpus, DEFAULT_THRESHOLD).unwrap();
    assert!(!g.edges.is_empty());
    let edits = extract_editing(&g);
    let nonempty = g
        .edges
        .iter()
        .filter(|e| !g.node(e.to).unwrap().attrs.difference(&g.node(e.from).unwrap().attrs).is_empty())
        .count();
    assert_eq!(edits.len(), nonempty);
    for ins in &edits {
        let src = ins.meta.sources[0];
        let before = &g.node(src).unwrap().attrs;
        let after = &g.node(ins.target).unwrap().attrs;
        let Span::Text(text) = &ins.turns[1] else { panic!() };
        let mut parsed = parse_edit(before, text).unwrap();
        let mut delta = after.difference(before);
        parsed.sort();
        delta.sort();
        assert_eq!(parsed, delta, "{text}");
    }
}

#[test]
fn style_only_edit_uses_style_template() {
    let a = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
    let b = ActionList::single(item("walk,legs,cautious,medium,straight_forward"));
    let nodes = vec![node(0, a, vec![1.0, 0.0]), node(1, b, vec![1.0, 0.05])];
    let g = build_graph(&nodes, 0.9).unwrap();
    let e = extract_editing(&g);
    assert_eq!(e[0].turns[1], Span::Text("change the style to cautious .".into()));
}

#[test]
fn multiturn_paths_follow_edges() {
    let corpus = generate_corpus(
        &CorpusConfig {
            count: 120,
            ..CorpusConfig::default()
        },
        8,
    )
    .unwrap();
    let g = build_graph_from_motions(&corpus, DEFAULT_THRESHOLD).unwrap();
    let mt = extract_multiturn(&g, 3, 50, 4);
    assert!(!mt.is_empty());
    for ins in &mt {
        let mut path = ins.meta.sources.clone();
        path.push(ins.target);
        assert!(path.len() >= 3 && path.len() <= 4);
        assert!(path.windows(2).all(|w| g.has_edge(w[0], w[1])));
        assert!(path.windows(2).all(|w| w[0] < w[1]));
        ins.validate().unwrap();
    }
    assert_eq!(mt, extract_multiturn(&g, 3, 50, 4));

    // a single edge has no two-edge path
    let a = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
    let b = ActionList::single(item("walk,legs,cautious,medium,straight_forward"));
    let g1 = build_graph(&[node(0, a, vec![1.0, 0.0]), node(1, b, vec![1.0, 0.05])], 0.9).unwrap();
    assert!(extract_multiturn(&g1, 3, 50, 0).is_empty());
}

#[test]
fn reflection_pairs_per_edge() {
    let corpus = generate_corpus(
        &CorpusConfig {
            count: 60,
            ..CorpusConfig::default()
        },
        3,
    )
    .unwrap();
    let g = build_graph_from_motions(&corpus, DEFAULT_THRESHOLD).unwrap();
    let refl = extract_reflection(&g, 1);
    assert_eq!(refl.len(), 2 * g.edges.len());
    for pair in refl.chunks(2) {
        let (pos, neg) = (&pair[0], &pair[1]);
        assert_eq!(pos.meta.aligned, Some(true));
        assert_eq!(pos.response.len(), 1);
        assert_eq!(neg.meta.aligned, Some(false));
        assert_eq!(pos.turns[0], Span::Text(caption(&g.node(pos.target).unwrap().attrs)));
        let Span::Text(reason) = &neg.response[0] else { panic!() };
        assert!(reason.starts_with("no ,"));
        for it in &neg.meta.delta {
            assert!(reason.contains(motiongen::graph::text::action_noun(it.action_type)));
        }
        assert!(matches!(neg.response.last(), Some(Span::Motion(_))));
    }
}

#[test]
fn negative_sample_names_missing_kick() {
    let walk = item("walk,legs,neutral,medium,straight_forward");
    let kick = item("kick,legs,neutral,short,in_place");
    let nodes = vec![
        node(0, ActionList::single(walk), vec![1.0, 0.0]),
        node(1, ActionList::new(vec![walk, kick]), vec![1.0, 0.05]),
    ];
    let g = build_graph(&nodes, 0.9).unwrap();
    let refl = extract_reflection(&g, 0);
    let Span::Text(reason) = &refl[1].response[0] else { panic!() };
    assert!(reason.contains("lacks kicking"), "{reason}");
}

#[test]
fn extraction_is_deterministic_and_serializable() {
    let corpus = generate_corpus(
        &CorpusConfig {
            count: 60,
            ..CorpusConfig::default()
        },
        3,
    )
    .unwrap();
    let g = build_graph_from_motions(&corpus, DEFAULT_THRESHOLD).unwrap();
    let cfg = ExtractConfig::default();
    let a = extract_all(&g, &cfg, 9).unwrap();
    assert_eq!(a, extract_all(&g, &cfg, 9).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ins.jsonl");
    write_instructions(&p, &a).unwrap();
    assert_eq!(read_instructions(&p).unwrap(), a);
    let gp = dir.path().join("graph.json");
    g.save(&gp).unwrap();
    assert_eq!(MotionGraph::load(&gp).unwrap(), g);
}

#[test]
fn embedding_properties() {
    let spec = ActionList::single(item("walk,legs,neutral,medium,straight_forward"));
    let a = synthesize_motion(&spec, 3.0, 20, 1).unwrap();
    assert_eq!(embed_segment(&a), embed_segment(&synthesize_motion(&spec, 3.0, 20, 1).unwrap()));

    // same spec different seed vs different action, 50 pairs
    let mut r = rng::seeded(0);
    let (mut same, mut diff) = (0.0, 0.0);
    for k in 0..50u64 {
        let pick = |r: &mut rng::Rng| {
            ActionItem::new(
                ActionType::ALL[r.random_range(0..ActionType::ALL.len())],
                BodyPart::ALL[r.random_range(0..BodyPart::ALL.len())],
                Style::ALL[r.random_range(0..Style::ALL.len())],
                DurationClass::ALL[r.random_range(0..3)],
                Trajectory::ALL[r.random_range(0..Trajectory::ALL.len())],
            )
        };
        let x = pick(&mut r);
        let mut y = pick(&mut r);
        while y.action_type == x.action_type {
            y = pick(&mut r);
        }
        let m1 = synthesize_motion(&ActionList::single(x), 3.0, 20, k).unwrap();
        let m2 = synthesize_motion(&ActionList::single(x), 3.0, 20, k + 100).unwrap();
        let m3 = synthesize_motion(&ActionList::single(y), 3.0, 20, k + 200).unwrap();
        same += embed_segment(&m1).cosine(&embed_segment(&m2));
        diff += embed_segment(&m1).cosine(&embed_segment(&m3));
    }
    assert!(same / 50.0 > diff / 50.0 + 0.3, "{same} vs {diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn embeddings_are_unit_norm(seed in any::<u64>(), a in 0usize..8, t in 0usize..7, dur in 1.0f64..6.0) {
        let it = ActionItem::new(ActionType::ALL[a], BodyPart::Legs, Style::Neutral, DurationClass::Medium, Trajectory::ALL[t]);
        let m = synthesize_motion(&ActionList::single(it), dur, 20, seed).unwrap();
        for e in [embed_segment(&m), embed_kinematic(&m)] {
            let n: f64 = e.0.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
            prop_assert!(e.0.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn edit_text_round_trips(seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let fam = family_specs(&mut r);
        for a in &fam {
            for b in &fam {
                if a == b { continue; }
                let clauses = render_edit(a, b);
                if clauses.is_empty() { continue; }
                let text = motiongen::graph::text::edit_text(&clauses);
                let mut parsed = parse_edit(a, &text).unwrap();
                let mut delta = b.difference(a);
                parsed.sort();
                delta.sort();
                prop_assert_eq!(parsed, delta);
            }
        }
    }
}
