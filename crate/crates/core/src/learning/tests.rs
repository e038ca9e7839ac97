use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{Function, MatchingFeatures, PredictiveFeature, Side};
use crate::inline::{score_function, InlineModel, Rule};
use crate::sim::{simulate, SimProfile, SourceOrigin, SourceShape};

fn example(costs: [f64; 6], label: PairLabel) -> PairExample {
    PairExample { costs, label }
}

#[test]
fn separable_toy_corpus_is_fit_exactly() {
    let mut corpus = Vec::new();
    for _ in 0..20 {
        corpus.push(example([0.0; 6], PairLabel::Same));
        corpus.push(example([1.0; 6], PairLabel::Different));
    }
    let t = train_weights(&corpus, &SvmConfig::default()).unwrap();
    assert_eq!(t.accuracy(&corpus), 1.0);
}

/// Only the two call-graph costs depend on the label; the rest is noise.
fn call_graph_corpus(seed: u64, n: usize) -> Vec<PairExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let same = k % 2 == 0;
            let mut costs = [0.0; 6];
            for c in costs.iter_mut() {
                *c = rng.gen();
            }
            let (lo, hi) = if same { (0.0, 0.45) } else { (0.55, 1.0) };
            costs[Feature::Callers.index()] = rng.gen_range(lo..hi);
            costs[Feature::Callees.index()] = rng.gen_range(lo..hi);
            example(costs, if same { PairLabel::Same } else { PairLabel::Different })
        })
        .collect()
}

#[test]
fn call_graph_costs_dominate_when_only_they_discriminate() {
    let corpus = call_graph_corpus(3, 400);
    let t = train_weights(&corpus, &SvmConfig::default()).unwrap();
    let w = t.weights;
    let others = [w.strings, w.ints, w.libcalls, w.num_args];
    let top = others.iter().copied().fold(0.0, f64::max);
    assert!(w.callers > top && w.callees > top, "{w:?}");
    assert!(t.accuracy(&corpus) > 0.95);
}

#[test]
fn degenerate_corpora_are_rejected() {
    assert!(matches!(train_weights(&[], &SvmConfig::default()), Err(LearnError::Degenerate(_))));
    let one = vec![example([0.0; 6], PairLabel::Same); 3];
    assert!(matches!(train_weights(&one, &SvmConfig::default()), Err(LearnError::Degenerate(_))));
}

#[test]
fn weight_training_ignores_corpus_order() {
    let corpus = call_graph_corpus(5, 120);
    let mut reversed = corpus.clone();
    reversed.reverse();
    let cfg = SvmConfig::default();
    assert_eq!(train_weights(&corpus, &cfg).unwrap(), train_weights(&reversed, &cfg).unwrap());
}

#[test]
fn scaling_costs_preserves_decision_order() {
    let corpus = call_graph_corpus(7, 120);
    let scaled: Vec<_> = corpus
        .iter()
        .map(|e| example(e.costs.map(|c| c * 3.5), e.label))
        .collect();
    let cfg = SvmConfig::default();
    let a = train_weights(&corpus, &cfg).unwrap();
    let b = train_weights(&scaled, &cfg).unwrap();
    for (x, y) in corpus.iter().zip(&scaled) {
        assert!((a.decision(&x.costs) - b.decision(&y.costs)).abs() < 1e-9);
    }
}

fn with(features: &[PredictiveFeature]) -> PredictiveFeatures {
    let mut p = PredictiveFeatures::default();
    for f in features {
        p.set(*f, true);
    }
    p
}

fn random_predictive(rng: &mut ChaCha8Rng) -> PredictiveFeatures {
    let mut p = PredictiveFeatures::default();
    for f in PredictiveFeature::ALL {
        p.set(f, rng.gen_bool(0.5));
    }
    p
}

fn rule_corpus(seed: u64, n: usize, rule: impl Fn(&PredictiveFeatures) -> bool) -> Vec<InlineExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let predictive = random_predictive(&mut rng);
            let label = if rule(&predictive) { InlineLabel::Inlined } else { InlineLabel::NotInlined };
            InlineExample { predictive, label }
        })
        .collect()
}

fn accuracy(m: &InlineModel, corpus: &[InlineExample]) -> f64 {
    let hits = corpus
        .iter()
        .filter(|e| (score_function(&e.predictive, m) > m.threshold) == (e.label == InlineLabel::Inlined))
        .count();
    hits as f64 / corpus.len() as f64
}

#[test]
fn boosting_learns_a_two_literal_rule() {
    let rule = |p: &PredictiveFeatures| p.is_static && !p.is_recursive;
    let m = train_inliner(&rule_corpus(1, 800, rule), &BoostConfig::default()).unwrap();
    assert!(!m.rules.is_empty());
    assert!(accuracy(&m, &rule_corpus(2, 800, rule)) >= 0.95);
}

#[test]
fn boosting_finds_nothing_in_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise: Vec<InlineExample> = (0..2000)
        .map(|_| InlineExample {
            predictive: random_predictive(&mut rng),
            label: if rng.gen_bool(0.5) { InlineLabel::Inlined } else { InlineLabel::NotInlined },
        })
        .collect();
    let (train, test) = noise.split_at(1000);
    let m = train_inliner(train, &BoostConfig::default()).unwrap();
    assert!((accuracy(&m, test) - 0.5).abs() <= 0.1);
}

#[test]
fn single_literal_rule_is_the_strongest_stump() {
    let m = train_inliner(&rule_corpus(9, 600, |p| !p.has_variadic_args), &BoostConfig::default()).unwrap();
    let top = m
        .rules
        .iter()
        .max_by(|a, b| a.score.abs().total_cmp(&b.score.abs()))
        .unwrap();
    assert_eq!(top.feature, PredictiveFeature::Variadic);
}

#[test]
fn evaluation_rates() {
    let rule = |p: &PredictiveFeatures| p.is_static;
    let corpus = rule_corpus(11, 200, rule);
    let perfect = InlineModel {
        base_score: -0.5,
        threshold: 0.0,
        rules: vec![Rule { feature: PredictiveFeature::Static, polarity: true, score: 1.0 }],
    };
    assert_eq!(evaluate_inliner(&perfect, &corpus), (1.0, 0.0));
    assert_eq!(evaluate_inliner(&InlineModel::never(), &corpus), (0.0, 0.0));
    assert!(matches!(
        train_inliner(&rule_corpus(1, 10, |_| true), &BoostConfig::default()),
        Err(LearnError::Degenerate(_))
    ));
}

fn func(strings: &[&str], callees: &[&str]) -> Function {
    Function {
        features: MatchingFeatures {
            strings: strings.iter().map(|s| s.to_string()).collect(),
            callees: callees.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        },
        predictive: Some(with(&[])),
        pseudo_inline_origin: None,
    }
}

fn strip(f: Function) -> Function {
    Function { predictive: None, ..f }
}

#[test]
fn pair_corpus_examples() {
    let names: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
    let src = FeatureGraph::from_functions(
        Side::Source,
        names.iter().map(|n| (n.clone(), func(&[n.as_str()], &[]))),
    )
    .unwrap();
    let bin = FeatureGraph::from_functions(
        Side::Binary,
        names.iter().map(|n| (format!("0x{n}"), strip(func(&[n.as_str()], &[])))),
    )
    .unwrap();
    let truth: BTreeMap<String, String> = names.iter().map(|n| (format!("0x{n}"), n.clone())).collect();
    let pair = LabelledPair { binary: &bin, source: &src, truth: &truth, inlined_edges: &[] };
    let corpus = build_pair_corpus(&[pair], 1).unwrap();
    assert_eq!(corpus.iter().filter(|e| e.label == PairLabel::Same).count(), 10);
    assert_eq!(corpus.iter().filter(|e| e.label == PairLabel::Different).count(), 10);
    for e in corpus.iter().filter(|e| e.label == PairLabel::Same) {
        assert_eq!(e.costs[Feature::Strings.index()], 0.0);
    }
    for e in corpus.iter().filter(|e| e.label == PairLabel::Different) {
        assert_eq!(e.costs[Feature::Strings.index()], 1.0);
    }
    assert!(build_pair_corpus(&[], 1).unwrap().is_empty());

    let inlined = vec![("f1".to_string(), "f2".to_string())];
    let pair = LabelledPair { inlined_edges: &inlined, ..pair };
    assert_eq!(build_pair_corpus(&[pair], 1).unwrap().len(), 16);

    let mut partial = truth.clone();
    partial.remove("0xf3");
    let pair = LabelledPair { truth: &partial, inlined_edges: &[], ..pair };
    assert!(matches!(build_pair_corpus(&[pair], 1), Err(LearnError::TruthIncomplete(id)) if id == "0xf3"));
}

#[test]
fn simulated_corpora_are_balanced_per_program() {
    let pairs: Vec<_> = (0..3)
        .map(|k| {
            let origin = SourceOrigin { seed: 40 + k, n_functions: 150, shape: SourceShape::default() };
            simulate(origin, &SimProfile::o2_like(k)).unwrap()
        })
        .collect();
    let labelled: Vec<LabelledPair<'_>> = pairs
        .iter()
        .map(|p| LabelledPair { binary: &p.binary, source: &p.source, truth: &p.truth, inlined_edges: &p.inlined_edges })
        .collect();
    let corpus = build_inline_corpus(&labelled, 0);
    let pos = corpus.iter().filter(|e| e.label == InlineLabel::Inlined).count();
    assert!(pos > 0);
    assert_eq!(2 * pos, corpus.len());

    let pc = build_pair_corpus(&labelled, 0).unwrap();
    let same = pc.iter().filter(|e| e.label == PairLabel::Same).count();
    assert_eq!(2 * same, pc.len());
}

#[test]
fn folds_keep_sources_apart() {
    let folds = kfold(10, 5).unwrap();
    assert_eq!(folds.len(), 5);
    let mut tested = Vec::new();
    for f in &folds {
        for t in &f.test {
            assert!(!f.train.contains(t));
        }
        assert_eq!(f.train.len() + f.test.len(), 10);
        tested.extend(f.test.iter().copied());
    }
    tested.sort();
    assert_eq!(tested, (0..10).collect::<Vec<_>>());
    assert!(kfold(3, 5).is_err());
    assert!(kfold(3, 1).is_err());
}

#[test]
fn corpora_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = call_graph_corpus(1, 5);
    let path = dir.path().join("pairs.jsonl");
    write_jsonl(&path, &pairs).unwrap();
    assert_eq!(read_jsonl::<PairExample>(&path).unwrap(), pairs);

    let inl = rule_corpus(1, 5, |p| p.is_static);
    let path = dir.path().join("inline.jsonl");
    write_jsonl(&path, &inl).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"label\":\"inlined\"") || text.contains("\"label\":\"not_inlined\""));
    assert_eq!(read_jsonl::<InlineExample>(&path).unwrap(), inl);
}
