use std::collections::BTreeSet;

use provmatch::config::{load_inline_model, load_weights, load_whitelist};
use provmatch::learning::{
    build_inline_corpus, build_pair_corpus, cross_evaluate_inliner, evaluate_inliner, train_inliner, train_weights,
    BoostConfig, LabelledPair, SvmConfig,
};
use provmatch::matcher::{score_against_ground_truth, MatchOptions, MatchReport};
use provmatch::pipeline::Pipeline;
use provmatch::sim::{emit_pair, load_pair, simulate, SimPair, SimProfile, SourceOrigin, SourceShape};

fn pipeline() -> Pipeline {
    Pipeline {
        weights: load_weights(None).unwrap(),
        whitelist: load_whitelist(None).unwrap(),
        inline_model: Some(load_inline_model(None).unwrap()),
        options: MatchOptions::default(),
    }
}

fn pair_with(seed: u64, n: usize, shape: SourceShape, profile: SimProfile) -> SimPair {
    simulate(
        SourceOrigin {
            seed,
            n_functions: n,
            shape,
        },
        &profile,
    )
    .unwrap()
}

fn pair(seed: u64, n: usize, profile: SimProfile) -> SimPair {
    pair_with(seed, n, SourceShape::default(), profile)
}

/// Every function carries at least one string no other function has.
fn unique_strings() -> SourceShape {
    SourceShape {
        string_fraction: 1.0,
        common_string_rate: 0.0,
        ..SourceShape::default()
    }
}

#[test]
fn identity_compilation_matches_perfectly() {
    let p = pipeline();
    for seed in 0..3 {
        let sp = pair_with(seed, 80, unique_strings(), SimProfile::identity(seed));
        let mut report = p.run(&sp.binary, &sp.source).unwrap();
        assert_eq!(report.similarity, 1.0);
        let t = score_against_ground_truth(&report, &sp.truth).unwrap();
        assert_eq!(t.ic_matched, 0);
        assert_eq!(t.c_matched, t.total);
        report.tallies = Some(t);
        assert_eq!(MatchReport::from_json(report.to_json().as_bytes()).unwrap(), report);
    }
}

#[test]
fn optimized_binary_matches_its_source_better_than_a_stranger() {
    let p = pipeline();
    let sp = pair(11, 120, SimProfile::o2_like(11));
    let stranger = pair(12, 120, SimProfile::o2_like(12));
    let own = p.run(&sp.binary, &sp.source).unwrap();
    let other = p.run(&sp.binary, &stranger.source).unwrap();
    assert!(own.similarity > 0.7, "own similarity {}", own.similarity);
    assert!(own.similarity > other.similarity);
    let t = score_against_ground_truth(&own, &sp.truth).unwrap();
    assert!(t.c_matched > t.ic_matched);
}

#[test]
fn pseudo_inlined_synthesis_helps_on_inlined_programs() {
    let with = pipeline();
    let without = Pipeline {
        inline_model: None,
        ..pipeline()
    };
    let mut gain = 0.0;
    for seed in 20..24 {
        let sp = pair(seed, 120, SimProfile::o3_like(seed));
        let a = score_against_ground_truth(&with.run(&sp.binary, &sp.source).unwrap(), &sp.truth).unwrap();
        let b = score_against_ground_truth(&without.run(&sp.binary, &sp.source).unwrap(), &sp.truth).unwrap();
        gain += a.c_matched_frac() - b.c_matched_frac();
    }
    assert!(gain >= 0.0, "pseudo-inlined functions lowered accuracy by {gain}");
}

#[test]
fn thread_count_does_not_change_the_report() {
    let sp = pair(5, 100, SimProfile::o2_like(5));
    let mut reports = Vec::new();
    for threads in [1, 2, 4] {
        let p = Pipeline {
            options: MatchOptions {
                threads: Some(threads),
                ..MatchOptions::default()
            },
            ..pipeline()
        };
        reports.push(p.run(&sp.binary, &sp.source).unwrap().to_json());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn emitted_pairs_reload_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let sp = pair(3, 50, SimProfile::o3_like(3));
    emit_pair(&sp, dir.path()).unwrap();
    let back = load_pair(dir.path()).unwrap();
    assert_eq!(back, sp);
    let replayed = provmatch::sim::replay(&back.manifest()).unwrap().unwrap();
    assert_eq!(replayed, sp);
}

#[test]
fn simulated_truth_covers_every_binary_function() {
    let sp = pair(9, 150, SimProfile::o2_like(9));
    let binary: BTreeSet<&String> = sp.binary.ids().collect();
    let truth: BTreeSet<&String> = sp.truth.keys().collect();
    assert_eq!(binary, truth);
    assert!(sp.truth.values().all(|s| sp.source.contains(s)));
    for (caller, callee) in &sp.inlined_edges {
        assert!(sp.source.get(caller).unwrap().features.callees.contains(callee));
    }
}

fn labelled(ps: &[SimPair]) -> Vec<LabelledPair<'_>> {
    ps.iter().map(LabelledPair::from).collect()
}

#[test]
fn trained_components_generalize_across_programs() {
    let train: Vec<SimPair> = (0..6).map(|s| pair(100 + s, 150, SimProfile::o2_like(100 + s))).collect();
    let test: Vec<SimPair> = (0..2).map(|s| pair(200 + s, 150, SimProfile::o2_like(200 + s))).collect();

    let inline_train = build_inline_corpus(&labelled(&train), 1);
    let inline_test = build_inline_corpus(&labelled(&test), 2);
    let model = train_inliner(&inline_train, &BoostConfig::default()).unwrap();
    let (tpr, fpr) = evaluate_inliner(&model, &inline_test);
    assert!(tpr >= 0.7 && fpr <= 0.25, "tpr {tpr} fpr {fpr}");

    let pair_train = build_pair_corpus(&labelled(&train), 1).unwrap();
    let pair_test = build_pair_corpus(&labelled(&test), 2).unwrap();
    let trained = train_weights(&pair_train, &SvmConfig::default()).unwrap();
    assert!(trained.accuracy(&pair_test) > 0.9);

    let groups: Vec<_> = train
        .iter()
        .enumerate()
        .map(|(i, p)| build_inline_corpus(&[LabelledPair::from(p)], i as u64))
        .collect();
    let folds = cross_evaluate_inliner(&groups, 3, &BoostConfig::default()).unwrap();
    assert_eq!(folds.len(), 3);
    assert!(folds.iter().all(|&(tpr, _)| tpr >= 0.7));
}
