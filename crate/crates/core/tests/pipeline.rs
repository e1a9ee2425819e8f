mod common;

use common::{el, gray_canvas, index_of, Canned};
use layoutloop_core::compositor::{composite, dominant_color, FsAssetResolver};
use layoutloop_core::experiment::{run_experiment, ExperimentError};
use layoutloop_core::grader::{gamma2, gamma3, Decision};
use layoutloop_core::metrics::MetricsError;
use layoutloop_core::pipeline::TerminalStatus;
use layoutloop_core::recommender::{FallbackReason, TransportError};
use layoutloop_core::retrieval::BaselineEmbedder;
use layoutloop_core::synthetic::{generate_suite, SeededProposer, SuiteSpec};
use layoutloop_core::{run_pipeline, ElementType, Layout, Mode, PipelineConfig, PipelineContext};
use proptest::prelude::*;

use ElementType::*;

fn clean_layout() -> Layout {
    Layout::new(120, 160)
        .with_element(el("a", Text, [0.1, 0.1, 0.3, 0.1], "#202020"))
        .with_element(el("b", Text, [0.1, 0.4, 0.5, 0.1], "#202020"))
}

fn assets() -> FsAssetResolver {
    FsAssetResolver::new(".")
}

#[test]
fn clean_exemplar_is_accepted_first_time() {
    let canvas = gray_canvas(120, 160);
    let exemplar = clean_layout();

    // the exemplar passes every check on its own
    let img = composite(&canvas, &exemplar, &assets()).unwrap();
    let colors: Vec<_> = exemplar.boxes().map(|b| dominant_color(&img, b)).collect();
    assert_eq!(colors[0], colors[1]);
    assert_eq!(gamma2(&exemplar), 1.0);
    assert_eq!(gamma3(&exemplar), 1.0);

    let index = index_of(&[("ex", canvas.clone(), exemplar)]);
    let a = assets();
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: None };
    let out = run_pipeline("q", &canvas, &ctx, &PipelineConfig::default(), Mode::Full).unwrap();
    assert_eq!(out.trace.status, TerminalStatus::AcceptedAtIteration(1));
    assert_eq!(out.trace.iterations.len(), 1);
    assert_eq!(out.trace.iterations[0].report.gammas(), [1.0, 1.0, 1.0]);
    assert_eq!(out.layout.len(), 2);
}

fn overlapping_reply() -> String {
    Layout::new(120, 160)
        .with_element(el("a", Text, [0.3, 0.3, 0.3, 0.2], "#202020"))
        .with_element(el("b", Text, [0.4, 0.35, 0.3, 0.2], "#202020"))
        .to_json()
}

#[test]
fn single_iteration_budget_exhausts_with_one_record() {
    let canvas = gray_canvas(120, 160);
    let index = index_of(&[("ex", canvas.clone(), clean_layout())]);
    let a = assets();
    let t = Canned(Ok(overlapping_reply()));
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: Some(&t) };
    let cfg = PipelineConfig { max_iterations: 1, ..PipelineConfig::default() };
    let out = run_pipeline("q", &canvas, &ctx, &cfg, Mode::Full).unwrap();
    assert_eq!(out.trace.status, TerminalStatus::ExhaustedIterations);
    assert_eq!(out.trace.iterations.len(), 1);
    assert_eq!(out.trace.iterations[0].report.decision, Decision::Reject);
    assert!(out.trace.fallback.is_none());
}

#[test]
fn overlapping_two_element_proposal_converges() {
    let canvas = gray_canvas(120, 160);
    let index = index_of(&[("ex", canvas.clone(), clean_layout())]);
    let a = assets();
    let t = Canned(Ok(overlapping_reply()));
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: Some(&t) };
    let out = run_pipeline("q", &canvas, &ctx, &PipelineConfig::default(), Mode::Full).unwrap();
    let at = out.trace.accepted_at().expect("accepted");
    assert!(at <= 3);
    let g2: Vec<f64> = out.trace.iterations.iter().map(|r| r.report.gamma2).collect();
    assert!(g2.windows(2).all(|p| p[1] >= p[0]), "{g2:?}");
    assert!(g2[0] < 0.9);
}

#[test]
fn malformed_reply_falls_back() {
    let canvas = gray_canvas(120, 160);
    let index = index_of(&[("ex", canvas.clone(), clean_layout())]);
    let a = assets();
    let reply = r##"{"canvas":{"width":120,"height":160},"elements":[
        {"id":"a","type":"text","bbox":[0.3,0.3,-0.1,0.2],"asset":"#202020"},
        {"id":"b","type":"text","bbox":[0.4,0.35,0.3,0.2],"asset":"#202020"}]}"##
        .to_string();
    let t = Canned(Ok(reply));
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: Some(&t) };
    let out = run_pipeline("q", &canvas, &ctx, &PipelineConfig::default(), Mode::Full).unwrap();
    let fb = out.trace.fallback.expect("fallback recorded");
    assert_eq!(fb.reason, FallbackReason::MalformedResponse);
    assert!(out.layout.is_valid());
    assert_eq!(out.layout.len(), 2);
}

#[test]
fn timeout_falls_back() {
    let canvas = gray_canvas(120, 160);
    let index = index_of(&[("ex", canvas.clone(), clean_layout())]);
    let a = assets();
    let t = Canned(Err(TransportError::Timeout));
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: Some(&t) };
    let out = run_pipeline("q", &canvas, &ctx, &PipelineConfig::default(), Mode::Full).unwrap();
    assert_eq!(out.trace.fallback.unwrap().reason, FallbackReason::Timeout);
    assert_eq!(out.trace.status, TerminalStatus::AcceptedAtIteration(1));
}

#[test]
fn invalid_config_is_rejected() {
    let canvas = gray_canvas(32, 32);
    let index = index_of(&[("ex", canvas.clone(), clean_layout())]);
    let a = assets();
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: None };
    let cfg = PipelineConfig { max_iterations: 0, ..PipelineConfig::default() };
    assert!(run_pipeline("q", &canvas, &ctx, &cfg, Mode::Full).is_err());
}

#[test]
fn empty_test_set_is_empty_corpus() {
    let canvas = gray_canvas(32, 32);
    let index = index_of(&[("ex", canvas, clean_layout())]);
    let a = assets();
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: None };
    let err = run_experiment(&[], &ctx, &PipelineConfig::default(), true).unwrap_err();
    assert!(matches!(err, ExperimentError::Metrics(MetricsError::EmptyCorpus)));
}

#[test]
fn ablation_produces_three_rows() {
    let suite = generate_suite(&SuiteSpec { corpus_size: 6, test_size: 3, ..SuiteSpec::default() });
    let index = suite.index(&BaselineEmbedder).unwrap();
    let a = assets();
    let p = SeededProposer::new(5);
    let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: Some(&p) };
    let r = run_experiment(&suite.tests, &ctx, &PipelineConfig::default(), true).unwrap();
    let modes: Vec<Mode> = r.rows.iter().map(|r| r.mode).collect();
    assert_eq!(modes, Mode::ALL.to_vec());
    for row in &r.rows {
        assert_eq!(row.report.count, 3);
        assert_eq!(row.traces.len(), 3);
        assert!(row.traces.iter().all(|t| t.mode == row.mode));
    }
    let only_full = run_experiment(&suite.tests, &ctx, &PipelineConfig::default(), false).unwrap();
    assert_eq!(only_full.rows.len(), 1);
    assert_eq!(only_full.rows[0].mode, Mode::Full);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_invariants(proposer_seed in any::<u64>(), rng_seed in any::<u64>(), max_iterations in 1usize..5, mode_ix in 0usize..3, canvas_ix in 0usize..4) {
        let suite = generate_suite(&SuiteSpec { corpus_size: 8, test_size: 4, ..SuiteSpec::default() });
        let index = suite.index(&BaselineEmbedder).unwrap();
        let a = assets();
        let p = SeededProposer::new(proposer_seed);
        let ctx = PipelineContext { index: &index, embedder: &BaselineEmbedder, assets: &a, transport: Some(&p) };
        let cfg = PipelineConfig { rng_seed, max_iterations, max_moves: 800, ..PipelineConfig::default() };
        let mode = Mode::ALL[mode_ix];
        let c = &suite.tests[canvas_ix];
        let out = run_pipeline(&c.id, &c.image, &ctx, &cfg, mode).unwrap();
        let t = &out.trace;
        prop_assert!(t.iterations.len() <= max_iterations);
        prop_assert!(!t.iterations.is_empty());
        for (i, r) in t.iterations.iter().enumerate() {
            prop_assert_eq!(r.iteration, i + 1);
        }
        if let Some(i) = t.accepted_at() {
            prop_assert_eq!(i, t.iterations.len());
            prop_assert_eq!(t.iterations.last().unwrap().report.decision, Decision::Accept);
        }
        prop_assert!(out.layout.is_valid());
        let chosen = &t.iterations[t.returned_iteration - 1];
        prop_assert_eq!(&chosen.layout, &out.layout);

        let again = run_pipeline(&c.id, &c.image, &ctx, &cfg, mode).unwrap();
        prop_assert_eq!(serde_json::to_string(&again.trace).unwrap(), serde_json::to_string(t).unwrap());
        prop_assert_eq!(again.composite, out.composite);
    }
}
