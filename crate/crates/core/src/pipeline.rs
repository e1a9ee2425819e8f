//! The generate → composite → grade → feedback → refine loop for one
//! canvas, with a trace of every iteration.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositor::{composite, AssetResolver, CompositeError};
use crate::feedback::{feedback_with, refine, FeedbackError, FeedbackPlan};
use crate::geometry::BBox;
use crate::grader::{grade_with, Decision, GraderReport, Occlusion, Thresholds};
use crate::layout::{Canvas, Layout, ProtectedRegion};
use crate::raster::RasterImage;
use crate::recommender::{
    build_request, copy_exemplar, cost, external_propose, local_search, CostBreakdown, CostWeights,
    FallbackRecord, HttpTransport, RecommenderError, SearchBudget, Transport,
};
use crate::retrieval::{CorpusEntry, EmbeddingProvider, Hit, Index, RetrievalError, DEFAULT_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRecommender {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    30.0
}

impl ExternalRecommender {
    pub fn transport(&self) -> HttpTransport {
        HttpTransport::new(self.endpoint.clone())
            .with_timeout(Duration::from_secs_f64(self.timeout_secs.max(0.001)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub weights: CostWeights,
    pub thresholds: Thresholds,
    pub max_iterations: usize,
    pub omega: Option<BBox>,
    pub external_recommender: Option<ExternalRecommender>,
    pub rng_seed: u64,
    pub occlusion: Occlusion,
    pub parallelism: usize,
    pub max_moves: usize,
    pub step_sizes: Vec<f64>,
    /// On exhaustion return the best-graded iterate instead of the last.
    pub return_best: bool,
    /// Store per-iteration wall time in the trace (makes traces
    /// run-dependent).
    pub record_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let budget = SearchBudget::default();
        PipelineConfig {
            k: DEFAULT_K,
            weights: CostWeights::default(),
            thresholds: Thresholds::default(),
            max_iterations: 3,
            omega: None,
            external_recommender: None,
            rng_seed: 0,
            occlusion: Occlusion::default(),
            parallelism: 4,
            max_moves: budget.max_moves,
            step_sizes: budget.step_sizes,
            return_best: false,
            record_timings: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !self.thresholds.is_valid() {
            return bad("thresholds must lie in [0, 1]");
        }
        if self.occlusion.grid == 0 {
            return bad("occlusion grid must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if let Some(o) = &self.omega {
            if !o.is_valid() {
                return bad("omega must be a valid box");
            }
        }
        self.weights.validate()?;
        self.budget(0).validate()?;
        Ok(())
    }

    pub fn budget(&self, salt: u64) -> SearchBudget {
        SearchBudget {
            max_moves: self.max_moves,
            rng_seed: self.rng_seed.wrapping_add(salt),
            step_sizes: self.step_sizes.clone(),
        }
    }

    pub fn protected_region(&self) -> Option<ProtectedRegion> {
        self.omega.map(ProtectedRegion::new)
    }
}

/// Which stages run after the initial proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Single proposal, graded once for the record.
    RecommenderOnly,
    /// Grading with re-proposal from the next-ranked exemplar on rejection.
    WithGrader,
    /// Grading with feedback and refinement.
    Full,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::RecommenderOnly, Mode::WithGrader, Mode::Full];

    pub fn label(self) -> &'static str {
        match self {
            Mode::RecommenderOnly => "recommender_only",
            Mode::WithGrader => "with_grader",
            Mode::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub layout: Layout,
    pub cost: CostBreakdown,
    pub report: GraderReport,
    pub plan: Option<FeedbackPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "iteration", rename_all = "snake_case")]
pub enum TerminalStatus {
    AcceptedAtIteration(usize),
    ExhaustedIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub canvas_id: String,
    pub mode: Mode,
    pub retrieved: Vec<Hit>,
    pub fallback: Option<FallbackRecord>,
    pub iterations: Vec<IterationRecord>,
    pub status: TerminalStatus,
    /// Iteration whose layout was returned.
    pub returned_iteration: usize,
}

impl RunTrace {
    pub fn accepted_at(&self) -> Option<usize> {
        match self.status {
            TerminalStatus::AcceptedAtIteration(i) => Some(i),
            TerminalStatus::ExhaustedIterations => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub layout: Layout,
    pub composite: RasterImage,
    pub trace: RunTrace,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Recommender(#[from] RecommenderError),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

/// Everything a pipeline run reads besides the canvas itself.
pub struct PipelineContext<'a> {
    pub index: &'a Index,
    pub embedder: &'a dyn EmbeddingProvider,
    pub assets: &'a dyn AssetResolver,
    /// Overrides the HTTP transport built from the config.
    pub transport: Option<&'a dyn Transport>,
}

struct Graded {
    layout: Layout,
    image: RasterImage,
    report: GraderReport,
}

fn graded(
    layout: Layout,
    canvas: &RasterImage,
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
) -> Result<Graded, PipelineError> {
    let image = composite(canvas, &layout, ctx.assets)?;
    let report = grade_with(&layout, &image, &cfg.thresholds, &cfg.occlusion);
    Ok(Graded {
        layout,
        image,
        report,
    })
}

fn local_proposal(
    canvas: &RasterImage,
    exemplar: &CorpusEntry,
    cfg: &PipelineConfig,
    salt: u64,
) -> Result<Layout, RecommenderError> {
    let omega = cfg.protected_region();
    let initial = copy_exemplar(canvas.width(), canvas.height(), &exemplar.layout);
    local_search(&initial, &cfg.weights, &cfg.budget(salt), omega.as_ref())
}

/// Runs one canvas through the loop selected by `mode`.
pub fn run_pipeline(
    canvas_id: &str,
    canvas: &RasterImage,
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    mode: Mode,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let omega = cfg.protected_region();
    let query = ctx.embedder.embed(canvas_id, canvas)?;
    let hits = ctx.index.query_topk(&query, cfg.k)?.hits;
    let retrieved: Vec<&CorpusEntry> = hits
        .iter()
        .map(|h| ctx.index.get(&h.id).expect("hit ids come from the index"))
        .collect();

    let started = Instant::now();
    let mut fallback = None;
    let mut proposal = match (&cfg.external_recommender, ctx.transport) {
        (None, None) => local_proposal(canvas, retrieved[0], cfg, 0)?,
        (ext, injected) => {
            let http;
            let transport: &dyn Transport = match injected {
                Some(t) => t,
                None => {
                    http = ext.as_ref().expect("checked above").transport();
                    &http
                }
            };
            let req = build_request(
                Canvas {
                    width: canvas.width(),
                    height: canvas.height(),
                },
                &retrieved,
            );
            let mut local_err = None;
            let outcome = external_propose(&req, transport, || {
                local_proposal(canvas, retrieved[0], cfg, 0).unwrap_or_else(|e| {
                    local_err = Some(e);
                    Layout::new(canvas.width(), canvas.height())
                })
            });
            if let Some(e) = local_err {
                return Err(e.into());
            }
            fallback = outcome.fallback;
            outcome.layout
        }
    };

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut images: Vec<RasterImage> = Vec::new();
    let mut status = TerminalStatus::ExhaustedIterations;
    let iterations = if mode == Mode::RecommenderOnly { 1 } else { cfg.max_iterations };

    for it in 1..=iterations {
        let g = graded(proposal, canvas, ctx, cfg)?;
        let accepted = g.report.decision == Decision::Accept;
        let last = it == iterations;
        let plan = if accepted || last || mode != Mode::Full {
            None
        } else {
            Some(feedback_with(&g.layout, &g.report, omega.as_ref(), &cfg.occlusion))
        };
        let next = match (&plan, mode) {
            (Some(p), _) => Some(refine(&g.layout, p, &cfg.weights, &cfg.budget(it as u64), omega.as_ref())?),
            (None, Mode::WithGrader) if !accepted && !last => {
                let exemplar = retrieved[it % retrieved.len()];
                Some(local_proposal(canvas, exemplar, cfg, it as u64)?)
            }
            _ => None,
        };
        records.push(IterationRecord {
            iteration: it,
            cost: cost(&g.layout, &cfg.weights, omega.as_ref())?,
            layout: g.layout.clone(),
            report: g.report,
            plan,
            wall_time_ms: cfg
                .record_timings
                .then(|| started.elapsed().as_secs_f64() * 1e3),
        });
        images.push(g.image);
        if accepted {
            status = TerminalStatus::AcceptedAtIteration(it);
            break;
        }
        match next {
            Some(n) => proposal = n,
            None => break,
        }
    }

    let pick_best = matches!(status, TerminalStatus::ExhaustedIterations)
        && (mode == Mode::WithGrader || cfg.return_best);
    let chosen = if pick_best {
        records
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.report
                    .min_margin()
                    .total_cmp(&b.report.min_margin())
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .expect("at least one iteration")
    } else {
        records.len() - 1
    };

    Ok(PipelineOutput {
        layout: records[chosen].layout.clone(),
        composite: images.swap_remove(chosen),
        trace: RunTrace {
            canvas_id: canvas_id.to_string(),
            mode,
            retrieved: hits,
            fallback,
            returned_iteration: records[chosen].iteration,
            iterations: records,
            status,
        },
    })
}
