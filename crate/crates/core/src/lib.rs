//! Content-aware layout generation: retrieve similar exemplars, propose a
//! layout, render it, grade it, and refine it with structured feedback.

pub mod compositor;
pub mod corpus;
pub mod experiment;
pub mod feedback;
pub mod geometry;
pub mod grader;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod recommender;
pub mod retrieval;
pub mod synthetic;

pub use geometry::{area, clamp_to_canvas, contains, intersection_area, BBox, EPS};
pub use layout::{Canvas, Element, ElementType, Layout, ProtectedRegion};
pub use metrics::{evaluate, evaluate_corpus, CorpusReport, MetricReport};
pub use pipeline::{run_pipeline, Mode, PipelineConfig, PipelineContext, PipelineOutput, RunTrace};
