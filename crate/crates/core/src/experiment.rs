//! Corpus-level runs: every test canvas through the pipeline, once per
//! configuration, then the four layout metrics over the results.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{CorpusError, EntryFailure, Manifest};
use crate::metrics::{evaluate_corpus, CorpusReport, MetricReport, MetricsError};
use crate::pipeline::{run_pipeline, Mode, PipelineConfig, PipelineContext, PipelineError, RunTrace};
use crate::raster::RasterImage;

#[derive(Debug, Clone)]
pub struct TestCanvas {
    pub id: String,
    pub image: RasterImage,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("canvas {id:?}: {source}")]
    Pipeline {
        id: String,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("writing {path}: {message}")]
    Io { path: String, message: String },
}

/// Loads every canvas image named in a test manifest.
pub fn load_test_canvases(
    manifest_path: &Path,
) -> Result<(Vec<TestCanvas>, Vec<EntryFailure>), CorpusError> {
    let manifest = Manifest::load(manifest_path)?;
    let mut canvases = Vec::new();
    let mut failures = Vec::new();
    for e in &manifest.entries {
        let loaded = e
            .image
            .as_deref()
            .ok_or_else(|| "entry has no image".to_string())
            .and_then(|rel| RasterImage::load_png(&manifest.resolve(rel)).map_err(|err| err.to_string()));
        match loaded {
            Ok(image) => canvases.push(TestCanvas {
                id: e.id.clone(),
                image,
            }),
            Err(message) => failures.push(EntryFailure {
                id: e.id.clone(),
                message,
            }),
        }
    }
    Ok((canvases, failures))
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeResult {
    pub mode: Mode,
    pub report: CorpusReport,
    pub traces: Vec<RunTrace>,
}

impl ModeResult {
    /// Share of canvases accepted within `max_iter` iterations.
    pub fn accepted_within(&self, max_iter: usize) -> f64 {
        let n = self
            .traces
            .iter()
            .filter(|t| t.accepted_at().is_some_and(|i| i <= max_iter))
            .count();
        n as f64 / self.traces.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ModeResult>,
}

impl ExperimentResult {
    pub fn row(&self, mode: Mode) -> Option<&ModeResult> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

pub fn run_mode(
    canvases: &[TestCanvas],
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    mode: Mode,
) -> Result<ModeResult, ExperimentError> {
    if canvases.is_empty() {
        return Err(MetricsError::EmptyCorpus.into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .expect("thread pool");
    let outputs: Vec<_> = pool.install(|| {
        canvases
            .par_iter()
            .map(|c| {
                run_pipeline(&c.id, &c.image, ctx, cfg, mode).map_err(|source| {
                    ExperimentError::Pipeline {
                        id: c.id.clone(),
                        source,
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let layouts: Vec<(String, _)> = canvases
        .iter()
        .zip(&outputs)
        .map(|(c, o)| (c.id.clone(), o.layout.clone()))
        .collect();
    let report = evaluate_corpus(&layouts)?;
    let mut traces: Vec<RunTrace> = outputs.into_iter().map(|o| o.trace).collect();
    traces.sort_by(|a, b| a.canvas_id.cmp(&b.canvas_id));
    Ok(ModeResult {
        mode,
        report,
        traces,
    })
}

/// Runs the full loop, or with `ablation` all three configurations.
pub fn run_experiment(
    canvases: &[TestCanvas],
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    ablation: bool,
) -> Result<ExperimentResult, ExperimentError> {
    let modes: &[Mode] = if ablation { &Mode::ALL } else { &[Mode::Full] };
    let rows = modes
        .iter()
        .map(|&m| run_mode(canvases, ctx, cfg, m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentResult { rows })
}

fn opt(v: Option<f64>, precision: Option<usize>) -> String {
    match (v, precision) {
        (None, _) => String::new(),
        (Some(x), Some(p)) => format!("{x:.p$}"),
        (Some(x), None) => x.to_string(),
    }
}

fn metric_fields(r: &MetricReport) -> [String; 4] {
    [r.ove.to_string(), r.ali.to_string(), opt(r.und_l, None), opt(r.und_s, None)]
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Per-layout metric table: `layout_id,ove,ali,und_l,und_s`.
pub fn corpus_csv(report: &CorpusReport) -> Vec<u8> {
    csv_bytes(
        &["layout_id", "ove", "ali", "und_l", "und_s"],
        report.layouts.iter().map(|(id, r)| {
            let mut row = vec![id.clone()];
            row.extend(metric_fields(r));
            row
        }),
    )
}

/// One row per configuration with the corpus means.
pub fn summary_csv(result: &ExperimentResult) -> Vec<u8> {
    csv_bytes(
        &["configuration", "layouts", "ove", "ali", "und_l", "und_s"],
        result.rows.iter().map(|r| {
            let m = &r.report.means;
            vec![
                r.mode.label().to_string(),
                r.report.count.to_string(),
                format!("{:.6}", m.ove),
                format!("{:.6}", m.ali),
                opt(m.und_l, Some(6)),
                opt(m.und_s, Some(6)),
            ]
        }),
    )
}

pub fn per_layout_csv(result: &ExperimentResult) -> Vec<u8> {
    csv_bytes(
        &["configuration", "layout_id", "ove", "ali", "und_l", "und_s"],
        result.rows.iter().flat_map(|r| {
            r.report.layouts.iter().map(move |(id, m)| {
                let mut row = vec![r.mode.label().to_string(), id.clone()];
                row.extend(metric_fields(m));
                row
            })
        }),
    )
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    std::fs::write(path, bytes).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Writes `report.json` and `report.csv` for a plain corpus evaluation.
pub fn write_corpus_report(report: &CorpusReport, out_dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    write(&out_dir.join("report.json"), &pretty(report))?;
    write(&out_dir.join("report.csv"), &corpus_csv(report))
}

/// Writes `report.csv`, `per_layout.csv`, `report.json` and `trace.json`.
pub fn write_experiment(result: &ExperimentResult, out_dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let reports: BTreeMap<&str, &CorpusReport> = result
        .rows
        .iter()
        .map(|r| (r.mode.label(), &r.report))
        .collect();
    let traces: BTreeMap<&str, &Vec<RunTrace>> = result
        .rows
        .iter()
        .map(|r| (r.mode.label(), &r.traces))
        .collect();
    write(&out_dir.join("report.csv"), &summary_csv(result))?;
    write(&out_dir.join("per_layout.csv"), &per_layout_csv(result))?;
    write(&out_dir.join("report.json"), &pretty(&reports))?;
    write(&out_dir.join("trace.json"), &pretty(&traces))
}
