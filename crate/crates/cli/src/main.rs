use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use layoutloop_core::compositor::{composite, FsAssetResolver};
use layoutloop_core::corpus::{
    ingest_corpus, load_index, load_layout_entry, save_index, EntryFailure, Manifest,
};
use layoutloop_core::experiment::{
    load_test_canvases, run_experiment, write_corpus_report, write_experiment,
};
use layoutloop_core::pipeline::ExternalRecommender;
use layoutloop_core::raster::RasterImage;
use layoutloop_core::recommender::Transport;
use layoutloop_core::retrieval::{build_index, BaselineEmbedder, EmbeddingTable};
use layoutloop_core::synthetic::{generate_suite, SeededProposer, SuiteSpec};
use layoutloop_core::{evaluate_corpus, run_pipeline, BBox, Layout, Mode, PipelineConfig, PipelineContext};

/// Retrieval-guided poster layout generation with a grade and refine loop.
#[derive(Parser)]
#[command(name = "layoutloop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index operations.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Generate a layout for one canvas.
    Generate(GenerateArgs),
    /// Compute corpus metrics for a manifest of layouts.
    Evaluate {
        #[arg(long)]
        layouts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a layout over a canvas image.
    Composite {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        canvas: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline over a test manifest and write metric tables.
    Experiment(ExperimentArgs),
    /// Write the seeded synthetic poster suite.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SuiteSpec::default().seed)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    /// Ingest a corpus manifest and persist its embedding index.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Precomputed embeddings (`id<TAB>v1,v2,...`) used instead of the
        /// baseline embedder where present.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    canvas: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Canvas id used in the trace; defaults to the file stem.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also run the recommender-only and grader-only configurations.
    #[arg(long)]
    ablation: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    RecommenderOnly,
    WithGrader,
    Full,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::RecommenderOnly => Mode::RecommenderOnly,
            ModeArg::WithGrader => Mode::WithGrader,
            ModeArg::Full => Mode::Full,
        }
    }
}

/// Flag overrides, applied on top of the config file.
#[derive(Args, Default)]
struct ConfigOverrides {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha_overlap: Option<f64>,
    #[arg(long)]
    alpha_alignment: Option<f64>,
    #[arg(long)]
    alpha_margins: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    t3: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Protected region as x,y,w,h.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    omega: Option<Vec<f64>>,
    #[arg(long)]
    external_endpoint: Option<String>,
    #[arg(long)]
    external_timeout_secs: Option<f64>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    occlusion_grid: Option<usize>,
    #[arg(long)]
    occlusion_threshold: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_moves: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    step_sizes: Option<Vec<f64>>,
    #[arg(long)]
    return_best: bool,
    #[arg(long)]
    record_timings: bool,
    /// Answer proposal requests with the seeded synthetic proposer instead
    /// of an HTTP endpoint.
    #[arg(long)]
    synthetic_proposer: Option<u64>,
}

impl ConfigOverrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(k => k);
        set!(alpha_overlap => weights.alpha_overlap);
        set!(alpha_alignment => weights.alpha_alignment);
        set!(alpha_margins => weights.alpha_margins);
        set!(margin => weights.margin);
        set!(t1 => thresholds.t1);
        set!(t2 => thresholds.t2);
        set!(t3 => thresholds.t3);
        set!(max_iterations => max_iterations);
        set!(rng_seed => rng_seed);
        set!(occlusion_grid => occlusion.grid);
        set!(occlusion_threshold => occlusion.threshold);
        set!(parallelism => parallelism);
        set!(max_moves => max_moves);
        set!(step_sizes => step_sizes);
        if let Some(o) = &self.omega {
            cfg.omega = Some(BBox::new(o[0], o[1], o[2], o[3]));
        }
        if let Some(endpoint) = &self.external_endpoint {
            let timeout_secs = cfg.external_recommender.as_ref().map_or(30.0, |e| e.timeout_secs);
            cfg.external_recommender = Some(ExternalRecommender {
                endpoint: endpoint.clone(),
                timeout_secs,
            });
        }
        if let (Some(t), Some(ext)) = (self.external_timeout_secs, cfg.external_recommender.as_mut()) {
            ext.timeout_secs = t;
        }
        cfg.return_best |= self.return_best;
        cfg.record_timings |= self.record_timings;
    }

    fn transport(&self) -> Option<SeededProposer> {
        self.synthetic_proposer.map(SeededProposer::new)
    }
}

fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn report_failures(failures: &[EntryFailure]) {
    for f in failures {
        eprintln!("skipped {}: {}", f.id, f.message);
    }
}

fn index_build(corpus: &Path, out: &Path, embeddings: Option<&Path>) -> Result<bool> {
    let table = embeddings
        .map(EmbeddingTable::load)
        .transpose()
        .context("loading precomputed embeddings")?;
    let report = ingest_corpus(corpus, &BaselineEmbedder, table.as_ref())?;
    report_failures(&report.failures);
    let n = report.entries.len();
    let index = build_index(report.entries)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_index(&index, out)?;
    println!("indexed {n} entries into {}", out.display());
    Ok(report.failures.is_empty())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    let index = load_index(&args.index)?;
    let canvas = RasterImage::load_png(&args.canvas)?;
    let id = args.id.clone().unwrap_or_else(|| {
        args.canvas
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "canvas".into())
    });
    let assets = FsAssetResolver { base_dir: ".".into() };
    let proposer = args.overrides.transport();
    let ctx = PipelineContext {
        index: &index,
        embedder: &BaselineEmbedder,
        assets: &assets,
        transport: proposer.as_ref().map(|p| p as &dyn Transport),
    };
    let out = run_pipeline(&id, &canvas, &ctx, &cfg, args.mode.into())?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("layout.json"), out.layout.to_json())?;
    out.composite.save_png(&args.out_dir.join("composite.png"))?;
    let mut trace = serde_json::to_string_pretty(&out.trace)?;
    trace.push('\n');
    std::fs::write(args.out_dir.join("trace.json"), trace)?;
    match out.trace.accepted_at() {
        Some(i) => println!("accepted at iteration {i}"),
        None => println!("not accepted after {} iterations", out.trace.iterations.len()),
    }
    Ok(())
}

fn evaluate(layouts: &Path, out: &Path) -> Result<bool> {
    let manifest = Manifest::load(layouts)?;
    let mut loaded = Vec::new();
    let mut failures = Vec::new();
    for e in &manifest.entries {
        let result = e
            .layout
            .as_deref()
            .ok_or_else(|| "entry has no layout".to_string())
            .and_then(|rel| load_layout_entry(&manifest, rel));
        match result {
            Ok(l) => loaded.push((e.id.clone(), l)),
            Err(message) => failures.push(EntryFailure {
                id: e.id.clone(),
                message,
            }),
        }
    }
    report_failures(&failures);
    let report = evaluate_corpus(&loaded)?;
    write_corpus_report(&report, out)?;
    let m = &report.means;
    println!(
        "{} layouts: ove={:.6} ali={:.6} und_l={} und_s={}",
        report.count,
        m.ove,
        m.ali,
        m.und_l.map_or("n/a".into(), |v| format!("{v:.6}")),
        m.und_s.map_or("n/a".into(), |v| format!("{v:.6}")),
    );
    Ok(failures.is_empty())
}

fn composite_cmd(layout: &Path, canvas: &Path, out: &Path) -> Result<()> {
    let l = Layout::load(layout)?;
    let hard: Vec<_> = l.validate().into_iter().filter(|v| !v.is_warning()).collect();
    if !hard.is_empty() {
        bail!("invalid layout: {hard:?}");
    }
    let base = layout.parent().map(Path::to_path_buf).unwrap_or_default();
    let img = composite(&RasterImage::load_png(canvas)?, &l, &FsAssetResolver { base_dir: base })?;
    img.save_png(out)?;
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> Result<bool> {
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    let index = load_index(&args.index)?;
    let (canvases, failures) = load_test_canvases(&args.test)?;
    report_failures(&failures);
    let assets = FsAssetResolver { base_dir: ".".into() };
    let proposer = args.overrides.transport();
    let ctx = PipelineContext {
        index: &index,
        embedder: &BaselineEmbedder,
        assets: &assets,
        transport: proposer.as_ref().map(|p| p as &dyn Transport),
    };
    let result = run_experiment(&canvases, &ctx, &cfg, args.ablation)?;
    write_experiment(&result, &args.out)?;
    for row in &result.rows {
        let m = &row.report.means;
        println!(
            "{:<17} ove={:.6} ali={:.6} und_l={} und_s={} accepted={:.2}",
            row.mode.label(),
            m.ove,
            m.ali,
            m.und_l.map_or("n/a".into(), |v| format!("{v:.6}")),
            m.und_s.map_or("n/a".into(), |v| format!("{v:.6}")),
            row.accepted_within(cfg.max_iterations),
        );
    }
    Ok(failures.is_empty())
}

fn synth(out: &Path, seed: u64) -> Result<()> {
    let suite = generate_suite(&SuiteSpec {
        seed,
        ..SuiteSpec::default()
    });
    let (corpus, test) = suite.write(out)?;
    println!("wrote {} and {}", corpus.display(), test.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Index {
            action: IndexAction::Build { corpus, out, embeddings },
        } => index_build(&corpus, &out, embeddings.as_deref()),
        Command::Generate(args) => generate(&args).map(|_| true),
        Command::Evaluate { layouts, out } => evaluate(&layouts, &out),
        Command::Composite { layout, canvas, out } => composite_cmd(&layout, &canvas, &out).map(|_| true),
        Command::Experiment(args) => experiment(&args),
        Command::Synth { out, seed } => synth(&out, seed).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
