//! Subcommand implementations. Progress goes to standard error; data goes to
//! files and standard output.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{anyhow, bail, Context, Result};
use debias_core::{
    data, enumerate_grid, evaluate_fairness, interventions, nli, stereoset, synthetic,
    DebiasConfig, EncoderConfig, EncoderModel, GenderPairSet, HookSet, NliExample, NliProbe,
    SubspaceSet, TriplePair, Vocab,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::report::{self, Report, ReportRow, SCHEMA_VERSION};

/// Resolved run inputs shared by the evaluation commands.
pub struct RunContext {
    pub model_dir: PathBuf,
    pub pairs: Option<PathBuf>,
    pub stereoset: Option<PathBuf>,
    pub occupations: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub top_frac: f64,
    pub viability_ratio: f64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub seed: u64,
}

impl RunContext {
    pub fn subspace_dir(&self) -> PathBuf {
        self.out_dir.join("subspaces")
    }

    fn load_model(&self) -> Result<EncoderModel> {
        if !self.model_dir.join("manifest.txt").exists() {
            bail!(
                "model not found at {}; run `debias gen-model` or point --model at a weight directory",
                self.model_dir.display()
            );
        }
        Ok(EncoderModel::load(&self.model_dir)?)
    }

    fn load_pairs(&self) -> Result<GenderPairSet> {
        match &self.pairs {
            Some(path) => Ok(GenderPairSet::load(path)?),
            None => Ok(data::default_gender_pairs()),
        }
    }

    fn load_occupations(&self) -> Result<Vec<String>> {
        match &self.occupations {
            Some(path) => Ok(nli::read_occupations(path)?),
            None => Ok(data::default_occupations()),
        }
    }

    fn load_templates(&self) -> Result<Vec<nli::NliTemplate>> {
        match &self.templates {
            Some(path) => Ok(nli::read_templates(path)?),
            None => Ok(data::default_templates()?),
        }
    }

    fn load_stereoset(&self) -> Result<Vec<TriplePair>> {
        let path = self
            .stereoset
            .as_ref()
            .ok_or_else(|| anyhow!("--stereoset <file> is required for this command"))?;
        Ok(stereoset::read_triples(path)?)
    }

    fn load_benchmark(&self) -> Result<Vec<NliExample>> {
        let path = self
            .benchmark
            .as_ref()
            .ok_or_else(|| anyhow!("--benchmark <file> is required for this command"))?;
        Ok(nli::read_benchmark(path)?)
    }

    fn load_subspaces(&self) -> Result<SubspaceSet> {
        let dir = self.subspace_dir();
        if !dir.join("manifest.txt").exists() {
            bail!(
                "subspace cache not found at {}; run `debias estimate` first",
                dir.display()
            );
        }
        Ok(SubspaceSet::load(&dir)?)
    }

    fn install_pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            builder = builder.num_threads(n);
        }
        Ok(builder.build()?)
    }

    fn write_manifest(&self, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct RunManifest<'a> {
            schema_version: u32,
            command: &'a str,
            seed: u64,
            model: String,
            pairs: Option<String>,
            stereoset: Option<String>,
            occupations: Option<String>,
            templates: Option<String>,
            benchmark: Option<String>,
            subspace_cache: String,
            top_frac: f64,
            viability_ratio: f64,
            workers: Option<usize>,
        }
        let disp = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            command,
            seed: self.seed,
            model: self.model_dir.display().to_string(),
            pairs: disp(&self.pairs),
            stereoset: disp(&self.stereoset),
            occupations: disp(&self.occupations),
            templates: disp(&self.templates),
            benchmark: disp(&self.benchmark),
            subspace_cache: self.subspace_dir().display().to_string(),
            top_frac: self.top_frac,
            viability_ratio: self.viability_ratio,
            workers: self.workers,
        };
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// `gen-model`: writes a deterministically seeded toy model.
pub fn cmd_gen_model(
    ctx: &RunContext,
    seed: u64,
    d_model: usize,
    layers: usize,
    heads: usize,
    max_len: usize,
    d_ff: Option<usize>,
) -> Result<()> {
    let cfg = EncoderConfig {
        d_model,
        n_layers: layers,
        n_heads: heads,
        d_ff: d_ff.unwrap_or(4 * d_model),
        max_len,
    };
    cfg.validate()?;
    let vocab = Vocab::new(data::default_vocab_tokens())?;
    let model = synthetic::seeded_model_with(seed, cfg, vocab);
    model.save(&ctx.model_dir)?;
    eprintln!(
        "wrote seeded model (seed {seed}, d_model {d_model}, {layers} layers, {heads} heads) to {}",
        ctx.model_dir.display()
    );
    Ok(())
}

/// `estimate`: estimates and caches every subspace the grid can need, then
/// prints the per-location variance-explained weights.
pub fn cmd_estimate(ctx: &RunContext) -> Result<()> {
    let model = ctx.load_model()?;
    let pairs = ctx.load_pairs()?;
    ctx.write_manifest("estimate")?;
    let pool = ctx.install_pool()?;
    eprintln!(
        "estimating subspaces from {} pairs at {} locations",
        pairs.pairs().len(),
        3 + model.n_heads() * 3
    );
    let set = pool.install(|| SubspaceSet::estimate_all(&model, &pairs))?;
    let dir = ctx.subspace_dir();
    set.save(&dir)?;
    for loc in set.locations() {
        let sub = set.get(loc).unwrap();
        let weights: Vec<String> = sub
            .basis
            .weights()
            .iter()
            .map(|w| format!("{w:.6}"))
            .collect();
        println!("{loc} {}", weights.join(" "));
    }
    eprintln!("cached {} subspaces at {}", set.len(), dir.display());
    Ok(())
}

struct EvalInputs {
    model: EncoderModel,
    subspaces: SubspaceSet,
    triples: Vec<TriplePair>,
    probes: Vec<NliProbe>,
    benchmark: Vec<NliExample>,
}

impl EvalInputs {
    fn gather(ctx: &RunContext) -> Result<Self> {
        let model = ctx.load_model()?;
        let subspaces = ctx.load_subspaces()?;
        let triples = ctx.load_stereoset()?;
        let occupations = ctx.load_occupations()?;
        let templates = ctx.load_templates()?;
        let probes = nli::generate_probes(&occupations, &templates)?;
        let benchmark = ctx.load_benchmark()?;
        Ok(EvalInputs {
            model,
            subspaces,
            triples,
            probes,
            benchmark,
        })
    }

    fn evaluate(
        &self,
        ctx: &RunContext,
        hookset: &HookSet,
        base_benchmark_acc: f64,
    ) -> Result<ReportRow> {
        Ok(self.evaluate_scored(ctx, hookset, base_benchmark_acc)?.0)
    }

    fn evaluate_scored(
        &self,
        ctx: &RunContext,
        hookset: &HookSet,
        base_benchmark_acc: f64,
    ) -> Result<(ReportRow, Vec<stereoset::TripleScores>)> {
        let scores = stereoset::score_triples(&self.model, hookset, &self.triples)?;
        let s = stereoset::strength(&scores, ctx.top_frac)?;
        let d = stereoset::distance(&scores, ctx.top_frac)?;
        let ss = stereoset::ss_score(&scores)?;
        let fairness = evaluate_fairness(
            &self.model,
            hookset,
            &self.probes,
            &self.benchmark,
            base_benchmark_acc,
            ctx.viability_ratio,
        )?;
        let row = ReportRow {
            config: hookset.config.to_string(),
            s,
            d,
            ss,
            parity: fairness.parity,
            accuracy: fairness.accuracy,
            eta: fairness.eta,
            benchmark_acc: fairness.benchmark_accuracy,
            viable: fairness.viable,
        };
        Ok((row, scores))
    }
}

fn report_for(ctx: &RunContext, rows: Vec<ReportRow>) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        seed: ctx.seed,
        top_frac: ctx.top_frac,
        viability_ratio: ctx.viability_ratio,
        rows,
    }
}

/// `eval --config <file>`: evaluates the baseline plus one configuration.
pub fn cmd_eval(ctx: &RunContext, config_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let config = DebiasConfig::parse_str(text.trim())?;
    let inputs = EvalInputs::gather(ctx)?;
    ctx.write_manifest("eval")?;
    let pool = ctx.install_pool()?;

    let (baseline, row, scores) = pool.install(
        || -> Result<(ReportRow, ReportRow, Vec<stereoset::TripleScores>)> {
            eprintln!("evaluating baseline");
            let base = inputs.evaluate(ctx, &HookSet::baseline(), 1.0)?;
            let base = ReportRow {
                viable: true,
                ..base
            };
            eprintln!("evaluating {config}");
            let hookset = interventions::bind(config, &inputs.model, &inputs.subspaces)?;
            let (row, scores) = inputs.evaluate_scored(ctx, &hookset, base.benchmark_acc)?;
            Ok((base, row, scores))
        },
    )?;

    std::fs::create_dir_all(&ctx.out_dir)?;
    stereoset::write_scores_csv(&ctx.out_dir.join("scores.csv"), &scores)?;
    let report = report_for(ctx, vec![baseline, row.clone()]);
    report::write_json(&ctx.out_dir.join("eval.json"), &report)?;
    println!(
        "{} S={:.6} D={:.6} SS={:.6} parity={:.6} accuracy={:.6} eta={:.6} benchmark_acc={:.6} viable={}",
        row.config, row.s, row.d, row.ss, row.parity, row.accuracy, row.eta, row.benchmark_acc, row.viable
    );
    Ok(())
}

/// `grid`: the baseline plus all 74 grid configurations, written as CSV and
/// JSON plus a best-per-level summary.
pub fn cmd_grid(ctx: &RunContext) -> Result<()> {
    let inputs = EvalInputs::gather(ctx)?;
    ctx.write_manifest("grid")?;
    let pool = ctx.install_pool()?;

    let rows = pool.install(|| -> Result<Vec<ReportRow>> {
        eprintln!("evaluating baseline");
        let base = inputs.evaluate(ctx, &HookSet::baseline(), 1.0)?;
        let base = ReportRow {
            viable: true,
            ..base
        };
        let base_acc = base.benchmark_acc;
        let grid = enumerate_grid();
        let done = AtomicUsize::new(0);
        let total = grid.len();
        let mut rows: Vec<ReportRow> = grid
            .par_iter()
            .map(|config| {
                let hookset = interventions::bind(*config, &inputs.model, &inputs.subspaces)?;
                let row = inputs.evaluate(ctx, &hookset, base_acc)?;
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                eprintln!("[{k}/{total}] {config}");
                Ok(row)
            })
            .collect::<Result<_>>()?;
        rows.insert(0, base);
        Ok(rows)
    })?;

    std::fs::create_dir_all(&ctx.out_dir)?;
    report::write_csv(&ctx.out_dir.join("report.csv"), &rows)?;
    report::write_json(&ctx.out_dir.join("report.json"), &report_for(ctx, rows.clone()))?;
    let summary = report::best_per_level(&rows);
    let summary_path = ctx.out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;

    for level in &summary {
        println!(
            "{}: min S {:.4} ({}); min D {:.4} ({}); max viable eta {}",
            level.level,
            level.best_strength.s,
            level.best_strength.config,
            level.best_distance.d,
            level.best_distance.config,
            level
                .best_fairness_viable
                .as_ref()
                .map(|r| format!("{:.4} ({})", r.eta, r.config))
                .unwrap_or_else(|| "none viable".to_string()),
        );
    }
    eprintln!(
        "wrote {} rows to {}",
        75,
        ctx.out_dir.join("report.csv").display()
    );
    Ok(())
}

/// `correlate --report <file>`: Spearman correlation between the S and eta
/// columns of a report.
pub fn cmd_correlate(ctx: &RunContext, report_path: &Path) -> Result<()> {
    let rows = report::read_report(report_path)?;
    if rows.len() < 3 {
        bail!("report has {} rows; need at least 3", rows.len());
    }
    let s: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let eta: Vec<f64> = rows.iter().map(|r| r.eta).collect();
    let corr = stereoset::spearman(&s, &eta)?;

    #[derive(Serialize)]
    struct CorrelationOut {
        schema_version: u32,
        seed: u64,
        rho: f64,
        p_value: f64,
        n: usize,
    }
    std::fs::create_dir_all(&ctx.out_dir)?;
    let out = CorrelationOut {
        schema_version: SCHEMA_VERSION,
        seed: ctx.seed,
        rho: corr.rho,
        p_value: corr.p_value,
        n: corr.n,
    };
    let path = ctx.out_dir.join("correlation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&out)?)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("rho={:.6} p={:.6} n={}", corr.rho, corr.p_value, corr.n);
    Ok(())
}
