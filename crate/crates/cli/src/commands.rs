use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qfs_forge_core::annotate::{AnnotationOutcome, Annotator};
use qfs_forge_core::compose::{compose_summary, ClusterRecord, ComposedRecord};
use qfs_forge_core::corpus::{
    load_corpus, load_triplets, read_jsonl, write_jsonl, write_triplets, Domain, QueryMode,
};
use qfs_forge_core::report::render_table;
use qfs_forge_core::rouge::{evaluate_run, Headline};
use qfs_forge_core::stats::{corpus_stats_with, CorpusStats, NtpMode};
use qfs_forge_core::taxonomy::{
    aggregate_distribution, classify_query, render_distribution_table, DistributionRow,
    QueryTypeDistribution,
};
use qfs_forge_core::tokenize::token_count;
use qfs_forge_core::unify::{template_fallback, unify_corpus, PromptedQueryGenerator};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig, UnifyMethod};

/// The run finished but too many pairs failed.
#[derive(Debug)]
pub struct CeilingExceeded {
    pub rate: f64,
    pub ceiling: f64,
}

impl std::fmt::Display for CeilingExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "failure rate {:.4} exceeds ceiling {:.4}",
            self.rate, self.ceiling
        )
    }
}

impl std::error::Error for CeilingExceeded {}

fn required(
    flag: Option<PathBuf>,
    fallback: &Option<PathBuf>,
    name: &str,
) -> anyhow::Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| ConfigError(format!("missing {name} path (flag or [paths].{name})")).into())
}

/// Refuses to write over any of the inputs.
fn guard_output(output: &Path, inputs: &[&Path]) -> anyhow::Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let out = canon(output);
    if inputs.iter().any(|i| canon(i) == out) {
        return Err(ConfigError(format!(
            "output {} would overwrite an input",
            output.display()
        ))
        .into());
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub struct AnnotateArgs {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub failures: Option<PathBuf>,
    pub failure_ceiling: Option<f64>,
}

pub fn annotate(cfg: &RunConfig, args: AnnotateArgs) -> anyhow::Result<()> {
    let input = required(args.input, &cfg.paths.input, "input")?;
    let output = required(args.output, &cfg.paths.output, "output")?;
    let failures = args
        .failures
        .or_else(|| cfg.paths.failures.clone())
        .unwrap_or_else(|| output.with_extension("failures.jsonl"));
    let ceiling = args.failure_ceiling.unwrap_or(cfg.annotate.failure_ceiling);
    if !(0.0..=1.0).contains(&ceiling) {
        return Err(ConfigError("failure ceiling must be within [0, 1]".into()).into());
    }
    guard_output(&output, &[&input])?;
    guard_output(&failures, &[&input, &output])?;

    let prompts = cfg.prompt_set()?;
    let backend = cfg.backend()?;
    let pairs = load_corpus(&input)?;
    let annotator = Annotator::new(&prompts, backend.as_ref(), cfg.annotator());
    let run = annotator.annotate_corpus(&pairs, cfg.parallelism())?;

    let (ok, failed): (Vec<AnnotationOutcome>, Vec<AnnotationOutcome>) =
        run.outcomes.into_iter().partition(AnnotationOutcome::is_ok);
    let triplets: Vec<_> = ok.into_iter().filter_map(|o| o.triplet).collect();
    write_triplets(&triplets, &output)?;
    write_jsonl(&failed, &failures)?;

    let s = &run.summary;
    println!(
        "{}",
        render_table(&[
            vec![
                "pairs",
                "ok",
                "parse_mismatch",
                "backend_error",
                "failure_rate"
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                s.total().to_string(),
                s.ok.to_string(),
                s.parse_mismatch.to_string(),
                s.backend_error.to_string(),
                format!("{:.4}", s.failure_rate()),
            ],
        ])
    );
    if s.failure_rate() > ceiling {
        return Err(CeilingExceeded {
            rate: s.failure_rate(),
            ceiling,
        }
        .into());
    }
    Ok(())
}

pub struct ClassifyArgs {
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Re-classifies every query; rows are per input file and mode.
pub fn classify(cfg: &RunConfig, args: ClassifyArgs) -> anyhow::Result<()> {
    let inputs = if args.inputs.is_empty() {
        vec![required(None, &cfg.paths.input, "input")?]
    } else {
        args.inputs
    };
    let output = required(args.output, &cfg.paths.output, "output")?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    guard_output(&output, &refs)?;

    let mut rows: Vec<(String, String, QueryTypeDistribution)> = Vec::new();
    for path in &inputs {
        let label = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        let mut by_mode: BTreeMap<String, Vec<_>> = BTreeMap::new();
        for t in load_triplets(path)? {
            by_mode
                .entry(t.mode.to_string())
                .or_default()
                .extend(t.queries.iter().map(|q| classify_query(q)));
        }
        for (mode, types) in by_mode {
            let dist =
                aggregate_distribution(&types).with_context(|| format!("{}", path.display()))?;
            rows.push((label.clone(), mode, dist));
        }
    }
    if rows.is_empty() {
        bail!("no queries found in the inputs");
    }
    let records: Vec<DistributionRow> = rows
        .iter()
        .map(|(c, m, d)| DistributionRow::new(c, m, d))
        .collect();
    write_jsonl(&records, &output)?;
    println!("{}", render_distribution_table(&rows));
    Ok(())
}

pub struct StatsArgs {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub label: Option<String>,
    pub ntp_types: bool,
}

#[derive(Serialize)]
struct StatsReport<'a> {
    corpus: &'a str,
    #[serde(flatten)]
    stats: &'a CorpusStats,
}

pub fn stats(cfg: &RunConfig, args: StatsArgs) -> anyhow::Result<()> {
    let input = required(args.input, &cfg.paths.input, "input")?;
    let output = required(args.output, &cfg.paths.output, "output")?;
    guard_output(&output, &[&input])?;
    let label = args.label.unwrap_or_else(|| {
        input
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
    });
    let mode = if args.ntp_types {
        NtpMode::Types
    } else {
        NtpMode::Occurrence
    };
    let triplets = load_triplets(&input)?;
    let stats = corpus_stats_with(&triplets, mode)?;
    write_json(
        &StatsReport {
            corpus: &label,
            stats: &stats,
        },
        &output,
    )?;
    println!("{}", stats.render(&label));
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RawQueryRecord {
    id: String,
    document: String,
    query: String,
}

#[derive(Debug, Serialize)]
struct UnifiedRecord<'a> {
    id: &'a str,
    document: &'a str,
    query: String,
    raw_query: &'a str,
}

pub struct UnifyArgs {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

pub fn unify(cfg: &RunConfig, args: UnifyArgs) -> anyhow::Result<()> {
    let input = required(args.input, &cfg.paths.input, "input")?;
    let output = required(args.output, &cfg.paths.output, "output")?;
    guard_output(&output, &[&input])?;
    let records: Vec<RawQueryRecord> = read_jsonl(&input)?.into_iter().map(|(_, r)| r).collect();

    let queries: Vec<String> = if !cfg.unify.format.needs_unification() {
        records.iter().map(|r| r.query.clone()).collect()
    } else {
        match cfg.unify.method {
            UnifyMethod::Template => {
                let style = cfg.template_style();
                records
                    .iter()
                    .map(|r| {
                        template_fallback(&r.query, style)
                            .with_context(|| format!("record {}", r.id))
                    })
                    .collect::<anyhow::Result<_>>()?
            }
            UnifyMethod::Generated => {
                let domain = cfg.unify.domain.unwrap_or(Domain::News);
                let spec = cfg.prompt_spec(domain, QueryMode::Wh)?;
                let generator = PromptedQueryGenerator::new(cfg.backend()?, spec)
                    .with_params(cfg.annotate.params.clone())
                    .with_max_prompt_tokens(cfg.annotate.max_prompt_tokens);
                let items: Vec<(String, String)> = records
                    .iter()
                    .map(|r| (r.document.clone(), r.query.clone()))
                    .collect();
                unify_corpus(&items, &generator, cfg.parallelism())?
                    .into_iter()
                    .zip(&records)
                    .map(|(q, r)| q.with_context(|| format!("record {}", r.id)))
                    .collect::<anyhow::Result<_>>()?
            }
        }
    };

    let out: Vec<UnifiedRecord> = records
        .iter()
        .zip(queries)
        .map(|(r, query)| UnifiedRecord {
            id: &r.id,
            document: &r.document,
            query,
            raw_query: &r.query,
        })
        .collect();
    write_jsonl(&out, &output)?;
    let mut table = vec![vec![
        "id".to_string(),
        "raw query".to_string(),
        "query".to_string(),
    ]];
    table.extend(out.iter().map(|u| {
        vec![
            u.id.to_string(),
            u.raw_query.to_string(),
            u.query.replace('\n', " | "),
        ]
    }));
    println!("{}", render_table(&table));
    Ok(())
}

pub struct ComposeArgs {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub budget: Option<usize>,
    pub threshold: Option<f64>,
}

pub fn compose(cfg: &RunConfig, args: ComposeArgs) -> anyhow::Result<()> {
    let input = required(args.input, &cfg.paths.input, "input")?;
    let output = required(args.output, &cfg.paths.output, "output")?;
    guard_output(&output, &[&input])?;
    let mut ccfg = cfg.compose.clone();
    if let Some(b) = args.budget {
        ccfg.token_budget = b;
    }
    if let Some(t) = args.threshold {
        ccfg.overlap_threshold = t;
    }
    ccfg.validate().map_err(|e| ConfigError(e.to_string()))?;

    let backend = cfg.backend()?;
    let clusters: Vec<ClusterRecord> = read_jsonl(&input)?.into_iter().map(|(_, c)| c).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism())
        .build()?;
    let mut out = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let composed = pool
            .install(|| compose_summary(&c.documents, &c.query, &ccfg, backend.as_ref()))
            .with_context(|| format!("cluster {}", c.cluster_id))?;
        out.push(ComposedRecord {
            cluster_id: c.cluster_id.clone(),
            summary: composed.summary,
            selected_doc_indices: composed.selected_doc_indices,
            truncated: composed.truncated,
        });
    }
    write_jsonl(&out, &output)?;
    let mut table = vec![["cluster", "tokens", "selected", "truncated"]
        .map(String::from)
        .to_vec()];
    table.extend(out.iter().map(|r| {
        vec![
            r.cluster_id.clone(),
            token_count(&r.summary).to_string(),
            format!("{:?}", r.selected_doc_indices),
            r.truncated.to_string(),
        ]
    }));
    println!("{}", render_table(&table));
    Ok(())
}

pub struct EvaluateArgs {
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub headline: Headline,
}

pub fn evaluate(cfg: &RunConfig, args: EvaluateArgs) -> anyhow::Result<()> {
    let predictions = required(args.predictions, &cfg.paths.predictions, "predictions")?;
    let references = required(args.references, &cfg.paths.references, "references")?;
    let output = required(args.output, &cfg.paths.output, "output")?;
    guard_output(&output, &[&predictions, &references])?;
    let report = evaluate_run(&predictions, &references, args.headline)?;
    write_json(&report, &output)?;
    println!("{}", report.render());
    Ok(())
}
