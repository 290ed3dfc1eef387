//! Offline benchmarking: graded-relevance ranking metrics at cutoffs,
//! reciprocal rank, average precision, coverage and rank-range buckets,
//! semantic-certainty scoring, and latency aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dense::{DenseIndex, Embedder};
use crate::error::{Error, Result};
use crate::query::FilterMap;
use crate::rank::{Mode, SearchEngine};

/// Graded relevance judgments keyed by query id and external document id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        QrelSet::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, relevance: u32) {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), relevance);
    }

    /// Parse TREC-style lines: `query_id iteration doc_id relevance`,
    /// whitespace-separated. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<QrelSet> {
        let mut set = QrelSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 4 whitespace-separated fields, got {}", fields.len()),
                ));
            }
            let relevance: u32 = fields[3].parse().map_err(|_| {
                Error::parse(line_no, format!("relevance {:?} is not a non-negative integer", fields[3]))
            })?;
            set.insert(fields[0], fields[2], relevance);
        }
        Ok(set)
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.judgments.keys()
    }

    pub fn judgments_for(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub precision: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub reciprocal_rank: f64,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cutoffs: Vec<usize>,
    pub per_query: Vec<QueryMetrics>,
    pub mean_precision: BTreeMap<usize, f64>,
    pub mean_recall: BTreeMap<usize, f64>,
    pub mean_ndcg: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub map: f64,
    /// Fraction of queries with at least one relevant doc in the top 100.
    pub coverage: f64,
    /// Macro-averaged fraction of each query's relevant docs retrieved in
    /// the disjoint rank ranges [1,10], (10,20], (20,50], (50,100].
    pub rank_buckets: BTreeMap<String, f64>,
}

const BUCKETS: [(&str, usize, usize); 4] = [
    ("top_10", 1, 10),
    ("top_20", 11, 20),
    ("top_50", 21, 50),
    ("top_100", 51, 100),
];

/// Compute ranking metrics for a run (query id → ranked external doc ids).
///
/// Precision/Recall/MRR/MAP use binary relevance (grade > 0); nDCG uses
/// exponential gain `2^rel − 1` with `1/log2(i+1)` discount and an ideal
/// ranking over the judged documents. Unjudged documents count as
/// non-relevant. Every run query must be judged.
pub fn compute_metrics(
    run: &BTreeMap<String, Vec<String>>,
    qrels: &QrelSet,
    cutoffs: &[usize],
) -> Result<MetricsReport> {
    if cutoffs.is_empty() {
        return Err(Error::EmptyCutoffs);
    }
    if cutoffs.iter().any(|&k| k == 0) {
        return Err(Error::RangeError("cutoffs must be ≥ 1".into()));
    }
    let mut cutoffs: Vec<usize> = cutoffs.to_vec();
    cutoffs.sort_unstable();
    cutoffs.dedup();

    let mut per_query = Vec::with_capacity(run.len());
    let mut covered = 0usize;
    let mut bucket_sums: BTreeMap<&str, f64> = BUCKETS.iter().map(|&(n, _, _)| (n, 0.0)).collect();

    for (query_id, ranked) in run {
        let judged = qrels
            .judgments_for(query_id)
            .ok_or_else(|| Error::MissingQrels(query_id.clone()))?;
        let grade = |doc: &str| judged.get(doc).copied().unwrap_or(0);
        let n_relevant = judged.values().filter(|&&r| r > 0).count();

        let mut precision = BTreeMap::new();
        let mut recall = BTreeMap::new();
        let mut ndcg = BTreeMap::new();
        for &k in &cutoffs {
            let hits = ranked.iter().take(k).filter(|d| grade(d) > 0).count();
            precision.insert(k, hits as f64 / k as f64);
            recall.insert(k, if n_relevant == 0 { 0.0 } else { hits as f64 / n_relevant as f64 });

            let dcg: f64 = ranked
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, d)| gain(grade(d)) / ((i + 2) as f64).log2())
                .sum();
            let mut ideal: Vec<u32> = judged.values().copied().collect();
            ideal.sort_unstable_by(|a, b| b.cmp(a));
            let idcg: f64 = ideal
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, &rel)| gain(rel) / ((i + 2) as f64).log2())
                .sum();
            ndcg.insert(k, if idcg == 0.0 { 0.0 } else { dcg / idcg });
        }

        let reciprocal_rank = ranked
            .iter()
            .position(|d| grade(d) > 0)
            .map_or(0.0, |p| 1.0 / (p + 1) as f64);

        let average_precision = if n_relevant == 0 {
            0.0
        } else {
            let mut hits = 0usize;
            let mut sum = 0.0;
            for (i, doc) in ranked.iter().enumerate() {
                if grade(doc) > 0 {
                    hits += 1;
                    sum += hits as f64 / (i + 1) as f64;
                }
            }
            sum / n_relevant as f64
        };

        if ranked.iter().take(100).any(|d| grade(d) > 0) {
            covered += 1;
        }
        if n_relevant > 0 {
            for &(name, lo, hi) in &BUCKETS {
                let in_bucket = ranked
                    .iter()
                    .enumerate()
                    .filter(|&(i, d)| i + 1 >= lo && i + 1 <= hi && grade(d) > 0)
                    .count();
                *bucket_sums.get_mut(name).unwrap() += in_bucket as f64 / n_relevant as f64;
            }
        }

        per_query.push(QueryMetrics {
            query_id: query_id.clone(),
            precision,
            recall,
            ndcg,
            reciprocal_rank,
            average_precision,
        });
    }

    let n = per_query.len().max(1) as f64;
    let mean_over = |pick: &dyn Fn(&QueryMetrics) -> f64| {
        per_query.iter().map(|q| pick(q)).sum::<f64>() / n
    };
    let mean_at = |pick: &dyn Fn(&QueryMetrics, usize) -> f64| -> BTreeMap<usize, f64> {
        cutoffs
            .iter()
            .map(|&k| (k, per_query.iter().map(|q| pick(q, k)).sum::<f64>() / n))
            .collect()
    };

    Ok(MetricsReport {
        mean_precision: mean_at(&|q, k| q.precision[&k]),
        mean_recall: mean_at(&|q, k| q.recall[&k]),
        mean_ndcg: mean_at(&|q, k| q.ndcg[&k]),
        mrr: mean_over(&|q| q.reciprocal_rank),
        map: mean_over(&|q| q.average_precision),
        coverage: covered as f64 / n,
        rank_buckets: bucket_sums.iter().map(|(&k, &v)| (k.to_string(), v / n)).collect(),
        cutoffs,
        per_query,
    })
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertaintyClass {
    Ambiguous,
    Conceptual,
    Factual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyThresholds {
    /// Scores below this are ambiguous.
    pub conceptual: f64,
    /// Scores at or above this are factual.
    pub factual: f64,
}

impl Default for CertaintyThresholds {
    fn default() -> Self {
        CertaintyThresholds { conceptual: 0.60, factual: 0.765 }
    }
}

pub fn classify_certainty(certainty: f64, thresholds: &CertaintyThresholds) -> CertaintyClass {
    if certainty >= thresholds.factual {
        CertaintyClass::Factual
    } else if certainty >= thresholds.conceptual {
        CertaintyClass::Conceptual
    } else {
        CertaintyClass::Ambiguous
    }
}

/// Semantic certainty of a parsed query in [0,1].
///
/// Density is the mean cosine between the main-query embedding
/// (`reformulations[0]`) and its k nearest stored chunk vectors, clamped
/// to [0,1]. Stability is 1.0 for a single reformulation; otherwise the
/// length of the mean of the unit reformulation embeddings (1 − dispersion).
/// Certainty blends both equally.
pub fn certainty_score(
    reformulations: &[String],
    embedder: &dyn Embedder,
    dense_index: &DenseIndex,
    k: usize,
) -> Result<f64> {
    if k == 0 || reformulations.is_empty() {
        return Err(Error::RangeError("certainty needs k ≥ 1 and ≥ 1 reformulation".into()));
    }
    if dense_index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let query_vec = embedder.embed(&reformulations[0]);
    let neighbors = dense_index.knn_exact(&query_vec, None, k)?;
    let density = if neighbors.is_empty() {
        0.0
    } else {
        let mean = neighbors.iter().map(|&(_, cos)| cos).sum::<f64>() / neighbors.len() as f64;
        mean.clamp(0.0, 1.0)
    };

    let stability = if reformulations.len() == 1 {
        1.0
    } else {
        let dim = dense_index.dim();
        let mut mean = vec![0.0f64; dim];
        for text in reformulations {
            let v = embedder.embed(text);
            for (m, x) in mean.iter_mut().zip(&v) {
                *m += f64::from(*x);
            }
        }
        let n = reformulations.len() as f64;
        (mean.iter().map(|m| (m / n) * (m / n)).sum::<f64>()).sqrt().clamp(0.0, 1.0)
    };

    Ok(0.5 * density + 0.5 * stability)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCertainty {
    pub query_id: String,
    pub certainty: f64,
    pub class: CertaintyClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertaintyReport {
    pub thresholds: CertaintyThresholds,
    pub per_query: Vec<QueryCertainty>,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageLatency {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl StageLatency {
    fn from_samples(samples: &mut Vec<f64>) -> StageLatency {
        if samples.is_empty() {
            return StageLatency::default();
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let pct = |p: f64| samples[(((p * n as f64).ceil() as usize).max(1) - 1).min(n - 1)];
        StageLatency {
            mean_ms: samples.iter().sum::<f64>() / n as f64,
            p50_ms: pct(0.50),
            p95_ms: pct(0.95),
            max_ms: samples[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyReport {
    pub total_queries: usize,
    pub per_stage: BTreeMap<String, StageLatency>,
    pub end_to_end: StageLatency,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct BenchmarkQuery {
    pub query_id: String,
    pub text: String,
    #[serde(default)]
    pub filters: FilterMap,
}

/// Parse a JSONL queries file; errors carry 1-based line numbers.
pub fn parse_queries(text: &str) -> Result<Vec<BenchmarkQuery>> {
    let mut queries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let query: BenchmarkQuery =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        queries.push(query);
    }
    Ok(queries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub top_k: usize,
    pub certainty_k: usize,
    pub run_tag: String,
    /// Parallel execution must produce identical metric values; only
    /// timings may differ.
    pub parallel: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions { top_k: 100, certainty_k: 10, run_tag: "finder".into(), parallel: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkOutcome {
    pub metrics: MetricsReport,
    pub certainty: CertaintyReport,
    pub latency: LatencyReport,
    /// `query_id doc_external_id rank score run_tag` lines.
    pub run_lines: Vec<String>,
    /// Failure class → query ids ("empty_results", "parse_errors").
    pub failures: BTreeMap<String, Vec<String>>,
}

struct QueryOutcome {
    query_id: String,
    ranked: Option<Vec<(String, f64)>>,
    certainty: Option<f64>,
    timings: BTreeMap<String, f64>,
    total_ms: f64,
}

/// Execute every query against the engine and assemble the three reports.
/// Queries that fail to parse are excluded from metrics and recorded under
/// the `parse_errors` failure class; queries with no hits score zero and
/// are recorded under `empty_results`.
pub fn run_benchmark(
    engine: &SearchEngine,
    queries: &[BenchmarkQuery],
    qrels: &QrelSet,
    cutoffs: &[usize],
    mode: Mode,
    options: &BenchmarkOptions,
) -> Result<BenchmarkOutcome> {
    if options.top_k == 0 || options.certainty_k == 0 {
        return Err(Error::RangeError("top_k and certainty_k must be ≥ 1".into()));
    }
    let thresholds = CertaintyThresholds::default();

    let execute = |query: &BenchmarkQuery| -> QueryOutcome {
        let start = std::time::Instant::now();
        let response = engine.search(&query.text, &query.filters, mode, options.top_k);
        let total_ms = start.elapsed().as_secs_f64() * 1000.0;
        match response {
            Ok(resp) => {
                let certainty = engine
                    .parse_query(&query.text, &query.filters)
                    .ok()
                    .and_then(|parsed| {
                        certainty_score(
                            &parsed.reformulations,
                            engine.embedder(),
                            engine.dense(),
                            options.certainty_k,
                        )
                        .ok()
                    });
                QueryOutcome {
                    query_id: query.query_id.clone(),
                    ranked: Some(
                        resp.hits
                            .iter()
                            .map(|h| (h.document_number.clone(), h.score))
                            .collect(),
                    ),
                    certainty,
                    timings: resp.timings_ms,
                    total_ms,
                }
            }
            Err(_) => QueryOutcome {
                query_id: query.query_id.clone(),
                ranked: None,
                certainty: None,
                timings: BTreeMap::new(),
                total_ms,
            },
        }
    };

    let outcomes: Vec<QueryOutcome> = if options.parallel {
        use rayon::prelude::*;
        queries.par_iter().map(execute).collect()
    } else {
        queries.iter().map(execute).collect()
    };

    let mut run: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut run_lines = Vec::new();
    let mut failures: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut per_query_certainty = Vec::new();
    let mut stage_samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut total_samples = Vec::new();

    for outcome in &outcomes {
        total_samples.push(outcome.total_ms);
        for (stage, &ms) in &outcome.timings {
            stage_samples.entry(stage.clone()).or_default().push(ms);
        }
        match &outcome.ranked {
            None => {
                failures.entry("parse_errors".into()).or_default().push(outcome.query_id.clone());
            }
            Some(ranked) => {
                if ranked.is_empty() {
                    failures.entry("empty_results".into()).or_default().push(outcome.query_id.clone());
                }
                for (i, (doc, score)) in ranked.iter().enumerate() {
                    run_lines.push(format!(
                        "{} {} {} {:.6} {}",
                        outcome.query_id,
                        doc,
                        i + 1,
                        score,
                        options.run_tag
                    ));
                }
                run.insert(outcome.query_id.clone(), ranked.iter().map(|(d, _)| d.clone()).collect());
            }
        }
        if let Some(certainty) = outcome.certainty {
            per_query_certainty.push(QueryCertainty {
                query_id: outcome.query_id.clone(),
                certainty,
                class: classify_certainty(certainty, &thresholds),
            });
        }
    }

    let metrics = compute_metrics(&run, qrels, cutoffs)?;
    let mean_certainty = if per_query_certainty.is_empty() {
        0.0
    } else {
        per_query_certainty.iter().map(|q| q.certainty).sum::<f64>()
            / per_query_certainty.len() as f64
    };
    let latency = LatencyReport {
        total_queries: outcomes.len(),
        per_stage: stage_samples
            .into_iter()
            .map(|(stage, mut samples)| (stage, StageLatency::from_samples(&mut samples)))
            .collect(),
        end_to_end: StageLatency::from_samples(&mut total_samples),
    };

    Ok(BenchmarkOutcome {
        metrics,
        certainty: CertaintyReport {
            thresholds,
            per_query: per_query_certainty,
            mean: mean_certainty,
        },
        latency,
        run_lines,
        failures,
    })
}

/// Parse run lines (`query_id doc_id rank score tag`) back into a run map.
pub fn parse_run_lines(lines: &[String]) -> Result<BTreeMap<String, Vec<String>>> {
    let mut run: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(i + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let rank: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad rank {:?}", fields[2])))?;
        run.entry(fields[0].to_string()).or_default().push((rank, fields[1].to_string()));
    }
    Ok(run
        .into_iter()
        .map(|(q, mut docs)| {
            docs.sort();
            (q, docs.into_iter().map(|(_, d)| d).collect())
        })
        .collect())
}
