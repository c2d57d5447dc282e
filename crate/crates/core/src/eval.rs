//! Experiment harness and statistics: ROC curves, repeated-run
//! aggregation, the Mann-Whitney U rank test and scan-report scoring.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compressor::{CompressorConfig, SizeCache};
use crate::corpus::{CorpusSet, ExperimentSplit, Label};
use crate::features::{feature_vectors, select_references, FeatureMask};
use crate::forest::{classify, train_forest, Forest, ForestParams, TrainingSet};
use crate::seed::derive_seed;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// ROC
// ---------------------------------------------------------------------------

/// One operating point: predict positive iff `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fp_rate: f64,
    pub tp_rate: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    /// Points in descending threshold order; rates are non-decreasing
    /// along the list.
    pub points: Vec<RocPoint>,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Sweep every distinct score as a threshold, plus a sentinel above the
/// maximum (nothing predicted positive) and one below the minimum
/// (everything predicted positive).
pub fn roc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument {
            message: format!("{} scores for {} labels", scores.len(), labels.len()),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput { what: "scores" });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument {
            message: "scores must be finite".into(),
        });
    }
    let p = labels.iter().filter(|&&l| l == Label::Positive).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }

    let mut items: Vec<(f64, Label)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));

    let mut thresholds = Vec::with_capacity(items.len() + 2);
    thresholds.push(items[0].0 + 1.0);
    for &(s, _) in &items {
        if thresholds.last() != Some(&s) {
            thresholds.push(s);
        }
    }
    thresholds.push(items[items.len() - 1].0 - 1.0);

    let mut points = Vec::with_capacity(thresholds.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut next = 0usize;
    for t in thresholds {
        while next < items.len() && items[next].0 >= t {
            match items[next].1 {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            next += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fp_rate: fp as f64 / n as f64,
            tp_rate: tp as f64 / p as f64,
            accuracy: (tp + (n - fp)) as f64 / (p + n) as f64,
        });
    }
    Ok(RocCurve {
        points,
        n_positive: p,
        n_negative: n,
    })
}

/// The accuracy-maximising point; ties prefer the lower false-positive
/// rate, then the lower threshold.
pub fn best_operating_point(curve: &RocCurve) -> Result<RocPoint> {
    let mut best: Option<RocPoint> = None;
    for &pt in &curve.points {
        let better = match best {
            None => true,
            Some(b) => {
                pt.accuracy > b.accuracy
                    || (pt.accuracy == b.accuracy && pt.fp_rate < b.fp_rate)
                    || (pt.accuracy == b.accuracy
                        && pt.fp_rate == b.fp_rate
                        && pt.threshold < b.threshold)
            }
        };
        if better {
            best = Some(pt);
        }
    }
    best.ok_or(Error::EmptyInput { what: "roc curve" })
}

// ---------------------------------------------------------------------------
// Experiment harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Reference set size (and reference pool size drawn by the split).
    pub n_references: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub mask: FeatureMask,
    /// Per-run forests override `forest.seed` with a seed derived from the
    /// run; the field in here is ignored.
    pub forest: ForestParams,
    pub compressor: CompressorConfig,
    /// `Some(f)` trains on an imbalanced class mix (`f` positive); test and
    /// reference stay balanced.
    pub train_positive_fraction: Option<f64>,
    /// Draw candidate thresholds from the run's test vectors instead of its
    /// training vectors.
    pub thresholds_from_test: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::InvalidConfig { message });
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if self.n_train < 2 || self.n_test < 2 {
            return bad("n_train and n_test must each be at least 2".into());
        }
        if let Some(f) = self.train_positive_fraction {
            if !(0.0 < f && f < 1.0) {
                return bad(format!("train_positive_fraction {f} must be inside (0, 1)"));
            }
        }
        self.forest.validate()?;
        self.compressor.validate()
    }

    fn needed_per_label(&self) -> (usize, usize) {
        let train_pos = match self.train_positive_fraction {
            Some(f) => (self.n_train as f64 * f).round() as usize,
            None => self.n_train / 2,
        };
        let base = self.n_references / 2 + self.n_test / 2;
        (base + train_pos, base + (self.n_train - train_pos))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub split: u64,
    pub reference: u64,
    pub forest: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seeds: RunSeeds,
    pub split: ExperimentSplit,
    pub reference_fingerprint: String,
    pub mask: FeatureMask,
    pub best: RocPoint,
    pub roc: RocCurve,
}

/// A run's JSON record plus the trained forest (persisted separately).
#[derive(Debug)]
pub struct RunOutput {
    pub result: RunResult,
    pub forest: Forest,
}

/// Execute `runs` independent split / featurize / train / score rounds.
///
/// Population sufficiency is checked before any compression happens, so an
/// under-sized corpus fails fast. Runs are sequential; the heavy work
/// inside each run is parallel and all randomness is derived from
/// `base_seed`, so results are reproducible.
pub fn run_experiment(
    corpus: &CorpusSet,
    config: &ExperimentConfig,
    cache: &SizeCache,
) -> Result<Vec<RunOutput>> {
    config.validate()?;
    let (need_pos, need_neg) = config.needed_per_label();
    for (label, needed) in [(Label::Positive, need_pos), (Label::Negative, need_neg)] {
        let available = corpus.count(label);
        if available < needed {
            return Err(Error::InsufficientPopulation {
                label,
                needed,
                available,
            });
        }
    }

    let mut outputs = Vec::with_capacity(config.runs);
    for run_index in 0..config.runs {
        let run = derive_seed(config.base_seed, run_index as u64);
        let seeds = RunSeeds {
            run,
            split: derive_seed(run, 1),
            reference: derive_seed(run, 2),
            forest: derive_seed(run, 3),
        };
        let split = match config.train_positive_fraction {
            None => corpus.split(config.n_references, config.n_train, config.n_test, seeds.split)?,
            Some(f) => corpus.split_biased(
                config.n_references,
                config.n_train,
                config.n_test,
                f,
                seeds.split,
            )?,
        };
        let refs = select_references(&split, corpus, config.n_references, seeds.reference)?;

        let train_vecs = feature_vectors(&split.train, &refs, corpus, &config.compressor, cache)?;
        let test_vecs = feature_vectors(&split.test, &refs, corpus, &config.compressor, cache)?;
        let mask_rows = |vecs: &[crate::features::FeatureVector]| -> Vec<Vec<f64>> {
            vecs.iter().map(|v| config.mask.apply(&v.values)).collect()
        };
        let labels_of = |ids: &[String]| -> Result<Vec<Label>> {
            ids.iter().map(|id| Ok(corpus.require(id)?.label)).collect()
        };

        let mut training = TrainingSet::new(mask_rows(&train_vecs), labels_of(&split.train)?);
        if config.thresholds_from_test {
            training.threshold_rows = Some(mask_rows(&test_vecs));
        }
        let params = ForestParams {
            seed: seeds.forest,
            ..config.forest.clone()
        };
        let forest = train_forest(&training, &params, &refs.fingerprint())?;

        let test_rows = mask_rows(&test_vecs);
        let scores: Vec<f64> = test_rows
            .iter()
            .map(|row| classify(&forest, row))
            .collect::<Result<_>>()?;
        let test_labels = labels_of(&split.test)?;
        let curve = roc(&scores, &test_labels)?;
        let best = best_operating_point(&curve)?;

        outputs.push(RunOutput {
            result: RunResult {
                run_index,
                seeds,
                split,
                reference_fingerprint: refs.fingerprint(),
                mask: config.mask,
                best,
                roc: curve,
            },
            forest,
        });
    }
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

fn summarize(values: impl Iterator<Item = f64> + Clone) -> SummaryStat {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        count += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    SummaryStat {
        mean: sum / count as f64,
        min,
        max,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BandPoint {
    pub fp: f64,
    pub tp_mean: f64,
    pub tp_min: f64,
    pub tp_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub best_accuracy: SummaryStat,
    pub best_fp_rate: SummaryStat,
    pub best_tp_rate: SummaryStat,
    /// TP band on the fixed FP grid 0.000, 0.001, ..., 0.100.
    pub band: Vec<BandPoint>,
}

/// Grid step and extent of the aggregated ROC band.
pub const FP_GRID_STEP: f64 = 0.001;
pub const FP_GRID_POINTS: usize = 101;

/// Best TP available on a curve at false-positive budget `fp_budget`.
/// Curves are staircases, so this is the TP of the last point whose FP
/// rate fits the budget (a hair of float slack absorbs grid rounding).
fn tp_at_budget(curve: &RocCurve, fp_budget: f64) -> f64 {
    let mut best = 0.0;
    for pt in &curve.points {
        if pt.fp_rate <= fp_budget + 1e-12 && pt.tp_rate > best {
            best = pt.tp_rate;
        }
    }
    best
}

/// Combine repeated runs into mean/min/max summaries and the banded ROC.
/// Pure aggregation over per-run results, so permuting the input changes
/// nothing but the (sorted-in) order of identical statistics.
pub fn aggregate(results: &[RunResult]) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(Error::EmptyInput {
            what: "run results",
        });
    }
    let band = (0..FP_GRID_POINTS)
        .map(|i| {
            let fp = i as f64 * FP_GRID_STEP;
            let tps = results.iter().map(|r| tp_at_budget(&r.roc, fp));
            let stat = summarize(tps);
            BandPoint {
                fp,
                tp_mean: stat.mean,
                tp_min: stat.min,
                tp_max: stat.max,
            }
        })
        .collect();
    Ok(Aggregate {
        runs: results.len(),
        best_accuracy: summarize(results.iter().map(|r| r.best.accuracy)),
        best_fp_rate: summarize(results.iter().map(|r| r.best.fp_rate)),
        best_tp_rate: summarize(results.iter().map(|r| r.best.tp_rate)),
        band,
    })
}

/// Write the band as `fp_grid,tp_mean,tp_min,tp_max` rows.
pub fn write_aggregate_csv(agg: &Aggregate, out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["fp_grid", "tp_mean", "tp_min", "tp_max"])?;
    for b in &agg.band {
        w.write_record([
            b.fp.to_string(),
            b.tp_mean.to_string(),
            b.tp_min.to_string(),
            b.tp_max.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Mann-Whitney U
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MwuResult {
    /// `min(U_a, U_b)`.
    pub u: f64,
    /// Two-sided p-value, capped at 1.
    pub p_value: f64,
    pub method: MwuMethod,
}

struct RankStats {
    u_a: f64,
    n_a: usize,
    n_b: usize,
    /// Sizes of tie groups with more than one member.
    tie_groups: Vec<usize>,
}

fn rank_stats(a: &[f64], b: &[f64]) -> Result<RankStats> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput {
            what: "rank test sample",
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument {
            message: "rank test values must be finite".into(),
        });
    }
    let mut merged: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    merged.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite"));

    let mut rank_sum_a = 0.0;
    let mut tie_groups = Vec::new();
    let mut i = 0;
    while i < merged.len() {
        let mut j = i;
        while j < merged.len() && merged[j].0 == merged[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let from_a = merged[i..j].iter().filter(|(_, is_a)| *is_a).count();
        rank_sum_a += midrank * from_a as f64;
        if j - i > 1 {
            tie_groups.push(j - i);
        }
        i = j;
    }
    let n_a = a.len();
    let n_b = b.len();
    Ok(RankStats {
        u_a: rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0,
        n_a,
        n_b,
        tie_groups,
    })
}

/// Counts of arrangements by `U` value for tie-free samples of sizes
/// `(m, n)`, via the recurrence on (taken from a, taken from b):
/// `ways(i, j, u) = ways(i-1, j, u-j) + ways(i, j-1, u)`. Index `u`
/// runs over `0 ..= m * n` and the counts sum to `C(m + n, m)`.
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    let mut ways = vec![vec![vec![0.0f64; m * n + 1]; n + 1]; m + 1];
    ways[0].iter_mut().for_each(|row| row[0] = 1.0);
    for i in 1..=m {
        for j in 0..=n {
            for u in 0..=(m * n) {
                let mut total = if u >= j { ways[i - 1][j][u - j] } else { 0.0 };
                if j >= 1 {
                    total += ways[i][j - 1][u];
                }
                ways[i][j][u] = total;
            }
        }
    }
    ways[m][n].clone()
}

/// Exact two-sided test by full enumeration of the tie-free U distribution.
/// Preconditions: no ties and `|a| + |b| <= 12`.
pub fn mwu_exact(a: &[f64], b: &[f64]) -> Result<MwuResult> {
    let stats = rank_stats(a, b)?;
    if !stats.tie_groups.is_empty() {
        return Err(Error::InvalidArgument {
            message: "exact path requires tie-free samples".into(),
        });
    }
    if stats.n_a + stats.n_b > 12 {
        return Err(Error::InvalidArgument {
            message: format!(
                "exact path limited to 12 values, got {}",
                stats.n_a + stats.n_b
            ),
        });
    }
    let u_b = (stats.n_a * stats.n_b) as f64 - stats.u_a;
    let u_min = stats.u_a.min(u_b);
    let dist = u_distribution(stats.n_a, stats.n_b);
    let total: f64 = dist.iter().sum();
    let below: f64 = dist[..=(u_min as usize)].iter().sum();
    Ok(MwuResult {
        u: u_min,
        p_value: (2.0 * below / total).min(1.0),
        method: MwuMethod::Exact,
    })
}

/// Two-sided normal approximation with midranks, tie-corrected variance
/// and continuity correction. Degenerate inputs (everything tied) come
/// back as `p = 1`.
pub fn mwu_normal(a: &[f64], b: &[f64]) -> Result<MwuResult> {
    let stats = rank_stats(a, b)?;
    let (na, nb) = (stats.n_a as f64, stats.n_b as f64);
    let n = na + nb;
    let u_b = na * nb - stats.u_a;
    let u_min = stats.u_a.min(u_b);

    let mean = na * nb / 2.0;
    let tie_term: f64 = stats
        .tie_groups
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return Ok(MwuResult {
            u: u_min,
            p_value: 1.0,
            method: MwuMethod::NormalApprox,
        });
    }
    let z = ((u_min - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let p = statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
    Ok(MwuResult {
        u: u_min,
        p_value: p.min(1.0),
        method: MwuMethod::NormalApprox,
    })
}

/// Rank test with automatic path choice: exact enumeration for small
/// tie-free samples, the corrected normal approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult> {
    let stats = rank_stats(a, b)?;
    if stats.tie_groups.is_empty() && stats.n_a + stats.n_b <= 12 {
        mwu_exact(a, b)
    } else {
        mwu_normal(a, b)
    }
}

// ---------------------------------------------------------------------------
// Scan report comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Detected,
    Clean,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord {
    pub sha256: String,
    pub engine: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineStats {
    pub engine: String,
    pub scanned_positive: u64,
    pub scanned_negative: u64,
    pub detected_positive: u64,
    pub detected_negative: u64,
    /// Labelled samples this engine never scanned (absent or skipped);
    /// excluded from every rate.
    pub unscanned: u64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanComparison {
    /// Per-engine stats, sorted by engine name.
    pub engines: Vec<EngineStats>,
    /// Union engine: a digest counts as scanned if any engine scanned it
    /// and as detected if any engine flagged it.
    pub combined: EngineStats,
    /// Report digests with no label in the corpus; listed, not fatal.
    pub unmatched_digests: Vec<String>,
}

fn engine_stats(
    name: &str,
    verdicts: &HashMap<&str, Verdict>,
    labels: &HashMap<String, Label>,
) -> EngineStats {
    let mut scanned = [0u64; 2]; // [neg, pos]
    let mut detected = [0u64; 2];
    for (digest, label) in labels {
        let idx = match label {
            Label::Negative => 0,
            Label::Positive => 1,
        };
        match verdicts.get(digest.as_str()) {
            Some(Verdict::Detected) => {
                scanned[idx] += 1;
                detected[idx] += 1;
            }
            Some(Verdict::Clean) => scanned[idx] += 1,
            Some(Verdict::Skipped) | None => {}
        }
    }
    let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let total_scanned = scanned[0] + scanned[1];
    EngineStats {
        engine: name.to_string(),
        scanned_positive: scanned[1],
        scanned_negative: scanned[0],
        detected_positive: detected[1],
        detected_negative: detected[0],
        unscanned: labels.len() as u64 - total_scanned,
        tp_rate: rate(detected[1], scanned[1]),
        fp_rate: rate(detected[0], scanned[0]),
        accuracy: rate(detected[1] + (scanned[0] - detected[0]), total_scanned),
    }
}

/// Score third-party scan verdicts against corpus labels, per engine and
/// combined. Later records override earlier ones for the same
/// (engine, digest) pair.
pub fn compare_scan_report(
    records: &[ScanRecord],
    labels: &HashMap<String, Label>,
) -> Result<ScanComparison> {
    if records.is_empty() {
        return Err(Error::EmptyInput {
            what: "scan report",
        });
    }
    let mut by_engine: BTreeMap<&str, HashMap<&str, Verdict>> = BTreeMap::new();
    let mut unmatched: HashSet<&str> = HashSet::new();
    for r in records {
        if !labels.contains_key(&r.sha256) {
            unmatched.insert(&r.sha256);
        }
        by_engine
            .entry(&r.engine)
            .or_default()
            .insert(&r.sha256, r.verdict);
    }

    // Combined: scanned by anyone, detected by anyone.
    let mut combined: HashMap<&str, Verdict> = HashMap::new();
    for verdicts in by_engine.values() {
        for (&digest, &verdict) in verdicts {
            match (combined.get(digest), verdict) {
                (_, Verdict::Skipped) => {
                    combined.entry(digest).or_insert(Verdict::Skipped);
                }
                (Some(Verdict::Detected), _) => {}
                (_, v) => {
                    combined.insert(digest, v);
                }
            }
        }
    }

    let engines: Vec<EngineStats> = by_engine
        .iter()
        .map(|(name, verdicts)| engine_stats(name, verdicts, labels))
        .collect();
    let mut unmatched_digests: Vec<String> = unmatched.into_iter().map(str::to_string).collect();
    unmatched_digests.sort();
    Ok(ScanComparison {
        engines,
        combined: engine_stats("combined", &combined, labels),
        unmatched_digests,
    })
}

/// Read a scan report: a JSON array of `{sha256, engine, verdict}` with
/// verdicts `detected`, `clean` or `skipped`.
pub fn load_scan_report(path: &Path) -> Result<Vec<ScanRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
