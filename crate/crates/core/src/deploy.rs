//! Deployment: pick unlabeled candidates near known misinformation, score
//! them in every month, flag those above 0.5 in all months, and feed human
//! verdicts back into the label store.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{Domain, Month};
use crate::features::{extract_matrix_filled, FeatureContext, FeatureError, HostEncoder};
use crate::graph::{Direction, GraphError, NavigationGraph};
use crate::labels::{CategoryRegistry, EventLog, LabelError, LabelStore, PersistentLabelStore, ReviewEvent, ReviewOutcome, Verdict};
use crate::ml::{ClassLabel, MlError, TrainedModel};

pub const DEFAULT_TRAFFIC_FLOOR: u64 = 3000;
pub const DEFAULT_SAMPLE_SIZE: usize = 50_000;
/// Confidence a candidate must strictly exceed in every month.
pub const POSITIVE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("no seed domains: the label store has no {0} domains")]
    NoSeeds(&'static str),
    #[error("no monthly graphs given")]
    NoMonths,
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("{domain} is not a positive of run {run}")]
    NotPositive { domain: Domain, run: String },
    #[error("{0} is not a candidate of this run")]
    NotCandidate(Domain),
    #[error("no reviewed positives")]
    NoReviews,
    #[error("run artifact {path}: {reason}")]
    Artifact { path: String, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] MlError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl DeployError {
    pub fn code(&self) -> &'static str {
        match self {
            DeployError::NoSeeds(_) => "no_seeds",
            DeployError::NoMonths => "empty_input",
            DeployError::InvalidStrategy(_) => "invalid_config",
            DeployError::NotPositive { .. } | DeployError::NotCandidate(_) => "not_found",
            DeployError::NoReviews => "empty_input",
            DeployError::Artifact { .. } | DeployError::Json(_) | DeployError::Csv(_) => "parse",
            DeployError::Graph(e) => e.code(),
            DeployError::Features(e) => e.code(),
            DeployError::Model(e) => e.code(),
            DeployError::Labels(e) => e.code(),
            DeployError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    OneHopEgonet,
    TwoHopEgonet,
    SampledTraffic,
}

/// Which labeled domains seed the egonets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSet {
    #[default]
    Misinformation,
    Propaganda,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentStrategy {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(default = "default_floor")]
    pub traffic_floor: u64,
    #[serde(default)]
    pub seed_set: SeedSet,
    /// Sampling seed (sampled strategy only).
    #[serde(default)]
    pub seed: u64,
}

fn default_floor() -> u64 {
    DEFAULT_TRAFFIC_FLOOR
}

impl DeploymentStrategy {
    pub fn one_hop() -> Self {
        DeploymentStrategy { kind: StrategyKind::OneHopEgonet, sample_size: None, traffic_floor: DEFAULT_TRAFFIC_FLOOR, seed_set: SeedSet::Misinformation, seed: 0 }
    }

    pub fn two_hop() -> Self {
        DeploymentStrategy { kind: StrategyKind::TwoHopEgonet, ..Self::one_hop() }
    }

    pub fn sampled(sample_size: usize, seed: u64) -> Self {
        DeploymentStrategy { kind: StrategyKind::SampledTraffic, sample_size: Some(sample_size), seed, ..Self::one_hop() }
    }

    pub fn with_seed_set(mut self, seed_set: SeedSet) -> Self {
        self.seed_set = seed_set;
        self
    }

    pub fn name(&self) -> String {
        match self.kind {
            StrategyKind::OneHopEgonet => "one_hop".into(),
            StrategyKind::TwoHopEgonet => "two_hop".into(),
            StrategyKind::SampledTraffic => format!("sampled_{}", self.sample_size.unwrap_or(0)),
        }
    }

    pub fn validate(&self) -> Result<(), DeployError> {
        match (self.kind, self.sample_size) {
            (StrategyKind::SampledTraffic, Some(n)) if n >= 1 => Ok(()),
            (StrategyKind::SampledTraffic, _) => Err(DeployError::InvalidStrategy("sampled strategy needs sample_size >= 1".into())),
            (_, Some(_)) => Err(DeployError::InvalidStrategy("hop strategies take no sample_size".into())),
            (_, None) => Ok(()),
        }
    }
}

fn below_floor(graphs: &[NavigationGraph], domain: &str, floor: u64) -> bool {
    graphs.iter().any(|g| match g.node_id(domain) {
        Some(id) => {
            let (i, o) = g.totals_by_id(id);
            i + o < floor
        }
        None => false,
    })
}

/// Unlabeled, non-category domains to score. Hop strategies take the union
/// of every seed's both-direction egonet over all months; the sampled
/// strategy draws uniformly from all eligible domains.
pub fn select_candidates(
    graphs: &[NavigationGraph],
    store: &LabelStore,
    registry: &CategoryRegistry,
    strategy: &DeploymentStrategy,
) -> Result<BTreeSet<Domain>, DeployError> {
    strategy.validate()?;
    if graphs.is_empty() {
        return Err(DeployError::NoMonths);
    }
    let eligible = |d: &Domain| {
        !store.is_labeled(d.as_str())
            && !registry.contains(d.as_str())
            && !below_floor(graphs, d.as_str(), strategy.traffic_floor)
    };
    let pool: BTreeSet<Domain> = match strategy.kind {
        StrategyKind::OneHopEgonet | StrategyKind::TwoHopEgonet => {
            let k = if strategy.kind == StrategyKind::OneHopEgonet { 1 } else { 2 };
            let seeds: Vec<&Domain> = match strategy.seed_set {
                SeedSet::Misinformation => store.misinformation_domains().collect(),
                SeedSet::Propaganda => store.propaganda_domains().collect(),
            };
            if seeds.is_empty() {
                return Err(DeployError::NoSeeds(match strategy.seed_set {
                    SeedSet::Misinformation => "misinformation",
                    SeedSet::Propaganda => "propaganda",
                }));
            }
            let mut pool = BTreeSet::new();
            for g in graphs {
                for seed in &seeds {
                    if let Some(id) = g.node_id(seed.as_str()) {
                        for n in g.egonet_ids(id, k, Direction::Both)? {
                            pool.insert(g.name(n).clone());
                        }
                    }
                }
            }
            pool
        }
        StrategyKind::SampledTraffic => {
            let all: BTreeSet<&Domain> = graphs.iter().flat_map(|g| g.nodes()).collect();
            let mut eligible_all: Vec<&Domain> = all
                .into_iter()
                .filter(|d| !store.is_labeled(d.as_str()) && !registry.contains(d.as_str()))
                .collect();
            let n = strategy.sample_size.unwrap_or(0).min(eligible_all.len());
            let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
            let (sample, _) = eligible_all.partial_shuffle(&mut rng, n);
            sample.iter().map(|d| (*d).clone()).collect()
        }
    };
    Ok(pool.into_iter().filter(eligible).collect())
}

/// Flag rule: strictly above 0.5 in every given month.
pub fn is_positive(confidences: &[f64]) -> bool {
    !confidences.is_empty() && confidences.iter().all(|c| *c > POSITIVE_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub domain: Domain,
    /// Target-class confidence per month, in run month order.
    pub confidences: Vec<f64>,
    /// Whether the domain is a node of each month's graph.
    pub present: Vec<bool>,
}

impl CandidateScore {
    pub fn min_confidence(&self) -> f64 {
        self.confidences.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        is_positive(&self.confidences)
    }
}

/// Table-4 counts for one month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthCount {
    pub month: Month,
    /// Candidates present in that month's graph.
    pub all: usize,
    /// Present candidates above the threshold that month.
    pub positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentRun {
    pub id: String,
    pub strategy: DeploymentStrategy,
    pub months: Vec<Month>,
    pub target_class: ClassLabel,
    pub created_at: DateTime<Utc>,
    pub candidates: Vec<CandidateScore>,
    pub positives: Vec<Domain>,
    pub counts: Vec<MonthCount>,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub reviews: Vec<ReviewEvent>,
}

/// Scores candidates in every month's graph with `model`. `graphs` must be
/// in month order. Candidates missing from a month get zero-traffic
/// features; those missing from every month are listed in `warnings`.
#[allow(clippy::too_many_arguments)]
pub fn run_deployment(
    candidates: &BTreeSet<Domain>,
    graphs: &[NavigationGraph],
    model: &TrainedModel,
    store: &LabelStore,
    registry: &CategoryRegistry,
    hosts: Option<&HostEncoder>,
    strategy: &DeploymentStrategy,
    created_at: DateTime<Utc>,
) -> Result<DeploymentRun, DeployError> {
    if graphs.is_empty() {
        return Err(DeployError::NoMonths);
    }
    let mut ctx = FeatureContext::new(store, registry, model.config.mode);
    if let Some(h) = hosts {
        ctx = ctx.with_hosts(h);
    }
    let target = model.target_class();
    let ti = model.class_index(target).expect("target class in model");
    let months: Vec<Month> = graphs.iter().map(NavigationGraph::month).collect();
    let domains: Vec<Domain> = candidates.iter().cloned().collect();
    let mut scores: Vec<CandidateScore> = domains
        .iter()
        .map(|d| CandidateScore { domain: d.clone(), confidences: Vec::new(), present: Vec::new() })
        .collect();
    for g in graphs {
        let (m, _) = extract_matrix_filled(g, &ctx, domains.iter());
        let proba = model.predict_proba(&m)?;
        for (s, p) in scores.iter_mut().zip(proba) {
            s.confidences.push(p[ti]);
            s.present.push(g.contains(s.domain.as_str()));
        }
    }
    let mut warnings = Vec::new();
    for s in &scores {
        if !s.present.iter().any(|p| *p) {
            tracing::warn!(domain = %s.domain, "candidate absent from every month, scored on zero features");
            warnings.push(format!("{} absent from every month; scored on zero-traffic features", s.domain));
        }
    }
    let counts = months
        .iter()
        .enumerate()
        .map(|(mi, month)| MonthCount {
            month: *month,
            all: scores.iter().filter(|s| s.present[mi]).count(),
            positive: scores.iter().filter(|s| s.present[mi] && s.confidences[mi] > POSITIVE_THRESHOLD).count(),
        })
        .collect();
    let positives = scores.iter().filter(|s| s.is_positive()).map(|s| s.domain.clone()).collect();
    let mut run = DeploymentRun {
        id: String::new(),
        strategy: strategy.clone(),
        months,
        target_class: target,
        created_at,
        candidates: scores,
        positives,
        counts,
        warnings,
        reviews: Vec::new(),
    };
    run.id = run.content_id();
    Ok(run)
}

impl DeploymentRun {
    /// Hash of everything except the id and the reviews.
    fn content_id(&self) -> String {
        let mut h = Sha256::new();
        let body = serde_json::json!({
            "strategy": self.strategy,
            "months": self.months,
            "target_class": self.target_class,
            "created_at": self.created_at,
            "candidates": self.candidates,
        });
        h.update(body.to_string().as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    pub fn candidate(&self, domain: &str) -> Option<&CandidateScore> {
        self.candidates
            .binary_search_by(|c| c.domain.as_str().cmp(domain))
            .ok()
            .map(|i| &self.candidates[i])
    }

    pub fn is_positive(&self, domain: &str) -> bool {
        self.positives.binary_search_by(|d| d.as_str().cmp(domain)).is_ok()
    }

    /// Positives ordered for review: minimum confidence descending, then
    /// domain.
    pub fn review_queue(&self) -> Vec<&CandidateScore> {
        let mut q: Vec<&CandidateScore> = self.candidates.iter().filter(|c| c.is_positive()).collect();
        q.sort_by(|a, b| b.min_confidence().total_cmp(&a.min_confidence()).then(a.domain.cmp(&b.domain)));
        q
    }

    /// Latest verdict recorded in this run for `domain`.
    pub fn review_of(&self, domain: &str) -> Option<&ReviewEvent> {
        self.reviews.iter().rev().find(|r| r.domain.as_str() == domain)
    }

    /// Verdict that confirms a flagged domain as the run's target class.
    pub fn confirm_verdict(&self) -> Verdict {
        match self.target_class {
            ClassLabel::Propaganda => Verdict::ConfirmedPropaganda,
            _ => Verdict::ConfirmedMisinformation,
        }
    }
}

/// Sample-based estimate of deployment precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub precision: f64,
    pub reviewed: usize,
    pub confirmed: usize,
    /// `None` without a negative sample, or when the estimator's
    /// denominator is zero.
    pub recall: Option<f64>,
    pub negatives_reviewed: usize,
    pub negatives_found: usize,
}

fn confirms(verdict: Verdict, target: ClassLabel) -> bool {
    match target {
        ClassLabel::Propaganda => verdict == Verdict::ConfirmedPropaganda,
        _ => matches!(verdict, Verdict::ConfirmedMisinformation | Verdict::ConfirmedPropaganda),
    }
}

/// `precision = confirmed / reviewed`; recall scales the sampled precision
/// and the sampled miss rate among unflagged candidates up to the full
/// sets: `P|pos| / (P|pos| + N|cand \ pos|)`.
pub fn estimate_metrics(
    run: &DeploymentRun,
    reviewed: &[(Domain, Verdict)],
    negatives_reviewed: &[(Domain, Verdict)],
) -> Result<Estimate, DeployError> {
    if reviewed.is_empty() {
        return Err(DeployError::NoReviews);
    }
    for (d, _) in reviewed {
        if !run.is_positive(d.as_str()) {
            return Err(DeployError::NotPositive { domain: d.clone(), run: run.id.clone() });
        }
    }
    for (d, _) in negatives_reviewed {
        if run.candidate(d.as_str()).is_none() || run.is_positive(d.as_str()) {
            return Err(DeployError::NotCandidate(d.clone()));
        }
    }
    let confirmed = reviewed.iter().filter(|(_, v)| confirms(*v, run.target_class)).count();
    let found = negatives_reviewed.iter().filter(|(_, v)| confirms(*v, run.target_class)).count();
    let p = confirmed as f64 / reviewed.len() as f64;
    let recall = if negatives_reviewed.is_empty() {
        None
    } else {
        let n = found as f64 / negatives_reviewed.len() as f64;
        let pos = run.positives.len() as f64;
        let neg = (run.candidates.len() - run.positives.len()) as f64;
        let denom = p * pos + n * neg;
        (denom > 0.0).then(|| p * pos / denom)
    };
    Ok(Estimate {
        precision: p,
        reviewed: reviewed.len(),
        confirmed,
        recall,
        negatives_reviewed: negatives_reviewed.len(),
        negatives_found: found,
    })
}

/// Anything review verdicts can be written to.
pub trait ReviewSink {
    fn add_review(&mut self, event: ReviewEvent) -> Result<ReviewOutcome, LabelError>;
}

impl ReviewSink for LabelStore {
    fn add_review(&mut self, event: ReviewEvent) -> Result<ReviewOutcome, LabelError> {
        self.add_review_label(event)
    }
}

impl ReviewSink for PersistentLabelStore {
    fn add_review(&mut self, event: ReviewEvent) -> Result<ReviewOutcome, LabelError> {
        self.add_review_label(event)
    }
}

/// Records each confirmed positive as the run's target class. All domains
/// are checked against the run's positives before anything is written.
pub fn feedback<S: ReviewSink>(
    sink: &mut S,
    run: &DeploymentRun,
    confirmed: &[Domain],
    reviewer: &str,
    timestamp: DateTime<Utc>,
) -> Result<Vec<ReviewOutcome>, DeployError> {
    for d in confirmed {
        if !run.is_positive(d.as_str()) {
            return Err(DeployError::NotPositive { domain: d.clone(), run: run.id.clone() });
        }
    }
    let verdict = run.confirm_verdict();
    confirmed
        .iter()
        .map(|d| {
            sink.add_review(ReviewEvent {
                domain: d.clone(),
                verdict,
                reviewer: reviewer.to_string(),
                timestamp,
                run: Some(run.id.clone()),
                checklist: None,
            })
            .map_err(DeployError::from)
        })
        .collect()
}

/// `strategy,<month>:all,<month>:positive,...` rows.
pub fn write_counts_csv<W: Write>(writer: W, runs: &[&DeploymentRun]) -> Result<(), DeployError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let months: Vec<Month> = runs.first().map(|r| r.months.clone()).unwrap_or_default();
    let mut header = vec!["strategy".to_string()];
    for m in &months {
        header.push(format!("{m}:all"));
        header.push(format!("{m}:positive"));
    }
    header.push("flagged".into());
    wtr.write_record(&header)?;
    for r in runs {
        let mut row = vec![r.strategy.name()];
        for m in &months {
            let c = r.counts.iter().find(|c| c.month == *m);
            row.push(c.map(|c| c.all.to_string()).unwrap_or_default());
            row.push(c.map(|c| c.positive.to_string()).unwrap_or_default());
        }
        row.push(r.positives.len().to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    id: String,
    strategy: DeploymentStrategy,
    months: Vec<Month>,
    target_class: ClassLabel,
    created_at: DateTime<Utc>,
    counts: Vec<MonthCount>,
    candidates: usize,
    positives: usize,
    warnings: Vec<String>,
}

pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const POSITIVES_FILE: &str = "positives.csv";
pub const REVIEWS_FILE: &str = "reviews.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

impl DeploymentRun {
    /// Writes the artifact directory. Existing review logs are kept.
    pub fn save(&self, dir: &Path) -> Result<(), DeployError> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(CANDIDATES_FILE))?));
        let mut header = vec!["domain".to_string()];
        header.extend(self.months.iter().map(|m| m.to_string()));
        header.extend(["present".to_string(), "min_confidence".to_string(), "positive".to_string()]);
        w.write_record(&header)?;
        for c in &self.candidates {
            let mut row = vec![c.domain.to_string()];
            row.extend(c.confidences.iter().map(|v| v.to_string()));
            row.push(c.present.iter().map(|p| if *p { '1' } else { '0' }).collect());
            row.push(c.min_confidence().to_string());
            row.push(c.is_positive().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(POSITIVES_FILE))?));
        w.write_record(["domain", "min_confidence"])?;
        for c in self.review_queue() {
            w.write_record([c.domain.to_string(), c.min_confidence().to_string()])?;
        }
        w.flush()?;

        let reviews = dir.join(REVIEWS_FILE);
        if !reviews.exists() {
            let log = EventLog::new(&reviews);
            File::create(&reviews)?;
            for r in &self.reviews {
                log.append(r)?;
            }
        }

        let summary = Summary {
            id: self.id.clone(),
            strategy: self.strategy.clone(),
            months: self.months.clone(),
            target_class: self.target_class,
            created_at: self.created_at,
            counts: self.counts.clone(),
            candidates: self.candidates.len(),
            positives: self.positives.len(),
            warnings: self.warnings.clone(),
        };
        let mut f = BufWriter::new(File::create(dir.join(SUMMARY_FILE))?);
        serde_json::to_writer_pretty(&mut f, &summary)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DeployError> {
        let art = |name: &str, reason: String| DeployError::Artifact { path: dir.join(name).display().to_string(), reason };
        let summary: Summary = serde_json::from_reader(File::open(dir.join(SUMMARY_FILE))?)?;
        let n = summary.months.len();
        let mut rdr = csv::Reader::from_path(dir.join(CANDIDATES_FILE))?;
        let mut candidates = Vec::new();
        for row in rdr.records() {
            let row = row?;
            if row.len() != n + 4 {
                return Err(art(CANDIDATES_FILE, format!("expected {} fields", n + 4)));
            }
            let domain = Domain::parse(&row[0]).map_err(|e| art(CANDIDATES_FILE, e.to_string()))?;
            let confidences = (1..=n)
                .map(|i| row[i].parse::<f64>().map_err(|e| art(CANDIDATES_FILE, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let present = row[n + 1].chars().map(|c| c == '1').collect();
            candidates.push(CandidateScore { domain, confidences, present });
        }
        candidates.sort_by(|a, b| a.domain.cmp(&b.domain));
        let positives = candidates.iter().filter(|c| c.is_positive()).map(|c| c.domain.clone()).collect();
        let reviews = EventLog::new(dir.join(REVIEWS_FILE)).read_all()?;
        let run = DeploymentRun {
            id: summary.id,
            strategy: summary.strategy,
            months: summary.months,
            target_class: summary.target_class,
            created_at: summary.created_at,
            candidates,
            positives,
            counts: summary.counts,
            warnings: summary.warnings,
            reviews,
        };
        if run.content_id() != run.id {
            return Err(art(SUMMARY_FILE, "content does not match run id".into()));
        }
        Ok(run)
    }
}
