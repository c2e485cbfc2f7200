//! Domain labels, review verdicts and the category host registry.
//!
//! Label files are merged with misinformation taking precedence over
//! authoritative, and the propaganda flag OR-ed across sources (a propaganda
//! domain is always a misinformation domain). Review verdicts are recorded
//! as events in an append-only JSONL log; replaying the log over the same
//! label files always reproduces the same store.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;

/// Provenance tag given to labels that come from review verdicts.
pub const REVIEW_SOURCE: &str = "review";

const DEFAULT_CATEGORIES: &str = include_str!("../data/categories.csv");
const SNAPSHOT_MAGIC: &str = "# label-snapshot v1 events=";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("{file} line {line}: {reason}")]
    Parse { file: String, line: u64, reason: String },
    #[error("{domain} already reviewed as {existing}, refusing {requested}")]
    Conflict {
        domain: Domain,
        existing: Verdict,
        requested: Verdict,
    },
    #[error("{0} is labeled by a curated source and is not open for review")]
    AlreadyLabeled(Domain),
    #[error("host {host} listed under both {first} and {second}")]
    CategoryOverlap { host: Domain, first: Category, second: Category },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl LabelError {
    pub fn code(&self) -> &'static str {
        match self {
            LabelError::Parse { .. } | LabelError::Csv(_) | LabelError::Json(_) => "parse",
            LabelError::Conflict { .. } => "conflict",
            LabelError::AlreadyLabeled(_) => "already_labeled",
            LabelError::CategoryOverlap { .. } => "category_overlap",
            LabelError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    Misinformation,
    Authoritative,
    Unlabeled,
}

impl LabelClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelClass::Misinformation => "misinformation",
            LabelClass::Authoritative => "authoritative",
            LabelClass::Unlabeled => "unlabeled",
        }
    }

    /// Merge precedence, highest first.
    fn rank(&self) -> u8 {
        match self {
            LabelClass::Misinformation => 2,
            LabelClass::Authoritative => 1,
            LabelClass::Unlabeled => 0,
        }
    }
}

impl FromStr for LabelClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "misinformation" | "misinfo" => Ok(LabelClass::Misinformation),
            "authoritative" | "non-misinformation" | "non_misinformation" => Ok(LabelClass::Authoritative),
            "unlabeled" | "unlabelled" => Ok(LabelClass::Unlabeled),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConfirmedMisinformation,
    ConfirmedPropaganda,
    Rejected,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConfirmedMisinformation => "confirmed_misinformation",
            Verdict::ConfirmedPropaganda => "confirmed_propaganda",
            Verdict::Rejected => "rejected",
        }
    }

    /// Label assigned by this verdict: `(class, propaganda)`.
    pub fn label(&self) -> (LabelClass, bool) {
        match self {
            Verdict::ConfirmedMisinformation => (LabelClass::Misinformation, false),
            Verdict::ConfirmedPropaganda => (LabelClass::Misinformation, true),
            Verdict::Rejected => (LabelClass::Authoritative, false),
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "confirmed_misinformation" => Ok(Verdict::ConfirmedMisinformation),
            "confirmed_propaganda" => Ok(Verdict::ConfirmedPropaganda),
            "rejected" => Ok(Verdict::Rejected),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainLabel {
    pub domain: Domain,
    pub class: LabelClass,
    pub propaganda: bool,
    /// Sources that contributed, `;`-separated in first-seen order.
    pub source: String,
    /// Set for review labels; curated files carry no timestamp.
    pub added_at: Option<DateTime<Utc>>,
}

/// One line of the review event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub domain: Domain,
    pub verdict: Verdict,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
    /// Rubric rows ticked by the reviewer, stored for audit only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checklist: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewOutcome {
    /// The verdict is new and was (or would be) recorded.
    Recorded,
    /// The same verdict already exists; nothing to append.
    Unchanged,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub misinformation: usize,
    pub authoritative: usize,
    pub unlabeled: usize,
    pub propaganda: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelStore {
    labels: BTreeMap<Domain, DomainLabel>,
    reviews: BTreeMap<Domain, Verdict>,
    events: Vec<ReviewEvent>,
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    domain: String,
    class: String,
    #[serde(alias = "propaganda_flag", default)]
    propaganda: String,
    #[serde(default)]
    source: String,
}

fn parse_flag(raw: &str) -> Result<bool, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "n" => Ok(false),
        "1" | "true" | "yes" | "y" => Ok(true),
        other => Err(format!("bad propaganda flag {other:?}")),
    }
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merges several label files. See [`LabelStore::merge_reader`].
    pub fn load_labels<P: AsRef<Path>>(paths: &[P]) -> Result<Self, LabelError> {
        let mut store = LabelStore::new();
        for path in paths {
            let path = path.as_ref();
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            store.merge_reader(File::open(path)?, &path.display().to_string(), &name)?;
        }
        Ok(store)
    }

    /// Merges one `domain,class,propaganda,source` CSV. `default_source`
    /// fills empty source cells.
    pub fn merge_reader<R: Read>(&mut self, reader: R, file: &str, default_source: &str) -> Result<(), LabelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |reason: String| LabelError::Parse { file: file.to_string(), line, reason };
            let parsed: LabelRow = row.deserialize(Some(&headers)).map_err(|e| err(e.to_string()))?;
            let domain = Domain::parse(&parsed.domain).map_err(|e| err(e.to_string()))?;
            let class: LabelClass = parsed.class.parse().map_err(err)?;
            let propaganda = parse_flag(&parsed.propaganda).map_err(err)?;
            let source = if parsed.source.is_empty() { default_source.to_string() } else { parsed.source };
            self.merge(domain, class, propaganda, &source);
        }
        Ok(())
    }

    /// Adds one curated label, resolving conflicts with the existing entry.
    pub fn merge(&mut self, domain: Domain, class: LabelClass, propaganda: bool, source: &str) {
        // A propaganda flag promotes the domain to misinformation.
        let class = if propaganda { LabelClass::Misinformation } else { class };
        let entry = self.labels.entry(domain.clone()).or_insert_with(|| DomainLabel {
            domain,
            class,
            propaganda,
            source: String::new(),
            added_at: None,
        });
        if class.rank() > entry.class.rank() {
            entry.class = class;
        }
        entry.propaganda |= propaganda;
        for part in source.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            if !entry.source.split(';').any(|s| s == part) {
                if !entry.source.is_empty() {
                    entry.source.push(';');
                }
                entry.source.push_str(part);
            }
        }
    }

    pub fn get(&self, domain: &str) -> Option<&DomainLabel> {
        self.labels.get(domain)
    }

    pub fn class_of(&self, domain: &str) -> LabelClass {
        self.labels.get(domain).map_or(LabelClass::Unlabeled, |l| l.class)
    }

    pub fn is_labeled(&self, domain: &str) -> bool {
        self.class_of(domain) != LabelClass::Unlabeled
    }

    pub fn is_misinformation(&self, domain: &str) -> bool {
        self.class_of(domain) == LabelClass::Misinformation
    }

    pub fn is_authoritative(&self, domain: &str) -> bool {
        self.class_of(domain) == LabelClass::Authoritative
    }

    pub fn is_propaganda(&self, domain: &str) -> bool {
        self.labels.get(domain).is_some_and(|l| l.propaganda)
    }

    /// Labeled domains in lexicographic order.
    pub fn labels(&self) -> impl Iterator<Item = &DomainLabel> + '_ {
        self.labels.values()
    }

    pub fn misinformation_domains(&self) -> impl Iterator<Item = &Domain> + '_ {
        self.labels.values().filter(|l| l.class == LabelClass::Misinformation).map(|l| &l.domain)
    }

    pub fn propaganda_domains(&self) -> impl Iterator<Item = &Domain> + '_ {
        self.labels.values().filter(|l| l.propaganda).map(|l| &l.domain)
    }

    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for l in self.labels.values() {
            match l.class {
                LabelClass::Misinformation => c.misinformation += 1,
                LabelClass::Authoritative => c.authoritative += 1,
                LabelClass::Unlabeled => c.unlabeled += 1,
            }
            c.propaganda += usize::from(l.propaganda);
        }
        c
    }

    pub fn review_verdict(&self, domain: &str) -> Option<Verdict> {
        self.reviews.get(domain).copied()
    }

    /// Events applied so far, in order.
    pub fn events(&self) -> &[ReviewEvent] {
        &self.events
    }

    /// Checks whether `event` may be applied, without changing the store.
    pub fn check_review(&self, event: &ReviewEvent) -> Result<ReviewOutcome, LabelError> {
        if let Some(existing) = self.reviews.get(&event.domain) {
            return if *existing == event.verdict {
                Ok(ReviewOutcome::Unchanged)
            } else {
                Err(LabelError::Conflict {
                    domain: event.domain.clone(),
                    existing: *existing,
                    requested: event.verdict,
                })
            };
        }
        if self.is_labeled(event.domain.as_str()) {
            return Err(LabelError::AlreadyLabeled(event.domain.clone()));
        }
        Ok(ReviewOutcome::Recorded)
    }

    /// Applies a review verdict in memory. Repeating an existing verdict is
    /// a no-op; a different verdict for an already reviewed domain is a
    /// conflict.
    pub fn add_review_label(&mut self, event: ReviewEvent) -> Result<ReviewOutcome, LabelError> {
        let outcome = self.check_review(&event)?;
        if outcome == ReviewOutcome::Recorded {
            self.apply_unchecked(event);
        }
        Ok(outcome)
    }

    fn apply_unchecked(&mut self, event: ReviewEvent) {
        let (class, propaganda) = event.verdict.label();
        self.labels.insert(
            event.domain.clone(),
            DomainLabel {
                domain: event.domain.clone(),
                class,
                propaganda,
                source: REVIEW_SOURCE.to_string(),
                added_at: Some(event.timestamp),
            },
        );
        self.reviews.insert(event.domain.clone(), event.verdict);
        self.events.push(event);
    }

    /// Replays logged events over a base store.
    pub fn replay(mut base: LabelStore, events: impl IntoIterator<Item = ReviewEvent>) -> Result<Self, LabelError> {
        for event in events {
            base.add_review_label(event)?;
        }
        Ok(base)
    }

    /// Writes the compacted store as a label CSV, preceded by a comment
    /// recording how many log events it covers.
    pub fn write_snapshot<W: Write>(&self, writer: W) -> Result<(), LabelError> {
        let mut writer = writer;
        writeln!(writer, "{SNAPSHOT_MAGIC}{}", self.events.len())?;
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["domain", "class", "propaganda", "source"])?;
        for l in self.labels.values() {
            wtr.write_record([
                l.domain.as_str(),
                l.class.as_str(),
                if l.propaganda { "true" } else { "false" },
                &l.source,
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Loads a snapshot and applies the log tail it does not cover.
    ///
    /// Review verdicts compacted into the snapshot are recovered from their
    /// `review` source tag, so conflict detection keeps working.
    pub fn from_snapshot(snapshot: &Path, log: &EventLog) -> Result<Self, LabelError> {
        let text = fs::read_to_string(snapshot)?;
        let first = text.lines().next().unwrap_or_default();
        let covered: usize = first
            .strip_prefix(SNAPSHOT_MAGIC)
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| LabelError::Parse {
                file: snapshot.display().to_string(),
                line: 1,
                reason: "missing snapshot header".into(),
            })?;
        let mut store = LabelStore::new();
        store.merge_reader(text.as_bytes(), &snapshot.display().to_string(), "snapshot")?;
        let events = log.read_all()?;
        let mut restored = Vec::new();
        for l in store.labels.values() {
            if l.source == REVIEW_SOURCE {
                let verdict = match (l.class, l.propaganda) {
                    (LabelClass::Misinformation, true) => Verdict::ConfirmedPropaganda,
                    (LabelClass::Misinformation, false) => Verdict::ConfirmedMisinformation,
                    _ => Verdict::Rejected,
                };
                restored.push((l.domain.clone(), verdict));
            }
        }
        store.reviews.extend(restored);
        store.events = events.iter().take(covered).cloned().collect();
        for event in events.into_iter().skip(covered) {
            store.add_review_label(event)?;
        }
        Ok(store)
    }
}

/// Append-only JSONL log of review events.
///
/// Each event is written with a single `write` of one complete line and
/// synced before returning. A torn final line (no trailing newline) is
/// ignored on read.
#[derive(Debug, Clone)]
pub struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        EventLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_all(&self) -> Result<Vec<ReviewEvent>, LabelError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut reader = BufReader::new(file);
        let mut events = Vec::new();
        let mut line = String::new();
        let mut line_no = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            line_no += 1;
            if !line.ends_with('\n') {
                tracing::warn!(path = %self.path.display(), line = line_no, "ignoring torn final log line");
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|e| LabelError::Parse {
                file: self.path.display().to_string(),
                line: line_no,
                reason: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(events)
    }

    pub fn append(&self, event: &ReviewEvent) -> Result<(), LabelError> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }
}

/// A label store whose review verdicts are persisted to an event log.
/// Writes go through `&mut self`, so callers serialize them.
#[derive(Debug)]
pub struct PersistentLabelStore {
    store: LabelStore,
    log: EventLog,
}

impl PersistentLabelStore {
    /// Loads curated label files and replays the log over them.
    pub fn open<P: AsRef<Path>>(label_files: &[P], log: EventLog) -> Result<Self, LabelError> {
        let base = LabelStore::load_labels(label_files)?;
        let store = LabelStore::replay(base, log.read_all()?)?;
        Ok(PersistentLabelStore { store, log })
    }

    pub fn with_store(store: LabelStore, log: EventLog) -> Self {
        PersistentLabelStore { store, log }
    }

    pub fn store(&self) -> &LabelStore {
        &self.store
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Validates, appends to the log, then applies in memory. A failed
    /// append leaves both the log and the store untouched.
    pub fn add_review_label(&mut self, event: ReviewEvent) -> Result<ReviewOutcome, LabelError> {
        match self.store.check_review(&event)? {
            ReviewOutcome::Unchanged => Ok(ReviewOutcome::Unchanged),
            ReviewOutcome::Recorded => {
                self.log.append(&event)?;
                self.store.apply_unchecked(event);
                Ok(ReviewOutcome::Recorded)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Google,
    Bing,
    DuckDuckGo,
    Social,
    News,
    Mail,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Google,
        Category::Bing,
        Category::DuckDuckGo,
        Category::Social,
        Category::News,
        Category::Mail,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Google => "google",
            Category::Bing => "bing",
            Category::DuckDuckGo => "duckduckgo",
            Category::Social => "social",
            Category::News => "news",
            Category::Mail => "mail",
        }
    }

    pub fn is_search_engine(&self) -> bool {
        matches!(self, Category::Google | Category::Bing | Category::DuckDuckGo)
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hosts of the search engines, social networks, news aggregators and mail
/// providers. Every host belongs to exactly one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryRegistry {
    hosts: BTreeMap<Domain, Category>,
}

impl Default for CategoryRegistry {
    fn default() -> Self {
        CategoryRegistry::from_reader(DEFAULT_CATEGORIES.as_bytes()).expect("bundled category table is valid")
    }
}

impl CategoryRegistry {
    pub fn empty() -> Self {
        CategoryRegistry { hosts: BTreeMap::new() }
    }

    /// Reads a `category,host` CSV.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, LabelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut registry = CategoryRegistry::empty();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |reason: String| LabelError::Parse { file: "categories".into(), line, reason };
            let category: Category = row.get(0).unwrap_or("").parse().map_err(err)?;
            let host = Domain::parse(row.get(1).unwrap_or("")).map_err(|e| err(e.to_string()))?;
            registry.insert(host, category)?;
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        Self::from_reader(File::open(path)?)
    }

    pub fn insert(&mut self, host: Domain, category: Category) -> Result<(), LabelError> {
        match self.hosts.get(&host) {
            Some(&first) if first != category => Err(LabelError::CategoryOverlap { host, first, second: category }),
            _ => {
                self.hosts.insert(host, category);
                Ok(())
            }
        }
    }

    pub fn category_of(&self, host: &str) -> Option<Category> {
        self.hosts.get(host).copied()
    }

    pub fn contains(&self, host: &str) -> bool {
        self.hosts.contains_key(host)
    }

    pub fn hosts(&self, category: Category) -> BTreeSet<&Domain> {
        self.hosts.iter().filter(|(_, c)| **c == category).map(|(h, _)| h).collect()
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), LabelError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["category", "host"])?;
        for (host, cat) in &self.hosts {
            wtr.write_record([cat.as_str(), host.as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Writes labels in the `domain,class,propaganda,source` format.
pub fn write_labels<'a, W: Write>(writer: W, labels: impl IntoIterator<Item = &'a DomainLabel>) -> Result<(), LabelError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["domain", "class", "propaganda", "source"])?;
    for l in labels {
        wtr.write_record([
            l.domain.as_str(),
            l.class.as_str(),
            if l.propaganda { "true" } else { "false" },
            &l.source,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> Domain {
        Domain::parse(s).unwrap()
    }

    fn ts(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + secs, 0).unwrap()
    }

    fn event(domain: &str, verdict: Verdict) -> ReviewEvent {
        ReviewEvent {
            domain: d(domain),
            verdict,
            reviewer: "alice".into(),
            timestamp: ts(0),
            run: None,
            checklist: None,
        }
    }

    fn store_from(files: &[&str]) -> LabelStore {
        let mut s = LabelStore::new();
        for (i, f) in files.iter().enumerate() {
            s.merge_reader(f.as_bytes(), "test", &format!("file{i}")).unwrap();
        }
        s
    }

    #[test]
    fn misinformation_wins_over_authoritative() {
        let s = store_from(&[
            "domain,class,propaganda,source\nx.com,authoritative,false,top\n",
            "domain,class,propaganda,source\nx.com,misinformation,false,newsguard\n",
        ]);
        let l = s.get("x.com").unwrap();
        assert_eq!(l.class, LabelClass::Misinformation);
        assert_eq!(l.source, "top;newsguard");
    }

    #[test]
    fn duplicate_misinformation_entries_merge() {
        let s = store_from(&[
            "domain,class,propaganda,source\nx.com,misinformation,false,newsguard\n",
            "domain,class,propaganda,source\nX.com,misinformation,0,gdi\n",
        ]);
        assert_eq!(s.counts().misinformation, 1);
        assert_eq!(s.get("x.com").unwrap().source, "newsguard;gdi");
    }

    #[test]
    fn propaganda_flag_promotes_to_misinformation() {
        let s = store_from(&[
            "domain,class,propaganda,source\np.ru,authoritative,true,experts\n",
            "domain,class,propaganda_flag,source\nq.ru,unlabeled,yes,experts\n",
        ]);
        for dom in ["p.ru", "q.ru"] {
            assert_eq!(s.class_of(dom), LabelClass::Misinformation);
            assert!(s.is_propaganda(dom));
        }
        assert_eq!(s.counts(), LabelCounts { misinformation: 2, authoritative: 0, unlabeled: 0, propaganda: 2 });
    }

    #[test]
    fn unknown_class_names_the_row() {
        let mut s = LabelStore::new();
        let err = s
            .merge_reader("domain,class,propaganda,source\na.com,misinformation,false,x\nb.com,dubious,false,x\n".as_bytes(), "l.csv", "x")
            .unwrap_err();
        match err {
            LabelError::Parse { file, line, reason } => {
                assert_eq!(file, "l.csv");
                assert_eq!(line, 3);
                assert!(reason.contains("dubious"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn review_verdicts() {
        let mut s = LabelStore::new();
        assert_eq!(s.add_review_label(event("c.com", Verdict::ConfirmedMisinformation)).unwrap(), ReviewOutcome::Recorded);
        assert!(s.is_misinformation("c.com"));
        assert_eq!(s.get("c.com").unwrap().source, REVIEW_SOURCE);

        s.add_review_label(event("r.com", Verdict::Rejected)).unwrap();
        assert_eq!(s.class_of("r.com"), LabelClass::Authoritative);

        s.add_review_label(event("p.com", Verdict::ConfirmedPropaganda)).unwrap();
        assert!(s.is_misinformation("p.com") && s.is_propaganda("p.com"));
        assert_eq!(s.events().len(), 3);

        assert_eq!(s.add_review_label(event("c.com", Verdict::ConfirmedMisinformation)).unwrap(), ReviewOutcome::Unchanged);
        assert_eq!(s.events().len(), 3);
        assert!(matches!(s.add_review_label(event("c.com", Verdict::Rejected)), Err(LabelError::Conflict { .. })));
        assert_eq!(s.events().len(), 3);
    }

    #[test]
    fn curated_labels_are_not_reviewable() {
        let mut s = store_from(&["domain,class,propaganda,source\nx.com,authoritative,false,top\ny.com,unlabeled,false,top\n"]);
        assert!(matches!(
            s.add_review_label(event("x.com", Verdict::ConfirmedMisinformation)),
            Err(LabelError::AlreadyLabeled(_))
        ));
        assert!(s.add_review_label(event("y.com", Verdict::ConfirmedMisinformation)).is_ok());
    }

    #[test]
    fn event_log_replays_and_ignores_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::new(dir.path().join("events.jsonl"));
        let mut p = PersistentLabelStore::with_store(LabelStore::new(), log.clone());
        p.add_review_label(event("a.com", Verdict::ConfirmedMisinformation)).unwrap();
        p.add_review_label(event("b.com", Verdict::Rejected)).unwrap();
        p.add_review_label(event("a.com", Verdict::ConfirmedMisinformation)).unwrap();
        assert_eq!(log.read_all().unwrap().len(), 2);

        let mut f = OpenOptions::new().append(true).open(log.path()).unwrap();
        f.write_all(b"{\"domain\":\"c.com\",\"verd").unwrap();
        let replayed = LabelStore::replay(LabelStore::new(), log.read_all().unwrap()).unwrap();
        assert_eq!(&replayed, p.store());

        let line = fs::read_to_string(log.path()).unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        for key in ["domain", "verdict", "reviewer", "timestamp"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn snapshot_plus_tail_equals_full_replay() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::new(dir.path().join("events.jsonl"));
        let base = store_from(&["domain,class,propaganda,source\nm.com,misinformation,false,ng\n"]);
        let mut p = PersistentLabelStore::with_store(base.clone(), log.clone());
        p.add_review_label(event("a.com", Verdict::ConfirmedPropaganda)).unwrap();
        let snap = dir.path().join("labels.snapshot.csv");
        p.store().write_snapshot(File::create(&snap).unwrap()).unwrap();
        p.add_review_label(event("b.com", Verdict::Rejected)).unwrap();

        let restored = LabelStore::from_snapshot(&snap, &log).unwrap();
        let full = LabelStore::replay(base, log.read_all().unwrap()).unwrap();
        assert_eq!(restored.counts(), full.counts());
        assert_eq!(restored.labels().map(|l| (&l.domain, l.class, l.propaganda)).collect::<Vec<_>>(),
                   full.labels().map(|l| (&l.domain, l.class, l.propaganda)).collect::<Vec<_>>());
        assert_eq!(restored.events().len(), 2);
        // Verdicts compacted into the snapshot still conflict.
        let mut restored = restored;
        assert!(restored.add_review_label(event("a.com", Verdict::Rejected)).is_err());
    }

    #[test]
    fn default_registry_is_disjoint_and_covers_named_hosts() {
        let r = CategoryRegistry::default();
        assert_eq!(r.category_of("www.google.com"), Some(Category::Google));
        assert_eq!(r.category_of("news.google.com"), Some(Category::News));
        assert_eq!(r.category_of("mail.yahoo.com"), Some(Category::Mail));
        assert_eq!(r.category_of("news.yahoo.com"), Some(Category::News));
        assert_eq!(r.category_of("web.whatsapp.com"), Some(Category::Social));
        assert_eq!(r.category_of("x.com"), Some(Category::Social));
        assert_eq!(r.category_of("duckduckgo.com"), Some(Category::DuckDuckGo));
        assert_eq!(r.category_of("example.org"), None);
        let overlap = "category,host\ngoogle,a.com\nsocial,a.com\n";
        assert!(matches!(CategoryRegistry::from_reader(overlap.as_bytes()), Err(LabelError::CategoryOverlap { .. })));
        let mut buf = Vec::new();
        r.write(&mut buf).unwrap();
        assert_eq!(CategoryRegistry::from_reader(buf.as_slice()).unwrap(), r);
    }

    proptest! {
        /// Any sequence of review attempts leaves one label per domain and
        /// replays to the same store.
        #[test]
        fn replay_is_deterministic(ops in prop::collection::vec((0u8..6, 0u8..3), 0..40)) {
            let mut s = LabelStore::new();
            for (dom, v) in ops {
                let verdict = [Verdict::ConfirmedMisinformation, Verdict::ConfirmedPropaganda, Verdict::Rejected][v as usize];
                let _ = s.add_review_label(event(&format!("d{dom}.com"), verdict));
            }
            let replayed = LabelStore::replay(LabelStore::new(), s.events().to_vec()).unwrap();
            prop_assert_eq!(&replayed, &s);
            let reviewed: BTreeSet<_> = s.events().iter().map(|e| e.domain.clone()).collect();
            prop_assert_eq!(reviewed.len(), s.events().len());
            for l in s.labels() {
                prop_assert!(!l.propaganda || l.class == LabelClass::Misinformation);
            }
        }
    }
}
