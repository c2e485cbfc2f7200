//! Referrer log parsing, monthly aggregation and the domain privacy floor.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, DomainError, Month};

/// Default domain floor on total monthly page views.
pub const DEFAULT_PRIVACY_FLOOR: u64 = 3000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?} in header")]
    MissingColumn(&'static str),
    #[error("no valid traffic rows ({malformed} malformed)")]
    EmptyInput { malformed: usize },
    #[error("alias file line {line}: {reason}")]
    Alias { line: u64, reason: String },
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::Io { .. } => "io",
            IngestError::Csv(_) => "csv",
            IngestError::MissingColumn(_) => "missing_column",
            IngestError::EmptyInput { .. } => "empty_input",
            IngestError::Alias { .. } => "alias",
        }
    }
}

/// One aggregated `(month, referrer, target)` page-view observation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub month: Month,
    pub referrer: Domain,
    pub target: Domain,
    pub page_views: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for LogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(LogFormat::Csv),
            "jsonl" | "ndjson" => Ok(LogFormat::Jsonl),
            other => Err(format!("unknown log format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedRow {
    /// 1-based line number in the input.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub records: Vec<TrafficRecord>,
    pub malformed: Vec<MalformedRow>,
}

/// Parses a referrer log file. Rows that fail validation are skipped and
/// reported in [`ParsedLog::malformed`].
pub fn parse_log(path: &Path, format: LogFormat) -> Result<ParsedLog, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_reader(BufReader::new(file), format).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn parse_reader<R: Read>(reader: R, format: LogFormat) -> Result<ParsedLog, IngestError> {
    let parsed = match format {
        LogFormat::Csv => parse_csv(reader)?,
        LogFormat::Jsonl => parse_jsonl(reader)?,
    };
    if parsed.records.is_empty() {
        return Err(IngestError::EmptyInput {
            malformed: parsed.malformed.len(),
        });
    }
    Ok(parsed)
}

enum MonthSource {
    Month(usize),
    Timestamp(usize),
}

fn parse_csv<R: Read>(reader: R) -> Result<ParsedLog, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let month = match (col("month"), col("timestamp")) {
        (Some(i), _) => MonthSource::Month(i),
        (None, Some(i)) => MonthSource::Timestamp(i),
        (None, None) => return Err(IngestError::MissingColumn("month")),
    };
    let referrer = col("referrer").ok_or(IngestError::MissingColumn("referrer"))?;
    let target = col("target").ok_or(IngestError::MissingColumn("target"))?;
    let views = col("page_views").ok_or(IngestError::MissingColumn("page_views"))?;

    let mut out = ParsedLog::default();
    for (i, row) in rdr.records().enumerate() {
        let line = row
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map(|p| p.line())
            .unwrap_or(i as u64 + 2);
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                out.malformed.push(MalformedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let text = |i: usize| row.get(i).map(str::to_string);
        let (month_text, timestamp) = match month {
            MonthSource::Month(i) => (text(i), None),
            MonthSource::Timestamp(i) => (None, text(i)),
        };
        let fields = RawRow {
            month: month_text,
            timestamp,
            referrer: text(referrer),
            target: text(target),
            page_views: text(views).map(RawCount::Text),
        };
        match fields.validate() {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.malformed.push(MalformedRow { line, reason }),
        }
    }
    Ok(out)
}

fn parse_jsonl<R: Read>(reader: R) -> Result<ParsedLog, IngestError> {
    let mut out = ParsedLog::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| IngestError::Io { path: String::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRow>(&line)
            .map_err(|e| e.to_string())
            .and_then(|raw| raw.validate());
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.malformed.push(MalformedRow { line: line_no, reason }),
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawCount {
    Number(serde_json::Number),
    Text(String),
}

#[derive(Debug, Deserialize)]
struct RawRow {
    month: Option<String>,
    timestamp: Option<String>,
    referrer: Option<String>,
    target: Option<String>,
    page_views: Option<RawCount>,
}

impl RawRow {
    fn validate(self) -> Result<TrafficRecord, String> {
        let month = match (self.month, self.timestamp) {
            (Some(m), _) => m.parse::<Month>().map_err(|e| e.to_string())?,
            (None, Some(ts)) => Month::from_timestamp(&ts).map_err(|e| e.to_string())?,
            (None, None) => return Err("missing month".into()),
        };
        let referrer = parse_host(self.referrer, "referrer")?;
        let target = parse_host(self.target, "target")?;
        if referrer == target {
            return Err(format!("self-referral on {referrer}"));
        }
        let page_views = match self.page_views {
            Some(RawCount::Number(n)) => n.as_u64(),
            Some(RawCount::Text(s)) => s.trim().parse::<u64>().ok(),
            None => return Err("missing page_views".into()),
        }
        .ok_or_else(|| "page_views is not a non-negative integer".to_string())?;
        if page_views == 0 {
            return Err("page_views must be at least 1".into());
        }
        Ok(TrafficRecord { month, referrer, target, page_views })
    }
}

fn parse_host(raw: Option<String>, field: &str) -> Result<Domain, String> {
    let raw = raw.ok_or_else(|| format!("missing {field}"))?;
    Domain::parse(&raw).map_err(|e: DomainError| format!("{field}: {e}"))
}

/// Host variant collapsing (`www.rt.com` → `rt.com`), loaded from a
/// `from_host,to_host` CSV.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    map: HashMap<Domain, Domain>,
}

impl AliasTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut map = HashMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |reason: String| IngestError::Alias { line, reason };
            let from = Domain::parse(row.get(0).unwrap_or("")).map_err(|e| err(e.to_string()))?;
            let to = Domain::parse(row.get(1).unwrap_or("")).map_err(|e| err(e.to_string()))?;
            if from != to {
                map.insert(from, to);
            }
        }
        let table = AliasTable { map };
        for from in table.map.keys() {
            if table.map.contains_key(table.resolve(from)) {
                return Err(IngestError::Alias {
                    line: 0,
                    reason: format!("alias chain through {from}"),
                });
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn insert(&mut self, from: Domain, to: Domain) {
        self.map.insert(from, to);
    }

    pub fn resolve<'a>(&'a self, host: &'a Domain) -> &'a Domain {
        self.map.get(host).unwrap_or(host)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Rewrites hosts through the table. Records that collapse into a
    /// self-referral are dropped; the second value counts them.
    pub fn apply(&self, records: Vec<TrafficRecord>) -> (Vec<TrafficRecord>, usize) {
        if self.map.is_empty() {
            return (records, 0);
        }
        let mut dropped = 0;
        let out = records
            .into_iter()
            .filter_map(|mut r| {
                r.referrer = self.resolve(&r.referrer).clone();
                r.target = self.resolve(&r.target).clone();
                if r.referrer == r.target {
                    dropped += 1;
                    None
                } else {
                    Some(r)
                }
            })
            .collect();
        (out, dropped)
    }
}

/// Sums page views per `(month, referrer, target)`.
///
/// Each month's records come back sorted by `(referrer, target)`, so the
/// output depends only on the input multiset.
pub fn aggregate_month(records: &[TrafficRecord]) -> BTreeMap<Month, Vec<TrafficRecord>> {
    let mut sums: BTreeMap<(Month, &Domain, &Domain), u64> = BTreeMap::new();
    for r in records {
        let slot = sums.entry((r.month, &r.referrer, &r.target)).or_insert(0);
        *slot = slot.saturating_add(r.page_views);
    }
    let mut out: BTreeMap<Month, Vec<TrafficRecord>> = BTreeMap::new();
    for ((month, referrer, target), page_views) in sums {
        out.entry(month).or_default().push(TrafficRecord {
            month,
            referrer: referrer.clone(),
            target: target.clone(),
            page_views,
        });
    }
    out
}

/// Which page views count toward a domain's monthly total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorBasis {
    #[default]
    InboundOutbound,
    InboundOnly,
}

/// Removes every domain whose monthly total is not strictly above `floor`,
/// together with all of its records.
///
/// Removal lowers the totals of neighbouring domains, so this peels until
/// no remaining domain is at or below the floor. The result is a fixpoint and
/// applying the floor again changes nothing. Surviving records keep their
/// input order.
pub fn apply_privacy_floor(records: &[TrafficRecord], floor: u64, basis: FloorBasis) -> Vec<TrafficRecord> {
    let mut totals: HashMap<(Month, &Domain), u64> = HashMap::new();
    let mut incident: HashMap<(Month, &Domain), Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let src = (r.month, &r.referrer);
        let dst = (r.month, &r.target);
        *totals.entry(dst).or_insert(0) += r.page_views;
        let src_total = totals.entry(src).or_insert(0);
        if basis == FloorBasis::InboundOutbound {
            *src_total += r.page_views;
        }
        incident.entry(src).or_default().push(i);
        incident.entry(dst).or_default().push(i);
    }

    let mut removed: HashSet<(Month, &Domain)> = HashSet::new();
    let mut queue: VecDeque<(Month, &Domain)> = VecDeque::new();
    for (&key, &total) in &totals {
        if total <= floor {
            removed.insert(key);
            queue.push_back(key);
        }
    }
    let mut alive = vec![true; records.len()];
    while let Some(key) = queue.pop_front() {
        for &i in &incident[&key] {
            if !alive[i] {
                continue;
            }
            alive[i] = false;
            let r = &records[i];
            let (src, dst) = ((r.month, &r.referrer), (r.month, &r.target));
            let mut touched = vec![dst];
            if basis == FloorBasis::InboundOutbound {
                touched.push(src);
            }
            for other in touched {
                if other == key || removed.contains(&other) {
                    continue;
                }
                let t = totals.get_mut(&other).expect("endpoint has a total");
                *t -= r.page_views;
                if *t <= floor {
                    removed.insert(other);
                    queue.push_back(other);
                }
            }
        }
    }
    records
        .iter()
        .zip(alive)
        .filter(|(_, keep)| *keep)
        .map(|(r, _)| r.clone())
        .collect()
}

/// Writes records in the ingest CSV format (`month,referrer,target,page_views`).
pub fn write_records<W: Write>(writer: W, records: &[TrafficRecord]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["month", "referrer", "target", "page_views"])?;
    for r in records {
        wtr.write_record([
            r.month.to_string(),
            r.referrer.to_string(),
            r.target.to_string(),
            r.page_views.to_string(),
        ])?;
    }
    wtr.flush().map_err(|source| IngestError::Io { path: String::new(), source })?;
    Ok(())
}
