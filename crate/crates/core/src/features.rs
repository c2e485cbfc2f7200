//! Traffic features of a domain in one month's navigation graph.
//!
//! Every `to_*` share is page views sent to that group divided by the
//! domain's outbound total; every `from_*` share is page views received from
//! the group divided by the inbound total. A zero total yields zero shares.
//! Traffic totals enter as `log10(1 + total)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;
use crate::graph::NavigationGraph;
use crate::labels::{Category, CategoryRegistry, LabelClass, LabelStore};
use crate::matrix::Matrix;

const SCHEMA_PREFIX: &str = "# schema: ";
const HOST_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("domain {0} is not in the graph")]
    NotFound(Domain),
    #[error("{} of {} domains missing from the graph", missing.len(), missing.len() + partial.n_rows())]
    Partial { partial: Box<FeatureMatrix>, missing: Vec<Domain> },
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("feature file line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl FeatureError {
    pub fn code(&self) -> &'static str {
        match self {
            FeatureError::NotFound(_) | FeatureError::Partial { .. } => "not_found",
            FeatureError::SchemaMismatch { .. } => "schema_mismatch",
            FeatureError::Parse { .. } | FeatureError::Csv(_) => "parse",
            FeatureError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Misinformation vs not.
    Binary,
    /// Adds the propaganda shares for the three-class model.
    Multiclass,
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(FeatureMode::Binary),
            "multiclass" | "multi-class" => Ok(FeatureMode::Multiclass),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Column layout of a feature matrix. Two matrices are compatible iff their
/// schemas are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: String,
    pub columns: Vec<String>,
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} columns)", self.version, self.columns.len())
    }
}

impl FeatureSchema {
    pub fn traffic(mode: FeatureMode) -> Self {
        let mut columns = vec!["inbound_traffic_log".to_string(), "outbound_traffic_log".to_string()];
        for dir in ["to", "from"] {
            for group in group_names(mode) {
                columns.push(format!("{dir}_{group}"));
            }
        }
        columns.push("inbound_egonets".into());
        columns.push("outbound_egonets".into());
        let version = match mode {
            FeatureMode::Binary => "traffic-binary-v1",
            FeatureMode::Multiclass => "traffic-multiclass-v1",
        };
        FeatureSchema { version: version.into(), columns }
    }

    pub fn mode(&self) -> FeatureMode {
        if self.version.starts_with("traffic-multiclass") {
            FeatureMode::Multiclass
        } else {
            FeatureMode::Binary
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn position(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn ensure_eq(&self, other: &FeatureSchema) -> Result<(), FeatureError> {
        if self == other {
            Ok(())
        } else {
            Err(FeatureError::SchemaMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            })
        }
    }
}

fn group_names(mode: FeatureMode) -> Vec<&'static str> {
    let mut g = vec!["misinformation", "authoritative"];
    if mode == FeatureMode::Multiclass {
        g.push("propaganda");
    }
    g.extend(["google", "bing", "duckduckgo", "social", "news", "mail"]);
    g
}

/// Shares of one direction's traffic going to (or coming from) each group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupShares {
    pub misinformation: f64,
    pub authoritative: f64,
    pub propaganda: f64,
    pub google: f64,
    pub bing: f64,
    pub duckduckgo: f64,
    pub social: f64,
    pub news: f64,
    pub mail: f64,
}

impl GroupShares {
    fn add(&mut self, weight: f64, class: LabelClass, propaganda: bool, category: Option<Category>) {
        match class {
            LabelClass::Misinformation => self.misinformation += weight,
            LabelClass::Authoritative => self.authoritative += weight,
            LabelClass::Unlabeled => {}
        }
        if propaganda {
            self.propaganda += weight;
        }
        match category {
            Some(Category::Google) => self.google += weight,
            Some(Category::Bing) => self.bing += weight,
            Some(Category::DuckDuckGo) => self.duckduckgo += weight,
            Some(Category::Social) => self.social += weight,
            Some(Category::News) => self.news += weight,
            Some(Category::Mail) => self.mail += weight,
            None => {}
        }
    }

    fn normalized(mut self, total: f64) -> Self {
        if total <= 0.0 {
            return GroupShares::default();
        }
        for v in self.values_mut() {
            *v /= total;
        }
        self
    }

    fn values_mut(&mut self) -> [&mut f64; 9] {
        [
            &mut self.misinformation,
            &mut self.authoritative,
            &mut self.propaganda,
            &mut self.google,
            &mut self.bing,
            &mut self.duckduckgo,
            &mut self.social,
            &mut self.news,
            &mut self.mail,
        ]
    }

    fn push_values(&self, mode: FeatureMode, out: &mut Vec<f64>) {
        out.push(self.misinformation);
        out.push(self.authoritative);
        if mode == FeatureMode::Multiclass {
            out.push(self.propaganda);
        }
        out.extend([self.google, self.bing, self.duckduckgo, self.social, self.news, self.mail]);
    }

    /// Sum of the category shares (the six category host sets are disjoint).
    pub fn category_sum(&self) -> f64 {
        self.google + self.bing + self.duckduckgo + self.social + self.news + self.mail
    }
}

/// The traffic features of one domain in one month.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub inbound_total: u64,
    pub outbound_total: u64,
    pub inbound_traffic_log: f64,
    pub outbound_traffic_log: f64,
    pub to: GroupShares,
    pub from: GroupShares,
    /// Misinformation domains whose inbound 1-hop egonet contains this
    /// domain, i.e. labeled misinformation successors.
    pub inbound_egonets: u32,
    /// Misinformation domains whose outbound 1-hop egonet contains this
    /// domain, i.e. labeled misinformation predecessors.
    pub outbound_egonets: u32,
}

impl FeatureVector {
    /// Values in [`FeatureSchema::traffic`] column order.
    pub fn values(&self, mode: FeatureMode) -> Vec<f64> {
        let mut out = Vec::with_capacity(22);
        out.push(self.inbound_traffic_log);
        out.push(self.outbound_traffic_log);
        self.to.push_values(mode, &mut out);
        self.from.push_values(mode, &mut out);
        out.push(f64::from(self.inbound_egonets));
        out.push(f64::from(self.outbound_egonets));
        out
    }
}

/// Everything feature extraction reads besides the graph.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub store: &'a LabelStore,
    pub registry: &'a CategoryRegistry,
    pub mode: FeatureMode,
    pub hosts: Option<&'a HostEncoder>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(store: &'a LabelStore, registry: &'a CategoryRegistry, mode: FeatureMode) -> Self {
        FeatureContext { store, registry, mode, hosts: None }
    }

    pub fn with_hosts(mut self, hosts: &'a HostEncoder) -> Self {
        self.hosts = Some(hosts);
        self
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut schema = FeatureSchema::traffic(self.mode);
        if let Some(h) = self.hosts {
            schema.version.push_str("+host-v1");
            schema.columns.extend(h.columns());
        }
        schema
    }

    /// The row of a domain absent from the graph: zero traffic, plus its
    /// host block when enabled.
    pub fn zero_row(&self, domain: &str) -> Vec<f64> {
        let mut row = FeatureVector::default().values(self.mode);
        if let Some(h) = self.hosts {
            row.extend(h.encode(domain));
        }
        row
    }
}

pub fn extract_features(
    graph: &NavigationGraph,
    store: &LabelStore,
    registry: &CategoryRegistry,
    domain: &str,
) -> Result<FeatureVector, FeatureError> {
    let id = graph
        .node_id(domain)
        .ok_or_else(|| FeatureError::NotFound(Domain::parse(domain).unwrap_or_else(|_| placeholder(domain))))?;
    Ok(extract_by_id(graph, store, registry, id))
}

fn placeholder(raw: &str) -> Domain {
    // Only reached for strings that are not valid hosts, which cannot be
    // graph nodes anyway.
    Domain::parse(&raw.replace(|c: char| !c.is_alphanumeric(), "-")).unwrap_or_else(|_| Domain::parse("invalid").unwrap())
}

/// Features of node `id`. Reads only the node's incident edges.
pub fn extract_by_id(graph: &NavigationGraph, store: &LabelStore, registry: &CategoryRegistry, id: usize) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let mut to = GroupShares::default();
    let mut from = GroupShares::default();
    let this = graph.name(id).as_str();

    for &(t, w) in graph.successor_ids(id) {
        let other = graph.name(t as usize).as_str();
        if other == this {
            continue;
        }
        fv.outbound_total += w;
        let class = store.class_of(other);
        to.add(w as f64, class, store.is_propaganda(other), registry.category_of(other));
        if class == LabelClass::Misinformation {
            fv.inbound_egonets += 1;
        }
    }
    for &(s, w) in graph.predecessor_ids(id) {
        let other = graph.name(s as usize).as_str();
        if other == this {
            continue;
        }
        fv.inbound_total += w;
        let class = store.class_of(other);
        from.add(w as f64, class, store.is_propaganda(other), registry.category_of(other));
        if class == LabelClass::Misinformation {
            fv.outbound_egonets += 1;
        }
    }
    fv.inbound_traffic_log = (1.0 + fv.inbound_total as f64).log10();
    fv.outbound_traffic_log = (1.0 + fv.outbound_total as f64).log10();
    fv.to = to.normalized(fv.outbound_total as f64);
    fv.from = from.normalized(fv.inbound_total as f64);
    fv
}

/// Domains as rows, schema columns as columns. Rows are sorted by domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub domains: Vec<Domain>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn empty(schema: FeatureSchema) -> Self {
        let n = schema.len();
        FeatureMatrix { schema, domains: Vec::new(), values: Matrix::zeros(0, n) }
    }

    pub fn n_rows(&self) -> usize {
        self.domains.len()
    }

    pub fn row_of(&self, domain: &str) -> Option<usize> {
        self.domains.binary_search_by(|d| d.as_str().cmp(domain)).ok()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Column values as a name → value map (for display).
    pub fn named_row(&self, i: usize) -> BTreeMap<String, f64> {
        self.schema.columns.iter().cloned().zip(self.row(i).iter().copied()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), FeatureError> {
        writeln!(writer, "{SCHEMA_PREFIX}{}", self.schema.version)?;
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["domain".to_string()];
        header.extend(self.schema.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (i, d) in self.domains.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        self.write_csv(io::BufWriter::new(File::create(path)?))
    }

    /// Reads a matrix written by [`FeatureMatrix::write_csv`]. Values
    /// round-trip bit-exactly.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FeatureError> {
        let mut reader = BufReader::new(reader);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let version = first
            .trim_end()
            .strip_prefix(SCHEMA_PREFIX)
            .ok_or_else(|| FeatureError::Parse { line: 1, reason: "missing schema comment".into() })?
            .to_string();
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("domain") {
            return Err(FeatureError::Parse { line: 2, reason: "first column must be domain".into() });
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let n_cols = columns.len();
        let mut rows: Vec<(Domain, Vec<f64>)> = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i as u64 + 3;
            let err = |reason: String| FeatureError::Parse { line, reason };
            if row.len() != n_cols + 1 {
                return Err(err(format!("expected {} fields", n_cols + 1)));
            }
            let domain = Domain::parse(&row[0]).map_err(|e| err(e.to_string()))?;
            let values = row
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((domain, values));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(FeatureError::Parse { line: 0, reason: "duplicate domain rows".into() });
        }
        let domains = rows.iter().map(|(d, _)| d.clone()).collect();
        let values = Matrix::from_rows(n_cols, rows.into_iter().map(|(_, v)| v));
        Ok(FeatureMatrix { schema: FeatureSchema { version, columns }, domains, values })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::read_csv(File::open(path)?)
    }
}

fn sorted_unique<'d>(domains: impl IntoIterator<Item = &'d Domain>) -> Vec<Domain> {
    let set: BTreeSet<&Domain> = domains.into_iter().collect();
    set.into_iter().cloned().collect()
}

fn row_for(graph: &NavigationGraph, ctx: &FeatureContext<'_>, id: usize) -> Vec<f64> {
    let fv = extract_by_id(graph, ctx.store, ctx.registry, id);
    let mut row = fv.values(ctx.mode);
    if let Some(h) = ctx.hosts {
        row.extend(h.encode(graph.name(id).as_str()));
    }
    row
}

/// Batch extraction, rows sorted by domain. Domains absent from the graph
/// produce [`FeatureError::Partial`] carrying the rows that did succeed.
pub fn extract_matrix<'d>(
    graph: &NavigationGraph,
    ctx: &FeatureContext<'_>,
    domains: impl IntoIterator<Item = &'d Domain>,
) -> Result<FeatureMatrix, FeatureError> {
    let domains = sorted_unique(domains);
    let (present, missing): (Vec<Domain>, Vec<Domain>) =
        domains.into_iter().partition(|d| graph.contains(d.as_str()));
    let schema = ctx.schema();
    let rows: Vec<Vec<f64>> = present
        .par_iter()
        .map(|d| row_for(graph, ctx, graph.node_id(d.as_str()).expect("present")))
        .collect();
    let matrix = FeatureMatrix {
        values: Matrix::from_rows(schema.len(), rows),
        schema,
        domains: present,
    };
    if missing.is_empty() {
        Ok(matrix)
    } else {
        Err(FeatureError::Partial { partial: Box::new(matrix), missing })
    }
}

/// Like [`extract_matrix`], but domains absent from the graph get zero-traffic
/// rows. The second value lists them.
pub fn extract_matrix_filled<'d>(
    graph: &NavigationGraph,
    ctx: &FeatureContext<'_>,
    domains: impl IntoIterator<Item = &'d Domain>,
) -> (FeatureMatrix, Vec<Domain>) {
    let domains = sorted_unique(domains);
    let schema = ctx.schema();
    let rows: Vec<(Vec<f64>, bool)> = domains
        .par_iter()
        .map(|d| match graph.node_id(d.as_str()) {
            Some(id) => (row_for(graph, ctx, id), false),
            None => (ctx.zero_row(d.as_str()), true),
        })
        .collect();
    let filled = domains.iter().zip(&rows).filter(|(_, (_, f))| *f).map(|(d, _)| d.clone()).collect();
    let matrix = FeatureMatrix {
        values: Matrix::from_rows(schema.len(), rows.into_iter().map(|(r, _)| r)),
        schema,
        domains,
    };
    (matrix, filled)
}

/// Zero-filled matrices for `domains` in every month's graph.
pub fn extract_by_month<'d>(
    graphs: &[NavigationGraph],
    ctx: &FeatureContext<'_>,
    domains: impl IntoIterator<Item = &'d Domain> + Clone,
) -> BTreeMap<crate::domain::Month, FeatureMatrix> {
    graphs
        .iter()
        .map(|g| (g.month(), extract_matrix_filled(g, ctx, domains.clone()).0))
        .collect()
}

/// Registrar, creation year, registrant country and DNSSEC of one domain.
/// Missing values stay `None` and encode as `unknown`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostFeatures {
    pub registrar: Option<String>,
    pub creation_year: Option<String>,
    pub registrant_country: Option<String>,
    pub dnssec: Option<String>,
}

impl HostFeatures {
    fn fields(&self) -> [Option<&str>; 4] {
        [
            self.registrar.as_deref(),
            self.creation_year.as_deref(),
            self.registrant_country.as_deref(),
            self.dnssec.as_deref(),
        ]
    }
}

const HOST_FIELDS: [&str; 4] = ["registrar", "creation_year", "registrant_country", "dnssec"];

/// Reads `domain,registrar,creation_year,registrant_country,dnssec`.
pub fn load_host_features<R: Read>(reader: R) -> Result<BTreeMap<Domain, HostFeatures>, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |n: &str| header.iter().position(|h| h == n);
    let domain_col = col("domain").ok_or(FeatureError::Parse { line: 1, reason: "missing domain column".into() })?;
    let cols: Vec<Option<usize>> = HOST_FIELDS.iter().map(|f| col(f)).collect();
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let domain = Domain::parse(row.get(domain_col).unwrap_or(""))
            .map_err(|e| FeatureError::Parse { line, reason: e.to_string() })?;
        let get = |i: usize| {
            cols[i]
                .and_then(|c| row.get(c))
                .map(str::trim)
                .filter(|v| !v.is_empty() && !v.eq_ignore_ascii_case("unknown"))
                .map(str::to_string)
        };
        out.insert(
            domain,
            HostFeatures { registrar: get(0), creation_year: get(1), registrant_country: get(2), dnssec: get(3) },
        );
    }
    Ok(out)
}

/// One-hot encoder for the host block: the 20 most frequent values of each
/// field get a column, the rest fall into `other`, missing into `unknown`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostEncoder {
    vocab: [Vec<String>; 4],
    table: BTreeMap<Domain, HostFeatures>,
}

impl HostEncoder {
    /// Fits vocabularies on the host records of `domains`.
    pub fn fit<'d>(table: BTreeMap<Domain, HostFeatures>, domains: impl IntoIterator<Item = &'d Domain>) -> Self {
        let mut counts: [HashMap<&str, usize>; 4] = Default::default();
        for d in domains {
            if let Some(h) = table.get(d) {
                for (i, v) in h.fields().into_iter().enumerate() {
                    if let Some(v) = v {
                        *counts[i].entry(v).or_default() += 1;
                    }
                }
            }
        }
        let vocab = counts.map(|c| {
            let mut v: Vec<(&str, usize)> = c.into_iter().collect();
            v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            v.into_iter().take(HOST_TOP_K).map(|(s, _)| s.to_string()).collect::<Vec<_>>()
        });
        HostEncoder { vocab, table }
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for (field, vocab) in HOST_FIELDS.iter().zip(&self.vocab) {
            for v in vocab {
                cols.push(format!("host_{field}={v}"));
            }
            cols.push(format!("host_{field}=other"));
            cols.push(format!("host_{field}=unknown"));
        }
        cols
    }

    pub fn encode(&self, domain: &str) -> Vec<f64> {
        let host = self.table.get(domain);
        let mut out = Vec::new();
        for (i, vocab) in self.vocab.iter().enumerate() {
            let value = host.and_then(|h| h.fields()[i]);
            let mut block = vec![0.0; vocab.len() + 2];
            match value {
                None => block[vocab.len() + 1] = 1.0,
                Some(v) => match vocab.iter().position(|x| x == v) {
                    Some(p) => block[p] = 1.0,
                    None => block[vocab.len()] = 1.0,
                },
            }
            out.extend(block);
        }
        out
    }
}
