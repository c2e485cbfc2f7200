//! Seeded synthetic referrer traffic with planted communities.
//!
//! Misinformation sites send most of their outbound traffic to each other
//! and draw a large share of visits from social media; authoritative sites
//! live on search traffic and almost never link to misinformation.
//! Propaganda sites form a denser cluster inside the misinformation
//! community. A fraction of misinformation sites is "isolated" (little
//! intra-community traffic, social-heavy), and a fraction of benign sites
//! is "fringe" (a social-heavy community of its own), which makes the
//! unfiltered deployment noisy.
//!
//! Each node keeps a fixed partner structure; every month keeps each edge
//! with a fixed probability and redraws its weight.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, Month};
use crate::ingest::{write_records, IngestError, TrafficRecord};
use crate::labels::{write_labels, Category, CategoryRegistry, DomainLabel, LabelClass, LabelError, LabelStore};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidConfig(_) => "invalid_config",
            SynthError::Json(_) | SynthError::Csv(_) => "parse",
            SynthError::Ingest(e) => e.code(),
            SynthError::Labels(e) => e.code(),
            SynthError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Labeled misinformation domains, propaganda included.
    pub n_misinformation: usize,
    /// Labeled propaganda domains, a subset of the labeled misinformation.
    pub n_propaganda: usize,
    pub n_authoritative: usize,
    /// Planted misinformation that ships without a label.
    pub n_unlabeled_misinfo: usize,
    /// Planted propaganda among the unlabeled misinformation.
    pub n_unlabeled_propaganda: usize,
    pub n_benign_unlabeled: usize,
    pub months: usize,
    pub start_month: Month,
    /// Fraction of a misinformation site's outbound links that stay in the
    /// misinformation community.
    pub intra_misinfo_share: f64,
    /// Expected share of a misinformation site's inbound traffic from search.
    pub search_referral_share: f64,
    /// Expected share of a misinformation site's inbound traffic from social.
    pub social_referral_share: f64,
    pub isolated_fraction: f64,
    pub fringe_fraction: f64,
    /// Probability an edge of the fixed structure appears in a given month.
    pub edge_keep_prob: f64,
    /// Page views per unit of edge weight.
    pub traffic_scale: u64,
    /// Floor for structural edge weights.
    pub edge_threshold: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_misinformation: 700,
            n_propaganda: 100,
            n_authoritative: 1100,
            n_unlabeled_misinfo: 120,
            n_unlabeled_propaganda: 20,
            n_benign_unlabeled: 3000,
            months: 3,
            start_month: Month::new(2022, 10).expect("valid month"),
            intra_misinfo_share: 0.8,
            search_referral_share: 0.15,
            social_referral_share: 0.25,
            isolated_fraction: 0.1,
            fringe_fraction: 0.05,
            edge_keep_prob: 0.85,
            traffic_scale: 3000,
            edge_threshold: 3000,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let cfg: SynthConfig = serde_json::from_reader(File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.n_propaganda > self.n_misinformation {
            return bad("n_propaganda exceeds n_misinformation");
        }
        if self.n_unlabeled_propaganda > self.n_unlabeled_misinfo {
            return bad("n_unlabeled_propaganda exceeds n_unlabeled_misinfo");
        }
        if self.months == 0 {
            return bad("months must be at least 1");
        }
        for (name, v) in [
            ("intra_misinfo_share", self.intra_misinfo_share),
            ("search_referral_share", self.search_referral_share),
            ("social_referral_share", self.social_referral_share),
            ("isolated_fraction", self.isolated_fraction),
            ("fringe_fraction", self.fringe_fraction),
            ("edge_keep_prob", self.edge_keep_prob),
        ] {
            if !unit(v) {
                return Err(SynthError::InvalidConfig(format!("{name} must be in [0, 1]")));
            }
        }
        if self.search_referral_share + self.social_referral_share > 0.95 {
            return bad("search and social shares must leave room for other referrers");
        }
        if self.traffic_scale == 0 || self.edge_threshold == 0 {
            return bad("traffic_scale and edge_threshold must be positive");
        }
        Ok(())
    }

    pub fn month_list(&self) -> Vec<Month> {
        std::iter::successors(Some(self.start_month), |m| Some(m.succ())).take(self.months).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hub,
    Misinformation,
    Propaganda,
    Authoritative,
    Benign,
    Fringe,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Hub => "hub",
            Role::Misinformation => "misinformation",
            Role::Propaganda => "propaganda",
            Role::Authoritative => "authoritative",
            Role::Benign => "benign",
            Role::Fringe => "fringe",
        }
    }

    pub fn is_misinformation(&self) -> bool {
        matches!(self, Role::Misinformation | Role::Propaganda)
    }
}

/// Ground truth for one generated domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub domain: Domain,
    pub role: Role,
    pub labeled: bool,
    pub isolated: bool,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub months: Vec<Month>,
    /// Sorted by month, referrer, target.
    pub records: Vec<TrafficRecord>,
    pub labels: Vec<DomainLabel>,
    /// Sorted by domain.
    pub truth: Vec<TruthRow>,
}

impl SynthOutput {
    pub fn label_store(&self) -> LabelStore {
        let mut s = LabelStore::new();
        for l in &self.labels {
            s.merge(l.domain.clone(), l.class, l.propaganda, &l.source);
        }
        s
    }

    pub fn truth_of(&self, domain: &str) -> Option<&TruthRow> {
        self.truth.binary_search_by(|t| t.domain.as_str().cmp(domain)).ok().map(|i| &self.truth[i])
    }

    pub fn records_for(&self, month: Month) -> Vec<TrafficRecord> {
        self.records.iter().filter(|r| r.month == month).cloned().collect()
    }

    /// Writes `traffic.csv`, `labels.csv` and `truth.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("traffic.csv"))?);
        write_records(&mut w, &self.records)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join("labels.csv"))?);
        write_labels(&mut w, &self.labels)?;
        w.flush()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("truth.csv"))?));
        w.write_record(["domain", "role", "labeled", "isolated"])?;
        for t in &self.truth {
            w.write_record([t.domain.as_str(), t.role.as_str(), &t.labeled.to_string(), &t.isolated.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Node {
    name: Domain,
    role: Role,
    labeled: bool,
    isolated: bool,
}

struct Gen<'c> {
    cfg: &'c SynthConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    hubs: BTreeMap<Category, Vec<usize>>,
    /// Structural edges with their base weight in units of `traffic_scale`.
    edges: BTreeMap<(usize, usize), f64>,
    pareto: Pareto<f64>,
}

const HUBS_PER_CATEGORY: usize = 3;
const PARETO_SHAPE: f64 = 3.0;

impl Gen<'_> {
    fn hub(&mut self, c: Category) -> usize {
        let hs = &self.hubs[&c];
        hs[self.rng.gen_range(0..hs.len())]
    }

    fn pick(&mut self, pool: &[usize]) -> Option<usize> {
        pool.choose(&mut self.rng).copied()
    }

    /// Popularity-skewed pick: low positions are chosen far more often.
    fn pick_popular(&mut self, pool: &[usize]) -> Option<usize> {
        if pool.is_empty() {
            return None;
        }
        let u: f64 = self.rng.gen();
        pool.get((u * u * u * pool.len() as f64) as usize).copied()
    }

    fn link(&mut self, from: usize, to: Option<usize>, mean: f64) {
        let Some(to) = to else { return };
        if from == to {
            return;
        }
        // Pareto(1, a) has mean a / (a - 1); rescale to `mean`.
        let w = mean * self.pareto.sample(&mut self.rng) * (PARETO_SHAPE - 1.0) / PARETO_SHAPE;
        *self.edges.entry((from, to)).or_insert(0.0) += w;
    }

    fn maybe_hub(&mut self, to: usize, c: Category, p: f64, mean: f64) {
        if mean > 0.0 && self.rng.gen_bool(p) {
            let h = self.hub(c);
            self.link(h, Some(to), mean);
        }
    }
}

struct Pools {
    mis: Vec<usize>,
    core_mis: Vec<usize>,
    core_regular: Vec<usize>,
    prop: Vec<usize>,
    auth: Vec<usize>,
    benign: Vec<usize>,
    fringe: Vec<usize>,
}

/// Generates traffic, curated labels for the labeled classes, and ground
/// truth for every domain. Deterministic per config.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let registry = CategoryRegistry::default();
    let mut g = Gen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        nodes: Vec::new(),
        hubs: BTreeMap::new(),
        edges: BTreeMap::new(),
        pareto: Pareto::new(1.0, PARETO_SHAPE).expect("valid pareto"),
    };
    for c in Category::ALL {
        let hosts: Vec<Domain> = registry.hosts(c).into_iter().take(HUBS_PER_CATEGORY).cloned().collect();
        for h in hosts {
            g.hubs.entry(c).or_default().push(g.nodes.len());
            g.nodes.push(Node { name: h, role: Role::Hub, labeled: false, isolated: false });
        }
    }

    // Role layout before naming; names are assigned from a shuffled index so
    // they carry no class information.
    let mut roles: Vec<(Role, bool, bool)> = Vec::new();
    let mut add_mis = |n: usize, n_prop: usize, labeled: bool, rng: &mut ChaCha8Rng| {
        let n_iso = ((n - n_prop) as f64 * cfg.isolated_fraction).round() as usize;
        let mut iso = vec![false; n - n_prop];
        iso[..n_iso].iter_mut().for_each(|v| *v = true);
        iso.shuffle(rng);
        for _ in 0..n_prop {
            roles.push((Role::Propaganda, labeled, false));
        }
        for i in iso {
            roles.push((Role::Misinformation, labeled, i));
        }
    };
    add_mis(cfg.n_misinformation, cfg.n_propaganda, true, &mut g.rng);
    add_mis(cfg.n_unlabeled_misinfo, cfg.n_unlabeled_propaganda, false, &mut g.rng);
    roles.extend(std::iter::repeat((Role::Authoritative, true, false)).take(cfg.n_authoritative));
    let n_fringe = (cfg.n_benign_unlabeled as f64 * cfg.fringe_fraction).round() as usize;
    roles.extend(std::iter::repeat((Role::Fringe, false, false)).take(n_fringe));
    roles.extend(std::iter::repeat((Role::Benign, false, false)).take(cfg.n_benign_unlabeled - n_fringe));

    let mut ids: Vec<usize> = (0..roles.len()).collect();
    ids.shuffle(&mut g.rng);
    let tlds = ["com", "net", "org", "info", "news"];
    for (i, (role, labeled, isolated)) in roles.iter().enumerate() {
        let tld = tlds[g.rng.gen_range(0..tlds.len())];
        let name = Domain::parse(&format!("site{:06}.{tld}", ids[i])).expect("generated name");
        g.nodes.push(Node { name, role: *role, labeled: *labeled, isolated: *isolated });
    }

    let select = |f: &dyn Fn(&Node) -> bool| -> Vec<usize> {
        g.nodes.iter().enumerate().filter(|(_, n)| f(n)).map(|(i, _)| i).collect()
    };
    let pools = Pools {
        mis: select(&|n| n.role.is_misinformation()),
        core_mis: select(&|n| n.role.is_misinformation() && !n.isolated),
        core_regular: select(&|n| n.role == Role::Misinformation && !n.isolated),
        prop: select(&|n| n.role == Role::Propaganda),
        auth: select(&|n| n.role == Role::Authoritative),
        benign: select(&|n| n.role == Role::Benign),
        fringe: select(&|n| n.role == Role::Fringe),
    };

    for v in 0..g.nodes.len() {
        wire(&mut g, &pools, v);
    }

    let months = cfg.month_list();
    let records = emit(&mut g, &months);

    let mut labels: Vec<DomainLabel> = g
        .nodes
        .iter()
        .filter(|n| n.labeled)
        .map(|n| DomainLabel {
            domain: n.name.clone(),
            class: if n.role.is_misinformation() { LabelClass::Misinformation } else { LabelClass::Authoritative },
            propaganda: n.role == Role::Propaganda,
            source: "synth".into(),
            added_at: None,
        })
        .collect();
    labels.sort_by(|a, b| a.domain.cmp(&b.domain));
    let mut truth: Vec<TruthRow> = g
        .nodes
        .iter()
        .map(|n| TruthRow { domain: n.name.clone(), role: n.role, labeled: n.labeled, isolated: n.isolated })
        .collect();
    truth.sort_by(|a, b| a.domain.cmp(&b.domain));
    Ok(SynthOutput { months, records, labels, truth })
}

/// Draws the fixed outbound links and hub referrals of node `v`.
fn wire(g: &mut Gen<'_>, p: &Pools, v: usize) {
    let role = g.nodes[v].role;
    let isolated = g.nodes[v].isolated;
    let cfg = g.cfg;
    match role {
        Role::Hub => {}
        Role::Misinformation | Role::Propaganda if !isolated => {
            let propaganda = role == Role::Propaganda;
            let k = if propaganda { g.rng.gen_range(4..=7) } else { g.rng.gen_range(3..=6) };
            for _ in 0..k {
                if g.rng.gen_bool(cfg.intra_misinfo_share) {
                    let to = match (propaganda, g.rng.gen_bool(0.9)) {
                        (true, true) => g.pick(&p.prop),
                        (false, true) => g.pick(&p.core_regular),
                        _ => g.pick(&p.core_mis),
                    };
                    g.link(v, to, 3.0);
                } else {
                    let to = if g.rng.gen_bool(0.6) { g.pick(&p.auth) } else { g.pick_popular(&p.benign) };
                    g.link(v, to, 1.5);
                }
            }
            if g.rng.gen_bool(0.5) {
                let h = g.hub(Category::Social);
                g.link(v, Some(h), 1.0);
            }
            // Community links bring in about 12 units; hub referrals are
            // sized so search and social hit their shares.
            let rest = (1.0 - cfg.search_referral_share - cfg.social_referral_share).max(0.05);
            let total = 12.0 / rest;
            let social = total * cfg.social_referral_share;
            let search = total * cfg.search_referral_share;
            g.maybe_hub(v, Category::Social, 1.0, social * 0.6);
            g.maybe_hub(v, Category::Social, 1.0, social * 0.4);
            g.maybe_hub(v, Category::Google, 1.0, search * 0.8);
            g.maybe_hub(v, Category::Bing, 0.5, search * 0.3);
            g.maybe_hub(v, Category::DuckDuckGo, 0.3, search * 0.2);
            g.maybe_hub(v, Category::News, 0.15, 1.0);
        }
        Role::Misinformation | Role::Propaganda => {
            let k = g.rng.gen_range(3..=6);
            for _ in 0..k {
                let to = if g.rng.gen_bool(0.15) {
                    g.pick(&p.mis)
                } else if g.rng.gen_bool(0.7) {
                    g.pick(&p.fringe)
                } else {
                    g.pick_popular(&p.benign)
                };
                g.link(v, to, 2.0);
            }
            g.maybe_hub(v, Category::Social, 1.0, 4.0);
            g.maybe_hub(v, Category::Social, 1.0, 3.0);
            g.maybe_hub(v, Category::Google, 1.0, 1.5);
            g.maybe_hub(v, Category::Bing, 0.3, 0.5);
        }
        Role::Authoritative => {
            let k = g.rng.gen_range(3..=6);
            for _ in 0..k {
                let to = if g.rng.gen_bool(0.4) { g.pick_popular(&p.auth) } else { g.pick_popular(&p.benign) };
                g.link(v, to, 3.0);
            }
            for _ in 0..2 {
                if g.rng.gen_bool(0.35) {
                    let to = g.pick(&p.core_mis);
                    g.link(v, to, 0.5);
                }
            }
            if g.rng.gen_bool(0.3) {
                let h = g.hub(Category::Social);
                g.link(v, Some(h), 1.0);
            }
            g.maybe_hub(v, Category::Google, 1.0, 8.0);
            g.maybe_hub(v, Category::Bing, 0.7, 1.5);
            g.maybe_hub(v, Category::DuckDuckGo, 0.4, 0.6);
            g.maybe_hub(v, Category::News, 0.6, 2.5);
            g.maybe_hub(v, Category::Social, 1.0, 3.5);
            g.maybe_hub(v, Category::Mail, 0.3, 1.0);
        }
        Role::Benign => {
            let k = g.rng.gen_range(2..=5);
            for _ in 0..k {
                let to = if g.rng.gen_bool(0.7) { g.pick_popular(&p.benign) } else { g.pick_popular(&p.auth) };
                g.link(v, to, 3.0);
            }
            if g.rng.gen_bool(0.05) {
                let to = g.pick(&p.mis);
                g.link(v, to, 0.5);
            }
            if g.rng.gen_bool(0.2) {
                let h = g.hub(Category::Social);
                g.link(v, Some(h), 1.0);
            }
            g.maybe_hub(v, Category::Google, 1.0, 4.0);
            g.maybe_hub(v, Category::Social, 0.7, 2.0);
            g.maybe_hub(v, Category::Bing, 0.5, 0.8);
            g.maybe_hub(v, Category::Mail, 0.2, 1.0);
            g.maybe_hub(v, Category::News, 0.1, 1.0);
        }
        Role::Fringe => {
            let k = g.rng.gen_range(3..=6);
            for _ in 0..k {
                let to = if g.rng.gen_bool(0.8) { g.pick(&p.fringe) } else { g.pick_popular(&p.benign) };
                g.link(v, to, 2.0);
            }
            g.maybe_hub(v, Category::Social, 1.0, 4.0);
            g.maybe_hub(v, Category::Social, 1.0, 3.0);
            g.maybe_hub(v, Category::Google, 1.0, 1.5);
        }
    }
}

/// Per month: keeps each structural edge with `edge_keep_prob` (hub
/// referrals more often), redraws its weight around the base, and adds
/// sub-threshold noise pairs.
fn emit(g: &mut Gen<'_>, months: &[Month]) -> Vec<TrafficRecord> {
    let cfg = g.cfg;
    let jitter = LogNormal::new(0.0, 0.25).expect("valid lognormal");
    let scale = cfg.traffic_scale as f64;
    let non_hub: Vec<usize> = (0..g.nodes.len()).filter(|&i| g.nodes[i].role != Role::Hub).collect();
    let edges: Vec<((usize, usize), f64)> = g.edges.iter().map(|(k, v)| (*k, *v)).collect();
    let mut records = Vec::new();
    for &month in months {
        let mut weights: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for &((a, b), base) in &edges {
            let keep = if g.nodes[a].role == Role::Hub { cfg.edge_keep_prob.max(0.95) } else { cfg.edge_keep_prob };
            if !g.rng.gen_bool(keep) {
                continue;
            }
            let w = (scale * base * jitter.sample(&mut g.rng)).round() as u64;
            weights.insert((a, b), w.max(cfg.edge_threshold));
        }
        if cfg.edge_threshold > 1 && non_hub.len() > 1 {
            for _ in 0..non_hub.len() / 2 {
                let a = non_hub[g.rng.gen_range(0..non_hub.len())];
                let b = non_hub[g.rng.gen_range(0..non_hub.len())];
                if a == b {
                    continue;
                }
                let w = g.rng.gen_range(1..=(cfg.edge_threshold / 2).max(1));
                *weights.entry((a, b)).or_insert(0) += w;
            }
        }
        for ((a, b), w) in weights {
            records.push(TrafficRecord {
                month,
                referrer: g.nodes[a].name.clone(),
                target: g.nodes[b].name.clone(),
                page_views: w,
            });
        }
    }
    records.sort_by(|x, y| (x.month, &x.referrer, &x.target).cmp(&(y.month, &y.referrer, &y.target)));
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_features, FeatureVector};
    use crate::graph::build_graph;

    fn small() -> SynthConfig {
        SynthConfig {
            n_misinformation: 50,
            n_propaganda: 10,
            n_authoritative: 200,
            n_unlabeled_misinfo: 20,
            n_unlabeled_propaganda: 4,
            n_benign_unlabeled: 500,
            ..Default::default()
        }
    }

    #[test]
    fn label_counts_follow_config() {
        let out = generate(&small()).unwrap();
        let store = out.label_store();
        let c = store.counts();
        assert_eq!((c.misinformation, c.propaganda, c.authoritative), (50, 10, 200));
        let unlabeled_mis = out.truth.iter().filter(|t| !t.labeled && t.role.is_misinformation()).count();
        assert_eq!(unlabeled_mis, 20);
        assert_eq!(out.truth.iter().filter(|t| matches!(t.role, Role::Benign | Role::Fringe)).count(), 500);
        assert_eq!(out.months.len(), 3);
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate(&small()).unwrap().write_dir(dir_a.path()).unwrap();
        generate(&small()).unwrap().write_dir(dir_b.path()).unwrap();
        for f in ["traffic.csv", "labels.csv", "truth.csv"] {
            assert_eq!(fs::read(dir_a.path().join(f)).unwrap(), fs::read(dir_b.path().join(f)).unwrap(), "{f}");
        }
        let other = generate(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(other.records, generate(&small()).unwrap().records);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig { n_propaganda: 60, ..small() }).is_err());
        assert!(generate(&SynthConfig { intra_misinfo_share: 1.5, ..small() }).is_err());
        assert!(generate(&SynthConfig { months: 0, ..small() }).is_err());
        let err = serde_json::from_str::<SynthConfig>(r#"{"n_misinfo": 3}"#);
        assert!(err.is_err());
    }

    #[test]
    fn records_build_into_graphs() {
        let out = generate(&small()).unwrap();
        for m in &out.months {
            let recs = out.records_for(*m);
            assert!(recs.iter().all(|r| r.page_views > 0 && r.referrer != r.target));
            let g = build_graph(&recs, 3000).unwrap();
            assert!(g.edge_count() > 0);
            // Noise pairs exist below the threshold.
            assert!(recs.len() > g.edge_count());
        }
    }

    #[test]
    fn traffic_asymmetry() {
        let cfg = SynthConfig::default();
        let out = generate(&cfg).unwrap();
        let store = out.label_store();
        let reg = CategoryRegistry::default();
        let g = build_graph(&out.records_for(out.months[0]), 3000).unwrap();
        let mean = |f: &dyn Fn(&FeatureVector) -> f64, want: LabelClass| {
            let vals: Vec<f64> = out
                .labels
                .iter()
                .filter(|l| l.class == want && g.contains(l.domain.as_str()))
                .map(|l| f(&extract_features(&g, &store, &reg, l.domain.as_str()).unwrap()))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let mis = mean(&|f| f.to.misinformation, LabelClass::Misinformation);
        let auth = mean(&|f| f.to.misinformation, LabelClass::Authoritative);
        assert!(mis >= 0.5, "{mis}");
        assert!(auth <= 0.05, "{auth}");
    }
}
