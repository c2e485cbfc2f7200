//! Monthly navigation graphs and k-hop egonets.
//!
//! An edge `a -> b` carries the page views on `b` referred by `a` during the
//! graph's month. Nodes are stored in lexicographic order so node ids, edge
//! iteration and every export are deterministic. Both successor and
//! predecessor lists are materialized, so inbound egonets cost the same as
//! outbound ones.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, Month};
use crate::ingest::{aggregate_month, TrafficRecord};

/// Default per-edge threshold on monthly page views.
pub const DEFAULT_EDGE_THRESHOLD: u64 = 3000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("records span several months ({0} and {1})")]
    MixedMonths(Month, Month),
    #[error("no traffic records")]
    EmptyInput,
    #[error("domain {0} is not in the graph")]
    NotFound(String),
    #[error("invalid edge {0} -> {1}: {2}")]
    InvalidEdge(String, String, &'static str),
    #[error("egonet hop count must be at least 1")]
    ZeroHops,
    #[error("edge list line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl GraphError {
    pub fn code(&self) -> &'static str {
        match self {
            GraphError::MixedMonths(..) => "mixed_months",
            GraphError::EmptyInput => "empty_input",
            GraphError::NotFound(_) => "not_found",
            GraphError::InvalidEdge(..) => "invalid_edge",
            GraphError::ZeroHops => "invalid_argument",
            GraphError::Parse { .. } | GraphError::Csv(_) => "parse",
            GraphError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Nodes that reach the center within k hops.
    Inbound,
    /// Nodes reachable from the center within k hops.
    Outbound,
    /// Union of the inbound and outbound node sets.
    Both,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inbound" | "in" => Ok(Direction::Inbound),
            "outbound" | "out" => Ok(Direction::Outbound),
            "both" => Ok(Direction::Both),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavigationGraph {
    month: Month,
    edge_threshold: u64,
    names: Vec<Domain>,
    successors: Vec<Vec<(u32, u64)>>,
    predecessors: Vec<Vec<(u32, u64)>>,
    edge_count: usize,
}

/// Induced subgraph around a center domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Egonet {
    pub center: Domain,
    pub k: u32,
    pub direction: Direction,
    pub nodes: BTreeSet<Domain>,
    /// `(referrer, target, weight)`, sorted.
    pub edges: Vec<(Domain, Domain, u64)>,
}

/// Builds one month's graph. Pairs are summed first; a pair becomes an edge
/// iff its total reaches `edge_threshold`. Self-referrals are dropped.
pub fn build_graph(records: &[TrafficRecord], edge_threshold: u64) -> Result<NavigationGraph, GraphError> {
    let first = records.first().ok_or(GraphError::EmptyInput)?.month;
    if let Some(other) = records.iter().find(|r| r.month != first) {
        return Err(GraphError::MixedMonths(first.min(other.month), first.max(other.month)));
    }
    let aggregated = aggregate_month(records);
    let edges = aggregated
        .into_values()
        .flatten()
        .filter(|r| r.referrer != r.target && r.page_views >= edge_threshold)
        .map(|r| (r.referrer, r.target, r.page_views));
    NavigationGraph::from_edges(first, edge_threshold, edges, std::iter::empty())
}

impl NavigationGraph {
    /// Assembles a graph from already thresholded edges, plus optional
    /// isolated nodes. Duplicate edges, self-loops and edges under the
    /// threshold are rejected.
    pub fn from_edges<E, N>(month: Month, edge_threshold: u64, edges: E, isolated: N) -> Result<Self, GraphError>
    where
        E: IntoIterator<Item = (Domain, Domain, u64)>,
        N: IntoIterator<Item = Domain>,
    {
        let mut edge_map: BTreeMap<(Domain, Domain), u64> = BTreeMap::new();
        let mut names: BTreeSet<Domain> = isolated.into_iter().collect();
        for (a, b, w) in edges {
            if a == b {
                return Err(GraphError::InvalidEdge(a.into_string(), b.into_string(), "self-loop"));
            }
            if w < edge_threshold || w == 0 {
                return Err(GraphError::InvalidEdge(a.into_string(), b.into_string(), "weight below threshold"));
            }
            names.insert(a.clone());
            names.insert(b.clone());
            if edge_map.insert((a.clone(), b.clone()), w).is_some() {
                return Err(GraphError::InvalidEdge(a.into_string(), b.into_string(), "duplicate edge"));
            }
        }
        let names: Vec<Domain> = names.into_iter().collect();
        let id = |d: &Domain| names.binary_search(d).expect("endpoint registered") as u32;
        let mut successors = vec![Vec::new(); names.len()];
        let mut predecessors = vec![Vec::new(); names.len()];
        for ((a, b), w) in &edge_map {
            let (ia, ib) = (id(a), id(b));
            successors[ia as usize].push((ib, *w));
            predecessors[ib as usize].push((ia, *w));
        }
        // Edge map iteration is sorted by (a, b): successor lists come out
        // sorted already; predecessor lists need it.
        for list in &mut predecessors {
            list.sort_unstable();
        }
        Ok(NavigationGraph {
            month,
            edge_threshold,
            names,
            successors,
            predecessors,
            edge_count: edge_map.len(),
        })
    }

    pub fn month(&self) -> Month {
        self.month
    }

    pub fn edge_threshold(&self) -> u64 {
        self.edge_threshold
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Nodes in lexicographic order.
    pub fn nodes(&self) -> impl Iterator<Item = &Domain> + '_ {
        self.names.iter()
    }

    pub fn contains(&self, domain: &str) -> bool {
        self.node_id(domain).is_some()
    }

    pub fn node_id(&self, domain: &str) -> Option<usize> {
        self.names.binary_search_by(|d| d.as_str().cmp(domain)).ok()
    }

    pub fn name(&self, id: usize) -> &Domain {
        &self.names[id]
    }

    fn require(&self, domain: &str) -> Result<usize, GraphError> {
        self.node_id(domain).ok_or_else(|| GraphError::NotFound(domain.to_string()))
    }

    pub fn weight(&self, referrer: &str, target: &str) -> Option<u64> {
        let (a, b) = (self.node_id(referrer)?, self.node_id(target)? as u32);
        let list = &self.successors[a];
        list.binary_search_by_key(&b, |&(t, _)| t).ok().map(|i| list[i].1)
    }

    /// Outgoing `(target id, weight)` pairs, sorted by target.
    pub fn successor_ids(&self, id: usize) -> &[(u32, u64)] {
        &self.successors[id]
    }

    /// Incoming `(referrer id, weight)` pairs, sorted by referrer.
    pub fn predecessor_ids(&self, id: usize) -> &[(u32, u64)] {
        &self.predecessors[id]
    }

    pub fn successors(&self, domain: &str) -> Result<impl Iterator<Item = (&Domain, u64)> + '_, GraphError> {
        let id = self.require(domain)?;
        Ok(self.successors[id].iter().map(|&(t, w)| (&self.names[t as usize], w)))
    }

    pub fn predecessors(&self, domain: &str) -> Result<impl Iterator<Item = (&Domain, u64)> + '_, GraphError> {
        let id = self.require(domain)?;
        Ok(self.predecessors[id].iter().map(|&(s, w)| (&self.names[s as usize], w)))
    }

    /// All edges as `(referrer, target, weight)` in `(referrer, target)` order.
    pub fn edges(&self) -> impl Iterator<Item = (&Domain, &Domain, u64)> + '_ {
        self.successors.iter().enumerate().flat_map(move |(a, list)| {
            list.iter()
                .map(move |&(b, w)| (&self.names[a], &self.names[b as usize], w))
        })
    }

    /// `(inbound_total, outbound_total)` page views of a domain.
    pub fn node_totals(&self, domain: &str) -> Result<(u64, u64), GraphError> {
        Ok(self.totals_by_id(self.require(domain)?))
    }

    pub fn totals_by_id(&self, id: usize) -> (u64, u64) {
        let inbound = self.predecessors[id].iter().map(|&(_, w)| w).sum();
        let outbound = self.successors[id].iter().map(|&(_, w)| w).sum();
        (inbound, outbound)
    }

    pub fn egonet(&self, center: &str, k: u32, direction: Direction) -> Result<Egonet, GraphError> {
        let id = self.require(center)?;
        let members = self.egonet_ids(id, k, direction)?;
        let member_set: HashSet<u32> = members.iter().map(|&m| m as u32).collect();
        let mut edges = Vec::new();
        for &m in &members {
            for &(t, w) in &self.successors[m] {
                if member_set.contains(&t) {
                    edges.push((self.names[m].clone(), self.names[t as usize].clone(), w));
                }
            }
        }
        Ok(Egonet {
            center: self.names[id].clone(),
            k,
            direction,
            nodes: members.iter().map(|&m| self.names[m].clone()).collect(),
            edges,
        })
    }

    /// Node ids of the k-hop egonet around `center`, sorted, center included.
    ///
    /// Work is proportional to the egonet's size and degree sum, never to
    /// the whole graph.
    pub fn egonet_ids(&self, center: usize, k: u32, direction: Direction) -> Result<Vec<usize>, GraphError> {
        if k == 0 {
            return Err(GraphError::ZeroHops);
        }
        let mut seen: HashSet<u32> = HashSet::new();
        seen.insert(center as u32);
        if matches!(direction, Direction::Outbound | Direction::Both) {
            self.bounded_bfs(center as u32, k, &self.successors, &mut seen);
        }
        if matches!(direction, Direction::Inbound | Direction::Both) {
            self.bounded_bfs(center as u32, k, &self.predecessors, &mut seen);
        }
        let mut ids: Vec<usize> = seen.into_iter().map(|i| i as usize).collect();
        ids.sort_unstable();
        Ok(ids)
    }

    fn bounded_bfs(&self, center: u32, k: u32, adj: &[Vec<(u32, u64)>], seen: &mut HashSet<u32>) {
        // Each pass keeps its own visited set: with direction Both, a node
        // found by the other pass must still be expanded here.
        let mut visited: HashSet<u32> = HashSet::new();
        visited.insert(center);
        let mut frontier = vec![center];
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                for &(v, _) in &adj[u as usize] {
                    if visited.insert(v) {
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            seen.extend(next.iter().copied());
            frontier = next;
        }
    }

    /// Writes the edge list as `month,referrer,target,weight`.
    pub fn write_edge_list<W: Write>(&self, writer: W) -> Result<(), GraphError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["month", "referrer", "target", "weight"])?;
        let month = self.month.to_string();
        for (a, b, w) in self.edges() {
            wtr.write_record([month.as_str(), a.as_str(), b.as_str(), &w.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let file = File::create(path)?;
        self.write_edge_list(io::BufWriter::new(file))
    }

    /// Reads an edge list written by [`NavigationGraph::write_edge_list`].
    pub fn read_edge_list<R: Read>(reader: R, edge_threshold: u64) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut month: Option<Month> = None;
        let mut edges = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |reason: String| GraphError::Parse { line, reason };
            if row.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", row.len())));
            }
            let m: Month = row[0].parse().map_err(|e: crate::domain::DomainError| err(e.to_string()))?;
            match month {
                None => month = Some(m),
                Some(prev) if prev != m => return Err(GraphError::MixedMonths(prev.min(m), prev.max(m))),
                _ => {}
            }
            let a = Domain::parse(&row[1]).map_err(|e| err(e.to_string()))?;
            let b = Domain::parse(&row[2]).map_err(|e| err(e.to_string()))?;
            let w: u64 = row[3].parse().map_err(|_| err(format!("bad weight {:?}", &row[3])))?;
            edges.push((a, b, w));
        }
        let month = month.ok_or(GraphError::EmptyInput)?;
        NavigationGraph::from_edges(month, edge_threshold, edges, std::iter::empty())
    }

    pub fn load(path: &Path, edge_threshold: u64) -> Result<Self, GraphError> {
        Self::read_edge_list(io::BufReader::new(File::open(path)?), edge_threshold)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn d(s: &str) -> Domain {
        Domain::parse(s).unwrap()
    }

    fn rec(a: &str, b: &str, v: u64) -> TrafficRecord {
        TrafficRecord { month: "2022-10".parse().unwrap(), referrer: d(a), target: d(b), page_views: v }
    }

    /// Reference graph: A->B 5000, B->A 4000, S->A 6000, F->A 3500, A->C 3000.
    pub(crate) fn g1() -> NavigationGraph {
        let recs = vec![
            rec("a", "b", 5000),
            rec("b", "a", 4000),
            rec("s", "a", 6000),
            rec("f", "a", 3500),
            rec("a", "c", 3000),
            rec("c", "b", 2999),
        ];
        build_graph(&recs, DEFAULT_EDGE_THRESHOLD).unwrap()
    }

    fn names(set: &BTreeSet<Domain>) -> Vec<&str> {
        set.iter().map(|d| d.as_str()).collect()
    }

    #[test]
    fn threshold_is_inclusive() {
        let g = g1();
        assert_eq!(g.weight("a", "c"), Some(3000));
        assert_eq!(g.weight("c", "b"), None);
        assert_eq!(g.edge_count(), 5);
        assert_eq!(g.nodes().map(|d| d.as_str()).collect::<Vec<_>>(), ["a", "b", "c", "f", "s"]);
    }

    #[test]
    fn duplicates_are_summed_before_thresholding() {
        let g = build_graph(&[rec("x", "y", 1500), rec("x", "y", 1500), rec("y", "x", 2999)], 3000).unwrap();
        assert_eq!(g.weight("x", "y"), Some(3000));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(build_graph(&[], 3000), Err(GraphError::EmptyInput)));
        let mut other = rec("x", "y", 5000);
        other.month = "2022-11".parse().unwrap();
        assert!(matches!(build_graph(&[rec("x", "y", 5000), other], 3000), Err(GraphError::MixedMonths(..))));
    }

    #[test]
    fn g1_egonets() {
        let g = g1();
        let e = g.egonet("a", 1, Direction::Inbound).unwrap();
        assert_eq!(names(&e.nodes), ["a", "b", "f", "s"]);
        let edges: Vec<(&str, &str)> = e.edges.iter().map(|(a, b, _)| (a.as_str(), b.as_str())).collect();
        assert_eq!(edges, [("a", "b"), ("b", "a"), ("f", "a"), ("s", "a")]);

        let e = g.egonet("s", 2, Direction::Outbound).unwrap();
        assert_eq!(names(&e.nodes), ["a", "b", "c", "s"]);

        let e = g.egonet("a", 1, Direction::Both).unwrap();
        assert_eq!(names(&e.nodes), ["a", "b", "c", "f", "s"]);

        assert!(matches!(g.egonet("zz", 1, Direction::Both), Err(GraphError::NotFound(_))));
        assert!(matches!(g.egonet("a", 0, Direction::Both), Err(GraphError::ZeroHops)));
    }

    #[test]
    fn isolated_node_egonet_and_totals() {
        let g = NavigationGraph::from_edges("2022-10".parse().unwrap(), 3000, vec![], vec![d("x")]).unwrap();
        let e = g.egonet("x", 1, Direction::Both).unwrap();
        assert_eq!(names(&e.nodes), ["x"]);
        assert!(e.edges.is_empty());
        assert_eq!(g.node_totals("x").unwrap(), (0, 0));
    }

    #[test]
    fn g1_totals() {
        let g = g1();
        assert_eq!(g.node_totals("a").unwrap(), (13_500, 8000));
        assert_eq!(g.node_totals("s").unwrap(), (0, 6000));
        assert!(g.node_totals("nope").is_err());
    }

    #[test]
    fn from_edges_validates() {
        let m: Month = "2022-10".parse().unwrap();
        assert!(NavigationGraph::from_edges(m, 3000, vec![(d("a"), d("a"), 5000)], vec![]).is_err());
        assert!(NavigationGraph::from_edges(m, 3000, vec![(d("a"), d("b"), 10)], vec![]).is_err());
        let dup = vec![(d("a"), d("b"), 5000), (d("a"), d("b"), 6000)];
        assert!(NavigationGraph::from_edges(m, 3000, dup, vec![]).is_err());
    }

    #[test]
    fn edge_list_round_trip_is_bit_exact() {
        let g = g1();
        let mut first = Vec::new();
        g.write_edge_list(&mut first).unwrap();
        let back = NavigationGraph::read_edge_list(first.as_slice(), 3000).unwrap();
        assert_eq!(back, g);
        let mut second = Vec::new();
        back.write_edge_list(&mut second).unwrap();
        assert_eq!(first, second);
        assert!(String::from_utf8(first).unwrap().starts_with("month,referrer,target,weight\n2022-10,a,b,5000\n"));
    }

    fn arb_records() -> impl Strategy<Value = Vec<TrafficRecord>> {
        prop::collection::vec((0u8..15, 0u8..15, 1u64..8000), 1..80)
            .prop_map(|rows| rows.into_iter().map(|(a, b, v)| rec(&format!("n{a}"), &format!("n{b}"), v)).collect())
    }

    proptest! {
        #[test]
        fn build_is_order_independent_and_matches_filter_oracle(recs in arb_records(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let recs: Vec<_> = recs.into_iter().filter(|r| r.referrer != r.target).collect();
            prop_assume!(!recs.is_empty());
            let g = build_graph(&recs, 3000).unwrap();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&build_graph(&shuffled, 3000).unwrap(), &g);

            let mut sums: BTreeMap<(String, String), u64> = BTreeMap::new();
            for r in &recs {
                *sums.entry((r.referrer.to_string(), r.target.to_string())).or_default() += r.page_views;
            }
            let want_edges: BTreeSet<(String, String, u64)> = sums
                .into_iter()
                .filter(|(_, v)| *v >= 3000)
                .map(|((a, b), v)| (a, b, v))
                .collect();
            let want_nodes: BTreeSet<String> = want_edges.iter().flat_map(|(a, b, _)| [a.clone(), b.clone()]).collect();
            let got_edges: BTreeSet<(String, String, u64)> = g.edges().map(|(a, b, w)| (a.to_string(), b.to_string(), w)).collect();
            let got_nodes: BTreeSet<String> = g.nodes().map(|n| n.to_string()).collect();
            prop_assert_eq!(got_edges, want_edges);
            prop_assert_eq!(got_nodes, want_nodes);
        }
    }
}
