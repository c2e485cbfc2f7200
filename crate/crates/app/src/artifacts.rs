//! Reading and writing the per-month artifact directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use misinfo_core::deploy::{DeploymentRun, SUMMARY_FILE};
use misinfo_core::labels::{EventLog, PersistentLabelStore};
use misinfo_core::{CategoryRegistry, FeatureMatrix, LabelStore, Month, NavigationGraph};

use crate::error::{AppError, AppResult};

/// `<dir>/<YYYY-MM>.csv` files, sorted by month.
fn month_files(dir: &Path) -> AppResult<Vec<(Month, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| AppError::new("missing_input", format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if let Ok(m) = stem.parse::<Month>() {
            out.push((m, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(AppError::new("empty_input", format!("no <YYYY-MM>.csv files in {}", dir.display())));
    }
    Ok(out)
}

pub fn save_graphs(dir: &Path, graphs: &[NavigationGraph]) -> AppResult<()> {
    fs::create_dir_all(dir)?;
    for g in graphs {
        g.save(&dir.join(format!("{}.csv", g.month())))?;
    }
    Ok(())
}

pub fn load_graphs(dir: &Path, edge_threshold: u64) -> AppResult<Vec<NavigationGraph>> {
    month_files(dir)?.into_iter().map(|(_, p)| Ok(NavigationGraph::load(&p, edge_threshold)?)).collect()
}

pub fn save_features(dir: &Path, matrices: &BTreeMap<Month, FeatureMatrix>) -> AppResult<()> {
    fs::create_dir_all(dir)?;
    for (m, fm) in matrices {
        fm.save(&dir.join(format!("{m}.csv")))?;
    }
    Ok(())
}

pub fn load_features(dir: &Path) -> AppResult<BTreeMap<Month, FeatureMatrix>> {
    let mut out = BTreeMap::new();
    for (m, p) in month_files(dir)? {
        out.insert(m, FeatureMatrix::load(&p)?);
    }
    Ok(out)
}

pub fn load_registry(path: Option<&Path>) -> AppResult<CategoryRegistry> {
    Ok(match path {
        Some(p) => CategoryRegistry::load(p)?,
        None => CategoryRegistry::default(),
    })
}

/// Curated labels plus, when a log is given, every review verdict in it.
pub fn load_store(labels: &[PathBuf], review_log: Option<&Path>) -> AppResult<LabelStore> {
    Ok(match review_log {
        Some(log) => PersistentLabelStore::open(labels, EventLog::new(log))?.store().clone(),
        None => LabelStore::load_labels(labels)?,
    })
}

/// Every run directory under `dir`, keyed by run id.
pub fn load_runs(dir: &Path) -> AppResult<BTreeMap<String, (PathBuf, DeploymentRun)>> {
    let mut runs = BTreeMap::new();
    if !dir.exists() {
        return Ok(runs);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.join(SUMMARY_FILE).is_file() {
            let run = DeploymentRun::load(&path)?;
            runs.insert(run.id.clone(), (path, run));
        }
    }
    Ok(runs)
}

/// Explicit value, else `SOURCE_DATE_EPOCH`, else the clock.
pub fn resolve_created_at(explicit: Option<DateTime<Utc>>) -> AppResult<DateTime<Utc>> {
    if let Some(t) = explicit {
        return Ok(t);
    }
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(raw) => {
            let secs: i64 =
                raw.trim().parse().map_err(|_| AppError::invalid(format!("SOURCE_DATE_EPOCH {raw:?} is not an integer")))?;
            Utc.timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| AppError::invalid(format!("SOURCE_DATE_EPOCH {raw:?} is out of range")))
        }
        Err(_) => Ok(Utc::now()),
    }
}
