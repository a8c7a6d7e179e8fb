//! Car-following record loading, stable-following filter and per-case gap
//! normalization.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{check, Error, Result};

pub const COLUMNS: [&str; 6] = ["case_id", "t", "gap", "v_lead", "v_follow", "a_follow"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarFollowRecord {
    pub case_id: String,
    pub t: f64,
    pub gap: f64,
    pub v_lead: f64,
    pub v_follow: f64,
    pub a_follow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedCase {
    pub case_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Loaded {
    /// Valid records, grouped by case in order of first appearance.
    pub records: Vec<CarFollowRecord>,
    pub rejected: Vec<RejectedCase>,
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Loaded> {
    let file = std::fs::File::open(path.as_ref())?;
    read_records(file)
}

pub fn read_records<R: Read>(input: R) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse { line: 1, msg: format!("missing column `{col}`") });
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut cases: BTreeMap<String, Vec<CarFollowRecord>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let rec: CarFollowRecord =
            row.deserialize(Some(&headers)).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let finite = [rec.t, rec.gap, rec.v_lead, rec.v_follow, rec.a_follow].iter().all(|x| x.is_finite());
        if !finite || !(rec.gap > 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("case `{}` at t = {}: gap must be finite and > 0, got {}", rec.case_id, rec.t, rec.gap),
            });
        }
        if !cases.contains_key(&rec.case_id) {
            order.push(rec.case_id.clone());
        }
        cases.entry(rec.case_id.clone()).or_default().push(rec);
    }
    let mut out = Loaded::default();
    for id in order {
        let recs = cases.remove(&id).expect("case recorded");
        if let Some(w) = recs.windows(2).find(|w| w[1].t < w[0].t) {
            out.rejected.push(RejectedCase {
                case_id: id,
                reason: format!("time decreases from {} to {}", w[0].t, w[1].t),
            });
        } else {
            out.records.extend(recs);
        }
    }
    Ok(out)
}

/// Writes records with shortest round-trip float formatting.
pub fn write_records<W: Write>(records: &[CarFollowRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    if records.is_empty() {
        wtr.write_record(COLUMNS)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub v_lead_target: f64,
    pub v_lead_tol: f64,
    pub dv_max: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { v_lead_target: 20.2, v_lead_tol: 0.2, dv_max: 1.0 }
    }
}

/// What a speed-difference violation removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Drop only the offending sample.
    Sample,
    /// Drop the whole case.
    Strict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterSummary {
    pub cases_in: usize,
    pub cases_retained: usize,
    pub records_in: usize,
    pub records_retained: usize,
    pub dropped_lead_unstable: usize,
    pub dropped_speed_difference: usize,
}

fn group(records: &[CarFollowRecord]) -> Vec<(&str, Vec<&CarFollowRecord>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut map: BTreeMap<&str, Vec<&CarFollowRecord>> = BTreeMap::new();
    for r in records {
        let e = map.entry(r.case_id.as_str()).or_default();
        if e.is_empty() {
            order.push(r.case_id.as_str());
        }
        e.push(r);
    }
    order.into_iter().map(|id| (id, map.remove(id).expect("grouped"))).collect()
}

/// Keeps cases whose leader holds `target ± tol` throughout, then removes
/// samples (or, in strict mode, cases) where `|v_lead − v_follow| > dv_max`.
pub fn filter_stable(
    records: &[CarFollowRecord],
    spec: &FilterSpec,
    mode: FilterMode,
) -> Result<(Vec<CarFollowRecord>, FilterSummary)> {
    check(spec.v_lead_tol > 0.0, "v_lead_tol", "must be > 0")?;
    check(spec.dv_max > 0.0, "dv_max", "must be > 0")?;
    let groups = group(records);
    let mut summary = FilterSummary { cases_in: groups.len(), records_in: records.len(), ..Default::default() };
    let mut kept = Vec::new();
    for (_, recs) in groups {
        let lead_dev = recs.iter().map(|r| (r.v_lead - spec.v_lead_target).abs()).fold(0.0, f64::max);
        if lead_dev > spec.v_lead_tol {
            summary.dropped_lead_unstable += recs.len();
            continue;
        }
        let ok = |r: &&CarFollowRecord| (r.v_lead - r.v_follow).abs() <= spec.dv_max;
        let n_bad = recs.iter().filter(|r| !ok(r)).count();
        match mode {
            FilterMode::Strict if n_bad > 0 => {
                summary.dropped_speed_difference += recs.len();
                continue;
            }
            _ => summary.dropped_speed_difference += n_bad,
        }
        let before = kept.len();
        kept.extend(recs.into_iter().filter(ok).cloned());
        if kept.len() > before {
            summary.cases_retained += 1;
        }
    }
    summary.records_retained = kept.len();
    Ok((kept, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalized {
    pub samples: Vec<f64>,
    pub cases_used: usize,
    pub dropped: Vec<RejectedCase>,
}

/// Standardizes each case's gaps with its own mean and population standard
/// deviation, then pools them.
pub fn normalize_gaps(records: &[CarFollowRecord], min_samples: usize) -> Normalized {
    let mut out = Normalized { samples: Vec::with_capacity(records.len()), cases_used: 0, dropped: Vec::new() };
    for (id, recs) in group(records) {
        if recs.len() < min_samples.max(2) {
            out.dropped.push(RejectedCase {
                case_id: id.to_string(),
                reason: format!("{} samples, need {}", recs.len(), min_samples.max(2)),
            });
            continue;
        }
        let n = recs.len() as f64;
        let mean = recs.iter().map(|r| r.gap).sum::<f64>() / n;
        let var = recs.iter().map(|r| (r.gap - mean) * (r.gap - mean)).sum::<f64>() / n;
        if !(var > 0.0) {
            out.dropped.push(RejectedCase { case_id: id.to_string(), reason: "zero gap variance".into() });
            continue;
        }
        let sd = var.sqrt();
        out.samples.extend(recs.iter().map(|r| (r.gap - mean) / sd));
        out.cases_used += 1;
    }
    out
}
