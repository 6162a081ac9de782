//! Overlap between users' recommendation lists: IoU, rank-biased overlap,
//! and the per-engine Mean ± SD report.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_RBO_P: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ranked lists must be non-empty")]
    EmptyList,
    #[error("ranked list contains duplicate id {0:?}")]
    Duplicate(String),
    #[error("persistence p must be in (0, 1) (got {0})")]
    InvalidPersistence(f64),
    #[error("lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("overlap report needs ≥ 2 users (got {0})")]
    TooFewUsers(usize),
    #[error("user {0:?} does not cover the same engines as the others")]
    EngineMismatch(String),
}

fn check_list<T: AsRef<str>>(list: &[T]) -> Result<HashSet<&str>, MetricsError> {
    if list.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let mut set = HashSet::with_capacity(list.len());
    for x in list {
        if !set.insert(x.as_ref()) {
            return Err(MetricsError::Duplicate(x.as_ref().to_string()));
        }
    }
    Ok(set)
}

/// |a ∩ b| / |a ∪ b|.
pub fn iou<T: AsRef<str>>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    let sa = check_list(a)?;
    let sb = check_list(b)?;
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Extrapolated rank-biased overlap at depth k = |a|:
/// (X_k/k)·p^k + ((1−p)/p)·Σ_{d=1..k} (X_d/d)·p^d.
pub fn rbo<T: AsRef<str>>(a: &[T], b: &[T], p: f64) -> Result<f64, MetricsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricsError::InvalidPersistence(p));
    }
    check_list(a)?;
    check_list(b)?;
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let k = a.len();
    let mut seen_a = HashSet::with_capacity(k);
    let mut seen_b = HashSet::with_capacity(k);
    let mut overlap = 0usize;
    let mut sum = 0.0;
    let mut weight = 1.0;
    for d in 1..=k {
        let (x, y) = (a[d - 1].as_ref(), b[d - 1].as_ref());
        if x == y {
            overlap += 1;
        } else {
            if seen_b.contains(x) {
                overlap += 1;
            }
            if seen_a.contains(y) {
                overlap += 1;
            }
        }
        seen_a.insert(x);
        seen_b.insert(y);
        weight *= p;
        sum += overlap as f64 / d as f64 * weight;
    }
    Ok(overlap as f64 / k as f64 * weight + (1.0 - p) / p * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            mean,
            sd: var.sqrt(),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineOverlap {
    pub iou: MeanSd,
    pub rbo: MeanSd,
}

/// Per-engine IoU and RBO over all unordered user pairs, plus a pooled "All" column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub p: f64,
    pub users: usize,
    pub engines: BTreeMap<String, EngineOverlap>,
    pub all: EngineOverlap,
}

pub const ALL_COLUMN: &str = "All";

/// `rankings` maps user → engine → ranked painting ids.
pub fn overlap_report(
    rankings: &BTreeMap<String, BTreeMap<String, Vec<String>>>,
    p: f64,
) -> Result<OverlapReport, MetricsError> {
    if rankings.len() < 2 {
        return Err(MetricsError::TooFewUsers(rankings.len()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricsError::InvalidPersistence(p));
    }
    let engines: BTreeSet<&String> = rankings.values().next().unwrap().keys().collect();
    for (user, per_engine) in rankings {
        if per_engine.keys().collect::<BTreeSet<_>>() != engines {
            return Err(MetricsError::EngineMismatch(user.clone()));
        }
    }
    let users: Vec<&BTreeMap<String, Vec<String>>> = rankings.values().collect();
    let mut out = BTreeMap::new();
    let (mut all_iou, mut all_rbo) = (Vec::new(), Vec::new());
    for engine in engines {
        let (mut ious, mut rbos) = (Vec::new(), Vec::new());
        for i in 0..users.len() {
            for j in i + 1..users.len() {
                let (a, b) = (&users[i][engine], &users[j][engine]);
                ious.push(iou(a, b)?);
                rbos.push(rbo(a, b, p)?);
            }
        }
        all_iou.extend_from_slice(&ious);
        all_rbo.extend_from_slice(&rbos);
        out.insert(
            engine.clone(),
            EngineOverlap {
                iou: MeanSd::of(&ious),
                rbo: MeanSd::of(&rbos),
            },
        );
    }
    Ok(OverlapReport {
        p,
        users: users.len(),
        engines: out,
        all: EngineOverlap {
            iou: MeanSd::of(&all_iou),
            rbo: MeanSd::of(&all_rbo),
        },
    })
}

impl OverlapReport {
    fn columns(&self) -> Vec<(&str, &EngineOverlap)> {
        let mut cols: Vec<(&str, &EngineOverlap)> = self.engines.iter().map(|(k, v)| (k.as_str(), v)).collect();
        cols.push((ALL_COLUMN, &self.all));
        cols
    }

    /// Aligned text table: one row per measure, one column per engine plus All.
    pub fn to_table(&self) -> String {
        let cols = self.columns();
        let cell = |m: &MeanSd| format!("{:.2} ± {:.2}", m.mean, m.sd);
        let rows: Vec<(&str, Vec<String>)> = vec![
            ("IoU", cols.iter().map(|(_, e)| cell(&e.iou)).collect()),
            ("RBO", cols.iter().map(|(_, e)| cell(&e.rbo)).collect()),
        ];
        let widths: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                rows.iter()
                    .map(|(_, cells)| cells[i].chars().count())
                    .chain(std::iter::once(name.chars().count()))
                    .max()
                    .unwrap()
            })
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# Ranking overlap, Mean ± SD (population) over {} user pairs; RBO extrapolated at list depth, p = {}; All pools every engine's pairs",
            self.users * (self.users - 1) / 2,
            self.p
        );
        let _ = write!(out, "{:<7}", "Measure");
        for ((name, _), w) in cols.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", name, w = w);
        }
        out.push('\n');
        for (label, cells) in &rows {
            let _ = write!(out, "{:<7}", label);
            for (c, w) in cells.iter().zip(&widths) {
                let pad = w - c.chars().count();
                let _ = write!(out, "  {}{}", " ".repeat(pad), c);
            }
            out.push('\n');
        }
        out
    }

    /// Machine-readable form: measure,engine,mean,sd,pairs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("measure,engine,mean,sd,pairs\n");
        for (label, pick) in [("iou", 0), ("rbo", 1)] {
            for (name, e) in self.columns() {
                let m = if pick == 0 { &e.iou } else { &e.rbo };
                let _ = writeln!(out, "{label},{name},{:.6},{:.6},{}", m.mean, m.sd, m.n);
            }
        }
        out
    }
}
