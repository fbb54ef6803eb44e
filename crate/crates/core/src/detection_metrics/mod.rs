//! Peak detection and the SINR / EVM / AP scores.

mod cfar;
mod cluster;
mod report;

pub use cfar::{ca_cfar, CfarParams};
pub use cluster::{cluster_peaks, DEFAULT_EPS, DEFAULT_MIN_PTS};
pub use report::{write_csv, write_jsonl, MetricRecord, CSV_HEADER};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rd_pipeline::{MapValues, RdMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Object,
    Noise,
    Other,
}

/// A set of `(range, doppler)` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    pub cells: BTreeSet<(usize, usize)>,
    pub kind: CellKind,
}

impl CellSet {
    pub fn new(kind: CellKind) -> Self {
        Self { cells: BTreeSet::new(), kind }
    }

    pub fn from_cells(kind: CellKind, cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self { cells: cells.into_iter().collect(), kind }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: (usize, usize)) -> bool {
        self.cells.contains(&cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells.iter().copied()
    }

    /// Grow by a `(2r+1) x (2r+1)` square around every cell, wrapping at the edges.
    pub fn dilate(&self, radius: usize, shape: (usize, usize)) -> CellSet {
        let (rows, cols) = shape;
        let r = radius as isize;
        let mut out = BTreeSet::new();
        for &(p, q) in &self.cells {
            for dp in -r..=r {
                for dq in -r..=r {
                    let pp = (p as isize + dp).rem_euclid(rows as isize) as usize;
                    let qq = (q as isize + dq).rem_euclid(cols as isize) as usize;
                    out.insert((pp, qq));
                }
            }
        }
        CellSet { cells: out, kind: self.kind }
    }

    pub fn check_bounds(&self, shape: (usize, usize)) -> Result<()> {
        match self.cells.iter().find(|(p, q)| *p >= shape.0 || *q >= shape.1) {
            Some(c) => Err(domain(format!("cell {c:?} outside map {shape:?}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub p: usize,
    pub q: usize,
    /// Linear magnitude.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    pub params: Option<CfarParams>,
}

impl PeakList {
    pub fn from_cells(cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self { peaks: cells.into_iter().map(|(p, q)| Peak { p, q, magnitude: 1.0 }).collect(), params: None }
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.peaks.iter().map(|pk| (pk.p, pk.q))
    }
}

/// Object cells `O` and noise cells `N` derived from a clean reference map.
///
/// `O` is the CFAR detection set dilated by `guard_margin`; `N` is every
/// other cell outside a further `guard_margin` ring.
pub fn object_noise_cells(reference: &RdMap, cfar: &CfarParams, guard_margin: usize) -> Result<(CellSet, CellSet)> {
    object_noise_cells_excluding(reference, cfar, guard_margin, None)
}

/// As [`object_noise_cells`], with `excluded` cells removed from both sets.
pub fn object_noise_cells_excluding(
    reference: &RdMap,
    cfar: &CfarParams,
    guard_margin: usize,
    excluded: Option<&CellSet>,
) -> Result<(CellSet, CellSet)> {
    let shape = reference.dim();
    let detections = ca_cfar(reference, cfar)?;
    let mut raw = CellSet::from_cells(CellKind::Object, detections.cells());
    if let Some(ex) = excluded {
        raw.cells.retain(|c| !ex.contains(*c));
    }
    let mut objects = raw.dilate(guard_margin, shape);
    if let Some(ex) = excluded {
        objects.cells.retain(|c| !ex.contains(*c));
    }
    if objects.is_empty() {
        return Err(Error::NoObjects);
    }
    let keep_out = objects.dilate(guard_margin, shape);
    let mut noise = CellSet::new(CellKind::Noise);
    for p in 0..shape.0 {
        for q in 0..shape.1 {
            let c = (p, q);
            if !keep_out.contains(c) && !excluded.is_some_and(|ex| ex.contains(c)) {
                noise.cells.insert(c);
            }
        }
    }
    Ok((objects, noise))
}

/// `10 log10(mean_O |S|^2 / mean_N |S|^2)`.
pub fn sinr(map: &RdMap, objects: &CellSet, noise: &CellSet) -> Result<f64> {
    if objects.is_empty() || noise.is_empty() {
        return Err(domain("SINR needs non-empty object and noise sets"));
    }
    let shape = map.dim();
    objects.check_bounds(shape)?;
    noise.check_bounds(shape)?;
    let power = map.linear_power();
    let mean = |set: &CellSet| set.iter().map(|c| power[c]).sum::<f64>() / set.len() as f64;
    Ok(10.0 * (mean(objects) / mean(noise)).log10())
}

/// Mean relative error magnitude over the object cells.
///
/// Complex maps compare complex values; otherwise linear magnitudes are
/// compared.
pub fn evm(clean: &RdMap, test: &RdMap, objects: &CellSet) -> Result<f64> {
    if clean.dim() != test.dim() {
        return Err(Error::Shape { expected: clean.dim(), actual: test.dim() });
    }
    if objects.is_empty() {
        return Err(domain("EVM needs a non-empty object set"));
    }
    objects.check_bounds(clean.dim())?;
    let mut total = 0.0;
    match (clean.values(), test.values()) {
        (MapValues::Complex(c), MapValues::Complex(t)) => {
            for cell in objects.iter() {
                let reference = c[cell];
                if reference.norm() == 0.0 {
                    return Err(domain(format!("clean map is zero at object cell {cell:?}")));
                }
                total += (reference - t[cell]).norm() / reference.norm();
            }
        }
        _ => {
            let c = clean.linear_magnitude();
            let t = test.linear_magnitude();
            let (c, t) = (c.magnitude_values().unwrap(), t.magnitude_values().unwrap());
            for cell in objects.iter() {
                if c[cell] == 0.0 {
                    return Err(domain(format!("clean map is zero at object cell {cell:?}")));
                }
                total += (c[cell] - t[cell]).abs() / c[cell];
            }
        }
    }
    Ok(total / objects.len() as f64)
}

/// Percentage of reference peaks matched one-to-one by a detected peak
/// within Chebyshev distance `tolerance_bins`.
///
/// Matching is maximum-cardinality (augmenting paths), so the score never
/// drops when the tolerance grows.
pub fn average_precision(reference: &PeakList, detected: &PeakList, tolerance_bins: usize) -> Result<f64> {
    if reference.is_empty() {
        return Err(domain("average precision needs at least one reference peak"));
    }
    let refs: Vec<(usize, usize)> = reference.cells().collect();
    let adjacency: Vec<Vec<usize>> = detected
        .cells()
        .map(|(p, q)| {
            refs.iter()
                .enumerate()
                .filter(|(_, (rp, rq))| p.abs_diff(*rp).max(q.abs_diff(*rq)) <= tolerance_bins)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; refs.len()];
    let mut matched = 0usize;
    for det in 0..adjacency.len() {
        let mut seen = vec![false; refs.len()];
        if augment(det, &adjacency, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    Ok(100.0 * matched as f64 / refs.len() as f64)
}

fn augment(det: usize, adjacency: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &r in &adjacency[det] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        if owner[r].is_none_or(|other| augment(other, adjacency, owner, seen)) {
            owner[r] = Some(det);
            return true;
        }
    }
    false
}
