use super::{Peak, PeakList};
use crate::error::{domain, Result};

pub const DEFAULT_EPS: f64 = 1.5;
pub const DEFAULT_MIN_PTS: usize = 1;

const UNVISITED: usize = usize::MAX;
const NOISE: usize = usize::MAX - 1;

/// DBSCAN over peak positions in bin space, one magnitude-weighted centroid
/// per cluster.
///
/// `min_pts` counts the point itself. With `min_pts == 1` every peak is a
/// core point, so isolated peaks come back as singleton clusters; otherwise
/// noise points are dropped. The centroid magnitude is the cluster maximum.
pub fn cluster_peaks(peaks: &PeakList, eps: f64, min_pts: usize) -> Result<PeakList> {
    if !(eps > 0.0) {
        return Err(domain(format!("DBSCAN eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(domain("DBSCAN min_pts must be >= 1"));
    }
    let mut points: Vec<Peak> = peaks.peaks.clone();
    points.sort_by_key(|a| (a.p, a.q));

    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        let a = &points[i];
        (0..points.len())
            .filter(|&j| {
                let b = &points[j];
                let dp = a.p as f64 - b.p as f64;
                let dq = a.q as f64 - b.q as f64;
                dp * dp + dq * dq <= eps2
            })
            .collect()
    };

    let mut label = vec![UNVISITED; points.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..points.len() {
        if label[i] != UNVISITED {
            continue;
        }
        let seeds = neighbours(i);
        if seeds.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        label[i] = id;
        let mut queue = seeds;
        while let Some(j) = queue.pop() {
            if label[j] == NOISE {
                label[j] = id;
                members.push(j);
                continue;
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = id;
            members.push(j);
            let more = neighbours(j);
            if more.len() >= min_pts {
                queue.extend(more);
            }
        }
        clusters.push(members);
    }

    let centroids = clusters
        .iter()
        .map(|members| {
            let weight: f64 = members.iter().map(|&k| points[k].magnitude).sum();
            let (sp, sq) = members.iter().fold((0.0, 0.0), |(sp, sq), &k| {
                let pk = &points[k];
                (sp + pk.p as f64 * pk.magnitude, sq + pk.q as f64 * pk.magnitude)
            });
            let (p, q) = if weight > 0.0 {
                (sp / weight, sq / weight)
            } else {
                let n = members.len() as f64;
                (
                    members.iter().map(|&k| points[k].p as f64).sum::<f64>() / n,
                    members.iter().map(|&k| points[k].q as f64).sum::<f64>() / n,
                )
            };
            Peak {
                p: p.round() as usize,
                q: q.round() as usize,
                magnitude: members.iter().map(|&k| points[k].magnitude).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(PeakList { peaks: centroids, params: peaks.params })
}
