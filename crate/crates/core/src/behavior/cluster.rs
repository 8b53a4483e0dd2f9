use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Neighborhood radius of the density grouping (m/s).
    pub eps_mps: f64,
    /// Minimum neighborhood size, the sample itself included.
    pub min_lns: usize,
    /// Adjacent groups whose centers are closer than this are merged (m/s).
    pub merge_gap_mps: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps_mps: 1.5,
            min_lns: 3,
            merge_gap_mps: 2.0,
        }
    }
}

/// Result of clustering scalar speeds: groups sorted by strictly increasing center.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedClusters {
    pub centers: Vec<f64>,
    /// Cluster index for every input sample, in input order.
    pub assignment: Vec<usize>,
}

impl SpeedClusters {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }
}

/// Two-stage clustering of approach speeds.
///
/// Stage one is density grouping specialised to scalars: a sample is a core sample when at
/// least `min_lns` samples lie within `eps`; cores within `eps` of each other chain into a
/// group and non-core samples join the group of their nearest core. Stage two repeatedly
/// merges the adjacent pair of groups with the smallest center gap while that gap is below
/// `merge_gap`. Remaining noise goes to the nearest center. Without any core sample the whole
/// set forms one cluster.
pub fn cluster_velocities(samples: &[f64], params: &ClusterParams) -> Result<SpeedClusters> {
    if samples.is_empty() {
        return Err(Error::Validation("cluster_velocities needs at least one sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite speed sample".into()));
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| samples[i]).collect();
    let eps = params.eps_mps;

    // Neighborhood sizes via two pointers over the sorted values.
    let mut core = vec![false; n];
    let (mut lo, mut hi) = (0, 0);
    for k in 0..n {
        while sorted[k] - sorted[lo] > eps {
            lo += 1;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[k] <= eps {
            hi += 1;
        }
        core[k] = hi + 1 - lo >= params.min_lns.max(1);
    }

    // Chain cores into groups (sorted positions).
    let mut group_of: Vec<Option<usize>> = vec![None; n];
    let mut groups = 0;
    let mut last_core: Option<usize> = None;
    for k in 0..n {
        if !core[k] {
            continue;
        }
        match last_core {
            Some(j) if sorted[k] - sorted[j] <= eps => group_of[k] = group_of[j],
            _ => {
                group_of[k] = Some(groups);
                groups += 1;
            }
        }
        last_core = Some(k);
    }
    if groups == 0 {
        let center = sorted.iter().sum::<f64>() / n as f64;
        return Ok(SpeedClusters {
            centers: vec![center],
            assignment: vec![0; n],
        });
    }
    // Border samples join the nearest core within eps.
    let cores: Vec<usize> = (0..n).filter(|&k| core[k]).collect();
    for k in 0..n {
        if core[k] {
            continue;
        }
        let nearest = nearest_by(&cores, |&c| (sorted[c] - sorted[k]).abs());
        if let Some(c) = nearest {
            if (sorted[c] - sorted[k]).abs() <= eps {
                group_of[k] = group_of[c];
            }
        }
    }

    // Stage two: agglomerative merge of adjacent groups.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for k in 0..n {
        if let Some(g) = group_of[k] {
            members[g].push(k);
        }
    }
    let mean = |m: &[usize]| m.iter().map(|&k| sorted[k]).sum::<f64>() / m.len() as f64;
    let mut centers: Vec<f64> = members.iter().map(|m| mean(m)).collect();
    loop {
        let best = (0..centers.len().saturating_sub(1))
            .map(|i| (i, centers[i + 1] - centers[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((i, gap)) if gap < params.merge_gap_mps => {
                let upper = members.remove(i + 1);
                members[i].extend(upper);
                centers.remove(i + 1);
                centers[i] = mean(&members[i]);
            }
            _ => break,
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for (g, m) in members.iter().enumerate() {
        for &k in m {
            assignment[order[k]] = g;
        }
    }
    for k in 0..n {
        if assignment[order[k]] == usize::MAX {
            let idx: Vec<usize> = (0..centers.len()).collect();
            assignment[order[k]] = nearest_by(&idx, |&c| (centers[c] - sorted[k]).abs()).expect("at least one group");
        }
    }
    // Recompute centers over the final partition, noise included.
    let mut sums = vec![(0.0, 0usize); centers.len()];
    for (i, &g) in assignment.iter().enumerate() {
        sums[g].0 += samples[i];
        sums[g].1 += 1;
    }
    let centers = sums.iter().map(|&(s, c)| s / c as f64).collect();
    Ok(SpeedClusters { centers, assignment })
}

/// First element minimizing `key`.
fn nearest_by<T: Copy>(items: &[T], key: impl Fn(&T) -> f64) -> Option<T> {
    let mut best: Option<(T, f64)> = None;
    for it in items {
        let d = key(it);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((*it, d));
        }
    }
    best.map(|b| b.0)
}

/// Mean derived speed over the samples whose arc position lies in
/// `[end_arc - lookback_m, end_arc]`. Falls back to the sample nearest `end_arc` when the window
/// holds no sample.
pub fn window_mean_speed(traj: &Trajectory, arc: &[f64], end_arc: f64, lookback_m: f64) -> f64 {
    let lo = end_arc - lookback_m;
    let (sum, n) = arc
        .iter()
        .zip(traj.speeds())
        .filter(|(&s, _)| s >= lo && s <= end_arc)
        .fold((0.0, 0usize), |(a, n), (_, &v)| (a + v, n + 1));
    if n > 0 {
        return sum / n as f64;
    }
    let idx: Vec<usize> = (0..arc.len()).collect();
    nearest_by(&idx, |&i| (arc[i] - end_arc).abs()).map_or(0.0, |i| traj.speeds()[i])
}

/// Mean speed over the last `lookback_m` meters before the trajectory's closest approach to
/// `node`.
pub fn sample_approach_velocity(traj: &Trajectory, node: Point2, lookback_m: f64, snap_m: f64) -> Result<f64> {
    let pts = traj.positions();
    let proj =
        crate::geometry::project_on_polyline(node, &pts).ok_or_else(|| Error::Validation("empty trajectory".into()))?;
    if proj.distance > snap_m {
        return Err(Error::Validation(format!(
            "trajectory {} never comes within {snap_m} m of the node (closest {:.2} m)",
            traj.id(),
            proj.distance
        )));
    }
    let arc = traj.arc_lengths();
    Ok(window_mean_speed(traj, &arc, proj.arc_length, lookback_m))
}
