//! Hand skeleton graph and the heatmap operations defined over it.
//!
//! Joint 0 is the wrist. Fingers are numbered thumb, index, middle, ring,
//! pinky; finger `f` owns joints `4f+1 ..= 4f+4` ordered from base to tip.

use crate::error::{ensure_contract, Result};
use crate::scalar::Scalar;
use crate::tensor::HeatmapStack;
use crate::{Joints, OcclusionMask, JOINT_COUNT};

pub const FINGER_COUNT: usize = 5;
pub const JOINTS_PER_FINGER: usize = 4;
pub const WRIST: usize = 0;

/// Joint index of finger `finger` (0 = thumb), segment `segment` (0 = base, 3 = tip).
#[inline]
pub const fn finger_joint(finger: usize, segment: usize) -> usize {
    JOINTS_PER_FINGER * finger + segment + 1
}

/// Parent of a joint in the wrist-rooted tree; `None` for the wrist.
pub const fn parent(joint: usize) -> Option<usize> {
    if joint == WRIST {
        None
    } else if (joint - 1).is_multiple_of(JOINTS_PER_FINGER) {
        Some(WRIST)
    } else {
        Some(joint - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    edges: Vec<(usize, usize)>,
    adjacency: [[u8; JOINT_COUNT]; JOINT_COUNT],
    degree: [usize; JOINT_COUNT],
    laplacian: [[f64; JOINT_COUNT]; JOINT_COUNT],
}

/// The canonical 21-joint, 20-edge hand tree.
pub fn build_hand_skeleton() -> SkeletonGraph {
    let edges: Vec<(usize, usize)> = (1..JOINT_COUNT).map(|j| (parent(j).unwrap(), j)).collect();
    let mut adjacency = [[0u8; JOINT_COUNT]; JOINT_COUNT];
    for &(a, b) in &edges {
        adjacency[a][b] = 1;
        adjacency[b][a] = 1;
    }
    let mut degree = [0usize; JOINT_COUNT];
    for (i, row) in adjacency.iter().enumerate() {
        degree[i] = row.iter().map(|&v| v as usize).sum();
    }
    let mut laplacian = [[0.0; JOINT_COUNT]; JOINT_COUNT];
    for i in 0..JOINT_COUNT {
        for j in 0..JOINT_COUNT {
            if adjacency[i][j] != 0 {
                laplacian[i][j] = 1.0 / ((degree[i] * degree[j]) as f64).sqrt();
            }
        }
    }
    SkeletonGraph {
        edges,
        adjacency,
        degree,
        laplacian,
    }
}

impl SkeletonGraph {
    pub fn joint_count(&self) -> usize {
        JOINT_COUNT
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &[[u8; JOINT_COUNT]; JOINT_COUNT] {
        &self.adjacency
    }

    pub fn degree(&self, joint: usize) -> usize {
        self.degree[joint]
    }

    /// Diagonal degree matrix `D`.
    pub fn degree_matrix(&self) -> [[f64; JOINT_COUNT]; JOINT_COUNT] {
        let mut d = [[0.0; JOINT_COUNT]; JOINT_COUNT];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = self.degree[i] as f64;
        }
        d
    }

    /// Normalized adjacency `D^-1/2 A D^-1/2`.
    pub fn laplacian(&self) -> &[[f64; JOINT_COUNT]; JOINT_COUNT] {
        &self.laplacian
    }

    pub fn neighbors(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        (0..JOINT_COUNT).filter(move |&q| self.adjacency[joint][q] != 0)
    }

    /// Row-major `K x K` mixing matrix applied by [`mutual_reinforce`]:
    /// identity on the diagonal, `L[k][q]` off it.
    pub fn reinforcement_matrix<S: Scalar>(&self) -> Vec<S> {
        let mut m = vec![S::zero(); JOINT_COUNT * JOINT_COUNT];
        for k in 0..JOINT_COUNT {
            for q in 0..JOINT_COUNT {
                let v = if k == q { 1.0 } else { self.laplacian[k][q] };
                m[k * JOINT_COUNT + q] = S::of(v);
            }
        }
        m
    }

    /// Joints reachable from the wrist by breadth-first search.
    pub fn reachable_from_wrist(&self) -> usize {
        let mut seen = [false; JOINT_COUNT];
        let mut queue = std::collections::VecDeque::from([WRIST]);
        seen[WRIST] = true;
        let mut count = 1;
        while let Some(j) = queue.pop_front() {
            for q in self.neighbors(j) {
                if !seen[q] {
                    seen[q] = true;
                    count += 1;
                    queue.push_back(q);
                }
            }
        }
        count
    }
}

/// Enhances each joint heatmap with its graph neighbours:
/// `out_k = hm_k + sum_{q != k} L[k][q] * hm_q`.
pub fn mutual_reinforce<S: Scalar>(heatmaps: &HeatmapStack<S>, graph: &SkeletonGraph) -> Result<HeatmapStack<S>> {
    ensure_contract!(
        heatmaps.channels() == JOINT_COUNT,
        "mutual reinforcement needs {JOINT_COUNT} maps, got {}",
        heatmaps.channels()
    );
    let mut out = heatmaps.clone();
    for k in 0..JOINT_COUNT {
        for q in graph.neighbors(k) {
            let l = S::of(graph.laplacian[k][q]);
            let src = heatmaps.channel(q);
            for (o, &s) in out.channel_mut(k).iter_mut().zip(src) {
                *o += l * s;
            }
        }
    }
    Ok(out)
}

/// Per-joint scale factors used by [`error_reweight`].
///
/// Visible joint `k` gets `Ed_k / sum Ed` with `Ed_k = |pred_k - gt_k|`;
/// occluded joints get zero. When every visible joint is predicted exactly
/// the factors fall back to `1 / |visible|`.
pub fn reweight_factors(pred: &Joints, gt: &Joints, occluded: &OcclusionMask) -> [f64; JOINT_COUNT] {
    let mut ed = [0.0; JOINT_COUNT];
    for k in 0..JOINT_COUNT {
        if !occluded[k] {
            ed[k] = ((pred[k][0] - gt[k][0]).powi(2) + (pred[k][1] - gt[k][1]).powi(2)).sqrt();
        }
    }
    let total: f64 = ed.iter().sum();
    let visible = occluded.iter().filter(|&&o| !o).count();
    let mut factors = [0.0; JOINT_COUNT];
    if total > 0.0 {
        for k in 0..JOINT_COUNT {
            factors[k] = ed[k] / total;
        }
    } else if visible > 0 {
        let u = 1.0 / visible as f64;
        for k in 0..JOINT_COUNT {
            if !occluded[k] {
                factors[k] = u;
            }
        }
    }
    factors
}

/// Scales every map by its joint's share of the total localization error.
pub fn error_reweight<S: Scalar>(
    heatmaps: &HeatmapStack<S>,
    pred: &Joints,
    gt: &Joints,
    occluded: &OcclusionMask,
) -> HeatmapStack<S> {
    let factors = reweight_factors(pred, gt, occluded);
    let mut out = heatmaps.clone();
    for (k, f) in factors.iter().enumerate() {
        let f = S::of(*f);
        out.channel_mut(k).iter_mut().for_each(|v| *v *= f);
    }
    out
}
