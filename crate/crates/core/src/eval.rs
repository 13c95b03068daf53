//! Point-cloud reconstruction metrics.
//!
//! Distances are reported in centimeters. Nearest neighbours come from an
//! exact kd-tree, so results match a brute-force search up to floating-point
//! summation order.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{invalid, Result};

const LEAF: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid(format!("point {p:?} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn require_nonempty(&self, name: &str) -> Result<()> {
        if self.is_empty() {
            Err(invalid(format!("{name} cloud is empty")))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Static kd-tree over a borrowed point set.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vector3<f64>]) -> Self {
        let idx: Vec<usize> = (0..points.len()).collect();
        Self {
            points,
            root: Self::build_node(points, idx),
        }
    }

    fn build_node(points: &[Vector3<f64>], mut idx: Vec<usize>) -> Node {
        if idx.len() <= LEAF {
            return Node::Leaf(idx);
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &idx {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] == lo[axis] {
            return Node::Leaf(idx);
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[idx[mid]][axis];
        let right = idx.split_off(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, idx)),
            right: Box::new(Self::build_node(points, right)),
        }
    }

    /// Distance to the nearest stored point, or `None` when the tree is empty.
    pub fn nearest_distance(&self, q: &Vector3<f64>) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        self.search(&self.root, q, &mut best);
        Some(best.sqrt())
    }

    fn search(&self, node: &Node, q: &Vector3<f64>, best: &mut f64) {
        match node {
            Node::Leaf(idx) => {
                for &i in idx {
                    let d = (self.points[i] - q).norm_squared();
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn nearest_distances(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    let tree = KdTree::build(to);
    from.par_iter()
        .map(|p| tree.nearest_distance(p).expect("target cloud is nonempty"))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean distance (cm) from each ground-truth point to the synthetic cloud.
pub fn completion(gt: &PointCloud, synth: &PointCloud) -> Result<f64> {
    gt.require_nonempty("ground-truth")?;
    synth.require_nonempty("synthetic")?;
    Ok(100.0 * mean(&nearest_distances(&gt.points, &synth.points)))
}

/// Mean distance (cm) from each synthetic point to the ground truth.
pub fn accuracy(gt: &PointCloud, synth: &PointCloud) -> Result<f64> {
    completion(synth, gt)
}

/// Harmonic mean (%) of precision and recall at `threshold_cm`.
pub fn f_score(gt: &PointCloud, synth: &PointCloud, threshold_cm: f64) -> Result<f64> {
    Ok(metrics(gt, synth, threshold_cm)?.f_score_pct)
}

pub fn harmonic_f(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub completion_cm: f64,
    pub accuracy_cm: f64,
    pub chamfer_l1_cm: f64,
    pub f_score_pct: f64,
    pub threshold_cm: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "completion_cm,accuracy_cm,chamfer_l1_cm,f_score_pct,threshold_cm";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.completion_cm, self.accuracy_cm, self.chamfer_l1_cm, self.f_score_pct, self.threshold_cm
        )
    }

    /// Component-wise mean of several reports sharing one threshold.
    pub fn mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(invalid("no reports to average"));
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let completion_cm = avg(|r| r.completion_cm);
        let accuracy_cm = avg(|r| r.accuracy_cm);
        Ok(MetricsReport {
            completion_cm,
            accuracy_cm,
            chamfer_l1_cm: (completion_cm + accuracy_cm) / 2.0,
            f_score_pct: avg(|r| r.f_score_pct),
            threshold_cm: reports[0].threshold_cm,
        })
    }
}

/// The full metric suite in one pass over both clouds.
pub fn metrics(gt: &PointCloud, synth: &PointCloud, threshold_cm: f64) -> Result<MetricsReport> {
    if !(threshold_cm > 0.0 && threshold_cm.is_finite()) {
        return Err(invalid(format!("threshold {threshold_cm} cm must be positive")));
    }
    gt.require_nonempty("ground-truth")?;
    synth.require_nonempty("synthetic")?;
    let to_synth = nearest_distances(&gt.points, &synth.points);
    let to_gt = nearest_distances(&synth.points, &gt.points);
    let t = threshold_cm / 100.0;
    let within = |d: &[f64]| 100.0 * d.iter().filter(|&&x| x <= t).count() as f64 / d.len() as f64;
    let completion_cm = 100.0 * mean(&to_synth);
    let accuracy_cm = 100.0 * mean(&to_gt);
    Ok(MetricsReport {
        completion_cm,
        accuracy_cm,
        chamfer_l1_cm: (completion_cm + accuracy_cm) / 2.0,
        f_score_pct: harmonic_f(within(&to_gt), within(&to_synth)),
        threshold_cm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Vector3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn identical_clouds() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        let m = metrics(&a, &a, 20.0).unwrap();
        assert_eq!(m.completion_cm, 0.0);
        assert_eq!(m.accuracy_cm, 0.0);
        assert_eq!(m.f_score_pct, 100.0);
    }

    #[test]
    fn ten_centimeters() {
        let gt = cloud(&[[0.0, 0.0, 0.0]]);
        let synth = cloud(&[[0.1, 0.0, 0.0]]);
        assert_relative_eq!(completion(&gt, &synth).unwrap(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(accuracy(&gt, &synth).unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_clouds_score_zero() {
        let gt = cloud(&[[0.0, 0.0, 0.0]]);
        let synth = cloud(&[[5.0, 0.0, 0.0]]);
        assert_eq!(f_score(&gt, &synth, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_mean_example() {
        assert_relative_eq!(harmonic_f(80.0, 100.0), 16000.0 / 180.0, epsilon = 1e-12);
        assert_eq!(harmonic_f(0.0, 0.0), 0.0);
    }

    #[test]
    fn empty_clouds_rejected() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let e = PointCloud::new(vec![]).unwrap();
        assert!(completion(&a, &e).is_err());
        assert!(metrics(&e, &a, 10.0).is_err());
        assert!(PointCloud::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn duplicate_points_build_a_leaf() {
        let pts = vec![Vector3::new(1.0, 1.0, 1.0); 100];
        let tree = KdTree::build(&pts);
        assert_eq!(tree.nearest_distance(&Vector3::new(1.0, 1.0, 2.0)), Some(1.0));
    }
}
