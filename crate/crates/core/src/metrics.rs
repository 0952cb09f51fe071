//! Pose evaluation metrics: MPJPE, Procrustes-aligned MPJPE, PCK and AUC.
//!
//! All functions take `N×3` joint matrices in whatever length unit the
//! dataset declares.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::MetricError;
use crate::tensor::Tensor;

/// Default PCK threshold and AUC grid upper bound, in millimetres.
pub const PCK_THRESHOLD_MM: f64 = 150.0;
/// AUC grid step, in millimetres.
pub const AUC_STEP_MM: f64 = 5.0;

/// Millimetres per unit for the unit names we recognise.
pub fn millimetres_per_unit(unit: &str) -> Option<f64> {
    match unit {
        "mm" => Some(1.0),
        "cm" => Some(10.0),
        "m" => Some(1000.0),
        _ => None,
    }
}

/// The 150 mm PCK threshold expressed in `unit` (unknown units are taken as mm).
pub fn default_pck_threshold(unit: &str) -> f64 {
    PCK_THRESHOLD_MM / millimetres_per_unit(unit).unwrap_or(1.0)
}

/// The 0..=150 mm grid in 5 mm steps, expressed in `unit`.
pub fn default_auc_grid(unit: &str) -> Vec<f64> {
    let scale = millimetres_per_unit(unit).unwrap_or(1.0);
    let steps = (PCK_THRESHOLD_MM / AUC_STEP_MM) as usize;
    (0..=steps).map(|i| i as f64 * AUC_STEP_MM / scale).collect()
}

fn check_pair(pred: &Tensor, gt: &Tensor) -> Result<usize, MetricError> {
    match (pred.shape(), gt.shape()) {
        ([n, 3], [m, 3]) if n == m => Ok(*n),
        _ => Err(MetricError::Shape {
            pred: pred.shape().to_vec(),
            gt: gt.shape().to_vec(),
        }),
    }
}

/// Euclidean error of every joint.
pub fn joint_errors(pred: &Tensor, gt: &Tensor) -> Result<Vec<f64>, MetricError> {
    check_pair(pred, gt)?;
    Ok(pred
        .data()
        .chunks(3)
        .zip(gt.data().chunks(3))
        .map(|(p, g)| p.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect())
}

/// Mean per-joint position error.
pub fn mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64, MetricError> {
    let e = joint_errors(pred, gt)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignOptions {
    /// Permit an improper orthogonal transform (determinant -1).
    pub allow_reflection: bool,
}

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, points: &Tensor) -> Tensor {
        let data = points
            .data()
            .chunks(3)
            .flat_map(|p| {
                let v = self.scale * self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
                [v.x, v.y, v.z]
            })
            .collect();
        Tensor::new(points.shape(), data).expect("same shape")
    }
}

fn rows(t: &Tensor) -> Vec<Vector3<f64>> {
    t.data().chunks(3).map(|p| Vector3::new(p[0], p[1], p[2])).collect()
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

/// Least-squares similarity transform taking `pred` onto `gt`, from the SVD
/// of the centred cross-covariance. Without `allow_reflection` the smallest
/// singular direction is flipped when needed so that `det R = +1`.
pub fn procrustes_transform(pred: &Tensor, gt: &Tensor, opts: AlignOptions) -> Result<Similarity, MetricError> {
    check_pair(pred, gt)?;
    let (x, y) = (rows(pred), rows(gt));
    let (mx, my) = (centroid(&x), centroid(&y));
    let n = x.len() as f64;
    let var_y: f64 = y.iter().map(|p| (p - my).norm_squared()).sum::<f64>() / n;
    if var_y <= f64::EPSILON * my.norm_squared().max(1.0) {
        return Err(MetricError::Degenerate);
    }
    let var_x: f64 = x.iter().map(|p| (p - mx).norm_squared()).sum::<f64>() / n;
    let cov: Matrix3<f64> = x
        .iter()
        .zip(&y)
        .map(|(px, py)| (py - my) * (px - mx).transpose())
        .sum::<Matrix3<f64>>()
        / n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if !opts.allow_reflection && (u.determinant() * v_t.determinant()) < 0.0 {
        // nalgebra sorts singular values in decreasing order
        signs.z = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = if var_x > 0.0 {
        svd.singular_values.component_mul(&signs).sum() / var_x
    } else {
        0.0
    };
    let translation = my - scale * rotation * mx;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// `pred` after optimal proper similarity alignment to `gt`.
pub fn procrustes_align(pred: &Tensor, gt: &Tensor) -> Result<Tensor, MetricError> {
    procrustes_align_with(pred, gt, AlignOptions::default())
}

pub fn procrustes_align_with(pred: &Tensor, gt: &Tensor, opts: AlignOptions) -> Result<Tensor, MetricError> {
    Ok(procrustes_transform(pred, gt, opts)?.apply(pred))
}

/// MPJPE after Procrustes alignment (proper rotations only).
pub fn pa_mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64, MetricError> {
    pa_mpjpe_with(pred, gt, AlignOptions::default())
}

pub fn pa_mpjpe_with(pred: &Tensor, gt: &Tensor, opts: AlignOptions) -> Result<f64, MetricError> {
    mpjpe(&procrustes_align_with(pred, gt, opts)?, gt)
}

fn all_errors(preds: &[Tensor], gts: &[Tensor]) -> Result<Vec<f64>, MetricError> {
    if preds.len() != gts.len() {
        return Err(MetricError::Count {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let mut out = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        out.extend(joint_errors(p, g)?);
    }
    Ok(out)
}

fn pck_of(errors: &[f64], threshold: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64
}

/// Fraction of joints whose error is at most `threshold`.
pub fn pck(preds: &[Tensor], gts: &[Tensor], threshold: f64) -> Result<f64, MetricError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(MetricError::Config(format!("PCK threshold {threshold} must be positive")));
    }
    Ok(pck_of(&all_errors(preds, gts)?, threshold))
}

/// Mean PCK over an increasing threshold grid.
pub fn auc(preds: &[Tensor], gts: &[Tensor], thresholds: &[f64]) -> Result<f64, MetricError> {
    validate_grid(thresholds)?;
    let errors = all_errors(preds, gts)?;
    Ok(thresholds.iter().map(|&t| pck_of(&errors, t)).sum::<f64>() / thresholds.len() as f64)
}

fn validate_grid(thresholds: &[f64]) -> Result<(), MetricError> {
    if thresholds.is_empty() {
        return Err(MetricError::Config("AUC threshold grid is empty".into()));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) || thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(MetricError::Config("AUC thresholds must be finite, nonnegative and increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub action: String,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pck: f64,
    pub auc: f64,
    pub count: usize,
}

/// Per-action and aggregate metrics. The aggregate row is labelled `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub unit: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub pck_threshold: f64,
    pub auc_grid: Vec<f64>,
    pub align: AlignOptions,
}

impl EvalOptions {
    pub fn for_unit(unit: &str) -> Self {
        Self {
            pck_threshold: default_pck_threshold(unit),
            auc_grid: default_auc_grid(unit),
            align: AlignOptions::default(),
        }
    }
}

impl MetricReport {
    pub fn compute(
        preds: &[Tensor],
        gts: &[Tensor],
        actions: &[String],
        unit: &str,
        opts: &EvalOptions,
    ) -> Result<Self, MetricError> {
        if preds.len() != gts.len() || preds.len() != actions.len() {
            return Err(MetricError::Count {
                preds: preds.len(),
                gts: gts.len(),
            });
        }
        if preds.is_empty() {
            return Err(MetricError::Config("no samples to evaluate".into()));
        }
        validate_grid(&opts.auc_grid)?;
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, a) in actions.iter().enumerate() {
            groups.entry(a.as_str()).or_default().push(i);
        }
        let row = |label: &str, idx: &[usize]| -> Result<MetricRow, MetricError> {
            let p: Vec<Tensor> = idx.iter().map(|&i| preds[i].clone()).collect();
            let g: Vec<Tensor> = idx.iter().map(|&i| gts[i].clone()).collect();
            let mut m = 0.0;
            let mut pa = 0.0;
            for (p, g) in p.iter().zip(&g) {
                m += mpjpe(p, g)?;
                pa += pa_mpjpe_with(p, g, opts.align)?;
            }
            let n = idx.len() as f64;
            Ok(MetricRow {
                action: label.to_string(),
                mpjpe: m / n,
                pa_mpjpe: pa / n,
                pck: pck(&p, &g, opts.pck_threshold)?,
                auc: auc(&p, &g, &opts.auc_grid)?,
                count: idx.len(),
            })
        };
        let mut rows = Vec::with_capacity(groups.len() + 1);
        for (label, idx) in &groups {
            rows.push(row(label, idx)?);
        }
        let all: Vec<usize> = (0..preds.len()).collect();
        rows.push(row("all", &all)?);
        Ok(Self {
            unit: unit.to_string(),
            rows,
        })
    }

    pub fn aggregate(&self) -> &MetricRow {
        self.rows.last().expect("report always has the aggregate row")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("action,mpjpe,pa_mpjpe,pck,auc,n\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.action, r.mpjpe, r.pa_mpjpe, r.pck, r.auc, r.count
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.action.len()).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>12}  {:>7}  {:>7}  {:>6}\n",
            "action",
            format!("MPJPE ({})", self.unit),
            format!("PA ({})", self.unit),
            "PCK",
            "AUC",
            "n"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.4}  {:>12.4}  {:>7.4}  {:>7.4}  {:>6}",
                r.action, r.mpjpe, r.pa_mpjpe, r.pck, r.auc, r.count
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        Tensor::new(&[n, 3], (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn mpjpe_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = random_pose(&mut rng, 17);
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        let mut shifted = gt.clone();
        for j in 0..17 {
            shifted.set(&[j, 1], gt.at(&[j, 1]) + 10.0);
        }
        assert!((mpjpe(&shifted, &gt).unwrap() - 10.0).abs() < 1e-12);
        assert!(mpjpe(&Tensor::zeros(&[16, 3]), &gt).is_err());
    }

    #[test]
    fn identity_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_pose(&mut rng, 17);
        let t = procrustes_transform(&gt, &gt, AlignOptions::default()).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
        assert!(procrustes_align(&gt, &gt).unwrap().max_abs_diff(&gt) < 1e-12);
    }

    #[test]
    fn degenerate_ground_truth() {
        let gt = Tensor::filled(&[5, 3], 2.0);
        let pred = Tensor::new(&[5, 3], (0..15).map(f64::from).collect()).unwrap();
        assert_eq!(procrustes_align(&pred, &gt).unwrap_err(), MetricError::Degenerate);
    }

    #[test]
    fn reflection_variant_never_worse_in_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let gt = random_pose(&mut rng, 17);
            let pred = random_pose(&mut rng, 17);
            let sq = |opts| {
                let a = procrustes_align_with(&pred, &gt, opts).unwrap();
                a.data().iter().zip(gt.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
            };
            assert!(sq(AlignOptions { allow_reflection: true }) <= sq(AlignOptions::default()) + 1e-12);
            let t = procrustes_transform(&pred, &gt, AlignOptions::default()).unwrap();
            assert!((t.rotation.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pck_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_pose(&mut rng, 4);
        assert_eq!(pck(std::slice::from_ref(&gt), std::slice::from_ref(&gt), 150.0).unwrap(), 1.0);
        // every joint exactly at the threshold along x
        let mut at = gt.clone();
        for j in 0..4 {
            at.set(&[j, 0], gt.at(&[j, 0]) + 0.5);
        }
        assert_eq!(pck(&[at], std::slice::from_ref(&gt), 0.5).unwrap(), 1.0);
        // half displaced by twice the threshold
        let mut half = gt.clone();
        for j in 0..2 {
            half.set(&[j, 2], gt.at(&[j, 2]) + 2.0 * 150.0);
        }
        assert_eq!(pck(&[half], std::slice::from_ref(&gt), 150.0).unwrap(), 0.5);
        assert!(pck(std::slice::from_ref(&gt), std::slice::from_ref(&gt), 0.0).is_err());
    }

    #[test]
    fn auc_hand_integration() {
        // joint errors 0, 12, 12, 40 against the grid 0, 5, ..., 150
        let gt = Tensor::zeros(&[4, 3]);
        let pred = Tensor::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![12.0, 0.0, 0.0],
            vec![0.0, 12.0, 0.0],
            vec![0.0, 0.0, 40.0],
        ])
        .unwrap();
        let grid = default_auc_grid("mm");
        assert_eq!(grid.len(), 31);
        // thresholds 0,5,10 → 1/4; 15..35 (5 values) → 3/4; 40..150 (23 values) → 1
        let want = (3.0 * 0.25 + 5.0 * 0.75 + 23.0 * 1.0) / 31.0;
        let got = auc(std::slice::from_ref(&pred), std::slice::from_ref(&gt), &grid).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!(got <= pck(&[pred], &[gt], 150.0).unwrap());
        assert!(auc(&[], &[], &[]).is_err());
    }

    #[test]
    fn unit_scaled_defaults() {
        assert_eq!(default_pck_threshold("mm"), 150.0);
        assert!((default_pck_threshold("m") - 0.15).abs() < 1e-15);
        assert!((default_auc_grid("m")[30] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn report_rows_and_csv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gts: Vec<Tensor> = (0..4).map(|_| random_pose(&mut rng, 17)).collect();
        let preds: Vec<Tensor> = (0..4).map(|_| random_pose(&mut rng, 17)).collect();
        let actions: Vec<String> = ["walk", "sit", "walk", "sit"].iter().map(|s| s.to_string()).collect();
        let report = MetricReport::compute(&preds, &gts, &actions, "mm", &EvalOptions::for_unit("mm")).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.aggregate().count, 4);
        for r in &report.rows {
            assert!(r.pa_mpjpe <= r.mpjpe);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("action,mpjpe,pa_mpjpe,pck,auc,n\n"));
        assert_eq!(csv.lines().count(), 4);
        assert!(MetricReport::compute(&[], &[], &[], "mm", &EvalOptions::for_unit("mm")).is_err());
    }
}
