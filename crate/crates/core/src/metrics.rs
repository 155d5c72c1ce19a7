//! Motion-attribute losses and metrics, and average precision for part
//! detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::JointKind;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;
const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("zero-length direction vector")]
    ZeroVector,
    #[error("axis must be unit length (norm {0})")]
    NonUnitAxis(f64),
    #[error("batch sizes differ: {pred} predictions, {gt} ground truths")]
    BatchMismatch { pred: usize, gt: usize },
    #[error("normalization range must be positive")]
    ZeroRange,
    #[error("malformed evaluation record: {0}")]
    Malformed(String),
}

type V3 = [f64; 3];

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &V3) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &V3, b: &V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// The 13-number motion vector of one part.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionVector {
    pub t_r: f64,
    pub t_t: f64,
    pub p_r: V3,
    pub d_r: V3,
    pub d_t: V3,
    pub x_door: f64,
    pub x_drawer: f64,
}

impl MotionVector {
    pub fn to_array(&self) -> [f64; 13] {
        let mut a = [0.0; 13];
        a[0] = self.t_r;
        a[1] = self.t_t;
        a[2..5].copy_from_slice(&self.p_r);
        a[5..8].copy_from_slice(&self.d_r);
        a[8..11].copy_from_slice(&self.d_t);
        a[11] = self.x_door;
        a[12] = self.x_drawer;
        a
    }

    pub fn from_array(a: [f64; 13]) -> Self {
        MotionVector {
            t_r: a[0],
            t_t: a[1],
            p_r: [a[2], a[3], a[4]],
            d_r: [a[5], a[6], a[7]],
            d_t: [a[8], a[9], a[10]],
            x_door: a[11],
            x_drawer: a[12],
        }
    }

    fn is_hinge(&self) -> bool {
        self.t_r >= 0.5
    }

    fn is_slider(&self) -> bool {
        self.t_t >= 0.5
    }
}

/// Cosine distance `1 - |d·d̂| / (‖d‖‖d̂‖)`.
pub fn axis_alignment_loss(d_pred: &V3, d_gt: &V3) -> Result<f64, MetricsError> {
    let n = norm(d_pred) * norm(d_gt);
    if n == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((1.0 - dot(d_pred, d_gt).abs() / n).max(0.0))
}

/// Squared distance from `p_pred` to the line through `p_gt` along unit `d_gt`.
pub fn pivot_loss(p_pred: &V3, p_gt: &V3, d_gt: &V3) -> Result<f64, MetricsError> {
    let n = norm(d_gt);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(MetricsError::NonUnitAxis(n));
    }
    let e = sub(p_pred, p_gt);
    let along = dot(&e, d_gt);
    let perp = [e[0] - along * d_gt[0], e[1] - along * d_gt[1], e[2] - along * d_gt[2]];
    Ok(dot(&perp, &perp))
}

/// Binary cross-entropy with the prediction clamped away from 0 and 1.
pub fn joint_type_loss(t_pred: f64, t_gt: f64) -> f64 {
    let p = t_pred.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(t_gt * p.ln() + (1.0 - t_gt) * (1.0 - p).ln())
}

/// Squared position error, or exactly 0 for masked-out instances.
pub fn joint_position_loss(x_pred: f64, x_gt: f64, valid: bool) -> f64 {
    if valid {
        (x_pred - x_gt).powi(2)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub axis_r: f64,
    pub axis_t: f64,
    pub pivot: f64,
    pub type_r: f64,
    pub type_t: f64,
    pub door: f64,
    pub drawer: f64,
    pub total: f64,
}

fn unit(v: &V3) -> Result<V3, MetricsError> {
    let n = norm(v);
    if n == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

fn check_batch<A, B>(pred: &[A], gt: &[B]) -> Result<(), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::BatchMismatch { pred: pred.len(), gt: gt.len() });
    }
    Ok(())
}

/// Sum of the seven loss terms over a batch. Rotation terms count only where
/// the ground truth is a hinge and translation terms only where it is a slider.
pub fn total_loss(pred: &[MotionVector], gt: &[MotionVector]) -> Result<LossBreakdown, MetricsError> {
    check_batch(pred, gt)?;
    let mut l = LossBreakdown::default();
    for (p, g) in pred.iter().zip(gt) {
        l.type_r += joint_type_loss(p.t_r, g.t_r);
        l.type_t += joint_type_loss(p.t_t, g.t_t);
        if g.is_hinge() {
            l.axis_r += axis_alignment_loss(&p.d_r, &g.d_r)?;
            l.pivot += pivot_loss(&p.p_r, &g.p_r, &unit(&g.d_r)?)?;
        }
        if g.is_slider() {
            l.axis_t += axis_alignment_loss(&p.d_t, &g.d_t)?;
        }
        l.door += joint_position_loss(p.x_door, g.x_door, g.is_hinge());
        l.drawer += joint_position_loss(p.x_drawer, g.x_drawer, g.is_slider());
    }
    l.total = l.axis_r + l.axis_t + l.pivot + l.type_r + l.type_t + l.door + l.drawer;
    Ok(l)
}

/// Hinge angles map `[0, 2π]` onto `[0, 1]`; slider travel is divided by the
/// dataset's largest slider range.
pub fn normalize_position(q: f64, kind: JointKind, max_slider_range: Option<f64>) -> Result<f64, MetricsError> {
    match kind {
        JointKind::Hinge => Ok(q / std::f64::consts::TAU),
        _ => match max_slider_range {
            Some(r) if r > 0.0 => Ok(q / r),
            _ => Err(MetricsError::ZeroRange),
        },
    }
}

/// Aggregate motion metrics. Accuracies are percentages; errors are means
/// over ground-truth hinges (pivot, hinge axis, door) or sliders (slider axis,
/// drawer). Fields with no contributing instance are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionReport {
    pub h_acc: f64,
    pub s_acc: f64,
    pub h_o_err_m: f64,
    pub h_a_err_deg: f64,
    pub s_a_err_deg: f64,
    pub door_err_deg: f64,
    pub drawer_err_m: f64,
    pub hinges: usize,
    pub sliders: usize,
}

/// Angle between two lines, in degrees.
pub fn line_angle_deg(a: &V3, b: &V3) -> Result<f64, MetricsError> {
    let c = 1.0 - axis_alignment_loss(a, b)?;
    Ok(c.clamp(0.0, 1.0).acos().to_degrees())
}

pub fn motion_metrics(pred: &[MotionVector], gt: &[MotionVector], max_slider_range: f64) -> Result<MotionReport, MetricsError> {
    check_batch(pred, gt)?;
    if !(max_slider_range > 0.0) {
        return Err(MetricsError::ZeroRange);
    }
    let mut r = MotionReport::default();
    let n = pred.len();
    let (mut h_ok, mut s_ok) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        h_ok += usize::from(p.is_hinge() == g.is_hinge());
        s_ok += usize::from(p.is_slider() == g.is_slider());
        if g.is_hinge() {
            r.hinges += 1;
            r.h_o_err_m += pivot_loss(&p.p_r, &g.p_r, &unit(&g.d_r)?)?.sqrt();
            r.h_a_err_deg += line_angle_deg(&p.d_r, &g.d_r)?;
            r.door_err_deg += (p.x_door - g.x_door).abs() * 360.0;
        }
        if g.is_slider() {
            r.sliders += 1;
            r.s_a_err_deg += line_angle_deg(&p.d_t, &g.d_t)?;
            r.drawer_err_m += (p.x_drawer - g.x_drawer).abs() * max_slider_range;
        }
    }
    if n > 0 {
        r.h_acc = 100.0 * h_ok as f64 / n as f64;
        r.s_acc = 100.0 * s_ok as f64 / n as f64;
    }
    if r.hinges > 0 {
        let k = r.hinges as f64;
        r.h_o_err_m /= k;
        r.h_a_err_deg /= k;
        r.door_err_deg /= k;
    }
    if r.sliders > 0 {
        let k = r.sliders as f64;
        r.s_a_err_deg /= k;
        r.drawer_err_m /= k;
    }
    Ok(r)
}

/// A part mask over a shared element universe (pixel or point indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionInstance {
    pub image_id: String,
    pub label: String,
    /// Sorted, deduplicated element ids.
    pub mask: Vec<u32>,
    pub score: Option<f64>,
}

impl DetectionInstance {
    pub fn new(image_id: &str, label: &str, mut mask: Vec<u32>, score: Option<f64>) -> Self {
        mask.sort_unstable();
        mask.dedup();
        DetectionInstance { image_id: image_id.to_string(), label: label.to_string(), mask, score }
    }
}

/// Intersection over union of two sorted id lists.
pub fn mask_iou(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApReport {
    /// `None` where a category has no ground truth.
    pub per_category: BTreeMap<String, Option<f64>>,
    pub map: Option<f64>,
}

/// Area under the precision envelope, given per-prediction TP flags in
/// descending score order.
pub fn all_point_ap(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut prec = Vec::with_capacity(tp.len());
    let mut rec = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        prec.push(hits as f64 / (k + 1) as f64);
        rec.push(hits as f64 / n_gt as f64);
    }
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    let mut ap = 0.0;
    let mut last_r = 0.0;
    for (p, r) in prec.iter().zip(&rec) {
        if *r > last_r {
            ap += (r - last_r) * p;
            last_r = *r;
        }
    }
    ap
}

/// Per-category AP at an IoU threshold. Predictions are visited in
/// descending score order (ties keep input order) and each claims the
/// unmatched ground truth of the same image and label with the highest IoU.
pub fn average_precision(pred: &[DetectionInstance], gt: &[DetectionInstance], iou_threshold: f64) -> ApReport {
    let mut categories: BTreeMap<String, ()> = BTreeMap::new();
    for d in pred.iter().chain(gt) {
        categories.insert(d.label.clone(), ());
    }
    let mut report = ApReport::default();
    for label in categories.keys() {
        let gts: Vec<&DetectionInstance> = gt.iter().filter(|g| &g.label == label).collect();
        if gts.is_empty() {
            report.per_category.insert(label.clone(), None);
            continue;
        }
        let mut preds: Vec<&DetectionInstance> = pred.iter().filter(|p| &p.label == label).collect();
        preds.sort_by(|a, b| b.score.unwrap_or(0.0).total_cmp(&a.score.unwrap_or(0.0)));
        let mut used = vec![false; gts.len()];
        let tp: Vec<bool> = preds
            .iter()
            .map(|p| {
                let best = gts
                    .iter()
                    .enumerate()
                    .filter(|(k, g)| !used[*k] && g.image_id == p.image_id)
                    .map(|(k, g)| (k, mask_iou(&p.mask, &g.mask)))
                    .fold(None, |acc: Option<(usize, f64)>, (k, iou)| match acc {
                        Some((_, b)) if b >= iou => acc,
                        _ => Some((k, iou)),
                    });
                match best {
                    Some((k, iou)) if iou >= iou_threshold => {
                        used[k] = true;
                        true
                    }
                    _ => false,
                }
            })
            .collect();
        report.per_category.insert(label.clone(), Some(all_point_ap(&tp, gts.len())));
    }
    let defined: Vec<f64> = report.per_category.values().flatten().copied().collect();
    if !defined.is_empty() {
        report.map = Some(defined.iter().sum::<f64>() / defined.len() as f64);
    }
    report
}

/// Run-length encoding of a flattened binary mask: alternating run lengths,
/// starting with a (possibly empty) run of zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub size: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &[bool]) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &m in mask {
            if m != current {
                counts.push(run);
                run = 0;
                current = m;
            }
            run += 1;
        }
        counts.push(run);
        RleMask { size: mask.len() as u32, counts }
    }

    pub fn from_ids(ids: &[u32], size: u32) -> Self {
        let mut mask = vec![false; size as usize];
        for &i in ids {
            if (i as usize) < mask.len() {
                mask[i as usize] = true;
            }
        }
        Self::encode(&mask)
    }

    pub fn decode(&self) -> Result<Vec<bool>, MetricsError> {
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total != self.size as u64 {
            return Err(MetricsError::Malformed(format!("runs cover {total} of {} elements", self.size)));
        }
        let mut out = Vec::with_capacity(self.size as usize);
        for (k, &c) in self.counts.iter().enumerate() {
            out.extend(std::iter::repeat(k % 2 == 1).take(c as usize));
        }
        Ok(out)
    }

    pub fn to_ids(&self) -> Result<Vec<u32>, MetricsError> {
        Ok(self.decode()?.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i as u32).collect())
    }
}

/// One line of a motion evaluation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub id: String,
    pub gt: MotionVector,
    pub pred: MotionVector,
}

/// One line of a detection evaluation file; ground truth omits `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub category: String,
    pub mask_rle: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl DetectionRecord {
    pub fn to_instance(&self) -> Result<DetectionInstance, MetricsError> {
        Ok(DetectionInstance::new(&self.image_id, &self.category, self.mask_rle.to_ids()?, self.score))
    }
}

/// Parses JSON lines, skipping blank lines.
pub fn parse_json_lines<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, MetricsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| MetricsError::Malformed(format!("line {}: {e}", i + 1))))
        .collect()
}
