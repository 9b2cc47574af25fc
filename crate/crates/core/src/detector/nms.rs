use std::cmp::Ordering;

use super::Detection;

/// Intersection over union of two square boxes.
pub fn iou(a: &Detection, b: &Detection) -> f64 {
    let ix0 = a.x.max(b.x);
    let iy0 = a.y.max(b.y);
    let ix1 = (a.x + a.side).min(b.x + b.side);
    let iy1 = (a.y + a.side).min(b.y + b.side);
    if ix1 <= ix0 || iy1 <= iy0 {
        return 0.0;
    }
    let inter = ((ix1 - ix0) * (iy1 - iy0)) as f64;
    let union = (a.side * a.side + b.side * b.side) as f64 - inter;
    inter / union
}

/// Descending score, then ascending `(x, y, side)`.
pub(crate) fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| (a.x, a.y, a.side).cmp(&(b.x, b.y, b.side)))
}

/// Greedy non-maximum suppression. Output is sorted by descending score.
pub fn nms(detections: &[Detection], nms_iou: f64) -> Vec<Detection> {
    let mut order = detections.to_vec();
    order.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(k, &d) <= nms_iou) {
            kept.push(d);
        }
    }
    kept
}
