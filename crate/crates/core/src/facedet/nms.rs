use std::cmp::Ordering;

use super::Detection;

/// Priority order shared by NMS and face selection: higher score first, then
/// smaller `(y, x, scale_index, rotation_index)`.
pub fn priority_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.rect.y.total_cmp(&b.rect.y))
        .then(a.rect.x.total_cmp(&b.rect.x))
        .then(a.scale_index.cmp(&b.scale_index))
        .then(a.rotation_index.cmp(&b.rotation_index))
}

/// Greedy non-maximum suppression: walk detections in priority order and keep
/// one iff its IoU with every already-kept detection is at most `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| priority_order(a, b));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| k.rect.iou(&d.rect) <= iou_threshold) {
            kept.push(d.clone());
        }
    }
    kept
}
