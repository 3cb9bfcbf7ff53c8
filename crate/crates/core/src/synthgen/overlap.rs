use crate::data::BBox;

pub const DEFAULT_MAX_IOU: f64 = 0.3;

/// Shifts boxes vertically so that no two exceed `max_iou`.
///
/// Boxes are settled nearest-first (largest `y1`, ties by input order). Each one tries
/// offsets `0, -1, +1, -2, +2, ...` that keep it inside rows `[0, height)` and takes the
/// first placement compatible with every box settled so far; a box with no such placement is
/// dropped. Survivors are returned in input order.
pub fn resolve_overlaps(boxes: &[BBox], max_iou: f64, height: usize) -> Vec<BBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].y1.cmp(&boxes[a].y1).then(a.cmp(&b)));

    let h = height as i64;
    let mut placed: Vec<Option<BBox>> = vec![None; boxes.len()];
    let mut settled: Vec<BBox> = Vec::with_capacity(boxes.len());
    for i in order {
        let b = boxes[i];
        let fits = |c: &BBox| settled.iter().all(|s| c.iou(s) <= max_iou);
        let mut found = None;
        for step in 0..=h {
            for dy in if step == 0 { vec![0] } else { vec![-step, step] } {
                let c = b.translated(0, dy);
                if (c.y0 >= 0 || dy == 0) && (c.y1 <= h || dy == 0) && fits(&c) {
                    found = Some(c);
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        if let Some(c) = found {
            settled.push(c);
            placed[i] = Some(c);
        }
    }
    placed.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: i64, y0: i64, x1: i64, y1: i64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn identical_boxes_become_disjoint() {
        let b = bx(0, 10, 8, 16);
        let out = resolve_overlaps(&[b, b], 0.0, 40);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].intersection_area(&out[1]), 0);
        assert_eq!(out[0], b, "first box is settled in place");
    }

    #[test]
    fn single_box_unchanged() {
        let b = bx(3, 4, 9, 9);
        assert_eq!(resolve_overlaps(&[b], 0.3, 20), vec![b]);
    }

    #[test]
    fn no_room_drops_box() {
        let b = bx(0, 0, 4, 10);
        assert_eq!(resolve_overlaps(&[b, b], 0.0, 10).len(), 1);
    }

    proptest! {
        #[test]
        fn pairwise_iou_capped(
            raw in proptest::collection::vec((0i64..30, 0i64..50, 2i64..12, 2i64..10), 0..12),
            max_iou in 0.0f64..0.6,
        ) {
            let boxes: Vec<BBox> = raw.iter().map(|&(x, y, w, h)| bx(x, y, x + w, (y + h).min(60))).collect();
            let out = resolve_overlaps(&boxes, max_iou, 60);
            for a in 0..out.len() {
                prop_assert!(out[a].y0 >= 0 && out[a].y1 <= 60);
                for b in a + 1..out.len() {
                    // direct IoU from intersection and union areas
                    let inter = out[a].intersection_area(&out[b]) as f64;
                    let union = (out[a].area() + out[b].area()) as f64 - inter;
                    prop_assert!(inter / union <= max_iou + 1e-9);
                }
            }
        }
    }
}
