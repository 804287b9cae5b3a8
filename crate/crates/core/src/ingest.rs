//! Tiling of large scenes, annotation transfer into tiles, OBB to HBB
//! conversion, and merging tile-level detections back into image space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Dataset, ObjectInstance, SceneAnnotation};
use crate::geometry::{intersection_area, rotated_iou, to_hbb, AxisBox, OrientedBox};

pub const DEFAULT_TILE_SIZE: u32 = 800;
pub const DEFAULT_TILE_STRIDE: u32 = 400;
pub const DEFAULT_KEEP_FRACTION: f64 = 0.5;
pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("tile size and stride must satisfy 0 < stride <= size, got size {size} stride {stride}")]
    TileGeometry { size: u32, stride: u32 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    ImageDimensions { width: u32, height: u32 },
    #[error("detection score {0} outside [0, 1]")]
    Score(f64),
    #[error("keep fraction {0} outside [0, 1]")]
    KeepFraction(f64),
}

/// One tile of an image. `width`/`height` are the tile extent after clamping
/// to the image, so they equal `size` unless the image is smaller than a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub origin_x: u32,
    pub origin_y: u32,
    pub size: u32,
    pub stride: u32,
    pub width: u32,
    pub height: u32,
}

impl TileSpec {
    pub fn rect(&self) -> AxisBox {
        AxisBox {
            xmin: self.origin_x as f64,
            ymin: self.origin_y as f64,
            xmax: (self.origin_x + self.width) as f64,
            ymax: (self.origin_y + self.height) as f64,
        }
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.origin_x && x < self.origin_x + self.width && y >= self.origin_y && y < self.origin_y + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub obb: OrientedBox,
    pub category: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(obb: OrientedBox, category: usize, score: f64) -> Result<Self, IngestError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(IngestError::Score(score));
        }
        Ok(Self { obb, category, score })
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Detection {
        Detection {
            obb: self.obb.translate(dx, dy),
            ..*self
        }
    }
}

fn axis_positions(len: u32, size: u32, stride: u32) -> Vec<u32> {
    if len <= size {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut pos = 0;
    while pos + size < len {
        out.push(pos);
        pos += stride;
    }
    out.push(len - size);
    out
}

/// Row-major tile grid at multiples of `stride`, with the last tile on each
/// axis shifted back so that it ends on the image edge.
pub fn plan_tiles(image_w: u32, image_h: u32, size: u32, stride: u32) -> Result<Vec<TileSpec>, IngestError> {
    if stride == 0 || stride > size {
        return Err(IngestError::TileGeometry { size, stride });
    }
    if image_w == 0 || image_h == 0 {
        return Err(IngestError::ImageDimensions {
            width: image_w,
            height: image_h,
        });
    }
    let xs = axis_positions(image_w, size, stride);
    let ys = axis_positions(image_h, size, stride);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &origin_y in &ys {
        for &origin_x in &xs {
            tiles.push(TileSpec {
                origin_x,
                origin_y,
                size,
                stride,
                width: size.min(image_w),
                height: size.min(image_h),
            });
        }
    }
    Ok(tiles)
}

/// Annotations of `scene` restricted to `tile`, in tile-local coordinates.
///
/// An object is kept when at least `keep_fraction` of its area falls inside
/// the tile. Kept boxes keep their full extent and are flagged truncated when
/// they cross the tile border. Relations survive iff both ends survive.
pub fn crop_scene(scene: &SceneAnnotation, tile: &TileSpec, keep_fraction: f64) -> Result<SceneAnnotation, IngestError> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(IngestError::KeepFraction(keep_fraction));
    }
    let rect = tile.rect();
    let tile_box = rect.to_oriented().expect("tiles have positive extent");
    let (dx, dy) = (-(tile.origin_x as f64), -(tile.origin_y as f64));
    let mut objects = Vec::new();
    for o in &scene.objects {
        let inside = intersection_area(&o.obb, &tile_box) / o.obb.area();
        if inside < keep_fraction {
            continue;
        }
        let crosses = o.obb.vertices().iter().any(|&p| !rect.contains(p));
        objects.push(ObjectInstance {
            id: o.id,
            category: o.category,
            obb: o.obb.translate(dx, dy),
            truncated: o.truncated || crosses,
        });
    }
    let kept: std::collections::HashSet<u32> = objects.iter().map(|o| o.id).collect();
    let relations = scene
        .relations
        .iter()
        .filter(|r| kept.contains(&r.subject) && kept.contains(&r.object))
        .copied()
        .collect();
    Ok(SceneAnnotation {
        image_id: format!("{}__{}_{}", scene.image_id, tile.origin_x, tile.origin_y),
        width: tile.width,
        height: tile.height,
        objects,
        relations,
    })
}

/// Tiles every scene of a dataset; crops come out in scene order, then grid order.
pub fn tile_dataset(dataset: &Dataset, size: u32, stride: u32, keep_fraction: f64) -> Result<Dataset, IngestError> {
    let mut scenes = Vec::new();
    for scene in &dataset.scenes {
        for tile in plan_tiles(scene.width, scene.height, size, stride)? {
            scenes.push(crop_scene(scene, &tile, keep_fraction)?);
        }
    }
    Ok(Dataset {
        registry: dataset.registry.clone(),
        split: dataset.split,
        scenes,
    })
}

pub fn hbb_box(obb: &OrientedBox) -> OrientedBox {
    to_hbb(obb).to_oriented().expect("a valid box has a non-degenerate hull")
}

/// Replaces every box by its axis-aligned hull, written as a `theta = 0` box.
pub fn convert_to_hbb(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    for scene in &mut out.scenes {
        for o in &mut scene.objects {
            o.obb = hbb_box(&o.obb);
        }
    }
    out
}

/// Indices of `scores` sorted by descending score, ties in input order.
pub fn rank_by_score(scores: impl IntoIterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.into_iter().collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy category-wise suppression. Output is in descending score order.
pub fn rotated_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in rank_by_score(dets.iter().map(|d| d.score)) {
        let d = dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.category == d.category && rotated_iou(&k.obb, &d.obb) >= iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Moves tile-local detections into image coordinates and suppresses duplicates.
pub fn reassemble(tile_predictions: &[(TileSpec, Vec<Detection>)], iou_threshold: f64) -> Vec<Detection> {
    let all: Vec<Detection> = tile_predictions
        .iter()
        .flat_map(|(tile, dets)| {
            dets.iter()
                .map(move |d| d.translate(tile.origin_x as f64, tile.origin_y as f64))
        })
        .collect();
    rotated_nms(&all, iou_threshold)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::datamodel::{CategoryRegistry, RelationTriplet, Split};
    use crate::geometry::{BoxParams, Point};

    fn bx(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> OrientedBox {
        OrientedBox::from_params(BoxParams { cx, cy, w, h, theta }).unwrap()
    }

    fn obj(id: u32, obb: OrientedBox) -> ObjectInstance {
        ObjectInstance { id, category: 0, obb, truncated: false }
    }

    #[test]
    fn plan_tiles_cases() {
        let t = plan_tiles(6000, 6000, 800, 400).unwrap();
        assert_eq!(t.len(), 196);
        assert_eq!(t.last().unwrap().origin_x, 5200);
        assert_eq!(t.last().unwrap().origin_y, 5200);

        let one = plan_tiles(800, 800, 800, 400).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].origin_x, one[0].origin_y), (0, 0));

        let wide = plan_tiles(1000, 800, 800, 400).unwrap();
        let xs: Vec<u32> = wide.iter().map(|t| t.origin_x).collect();
        assert_eq!(xs, vec![0, 200]);

        let small = plan_tiles(300, 200, 800, 400).unwrap();
        assert_eq!(small.len(), 1);
        assert_eq!((small[0].width, small[0].height), (300, 200));

        assert!(plan_tiles(100, 100, 800, 0).is_err());
        assert!(plan_tiles(100, 100, 400, 800).is_err());
    }

    #[test]
    fn tiles_cover_every_pixel() {
        for (w, h, size, stride) in [(1000, 800, 800, 400), (1234, 777, 256, 100), (97, 300, 64, 64), (50, 50, 64, 32)] {
            let tiles = plan_tiles(w, h, size, stride).unwrap();
            for y in 0..h {
                for x in 0..w {
                    assert!(tiles.iter().any(|t| t.contains_pixel(x, y)), "({x},{y}) uncovered");
                }
            }
            for t in &tiles {
                assert!(t.origin_x + t.width <= w && t.origin_y + t.height <= h);
            }
        }
    }

    fn scene(objects: Vec<ObjectInstance>, relations: Vec<RelationTriplet>) -> SceneAnnotation {
        SceneAnnotation { image_id: "s".into(), width: 1000, height: 1000, objects, relations }
    }

    #[test]
    fn crop_keeps_contained_objects_exactly_shifted() {
        let s = scene(vec![obj(0, bx(450.0, 450.0, 20.0, 10.0, 0.3))], vec![]);
        let tile = plan_tiles(1000, 1000, 800, 400).unwrap()[3];
        assert_eq!((tile.origin_x, tile.origin_y), (200, 200));
        let c = crop_scene(&s, &tile, 0.5).unwrap();
        assert_eq!(c.objects.len(), 1);
        assert!(!c.objects[0].truncated);
        for (p, q) in c.objects[0].obb.vertices().iter().zip(s.objects[0].obb.vertices()) {
            assert_eq!(*p, Point::new(q.x - 200.0, q.y - 200.0));
        }
    }

    #[test]
    fn crop_drops_low_overlap_and_incident_relations() {
        // 10% of the box lies inside [0, 800)
        let straddler = bx(845.0, 100.0, 100.0, 20.0, 0.0);
        let inner = bx(100.0, 100.0, 10.0, 10.0, 0.0);
        let s = scene(
            vec![obj(0, inner), obj(1, straddler)],
            vec![RelationTriplet { subject: 0, predicate: 0, object: 1 }],
        );
        let tile = plan_tiles(1000, 1000, 800, 400).unwrap()[0];
        let c = crop_scene(&s, &tile, 0.5).unwrap();
        assert_eq!(c.objects.len(), 1);
        assert!(c.relations.is_empty());
        let c = crop_scene(&s, &tile, 0.05).unwrap();
        assert_eq!(c.objects.len(), 2);
        assert!(c.objects[1].truncated);
        assert_eq!(c.relations.len(), 1);
    }

    #[test]
    fn crop_matches_brute_force_area_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let objects: Vec<ObjectInstance> = (0..200)
            .map(|i| {
                obj(
                    i,
                    bx(
                        rng.random_range(0.0..1000.0),
                        rng.random_range(0.0..1000.0),
                        rng.random_range(5.0..150.0),
                        rng.random_range(5.0..150.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    ),
                )
            })
            .collect();
        let s = scene(objects, vec![]);
        let tile = TileSpec { origin_x: 400, origin_y: 0, size: 800, stride: 400, width: 600, height: 800 };
        let c = crop_scene(&s, &tile, 0.5).unwrap();
        // grid-sampled area fraction inside the tile
        let expected: Vec<u32> = s
            .objects
            .iter()
            .filter(|o| {
                let hb = to_hbb(&o.obb);
                let n = 200;
                let (mut inside, mut total) = (0usize, 0usize);
                for i in 0..n {
                    for j in 0..n {
                        let p = Point::new(
                            hb.xmin + (i as f64 + 0.5) / n as f64 * hb.width(),
                            hb.ymin + (j as f64 + 0.5) / n as f64 * hb.height(),
                        );
                        if o.obb.contains(p) {
                            total += 1;
                            if tile.rect().contains(p) {
                                inside += 1;
                            }
                        }
                    }
                }
                let frac = inside as f64 / total as f64;
                assert!((frac - 0.5).abs() > 0.01, "object {} too close to the threshold", o.id);
                frac >= 0.5
            })
            .map(|o| o.id)
            .collect();
        let got: Vec<u32> = c.objects.iter().map(|o| o.id).collect();
        assert_eq!(got, expected);
        for k in &c.objects {
            let orig = s.object(k.id).unwrap();
            let back = k.obb.translate(400.0, 0.0);
            for (p, q) in back.vertices().iter().zip(orig.obb.vertices()) {
                assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
            }
        }
    }

    fn dataset(boxes: Vec<OrientedBox>) -> Dataset {
        let objects = boxes.into_iter().enumerate().map(|(i, b)| obj(i as u32, b)).collect();
        Dataset { registry: CategoryRegistry::canonical(), split: Split::Train, scenes: vec![scene(objects, vec![])] }
    }

    #[test]
    fn hbb_conversion() {
        let axis = dataset(vec![bx(10.0, 10.0, 4.0, 2.0, 0.0), bx(50.0, 60.0, 8.0, 3.0, 0.0)]);
        assert_eq!(convert_to_hbb(&axis), axis);

        let diamond = dataset(vec![bx(10.0, 10.0, 1.0, 1.0, FRAC_PI_4)]);
        let h = convert_to_hbb(&diamond);
        assert!((h.scenes[0].objects[0].obb.area() - 2.0).abs() < 1e-12);
        assert_eq!(h.scenes[0].objects[0].obb.theta(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let boxes: Vec<OrientedBox> = (0..100)
            .map(|_| bx(500.0, 500.0, rng.random_range(1.0..80.0), rng.random_range(1.0..80.0), rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let d = dataset(boxes);
        let h = convert_to_hbb(&d);
        for (a, b) in d.scenes[0].objects.iter().zip(&h.scenes[0].objects) {
            assert!(b.obb.area() >= a.obb.area() - 1e-9);
        }
        assert_eq!(convert_to_hbb(&h), h);
    }

    #[test]
    fn nms_cases() {
        let b = bx(10.0, 10.0, 5.0, 5.0, 0.2);
        let dets = vec![Detection::new(b, 0, 0.8).unwrap(), Detection::new(b, 0, 0.9).unwrap()];
        let kept = rotated_nms(&dets, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);

        let other_class = vec![Detection::new(b, 0, 0.8).unwrap(), Detection::new(b, 1, 0.9).unwrap()];
        assert_eq!(rotated_nms(&other_class, 0.5).len(), 2);

        let disjoint: Vec<Detection> = (0..5)
            .map(|i| Detection::new(bx(20.0 * i as f64, 0.0, 5.0, 5.0, 0.0), 0, 0.5).unwrap())
            .collect();
        assert_eq!(rotated_nms(&disjoint, 0.5).len(), 5);
        assert!(Detection::new(b, 0, 1.5).is_err());
    }

    // straightforward O(n²) reference: repeatedly take the best remaining, drop what it covers
    fn reference_nms(dets: &[Detection], thr: f64) -> Vec<Detection> {
        let mut alive: Vec<bool> = vec![true; dets.len()];
        let mut out = Vec::new();
        loop {
            let mut best: Option<usize> = None;
            for i in 0..dets.len() {
                if alive[i] && best.is_none_or(|b| dets[i].score > dets[b].score) {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            alive[b] = false;
            out.push(dets[b]);
            for j in 0..dets.len() {
                if alive[j] && dets[j].category == dets[b].category && rotated_iou(&dets[j].obb, &dets[b].obb) >= thr {
                    alive[j] = false;
                }
            }
        }
        out
    }

    #[test]
    fn nms_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let dets: Vec<Detection> = (0..50)
                .map(|_| {
                    Detection::new(
                        bx(rng.random_range(0.0..60.0), rng.random_range(0.0..60.0), rng.random_range(5.0..20.0), rng.random_range(5.0..20.0), rng.random_range(0.0..std::f64::consts::TAU)),
                        rng.random_range(0..3),
                        rng.random_range(0.0..1.0),
                    )
                    .unwrap()
                })
                .collect();
            let got = rotated_nms(&dets, 0.3);
            assert_eq!(got, reference_nms(&dets, 0.3));
            for (i, a) in got.iter().enumerate() {
                for b in &got[i + 1..] {
                    assert!(a.category != b.category || rotated_iou(&a.obb, &b.obb) < 0.3);
                }
            }
        }
    }

    #[test]
    fn reassemble_cases() {
        let tiles = plan_tiles(1200, 800, 800, 400).unwrap();
        let d = Detection::new(bx(50.0, 60.0, 10.0, 6.0, 0.4), 2, 0.7).unwrap();
        let out = reassemble(&[(tiles[0], vec![d])], 0.5);
        assert_eq!(out, vec![d]);

        // object at x=600 in image space, visible in both tiles
        let global = bx(600.0, 300.0, 40.0, 20.0, 0.3);
        let in_first = Detection::new(global, 0, 0.9).unwrap();
        let in_second = Detection::new(global.translate(-400.0, 0.0), 0, 0.8).unwrap();
        let out = reassemble(&[(tiles[0], vec![in_first]), (tiles[1], vec![in_second])], 0.5);
        assert_eq!(out.len(), 1);
        assert!(rotated_iou(&out[0].obb, &global) > 1.0 - 1e-9);
    }
}
