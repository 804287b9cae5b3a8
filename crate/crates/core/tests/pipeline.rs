use sgbench_core::datamodel::{
    parse_dataset, parse_predictions, serialize_dataset, serialize_predictions, validate, Dataset, PredictedObject,
    PredictedScene, PredictionSet, ScoredRelation,
};
use sgbench_core::ingest::{convert_to_hbb, tile_dataset};
use sgbench_core::metrics::{evaluate_detections, evaluate_sgg, DetectionConfig, MatchConfig, SggTask};
use sgbench_core::scorer::{fit_frequency_prior, predict_triplets, FrequencyPrior, PredictConfig};
use sgbench_core::stats::compute_stats;
use sgbench_core::synth::{generate, SynthConfig};

fn gt_as_predictions(d: &Dataset) -> PredictionSet {
    PredictionSet {
        registry: d.registry.clone(),
        split: d.split,
        scenes: d
            .scenes
            .iter()
            .map(|s| PredictedScene {
                image_id: s.image_id.clone(),
                width: s.width,
                height: s.height,
                objects: s
                    .objects
                    .iter()
                    .map(|o| PredictedObject { id: o.id, category: o.category, obb: o.obb, truncated: o.truncated, score: 1.0 })
                    .collect(),
                relations: s
                    .relations
                    .iter()
                    .map(|t| ScoredRelation { subject: t.subject, predicate: t.predicate, object: t.object, score: 1.0 })
                    .collect(),
            })
            .collect(),
    }
}

#[test]
fn manifest_round_trip_of_synthetic_data() {
    let d = generate(&SynthConfig::new(100, 17)).unwrap();
    let text = serialize_dataset(&d);
    let back = parse_dataset(text.as_bytes()).unwrap();
    assert_eq!(back, d);
    assert_eq!(serialize_dataset(&back), text);
}

#[test]
fn derived_datasets_stay_valid() {
    let cfg = SynthConfig { width: 2000, height: 1600, ..SynthConfig::new(10, 3) };
    let d = generate(&cfg).unwrap();
    let tiled = tile_dataset(&d, 800, 400, 0.5).unwrap();
    assert!(validate(&tiled).is_clean(), "{:?}", validate(&tiled));
    assert_eq!(tiled.scenes.len(), 10 * 4 * 3);
    let hbb = convert_to_hbb(&d);
    assert!(validate(&hbb).is_clean());
    assert_eq!(compute_stats(&hbb).object_counts, compute_stats(&d).object_counts);
}

#[test]
fn ground_truth_scores_perfectly() {
    let d = generate(&SynthConfig::new(40, 5)).unwrap();
    let preds = parse_predictions(serialize_predictions(&gt_as_predictions(&d)).as_bytes()).unwrap();
    let det = evaluate_detections(&d, &preds, &DetectionConfig::default()).unwrap();
    assert_eq!(det.map, Some(1.0));
    for task in [SggTask::PredCls, SggTask::SgCls, SggTask::SgDet] {
        let r = evaluate_sgg(&d, &preds, &MatchConfig::new(task)).unwrap();
        let busiest = d.scenes.iter().map(|s| s.relations.len()).max().unwrap();
        for (k, v) in r.config.k_values.iter().zip(&r.recall_at_k) {
            if *k >= busiest {
                assert_eq!(*v, 1.0, "{task:?} R@{k}");
            }
        }
        assert_eq!(r.recall_at_k.last(), Some(&1.0));
    }
}

#[test]
fn prior_recovers_class_pair_rules() {
    let d = generate(&SynthConfig::new(150, 23)).unwrap();
    let prior = fit_frequency_prior(&d, 1.0).unwrap();
    let prior = FrequencyPrior::from_json(prior.to_json().as_bytes(), &d.registry).unwrap();
    let mut set = gt_as_predictions(&d);
    for (scene, out) in d.scenes.iter().zip(set.scenes.iter_mut()) {
        let t = predict_triplets(&out.objects, scene.width as f64, scene.height as f64, &prior, None, &PredictConfig::default()).unwrap();
        out.relations = t
            .iter()
            .map(|t| ScoredRelation { subject: t.subject.id, predicate: t.predicate, object: t.object.id, score: t.score })
            .collect();
    }
    let r = evaluate_sgg(&d, &set, &MatchConfig::new(SggTask::PredCls)).unwrap();
    assert!(r.recall_at_k[2] >= 0.95, "{:?}", r.recall_at_k);
    assert!(r.mean_recall_at_k[2].unwrap() >= 0.90);
}
