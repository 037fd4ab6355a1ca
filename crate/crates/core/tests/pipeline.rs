use std::collections::BTreeSet;
use std::path::Path;

use scene_forge::pipeline::{
    build_databases, collect_sharded, epoch_stream, ingest_kitti, measure_throughput, plan_epoch, raw_slots, validate,
    BuildTargets,
    Databases, PipelineConfig, Stage, Supervision,
};
use scene_forge::objects::ObjectDatabase;
use scene_forge::scene::SceneKind;
use scene_forge::synth::{write_dataset, SynthConfig};

fn synth(root: &Path, scenes: usize, far: bool) {
    let c = SynthConfig {
        width: 256,
        height: 96,
        scenes,
        frames_per_clip: 3,
        far_object: far,
        ..Default::default()
    };
    write_dataset(root, &c).unwrap();
}

fn config(root: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        seed: Some(5),
        dataset_root: root.to_path_buf(),
        output_root: out.to_path_buf(),
        batch_size: 4,
        ..Default::default()
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn build_reports_far_object_and_is_reproducible() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 3, true);
    let inv = ingest_kitti(data.path(), Some("train")).unwrap();
    assert_eq!(inv.len(), 3);

    let out_a = tempfile::tempdir().unwrap();
    let m = build_databases(&inv, &config(data.path(), out_a.path()), BuildTargets::ALL).unwrap();
    assert_eq!(m.scenes_built, 3);
    // The far car appears in every frame of the first clip.
    assert_eq!(m.rejection_counts.get("depth≥50"), Some(&3), "{:?}", m.rejection_counts);
    assert!(m.objects_kept > 0);

    let out_b = tempfile::tempdir().unwrap();
    build_databases(&inv, &config(data.path(), out_b.path()), BuildTargets::ALL).unwrap();
    let a = tree_bytes(out_a.path());
    let b = tree_bytes(out_b.path());
    assert_eq!(a.len(), b.len());
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{pa} differs");
    }

    let dbs = Databases::open(&config(data.path(), out_a.path())).unwrap();
    assert_eq!(dbs.scenes.len(), 3);
    for id in dbs.scenes.ids() {
        dbs.scenes.load::<f64>(id, SceneKind::Raw).unwrap();
        let e = dbs.scenes.load::<f64>(id, SceneKind::Empty).unwrap();
        assert!(e.labels.is_empty());
        assert!(e.freespace.is_some());
    }
}

#[test]
fn one_failing_scene_is_isolated() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 2, false);
    std::fs::remove_file(data.path().join("inpaint/000001.png")).unwrap();
    let inv = ingest_kitti(data.path(), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = build_databases(&inv, &config(data.path(), out.path()), BuildTargets::ALL).unwrap();
    assert_eq!(m.scenes_built, 1);
    assert!(m.scene_failures.contains_key("000001"));
    assert_eq!(m.missing_inputs["000001"], ["inpaint"]);
}

#[test]
fn full_supervision_stream_follows_the_mix_rule() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 9, false);
    let inv = ingest_kitti(data.path(), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(data.path(), out.path());
    build_databases(&inv, &cfg, BuildTargets::ALL).unwrap();
    let dbs = Databases::open(&cfg).unwrap();

    let plan = plan_epoch(&dbs, &cfg, Stage::Full, 0).unwrap();
    assert_eq!(plan.len(), 9);
    for batch in plan.batches() {
        let raw = batch.iter().filter(|f| f.kind == SceneKind::Raw).count();
        assert_eq!(raw, raw_slots(batch.len(), cfg.r_empty));
    }
    cfg.batch_size = 16;
    cfg.r_empty = 0.5;
    let plan = plan_epoch(&dbs, &cfg, Stage::Full, 0).unwrap();
    assert_eq!(plan.frames.iter().filter(|f| f.kind == SceneKind::Raw).count(), raw_slots(9, 0.5));

    cfg.batch_size = 4;
    let a: Vec<_> = epoch_stream(&dbs, &cfg, Stage::Full, 1).unwrap().map(Result::unwrap).collect();
    let plan = plan_epoch(&dbs, &cfg, Stage::Full, 1).unwrap();
    let b = collect_sharded(&dbs, &cfg, &plan, 3).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|f| f.frame.labels.len() > f.frame.n_existing));

    let report = validate(&dbs, &cfg, Stage::Full, 12).unwrap();
    assert_eq!(report.failures(), 0, "{:#?}", report.invariants);
    assert!(report.get("ground-attachment").unwrap().pass > 0);
}

#[test]
fn sparse_stages() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 12, false);
    let inv = ingest_kitti(data.path(), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        supervision: Supervision::Sparse,
        annotation_ratio: 30.0,
        ..config(data.path(), out.path())
    };
    let m = build_databases(&inv, &cfg, BuildTargets::ALL).unwrap();
    let sel = m.sparse.as_ref().unwrap();
    // One pick per track.
    let tracks: BTreeSet<_> = sel.picks.iter().map(|p| (p.clip.clone(), p.track_id)).collect();
    assert_eq!(tracks.len(), sel.picks.len());
    assert!(!m.annotated_scenes.is_empty() && m.annotated_scenes.len() < 12);
    assert!(m.sparse_objects > 0);

    let dbs = Databases::open(&cfg).unwrap();
    let one = plan_epoch(&dbs, &cfg, Stage::One, 0).unwrap();
    let ids: BTreeSet<_> = one.frames.iter().map(|f| f.scene_id.clone()).collect();
    assert_eq!(one.len(), 12);
    assert_eq!(ids.len(), 12, "every empty scene exactly once");
    assert!(one.frames.iter().all(|f| f.kind == SceneKind::Empty));

    let two = plan_epoch(&dbs, &cfg, Stage::Two, 0).unwrap();
    let raw = two.frames.iter().filter(|f| f.kind == SceneKind::Raw).count();
    let half = (dbs.raw_scenes.len() / 2).max(1);
    assert_eq!(raw, half);
    assert_eq!(two.len(), 2 * half);
    let report = validate(&dbs, &cfg, Stage::One, 6).unwrap();
    assert_eq!(report.failures(), 0, "{:#?}", report.invariants);
}

#[test]
fn empty_pool_is_a_configuration_error() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 3, false);
    let inv = ingest_kitti(data.path(), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = config(data.path(), out.path());
    build_databases(&inv, &cfg, BuildTargets::ALL).unwrap();
    let dbs = Databases::open(&cfg).unwrap();
    assert!(matches!(plan_epoch(&dbs, &cfg, Stage::One, 0), Err(scene_forge::Error::Config(_))));
}

#[test]
fn corrupted_object_fails_validation() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 3, false);
    let inv = ingest_kitti(data.path(), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = config(data.path(), out.path());
    build_databases(&inv, &cfg, BuildTargets::ALL).unwrap();

    let db = ObjectDatabase::<f64>::load(&cfg.objdb_root()).unwrap();
    let mut records = db.records().to_vec();
    records[0].bbox.dims.l *= 0.5;
    ObjectDatabase::new(records).write(&cfg.objdb_root()).unwrap();

    let dbs = Databases::open(&cfg).unwrap();
    let report = validate(&dbs, &cfg, Stage::Full, 2).unwrap();
    assert_eq!(report.get("object-in-box").unwrap().fail, 1);
}

#[test]
fn throughput_report_is_consistent() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 4, false);
    let inv = ingest_kitti(data.path(), None).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = config(data.path(), out.path());
    build_databases(&inv, &cfg, BuildTargets::ALL).unwrap();
    let dbs = Databases::open(&cfg).unwrap();
    let r = measure_throughput(&dbs, &cfg, Stage::Full, 10).unwrap();
    assert_eq!(r.frames, 10);
    assert_eq!((r.width, r.height), (256, 96));
    assert!(r.recompose_fps > 0.0 && r.perturb_fps > 0.0);
    assert!((r.recompose_fps * r.recompose_seconds - 10.0).abs() < 1e-6);
}
