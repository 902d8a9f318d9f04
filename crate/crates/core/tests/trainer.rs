use cnm_core::checkpoint::Checkpoint;
use cnm_core::eval::sdf_error_heatmap;
use cnm_core::field::LayerDims;
use cnm_core::geometry::{backproject, DepthFrame, Vec3};
use cnm_core::scene::*;
use cnm_core::trainer::*;
use cnm_core::Error;

fn sphere_scene() -> SyntheticScene {
    let mut s = SyntheticScene::new(vec![Primitive::Sphere { center: Vec3::zeros(), radius: 0.5 }]).unwrap();
    s.bbox = Some(BoundingBox::cube(1.0));
    s
}

fn sphere_frames(n: usize) -> InMemorySequence {
    let scene = sphere_scene();
    let k = scene.camera.intrinsics().unwrap();
    let bbox = scene.bounds().unwrap();
    let poses = camera_path(CameraPath::Orbit, &bbox, n.max(1)).unwrap();
    let frames = poses
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, p)| render_synthetic_depth(&scene, &k, p, i, i as f64).unwrap())
        .collect();
    InMemorySequence { frames, bbox }
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        dims: LayerDims::new(vec![3, 32, 32, 1]).unwrap(),
        epochs_per_frame: epochs,
        first_frame_epochs: epochs,
        batch_size: 32,
        frame_stride: 1,
        pixel_stride: 6,
        seed: 3,
        ..Default::default()
    }
}

fn state(config: TrainConfig) -> MappingState {
    MappingState::new(config, NormalizationTransform::fit(&BoundingBox::cube(1.0)).unwrap()).unwrap()
}

fn mean_abs(params: &cnm_core::field::NetworkParams, frame: &DepthFrame, stride: usize) -> f64 {
    let norm = NormalizationTransform::fit(&BoundingBox::cube(1.0)).unwrap();
    let set = backproject(frame, stride).unwrap();
    set.points.iter().map(|p| params.forward(norm.apply(p).as_slice()).unwrap().abs()).sum::<f64>() / set.len() as f64
}

#[test]
fn first_frame_fits_sphere() {
    let seq = sphere_frames(1);
    let config = TrainConfig {
        dims: LayerDims::new(vec![3, 64, 64, 1]).unwrap(),
        first_frame_epochs: 500,
        batch_size: 64,
        seed: 7,
        ..Default::default()
    };
    let mut s = state(config.clone());
    let report = s.train_first_frame(&seq.frames[0]).unwrap();
    assert_eq!(report.epochs.len(), 500);
    assert!(report.epochs.iter().all(|e| e.total >= 0.0 && e.data >= 0.0));
    let m = mean_abs(&s.params, &seq.frames[0], config.pixel_stride);
    assert!(m < 0.02, "mean |f| {m}");
}

#[test]
fn zero_epochs_leave_params_and_fill_buffer() {
    let seq = sphere_frames(1);
    let mut s = state(small_config(0));
    let before = s.params.clone();
    s.train_first_frame(&seq.frames[0]).unwrap();
    assert_eq!(s.params, before);
    let n = backproject(&seq.frames[0], 6).unwrap().len();
    assert_eq!(s.buffer.len(), n);
    assert_eq!(s.buffer.capacity(), n);
    assert_eq!(s.t, 1);
}

#[test]
fn first_frame_is_deterministic() {
    let seq = sphere_frames(1);
    let run = || {
        let mut s = state(small_config(20));
        s.train_first_frame(&seq.frames[0]).unwrap();
        s.params
    };
    assert_eq!(run(), run());
}

#[test]
fn repeated_frame_keeps_improving() {
    let seq = sphere_frames(1);
    let mut s = state(small_config(60));
    s.train_first_frame(&seq.frames[0]).unwrap();
    let r = s.train_frame(&seq.frames[0]).unwrap();
    assert!(r.final_loss().unwrap().total <= r.epochs[0].total);
    assert_eq!(s.prev_params.as_ref().map(|p| p.len()), Some(s.params.len()));
}

#[test]
fn snapshot_is_taken_before_the_episode() {
    let seq = sphere_frames(2);
    let mut s = state(small_config(5));
    s.train_first_frame(&seq.frames[0]).unwrap();
    let after_first = s.params.clone();
    s.train_frame(&seq.frames[1]).unwrap();
    assert_eq!(s.prev_params.as_ref(), Some(&after_first));
    assert_ne!(s.params, after_first);
    assert!(s.train_first_frame(&seq.frames[0]).is_err());
}

#[test]
fn empty_frame_is_skipped() {
    let seq = sphere_frames(1);
    let mut s = state(small_config(5));
    s.train_first_frame(&seq.frames[0]).unwrap();
    let f = &seq.frames[0];
    let empty = DepthFrame::new(vec![0.0; f.depth.len()], f.intrinsics, f.pose, 1, 1.0).unwrap();
    let before = s.params.clone();
    let r = s.train_frame(&empty).unwrap();
    assert!(r.skipped && r.epochs.is_empty());
    assert_eq!(s.params, before);
    assert_eq!(s.t, 2);
}

#[test]
fn divergence_reports_epoch() {
    let seq = sphere_frames(1);
    let mut config = small_config(50);
    config.learning_rate = 1e300;
    let err = state(config).train_first_frame(&seq.frames[0]).unwrap_err();
    assert!(err.is_divergence(), "{err}");
    assert!(matches!(err, Error::TrainingDiverged { frame: 0, .. }));
}

#[test]
fn sequence_checkpoint_per_frame_and_stride() {
    let seq = sphere_frames(5);
    let run = run_sequence(&small_config(3), &seq).unwrap();
    assert_eq!(run.checkpoints.len(), 5);
    let strided = run_sequence(&TrainConfig { frame_stride: 2, ..small_config(3) }, &seq).unwrap();
    assert_eq!(strided.reports.iter().map(|r| r.frame).collect::<Vec<_>>(), vec![0, 2, 4]);
    assert_eq!(strided.reports.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn single_frame_sequence_matches_first_frame() {
    let seq = sphere_frames(1);
    let config = small_config(10);
    let mut s = state(config.clone());
    s.train_first_frame(&seq.frames[0]).unwrap();
    let run = run_sequence(&config, &seq).unwrap();
    assert_eq!(run.checkpoints[0].params, s.params.quantized_f32());
    let retrain = run_baseline(BaselineMode::Retrain, &config, &seq).unwrap();
    assert_eq!(retrain.checkpoints[0].params, s.params.quantized_f32());
}

#[test]
fn sequence_is_deterministic() {
    let seq = sphere_frames(3);
    let a = run_sequence(&small_config(4), &seq).unwrap();
    let b = run_sequence(&small_config(4), &seq).unwrap();
    let bytes = |r: &SequenceRun| r.checkpoints.iter().map(Checkpoint::to_bytes).collect::<Vec<_>>();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(loss_reports_csv(&a.reports), loss_reports_csv(&b.reports));
}

#[test]
fn finetune_is_train_frame_without_replay_or_labels() {
    let seq = sphere_frames(3);
    let config = small_config(4);
    let finetune = run_baseline(BaselineMode::Finetune, &config, &seq).unwrap();
    let mut s = state(TrainConfig { replay_enabled: false, label_off_surface: false, ..config });
    for (f, ckpt) in seq.frames.iter().zip(&finetune.checkpoints) {
        s.process(f).unwrap();
        assert_eq!(ckpt.params, s.params.quantized_f32());
    }
}

#[test]
fn retrain_grows_training_set() {
    let seq = sphere_frames(4);
    let run = run_baseline(BaselineMode::Retrain, &small_config(2), &seq).unwrap();
    let sizes: Vec<usize> = run.reports.iter().map(|r| r.training_set_size).collect();
    assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");
    let steps: Vec<usize> = run.reports.iter().map(|r| r.steps).collect();
    assert!(steps.windows(2).all(|w| w[0] <= w[1]), "{steps:?}");
}

#[test]
fn replay_steps_do_not_grow_with_time() {
    let seq = sphere_frames(4);
    let run = run_sequence(&small_config(2), &seq).unwrap();
    let sizes: Vec<usize> = run.reports.iter().map(|r| r.training_set_size).collect();
    let max = *sizes.iter().max().unwrap();
    // per-frame work depends on the frame alone
    assert!(run.reports.iter().all(|r| r.steps == 2 * r.training_set_size.div_ceil(32)));
    assert!(max <= seq.frames[0].width() * seq.frames[0].height());
}

#[test]
fn reinit_restarts_every_frame() {
    let seq = sphere_frames(3);
    let run = run_baseline(BaselineMode::Reinit, &small_config(0), &seq).unwrap();
    // zero epochs: every checkpoint is the seeded initialization
    assert_eq!(run.checkpoints[1].params, run.checkpoints[2].params);
    assert_eq!(run.checkpoints.len(), 3);
}

#[test]
fn heatmap_entry_recomputes_from_disk() {
    let seq = sphere_frames(3);
    let run = run_sequence(&small_config(5), &seq).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("theta_0002.cnm");
    run.checkpoints[2].save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let norm = loaded.normalization.unwrap();
    let frames: Vec<Vec<Vec3>> = seq.frames.iter().map(|f| backproject(f, 6).unwrap().points).collect();
    let params: Vec<_> = run.checkpoints.iter().map(|c| &c.params).collect();
    let h = sdf_error_heatmap(&params, &frames, &norm);
    let direct = frames[0]
        .iter()
        .map(|p| loaded.params.forward(norm.apply(p).as_slice()).unwrap().abs())
        .sum::<f64>()
        / frames[0].len() as f64
        / norm.scale;
    assert!((h.mean[0][2] - direct).abs() < 1e-9);
}

#[test]
fn load_errors_carry_frame_index() {
    struct Broken;
    impl FrameSource for Broken {
        fn len(&self) -> usize {
            2
        }
        fn frame(&self, i: usize) -> cnm_core::Result<DepthFrame> {
            if i == 1 {
                return Err(Error::InvalidArgument("disk on fire".into()));
            }
            sphere_frames(1).frame(0)
        }
        fn bbox(&self) -> BoundingBox {
            BoundingBox::cube(1.0)
        }
    }
    let err = run_sequence(&small_config(1), &Broken).unwrap_err();
    assert!(matches!(err, Error::Frame { frame: 1, .. }), "{err}");
}
