//! Frame-by-frame training sessions and the comparison baselines.

mod config;

pub use config::TrainConfig;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::field::{
    loss_and_param_grads, AdamState, LossBatchSpec, LossTerms, NetworkParams, OffSurfaceMode, OffSurfaceTerm,
    SurfaceTerm,
};
use crate::geometry::{backproject, DepthFrame, SurfaceSampleSet, Vec3};
use crate::replay::{draw_off_surface, label_off_surface, ReplayBuffer};
use crate::scene::{BoundingBox, NormalizationTransform, SequenceManifest};

/// Ordered posed depth frames with a scene bounding box.
pub trait FrameSource {
    fn len(&self) -> usize;
    fn frame(&self, i: usize) -> Result<DepthFrame>;
    fn bbox(&self) -> BoundingBox;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSource for SequenceManifest {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn frame(&self, i: usize) -> Result<DepthFrame> {
        self.load_frame(i)
    }

    fn bbox(&self) -> BoundingBox {
        self.bbox
    }
}

#[derive(Debug, Clone)]
pub struct InMemorySequence {
    pub frames: Vec<DepthFrame>,
    pub bbox: BoundingBox,
}

impl FrameSource for InMemorySequence {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, i: usize) -> Result<DepthFrame> {
        self.frames
            .get(i)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("frame {i} out of range")))
    }

    fn bbox(&self) -> BoundingBox {
        self.bbox
    }
}

/// What happened while training on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Session time step.
    pub t: usize,
    /// Index of the frame in the input sequence.
    pub frame: usize,
    /// Mean batch losses of every epoch.
    pub epochs: Vec<LossTerms>,
    pub steps: usize,
    /// Surface samples the episode iterated over (current frame, or all
    /// frames so far for the retrain baseline).
    pub training_set_size: usize,
    pub wall_time_secs: f64,
    pub skipped: bool,
}

impl LossReport {
    pub fn final_loss(&self) -> Option<&LossTerms> {
        self.epochs.last()
    }
}

/// CSV of per-epoch losses; wall time is left out so the file is reproducible.
pub fn loss_reports_csv(reports: &[LossReport]) -> String {
    let mut s = String::from("t,frame,epoch,total,data,normal,eikonal,off_surface\n");
    for r in reports {
        for (e, l) in r.epochs.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
                r.t, r.frame, e, l.total, l.data, l.normal, l.eikonal, l.off_surface
            ));
        }
    }
    s
}

/// A surface sample already mapped to network coordinates.
#[derive(Debug, Clone, Copy)]
struct Sample {
    point: Vec3,
    normal: Vec3,
}

fn normalize_samples(set: &SurfaceSampleSet, norm: &NormalizationTransform) -> Vec<Sample> {
    set.points
        .iter()
        .zip(&set.normals)
        .map(|(p, n)| Sample { point: norm.apply(p), normal: *n })
        .collect()
}

struct Episode<'a> {
    current: &'a [Sample],
    replay: Option<&'a ReplayBuffer>,
    /// Previous network and the frame it is checked against.
    labeler: Option<(&'a NetworkParams, &'a DepthFrame)>,
    epochs: usize,
    t: usize,
}

fn surface_term(s: &Sample, eikonal: bool) -> SurfaceTerm {
    SurfaceTerm {
        point: s.point.as_slice().to_vec(),
        normal: s.normal.as_slice().to_vec(),
        apply_data: true,
        apply_normal: true,
        apply_eikonal: eikonal,
    }
}

fn run_episode(
    params: &mut NetworkParams,
    adam: &mut AdamState,
    ep: &Episode,
    config: &TrainConfig,
    norm: &NormalizationTransform,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<LossTerms>, usize)> {
    let n = ep.current.len();
    let replay = ep.replay.filter(|b| !b.is_empty());
    let n_replay = if replay.is_some() { config.replay_per_batch() } else { 0 };
    let n_current = config.batch_size - n_replay;
    let n_off = config.off_surface_per_batch();
    // Same step count with or without replay, so per-frame cost is constant.
    let steps_per_epoch = n.div_ceil(config.batch_size);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut history = Vec::with_capacity(ep.epochs);
    let mut steps = 0;
    for epoch in 0..ep.epochs {
        let mut acc = LossTerms::default();
        for _ in 0..steps_per_epoch {
            let mut batch = LossBatchSpec::new(config.weights, config.alpha);
            batch.eikonal_off_surface = config.eikonal_off_surface;
            for _ in 0..n_current.min(n) {
                if cursor == n {
                    order.shuffle(rng);
                    cursor = 0;
                }
                batch.surface.push(surface_term(&ep.current[order[cursor]], true));
                cursor += 1;
            }
            if let Some(buf) = replay {
                for s in buf.sample_surface_replay(n_replay, rng) {
                    let s = Sample { point: norm.apply(&s.point), normal: s.normal };
                    batch.surface.push(surface_term(&s, config.eikonal_replay));
                }
            }
            let points = draw_off_surface(n_off, rng);
            match ep.labeler {
                Some((prev, frame)) => {
                    let labeled = label_off_surface(points, prev, frame, norm, config.surface_band);
                    for (p, l) in labeled.points.iter().zip(&labeled.labels) {
                        batch
                            .off_surface
                            .push(OffSurfaceTerm { point: p.as_slice().to_vec(), mode: OffSurfaceMode::Labeled(*l) });
                    }
                }
                None => {
                    for p in &points {
                        batch
                            .off_surface
                            .push(OffSurfaceTerm { point: p.as_slice().to_vec(), mode: OffSurfaceMode::Unlabeled });
                    }
                }
            }
            let (terms, grads) = loss_and_param_grads(params, &batch).map_err(|e| Error::TrainingDiverged {
                frame: ep.t,
                epoch,
                source: Box::new(e),
            })?;
            adam.step(params.as_mut_slice(), &grads)?;
            steps += 1;
            acc.data += terms.data;
            acc.normal += terms.normal;
            acc.eikonal += terms.eikonal;
            acc.off_surface += terms.off_surface;
            acc.total += terms.total;
        }
        let k = steps_per_epoch.max(1) as f64;
        history.push(LossTerms {
            data: acc.data / k,
            normal: acc.normal / k,
            eikonal: acc.eikonal / k,
            off_surface: acc.off_surface / k,
            total: acc.total / k,
        });
    }
    Ok((history, steps))
}

/// Everything a replay session carries between frames.
#[derive(Debug, Clone)]
pub struct MappingState {
    pub config: TrainConfig,
    pub params: NetworkParams,
    /// Snapshot taken right before the latest frame's episode.
    pub prev_params: Option<NetworkParams>,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    /// Frames processed so far.
    pub t: usize,
    pub normalization: NormalizationTransform,
    rng: ChaCha8Rng,
}

impl MappingState {
    pub fn new(config: TrainConfig, normalization: NormalizationTransform) -> Result<Self> {
        config.validate()?;
        let params = NetworkParams::init_siren(config.dims.clone(), config.omega0, config.seed)?;
        let adam = AdamState::new(params.len(), config.learning_rate);
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(MappingState { config, params, prev_params: None, adam, buffer, t: 0, normalization, rng })
    }

    /// Trains on `frame` as the next step of the session.
    pub fn process(&mut self, frame: &DepthFrame) -> Result<LossReport> {
        if self.t == 0 {
            self.train_first_frame(frame)
        } else {
            self.train_frame(frame)
        }
    }

    fn integrate(&mut self, set: &SurfaceSampleSet) {
        if self.config.buffer_capacity == 0 && self.buffer.capacity() == 0 {
            self.buffer = ReplayBuffer::new(set.len());
        }
        self.buffer.integrate_frame(set, &mut self.rng);
    }

    fn skipped(&mut self, frame: &DepthFrame) -> LossReport {
        log::warn!("frame {} has no usable depth samples, skipping", frame.index);
        let report = LossReport {
            t: self.t,
            frame: frame.index,
            epochs: Vec::new(),
            steps: 0,
            training_set_size: 0,
            wall_time_secs: 0.0,
            skipped: true,
        };
        self.t += 1;
        report
    }

    /// Initial episode: no previous network, so off-surface samples use the
    /// unsigned penalty.
    pub fn train_first_frame(&mut self, frame: &DepthFrame) -> Result<LossReport> {
        if self.t != 0 {
            return Err(Error::InvalidArgument(format!("train_first_frame called at t = {}", self.t)));
        }
        let start = Instant::now();
        let set = backproject(frame, self.config.pixel_stride)?;
        if set.is_empty() {
            return Ok(self.skipped(frame));
        }
        let current = normalize_samples(&set, &self.normalization);
        let ep = Episode { current: &current, replay: None, labeler: None, epochs: self.config.first_frame_epochs, t: 0 };
        let (epochs, steps) =
            run_episode(&mut self.params, &mut self.adam, &ep, &self.config, &self.normalization, &mut self.rng)?;
        self.integrate(&set);
        let report = LossReport {
            t: self.t,
            frame: frame.index,
            epochs,
            steps,
            training_set_size: current.len(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            skipped: false,
        };
        self.t += 1;
        Ok(report)
    }

    /// Continual step: warm start from the current parameters, mix current and
    /// replayed surface samples, label off-surface points with the snapshot.
    pub fn train_frame(&mut self, frame: &DepthFrame) -> Result<LossReport> {
        if self.t == 0 {
            return Err(Error::InvalidArgument("train_frame needs a trained first frame".into()));
        }
        let start = Instant::now();
        let set = backproject(frame, self.config.pixel_stride)?;
        if set.is_empty() {
            return Ok(self.skipped(frame));
        }
        let prev = self.params.clone();
        let current = normalize_samples(&set, &self.normalization);
        let ep = Episode {
            current: &current,
            replay: self.config.replay_enabled.then_some(&self.buffer),
            labeler: self.config.label_off_surface.then_some((&prev, frame)),
            epochs: self.config.epochs_per_frame,
            t: self.t,
        };
        let (epochs, steps) =
            run_episode(&mut self.params, &mut self.adam, &ep, &self.config, &self.normalization, &mut self.rng)?;
        self.prev_params = Some(prev);
        self.integrate(&set);
        let report = LossReport {
            t: self.t,
            frame: frame.index,
            epochs,
            steps,
            training_set_size: current.len(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            skipped: false,
        };
        self.t += 1;
        Ok(report)
    }

    /// Current parameters as stored on disk (f32), with the normalization.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.quantized_f32(),
            normalization: Some(self.normalization),
            buffer: self.config.checkpoint_buffer.then(|| self.buffer.clone()),
        }
    }
}

/// Checkpoints (one per processed frame) and loss reports.
#[derive(Debug, Clone, Default)]
pub struct SequenceRun {
    pub checkpoints: Vec<Checkpoint>,
    pub reports: Vec<LossReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Newest frame only, warm started, unsigned off-surface penalty.
    Finetune,
    /// Fresh network on every frame seen so far.
    Retrain,
    /// Fresh network on the buffer and the newest frame.
    Reinit,
    /// The continual method with replay and sign labeling.
    Replay,
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetune" => Ok(BaselineMode::Finetune),
            "retrain" => Ok(BaselineMode::Retrain),
            "reinit" => Ok(BaselineMode::Reinit),
            "replay" => Ok(BaselineMode::Replay),
            _ => Err(Error::InvalidArgument(format!("unknown baseline {s:?} (finetune|retrain|reinit|replay)"))),
        }
    }
}

fn session_normalization(config: &TrainConfig, dataset: &dyn FrameSource) -> Result<NormalizationTransform> {
    NormalizationTransform::fit(&config.bbox.unwrap_or_else(|| dataset.bbox()))
}

fn load(dataset: &dyn FrameSource, i: usize) -> Result<DepthFrame> {
    dataset.frame(i).map_err(|e| match e {
        Error::Frame { .. } => e,
        other => Error::Frame { frame: i, source: Box::new(other) },
    })
}

fn frame_indices(config: &TrainConfig, dataset: &dyn FrameSource) -> Vec<usize> {
    (0..dataset.len()).step_by(config.frame_stride).collect()
}

/// The continual method over a whole sequence, calling `sink` after every
/// frame with the checkpoint for that time step.
pub fn run_sequence_with(
    config: &TrainConfig,
    dataset: &dyn FrameSource,
    mut sink: impl FnMut(Checkpoint, LossReport) -> Result<()>,
) -> Result<()> {
    let mut state = MappingState::new(config.clone(), session_normalization(config, dataset)?)?;
    for i in frame_indices(config, dataset) {
        let frame = load(dataset, i)?;
        let report = state.process(&frame)?;
        log_report(&report);
        sink(state.checkpoint(), report)?;
    }
    Ok(())
}

pub fn run_sequence(config: &TrainConfig, dataset: &dyn FrameSource) -> Result<SequenceRun> {
    collect(|sink| run_sequence_with(config, dataset, sink))
}

fn collect(f: impl FnOnce(&mut dyn FnMut(Checkpoint, LossReport) -> Result<()>) -> Result<()>) -> Result<SequenceRun> {
    let mut run = SequenceRun::default();
    f(&mut |c, r| {
        run.checkpoints.push(c);
        run.reports.push(r);
        Ok(())
    })?;
    Ok(run)
}

fn log_report(r: &LossReport) {
    if let Some(l) = r.final_loss() {
        log::info!(
            "t={} frame={} steps={} loss={:.5} (data {:.2e}, normal {:.3}, eik {:.3}, off {:.3}) {:.1}s",
            r.t,
            r.frame,
            r.steps,
            l.total,
            l.data,
            l.normal,
            l.eikonal,
            l.off_surface,
            r.wall_time_secs
        );
    }
}

pub fn run_baseline(mode: BaselineMode, config: &TrainConfig, dataset: &dyn FrameSource) -> Result<SequenceRun> {
    collect(|sink| run_baseline_with(mode, config, dataset, sink))
}

pub fn run_baseline_with(
    mode: BaselineMode,
    config: &TrainConfig,
    dataset: &dyn FrameSource,
    sink: impl FnMut(Checkpoint, LossReport) -> Result<()>,
) -> Result<()> {
    match mode {
        BaselineMode::Replay => run_sequence_with(config, dataset, sink),
        BaselineMode::Finetune => {
            let c = TrainConfig { replay_enabled: false, label_off_surface: false, ..config.clone() };
            run_sequence_with(&c, dataset, sink)
        }
        BaselineMode::Retrain => run_retrain(config, dataset, sink),
        BaselineMode::Reinit => run_reinit(config, dataset, sink),
    }
}

fn run_retrain(
    config: &TrainConfig,
    dataset: &dyn FrameSource,
    mut sink: impl FnMut(Checkpoint, LossReport) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    let norm = session_normalization(config, dataset)?;
    let mut seen: Vec<Sample> = Vec::new();
    let mut elapsed = 0.0;
    for (t, i) in frame_indices(config, dataset).into_iter().enumerate() {
        let frame = load(dataset, i)?;
        let start = Instant::now();
        let set = backproject(&frame, config.pixel_stride)?;
        if set.is_empty() {
            log::warn!("frame {i} has no usable depth samples");
        }
        seen.extend(normalize_samples(&set, &norm));
        let mut params = NetworkParams::init_siren(config.dims.clone(), config.omega0, config.seed)?;
        let mut adam = AdamState::new(params.len(), config.learning_rate);
        // Stream t of the session seed: t = 0 replays train_first_frame exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(t as u64);
        let epochs = if t == 0 { config.first_frame_epochs } else { config.epochs_per_frame };
        let (history, steps) = if seen.is_empty() {
            (Vec::new(), 0)
        } else {
            let ep = Episode { current: &seen, replay: None, labeler: None, epochs, t };
            run_episode(&mut params, &mut adam, &ep, config, &norm, &mut rng)?
        };
        elapsed += start.elapsed().as_secs_f64();
        let report = LossReport {
            t,
            frame: i,
            epochs: history,
            steps,
            training_set_size: seen.len(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            skipped: set.is_empty(),
        };
        log::debug!("retrain cumulative time {elapsed:.1}s");
        log_report(&report);
        sink(Checkpoint { params: params.quantized_f32(), normalization: Some(norm), buffer: None }, report)?;
    }
    Ok(())
}

fn run_reinit(
    config: &TrainConfig,
    dataset: &dyn FrameSource,
    mut sink: impl FnMut(Checkpoint, LossReport) -> Result<()>,
) -> Result<()> {
    let mut state = MappingState::new(config.clone(), session_normalization(config, dataset)?)?;
    for i in frame_indices(config, dataset) {
        let frame = load(dataset, i)?;
        if state.t > 0 {
            // Start from scratch but keep the buffer and the previous network
            // for labeling.
            let prev = std::mem::replace(
                &mut state.params,
                NetworkParams::init_siren(config.dims.clone(), config.omega0, config.seed)?,
            );
            state.adam = AdamState::new(state.params.len(), config.learning_rate);
            let start = Instant::now();
            let set = backproject(&frame, config.pixel_stride)?;
            if set.is_empty() {
                state.params = prev;
                let report = state.skipped(&frame);
                sink(state.checkpoint(), report)?;
                continue;
            }
            let current = normalize_samples(&set, &state.normalization);
            let ep = Episode {
                current: &current,
                replay: Some(&state.buffer),
                labeler: config.label_off_surface.then_some((&prev, &frame)),
                epochs: config.epochs_per_frame,
                t: state.t,
            };
            let (epochs, steps) =
                run_episode(&mut state.params, &mut state.adam, &ep, config, &state.normalization, &mut state.rng)?;
            state.prev_params = Some(prev);
            state.integrate(&set);
            let report = LossReport {
                t: state.t,
                frame: frame.index,
                epochs,
                steps,
                training_set_size: current.len(),
                wall_time_secs: start.elapsed().as_secs_f64(),
                skipped: false,
            };
            state.t += 1;
            log_report(&report);
            sink(state.checkpoint(), report)?;
        } else {
            let report = state.train_first_frame(&frame)?;
            log_report(&report);
            sink(state.checkpoint(), report)?;
        }
    }
    Ok(())
}
