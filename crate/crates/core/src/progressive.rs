//! Progressive Glimmer: grow (or slide) the active dimension window one
//! chunk at a time and warm-start every relaxation from the previous step.
//!
//! Step 0 builds an initial embedding from the first chunk, either from the
//! first two dimensions followed by a relaxation or from batch Glimmer. Every
//! later step activates one chunk, keeps positions and neighbor sets, resets
//! the force state and the convergence filter, and relaxes all points (no
//! hierarchy) until convergence or the iteration cap.

use std::collections::VecDeque;
use std::sync::mpsc::SyncSender;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::convergence::{ConvergenceConfig, StressTrace};
use crate::datamatrix::{ChunkId, ColumnChunk, DataMatrix, PackedWindow};
use crate::error::{GlimmerError, Result};
use crate::glimmer::{chalmers_mds, run_glimmer_packed, GlimmerConfig, IterationView};
use crate::layout::{init_neighbors, Embedding, LayoutConfig, NeighborSets};
use crate::metric::full_normalized_stress;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationCap {
    Finite(usize),
    Unlimited,
}

impl IterationCap {
    pub fn as_option(self) -> Option<usize> {
        match self {
            IterationCap::Finite(z) => Some(z),
            IterationCap::Unlimited => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// First two dimensions (in chunk order) as axes, rescaled to the unit box.
    FirstTwoDims,
    /// Batch Glimmer on the initial window.
    GlimmerOnFirstChunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkOrder {
    Given,
    /// Seeded shuffle, drawn from its own stream.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgressionMode {
    Append,
    /// Start from `window_chunks` chunks; every step evicts the `evict`
    /// oldest active chunks and activates one new chunk.
    Sliding { window_chunks: usize, evict: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullStressPolicy {
    /// Compute full normalized stress for every step snapshot.
    PerStep,
    /// Only for a step after which no queued chunk remains.
    Final,
    Never,
}

/// Which dimensions the full normalized stress of a snapshot is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressReference {
    ActiveWindow,
    /// Every stored dimension, active or not.
    AllDimensions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressiveConfig<T> {
    pub max_iterations: IterationCap,
    /// Emit an intermediate snapshot every this many iterations.
    pub emit_every: Option<usize>,
    pub init_mode: InitMode,
    pub order: ChunkOrder,
    pub mode: ProgressionMode,
    /// Zero the force state at the start of every step.
    pub reset_forces: bool,
    pub full_stress: FullStressPolicy,
    pub stress_reference: StressReference,
    /// Also carries the root seed.
    pub layout: LayoutConfig<T>,
    pub convergence: ConvergenceConfig<T>,
    /// Multilevel settings for [`InitMode::GlimmerOnFirstChunk`]; its layout
    /// field is replaced by `layout`.
    pub glimmer: GlimmerConfig<T>,
}

impl<T: Scalar> Default for ProgressiveConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: IterationCap::Unlimited,
            emit_every: None,
            init_mode: InitMode::FirstTwoDims,
            order: ChunkOrder::Given,
            mode: ProgressionMode::Append,
            reset_forces: true,
            full_stress: FullStressPolicy::PerStep,
            stress_reference: StressReference::ActiveWindow,
            layout: LayoutConfig::default(),
            convergence: ConvergenceConfig::default(),
            glimmer: GlimmerConfig::default(),
        }
    }
}

impl<T: Scalar> ProgressiveConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.convergence.validate()?;
        self.glimmer_config().validate()?;
        if self.max_iterations == IterationCap::Finite(0) {
            return Err(GlimmerError::InvalidConfig("iteration cap must be >= 1".into()));
        }
        if self.emit_every == Some(0) {
            return Err(GlimmerError::InvalidConfig("emit interval must be >= 1".into()));
        }
        if let ProgressionMode::Sliding { window_chunks, evict } = self.mode {
            if window_chunks == 0 || evict == 0 || evict > window_chunks {
                return Err(GlimmerError::InvalidConfig(format!(
                    "sliding window needs 1 <= evict ({evict}) <= window ({window_chunks})"
                )));
            }
        }
        Ok(())
    }

    pub fn glimmer_config(&self) -> GlimmerConfig<T> {
        GlimmerConfig {
            layout: self.layout,
            ..self.glimmer
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    /// End of a progression step.
    Step,
    /// Emitted every `emit_every` iterations inside a step.
    Intermediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressSnapshot<T> {
    pub step: usize,
    pub kind: SnapshotKind,
    pub active_dims: usize,
    pub iterations: usize,
    pub converged: bool,
    pub positions: Vec<[T; 2]>,
    pub raw_stress: Option<T>,
    pub smoothed_stress: Option<T>,
    pub full_stress: Option<T>,
    /// Wall-clock time of the step, excluding the full stress evaluation.
    pub duration: Duration,
    /// Stress trace of the whole step; only on [`SnapshotKind::Step`].
    pub trace: Option<StressTrace<T>>,
}

pub trait Observer<T> {
    fn observe(&mut self, snapshot: &ProgressSnapshot<T>);
}

impl<T, F: FnMut(&ProgressSnapshot<T>)> Observer<T> for F {
    fn observe(&mut self, snapshot: &ProgressSnapshot<T>) {
        self(snapshot)
    }
}

/// Discards everything.
pub struct NoObserver;

impl<T> Observer<T> for NoObserver {
    fn observe(&mut self, _: &ProgressSnapshot<T>) {}
}

/// Forwards copies into a bounded channel; blocks while the channel is full.
/// A disconnected receiver is ignored.
pub struct ChannelObserver<T>(pub SyncSender<ProgressSnapshot<T>>);

impl<T: Clone> Observer<T> for ChannelObserver<T> {
    fn observe(&mut self, snapshot: &ProgressSnapshot<T>) {
        let _ = self.0.send(snapshot.clone());
    }
}

pub struct ProgressiveEngine<T> {
    matrix: DataMatrix<T>,
    config: ProgressiveConfig<T>,
    order: Vec<ChunkId>,
    pending: VecDeque<ChunkId>,
    window: PackedWindow<T>,
    embedding: Embedding<T>,
    neighbors: Option<NeighborSets<T>>,
    /// All stored dimensions packed, built on first use.
    all_dims: Option<PackedWindow<T>>,
    next_step: usize,
    step_started: Option<Instant>,
}

/// Every chunk's columns in `order`, flattened: `(chunk, column)` pairs.
fn first_two_columns<T: Scalar>(matrix: &DataMatrix<T>, order: &[ChunkId]) -> Result<[Vec<T>; 2]> {
    let mut cols = order.iter().flat_map(|&id| {
        let c = matrix.chunk(id).expect("ordered ids exist");
        (0..c.width()).map(move |k| c.column(k).collect::<Vec<T>>())
    });
    match (cols.next(), cols.next()) {
        (Some(x), Some(y)) => Ok([x, y]),
        _ => Err(GlimmerError::InvalidConfig(
            "first-two-dimensions init needs at least two dimensions".into(),
        )),
    }
}

/// Shift to the origin and divide by the larger extent, so the embedding
/// fits the unit box without changing its aspect ratio.
pub fn unit_box_positions<T: Scalar>(x: &[T], y: &[T]) -> Vec<[T; 2]> {
    let extent = |v: &[T]| {
        let lo = v.iter().copied().fold(T::infinity(), T::min);
        let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
        (lo, hi - lo)
    };
    let (x0, wx) = extent(x);
    let (y0, wy) = extent(y);
    if wx == T::zero() || wy == T::zero() {
        log::warn!("initial axis is constant (x extent {wx}, y extent {wy})");
    }
    let scale = wx.max(wy);
    let scale = if scale > T::zero() { scale } else { T::one() };
    x.iter()
        .zip(y)
        .map(|(&a, &b)| [(a - x0) / scale, (b - y0) / scale])
        .collect()
}

impl<T: Scalar> ProgressiveEngine<T> {
    /// All stored chunks are queued (in `config.order`) and deactivated.
    pub fn new(mut matrix: DataMatrix<T>, config: ProgressiveConfig<T>) -> Result<Self> {
        config.validate()?;
        matrix.deactivate_all();
        let mut order = matrix.chunk_ids();
        if let ChunkOrder::Random(seed) = config.order {
            order.shuffle(&mut rng::stream(seed, &[rng::TAG_ORDER]));
        }
        let n = matrix.point_count();
        let k = config.layout.effective_k(n);
        if k < 2 {
            return Err(GlimmerError::TooFewPoints {
                points: n,
                k: config.layout.k,
            });
        }
        Ok(Self {
            pending: order.iter().copied().collect(),
            order,
            window: PackedWindow::new(Vec::new(), 0, 0),
            embedding: Embedding::zeros(0),
            neighbors: None,
            all_dims: None,
            next_step: 0,
            step_started: None,
            matrix,
            config,
        })
    }

    pub fn matrix(&self) -> &DataMatrix<T> {
        &self.matrix
    }

    pub fn config(&self) -> &ProgressiveConfig<T> {
        &self.config
    }

    /// Chunk processing order.
    pub fn order(&self) -> &[ChunkId] {
        &self.order
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn embedding(&self) -> &Embedding<T> {
        &self.embedding
    }

    pub fn neighbors(&self) -> Option<&NeighborSets<T>> {
        self.neighbors.as_ref()
    }

    pub fn window(&self) -> &PackedWindow<T> {
        &self.window
    }

    pub fn is_initialized(&self) -> bool {
        self.next_step > 0
    }

    fn layout(&self) -> LayoutConfig<T> {
        LayoutConfig {
            k: self.config.layout.effective_k(self.matrix.point_count()),
            ..self.config.layout
        }
    }

    fn want_full_stress(&self) -> bool {
        match self.config.full_stress {
            FullStressPolicy::PerStep => true,
            FullStressPolicy::Final => self.pending.is_empty(),
            FullStressPolicy::Never => false,
        }
    }

    /// Step 0: activate the initial window and build the first embedding.
    pub fn initialize(&mut self, observer: &mut dyn Observer<T>) -> Result<ProgressSnapshot<T>> {
        if self.is_initialized() {
            return Err(GlimmerError::Window("engine already initialized".into()));
        }
        let initial = match self.config.mode {
            ProgressionMode::Append => 1,
            ProgressionMode::Sliding { window_chunks, .. } => window_chunks,
        };
        if self.pending.len() < initial {
            return Err(GlimmerError::Window(format!(
                "need {initial} chunk(s) to start, have {}",
                self.pending.len()
            )));
        }
        let started = Instant::now();
        for _ in 0..initial {
            let id = self.pending.pop_front().expect("checked above");
            self.matrix.activate(id)?;
        }
        self.window = self.matrix.pack_active();
        let seed = self.config.layout.seed;

        let (iterations, converged, trace) = match self.config.init_mode {
            InitMode::FirstTwoDims => {
                let [x, y] = first_two_columns(&self.matrix, &self.order)?;
                self.embedding = Embedding::from_positions(unit_box_positions(&x, &y));
                let layout = self.layout();
                self.neighbors = Some(init_neighbors(
                    self.matrix.point_count(),
                    layout.k,
                    rng::derive(seed, &[rng::TAG_NEIGHBOR_INIT]),
                )?);
                self.next_step = 1;
                return self.relax_step(0, started, observer);
            }
            InitMode::GlimmerOnFirstChunk => {
                let result = run_glimmer_packed(&self.window, &self.config.glimmer_config())?;
                let trace = result.trace();
                let iterations = result.total_iterations();
                let converged = result.levels.last().is_some_and(|l| l.converged);
                self.embedding = result.embedding;
                self.neighbors = match result.neighbors {
                    Some(sets) => Some(sets),
                    None => Some(init_neighbors(
                        self.matrix.point_count(),
                        self.layout().k,
                        rng::derive(seed, &[rng::TAG_NEIGHBOR_INIT]),
                    )?),
                };
                (iterations, converged, trace)
            }
        };
        self.next_step = 1;
        let duration = started.elapsed();
        let snapshot = self.step_snapshot(0, iterations, converged, trace, duration)?;
        observer.observe(&snapshot);
        Ok(snapshot)
    }

    /// Activate the next queued chunk and prepare the warm start, without
    /// iterating. Returns `false` when the queue is empty.
    pub fn begin_step(&mut self) -> Result<bool> {
        let Some(&id) = self.pending.front() else {
            return Ok(false);
        };
        self.begin_with(id)?;
        self.pending.pop_front();
        Ok(true)
    }

    fn begin_with(&mut self, id: ChunkId) -> Result<()> {
        if !self.is_initialized() {
            return Err(GlimmerError::Window("engine not initialized".into()));
        }
        if self.step_started.is_some() {
            return Err(GlimmerError::Window("a step is already in progress".into()));
        }
        let started = Instant::now();
        match self.config.mode {
            ProgressionMode::Append => self.matrix.activate(id)?,
            ProgressionMode::Sliding { evict, .. } => self.matrix.slide_to(id, evict)?,
        };
        self.window = self.matrix.pack_active();
        if self.config.reset_forces {
            self.embedding.reset_forces();
        }
        if let Some(sets) = self.neighbors.as_mut() {
            sets.mark_stale();
        }
        self.step_started = Some(started);
        Ok(())
    }

    /// Relax after [`Self::begin_step`] and emit the step snapshot.
    pub fn finish_step(&mut self, observer: &mut dyn Observer<T>) -> Result<ProgressSnapshot<T>> {
        let started = self
            .step_started
            .take()
            .ok_or_else(|| GlimmerError::Window("no step in progress".into()))?;
        let step = self.next_step;
        self.next_step += 1;
        self.relax_step(step, started, observer)
    }

    /// Activate the next queued chunk and relax. `None` once the queue is empty.
    pub fn step_next(&mut self, observer: &mut dyn Observer<T>) -> Result<Option<ProgressSnapshot<T>>> {
        if !self.begin_step()? {
            return Ok(None);
        }
        self.finish_step(observer).map(Some)
    }

    /// Store a newly arrived chunk and run one progression step on it.
    pub fn progress_step(
        &mut self,
        chunk: ColumnChunk<T>,
        observer: &mut dyn Observer<T>,
    ) -> Result<ProgressSnapshot<T>> {
        if !self.is_initialized() {
            return Err(GlimmerError::Window("engine not initialized".into()));
        }
        let id = self.matrix.insert(chunk)?;
        self.order.push(id);
        self.all_dims = None;
        self.begin_with(id)?;
        self.finish_step(observer)
    }

    fn relax_step(
        &mut self,
        step: usize,
        started: Instant,
        observer: &mut dyn Observer<T>,
    ) -> Result<ProgressSnapshot<T>> {
        let layout = self.layout();
        let update_seed = rng::derive(layout.seed, &[rng::TAG_NEIGHBOR_UPDATE, step as u64]);
        let emit_every = self.config.emit_every;
        let active_dims = self.matrix.active_dims();
        let neighbors = self.neighbors.as_mut().expect("initialized engine has neighbors");

        let outcome = chalmers_mds(
            &self.window,
            &mut self.embedding,
            neighbors,
            &layout,
            &self.config.convergence,
            self.config.max_iterations.as_option(),
            update_seed,
            |view: IterationView<'_, T>| {
                if emit_every.is_some_and(|e| view.iteration.is_multiple_of(e)) {
                    observer.observe(&ProgressSnapshot {
                        step,
                        kind: SnapshotKind::Intermediate,
                        active_dims,
                        iterations: view.iteration,
                        converged: false,
                        positions: view.embedding.positions().to_vec(),
                        raw_stress: view.trace.raw.last().copied(),
                        smoothed_stress: view.trace.last_smoothed(),
                        full_stress: None,
                        duration: started.elapsed(),
                        trace: None,
                    });
                }
            },
        );
        let duration = started.elapsed();
        let snapshot = self.step_snapshot(step, outcome.iterations, outcome.converged, outcome.trace, duration)?;
        observer.observe(&snapshot);
        Ok(snapshot)
    }

    fn step_snapshot(
        &mut self,
        step: usize,
        iterations: usize,
        converged: bool,
        trace: StressTrace<T>,
        duration: Duration,
    ) -> Result<ProgressSnapshot<T>> {
        let full_stress = if self.want_full_stress() {
            Some(self.reference_stress()?)
        } else {
            None
        };
        Ok(ProgressSnapshot {
            step,
            kind: SnapshotKind::Step,
            active_dims: self.matrix.active_dims(),
            iterations,
            converged,
            positions: self.embedding.positions().to_vec(),
            raw_stress: trace.raw.last().copied(),
            smoothed_stress: trace.last_smoothed(),
            full_stress,
            duration,
            trace: Some(trace),
        })
    }

    /// Full normalized stress of the current embedding over the active window.
    pub fn full_stress(&self) -> Result<T> {
        full_normalized_stress(&self.window, &self.embedding)
    }

    /// Full normalized stress against every stored dimension, active or not.
    pub fn full_stress_all_dims(&mut self) -> Result<T> {
        if self.all_dims.is_none() {
            let mut all = self.matrix.clone();
            all.deactivate_all();
            for id in all.chunk_ids() {
                all.activate(id)?;
            }
            self.all_dims = Some(all.pack_active());
        }
        full_normalized_stress(self.all_dims.as_ref().expect("packed above"), &self.embedding)
    }

    /// Full normalized stress on the configured reference.
    pub fn reference_stress(&mut self) -> Result<T> {
        match self.config.stress_reference {
            StressReference::ActiveWindow => self.full_stress(),
            StressReference::AllDimensions => self.full_stress_all_dims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressiveRun<T> {
    pub embedding: Embedding<T>,
    /// One snapshot per step, step 0 first.
    pub snapshots: Vec<ProgressSnapshot<T>>,
    pub order: Vec<ChunkId>,
}

impl<T: Scalar> ProgressiveRun<T> {
    pub fn final_snapshot(&self) -> &ProgressSnapshot<T> {
        self.snapshots.last().expect("a run has at least one step")
    }
}

fn drive<T: Scalar>(
    matrix: DataMatrix<T>,
    config: &ProgressiveConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<ProgressiveRun<T>> {
    let mut engine = ProgressiveEngine::new(matrix, *config)?;
    let mut snapshots = vec![engine.initialize(observer)?];
    while let Some(s) = engine.step_next(observer)? {
        snapshots.push(s);
    }
    Ok(ProgressiveRun {
        embedding: engine.embedding,
        snapshots,
        order: engine.order,
    })
}

/// Process every chunk of `matrix` in append mode.
pub fn run_progressive<T: Scalar>(
    matrix: DataMatrix<T>,
    config: &ProgressiveConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<ProgressiveRun<T>> {
    if matrix.chunks().is_empty() {
        return Err(GlimmerError::Empty("no chunks to process".into()));
    }
    let config = ProgressiveConfig {
        mode: ProgressionMode::Append,
        ..*config
    };
    drive(matrix, &config, observer)
}

/// Process every chunk of `matrix` with a sliding window.
pub fn run_sliding<T: Scalar>(
    matrix: DataMatrix<T>,
    config: &ProgressiveConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<ProgressiveRun<T>> {
    if !matches!(config.mode, ProgressionMode::Sliding { .. }) {
        return Err(GlimmerError::InvalidConfig("run_sliding needs sliding-window mode".into()));
    }
    drive(matrix, config, observer)
}
