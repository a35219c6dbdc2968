//! Batch multilevel Glimmer.
//!
//! A random permutation of the points defines nested levels: each level is a
//! prefix of the permutation, roughly `decimation_factor` times larger than
//! the one below. The smallest level starts from random positions, every
//! larger level places its new points next to their nearest already-placed
//! reference and then relaxes all of its points with [`chalmers_mds`].

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::convergence::{ConvergenceConfig, ConvergenceMonitor, Decision, StressTrace};
use crate::datamatrix::{DataMatrix, PackedWindow, PointDistances};
use crate::error::{GlimmerError, Result};
use crate::layout::{init_neighbors, layout_step, update_neighbors, Embedding, LayoutConfig, NeighborSets};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlimmerConfig<T> {
    /// Also carries the root seed of the run.
    pub layout: LayoutConfig<T>,
    pub convergence: ConvergenceConfig<T>,
    pub decimation_factor: usize,
    pub min_level_size: usize,
    pub max_iterations_per_level: usize,
}

impl<T: Scalar> Default for GlimmerConfig<T> {
    fn default() -> Self {
        Self {
            layout: LayoutConfig::default(),
            convergence: ConvergenceConfig::fixed(50),
            decimation_factor: 4,
            min_level_size: 128,
            max_iterations_per_level: 512,
        }
    }
}

impl<T: Scalar> GlimmerConfig<T> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.layout.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.convergence.validate()?;
        if self.decimation_factor < 2 {
            return Err(GlimmerError::InvalidConfig("decimation factor must be >= 2".into()));
        }
        if self.min_level_size == 0 || self.max_iterations_per_level == 0 {
            return Err(GlimmerError::InvalidConfig(
                "level size and iteration cap must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Nested point subsets, smallest first. Level `l` is `order[..sizes[l]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelHierarchy {
    order: Vec<usize>,
    sizes: Vec<usize>,
    pub decimation_factor: usize,
    pub min_level_size: usize,
}

impl LevelHierarchy {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn level_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn level(&self, l: usize) -> &[usize] {
        &self.order[..self.sizes[l]]
    }

    pub fn levels(&self) -> impl Iterator<Item = &[usize]> {
        self.sizes.iter().map(|&s| &self.order[..s])
    }

    /// Permutation of all points; every level is a prefix of it.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

pub fn build_hierarchy(
    n: usize,
    decimation_factor: usize,
    min_level_size: usize,
    seed: u64,
) -> Result<LevelHierarchy> {
    if n < 2 {
        return Err(GlimmerError::DegenerateData("need at least two points".into()));
    }
    if decimation_factor < 2 || min_level_size == 0 {
        return Err(GlimmerError::InvalidConfig(
            "decimation factor must be >= 2 and minimum level size >= 1".into(),
        ));
    }
    let mut sizes = vec![n];
    let mut s = n;
    while s > min_level_size {
        s = s.div_ceil(decimation_factor);
        sizes.push(s);
    }
    sizes.reverse();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::TAG_HIERARCHY]));
    Ok(LevelHierarchy {
        order,
        sizes,
        decimation_factor,
        min_level_size,
    })
}

/// The first `n` points of another distance source.
struct Prefix<'a, S: ?Sized> {
    inner: &'a S,
    n: usize,
}

impl<T: Scalar, S: PointDistances<T> + ?Sized> PointDistances<T> for Prefix<'_, S> {
    fn point_count(&self) -> usize {
        self.n
    }

    #[inline]
    fn squared_distance(&self, i: usize, j: usize) -> T {
        self.inner.squared_distance(i, j)
    }
}

/// Place each of `new_indices` next to the nearest of a random sample of
/// `sample_size` placed points, offset by a seeded jitter of at most 1% of
/// the placed points' bounding-box diagonal.
pub fn interpolate_new_points<T: Scalar, S: PointDistances<T> + ?Sized>(
    src: &S,
    embedding: &mut Embedding<T>,
    placed: &[usize],
    new_indices: &[usize],
    sample_size: usize,
    seed: u64,
) -> Result<()> {
    if new_indices.is_empty() {
        return Ok(());
    }
    if placed.is_empty() || sample_size == 0 {
        return Err(GlimmerError::InvalidConfig(
            "interpolation needs at least one placed reference".into(),
        ));
    }
    let (lo, hi) = placed.iter().fold(
        ([T::infinity(); 2], [T::neg_infinity(); 2]),
        |(lo, hi), &p| {
            let q = embedding.position(p);
            ([lo[0].min(q[0]), lo[1].min(q[1])], [hi[0].max(q[0]), hi[1].max(q[1])])
        },
    );
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let radius = T::of(0.01) * diag;
    let take = sample_size.min(placed.len());

    for &p in new_indices {
        let mut r = rng::stream(seed, &[rng::TAG_INTERPOLATE, p as u64]);
        let nearest = index::sample(&mut r, placed.len(), take)
            .into_iter()
            .map(|s| placed[s])
            .map(|q| (src.distance(p, q), q))
            .min_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            })
            .expect("sample is non-empty")
            .1;
        let angle = T::of(std::f64::consts::TAU * r.random::<f64>());
        let len = radius * T::of(r.random::<f64>());
        let base = embedding.position(nearest);
        embedding.positions_mut()[p] = [base[0] + len * angle.cos(), base[1] + len * angle.sin()];
    }
    Ok(())
}

/// Per-iteration view handed to observers of a relaxation run.
pub struct IterationView<'a, T> {
    pub iteration: usize,
    pub embedding: &'a Embedding<T>,
    pub trace: &'a StressTrace<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChalmersOutcome<T> {
    pub iterations: usize,
    pub converged: bool,
    pub trace: StressTrace<T>,
}

/// Relax until the filtered stress converges or `max_iterations` is reached
/// (`None`: no cap). Each iteration runs [`layout_step`], records the raw
/// stress, then runs [`update_neighbors`].
#[allow(clippy::too_many_arguments)]
pub fn chalmers_mds<T: Scalar, S: PointDistances<T> + ?Sized>(
    src: &S,
    embedding: &mut Embedding<T>,
    neighbors: &mut NeighborSets<T>,
    layout: &LayoutConfig<T>,
    convergence: &ConvergenceConfig<T>,
    max_iterations: Option<usize>,
    update_seed: u64,
    mut on_iteration: impl FnMut(IterationView<'_, T>),
) -> ChalmersOutcome<T> {
    let mut monitor = ConvergenceMonitor::new(*convergence);
    let mut iterations = 0;
    let mut converged = false;
    while max_iterations.is_none_or(|cap| iterations < cap) {
        let stress = layout_step(src, embedding, neighbors, layout);
        update_neighbors(src, neighbors, update_seed, iterations as u64);
        iterations += 1;
        let decision = monitor.observe(stress);
        on_iteration(IterationView {
            iteration: iterations,
            embedding,
            trace: monitor.trace(),
        });
        if decision == Decision::Converged {
            converged = true;
            break;
        }
    }
    ChalmersOutcome {
        iterations,
        converged,
        trace: monitor.into_trace(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport<T> {
    pub size: usize,
    pub iterations: usize,
    pub converged: bool,
    pub trace: StressTrace<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlimmerResult<T> {
    /// Positions in original point order.
    pub embedding: Embedding<T>,
    /// Neighbor sets in original point order, distances current.
    pub neighbors: Option<NeighborSets<T>>,
    pub hierarchy: LevelHierarchy,
    pub levels: Vec<LevelReport<T>>,
}

impl<T: Scalar> GlimmerResult<T> {
    pub fn total_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }

    /// Traces of all levels, concatenated.
    pub fn trace(&self) -> StressTrace<T> {
        let mut t = StressTrace::new();
        for l in &self.levels {
            t.raw.extend_from_slice(&l.trace.raw);
            t.smoothed.extend_from_slice(&l.trace.smoothed);
            t.filter_lengths.extend_from_slice(&l.trace.filter_lengths);
        }
        t
    }
}

/// Batch Glimmer on the active window of `matrix`.
pub fn run_glimmer<T: Scalar>(matrix: &DataMatrix<T>, config: &GlimmerConfig<T>) -> Result<GlimmerResult<T>> {
    if matrix.active_window().is_empty() {
        return Err(GlimmerError::Window("no active chunk".into()));
    }
    run_glimmer_packed(&matrix.pack_active(), config)
}

/// Relabel neighbor sets from permuted positions back to original indices.
fn unpermute_neighbors<T: Scalar>(sets: &NeighborSets<T>, order: &[usize]) -> Result<NeighborSets<T>> {
    let n = order.len();
    let mut near = vec![Vec::new(); n];
    let mut random = vec![Vec::new(); n];
    for (p, &orig) in order.iter().enumerate() {
        near[orig] = sets.near(p).iter().map(|&j| order[j as usize] as u32).collect();
        random[orig] = sets.random(p).iter().map(|&j| order[j as usize] as u32).collect();
    }
    NeighborSets::from_lists(sets.k(), &near, &random)
}

pub fn run_glimmer_packed<T: Scalar>(
    window: &PackedWindow<T>,
    config: &GlimmerConfig<T>,
) -> Result<GlimmerResult<T>> {
    config.validate()?;
    let n = window.point_count();
    let seed = config.layout.seed;
    let hierarchy = build_hierarchy(n, config.decimation_factor, config.min_level_size, seed)?;
    let permuted = window.select_rows(hierarchy.order());

    if n == 2 {
        // No admissible k; the exact answer is a segment of the right length.
        let d = permuted.distance(0, 1);
        let mut embedding = Embedding::zeros(2);
        embedding.positions_mut()[1] = [d, T::zero()];
        let mut out = Embedding::zeros(2);
        for (p, &orig) in hierarchy.order().iter().enumerate() {
            out.positions_mut()[orig] = embedding.position(p);
        }
        return Ok(GlimmerResult {
            embedding: out,
            neighbors: None,
            hierarchy,
            levels: vec![LevelReport {
                size: 2,
                iterations: 0,
                converged: true,
                trace: StressTrace::new(),
            }],
        });
    }

    let sizes = hierarchy.sizes().to_vec();
    let mut embedding = Embedding::random_unit_square(sizes[0], seed);
    let mut neighbors: Option<NeighborSets<T>> = None;
    let mut levels = Vec::with_capacity(sizes.len());
    let mut placed = 0;

    for (l, &m) in sizes.iter().enumerate() {
        let level_seed = rng::derive(seed, &[rng::TAG_LEVEL, l as u64]);
        let view = Prefix { inner: &permuted, n: m };
        let k = config.layout.effective_k(m);
        let layout = LayoutConfig { k, ..config.layout };

        if placed > 0 {
            embedding.extend(std::iter::repeat_n([T::zero(); 2], m - placed));
            let old: Vec<usize> = (0..placed).collect();
            let new: Vec<usize> = (placed..m).collect();
            interpolate_new_points(&view, &mut embedding, &old, &new, layout.k, level_seed)?;
        }
        neighbors = Some(match neighbors.take() {
            Some(mut sets) if sets.k() == k => {
                sets.extend_to(m, level_seed)?;
                sets
            }
            _ => init_neighbors(m, k, level_seed)?,
        });
        let sets = neighbors.as_mut().expect("set above");
        embedding.reset_forces();

        let outcome = chalmers_mds(
            &view,
            &mut embedding,
            sets,
            &layout,
            &config.convergence,
            Some(config.max_iterations_per_level),
            level_seed,
            |_| {},
        );
        log::debug!(
            "glimmer level {l}: {m} points, {} iterations, converged = {}",
            outcome.iterations,
            outcome.converged
        );
        levels.push(LevelReport {
            size: m,
            iterations: outcome.iterations,
            converged: outcome.converged,
            trace: outcome.trace,
        });
        placed = m;
    }

    let mut out = Embedding::zeros(n);
    for (p, &orig) in hierarchy.order().iter().enumerate() {
        out.positions_mut()[orig] = embedding.position(p);
    }
    let mut sets = unpermute_neighbors(neighbors.as_ref().expect("at least one level"), hierarchy.order())?;
    sets.refresh(window);
    Ok(GlimmerResult {
        embedding: out,
        neighbors: Some(sets),
        hierarchy,
        levels,
    })
}
