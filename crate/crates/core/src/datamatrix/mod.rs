//! Column-chunked storage of the high-dimensional data.
//!
//! Progression happens along dimensions, so the matrix is a list of column
//! chunks (each `point_count x width`, row-major inside the chunk) plus the
//! ordered list of chunks that currently contribute to distances.

mod io;
mod synthetic;

pub use io::{load_chunk_dir, load_csv, write_csv};
pub use synthetic::{generate, SyntheticKind, SyntheticSpec};

use std::fmt;

use crate::error::{GlimmerError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkId(pub u32);

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chunk#{}", self.0)
    }
}

/// A block of `width` dimensions for every point.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnChunk<T> {
    id: ChunkId,
    width: usize,
    values: Vec<T>,
    label: Option<String>,
}

impl<T: Scalar> ColumnChunk<T> {
    /// `values` is row-major: point `i`, column `c` at `i * width + c`.
    /// The id is assigned when the chunk is inserted into a matrix.
    pub fn new(values: Vec<T>, width: usize, label: Option<String>) -> Result<Self> {
        if width == 0 {
            return Err(GlimmerError::InvalidConfig("chunk width must be >= 1".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(width) {
            return Err(GlimmerError::InvalidConfig(format!(
                "chunk of width {width} cannot hold {} values",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(GlimmerError::NonFinite {
                point: pos / width,
                column: pos % width,
            });
        }
        Ok(Self {
            id: ChunkId(u32::MAX),
            width,
            values,
            label,
        })
    }

    pub fn from_columns(columns: &[Vec<T>], label: Option<String>) -> Result<Self> {
        let width = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(GlimmerError::InvalidConfig("columns differ in length".into()));
        }
        let mut values = Vec::with_capacity(n * width);
        for i in 0..n {
            values.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(values, width, label)
    }

    pub fn id(&self) -> ChunkId {
        self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = T> + '_ {
        self.values.iter().skip(c).step_by(self.width).copied()
    }
}

/// Source of pairwise high-dimensional distances over a fixed point set.
pub trait PointDistances<T>: Sync {
    fn point_count(&self) -> usize;

    fn squared_distance(&self, i: usize, j: usize) -> T;

    fn distance(&self, i: usize, j: usize) -> T
    where
        T: Scalar,
    {
        self.squared_distance(i, j).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    point_count: usize,
    chunks: Vec<ColumnChunk<T>>,
    active: Vec<ChunkId>,
}

impl<T: Scalar> DataMatrix<T> {
    pub fn new(point_count: usize) -> Result<Self> {
        if point_count == 0 {
            return Err(GlimmerError::Empty("matrix needs at least one point".into()));
        }
        Ok(Self {
            point_count,
            chunks: Vec::new(),
            active: Vec::new(),
        })
    }

    /// Build a matrix from row-major data, partitioned left to right into
    /// chunks of `chunk_width` columns (the last chunk may be narrower).
    /// All chunks start inactive.
    pub fn from_row_major(
        values: &[T],
        point_count: usize,
        dims: usize,
        chunk_width: usize,
        labels: Option<&[String]>,
    ) -> Result<Self> {
        if chunk_width == 0 {
            return Err(GlimmerError::InvalidConfig("chunk width must be >= 1".into()));
        }
        if dims == 0 {
            return Err(GlimmerError::Empty("no dimensions".into()));
        }
        assert_eq!(values.len(), point_count * dims);
        let mut m = Self::new(point_count)?;
        let mut start = 0;
        while start < dims {
            let end = (start + chunk_width).min(dims);
            let w = end - start;
            let mut vals = Vec::with_capacity(point_count * w);
            for i in 0..point_count {
                vals.extend_from_slice(&values[i * dims + start..i * dims + end]);
            }
            let label = labels.map(|l| l[start..end].join("|"));
            m.insert(ColumnChunk::new(vals, w, label)?)?;
            start = end;
        }
        Ok(m)
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn chunks(&self) -> &[ColumnChunk<T>] {
        &self.chunks
    }

    pub fn chunk(&self, id: ChunkId) -> Option<&ColumnChunk<T>> {
        self.chunks.get(id.0 as usize)
    }

    pub fn chunk_ids(&self) -> Vec<ChunkId> {
        self.chunks.iter().map(|c| c.id).collect()
    }

    pub fn active_window(&self) -> &[ChunkId] {
        &self.active
    }

    pub fn active_dims(&self) -> usize {
        self.active.iter().map(|&id| self.chunks[id.0 as usize].width).sum()
    }

    pub fn total_dims(&self) -> usize {
        self.chunks.iter().map(|c| c.width).sum()
    }

    pub fn is_active(&self, id: ChunkId) -> bool {
        self.active.contains(&id)
    }

    /// Store a chunk without activating it.
    pub fn insert(&mut self, mut chunk: ColumnChunk<T>) -> Result<ChunkId> {
        if chunk.rows() != self.point_count {
            return Err(GlimmerError::RowCountMismatch {
                source_name: chunk.label.clone().unwrap_or_else(|| "chunk".into()),
                expected: self.point_count,
                found: chunk.rows(),
            });
        }
        let id = ChunkId(self.chunks.len() as u32);
        chunk.id = id;
        self.chunks.push(chunk);
        Ok(id)
    }

    /// Activate a stored chunk at the tail of the window. Returns the active
    /// dimension count.
    pub fn activate(&mut self, id: ChunkId) -> Result<usize> {
        if self.chunk(id).is_none() {
            return Err(GlimmerError::Window(format!("unknown {id}")));
        }
        if self.is_active(id) {
            return Err(GlimmerError::Window(format!("{id} is already active")));
        }
        self.active.push(id);
        Ok(self.active_dims())
    }

    /// Store `chunk` and activate it.
    pub fn append_chunk(&mut self, chunk: ColumnChunk<T>) -> Result<usize> {
        let id = self.insert(chunk)?;
        self.activate(id)
    }

    /// Deactivate the `evict_count` oldest active chunks, then activate `id`.
    pub fn slide_to(&mut self, id: ChunkId, evict_count: usize) -> Result<usize> {
        if evict_count > self.active.len() {
            return Err(GlimmerError::Window(format!(
                "cannot evict {evict_count} of {} active chunks",
                self.active.len()
            )));
        }
        if self.chunk(id).is_none() {
            return Err(GlimmerError::Window(format!("unknown {id}")));
        }
        if self.active[evict_count..].contains(&id) {
            return Err(GlimmerError::Window(format!("{id} is already active")));
        }
        self.active.drain(..evict_count);
        self.active.push(id);
        Ok(self.active_dims())
    }

    /// Store `chunk`, evict the oldest `evict_count` active chunks and
    /// activate the new one.
    pub fn slide_window(&mut self, chunk: ColumnChunk<T>, evict_count: usize) -> Result<usize> {
        if evict_count > self.active.len() {
            return Err(GlimmerError::Window(format!(
                "cannot evict {evict_count} of {} active chunks",
                self.active.len()
            )));
        }
        let id = self.insert(chunk)?;
        self.slide_to(id, evict_count)
    }

    pub fn deactivate_all(&mut self) {
        self.active.clear();
    }

    /// Re-partition all columns (in chunk order) into chunks of `width`.
    /// The result has no active chunks.
    pub fn rechunk(&self, width: usize) -> Result<Self> {
        let dims = self.total_dims();
        Self::from_row_major(&self.to_row_major(), self.point_count, dims, width, None)
    }

    /// All columns of all chunks, in chunk order, row-major.
    pub fn to_row_major(&self) -> Vec<T> {
        let dims = self.total_dims();
        let mut out = Vec::with_capacity(self.point_count * dims);
        for i in 0..self.point_count {
            for c in &self.chunks {
                out.extend_from_slice(c.row(i));
            }
        }
        out
    }

    /// Copy of the active window as a dense row-major block.
    pub fn pack_active(&self) -> PackedWindow<T> {
        let dims = self.active_dims();
        let mut values = Vec::with_capacity(self.point_count * dims);
        for i in 0..self.point_count {
            for &id in &self.active {
                values.extend_from_slice(self.chunks[id.0 as usize].row(i));
            }
        }
        PackedWindow {
            point_count: self.point_count,
            dims,
            values,
        }
    }
}

impl<T: Scalar> PointDistances<T> for DataMatrix<T> {
    fn point_count(&self) -> usize {
        self.point_count
    }

    /// Accumulated chunk by chunk over the active window.
    fn squared_distance(&self, i: usize, j: usize) -> T {
        let mut acc = T::zero();
        for &id in &self.active {
            let c = &self.chunks[id.0 as usize];
            for (a, b) in c.row(i).iter().zip(c.row(j)) {
                let d = *a - *b;
                acc += d * d;
            }
        }
        acc
    }
}

/// Dense row-major copy of an active window. The engine rebuilds it after
/// each window change so the inner loops read contiguous rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedWindow<T> {
    point_count: usize,
    dims: usize,
    values: Vec<T>,
}

impl<T: Scalar> PackedWindow<T> {
    pub fn new(values: Vec<T>, point_count: usize, dims: usize) -> Self {
        assert_eq!(values.len(), point_count * dims);
        Self {
            point_count,
            dims,
            values,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    /// New window holding rows `rows[0], rows[1], ...` in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.dims);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            point_count: rows.len(),
            dims: self.dims,
            values,
        }
    }
}

impl<T: Scalar> PointDistances<T> for PackedWindow<T> {
    fn point_count(&self) -> usize {
        self.point_count
    }

    #[inline]
    fn squared_distance(&self, i: usize, j: usize) -> T {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .fold(T::zero(), |acc, (a, b)| {
                let d = *a - *b;
                acc + d * d
            })
    }
}
