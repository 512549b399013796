//! Precomputed voxel → primitive occupancy and deterministic-time batch
//! collision checking.
//!
//! Offline, the coverage space of the library is tiled with voxels and every
//! voxel lists the primitives passing within the query distance of its
//! center. Online, each obstacle point is mapped to its voxel and the
//! voxel's primitives are struck from the candidate set. No geometric test
//! against primitives happens online, so the cost depends only on the number
//! of points.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::library::{parse_usize, LibraryError, Lines, PrimitiveLibrary};

pub const INDEX_HEADER: &str = "PPIDX v1";

/// Default voxel edge length in meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.1;
/// Default robot radius in meters.
pub const DEFAULT_ROBOT_RADIUS: f64 = 0.2;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot index an empty library")]
    EmptyLibrary,
    #[error("invalid index parameter: {0}")]
    InvalidParams(String),
    #[error("unknown speed slice {0}")]
    UnknownSlice(usize),
    #[error("index was built for library {index} but the library hashes to {library}; rebuild the index")]
    HashMismatch { index: String, library: String },
    #[error("unsupported index file header {found:?}, expected {INDEX_HEADER:?}")]
    Version { found: String },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

impl From<LibraryError> for IndexError {
    fn from(e: LibraryError) -> Self {
        match e {
            LibraryError::Parse { offset, message } => IndexError::Parse { offset, message },
            other => IndexError::Parse { offset: 0, message: other.to_string() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexParams {
    pub voxel_size: f64,
    /// Base query distance: robot radius plus voxel quantization allowance.
    pub d: f64,
    pub r_inflated: f64,
}

impl IndexParams {
    /// `d` = robot radius + voxel half-diagonal.
    pub fn with_robot_radius(voxel_size: f64, robot_radius: f64, r_inflated: f64) -> Self {
        Self { voxel_size, d: robot_radius + voxel_size * 3f64.sqrt() / 2.0, r_inflated }
    }

    pub fn query_distance(&self) -> f64 {
        self.d + self.r_inflated
    }

    fn validate(&self) -> Result<(), IndexError> {
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(IndexError::InvalidParams(format!("voxel_size must be > 0, got {}", self.voxel_size)));
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(IndexError::InvalidParams(format!("d must be >= 0, got {}", self.d)));
        }
        if !(self.r_inflated.is_finite() && self.r_inflated >= 0.0) {
            return Err(IndexError::InvalidParams(format!("r_inflated must be >= 0, got {}", self.r_inflated)));
        }
        Ok(())
    }
}

impl Default for IndexParams {
    fn default() -> Self {
        Self::with_robot_radius(DEFAULT_VOXEL_SIZE, DEFAULT_ROBOT_RADIUS, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionIndex {
    pub origin: Vector3<f64>,
    pub dims: [usize; 3],
    pub params: IndexParams,
    pub library_hash: String,
    n_primitives: usize,
    slices: Vec<Range<usize>>,
    /// CSR over voxels: `ids[offsets[v]..offsets[v + 1]]` is sorted.
    offsets: Vec<u32>,
    ids: Vec<u32>,
    bits: SliceBits,
}

/// Per-slice bitset view of the occupancy lists, derived on construction.
#[derive(Debug, Clone, PartialEq)]
struct SliceBits {
    words_per_slice: usize,
    /// Row index for each voxel, `u32::MAX` when empty.
    row_of_voxel: Vec<u32>,
    /// Rows of `slices.len() * words_per_slice` words.
    words: Vec<u64>,
}

impl SliceBits {
    fn build(offsets: &[u32], ids: &[u32], slices: &[Range<usize>]) -> Self {
        let max_slice = slices.iter().map(|r| r.len()).max().unwrap_or(0);
        let words_per_slice = max_slice.div_ceil(64).max(1);
        let row_len = slices.len() * words_per_slice;
        let slice_of = |id: usize| slices.partition_point(|r| r.end <= id);
        let mut row_of_voxel = vec![u32::MAX; offsets.len() - 1];
        let mut words = Vec::new();
        for v in 0..offsets.len() - 1 {
            let list = &ids[offsets[v] as usize..offsets[v + 1] as usize];
            if list.is_empty() {
                continue;
            }
            let row = words.len() / row_len.max(1);
            row_of_voxel[v] = row as u32;
            words.resize(words.len() + row_len, 0u64);
            let base = row * row_len;
            for &id in list {
                let id = id as usize;
                let k = slice_of(id);
                let local = id - slices[k].start;
                words[base + k * words_per_slice + local / 64] |= 1u64 << (local % 64);
            }
        }
        Self { words_per_slice, row_of_voxel, words }
    }
}

/// Result of [`check`]: which primitives of one speed slice remain safe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyMask {
    pub speed_index: usize,
    /// Id of the slice's first primitive; local index `i` is primitive `first_id + i`.
    pub first_id: usize,
    len: usize,
    unsafe_bits: Vec<u64>,
    /// Number of voxel lookups performed (one per in-grid point).
    pub voxel_lookups: usize,
}

impl SafetyMask {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_safe(&self, local: usize) -> bool {
        local < self.len && self.unsafe_bits[local / 64] & (1u64 << (local % 64)) == 0
    }

    pub fn safe_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.is_safe(i)).map(move |i| self.first_id + i)
    }

    pub fn safe_count(&self) -> usize {
        (0..self.len).filter(|&i| self.is_safe(i)).count()
    }

    pub fn as_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.is_safe(i)).collect()
    }
}

/// Builds the occupancy index for every primitive's sampled knot positions.
pub fn build_index(lib: &PrimitiveLibrary, params: IndexParams) -> Result<CollisionIndex, IndexError> {
    params.validate()?;
    if lib.is_empty() {
        return Err(IndexError::EmptyLibrary);
    }
    let qd = params.query_distance();
    let vs = params.voxel_size;

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in lib.primitives() {
        for k in &p.trajectory.knots {
            lo = lo.inf(&k.position);
            hi = hi.sup(&k.position);
        }
    }
    let origin = ((lo.add_scalar(-qd)) / vs).map(f64::floor) * vs;
    let mut dims = [0usize; 3];
    for j in 0..3 {
        dims[j] = (((hi[j] + qd - origin[j]) / vs).ceil() as usize).max(1);
        // Guard against rounding leaving the top inflated face outside the grid.
        while origin[j] + dims[j] as f64 * vs < hi[j] + qd {
            dims[j] += 1;
        }
    }
    let n_voxels = dims[0] * dims[1] * dims[2];
    if n_voxels >= u32::MAX as usize {
        return Err(IndexError::InvalidParams("voxel grid too large".into()));
    }
    let grid = Grid { origin, dims, voxel_size: vs };

    let per_primitive: Vec<Vec<u32>> = lib
        .primitives()
        .par_iter()
        .map(|p| {
            let mut cells = Vec::new();
            for k in &p.trajectory.knots {
                grid.stamp_sphere(&k.position, qd, &mut cells);
            }
            cells.sort_unstable();
            cells.dedup();
            cells
        })
        .collect();

    let mut counts = vec![0u32; n_voxels + 1];
    for cells in &per_primitive {
        for &c in cells {
            counts[c as usize + 1] += 1;
        }
    }
    for v in 0..n_voxels {
        counts[v + 1] += counts[v];
    }
    let offsets = counts;
    let mut cursor: Vec<u32> = offsets[..n_voxels].to_vec();
    let mut ids = vec![0u32; offsets[n_voxels] as usize];
    // Primitives visited in id order, so every voxel list ends up sorted.
    for (id, cells) in per_primitive.iter().enumerate() {
        for &c in cells {
            let slot = &mut cursor[c as usize];
            ids[*slot as usize] = id as u32;
            *slot += 1;
        }
    }

    let slices: Vec<Range<usize>> = (0..lib.num_slices()).map(|k| lib.slice(k).expect("slice exists")).collect();
    let bits = SliceBits::build(&offsets, &ids, &slices);
    Ok(CollisionIndex {
        origin,
        dims,
        params,
        library_hash: lib.content_hash(),
        n_primitives: lib.len(),
        slices,
        offsets,
        ids,
        bits,
    })
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    origin: Vector3<f64>,
    dims: [usize; 3],
    voxel_size: f64,
}

impl Grid {
    fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    fn cell_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    /// Appends every voxel whose center lies within `radius` of `p`.
    fn stamp_sphere(&self, p: &Vector3<f64>, radius: f64, out: &mut Vec<u32>) {
        let mut range = [(0usize, 0usize); 3];
        for a in 0..3 {
            let rel = (p[a] - self.origin[a]) / self.voxel_size - 0.5;
            let r = radius / self.voxel_size;
            let lo = (rel - r).ceil() - 1.0;
            let hi = (rel + r).floor() + 1.0;
            let lo = lo.max(0.0) as usize;
            let hi = hi.min(self.dims[a] as f64 - 1.0);
            if hi < 0.0 || (lo as f64) > hi {
                return;
            }
            range[a] = (lo, hi as usize);
        }
        let r2 = radius * radius;
        for k in range[2].0..=range[2].1 {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    if (self.center(i, j, k) - p).norm_squared() <= r2 {
                        out.push(self.linear(i, j, k) as u32);
                    }
                }
            }
        }
    }
}

impl CollisionIndex {
    fn grid(&self) -> Grid {
        Grid { origin: self.origin, dims: self.dims, voxel_size: self.params.voxel_size }
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn num_primitives(&self) -> usize {
        self.n_primitives
    }

    pub fn num_entries(&self) -> usize {
        self.ids.len()
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, speed_index: usize) -> Option<Range<usize>> {
        self.slices.get(speed_index).cloned()
    }

    /// Upper corner of the covered box.
    pub fn extent_max(&self) -> Vector3<f64> {
        self.origin + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.params.voxel_size
    }

    /// Voxel containing `p`, as a linear index, or `None` outside the grid.
    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<usize> {
        self.grid().cell_of(p).map(|[i, j, k]| self.grid().linear(i, j, k))
    }

    pub fn voxel_center(&self, voxel: usize) -> Vector3<f64> {
        let nx = self.dims[0];
        let ny = self.dims[1];
        self.grid().center(voxel % nx, (voxel / nx) % ny, voxel / (nx * ny))
    }

    /// Sorted primitive ids associated with a voxel.
    pub fn occupancy(&self, voxel: usize) -> &[u32] {
        &self.ids[self.offsets[voxel] as usize..self.offsets[voxel + 1] as usize]
    }

    /// Errors unless this index was built from `lib`.
    pub fn verify(&self, lib: &PrimitiveLibrary) -> Result<(), IndexError> {
        let library = lib.content_hash();
        if library != self.library_hash {
            return Err(IndexError::HashMismatch { index: self.library_hash.clone(), library });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = String::with_capacity(self.ids.len() * 4 + 4096);
        let p = &self.params;
        s.push_str(INDEX_HEADER);
        s.push('\n');
        let _ = writeln!(s, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z);
        let _ = writeln!(s, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(s, "voxel_size {}", p.voxel_size);
        let _ = writeln!(s, "d {}", p.d);
        let _ = writeln!(s, "r_inflated {}", p.r_inflated);
        let _ = writeln!(s, "query_distance {}", p.query_distance());
        let _ = writeln!(s, "library_hash {}", self.library_hash);
        let _ = writeln!(s, "primitives {}", self.n_primitives);
        let bounds: Vec<String> = self.slices.iter().map(|r| format!("{}..{}", r.start, r.end)).collect();
        let _ = writeln!(s, "slices {}", bounds.join(" "));
        let nonempty = (0..self.num_voxels()).filter(|&v| self.offsets[v] != self.offsets[v + 1]).count();
        let _ = writeln!(s, "voxels {nonempty}");
        for v in 0..self.num_voxels() {
            let list = self.occupancy(v);
            if list.is_empty() {
                continue;
            }
            let _ = write!(s, "{v}");
            for run in runs(list) {
                let _ = write!(s, " {}+{}", run.start, run.len());
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| IndexError::Parse { offset: e.valid_up_to(), message: "invalid utf-8".into() })?;
        let mut lines = Lines::new(text);
        let (_, header) = lines.next_line()?;
        if header != INDEX_HEADER {
            return Err(IndexError::Version { found: header.to_string() });
        }
        let o = lines.field_vec3("origin")?;
        let dims_off = lines.offset();
        let d = lines.field_f64s("dims")?;
        if d.len() != 3 || d.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
            return Err(IndexError::Parse { offset: dims_off, message: "dims needs 3 positive integers".into() });
        }
        let dims = [d[0] as usize, d[1] as usize, d[2] as usize];
        let voxel_size = lines.field_f64("voxel_size")?;
        let dd = lines.field_f64("d")?;
        let r_inflated = lines.field_f64("r_inflated")?;
        let qd_off = lines.offset();
        let qd = lines.field_f64("query_distance")?;
        let params = IndexParams { voxel_size, d: dd, r_inflated };
        params.validate()?;
        if qd != params.query_distance() {
            return Err(IndexError::Parse { offset: qd_off, message: "query_distance != d + r_inflated".into() });
        }
        let (_, hash) = lines.field("library_hash")?;
        let library_hash = hash.to_string();
        let n_primitives = lines.field_usize("primitives")?;
        let (soff, slice_text) = lines.field("slices")?;
        let mut slices = Vec::new();
        for tok in slice_text.split_whitespace() {
            let (a, b) = tok
                .split_once("..")
                .ok_or_else(|| IndexError::Parse { offset: soff, message: format!("bad slice range {tok:?}") })?;
            slices.push(parse_usize(a, soff)?..parse_usize(b, soff)?);
        }
        let contiguous = slices.first().is_some_and(|r| r.start == 0)
            && slices.windows(2).all(|w| w[0].end == w[1].start)
            && slices.iter().all(|r| r.start < r.end)
            && slices.last().is_some_and(|r| r.end == n_primitives);
        if !contiguous {
            return Err(IndexError::Parse { offset: soff, message: "slice ranges must tile the primitive ids".into() });
        }

        let n_voxels = dims[0] * dims[1] * dims[2];
        let n_nonempty = lines.field_usize("voxels")?;
        let mut offsets = vec![0u32; n_voxels + 1];
        let mut ids: Vec<u32> = Vec::new();
        let mut next_voxel = 0usize;
        for _ in 0..n_nonempty {
            let (off, row) = lines.next_line()?;
            let mut toks = row.split(' ');
            let v = parse_usize(toks.next().unwrap_or(""), off)?;
            if v < next_voxel || v >= n_voxels {
                return Err(IndexError::Parse { offset: off, message: format!("voxel {v} out of order or range") });
            }
            for slot in &mut offsets[next_voxel + 1..=v] {
                *slot = ids.len() as u32;
            }
            for tok in toks {
                let (a, b) = tok
                    .split_once('+')
                    .ok_or_else(|| IndexError::Parse { offset: off, message: format!("bad run {tok:?}") })?;
                let (start, len) = (parse_usize(a, off)?, parse_usize(b, off)?);
                if len == 0 || start + len > n_primitives || ids.len() > offsets[v] as usize && ids[ids.len() - 1] as usize >= start {
                    return Err(IndexError::Parse { offset: off, message: format!("bad run {tok:?}") });
                }
                ids.extend((start..start + len).map(|i| i as u32));
            }
            if ids.len() == offsets[v] as usize {
                return Err(IndexError::Parse { offset: off, message: "empty voxel row".into() });
            }
            offsets[v + 1] = ids.len() as u32;
            next_voxel = v + 1;
        }
        for slot in &mut offsets[next_voxel + 1..] {
            *slot = ids.len() as u32;
        }
        let (end_off, end) = lines.next_line()?;
        if end != "end" {
            return Err(IndexError::Parse { offset: end_off, message: format!("expected \"end\", found {end:?}") });
        }
        if let Some((off, _)) = lines.peek_nonempty() {
            return Err(IndexError::Parse { offset: off, message: "trailing data".into() });
        }
        let bits = SliceBits::build(&offsets, &ids, &slices);
        Ok(Self { origin: o, dims, params, library_hash, n_primitives, slices, offsets, ids, bits })
    }
}

/// Maximal runs of consecutive ids.
fn runs(sorted: &[u32]) -> Vec<Range<u32>> {
    let mut out: Vec<Range<u32>> = Vec::new();
    for &id in sorted {
        match out.last_mut() {
            Some(r) if r.end == id => r.end += 1,
            _ => out.push(id..id + 1),
        }
    }
    out
}

/// Marks every primitive of the slice whose occupancy covers a voxel holding a point.
///
/// `points` must already be expressed in the library frame. Points outside
/// the grid are ignored.
pub fn check(index: &CollisionIndex, points: &[Vector3<f64>], speed_index: usize) -> Result<SafetyMask, IndexError> {
    let range = index.slice(speed_index).ok_or(IndexError::UnknownSlice(speed_index))?;
    let wps = index.bits.words_per_slice;
    let row_len = index.slices.len() * wps;
    let mut unsafe_bits = vec![0u64; wps];
    let grid = index.grid();
    let mut lookups = 0usize;
    for p in points {
        let Some([i, j, k]) = grid.cell_of(p) else { continue };
        lookups += 1;
        let row = index.bits.row_of_voxel[grid.linear(i, j, k)];
        if row == u32::MAX {
            continue;
        }
        let base = row as usize * row_len + speed_index * wps;
        for (dst, src) in unsafe_bits.iter_mut().zip(&index.bits.words[base..base + wps]) {
            *dst |= *src;
        }
    }
    Ok(SafetyMask { speed_index, first_id: range.start, len: range.len(), unsafe_bits, voxel_lookups: lookups })
}
