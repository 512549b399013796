//! The time-optimal motion primitive library: every path parameterized at
//! every start speed of a uniform grid, always ending at rest.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::Vector3;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::path_library::{build_path_library, GeometricPath, PathError, PathLibrarySpec, Radius};
use crate::topp::{parameterize, Bounds, ToppError, ToppOptions, Trajectory, TrajectoryKnot, FEASIBILITY_SLACK};

pub const LIBRARY_HEADER: &str = "PPLIB v1";

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Topp(#[from] ToppError),
    #[error("invalid speed step {0}")]
    InvalidSpeedStep(f64),
    #[error("no feasible primitive starts at {speed} m/s (slice {speed_index})")]
    EmptySlice { speed_index: usize, speed: f64 },
    #[error("unsupported library file header {found:?}, expected {LIBRARY_HEADER:?}")]
    Version { found: String },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("primitive (path {path_id}, slice {speed_index}) fails validation: {message}")]
    Invalid { path_id: usize, speed_index: usize, message: String },
}

/// Everything needed to regenerate a library.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryConfig {
    pub paths: PathLibrarySpec,
    pub path_samples: usize,
    pub bounds: Bounds,
    pub speed_step: f64,
    pub topp: ToppOptions,
}

impl LibraryConfig {
    /// Speeds `0, step, 2·step, …` up to the speed-norm limit.
    pub fn speed_grid(&self) -> Result<Vec<f64>, LibraryError> {
        let step = self.speed_step;
        if !(step.is_finite() && step > 0.0) {
            return Err(LibraryError::InvalidSpeedStep(step));
        }
        let count = (self.bounds.v_norm / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| k as f64 * step).collect())
    }
}

/// One library entry. Ids are dense over stored primitives, ordered by
/// `(speed_index, path_id)`, so each speed slice is a contiguous id range.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub id: usize,
    pub path_id: usize,
    pub speed_index: usize,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasiblePair {
    pub path_id: usize,
    pub speed_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveLibrary {
    pub config: LibraryConfig,
    pub paths: Vec<GeometricPath>,
    pub speed_grid: Vec<f64>,
    primitives: Vec<Primitive>,
    slices: Vec<Range<usize>>,
    pub infeasible: Vec<InfeasiblePair>,
}

/// Rounds to the precision written to library files (9 significant digits).
pub fn quantize(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn quantize_vec(v: Vector3<f64>) -> Vector3<f64> {
    v.map(quantize)
}

fn quantize_trajectory(traj: &mut Trajectory) {
    for k in &mut traj.knots {
        k.t = quantize(k.t);
        k.position = quantize_vec(k.position);
        k.velocity = quantize_vec(k.velocity);
        k.acceleration = quantize_vec(k.acceleration);
    }
}

/// Generates the path library and parameterizes every (path, start speed) pair.
pub fn build_library(config: &LibraryConfig) -> Result<PrimitiveLibrary, LibraryError> {
    config.bounds.validate()?;
    let paths = build_path_library(&config.paths, config.path_samples)?;
    let speed_grid = config.speed_grid()?;

    let pairs: Vec<(usize, usize)> =
        (0..speed_grid.len()).flat_map(|k| paths.iter().map(move |p| (k, p.id))).collect();
    let results: Vec<((usize, usize), Result<Trajectory, ToppError>)> = pairs
        .par_iter()
        .map(|&(k, pid)| {
            let traj = parameterize(&paths[pid], speed_grid[k], 0.0, &config.bounds, &config.topp).map(|mut t| {
                quantize_trajectory(&mut t);
                t
            });
            ((k, pid), traj)
        })
        .collect();

    let mut stored = Vec::new();
    let mut infeasible = Vec::new();
    for ((speed_index, path_id), res) in results {
        match res {
            Ok(trajectory) => stored.push((speed_index, path_id, trajectory)),
            Err(e) => infeasible.push(InfeasiblePair { path_id, speed_index, reason: e.to_string() }),
        }
    }
    assemble(config.clone(), paths, speed_grid, stored, infeasible)
}

fn assemble(
    config: LibraryConfig,
    paths: Vec<GeometricPath>,
    speed_grid: Vec<f64>,
    mut stored: Vec<(usize, usize, Trajectory)>,
    mut infeasible: Vec<InfeasiblePair>,
) -> Result<PrimitiveLibrary, LibraryError> {
    stored.sort_by_key(|(k, p, _)| (*k, *p));
    infeasible.sort_by_key(|pair| (pair.speed_index, pair.path_id));

    let mut slices = vec![0..0; speed_grid.len()];
    let primitives: Vec<Primitive> = stored
        .into_iter()
        .enumerate()
        .map(|(id, (speed_index, path_id, trajectory))| Primitive { id, path_id, speed_index, trajectory })
        .collect();
    for (k, range) in slices.iter_mut().enumerate() {
        let start = primitives.partition_point(|p| p.speed_index < k);
        let end = primitives.partition_point(|p| p.speed_index <= k);
        if start == end {
            return Err(LibraryError::EmptySlice { speed_index: k, speed: speed_grid[k] });
        }
        *range = start..end;
    }
    Ok(PrimitiveLibrary { config, paths, speed_grid, primitives, slices, infeasible })
}

impl PrimitiveLibrary {
    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn primitive(&self, id: usize) -> &Primitive {
        &self.primitives[id]
    }

    pub fn num_slices(&self) -> usize {
        self.speed_grid.len()
    }

    /// Id range of the primitives starting at `speed_grid[speed_index]`.
    pub fn slice(&self, speed_index: usize) -> Option<Range<usize>> {
        self.slices.get(speed_index).cloned()
    }

    pub fn slice_primitives(&self, speed_index: usize) -> &[Primitive] {
        self.slice(speed_index).map_or(&[], |r| &self.primitives[r])
    }

    pub fn get(&self, path_id: usize, speed_index: usize) -> Option<&Primitive> {
        self.slice_primitives(speed_index).iter().find(|p| p.path_id == path_id)
    }

    pub fn speed_step(&self) -> f64 {
        self.config.speed_step
    }

    pub fn bounds(&self) -> &Bounds {
        &self.config.bounds
    }

    /// Nearest grid slice for a speed; exact halves round toward the slower slice.
    pub fn speed_index_for(&self, speed: f64) -> usize {
        let ratio = speed.max(0.0) / self.config.speed_step;
        let below = ratio.floor();
        let idx = if ratio - below > 0.5 + 1e-9 { below + 1.0 } else { below };
        (idx as usize).min(self.speed_grid.len() - 1)
    }

    /// Checksum over the library contents, binding derived artifacts to it.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.manifest_text().as_bytes());
        for p in &self.primitives {
            h.update((p.path_id as u64).to_le_bytes());
            h.update((p.speed_index as u64).to_le_bytes());
            for k in &p.trajectory.knots {
                h.update(k.t.to_le_bytes());
                for v in [k.position, k.velocity, k.acceleration] {
                    for c in v.iter() {
                        h.update(c.to_le_bytes());
                    }
                }
            }
        }
        h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    fn manifest_text(&self) -> String {
        let c = &self.config;
        let b = &c.bounds;
        let mut s = String::new();
        let radii: Vec<String> = c.paths.radii.iter().map(|r| r.to_string()).collect();
        let angles: Vec<String> = c.paths.start_angles.iter().map(|a| a.to_string()).collect();
        let vec3 = |v: &Vector3<f64>| format!("{} {} {}", v.x, v.y, v.z);
        let _ = writeln!(s, "radii {}", radii.join(" "));
        let _ = writeln!(s, "start_angles {}", angles.join(" "));
        let _ = writeln!(s, "rotation_step {}", c.paths.rotation_step);
        let _ = writeln!(s, "length {}", c.paths.length);
        let _ = writeln!(s, "path_samples {}", c.path_samples);
        let _ = writeln!(s, "stages {}", c.topp.stages);
        let _ = writeln!(s, "sample_step {}", c.topp.sample_step);
        let _ = writeln!(s, "speed_step {}", c.speed_step);
        let _ = writeln!(s, "v_min {}", vec3(&b.v_min));
        let _ = writeln!(s, "v_max {}", vec3(&b.v_max));
        let _ = writeln!(s, "a_min {}", vec3(&b.a_min));
        let _ = writeln!(s, "a_max {}", vec3(&b.a_max));
        let _ = writeln!(s, "v_norm {}", b.v_norm);
        let _ = writeln!(s, "paths {}", self.paths.len());
        let _ = writeln!(s, "slices {}", self.speed_grid.len());
        let _ = writeln!(s, "primitives {}", self.primitives.len());
        let _ = writeln!(s, "infeasible {}", self.infeasible.len());
        for pair in &self.infeasible {
            let _ = writeln!(s, "pair {} {} {}", pair.path_id, pair.speed_index, pair.reason.replace('\n', " "));
        }
        s
    }

    /// Text encoding; see [`PrimitiveLibrary::from_bytes`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = String::with_capacity(self.primitives.iter().map(|p| p.trajectory.knots.len() * 150).sum::<usize>() + 4096);
        s.push_str(LIBRARY_HEADER);
        s.push('\n');
        s.push_str("manifest\n");
        s.push_str(&self.manifest_text());
        s.push_str("end_manifest\n");
        for p in &self.primitives {
            let _ = writeln!(s, "primitive {} {} {}", p.path_id, p.speed_index, p.trajectory.knots.len());
            for k in &p.trajectory.knots {
                let _ = write!(s, "{:.8e}", k.t);
                for v in [k.position, k.velocity, k.acceleration] {
                    for c in v.iter() {
                        let _ = write!(s, " {c:.8e}");
                    }
                }
                s.push('\n');
            }
        }
        s.push_str("end\n");
        s.into_bytes()
    }

    /// Parses a library file and re-validates every primitive.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LibraryError> {
        let text = std::str::from_utf8(bytes).map_err(|e| LibraryError::Parse {
            offset: e.valid_up_to(),
            message: "invalid utf-8".into(),
        })?;
        let mut lines = Lines::new(text);
        let (off, header) = lines.next_line()?;
        if header != LIBRARY_HEADER {
            if header.is_empty() && off == 0 && text.is_empty() {
                return Err(LibraryError::Parse { offset: 0, message: "empty input".into() });
            }
            return Err(LibraryError::Version { found: header.to_string() });
        }
        lines.expect_exact("manifest")?;
        let radii = lines.field("radii")?;
        let radii = radii
            .1
            .split_whitespace()
            .map(|t| parse_f64(t, radii.0).map(Radius::from))
            .collect::<Result<Vec<_>, _>>()?;
        let start_angles = lines.field_f64s("start_angles")?;
        let rotation_step = lines.field_f64("rotation_step")?;
        let length = lines.field_f64("length")?;
        let path_samples = lines.field_usize("path_samples")?;
        let stages = lines.field_usize("stages")?;
        let sample_step = lines.field_f64("sample_step")?;
        let speed_step = lines.field_f64("speed_step")?;
        let v_min = lines.field_vec3("v_min")?;
        let v_max = lines.field_vec3("v_max")?;
        let a_min = lines.field_vec3("a_min")?;
        let a_max = lines.field_vec3("a_max")?;
        let v_norm = lines.field_f64("v_norm")?;
        let (paths_off, n_paths) = (lines.offset(), lines.field_usize("paths")?);
        let n_slices = lines.field_usize("slices")?;
        let n_primitives = lines.field_usize("primitives")?;
        let n_infeasible = lines.field_usize("infeasible")?;

        let config = LibraryConfig {
            paths: PathLibrarySpec { radii, start_angles, rotation_step, length },
            path_samples,
            bounds: Bounds { v_min, v_max, a_min, a_max, v_norm },
            speed_step,
            topp: ToppOptions { stages, sample_step },
        };
        let paths = build_path_library(&config.paths, config.path_samples)
            .map_err(|e| LibraryError::Parse { offset: paths_off, message: e.to_string() })?;
        if paths.len() != n_paths {
            return Err(LibraryError::Parse { offset: paths_off, message: format!("{n_paths} paths declared, config yields {}", paths.len()) });
        }
        let speed_grid = config.speed_grid().map_err(|e| LibraryError::Parse { offset: paths_off, message: e.to_string() })?;
        if speed_grid.len() != n_slices {
            return Err(LibraryError::Parse { offset: paths_off, message: format!("{n_slices} slices declared, config yields {}", speed_grid.len()) });
        }

        let mut infeasible = Vec::with_capacity(n_infeasible);
        for _ in 0..n_infeasible {
            let (off, rest) = lines.field("pair")?;
            let mut it = rest.splitn(3, ' ');
            let path_id = parse_usize(it.next().unwrap_or(""), off)?;
            let speed_index = parse_usize(it.next().unwrap_or(""), off)?;
            let reason = it.next().unwrap_or("").to_string();
            infeasible.push(InfeasiblePair { path_id, speed_index, reason });
        }
        lines.expect_exact("end_manifest")?;

        let mut stored = Vec::with_capacity(n_primitives);
        let mut last_key = None;
        for _ in 0..n_primitives {
            let (off, rest) = lines.field("primitive")?;
            let nums: Vec<&str> = rest.split(' ').collect();
            if nums.len() != 3 {
                return Err(LibraryError::Parse { offset: off, message: "primitive header needs 3 fields".into() });
            }
            let path_id = parse_usize(nums[0], off)?;
            let speed_index = parse_usize(nums[1], off)?;
            let n_knots = parse_usize(nums[2], off)?;
            if path_id >= paths.len() || speed_index >= speed_grid.len() || n_knots == 0 {
                return Err(LibraryError::Parse { offset: off, message: "primitive key out of range".into() });
            }
            if last_key.is_some_and(|k| k >= (speed_index, path_id)) {
                return Err(LibraryError::Parse { offset: off, message: "primitives out of order".into() });
            }
            last_key = Some((speed_index, path_id));
            let mut knots = Vec::with_capacity(n_knots);
            for _ in 0..n_knots {
                let (off, row) = lines.next_line()?;
                let mut vals = [0.0f64; 10];
                let mut count = 0;
                for tok in row.split(' ') {
                    if count == 10 {
                        count += 1;
                        break;
                    }
                    vals[count] = parse_f64(tok, off)?;
                    count += 1;
                }
                if count != 10 {
                    return Err(LibraryError::Parse { offset: off, message: "knot row needs 10 values".into() });
                }
                knots.push(TrajectoryKnot {
                    t: vals[0],
                    position: Vector3::new(vals[1], vals[2], vals[3]),
                    velocity: Vector3::new(vals[4], vals[5], vals[6]),
                    acceleration: Vector3::new(vals[7], vals[8], vals[9]),
                });
            }
            let trajectory = Trajectory { path_id, v_start: speed_grid[speed_index], v_end: 0.0, knots };
            validate_primitive(&trajectory, &config.bounds, speed_index)?;
            stored.push((speed_index, path_id, trajectory));
        }
        lines.expect_exact("end")?;
        if let Some((off, _)) = lines.peek_nonempty() {
            return Err(LibraryError::Parse { offset: off, message: "trailing data".into() });
        }
        assemble(config, paths, speed_grid, stored, infeasible)
    }
}

fn validate_primitive(traj: &Trajectory, bounds: &Bounds, speed_index: usize) -> Result<(), LibraryError> {
    let invalid = |message: String| LibraryError::Invalid { path_id: traj.path_id, speed_index, message };
    let first = traj.start();
    if first.t != 0.0 {
        return Err(invalid("first knot time is not 0".into()));
    }
    if !traj.knots.windows(2).all(|w| w[1].t > w[0].t) {
        return Err(invalid("knot times not strictly increasing".into()));
    }
    if first.position.norm() > 1e-6 {
        return Err(invalid("does not start at the origin".into()));
    }
    let v0 = first.velocity;
    if (v0.norm() - traj.v_start).abs() > 1e-6 || v0.y.abs() > 1e-6 || v0.z.abs() > 1e-6 || v0.x < -1e-6 {
        return Err(invalid("start velocity is not the slice speed along +x".into()));
    }
    if traj.end().velocity.norm() > 1e-6 {
        return Err(invalid("does not end at rest".into()));
    }
    traj.check_feasible(bounds, FEASIBILITY_SLACK).map_err(invalid)
}

pub(crate) fn parse_f64(tok: &str, offset: usize) -> Result<f64, LibraryError> {
    tok.parse().map_err(|_| LibraryError::Parse { offset, message: format!("bad number {tok:?}") })
}

pub(crate) fn parse_usize(tok: &str, offset: usize) -> Result<usize, LibraryError> {
    tok.parse().map_err(|_| LibraryError::Parse { offset, message: format!("bad integer {tok:?}") })
}

/// Line reader tracking byte offsets for error reporting.
pub(crate) struct Lines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn next_line(&mut self) -> Result<(usize, &'a str), LibraryError> {
        let start = self.pos;
        if start >= self.text.len() {
            return Err(LibraryError::Parse { offset: start, message: "unexpected end of input".into() });
        }
        let rest = &self.text[start..];
        let (line, consumed) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += consumed;
        Ok((start, line))
    }

    pub(crate) fn peek_nonempty(&self) -> Option<(usize, &'a str)> {
        let rest = &self.text[self.pos..];
        (!rest.trim().is_empty()).then_some((self.pos, rest))
    }

    pub(crate) fn expect_exact(&mut self, want: &str) -> Result<(), LibraryError> {
        let (off, line) = self.next_line()?;
        if line != want {
            return Err(LibraryError::Parse { offset: off, message: format!("expected {want:?}, found {line:?}") });
        }
        Ok(())
    }

    /// Reads a `key value…` line and returns the value part.
    pub(crate) fn field(&mut self, key: &str) -> Result<(usize, &'a str), LibraryError> {
        let (off, line) = self.next_line()?;
        match line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok((off, rest)),
            None if line == key => Ok((off, "")),
            None => Err(LibraryError::Parse { offset: off, message: format!("expected field {key:?}, found {line:?}") }),
        }
    }

    pub(crate) fn field_f64(&mut self, key: &str) -> Result<f64, LibraryError> {
        let (off, v) = self.field(key)?;
        parse_f64(v, off)
    }

    pub(crate) fn field_usize(&mut self, key: &str) -> Result<usize, LibraryError> {
        let (off, v) = self.field(key)?;
        parse_usize(v, off)
    }

    pub(crate) fn field_f64s(&mut self, key: &str) -> Result<Vec<f64>, LibraryError> {
        let (off, v) = self.field(key)?;
        v.split_whitespace().map(|t| parse_f64(t, off)).collect()
    }

    pub(crate) fn field_vec3(&mut self, key: &str) -> Result<Vector3<f64>, LibraryError> {
        let off = self.pos;
        let v = self.field_f64s(key)?;
        if v.len() != 3 {
            return Err(LibraryError::Parse { offset: off, message: format!("{key} needs 3 values") });
        }
        Ok(Vector3::new(v[0], v[1], v[2]))
    }
}
