//! Reachability map: a voxelized index from wrist-center positions (in the
//! arm-base frame) to the sampled non-wrist arm-joint states that reach
//! them, together with the lower-arm-link orientation each sample produces.
//!
//! Cells overlap: extent `cell_size` placed at `cell_stride ≤ cell_size`,
//! so a point is covered by several cells and a radius query only has to
//! visit the cells whose extent intersects the query ball. Samples are kept
//! once in a flat list; cells store indices into it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::pose::{quat_wxyz_to_rotation, Pose};

const MAGIC: &[u8; 4] = b"RMAP";
const FORMAT_VERSION: u32 = 1;

/// One sampled arm posture.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSample {
    /// Values of the non-wrist arm joints, in chain order.
    pub q_partial: Vec<f64>,
    /// Orientation of the lower-arm link in the arm-base frame, stored as a
    /// canonical unit quaternion `(w, x, y, z)` so that file round trips are
    /// bit-identical.
    pub lower_arm_quat: [f64; 4],
    /// Wrist-center position in the arm-base frame (meters).
    pub wrist_center: Vector3<f64>,
}

impl MapSample {
    pub fn lower_arm_rotation(&self) -> Matrix3<f64> {
        quat_wxyz_to_rotation(self.lower_arm_quat)
    }
}

/// Voxel grid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    /// Cell extent per axis (meters).
    pub cell_size: f64,
    /// Distance between cell anchors (meters); `stride ≤ size` overlaps.
    pub cell_stride: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        // 5 cm cells at 2.5 cm stride.
        Self {
            cell_size: 0.05,
            cell_stride: 0.025,
        }
    }
}

/// Build-time options.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub grid: GridParams,
    /// Optional cap on samples kept per cell: the greedy best-spread subset
    /// in joint space. Off by default.
    pub prune_per_cell: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            grid: GridParams::default(),
            prune_per_cell: None,
        }
    }
}

/// Build metadata carried in the map file.
#[derive(Debug, Clone, PartialEq)]
pub struct MapMetadata {
    /// Chain+arm hash the map was built against.
    pub chain_arm_hash: u64,
    pub arm: String,
    /// Sampling interval per non-wrist arm joint.
    pub intervals: Vec<f64>,
    /// Values the wrist joints were held at during the build.
    pub wrist_reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityMap {
    grid: GridParams,
    /// Axis-aligned bounds of all wrist centers; also the cell-index origin.
    bounds_min: Vector3<f64>,
    bounds_max: Vector3<f64>,
    samples: Vec<MapSample>,
    cells: BTreeMap<[i64; 3], Vec<u32>>,
    meta: MapMetadata,
}

/// Inclusive index range of cells containing coordinate `v` along one axis.
///
/// Cell `i` spans `[origin + i·stride, origin + i·stride + size)`,
/// closed-open.
fn covering_range(v: f64, origin: f64, grid: &GridParams) -> (i64, i64) {
    let lo = ((v - origin - grid.cell_size) / grid.cell_stride).floor() as i64 + 1;
    let hi = ((v - origin) / grid.cell_stride).floor() as i64;
    (lo, hi)
}

fn covering_cells(p: &Vector3<f64>, origin: &Vector3<f64>, grid: &GridParams) -> Vec<[i64; 3]> {
    let (x0, x1) = covering_range(p.x, origin.x, grid);
    let (y0, y1) = covering_range(p.y, origin.y, grid);
    let (z0, z1) = covering_range(p.z, origin.z, grid);
    let mut out = Vec::new();
    for i in x0..=x1 {
        for j in y0..=y1 {
            for k in z0..=z1 {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Number of lattice values for a joint range at a given interval:
/// `⌊range/interval⌋ + 1`, with a guard against `range/interval` rounding
/// just below an integer.
pub fn lattice_count(lo: f64, hi: f64, interval: f64) -> usize {
    ((hi - lo) / interval + 1e-9).floor() as usize + 1
}

/// Builds the map by Cartesian-product sampling of the arm's non-wrist
/// joints at the given per-joint intervals. Wrist joints are held at the
/// midpoint of their limits. Deterministic: the sample list and the
/// serialized bytes do not depend on the rayon thread count.
pub fn build_map(
    chain: &KinematicChain,
    arm: &str,
    intervals: &[f64],
    options: &BuildOptions,
) -> Result<ReachabilityMap> {
    let info = chain.arm(arm)?;
    if options.grid.cell_stride > options.grid.cell_size {
        return Err(Error::GridConfig(format!(
            "cell stride {} exceeds cell size {}",
            options.grid.cell_stride, options.grid.cell_size
        )));
    }
    if !(options.grid.cell_stride > 0.0) {
        return Err(Error::GridConfig("cell stride must be > 0".into()));
    }
    if info.non_wrist_movable.is_empty() {
        return Err(Error::GridConfig(format!(
            "arm `{arm}` has no non-wrist joints to sample"
        )));
    }
    if intervals.len() != info.non_wrist_movable.len() {
        return Err(Error::LengthMismatch {
            expected: info.non_wrist_movable.len(),
            got: intervals.len(),
        });
    }
    if intervals.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::GridConfig("sampling intervals must be > 0".into()));
    }

    // Lattice shape: per-joint value lists, endpoints at the low limit.
    let values: Vec<Vec<f64>> = info
        .non_wrist_movable
        .iter()
        .zip(intervals)
        .map(|(&m, &step)| {
            let [lo, hi] = chain.movable_joint(m).limits;
            (0..lattice_count(lo, hi, step))
                .map(|k| lo + k as f64 * step)
                .collect()
        })
        .collect();
    let total: usize = values.iter().map(Vec::len).product();

    // Base state: everything at its limit midpoint, including the wrist
    // reference values recorded in metadata.
    let base_state = chain.midpoint_state();
    let wrist_reference: Vec<f64> = info.wrist_movable.iter().map(|&m| base_state[m]).collect();

    let arm_ref = &*chain;
    let samples: Vec<MapSample> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut q = base_state.clone();
            let mut rem = flat;
            // Last joint varies fastest.
            for dim in (0..values.len()).rev() {
                let n = values[dim].len();
                q[info.non_wrist_movable[dim]] = values[dim][rem % n];
                rem /= n;
            }
            let arm_base = arm_ref
                .forward_kinematics(&q, &info.arm_base)
                .expect("validated frame");
            let arm_base_inv = arm_base.inverse();
            let lower = arm_base_inv.compose(
                &arm_ref
                    .forward_kinematics(&q, &info.lower_arm)
                    .expect("validated frame"),
            );
            let center = arm_ref
                .wrist_center_fk(&q, arm)
                .expect("validated frames");
            MapSample {
                q_partial: info
                    .non_wrist_movable
                    .iter()
                    .map(|&m| q[m])
                    .collect(),
                lower_arm_quat: Pose::from_rotation(lower.rotation).quaternion_wxyz(),
                wrist_center: center,
            }
        })
        .collect();

    let mut map = index_samples(
        samples,
        options,
        MapMetadata {
            chain_arm_hash: chain.arm_hash(arm)?,
            arm: arm.to_string(),
            intervals: intervals.to_vec(),
            wrist_reference,
        },
    );
    if let Some(k) = options.prune_per_cell {
        prune_cells(&mut map, k);
    }
    Ok(map)
}

fn index_samples(samples: Vec<MapSample>, options: &BuildOptions, meta: MapMetadata) -> ReachabilityMap {
    let mut bounds_min = Vector3::repeat(f64::INFINITY);
    let mut bounds_max = Vector3::repeat(f64::NEG_INFINITY);
    for s in &samples {
        bounds_min = bounds_min.inf(&s.wrist_center);
        bounds_max = bounds_max.sup(&s.wrist_center);
    }
    if samples.is_empty() {
        bounds_min = Vector3::zeros();
        bounds_max = Vector3::zeros();
    }
    let mut cells: BTreeMap<[i64; 3], Vec<u32>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        for cell in covering_cells(&s.wrist_center, &bounds_min, &options.grid) {
            cells.entry(cell).or_default().push(i as u32);
        }
    }
    ReachabilityMap {
        grid: options.grid,
        bounds_min,
        bounds_max,
        samples,
        cells,
        meta,
    }
}

/// Greedy best-spread pruning: keep up to `k` samples per cell, seeding with
/// the first inserted and then repeatedly adding the sample farthest (in
/// joint space) from the kept set. Unreferenced samples are compacted away.
fn prune_cells(map: &mut ReachabilityMap, k: usize) {
    for indices in map.cells.values_mut() {
        if indices.len() <= k {
            continue;
        }
        let mut kept: Vec<u32> = vec![indices[0]];
        let mut remaining: Vec<u32> = indices[1..].to_vec();
        while kept.len() < k && !remaining.is_empty() {
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .map(|(pos, &cand)| {
                    let d = kept
                        .iter()
                        .map(|&kc| {
                            map.samples[kc as usize]
                                .q_partial
                                .iter()
                                .zip(&map.samples[cand as usize].q_partial)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                        })
                        .fold(f64::INFINITY, f64::min);
                    (pos, d)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            kept.push(remaining.remove(pos));
        }
        kept.sort_unstable();
        *indices = kept;
    }
    // Compact: drop samples no cell references, remap indices.
    let mut used = vec![false; map.samples.len()];
    for indices in map.cells.values() {
        for &i in indices {
            used[i as usize] = true;
        }
    }
    let mut remap = vec![u32::MAX; map.samples.len()];
    let mut next = 0u32;
    let mut compacted = Vec::new();
    for (i, sample) in map.samples.drain(..).enumerate() {
        if used[i] {
            remap[i] = next;
            next += 1;
            compacted.push(sample);
        }
    }
    map.samples = compacted;
    for indices in map.cells.values_mut() {
        for i in indices.iter_mut() {
            *i = remap[*i as usize];
        }
    }
}

impl ReachabilityMap {
    pub fn grid(&self) -> GridParams {
        self.grid
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.bounds_min, self.bounds_max)
    }

    pub fn samples(&self) -> &[MapSample] {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn metadata(&self) -> &MapMetadata {
        &self.meta
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// All samples whose wrist center lies within `r` of `target_center`,
    /// deduplicated across overlapping cells and sorted by distance
    /// ascending (ties by insertion order). Indices pair each sample with
    /// its position in [`Self::samples`].
    pub fn query(&self, target_center: &Vector3<f64>, r: f64) -> Vec<(u32, &MapSample)> {
        if !(r >= 0.0) {
            return Vec::new();
        }
        // Visit every cell whose extent intersects the query ball; since a
        // sample is stored in all cells containing it, this cannot miss.
        let lo = target_center - Vector3::repeat(r);
        let hi = target_center + Vector3::repeat(r);
        let (x0, _) = covering_range(lo.x, self.bounds_min.x, &self.grid);
        let (_, x1) = covering_range(hi.x, self.bounds_min.x, &self.grid);
        let (y0, _) = covering_range(lo.y, self.bounds_min.y, &self.grid);
        let (_, y1) = covering_range(hi.y, self.bounds_min.y, &self.grid);
        let (z0, _) = covering_range(lo.z, self.bounds_min.z, &self.grid);
        let (_, z1) = covering_range(hi.z, self.bounds_min.z, &self.grid);

        let mut indices: Vec<u32> = Vec::new();
        for i in x0..=x1 {
            for j in y0..=y1 {
                for k in z0..=z1 {
                    if let Some(cell) = self.cells.get(&[i, j, k]) {
                        indices.extend_from_slice(cell);
                    }
                }
            }
        }
        indices.sort_unstable();
        indices.dedup();

        let mut hits: Vec<(f64, u32)> = indices
            .into_iter()
            .filter_map(|i| {
                let d = (self.samples[i as usize].wrist_center - target_center).norm();
                (d <= r).then_some((d, i))
            })
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter()
            .map(|(_, i)| (i, &self.samples[i as usize]))
            .collect()
    }

    // -- serialization -------------------------------------------------------

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut file)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        out.write_u64::<LittleEndian>(self.meta.chain_arm_hash)?;
        // Grid params: 3 doubles (size, stride, reserved).
        out.write_f64::<LittleEndian>(self.grid.cell_size)?;
        out.write_f64::<LittleEndian>(self.grid.cell_stride)?;
        out.write_f64::<LittleEndian>(0.0)?;
        for v in [&self.bounds_min, &self.bounds_max] {
            out.write_f64::<LittleEndian>(v.x)?;
            out.write_f64::<LittleEndian>(v.y)?;
            out.write_f64::<LittleEndian>(v.z)?;
        }
        out.write_u64::<LittleEndian>(self.samples.len() as u64)?;

        write_string(out, &self.meta.arm)?;
        out.write_u32::<LittleEndian>(self.meta.intervals.len() as u32)?;
        for &v in &self.meta.intervals {
            out.write_f64::<LittleEndian>(v)?;
        }
        out.write_u32::<LittleEndian>(self.meta.wrist_reference.len() as u32)?;
        for &v in &self.meta.wrist_reference {
            out.write_f64::<LittleEndian>(v)?;
        }

        // Cell index table.
        out.write_u64::<LittleEndian>(self.cells.len() as u64)?;
        for (key, indices) in &self.cells {
            for &c in key {
                out.write_i64::<LittleEndian>(c)?;
            }
            out.write_u32::<LittleEndian>(indices.len() as u32)?;
            for &i in indices {
                out.write_u32::<LittleEndian>(i)?;
            }
        }

        // Packed samples.
        let q_len = self.meta.intervals.len() as u32;
        for s in &self.samples {
            debug_assert_eq!(s.q_partial.len() as u32, q_len);
            for &v in &s.q_partial {
                out.write_f64::<LittleEndian>(v)?;
            }
            for &v in &s.lower_arm_quat {
                out.write_f64::<LittleEndian>(v)?;
            }
            out.write_f64::<LittleEndian>(s.wrist_center.x)?;
            out.write_f64::<LittleEndian>(s.wrist_center.y)?;
            out.write_f64::<LittleEndian>(s.wrist_center.z)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut file)
    }

    pub fn read<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::MapFormat("bad magic bytes (not a map file)".into()));
        }
        let version = input.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::MapFormat(format!(
                "unsupported map format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let chain_arm_hash = input.read_u64::<LittleEndian>()?;
        let cell_size = input.read_f64::<LittleEndian>()?;
        let cell_stride = input.read_f64::<LittleEndian>()?;
        let _reserved = input.read_f64::<LittleEndian>()?;
        let mut bounds = [0.0; 6];
        for v in &mut bounds {
            *v = input.read_f64::<LittleEndian>()?;
        }
        let sample_count = input.read_u64::<LittleEndian>()? as usize;

        let arm = read_string(input)?;
        let n_intervals = input.read_u32::<LittleEndian>()? as usize;
        let mut intervals = vec![0.0; n_intervals];
        for v in &mut intervals {
            *v = input.read_f64::<LittleEndian>()?;
        }
        let n_wrist = input.read_u32::<LittleEndian>()? as usize;
        let mut wrist_reference = vec![0.0; n_wrist];
        for v in &mut wrist_reference {
            *v = input.read_f64::<LittleEndian>()?;
        }

        let n_cells = input.read_u64::<LittleEndian>()? as usize;
        let mut cells = BTreeMap::new();
        for _ in 0..n_cells {
            let key = [
                input.read_i64::<LittleEndian>()?,
                input.read_i64::<LittleEndian>()?,
                input.read_i64::<LittleEndian>()?,
            ];
            let n = input.read_u32::<LittleEndian>()? as usize;
            let mut indices = vec![0u32; n];
            for i in &mut indices {
                *i = input.read_u32::<LittleEndian>()?;
                if *i as usize >= sample_count {
                    return Err(Error::MapFormat("cell index out of range".into()));
                }
            }
            cells.insert(key, indices);
        }

        let mut samples = Vec::with_capacity(sample_count);
        for _ in 0..sample_count {
            let mut q_partial = vec![0.0; n_intervals];
            for v in &mut q_partial {
                *v = input.read_f64::<LittleEndian>()?;
            }
            let mut quat = [0.0; 4];
            for v in &mut quat {
                *v = input.read_f64::<LittleEndian>()?;
            }
            let center = Vector3::new(
                input.read_f64::<LittleEndian>()?,
                input.read_f64::<LittleEndian>()?,
                input.read_f64::<LittleEndian>()?,
            );
            samples.push(MapSample {
                q_partial,
                lower_arm_quat: quat,
                wrist_center: center,
            });
        }

        Ok(ReachabilityMap {
            grid: GridParams {
                cell_size,
                cell_stride,
            },
            bounds_min: Vector3::new(bounds[0], bounds[1], bounds[2]),
            bounds_max: Vector3::new(bounds[3], bounds[4], bounds[5]),
            samples,
            cells,
            meta: MapMetadata {
                chain_arm_hash,
                arm,
                intervals,
                wrist_reference,
            },
        })
    }

    /// Whether a sample sits inside the extent of a cell it is indexed
    /// under. Exposed so tests can re-verify the indexing invariant.
    pub fn cell_contains(&self, cell: [i64; 3], p: &Vector3<f64>) -> bool {
        (0..3).all(|a| {
            let lo = self.bounds_min[a] + cell[a] as f64 * self.grid.cell_stride;
            p[a] >= lo && p[a] < lo + self.grid.cell_size
        })
    }

    /// Iterates `(cell, sample index)` pairs, for invariant checks.
    pub fn cell_entries(&self) -> impl Iterator<Item = ([i64; 3], u32)> + '_ {
        self.cells
            .iter()
            .flat_map(|(k, v)| v.iter().map(move |&i| (*k, i)))
    }
}

fn write_string<W: Write>(out: &mut W, s: &str) -> Result<()> {
    out.write_u32::<LittleEndian>(s.len() as u32)?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(input: &mut R) -> Result<String> {
    let len = input.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 20 {
        return Err(Error::MapFormat("unreasonable string length".into()));
    }
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::MapFormat("non-utf8 string".into()))
}
