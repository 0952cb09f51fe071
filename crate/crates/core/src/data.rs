//! Pose datasets: the `MGTP` binary container, a synthetic generator and
//! input standardization.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "MGTP" | u32 version = 1 | u32 N | u32 T | u32 count
//! u32 len | unit (UTF-8)
//! u32 len | skeleton document (UTF-8 TOML)
//! count × { u32 len | action (UTF-8) | N·2·T f32 input | N·3 f32 target }
//! ```
//!
//! Inputs are stored joint-major, then coordinate, then frame, which is the
//! row-major order of an `N×2×T` tensor.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::DataError;
use crate::skeleton::{SkeletonGraph, HUMAN36M_JOINTS};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MGTP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `N×2×T` sequence of 2D joint positions.
    pub input: Tensor,
    /// `N×3` root-relative 3D pose.
    pub target: Tensor,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseDataset {
    skeleton: SkeletonGraph,
    unit: String,
    frames: usize,
    samples: Vec<Sample>,
}

impl PoseDataset {
    /// Validates every sample against `(N, T)` and root-centres the targets.
    pub fn new(
        skeleton: SkeletonGraph,
        unit: impl Into<String>,
        frames: usize,
        mut samples: Vec<Sample>,
    ) -> Result<Self, DataError> {
        skeleton.ensure_connected()?;
        if frames == 0 {
            return Err(DataError::Header {
                offset: 12,
                reason: "frame count must be positive".into(),
            });
        }
        let n = skeleton.num_joints();
        let root = skeleton.root();
        for (index, s) in samples.iter_mut().enumerate() {
            if s.input.shape() != [n, 2, frames] {
                return Err(DataError::Sample {
                    index,
                    reason: format!("input shape {:?}, expected [{n}, 2, {frames}]", s.input.shape()),
                });
            }
            if s.target.shape() != [n, 3] {
                return Err(DataError::Sample {
                    index,
                    reason: format!("target shape {:?}, expected [{n}, 3]", s.target.shape()),
                });
            }
            if !s.input.is_finite() || !s.target.is_finite() {
                return Err(DataError::Sample {
                    index,
                    reason: "non-finite coordinate".into(),
                });
            }
            root_center(&mut s.target, root);
        }
        Ok(Self {
            skeleton,
            unit: unit.into(),
            frames,
            samples,
        })
    }

    pub fn skeleton(&self) -> &SkeletonGraph {
        &self.skeleton
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn joints(&self) -> usize {
        self.skeleton.num_joints()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> Vec<Tensor> {
        self.samples.iter().map(|s| s.input.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Tensor> {
        self.samples.iter().map(|s| s.target.clone()).collect()
    }

    pub fn actions(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.action.clone()).collect()
    }

    /// Keeps only the last `frames` frames of every input sequence.
    pub fn last_frames(&self, frames: usize) -> Result<Self, DataError> {
        if frames == 0 || frames > self.frames {
            return Err(DataError::Header {
                offset: 12,
                reason: format!("cannot take the last {frames} of {} frames", self.frames),
            });
        }
        let n = self.joints();
        let start = self.frames - frames;
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut data = Vec::with_capacity(n * 2 * frames);
                for row in s.input.data().chunks(self.frames) {
                    data.extend_from_slice(&row[start..]);
                }
                Sample {
                    input: Tensor::new(&[n, 2, frames], data).expect("sizes agree"),
                    target: s.target.clone(),
                    action: s.action.clone(),
                }
            })
            .collect();
        Self::new(self.skeleton.clone(), self.unit.clone(), frames, samples)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.joints();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        for v in [FORMAT_VERSION, n as u32, self.frames as u32, self.samples.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_str(&mut out, &self.unit);
        put_str(&mut out, &self.skeleton.to_toml_string());
        for s in &self.samples {
            put_str(&mut out, &s.action);
            for &x in s.input.data().iter().chain(s.target.data()) {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| header_eof(bytes.len()))?;
        if magic != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(magic);
            return Err(DataError::BadMagic { found });
        }
        let version = r.u32().map_err(|_| header_eof(bytes.len()))?;
        if version != FORMAT_VERSION {
            return Err(DataError::Version { found: version });
        }
        let n = r.u32().map_err(|_| header_eof(bytes.len()))? as usize;
        let t_offset = r.pos;
        let t = r.u32().map_err(|_| header_eof(bytes.len()))? as usize;
        let count = r.u32().map_err(|_| header_eof(bytes.len()))? as usize;
        if n == 0 {
            return Err(DataError::Header {
                offset: 8,
                reason: "joint count is zero".into(),
            });
        }
        if t == 0 {
            return Err(DataError::Header {
                offset: t_offset,
                reason: "frame count is zero".into(),
            });
        }
        let unit = r.string("unit").map_err(|e| e.in_header(bytes.len()))?;
        let skeleton_text = r.string("skeleton").map_err(|e| e.in_header(bytes.len()))?;
        let skeleton = SkeletonGraph::from_toml_str(&skeleton_text)?;
        if skeleton.num_joints() != n {
            return Err(DataError::JointCount {
                header: n,
                skeleton: skeleton.num_joints(),
            });
        }
        let root = skeleton.root();
        let mut samples = Vec::new();
        for record in 0..count {
            let truncated = |offset| DataError::Truncated { record, offset };
            let action = r.string("action label").map_err(|e| match e {
                ReadError::Eof(offset) => truncated(offset),
                ReadError::Utf8 { field, offset } => DataError::Utf8 { field, offset },
            })?;
            let mut input = Vec::with_capacity(n * 2 * t);
            let mut target = Vec::with_capacity(n * 3);
            for i in 0..n * 2 * t + n * 3 {
                let offset = r.pos;
                let v = r.f32().map_err(|_| truncated(offset))?;
                if !v.is_finite() {
                    return Err(DataError::NonFinite { record, offset });
                }
                if i < n * 2 * t {
                    input.push(f64::from(v));
                } else {
                    target.push(f64::from(v));
                }
            }
            let mut target = Tensor::new(&[n, 3], target).expect("sized above");
            root_center(&mut target, root);
            samples.push(Sample {
                input: Tensor::new(&[n, 2, t], input).expect("sized above"),
                target,
                action,
            });
        }
        if r.pos != bytes.len() {
            return Err(DataError::TrailingBytes {
                offset: r.pos,
                count: bytes.len() - r.pos,
            });
        }
        Self::new(skeleton, unit, t, samples)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn root_center(target: &mut Tensor, root: usize) {
    let r: Vec<f64> = target.data()[3 * root..3 * root + 3].to_vec();
    for p in target.data_mut().chunks_mut(3) {
        for (x, o) in p.iter_mut().zip(&r) {
            *x -= o;
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn header_eof(len: usize) -> DataError {
    DataError::Header {
        offset: len,
        reason: "unexpected end of file in header".into(),
    }
}

enum ReadError {
    Eof(usize),
    Utf8 { field: &'static str, offset: usize },
}

impl ReadError {
    fn in_header(self, len: usize) -> DataError {
        match self {
            ReadError::Eof(_) => header_eof(len),
            ReadError::Utf8 { field, offset } => DataError::Utf8 { field, offset },
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], ReadError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ReadError::Eof(self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ReadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, ReadError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self, field: &'static str) -> Result<String, ReadError> {
        let len = self.u32()? as usize;
        let offset = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ReadError::Utf8 { field, offset })
    }
}

/// Parameters of the synthetic pose generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub frames: usize,
    pub seed: u64,
    /// Standard deviation of Gaussian noise added to the 2D inputs.
    pub noise_sigma: f64,
    /// Scale of the per-joint sinusoidal trajectories.
    pub amplitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 32,
            frames: 3,
            seed: 0,
            noise_sigma: 0.0,
            amplitude: 1.0,
        }
    }
}

/// Unit of synthesized coordinates.
pub const SYNTH_UNIT: &str = "m";
const SYNTH_LABEL: &str = "synthetic";
const SYNTH_BONE_LENGTH: f64 = 0.25;
/// Upper bound of the pitch and yaw offsets, in radians.
const SYNTH_MAX_FLEX: f64 = 1.0;
/// Bound of the roll offset, in radians.
const SYNTH_MAX_ROLL: f64 = 0.3;
/// Upper bound of the per-angle swing at unit amplitude, in radians.
const SYNTH_SWING: f64 = 0.3;

/// Canonical standing pose (metres, y up) for the built-in Human3.6M joints.
const HUMAN36M_REST: [[f64; 3]; 17] = [
    [0.0, 0.0, 0.0],
    [-0.13, 0.0, 0.0],
    [-0.13, -0.45, 0.02],
    [-0.13, -0.88, -0.02],
    [0.13, 0.0, 0.0],
    [0.13, -0.45, 0.02],
    [0.13, -0.88, -0.02],
    [0.0, 0.23, 0.0],
    [0.0, 0.48, 0.02],
    [0.0, 0.58, 0.03],
    [0.0, 0.70, 0.0],
    [0.16, 0.45, 0.0],
    [0.42, 0.45, 0.0],
    [0.66, 0.45, 0.0],
    [-0.16, 0.45, 0.0],
    [-0.42, 0.45, 0.0],
    [-0.66, 0.45, 0.0],
];

/// Rest pose for `skeleton`: the standing pose for Human3.6M, otherwise a
/// breadth-first layout with fixed-length bones in pseudo-random directions
/// that depend only on the skeleton.
pub fn rest_pose(skeleton: &SkeletonGraph) -> Vec<[f64; 3]> {
    let is_h36m = skeleton.num_joints() == HUMAN36M_JOINTS.len()
        && skeleton.joint_names().iter().zip(HUMAN36M_JOINTS).all(|(a, b)| a == b)
        && skeleton.root() == 0;
    if is_h36m {
        return HUMAN36M_REST.to_vec();
    }
    let n = skeleton.num_joints();
    let nbrs = skeleton.neighbors();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut pose = vec![[0.0; 3]; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([skeleton.root()]);
    seen[skeleton.root()] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &nbrs[u] {
            if !seen[v] {
                seen[v] = true;
                let dir = unit_vector(&mut rng);
                for c in 0..3 {
                    pose[v][c] = pose[u][c] + SYNTH_BONE_LENGTH * dir[c];
                }
                queue.push_back(v);
            }
        }
    }
    pose
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Generates root-relative poses by forward kinematics on the rest pose.
///
/// Every bone keeps its rest length and is rotated by its own pitch, yaw and
/// roll angles. Each angle follows a seeded sinusoid around a seeded offset.
/// Pitch and yaw are kept to one side of the rest direction, as joint limits
/// do, so depth is recoverable from foreshortening. The 2D input is the
/// orthographic `(x, y)` projection of each frame and the target is the last
/// frame in 3D. Stored values are rounded to `f32` so the dataset survives a
/// save/load round trip unchanged.
pub fn synthesize(skeleton: &SkeletonGraph, cfg: &SynthConfig) -> PoseDataset {
    let n = skeleton.num_joints();
    let t = cfg.frames.max(1);
    let rest = rest_pose(skeleton);
    let order = bfs_parents(skeleton);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.abs()).expect("finite sigma");
    let mut samples = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        // (offset, amplitude, angular frequency, phase) for pitch, yaw, roll
        let angles: Vec<[(f64, f64, f64, f64); 3]> = (0..n)
            .map(|_| {
                std::array::from_fn(|axis| {
                    let offset = if axis < 2 {
                        rng.random_range(0.0..SYNTH_MAX_FLEX)
                    } else {
                        rng.random_range(-SYNTH_MAX_ROLL..SYNTH_MAX_ROLL)
                    };
                    (
                        offset,
                        cfg.amplitude * rng.random_range(0.0..SYNTH_SWING),
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.0..TAU),
                    )
                })
            })
            .collect();
        let frames: Vec<Vec<[f64; 3]>> = (0..t)
            .map(|f| {
                let mut pose = vec![[0.0; 3]; n];
                for &(v, u) in &order {
                    let [a, b, c] = angles[v].map(|(o, amp, w, ph)| o + amp * (w * f as f64 + ph).sin());
                    let bone: [f64; 3] = std::array::from_fn(|k| rest[v][k] - rest[u][k]);
                    let r = rotate(bone, a, b, c);
                    pose[v] = std::array::from_fn(|k| pose[u][k] + r[k]);
                }
                pose
            })
            .collect();
        let mut input = vec![0.0; n * 2 * t];
        for j in 0..n {
            for k in 0..2 {
                for (f, frame) in frames.iter().enumerate() {
                    let jitter = if cfg.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    input[(j * 2 + k) * t + f] = round_f32(frame[j][k] + jitter);
                }
            }
        }
        let target = frames[t - 1].iter().flat_map(|p| p.map(round_f32)).collect();
        samples.push(Sample {
            input: Tensor::new(&[n, 2, t], input).expect("sized above"),
            target: Tensor::new(&[n, 3], target).expect("sized above"),
            action: SYNTH_LABEL.to_string(),
        });
    }
    PoseDataset::new(skeleton.clone(), SYNTH_UNIT, t, samples).expect("generated samples are valid")
}

/// `(child, parent)` pairs in breadth-first order from the root.
fn bfs_parents(skeleton: &SkeletonGraph) -> Vec<(usize, usize)> {
    let nbrs = skeleton.neighbors();
    let mut seen = vec![false; skeleton.num_joints()];
    let mut queue = std::collections::VecDeque::from([skeleton.root()]);
    seen[skeleton.root()] = true;
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        for &v in &nbrs[u] {
            if !seen[v] {
                seen[v] = true;
                out.push((v, u));
                queue.push_back(v);
            }
        }
    }
    out
}

/// `R_z(roll) · R_y(yaw) · R_x(pitch) · v`.
fn rotate(v: [f64; 3], pitch: f64, yaw: f64, roll: f64) -> [f64; 3] {
    let (sa, ca) = pitch.sin_cos();
    let (sb, cb) = yaw.sin_cos();
    let (sc, cc) = roll.sin_cos();
    let x = [v[0], ca * v[1] - sa * v[2], sa * v[1] + ca * v[2]];
    let y = [cb * x[0] + sb * x[2], x[1], -sb * x[0] + cb * x[2]];
    [cc * y[0] - sc * y[1], sc * y[0] + cc * y[1], y[2]]
}

fn round_f32(x: f64) -> f64 {
    f64::from(x as f32)
}

/// Per joint-and-coordinate mean and standard deviation of 2D inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    /// `N·2` means, indexed `joint * 2 + coordinate`.
    pub mean: Vec<f64>,
    /// `N·2` population standard deviations.
    pub std: Vec<f64>,
}

const MIN_STD: f64 = 1e-12;

impl Standardizer {
    /// Statistics over every frame of every sample in `ds`.
    pub fn fit(ds: &PoseDataset) -> Result<Self, DataError> {
        if ds.is_empty() {
            return Err(DataError::Sample {
                index: 0,
                reason: "cannot fit a standardizer on an empty dataset".into(),
            });
        }
        let t = ds.frames();
        let rows = ds.joints() * 2;
        let count = (ds.len() * t) as f64;
        let mut mean = vec![0.0; rows];
        for s in ds.samples() {
            for (m, row) in mean.iter_mut().zip(s.input.data().chunks(t)) {
                *m += row.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; rows];
        for s in ds.samples() {
            for ((v, m), row) in var.iter_mut().zip(&mean).zip(s.input.data().chunks(t)) {
                *v += row.iter().map(|x| (x - m).powi(2)).sum::<f64>();
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
        let flat: Vec<usize> = (0..rows).filter(|&i| std[i] < MIN_STD).collect();
        if !flat.is_empty() {
            log::warn!(
                "{} input coordinate(s) have zero variance and are left unscaled: {:?}",
                flat.len(),
                flat.iter()
                    .map(|i| format!("{}.{}", ds.skeleton().joint_names()[i / 2], ["x", "y"][i % 2]))
                    .collect::<Vec<_>>()
            );
        }
        Ok(Self { mean, std })
    }

    pub fn identity(joints: usize) -> Self {
        Self {
            mean: vec![0.0; joints * 2],
            std: vec![1.0; joints * 2],
        }
    }

    fn divisor(&self, i: usize) -> f64 {
        if self.std[i] < MIN_STD {
            1.0
        } else {
            self.std[i]
        }
    }

    fn check(&self, input: &Tensor) -> Result<usize, DataError> {
        match input.shape() {
            [n, 2, t] if n * 2 == self.mean.len() => Ok(*t),
            s => Err(DataError::Sample {
                index: 0,
                reason: format!("input shape {s:?} does not match standardizer over {} joints", self.mean.len() / 2),
            }),
        }
    }

    pub fn apply_input(&self, input: &Tensor) -> Result<Tensor, DataError> {
        let t = self.check(input)?;
        let mut out = input.clone();
        for (i, row) in out.data_mut().chunks_mut(t).enumerate() {
            let d = self.divisor(i);
            row.iter_mut().for_each(|x| *x = (*x - self.mean[i]) / d);
        }
        Ok(out)
    }

    pub fn invert_input(&self, input: &Tensor) -> Result<Tensor, DataError> {
        let t = self.check(input)?;
        let mut out = input.clone();
        for (i, row) in out.data_mut().chunks_mut(t).enumerate() {
            let d = self.divisor(i);
            row.iter_mut().for_each(|x| *x = *x * d + self.mean[i]);
        }
        Ok(out)
    }

    /// Standardizes every input of `ds`; targets are untouched.
    pub fn apply(&self, ds: &PoseDataset) -> Result<PoseDataset, DataError> {
        self.map(ds, Self::apply_input)
    }

    pub fn invert(&self, ds: &PoseDataset) -> Result<PoseDataset, DataError> {
        self.map(ds, Self::invert_input)
    }

    fn map(
        &self,
        ds: &PoseDataset,
        f: impl Fn(&Self, &Tensor) -> Result<Tensor, DataError>,
    ) -> Result<PoseDataset, DataError> {
        let samples = ds
            .samples()
            .iter()
            .map(|s| {
                Ok(Sample {
                    input: f(self, &s.input)?,
                    target: s.target.clone(),
                    action: s.action.clone(),
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        PoseDataset::new(ds.skeleton().clone(), ds.unit(), ds.frames(), samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PoseDataset {
        synthesize(
            &SkeletonGraph::human36m(),
            &SynthConfig {
                count: 4,
                frames: 3,
                seed: 9,
                noise_sigma: 0.01,
                amplitude: 1.0,
            },
        )
    }

    #[test]
    fn roundtrip_is_exact() {
        let ds = small();
        let bytes = ds.to_bytes();
        let back = PoseDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn targets_are_root_relative() {
        let ds = small();
        for s in ds.samples() {
            assert_eq!(&s.target.data()[0..3], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn single_frame_projection_matches_target() {
        let ds = synthesize(
            &SkeletonGraph::human36m(),
            &SynthConfig {
                count: 3,
                frames: 1,
                seed: 2,
                noise_sigma: 0.0,
                amplitude: 1.0,
            },
        );
        for s in ds.samples() {
            for j in 0..17 {
                assert_eq!(s.input.at(&[j, 0, 0]), s.target.at(&[j, 0]));
                assert_eq!(s.input.at(&[j, 1, 0]), s.target.at(&[j, 1]));
            }
        }
    }

    #[test]
    fn synthesis_is_seeded() {
        let cfg = SynthConfig::default();
        let g = SkeletonGraph::human36m();
        assert_eq!(synthesize(&g, &cfg), synthesize(&g, &cfg));
        let other = SynthConfig { seed: 1, ..cfg };
        assert_ne!(synthesize(&g, &other), synthesize(&g, &SynthConfig::default()));
    }

    #[test]
    fn generic_rest_pose_has_unit_bones() {
        let g = SkeletonGraph::new(
            (0..5).map(|i| format!("j{i}")).collect(),
            vec![(0, 1), (1, 2), (1, 3), (3, 4)],
            0,
        )
        .unwrap();
        let pose = rest_pose(&g);
        for &(a, b) in g.edges() {
            let d: f64 = (0..3).map(|k| (pose[a][k] - pose[b][k]).powi(2)).sum::<f64>().sqrt();
            assert!((d - SYNTH_BONE_LENGTH).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_roundtrip_and_zero_mean() {
        let ds = small();
        let st = Standardizer::fit(&ds).unwrap();
        let z = st.apply(&ds).unwrap();
        let back = st.invert(&z).unwrap();
        for (a, b) in back.samples().iter().zip(ds.samples()) {
            assert!(a.input.max_abs_diff(&b.input) < 1e-12);
            assert_eq!(a.target, b.target);
        }
        let refit = Standardizer::fit(&z).unwrap();
        assert!(refit.mean.iter().all(|m| m.abs() < 1e-10));
    }

    #[test]
    fn last_frames_keeps_tail() {
        let ds = small();
        let short = ds.last_frames(1).unwrap();
        for (a, b) in short.samples().iter().zip(ds.samples()) {
            for j in 0..17 {
                for c in 0..2 {
                    assert_eq!(a.input.at(&[j, c, 0]), b.input.at(&[j, c, 2]));
                }
            }
        }
        assert!(ds.last_frames(4).is_err());
    }
}
