//! Linear state-space models with time-varying noise, trajectory
//! generation, and the scalar noise-ratio context (SoW).
//!
//! Dynamics: `x_t = F x_{t-1} + e_t`, `y_t = H x_t + v_t` with
//! `Var(e_t) = q2_t * Q0` and `Var(v_t) = r2_t * R0`. The noise families
//! are Gaussian (Cholesky coloring) and zero-mean exponential (diagonal
//! covariances only).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const DATASET_MAGIC: &[u8; 8] = b"AKNDATA1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Gaussian,
    Exponential,
}

impl NoiseFamily {
    pub fn tag(&self) -> u8 {
        match self {
            NoiseFamily::Gaussian => 0,
            NoiseFamily::Exponential => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(NoiseFamily::Gaussian),
            1 => Ok(NoiseFamily::Exponential),
            other => Err(Error::Checkpoint(format!("unknown noise family tag {}", other))),
        }
    }
}

impl std::fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseFamily::Gaussian => write!(f, "gaussian"),
            NoiseFamily::Exponential => write!(f, "exponential"),
        }
    }
}

/// Linear state-space model: evolution `F`, observation map `H`, and the
/// base noise covariances that per-timestep scales multiply.
#[derive(Debug, Clone)]
pub struct SSModel {
    pub f: Matrix,
    pub h: Matrix,
    pub q0: Matrix,
    pub r0: Matrix,
    pub m: usize,
    pub n: usize,
}

impl SSModel {
    pub fn new(f: Matrix, h: Matrix, q0: Matrix, r0: Matrix) -> Result<Self> {
        let m = f.rows();
        let n = h.rows();
        if f.cols() != m || h.cols() != m || q0.rows() != m || q0.cols() != m || r0.rows() != n || r0.cols() != n {
            return Err(Error::DimensionMismatch {
                op: "SSModel::new",
                details: format!(
                    "F {}x{}, H {}x{}, Q0 {}x{}, R0 {}x{}",
                    f.rows(), f.cols(), h.rows(), h.cols(),
                    q0.rows(), q0.cols(), r0.rows(), r0.cols()
                ),
            });
        }
        if !(f.is_finite() && h.is_finite()) {
            return Err(Error::InvalidArgument("F and H must be finite".into()));
        }
        // SPD check via Cholesky
        q0.cholesky().map_err(|_| {
            Error::NotPositiveDefinite("Q0 must be symmetric positive definite".into())
        })?;
        r0.cholesky().map_err(|_| {
            Error::NotPositiveDefinite("R0 must be symmetric positive definite".into())
        })?;
        Ok(Self { f, h, q0, r0, m, n })
    }

    /// Stable rotation-decay evolution matrix (2x2 blocks of a scaled
    /// rotation, identity-decay on an odd trailing dimension) with the
    /// given spectral radius, paired with H = I.
    pub fn rotation_decay(m: usize, spectral_radius: f64, angle_rad: f64, q0: Matrix, r0: Matrix) -> Result<Self> {
        let mut f = Matrix::zeros(m, m);
        let (c, s) = (angle_rad.cos(), angle_rad.sin());
        let mut i = 0;
        while i + 1 < m {
            f.set(i, i, spectral_radius * c);
            f.set(i, i + 1, -spectral_radius * s);
            f.set(i + 1, i, spectral_radius * s);
            f.set(i + 1, i + 1, spectral_radius * c);
            i += 2;
        }
        if i < m {
            f.set(i, i, spectral_radius);
        }
        let h = Matrix::identity(m);
        Self::new(f, h, q0, r0)
    }
}

/// Random SPD matrix `A A^T + 0.1 I` from a standard-normal `A`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> Matrix {
    let data: Vec<f64> = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let a = Matrix::new(n, n, data);
    let mut spd = a.matmul(&a.transpose()).expect("square product");
    for i in 0..n {
        spd.set(i, i, spd.get(i, i) + 0.1);
    }
    spd
}

/// Per-timestep noise scaling pairs plus the family tag.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub q2: Vec<f64>,
    pub r2: Vec<f64>,
    pub family: NoiseFamily,
}

impl NoiseSchedule {
    pub fn constant(q2: f64, r2: f64, len: usize, family: NoiseFamily) -> Result<Self> {
        if q2 <= 0.0 || r2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise scales must be positive, got q2={} r2={}",
                q2, r2
            )));
        }
        Ok(Self {
            q2: vec![q2; len],
            r2: vec![r2; len],
            family,
        })
    }

    /// Constant `pre` pair up to `jump_at` (exclusive), then `post`.
    pub fn jump(pre: (f64, f64), post: (f64, f64), jump_at: usize, len: usize, family: NoiseFamily) -> Result<Self> {
        for &(q2, r2) in &[pre, post] {
            if q2 <= 0.0 || r2 <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "noise scales must be positive, got q2={} r2={}",
                    q2, r2
                )));
            }
        }
        let mut q2 = vec![pre.0; len];
        let mut r2 = vec![pre.1; len];
        for t in jump_at..len {
            q2[t] = post.0;
            r2[t] = post.1;
        }
        Ok(Self { q2, r2, family })
    }

    pub fn len(&self) -> usize {
        self.q2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q2.is_empty()
    }
}

/// One generated trajectory: states, observations, and the per-step SoW,
/// plus the (q2, r2) group label it was generated under (the last pair of
/// the schedule for time-varying schedules).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub m: usize,
    pub n: usize,
    /// T x m, t-major
    pub x: Vec<f64>,
    /// T x n, t-major
    pub y: Vec<f64>,
    /// T
    pub sow: Vec<f64>,
    pub x0: Vec<f64>,
    pub q2: f64,
    pub r2: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.sow.len()
    }

    pub fn state_at(&self, t: usize) -> &[f64] {
        &self.x[t * self.m..(t + 1) * self.m]
    }

    pub fn obs_at(&self, t: usize) -> &[f64] {
        &self.y[t * self.n..(t + 1) * self.n]
    }

    pub fn obs_matrix(&self, t: usize) -> Matrix {
        Matrix::col(self.obs_at(t))
    }

    /// Mean squared state-estimation error of an estimate sequence
    /// against this trajectory's ground truth.
    pub fn mse_of(&self, estimates: &[Matrix]) -> f64 {
        assert_eq!(estimates.len(), self.steps());
        let mut total = 0.0;
        for (t, est) in estimates.iter().enumerate() {
            let truth = self.state_at(t);
            for (i, &tv) in truth.iter().enumerate() {
                let d = est.data()[i] - tv;
                total += d * d;
            }
        }
        total / self.steps() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    /// Pseudo-stationary subset used for stage-1 training.
    PseudoStationary,
    /// Full multi-SoW dataset used for stage-2 training.
    Full,
}

impl SplitTag {
    fn tag(&self) -> u8 {
        match self {
            SplitTag::PseudoStationary => 0,
            SplitTag::Full => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(SplitTag::PseudoStationary),
            1 => Ok(SplitTag::Full),
            other => Err(Error::Checkpoint(format!("unknown split tag {}", other))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub split: SplitTag,
    pub family: NoiseFamily,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, split: SplitTag, family: NoiseFamily) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        let (m, n) = (trajectories[0].m, trajectories[0].n);
        if !trajectories.iter().all(|t| t.m == m && t.n == n) {
            return Err(Error::InvalidArgument(
                "all trajectories must share state/observation dimensions".into(),
            ));
        }
        Ok(Self {
            trajectories,
            split,
            family,
        })
    }

    pub fn m(&self) -> usize {
        self.trajectories[0].m
    }

    pub fn n(&self) -> usize {
        self.trajectories[0].n
    }

    pub fn steps(&self) -> usize {
        self.trajectories[0].steps()
    }

    /// Distinct (q2, r2) group labels in first-appearance order.
    pub fn groups(&self) -> Vec<(f64, f64)> {
        let mut seen: Vec<(f64, f64)> = Vec::new();
        for t in &self.trajectories {
            if !seen.iter().any(|&(q, r)| q == t.q2 && r == t.r2) {
                seen.push((t.q2, t.r2));
            }
        }
        seen
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(DATASET_MAGIC)?;
        let t = self.steps() as u32;
        w.write_all(&(self.m() as u32).to_le_bytes())?;
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&(self.trajectories.len() as u32).to_le_bytes())?;
        w.write_all(&[self.family.tag(), self.split.tag()])?;
        for traj in &self.trajectories {
            w.write_all(&traj.q2.to_le_bytes())?;
            w.write_all(&traj.r2.to_le_bytes())?;
            write_f64s(&mut w, &traj.x0)?;
            write_f64s(&mut w, &traj.x)?;
            write_f64s(&mut w, &traj.y)?;
            write_f64s(&mut w, &traj.sow)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a dataset file (bad magic)",
                path.display()
            )));
        }
        let m = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let t = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)? as usize;
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)?;
        let family = NoiseFamily::from_tag(tags[0])?;
        let split = SplitTag::from_tag(tags[1])?;
        let mut trajectories = Vec::with_capacity(count);
        for _ in 0..count {
            let q2 = read_f64(&mut r)?;
            let r2 = read_f64(&mut r)?;
            let x0 = read_f64s(&mut r, m)?;
            let x = read_f64s(&mut r, t * m)?;
            let y = read_f64s(&mut r, t * n)?;
            let sow = read_f64s(&mut r, t)?;
            trajectories.push(Trajectory {
                m,
                n,
                x,
                y,
                sow,
                x0,
                q2,
                r2,
            });
        }
        Dataset::new(trajectories, split, family)
    }

    /// Human-readable export: one row per (trajectory, step).
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write!(w, "traj,t")?;
        for i in 0..self.m() {
            write!(w, ",x{}", i)?;
        }
        for i in 0..self.n() {
            write!(w, ",y{}", i)?;
        }
        writeln!(w, ",sow")?;
        for (idx, traj) in self.trajectories.iter().enumerate() {
            for t in 0..traj.steps() {
                write!(w, "{},{}", idx, t)?;
                for v in traj.state_at(t) {
                    write!(w, ",{}", v)?;
                }
                for v in traj.obs_at(t) {
                    write!(w, ",{}", v)?;
                }
                writeln!(w, ",{}", traj.sow[t])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl BufRead) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl BufRead) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl BufRead, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

/// Scalar noise-ratio context: `n * Tr(Qt) / (m * Tr(Rt))`.
pub fn sow(qt: &Matrix, rt: &Matrix, m: usize, n: usize) -> Result<f64> {
    let tr_r = rt.trace();
    if tr_r <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "observation-noise trace must be positive, got {}",
            tr_r
        )));
    }
    Ok(n as f64 * qt.trace() / (m as f64 * tr_r))
}

/// Zero-mean noise sample with covariance `cov`. Gaussian uses Cholesky
/// coloring; the exponential family draws each coordinate as
/// `lambda * (E - 1)` with `E ~ Exp(1)` and `lambda^2` the diagonal
/// variance, and requires a diagonal covariance.
pub fn sample_noise(cov: &Matrix, family: NoiseFamily, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let n = cov.rows();
    match family {
        NoiseFamily::Gaussian => {
            let l = cov.cholesky()?;
            let white: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mut out = vec![0.0; n];
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..=i {
                    s += l.get(i, j) * white[j];
                }
                out[i] = s;
            }
            Ok(out)
        }
        NoiseFamily::Exponential => {
            let scale = cov.trace().abs().max(1e-300);
            for i in 0..n {
                for j in 0..n {
                    if i != j && cov.get(i, j).abs() > 1e-12 * scale {
                        return Err(Error::UnsupportedConfig(
                            "exponential noise requires a diagonal covariance".into(),
                        ));
                    }
                }
            }
            let mut out = vec![0.0; n];
            for (i, v) in out.iter_mut().enumerate() {
                let var = cov.get(i, i);
                if var < 0.0 {
                    return Err(Error::NotPositiveDefinite(format!(
                        "negative variance {} on diagonal {}",
                        var, i
                    )));
                }
                let lambda = var.sqrt();
                let e: f64 = rng.sample(Exp1);
                *v = lambda * (e - 1.0);
            }
            Ok(out)
        }
    }
}

/// Generate one trajectory under the given schedule. The schedule must
/// cover at least `steps` entries.
pub fn generate(
    model: &SSModel,
    schedule: &NoiseSchedule,
    steps: usize,
    x0: &[f64],
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if schedule.len() < steps {
        return Err(Error::InvalidArgument(format!(
            "schedule covers {} steps, {} requested",
            schedule.len(),
            steps
        )));
    }
    if x0.len() != model.m {
        return Err(Error::DimensionMismatch {
            op: "generate",
            details: format!("x0 has {} entries for state dim {}", x0.len(), model.m),
        });
    }
    let (m, n) = (model.m, model.n);
    let mut x = Vec::with_capacity(steps * m);
    let mut y = Vec::with_capacity(steps * n);
    let mut sows = Vec::with_capacity(steps);
    let mut state = Matrix::col(x0);
    for t in 0..steps {
        let qt = model.q0.scale(schedule.q2[t]);
        let rt = model.r0.scale(schedule.r2[t]);
        let e = sample_noise(&qt, schedule.family, rng)?;
        let v = sample_noise(&rt, schedule.family, rng)?;
        let mut next = model.f.matmul(&state)?;
        for (i, ev) in e.iter().enumerate() {
            next.data_mut()[i] += ev;
        }
        let mut obs = model.h.matmul(&next)?;
        for (i, vv) in v.iter().enumerate() {
            obs.data_mut()[i] += vv;
        }
        x.extend_from_slice(next.data());
        y.extend_from_slice(obs.data());
        sows.push(sow(&qt, &rt, m, n)?);
        state = next;
    }
    let last = steps - 1;
    Ok(Trajectory {
        m,
        n,
        x,
        y,
        sow: sows,
        x0: x0.to_vec(),
        q2: schedule.q2[last],
        r2: schedule.r2[last],
    })
}
