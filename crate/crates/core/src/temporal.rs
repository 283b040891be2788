//! Trigger-centred two-channel quadrature windows and temporal-mode
//! extraction from their covariance matrices.
//!
//! Synthetic model: per window and channel, an input sequence
//! `e = s (w - (g.w) g) + q g` (white `w`, unit planted mode `g`, planted
//! Q-quadrature `q`) passes a causal single-pole detector response normalised
//! to unit stationary gain. The last [`N_SAMPLES`] outputs form the window.
//! The vacuum reference uses `s = 1` and `q = g.w`, i.e. plain white input.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::{QSample, SampleSet};
use crate::util::mean_var;

pub const N_SAMPLES: usize = 160;
/// Sample spacing in ns (2.5 GS/s).
pub const SAMPLE_NS: f64 = 0.4;
/// Trigger position within a window.
pub const TRIGGER_INDEX: usize = 80;
pub const MIN_WINDOWS: usize = 10_000;
const MAX_CONDITION: f64 = 1e8;
const AMBIGUITY_GAP: f64 = 0.05;
const BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub xq: [f64; N_SAMPLES],
    pub yq: [f64; N_SAMPLES],
}

/// Anything that can hand out windows by index.
pub trait WindowSource: Sync {
    fn len(&self) -> usize;
    fn window(&self, i: usize) -> WindowRecord;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl WindowSource for [WindowRecord] {
    fn len(&self) -> usize {
        <[WindowRecord]>::len(self)
    }

    fn window(&self, i: usize) -> WindowRecord {
        self[i].clone()
    }
}

impl WindowSource for Vec<WindowRecord> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn window(&self, i: usize) -> WindowRecord {
        self[i].clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_windows: usize,
    /// Detector response `y_t = a y_{t-1} + sqrt(1 - a^2) e_t`; 0 gives `D = I`.
    pub filter_pole: f64,
    /// Samples simulated before the window so the response is stationary.
    pub padding: usize,
    /// Gaussian envelope of the planted mode, in window samples.
    pub mode_center: f64,
    pub mode_width: f64,
    /// Y-channel delay in samples.
    pub channel_offset: i64,
    /// Variance of the input outside the planted mode, per channel.
    pub background_x: f64,
    pub background_y: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_windows: 100_000,
            filter_pole: 0.3,
            padding: 40,
            mode_center: TRIGGER_INDEX as f64,
            mode_width: 5.0,
            channel_offset: 2,
            background_x: 1.0,
            background_y: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.filter_pole >= 0.0 && self.filter_pole < 1.0) {
            return Err(invalid(format!(
                "filter pole must lie in [0, 1), got {} (unstable response)",
                self.filter_pole
            )));
        }
        if !(self.mode_width > 0.0) {
            return Err(invalid("mode width must be > 0"));
        }
        if !(self.background_x > 0.0 && self.background_y > 0.0) {
            return Err(invalid("background variances must be > 0"));
        }
        if self.channel_offset.unsigned_abs() as usize > 8 {
            return Err(invalid("channel offset must satisfy |offset| <= 8"));
        }
        if self.n_windows == 0 {
            return Err(invalid("n_windows must be > 0"));
        }
        Ok(())
    }

    fn input_len(&self) -> usize {
        self.padding + N_SAMPLES
    }

    /// Unit-norm planted mode on the input grid, shifted by `shift` samples.
    pub fn planted_mode(&self, shift: i64) -> Vec<f64> {
        let l = self.input_len();
        let c = self.padding as f64 + self.mode_center + shift as f64;
        let mut g: Vec<f64> = (0..l)
            .map(|k| (-((k as f64 - c).powi(2)) / (2.0 * self.mode_width * self.mode_width)).exp())
            .collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    /// Planted mode restricted to the window.
    pub fn planted_window_mode(&self, shift: i64) -> Vec<f64> {
        self.planted_mode(shift)[self.padding..].to_vec()
    }
}

/// Streaming window generator; window `i` depends only on `(config, seed, i)`.
#[derive(Debug, Clone)]
pub struct SynthWindows {
    pub config: SynthConfig,
    pub seed: u64,
    gx: Vec<f64>,
    gy: Vec<f64>,
    planted: Option<Vec<QSample>>,
}

impl SynthWindows {
    fn stream(&self, i: usize) -> u64 {
        2 * i as u64 + u64::from(self.planted.is_none())
    }

    fn channel(&self, rng: &mut ChaCha8Rng, g: &[f64], s2: f64, q: Option<f64>) -> [f64; N_SAMPLES] {
        let l = self.config.input_len();
        let w: Vec<f64> = (0..l).map(|_| StandardNormal.sample(rng)).collect();
        let e: Vec<f64> = match q {
            None => w,
            Some(q) => {
                let proj: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
                let s = s2.sqrt();
                w.iter().zip(g).map(|(wi, gi)| s * (wi - proj * gi) + q * gi).collect()
            }
        };
        let a = self.config.filter_pole;
        let b = (1.0 - a * a).sqrt();
        let mut y = 0.0;
        let mut out = [0.0; N_SAMPLES];
        for (k, ek) in e.iter().enumerate() {
            // start in the stationary state for the first input
            y = if k == 0 { *ek } else { a * y + b * ek };
            if k >= self.config.padding {
                out[k - self.config.padding] = y;
            }
        }
        out
    }
}

impl WindowSource for SynthWindows {
    fn len(&self) -> usize {
        self.config.n_windows
    }

    fn window(&self, i: usize) -> WindowRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream(i));
        match &self.planted {
            Some(p) => {
                let q = p[i];
                let xq = self.channel(&mut rng, &self.gx, self.config.background_x, Some(q.x));
                let yq = self.channel(&mut rng, &self.gy, self.config.background_y, Some(q.y));
                WindowRecord { xq, yq }
            }
            None => {
                let xq = self.channel(&mut rng, &self.gx, 1.0, None);
                let yq = self.channel(&mut rng, &self.gy, 1.0, None);
                WindowRecord { xq, yq }
            }
        }
    }
}

/// Signal windows carrying the planted Q-samples (one per window, in order)
/// and a vacuum reference ensemble of the same size.
pub fn synth_windows(config: &SynthConfig, planted: &SampleSet, seed: u64) -> Result<(SynthWindows, SynthWindows)> {
    config.validate()?;
    if planted.len() < config.n_windows {
        return Err(invalid(format!(
            "need {} planted samples, got {}",
            config.n_windows,
            planted.len()
        )));
    }
    let gx = config.planted_mode(0);
    let gy = config.planted_mode(config.channel_offset);
    let signal = SynthWindows {
        config: *config,
        seed,
        gx: gx.clone(),
        gy: gy.clone(),
        planted: Some(planted.samples[..config.n_windows].to_vec()),
    };
    let vacuum = SynthWindows {
        config: *config,
        seed,
        gx,
        gy,
        planted: None,
    };
    Ok((signal, vacuum))
}

const MAGIC: &[u8; 4] = b"SQZW";
const VERSION: u16 = 1;

/// Binary layout: `"SQZW"`, version u16, n_windows u32, n_samples u16, then
/// per window 160 f64 of `xq` and 160 f64 of `yq`, little-endian.
pub fn write_windows<S: WindowSource + ?Sized, W: Write>(src: &S, mut out: W) -> Result<()> {
    let n = u32::try_from(src.len()).map_err(|_| invalid("too many windows for the file format"))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&(N_SAMPLES as u16).to_le_bytes())?;
    let mut buf = Vec::with_capacity(2 * N_SAMPLES * 8);
    for i in 0..src.len() {
        let w = src.window(i);
        buf.clear();
        for v in w.xq.iter().chain(w.yq.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_windows<R: Read>(mut input: R) -> Result<Vec<WindowRecord>> {
    let mut head = [0u8; 12];
    input.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("not a window file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported window file version {version}")));
    }
    let n = u32::from_le_bytes([head[6], head[7], head[8], head[9]]) as usize;
    let ns = u16::from_le_bytes([head[10], head[11]]) as usize;
    if ns != N_SAMPLES {
        return Err(Error::Format(format!("expected {N_SAMPLES} samples per window, got {ns}")));
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0u8; 2 * N_SAMPLES * 8];
    for _ in 0..n {
        input.read_exact(&mut buf)?;
        let val = |k: usize| f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().unwrap());
        let mut w = WindowRecord {
            xq: [0.0; N_SAMPLES],
            yq: [0.0; N_SAMPLES],
        };
        for k in 0..N_SAMPLES {
            w.xq[k] = val(k);
            w.yq[k] = val(N_SAMPLES + k);
        }
        out.push(w);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
}

fn channel_of(w: &WindowRecord, ch: Channel) -> &[f64; N_SAMPLES] {
    match ch {
        Channel::X => &w.xq,
        Channel::Y => &w.yq,
    }
}

/// Mean-subtracted covariance of one channel, accumulated in fixed blocks.
pub fn channel_covariance<S: WindowSource + ?Sized>(src: &S, ch: Channel) -> DMatrix<f64> {
    let n = src.len();
    let blocks: Vec<(DMatrix<f64>, DVector<f64>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let mut m = DMatrix::<f64>::zeros(N_SAMPLES, hi - lo);
            for i in lo..hi {
                let w = src.window(i);
                m.column_mut(i - lo).copy_from_slice(channel_of(&w, ch));
            }
            let sum = m.column_sum();
            (&m * m.transpose(), sum)
        })
        .collect();
    let mut s = DMatrix::<f64>::zeros(N_SAMPLES, N_SAMPLES);
    let mut mu = DVector::<f64>::zeros(N_SAMPLES);
    for (sb, mb) in blocks {
        s += sb;
        mu += mb;
    }
    let nf = n as f64;
    mu /= nf;
    let c = s / nf - &mu * mu.transpose();
    (&c + c.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct CovarianceBundle {
    /// Signal covariance of the anti-squeezed channel.
    pub c: DMatrix<f64>,
    /// Vacuum reference covariance.
    pub d: DMatrix<f64>,
    pub d_inv_sqrt: DMatrix<f64>,
    /// `D^{-1/2} C D^{-1/2}`.
    pub c_tilde: DMatrix<f64>,
    /// Eigenvalues of `C~`, descending.
    pub eigenvalues: Vec<f64>,
    /// Matching unit eigenvectors (columns).
    pub eigenvectors: DMatrix<f64>,
    pub d_condition: f64,
}

impl CovarianceBundle {
    pub fn from_matrices(c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        if c.shape() != d.shape() || !c.is_square() {
            return Err(invalid("C and D must be square and of equal size"));
        }
        let eig = d.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned(cond));
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt()));
        let d_inv_sqrt = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let ct = &d_inv_sqrt * &c * &d_inv_sqrt;
        let ct = (&ct + ct.transpose()) * 0.5;
        let e = ct.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| e.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(ct.nrows(), ct.ncols(), |r, k| e.eigenvectors[(r, order[k])]);
        Ok(Self {
            c,
            d,
            d_inv_sqrt,
            c_tilde: ct,
            eigenvalues,
            eigenvectors,
            d_condition: cond,
        })
    }

    pub fn top_eigenvalues(&self, k: usize) -> &[f64] {
        &self.eigenvalues[..k.min(self.eigenvalues.len())]
    }
}

/// `C` from the signal's X channel and `D` from the vacuum's X channel.
pub fn covariances<S: WindowSource + ?Sized, V: WindowSource + ?Sized>(signal: &S, vacuum: &V) -> Result<CovarianceBundle> {
    if signal.len() < MIN_WINDOWS || vacuum.len() < MIN_WINDOWS {
        return Err(invalid(format!(
            "need at least {MIN_WINDOWS} windows per ensemble, got {} and {}",
            signal.len(),
            vacuum.len()
        )));
    }
    CovarianceBundle::from_matrices(
        channel_covariance(signal, Channel::X),
        channel_covariance(vacuum, Channel::X),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFunction {
    /// Unit norm, peak positive.
    pub f: Vec<f64>,
    pub channel_offset: i64,
    pub whitened: bool,
    pub lambda1: f64,
    /// `(lambda1 - lambda2) / lambda1`.
    pub gap_ratio: f64,
    /// Top eigenvalues within 5% of each other.
    pub ambiguous: bool,
}

fn unit_peak_positive(mut f: Vec<f64>) -> Vec<f64> {
    let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let peak = f.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let s = if peak < 0.0 { -1.0 / n } else { 1.0 / n };
    f.iter_mut().for_each(|v| *v *= s);
    f
}

/// Top eigenvector `f1` of `C~`; with `whiten` the optimal `D^{-1/2} f1`
/// (renormalised) instead.
pub fn extract_mode(bundle: &CovarianceBundle, whiten: bool) -> ModeFunction {
    let f1: Vec<f64> = bundle.eigenvectors.column(0).iter().copied().collect();
    let f = if whiten {
        (&bundle.d_inv_sqrt * DVector::from_vec(f1)).iter().copied().collect()
    } else {
        f1
    };
    let l1 = bundle.eigenvalues[0];
    let l2 = bundle.eigenvalues.get(1).copied().unwrap_or(0.0);
    let gap_ratio = (l1 - l2) / l1;
    ModeFunction {
        f: unit_peak_positive(f),
        channel_offset: 0,
        whitened: whiten,
        lambda1: l1,
        gap_ratio,
        ambiguous: gap_ratio < AMBIGUITY_GAP,
    }
}

/// Largest-eigenvalue mode of the bare covariance `C`, for comparison.
pub fn bare_mode(bundle: &CovarianceBundle) -> Vec<f64> {
    let e = bundle.c.clone().symmetric_eigen();
    let i = e.eigenvalues.imax();
    unit_peak_positive(e.eigenvectors.column(i).iter().copied().collect())
}

/// `f^T C f / f^T D f`.
pub fn mode_variance(f: &[f64], bundle: &CovarianceBundle) -> Result<f64> {
    if f.len() != bundle.c.nrows() {
        return Err(invalid("mode length does not match the covariance"));
    }
    let v = DVector::from_column_slice(f);
    if v.norm() == 0.0 {
        return Err(invalid("mode must be non-zero"));
    }
    Ok((v.transpose() * &bundle.c * &v)[(0, 0)] / (v.transpose() * &bundle.d * &v)[(0, 0)])
}

/// Weights `f(t_{m - offset})`; fails if the shift drops more than 1% of
/// the weight off the window.
fn shifted(f: &[f64], offset: i64) -> Result<Vec<f64>> {
    let n = f.len() as i64;
    let mut out = vec![0.0; f.len()];
    let mut lost = 0.0;
    for (k, &v) in f.iter().enumerate() {
        let j = k as i64 + offset;
        if (0..n).contains(&j) {
            out[j as usize] = v;
        } else {
            lost += v * v;
        }
    }
    let total: f64 = f.iter().map(|v| v * v).sum();
    if lost > 1e-2 * total {
        return Err(invalid(format!(
            "offset {offset} pushes {:.2e} of the mode weight out of the window",
            lost / total
        )));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw mode quadratures `(sum f x, sum f_shift y)` of every window.
fn project<S: WindowSource + ?Sized>(src: &S, f: &[f64], offset: i64) -> Result<Vec<(f64, f64)>> {
    if f.len() != N_SAMPLES {
        return Err(invalid(format!("mode must have {N_SAMPLES} samples")));
    }
    let fy = shifted(f, offset)?;
    Ok((0..src.len())
        .into_par_iter()
        .map(|i| {
            let w = src.window(i);
            (dot(f, &w.xq), dot(&fy, &w.yq))
        })
        .collect())
}

/// Shot-noise scale: standard deviations of the vacuum ensemble's mode
/// quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoise {
    pub sd_x: f64,
    pub sd_y: f64,
}

pub fn shot_noise<S: WindowSource + ?Sized>(vacuum: &S, f: &[f64], offset: i64) -> Result<ShotNoise> {
    let raw = project(vacuum, f, offset)?;
    let (_, vx) = mean_var(raw.iter().map(|p| p.0));
    let (_, vy) = mean_var(raw.iter().map(|p| p.1));
    Ok(ShotNoise {
        sd_x: vx.sqrt(),
        sd_y: vy.sqrt(),
    })
}

/// One `beta = X^Q_mode + i Y^Q_mode` per window, in shot-noise units.
pub fn integrate_quadratures<S: WindowSource + ?Sized>(
    windows: &S,
    f: &[f64],
    offset: i64,
    norm: &ShotNoise,
    seed: u64,
    source: &str,
) -> Result<SampleSet> {
    let raw = project(windows, f, offset)?;
    Ok(SampleSet {
        samples: raw
            .into_iter()
            .map(|(x, y)| QSample {
                x: x / norm.sd_x,
                y: y / norm.sd_y,
            })
            .collect(),
        seed,
        source: source.to_string(),
    })
}

/// Normalised `var Y^Q_mode` for each candidate offset.
pub fn offset_scan<S: WindowSource + ?Sized, V: WindowSource + ?Sized>(
    signal: &S,
    vacuum: &V,
    f: &[f64],
    offsets: &[i64],
) -> Result<Vec<(i64, f64)>> {
    offsets
        .iter()
        .map(|&o| {
            let norm = shot_noise(vacuum, f, o)?;
            let raw = project(signal, f, o)?;
            let (_, vy) = mean_var(raw.iter().map(|p| p.1));
            Ok((o, vy / (norm.sd_y * norm.sd_y)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTraces {
    /// Time relative to the trigger in ns.
    pub t_ns: Vec<f64>,
    pub var_x: Vec<f64>,
    pub var_y: Vec<f64>,
    /// Standard error of a single-index variance estimate (Gaussian approx.).
    pub n_windows: usize,
}

impl VarianceTraces {
    /// Mean of the first and last `edge` points of a trace.
    pub fn plateau(trace: &[f64], edge: usize) -> f64 {
        let e = edge.min(trace.len() / 2);
        let s: f64 = trace[..e].iter().chain(&trace[trace.len() - e..]).sum();
        s / (2 * e) as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_ns,varXQ,varYQ")?;
        for k in 0..self.t_ns.len() {
            writeln!(out, "{},{},{}", self.t_ns[k], self.var_x[k], self.var_y[k])?;
        }
        Ok(())
    }
}

/// Per-index variances across the ensemble.
pub fn time_resolved_variances<S: WindowSource + ?Sized>(windows: &S) -> VarianceTraces {
    let n = windows.len();
    let parts: Vec<([f64; N_SAMPLES], [f64; N_SAMPLES], [f64; N_SAMPLES], [f64; N_SAMPLES])> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let (mut sx, mut sxx, mut sy, mut syy) = ([0.0; N_SAMPLES], [0.0; N_SAMPLES], [0.0; N_SAMPLES], [0.0; N_SAMPLES]);
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let w = windows.window(i);
                for k in 0..N_SAMPLES {
                    sx[k] += w.xq[k];
                    sxx[k] += w.xq[k] * w.xq[k];
                    sy[k] += w.yq[k];
                    syy[k] += w.yq[k] * w.yq[k];
                }
            }
            (sx, sxx, sy, syy)
        })
        .collect();
    let (mut sx, mut sxx, mut sy, mut syy) = ([0.0; N_SAMPLES], [0.0; N_SAMPLES], [0.0; N_SAMPLES], [0.0; N_SAMPLES]);
    for (a, b, c, d) in parts {
        for k in 0..N_SAMPLES {
            sx[k] += a[k];
            sxx[k] += b[k];
            sy[k] += c[k];
            syy[k] += d[k];
        }
    }
    let nf = n as f64;
    VarianceTraces {
        t_ns: (0..N_SAMPLES)
            .map(|k| (k as f64 - TRIGGER_INDEX as f64) * SAMPLE_NS)
            .collect(),
        var_x: (0..N_SAMPLES).map(|k| sxx[k] / nf - (sx[k] / nf).powi(2)).collect(),
        var_y: (0..N_SAMPLES).map(|k| syy[k] / nf - (sy[k] / nf).powi(2)).collect(),
        n_windows: n,
    }
}

/// CSV `t_ns,f` for a mode function.
pub fn write_mode_csv<W: Write>(f: &[f64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t_ns,f")?;
    for (k, v) in f.iter().enumerate() {
        writeln!(out, "{},{}", (k as f64 - TRIGGER_INDEX as f64) * SAMPLE_NS, v)?;
    }
    Ok(())
}
