//! Husimi-Q (8-port homodyne) sampling and Monte-Carlo two-copy distillation
//! on sample pairs.
//!
//! Samples `beta = X^Q + i Y^Q` carry vacuum variance 1 per quadrature; the
//! underlying coherent label is `alpha = beta / sqrt2`. A state variance `v`
//! shows up in the samples as `(v + 1)/2`.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{coherent_amplitudes, moments, DensityMatrix};
use crate::gaussification::{AcceptanceSpec, Gaussifier};
use crate::util::{mean_var, variance_std_error};

/// Accepted samples generated per independently seeded stream.
pub const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSample {
    pub x: f64,
    pub y: f64,
}

impl QSample {
    pub fn beta(&self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<QSample>,
    pub seed: u64,
    pub source: String,
}

/// Sample moments converted to state units, `v = 2 v^Q - 1`, with standard
/// errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub err_x: f64,
    pub err_y: f64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Raw Q-domain variances `(var_x^Q, var_y^Q)`.
    pub fn q_variances(&self) -> (f64, f64) {
        let (_, vx) = mean_var(self.samples.iter().map(|s| s.x));
        let (_, vy) = mean_var(self.samples.iter().map(|s| s.y));
        (vx, vy)
    }

    pub fn state_moments(&self) -> SampleMoments {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.x).collect();
        let ys: Vec<f64> = self.samples.iter().map(|s| s.y).collect();
        let (mx, vx) = mean_var(xs.iter().copied());
        let (my, vy) = mean_var(ys.iter().copied());
        SampleMoments {
            mean_x: mx,
            mean_y: my,
            var_x: 2.0 * vx - 1.0,
            var_y: 2.0 * vy - 1.0,
            err_x: 2.0 * variance_std_error(&xs),
            err_y: 2.0 * variance_std_error(&ys),
        }
    }

    /// CSV: `# seed=<u64> source=<tag>`, then `x,y`, then one sample per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# seed={} source={}", self.seed, self.source)?;
        writeln!(out, "x,y")?;
        for s in &self.samples {
            writeln!(out, "{},{}", s.x, s.y)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let head = lines.next().ok_or_else(|| Error::Format("empty sample file".into()))??;
        let rest = head
            .strip_prefix("# seed=")
            .ok_or_else(|| Error::Format("missing '# seed=' header".into()))?;
        let (seed, source) = match rest.split_once(" source=") {
            Some((s, src)) => (s, src.to_string()),
            None => (rest, String::new()),
        };
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad seed '{seed}'")))?;
        let cols = lines.next().ok_or_else(|| Error::Format("missing column header".into()))??;
        if cols.trim() != "x,y" {
            return Err(Error::Format(format!("expected 'x,y' header, got '{cols}'")));
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected two columns", i + 3)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number '{s}'", i + 3)))
            };
            samples.push(QSample { x: parse(a)?, y: parse(b)? });
        }
        Ok(Self { samples, seed, source })
    }
}

/// Husimi density of `beta`, `<beta/sqrt2| rho |beta/sqrt2> / (2 pi)`,
/// evaluated through a factor `rho = L L†` (columns of `L` stored row by row
/// in `cols`).
struct QDensity {
    cols: Vec<Vec<Complex64>>,
    cutoff: usize,
}

impl QDensity {
    fn new(rho: &DensityMatrix) -> Self {
        let (rho, _) = rho.normalized().unwrap_or((rho.clone(), 1.0));
        let l = rho.factor(1e-14);
        let cols = (0..l.ncols()).map(|k| l.column(k).iter().copied().collect()).collect();
        Self {
            cols,
            cutoff: rho.cutoff(),
        }
    }

    fn eval(&self, beta: Complex64) -> f64 {
        let c = coherent_amplitudes(beta / std::f64::consts::SQRT_2, self.cutoff);
        let mut acc = 0.0;
        for col in &self.cols {
            let mut z = Complex64::new(0.0, 0.0);
            for (cn, ln) in c.iter().zip(col) {
                z += cn.conj() * ln;
            }
            acc += z.norm_sqr();
        }
        acc / (2.0 * std::f64::consts::PI)
    }
}

/// Isotropic Gaussian proposal with envelope constant `m`.
struct Proposal {
    mean: Complex64,
    sd: f64,
    m: f64,
}

impl Proposal {
    fn density(&self, beta: Complex64) -> f64 {
        let v = self.sd * self.sd;
        (-(beta - self.mean).norm_sqr() / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v)
    }
}

fn build_proposal(rho: &DensityMatrix, q: &QDensity) -> Result<Proposal> {
    let m = moments(rho);
    // Q-domain covariance (Gamma + I)/2
    let qc = m.covariance();
    let vmax = 0.5 * (qc.eigenvalues()[1] + 1.0);
    let mut prop = Proposal {
        mean: Complex64::new(m.mean_x, m.mean_y),
        sd: (1.5 * vmax).sqrt(),
        m: 1.0,
    };
    let half = 8.0 * prop.sd;
    let n = 241;
    let ratio_max = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let dx = -half + 2.0 * half * i as f64 / (n - 1) as f64;
            let dy = -half + 2.0 * half * j as f64 / (n - 1) as f64;
            let b = prop.mean + Complex64::new(dx, dy);
            q.eval(b) / prop.density(b)
        })
        .reduce(|| 0.0, f64::max);
    prop.m = 1.1 * ratio_max;
    Ok(prop)
}

/// Draw `count` Husimi samples by rejection from an isotropic Gaussian
/// proposal. Samples come in chunks of [`CHUNK`], each from its own ChaCha
/// stream, so the result depends only on `(rho, count, seed)`.
pub fn sample_q(rho: &DensityMatrix, count: usize, seed: u64, source: &str) -> Result<SampleSet> {
    rho.check_truncation()?;
    let q = QDensity::new(rho);
    let prop = build_proposal(rho, &q)?;
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Vec<QSample>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let want = CHUNK.min(count - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut out = Vec::with_capacity(want);
            while out.len() < want {
                let gx: f64 = rng.sample(StandardNormal);
                let gy: f64 = rng.sample(StandardNormal);
                let b = prop.mean + Complex64::new(gx, gy) * prop.sd;
                let ratio = q.eval(b) / (prop.m * prop.density(b));
                if ratio > 1.0 {
                    return Err(Error::EnvelopeViolated { ratio, beta: b });
                }
                let u: f64 = rng.random();
                if u < ratio {
                    out.push(QSample { x: b.re, y: b.im });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(SampleSet {
        samples: parts.concat(),
        seed,
        source: source.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOutcome {
    pub survivors: SampleSet,
    /// Survivors per input sample, `survivors / (2 pairs)`, at most 1/2.
    pub p_svv: f64,
    pub n_bar: f64,
    pub step: usize,
    pub pairs: usize,
}

impl DistillOutcome {
    /// Binomial standard error of `p_svv`.
    pub fn p_svv_error(&self) -> f64 {
        let a = 2.0 * self.p_svv;
        0.5 * (a * (1.0 - a) / self.pairs as f64).sqrt()
    }
}

fn distill(input: &SampleSet, n_bar: f64, step: usize) -> Result<DistillOutcome> {
    if input.len() < 2 {
        return Err(Error::Starvation {
            step,
            available: input.len(),
        });
    }
    if !(n_bar >= 0.0) {
        return Err(invalid(format!("n_bar must be >= 0, got {n_bar}")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let survivors: Vec<QSample> = input
        .samples
        .par_chunks_exact(2)
        .filter_map(|p| {
            let (b1, b2) = (p[0].beta(), p[1].beta());
            let plus = (b1 + b2) * s;
            (plus.norm_sqr() < n_bar).then(|| {
                let minus = (b1 - b2) * s;
                QSample { x: minus.re, y: minus.im }
            })
        })
        .collect();
    let pairs = input.len() / 2;
    if survivors.is_empty() {
        return Err(Error::NoSurvivors);
    }
    let p_svv = survivors.len() as f64 / (2 * pairs) as f64;
    Ok(DistillOutcome {
        survivors: SampleSet {
            samples: survivors,
            seed: input.seed,
            source: format!("{}|step{step}(n_bar={n_bar})", input.source),
        },
        p_svv,
        n_bar,
        step,
        pairs,
    })
}

/// One emulated two-copy step on consecutive disjoint pairs: keep
/// `beta_- = (b1 - b2)/sqrt2` whenever `|(b1 + b2)/sqrt2|^2 < n_bar`.
pub fn mc_gaussify_step(input: &SampleSet, n_bar: f64) -> Result<DistillOutcome> {
    distill(input, n_bar, 1)
}

/// Chained steps; step `k` consumes the survivors of step `k - 1`.
pub fn mc_multi_step(input: &SampleSet, schedule: &[f64]) -> Result<Vec<DistillOutcome>> {
    let mut out: Vec<DistillOutcome> = Vec::with_capacity(schedule.len());
    for (i, &n_bar) in schedule.iter().enumerate() {
        let src = out.last().map(|o| &o.survivors).unwrap_or(input);
        out.push(distill(src, n_bar, i + 1)?);
    }
    Ok(out)
}

/// Product of the per-step survival rates.
pub fn cumulative_survival(steps: &[DistillOutcome]) -> f64 {
    steps.iter().map(|s| s.p_svv).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_bar: f64,
    pub p_svv: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub err_x: f64,
    pub err_y: f64,
}

pub const SWEEP_BATCHES: usize = 20;

/// State-unit variance of each of `SWEEP_BATCHES` contiguous batches; the
/// standard error is their spread over `sqrt(batches)`.
fn batch_error(xs: &[f64]) -> f64 {
    let b = SWEEP_BATCHES;
    let size = xs.len() / b;
    if size < 2 {
        return f64::NAN;
    }
    let vars: Vec<f64> = (0..b)
        .map(|k| 2.0 * mean_var(xs[k * size..(k + 1) * size].iter().copied()).1 - 1.0)
        .collect();
    let (_, v) = mean_var(vars.iter().copied());
    (v * b as f64 / (b - 1) as f64).sqrt() / (b as f64).sqrt()
}

/// One step at each threshold of a sorted grid; variances in state units with
/// batch errors.
pub fn psvv_sweep(input: &SampleSet, n_bar_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if n_bar_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(invalid("n_bar grid must be sorted ascending"));
    }
    n_bar_grid
        .iter()
        .map(|&n_bar| {
            let o = mc_gaussify_step(input, n_bar)?;
            let xs: Vec<f64> = o.survivors.samples.iter().map(|s| s.x).collect();
            let ys: Vec<f64> = o.survivors.samples.iter().map(|s| s.y).collect();
            Ok(SweepRow {
                n_bar,
                p_svv: o.p_svv,
                var_x: 2.0 * mean_var(xs.iter().copied()).1 - 1.0,
                var_y: 2.0 * mean_var(ys.iter().copied()).1 - 1.0,
                err_x: batch_error(&xs),
                err_y: batch_error(&ys),
            })
        })
        .collect()
}

/// CSV `n_bar,p_svv,varX,varY,errX,errY`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "n_bar,p_svv,varX,varY,errX,errY")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.n_bar, r.p_svv, r.var_x, r.var_y, r.err_x, r.err_y)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactStep {
    pub p_svv: f64,
    /// `None` when nothing is accepted.
    pub var_x: Option<f64>,
    pub var_y: Option<f64>,
    pub state: Option<DensityMatrix>,
}

/// Exact counterpart of [`mc_gaussify_step`]: the hard boundary as a diagonal
/// POVM on the "+" port. `n_bar = inf` accepts everything.
pub fn exact_step_oracle(rho: &DensityMatrix, n_bar: f64) -> Result<ExactStep> {
    let g = Gaussifier::new(rho.cutoff());
    let povm = if n_bar.is_infinite() {
        vec![1.0; rho.dim()]
    } else {
        crate::gaussification::acceptance_povm(&AcceptanceSpec::hard(n_bar), rho.cutoff())?
    };
    if povm.iter().all(|&p| p == 0.0) {
        return Ok(ExactStep {
            p_svv: 0.0,
            var_x: None,
            var_y: None,
            state: None,
        });
    }
    let (out, p) = g.step_with_povm(rho, &povm)?;
    let m = moments(&out);
    Ok(ExactStep {
        p_svv: 0.5 * p,
        var_x: Some(m.var_x),
        var_y: Some(m.var_y),
        state: Some(out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockVector;

    #[test]
    fn q_density_of_vacuum() {
        let q = QDensity::new(&DensityMatrix::vacuum(10));
        let b = Complex64::new(0.7, -0.4);
        let want = (-b.norm_sqr() / 2.0).exp() / (2.0 * std::f64::consts::PI);
        assert!((q.eval(b) - want).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let s = sample_q(&DensityMatrix::vacuum(6), 100, 7, "vacuum").unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = SampleSet::read_csv(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(SampleSet::read_csv(&b"x,y\n1,2\n"[..]).is_err());
    }

    #[test]
    fn pairing_is_consecutive() {
        let set = SampleSet {
            samples: vec![
                QSample { x: 1.0, y: 0.0 },
                QSample { x: 1.0, y: 0.0 },
                QSample { x: 0.1, y: 0.0 },
                QSample { x: -0.1, y: 0.0 },
                QSample { x: 5.0, y: 5.0 },
            ],
            seed: 0,
            source: "t".into(),
        };
        let o = mc_gaussify_step(&set, 1.0).unwrap();
        // pair 1: |beta_+|^2 = 2, rejected; pair 2: beta_+ = 0, kept
        assert_eq!(o.pairs, 2);
        assert_eq!(o.survivors.len(), 1);
        assert!((o.survivors.samples[0].x - 0.2 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(o.p_svv, 0.25);
    }

    #[test]
    fn starvation_and_no_survivors() {
        let one = SampleSet {
            samples: vec![QSample { x: 0.0, y: 0.0 }],
            seed: 0,
            source: String::new(),
        };
        assert!(matches!(mc_gaussify_step(&one, 1.0), Err(Error::Starvation { .. })));
        let far = SampleSet {
            samples: vec![QSample { x: 3.0, y: 0.0 }; 4],
            seed: 0,
            source: String::new(),
        };
        assert!(matches!(mc_gaussify_step(&far, 1.0), Err(Error::NoSurvivors)));
    }

    #[test]
    fn oracle_limits() {
        let rho = FockVector::basis(6, 1).unwrap().to_density();
        assert_eq!(exact_step_oracle(&rho, 0.0).unwrap().p_svv, 0.0);
        let all = exact_step_oracle(&DensityMatrix::vacuum(6), f64::INFINITY).unwrap();
        assert!((all.p_svv - 0.5).abs() < 1e-14);
    }
}
