//! Named self-checks grouped in suites, each comparing a measured value with
//! an independent expectation. Sized to run in seconds; the full-size runs
//! live in the acceptance test target.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    asymptotic_squeeze, optimal_delta_sq, optimal_gain_db, squeezed_vacuum, two_photon_subtracted,
    variances_2s, variances_2s_displaced,
};
use crate::error::{invalid, Result};
use crate::fock::{moments, DensityMatrix, FockVector};
use crate::gaussification::{
    fock_filter_prediction, gamma_infinity, iterate, AcceptanceSpec, GammaMethod, GaussificationStatus,
};
use crate::sampling::{exact_step_oracle, mc_gaussify_step, sample_q, QSample, SampleSet};
use crate::temporal::{covariances, extract_mode, offset_scan, synth_windows, SynthConfig};
use crate::tomography::{histogram, maxlik, MaxLikOptions, DEFAULT_BIN};

pub const SUITES: [&str; 5] = ["analytic", "gaussification", "sampling", "tomography", "temporal"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// `|measured - expected| <= tol`
    Within,
    /// `measured >= expected`
    AtLeast,
    /// `measured <= expected`
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    pub tol: f64,
    pub comparison: Comparison,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub suites: Vec<String>,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Negative control: shift this check's measured value in the failing
    /// direction before comparison.
    pub corrupt: Option<String>,
}

struct Ctx<'a> {
    suite: &'static str,
    opts: &'a ValidateOptions,
    out: Vec<CheckResult>,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, measured: f64, expected: f64, tol: f64, cmp: Comparison, detail: String) {
        let mut m = measured;
        if self.opts.corrupt.as_deref() == Some(name) {
            let shift = 0.05 * expected.abs().max(1.0) + 100.0 * tol;
            m = match cmp {
                Comparison::Within | Comparison::AtMost => m + shift,
                Comparison::AtLeast => m - shift,
            };
        }
        let passed = match cmp {
            Comparison::Within => (m - expected).abs() <= tol,
            Comparison::AtLeast => m >= expected,
            Comparison::AtMost => m <= expected,
        };
        self.out.push(CheckResult {
            suite: self.suite.into(),
            name: name.into(),
            passed,
            measured: m,
            expected,
            tol,
            comparison: cmp,
            detail,
        });
    }

    fn fail(&mut self, name: &str, err: impl std::fmt::Display) {
        self.out.push(CheckResult {
            suite: self.suite.into(),
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            expected: f64::NAN,
            tol: 0.0,
            comparison: Comparison::Within,
            detail: format!("error: {err}"),
        });
    }
}

fn analytic(c: &mut Ctx) {
    // sign change of the enhancement located by bisection
    let f = |t: f64| {
        let r = t.atanh();
        (-2.0 * r).exp() - variances_2s(r).unwrap().1
    };
    let (mut lo, mut hi) = (0.05, 0.9);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    c.check("enhancement-boundary", 0.5 * (lo + hi), 0.5, 1e-9, Comparison::Within, "tanh r at which the subtraction stops helping".into());

    let mut worst = 0.0f64;
    for r in [0.05, 0.2, 0.5] {
        let d = optimal_delta_sq(r).unwrap();
        let (_, vy) = variances_2s_displaced(r, d).unwrap();
        let gain = -10.0 * (vy / (-2.0 * r).exp()).log10();
        worst = worst.max((gain - optimal_gain_db()).abs());
    }
    c.check("displaced-gain-universal", worst, 0.0, 1e-9, Comparison::Within, format!("gain {:.6} dB independent of r", optimal_gain_db()));

    let r = (1.0f64 / 3.0).atanh();
    let below = asymptotic_squeeze(r - 1e-6, 0.0).map(|a| a.converges).unwrap_or(false);
    let above = asymptotic_squeeze(r + 1e-6, 0.0).map(|a| a.converges).unwrap_or(true);
    c.check(
        "divergence-boundary",
        f64::from(u8::from(below && !above)),
        1.0,
        0.0,
        Comparison::Within,
        format!("limit exists below r = {r:.4} only"),
    );

    let cutoff = 80;
    let mut worst = 0.0f64;
    for r in [0.1, 0.3, 0.5] {
        let s = two_photon_subtracted(r, 0.0, cutoff).unwrap();
        let m = moments(&s.state.to_density());
        let (vx, vy) = variances_2s(r).unwrap();
        worst = worst.max(((m.var_x - vx) / vx).abs()).max(((m.var_y - vy) / vy).abs());
    }
    c.check("fock-vs-closed-form", worst, 0.0, 1e-8, Comparison::Within, format!("relative error, N = {cutoff}"));
}

fn gaussification(c: &mut Ctx) {
    let rho = match two_photon_subtracted(0.2f64.atanh(), 0.0, 40) {
        Ok(s) => s.state.to_density(),
        Err(e) => return c.fail("asymptote", e),
    };
    match iterate(&rho, &AcceptanceSpec::vacuum(), 200, 1e-8) {
        Ok(rep) => {
            let vy = moments(&rep.final_state).var_y;
            c.check("asymptote", vy, 0.25, 1e-4, Comparison::Within, format!("{} iterations, status {:?}", rep.iterations, rep.status));
        }
        Err(e) => c.fail("asymptote", e),
    }
    match two_photon_subtracted(0.34f64.atanh(), 0.0, 40).and_then(|s| iterate(&s.state.to_density(), &AcceptanceSpec::vacuum(), 200, 1e-8)) {
        Ok(rep) => c.check(
            "divergence",
            f64::from(u8::from(rep.status == GaussificationStatus::Diverged)),
            1.0,
            0.0,
            Comparison::Within,
            rep.reason.unwrap_or_default(),
        ),
        Err(e) => c.fail("divergence", e),
    }
    let mut worst = 0.0f64;
    for n in [0.5, 1.3, 3.0] {
        match (
            gamma_infinity(&rho, n, GammaMethod::Campbell),
            gamma_infinity(&rho, n, GammaMethod::Lossy),
        ) {
            (Ok(a), Ok(b)) => worst = worst.max(a.cov.max_abs_diff(&b.cov)),
            (Err(e), _) | (_, Err(e)) => return c.fail("gamma-methods-agree", e),
        }
    }
    c.check("gamma-methods-agree", worst, 0.0, 1e-8, Comparison::Within, "max elementwise difference".into());

    let coh = FockVector::coherent(num_complex::Complex64::new(0.5, 0.0), 40).to_density();
    let res = fock_filter_prediction(&coh).and_then(|(filtered, pred)| {
        let rep = iterate(&filtered, &AcceptanceSpec::vacuum(), 200, 1e-10)?;
        let target = squeezed_vacuum(pred.tanh_r.atanh(), 40)?.to_density().rotated(-0.5 * pred.phase);
        Ok(rep.final_state.fidelity(&target))
    });
    match res {
        Ok(f) => c.check("fock-filter-purification", f, 0.999, 0.0, Comparison::AtLeast, "fidelity with the predicted squeezed vacuum".into()),
        Err(e) => c.fail("fock-filter-purification", e),
    }
}

fn sampling(c: &mut Ctx) {
    let rho = match two_photon_subtracted(0.2, 0.0, 40) {
        Ok(s) => s.state.to_density(),
        Err(e) => return c.fail("mc-vs-exact-p-svv", e),
    };
    let n_bar = 1.3;
    let res = sample_q(&rho, 200_000, c.opts.seed, "validate")
        .and_then(|s| Ok((mc_gaussify_step(&s, n_bar)?, exact_step_oracle(&rho, n_bar)?)));
    match res {
        Ok((mc, ex)) => {
            c.check(
                "mc-vs-exact-p-svv",
                mc.p_svv,
                ex.p_svv,
                3.0 * mc.p_svv_error(),
                Comparison::Within,
                "3 standard errors".into(),
            );
            let m = mc.survivors.state_moments();
            c.check(
                "mc-vs-exact-var-y",
                m.var_y,
                ex.var_y.unwrap_or(f64::NAN),
                3.0 * m.err_y,
                Comparison::Within,
                "3 standard errors".into(),
            );
        }
        Err(e) => c.fail("mc-vs-exact-p-svv", e),
    }
}

fn tomography(c: &mut Ctx) {
    let rho = DensityMatrix::vacuum(21);
    let res = sample_q(&rho, 200_000, c.opts.seed, "validate").and_then(|s| {
        let h = histogram(&s, DEFAULT_BIN)?;
        let r = maxlik(&h, &MaxLikOptions { max_iters: 200, ..Default::default() })?;
        let drops = r.loglik_trace.windows(2).filter(|w| w[1] < w[0]).count();
        Ok((r.rho.fidelity(&rho), drops))
    });
    match res {
        Ok((f, drops)) => {
            c.check("vacuum-round-trip", f, 0.99, 0.0, Comparison::AtLeast, "fidelity of the reconstruction".into());
            c.check("loglik-monotone", drops as f64, 0.0, 0.0, Comparison::AtMost, "iterations that lowered the likelihood".into());
        }
        Err(e) => c.fail("vacuum-round-trip", e),
    }
}

fn temporal(c: &mut Ctx) {
    let cfg = SynthConfig {
        n_windows: 20_000,
        ..Default::default()
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(c.opts.seed);
    let samples = (0..cfg.n_windows)
        .map(|_| {
            let a: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let b: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            QSample {
                x: a * 3.37f64.sqrt(),
                y: b * 0.6f64.sqrt(),
            }
        })
        .collect();
    let planted = SampleSet {
        samples,
        seed: c.opts.seed,
        source: "validate".into(),
    };
    let res = synth_windows(&cfg, &planted, c.opts.seed).and_then(|(s, v)| {
        let b = covariances(&s, &v)?;
        let m = extract_mode(&b, false);
        let g = cfg.planted_window_mode(0);
        let ov: f64 = m.f.iter().zip(&g).map(|(a, b)| a * b).sum();
        let scan = offset_scan(&s, &v, &m.f, &[0, 1, 2, 3, 4])?;
        let best = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0).unwrap_or(i64::MIN);
        Ok((ov.abs(), best))
    });
    match res {
        Ok((ov, best)) => {
            c.check("mode-overlap", ov, 0.98, 0.0, Comparison::AtLeast, "|<f, g>| at 2e4 windows".into());
            c.check("offset-recovery", best as f64, cfg.channel_offset as f64, 0.0, Comparison::Within, "offset minimising var Y".into());
        }
        Err(e) => c.fail("mode-overlap", e),
    }
}

/// Runs the named suites (all when empty).
pub fn run(suites: &[String], opts: &ValidateOptions) -> Result<Verdict> {
    let names: Vec<String> = if suites.is_empty() {
        SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        suites.to_vec()
    };
    let mut checks = Vec::new();
    for name in &names {
        let suite: &'static str = SUITES
            .iter()
            .find(|s| **s == name.as_str())
            .ok_or_else(|| invalid(format!("unknown suite '{name}', expected one of {SUITES:?}")))?;
        let mut ctx = Ctx {
            suite,
            opts,
            out: Vec::new(),
        };
        match suite {
            "analytic" => analytic(&mut ctx),
            "gaussification" => gaussification(&mut ctx),
            "sampling" => sampling(&mut ctx),
            "tomography" => tomography(&mut ctx),
            _ => temporal(&mut ctx),
        }
        checks.extend(ctx.out);
    }
    Ok(Verdict {
        passed: checks.iter().all(|c| c.passed),
        suites: names,
        checks,
    })
}
