use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sqzdistill::analytic::{
    fig1_dataset, optimal_delta_sq, two_photon_subtracted, variances_2s_displaced, write_fig1_csv,
};
use sqzdistill::fock::{moments, wigner, DensityMatrix, FockVector, Grid};
use sqzdistill::gaussification::{
    fock_filter_prediction, gamma_g, gamma_infinity, gaussify_step, iterate, AcceptanceKind, AcceptanceSpec,
    GammaMethod,
};
use sqzdistill::pipeline::{run_pipeline, PipelineConfig, SourceSpec, DB_CONVENTION};
use sqzdistill::sampling::{exact_step_oracle, mc_multi_step, psvv_sweep, sample_q, write_sweep_csv, SampleSet};
use sqzdistill::temporal::{
    covariances, extract_mode, integrate_quadratures, offset_scan, shot_noise, synth_windows,
    time_resolved_variances, write_mode_csv, write_windows, SynthConfig,
};
use sqzdistill::tomography::{histogram, maxlik, MaxLikOptions, DEFAULT_BIN};
use sqzdistill::util::{db_anti_squeezing, db_squeezing};
use sqzdistill::validate::{self, ValidateOptions};

use crate::config::RunDir;

fn tuned() -> SourceSpec {
    SourceSpec::Tuned {
        initial_db: 2.4,
        subtracted_db: 2.8,
    }
}

fn db_pair(var_x: f64, var_y: f64) -> serde_json::Value {
    json!({
        "var_x": var_x,
        "var_y": var_y,
        "squeezing_db": db_squeezing(var_y),
        "anti_squeezing_db": db_anti_squeezing(var_x),
    })
}

fn wigner_csv(rho: &DensityMatrix, half_width: f64, points: usize) -> Result<Vec<u8>> {
    let w = wigner(rho, &Grid::square(half_width, points))?;
    let mut buf = Vec::new();
    w.write_csv(&mut buf)?;
    Ok(buf)
}

fn samples_from(input: &Option<PathBuf>, source: &SourceSpec, cutoff: usize, count: usize, seed: u64) -> Result<(SampleSet, Option<DensityMatrix>)> {
    match input {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok((SampleSet::read_csv(BufReader::new(f))?, None))
        }
        None => {
            let rho = source.state(cutoff)?;
            let s = sample_q(&rho, count, seed, &format!("{source:?}"))?;
            Ok((s, Some(rho)))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Fig1Config {
    pub r_min: f64,
    pub r_max: f64,
    pub steps: usize,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            r_min: 0.01,
            r_max: 1.0,
            steps: 100,
        }
    }
}

pub fn fig1(cfg: &Fig1Config, dir: &RunDir) -> Result<()> {
    if cfg.steps < 2 || !(cfg.r_max > cfg.r_min) {
        bail!("need steps >= 2 and r_max > r_min");
    }
    let grid: Vec<f64> = (0..cfg.steps)
        .map(|i| cfg.r_min + (cfg.r_max - cfg.r_min) * i as f64 / (cfg.steps - 1) as f64)
        .collect();
    let rows = fig1_dataset(&grid)?;
    let mut buf = Vec::new();
    write_fig1_csv(&rows, &mut buf)?;
    dir.write("fig1.csv", buf)?;
    println!("fig1: {} rows", rows.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SubtractConfig {
    pub r: f64,
    pub delta_sq: f64,
    /// Use the squeezing-optimal `delta^2` instead of `delta_sq`.
    pub optimal_delta: bool,
    pub cutoff: usize,
    pub wigner_half_width: f64,
    pub wigner_points: usize,
}

impl Default for SubtractConfig {
    fn default() -> Self {
        Self {
            r: 0.3466,
            delta_sq: 0.0,
            optimal_delta: false,
            cutoff: 60,
            wigner_half_width: 5.0,
            wigner_points: 101,
        }
    }
}

pub fn subtract(cfg: &SubtractConfig, dir: &RunDir) -> Result<()> {
    let d = if cfg.optimal_delta {
        optimal_delta_sq(cfg.r)?
    } else {
        cfg.delta_sq
    };
    let s = two_photon_subtracted(cfg.r, d, cfg.cutoff)?;
    let rho = s.state.to_density();
    let m = moments(&rho);
    let closed = variances_2s_displaced(cfg.r, d)?;
    let input = db_pair((2.0 * cfg.r).exp(), (-2.0 * cfg.r).exp());
    dir.write_json(
        "report.json",
        &json!({
            "convention": DB_CONVENTION,
            "delta_sq": d,
            "weight": s.weight,
            "input": input,
            "fock": db_pair(m.var_x, m.var_y),
            "closed_form": db_pair(closed.0, closed.1),
        }),
    )?;
    dir.write("state.json", rho.to_json()? + "\n")?;
    dir.write("wigner.csv", wigner_csv(&rho, cfg.wigner_half_width, cfg.wigner_points)?)?;
    println!(
        "subtract: varY {:.6} ({:.3} dB), weight {:.4e}",
        m.var_y,
        db_squeezing(m.var_y),
        s.weight
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussifyExactConfig {
    pub source: SourceSpec,
    /// Start instead from the coherent state `|alpha>` passed through `F = n - 1`.
    pub fock_filter_alpha: Option<f64>,
    pub acceptance: AcceptanceSpec,
    pub max_iters: usize,
    pub tol: f64,
    pub cutoff: usize,
}

impl Default for GaussifyExactConfig {
    fn default() -> Self {
        Self {
            source: SourceSpec::Explicit {
                r: 0.2f64.atanh(),
                eta: 1.0,
                delta_sq: 0.0,
                subtract: true,
            },
            fock_filter_alpha: None,
            acceptance: AcceptanceSpec::vacuum(),
            max_iters: 200,
            tol: 1e-8,
            cutoff: 40,
        }
    }
}

pub fn gaussify_exact(cfg: &GaussifyExactConfig, dir: &RunDir) -> Result<()> {
    let (rho0, filter) = match cfg.fock_filter_alpha {
        Some(a) => {
            let coh = FockVector::coherent(num_complex::Complex64::new(a, 0.0), cfg.cutoff).to_density();
            let (f, pred) = fock_filter_prediction(&coh)?;
            (f, Some(pred))
        }
        None => (cfg.source.state(cfg.cutoff)?, None),
    };
    let rep = iterate(&rho0, &cfg.acceptance, cfg.max_iters, cfg.tol)?;
    let mut prediction = serde_json::Map::new();
    if let Some(p) = filter {
        prediction.insert("fock_filter".into(), serde_json::to_value(p)?);
    }
    match cfg.acceptance.kind {
        AcceptanceKind::VacuumProjection => {
            if let Ok(g) = gamma_g(&rho0) {
                prediction.insert("gamma_g".into(), serde_json::to_value(g)?);
            }
        }
        AcceptanceKind::ThermalWeight => {
            let rho1 = gaussify_step(&rho0, &cfg.acceptance)?.0;
            for m in [GammaMethod::Campbell, GammaMethod::Lossy] {
                if let Ok(g) = gamma_infinity(&rho1, cfg.acceptance.n_bar, m) {
                    prediction.insert(format!("gamma_infinity_{m:?}").to_lowercase(), serde_json::to_value(g)?);
                }
            }
        }
        AcceptanceKind::HardBoundary => {}
    }
    let m = moments(&rep.final_state);
    dir.write("report.json", rep.to_json()? + "\n")?;
    dir.write_json(
        "summary.json",
        &json!({
            "convention": DB_CONVENTION,
            "status": rep.status,
            "iterations": rep.iterations,
            "final": db_pair(m.var_x, m.var_y),
            "prediction": prediction,
        }),
    )?;
    dir.write("final_state.json", rep.final_state.to_json()? + "\n")?;
    println!(
        "gaussify-exact: {:?} after {} iterations, varY {:.6}",
        rep.status, rep.iterations, m.var_y
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussifyMcConfig {
    pub source: SourceSpec,
    /// Q-samples CSV to use instead of sampling `source`.
    pub input: Option<PathBuf>,
    pub samples: usize,
    pub schedule: Vec<f64>,
    pub seed: u64,
    pub cutoff: usize,
}

impl Default for GaussifyMcConfig {
    fn default() -> Self {
        Self {
            source: tuned(),
            input: None,
            samples: 1_000_000,
            schedule: vec![1.3],
            seed: 1,
            cutoff: 40,
        }
    }
}

pub fn gaussify_mc(cfg: &GaussifyMcConfig, dir: &RunDir) -> Result<()> {
    let (input, rho) = samples_from(&cfg.input, &cfg.source, cfg.cutoff, cfg.samples, cfg.seed)?;
    let steps = mc_multi_step(&input, &cfg.schedule)?;
    let m0 = input.state_moments();
    let mut rows = vec![json!({"step": 0, "samples": input.len(), "moments": m0, "db": db_pair(m0.var_x, m0.var_y)})];
    for s in &steps {
        let m = s.survivors.state_moments();
        rows.push(json!({
            "step": s.step,
            "n_bar": s.n_bar,
            "p_svv": s.p_svv,
            "p_svv_error": s.p_svv_error(),
            "samples": s.survivors.len(),
            "moments": m,
            "db": db_pair(m.var_x, m.var_y),
        }));
    }
    let oracle = match (&rho, cfg.schedule.first()) {
        (Some(r), Some(&n)) => Some(exact_step_oracle(r, n)?),
        _ => None,
    };
    dir.write_json(
        "steps.json",
        &json!({
            "convention": DB_CONVENTION,
            "steps": rows,
            "exact_first_step": oracle.map(|o| json!({"p_svv": o.p_svv, "var_x": o.var_x, "var_y": o.var_y})),
        }),
    )?;
    if let Some(last) = steps.last() {
        let mut buf = Vec::new();
        last.survivors.write_csv(&mut buf)?;
        dir.write("survivors.csv", buf)?;
        let m = last.survivors.state_moments();
        println!(
            "gaussify-mc: {} steps, last p_svv {:.4}, varY {:.4} ({:.3} dB)",
            steps.len(),
            last.p_svv,
            m.var_y,
            db_squeezing(m.var_y)
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub source: SourceSpec,
    pub input: Option<PathBuf>,
    pub samples: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub cutoff: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            source: tuned(),
            input: None,
            samples: 1_000_000,
            grid: vec![0.3, 0.5, 0.75, 1.0, 1.3, 1.6, 2.0, 2.4, 2.8, 3.5, 4.5, 6.0, 8.0],
            seed: 1,
            cutoff: 40,
        }
    }
}

pub fn sweep(cfg: &SweepConfig, dir: &RunDir) -> Result<()> {
    let (input, _) = samples_from(&cfg.input, &cfg.source, cfg.cutoff, cfg.samples, cfg.seed)?;
    let rows = psvv_sweep(&input, &cfg.grid)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    dir.write("sweep.csv", buf)?;
    println!("sweep-psvv: {} thresholds", rows.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TomoConfig {
    pub source: SourceSpec,
    pub input: Option<PathBuf>,
    pub samples: usize,
    pub seed: u64,
    pub cutoff: usize,
    pub bin: f64,
    pub maxlik: MaxLikOptions,
    pub wigner_half_width: f64,
    pub wigner_points: usize,
}

impl Default for TomoConfig {
    fn default() -> Self {
        Self {
            source: tuned(),
            input: None,
            samples: 1_000_000,
            seed: 1,
            cutoff: 40,
            bin: DEFAULT_BIN,
            maxlik: MaxLikOptions::default(),
            wigner_half_width: 5.0,
            wigner_points: 101,
        }
    }
}

pub fn tomo(cfg: &TomoConfig, dir: &RunDir) -> Result<()> {
    let (input, truth) = samples_from(&cfg.input, &cfg.source, cfg.cutoff, cfg.samples, cfg.seed)?;
    let h = histogram(&input, cfg.bin)?;
    let r = maxlik(&h, &cfg.maxlik)?;
    let m = moments(&r.rho);
    let fidelity = match &truth {
        Some(t) => Some(r.rho.fidelity(&t.resized(cfg.maxlik.cutoff).normalized()?.0)),
        None => None,
    };
    dir.write("histogram.json", h.to_json()? + "\n")?;
    dir.write("rho.json", r.rho.to_json()? + "\n")?;
    dir.write("report.json", r.report_json()? + "\n")?;
    let mut ll = Vec::new();
    r.write_loglik_csv(&mut ll)?;
    dir.write("loglik.csv", ll)?;
    dir.write_json(
        "summary.json",
        &json!({
            "convention": DB_CONVENTION,
            "samples": input.len(),
            "moments": db_pair(m.var_x, m.var_y),
            "fidelity_to_source": fidelity,
        }),
    )?;
    dir.write("wigner.csv", wigner_csv(&r.rho, cfg.wigner_half_width, cfg.wigner_points)?)?;
    println!(
        "tomo: {} iterations ({}), varY {:.4}{}",
        r.iterations,
        r.stop_rule,
        m.var_y,
        fidelity.map(|f| format!(", fidelity {f:.5}")).unwrap_or_default()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalConfig {
    pub source: SourceSpec,
    pub seed: u64,
    pub cutoff: usize,
    pub windows: SynthConfig,
    pub whiten: bool,
    pub offsets: Vec<i64>,
    /// Also write the signal and vacuum windows as binary files.
    pub write_windows: bool,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            source: tuned(),
            seed: 1,
            cutoff: 40,
            windows: SynthConfig::default(),
            whiten: false,
            offsets: (-4..=6).collect(),
            write_windows: false,
        }
    }
}

pub fn temporal(cfg: &TemporalConfig, dir: &RunDir) -> Result<()> {
    if cfg.offsets.is_empty() {
        bail!("offsets must not be empty");
    }
    let rho = cfg.source.state(cfg.cutoff)?;
    let planted = sample_q(&rho, cfg.windows.n_windows, cfg.seed, "temporal-source")?;
    let (signal, vacuum) = synth_windows(&cfg.windows, &planted, cfg.seed)?;
    let bundle = covariances(&signal, &vacuum)?;
    let mode = extract_mode(&bundle, cfg.whiten);
    let scan = offset_scan(&signal, &vacuum, &mode.f, &cfg.offsets)?;
    let offset = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0).unwrap_or(0);
    let norm = shot_noise(&vacuum, &mode.f, offset)?;
    let out = integrate_quadratures(&signal, &mode.f, offset, &norm, cfg.seed, "temporal-mode")?;
    let m = out.state_moments();

    let mut eig = String::from("index,eigenvalue\n");
    for (i, l) in bundle.eigenvalues.iter().enumerate() {
        eig.push_str(&format!("{},{}\n", i + 1, l));
    }
    dir.write("eigenvalues.csv", eig)?;
    let mut buf = Vec::new();
    write_mode_csv(&mode.f, &mut buf)?;
    dir.write("mode.csv", buf)?;
    let mut scan_csv = String::from("offset,varYQ\n");
    for (o, v) in &scan {
        scan_csv.push_str(&format!("{o},{v}\n"));
    }
    dir.write("offset_scan.csv", scan_csv)?;
    for (name, src) in [("traces.csv", &signal), ("vacuum_traces.csv", &vacuum)] {
        let mut buf = Vec::new();
        time_resolved_variances(src).write_csv(&mut buf)?;
        dir.write(name, buf)?;
    }
    let mut buf = Vec::new();
    out.write_csv(&mut buf)?;
    dir.write("samples.csv", buf)?;
    let g = cfg.windows.planted_window_mode(0);
    let overlap: f64 = mode.f.iter().zip(&g).map(|(a, b)| a * b).sum();
    dir.write_json(
        "report.json",
        &json!({
            "convention": DB_CONVENTION,
            "lambda1": mode.lambda1,
            "top_eigenvalues": bundle.top_eigenvalues(10),
            "gap_ratio": mode.gap_ratio,
            "ambiguous": mode.ambiguous,
            "whitened": mode.whitened,
            "mode_variance": sqzdistill::temporal::mode_variance(&mode.f, &bundle)?,
            "overlap_with_planted": overlap.abs(),
            "offset": offset,
            "d_condition": bundle.d_condition,
            "recovered": db_pair(m.var_x, m.var_y),
        }),
    )?;
    if cfg.write_windows {
        let f = File::create(dir.path.join("windows.bin"))?;
        write_windows(&signal, std::io::BufWriter::new(f))?;
        let f = File::create(dir.path.join("vacuum.bin"))?;
        write_windows(&vacuum, std::io::BufWriter::new(f))?;
    }
    println!(
        "temporal: lambda1 {:.4}, overlap {:.4}, offset {}, varY {:.4} ({:.3} dB)",
        mode.lambda1,
        overlap.abs(),
        offset,
        m.var_y,
        db_squeezing(m.var_y)
    );
    Ok(())
}

pub fn pipeline(cfg: &PipelineConfig, dir: &RunDir) -> Result<()> {
    let rep = run_pipeline(cfg)?;
    rep.write_bundle(&dir.path)?;
    for s in &rep.stages {
        println!(
            "{:>18}: varY {:.4} ({:.3} dB){}",
            s.stage,
            s.var_y,
            s.squeezing_db,
            s.p_svv.map(|p| format!(", p_svv {p:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateConfig {
    pub suites: Vec<String>,
    pub corrupt: Option<String>,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            suites: Vec::new(),
            corrupt: None,
            seed: 1,
        }
    }
}

/// Returns whether every check passed.
pub fn validate(cfg: &ValidateConfig, dir: &RunDir) -> Result<bool> {
    let v = validate::run(
        &cfg.suites,
        &ValidateOptions {
            seed: cfg.seed,
            corrupt: cfg.corrupt.clone(),
        },
    )?;
    dir.write_json("verdict.json", &v)?;
    for c in &v.checks {
        println!(
            "{} {}/{}: measured {} expected {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.measured,
            c.expected,
            c.detail
        );
    }
    Ok(v.passed)
}
