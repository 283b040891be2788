//! End-to-end emulation: source state -> triggered windows -> temporal mode
//! -> integrated Q-samples -> emulated Gaussification -> MaxLik.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{lossy_squeezed, lossy_subtracted, tune_lossy_source, SqueezeParams};
use crate::error::Error;
use crate::fock::{moments, wigner, DensityMatrix, Grid, WignerField};
use crate::sampling::{mc_multi_step, sample_q, SampleSet};
use crate::temporal::{
    covariances, extract_mode, integrate_quadratures, offset_scan, shot_noise, synth_windows,
    time_resolved_variances, write_mode_csv, SynthConfig, VarianceTraces,
};
use crate::tomography::{histogram, maxlik, MaxLikOptions, DEFAULT_BIN};
use crate::util::{db_anti_squeezing, db_squeezing};

pub const DB_CONVENTION: &str = "squeezing dB = -10 log10(varY), anti-squeezing dB = +10 log10(varX), vacuum variance 1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceSpec {
    /// Loss-tuned source reproducing the two quoted squeezing levels.
    Tuned { initial_db: f64, subtracted_db: f64 },
    Explicit {
        r: f64,
        eta: f64,
        #[serde(default)]
        delta_sq: f64,
        subtract: bool,
    },
    Vacuum,
}

impl SourceSpec {
    /// Density matrix of the source (the subtracted state when subtraction
    /// is on).
    pub fn state(&self, cutoff: usize) -> crate::Result<DensityMatrix> {
        let (p, subtract) = self.resolve()?;
        if subtract {
            lossy_subtracted(&p, cutoff)
        } else {
            lossy_squeezed(p.r, p.eta, cutoff)
        }
    }

    pub fn resolve(&self) -> crate::Result<(SqueezeParams, bool)> {
        match *self {
            SourceSpec::Tuned {
                initial_db,
                subtracted_db,
            } => Ok((tune_lossy_source(initial_db, subtracted_db)?, true)),
            SourceSpec::Explicit {
                r,
                eta,
                delta_sq,
                subtract,
            } => {
                let p = SqueezeParams { r, delta_sq, eta };
                p.validate()?;
                Ok((p, subtract))
            }
            SourceSpec::Vacuum => Ok((SqueezeParams::pure(0.0), false)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub source: SourceSpec,
    pub seed: u64,
    /// Fock cutoff for the source state.
    pub cutoff: usize,
    pub windows: SynthConfig,
    pub whiten: bool,
    /// Channel offset for integration; `None` picks the minimum of a scan.
    pub offset: Option<i64>,
    pub offset_scan: Vec<i64>,
    /// Hard-boundary thresholds, one per emulated Gaussification step.
    pub gaussify: Vec<f64>,
    pub tomography: bool,
    pub maxlik: MaxLikOptions,
    pub bin: f64,
    pub wigner_half_width: f64,
    pub wigner_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: SourceSpec::Tuned {
                initial_db: 2.4,
                subtracted_db: 2.8,
            },
            seed: 1,
            cutoff: 40,
            windows: SynthConfig::default(),
            whiten: false,
            offset: None,
            offset_scan: (-4..=6).collect(),
            gaussify: vec![2.8],
            tomography: true,
            maxlik: MaxLikOptions::default(),
            bin: DEFAULT_BIN,
            wigner_half_width: 5.0,
            wigner_points: 101,
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn at<T>(stage: &'static str, r: crate::Result<T>) -> Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub var_x: f64,
    pub var_y: f64,
    pub err_x: Option<f64>,
    pub err_y: Option<f64>,
    pub squeezing_db: f64,
    pub anti_squeezing_db: f64,
    pub p_svv: Option<f64>,
    pub samples: Option<usize>,
}

impl StageReport {
    fn exact(stage: &str, rho: &DensityMatrix) -> Self {
        let m = moments(rho);
        Self {
            stage: stage.into(),
            var_x: m.var_x,
            var_y: m.var_y,
            err_x: None,
            err_y: None,
            squeezing_db: db_squeezing(m.var_y),
            anti_squeezing_db: db_anti_squeezing(m.var_x),
            p_svv: None,
            samples: None,
        }
    }

    fn sampled(stage: &str, s: &SampleSet, p_svv: Option<f64>) -> Self {
        let m = s.state_moments();
        Self {
            stage: stage.into(),
            var_x: m.var_x,
            var_y: m.var_y,
            err_x: Some(m.err_x),
            err_y: Some(m.err_y),
            squeezing_db: db_squeezing(m.var_y),
            anti_squeezing_db: db_anti_squeezing(m.var_x),
            p_svv,
            samples: Some(s.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub lambda1: f64,
    pub top_eigenvalues: Vec<f64>,
    pub gap_ratio: f64,
    pub ambiguous: bool,
    pub whitened: bool,
    /// `|<f, g>|` with the planted mode.
    pub overlap: f64,
    pub offset: i64,
    pub offset_scan: Vec<(i64, f64)>,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographySummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_loglik: f64,
    pub fixed_point_residual: f64,
    pub samples: usize,
    pub rho: DensityMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub convention: String,
    pub config: PipelineConfig,
    pub source_params: SqueezeParams,
    pub stages: Vec<StageReport>,
    pub mode: ModeSummary,
    pub tomography: Option<TomographySummary>,
    #[serde(skip)]
    pub traces: Option<VarianceTraces>,
    #[serde(skip)]
    pub wigner: Option<WignerField>,
}

impl PipelineReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// `report.json`, `mode.csv`, `traces.csv`, `eigenvalues.csv` and, with
    /// tomography, `wigner.csv` and `rho.json`.
    pub fn write_bundle(&self, dir: &Path) -> crate::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let mut mode = Vec::new();
        write_mode_csv(&self.mode.f, &mut mode)?;
        fs::write(dir.join("mode.csv"), mode)?;
        let mut eig = String::from("index,eigenvalue\n");
        for (i, l) in self.mode.top_eigenvalues.iter().enumerate() {
            eig.push_str(&format!("{},{}\n", i + 1, l));
        }
        fs::write(dir.join("eigenvalues.csv"), eig)?;
        if let Some(t) = &self.traces {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            fs::write(dir.join("traces.csv"), buf)?;
        }
        if let Some(w) = &self.wigner {
            let mut buf = Vec::new();
            w.write_csv(&mut buf)?;
            fs::write(dir.join("wigner.csv"), buf)?;
        }
        if let Some(t) = &self.tomography {
            fs::write(dir.join("rho.json"), t.rho.to_json()? + "\n")?;
        }
        Ok(())
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, StageError> {
    let (params, subtract) = at("source", cfg.source.resolve())?;
    let unconditioned = at("source", lossy_squeezed(params.r, params.eta, cfg.cutoff))?;
    let mut stages = vec![StageReport::exact("initial", &unconditioned)];
    let rho = if subtract {
        let s = at("source", lossy_subtracted(&params, cfg.cutoff))?;
        stages.push(StageReport::exact("subtracted-exact", &s));
        s
    } else {
        unconditioned
    };

    let planted = at("sampling", sample_q(&rho, cfg.windows.n_windows, cfg.seed, "pipeline-source"))?;
    let (signal, vacuum) = at("windows", synth_windows(&cfg.windows, &planted, cfg.seed))?;
    drop(planted);
    let bundle = at("mode", covariances(&signal, &vacuum))?;
    let mode = extract_mode(&bundle, cfg.whiten);
    let g = cfg.windows.planted_window_mode(0);
    let overlap = mode.f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>().abs();
    let scan = if cfg.offset.is_none() {
        at("mode", offset_scan(&signal, &vacuum, &mode.f, &cfg.offset_scan))?
    } else {
        Vec::new()
    };
    let offset = match cfg.offset {
        Some(o) => o,
        None => scan
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|p| p.0)
            .ok_or_else(|| StageError {
                stage: "mode",
                error: crate::error::invalid("empty offset scan"),
            })?,
    };
    let norm = at("integrate", shot_noise(&vacuum, &mode.f, offset))?;
    let recovered = at(
        "integrate",
        integrate_quadratures(&signal, &mode.f, offset, &norm, cfg.seed, "pipeline-mode"),
    )?;
    stages.push(StageReport::sampled(
        if subtract { "subtracted" } else { "recovered" },
        &recovered,
        None,
    ));
    let traces = time_resolved_variances(&signal);

    let steps = at("gaussify", mc_multi_step(&recovered, &cfg.gaussify))?;
    for s in &steps {
        stages.push(StageReport::sampled(
            &format!("gaussify-{}", s.step),
            &s.survivors,
            Some(s.p_svv),
        ));
    }
    let last = steps.last().map(|s| &s.survivors).unwrap_or(&recovered);

    let (tomography, wig) = if cfg.tomography {
        let h = at("tomography", histogram(last, cfg.bin))?;
        let r = at("tomography", maxlik(&h, &cfg.maxlik))?;
        stages.push(StageReport::exact("tomography", &r.rho));
        let grid = Grid::square(cfg.wigner_half_width, cfg.wigner_points);
        let w = at("tomography", wigner(&r.rho, &grid))?;
        (
            Some(TomographySummary {
                iterations: r.iterations,
                converged: r.converged,
                final_loglik: r.loglik_trace.last().copied().unwrap_or(f64::NAN),
                fixed_point_residual: r.fixed_point_residual,
                samples: last.len(),
                rho: r.rho,
            }),
            Some(w),
        )
    } else {
        (None, None)
    };

    Ok(PipelineReport {
        convention: DB_CONVENTION.into(),
        config: cfg.clone(),
        source_params: params,
        stages,
        mode: ModeSummary {
            lambda1: mode.lambda1,
            top_eigenvalues: bundle.top_eigenvalues(10).to_vec(),
            gap_ratio: mode.gap_ratio,
            ambiguous: mode.ambiguous,
            whitened: mode.whitened,
            overlap,
            offset,
            offset_scan: scan,
            f: mode.f,
        },
        tomography,
        traces: Some(traces),
        wigner: wig,
    })
}
