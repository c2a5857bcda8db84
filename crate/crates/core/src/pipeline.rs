//! End-to-end experiment: simulate every phantom, reconstruct it with each
//! method, score the images and write the report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::{ExperimentConfig, SdBasis};
use crate::error::Result;
use crate::forward::{
    average_frames, noisy_frames, normalize, Calibration, CapacitanceFrame, ForwardModel,
};
use crate::geometry::PixelGrid;
use crate::io::{self, ImageFormat};
use crate::linops::SensitivityMatrix;
use crate::metrics::{normalize_image, sd_metric, threshold_op};
use crate::par::{self, Execution};
use crate::phantom::{phantom, PermittivityImage, PhantomKind};
use crate::solvers::{aadmm_solve, depiht, landweber, lbp, DepihtParams, DepihtRun, Method, ReconResult};

/// Everything that does not depend on the phantom: forward model,
/// calibration and sensitivity matrix.
#[derive(Clone, Debug)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub model: ForwardModel,
    pub calibration: Calibration,
    pub sensitivity: SensitivityMatrix,
}

/// Simulated acquisition of one phantom.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub kind: PhantomKind,
    pub truth: PermittivityImage,
    pub clean: CapacitanceFrame,
    pub frames: Vec<CapacitanceFrame>,
    pub lambda: Vec<f64>,
}

impl Setup {
    pub fn new(config: &ExperimentConfig, exec: Execution) -> Result<Self> {
        config.validate()?;
        let model = ForwardModel::new(config.geometry()?, config.grid()?, config.forward.clone(), exec)?;
        let calibration = model.calibrate()?;
        let sensitivity = model.sensitivity(&calibration)?;
        Ok(Self {
            config: config.clone(),
            model,
            calibration,
            sensitivity,
        })
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.model.grid
    }

    /// Noise seed for `kind`: fixed per phantom, independent of which other
    /// phantoms are in the run.
    pub fn phantom_seed(&self, kind: PhantomKind) -> u64 {
        let k = PhantomKind::ALL.iter().position(|&p| p == kind).unwrap_or(0);
        self.config.seed.wrapping_add(k as u64)
    }

    pub fn simulate(&self, kind: PhantomKind) -> Result<Simulation> {
        let perm = self.model.shapes_perm(&kind.shapes())?;
        let clean = self.model.frame(&perm)?;
        let noise = &self.config.noise;
        let frames = noisy_frames(&clean, noise.snr_db, noise.frames, self.phantom_seed(kind), self.model.exec);
        let lambda = self.lambda_from_frames(&frames)?;
        Ok(Simulation {
            kind,
            truth: phantom(kind, self.grid())?,
            clean,
            frames,
            lambda,
        })
    }

    /// Averages `frames` and normalizes against the calibration.
    pub fn lambda_from_frames(&self, frames: &[CapacitanceFrame]) -> Result<Vec<f64>> {
        Ok(normalize(&average_frames(frames)?, &self.calibration.pair)?.lambda)
    }
}

/// A method's output plus the intermediate DEPIHT run, if any.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub result: ReconResult,
    pub depiht: Option<DepihtRun>,
}

/// Landweber output, min-max normalized.
fn run_li(lambda: &[f64], s: &SensitivityMatrix, config: &ExperimentConfig) -> Result<ReconResult> {
    let mut r = landweber(lambda, s, &config.landweber)?;
    r.image = normalize_image(&r.image);
    Ok(r)
}

fn run_aadmm(lambda: &[f64], s: &SensitivityMatrix, grid: &PixelGrid, config: &ExperimentConfig) -> Result<ReconResult> {
    Ok(aadmm_solve(lambda, s, grid, &config.aadmm)?.result)
}

/// Runs DEPIHT from `base` and folds both stages into one result whose
/// elapsed time is the sum of the two.
pub fn compose_depiht(
    base: &ReconResult,
    lambda: &[f64],
    s: &SensitivityMatrix,
    params: &DepihtParams,
    method: Method,
) -> Result<Reconstruction> {
    let run = depiht(&base.image.values, lambda, s, params)?;
    let mut history = base.history.clone();
    history.extend_from_slice(&run.result.history);
    let mut params = BTreeMap::new();
    for (stage, src) in [(base.method.name(), &base.params), ("depiht", &run.result.params)] {
        for (k, v) in src {
            params.insert(format!("{stage}.{k}"), v.clone());
        }
    }
    Ok(Reconstruction {
        result: ReconResult {
            image: run.result.image.clone(),
            history,
            elapsed: base.elapsed + run.result.elapsed,
            method,
            params,
        },
        depiht: Some(run),
    })
}

/// Reconstructs `lambda` with a single method.
pub fn reconstruct(
    method: Method,
    lambda: &[f64],
    s: &SensitivityMatrix,
    grid: &PixelGrid,
    config: &ExperimentConfig,
) -> Result<Reconstruction> {
    let plain = |result| Reconstruction { result, depiht: None };
    match method {
        Method::Lbp => {
            let start = std::time::Instant::now();
            let image = normalize_image(&lbp(lambda, s)?);
            Ok(plain(ReconResult {
                image,
                history: Vec::new(),
                elapsed: start.elapsed().as_secs_f64(),
                method,
                params: BTreeMap::new(),
            }))
        }
        Method::Li => Ok(plain(run_li(lambda, s, config)?)),
        Method::Aadmm => Ok(plain(run_aadmm(lambda, s, grid, config)?)),
        Method::AadmmDepiht => compose_depiht(&run_aadmm(lambda, s, grid, config)?, lambda, s, &config.depiht, method),
        Method::LiDepiht => compose_depiht(&run_li(lambda, s, config)?, lambda, s, &config.depiht, method),
        Method::Depiht | Method::EpihtI | Method::EpihtII => Err(crate::error::Error::param(format!(
            "`{method}` post-processes an existing image; use `postprocess`"
        ))),
    }
}

/// Scores of one successful cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub recon: Reconstruction,
    /// Fluctuation on the configured basis.
    pub sd: f64,
    pub sd_normalized: f64,
    pub sd_delivered: f64,
    /// Min-max normalized image binarized at the configured threshold.
    pub thresholded: PermittivityImage,
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub phantom: PhantomKind,
    pub method: Method,
    pub outcome: std::result::Result<CellResult, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// `q` the DEPIHT stages used.
    pub q: Option<f64>,
    pub truths: Vec<(PhantomKind, PermittivityImage)>,
    pub cells: Vec<Cell>,
}

fn score(recon: Reconstruction, config: &ExperimentConfig) -> Result<CellResult> {
    let normalized = normalize_image(&recon.result.image);
    let sd_normalized = sd_metric(&normalized);
    let sd_delivered = sd_metric(&recon.result.image);
    let sd = match config.metrics.sd_basis {
        SdBasis::Normalized => sd_normalized,
        SdBasis::Delivered => sd_delivered,
    };
    Ok(CellResult {
        thresholded: threshold_op(&normalized, config.metrics.threshold)?,
        recon,
        sd,
        sd_normalized,
        sd_delivered,
    })
}

/// Base images are shared: `aadmm` and `aadmm-depiht` in the same run reuse
/// one AADMM solve, so the DEPIHT overhead is measured against the same run.
fn run_phantom(sim: &Simulation, setup: &Setup) -> Vec<Cell> {
    let config = &setup.config;
    let s = &setup.sensitivity;
    let lambda = &sim.lambda;
    let wants = |a: Method, b: Method| config.methods.contains(&a) || config.methods.contains(&b);
    let li = wants(Method::Li, Method::LiDepiht).then(|| run_li(lambda, s, config).map_err(|e| e.to_string()));
    let aadmm = wants(Method::Aadmm, Method::AadmmDepiht)
        .then(|| run_aadmm(lambda, s, setup.grid(), config).map_err(|e| e.to_string()));

    let base = |b: &Option<std::result::Result<ReconResult, String>>| b.clone().expect("base requested");
    let depiht_on = |b: ReconResult, method| {
        compose_depiht(&b, lambda, s, &config.depiht, method).map_err(|e| e.to_string())
    };
    config
        .methods
        .iter()
        .map(|&method| {
            let recon = match method {
                Method::Li => base(&li).map(|result| Reconstruction { result, depiht: None }),
                Method::Aadmm => base(&aadmm).map(|result| Reconstruction { result, depiht: None }),
                Method::LiDepiht => base(&li).and_then(|b| depiht_on(b, method)),
                Method::AadmmDepiht => base(&aadmm).and_then(|b| depiht_on(b, method)),
                other => reconstruct(other, lambda, s, setup.grid(), config).map_err(|e| e.to_string()),
            };
            Cell {
                phantom: sim.kind,
                method,
                outcome: recon.and_then(|r| score(r, config).map_err(|e| e.to_string())),
            }
        })
        .collect()
}

/// Runs the configured grid. Simulation runs in parallel under `exec`;
/// reconstructions run one at a time so their wall-clock times are clean.
/// A failing cell is recorded and the run continues.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    let setup = Setup::new(config, exec)?;
    run_with_setup(&setup)
}

pub fn run_with_setup(setup: &Setup) -> Result<ExperimentReport> {
    let config = &setup.config;
    let sims = par::map_slice(setup.model.exec, &config.phantoms, |&k| setup.simulate(k));
    let mut truths = Vec::new();
    let mut cells = Vec::new();
    for (&kind, sim) in config.phantoms.iter().zip(sims) {
        truths.push((kind, phantom(kind, setup.grid())?));
        match sim {
            Ok(sim) => cells.extend(run_phantom(&sim, setup)),
            Err(e) => cells.extend(config.methods.iter().map(|&method| Cell {
                phantom: kind,
                method,
                outcome: Err(format!("simulation failed: {e}")),
            })),
        }
    }
    let q = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::AadmmDepiht | Method::LiDepiht))
        .then(|| config.depiht.resolve_q(&setup.sensitivity));
    Ok(ExperimentReport {
        config: config.clone(),
        q,
        truths,
        cells,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl ExperimentReport {
    pub fn cell(&self, phantom: PhantomKind, method: Method) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.phantom == phantom && c.method == method)
            .and_then(|c| c.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }

    /// The score table. Wall-clock times are left out so that two runs with
    /// the same seed produce identical bytes; see [`Self::timing_csv`].
    pub fn report_csv(&self) -> String {
        let mut out = String::from(
            "phantom,method,status,sd,sd_normalized,sd_delivered,support,final_residual,iterations,\
             q,epiht1_threshold,epiht1_min_abs,guard_fires_1,guard_fires_2,message\n",
        );
        for c in &self.cells {
            match &c.outcome {
                Ok(r) => {
                    let res = &r.recon.result;
                    let d = r.recon.depiht.as_ref();
                    let p1 = d.map(|d| &d.phase1);
                    let min_abs = p1.and_then(|p| {
                        p.result
                            .image
                            .values
                            .iter()
                            .filter(|v| **v != 0.0)
                            .map(|v| v.abs())
                            .min_by(f64::total_cmp)
                    });
                    writeln!(
                        out,
                        "{},{},ok,{},{},{},{},{},{},{},{},{},{},{},",
                        c.phantom,
                        c.method,
                        r.sd,
                        r.sd_normalized,
                        r.sd_delivered,
                        res.image.support(),
                        fmt_opt(res.final_residual()),
                        res.history.len(),
                        fmt_opt(d.map(|d| d.q)),
                        fmt_opt(d.map(|d| (2.0 * self.config.depiht.phase1.r / d.q).sqrt())),
                        fmt_opt(min_abs),
                        d.map_or_else(String::new, |d| d.phase1.guard_fires.to_string()),
                        d.map_or_else(String::new, |d| d.phase2.guard_fires.to_string()),
                    )
                    .unwrap();
                }
                Err(msg) => {
                    let msg = msg.replace([',', '\n'], ";");
                    writeln!(out, "{},{},error,,,,,,,,,,,,{msg}", c.phantom, c.method).unwrap();
                }
            }
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("phantom,method,elapsed_s\n");
        for c in &self.cells {
            if let Ok(r) = &c.outcome {
                writeln!(out, "{},{},{}", c.phantom, c.method, r.recon.result.elapsed).unwrap();
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let methods = &self.config.methods;
        let basis = match self.config.metrics.sd_basis {
            SdBasis::Normalized => "min-max normalized images",
            SdBasis::Delivered => "images as delivered",
        };
        writeln!(out, "ECT reconstruction comparison (seed {})", self.config.seed).unwrap();
        writeln!(
            out,
            "noise: {} dB SNR, {} frames averaged; SD on {basis}",
            self.config.noise.snr_db, self.config.noise.frames
        )
        .unwrap();
        if let Some(q) = self.q {
            writeln!(out, "DEPIHT q = {q:.4}").unwrap();
        }
        let table = |out: &mut String, title: &str, f: &dyn Fn(&CellResult) -> String| {
            writeln!(out, "\n{title}").unwrap();
            write!(out, "{:<14}", "phantom").unwrap();
            for m in methods {
                write!(out, "{:>14}", m.name()).unwrap();
            }
            out.push('\n');
            for (kind, _) in &self.truths {
                write!(out, "{:<14}", kind.name()).unwrap();
                for &m in methods {
                    let v = self.cell(*kind, m).map_or_else(|| "error".to_string(), f);
                    write!(out, "{v:>14}").unwrap();
                }
                out.push('\n');
            }
        };
        table(&mut out, "standard deviation", &|r| format!("{:.4}", r.sd));
        table(&mut out, "elapsed time (s)", &|r| format!("{:.3}", r.recon.result.elapsed));
        table(&mut out, "DEPIHT guard fires (phase I / II)", &|r| match &r.recon.depiht {
            Some(d) => format!(
                "{}/{} {}/{}",
                d.phase1.guard_fires,
                d.phase1.guard_checks.len(),
                d.phase2.guard_fires,
                d.phase2.guard_checks.len()
            ),
            None => "-".into(),
        });
        let failures: Vec<_> = self.failures().collect();
        if !failures.is_empty() {
            writeln!(out, "\nfailed cells").unwrap();
            for c in failures {
                writeln!(out, "  {} / {}: {}", c.phantom, c.method, c.outcome.as_ref().unwrap_err()).unwrap();
            }
        }
        out
    }

    /// Writes `report.csv`, `timing.csv`, `summary.txt`, the configuration,
    /// per-cell histories and images (raw CSV, normalized PGM and the
    /// thresholded pair) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_text_file(&dir.join("report.csv"), &self.report_csv())?;
        io::write_text_file(&dir.join("timing.csv"), &self.timing_csv())?;
        io::write_text_file(&dir.join("summary.txt"), &self.summary())?;
        io::write_text_file(&dir.join("config.toml"), &self.config.to_toml())?;
        let grid = self.config.grid()?;
        let images = dir.join("images");
        for (kind, truth) in &self.truths {
            write_image_pair(&images, &format!("{kind}_truth"), truth, &grid)?;
        }
        for c in &self.cells {
            let Ok(r) = &c.outcome else { continue };
            let stem = format!("{}_{}", c.phantom, c.method);
            write_image_pair(&images, &stem, &r.recon.result.image, &grid)?;
            write_image_pair(&images, &format!("{stem}_thr"), &r.thresholded, &grid)?;
            io::write_text_file(
                &dir.join("history").join(format!("{stem}.csv")),
                &history_csv(&r.recon.result),
            )?;
        }
        Ok(())
    }
}

/// Raw values as CSV, min-max normalized grey levels as PGM.
pub fn write_image_pair(dir: &Path, stem: &str, image: &PermittivityImage, grid: &PixelGrid) -> Result<()> {
    io::write_image(&dir.join(format!("{stem}.csv")), image, grid, ImageFormat::Csv)?;
    io::write_image(
        &dir.join(format!("{stem}.pgm")),
        &normalize_image(image),
        grid,
        ImageFormat::Pgm,
    )
}

pub fn history_csv(r: &ReconResult) -> String {
    let mut out = String::from("iteration,residual,objective\n");
    for (k, h) in r.history.iter().enumerate() {
        writeln!(out, "{},{},{}", k + 1, h.residual, h.objective).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            grid_side: 16,
            phantoms: vec![PhantomKind::Cross, PhantomKind::ThreeCircles],
            methods: vec![Method::Li, Method::Aadmm, Method::AadmmDepiht, Method::LiDepiht, Method::Lbp],
            noise: crate::config::NoiseConfig { snr_db: 35.0, frames: 20 },
            landweber: crate::solvers::LandweberParams { iters: 200, ..Default::default() },
            aadmm: crate::solvers::AadmmParams { iters: 30, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn grid_is_complete_and_composites_add_time() {
        let report = run_experiment(&small_config(), Execution::default()).unwrap();
        assert_eq!(report.cells.len(), 10);
        assert_eq!(report.failures().count(), 0);
        for kind in [PhantomKind::Cross, PhantomKind::ThreeCircles] {
            let a = report.cell(kind, Method::Aadmm).unwrap();
            let ad = report.cell(kind, Method::AadmmDepiht).unwrap();
            let d = ad.recon.depiht.as_ref().unwrap();
            assert_eq!(ad.recon.result.elapsed, a.recon.result.elapsed + d.result.elapsed);
            assert!(ad.thresholded.values.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        let csv = report.report_csv();
        assert_eq!(csv.lines().count(), 11);
        assert!(!csv.contains("elapsed"));
        assert_eq!(report.timing_csv().lines().count(), 11);
        assert!(report.summary().contains("standard deviation"));
    }

    #[test]
    fn failing_cell_does_not_stop_the_run() {
        let mut c = small_config();
        c.methods = vec![Method::Depiht, Method::Lbp];
        let report = run_experiment(&c, Execution::Sequential).unwrap();
        assert_eq!(report.failures().count(), 2);
        assert!(report.cell(PhantomKind::Cross, Method::Lbp).is_some());
        assert!(report.report_csv().contains(",error,"));
        assert!(report.summary().contains("failed cells"));
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config();
        c.phantoms = vec![PhantomKind::V];
        c.methods = vec![Method::Li, Method::AadmmDepiht];
        let report = run_experiment(&c, Execution::default()).unwrap();
        report.write(dir.path()).unwrap();
        for f in [
            "report.csv",
            "timing.csv",
            "summary.txt",
            "config.toml",
            "images/v_truth.csv",
            "images/v_li.pgm",
            "images/v_aadmm-depiht_thr.csv",
            "history/v_li.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
        assert_eq!(back, c);
    }
}
