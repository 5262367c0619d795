//! End-to-end run: bundle → fill → flatten → PCP → shift → multistart tsNMF
//! → scale → Ward summary, plus the CSV artifacts each stage leaves behind.
//!
//! Every numeric artifact is a deterministic function of the input bundle and
//! the configuration; only `manifest.txt` carries wall-clock timings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::echogram::{fill_missing, flatten, shift_nonnegative, FillPolicy};
use crate::error::{Error, Result};
use crate::io::{self, format_f64, write_matrix_csv, write_table_csv, write_text, Manifest};
use crate::model_select::{LCurveReport, RankScanReport};
use crate::pcp::{pcp_decompose, PcpConfig, PcpResult};
use crate::summarize::{activation_distance, ward_cluster, ClusterSummary};
use crate::tsnmf::{multistart_fit, scale_normalize, NmfEnsemble, TsnmfConfig};

pub const FAILED_MARKER: &str = "FAILED";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub fill: FillPolicy,
    pub pcp: PcpConfig,
    pub tsnmf: TsnmfConfig,
    /// Number of Ward clusters cut from the day tree.
    pub clusters: usize,
    /// Cluster on raw `H` instead of norm-scaled activations.
    pub raw_distance: bool,
    /// Treat solver non-convergence as an error.
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fill: FillPolicy::Fail,
            pcp: PcpConfig::default(),
            tsnmf: TsnmfConfig::default(),
            clusters: 4,
            raw_distance: false,
            strict: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pcp.validate()?;
        self.tsnmf.validate()?;
        if self.clusters == 0 {
            return Err(Error::Parameter("clusters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A failed pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub pcp: PcpResult,
    pub ensemble: NmfEnsemble,
    pub summary: ClusterSummary,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

/// Runs the whole pipeline on the bundle at `input`, writing into `out`.
///
/// The input is checked before `out` is created, so a bad path leaves no
/// trace. Once writing has started, a failing stage leaves its partial
/// outputs in place next to a `FAILED` file naming the stage.
pub fn run_pipeline(
    input: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    manifest: Manifest,
) -> std::result::Result<PipelineOutcome, StageError> {
    let stage = |name: &'static str| move |error: Error| StageError { stage: name, error };
    cfg.validate().map_err(stage("config"))?;
    let meta = io::read_bundle_meta(input).map_err(stage("load"))?;
    if meta.axes.day_axis.is_empty() {
        return Err(stage("load")(Error::Parameter("bundle has no days".into())));
    }
    fs::create_dir_all(out).map_err(|e| stage("output")(Error::io(out, e)))?;
    let _ = fs::remove_file(out.join(FAILED_MARKER));

    let mut runner = Runner {
        out,
        manifest,
        current: "load",
    };
    match runner.run(input, cfg) {
        Ok((pcp, ensemble, summary)) => Ok(PipelineOutcome {
            pcp,
            ensemble,
            summary,
            manifest: runner.manifest,
            out_dir: out.to_path_buf(),
        }),
        Err(error) => {
            let failed = StageError {
                stage: runner.current,
                error,
            };
            let _ = write_text(&out.join(FAILED_MARKER), &format!("{failed}\n"));
            runner.manifest.set("failed_stage", failed.stage);
            let _ = runner.manifest.write(&out.join(MANIFEST_FILE));
            Err(failed)
        }
    }
}

struct Runner<'a> {
    out: &'a Path,
    manifest: Manifest,
    current: &'static str,
}

impl Runner<'_> {
    fn begin(&mut self, stage: &'static str) -> Instant {
        log::info!("stage {stage}");
        self.current = stage;
        Instant::now()
    }

    fn end(&mut self, stage: &str, t0: Instant) {
        self.manifest
            .set(format!("time_s.{stage}"), format!("{:.3}", t0.elapsed().as_secs_f64()));
    }

    fn run(
        &mut self,
        input: &Path,
        cfg: &PipelineConfig,
    ) -> Result<(PcpResult, NmfEnsemble, ClusterSummary)> {
        let out = self.out;
        record_pipeline_config(&mut self.manifest, cfg);
        self.manifest.set("input", input.display());

        let t0 = self.begin("load");
        let cube = io::read_bundle(input)?;
        self.manifest
            .set("n_depth", cube.n_depth())
            .set("n_ping", cube.n_ping())
            .set("n_freq", cube.n_freq())
            .set("n_day", cube.n_day())
            .set("missing_cells", cube.missing_count());
        self.end("load", t0);

        let t0 = self.begin("fill");
        let cube = fill_missing(&cube, cfg.fill)?;
        let x = flatten(&cube)?;
        self.end("fill", t0);

        let t0 = self.begin("pcp");
        let pcp = pcp_decompose(&x, &cfg.pcp)?;
        write_pcp_outputs(out, &pcp)?;
        record_pcp_result(&mut self.manifest, &pcp);
        self.end("pcp", t0);
        if cfg.strict && !pcp.converged {
            return Err(Error::NotConverged(format!(
                "PCP residual {} after {} iterations",
                pcp.final_residual, pcp.iterations
            )));
        }

        let t0 = self.begin("tsnmf");
        let low_rank = x.with_values(pcp.low_rank.clone());
        let shifted = shift_nonnegative(&low_rank)?;
        self.manifest.set("shift_offset", format_f64(shifted.offset));
        let ensemble = multistart_fit(&shifted.values, &cfg.tsnmf)?;
        write_nmf_outputs(out, &ensemble)?;
        record_ensemble(&mut self.manifest, &ensemble);
        self.end("tsnmf", t0);
        if cfg.strict && !ensemble.best().converged {
            return Err(Error::NotConverged(format!(
                "best tsNMF run hit max_iter = {}",
                cfg.tsnmf.max_iter
            )));
        }

        let t0 = self.begin("summarize");
        let h = if cfg.raw_distance {
            ensemble.best().h.clone()
        } else {
            scale_normalize(ensemble.best()).1
        };
        let summary = ward_cluster(&activation_distance(&h), cfg.clusters)?;
        write_summary_outputs(out, &summary, Some(cube.day_axis()))?;
        self.end("summarize", t0);

        self.manifest.write(&out.join(MANIFEST_FILE))?;
        Ok((pcp, ensemble, summary))
    }
}

pub fn record_pipeline_config(m: &mut Manifest, cfg: &PipelineConfig) {
    m.set("fill", cfg.fill)
        .set("clusters", cfg.clusters)
        .set("raw_distance", cfg.raw_distance)
        .set("strict", cfg.strict);
    record_pcp_config(m, &cfg.pcp);
    record_tsnmf_config(m, &cfg.tsnmf);
}

pub fn record_pcp_config(m: &mut Manifest, cfg: &PcpConfig) {
    let opt = |v: Option<f64>| v.map_or("auto".to_string(), format_f64);
    m.set("pcp.gamma", opt(cfg.gamma))
        .set("pcp.tol", format_f64(cfg.tol))
        .set("pcp.max_iter", cfg.max_iter)
        .set("pcp.mu", opt(cfg.mu))
        .set("pcp.rho", format_f64(cfg.rho))
        .set("pcp.mu_max_factor", format_f64(cfg.mu_max_factor));
}

pub fn record_pcp_result(m: &mut Manifest, r: &PcpResult) {
    m.set("pcp.gamma_resolved", format_f64(r.gamma))
        .set("pcp.mu_resolved", format_f64(r.mu))
        .set("pcp.iterations", r.iterations)
        .set("pcp.converged", r.converged);
}

pub fn record_tsnmf_config(m: &mut Manifest, cfg: &TsnmfConfig) {
    m.set("tsnmf.rank", cfg.rank)
        .set("tsnmf.eta", format_f64(cfg.eta))
        .set("tsnmf.lambda", format_f64(cfg.lambda))
        .set("tsnmf.beta_w", format_f64(cfg.beta_w))
        .set("tsnmf.beta_h", format_f64(cfg.beta_h))
        .set("tsnmf.stop_ratio", format_f64(cfg.stop_ratio))
        .set("tsnmf.stop_window", cfg.stop_window)
        .set("tsnmf.max_iter", cfg.max_iter)
        .set("tsnmf.n_restarts", cfg.n_restarts)
        .set("tsnmf.seed", cfg.seed)
        .set("tsnmf.init_scale", cfg.init_scale.map_or("auto".to_string(), format_f64))
        .set("tsnmf.safety", format_f64(cfg.safety));
}

pub fn record_ensemble(m: &mut Manifest, e: &NmfEnsemble) {
    let best = e.best();
    m.set("tsnmf.best_index", e.best_index)
        .set("tsnmf.best_seed", best.seed)
        .set("tsnmf.best_cost", format_f64(best.final_cost()))
        .set("tsnmf.best_iterations", best.iterations)
        .set("tsnmf.best_converged", best.converged)
        .set(
            "tsnmf.converged_runs",
            e.models.iter().filter(|m| m.converged).count(),
        );
}

/// `L.csv`, `S.csv` and `pcp_diagnostics.txt`.
pub fn write_pcp_outputs(dir: &Path, r: &PcpResult) -> Result<()> {
    write_matrix_csv(&dir.join("L.csv"), &r.low_rank)?;
    write_matrix_csv(&dir.join("S.csv"), &r.sparse)?;
    let mut diag = Manifest::new();
    diag.set("iterations", r.iterations)
        .set("final_residual", format_f64(r.final_residual))
        .set("rank_estimate", r.rank_estimate)
        .set("sparsity", format_f64(r.sparsity))
        .set("converged", r.converged)
        .set("gamma", format_f64(r.gamma))
        .set("mu", format_f64(r.mu))
        .set("objective", format_f64(r.objective()?));
    diag.write(&dir.join("pcp_diagnostics.txt"))
}

/// Factors of the best run (raw and norm-scaled), its cost trace, and one
/// row per restart in `ensemble.csv`.
pub fn write_nmf_outputs(dir: &Path, e: &NmfEnsemble) -> Result<()> {
    let best = e.best();
    let (ws, hs) = scale_normalize(best);
    write_matrix_csv(&dir.join("W.csv"), &best.w)?;
    write_matrix_csv(&dir.join("H.csv"), &best.h)?;
    write_matrix_csv(&dir.join("W_scaled.csv"), &ws)?;
    write_matrix_csv(&dir.join("H_scaled.csv"), &hs)?;
    let parts = best.cost_parts;
    let trace: Vec<Vec<String>> = best
        .cost_trace
        .iter()
        .enumerate()
        .map(|(i, c)| vec![i.to_string(), format_f64(*c)])
        .collect();
    write_table_csv(&dir.join("cost_trace.csv"), &["iteration", "cost"], &trace)?;
    write_table_csv(
        &dir.join("cost_parts.csv"),
        &["reconstruction", "smoothness", "l1_w", "frob_w", "frob_h", "total"],
        &[[
            parts.reconstruction,
            parts.smoothness,
            parts.l1_w,
            parts.frob_w,
            parts.frob_h,
            parts.total(),
        ]
        .iter()
        .map(|v| format_f64(*v))
        .collect()],
    )?;
    let runs: Vec<Vec<String>> = e
        .models
        .iter()
        .zip(&e.mse_per_run)
        .enumerate()
        .map(|(i, (m, mse))| {
            vec![
                i.to_string(),
                m.seed.to_string(),
                format_f64(m.final_cost()),
                format_f64(*mse),
                m.iterations.to_string(),
                m.converged.to_string(),
            ]
        })
        .collect();
    write_table_csv(
        &dir.join("ensemble.csv"),
        &["run", "seed", "final_cost", "mse", "iterations", "converged"],
        &runs,
    )
}

/// `distance.csv`, `labels.csv`, `merges.csv` and `transitions.csv`.
pub fn write_summary_outputs(
    dir: &Path,
    s: &ClusterSummary,
    days: Option<&[chrono::NaiveDate]>,
) -> Result<()> {
    let date = |i: usize| {
        days.and_then(|d| d.get(i))
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_default()
    };
    write_matrix_csv(&dir.join("distance.csv"), &s.distance)?;
    let labels: Vec<Vec<String>> = s
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), date(i), l.to_string()])
        .collect();
    write_table_csv(&dir.join("labels.csv"), &["day", "date", "label"], &labels)?;
    let merges: Vec<Vec<String>> = s
        .merge_tree
        .iter()
        .map(|m| {
            vec![
                m.a.to_string(),
                m.b.to_string(),
                format_f64(m.height),
                m.size.to_string(),
            ]
        })
        .collect();
    write_table_csv(&dir.join("merges.csv"), &["a", "b", "height", "size"], &merges)?;
    let changes: Vec<Vec<String>> = s
        .change_points
        .iter()
        .map(|&t| {
            vec![
                t.to_string(),
                date(t),
                s.labels[t - 1].to_string(),
                s.labels[t].to_string(),
            ]
        })
        .collect();
    write_table_csv(
        &dir.join("transitions.csv"),
        &["day", "date", "from", "to"],
        &changes,
    )
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// `rank_scan.csv`: normalized and raw medians, tolerance and cophenetic
/// coefficient per rank (empty when undefined).
pub fn write_rank_scan(dir: &Path, r: &RankScanReport) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..r.ranks.len())
        .map(|i| {
            vec![
                r.ranks[i].to_string(),
                format_f64(r.mse_data[i]),
                format_f64(r.mse_perm[i]),
                opt_f64(r.cophenetic[i]),
                format_f64(r.mse_data_raw[i]),
                format_f64(r.mse_perm_raw[i]),
                format_f64(r.noise_tolerance[i]),
            ]
        })
        .collect();
    write_table_csv(
        &dir.join("rank_scan.csv"),
        &[
            "rank",
            "mse_data",
            "mse_perm",
            "cophenetic",
            "mse_data_raw",
            "mse_perm_raw",
            "noise_tolerance",
        ],
        &rows,
    )
}

/// `lcurve.csv`: median costs and log-log curvature per `η`.
pub fn write_lcurve(dir: &Path, r: &LCurveReport) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..r.etas.len())
        .map(|i| {
            vec![
                format_f64(r.etas[i]),
                format_f64(r.recon_cost[i]),
                format_f64(r.smooth_cost[i]),
                format_f64(r.curvature[i]),
            ]
        })
        .collect();
    write_table_csv(
        &dir.join("lcurve.csv"),
        &["eta", "recon_cost", "smooth_cost", "curvature"],
        &rows,
    )
}
