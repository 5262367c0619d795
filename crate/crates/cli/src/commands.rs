use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use echofactor::echogram::Layout;
use echofactor::io::{self, format_f64, write_matrix_csv, Manifest};
use echofactor::model_select::{l_curve_scan, mse_rank_scan};
use echofactor::pcp::decompose_matrix;
use echofactor::pipeline::{self, PipelineConfig, MANIFEST_FILE};
use echofactor::summarize::{activation_distance, ward_cluster};
use echofactor::synth::{gen_lowrank_sparse, gen_patterned_echogram, synthetic_axes};
use echofactor::tsnmf::multistart_fit;
use echofactor::{
    fill_missing, flatten, shift_nonnegative, unflatten, DMatrix, DataMatrix, EchogramCube,
    Error,
};

use crate::config::RunConfig;
use crate::{Command, Common, DataArgs, NmfArgs, PcpArgs, SynthKind};

const CONFIG_FILE: &str = "config.toml";
const DEFAULT_CLUSTERS: usize = 4;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Parameter(msg.into()).into()
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Pipeline { common, .. }
        | Command::Pcp { common, .. }
        | Command::Tsnmf { common, .. }
        | Command::RankScan { common, .. }
        | Command::Lcurve { common, .. }
        | Command::Summarize { common, .. }
        | Command::Synth { common, .. }
        | Command::UnflattenPattern { common, .. } => common,
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Pipeline { .. } => "pipeline",
        Command::Pcp { .. } => "pcp",
        Command::Tsnmf { .. } => "tsnmf",
        Command::RankScan { .. } => "rank-scan",
        Command::Lcurve { .. } => "lcurve",
        Command::Summarize { .. } => "summarize",
        Command::Synth { .. } => "synth",
        Command::UnflattenPattern { .. } => "unflatten-pattern",
    }
}

pub fn run(cmd: Command) -> Result<()> {
    let c = common(&cmd);
    let level = match c.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();

    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(seed) = cfg.seed {
        // TOML integers are signed 64-bit; keep seeds representable there
        if i64::try_from(seed).is_err() {
            return Err(usage(format!("seed {seed} exceeds {}", i64::MAX)));
        }
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    if c.strict {
        cfg.strict = Some(true);
    }
    if let Some(out) = &c.out {
        cfg.out = Some(out.display().to_string());
    }
    cfg.resolve_seed();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;

    let mut manifest = Manifest::new();
    manifest
        .set("version", env!("CARGO_PKG_VERSION"))
        .set("command", name(&cmd))
        .set("threads", pool.current_num_threads());
    pool.install(|| dispatch(cmd, cfg, manifest))
}

fn dispatch(cmd: Command, mut cfg: RunConfig, manifest: Manifest) -> Result<()> {
    match cmd {
        Command::Pipeline {
            data,
            pcp,
            nmf,
            clusters,
            raw_distance,
            ..
        } => {
            apply_data(&mut cfg, &data);
            apply_pcp(&mut cfg, &pcp)?;
            apply_nmf(&mut cfg, &nmf);
            if clusters.is_some() {
                cfg.clusters = clusters;
            }
            if raw_distance {
                cfg.raw_distance = Some(true);
            }
            cmd_pipeline(cfg, manifest)
        }
        Command::Pcp { data, pcp, .. } => {
            apply_data(&mut cfg, &data);
            apply_pcp(&mut cfg, &pcp)?;
            cmd_pcp(cfg, manifest)
        }
        Command::Tsnmf { data, nmf, .. } => {
            apply_data(&mut cfg, &data);
            apply_nmf(&mut cfg, &nmf);
            cmd_tsnmf(cfg, manifest)
        }
        Command::RankScan {
            data, nmf, ranks, ..
        } => {
            apply_data(&mut cfg, &data);
            apply_nmf(&mut cfg, &nmf);
            if ranks.is_some() {
                cfg.ranks = ranks;
            }
            cmd_rank_scan(cfg, manifest)
        }
        Command::Lcurve { data, nmf, etas, .. } => {
            apply_data(&mut cfg, &data);
            apply_nmf(&mut cfg, &nmf);
            if etas.is_some() {
                cfg.etas = etas;
            }
            cmd_lcurve(cfg, manifest)
        }
        Command::Summarize { h, w, raw, k, .. } => {
            if k.is_some() {
                cfg.clusters = k;
            }
            if raw {
                cfg.raw_distance = Some(true);
            }
            cmd_summarize(cfg, manifest, &h, w.as_deref())
        }
        Command::Synth {
            kind,
            n_depth,
            n_ping,
            n_freq,
            n_day,
            rank,
            sparsity,
            noise_sigma,
            smoothness,
            ..
        } => {
            let s = &mut cfg.synth;
            macro_rules! set {
                ($($field:ident),*) => { $( if let Some(v) = $field { s.$field = v; } )* };
            }
            set!(n_depth, n_ping, n_freq, n_day, rank, sparsity, noise_sigma, smoothness);
            cmd_synth(cfg, manifest, kind)
        }
        Command::UnflattenPattern {
            w, bundle, layout, ..
        } => cmd_unflatten(cfg, manifest, &w, bundle.as_deref(), layout.as_deref()),
    }
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) {
    if let Some(input) = &data.input {
        cfg.input = Some(input.display().to_string());
    }
    if data.fill.is_some() {
        cfg.fill = data.fill;
    }
}

fn apply_pcp(cfg: &mut RunConfig, a: &PcpArgs) -> Result<()> {
    if let Some(g) = &a.gamma {
        cfg.pcp.gamma = match g.as_str() {
            "auto" => None,
            v => Some(
                v.parse()
                    .map_err(|_| usage(format!("--gamma expects a number or `auto`, got `{v}`")))?,
            ),
        };
    }
    if let Some(t) = a.tol {
        cfg.pcp.tol = t;
    }
    if let Some(n) = a.pcp_max_iter {
        cfg.pcp.max_iter = n;
    }
    Ok(())
}

fn apply_nmf(cfg: &mut RunConfig, a: &NmfArgs) {
    let t = &mut cfg.tsnmf;
    if let Some(v) = a.rank {
        t.rank = v;
    }
    if let Some(v) = a.eta {
        t.eta = v;
    }
    if let Some(v) = a.lambda {
        t.lambda = v;
    }
    if let Some(v) = a.beta_w {
        t.beta_w = v;
    }
    if let Some(v) = a.beta_h {
        t.beta_h = v;
    }
    if let Some(v) = a.restarts {
        t.n_restarts = v;
    }
    if let Some(v) = a.max_iter {
        t.max_iter = v;
    }
    if let Some(v) = a.stop_ratio {
        t.stop_ratio = v;
    }
    if let Some(v) = a.stop_window {
        t.stop_window = v;
    }
}

fn input_path(cfg: &RunConfig) -> Result<PathBuf> {
    let raw = cfg
        .input
        .as_deref()
        .ok_or_else(|| usage("no input given (--input or `input` in the config)"))?;
    let path = PathBuf::from(raw);
    if !path.exists() {
        return Err(Error::io(&path, std::io::ErrorKind::NotFound.into()).into());
    }
    Ok(path)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg
        .out
        .as_deref()
        .ok_or_else(|| usage("no output directory given (--out or `out` in the config)"))?;
    let out = PathBuf::from(out);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

/// A bundle directory (filled and flattened) or a bare matrix CSV.
fn load_data(cfg: &RunConfig) -> Result<(DataMatrix, Option<EchogramCube>)> {
    let path = input_path(cfg)?;
    if path.is_dir() {
        let cube = io::read_bundle(&path)?;
        let cube = fill_missing(&cube, cfg.fill.unwrap_or_default())?;
        Ok((flatten(&cube)?, Some(cube)))
    } else {
        let m = io::read_matrix_csv(&path, false)?;
        Ok((DataMatrix::from_matrix(m), None))
    }
}

/// Shifts data with negative entries to a zero minimum; nonnegative data
/// is used as is.
fn nonnegative(x: DataMatrix, manifest: &mut Manifest) -> Result<DataMatrix> {
    let needs_shift = x.values.iter().any(|&v| v < 0.0);
    let x = if needs_shift { shift_nonnegative(&x)? } else { x };
    manifest.set("shift_offset", format_f64(x.offset));
    Ok(x)
}

fn finish(out: &Path, cfg: &RunConfig, manifest: &Manifest) -> Result<()> {
    cfg.write(&out.join(CONFIG_FILE))?;
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(())
}

fn strict(cfg: &RunConfig) -> bool {
    cfg.strict.unwrap_or(false)
}

fn cmd_pipeline(cfg: RunConfig, manifest: Manifest) -> Result<()> {
    let input = input_path(&cfg)?;
    let out = PathBuf::from(
        cfg.out
            .as_deref()
            .ok_or_else(|| usage("no output directory given (--out or `out` in the config)"))?,
    );
    let pc = PipelineConfig {
        fill: cfg.fill.unwrap_or_default(),
        pcp: cfg.pcp.clone(),
        tsnmf: cfg.tsnmf.clone(),
        clusters: cfg.clusters.unwrap_or(DEFAULT_CLUSTERS),
        raw_distance: cfg.raw_distance.unwrap_or(false),
        strict: strict(&cfg),
    };
    let result = pipeline::run_pipeline(&input, &out, &pc, manifest);
    if out.exists() {
        cfg.write(&out.join(CONFIG_FILE))?;
    }
    let outcome = result?;
    println!(
        "pipeline done: rank {} best run {} (cost {}), {} clusters, {} transitions",
        pc.tsnmf.rank,
        outcome.ensemble.best_index,
        format_f64(outcome.ensemble.best().final_cost()),
        pc.clusters,
        outcome.summary.change_points.len()
    );
    Ok(())
}

fn cmd_pcp(cfg: RunConfig, mut manifest: Manifest) -> Result<()> {
    let (x, _) = load_data(&cfg)?;
    let out = out_dir(&cfg)?;
    pipeline::record_pcp_config(&mut manifest, &cfg.pcp);
    let r = decompose_matrix(&x.values, &cfg.pcp)?;
    pipeline::write_pcp_outputs(&out, &r)?;
    pipeline::record_pcp_result(&mut manifest, &r);
    finish(&out, &cfg, &manifest)?;
    println!(
        "pcp: {} iterations, residual {:.3e}, rank {}, sparsity {:.4}",
        r.iterations, r.final_residual, r.rank_estimate, r.sparsity
    );
    if strict(&cfg) && !r.converged {
        return Err(Error::NotConverged(format!("PCP residual {}", r.final_residual)).into());
    }
    Ok(())
}

fn cmd_tsnmf(cfg: RunConfig, mut manifest: Manifest) -> Result<()> {
    let (x, _) = load_data(&cfg)?;
    let out = out_dir(&cfg)?;
    let x = nonnegative(x, &mut manifest)?;
    pipeline::record_tsnmf_config(&mut manifest, &cfg.tsnmf);
    let e = multistart_fit(&x.values, &cfg.tsnmf)?;
    pipeline::write_nmf_outputs(&out, &e)?;
    pipeline::record_ensemble(&mut manifest, &e);
    finish(&out, &cfg, &manifest)?;
    println!(
        "tsnmf: best of {} runs is {} (cost {})",
        e.models.len(),
        e.best_index,
        format_f64(e.best().final_cost())
    );
    if strict(&cfg) && !e.best().converged {
        return Err(Error::NotConverged("best tsNMF run hit max_iter".into()).into());
    }
    Ok(())
}

fn cmd_rank_scan(cfg: RunConfig, mut manifest: Manifest) -> Result<()> {
    let (x, _) = load_data(&cfg)?;
    let out = out_dir(&cfg)?;
    let x = nonnegative(x, &mut manifest)?;
    let ranks = cfg.ranks.clone().unwrap_or_else(|| (1..=8).collect());
    pipeline::record_tsnmf_config(&mut manifest, &cfg.tsnmf);
    manifest.set(
        "ranks",
        ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
    );
    let r = mse_rank_scan(&x.values, &ranks, &cfg.tsnmf)?;
    pipeline::write_rank_scan(&out, &r)?;
    let knee = r.knee.map_or("none".to_string(), |k| k.to_string());
    manifest.set("knee_advisory", &knee);
    finish(&out, &cfg, &manifest)?;
    println!("rank-scan: knee advisory at rank {knee}");
    Ok(())
}

fn cmd_lcurve(cfg: RunConfig, mut manifest: Manifest) -> Result<()> {
    let (x, _) = load_data(&cfg)?;
    let out = out_dir(&cfg)?;
    let x = nonnegative(x, &mut manifest)?;
    let etas = cfg
        .etas
        .clone()
        .unwrap_or_else(|| (0..=6).map(|k| 10f64.powi(k)).collect());
    pipeline::record_tsnmf_config(&mut manifest, &cfg.tsnmf);
    manifest.set(
        "etas",
        etas.iter().map(|e| format_f64(*e)).collect::<Vec<_>>().join(","),
    );
    let r = l_curve_scan(&x.values, &etas, &cfg.tsnmf)?;
    pipeline::write_lcurve(&out, &r)?;
    manifest.set("selected_eta", format_f64(r.selected_eta));
    finish(&out, &cfg, &manifest)?;
    println!("lcurve: corner at eta = {}", r.selected_eta);
    Ok(())
}

fn cmd_summarize(cfg: RunConfig, mut manifest: Manifest, h: &Path, w: Option<&Path>) -> Result<()> {
    let mut h = io::read_matrix_csv(h, false)?;
    let raw = cfg.raw_distance.unwrap_or(false);
    if let (Some(w), false) = (w, raw) {
        let w = io::read_matrix_csv(w, false)?;
        if w.ncols() != h.nrows() {
            return Err(Error::Layout(format!(
                "W has {} columns but H has {} rows",
                w.ncols(),
                h.nrows()
            ))
            .into());
        }
        for k in 0..h.nrows() {
            let norm = w.column(k).norm();
            h.row_mut(k).scale_mut(norm);
        }
    }
    let k = cfg.clusters.unwrap_or(DEFAULT_CLUSTERS);
    let s = ward_cluster(&activation_distance(&h), k)?;
    let out = out_dir(&cfg)?;
    pipeline::write_summary_outputs(&out, &s, None)?;
    manifest
        .set("clusters", k)
        .set("scaled_by_w", w.is_some() && !raw);
    finish(&out, &cfg, &manifest)?;
    println!("summarize: {} days, {} transitions", s.labels.len(), s.change_points.len());
    Ok(())
}

fn cmd_synth(cfg: RunConfig, mut manifest: Manifest, kind: SynthKind) -> Result<()> {
    let spec = &cfg.synth;
    spec.validate()?;
    let out = out_dir(&cfg)?;
    let bundle = out.join("bundle");
    match kind {
        SynthKind::Patterned => {
            let g = gen_patterned_echogram(spec)?;
            let clean = &g.w0 * &g.h0;
            io::write_bundle(&bundle, &g.cube)?;
            write_matrix_csv(&out.join("W0.csv"), &g.w0)?;
            write_matrix_csv(&out.join("H0.csv"), &g.h0)?;
            write_matrix_csv(&out.join("S0.csv"), &(&g.matrix - &clean))?;
            write_matrix_csv(&out.join("L0.csv"), &clean)?;
        }
        SynthKind::Lowrank => {
            let g = gen_lowrank_sparse(spec)?;
            let cube = EchogramCube::from_values(synthetic_axes(spec), g.x.as_slice().to_vec())?;
            io::write_bundle(&bundle, &cube)?;
            write_matrix_csv(&out.join("L0.csv"), &g.l0)?;
            write_matrix_csv(&out.join("S0.csv"), &g.s0)?;
        }
    }
    manifest
        .set("kind", format!("{kind:?}").to_lowercase())
        .set("synth.seed", spec.seed)
        .set("synth.rank", spec.rank);
    finish(&out, &cfg, &manifest)?;
    println!("synth: bundle written to {}", bundle.display());
    Ok(())
}

fn parse_layout(s: &str) -> Result<Layout> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--layout expects n_depth,n_ping,n_freq, got `{s}`")))?;
    match dims[..] {
        [d, p, f] if d > 0 && p > 0 && f > 0 => Ok(Layout::new(d, p, f)),
        _ => bail!(usage(format!("--layout expects three positive integers, got `{s}`"))),
    }
}

fn cmd_unflatten(
    cfg: RunConfig,
    mut manifest: Manifest,
    w: &Path,
    bundle: Option<&Path>,
    layout: Option<&str>,
) -> Result<()> {
    let w: DMatrix<f64> = io::read_matrix_csv(w, false)?;
    let (layout, labels) = match (bundle, layout) {
        (Some(b), _) => {
            let meta = io::read_bundle_meta(b)?;
            let labels = meta.axes.freq_axis.iter().map(|f| io::freq_label(*f)).collect();
            (meta.layout(), labels)
        }
        (None, Some(l)) => {
            let layout = parse_layout(l)?;
            (layout, (0..layout.n_freq).map(|f| f.to_string()).collect())
        }
        (None, None) => return Err(usage("need --bundle or --layout")),
    };
    let labels: Vec<String> = labels;
    let out = out_dir(&cfg)?;
    for k in 0..w.ncols() {
        let images = unflatten(w.column(k).as_slice(), layout)?;
        for (f, label) in labels.iter().enumerate() {
            let path = out.join(format!("pattern{k}_f{label}.csv"));
            write_matrix_csv(&path, &images.frequency_image(f))?;
        }
    }
    manifest
        .set("patterns", w.ncols())
        .set("n_depth", layout.n_depth)
        .set("n_ping", layout.n_ping)
        .set("n_freq", layout.n_freq);
    finish(&out, &cfg, &manifest)?;
    println!("unflatten-pattern: {} patterns × {} frequencies", w.ncols(), layout.n_freq);
    Ok(())
}
