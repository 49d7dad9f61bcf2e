//! `run` and `sweep`: spec in, artifact directory out.

use std::path::{Path, PathBuf};

use damp_core::diagnostics::{compare_series, normality};
use damp_core::par;
use damp_core::recovery::{run_recovery, RecoveryTrace};
use damp_core::sensing::{gen_matrix_with, measure};
use damp_core::state_evolution::{se_trace, SeTrace};
use damp_core::{Error, Measurement, MeasurementMatrix, Signal};

use crate::artifacts::{
    fmt, fmt_opt, normality_json, qq_table, se_table, trace_jsonl, write_atomic, write_manifest, write_matrix,
    write_signal, write_values, Table,
};
use crate::error::CliResult;
use crate::spec::{self, AlgorithmSpec, Loaded};

/// One problem instance of a sweep (or the single instance of a run).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub delta: f64,
    pub sigma_w: f64,
    pub replicate: u64,
}

pub struct Instance {
    pub truth: Signal,
    pub a: MeasurementMatrix,
    pub y: Measurement,
}

pub fn instance(l: &Loaded, cell: Cell) -> CliResult<Instance> {
    let s = &l.spec;
    let truth = if cell.replicate == 0 { l.truth.clone() } else { spec::signal(&s.signal, cell.replicate)? };
    let n = truth.len();
    let m = match (s.matrix.m, cell.delta == l.base_delta) {
        (Some(m), true) => m,
        _ => spec::rows(cell.delta, n),
    };
    let a = gen_matrix_with(m, n, s.matrix.seed.wrapping_add(cell.replicate), s.matrix.normalization)?;
    let y = measure(&a, truth.values(), cell.sigma_w, s.noise.seed.wrapping_add(cell.replicate))?;
    Ok(Instance { truth, a, y })
}

pub struct Outcome {
    pub trace: RecoveryTrace,
    pub se: Option<SeTrace>,
}

/// Run one algorithm; a numerical abort still hands back the partial trace.
pub fn recover(alg: &AlgorithmSpec, inst: &Instance) -> CliResult<(Result<(), Error>, RecoveryTrace)> {
    let cfg = alg.config(&inst.truth)?;
    Ok(match run_recovery(&inst.y, &inst.a, &cfg, Some(&inst.truth)) {
        Ok(t) => (Ok(()), t),
        Err(f) => (Err(f.error), *f.partial),
    })
}

fn predict(alg: &AlgorithmSpec, inst: &Instance) -> CliResult<Option<SeTrace>> {
    let Some(engine) = alg.se else { return Ok(None) };
    let cfg = alg.config(&inst.truth)?;
    let delta = inst.a.m() as f64 / inst.a.n() as f64;
    let sw2 = inst.y.sigma_w * inst.y.sigma_w;
    Ok(Some(se_trace(&cfg.denoiser, &inst.truth, delta, sw2, alg.iters, engine)?))
}

fn summary_header() -> Table {
    Table::new(&[
        "label",
        "algorithm",
        "denoiser",
        "iters",
        "stop",
        "final_mse",
        "final_psnr",
        "se_final_theta",
        "se_max_rel_error",
    ])
}

fn tag<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

/// Writes matrix, signals, traces, SE curves, diagnostics and the manifest.
pub fn cmd_run(l: &Loaded, out: &Path) -> CliResult<()> {
    let cell = Cell { delta: l.base_delta, sigma_w: l.spec.noise.sigma_w, replicate: 0 };
    let inst = instance(l, cell)?;
    write_atomic(&out.join("spec.toml"), l.text.as_bytes())?;
    write_signal(&out.join("signal.csv"), &inst.truth)?;
    write_matrix(&out.join("matrix.bin"), &inst.a)?;
    write_values(&out.join("y.csv"), &inst.y.y)?;

    let mut summary = summary_header();
    let mut first_err = None;
    for alg in &l.spec.algorithms {
        let (res, trace) = recover(alg, &inst)?;
        let o = Outcome { trace, se: predict(alg, &inst)? };
        write_outcome(out, alg, &o)?;
        match res {
            Ok(_) => summary_row(&mut summary, alg, &o.trace, o.se.as_ref().map(|s| &s.theta)),
            Err(e) => {
                eprintln!("{}: {e}", alg.label);
                first_err.get_or_insert(e);
            }
        }
    }
    summary.write(&out.join("summary.csv"))?;
    write_manifest(out, &l.spec.name, "run", &l.inputs())?;
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn summary_row(t: &mut Table, alg: &AlgorithmSpec, trace: &RecoveryTrace, theta: Option<&Vec<f64>>) {
    let (se_last, se_err) = match theta {
        Some(th) => {
            let cmp = compare_series(&trace.mse_series(), th);
            (th.last().copied(), Some(cmp.max_rel_error))
        }
        None => (None, None),
    };
    t.row([
        alg.label.clone(),
        tag(&alg.algorithm),
        trace.denoiser.clone(),
        (trace.records.len() - 1).to_string(),
        tag(&trace.stop),
        fmt_opt(trace.final_mse()),
        fmt_opt(trace.final_psnr()),
        fmt_opt(se_last),
        fmt_opt(se_err),
    ]);
}

fn write_outcome(out: &Path, alg: &AlgorithmSpec, o: &Outcome) -> CliResult<()> {
    let label = &alg.label;
    write_atomic(&out.join(format!("trace_{label}.jsonl")), &trace_jsonl(&o.trace))?;
    write_signal(&out.join(format!("estimate_{label}.csv")), o.trace.estimate())?;
    let mut mse = Table::new(&["iter", "mse", "psnr", "sigma_hat", "div"]);
    for r in &o.trace.records {
        mse.row([
            r.iter.to_string(),
            fmt_opt(r.mse),
            fmt_opt(r.psnr),
            fmt(r.sigma_hat),
            fmt_opt(r.div.as_ref().map(|d| d.value)),
        ]);
    }
    mse.write(&out.join(format!("mse_{label}.csv")))?;
    if let Some(se) = &o.se {
        se_table(se).write(&out.join(format!("se_{label}.csv")))?;
    }
    let mut reports = serde_json::Map::new();
    for snap in &o.trace.snapshots {
        match normality(&snap.v) {
            Ok(rep) => {
                qq_table(&rep).write(&out.join(format!("qq_{label}_iter{}.csv", snap.iter)))?;
                reports.insert(snap.iter.to_string(), normality_json(&rep));
            }
            Err(e) => {
                reports.insert(snap.iter.to_string(), serde_json::json!({ "error": e.to_string() }));
            }
        }
    }
    if !reports.is_empty() {
        let text = serde_json::to_string_pretty(&reports).expect("report serializes");
        write_atomic(&out.join(format!("normality_{label}.json")), text.as_bytes())?;
    }
    Ok(())
}

pub fn cells(l: &Loaded) -> Vec<Cell> {
    let sw = l.spec.sweep.clone().unwrap_or_default();
    let or = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
    let deltas = or(&sw.deltas, l.base_delta);
    let sigmas = or(&sw.sigma_ws, l.spec.noise.sigma_w);
    let seeds = if sw.seeds.is_empty() { vec![0] } else { sw.seeds.clone() };
    let mut out = Vec::new();
    for &delta in &deltas {
        for &sigma_w in &sigmas {
            for &replicate in &seeds {
                out.push(Cell { delta, sigma_w, replicate });
            }
        }
    }
    out
}

struct CellResult {
    final_mse: f64,
    final_psnr: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Grid of δ × σ_w × replicate, one row per (δ, σ_w, algorithm).
pub fn cmd_sweep(l: &Loaded, out: &Path, budget_override: Option<usize>) -> CliResult<()> {
    let budget = budget_override.or(l.spec.sweep.as_ref().map(|s| s.budget)).unwrap_or(spec::DEFAULT_BUDGET);
    let cells = cells(l);
    let algs = &l.spec.algorithms;
    let runs = cells.len() * algs.len();
    if runs > budget {
        return Err(Error::Budget { count: runs as u128, budget: budget as u128 }.into());
    }
    write_atomic(&out.join("spec.toml"), l.text.as_bytes())?;

    let per_cell = par::map_indexed(cells.len(), |i| -> CliResult<Vec<CellResult>> {
        let cell = cells[i];
        let inst = instance(l, cell)?;
        let mut t = Table::new(&["delta", "sigma_w", "replicate", "label", "final_mse", "final_psnr"]);
        let mut res = Vec::new();
        for alg in algs {
            let (status, trace) = recover(alg, &inst)?;
            status?;
            let r = CellResult {
                final_mse: trace.final_mse().unwrap_or(f64::NAN),
                final_psnr: trace.final_psnr().unwrap_or(f64::NAN),
            };
            t.row([
                fmt(cell.delta),
                fmt(cell.sigma_w),
                cell.replicate.to_string(),
                alg.label.clone(),
                fmt(r.final_mse),
                fmt(r.final_psnr),
            ]);
            res.push(r);
        }
        t.write(&out.join("cells").join(format!("cell_{i:05}.csv")))?;
        Ok(res)
    });
    let per_cell: Vec<Vec<CellResult>> = per_cell.into_iter().collect::<CliResult<_>>()?;

    let sw = l.spec.sweep.clone().unwrap_or_default();
    let reps = sw.seeds.len().max(1);
    let mut table = Table::new(&[
        "delta",
        "sigma_w",
        "label",
        "replicates",
        "mse_mean",
        "mse_std",
        "psnr_mean",
        "psnr_std",
    ]);
    // cells are ordered δ-major, then σ_w, then replicate
    let mut means: Vec<(f64, f64, usize, f64)> = Vec::new();
    for (g, group) in per_cell.chunks(reps).enumerate() {
        let c = cells[g * reps];
        for (k, alg) in algs.iter().enumerate() {
            let mse: Vec<f64> = group.iter().map(|r| r[k].final_mse).collect();
            let psnr: Vec<f64> = group.iter().map(|r| r[k].final_psnr).collect();
            let (mm, ms) = mean_std(&mse);
            let (pm, ps) = mean_std(&psnr);
            table.row([
                fmt(c.delta),
                fmt(c.sigma_w),
                alg.label.clone(),
                reps.to_string(),
                fmt(mm),
                fmt(ms),
                fmt(pm),
                fmt(ps),
            ]);
            means.push((c.delta, c.sigma_w, k, mm));
        }
    }
    table.write(&out.join("sweep.csv"))?;
    monotonicity(&means, algs).write(&out.join("monotonicity.csv"))?;
    write_manifest(out, &l.spec.name, "sweep", &l.inputs())?;
    Ok(())
}

/// Whether mean MSE is non-increasing in δ at each (σ_w, algorithm).
fn monotonicity(means: &[(f64, f64, usize, f64)], algs: &[AlgorithmSpec]) -> Table {
    let mut sigmas: Vec<f64> = means.iter().map(|m| m.1).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut t = Table::new(&["sigma_w", "label", "deltas", "mse_nonincreasing_in_delta"]);
    for s in sigmas {
        for (k, alg) in algs.iter().enumerate() {
            let mut pts: Vec<(f64, f64)> =
                means.iter().filter(|m| m.1 == s && m.2 == k).map(|m| (m.0, m.3)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ok = pts.windows(2).all(|w| w[1].1 <= w[0].1);
            t.row([fmt(s), alg.label.clone(), pts.len().to_string(), ok.to_string()]);
        }
    }
    t
}

pub fn default_out(l: &Loaded, command: &str) -> PathBuf {
    PathBuf::from("out").join(format!("{}_{command}", l.spec.name))
}
