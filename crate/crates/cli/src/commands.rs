use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::Serialize;

use pmpb::config::{load_config, RunConfig};
use pmpb::energy::{
    extrapolation_csv, extrapolation_table, format_extrapolation, format_order_table, kirkwood_order_table, order_table_csv,
    Extrapolation, OrderRow,
};
use pmpb::geometry::InterfaceGeometry;
use pmpb::io::{read_multipole_pqr, read_xyzr, ParseOptions};
use pmpb::kirkwood::{KirkwoodCase, KirkwoodKind};
use pmpb::multipole::MultipoleSite;
use pmpb::pipeline::{kirkwood_level, molecular_surface, run, KirkwoodLevel, Run, RunSummary};
use pmpb::polarization::Coupling;

use crate::output::{digest, InputDigest, RunDir};
use crate::{Case, ConvergeArgs, Failure, KirkwoodArgs, SolveArgs, Which};

struct Molecule {
    sites: Vec<MultipoleSite>,
    geometry: InterfaceGeometry,
    config: RunConfig,
    digests: Vec<InputDigest>,
}

fn load(pqr: &Path, xyzr: Option<&PathBuf>, config: Option<&PathBuf>) -> Result<Molecule, Failure> {
    let mut digests = Vec::new();
    let config = match config {
        Some(path) => {
            digests.push(digest(path)?);
            load_config(path, false)?.0
        }
        None => RunConfig::default(),
    };
    digests.push(digest(pqr)?);
    let opts = ParseOptions { trace_policy: config.trace_policy, quadrupole_scale: config.quadrupole_scale };
    let sites = read_multipole_pqr(pqr, &opts)?.sites;
    let spheres = match xyzr {
        Some(path) => {
            digests.push(digest(path)?);
            Some(read_xyzr(path)?)
        }
        None => None,
    };
    let geometry = molecular_surface(&sites, spheres)?;
    Ok(Molecule { sites, geometry, config, digests })
}

#[derive(Serialize)]
struct FailedRun {
    status: &'static str,
    error: String,
    scf_history: Option<Vec<f64>>,
}

fn failed(e: &pmpb::Error) -> FailedRun {
    let scf_history = match e {
        pmpb::Error::ScfNotConverged { history, .. } => Some(history.clone()),
        _ => None,
    };
    FailedRun { status: "failed", error: e.to_string(), scf_history }
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    status: &'static str,
    sites: usize,
    #[serde(flatten)]
    run: &'a RunSummary,
}

fn energy_csv(sites: &[MultipoleSite], r: &Run) -> String {
    let mut out = String::from("site,x,y,z,q,e_sol,e_vacuum\n");
    for (n, s) in sites.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e}",
            n + 1,
            s.position.x,
            s.position.y,
            s.position.z,
            s.q,
            r.summary.solvation.per_site[n],
            r.summary.vacuum.per_site[n]
        );
    }
    let _ = writeln!(out, "total,,,,,{:.6e},{:.6e}", r.summary.e_sol, r.summary.vacuum.total);
    out
}

fn mu_csv(sites: &[MultipoleSite], r: &Run) -> String {
    let mut out = String::from("site,alpha,mu_vac_x,mu_vac_y,mu_vac_z,mu_sol_x,mu_sol_y,mu_sol_z\n");
    for (n, s) in sites.iter().enumerate() {
        let (v, m) = (r.summary.mu_vacuum[n], r.summary.mu_solvent[n]);
        let _ = writeln!(
            out,
            "{},{:.6},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            n + 1,
            s.alpha,
            v[0],
            v[1],
            v[2],
            m[0],
            m[1],
            m[2]
        );
    }
    out
}

pub fn solve(a: &SolveArgs) -> Result<(), Failure> {
    let mut mol = load(&a.pqr, a.xyzr.as_ref(), a.config.as_ref())?;
    if let Some(h) = a.h {
        mol.config.grid_spacing = h;
    }
    mol.config.validate()?;
    let mut dir = RunDir::create(&a.out, "solve", Some(&mol.config), std::mem::take(&mut mol.digests))?;
    let result = run(&mol.sites, &mol.geometry, &mol.config, &Coupling::default());
    let r = match result {
        Ok(r) => r,
        Err(e) => {
            dir.write_json("summary.json", &failed(&e))?;
            dir.finish()?;
            return Err(e.into());
        }
    };
    dir.add_timings(format!("h={}", mol.config.grid_spacing), r.summary.timings.clone());
    dir.write_json("summary.json", &SolveSummary { status: "ok", sites: mol.sites.len(), run: &r.summary })?;
    dir.write("energy.csv", &energy_csv(&mol.sites, &r))?;
    if a.dump_mu {
        dir.write("mu.csv", &mu_csv(&mol.sites, &r))?;
    }
    dir.finish()?;
    println!(
        "E_sol = {:.4} kcal/mol  (h = {}, {} sites, {} PDE solves, {} induction cycles)",
        r.summary.e_sol,
        mol.config.grid_spacing,
        mol.sites.len(),
        r.summary.pde_solves,
        r.summary.solvated_scf.iterations
    );
    Ok(())
}

/// Distinct positive spacings, coarsest first.
fn checked_levels(levels: &[f64]) -> Result<Vec<f64>, Failure> {
    let mut out: Vec<f64> = levels.to_vec();
    if let Some(bad) = out.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Failure::input(anyhow!("grid spacing must be positive, got {bad}")));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out.dedup();
    if out.len() < 2 {
        return Err(Failure::input(anyhow!("a convergence study needs at least two distinct levels")));
    }
    Ok(out)
}

fn kinds(which: Which) -> Vec<KirkwoodKind> {
    match which {
        Which::Monopole => vec![KirkwoodKind::Monopole],
        Which::Dipole => vec![KirkwoodKind::Dipole],
        Which::Quadrupole => vec![KirkwoodKind::Quadrupole],
        Which::Multipole => vec![KirkwoodKind::Multipole],
        Which::All => KirkwoodKind::ALL.to_vec(),
    }
}

#[derive(Serialize)]
struct LevelOutcome<T> {
    h: f64,
    result: Option<T>,
    error: Option<String>,
}

#[derive(Serialize)]
struct KirkwoodBlock {
    kind: &'static str,
    exact: f64,
    levels: Vec<LevelOutcome<KirkwoodLevel>>,
    rows: Vec<OrderRow>,
}

/// Runs every level of one Kirkwood case; failed levels are kept and
/// marked.
fn kirkwood_block(kind: KirkwoodKind, levels: &[f64]) -> KirkwoodBlock {
    let case = KirkwoodCase::standard(kind);
    let exact = case.energies().total;
    let outcomes: Vec<LevelOutcome<KirkwoodLevel>> = levels
        .iter()
        .map(|&h| match kirkwood_level(&case, h) {
            Ok(l) => LevelOutcome { h, result: Some(l), error: None },
            Err(e) => {
                log::error!("{} h={h}: {e}", kind.name());
                LevelOutcome { h, result: None, error: Some(e.to_string()) }
            }
        })
        .collect();
    let ok: Vec<(f64, f64, Option<f64>)> =
        outcomes.iter().filter_map(|o| o.result.as_ref()).map(|l| (l.h, l.energy, Some(l.e_int))).collect();
    let rows = if ok.len() >= 2 { kirkwood_order_table(&ok, exact).unwrap_or_default() } else { Vec::new() };
    KirkwoodBlock { kind: kind.name(), exact, levels: outcomes, rows }
}

fn failed_rows_text(levels: &[LevelOutcome<impl Serialize>]) -> String {
    levels.iter().filter(|o| o.result.is_none()).map(|o| format!("{:>8} FAILED\n", o.h)).collect()
}

fn failed_rows_csv(levels: &[LevelOutcome<impl Serialize>]) -> String {
    levels.iter().filter(|o| o.result.is_none()).map(|o| format!("{},FAILED\n", o.h)).collect()
}

fn block_text(b: &KirkwoodBlock) -> String {
    let mut out = format!("{}  (analytic E_sol = {:.4} kcal/mol)\n", b.kind, b.exact);
    out += &format_order_table(&b.rows);
    out += &failed_rows_text(&b.levels);
    out
}

fn run_kirkwood(which: Which, levels: &[f64], out: &Path, command: &str) -> Result<(RunDir, Vec<KirkwoodBlock>), Failure> {
    let mut dir = RunDir::create(out, command, None, Vec::new())?;
    let mut blocks = Vec::new();
    for kind in kinds(which) {
        let b = kirkwood_block(kind, levels);
        for l in b.levels.iter().filter_map(|o| o.result.as_ref()) {
            dir.add_timings(format!("{} h={}", b.kind, l.h), vec![pmpb::pipeline::Timing { stage: "level", seconds: l.seconds }]);
        }
        println!("{}", block_text(&b));
        dir.write(&format!("kirkwood_{}.csv", b.kind), &(order_table_csv(&b.rows) + &failed_rows_csv(&b.levels)))?;
        blocks.push(b);
    }
    dir.write("kirkwood_tables.txt", &blocks.iter().map(block_text).collect::<Vec<_>>().join("\n"))?;
    dir.write_json("summary.json", &blocks)?;
    dir.finish()?;
    Ok((dir, blocks))
}

fn any_failed(blocks: &[KirkwoodBlock]) -> Option<String> {
    blocks
        .iter()
        .flat_map(|b| b.levels.iter().map(move |o| (b.kind, o)))
        .find(|(_, o)| o.result.is_none())
        .map(|(k, o)| format!("{k} level h={} failed: {}", o.h, o.error.as_deref().unwrap_or("")))
}

#[derive(Serialize)]
struct FilesSummary {
    sites: usize,
    levels: Vec<LevelOutcome<RunSummary>>,
    extrapolation: Option<Extrapolation>,
}

pub fn converge(a: &ConvergeArgs) -> Result<(), Failure> {
    let levels = checked_levels(&a.levels)?;
    if a.case == Case::Kirkwood {
        let (_, blocks) = run_kirkwood(a.which, &levels, &a.out, "converge --case kirkwood")?;
        return match any_failed(&blocks) {
            Some(msg) => Err(Failure::convergence(anyhow!(msg))),
            None => Ok(()),
        };
    }

    let pqr = a.pqr.as_ref().ok_or_else(|| Failure::input(anyhow!("--case files needs --pqr")))?;
    let mut mol = load(pqr, a.xyzr.as_ref(), a.config.as_ref())?;
    mol.config.validate()?;
    let mut dir = RunDir::create(&a.out, "converge --case files", Some(&mol.config), std::mem::take(&mut mol.digests))?;
    let mut outcomes = Vec::new();
    for &h in &levels {
        let cfg = RunConfig { grid_spacing: h, ..mol.config.clone() };
        match run(&mol.sites, &mol.geometry, &cfg, &Coupling::default()) {
            Ok(r) => {
                log::info!("h={h}: E_sol = {:.4}", r.summary.e_sol);
                dir.add_timings(format!("h={h}"), r.summary.timings.clone());
                outcomes.push(LevelOutcome { h, result: Some(r.summary), error: None });
            }
            Err(e) => {
                log::error!("h={h}: {e}");
                outcomes.push(LevelOutcome { h, result: None, error: Some(e.to_string()) });
            }
        }
    }
    let ok: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.result.as_ref().map(|r| (o.h, r.e_sol))).collect();
    let extrapolation = if ok.len() >= 2 { extrapolation_table(&ok).ok() } else { None };
    let mut text = String::new();
    let mut csv = String::new();
    match &extrapolation {
        Some(ex) => {
            text += &format_extrapolation(ex);
            csv += &extrapolation_csv(ex);
        }
        None => {
            text += &format!("{:>8} {:>12}\n", "h", "E_sol");
            csv += "h,e_sol,error_percent\n";
            for (h, e) in &ok {
                text += &format!("{h:>8} {e:>12.2}\n");
                csv += &format!("{h},{e:.6},\n");
            }
        }
    }
    text += &failed_rows_text(&outcomes);
    csv += &failed_rows_csv(&outcomes);
    print!("{text}");
    dir.write("converge.csv", &csv)?;
    dir.write("converge.txt", &text)?;
    let n_failed = outcomes.iter().filter(|o| o.result.is_none()).count();
    dir.write_json("summary.json", &FilesSummary { sites: mol.sites.len(), levels: outcomes, extrapolation })?;
    dir.finish()?;
    if n_failed > 0 {
        return Err(Failure::convergence(anyhow!("{n_failed} of {} levels failed", levels.len())));
    }
    Ok(())
}

/// Relative energy error allowed at the finest level.
const ENERGY_TOLERANCE: f64 = 5e-3;
/// Minimum observed order on the last pair of levels.
const MIN_ORDER: f64 = 1.5;
/// Largest monopole interface error allowed at h = 0.25, e_c/Å.
const E_INT_AT_QUARTER: f64 = 1e-4;

fn threshold_failures(b: &KirkwoodBlock) -> Vec<String> {
    let mut bad = Vec::new();
    let Some(last) = b.rows.last() else {
        return vec![format!("{}: fewer than two successful levels", b.kind)];
    };
    let rel = last.energy_error / b.exact.abs();
    if rel >= ENERGY_TOLERANCE {
        bad.push(format!("{}: energy error {:.3}% at h={} exceeds {}%", b.kind, 100.0 * rel, last.h, 100.0 * ENERGY_TOLERANCE));
    }
    match last.energy_order {
        Some(p) if p >= MIN_ORDER => {}
        p => bad.push(format!("{}: energy order {} below {MIN_ORDER}", b.kind, p.map_or("-".into(), |p| format!("{p:.2}")))),
    }
    match last.e_int_order {
        Some(p) if p >= MIN_ORDER => {}
        p => bad.push(format!("{}: e_int order {} below {MIN_ORDER}", b.kind, p.map_or("-".into(), |p| format!("{p:.2}")))),
    }
    if b.kind == KirkwoodKind::Monopole.name() {
        if let Some(e) = b.rows.iter().find(|r| r.h == 0.25).and_then(|r| r.e_int) {
            if e >= E_INT_AT_QUARTER {
                bad.push(format!("{}: e_int {e:.3e} at h=0.25 exceeds {E_INT_AT_QUARTER:e}", b.kind));
            }
        }
    }
    bad
}

pub fn kirkwood_check(a: &KirkwoodArgs) -> Result<(), Failure> {
    let levels = checked_levels(&a.levels)?;
    let (_, blocks) = run_kirkwood(a.which, &levels, &a.out, "kirkwood-check")?;
    let mut bad = Vec::new();
    for b in &blocks {
        let f = threshold_failures(b);
        let finest = b.rows.last().map(|r| r.energy);
        println!(
            "{} {}: numeric {} vs analytic {:.4}",
            if f.is_empty() { "PASS" } else { "FAIL" },
            b.kind,
            finest.map_or("-".into(), |e| format!("{e:.4}")),
            b.exact
        );
        bad.extend(f);
    }
    if let Some(msg) = any_failed(&blocks) {
        bad.push(msg);
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::convergence(anyhow!(bad.join("; "))))
    }
}
