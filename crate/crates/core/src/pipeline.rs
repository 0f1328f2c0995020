//! End-to-end runs: grid and operator construction, vacuum and solvated
//! induction, energies; plus the Kirkwood sphere levels used by the
//! verification suite.

use std::time::Instant;

use serde::Serialize;

use crate::assemble::{Media, MibOperator, ReactionField, Sources};
use crate::config::{BoundaryCondition, RunConfig};
use crate::energy::{g_delta, solvation_energy, vacuum_energy, Energy};
use crate::error::Result;
use crate::geometry::{InterfaceGeometry, Sphere};
use crate::grid::{build_grid, GridSpec, NodeKind};
use crate::kirkwood::KirkwoodCase;
use crate::linsolve::{BoundaryModel, SolveReport, SolverOptions};
use crate::mib::RuleStats;
use crate::multipole::{Field, MultipoleSite, Vec3};
use crate::polarization::{site_reaction_data, sor_solvated, sor_vacuum, Coupling, InducedDipoleState, ScfOptions};

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub h: f64,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub nodes: usize,
    pub unknowns: usize,
    pub crossings: usize,
    /// Mesh segments crossing Γ more than once, resolved to one crossing.
    pub multiple_crossings: usize,
    pub irregular: usize,
    pub rules: usize,
    pub degraded_rules: usize,
    pub max_rule_condition: f64,
}

impl GridSummary {
    fn new(op: &MibOperator) -> Self {
        let g = &op.grid;
        let irregular = (0..g.len())
            .filter(|&i| matches!(g.kind(i), NodeKind::IrregularInside | NodeKind::IrregularOutside))
            .count();
        let RuleStats { rules, degraded, max_condition, .. } = op.rule_stats;
        GridSummary {
            h: g.h,
            dims: g.dims,
            origin: [g.origin.x, g.origin.y, g.origin.z],
            nodes: g.len(),
            unknowns: op.unknowns(),
            crossings: g.crossings().len(),
            multiple_crossings: g.crossings().iter().filter(|c| c.multiple).count(),
            irregular,
            rules,
            degraded_rules: degraded,
            max_rule_condition: max_condition,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScfSummary {
    pub iterations: usize,
    pub last_rms: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl From<&InducedDipoleState> for ScfSummary {
    fn from(s: &InducedDipoleState) -> Self {
        ScfSummary { iterations: s.iterations, last_rms: s.last_rms, converged: s.converged, history: s.history.clone() }
    }
}

/// Everything a run produces that goes into reports.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub e_sol: f64,
    pub solvation: Energy,
    pub vacuum: Energy,
    pub grid: GridSummary,
    pub vacuum_scf: ScfSummary,
    pub solvated_scf: ScfSummary,
    pub pde_solves: usize,
    pub solver_reports: Vec<SolveReport>,
    pub mu_vacuum: Vec<[f64; 3]>,
    pub mu_solvent: Vec<[f64; 3]>,
    pub timings: Vec<Timing>,
}

/// A finished run with the operator and the final reaction field kept for
/// post-processing.
#[derive(Debug, Clone)]
pub struct Run {
    pub summary: RunSummary,
    pub operator: MibOperator,
    /// Final split solution: φ_RF on inside nodes, φ on outside nodes, e_c/Å.
    pub solution: ReactionField,
    pub reaction: Vec<Field>,
    pub mu_solvent: Vec<Vec3>,
}

impl Run {
    /// φ_RF at a grid node.
    pub fn reaction_at(&self, sites: &[MultipoleSite], node: usize) -> Result<f64> {
        let src = Sources { sites, induced: Some(&self.mu_solvent) };
        self.operator.reaction_at(&self.solution, &src, node)
    }
}

/// Dielectric boundary as the union of the given spheres, or of the site
/// spheres when none are given.
pub fn molecular_surface(sites: &[MultipoleSite], spheres: Option<Vec<Sphere>>) -> Result<InterfaceGeometry> {
    let spheres = spheres.unwrap_or_else(|| sites.iter().map(|s| Sphere::new(s.position, s.radius)).collect());
    InterfaceGeometry::union(spheres)
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn scf_options(cfg: &RunConfig) -> ScfOptions {
    ScfOptions {
        omega: cfg.scf_omega,
        tolerance: cfg.scf_tolerance,
        max_iters: cfg.scf_max_iters,
        max_cycles: cfg.scf_max_cycles,
    }
}

/// Runs the full calculation at `cfg.grid_spacing`.
pub fn run(sites: &[MultipoleSite], geometry: &InterfaceGeometry, cfg: &RunConfig, coupling: &Coupling) -> Result<Run> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str, timings: &mut Vec<Timing>| {
        timings.push(Timing { stage, seconds: clock.elapsed().as_secs_f64() });
        clock = Instant::now();
    };

    let spec = GridSpec { h: cfg.grid_spacing, padding: cfg.padding, node_budget: cfg.node_budget };
    let grid = build_grid(geometry, sites, &spec)?;
    lap("grid", &mut timings);
    let media = Media { eps_in: cfg.eps_in, eps_out: cfg.eps_out, kappa_bar_sq: cfg.kappa_bar_sq() };
    let op = MibOperator::new(grid, media)?;
    lap("assembly", &mut timings);

    let opts = scf_options(cfg);
    let vacuum = sor_vacuum(sites, coupling, &opts)?;
    let e_vac = vacuum_energy(sites, &vacuum.mu)?;
    lap("vacuum", &mut timings);

    let bc = BoundaryModel::from_config(cfg);
    let solver = SolverOptions::from_config(cfg);
    let mut warm: Option<Vec<f64>> = None;
    let mut reports = Vec::new();
    let scf = sor_solvated(sites, coupling, &opts, &vacuum.mu, |mu| {
        let src = Sources { sites, induced: Some(mu) };
        let rf = op.solve(&src, &bc, &solver, warm.as_deref())?;
        log::info!(
            "reaction field solve: {} iterations, residual {:.2e}, {:.2}s",
            rf.report.iterations,
            rf.report.residual,
            rf.report.wall_time
        );
        reports.push(rf.report);
        let fields = site_reaction_data(&rf.values, &op.grid, sites)?;
        warm = Some(rf.values.clone());
        Ok((fields.clone(), (rf, fields)))
    })?;
    lap("solvated", &mut timings);

    let (solution, reaction) = scf.data;
    let mu_solv = scf.state.mu.clone();

    let delta: Vec<Field> = (0..sites.len())
        .map(|n| g_delta(sites, &mu_solv, &vacuum.mu, n))
        .collect::<Result<_>>()?;
    let solvation = solvation_energy(sites, &reaction, &delta)?;
    lap("energy", &mut timings);

    let summary = RunSummary {
        e_sol: solvation.total,
        solvation,
        vacuum: e_vac,
        grid: GridSummary::new(&op),
        mu_vacuum: vacuum.mu.iter().map(arr).collect(),
        mu_solvent: mu_solv.iter().map(arr).collect(),
        vacuum_scf: (&vacuum).into(),
        solvated_scf: (&scf.state).into(),
        pde_solves: scf.pde_solves,
        solver_reports: reports,
        timings,
    };
    Ok(Run { summary, operator: op, solution, reaction, mu_solvent: mu_solv })
}

/// Configuration of the Kirkwood suite at spacing `h`: analytic sphere,
/// exact multipole boundary data, no screening.
pub fn kirkwood_config(case: &KirkwoodCase, h: f64) -> RunConfig {
    RunConfig {
        eps_in: case.eps1,
        eps_out: case.eps2,
        ionic_strength: 0.0,
        grid_spacing: h,
        padding: 1.0 + h,
        boundary_condition: BoundaryCondition::Mdh,
        bc_sphere_radius: case.a,
        solver_tolerance: 1e-10,
        ..RunConfig::default()
    }
}

pub fn kirkwood_site(case: &KirkwoodCase, alpha: f64) -> MultipoleSite {
    MultipoleSite::new(Vec3::zeros(), case.a).with_moments(case.moments).with_alpha(alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct KirkwoodLevel {
    pub h: f64,
    pub energy: f64,
    /// Max |φ_RF − exact| over irregular nodes, e_c/Å.
    pub e_int: f64,
    pub grid: GridSummary,
    pub solver: SolveReport,
    pub seconds: f64,
}

/// Largest deviation of the computed φ_RF from the analytic one over the
/// irregular nodes.
pub fn interface_error(run: &Run, case: &KirkwoodCase, sites: &[MultipoleSite]) -> Result<f64> {
    let g = &run.operator.grid;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        if matches!(g.kind(i), NodeKind::IrregularInside | NodeKind::IrregularOutside) {
            let exact = case.regularized_field(&g.position(i))?;
            worst = worst.max((run.reaction_at(sites, i)? - exact).abs());
        }
    }
    Ok(worst)
}

/// One level of the Kirkwood convergence study for a non-polarizable
/// centered multipole.
pub fn kirkwood_level(case: &KirkwoodCase, h: f64) -> Result<KirkwoodLevel> {
    let start = Instant::now();
    let cfg = kirkwood_config(case, h);
    let geometry = InterfaceGeometry::sphere(Vec3::zeros(), case.a)?;
    let site = kirkwood_site(case, 0.0);
    let run = run(std::slice::from_ref(&site), &geometry, &cfg, &Coupling::default())?;
    let e_int = interface_error(&run, case, std::slice::from_ref(&site))?;
    Ok(KirkwoodLevel {
        h,
        energy: run.summary.e_sol,
        e_int,
        grid: run.summary.grid.clone(),
        solver: run.summary.solver_reports[0],
        seconds: start.elapsed().as_secs_f64(),
    })
}
