//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures are reported but only abort the process when
//! `PMPB_ACCEPTANCE_STRICT=1` is set; panics always abort.

mod common;

use std::time::Instant;

use pmpb::assemble::{Media, MibOperator};
use pmpb::config::RunConfig;
use pmpb::energy::{extrapolation_table, observed_order};
use pmpb::geometry::{InterfaceGeometry, Side};
use pmpb::grid::{build_grid, GridSpec};
use pmpb::kirkwood::{onsager_factor, KirkwoodCase, KirkwoodKind};
use pmpb::linsolve::{solve, SolverOptions};
use pmpb::mib::Jump;
use pmpb::multipole::{green_gradient, green_hessian, green_potential, Mat3, Moments, MultipoleSite, Vec3};
use pmpb::pipeline::{kirkwood_config, kirkwood_level, kirkwood_site, molecular_surface, run, KirkwoodLevel};
use pmpb::polarization::{dense_induced, direct_fields, site_reaction_data, sor_vacuum, Coupling, ScfOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn kirkwood_levels(kind: KirkwoodKind, hs: &[f64]) -> Vec<KirkwoodLevel> {
    let case = KirkwoodCase::standard(kind);
    hs.iter().map(|&h| kirkwood_level(&case, h).expect("kirkwood level")).collect()
}

fn monopole_energy(levels: &[KirkwoodLevel]) -> Outcome {
    let exact = KirkwoodCase::standard(KirkwoodKind::Monopole).energies().total;
    let coarse = levels.iter().find(|l| l.h == 0.25).unwrap();
    let fine = levels.iter().find(|l| l.h == 0.0625).unwrap();
    let (rc, rf) = (rel(coarse.energy, exact), rel(fine.energy, exact));
    outcome(
        rc < 5e-3 && rf < 5e-4,
        format!(
            "E(0.25) = {:.4} ({:.3}%), E(0.0625) = {:.4} ({:.4}%), exact {exact:.4}",
            coarse.energy,
            100.0 * rc,
            fine.energy,
            100.0 * rf
        ),
    )
}

fn convergence_orders(all: &[(KirkwoodKind, Vec<KirkwoodLevel>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, levels) in all {
        let exact = KirkwoodCase::standard(*kind).energies().total;
        let (c, f) = (&levels[0], &levels[levels.len() - 1]);
        let energy = observed_order((c.energy - exact).abs(), (f.energy - exact).abs(), c.h, f.h);
        let interface = observed_order(c.e_int, f.e_int, c.h, f.h);
        pass &= energy.is_some_and(|p| p >= 1.8) && interface.is_some_and(|p| p >= 1.5);
        let show = |o: Option<f64>| o.map_or("-".to_string(), |p| format!("{p:.2}"));
        parts.push(format!("{} energy {} e_int {}", kind.name(), show(energy), show(interface)));
    }
    outcome(pass, parts.join("; "))
}

fn interface_error(levels: &[KirkwoodLevel]) -> Outcome {
    let l = levels.iter().find(|l| l.h == 0.25).unwrap();
    outcome(l.e_int < 1e-4, format!("e_int(0.25) = {:.3e}", l.e_int))
}

fn vacuum_scf() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = ScfOptions { tolerance: 1e-13, max_iters: 2000, ..ScfOptions::default() };
    let coupling = Coupling::default();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let sites = common::small_system(&mut rng);
        let sor = sor_vacuum(&sites, &coupling, &opts).expect("sor");
        let field = direct_fields(&sites, &coupling).unwrap();
        let dense = dense_induced(&sites, &coupling, &field).unwrap();
        let ms = sor.mu.iter().zip(&dense).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / sites.len() as f64;
        worst = worst.max(ms.sqrt());
    }
    outcome(worst < 1e-8, format!("worst rms |μ_SOR − μ_dense| over 10 systems = {worst:.2e}"))
}

fn solvated_scf() -> Outcome {
    let case = KirkwoodCase::standard(KirkwoodKind::Dipole);
    let alpha = 0.5;
    let cfg = kirkwood_config(&case, 0.125);
    let geo = InterfaceGeometry::sphere(Vec3::zeros(), case.a).unwrap();
    let site = kirkwood_site(&case, alpha);
    let r = run(std::slice::from_ref(&site), &geo, &cfg, &Coupling::default()).expect("run");
    let f = onsager_factor(case.a, case.eps1, case.eps2);
    let expect = site.d / (1.0 - alpha * f);
    let total = site.d + r.mu_solvent[0];
    let err = (total - expect).norm() / expect.norm();
    outcome(
        err < 0.01,
        format!("total dipole {:.6} vs {:.6} (rel {err:.2e}), {} PDE solves", total.z, expect.z, r.summary.pde_solves),
    )
}

fn homogeneous_limit() -> Outcome {
    let case = KirkwoodCase::standard(KirkwoodKind::Multipole);
    let mut cfg = kirkwood_config(&case, 0.25);
    cfg.eps_out = cfg.eps_in;
    let geo = InterfaceGeometry::sphere(Vec3::zeros(), case.a).unwrap();
    let site = kirkwood_site(&case, 0.0);
    let e = run(std::slice::from_ref(&site), &geo, &cfg, &Coupling::default()).expect("run").summary.e_sol;

    let grid = build_grid(&geo, std::slice::from_ref(&site), &GridSpec { h: 0.25, padding: 1.0, node_budget: 10_000_000 })
        .unwrap();
    let op = MibOperator::new(grid, Media { eps_in: 1.0, eps_out: 80.0, kappa_bar_sq: 0.0 }).unwrap();
    let c = 0.731;
    let bnd = vec![c; op.boundary_nodes.len()];
    let b = op.rhs_from_parts(&vec![Jump::ZERO; op.grid.crossings().len()], &bnd);
    let tol = 1e-10;
    let (x, _) = solve(&op.matrix, &b, None, &SolverOptions { tolerance: tol, ..Default::default() }).unwrap();
    let dev = op.expand(&x, &bnd).iter().map(|u| (u - c).abs()).fold(0.0, f64::max);
    outcome(
        e.abs() < 1e-6 && dev < 1e-7,
        format!("|E_sol| at ε₁ = ε₂ = {:.2e} kcal/mol; constant Dirichlet max deviation {dev:.2e}", e.abs()),
    )
}

fn protein_scale() -> Outcome {
    let sites = common::protein_like(120, 7);
    let geo = molecular_surface(&sites, None).unwrap();
    let mut levels = Vec::new();
    let mut scf_ok = true;
    let mut finite = true;
    for h in [1.0, 0.5, 0.25] {
        let cfg = RunConfig { grid_spacing: h, ..RunConfig::protein() };
        let r = run(&sites, &geo, &cfg, &Coupling::default()).expect("run");
        scf_ok &= r.summary.vacuum_scf.converged && r.summary.solvated_scf.converged;
        finite &= r.summary.e_sol.is_finite();
        levels.push((h, r.summary.e_sol));
    }
    let ex = extrapolation_table(&levels).unwrap();
    let errors: Vec<f64> = ex.rows.iter().map(|r| r.error_percent.abs()).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    outcome(
        finite && scf_ok && decreasing,
        format!(
            "120 sites, E = {:?}, extrapolated {:.2}, errors (%) {:?}, SCF converged {scf_ok}",
            levels.iter().map(|l| (l.1 * 100.0).round() / 100.0).collect::<Vec<_>>(),
            ex.extrapolated,
            errors.iter().map(|e| (e * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

fn derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut quad = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        quad = (quad + quad.transpose()) * 0.5;
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let site = MultipoleSite::new(Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0), 1.0)
            .with_moments(Moments { q: rng.gen_range(-1.0..1.0), d, quad });
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let r = site.position + dir * rng.gen_range(0.8..6.0);
        let step = 1e-5 * (r - site.position).norm();
        let g = green_gradient(&site, &r).unwrap();
        let hm = green_hessian(&site, &r).unwrap();
        let mut fd_g = Vec3::zeros();
        let mut fd_h = Mat3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = step;
            fd_g[a] = (green_potential(&site, &(r + e)).unwrap() - green_potential(&site, &(r - e)).unwrap()) / (2.0 * step);
            let col = (green_gradient(&site, &(r + e)).unwrap() - green_gradient(&site, &(r - e)).unwrap()) / (2.0 * step);
            fd_h.set_column(a, &col);
        }
        worst = worst.max((fd_g - g).norm() / g.norm()).max((fd_h - hm).norm() / hm.norm());
    }

    let geo = InterfaceGeometry::sphere(Vec3::zeros(), 3.0).unwrap();
    let probe = MultipoleSite::new(Vec3::zeros(), 3.0);
    let grid = build_grid(&geo, &[probe], &GridSpec { h: 0.3, padding: 1.0, node_budget: 1_000_000 }).unwrap();
    let (qa, qb, qc) = (0.7, -0.4, 0.25);
    let f = |r: &Vec3| qa * r.x * r.x + qb * r.y * r.z + qc * r.z * r.z - 0.5 * r.x + 0.9 * r.y + 2.0;
    let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
    let sites: Vec<MultipoleSite> = (0..20)
        .map(|_| MultipoleSite::new(Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), 1.0))
        .collect();
    assert!(sites.iter().all(|s| geo.classify(&s.position) == Side::Inside));
    let fits = site_reaction_data(&values, &grid, &sites).unwrap();
    let hess = Mat3::new(2.0 * qa, 0.0, 0.0, 0.0, 0.0, qb, 0.0, qb, 2.0 * qc);
    let mut fit_err: f64 = 0.0;
    for (s, fit) in sites.iter().zip(&fits) {
        let p = s.position;
        let grad = Vec3::new(2.0 * qa * p.x - 0.5, qb * p.z + 0.9, qb * p.y + 2.0 * qc * p.z);
        fit_err = fit_err
            .max((fit.value - f(&p)).abs())
            .max((fit.gradient - grad).amax())
            .max((fit.hessian - hess).amax());
    }
    outcome(
        worst < 1e-5 && fit_err < 1e-9,
        format!("max relative finite-difference error {worst:.2e}; quadratic fit error {fit_err:.2e}"),
    )
}

fn main() {
    let strict = std::env::var("PMPB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let fine = [0.25, 0.125, 0.0625];
    let suite: Vec<(KirkwoodKind, Vec<KirkwoodLevel>)> =
        KirkwoodKind::ALL.into_iter().map(|k| (k, kirkwood_levels(k, &fine))).collect();
    let monopole = &suite[0].1;

    let results = [
        ("1 Kirkwood monopole energy", monopole_energy(monopole)),
        ("2 convergence orders", convergence_orders(&suite)),
        ("3 interface error magnitude", interface_error(monopole)),
        ("4 vacuum SCF vs dense solve", vacuum_scf()),
        ("5 solvated SCF fixed point", solvated_scf()),
        ("6 homogeneous-limit null tests", homogeneous_limit()),
        ("7 protein-scale convergence", protein_scale()),
        ("8 numerical derivatives", derivatives()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed in {:.0}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
