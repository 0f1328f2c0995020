mod common;

use pmpb::config::RunConfig;
use pmpb::io::{parse_multipole_pqr, write_multipole_pqr, ParseOptions};
use pmpb::multipole::Vec3;
use pmpb::pipeline::{molecular_surface, run};
use pmpb::polarization::Coupling;

#[test]
fn pqr_round_trip_is_exact() {
    let sites = common::protein_like(40, 3);
    let text = write_multipole_pqr(&sites);
    let back = parse_multipole_pqr(&text, "chain.pqr", &ParseOptions::default()).unwrap();
    assert_eq!(back.sites.len(), sites.len());
    for (a, b) in sites.iter().zip(&back.sites) {
        assert_eq!(a.position, b.position);
        assert_eq!((a.q, a.radius, a.alpha), (b.q, b.radius, b.alpha));
        assert_eq!(a.d, b.d);
        assert!((a.quad - b.quad).amax() < 1e-15);
    }
}

#[test]
fn small_molecule_run_is_consistent() {
    let sites = common::protein_like(30, 3);
    let geo = molecular_surface(&sites, None).unwrap();
    let cfg = RunConfig { grid_spacing: 0.5, ..RunConfig::protein() };
    let r = run(&sites, &geo, &cfg, &Coupling::default()).unwrap();
    let s = &r.summary;
    assert!(s.e_sol.is_finite() && s.e_sol < 0.0);
    assert!(s.vacuum_scf.converged && s.solvated_scf.converged);
    assert_eq!(s.pde_solves, s.solver_reports.len());
    let sum: f64 = s.solvation.per_site.iter().sum();
    assert!((sum - s.e_sol).abs() < 1e-9 * s.e_sol.abs());
    assert_eq!(s.mu_solvent.len(), sites.len());
}

#[test]
fn translation_by_whole_grid_steps_leaves_the_energy_unchanged() {
    let sites = common::protein_like(20, 9);
    let cfg = RunConfig { grid_spacing: 0.5, ..RunConfig::protein() };
    let shift = Vec3::new(1.0, -0.5, 2.0);
    let moved: Vec<_> = sites
        .iter()
        .map(|s| {
            let mut t = s.clone();
            t.position += shift;
            t
        })
        .collect();
    let energy = |sites: &[pmpb::multipole::MultipoleSite]| {
        let geo = molecular_surface(sites, None).unwrap();
        run(sites, &geo, &cfg, &Coupling::default()).unwrap().summary.e_sol
    };
    let (a, b) = (energy(&sites), energy(&moved));
    assert!(((a - b) / a).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn neutral_nonpolarizable_molecule_without_moments_has_no_energy() {
    let mut sites = common::protein_like(15, 4);
    for s in &mut sites {
        s.q = 0.0;
        s.d = Vec3::zeros();
        s.quad = pmpb::multipole::Mat3::zeros();
        s.alpha = 0.0;
    }
    let geo = molecular_surface(&sites, None).unwrap();
    let cfg = RunConfig { grid_spacing: 0.5, ..RunConfig::protein() };
    let r = run(&sites, &geo, &cfg, &Coupling::default()).unwrap();
    assert_eq!(r.summary.e_sol, 0.0);
}
