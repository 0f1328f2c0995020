//! Run configuration and its flat `key = value` text format.
//!
//! ```text
//! # comment
//! eps_in = 1
//! eps_out = 78.3
//! kappa = 0.125          # or: ionic_strength = 0.144
//! grid_spacing = 0.5
//! boundary_condition = sdh
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Screened Coulomb potential of the monopoles only.
    Sdh,
    /// Per-site multipole Debye–Hückel sphere model of radius `bc_sphere_radius`.
    Mdh,
    /// Superposed multipole Coulomb potential over ε⁺, each term screened by e^{-κs}.
    Coulomb,
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdh" => Ok(BoundaryCondition::Sdh),
            "mdh" => Ok(BoundaryCondition::Mdh),
            "coulomb" => Ok(BoundaryCondition::Coulomb),
            other => Err(Error::Config(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Sdh => "sdh",
            BoundaryCondition::Mdh => "mdh",
            BoundaryCondition::Coulomb => "coulomb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    Jacobi,
    None,
}

/// What to do with quadrupoles whose trace is not zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TracePolicy {
    Detrace,
    AsIs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub eps_in: f64,
    pub eps_out: f64,
    /// Molar ionic strength.
    pub ionic_strength: f64,
    pub grid_spacing: f64,
    pub padding: f64,
    pub boundary_condition: BoundaryCondition,
    pub bc_sphere_radius: f64,
    pub scf_omega: f64,
    pub scf_tolerance: f64,
    pub scf_max_iters: usize,
    pub scf_max_cycles: usize,
    pub solver_tolerance: f64,
    /// `None` selects 1000·N^(1/3).
    pub solver_max_iters: Option<usize>,
    pub preconditioner: Preconditioner,
    pub node_budget: usize,
    pub trace_policy: TracePolicy,
    pub quadrupole_scale: f64,
    /// Reserved for surface construction from a rolling probe; unused.
    pub probe_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eps_in: 1.0,
            eps_out: 78.3,
            ionic_strength: 0.0,
            grid_spacing: 0.5,
            padding: 3.0,
            boundary_condition: BoundaryCondition::Sdh,
            bc_sphere_radius: 60.0,
            scf_omega: 0.7,
            scf_tolerance: 1e-6,
            scf_max_iters: 200,
            scf_max_cycles: 100,
            solver_tolerance: 1e-8,
            solver_max_iters: None,
            preconditioner: Preconditioner::Jacobi,
            node_budget: 24_000_000,
            trace_policy: TracePolicy::Detrace,
            quadrupole_scale: 1.0,
            probe_radius: 1.4,
        }
    }
}

impl RunConfig {
    /// Defaults for protein runs: Debye screening κ = 0.125 Å⁻¹.
    pub fn protein() -> Self {
        let mut c = RunConfig::default();
        c.ionic_strength = units::ionic_strength_for_kappa(0.125, c.eps_out);
        c
    }

    /// Coefficient κ̄² of the exterior reaction term, Å⁻².
    pub fn kappa_bar_sq(&self) -> f64 {
        units::kappa_bar_sq(self.ionic_strength)
    }

    /// Debye screening constant of the exterior equation, Å⁻¹.
    pub fn debye_kappa(&self) -> f64 {
        units::debye_kappa(self.kappa_bar_sq(), self.eps_out)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_in", self.eps_in),
            ("eps_out", self.eps_out),
            ("grid_spacing", self.grid_spacing),
            ("bc_sphere_radius", self.bc_sphere_radius),
            ("scf_tolerance", self.scf_tolerance),
            ("solver_tolerance", self.solver_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.padding.is_finite() && self.padding >= 0.0) {
            return Err(Error::Config(format!("padding must be non-negative, got {}", self.padding)));
        }
        if !(self.ionic_strength.is_finite() && self.ionic_strength >= 0.0) {
            return Err(Error::Config("ionic_strength must be non-negative".into()));
        }
        if !(self.scf_omega > 0.0 && self.scf_omega < 2.0) {
            return Err(Error::Config(format!("scf_omega must lie in (0, 2), got {}", self.scf_omega)));
        }
        if !self.quadrupole_scale.is_finite() {
            return Err(Error::Config("quadrupole_scale must be finite".into()));
        }
        Ok(())
    }

    /// Renders the config in the same `key = value` format `parse_config` reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("eps_in", self.eps_in.to_string());
        put("eps_out", self.eps_out.to_string());
        put("ionic_strength", self.ionic_strength.to_string());
        put("grid_spacing", self.grid_spacing.to_string());
        put("padding", self.padding.to_string());
        put("boundary_condition", self.boundary_condition.to_string());
        put("bc_sphere_radius", self.bc_sphere_radius.to_string());
        put("scf_omega", self.scf_omega.to_string());
        put("scf_tolerance", self.scf_tolerance.to_string());
        put("scf_max_iters", self.scf_max_iters.to_string());
        put("scf_max_cycles", self.scf_max_cycles.to_string());
        put("solver_tolerance", self.solver_tolerance.to_string());
        if let Some(n) = self.solver_max_iters {
            put("solver_max_iters", n.to_string());
        }
        put(
            "preconditioner",
            match self.preconditioner {
                Preconditioner::Jacobi => "jacobi".into(),
                Preconditioner::None => "none".into(),
            },
        );
        put("node_budget", self.node_budget.to_string());
        put(
            "trace_policy",
            match self.trace_policy {
                TracePolicy::Detrace => "detrace".into(),
                TracePolicy::AsIs => "asis".into(),
            },
        );
        put("quadrupole_scale", self.quadrupole_scale.to_string());
        put("probe_radius", self.probe_radius.to_string());
        s
    }
}

/// Parses config text. Unknown keys are errors unless `lenient`, in which
/// case they are returned as warnings.
pub fn parse_config(text: &str, source_name: &str, lenient: bool) -> Result<(RunConfig, Vec<String>)> {
    let mut cfg = RunConfig::default();
    let mut warnings = Vec::new();
    let mut kappa: Option<(usize, f64)> = None;
    let mut ionic: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(source_name, line_no, "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        let err = |msg: String| Error::parse(source_name, line_no, msg);
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("'{key}' expects a finite number, got '{value}'")))
        };
        let count = || -> Result<usize> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0 && v.fract() == 0.0)
                .map(|v| v as usize)
                .ok_or_else(|| err(format!("'{key}' expects a non-negative integer, got '{value}'")))
        };
        match key {
            "eps_in" => cfg.eps_in = num()?,
            "eps_out" => cfg.eps_out = num()?,
            "ionic_strength" => {
                cfg.ionic_strength = num()?;
                ionic = Some(line_no);
            }
            "kappa" => kappa = Some((line_no, num()?)),
            "grid_spacing" | "h" => cfg.grid_spacing = num()?,
            "padding" => cfg.padding = num()?,
            "boundary_condition" => {
                cfg.boundary_condition = value.parse().map_err(|e: Error| err(e.to_string()))?
            }
            "bc_sphere_radius" => cfg.bc_sphere_radius = num()?,
            "scf_omega" => cfg.scf_omega = num()?,
            "scf_tolerance" => cfg.scf_tolerance = num()?,
            "scf_max_iters" => cfg.scf_max_iters = count()?,
            "scf_max_cycles" => cfg.scf_max_cycles = count()?,
            "solver_tolerance" => cfg.solver_tolerance = num()?,
            "solver_max_iters" => cfg.solver_max_iters = Some(count()?),
            "preconditioner" => {
                cfg.preconditioner = match value {
                    "jacobi" | "diagonal" => Preconditioner::Jacobi,
                    "none" => Preconditioner::None,
                    other => return Err(err(format!("unknown preconditioner '{other}'"))),
                }
            }
            "node_budget" => cfg.node_budget = count()?,
            "trace_policy" => {
                cfg.trace_policy = match value {
                    "detrace" => TracePolicy::Detrace,
                    "asis" | "as-is" => TracePolicy::AsIs,
                    other => return Err(err(format!("unknown trace_policy '{other}'"))),
                }
            }
            "quadrupole_scale" => cfg.quadrupole_scale = num()?,
            "probe_radius" => cfg.probe_radius = num()?,
            other => {
                let msg = format!("unknown key '{other}'");
                if lenient {
                    log::warn!("{source_name}:{line_no}: {msg}");
                    warnings.push(format!("{source_name}:{line_no}: {msg}"));
                } else {
                    return Err(err(msg));
                }
            }
        }
    }

    if let Some((line_no, k)) = kappa {
        if let Some(other) = ionic {
            return Err(Error::parse(
                source_name,
                line_no.max(other),
                "set either 'kappa' or 'ionic_strength', not both",
            ));
        }
        if k < 0.0 {
            return Err(Error::parse(source_name, line_no, "kappa must be non-negative"));
        }
        cfg.ionic_strength = units::ionic_strength_for_kappa(k, cfg.eps_out);
    }
    cfg.validate()?;
    Ok((cfg, warnings))
}

pub fn load_config(path: &Path, lenient: bool) -> Result<(RunConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string(), lenient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let (cfg, w) = parse_config("", "cfg", false).unwrap();
        assert!(w.is_empty());
        assert_eq!(cfg.eps_in, 1.0);
        assert_eq!(cfg.eps_out, 78.3);
        assert_eq!(cfg.boundary_condition, BoundaryCondition::Sdh);
        assert_eq!(cfg.bc_sphere_radius, 60.0);
        assert_eq!(cfg.kappa_bar_sq(), 0.0);
    }

    #[test]
    fn kappa_sets_modified_debye_coefficient() {
        let (cfg, _) = parse_config("kappa = 0.125\n", "cfg", false).unwrap();
        assert!((cfg.debye_kappa() - 0.125).abs() < 1e-12);
        assert!((cfg.kappa_bar_sq() - 78.3 * 0.015625).abs() < 1e-12);
    }

    #[test]
    fn ionic_strength_is_stored_directly() {
        let (cfg, _) = parse_config("ionic_strength = 0.1", "cfg", false).unwrap();
        assert!((cfg.kappa_bar_sq() - 0.8486902807).abs() < 1e-12);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse_config("eps_in = 0", "cfg", false).is_err());
        assert!(parse_config("grid_spacing = -1", "cfg", false).is_err());
        assert!(parse_config("scf_omega = 2", "cfg", false).is_err());
        assert!(parse_config("eps_out = nan", "cfg", false).is_err());
        assert!(parse_config("kappa = 0.1\nionic_strength = 0.1", "cfg", false).is_err());
        let e = parse_config("eps_in 3", "cfg", false).unwrap_err();
        assert!(e.to_string().contains("cfg:1"));
    }

    #[test]
    fn unknown_keys_strict_and_lenient() {
        let e = parse_config("eps_in = 2\nfoo = 1\n", "c.cfg", false).unwrap_err();
        assert!(e.to_string().contains("c.cfg:2"), "{e}");
        let (cfg, w) = parse_config("eps_in = 2\nfoo = 1\n", "c.cfg", true).unwrap();
        assert_eq!(cfg.eps_in, 2.0);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::protein();
        cfg.boundary_condition = BoundaryCondition::Mdh;
        cfg.solver_max_iters = Some(321);
        cfg.trace_policy = TracePolicy::AsIs;
        let (back, _) = parse_config(&cfg.to_text(), "rt", false).unwrap();
        assert_eq!(back, cfg);
    }
}
