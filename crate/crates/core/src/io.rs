//! Readers and writers for the multipole-extended PQR and `.xyzr` files.
//!
//! Extended PQR record, whitespace separated:
//!
//! ```text
//! ATOM idx name resname resid x y z q r [dx dy dz Qxx Qxy Qxz Qyy Qyz Qzz [alpha]]
//! ```
//!
//! Moments are in the lab frame, e_c·Åⁿ. Plain PQR records (10 fields)
//! parse with zero higher moments. Lines starting with `#` and records
//! other than `ATOM`/`HETATM` are skipped.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::config::TracePolicy;
use crate::error::{Error, Result};
use crate::geometry::Sphere;
use crate::multipole::{detrace, Mat3, MultipoleSite, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    pub trace_policy: TracePolicy,
    /// Multiplies every parsed quadrupole component.
    pub quadrupole_scale: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            trace_policy: TracePolicy::Detrace,
            quadrupole_scale: 1.0,
        }
    }
}

/// Convention markers recorded with a parsed molecule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionFlags {
    pub trace_policy: TracePolicy,
    pub quadrupole_scale: f64,
    /// Moments are taken as already rotated into the lab frame.
    pub global_frame: bool,
}

#[derive(Debug, Clone)]
pub struct MoleculeInput {
    pub sites: Vec<MultipoleSite>,
    pub source_path: String,
    pub flags: ConventionFlags,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    moments: bool,
    alpha: bool,
}

fn layout_for(fields: usize) -> Option<Layout> {
    match fields {
        10 => Some(Layout { moments: false, alpha: false }),
        19 => Some(Layout { moments: true, alpha: false }),
        20 => Some(Layout { moments: true, alpha: true }),
        _ => None,
    }
}

pub fn parse_multipole_pqr(text: &str, source_name: &str, opts: &ParseOptions) -> Result<MoleculeInput> {
    let mut sites = Vec::new();
    let mut seen = HashSet::new();
    let mut detraced = 0usize;
    let mut max_trace = 0.0f64;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens[0] != "ATOM" && tokens[0] != "HETATM" {
            continue;
        }
        if tokens.len() == 9 {
            return Err(Error::parse(source_name, line_no, "missing radius"));
        }
        let layout = layout_for(tokens.len()).ok_or_else(|| {
            Error::parse(
                source_name,
                line_no,
                format!("expected 10, 19 or 20 fields, found {}", tokens.len()),
            )
        })?;
        let num = |col: usize, what: &str| -> Result<f64> {
            let tok = tokens[col];
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Error::parse(source_name, line_no, format!("{what} is not finite: '{tok}'"))),
                Err(_) => Err(Error::parse(source_name, line_no, format!("{what} is not a number: '{tok}'"))),
            }
        };

        let position = Vec3::new(num(5, "x")?, num(6, "y")?, num(7, "z")?);
        let q = num(8, "charge")?;
        let radius = num(9, "radius")?;
        if radius <= 0.0 {
            return Err(Error::parse(source_name, line_no, format!("radius must be positive, got {radius}")));
        }
        let mut site = MultipoleSite::new(position, radius);
        site.q = q;

        if layout.moments {
            site.d = Vec3::new(num(10, "dx")?, num(11, "dy")?, num(12, "dz")?);
            let (xx, xy, xz) = (num(13, "Qxx")?, num(14, "Qxy")?, num(15, "Qxz")?);
            let (yy, yz, zz) = (num(16, "Qyy")?, num(17, "Qyz")?, num(18, "Qzz")?);
            let mut quad = Mat3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz) * opts.quadrupole_scale;
            if opts.trace_policy == TracePolicy::Detrace {
                let tr = quad.trace();
                if tr.abs() > 1e-12 {
                    detrace(&mut quad);
                    detraced += 1;
                    max_trace = max_trace.max(tr.abs());
                }
            }
            site.quad = quad;
        }
        if layout.alpha {
            site.alpha = num(19, "alpha")?;
            if site.alpha < 0.0 {
                return Err(Error::parse(source_name, line_no, "polarizability must be non-negative"));
            }
        }

        let key = [position.x.to_bits(), position.y.to_bits(), position.z.to_bits()];
        if !seen.insert(key) {
            return Err(Error::parse(source_name, line_no, "duplicate site center"));
        }
        sites.push(site);
    }

    if sites.is_empty() {
        return Err(Error::parse(source_name, 0, "no sites"));
    }

    let mut warnings = Vec::new();
    if detraced > 0 {
        let msg = format!(
            "{source_name}: removed the trace from {detraced} quadrupole(s) (max |trace| {max_trace:.3e})"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(MoleculeInput {
        sites,
        source_path: source_name.to_string(),
        flags: ConventionFlags {
            trace_policy: opts.trace_policy,
            quadrupole_scale: opts.quadrupole_scale,
            global_frame: true,
        },
        warnings,
    })
}

/// Parses raw bytes; invalid UTF-8 is reported as a parse error.
pub fn parse_multipole_pqr_bytes(bytes: &[u8], source_name: &str, opts: &ParseOptions) -> Result<MoleculeInput> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(source_name, 0, format!("input is not UTF-8: {e}")))?;
    parse_multipole_pqr(text, source_name, opts)
}

pub fn read_multipole_pqr(path: &Path, opts: &ParseOptions) -> Result<MoleculeInput> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_multipole_pqr_bytes(&bytes, &path.display().to_string(), opts)
}

/// Writes sites in the 20-column extended layout. Numbers use shortest
/// round-trip formatting.
pub fn write_multipole_pqr(sites: &[MultipoleSite]) -> String {
    let mut out = String::new();
    for (i, s) in sites.iter().enumerate() {
        let q = &s.quad;
        let _ = writeln!(
            out,
            "ATOM {} X MOL 1 {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            i + 1,
            s.position.x,
            s.position.y,
            s.position.z,
            s.q,
            s.radius,
            s.d.x,
            s.d.y,
            s.d.z,
            q[(0, 0)],
            q[(0, 1)],
            q[(0, 2)],
            q[(1, 1)],
            q[(1, 2)],
            q[(2, 2)],
            s.alpha
        );
    }
    out
}

pub fn parse_xyzr(text: &str, source_name: &str) -> Result<Vec<Sphere>> {
    let mut spheres = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 4 {
            return Err(Error::parse(source_name, line_no, format!("expected 4 numbers, found {}", tokens.len())));
        }
        let mut v = [0.0; 4];
        for (k, tok) in tokens.iter().take(4).enumerate() {
            v[k] = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(source_name, line_no, format!("not a finite number: '{tok}'")))?;
        }
        if v[3] <= 0.0 {
            return Err(Error::parse(source_name, line_no, format!("radius must be positive, got {}", v[3])));
        }
        spheres.push(Sphere::new(Vec3::new(v[0], v[1], v[2]), v[3]));
    }
    Ok(spheres)
}

pub fn read_xyzr(path: &Path) -> Result<Vec<Sphere>> {
    let text = std::fs::read_to_string(path)?;
    parse_xyzr(&text, &path.display().to_string())
}

pub fn write_xyzr(spheres: &[Sphere]) -> String {
    let mut out = String::new();
    for s in spheres {
        let _ = writeln!(out, "{} {} {} {}", s.center.x, s.center.y, s.center.z, s.radius);
    }
    out
}
