//! Synthetic inputs shared by the integration tests.

#![allow(dead_code)]

use pmpb::multipole::{detrace, Mat3, Moments, MultipoleSite, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A compact branched chain of `n` atoms: 1.5 Å bonds, bond angles
/// 100–120°, non-bonded centers at least 2.9 Å apart, packed inside a ball
/// of radius 1.75·n^(1/3) Å, widened when the chain gets stuck. Radii 1.7–1.95 Å, random charges, dipoles,
/// traceless quadrupoles and polarizabilities.
pub fn protein_like(n: usize, seed: u64) -> Vec<MultipoleSite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cap = 1.75 * (n as f64).cbrt();
    let mut stuck = 0;
    let mut pos = vec![Vec3::zeros(), Vec3::new(1.5, 0.0, 0.0)];
    let mut parent = vec![0usize, 0];
    let mut tip = 1;
    while pos.len() < n {
        let mut placed = false;
        for _ in 0..200 {
            let b = (pos[tip] - pos[parent[tip]]).normalize();
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let perp = (v - b * v.dot(&b)).normalize();
            let theta = (180.0f64 - rng.gen_range(100.0..120.0)).to_radians();
            let p = pos[tip] + (b * theta.cos() + perp * theta.sin()) * 1.5;
            if p.norm() > cap {
                continue;
            }
            let clash = pos
                .iter()
                .enumerate()
                .any(|(k, q)| k != tip && k != parent[tip] && (q - p).norm() < 2.9);
            if clash {
                continue;
            }
            pos.push(p);
            parent.push(tip);
            tip = pos.len() - 1;
            placed = true;
            break;
        }
        if placed {
            stuck = 0;
        } else {
            stuck += 1;
            if stuck == 500 {
                cap += 0.5;
                stuck = 0;
            }
        }
        if !placed || rng.gen_bool(0.15) {
            tip = rng.gen_range(1..pos.len());
        }
    }
    pos.into_iter()
        .map(|p| {
            let mut quad = Mat3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
            quad = (quad + quad.transpose()) * 0.5;
            detrace(&mut quad);
            let d = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let moments = Moments { q: rng.gen_range(-0.6..0.6), d, quad };
            MultipoleSite::new(p, rng.gen_range(1.7..1.95))
                .with_moments(moments)
                .with_alpha(rng.gen_range(0.3..1.0))
        })
        .collect()
}

/// Up to five sites spread over a few Å with random moments and
/// polarizabilities.
pub fn small_system(rng: &mut ChaCha8Rng) -> Vec<MultipoleSite> {
    let n = rng.gen_range(1..=5);
    (0..n)
        .map(|k| {
            let p = Vec3::new(2.6 * k as f64, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let mut quad = Mat3::from_fn(|_, _| rng.gen_range(-0.4..0.4));
            quad = (quad + quad.transpose()) * 0.5;
            detrace(&mut quad);
            let d = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            MultipoleSite::new(p, 1.5)
                .with_moments(Moments { q: rng.gen_range(-0.8..0.8), d, quad })
                .with_alpha(rng.gen_range(0.2..1.2))
        })
        .collect()
}
