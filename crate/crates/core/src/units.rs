//! Physical constants. Potentials are carried internally in e_c/Å and are
//! converted to kcal/mol only when energies are reported.

/// Coulomb conversion factor, (kcal/mol/e_c)·(Å/e_c).
pub const COULOMB: f64 = 332.06364;

/// Modified Debye–Hückel coefficient: κ̄² = KAPPA_BAR_COEFF · I_s, Å⁻² per molar ionic strength.
pub const KAPPA_BAR_COEFF: f64 = 8.486902807;

/// κ̄² for a molar ionic strength.
pub fn kappa_bar_sq(ionic_strength: f64) -> f64 {
    KAPPA_BAR_COEFF * ionic_strength
}

/// Ionic strength that produces Debye screening `kappa` (Å⁻¹) in a solvent of dielectric `eps_out`.
pub fn ionic_strength_for_kappa(kappa: f64, eps_out: f64) -> f64 {
    eps_out * kappa * kappa / KAPPA_BAR_COEFF
}

/// Debye screening constant κ = sqrt(κ̄²/ε⁺) seen by the exterior equation.
pub fn debye_kappa(kappa_bar_sq: f64, eps_out: f64) -> f64 {
    (kappa_bar_sq / eps_out).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_round_trip() {
        let i_s = ionic_strength_for_kappa(0.125, 78.3);
        let kb2 = kappa_bar_sq(i_s);
        assert!((kb2 - 78.3 * 0.015625).abs() < 1e-12);
        assert!((debye_kappa(kb2, 78.3) - 0.125).abs() < 1e-12);
    }
}
