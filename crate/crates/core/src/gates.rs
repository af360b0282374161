//! Named unitaries on the mode register and the composite attack operations.
//!
//! Operator products are applied rightmost factor first:
//!
//! * `Q = SWAP_tx * CPBS_txy * H_y`
//! * `Q^-1 = H_y * CPBS_txy * SWAP_tx`
//! * `S_ty = X_t * Z_t * CNOT_ty * X_t`
//!
//! Polarization gates and CNOT act as the identity whenever a mode they touch
//! is empty.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::fockstate::{BasisConfig, ModeState, PolMatrix, PolarizationBit, Result, StateVector};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn hadamard_matrix() -> PolMatrix {
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [[r, r], [r, -r]]
}

pub fn pauli_x_matrix() -> PolMatrix {
    [[ZERO, ONE], [ONE, ZERO]]
}

pub fn pauli_z_matrix() -> PolMatrix {
    [[ONE, ZERO], [ZERO, -ONE]]
}

/// `Z^j`; the identity for `j = 0`.
pub fn z_pow_matrix(j: PolarizationBit) -> PolMatrix {
    match j {
        PolarizationBit::Zero => [[ONE, ZERO], [ZERO, ONE]],
        PolarizationBit::One => pauli_z_matrix(),
    }
}

pub fn hadamard(psi: &StateVector, mode: &str) -> Result<StateVector> {
    psi.apply_pol_unitary(mode, &hadamard_matrix())
}

pub fn pauli_x(psi: &StateVector, mode: &str) -> Result<StateVector> {
    psi.apply_pol_unitary(mode, &pauli_x_matrix())
}

pub fn pauli_z(psi: &StateVector, mode: &str) -> Result<StateVector> {
    psi.apply_pol_unitary(mode, &pauli_z_matrix())
}

pub fn z_pow(psi: &StateVector, mode: &str, j: PolarizationBit) -> Result<StateVector> {
    psi.apply_pol_unitary(mode, &z_pow_matrix(j))
}

/// Flips the target polarization when the control holds a photon with polarization 1.
pub fn cnot(psi: &StateVector, ctrl: &str, target: &str) -> Result<StateVector> {
    let [c, t] = psi.register().distinct_indices([ctrl, target])?;
    Ok(psi.permuted(|config| match (config.get(c), config.get(t)) {
        (ModeState::Photon(PolarizationBit::One), ModeState::Photon(p)) => {
            config.with(t, ModeState::Photon(p.flipped()))
        }
        _ => config,
    }))
}

/// The CPBS basis permutation on one configuration.
///
/// Pairs `(0, vac, 0) <-> (0, 0, vac)` and `(1, vac, 1) <-> (1, 1, vac)` on
/// `(t, x, y)`; every other configuration is fixed. The map is an involution.
pub fn cpbs_config(config: BasisConfig, t: usize, x: usize, y: usize) -> BasisConfig {
    use ModeState::{Photon, Vacuum};
    match (config.get(t), config.get(x), config.get(y)) {
        (Photon(pt), Vacuum, Photon(py)) if pt == py => config.with(x, Photon(py)).with(y, Vacuum),
        (Photon(pt), Photon(px), Vacuum) if pt == px => config.with(x, Vacuum).with(y, Photon(px)),
        _ => config,
    }
}

/// Controlled polarizing beam splitter on `(t, x, y)`.
pub fn cpbs(psi: &StateVector, t: &str, x: &str, y: &str) -> Result<StateVector> {
    let [it, ix, iy] = psi.register().distinct_indices([t, x, y])?;
    Ok(psi.permuted(|c| cpbs_config(c, it, ix, iy)))
}

/// Eve's forward operation `Q = SWAP_tx CPBS_txy H_y`.
pub fn q_attack(psi: &StateVector, t: &str, x: &str, y: &str) -> Result<StateVector> {
    psi.register().distinct_indices([t, x, y])?;
    let s = hadamard(psi, y)?;
    let s = cpbs(&s, t, x, y)?;
    s.swap_modes(t, x)
}

/// Eve's backward operation `Q^-1 = H_y CPBS_txy SWAP_tx`.
pub fn q_attack_inverse(psi: &StateVector, t: &str, x: &str, y: &str) -> Result<StateVector> {
    psi.register().distinct_indices([t, x, y])?;
    let s = psi.swap_modes(t, x)?;
    let s = cpbs(&s, t, x, y)?;
    hadamard(&s, y)
}

/// Symmetrization `S_ty = X_t Z_t CNOT_ty X_t`.
pub fn symmetrize_s(psi: &StateVector, t: &str, y: &str) -> Result<StateVector> {
    psi.register().distinct_indices([t, y])?;
    let s = pauli_x(psi, t)?;
    let s = cnot(&s, t, y)?;
    let s = pauli_z(&s, t)?;
    pauli_x(&s, t)
}

/// A gate with its mode arguments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gate {
    H(String),
    X(String),
    Z(String),
    ZPow(String, PolarizationBit),
    Cnot { ctrl: String, target: String },
    Swap(String, String),
    Cpbs { t: String, x: String, y: String },
    Q { t: String, x: String, y: String },
    QInv { t: String, x: String, y: String },
    S { t: String, y: String },
}

impl Gate {
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        match self {
            Gate::H(m) => hadamard(psi, m),
            Gate::X(m) => pauli_x(psi, m),
            Gate::Z(m) => pauli_z(psi, m),
            Gate::ZPow(m, j) => z_pow(psi, m, *j),
            Gate::Cnot { ctrl, target } => cnot(psi, ctrl, target),
            Gate::Swap(a, b) => psi.swap_modes(a, b),
            Gate::Cpbs { t, x, y } => cpbs(psi, t, x, y),
            Gate::Q { t, x, y } => q_attack(psi, t, x, y),
            Gate::QInv { t, x, y } => q_attack_inverse(psi, t, x, y),
            Gate::S { t, y } => symmetrize_s(psi, t, y),
        }
    }

    /// Every gate kind over the standard `h, t, x, y` register.
    pub fn catalogue() -> Vec<Gate> {
        let s = |v: &str| v.to_string();
        let mut gates = Vec::new();
        for m in ["h", "t", "x", "y"] {
            gates.push(Gate::H(s(m)));
            gates.push(Gate::X(s(m)));
            gates.push(Gate::Z(s(m)));
            gates.push(Gate::ZPow(s(m), PolarizationBit::One));
        }
        gates.push(Gate::Cnot { ctrl: s("t"), target: s("y") });
        gates.push(Gate::Cnot { ctrl: s("y"), target: s("h") });
        gates.push(Gate::Swap(s("t"), s("x")));
        gates.push(Gate::Swap(s("h"), s("y")));
        gates.push(Gate::Cpbs { t: s("t"), x: s("x"), y: s("y") });
        gates.push(Gate::Q { t: s("t"), x: s("x"), y: s("y") });
        gates.push(Gate::QInv { t: s("t"), x: s("x"), y: s("y") });
        gates.push(Gate::S { t: s("t"), y: s("y") });
        gates
    }
}
