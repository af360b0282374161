//! Eve's attack: the forward and backward operations, optional
//! symmetrization, her polarization measurement, and the channel substitution
//! and filtering that hide the attack's losses inside ordinary channel loss.
//!
//! Eve sits at Alice's end of a channel she controls. On the way out the
//! photon crosses her (lossy) channel and then her forward operation; on the
//! way back it meets her backward operation first and then her channel and
//! filter. Every valid message round Bob sees is therefore one in which the
//! complete attack ran.

use serde::Serialize;

use crate::branching::BranchChooser;
use crate::error::{check_range, ConfigError};
use crate::fockstate::{BranchSet, ModeState, PolarizationOutcome, Result, StateVector};
use crate::gates;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    None,
    /// Attack every round.
    FullAttack { symmetrize: bool },
    /// Attack each round independently with probability `mu`.
    PartialAttack { mu: f64, symmetrize: bool },
}

impl Strategy {
    /// The undetectable attack for a channel of efficiency `eta`: every round
    /// up to `eta = 1/2`, the fraction `2 (1 - eta)` above.
    pub fn loss_hiding(eta: f64, symmetrize: bool) -> std::result::Result<Self, ConfigError> {
        let policy = loss_policy_for(eta)?;
        Ok(if policy.mu >= 1.0 {
            Strategy::FullAttack { symmetrize }
        } else {
            Strategy::PartialAttack {
                mu: policy.mu,
                symmetrize,
            }
        })
    }

    pub fn symmetrize(&self) -> bool {
        match self {
            Strategy::None => false,
            Strategy::FullAttack { symmetrize } | Strategy::PartialAttack { symmetrize, .. } => *symmetrize,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if let Strategy::PartialAttack { mu, .. } = self {
            check_range("mu", *mu, 0.0, true, 1.0)?;
        }
        Ok(())
    }

    /// Resolves the per-round parameters for a channel of efficiency `eta`.
    ///
    /// Attacks run over the substituted channel and filter of
    /// [`loss_policy_for`], with the attacked fraction set by the strategy.
    pub fn plan(&self, eta: f64) -> std::result::Result<AttackPlan, ConfigError> {
        self.validate()?;
        let policy = loss_policy_for(eta)?;
        Ok(match *self {
            Strategy::None => AttackPlan {
                channel_eta: eta,
                mu: 0.0,
                filter_pass: 1.0,
                symmetrize: false,
            },
            Strategy::FullAttack { symmetrize } => AttackPlan {
                channel_eta: policy.eta_eve,
                mu: 1.0,
                filter_pass: policy.filter_pass,
                symmetrize,
            },
            Strategy::PartialAttack { mu, symmetrize } => AttackPlan {
                channel_eta: policy.eta_eve,
                mu,
                filter_pass: policy.filter_pass,
                symmetrize,
            },
        })
    }
}

/// Eve's channel substitution for an original channel of efficiency `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossPolicy {
    pub eta: f64,
    /// Efficiency of Eve's substituted channel, per leg.
    pub eta_eve: f64,
    /// Probability that Eve lets a returning message photon through.
    pub filter_pass: f64,
    /// Fraction of rounds attacked.
    pub mu: f64,
}

pub fn loss_policy_for(eta: f64) -> std::result::Result<LossPolicy, ConfigError> {
    let eta = check_range("eta", eta, 0.0, false, 1.0)?;
    Ok(if eta <= 0.5 {
        // doubled transmission; the attack's one-in-two loss brings Alice back to eta
        LossPolicy {
            eta,
            eta_eve: 2.0 * eta,
            filter_pass: 0.25,
            mu: 1.0,
        }
    } else {
        LossPolicy {
            eta,
            eta_eve: 1.0,
            filter_pass: eta * eta,
            mu: 2.0 * (1.0 - eta),
        }
    })
}

/// Per-round channel, attack and filter parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackPlan {
    /// Single-photon efficiency of each leg of the channel in use.
    pub channel_eta: f64,
    pub mu: f64,
    pub filter_pass: f64,
    pub symmetrize: bool,
}

impl AttackPlan {
    /// Eve controls the channel (and may filter) whenever she attacks at all.
    pub fn eve_present(&self) -> bool {
        self.mu > 0.0
    }
}

/// Eve's per-round bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct EveContext {
    pub travel: &'static str,
    /// Mode holding the travel photon while Alice works (`x`).
    pub store: &'static str,
    /// Eve's own probe photon (`y`).
    pub probe: &'static str,
    pub attacked: bool,
    pub symmetrize: bool,
    pub s_flag: bool,
    /// Whether Eve learns Alice's mode choice before the photon returns.
    pub mode_known: bool,
}

impl EveContext {
    pub fn new(attacked: bool, symmetrize: bool, mode_known: bool) -> Self {
        Self {
            travel: "t",
            store: "x",
            probe: "y",
            attacked,
            symmetrize,
            s_flag: false,
            mode_known,
        }
    }
}

/// Prepares `|vac>_x |0>_y` and applies `Q` when the round is attacked.
pub fn eve_forward(psi: &StateVector, ctx: &EveContext) -> Result<StateVector> {
    if !ctx.attacked {
        return Ok(psi.clone());
    }
    let prepared = psi.fill_mode(ctx.probe, ModeState::H0)?;
    gates::q_attack(&prepared, ctx.travel, ctx.store, ctx.probe)
}

/// Applies `Q^-1`, then `S` with probability one half when symmetrizing.
pub fn eve_backward(
    psi: &StateVector,
    ctx: &mut EveContext,
    chooser: &mut impl BranchChooser,
) -> Result<StateVector> {
    if !ctx.attacked {
        return Ok(psi.clone());
    }
    let out = gates::q_attack_inverse(psi, ctx.travel, ctx.store, ctx.probe)?;
    if ctx.symmetrize && chooser.coin(0.5) {
        ctx.s_flag = true;
        return gates::symmetrize_s(&out, ctx.travel, ctx.probe);
    }
    Ok(out)
}

/// Polarization measurement of the probe; the outcome is Eve's bit `k`.
pub fn eve_measure_k(psi: &StateVector, ctx: &EveContext) -> Result<BranchSet<PolarizationOutcome>> {
    psi.measure_polarization(ctx.probe)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Pass,
    Drop,
}

/// Independent of every round variable by construction.
pub fn filter_message_return(filter_pass: f64, chooser: &mut impl BranchChooser) -> FilterDecision {
    if chooser.coin(filter_pass) {
        FilterDecision::Pass
    } else {
        FilterDecision::Drop
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::SamplingChooser;
    use crate::fockstate::{BasisConfig, ModeRegister, PolarizationBit};
    use num_complex::Complex64;
    use std::f64::consts::FRAC_1_SQRT_2;

    const V: ModeState = ModeState::Vacuum;
    const P0: ModeState = ModeState::H0;
    const P1: ModeState = ModeState::H1;

    fn ket(h: ModeState, t: ModeState, x: ModeState, y: ModeState) -> BasisConfig {
        BasisConfig::from_modes(&[h, t, x, y]).unwrap()
    }

    fn state(terms: &[(BasisConfig, f64)]) -> StateVector {
        StateVector::from_terms(
            &ModeRegister::standard(),
            terms.iter().map(|(k, a)| (*k, Complex64::new(*a, 0.0))),
        )
        .unwrap()
    }

    fn psi_plus() -> StateVector {
        let r = FRAC_1_SQRT_2;
        state(&[(ket(P0, P1, V, V), r), (ket(P1, P0, V, V), r)])
    }

    /// Always answers the same index.
    struct Fixed(usize);
    impl BranchChooser for Fixed {
        fn choose(&mut self, _: &[f64]) -> usize {
            self.0
        }
    }

    #[test]
    fn policy_below_half() {
        let p = loss_policy_for(0.4).unwrap();
        assert_eq!((p.eta_eve, p.mu, p.filter_pass), (0.8, 1.0, 0.25));
        // Alice sees eta, Bob sees eta^2
        assert!((p.eta_eve * 0.5 - 0.4).abs() < 1e-15);
        assert!((p.eta_eve * p.eta_eve * p.filter_pass - 0.16).abs() < 1e-15);
    }

    #[test]
    fn policy_above_half() {
        let p = loss_policy_for(0.75).unwrap();
        assert_eq!((p.eta_eve, p.mu, p.filter_pass), (1.0, 0.5, 0.5625));
    }

    #[test]
    fn policy_continuous_at_half() {
        let p = loss_policy_for(0.5).unwrap();
        assert_eq!((p.eta_eve, p.mu, p.filter_pass), (1.0, 1.0, 0.25));
        let above = loss_policy_for(0.5 + 1e-12).unwrap();
        assert!((above.mu - 1.0).abs() < 1e-11);
        assert!((above.filter_pass - 0.25).abs() < 1e-11);
    }

    #[test]
    fn policy_rejects_bad_eta() {
        for eta in [0.0, -0.1, 1.1, f64::NAN] {
            assert!(loss_policy_for(eta).is_err(), "eta = {eta}");
        }
    }

    #[test]
    fn loss_hiding_strategy_switches_at_half() {
        assert_eq!(
            Strategy::loss_hiding(0.3, true).unwrap(),
            Strategy::FullAttack { symmetrize: true }
        );
        match Strategy::loss_hiding(0.9, false).unwrap() {
            Strategy::PartialAttack { mu, .. } => assert!((mu - 0.2).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Strategy::PartialAttack { mu: 1.5, symmetrize: false }.validate().is_err());
    }

    #[test]
    fn forward_attack_output() {
        let ctx = EveContext::new(true, false, true);
        let out = eve_forward(&psi_plus(), &ctx).unwrap();
        let expected = state(&[
            (ket(P0, V, P1, P0), 0.5),
            (ket(P0, P1, P1, V), 0.5),
            (ket(P1, P0, P0, V), 0.5),
            (ket(P1, V, P0, P1), 0.5),
        ]);
        assert!((out.inner(&expected).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_without_attack_is_identity() {
        let ctx = EveContext::new(false, false, true);
        assert_eq!(eve_forward(&psi_plus(), &ctx).unwrap(), psi_plus());
    }

    #[test]
    fn forward_on_lost_travel_photon() {
        let ctx = EveContext::new(true, false, true);
        let lost = state(&[(ket(P1, V, V, V), 1.0)]);
        let out = eve_forward(&lost, &ctx).unwrap();
        // H_y spreads the probe; CPBS and SWAP see an empty travel mode
        let r = FRAC_1_SQRT_2;
        let expected = state(&[(ket(P1, V, V, P0), r), (ket(P1, V, V, P1), r)]);
        assert_eq!(out, expected);
        assert_eq!(out.photon_numbers(), vec![2]);
    }

    fn message_state(j: PolarizationBit) -> StateVector {
        let ctx = EveContext::new(true, false, true);
        let out = eve_forward(&psi_plus(), &ctx).unwrap();
        gates::z_pow(&out, "t", j).unwrap()
    }

    #[test]
    fn backward_without_symmetrization() {
        let mut ctx = EveContext::new(true, false, true);
        let out = eve_backward(&message_state(PolarizationBit::One), &mut ctx, &mut Fixed(0)).unwrap();
        assert!(!ctx.s_flag);
        let r = FRAC_1_SQRT_2;
        let expected = state(&[(ket(P0, P1, V, P1), r), (ket(P1, P0, V, P0), r)]);
        assert!((out.inner(&expected).unwrap().re - 1.0).abs() < 1e-12);
        let k = eve_measure_k(&out, &ctx).unwrap();
        assert!((k.probability_of(PolarizationOutcome::Pol(PolarizationBit::Zero)) - 0.5).abs() < 1e-12);

        let out0 = eve_backward(&message_state(PolarizationBit::Zero), &mut ctx, &mut Fixed(0)).unwrap();
        let k = eve_measure_k(&out0, &ctx).unwrap();
        assert!((k.probability_of(PolarizationOutcome::Pol(PolarizationBit::Zero)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_with_symmetrization_branch() {
        let mut ctx = EveContext::new(true, true, true);
        // index 0 of the S coin means "apply S"
        let out = eve_backward(&message_state(PolarizationBit::One), &mut ctx, &mut Fixed(0)).unwrap();
        assert!(ctx.s_flag);
        let bell = out.bell_measure("h", "t").unwrap();
        assert!((bell.probability_of(crate::fockstate::BellOutcome::PsiMinus) - 1.0).abs() < 1e-12);
        let k = eve_measure_k(&out, &ctx).unwrap();
        assert!((k.probability_of(PolarizationOutcome::Pol(PolarizationBit::One)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disabled_symmetrization_matches_plain_path() {
        let input = message_state(PolarizationBit::One);
        let mut plain = EveContext::new(true, false, true);
        let mut rng_a = SamplingChooser::for_round(9, 9);
        let mut rng_b = SamplingChooser::for_round(9, 9);
        let a = eve_backward(&input, &mut plain, &mut rng_a).unwrap();
        let b = gates::q_attack_inverse(&input, "t", "x", "y").unwrap();
        assert_eq!(a, b);
        // the plain path consumed no randomness
        assert_eq!(rng_a.choose(&[0.5, 0.5]), rng_b.choose(&[0.5, 0.5]));
    }

    #[test]
    fn filter_rates() {
        let mut chooser = SamplingChooser::for_round(5, 0);
        let n = 1_000_000;
        let passed = (0..n)
            .filter(|_| filter_message_return(0.25, &mut chooser) == FilterDecision::Pass)
            .count();
        let p = passed as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((p - 0.25).abs() < 5.0 * se, "pass rate {p}");
        assert!((0..1000).all(|_| filter_message_return(1.0, &mut chooser) == FilterDecision::Pass));
    }
}
