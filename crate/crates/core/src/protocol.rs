//! The ping-pong protocol round: Bob's entangled source and Bell decoding,
//! Alice's random choice between control and message mode, the lossy channel
//! legs, and the delayed-announcement countermeasure.
//!
//! Without the countermeasure Eve learns Alice's mode before the photon
//! returns and leaves control rounds alone on the way back. With it she must
//! act blind, and Bob additionally checks the travel mode for a photon in
//! control rounds. Alice's detector absorbs the travel photon it registers.

use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{
    eve_backward, eve_forward, eve_measure_k, filter_message_return, AttackPlan, EveContext,
    FilterDecision, Strategy,
};
use crate::branching::{BranchChooser, SamplingChooser};
use crate::error::{check_range, ConfigError, Error};
use crate::fockstate::{
    BasisConfig, BellOutcome, BranchSet, ModeRegister, ModeState, Occupancy, PolarizationBit,
    PolarizationOutcome, StateVector,
};
use crate::gates;

const HOME: &str = "h";
const TRAVEL: &str = "t";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundMode {
    Message,
    Control,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolConfig {
    /// Single-photon efficiency of the original channel, per leg.
    pub eta: f64,
    /// Probability that Alice picks control mode.
    pub control_prob: f64,
    /// Delayed mode announcement plus Bob's travel-mode occupancy check.
    pub countermeasure: bool,
    pub rounds: u64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            control_prob: 0.5,
            countermeasure: false,
            rounds: 10_000,
            seed: 42,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_range("eta", self.eta, 0.0, false, 1.0)?;
        check_range("control_prob", self.control_prob, 0.0, true, 1.0)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    None,
    LossToAlice,
    LossToBob,
    Filtered,
    InvalidBell,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 5] = [
        DiscardReason::None,
        DiscardReason::LossToAlice,
        DiscardReason::LossToBob,
        DiscardReason::Filtered,
        DiscardReason::InvalidBell,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::None => "none",
            DiscardReason::LossToAlice => "loss_to_alice",
            DiscardReason::LossToBob => "loss_to_bob",
            DiscardReason::Filtered => "filtered",
            DiscardReason::InvalidBell => "invalid_bell",
        }
    }
}

/// Everything recorded about one round. Absent fields were never measured.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundOutcome {
    pub mode: RoundMode,
    /// Alice's message bit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u8>,
    /// Eve's polarization result on her probe.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u8>,
    /// Bob's decoded bit, `0` for Psi+ and `1` for Psi-.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u8>,
    /// Whether Eve applied `S`; present when her backward attack ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_flag: Option<bool>,
    pub attacked: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alice_detected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alice_pol: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bob_home_pol: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bob_travel_occupied: Option<bool>,
    pub discarded: bool,
    pub discard_reason: DiscardReason,
}

impl RoundOutcome {
    fn new(mode: RoundMode, attacked: bool) -> Self {
        Self {
            mode,
            j: None,
            k: None,
            m: None,
            s_flag: None,
            attacked,
            alice_detected: None,
            alice_pol: None,
            bob_home_pol: None,
            bob_travel_occupied: None,
            discarded: false,
            discard_reason: DiscardReason::None,
        }
    }

    fn discard(&mut self, reason: DiscardReason) {
        self.discarded = true;
        self.discard_reason = reason;
    }

    /// Control round in which both Alice and Bob found the travel photon.
    pub fn double_detection(&self) -> bool {
        self.alice_detected == Some(true) && self.bob_travel_occupied == Some(true)
    }
}

/// `|Psi+>_ht` with every other mode empty.
pub fn bob_prepare(register: &ModeRegister) -> crate::fockstate::Result<StateVector> {
    let [h, t] = register.distinct_indices([HOME, TRAVEL])?;
    let amp = num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let base = BasisConfig::vacuum();
    StateVector::from_terms(
        register,
        [
            (base.with(h, ModeState::H0).with(t, ModeState::H1), amp),
            (base.with(h, ModeState::H1).with(t, ModeState::H0), amp),
        ],
    )
}

/// `Z^j` on the travel mode.
pub fn alice_message_encode(psi: &StateVector, j: PolarizationBit) -> crate::fockstate::Result<StateVector> {
    gates::z_pow(psi, TRAVEL, j)
}

pub fn alice_control_measure(psi: &StateVector) -> crate::fockstate::Result<BranchSet<PolarizationOutcome>> {
    psi.measure_polarization(TRAVEL)
}

pub fn bob_bell_decode(psi: &StateVector) -> crate::fockstate::Result<BranchSet<BellOutcome>> {
    psi.bell_measure(HOME, TRAVEL)
}

/// Bob's bit for a Bell outcome; `None` means the round is discarded.
pub fn decoded_bit(outcome: BellOutcome) -> Option<u8> {
    match outcome {
        BellOutcome::PsiPlus => Some(0),
        BellOutcome::PsiMinus => Some(1),
        _ => None,
    }
}

fn pol_bit(outcome: PolarizationOutcome) -> Option<u8> {
    match outcome {
        PolarizationOutcome::Pol(p) => Some(p.bit()),
        PolarizationOutcome::Vacuum => None,
    }
}

/// Removes the photon in `mode`; the environment keeps its polarization.
fn absorb(psi: &StateVector, mode: &str, chooser: &mut impl BranchChooser) -> StateVector {
    let (_, post) = chooser.pick(psi.measure_polarization(mode).expect("standard register"));
    post.lose_photon(mode).expect("standard register")
}

/// One channel leg of efficiency `eta` on the travel mode. Returns whether the photon was lost.
fn transmit(psi: &mut StateVector, eta: f64, chooser: &mut impl BranchChooser) -> bool {
    let lost = chooser.coin(1.0 - eta);
    if lost {
        *psi = absorb(psi, TRAVEL, chooser);
    }
    lost
}

/// Receives a description and the state after each step of a round.
pub type TraceSink<'a> = &'a mut dyn FnMut(&str, &StateVector);

/// Executes one round with the given attack parameters.
///
/// All classical randomness and measurement outcomes come from `chooser`.
pub fn play_round<C: BranchChooser>(
    config: &ProtocolConfig,
    plan: &AttackPlan,
    chooser: &mut C,
    trace: TraceSink<'_>,
) -> RoundOutcome {
    let register = ModeRegister::standard();
    let mut psi = bob_prepare(&register).expect("standard register");
    trace("Bob prepares Psi+ on (h, t)", &psi);

    let attacked = plan.eve_present() && chooser.coin(plan.mu);
    let mut eve = EveContext::new(attacked, plan.symmetrize, !config.countermeasure);

    let lost_forward = transmit(&mut psi, plan.channel_eta, chooser);
    if lost_forward {
        trace("travel photon lost on the way to Alice", &psi);
    }
    if attacked {
        psi = eve_forward(&psi, &eve).expect("standard register");
        trace("Eve prepares |vac>_x|0>_y and applies Q", &psi);
    }

    let mode = if chooser.coin(config.control_prob) {
        RoundMode::Control
    } else {
        RoundMode::Message
    };
    let mut out = RoundOutcome::new(mode, attacked);

    match mode {
        RoundMode::Control => {
            let (pol, post) = chooser.pick(alice_control_measure(&psi).expect("standard register"));
            let alice_pol = pol_bit(pol);
            out.alice_detected = Some(alice_pol.is_some());
            out.alice_pol = alice_pol;
            psi = if alice_pol.is_some() {
                post.lose_photon(TRAVEL).expect("standard register")
            } else {
                post
            };
            trace("Alice measures the travel polarization", &psi);

            if config.countermeasure {
                if attacked {
                    psi = eve_backward(&psi, &mut eve, chooser).expect("standard register");
                    out.s_flag = Some(eve.s_flag);
                    trace("Eve applies her backward operation", &psi);
                }
                if transmit(&mut psi, plan.channel_eta, chooser) {
                    trace("returning photon lost on the way to Bob", &psi);
                }
                if plan.eve_present()
                    && filter_message_return(plan.filter_pass, chooser) == FilterDecision::Drop
                {
                    psi = absorb(&psi, TRAVEL, chooser);
                    trace("Eve filters the returning photon", &psi);
                }
                let (occ, post) = chooser.pick(psi.measure_occupancy(TRAVEL).expect("standard register"));
                out.bob_travel_occupied = Some(occ == Occupancy::Occupied);
                psi = post;
                trace("Bob checks the travel mode", &psi);
                if attacked {
                    let (k, post) = chooser.pick(eve_measure_k(&psi, &eve).expect("standard register"));
                    out.k = pol_bit(k);
                    psi = post;
                }
            }

            if alice_pol.is_some() {
                let (home, post) = chooser.pick(psi.measure_polarization(HOME).expect("standard register"));
                out.bob_home_pol = pol_bit(home);
                psi = post;
                trace("Bob measures the home polarization", &psi);
            } else {
                out.discard(DiscardReason::LossToAlice);
            }
        }
        RoundMode::Message => {
            let j = if chooser.coin(0.5) {
                PolarizationBit::Zero
            } else {
                PolarizationBit::One
            };
            out.j = Some(j.bit());
            psi = alice_message_encode(&psi, j).expect("standard register");
            trace("Alice encodes Z^j on the travel photon", &psi);

            if attacked {
                psi = eve_backward(&psi, &mut eve, chooser).expect("standard register");
                out.s_flag = Some(eve.s_flag);
                trace("Eve applies her backward operation", &psi);
            }
            let lost_backward = transmit(&mut psi, plan.channel_eta, chooser);
            if lost_backward {
                trace("travel photon lost on the way to Bob", &psi);
            }
            let filtered = plan.eve_present()
                && filter_message_return(plan.filter_pass, chooser) == FilterDecision::Drop;
            if filtered {
                psi = absorb(&psi, TRAVEL, chooser);
                trace("Eve filters the returning photon", &psi);
            }

            let (bell, post) = chooser.pick(bob_bell_decode(&psi).expect("standard register"));
            psi = post;
            trace("Bob measures (h, t) in the Bell basis", &psi);
            if attacked {
                let (k, post) = chooser.pick(eve_measure_k(&psi, &eve).expect("standard register"));
                out.k = pol_bit(k);
                psi = post;
                trace("Eve measures her probe", &psi);
            }

            let reason = if lost_forward {
                DiscardReason::LossToAlice
            } else if lost_backward {
                DiscardReason::LossToBob
            } else if filtered {
                DiscardReason::Filtered
            } else if decoded_bit(bell).is_none() {
                DiscardReason::InvalidBell
            } else {
                DiscardReason::None
            };
            if reason == DiscardReason::None {
                out.m = decoded_bit(bell);
            } else {
                out.discard(reason);
            }
        }
    }
    out
}

/// One round under `strategy`, drawing everything from `chooser`.
pub fn run_round(
    config: &ProtocolConfig,
    strategy: &Strategy,
    chooser: &mut impl BranchChooser,
) -> Result<RoundOutcome, ConfigError> {
    config.validate()?;
    let plan = strategy.plan(config.eta)?;
    Ok(play_round(config, &plan, chooser, &mut |_, _| {}))
}

/// Round `index` of the run seeded by `config.seed`.
pub fn run_indexed_round(config: &ProtocolConfig, plan: &AttackPlan, index: u64) -> RoundOutcome {
    let mut chooser = SamplingChooser::for_round(config.seed, index);
    play_round(config, plan, &mut chooser, &mut |_, _| {})
}

/// Tallies over a list of rounds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub rounds: u64,
    pub message_rounds: u64,
    pub control_rounds: u64,
    pub attacked_rounds: u64,
    pub valid_message_rounds: u64,
    pub bit_errors: u64,
    pub alice_detections: u64,
    pub anticorrelated: u64,
    pub travel_occupied: u64,
    pub double_detections: u64,
    pub discarded_loss_to_alice: u64,
    pub discarded_loss_to_bob: u64,
    pub discarded_filtered: u64,
    pub discarded_invalid_bell: u64,
}

impl Summary {
    pub fn add(&mut self, r: &RoundOutcome) {
        self.rounds += 1;
        match r.mode {
            RoundMode::Message => self.message_rounds += 1,
            RoundMode::Control => self.control_rounds += 1,
        }
        self.attacked_rounds += u64::from(r.attacked);
        if let (Some(j), Some(m)) = (r.j, r.m) {
            self.valid_message_rounds += 1;
            self.bit_errors += u64::from(j != m);
        }
        if r.alice_detected == Some(true) {
            self.alice_detections += 1;
        }
        if let (Some(a), Some(b)) = (r.alice_pol, r.bob_home_pol) {
            self.anticorrelated += u64::from(a != b);
        }
        if r.bob_travel_occupied == Some(true) {
            self.travel_occupied += 1;
        }
        self.double_detections += u64::from(r.double_detection());
        match r.discard_reason {
            DiscardReason::None => {}
            DiscardReason::LossToAlice => self.discarded_loss_to_alice += 1,
            DiscardReason::LossToBob => self.discarded_loss_to_bob += 1,
            DiscardReason::Filtered => self.discarded_filtered += 1,
            DiscardReason::InvalidBell => self.discarded_invalid_bell += 1,
        }
    }

    /// Adds every counter of `other`.
    pub fn merge(&mut self, other: &Summary) {
        self.rounds += other.rounds;
        self.message_rounds += other.message_rounds;
        self.control_rounds += other.control_rounds;
        self.attacked_rounds += other.attacked_rounds;
        self.valid_message_rounds += other.valid_message_rounds;
        self.bit_errors += other.bit_errors;
        self.alice_detections += other.alice_detections;
        self.anticorrelated += other.anticorrelated;
        self.travel_occupied += other.travel_occupied;
        self.double_detections += other.double_detections;
        self.discarded_loss_to_alice += other.discarded_loss_to_alice;
        self.discarded_loss_to_bob += other.discarded_loss_to_bob;
        self.discarded_filtered += other.discarded_filtered;
        self.discarded_invalid_bell += other.discarded_invalid_bell;
    }

    pub fn tally<'a>(rounds: impl IntoIterator<Item = &'a RoundOutcome>) -> Self {
        let mut s = Self::default();
        for r in rounds {
            s.add(r);
        }
        s
    }

    pub fn qber(&self) -> Option<f64> {
        (self.valid_message_rounds > 0).then(|| self.bit_errors as f64 / self.valid_message_rounds as f64)
    }

    pub fn alice_detect_rate(&self) -> Option<f64> {
        (self.control_rounds > 0).then(|| self.alice_detections as f64 / self.control_rounds as f64)
    }

    pub fn bob_return_rate(&self) -> Option<f64> {
        (self.message_rounds > 0).then(|| self.valid_message_rounds as f64 / self.message_rounds as f64)
    }
}

/// Configuration echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub protocol: ProtocolConfig,
    pub strategy: Strategy,
    pub plan: AttackPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transcript {
    pub config: RunConfig,
    pub summary: Summary,
    pub rounds: Vec<RoundOutcome>,
}

impl Transcript {
    /// Checks the length and counters against the round list.
    pub fn verify(&self) -> bool {
        self.rounds.len() as u64 == self.config.protocol.rounds && Summary::tally(&self.rounds) == self.summary
    }
}

/// Runs `config.rounds` independent rounds. The result depends only on the
/// configuration, never on thread count.
pub fn run_transcript(config: &ProtocolConfig, strategy: &Strategy) -> Result<Transcript, Error> {
    config.validate()?;
    if config.rounds == 0 {
        return Err(Error::Invalid("rounds must be at least 1".into()));
    }
    let plan = strategy.plan(config.eta)?;
    let rounds: Vec<RoundOutcome> = (0..config.rounds)
        .into_par_iter()
        .map(|i| run_indexed_round(config, &plan, i))
        .collect();
    Ok(Transcript {
        summary: Summary::tally(&rounds),
        config: RunConfig {
            protocol: config.clone(),
            strategy: *strategy,
            plan,
        },
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Always takes the first live branch.
    struct First;
    impl BranchChooser for First {
        fn choose(&mut self, weights: &[f64]) -> usize {
            weights.iter().position(|w| *w > 0.0).unwrap()
        }
    }

    fn config(eta: f64) -> ProtocolConfig {
        ProtocolConfig {
            eta,
            rounds: 20_000,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn prepared_pair() {
        let psi = bob_prepare(&ModeRegister::standard()).unwrap();
        let bell = bob_bell_decode(&psi).unwrap();
        assert!((bell.probability_of(BellOutcome::PsiPlus) - 1.0).abs() < 1e-12);
        let home = psi.measure_polarization("h").unwrap();
        assert!((home.probability_of(PolarizationOutcome::Pol(PolarizationBit::Zero)) - 0.5).abs() < 1e-12);
        let probe = StateVector::basis_state(
            &ModeRegister::standard(),
            &[("h", ModeState::H0), ("t", ModeState::H1), ("x", ModeState::Vacuum), ("y", ModeState::Vacuum)],
        )
        .unwrap();
        assert!((psi.inner(&probe).unwrap().re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(bob_prepare(&ModeRegister::new(&["h", "x"]).unwrap()).is_err());
    }

    #[test]
    fn encoding() {
        let psi = bob_prepare(&ModeRegister::standard()).unwrap();
        assert_eq!(alice_message_encode(&psi, PolarizationBit::Zero).unwrap(), psi);
        let flipped = alice_message_encode(&psi, PolarizationBit::One).unwrap();
        let bell = bob_bell_decode(&flipped).unwrap();
        assert!((bell.probability_of(BellOutcome::PsiMinus) - 1.0).abs() < 1e-12);

        let vac = StateVector::vacuum(&ModeRegister::standard());
        assert_eq!(alice_message_encode(&vac, PolarizationBit::One).unwrap(), vac);
    }

    #[test]
    fn ideal_message_round_decodes_bit() {
        let cfg = ProtocolConfig {
            control_prob: 0.0,
            ..config(1.0)
        };
        let out = run_round(&cfg, &Strategy::None, &mut First).unwrap();
        assert_eq!(out.mode, RoundMode::Message);
        assert_eq!(out.j, Some(0));
        assert_eq!(out.m, Some(0));
        assert!(!out.discarded);
        assert_eq!(out.k, None);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = ProtocolConfig {
            eta: 0.0,
            ..ProtocolConfig::default()
        };
        assert!(run_round(&bad, &Strategy::None, &mut First).is_err());
        let bad = ProtocolConfig {
            control_prob: 1.5,
            ..ProtocolConfig::default()
        };
        assert!(bad.validate().is_err());
        let zero = ProtocolConfig {
            rounds: 0,
            ..ProtocolConfig::default()
        };
        assert!(run_transcript(&zero, &Strategy::None).is_err());
    }

    #[test]
    fn no_adversary_ideal_transcript_is_clean() {
        let t = run_transcript(&config(1.0), &Strategy::None).unwrap();
        assert!(t.verify());
        for r in &t.rounds {
            match r.mode {
                RoundMode::Message => assert_eq!(r.j, r.m),
                RoundMode::Control => {
                    assert_eq!(r.alice_detected, Some(true));
                    assert_ne!(r.alice_pol, r.bob_home_pol);
                }
            }
            assert!(!r.discarded);
        }
    }

    #[test]
    fn lossy_rates_without_adversary() {
        let eta = 0.7;
        let t = run_transcript(&config(eta), &Strategy::None).unwrap();
        let s = &t.summary;
        let n = s.control_rounds as f64;
        let se = (eta * (1.0 - eta) / n).sqrt();
        assert!((s.alice_detect_rate().unwrap() - eta).abs() < 5.0 * se);
        let n = s.message_rounds as f64;
        let p = eta * eta;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((s.bob_return_rate().unwrap() - p).abs() < 5.0 * se);
        assert_eq!(s.qber(), Some(0.0));
    }

    #[test]
    fn attacked_control_rounds_show_no_correlation_signature() {
        let eta = 0.4;
        let t = run_transcript(&config(eta), &Strategy::FullAttack { symmetrize: true }).unwrap();
        let s = &t.summary;
        assert_eq!(s.anticorrelated, s.alice_detections);
        let n = s.control_rounds as f64;
        let se = (eta * (1.0 - eta) / n).sqrt();
        assert!((s.alice_detect_rate().unwrap() - eta).abs() < 5.0 * se);
    }

    #[test]
    fn outcome_field_invariants() {
        for countermeasure in [false, true] {
            let cfg = ProtocolConfig {
                countermeasure,
                rounds: 5_000,
                ..config(0.45)
            };
            let t = run_transcript(&cfg, &Strategy::FullAttack { symmetrize: true }).unwrap();
            for r in &t.rounds {
                if r.m.is_some() {
                    assert!(r.mode == RoundMode::Message && !r.discarded);
                }
                if r.k.is_some() {
                    assert!(r.attacked);
                }
                if r.mode == RoundMode::Control && r.alice_detected == Some(true) {
                    assert!(r.alice_pol.is_some() && r.bob_home_pol.is_some());
                }
                assert_eq!(r.bob_travel_occupied.is_some(), countermeasure && r.mode == RoundMode::Control);
                assert_eq!(r.discarded, r.discard_reason != DiscardReason::None);
            }
        }
    }

    #[test]
    fn transcripts_are_deterministic() {
        let cfg = ProtocolConfig {
            rounds: 2_000,
            ..config(0.6)
        };
        let strategy = Strategy::loss_hiding(0.6, true).unwrap();
        let a = run_transcript(&cfg, &strategy).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_transcript(&cfg, &strategy).unwrap());
        assert_eq!(a, b);
        let other = run_transcript(&ProtocolConfig { seed: 7, ..cfg }, &strategy).unwrap();
        assert_ne!(a.rounds, other.rounds);
    }

    #[test]
    fn trace_records_steps() {
        let mut steps = Vec::new();
        let plan = Strategy::FullAttack { symmetrize: false }.plan(1.0).unwrap();
        let cfg = ProtocolConfig {
            control_prob: 0.0,
            ..config(1.0)
        };
        play_round(&cfg, &plan, &mut First, &mut |label, psi| {
            steps.push((label.to_string(), psi.clone()))
        });
        assert_eq!(steps[0].0, "Bob prepares Psi+ on (h, t)");
        assert!(steps.iter().any(|(l, _)| l.starts_with("Eve prepares")));
        assert!(steps.iter().all(|(_, s)| s.is_normalized()));
    }
}
