//! Built-in acceptance checks, run by the `selftest` subcommand.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{loss_policy_for, AttackPlan, Strategy};
use crate::analysis::{
    attacked_round_information, closed_form_point, enumerate_branches, enumerate_plan, message_table, monte_carlo,
    statistics, sweep, SweepSpec,
};
use crate::fockstate::{BasisConfig, BellOutcome, ModeRegister, ModeState, StateVector};
use crate::gates::{self, Gate};
use crate::infotheory::{binary_entropy, total_variation, JointDistribution};
use crate::protocol::ProtocolConfig;

pub const DEFAULT_MC_ROUNDS: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

type Outcome = Result<String, String>;
type CheckFn = Box<dyn Fn() -> Outcome>;

fn close(what: &str, got: f64, want: f64, tol: f64) -> Outcome {
    if (got - want).abs() <= tol {
        Ok(format!("{what} = {got:.9}"))
    } else {
        Err(format!("{what} = {got:.12}, expected {want} within {tol:e}"))
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let mut ok = Vec::new();
    for p in parts {
        ok.push(p?);
    }
    Ok(ok.join(", "))
}

fn ideal(eta: f64) -> ProtocolConfig {
    ProtocolConfig {
        eta,
        ..ProtocolConfig::default()
    }
}

fn jkm(d: &JointDistribution) -> Result<JointDistribution, String> {
    message_table(d)
        .and_then(|t| Ok(t.marginal(&["j", "k", "m"])?))
        .map_err(|e| e.to_string())
}

const ATTACKED_TABLE: [(&str, &str, &str, f64); 5] = [
    ("0", "0", "0", 0.5),
    ("1", "0", "0", 0.125),
    ("1", "0", "1", 0.125),
    ("1", "1", "0", 0.125),
    ("1", "1", "1", 0.125),
];

fn expected_cell(j: &str, k: &str, m: &str) -> f64 {
    ATTACKED_TABLE
        .iter()
        .find(|c| (c.0, c.1, c.2) == (j, k, m))
        .map_or(0.0, |c| c.3)
}

fn check_attacked_table() -> Outcome {
    let d = enumerate_branches(&ideal(1.0), &Strategy::FullAttack { symmetrize: false }).map_err(|e| e.to_string())?;
    let t = jkm(&d)?;
    let mut worst: f64 = 0.0;
    for (cell, p) in t.labeled_cells() {
        worst = worst.max((p - expected_cell(cell[0], cell[1], cell[2])).abs());
    }
    for &(j, k, m, want) in &ATTACKED_TABLE {
        let got = t.prob(&[("j", j), ("k", k), ("m", m)]).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
    }
    if worst <= 1e-12 {
        Ok(format!("max cell deviation {worst:e}"))
    } else {
        Err(format!("max cell deviation {worst:e}"))
    }
}

fn check_attack_information() -> Outcome {
    let d = enumerate_branches(&ideal(1.0), &Strategy::FullAttack { symmetrize: false }).map_err(|e| e.to_string())?;
    let s = statistics(&d).map_err(|e| e.to_string())?;
    let i_be = s.i_be.unwrap_or(f64::NAN);
    all(vec![
        close("I_AE", s.i_ae.unwrap_or(f64::NAN), 0.311278, 1e-6),
        close("I_AB", s.i_ab.unwrap_or(f64::NAN), 0.311278, 1e-6),
        close("I_BE", i_be, 0.073761, 1e-4),
        close("I_BE vs 0.074", i_be, 0.074, 5e-4),
    ])
}

fn check_symmetrization() -> Outcome {
    let d = enumerate_branches(&ideal(1.0), &Strategy::FullAttack { symmetrize: true }).map_err(|e| e.to_string())?;
    let s = statistics(&d).map_err(|e| e.to_string())?;
    let exact = |what: &str, v: Option<f64>| match v {
        Some(0.25) => Ok(format!("{what} = 0.25")),
        other => Err(format!("{what} = {other:?}, expected exactly 0.25")),
    };
    all(vec![
        close("I_AB", s.i_ab.unwrap_or(f64::NAN), 0.188722, 1e-6),
        exact("QBER", s.qber),
        exact("QBER(j=0)", s.qber_j0),
        exact("QBER(j=1)", s.qber_j1),
        close("I(j; k, s)", s.i_ae.unwrap_or(f64::NAN), 0.311278, 1e-6),
    ])
}

fn check_low_efficiency_policy() -> Outcome {
    let p = loss_policy_for(0.4).map_err(|e| e.to_string())?;
    let d = enumerate_branches(&ideal(0.4), &Strategy::FullAttack { symmetrize: false }).map_err(|e| e.to_string())?;
    let s = statistics(&d).map_err(|e| e.to_string())?;
    all(vec![
        close("eta_E", p.eta_eve, 0.8, 1e-12),
        close("mu", p.mu, 1.0, 0.0),
        close("filter_pass", p.filter_pass, 0.25, 1e-12),
        close("Alice detection", s.alice_detect_rate.unwrap_or(f64::NAN), 0.4, 1e-12),
        close("Bob return", s.bob_return_rate.unwrap_or(f64::NAN), 0.16, 1e-12),
    ])
}

fn check_mu_law() -> Outcome {
    let mut parts = Vec::new();
    for eta in [0.6, 0.75, 0.9] {
        let p = loss_policy_for(eta).map_err(|e| e.to_string())?;
        if p.mu != 2.0 * (1.0 - eta) {
            parts.push(Err(format!("mu({eta}) = {}", p.mu)));
        }
        let strategy = Strategy::loss_hiding(eta, false).map_err(|e| e.to_string())?;
        let s = statistics(&enumerate_branches(&ideal(eta), &strategy).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        parts.push(close(
            &format!("detection({eta})"),
            s.alice_detect_rate.unwrap_or(f64::NAN),
            eta,
            1e-12,
        ));
    }
    all(parts)
}

fn check_curve() -> Outcome {
    let spec = SweepSpec {
        cross_check: true,
        symmetrize: true,
        ..SweepSpec::default()
    };
    let s = sweep(&spec).map_err(|e| e.to_string())?;
    let base = attacked_round_information();
    let h = |p: f64| binary_entropy(p).unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    for p in &s.points {
        let (ae, ab) = if p.eta <= 0.5 {
            (0.311278, 0.188722)
        } else {
            let mu = 2.0 * (1.0 - p.eta);
            (mu * base, 1.0 - h(mu / 4.0))
        };
        worst = worst.max((p.i_ae - ae).abs()).max((p.i_ab - ab).abs());
    }
    let upper: Vec<_> = s.points.iter().filter(|p| p.eta > 0.5).collect();
    let strictly = upper.windows(2).all(|w| w[1].i_ae < w[0].i_ae && w[1].i_ab > w[0].i_ab);
    let last = s.points.last().ok_or("empty sweep")?;
    let spot = closed_form_point(0.75, true).map_err(|e| e.to_string())?;
    if worst > 1e-6 || !strictly {
        return Err(format!("max deviation {worst:e}, strictly monotone above 1/2: {strictly}"));
    }
    all(vec![
        close("i_ae(1)", last.i_ae, 0.0, 1e-12),
        close("i_ab(1)", last.i_ab, 1.0, 1e-12),
        close("i_ae(0.75)", spot.i_ae, 0.155639, 1e-6),
        close("i_ab(0.75)", spot.i_ab, 0.456436, 1e-6),
        Ok(format!(
            "enumeration deviation {:e}",
            s.max_cross_check_deviation.unwrap_or(f64::NAN)
        )),
    ])
}

/// Largest number of standard errors by which a sampled cell misses.
pub fn worst_z_score(expected: &JointDistribution, sampled: &JointDistribution, n: u64) -> f64 {
    let mut worst: f64 = 0.0;
    let cells: Vec<Vec<u8>> = expected.cells().chain(sampled.cells()).map(|(c, _)| c.to_vec()).collect();
    for cell in cells {
        let p = expected.cells().find(|(c, _)| *c == cell.as_slice()).map_or(0.0, |(_, p)| p);
        let q = sampled.cells().find(|(c, _)| *c == cell.as_slice()).map_or(0.0, |(_, p)| p);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = if se > 0.0 {
            (q - p).abs() / se
        } else if q == p {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    worst
}

fn check_monte_carlo(rounds: u64, seed: u64) -> Outcome {
    let config = ProtocolConfig {
        rounds,
        seed,
        ..ideal(1.0)
    };
    let strategy = Strategy::FullAttack { symmetrize: false };
    let exact = jkm(&enumerate_branches(&config, &strategy).map_err(|e| e.to_string())?)?;
    let a = monte_carlo(&config, &strategy).map_err(|e| e.to_string())?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let b = single.install(|| monte_carlo(&config, &strategy)).map_err(|e| e.to_string())?;
    if a != b {
        return Err("runs with different parallelism differ".into());
    }
    let sampled = jkm(&a.distribution)?;
    let tv = total_variation(&exact, &sampled).map_err(|e| e.to_string())?;
    let z = worst_z_score(&exact, &sampled, a.summary.valid_message_rounds);
    if tv <= 0.005 && z <= 5.0 {
        Ok(format!("TV = {tv:.5}, worst cell {z:.2} SE, deterministic"))
    } else {
        Err(format!("TV = {tv:.5}, worst cell {z:.2} SE"))
    }
}

/// Random normalized state over the standard register with at most
/// `max_photons` photons in every term.
pub fn random_state(rng: &mut impl Rng, max_photons: usize) -> StateVector {
    let register = ModeRegister::standard();
    loop {
        let terms: Vec<(BasisConfig, Complex64)> = (0..rng.random_range(1..=6))
            .map(|_| {
                let mut modes = [ModeState::Vacuum; 4];
                let photons = rng.random_range(0..=max_photons);
                for _ in 0..photons {
                    let slot = rng.random_range(0..4);
                    modes[slot] = ModeState::photon(rng.random_range(0..2)).expect("bit");
                }
                let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (BasisConfig::from_modes(&modes).expect("four modes"), amp)
            })
            .collect();
        if let Ok(psi) = StateVector::from_terms(&register, terms).and_then(|s| s.normalized()) {
            return psi;
        }
    }
}

fn check_properties(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = Gate::catalogue();
    for _ in 0..1000 {
        let psi = random_state(&mut rng, 3);
        for gate in &gates {
            let out = gate.apply(&psi).map_err(|e| e.to_string())?;
            if (out.norm() - 1.0).abs() > 1e-9 || out.photon_numbers() != psi.photon_numbers() {
                return Err(format!("{gate:?} breaks norm or photon number"));
            }
        }
        let back = gates::q_attack_inverse(&gates::q_attack(&psi, "t", "x", "y").map_err(|e| e.to_string())?, "t", "x", "y")
            .map_err(|e| e.to_string())?;
        let overlap = back.inner(&psi).map_err(|e| e.to_string())?;
        if (overlap - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err("Q^-1 Q differs from the identity".into());
        }
    }
    let register = ModeRegister::standard();
    let [t, x, y] = register.distinct_indices(["t", "x", "y"]).map_err(|e| e.to_string())?;
    for code in 0..(1u32 << 8) {
        let modes: Vec<ModeState> = (0..4)
            .map(|i| match (code >> (2 * i)) & 3 {
                1 => ModeState::H0,
                2 => ModeState::H1,
                _ => ModeState::Vacuum,
            })
            .collect();
        let c = BasisConfig::from_modes(&modes).map_err(|e| e.to_string())?;
        if gates::cpbs_config(gates::cpbs_config(c, t, x, y), t, x, y) != c {
            return Err("CPBS is not an involution".into());
        }
    }
    for outcome in BellOutcome::BELL_STATES {
        let psi = StateVector::bell_pair(&register, outcome, "h", "t").map_err(|e| e.to_string())?;
        let bell = psi.bell_measure("h", "t").map_err(|e| e.to_string())?;
        if (bell.probability_of(outcome) - 1.0).abs() > 1e-12 {
            return Err(format!("Bell measurement of {outcome:?} is not deterministic"));
        }
    }
    Ok("1000 random states, 256 basis states, 4 Bell states".into())
}

fn check_baseline() -> Outcome {
    let s = statistics(&enumerate_branches(&ideal(1.0), &Strategy::None).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let lossy = statistics(&enumerate_branches(&ideal(0.64), &Strategy::None).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    all(vec![
        close("QBER", s.qber.unwrap_or(f64::NAN), 0.0, 0.0),
        close("I_AB", s.i_ab.unwrap_or(f64::NAN), 1.0, 1e-12),
        close("anticorrelation", s.anticorrelation.unwrap_or(f64::NAN), 1.0, 0.0),
        close("detection(0.64)", lossy.alice_detect_rate.unwrap_or(f64::NAN), 0.64, 1e-12),
        close("return(0.64)", lossy.bob_return_rate.unwrap_or(f64::NAN), 0.4096, 1e-12),
    ])
}

fn check_countermeasure() -> Outcome {
    let attack = Strategy::FullAttack { symmetrize: false };
    let mut parts = Vec::new();
    // attacking every round stays hidden in channel loss up to eta = 1/2
    for eta in [0.25, 0.4, 0.5] {
        let stealth = statistics(&enumerate_branches(&ideal(eta), &attack).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        parts.push(close(
            &format!("anticorrelation({eta})"),
            stealth.anticorrelation.unwrap_or(f64::NAN),
            1.0,
            0.0,
        ));
        parts.push(close(
            &format!("detection({eta})"),
            stealth.alice_detect_rate.unwrap_or(f64::NAN),
            eta,
            1e-12,
        ));
    }
    let guarded = ProtocolConfig {
        countermeasure: true,
        ..ideal(1.0)
    };
    let caught = statistics(&enumerate_branches(&guarded, &attack).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let honest = statistics(&enumerate_branches(&guarded, &Strategy::None).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    parts.extend([
        close("double detection", caught.double_detection.unwrap_or(f64::NAN), 0.5, 1e-12),
        close(
            "occupied | no detection",
            caught.occupied_given_no_detection.unwrap_or(f64::NAN),
            1.0,
            1e-12,
        ),
        close("honest double detection", honest.double_detection.unwrap_or(f64::NAN), 0.0, 1e-12),
        // no undetected control rounds at all without Eve and loss
        close("honest occupied | no detection", honest.occupied_given_no_detection.unwrap_or(0.0), 0.0, 1e-12),
    ]);
    all(parts)
}

fn check_filter_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for eta in [1.0, 0.4] {
        let tables = [1.0, 0.25]
            .map(|filter_pass| {
                let plan = AttackPlan {
                    channel_eta: eta,
                    mu: 1.0,
                    filter_pass,
                    symmetrize: false,
                };
                enumerate_plan(&ideal(eta), &plan).map_err(|e| e.to_string()).and_then(|d| jkm(&d))
            });
        let [a, b] = tables;
        worst = worst.max(total_variation(&a?, &b?).map_err(|e| e.to_string())?);
    }
    if worst <= 1e-12 {
        Ok(format!("total variation {worst:e}"))
    } else {
        Err(format!("total variation {worst:e}"))
    }
}

/// Runs every check. `mc_rounds` and `seed` drive the sampling check.
pub fn run_all(mc_rounds: u64, seed: u64) -> Vec<Check> {
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("attacked-round table", Box::new(check_attacked_table)),
        ("attack information", Box::new(check_attack_information)),
        ("symmetrization", Box::new(check_symmetrization)),
        ("loss hiding below one half", Box::new(check_low_efficiency_policy)),
        ("attacked fraction above one half", Box::new(check_mu_law)),
        ("information curves", Box::new(check_curve)),
        ("monte carlo", Box::new(move || check_monte_carlo(mc_rounds, seed))),
        ("gate properties", Box::new(move || check_properties(seed))),
        ("baseline", Box::new(check_baseline)),
        ("stealth and countermeasure", Box::new(check_countermeasure)),
        ("filter invariance", Box::new(check_filter_invariance)),
    ];
    checks
        .into_iter()
        .enumerate()
        .map(|(i, (name, run))| {
            let (passed, detail) = match run() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Check {
                id: i as u8 + 1,
                name,
                passed,
                detail,
            }
        })
        .collect()
}
