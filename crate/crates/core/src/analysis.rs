//! Exact and sampled statistics of protocol rounds.
//!
//! [`enumerate_branches`] walks every classical branch of a round (coins,
//! losses, measurement outcomes) with its exact weight and is the reference
//! for everything else here. [`monte_carlo`] samples the same round logic.
//! [`closed_form_point`] evaluates hand-derived formulas for the loss-hiding
//! attack that are checked against the enumeration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{loss_policy_for, AttackPlan, Strategy};
use crate::branching::ReplayChooser;
use crate::error::{check_range, Error, Result};
use crate::infotheory::{binary_entropy, qber, JointDistribution, Variable};
use crate::protocol::{
    play_round, run_indexed_round, DiscardReason, ProtocolConfig, RoundMode, RoundOutcome, Summary,
};

/// Label for a variable that was not recorded in a round.
pub const ABSENT: &str = "-";

const BIT_OR_ABSENT: [&str; 3] = ["0", "1", ABSENT];

/// Variables of the round-level joint distribution, in cell order.
pub fn round_variables() -> Vec<Variable> {
    let opt = |name| Variable::new(name, &BIT_OR_ABSENT);
    let reasons: Vec<&str> = DiscardReason::ALL.iter().map(|r| r.as_str()).collect();
    vec![
        Variable::new("mode", &["message", "control"]),
        opt("j"),
        opt("k"),
        opt("m"),
        opt("s_flag"),
        Variable::bit("attacked"),
        opt("alice_detected"),
        opt("alice_pol"),
        opt("bob_home_pol"),
        opt("bob_travel_occupied"),
        Variable::new("discard", &reasons),
    ]
}

fn opt_bit(v: Option<u8>) -> u8 {
    v.unwrap_or(2)
}

fn opt_flag(v: Option<bool>) -> u8 {
    v.map_or(2, u8::from)
}

/// Value indices of a round in the order of [`round_variables`].
pub fn outcome_cell(r: &RoundOutcome) -> Vec<u8> {
    vec![
        match r.mode {
            RoundMode::Message => 0,
            RoundMode::Control => 1,
        },
        opt_bit(r.j),
        opt_bit(r.k),
        opt_bit(r.m),
        opt_flag(r.s_flag),
        u8::from(r.attacked),
        opt_flag(r.alice_detected),
        opt_bit(r.alice_pol),
        opt_bit(r.bob_home_pol),
        opt_flag(r.bob_travel_occupied),
        DiscardReason::ALL
            .iter()
            .position(|d| *d == r.discard_reason)
            .expect("every reason is listed") as u8,
    ]
}

/// Exact outcome distribution of one round under explicit attack parameters.
pub fn enumerate_plan(config: &ProtocolConfig, plan: &AttackPlan) -> Result<JointDistribution> {
    config.validate()?;
    let mut dist = JointDistribution::new(round_variables())?;
    let mut next = Some(ReplayChooser::start());
    while let Some(mut chooser) = next {
        let outcome = play_round(config, plan, &mut chooser, &mut |_, _| {});
        dist.add(&outcome_cell(&outcome), chooser.probability())?;
        next = chooser.advance();
    }
    Ok(dist)
}

/// Exact outcome distribution of one round under `strategy`.
pub fn enumerate_branches(config: &ProtocolConfig, strategy: &Strategy) -> Result<JointDistribution> {
    config.validate()?;
    let plan = strategy.plan(config.eta)?;
    enumerate_plan(config, &plan)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub distribution: JointDistribution,
    pub counts: BTreeMap<Vec<u8>, u64>,
    pub summary: Summary,
}

/// Samples `config.rounds` rounds. Counts are integers merged in a fixed
/// cell order, so the result is identical for any degree of parallelism.
pub fn monte_carlo(config: &ProtocolConfig, strategy: &Strategy) -> Result<MonteCarloResult> {
    config.validate()?;
    if config.rounds == 0 {
        return Err(Error::Invalid("rounds must be at least 1".into()));
    }
    let plan = strategy.plan(config.eta)?;
    type Acc = (BTreeMap<Vec<u8>, u64>, Summary);
    let merge = |mut a: Acc, b: Acc| {
        for (cell, n) in b.0 {
            *a.0.entry(cell).or_insert(0) += n;
        }
        a.1.merge(&b.1);
        a
    };
    let (counts, summary) = (0..config.rounds)
        .into_par_iter()
        .fold(Acc::default, |mut acc, i| {
            let r = run_indexed_round(config, &plan, i);
            *acc.0.entry(outcome_cell(&r)).or_insert(0) += 1;
            acc.1.add(&r);
            acc
        })
        .reduce(Acc::default, merge);
    Ok(MonteCarloResult {
        distribution: JointDistribution::from_counts(round_variables(), &counts)?,
        counts,
        summary,
    })
}

/// Valid message rounds as a `(j, k, s_flag, m)` table.
pub fn message_table(d: &JointDistribution) -> Result<JointDistribution> {
    Ok(d
        .condition(&[("mode", "message"), ("discard", "none")])?
        .marginal(&["j", "k", "s_flag", "m"])?)
}

/// Quantities derived from a round distribution. Rates that condition on an
/// impossible event are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundStatistics {
    /// `I(j; k, s_flag)`: Eve knows her own symmetrization coin.
    pub i_ae: Option<f64>,
    pub i_ab: Option<f64>,
    /// `I(m; k, s_flag)`.
    pub i_be: Option<f64>,
    pub qber: Option<f64>,
    pub qber_j0: Option<f64>,
    pub qber_j1: Option<f64>,
    pub alice_detect_rate: Option<f64>,
    pub bob_return_rate: Option<f64>,
    /// `P(alice_pol != bob_home_pol | control, detected)`.
    pub anticorrelation: Option<f64>,
    /// `P(alice detected and travel occupied | control)`.
    pub double_detection: Option<f64>,
    /// `P(travel occupied | control, Alice saw nothing)`.
    pub occupied_given_no_detection: Option<f64>,
}

fn defined(r: crate::infotheory::Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(crate::infotheory::InfoError::EmptyEvent) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn statistics(d: &JointDistribution) -> Result<RoundStatistics> {
    let table = match message_table(d) {
        Ok(t) => Some(t),
        Err(Error::Info(crate::infotheory::InfoError::EmptyEvent)) => None,
        Err(e) => return Err(e),
    };
    let eve = ["k", "s_flag"];
    let (i_ae, i_ab, i_be, q, q0, q1) = match &table {
        Some(t) => (
            Some(t.mutual_information(&["j"], &eve)?),
            Some(t.mutual_information(&["j"], &["m"])?),
            Some(t.mutual_information(&["m"], &eve)?),
            defined(qber(t))?,
            defined(t.condition(&[("j", "0")]).and_then(|c| qber(&c)))?,
            defined(t.condition(&[("j", "1")]).and_then(|c| qber(&c)))?,
        ),
        None => (None, None, None, None, None, None),
    };
    let conditional = |event: &[(&str, &str)], given: &[(&str, &str)]| -> Result<Option<f64>> {
        defined(d.condition(given).and_then(|c| c.prob(event)))
    };
    let control = [("mode", "control")];
    let anticorrelation = {
        let given = [("mode", "control"), ("alice_detected", "1")];
        match conditional(&[], &given)? {
            Some(_) => {
                let c = d.condition(&given)?;
                Some(c.prob(&[("alice_pol", "0"), ("bob_home_pol", "1")])? + c.prob(&[("alice_pol", "1"), ("bob_home_pol", "0")])?)
            }
            None => None,
        }
    };
    Ok(RoundStatistics {
        i_ae,
        i_ab,
        i_be,
        qber: q,
        qber_j0: q0,
        qber_j1: q1,
        alice_detect_rate: conditional(&[("alice_detected", "1")], &control)?,
        bob_return_rate: conditional(&[("discard", "none")], &[("mode", "message")])?,
        anticorrelation,
        double_detection: conditional(&[("alice_detected", "1"), ("bob_travel_occupied", "1")], &control)?,
        occupied_given_no_detection: conditional(
            &[("bob_travel_occupied", "1")],
            &[("mode", "control"), ("alice_detected", "0")],
        )?,
    })
}

/// One point of the information and rate curves versus channel efficiency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eta: f64,
    pub i_ae: f64,
    pub i_ab: f64,
    pub i_be: f64,
    pub qber: f64,
    pub alice_detect_rate: f64,
    pub bob_return_rate: f64,
    pub mu: f64,
    pub filter_pass: f64,
}

/// `I(j; m) = I(j; k)` on a fully attacked, unsymmetrized round: `3/4 log2(4/3)`.
pub fn attacked_round_information() -> f64 {
    0.75 * (4.0f64 / 3.0).log2()
}

fn h2(p: f64) -> f64 {
    binary_entropy(p).expect("argument lies in [0, 1]")
}

/// Valid-message `(j, k, s_flag, m)` table of the loss-hiding attack built
/// directly from the per-branch outcome probabilities.
pub fn closed_form_message_table(mu: f64, symmetrize: bool) -> Result<JointDistribution> {
    let vars = vec![
        Variable::new("j", &BIT_OR_ABSENT),
        Variable::new("k", &BIT_OR_ABSENT),
        Variable::new("s_flag", &BIT_OR_ABSENT),
        Variable::new("m", &BIT_OR_ABSENT),
    ];
    // (j, k, m) of an attacked round without S, and with S
    let plain = [(0, 0, 0, 0.5), (1, 0, 0, 0.125), (1, 0, 1, 0.125), (1, 1, 0, 0.125), (1, 1, 1, 0.125)];
    let with_s = [(0, 0, 0, 0.125), (0, 0, 1, 0.125), (0, 1, 0, 0.125), (0, 1, 1, 0.125), (1, 1, 1, 0.5)];
    let mut d = JointDistribution::new(vars)?;
    for j in 0..2u8 {
        d.add(&[j, 2, 2, j], 0.5 * (1.0 - mu))?;
    }
    let s_weight = if symmetrize { 0.5 } else { 0.0 };
    for (s, table, w) in [(0u8, &plain, 1.0 - s_weight), (1u8, &with_s, s_weight)] {
        if w > 0.0 {
            for &(j, k, m, p) in table {
                d.add(&[j, k, s, m], mu * w * p)?;
            }
        }
    }
    Ok(d)
}

/// Closed-form curve point for the loss-hiding attack at efficiency `eta`.
pub fn closed_form_point(eta: f64, symmetrize: bool) -> Result<CurvePoint> {
    let policy = loss_policy_for(eta)?;
    let mu = policy.mu;
    let i_ab = if symmetrize {
        1.0 - h2(mu / 4.0)
    } else {
        // j = 1 is misread with probability mu/2, j = 0 never
        h2(0.5 - mu / 4.0) - 0.5 * h2(mu / 2.0)
    };
    let table = closed_form_message_table(mu, symmetrize)?;
    Ok(CurvePoint {
        eta,
        i_ae: mu * attacked_round_information(),
        i_ab,
        i_be: table.mutual_information(&["m"], &["k", "s_flag"])?,
        qber: mu / 4.0,
        alice_detect_rate: (1.0 - mu) * policy.eta_eve + mu * policy.eta_eve / 2.0,
        bob_return_rate: policy.eta_eve * policy.eta_eve * policy.filter_pass,
        mu,
        filter_pass: policy.filter_pass,
    })
}

/// Curve point of the unattacked protocol.
pub fn baseline_point(eta: f64) -> Result<CurvePoint> {
    let eta = check_range("eta", eta, 0.0, false, 1.0)?;
    Ok(CurvePoint {
        eta,
        i_ae: 0.0,
        i_ab: 1.0,
        i_be: 0.0,
        qber: 0.0,
        alice_detect_rate: eta,
        bob_return_rate: eta * eta,
        mu: 0.0,
        filter_pass: 1.0,
    })
}

/// The same quantities evaluated by exact enumeration.
pub fn enumerated_point(eta: f64, attack: bool, symmetrize: bool) -> Result<CurvePoint> {
    let config = ProtocolConfig {
        eta,
        ..ProtocolConfig::default()
    };
    let strategy = if attack {
        Strategy::loss_hiding(eta, symmetrize)?
    } else {
        Strategy::None
    };
    let plan = strategy.plan(eta)?;
    let stats = statistics(&enumerate_plan(&config, &plan)?)?;
    let need = |v: Option<f64>, what: &str| v.ok_or_else(|| Error::Invalid(format!("{what} undefined at eta = {eta}")));
    Ok(CurvePoint {
        eta,
        i_ae: need(stats.i_ae, "i_ae")?,
        i_ab: need(stats.i_ab, "i_ab")?,
        i_be: need(stats.i_be, "i_be")?,
        qber: need(stats.qber, "qber")?,
        alice_detect_rate: need(stats.alice_detect_rate, "alice_detect_rate")?,
        bob_return_rate: need(stats.bob_return_rate, "bob_return_rate")?,
        mu: plan.mu,
        filter_pass: plan.filter_pass,
    })
}

/// Largest absolute difference over every field of two points.
pub fn point_deviation(a: &CurvePoint, b: &CurvePoint) -> f64 {
    [
        a.eta - b.eta,
        a.i_ae - b.i_ae,
        a.i_ab - b.i_ab,
        a.i_be - b.i_be,
        a.qber - b.qber,
        a.alice_detect_rate - b.alice_detect_rate,
        a.bob_return_rate - b.bob_return_rate,
        a.mu - b.mu,
        a.filter_pass - b.filter_pass,
    ]
    .into_iter()
    .map(f64::abs)
    .fold(0.0, f64::max)
}

/// Agreement required between closed forms and enumeration.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub eta_min: f64,
    pub eta_max: f64,
    /// Number of grid points, endpoints included.
    pub steps: usize,
    /// Loss-hiding attack when set, otherwise the unattacked protocol.
    pub attack: bool,
    pub symmetrize: bool,
    /// Re-evaluate every point by exact enumeration.
    pub cross_check: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            eta_min: 0.01,
            eta_max: 1.0,
            steps: 101,
            attack: true,
            symmetrize: true,
            cross_check: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        check_range("eta_min", self.eta_min, 0.0, false, 1.0)?;
        check_range("eta_max", self.eta_max, 0.0, false, 1.0)?;
        if self.eta_min >= self.eta_max {
            return Err(Error::Invalid(format!(
                "eta_min ({}) must be below eta_max ({})",
                self.eta_min, self.eta_max
            )));
        }
        if self.steps < 2 {
            return Err(Error::Invalid("steps must be at least 2".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.eta_max
                } else {
                    self.eta_min + (self.eta_max - self.eta_min) * i as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub spec: SweepSpec,
    pub points: Vec<CurvePoint>,
    pub i_ae_non_increasing: bool,
    pub i_ab_non_decreasing: bool,
    /// Largest closed-form versus enumeration difference, when checked.
    pub max_cross_check_deviation: Option<f64>,
}

pub fn sweep(spec: &SweepSpec) -> Result<Sweep> {
    spec.validate()?;
    let grid = spec.grid();
    let points = grid
        .iter()
        .map(|&eta| {
            if spec.attack {
                closed_form_point(eta, spec.symmetrize)
            } else {
                baseline_point(eta)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let max_cross_check_deviation = if spec.cross_check {
        let deviations = grid
            .par_iter()
            .zip(&points)
            .map(|(&eta, point)| {
                enumerated_point(eta, spec.attack, spec.symmetrize).map(|e| point_deviation(&e, point))
            })
            .collect::<Result<Vec<_>>>()?;
        let worst = deviations.into_iter().fold(0.0, f64::max);
        if worst > CROSS_CHECK_TOLERANCE {
            return Err(Error::Invalid(format!(
                "closed form disagrees with enumeration by {worst:e}"
            )));
        }
        Some(worst)
    } else {
        None
    };
    let slack = 1e-12;
    Ok(Sweep {
        spec: spec.clone(),
        i_ae_non_increasing: points.windows(2).all(|w| w[1].i_ae <= w[0].i_ae + slack),
        i_ab_non_decreasing: points.windows(2).all(|w| w[1].i_ab >= w[0].i_ab - slack),
        points,
        max_cross_check_deviation,
    })
}
