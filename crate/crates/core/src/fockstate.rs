//! Exact state vectors over a small set of labeled spatial modes.
//!
//! Each mode holds either vacuum or a single photon carrying one polarization
//! qubit. A basis configuration assigns such a content to every mode of a
//! register, and a [`StateVector`] is a sparse complex superposition of
//! configurations. Two photons in the same mode are not representable.
//!
//! ## Loss
//!
//! Photon loss is modeled as a classical branch: with probability `1 - eta`
//! the photon is taken out of its mode, otherwise nothing happens. The
//! removal itself is exact: the lost photon's polarization is recorded by
//! the environment, which is the same as measuring the polarization and then
//! emptying the mode (see [`StateVector::lose_photon`]). Every measurement in
//! the protocol is diagonal in photon presence, and at every point where the
//! protocol applies loss the travel mode is either definitely occupied or
//! definitely empty. Under those two conditions the classical branch and a
//! coherent beam-splitter coupling to an environment mode produce the same
//! outcome distribution, so the simpler model is used.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use thiserror::Error;

pub type Amplitude = Complex64;

/// 2x2 complex matrix acting on the polarization qubit of one mode.
pub type PolMatrix = [[Complex64; 2]; 2];

/// Amplitudes below this magnitude are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-12;
/// Tolerance for normalization and unitarity checks.
pub const NORM_TOLERANCE: f64 = 1e-9;

const MAX_MODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("duplicate mode `{0}`")]
    DuplicateMode(String),
    #[error("mode arguments must be distinct, got `{0}` more than once")]
    RepeatedMode(String),
    #[error("assignment does not cover mode `{0}`")]
    MissingMode(String),
    #[error("registers differ")]
    RegisterMismatch,
    #[error("a register holds at most {MAX_MODES} modes, got {0}")]
    TooManyModes(usize),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("mode `{0}` already holds a photon in some term")]
    ModeOccupied(String),
    #[error("polarization bit must be 0 or 1, got {0}")]
    InvalidBit(u8),
    #[error("amplitude is not finite")]
    NonFinite,
    #[error("state has zero norm")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, StateError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolarizationBit {
    Zero,
    One,
}

impl PolarizationBit {
    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Self::Zero),
            1 => Ok(Self::One),
            other => Err(StateError::InvalidBit(other)),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Self::Zero => 0,
            Self::One => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Zero => Self::One,
            Self::One => Self::Zero,
        }
    }
}

/// Content of one spatial mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeState {
    Vacuum,
    Photon(PolarizationBit),
}

impl ModeState {
    pub const H0: ModeState = ModeState::Photon(PolarizationBit::Zero);
    pub const H1: ModeState = ModeState::Photon(PolarizationBit::One);

    pub fn photon(bit: u8) -> Result<Self> {
        PolarizationBit::from_bit(bit).map(Self::Photon)
    }

    pub fn is_occupied(self) -> bool {
        matches!(self, Self::Photon(_))
    }

    fn code(self) -> u32 {
        match self {
            Self::Vacuum => 0,
            Self::Photon(PolarizationBit::Zero) => 1,
            Self::Photon(PolarizationBit::One) => 2,
        }
    }

    fn from_code(code: u32) -> Self {
        match code {
            0 => Self::Vacuum,
            1 => Self::H0,
            2 => Self::H1,
            _ => unreachable!("invalid mode code {code}"),
        }
    }
}

impl fmt::Display for ModeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Vacuum => f.write_str("vac"),
            Self::Photon(p) => write!(f, "{}", p.bit()),
        }
    }
}

/// Ordered set of distinct mode labels. Cloning is cheap.
#[derive(Clone, Debug)]
pub struct ModeRegister {
    labels: Arc<[String]>,
}

impl ModeRegister {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.len() > MAX_MODES {
            return Err(StateError::TooManyModes(labels.len()));
        }
        let mut owned: Vec<String> = Vec::with_capacity(labels.len());
        for label in labels {
            let label = label.as_ref();
            if owned.iter().any(|l| l == label) {
                return Err(StateError::DuplicateMode(label.to_string()));
            }
            owned.push(label.to_string());
        }
        Ok(Self {
            labels: owned.into(),
        })
    }

    /// Home, travel and the two auxiliary modes: `h, t, x, y`.
    pub fn standard() -> Self {
        static STANDARD: OnceLock<ModeRegister> = OnceLock::new();
        STANDARD
            .get_or_init(|| Self::new(&["h", "t", "x", "y"]).expect("static labels are distinct"))
            .clone()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| StateError::UnknownMode(label.to_string()))
    }

    /// Resolves several labels that must be pairwise distinct.
    pub fn distinct_indices<const N: usize>(&self, labels: [&str; N]) -> Result<[usize; N]> {
        let mut out = [0usize; N];
        for (slot, label) in labels.iter().enumerate() {
            out[slot] = self.index(label)?;
            if out[..slot].contains(&out[slot]) {
                return Err(StateError::RepeatedMode(label.to_string()));
            }
        }
        Ok(out)
    }
}

impl PartialEq for ModeRegister {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }
}

impl Eq for ModeRegister {}

/// Contents of every mode of a register, packed two bits per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BasisConfig(u32);

impl BasisConfig {
    pub fn vacuum() -> Self {
        Self(0)
    }

    pub fn from_modes(modes: &[ModeState]) -> Result<Self> {
        if modes.len() > MAX_MODES {
            return Err(StateError::TooManyModes(modes.len()));
        }
        Ok(modes
            .iter()
            .enumerate()
            .fold(Self::vacuum(), |c, (i, m)| c.with(i, *m)))
    }

    /// Builds a configuration from `(label, content)` pairs that cover the register exactly.
    pub fn from_assignment(register: &ModeRegister, assignment: &[(&str, ModeState)]) -> Result<Self> {
        let mut seen = vec![false; register.len()];
        let mut config = Self::vacuum();
        for (label, content) in assignment {
            let idx = register.index(label)?;
            if seen[idx] {
                return Err(StateError::DuplicateMode(label.to_string()));
            }
            seen[idx] = true;
            config = config.with(idx, *content);
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(StateError::MissingMode(register.labels()[missing].clone()));
        }
        Ok(config)
    }

    pub fn get(self, mode: usize) -> ModeState {
        ModeState::from_code((self.0 >> (2 * mode)) & 0b11)
    }

    #[must_use]
    pub fn with(self, mode: usize, content: ModeState) -> Self {
        let shift = 2 * mode;
        Self((self.0 & !(0b11 << shift)) | (content.code() << shift))
    }

    #[must_use]
    pub fn swapped(self, a: usize, b: usize) -> Self {
        let (ca, cb) = (self.get(a), self.get(b));
        self.with(a, cb).with(b, ca)
    }

    pub fn photon_count(self) -> usize {
        let mut n = 0;
        let mut bits = self.0;
        while bits != 0 {
            if bits & 0b11 != 0 {
                n += 1;
            }
            bits >>= 2;
        }
        n
    }

    pub fn modes(self, register: &ModeRegister) -> Vec<ModeState> {
        (0..register.len()).map(|i| self.get(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolarizationOutcome {
    Pol(PolarizationBit),
    Vacuum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Occupancy {
    Occupied,
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellOutcome {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
    /// The two modes do not hold exactly one photon each.
    Invalid,
}

impl BellOutcome {
    pub const BELL_STATES: [BellOutcome; 4] = [
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
    ];

    /// Overlaps `<B|p_a p_b>` indexed by `2 * p_a + p_b`.
    fn coefficients(self) -> Option<[f64; 4]> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Self::PsiPlus => Some([0.0, r, r, 0.0]),
            Self::PsiMinus => Some([0.0, r, -r, 0.0]),
            Self::PhiPlus => Some([r, 0.0, 0.0, r]),
            Self::PhiMinus => Some([r, 0.0, 0.0, -r]),
            Self::Invalid => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Branch<O> {
    pub outcome: O,
    pub probability: f64,
    pub state: StateVector,
}

/// Outcomes of a projective measurement with normalized post-measurement
/// states. Zero-probability outcomes are omitted.
#[derive(Clone, Debug)]
pub struct BranchSet<O> {
    branches: Vec<Branch<O>>,
}

impl<O: Copy + PartialEq> BranchSet<O> {
    fn from_projections(projections: Vec<(O, StateVector)>) -> Result<Self> {
        let norms: Vec<f64> = projections.iter().map(|(_, s)| s.norm_sqr()).collect();
        let total: f64 = norms.iter().sum();
        if total <= 0.0 {
            return Err(StateError::ZeroNorm);
        }
        let branches = projections
            .into_iter()
            .zip(norms)
            .filter(|((_, s), _)| !s.terms.is_empty())
            .map(|((outcome, state), n)| Branch {
                outcome,
                probability: n / total,
                state: state.scaled(1.0 / n.sqrt()),
            })
            .collect();
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[Branch<O>] {
        &self.branches
    }

    pub fn into_branches(self) -> Vec<Branch<O>> {
        self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.probability).collect()
    }

    /// Probability of `outcome`, zero when it was omitted.
    pub fn probability_of(&self, outcome: O) -> f64 {
        self.branches
            .iter()
            .filter(|b| b.outcome == outcome)
            .map(|b| b.probability)
            .sum()
    }

    pub fn branch(&self, outcome: O) -> Option<&Branch<O>> {
        self.branches.iter().find(|b| b.outcome == outcome)
    }
}

/// Sparse superposition of basis configurations, sorted by configuration.
#[derive(Clone, Debug)]
pub struct StateVector {
    register: ModeRegister,
    terms: Vec<(BasisConfig, Amplitude)>,
}

impl StateVector {
    /// Single-term state with amplitude one.
    pub fn basis_state(register: &ModeRegister, assignment: &[(&str, ModeState)]) -> Result<Self> {
        let config = BasisConfig::from_assignment(register, assignment)?;
        Ok(Self::from_config(register, config))
    }

    /// Bell state of modes `a` and `b`, every other mode empty.
    pub fn bell_pair(register: &ModeRegister, outcome: BellOutcome, a: &str, b: &str) -> Result<Self> {
        let [ia, ib] = register.distinct_indices([a, b])?;
        let coeffs = outcome.coefficients().ok_or(StateError::ZeroNorm)?;
        let terms = (0..4u8).map(|i| {
            let pa = ModeState::photon(i >> 1).expect("bit");
            let pb = ModeState::photon(i & 1).expect("bit");
            let config = BasisConfig::vacuum().with(ia, pa).with(ib, pb);
            (config, Amplitude::new(coeffs[i as usize], 0.0))
        });
        Self::from_terms(register, terms)
    }

    pub fn from_config(register: &ModeRegister, config: BasisConfig) -> Self {
        Self {
            register: register.clone(),
            terms: vec![(config, Complex64::new(1.0, 0.0))],
        }
    }

    pub fn vacuum(register: &ModeRegister) -> Self {
        Self::from_config(register, BasisConfig::vacuum())
    }

    /// Collects terms (merging repeated configurations) without normalizing.
    pub fn from_terms<I>(register: &ModeRegister, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BasisConfig, Amplitude)>,
    {
        let terms: Vec<_> = terms.into_iter().collect();
        if terms.iter().any(|(_, a)| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        Ok(Self::collect(register.clone(), terms))
    }

    fn collect(register: ModeRegister, mut terms: Vec<(BasisConfig, Amplitude)>) -> Self {
        terms.sort_unstable_by_key(|(c, _)| *c);
        let mut merged: Vec<(BasisConfig, Amplitude)> = Vec::with_capacity(terms.len());
        for (config, amp) in terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == config => *acc += amp,
                _ => merged.push((config, amp)),
            }
        }
        merged.retain(|(_, a)| a.norm() >= PRUNE_THRESHOLD);
        Self {
            register,
            terms: merged,
        }
    }

    pub fn register(&self) -> &ModeRegister {
        &self.register
    }

    pub fn terms(&self) -> &[(BasisConfig, Amplitude)] {
        &self.terms
    }

    pub fn amplitude(&self, config: BasisConfig) -> Amplitude {
        self.terms
            .binary_search_by_key(&config, |(c, _)| *c)
            .map(|i| self.terms[i].1)
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(StateError::ZeroNorm);
        }
        Ok(self.scaled(1.0 / n))
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            register: self.register.clone(),
            terms: self.terms.iter().map(|(c, a)| (*c, a * factor)).collect(),
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Amplitude> {
        if self.register != other.register {
            return Err(StateError::RegisterMismatch);
        }
        let (mut i, mut j) = (0, 0);
        let mut acc = Complex64::new(0.0, 0.0);
        while i < self.terms.len() && j < other.terms.len() {
            let (ca, aa) = self.terms[i];
            let (cb, ab) = other.terms[j];
            match ca.cmp(&cb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += aa.conj() * ab;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(acc)
    }

    /// Distinct photon numbers appearing across the terms.
    pub fn photon_numbers(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = self.terms.iter().map(|(c, _)| c.photon_count()).collect();
        counts.sort_unstable();
        counts.dedup();
        counts
    }

    /// Relabels every term through `map`; colliding terms are summed.
    pub fn permuted(&self, map: impl Fn(BasisConfig) -> BasisConfig) -> Self {
        let terms = self.terms.iter().map(|(c, a)| (map(*c), *a)).collect();
        Self::collect(self.register.clone(), terms)
    }

    /// Applies `u` to the polarization of `mode`; vacuum content is left alone.
    pub fn apply_pol_unitary(&self, mode: &str, u: &PolMatrix) -> Result<Self> {
        let idx = self.register.index(mode)?;
        check_unitary(u)?;
        Ok(self.apply_pol_unchecked(idx, u))
    }

    pub(crate) fn apply_pol_unchecked(&self, idx: usize, u: &PolMatrix) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * 2);
        for &(config, amp) in &self.terms {
            match config.get(idx) {
                ModeState::Vacuum => terms.push((config, amp)),
                ModeState::Photon(p) => {
                    let col = p.bit() as usize;
                    for (row, out) in [ModeState::H0, ModeState::H1].into_iter().enumerate() {
                        let coeff = u[row][col];
                        if coeff != Complex64::new(0.0, 0.0) {
                            terms.push((config.with(idx, out), coeff * amp));
                        }
                    }
                }
            }
        }
        Self::collect(self.register.clone(), terms)
    }

    /// Exchanges the full contents (photon or vacuum) of two modes.
    pub fn swap_modes(&self, a: &str, b: &str) -> Result<Self> {
        let [ia, ib] = self.register.distinct_indices([a, b])?;
        Ok(self.permuted(|c| c.swapped(ia, ib)))
    }

    /// Puts `content` into a mode that is empty in every term.
    pub fn fill_mode(&self, mode: &str, content: ModeState) -> Result<Self> {
        let idx = self.register.index(mode)?;
        if self.terms.iter().any(|(c, _)| c.get(idx).is_occupied()) {
            return Err(StateError::ModeOccupied(mode.to_string()));
        }
        Ok(self.permuted(|c| c.with(idx, content)))
    }

    /// Empties `mode` in every term and renormalizes.
    ///
    /// Exact when the mode's content is the same in every term (for example
    /// right after a polarization measurement). Applied to a state in which the
    /// mode is entangled with the rest it yields the coherent replacement, which
    /// is not a physical loss channel; callers that model loss measure first.
    pub fn lose_photon(&self, mode: &str) -> Result<Self> {
        let idx = self.register.index(mode)?;
        // terms that differ only in this mode merge here
        self.permuted(|c| c.with(idx, ModeState::Vacuum)).normalized()
    }

    fn project(&self, keep: impl Fn(BasisConfig) -> bool) -> Self {
        Self {
            register: self.register.clone(),
            terms: self.terms.iter().filter(|(c, _)| keep(*c)).copied().collect(),
        }
    }

    pub fn measure_polarization(&self, mode: &str) -> Result<BranchSet<PolarizationOutcome>> {
        let idx = self.register.index(mode)?;
        let outcomes = [
            (PolarizationOutcome::Pol(PolarizationBit::Zero), ModeState::H0),
            (PolarizationOutcome::Pol(PolarizationBit::One), ModeState::H1),
            (PolarizationOutcome::Vacuum, ModeState::Vacuum),
        ];
        BranchSet::from_projections(
            outcomes
                .into_iter()
                .map(|(o, content)| (o, self.project(|c| c.get(idx) == content)))
                .collect(),
        )
    }

    /// Photon-presence measurement; polarization coherence survives in the occupied branch.
    pub fn measure_occupancy(&self, mode: &str) -> Result<BranchSet<Occupancy>> {
        let idx = self.register.index(mode)?;
        BranchSet::from_projections(vec![
            (Occupancy::Occupied, self.project(|c| c.get(idx).is_occupied())),
            (Occupancy::Empty, self.project(|c| !c.get(idx).is_occupied())),
        ])
    }

    /// Polarization Bell measurement on modes `(a, b)`.
    pub fn bell_measure(&self, a: &str, b: &str) -> Result<BranchSet<BellOutcome>> {
        let [ia, ib] = self.register.distinct_indices([a, b])?;
        // amplitudes grouped by the contents of all other modes
        let mut groups: BTreeMap<BasisConfig, [Amplitude; 4]> = BTreeMap::new();
        let mut invalid = Vec::new();
        for &(config, amp) in &self.terms {
            match (config.get(ia), config.get(ib)) {
                (ModeState::Photon(pa), ModeState::Photon(pb)) => {
                    let rest = config.with(ia, ModeState::Vacuum).with(ib, ModeState::Vacuum);
                    let slot = 2 * pa.bit() as usize + pb.bit() as usize;
                    groups.entry(rest).or_default()[slot] += amp;
                }
                _ => invalid.push((config, amp)),
            }
        }
        let mut projections = Vec::with_capacity(5);
        for outcome in BellOutcome::BELL_STATES {
            let coeffs = outcome.coefficients().expect("Bell states have coefficients");
            let mut terms = Vec::new();
            for (rest, amps) in &groups {
                let overlap: Amplitude = coeffs.iter().zip(amps).map(|(c, a)| a * *c).sum();
                for (slot, c) in coeffs.iter().enumerate() {
                    if *c != 0.0 {
                        let pa = ModeState::photon((slot / 2) as u8).expect("bit");
                        let pb = ModeState::photon((slot % 2) as u8).expect("bit");
                        terms.push((rest.with(ia, pa).with(ib, pb), overlap * *c));
                    }
                }
            }
            projections.push((outcome, Self::collect(self.register.clone(), terms)));
        }
        projections.push((
            BellOutcome::Invalid,
            Self {
                register: self.register.clone(),
                terms: invalid,
            },
        ));
        BranchSet::from_projections(projections)
    }
}

impl PartialEq for StateVector {
    /// Exact equality of registers and stored terms.
    fn eq(&self, other: &Self) -> bool {
        self.register == other.register && self.terms == other.terms
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (n, (config, amp)) in self.terms.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "({:+.6}{:+.6}i)", amp.re, amp.im)?;
            for (i, label) in self.register.labels().iter().enumerate() {
                write!(f, "|{}>_{}", config.get(i), label)?;
            }
        }
        Ok(())
    }
}

/// Largest entry of `u^dagger u - 1`.
pub fn unitarity_deviation(u: &PolMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in u {
                acc += row[i].conj() * row[j];
            }
            if i == j {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

fn check_unitary(u: &PolMatrix) -> Result<()> {
    let dev = unitarity_deviation(u);
    if dev.is_finite() && dev <= NORM_TOLERANCE {
        Ok(())
    } else {
        Err(StateError::NotUnitary(dev))
    }
}
