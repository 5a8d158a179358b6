//! Physical parameters, Hamiltonians, collapse operators and parity-encoded
//! initial states.
//!
//! Frequencies and rates are angular, in rad/µs; times are in µs.

use serde::{Deserialize, Serialize};

use crate::hilbert::{self, Operator, PureState, SpaceLayout};
use crate::linalg::{CMatrix, CVector};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_c: f64,
    /// Per-qubit dispersive shifts χᵢ.
    pub chi: Vec<f64>,
    pub g_j: f64,
    pub kappa_j: f64,
    pub omega_12: f64,
    pub omega_20: f64,
    /// Initial coherent amplitude of the bright branch.
    pub alpha: C64,
    pub eta: f64,
    pub layout: SpaceLayout,
}

/// Validity of the adiabatic-elimination regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    /// `Ω_n̄ = g_J √(|α|² + 1)`.
    pub omega_nbar: f64,
    pub omega_over_kappa: f64,
    /// `max |Δₙ| / Ω_n̄`.
    pub delta_over_omega: f64,
    pub overdamped: bool,
    pub small_shift: bool,
}

impl RegimeReport {
    pub fn valid(&self) -> bool {
        self.overdamped && self.small_shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flipped(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

impl SystemParams {
    /// Parameters with the detector frequencies on resonance with the cavity
    /// (`ω₁₂ = ω₂₀ = ω_c`), η = 1 and uniform χ.
    pub fn uniform(
        layout: SpaceLayout,
        chi: f64,
        g_j: f64,
        kappa_j: f64,
        alpha: C64,
    ) -> Result<Self> {
        let p = SystemParams {
            omega_c: 0.0,
            chi: vec![chi; layout.n_qubits()],
            g_j,
            kappa_j,
            omega_12: 0.0,
            omega_20: 0.0,
            alpha,
            eta: 1.0,
            layout,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_c, self.g_j, self.kappa_j, self.omega_12, self.omega_20, self.eta]
            .iter()
            .chain(self.chi.iter())
            .all(|x| x.is_finite())
            && self.alpha.re.is_finite()
            && self.alpha.im.is_finite();
        if !finite {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        if self.g_j < 0.0 || self.kappa_j < 0.0 {
            return Err(Error::InvalidParameter("rates must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta = {} outside [0, 1]", self.eta)));
        }
        if self.chi.len() != self.layout.n_qubits() {
            return Err(Error::InvalidParameter(format!(
                "chi has {} entries for {} qubits",
                self.chi.len(),
                self.layout.n_qubits()
            )));
        }
        Ok(())
    }

    pub fn with_layout(&self, layout: SpaceLayout) -> Result<Self> {
        let mut p = self.clone();
        p.layout = layout;
        p.validate()?;
        Ok(p)
    }

    pub fn mean_photons(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn max_abs_shift(&self) -> f64 {
        (0..self.layout.qubit_dim())
            .map(|n| dispersive_shift(BasisIndex::new(n, self.layout.n_qubits()).unwrap(), self).abs())
            .fold(0.0, f64::max)
    }

    pub fn regime(&self) -> RegimeReport {
        let omega_nbar = self.g_j * (self.mean_photons() + 1.0).sqrt();
        let omega_over_kappa =
            if self.kappa_j > 0.0 { omega_nbar / self.kappa_j } else { f64::INFINITY };
        let delta_over_omega =
            if omega_nbar > 0.0 { self.max_abs_shift() / omega_nbar } else { f64::INFINITY };
        RegimeReport {
            omega_nbar,
            omega_over_kappa,
            delta_over_omega,
            overdamped: omega_over_kappa <= 0.1,
            small_shift: delta_over_omega <= 0.1,
        }
    }
}

/// Computational-basis label of the qubit register. Bit `nᵢ = 0` is `|e⟩`,
/// `nᵢ = 1` is `|g⟩`; qubit 1 is the most significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    n: usize,
    n_qubits: usize,
}

impl BasisIndex {
    pub fn new(n: usize, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits >= usize::BITS as usize || n >= 1 << n_qubits {
            return Err(Error::InvalidParameter(format!(
                "basis index {n} invalid for {n_qubits} qubits"
            )));
        }
        Ok(BasisIndex { n, n_qubits })
    }

    /// Parses a string of `e`/`g` characters such as `"egg"`.
    pub fn from_label(label: &str) -> Result<Self> {
        let mut n = 0usize;
        let mut count = 0usize;
        for ch in label.chars() {
            let bit = match ch {
                'e' => 0,
                'g' => 1,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "basis label {label:?} may only contain 'e' and 'g'"
                    )))
                }
            };
            n = (n << 1) | bit;
            count += 1;
            if count >= usize::BITS as usize {
                return Err(Error::InvalidParameter("basis label too long".into()));
            }
        }
        Self::new(n, count)
    }

    pub fn value(&self) -> usize {
        self.n
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// `nᵢ` for qubit `i` (0-based).
    pub fn bit(&self, i: usize) -> u8 {
        ((self.n >> (self.n_qubits - 1 - i)) & 1) as u8
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.n_qubits).map(|i| self.bit(i)).collect()
    }

    pub fn label(&self) -> String {
        self.bits().iter().map(|&b| if b == 0 { 'e' } else { 'g' }).collect()
    }

    /// `(−1)^(number of g's)`.
    pub fn parity(&self) -> Parity {
        if self.n.count_ones() % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn ket(&self) -> CVector {
        let mut v = CVector::zeros(1 << self.n_qubits);
        v[self.n] = C64::new(1.0, 0.0);
        v
    }
}

/// `Δₙ = Σᵢ χᵢ (−1)^{nᵢ}`.
pub fn dispersive_shift(n: BasisIndex, params: &SystemParams) -> f64 {
    params
        .chi
        .iter()
        .enumerate()
        .map(|(i, chi)| if n.bit(i) == 0 { *chi } else { -*chi })
        .sum()
}

fn shifts(params: &SystemParams) -> Vec<f64> {
    let nq = params.layout.n_qubits();
    (0..params.layout.qubit_dim())
        .map(|n| dispersive_shift(BasisIndex { n, n_qubits: nq }, params))
        .collect()
}

fn require_detector(layout: SpaceLayout, present: bool) -> Result<()> {
    match (layout.has_detector(), present) {
        (false, true) => Err(Error::NoDetector),
        (true, false) => Err(Error::DetectorPresent),
        _ => Ok(()),
    }
}

fn full_hamiltonian_with(params: &SystemParams, omega_c: f64, omega_12: f64, omega_20: f64) -> Result<Operator> {
    params.validate()?;
    let l = params.layout;
    require_detector(l, true)?;
    let delta = shifts(params);
    let mut h = CMatrix::zeros(l.dim(), l.dim());
    for q in 0..l.qubit_dim() {
        for n in 0..l.fock_cutoff() {
            let rate = (omega_c + delta[q]) * n as f64;
            for d in 0..3 {
                let mut e = rate;
                if d == 2 {
                    e += omega_12;
                }
                if d == 0 {
                    e -= omega_20;
                }
                h[(l.index(q, n, d), l.index(q, n, d))] = C64::new(e, 0.0);
            }
            // g_J a|2⟩⟨1|: |n+1, 1⟩ → √(n+1) |n, 2⟩
            if n + 1 < l.fock_cutoff() {
                let c = C64::new(params.g_j * ((n + 1) as f64).sqrt(), 0.0);
                let to = l.index(q, n, 2);
                let from = l.index(q, n + 1, 1);
                h[(to, from)] = c;
                h[(from, to)] = c;
            }
        }
    }
    Operator::new(l, h)
}

/// Lab-frame Hamiltonian of qubits, cavity and CBJJ:
/// `(ω_c + Σχᵢσᶻᵢ)a†a + g_J(a|2⟩⟨1| + a†|1⟩⟨2|) + ω₁₂|2⟩⟨2| − ω₂₀|0⟩⟨0|`.
pub fn full_hamiltonian(params: &SystemParams) -> Result<Operator> {
    full_hamiltonian_with(params, params.omega_c, params.omega_12, params.omega_20)
}

/// [`full_hamiltonian`] in the frame generated by
/// `ω_c(a†a + |2⟩⟨2|) − ω₂₀|0⟩⟨0|`, which commutes with it, so the frame
/// change is exact and only rephases the collapse operator.
pub fn full_hamiltonian_rotating(params: &SystemParams) -> Result<Operator> {
    full_hamiltonian_with(params, 0.0, params.omega_12 - params.omega_c, 0.0)
}

/// Lab-frame effective Hamiltonian `ω_c a†a + Σᵢ χᵢ σᶻᵢ a†a`.
pub fn effective_hamiltonian(params: &SystemParams) -> Result<Operator> {
    effective_with(params, params.omega_c)
}

/// [`effective_hamiltonian`] with `ω_c a†a` dropped.
pub fn effective_hamiltonian_rotating(params: &SystemParams) -> Result<Operator> {
    effective_with(params, 0.0)
}

fn effective_with(params: &SystemParams, omega_c: f64) -> Result<Operator> {
    params.validate()?;
    let l = params.layout;
    require_detector(l, false)?;
    let delta = shifts(params);
    let mut h = CMatrix::zeros(l.dim(), l.dim());
    for q in 0..l.qubit_dim() {
        for n in 0..l.fock_cutoff() {
            let i = l.index(q, n, 0);
            h[(i, i)] = C64::new((omega_c + delta[q]) * n as f64, 0.0);
        }
    }
    Operator::new(l, h)
}

/// `√κ_J |0⟩⟨2|` on the detector.
pub fn cbjj_collapse(params: &SystemParams) -> Result<Operator> {
    let l = params.layout;
    let d = l.detector_index().ok_or(Error::NoDetector)?;
    let local = hilbert::projector(3, 0, 2) * C64::new(params.kappa_j.sqrt(), 0.0);
    hilbert::embed(&local, d, l)
}

/// `√κ_eff a`, the photodetection channel of the effective model.
pub fn effective_collapse(layout: SpaceLayout, kappa_eff: f64) -> Result<Operator> {
    if !(kappa_eff >= 0.0) {
        return Err(Error::InvalidParameter(format!("kappa_eff = {kappa_eff}")));
    }
    let a = hilbert::annihilation(layout.fock_cutoff())?;
    hilbert::embed(&(a * C64::new(kappa_eff.sqrt(), 0.0)), layout.cavity_index(), layout)
}

pub fn cavity_annihilation(layout: SpaceLayout) -> Result<Operator> {
    hilbert::embed(&hilbert::annihilation(layout.fock_cutoff())?, layout.cavity_index(), layout)
}

pub fn number_operator(layout: SpaceLayout) -> Result<Operator> {
    let a = hilbert::annihilation(layout.fock_cutoff())?;
    hilbert::embed(&(a.adjoint() * &a), layout.cavity_index(), layout)
}

/// `|k⟩⟨k|` on the detector.
pub fn detector_population(layout: SpaceLayout, level: usize) -> Result<Operator> {
    let d = layout.detector_index().ok_or(Error::NoDetector)?;
    if level > 2 {
        return Err(Error::InvalidParameter(format!("detector level {level}")));
    }
    hilbert::embed(&hilbert::projector(3, level, level), d, layout)
}

/// Projector onto a parity subspace of all qubits, identity on the rest.
pub fn parity_projector(layout: SpaceLayout, parity: Parity) -> Operator {
    let b = layout.block_size();
    let mut m = CMatrix::zeros(layout.dim(), layout.dim());
    for q in 0..layout.qubit_dim() {
        let bi = BasisIndex { n: q, n_qubits: layout.n_qubits() };
        if bi.parity() == parity {
            for k in 0..b {
                m[(q * b + k, q * b + k)] = C64::new(1.0, 0.0);
            }
        }
    }
    Operator::new(layout, m).expect("shape fixed by layout")
}

/// Projects a qubit-register vector onto one parity subspace.
pub fn project_qubits(qubit_state: &CVector, parity: Parity) -> CVector {
    let nq = qubit_state.len().trailing_zeros() as usize;
    CVector::from_fn(qubit_state.len(), |n, _| {
        if (BasisIndex { n, n_qubits: nq }).parity() == parity {
            qubit_state[n]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `|0⟩ ⊗ P_dark|ψ⟩ + |β⟩ ⊗ P_bright|ψ⟩`, detector (if present) in `|1⟩`.
pub fn encode_parity_state(
    qubit_state: &CVector,
    bright_amplitude: C64,
    bright_parity: Parity,
    params: &SystemParams,
) -> Result<PureState> {
    let l = params.layout;
    if qubit_state.len() != l.qubit_dim() {
        return Err(Error::DimensionMismatch { expected: l.qubit_dim(), got: qubit_state.len() });
    }
    let norm = qubit_state.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Unnormalized(norm));
    }
    let cutoff = l.fock_cutoff();
    let dark = hilbert::coherent_state(C64::new(0.0, 0.0), cutoff)?;
    let bright = hilbert::coherent_state(bright_amplitude, cutoff)?;
    let det = l.has_detector().then_some(1usize).unwrap_or(0);
    let mut v = CVector::zeros(l.dim());
    for q in 0..l.qubit_dim() {
        let c = qubit_state[q];
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        let parity = (BasisIndex { n: q, n_qubits: l.n_qubits() }).parity();
        let cav = if parity == bright_parity { &bright } else { &dark };
        for n in 0..cutoff {
            v[l.index(q, n, det)] = c * cav[n];
        }
    }
    PureState::normalized(l, v)
}
