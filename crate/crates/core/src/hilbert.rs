//! Composite Hilbert space of N qubits, one Fock-truncated cavity mode and an
//! optional three-level detector, in that fixed order.
//!
//! Qubit basis: index 0 is `|e⟩`, index 1 is `|g⟩`, so `σᶻ = diag(+1, −1)`.
//! Detector basis: indices 0, 1, 2 are the levels `|0⟩` (continuum), `|1⟩`
//! and `|2⟩`.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, CVector, SparseMatrix};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceLayout {
    n_qubits: usize,
    fock_cutoff: usize,
    detector_levels: usize,
}

impl SpaceLayout {
    pub fn new(n_qubits: usize, fock_cutoff: usize, detector_levels: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidParameter("n_qubits must be at least 1".into()));
        }
        if fock_cutoff == 0 {
            return Err(Error::CutoffTooSmall { min: 1, got: 0 });
        }
        if detector_levels != 0 && detector_levels != 3 {
            return Err(Error::InvalidParameter(format!(
                "detector_levels must be 0 or 3, got {detector_levels}"
            )));
        }
        Ok(SpaceLayout { n_qubits, fock_cutoff, detector_levels })
    }

    /// Layout without a detector (effective photodetection model).
    pub fn effective(n_qubits: usize, fock_cutoff: usize) -> Result<Self> {
        Self::new(n_qubits, fock_cutoff, 0)
    }

    /// Layout with the three-level detector.
    pub fn full(n_qubits: usize, fock_cutoff: usize) -> Result<Self> {
        Self::new(n_qubits, fock_cutoff, 3)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn detector_levels(&self) -> usize {
        self.detector_levels
    }

    pub fn has_detector(&self) -> bool {
        self.detector_levels == 3
    }

    pub fn qubit_dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn cavity_index(&self) -> usize {
        self.n_qubits
    }

    pub fn detector_index(&self) -> Option<usize> {
        self.has_detector().then_some(self.n_qubits + 1)
    }

    pub fn n_subsystems(&self) -> usize {
        self.n_qubits + 1 + usize::from(self.has_detector())
    }

    /// Dimensions of every subsystem in the fixed ordering.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![2; self.n_qubits];
        d.push(self.fock_cutoff);
        if self.has_detector() {
            d.push(3);
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.qubit_dim() * self.fock_cutoff * self.detector_levels.max(1)
    }

    /// Size of the cavity ⊗ detector factor, i.e. the stride of one qubit
    /// basis state in the full index.
    pub fn block_size(&self) -> usize {
        self.fock_cutoff * self.detector_levels.max(1)
    }

    /// Full index of `|qubits = q, n, detector = d⟩`.
    pub fn index(&self, qubits: usize, photons: usize, detector: usize) -> usize {
        (qubits * self.fock_cutoff + photons) * self.detector_levels.max(1) + detector
    }

    /// Inverse of [`SpaceLayout::index`].
    pub fn split(&self, index: usize) -> (usize, usize, usize) {
        let dl = self.detector_levels.max(1);
        let d = index % dl;
        let rest = index / dl;
        (rest / self.fock_cutoff, rest % self.fock_cutoff, d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    layout: SpaceLayout,
    data: CMatrix,
}

impl Operator {
    pub fn new(layout: SpaceLayout, data: CMatrix) -> Result<Self> {
        if data.nrows() != layout.dim() || data.ncols() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), got: data.nrows() });
        }
        Ok(Operator { layout, data })
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        Operator { layout, data: linalg::identity(layout.dim()) }
    }

    pub fn zeros(layout: SpaceLayout) -> Self {
        Operator { layout, data: CMatrix::zeros(layout.dim(), layout.dim()) }
    }

    pub fn layout(&self) -> SpaceLayout {
        self.layout
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Operator { layout: self.layout, data: self.data.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Operator { layout: self.layout, data: &self.data * s }
    }

    pub fn add(&self, other: &Operator) -> Self {
        debug_assert_eq!(self.layout, other.layout);
        Operator { layout: self.layout, data: &self.data + &other.data }
    }

    pub fn sub(&self, other: &Operator) -> Self {
        debug_assert_eq!(self.layout, other.layout);
        Operator { layout: self.layout, data: &self.data - &other.data }
    }

    pub fn mul(&self, other: &Operator) -> Self {
        debug_assert_eq!(self.layout, other.layout);
        Operator { layout: self.layout, data: &self.data * &other.data }
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.data)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.data)
    }

    /// `‖U†U − 1‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.data.adjoint() * &self.data - linalg::identity(self.layout.dim());
        linalg::max_abs(&g)
    }

    /// `e^{−i H t}` for this operator as `H`.
    pub fn propagator(&self, t: f64) -> Operator {
        let gen = &self.data * C64::new(0.0, -t);
        Operator { layout: self.layout, data: linalg::expm(&gen) }
    }

    pub fn sparse(&self) -> SparseMatrix {
        SparseMatrix::from_dense(&self.data)
    }

    pub fn apply(&self, psi: &PureState) -> CVector {
        &self.data * &psi.amplitudes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: SpaceLayout,
    amplitudes: CVector,
}

impl PureState {
    pub fn new(layout: SpaceLayout, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), got: amplitudes.len() });
        }
        Ok(PureState { layout, amplitudes })
    }

    /// Builds and normalizes; fails on a zero vector.
    pub fn normalized(layout: SpaceLayout, amplitudes: CVector) -> Result<Self> {
        let mut s = Self::new(layout, amplitudes)?;
        s.normalize()?;
        Ok(s)
    }

    /// `|q⟩ ⊗ |cavity⟩ ⊗ |detector⟩` from factor vectors.
    pub fn product(
        layout: SpaceLayout,
        qubits: &CVector,
        cavity: &CVector,
        detector: Option<&CVector>,
    ) -> Result<Self> {
        if qubits.len() != layout.qubit_dim() {
            return Err(Error::DimensionMismatch { expected: layout.qubit_dim(), got: qubits.len() });
        }
        if cavity.len() != layout.fock_cutoff() {
            return Err(Error::DimensionMismatch {
                expected: layout.fock_cutoff(),
                got: cavity.len(),
            });
        }
        let mut v = qubits.kronecker(cavity);
        match (layout.has_detector(), detector) {
            (true, Some(d)) => {
                if d.len() != 3 {
                    return Err(Error::DimensionMismatch { expected: 3, got: d.len() });
                }
                v = v.kronecker(d);
            }
            (true, None) => return Err(Error::InvalidParameter("detector state required".into())),
            (false, Some(_)) => return Err(Error::DetectorPresent),
            (false, None) => {}
        }
        Self::new(layout, v)
    }

    pub fn layout(&self) -> SpaceLayout {
        self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut CVector {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroBranch);
        }
        self.amplitudes.unscale_mut(n);
        Ok(())
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        linalg::inner(&self.amplitudes, &(op.data() * &self.amplitudes))
    }

    pub fn overlap(&self, other: &PureState) -> C64 {
        linalg::inner(&self.amplitudes, &other.amplitudes)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.overlap(other).norm_sqr()
    }

    /// Reduced density matrix over the kept subsystems, straight from the
    /// amplitudes.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let plan = TracePlan::new(&self.layout.dims(), keep)?;
        let mut out = CMatrix::zeros(plan.kept_dim, plan.kept_dim);
        let psi = self.amplitudes.as_slice();
        for t in 0..plan.traced_dim {
            for a in 0..plan.kept_dim {
                let x = psi[plan.full_index(a, t)];
                if x == ZERO {
                    continue;
                }
                for b in 0..plan.kept_dim {
                    out[(a, b)] += x * psi[plan.full_index(b, t)].conj();
                }
            }
        }
        Ok(DensityMatrix { dims: plan.kept_dims, data: out })
    }

    /// Population of the two highest Fock levels.
    pub fn truncation_leakage(&self) -> f64 {
        let l = self.layout;
        if l.fock_cutoff() < 3 {
            return 0.0;
        }
        let top = l.fock_cutoff() - 2;
        let dl = l.detector_levels().max(1);
        let mut leak = 0.0;
        for q in 0..l.qubit_dim() {
            for n in top..l.fock_cutoff() {
                for d in 0..dl {
                    leak += self.amplitudes[l.index(q, n, d)].norm_sqr();
                }
            }
        }
        leak / self.amplitudes.norm_squared()
    }
}

/// Density matrix over an arbitrary tensor product of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    data: CMatrix,
}

impl DensityMatrix {
    pub fn new(dims: Vec<usize>, data: CMatrix) -> Result<Self> {
        let d: usize = dims.iter().product();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: data.nrows() });
        }
        Ok(DensityMatrix { dims, data })
    }

    pub fn from_layout(layout: SpaceLayout, data: CMatrix) -> Result<Self> {
        Self::new(layout.dims(), data)
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = psi.amplitudes();
        DensityMatrix { dims: psi.layout().dims(), data: v * v.adjoint() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut CMatrix {
        &mut self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.data * &self.data).trace().re
    }

    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (op * &self.data).trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.data)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.data)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        linalg::trace_distance(&self.data, &other.data)
    }
}

struct TracePlan {
    kept_dims: Vec<usize>,
    kept_dim: usize,
    traced_dim: usize,
    /// full index = kept_offset[a] + traced_offset[t]
    kept_offset: Vec<usize>,
    traced_offset: Vec<usize>,
}

impl TracePlan {
    fn new(dims: &[usize], keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidSubsystemSet("keep set is empty".into()));
        }
        let mut mask = vec![false; dims.len()];
        for &k in keep {
            if k >= dims.len() {
                return Err(Error::SubsystemOutOfRange { index: k, count: dims.len() });
            }
            if mask[k] {
                return Err(Error::InvalidSubsystemSet(format!("subsystem {k} listed twice")));
            }
            mask[k] = true;
        }
        // strides of the full row-major (first subsystem most significant) index
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let offsets = |sel: bool| -> Vec<usize> {
            let mut offs = vec![0usize];
            for i in 0..dims.len() {
                if mask[i] != sel {
                    continue;
                }
                let mut next = Vec::with_capacity(offs.len() * dims[i]);
                for &o in &offs {
                    for x in 0..dims[i] {
                        next.push(o + x * strides[i]);
                    }
                }
                offs = next;
            }
            offs
        };
        let kept_offset = offsets(true);
        let traced_offset = offsets(false);
        let kept_dims: Vec<usize> = (0..dims.len()).filter(|&i| mask[i]).map(|i| dims[i]).collect();
        Ok(TracePlan {
            kept_dim: kept_offset.len(),
            traced_dim: traced_offset.len(),
            kept_dims,
            kept_offset,
            traced_offset,
        })
    }

    fn full_index(&self, a: usize, t: usize) -> usize {
        self.kept_offset[a] + self.traced_offset[t]
    }
}

/// Reduced density matrix over the kept subsystems (indices in the layout's
/// fixed ordering).
pub fn partial_trace(state: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let plan = TracePlan::new(&state.dims, keep)?;
    let mut out = CMatrix::zeros(plan.kept_dim, plan.kept_dim);
    for t in 0..plan.traced_dim {
        for b in 0..plan.kept_dim {
            let j = plan.full_index(b, t);
            for a in 0..plan.kept_dim {
                out[(a, b)] += state.data[(plan.full_index(a, t), j)];
            }
        }
    }
    Ok(DensityMatrix { dims: plan.kept_dims, data: out })
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> CMatrix {
    let i = C64::new(0.0, 1.0);
    CMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|k⟩⟨l|` on a `dim`-level system.
pub fn projector(dim: usize, k: usize, l: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(k, l)] = ONE;
    m
}

/// `1 ⊗ … ⊗ local ⊗ … ⊗ 1` with `local` on subsystem `subsystem_index`.
pub fn embed(local: &CMatrix, subsystem_index: usize, layout: SpaceLayout) -> Result<Operator> {
    let dims = layout.dims();
    if subsystem_index >= dims.len() {
        return Err(Error::SubsystemOutOfRange { index: subsystem_index, count: dims.len() });
    }
    let d = dims[subsystem_index];
    if local.nrows() != d || local.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: local.nrows() });
    }
    let left: usize = dims[..subsystem_index].iter().product();
    let right: usize = dims[subsystem_index + 1..].iter().product();
    let data = linalg::kron(&linalg::kron(&linalg::identity(left), local), &linalg::identity(right));
    Operator::new(layout, data)
}

/// Truncated bosonic annihilation operator, `a_{m,m+1} = √(m+1)`.
pub fn annihilation(fock_cutoff: usize) -> Result<CMatrix> {
    if fock_cutoff < 2 {
        return Err(Error::CutoffTooSmall { min: 2, got: fock_cutoff });
    }
    let mut a = CMatrix::zeros(fock_cutoff, fock_cutoff);
    for m in 0..fock_cutoff - 1 {
        a[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    Ok(a)
}

fn check_truncation(amplitude: C64, fock_cutoff: usize) -> Result<()> {
    let intensity = amplitude.norm_sqr();
    let limit = fock_cutoff as f64 / 4.0;
    if intensity > limit {
        return Err(Error::TruncationUnsafe { intensity, limit });
    }
    Ok(())
}

/// Fock amplitudes `e^{−|α|²/2} αⁿ/√(n!)`, renormalized after truncation.
pub fn coherent_state(amplitude: C64, fock_cutoff: usize) -> Result<CVector> {
    check_truncation(amplitude, fock_cutoff)?;
    let mut v = CVector::zeros(fock_cutoff);
    // recurrence c_{n+1} = c_n α/√(n+1) avoids factorial overflow
    let mut c = C64::new((-amplitude.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..fock_cutoff {
        v[n] = c;
        c = c * amplitude / ((n + 1) as f64).sqrt();
    }
    let norm = v.norm();
    v.unscale_mut(norm);
    Ok(v)
}

/// Displacement `D(β) = exp(β a† − β* a)` on the truncated mode.
pub fn displacement(beta: C64, fock_cutoff: usize) -> Result<CMatrix> {
    check_truncation(beta, fock_cutoff)?;
    let a = annihilation(fock_cutoff.max(2))?;
    if fock_cutoff < 2 {
        return Ok(linalg::identity(fock_cutoff));
    }
    let gen = a.adjoint() * beta - &a * beta.conj();
    Ok(linalg::expm(&gen))
}

/// `⊗_{i∈subset} σᶻᵢ` (identity elsewhere). Subset entries are 0-based
/// qubit indices.
pub fn parity_operator(layout: SpaceLayout, subset: &[usize]) -> Result<Operator> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut diag = vec![1.0f64; layout.qubit_dim()];
    for &q in subset {
        if q >= layout.n_qubits() {
            return Err(Error::SubsystemOutOfRange { index: q, count: layout.n_qubits() });
        }
    }
    for (n, s) in diag.iter_mut().enumerate() {
        for &q in subset {
            // bit of qubit q, most significant first; 1 means |g⟩
            if (n >> (layout.n_qubits() - 1 - q)) & 1 == 1 {
                *s = -*s;
            }
        }
    }
    let b = layout.block_size();
    let mut data = CMatrix::zeros(layout.dim(), layout.dim());
    for (n, s) in diag.iter().enumerate() {
        for k in 0..b {
            data[(n * b + k, n * b + k)] = C64::new(*s, 0.0);
        }
    }
    Operator::new(layout, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn basis(dim: usize, k: usize) -> CVector {
        let mut v = CVector::zeros(dim);
        v[k] = ONE;
        v
    }

    #[test]
    fn layout_dimension_and_index_round_trip() {
        let l = SpaceLayout::full(2, 5).unwrap();
        assert_eq!(l.dim(), 4 * 5 * 3);
        for i in 0..l.dim() {
            let (q, n, d) = l.split(i);
            assert_eq!(l.index(q, n, d), i);
        }
        assert!(SpaceLayout::new(2, 5, 2).is_err());
        assert!(SpaceLayout::new(0, 5, 0).is_err());
    }

    #[test]
    fn embed_identity_is_identity() {
        let l = SpaceLayout::full(2, 3).unwrap();
        for (i, d) in l.dims().into_iter().enumerate() {
            let e = embed(&linalg::identity(d), i, l).unwrap();
            assert_eq!(e, Operator::identity(l));
        }
    }

    #[test]
    fn embed_sigma_z_on_excited_qubit() {
        let l = SpaceLayout::effective(2, 2).unwrap();
        let sz = embed(&sigma_z(), 0, l).unwrap();
        // |e g, 0⟩: qubit index 0b01
        let psi = PureState::new(l, basis(l.dim(), l.index(0b01, 0, 0))).unwrap();
        assert!((psi.expectation(&sz) - ONE).norm() < 1e-15);
    }

    #[test]
    fn embed_annihilation_lowers_photon_number() {
        let l = SpaceLayout::effective(1, 3).unwrap();
        let a = embed(&annihilation(3).unwrap(), l.cavity_index(), l).unwrap();
        let psi = PureState::new(l, basis(l.dim(), l.index(1, 1, 0))).unwrap();
        let out = a.apply(&psi);
        assert!((out - basis(l.dim(), l.index(1, 0, 0))).norm() < 1e-15);
    }

    #[test]
    fn embed_rejects_bad_input() {
        let l = SpaceLayout::effective(1, 3).unwrap();
        assert!(matches!(embed(&sigma_z(), 1, l), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(embed(&sigma_z(), 5, l), Err(Error::SubsystemOutOfRange { .. })));
    }

    #[test]
    fn annihilation_ladder() {
        let a = annihilation(6).unwrap();
        assert!((&a * basis(6, 0)).norm() < 1e-15);
        assert!((&a * basis(6, 3) - basis(6, 2) * c(3f64.sqrt(), 0.0)).norm() < 1e-15);
        let num = a.adjoint() * &a;
        for n in 0..6 {
            assert!((num[(n, n)] - c(n as f64, 0.0)).norm() < 1e-14);
        }
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn coherent_vacuum_and_mean() {
        let v = coherent_state(ZERO, 10).unwrap();
        assert!((v - basis(10, 0)).norm() < 1e-15);
        let a = annihilation(40).unwrap();
        let s = coherent_state(c(2.0, 0.0), 40).unwrap();
        let n = linalg::inner(&s, &(a.adjoint() * &a * &s)).re;
        assert!((n - 4.0).abs() < 1e-6);
        assert!(matches!(coherent_state(c(4.0, 0.0), 40), Err(Error::TruncationUnsafe { .. })));
    }

    #[test]
    fn coherent_overlap_matches_series() {
        // oracle: direct sum of the untruncated series Σ (α*)^n (−α)^n / n!
        let alpha = 2.0f64;
        let mut series = 0.0;
        let mut term = 1.0;
        for n in 0..80 {
            series += term;
            term *= -alpha * alpha / (n + 1) as f64;
        }
        let oracle = (-alpha * alpha).exp() * series;
        let p = coherent_state(c(alpha, 0.0), 40).unwrap();
        let m = coherent_state(c(-alpha, 0.0), 40).unwrap();
        let ov = linalg::inner(&p, &m);
        assert!((ov.re - oracle).abs() < 1e-6);
        assert!((ov.re - (-8.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn displacement_creates_coherent_state() {
        assert!((displacement(ZERO, 8).unwrap() - linalg::identity(8)).norm() < 1e-15);
        let beta = c(1.5, 0.0);
        let d = displacement(beta, 40).unwrap();
        let made = &d * basis(40, 0);
        let target = coherent_state(beta, 40).unwrap();
        assert!(linalg::inner(&target, &made).norm_sqr() >= 1.0 - 1e-6);
        let back = displacement(-beta, 40).unwrap();
        assert!(linalg::max_abs(&(&d * &back - linalg::identity(40))) < 1e-10);
    }

    #[test]
    fn parity_eigenvalues() {
        let l = SpaceLayout::effective(2, 2).unwrap();
        let p = parity_operator(l, &[0, 1]).unwrap();
        let ee = PureState::new(l, basis(l.dim(), l.index(0b00, 0, 0))).unwrap();
        let eg = PureState::new(l, basis(l.dim(), l.index(0b01, 0, 0))).unwrap();
        assert!((ee.expectation(&p) - ONE).norm() < 1e-15);
        assert!((eg.expectation(&p) + ONE).norm() < 1e-15);
        let l3 = SpaceLayout::effective(3, 2).unwrap();
        let p13 = parity_operator(l3, &[0, 2]).unwrap();
        let egg = PureState::new(l3, basis(l3.dim(), l3.index(0b011, 0, 0))).unwrap();
        assert!((egg.expectation(&p13) + ONE).norm() < 1e-15);
        assert!(matches!(parity_operator(l, &[]), Err(Error::EmptySubset)));
        let sq = p.mul(&p).sub(&Operator::identity(l));
        assert!(sq.max_abs() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let l = SpaceLayout::effective(2, 12).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = CVector::from_vec(vec![c(s, 0.0), ZERO, ZERO, c(0.0, s)]);
        let cav = coherent_state(c(1.0, 0.5), 12).unwrap();
        let psi = PureState::product(l, &q, &cav, None).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let red = partial_trace(&rho, &[0, 1]).unwrap();
        assert!((red.data() - &q * q.adjoint()).norm() < 1e-12);
        let red2 = psi.reduced(&[0, 1]).unwrap();
        assert!((red2.data() - red.data()).norm() < 1e-12);
        let all = partial_trace(&rho, &[0, 1, 2]).unwrap();
        assert_eq!(all.data(), rho.data());
        assert!(partial_trace(&rho, &[]).is_err());
        assert!(partial_trace(&rho, &[7]).is_err());
    }

    #[test]
    fn partial_trace_over_qubits_of_encoded_state() {
        // ½|0⟩⟨0| + ½|β⟩⟨β| for equal parity weights
        let l = SpaceLayout::effective(2, 20).unwrap();
        let beta = c(2.0, 0.0);
        let vac = coherent_state(ZERO, 20).unwrap();
        let bright = coherent_state(beta, 20).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = CVector::zeros(l.dim());
        for n in 0..20 {
            v[l.index(0b00, n, 0)] = vac[n] * s; // even, dark
            v[l.index(0b01, n, 0)] = bright[n] * s; // odd, bright
        }
        let psi = PureState::new(l, v).unwrap();
        let red = psi.reduced(&[2]).unwrap();
        let expect = (&vac * vac.adjoint() + &bright * bright.adjoint()) * c(0.5, 0.0);
        assert!((red.data() - expect).norm() < 1e-12);
    }

    #[test]
    fn reduced_qubit_purity_at_revival() {
        // oracle: coherence magnitude |⟨α e^{iφ}|α e^{−iφ}⟩| = exp(−|α|²(1 − cos 2φ))
        let chi = 1.0;
        let alpha = 1.5f64;
        let l = SpaceLayout::effective(2, 30).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for &t in &[0.3, std::f64::consts::PI / (2.0 * chi)] {
            let phi = 2.0 * chi * t;
            let gg = coherent_state(C64::from_polar(alpha, phi), 30).unwrap();
            let ee = coherent_state(C64::from_polar(alpha, -phi), 30).unwrap();
            let mut v = CVector::zeros(l.dim());
            for n in 0..30 {
                v[l.index(0b11, n, 0)] = gg[n] * s;
                v[l.index(0b00, n, 0)] = ee[n] * s;
            }
            let psi = PureState::new(l, v).unwrap();
            let red = psi.reduced(&[0, 1]).unwrap();
            let coh = (-alpha * alpha * (1.0 - (2.0 * phi).cos())).exp();
            let oracle = 0.5 + 0.5 * coh * coh;
            assert!((red.purity() - oracle).abs() < 1e-8, "t = {t}");
        }
    }

    proptest! {
        #[test]
        fn disjoint_embeddings_commute(i in 0usize..4, j in 0usize..4) {
            prop_assume!(i != j);
            let l = SpaceLayout::full(2, 4).unwrap();
            let pick = |k: usize| -> CMatrix {
                match k {
                    0 | 1 => sigma_y() + sigma_x() * c(0.3, 0.1),
                    2 => annihilation(4).unwrap(),
                    _ => projector(3, 0, 2) + projector(3, 1, 1),
                }
            };
            let a = embed(&pick(i), i, l).unwrap();
            let b = embed(&pick(j), j, l).unwrap();
            prop_assert!(a.commutator(&b).max_abs() <= 1e-12);
        }

        #[test]
        fn displacements_compose_on_low_fock_states(
            br in -0.6f64..0.6, bi in -0.6f64..0.6, gr in -0.6f64..0.6, gi in -0.6f64..0.6
        ) {
            let cutoff = 40;
            let b = c(br, bi);
            let g = c(gr, gi);
            let lhs = displacement(b, cutoff).unwrap() * displacement(g, cutoff).unwrap();
            let rhs = displacement(b + g, cutoff).unwrap();
            // D(β)D(γ) = e^{i Im(βγ*)} D(β+γ); compare on columns well below the cutoff
            let phase = C64::from_polar(1.0, (b * g.conj()).im);
            for col in 0..10 {
                let diff = lhs.column(col) - rhs.column(col) * phase;
                prop_assert!(diff.norm() <= 1e-8);
            }
        }
    }
}
