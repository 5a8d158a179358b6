//! Lindblad master-equation integration with fixed-step RK4 over piecewise
//! constant Hamiltonians and instantaneous unitary events.

use crate::hilbert::{DensityMatrix, Operator, SpaceLayout};
use crate::linalg::{self, CMatrix, SparseMatrix};
use crate::output::TimeSeries;
use crate::{Error, Result, C64};

/// Largest allowed `‖H‖_max · step`.
pub const STEP_GUARD: f64 = 0.1;
/// Largest allowed population of the top two Fock levels after a segment.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EvolutionSegment {
    hamiltonian: Operator,
    collapse_ops: Vec<Operator>,
    duration: f64,
    step: f64,
    n_steps: usize,
}

impl EvolutionSegment {
    /// `step` is shrunk so that it divides `duration` exactly.
    pub fn new(
        hamiltonian: Operator,
        collapse_ops: Vec<Operator>,
        duration: f64,
        step: f64,
    ) -> Result<Self> {
        if !(duration > 0.0) || !(step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "segment duration {duration} and step {step} must be positive"
            )));
        }
        if step > duration * (1.0 + TIME_EPS) {
            return Err(Error::InvalidParameter(format!(
                "step {step} exceeds segment duration {duration}"
            )));
        }
        let layout = hamiltonian.layout();
        if collapse_ops.iter().any(|c| c.layout() != layout) {
            return Err(Error::InvalidParameter("collapse operator layout mismatch".into()));
        }
        let n_steps = ((duration / step) - TIME_EPS).ceil().max(1.0) as usize;
        let step = duration / n_steps as f64;
        let h = hamiltonian.max_abs();
        if h * step > STEP_GUARD {
            return Err(Error::StepGuard(format!(
                "‖H‖_max·step = {:.4} exceeds {STEP_GUARD}",
                h * step
            )));
        }
        Ok(EvolutionSegment { hamiltonian, collapse_ops, duration, step, n_steps })
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn collapse_ops(&self) -> &[Operator] {
        &self.collapse_ops
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
}

#[derive(Debug, Clone)]
pub struct InstantaneousEvent {
    unitary: Operator,
    time: f64,
}

impl InstantaneousEvent {
    pub fn new(unitary: Operator, time: f64) -> Result<Self> {
        let defect = unitary.unitarity_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidParameter(format!("event is not unitary (defect {defect:e})")));
        }
        Ok(InstantaneousEvent { unitary, time })
    }

    pub fn unitary(&self) -> &Operator {
        &self.unitary
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

#[derive(Debug, Clone)]
pub enum ScheduleItem {
    Segment(EvolutionSegment),
    Event(InstantaneousEvent),
}

/// `−i[H,ρ] + Σₖ D[cₖ]ρ` with `D[c]ρ = cρc† − ½(c†cρ + ρc†c)`.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &Operator, collapse_ops: &[Operator]) -> Result<CMatrix> {
    let d = h.layout().dim();
    if rho.dim() != d || collapse_ops.iter().any(|c| c.layout() != h.layout()) {
        return Err(Error::DimensionMismatch { expected: d, got: rho.dim() });
    }
    let r = rho.data();
    let mi = C64::new(0.0, -1.0);
    let mut out = (h.data() * r - r * h.data()) * mi;
    for c in collapse_ops {
        let cd = c.data().adjoint();
        let cdc = &cd * c.data();
        out += c.data() * r * &cd - (&cdc * r + r * &cdc) * C64::new(0.5, 0.0);
    }
    Ok(out)
}

/// Sparse kernel for Hermitian `ρ`: with `K = H − (i/2)Σc†c`,
/// the generator is `B + B† + Σ c(cρ)†` where `B = −iKρ`.
struct Generator {
    k: SparseMatrix,
    cs: Vec<SparseMatrix>,
}

impl Generator {
    fn new(h: &Operator, cs: &[Operator]) -> Self {
        let mut k = h.data().clone();
        for c in cs {
            let cdc = c.data().adjoint() * c.data();
            k -= cdc * C64::new(0.0, 0.5);
        }
        Generator {
            k: SparseMatrix::from_dense(&k),
            cs: cs.iter().map(|c| c.sparse()).collect(),
        }
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let b = self.k.mul_dense(rho) * C64::new(0.0, -1.0);
        let mut out = &b + b.adjoint();
        for c in &self.cs {
            let cr = c.mul_dense(rho);
            out += c.mul_dense(&cr.adjoint());
        }
        out
    }
}

fn rk4_step(g: &Generator, rho: &mut CMatrix, h: f64) {
    let half = C64::new(h / 2.0, 0.0);
    let full = C64::new(h, 0.0);
    let k1 = g.apply(rho);
    let k2 = g.apply(&(&*rho + &k1 * half));
    let k3 = g.apply(&(&*rho + &k2 * half));
    let k4 = g.apply(&(&*rho + &k3 * full));
    *rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
    let herm = (&*rho + rho.adjoint()) * C64::new(0.5, 0.0);
    *rho = herm;
}

/// Population of the top two Fock levels of a full-space density matrix.
pub fn fock_leakage(layout: SpaceLayout, rho: &CMatrix) -> f64 {
    if layout.fock_cutoff() < 3 {
        return 0.0;
    }
    let dl = layout.detector_levels().max(1);
    let mut leak = 0.0;
    for q in 0..layout.qubit_dim() {
        for n in layout.fock_cutoff() - 2..layout.fock_cutoff() {
            for det in 0..dl {
                let i = layout.index(q, n, det);
                leak += rho[(i, i)].re;
            }
        }
    }
    leak
}

#[derive(Debug, Clone, Copy)]
pub struct MasterOptions {
    pub sample_every: f64,
    /// Compute the minimum eigenvalue at every sample.
    pub check_positivity: bool,
    /// Fail when Fock leakage exceeds [`LEAKAGE_LIMIT`] after a segment.
    pub check_leakage: bool,
}

impl MasterOptions {
    pub fn sampled(sample_every: f64) -> Self {
        MasterOptions { sample_every, check_positivity: false, check_leakage: true }
    }
}

#[derive(Debug, Clone)]
pub struct MasterRun {
    pub series: TimeSeries,
    pub final_state: DensityMatrix,
    /// Largest `|tr ρ − 1|` seen at samples.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue seen at samples (`+∞` if not monitored).
    pub min_eigenvalue: f64,
    pub max_leakage: f64,
}

/// Integrates the schedule from `rho0`, sampling `Re tr(Oρ)` for each named
/// observable at `t = 0` and every `sample_every`.
pub fn evolve_master(
    rho0: &DensityMatrix,
    schedule: &[ScheduleItem],
    observables: &[(String, Operator)],
    sample_every: f64,
) -> Result<MasterRun> {
    evolve_master_with(rho0, schedule, observables, MasterOptions::sampled(sample_every))
}

pub fn evolve_master_with(
    rho0: &DensityMatrix,
    schedule: &[ScheduleItem],
    observables: &[(String, Operator)],
    opts: MasterOptions,
) -> Result<MasterRun> {
    if !(opts.sample_every > 0.0) {
        return Err(Error::InvalidParameter("sample_every must be positive".into()));
    }
    let layout = schedule
        .iter()
        .map(|it| match it {
            ScheduleItem::Segment(s) => s.hamiltonian.layout(),
            ScheduleItem::Event(e) => e.unitary.layout(),
        })
        .next()
        .ok_or_else(|| Error::Schedule("empty schedule".into()))?;
    if rho0.dim() != layout.dim() {
        return Err(Error::DimensionMismatch { expected: layout.dim(), got: rho0.dim() });
    }
    let obs: Vec<SparseMatrix> = observables.iter().map(|(_, o)| o.sparse()).collect();
    let mut series = TimeSeries::new(observables.iter().map(|(n, _)| n.clone()).collect());
    let mut rho = rho0.data().clone();
    let mut t = 0.0f64;
    let mut next_sample = 0.0f64;
    let mut drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut max_leak = 0.0f64;

    let mut sample = |t: f64, rho: &CMatrix, series: &mut TimeSeries| {
        let values = obs.iter().map(|o| o.trace_product(rho).re).collect();
        series.push(t, values);
        drift = drift.max((rho.trace() - C64::new(1.0, 0.0)).norm());
        if opts.check_positivity {
            let e = linalg::hermitian_eigenvalues(rho).into_iter().fold(f64::INFINITY, f64::min);
            min_eig = min_eig.min(e);
        }
    };

    let scale = |t: f64| TIME_EPS * t.abs().max(1.0);
    for item in schedule {
        match item {
            ScheduleItem::Event(ev) => {
                if ev.unitary.layout() != layout {
                    return Err(Error::Schedule("event layout mismatch".into()));
                }
                if (ev.time - t).abs() > scale(t) {
                    return Err(Error::Schedule(format!(
                        "event at t = {} does not fall on the schedule boundary t = {t}",
                        ev.time
                    )));
                }
                let u = ev.unitary.data();
                rho = u * &rho * u.adjoint();
            }
            ScheduleItem::Segment(seg) => {
                if seg.hamiltonian.layout() != layout {
                    return Err(Error::Schedule("segment layout mismatch".into()));
                }
                let g = Generator::new(&seg.hamiltonian, &seg.collapse_ops);
                for _ in 0..seg.n_steps {
                    if t + scale(t) >= next_sample {
                        sample(t, &rho, &mut series);
                        while next_sample <= t + scale(t) {
                            next_sample += opts.sample_every;
                        }
                    }
                    rk4_step(&g, &mut rho, seg.step);
                    t += seg.step;
                }
                let leak = fock_leakage(layout, &rho);
                max_leak = max_leak.max(leak);
                if opts.check_leakage && leak > LEAKAGE_LIMIT {
                    return Err(Error::TruncationLeak { leakage: leak, time: t });
                }
            }
        }
    }
    if t + scale(t) >= next_sample {
        sample(t, &rho, &mut series);
    }
    let final_state = DensityMatrix::new(rho0.dims().to_vec(), rho)?;
    Ok(MasterRun {
        series,
        final_state,
        max_trace_drift: drift,
        min_eigenvalue: min_eig,
        max_leakage: max_leak,
    })
}

/// One segment of constant `H` and collapse operators, split into steps.
pub fn single_segment(
    h: Operator,
    collapse_ops: Vec<Operator>,
    duration: f64,
    step: f64,
) -> Result<Vec<ScheduleItem>> {
    Ok(vec![ScheduleItem::Segment(EvolutionSegment::new(h, collapse_ops, duration, step)?)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{self, PureState};
    use crate::model::{self, BasisIndex, Parity, SystemParams};
    use crate::linalg::CVector;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fock(layout: SpaceLayout, n: usize) -> DensityMatrix {
        let mut v = CVector::zeros(layout.dim());
        v[layout.index(0, n, 0)] = c(1.0, 0.0);
        DensityMatrix::from_pure(&PureState::new(layout, v).unwrap())
    }

    #[test]
    fn single_photon_decay_rhs() {
        let l = SpaceLayout::effective(1, 4).unwrap();
        let kappa = 0.7;
        let cop = model::effective_collapse(l, kappa).unwrap();
        let h = Operator::zeros(l);
        let rho = fock(l, 1);
        let d = lindblad_rhs(&rho, &h, &[cop]).unwrap();
        let want = (fock(l, 0).data() - fock(l, 1).data()) * c(kappa, 0.0);
        assert!(linalg::max_abs(&(d - want)) < 1e-14);
    }

    #[test]
    fn rhs_is_traceless_hermitian_and_kills_identity() {
        let l = SpaceLayout::full(2, 4).unwrap();
        let p = SystemParams::uniform(l, 0.4, 1.0, 5.0, c(1.0, 0.0)).unwrap();
        let h = model::full_hamiltonian_rotating(&p).unwrap();
        let cj = model::cbjj_collapse(&p).unwrap();
        let psi = model::encode_parity_state(&BasisIndex::from_label("eg").unwrap().ket(), c(0.8, 0.2), Parity::Odd, &p)
            .unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let d = lindblad_rhs(&rho, &h, &[cj.clone()]).unwrap();
        assert!(d.trace().norm() < 1e-12);
        assert!(linalg::hermiticity_defect(&d) < 1e-12);
        let d0 = lindblad_rhs(&rho, &h, &[]).unwrap();
        assert!(d0.trace().norm() < 1e-12);
        let mixed = DensityMatrix::new(l.dims(), linalg::identity(l.dim()) * c(1.0 / l.dim() as f64, 0.0)).unwrap();
        assert!(linalg::max_abs(&lindblad_rhs(&mixed, &h, &[]).unwrap()) < 1e-15);
        // fast kernel agrees with the dense definition
        let g = Generator::new(&h, &[cj]);
        let fast = g.apply(rho.data());
        assert!(linalg::max_abs(&(fast - d)) < 1e-12);
    }

    #[test]
    fn damped_oscillator_number_decay() {
        let l = SpaceLayout::effective(1, 30).unwrap();
        let kappa = 0.5;
        let alpha = hilbert::coherent_state(c(2.0, 0.0), 30).unwrap();
        let mut v = CVector::zeros(l.dim());
        for n in 0..30 {
            v[l.index(0, n, 0)] = alpha[n];
        }
        let rho = DensityMatrix::from_pure(&PureState::new(l, v).unwrap());
        let sched = single_segment(
            Operator::zeros(l),
            vec![model::effective_collapse(l, kappa).unwrap()],
            4.0,
            0.01,
        )
        .unwrap();
        let obs = vec![("n".to_string(), model::number_operator(l).unwrap())];
        let run = evolve_master(&rho, &sched, &obs, 0.5).unwrap();
        assert_eq!(run.series.len(), 9);
        for (t, row) in run.series.times.iter().zip(&run.series.rows) {
            let exact = 4.0 * (-kappa * t).exp();
            assert!((row[0] - exact).abs() / exact < 1e-5, "t = {t}");
        }
        assert!(run.max_trace_drift < 1e-6);
    }

    #[test]
    fn unitary_revival_of_xx_correlator() {
        let chi = 1.0;
        let l = SpaceLayout::effective(2, 24).unwrap();
        let p = SystemParams::uniform(l, chi, 0.0, 0.0, c(1.5, 0.0)).unwrap();
        let h = model::effective_hamiltonian_rotating(&p).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = (BasisIndex::from_label("gg").unwrap().ket() + BasisIndex::from_label("ee").unwrap().ket())
            * c(s, 0.0);
        let psi = model::encode_parity_state(&bell, p.alpha, Parity::Even, &p).unwrap();
        let xx = hilbert::embed(&hilbert::sigma_x(), 0, l)
            .unwrap()
            .mul(&hilbert::embed(&hilbert::sigma_x(), 1, l).unwrap());
        let t_rev = std::f64::consts::PI / (2.0 * chi);
        let sched = single_segment(h, vec![], t_rev, t_rev / 1000.0).unwrap();
        let run = evolve_master(&DensityMatrix::from_pure(&psi), &sched, &[("xx".into(), xx)], t_rev / 4.0)
            .unwrap();
        let col = run.series.column("xx").unwrap();
        assert!((col[0] - 1.0).abs() < 1e-10);
        assert!(col[2] < 0.1);
        assert!((col.last().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn step_guard_and_event_window() {
        let l = SpaceLayout::effective(1, 10).unwrap();
        let p = SystemParams::uniform(l, 5.0, 0.0, 0.0, c(1.0, 0.0)).unwrap();
        let h = model::effective_hamiltonian_rotating(&p).unwrap();
        assert!(matches!(
            EvolutionSegment::new(h.clone(), vec![], 1.0, 0.1),
            Err(Error::StepGuard(_))
        ));
        let seg = EvolutionSegment::new(h.clone(), vec![], 1.0, 0.001).unwrap();
        let ev = InstantaneousEvent::new(Operator::identity(l), 0.3).unwrap();
        let rho = fock(l, 1);
        let bad = vec![ScheduleItem::Segment(seg), ScheduleItem::Event(ev)];
        assert!(matches!(evolve_master(&rho, &bad, &[], 0.1), Err(Error::Schedule(_))));
    }

    #[test]
    fn step_halving_converges() {
        let l = SpaceLayout::full(1, 12).unwrap();
        let p = SystemParams::uniform(l, 0.5, 1.0, 6.0, c(1.0, 0.0)).unwrap();
        let h = model::full_hamiltonian_rotating(&p).unwrap();
        let cj = model::cbjj_collapse(&p).unwrap();
        let psi = model::encode_parity_state(&BasisIndex::from_label("e").unwrap().ket(), c(0.7, 0.0), Parity::Even, &p)
            .unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let obs = vec![
            ("n".to_string(), model::number_operator(l).unwrap()),
            ("p0".to_string(), model::detector_population(l, 0).unwrap()),
        ];
        let mut runs = Vec::new();
        for step in [0.01, 0.005] {
            let sched = single_segment(h.clone(), vec![cj.clone()], 2.0, step).unwrap();
            let mut opts = MasterOptions::sampled(0.5);
            opts.check_positivity = true;
            runs.push(evolve_master_with(&rho, &sched, &obs, opts).unwrap());
        }
        for (a, b) in runs[0].series.rows.iter().zip(&runs[1].series.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-5);
            }
        }
        assert!(runs[1].min_eigenvalue >= -1e-6);
        assert!(runs[1].max_trace_drift <= 1e-6);
        assert!(runs[1].final_state.hermiticity_defect() <= 1e-9);
    }

    #[test]
    fn leakage_is_reported() {
        let l = SpaceLayout::effective(1, 4).unwrap();
        let rho = fock(l, 3);
        let sched = single_segment(Operator::zeros(l), vec![], 1.0, 0.5).unwrap();
        assert!(matches!(evolve_master(&rho, &sched, &[], 1.0), Err(Error::TruncationLeak { .. })));
    }
}
