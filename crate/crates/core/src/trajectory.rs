//! Monte Carlo wave-function unraveling of photodetection.
//!
//! Each step applies the exact non-Hermitian propagator
//! `P = exp(−iK dt)`, `K = H − (i/2)Σ c†c`, to the normalized state. The norm
//! lost in the step is the probability of a jump inside it; when one is
//! drawn, the channel is picked with weight `‖cₖ Pψ‖²` and `cₖ` is applied to
//! the propagated state. Detection is a Bernoulli(η) thinning of jumps.

use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::{self, DensityMatrix, Operator, PureState, SpaceLayout};
use crate::linalg::{self, CMatrix, CVector, SparseMatrix};
use crate::model::{self, BasisIndex, Parity, SystemParams};
use crate::output::TimeSeries;
use crate::rng::{trajectory_seed, StepRng};
use crate::{Error, Result, C64};

/// Largest allowed jump probability per step.
pub const JUMP_GUARD: f64 = 0.05;

const TIME_EPS: f64 = 1e-9;

/// Hamiltonian (rotating frame) plus jump operators.
#[derive(Debug, Clone)]
pub struct TrajectoryModel {
    pub hamiltonian: Operator,
    pub jumps: Vec<Operator>,
}

impl TrajectoryModel {
    /// Effective model: `Σχᵢσᶻᵢa†a` with the single channel `√κ_eff a`.
    pub fn effective(params: &SystemParams, kappa_eff: f64) -> Result<Self> {
        Ok(TrajectoryModel {
            hamiltonian: model::effective_hamiltonian_rotating(params)?,
            jumps: vec![model::effective_collapse(params.layout, kappa_eff)?],
        })
    }

    /// Full model with the CBJJ channel `√κ_J |0⟩⟨2|`.
    pub fn full(params: &SystemParams) -> Result<Self> {
        Ok(TrajectoryModel {
            hamiltonian: model::full_hamiltonian_rotating(params)?,
            jumps: vec![model::cbjj_collapse(params)?],
        })
    }

    pub fn layout(&self) -> SpaceLayout {
        self.hamiltonian.layout()
    }

    /// `K = H − (i/2)Σ c†c`.
    pub fn effective_generator(&self) -> CMatrix {
        let mut k = self.hamiltonian.data().clone();
        for c in &self.jumps {
            k -= c.data().adjoint() * c.data() * C64::new(0.0, 0.5);
        }
        k
    }
}

/// A unitary applied at an exact time.
#[derive(Debug, Clone)]
pub struct TimedEvent {
    pub time: f64,
    pub unitary: Operator,
    pub label: String,
    /// A collective qubit flip (changes the toggling frame).
    pub is_flip: bool,
    /// Not applied once a detected click has occurred.
    pub skip_after_click: bool,
}

#[derive(Debug, Clone)]
pub struct TrajectorySettings {
    pub t_m: f64,
    pub dt: f64,
    pub eta: f64,
    /// Sample observables at `t = 0` and every `sample_every` (a multiple of dt).
    pub sample_every: Option<f64>,
    /// Keep pre/post-jump states in the jump records.
    pub snapshots: bool,
    /// Deterministic jumps at these times instead of stochastic ones.
    pub forced_jumps: Vec<f64>,
    /// Track `⟨P_N⟩` (toggling frame) after the first jump.
    pub monitor_parity: bool,
    pub check_leakage: bool,
}

impl TrajectorySettings {
    pub fn new(t_m: f64, dt: f64, eta: f64) -> Self {
        TrajectorySettings {
            t_m,
            dt,
            eta,
            sample_every: None,
            snapshots: false,
            forced_jumps: Vec::new(),
            monitor_parity: false,
            check_leakage: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub detected: bool,
    pub channel: usize,
    #[serde(skip)]
    pub pre_jump_state: Option<PureState>,
    #[serde(skip)]
    pub post_jump_state: Option<PureState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Herald {
    Detected,
    NoClick,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub jumps: Vec<JumpRecord>,
    pub herald: Herald,
    /// Time of the first detected jump.
    pub click_time: Option<f64>,
    pub flips_applied: usize,
    pub samples: Option<TimeSeries>,
    #[serde(skip)]
    pub final_state: PureState,
    /// Largest deviation of the toggling-frame `⟨P_N⟩` from its value just
    /// after the first jump (0 when no jump or not monitored).
    pub parity_drift: f64,
    pub max_leakage: f64,
}

impl TrajectoryRecord {
    pub fn clicked(&self) -> bool {
        self.herald == Herald::Detected
    }
}

struct CompiledEvent {
    step: usize,
    op: SparseMatrix,
    is_flip: bool,
    skip_after_click: bool,
}

/// Precompiled unraveling of one model + schedule.
pub struct Simulator {
    layout: SpaceLayout,
    settings: TrajectorySettings,
    propagator: SparseMatrix,
    jumps: Vec<SparseMatrix>,
    events: Vec<CompiledEvent>,
    observables: Vec<(String, SparseMatrix)>,
    n_steps: usize,
    sample_steps: Option<usize>,
    forced_steps: Vec<usize>,
    parity_diag: Vec<f64>,
    flip_changes_parity: bool,
}

fn steps_of(t: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (t / dt).round();
    if k < 0.0 || (k * dt - t).abs() > TIME_EPS * t.abs().max(1.0) {
        return Err(Error::Schedule(format!("{what} {t} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

impl Simulator {
    pub fn new(
        model: &TrajectoryModel,
        events: &[TimedEvent],
        observables: &[(String, Operator)],
        settings: TrajectorySettings,
    ) -> Result<Self> {
        let layout = model.layout();
        if !(settings.dt > 0.0) || !(settings.t_m > 0.0) {
            return Err(Error::InvalidParameter("t_M and dt must be positive".into()));
        }
        if !(0.0..=1.0).contains(&settings.eta) {
            return Err(Error::InvalidParameter(format!("eta = {}", settings.eta)));
        }
        let n_steps = steps_of(settings.t_m, settings.dt, "t_M")?.max(1);
        let mut compiled = Vec::with_capacity(events.len());
        let mut last = 0usize;
        for e in events {
            if e.unitary.layout() != layout {
                return Err(Error::Schedule("event layout mismatch".into()));
            }
            if e.time < -TIME_EPS || e.time > settings.t_m * (1.0 + TIME_EPS) {
                return Err(Error::Schedule(format!("event at {} outside [0, t_M]", e.time)));
            }
            let step = steps_of(e.time, settings.dt, "event time")?;
            if step < last {
                return Err(Error::Schedule("events are not time-ordered".into()));
            }
            last = step;
            compiled.push(CompiledEvent {
                step,
                op: e.unitary.sparse(),
                is_flip: e.is_flip,
                skip_after_click: e.skip_after_click,
            });
        }
        let sample_steps = match settings.sample_every {
            Some(s) => Some(steps_of(s, settings.dt, "sample interval")?.max(1)),
            None => None,
        };
        let mut forced_steps = Vec::new();
        for &t in &settings.forced_jumps {
            let k = steps_of(t, settings.dt, "forced jump time")?;
            if k > n_steps {
                return Err(Error::Schedule(format!("forced jump at {t} outside [0, t_M]")));
            }
            if forced_steps.last().is_some_and(|&p| p >= k) {
                return Err(Error::Schedule("forced jumps must be strictly increasing".into()));
            }
            forced_steps.push(k);
        }
        let gen = model.effective_generator() * C64::new(0.0, -settings.dt);
        let propagator = SparseMatrix::from_dense(&linalg::expm(&gen));
        let n_q = layout.n_qubits();
        let b = layout.block_size();
        let parity_diag = (0..layout.dim())
            .map(|i| BasisIndex::new(i / b, n_q).expect("index in range").parity().sign())
            .collect();
        Ok(Simulator {
            layout,
            propagator,
            jumps: model.jumps.iter().map(|c| c.sparse()).collect(),
            events: compiled,
            observables: observables.iter().map(|(n, o)| (n.clone(), o.sparse())).collect(),
            n_steps,
            sample_steps,
            forced_steps,
            parity_diag,
            flip_changes_parity: n_q % 2 == 1,
            settings,
        })
    }

    pub fn layout(&self) -> SpaceLayout {
        self.layout
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn leakage(&self, psi: &[C64]) -> f64 {
        let l = self.layout;
        if l.fock_cutoff() < 3 {
            return 0.0;
        }
        let dl = l.detector_levels().max(1);
        let mut leak = 0.0;
        for q in 0..l.qubit_dim() {
            for n in l.fock_cutoff() - 2..l.fock_cutoff() {
                for d in 0..dl {
                    leak += psi[l.index(q, n, d)].norm_sqr();
                }
            }
        }
        leak
    }

    fn parity(&self, psi: &[C64], flips: usize) -> f64 {
        let p: f64 = psi.iter().zip(&self.parity_diag).map(|(a, s)| s * a.norm_sqr()).sum();
        if self.flip_changes_parity && flips % 2 == 1 {
            -p
        } else {
            p
        }
    }

    fn sample(&self, t: f64, psi: &[C64], jumps: usize, series: &mut TimeSeries) {
        let mut row: Vec<f64> =
            self.observables.iter().map(|(_, o)| o.expectation(psi).re).collect();
        row.push(jumps as f64);
        series.push(t, row);
    }

    /// One trajectory from `psi0` with the given seed.
    pub fn run(&self, psi0: &PureState, seed: u64) -> Result<TrajectoryRecord> {
        if psi0.layout() != self.layout {
            return Err(Error::DimensionMismatch { expected: self.layout.dim(), got: psi0.layout().dim() });
        }
        let n0 = psi0.norm();
        if (n0 - 1.0).abs() > 1e-10 {
            return Err(Error::Unnormalized(n0));
        }
        let dt = self.settings.dt;
        let dim = self.layout.dim();
        let mut psi: Vec<C64> = psi0.amplitudes().as_slice().to_vec();
        let mut buf = vec![C64::new(0.0, 0.0); dim];
        let mut rng = StepRng::new(seed);
        let mut jumps: Vec<JumpRecord> = Vec::new();
        let mut click_time = None;
        let mut flips = 0usize;
        let mut ev = 0usize;
        let mut forced = 0usize;
        let mut parity_ref: Option<f64> = None;
        let mut drift = 0.0f64;
        let mut max_leak = 0.0f64;
        let mut series = self.sample_steps.map(|_| {
            let mut names: Vec<String> = self.observables.iter().map(|(n, _)| n.clone()).collect();
            names.push("jumps".into());
            TimeSeries::new(names)
        });

        let apply_events = |step: usize,
                                ev: &mut usize,
                                psi: &mut Vec<C64>,
                                buf: &mut Vec<C64>,
                                flips: &mut usize,
                                clicked: bool|
         -> bool {
            let mut any = false;
            while *ev < self.events.len() && self.events[*ev].step == step {
                let e = &self.events[*ev];
                *ev += 1;
                if clicked && e.skip_after_click {
                    continue;
                }
                e.op.matvec_into(psi, buf);
                std::mem::swap(psi, buf);
                if e.is_flip {
                    *flips += 1;
                }
                any = true;
            }
            any
        };

        if apply_events(0, &mut ev, &mut psi, &mut buf, &mut flips, false) && self.settings.check_leakage {
            max_leak = max_leak.max(self.leakage(&psi));
        }
        if self.forced_steps.first() == Some(&0) {
            forced += 1;
            buf.copy_from_slice(&psi);
            jumps.push(self.jump_into(&buf, &mut psi, true, 0.5, 0.0)?);
            click_time = Some(0.0);
        }
        if let Some(s) = series.as_mut() {
            self.sample(0.0, &psi, jumps.len(), s);
        }

        for k in 0..self.n_steps {
            self.propagator.matvec_into(&psi, &mut buf);
            let norm2 = linalg::norm_sqr(&buf);
            let step_end = k + 1;
            let t_end = step_end as f64 * dt;
            let mut jump: Option<(bool, f64)> = None;
            if self.settings.forced_jumps.is_empty() {
                let p = 1.0 - norm2;
                if p > JUMP_GUARD {
                    return Err(Error::StepGuard(format!(
                        "jump probability {p:.4} per step exceeds {JUMP_GUARD} at t = {t_end}"
                    )));
                }
                let mut draws = rng.step(k as u64);
                if draws.uniform() < p {
                    let pick = draws.uniform();
                    let detected = draws.uniform() < self.settings.eta;
                    jump = Some((detected, pick));
                }
            } else if forced < self.forced_steps.len() && self.forced_steps[forced] == step_end {
                forced += 1;
                jump = Some((true, 0.5));
            }
            match jump {
                None => {
                    if !(norm2 > 0.0) {
                        return Err(Error::ZeroBranch);
                    }
                    let inv = 1.0 / norm2.sqrt();
                    for (p, b) in psi.iter_mut().zip(&buf) {
                        *p = b * inv;
                    }
                }
                Some((detected, pick)) => {
                    let rec = self.jump_into(&buf, &mut psi, detected, pick, t_end)?;
                    if detected && click_time.is_none() {
                        click_time = Some(t_end);
                    }
                    jumps.push(rec);
                }
            }
            let had_events =
                apply_events(step_end, &mut ev, &mut psi, &mut buf, &mut flips, click_time.is_some());
            if self.settings.check_leakage && (had_events || step_end == self.n_steps) {
                let leak = self.leakage(&psi);
                max_leak = max_leak.max(leak);
                if leak > hilbert_leak_limit() {
                    return Err(Error::TruncationLeak { leakage: leak, time: t_end });
                }
            }
            if self.settings.monitor_parity && !jumps.is_empty() {
                let p = self.parity(&psi, flips);
                match parity_ref {
                    None => parity_ref = Some(p),
                    Some(r) => drift = drift.max((p - r).abs()),
                }
            }
            if let (Some(s), Some(every)) = (series.as_mut(), self.sample_steps) {
                if step_end % every == 0 || step_end == self.n_steps {
                    self.sample(t_end, &psi, jumps.len(), s);
                }
            }
        }
        let herald = if click_time.is_some() { Herald::Detected } else { Herald::NoClick };
        Ok(TrajectoryRecord {
            seed,
            jumps,
            herald,
            click_time,
            flips_applied: flips,
            samples: series,
            final_state: PureState::new(self.layout, CVector::from_vec(psi))?,
            parity_drift: drift,
            max_leakage: max_leak,
        })
    }

    /// Picks the jump channel with weight `‖cₖψ‖²`; `scratch` is clobbered.
    /// Applies a jump to the unnormalized `buf`, leaving the normalized
    /// result in `psi`.
    fn jump_into(&self, buf: &[C64], psi: &mut Vec<C64>, detected: bool, pick: f64, time: f64) -> Result<JumpRecord> {
        let pre = if self.settings.snapshots {
            Some(PureState::normalized(self.layout, CVector::from_vec(buf.to_vec()))?)
        } else {
            None
        };
        let channel = self.choose_channel(buf, pick, psi);
        self.jumps[channel].matvec_into(buf, psi);
        let n = linalg::norm_sqr(psi).sqrt();
        if !(n > 0.0) {
            return Err(Error::ZeroNormJump);
        }
        for p in psi.iter_mut() {
            *p /= n;
        }
        let post = if self.settings.snapshots {
            Some(PureState::new(self.layout, CVector::from_vec(psi.clone()))?)
        } else {
            None
        };
        Ok(JumpRecord { time, detected, channel, pre_jump_state: pre, post_jump_state: post })
    }

    fn choose_channel(&self, psi: &[C64], pick: f64, scratch: &mut [C64]) -> usize {
        if self.jumps.len() == 1 {
            return 0;
        }
        let weights: Vec<f64> = self
            .jumps
            .iter()
            .map(|c| {
                c.matvec_into(psi, scratch);
                linalg::norm_sqr(scratch)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w / total;
            if pick < acc {
                return i;
            }
        }
        weights.len() - 1
    }

    /// `M` trajectories; trajectory `i` uses seed `base_seed ⊕ i`. Runs on the
    /// current rayon pool; results do not depend on the worker count.
    pub fn ensemble(&self, psi0: &PureState, m: usize, base_seed: u64) -> Result<EnsembleResult> {
        if m == 0 {
            return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
        }
        let records = (0..m as u64)
            .into_par_iter()
            .map(|i| self.run(psi0, trajectory_seed(base_seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleResult::from_records(records))
    }
}

fn hilbert_leak_limit() -> f64 {
    crate::solver::LEAKAGE_LIMIT
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub m: usize,
    pub clicks: usize,
    pub click_fraction: f64,
    /// Binomial standard error of the click fraction.
    pub click_stderr: f64,
    /// Per-time mean of each sampled observable, when sampling was on.
    pub mean_series: Option<TimeSeries>,
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleResult {
    pub fn from_records(records: Vec<TrajectoryRecord>) -> Self {
        let m = records.len();
        let clicks = records.iter().filter(|r| r.clicked()).count();
        let f = clicks as f64 / m as f64;
        let mean_series = records.first().and_then(|r| r.samples.as_ref()).map(|first| {
            let mut mean = TimeSeries::new(first.names.clone());
            for (i, &t) in first.times.iter().enumerate() {
                let mut row = vec![0.0; first.names.len()];
                for r in &records {
                    let s = r.samples.as_ref().expect("all trajectories sampled alike");
                    for (acc, v) in row.iter_mut().zip(&s.rows[i]) {
                        *acc += v;
                    }
                }
                for v in &mut row {
                    *v /= m as f64;
                }
                mean.push(t, row);
            }
            mean
        });
        EnsembleResult {
            m,
            clicks,
            click_fraction: f,
            click_stderr: (f * (1.0 - f) / m as f64).sqrt(),
            mean_series,
            records,
        }
    }

    /// `(1/M) Σ |ψᵢ⟩⟨ψᵢ|` over final states.
    pub fn final_density(&self) -> DensityMatrix {
        let layout = self.records[0].final_state.layout();
        let d = layout.dim();
        let mut rho = CMatrix::zeros(d, d);
        for r in &self.records {
            let v = r.final_state.amplitudes();
            rho += v * v.adjoint();
        }
        rho *= C64::new(1.0 / self.m as f64, 0.0);
        DensityMatrix::from_layout(layout, rho).expect("shape from layout")
    }

    pub fn max_parity_drift(&self) -> f64 {
        self.records.iter().map(|r| r.parity_drift).fold(0.0, f64::max)
    }
}

/// Single trajectory (see [`Simulator::run`]).
pub fn sample_trajectory(
    psi0: &PureState,
    model: &TrajectoryModel,
    events: &[TimedEvent],
    settings: TrajectorySettings,
    seed: u64,
) -> Result<TrajectoryRecord> {
    Simulator::new(model, events, &[], settings)?.run(psi0, seed)
}

/// Ensemble of `m` trajectories with seeds `base_seed ⊕ i`.
pub fn ensemble_run(
    psi0: &PureState,
    model: &TrajectoryModel,
    events: &[TimedEvent],
    observables: &[(String, Operator)],
    settings: TrajectorySettings,
    m: usize,
    base_seed: u64,
) -> Result<EnsembleResult> {
    Simulator::new(model, events, observables, settings)?.ensemble(psi0, m, base_seed)
}

fn number_diag(layout: SpaceLayout) -> Vec<f64> {
    (0..layout.dim()).map(|i| layout.split(i).1 as f64).collect()
}

/// No-jump update `exp[(−iH − (κ_eff/2)a†a)dt]` followed by renormalization.
pub fn step_no_jump(psi: &PureState, h: &Operator, kappa_eff: f64, dt: f64) -> Result<PureState> {
    let l = psi.layout();
    if h.layout() != l {
        return Err(Error::DimensionMismatch { expected: l.dim(), got: h.layout().dim() });
    }
    let n = number_diag(l);
    let mean_n: f64 =
        psi.amplitudes().iter().zip(&n).map(|(a, m)| a.norm_sqr() * m).sum::<f64>();
    if kappa_eff * dt * mean_n > JUMP_GUARD {
        return Err(Error::StepGuard(format!(
            "κ_eff·dt·⟨a†a⟩ = {:.4} exceeds {JUMP_GUARD}",
            kappa_eff * dt * mean_n
        )));
    }
    let mut k = h.data() * C64::new(0.0, -dt);
    for (i, m) in n.iter().enumerate() {
        k[(i, i)] -= C64::new(0.5 * kappa_eff * m * dt, 0.0);
    }
    let out = linalg::expm(&k) * psi.amplitudes();
    PureState::normalized(l, out)
}

/// Applies `a` and renormalizes.
pub fn apply_jump(psi: &PureState) -> Result<PureState> {
    let a = model::cavity_annihilation(psi.layout())?;
    let v = a.apply(psi);
    if v.norm() == 0.0 {
        return Err(Error::ZeroNormJump);
    }
    PureState::normalized(psi.layout(), v)
}

/// Closed-form conditional state right after a photon loss at `t_J` from an
/// encoded state whose bright branch carries `bright_parity` (frame rotating
/// at ω_c, effective model): components `cₙ e^{−iΔₙt_J}` of the bright
/// parity with cavity amplitude `α e^{−(iΔₙ + κ_eff/2)t_J}`.
pub fn predict_post_jump_state(
    qubit_state: &CVector,
    alpha: C64,
    bright_parity: Parity,
    kappa_eff: f64,
    t_j: f64,
    params: &SystemParams,
) -> Result<PureState> {
    let l = params.layout;
    if qubit_state.len() != l.qubit_dim() {
        return Err(Error::DimensionMismatch { expected: l.qubit_dim(), got: qubit_state.len() });
    }
    let bright = model::project_qubits(qubit_state, bright_parity);
    if bright.norm() == 0.0 {
        return Err(Error::ZeroBranch);
    }
    let det = usize::from(l.has_detector());
    let mut v = CVector::zeros(l.dim());
    for q in 0..l.qubit_dim() {
        if bright[q] == C64::new(0.0, 0.0) {
            continue;
        }
        let delta = model::dispersive_shift(BasisIndex::new(q, l.n_qubits())?, params);
        let phase = C64::from_polar(1.0, -delta * t_j);
        let amp = alpha * phase * (-0.5 * kappa_eff * t_j).exp();
        let cav = hilbert::coherent_state(amp, l.fock_cutoff())?;
        for n in 0..l.fock_cutoff() {
            v[l.index(q, n, det)] = bright[q] * phase * cav[n];
        }
    }
    PureState::normalized(l, v)
}

/// `min_φ ‖a − e^{iφ}b‖` for unit vectors.
pub fn phase_aligned_distance(a: &CVector, b: &CVector) -> f64 {
    let ov = linalg::inner(b, a);
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
    (a - b * phase).norm()
}
