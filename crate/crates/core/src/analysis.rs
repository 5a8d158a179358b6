//! Observables, fidelities and the statistics reported by the experiments.

use serde::Serialize;

use crate::hilbert::{self, DensityMatrix, Operator, SpaceLayout};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::{self, BasisIndex};
use crate::{Error, Result, C64};

/// Named Hermitian observables on one layout.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    pub layout: SpaceLayout,
    pub entries: Vec<(String, Operator)>,
}

fn correlator(local: &CMatrix, l: SpaceLayout) -> Result<Operator> {
    Ok(hilbert::embed(local, 0, l)?.mul(&hilbert::embed(local, 1, l)?))
}

impl ObservableSet {
    /// `xx`, `yy` (qubits 1 and 2), `n`, `parity`, detector populations
    /// `rho00`/`rho11`/`rho22` when present, and `logical_z` for three qubits.
    pub fn standard(layout: SpaceLayout) -> Result<Self> {
        let mut entries = Vec::new();
        if layout.n_qubits() >= 2 {
            entries.push(("xx".to_string(), correlator(&hilbert::sigma_x(), layout)?));
            entries.push(("yy".to_string(), correlator(&hilbert::sigma_y(), layout)?));
        }
        entries.push(("n".to_string(), model::number_operator(layout)?));
        let all: Vec<usize> = (0..layout.n_qubits()).collect();
        entries.push(("parity".to_string(), hilbert::parity_operator(layout, &all)?));
        if layout.has_detector() {
            for level in 0..3 {
                entries.push((format!("rho{level}{level}"), model::detector_population(layout, level)?));
            }
        }
        if layout.n_qubits() == 3 {
            entries.push(("logical_z".to_string(), logical_z_operator(layout)?));
        }
        Ok(ObservableSet { layout, entries })
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Operator> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, o)| o)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.entries.iter().map(|(_, o)| o.hermiticity_defect()).fold(0.0, f64::max)
    }
}

/// `|egg⟩⟨egg| − |eee⟩⟨eee|` on the qubits.
pub fn logical_z_operator(layout: SpaceLayout) -> Result<Operator> {
    if layout.n_qubits() != 3 {
        return Err(Error::InvalidParameter("logical Z needs exactly three qubits".into()));
    }
    let egg = BasisIndex::from_label("egg")?.value();
    let eee = BasisIndex::from_label("eee")?.value();
    let b = layout.block_size();
    let mut m = CMatrix::zeros(layout.dim(), layout.dim());
    for k in 0..b {
        m[(egg * b + k, egg * b + k)] = C64::new(1.0, 0.0);
        m[(eee * b + k, eee * b + k)] = C64::new(-1.0, 0.0);
    }
    Operator::new(layout, m)
}

/// `⟨ref|ρ|ref⟩` for a qubit density matrix and a normalized reference.
pub fn qubit_fidelity(measured: &DensityMatrix, reference: &CVector) -> Result<f64> {
    if measured.dim() != reference.len() {
        return Err(Error::DimensionMismatch { expected: measured.dim(), got: reference.len() });
    }
    let v = measured.data() * reference;
    Ok(linalg::inner(reference, &v).re.clamp(0.0, 1.0))
}

/// Sample mean and its standard error (0 for fewer than two samples).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevivalReport {
    pub period: f64,
    pub times: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

/// Revival peaks of `⟨σˣσˣ⟩² + ⟨σʸσʸ⟩²`: the maximum inside each window
/// `[(k − ½)T, (k + ½)T]`, `T = π/(2χ)`, `k ≥ 1`, that fits in the series.
/// Amplitudes are `√((x² + y²)/2)`, so `(|gg⟩ + |ee⟩)/√2` has amplitude 1.
pub fn revival_diagnostics(times: &[f64], xx: &[f64], yy: &[f64], chi: f64) -> Result<RevivalReport> {
    if times.len() != xx.len() || times.len() != yy.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: xx.len().min(yy.len()) });
    }
    if !(chi.abs() > 0.0) {
        return Err(Error::InvalidParameter("revivals need chi != 0".into()));
    }
    let period = std::f64::consts::PI / (2.0 * chi.abs());
    if times.len() < 2 {
        return Err(Error::Undersampled("fewer than two samples".into()));
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if period / step < 20.0 {
        return Err(Error::Undersampled(format!(
            "{:.1} samples per revival period, need 20",
            period / step
        )));
    }
    let amp: Vec<f64> = xx.iter().zip(yy).map(|(x, y)| x * x + y * y).collect();
    let t_end = times[times.len() - 1];
    let mut report = RevivalReport { period, times: Vec::new(), amplitudes: Vec::new() };
    let mut k = 1;
    while (k as f64 + 0.5) * period <= t_end + 1e-12 {
        let lo = (k as f64 - 0.5) * period;
        let hi = (k as f64 + 0.5) * period;
        let best = (0..times.len())
            .filter(|&i| times[i] >= lo && times[i] <= hi)
            .max_by(|&a, &b| amp[a].total_cmp(&amp[b]));
        if let Some(i) = best {
            report.times.push(times[i]);
            report.amplitudes.push((amp[i] / 2.0).sqrt());
        }
        k += 1;
    }
    Ok(report)
}

/// Correlators after a photon loss at `t_J` as stated for the phase kick:
/// `(cos 2χt_J, sin 2χt_J)`.
pub fn kick_values(t_j: f64, chi: f64) -> (f64, f64) {
    let th = 2.0 * chi * t_j;
    (th.cos(), th.sin())
}

/// Relative phase that a loss at `t_J` imprints between `|gg⟩` and `|ee⟩`
/// for two qubits with equal `χ` (`Δ_gg − Δ_ee = −4χ`). At revival times
/// `⟨σˣσˣ⟩ = cos θ` and `⟨σʸσʸ⟩ = −cos θ`.
pub fn bell_kick_angle(t_j: f64, chi: f64) -> f64 {
    4.0 * chi * t_j
}

/// Herald counts of one ensemble plus what must match for a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeraldSummary {
    pub m: usize,
    pub clicks: usize,
    pub t_m: f64,
    pub eta: f64,
    pub schedule_signature: String,
}

impl HeraldSummary {
    pub fn missed(&self) -> f64 {
        1.0 - self.clicks as f64 / self.m as f64
    }

    pub fn missed_stderr(&self) -> f64 {
        let p = self.missed();
        (p * (1.0 - p) / self.m as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub missed_bright: f64,
    pub missed_bright_se: f64,
    pub missed_dark: f64,
    pub missed_dark_se: f64,
    pub bias: f64,
    pub bias_se: f64,
}

pub fn bias_statistics(bright: &HeraldSummary, dark: &HeraldSummary) -> Result<BiasReport> {
    if (bright.t_m - dark.t_m).abs() > 1e-12 * bright.t_m.abs().max(1.0)
        || bright.eta != dark.eta
        || bright.schedule_signature != dark.schedule_signature
    {
        return Err(Error::MismatchedConfig(
            "bright and dark runs must share t_M, eta and the schedule".into(),
        ));
    }
    let (b, d) = (bright.missed(), dark.missed());
    let (sb, sd) = (bright.missed_stderr(), dark.missed_stderr());
    Ok(BiasReport {
        missed_bright: b,
        missed_bright_se: sb,
        missed_dark: d,
        missed_dark_se: sd,
        bias: (b - d).abs(),
        bias_se: (sb * sb + sd * sd).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpShift {
    /// Value right after the jump minus value right before it.
    pub shift: f64,
    /// Median absolute change between consecutive samples away from the jump.
    pub noise_floor: f64,
    pub resolvable: bool,
}

/// Change of a sampled series across `t_J`, flagged when it exceeds five
/// times the inter-sample noise floor.
pub fn jump_shift(times: &[f64], values: &[f64], t_j: f64) -> Result<JumpShift> {
    if times.len() != values.len() || times.len() < 4 {
        return Err(Error::InvalidParameter("series too short or misaligned".into()));
    }
    let tol = 1e-9 * t_j.abs().max(1.0);
    let after = times
        .iter()
        .position(|&t| t >= t_j - tol)
        .filter(|&i| i > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("t_J = {t_j} not inside the series")))?;
    let before = after - 1;
    let shift = values[after] - values[before];
    let mut diffs: Vec<f64> = (1..values.len())
        .filter(|&i| i != after)
        .map(|i| (values[i] - values[i - 1]).abs())
        .collect();
    diffs.sort_by(f64::total_cmp);
    let noise_floor = diffs[diffs.len() / 2];
    Ok(JumpShift { shift, noise_floor, resolvable: shift.abs() > 5.0 * noise_floor })
}

/// Indices `i` where `|x[i] − x[i−1]|` exceeds five times the median step.
pub fn detect_discontinuities(values: &[f64]) -> Vec<usize> {
    if values.len() < 3 {
        return Vec::new();
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 5.0 * floor && **d > 0.0)
        .map(|(i, _)| i + 1)
        .collect()
}
