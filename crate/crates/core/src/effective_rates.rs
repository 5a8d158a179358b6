//! Analytics of the overdamped CBJJ acting as a photon counter: the closed
//! three-state block `|n+1, 1⟩, |n, 2⟩, |n, 0⟩`, its Laplace poles, and the
//! effective cavity decay rates.
//!
//! The Laplace transform of the block equations gives
//! `ρ₂₂(s) = 2Ω²(s + κ/2) / Q(s)` with
//! `Q(s) = s(s + κ)[(s + κ/2)² + Δ²] + 4Ω²(s + κ/2)²`,
//! whose four roots are the poles s₀…s₃.

use serde::Serialize;

use crate::model::SystemParams;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CbjjBlockParams {
    pub n: usize,
    /// `Ω_n = g_J √(n+1)`.
    pub omega_n: f64,
    pub delta: f64,
    pub kappa_j: f64,
}

impl CbjjBlockParams {
    pub fn new(g_j: f64, n: usize, delta: f64, kappa_j: f64) -> Result<Self> {
        Self::from_omega(g_j * ((n + 1) as f64).sqrt(), delta, kappa_j).map(|mut p| {
            p.n = n;
            p
        })
    }

    /// Block with a given `Ω_n` directly (`n` recorded as 0).
    pub fn from_omega(omega_n: f64, delta: f64, kappa_j: f64) -> Result<Self> {
        if !(omega_n >= 0.0) || !(kappa_j > 0.0) || !delta.is_finite() || !omega_n.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "block parameters Ω = {omega_n}, Δ = {delta}, κ_J = {kappa_j}"
            )));
        }
        Ok(CbjjBlockParams { n: 0, omega_n, delta, kappa_j })
    }

    /// Dominant-pole regime `Ω_n ≤ 0.1 κ_J`.
    pub fn overdamped(&self) -> bool {
        self.omega_n <= 0.1 * self.kappa_j
    }

    /// Leading-order block decay rate `4Ω_n²/κ_J`.
    pub fn leading_rate(&self) -> f64 {
        4.0 * self.omega_n * self.omega_n / self.kappa_j
    }
}

/// State of the block: populations and the coherence `ρ₁₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockState {
    pub rho11: f64,
    pub rho22: f64,
    pub rho00: f64,
    pub rho12: C64,
}

/// `[ρ₁₁, ρ₂₂, ρ₀₀, ρ₁₂ᴿ, ρ₁₂ᴵ]` derivative.
fn block_rhs(p: &CbjjBlockParams, y: &[f64; 5]) -> [f64; 5] {
    let (om, k, d) = (p.omega_n, p.kappa_j, p.delta);
    let [r11, r22, _r00, re, im] = *y;
    [
        -2.0 * om * im,
        2.0 * om * im - k * r22,
        k * r22,
        -0.5 * k * re + d * im,
        -om * (r22 - r11) - 0.5 * k * im - d * re,
    ]
}

/// One classical RK4 step for a fixed-size real system.
pub fn rk4_step_fixed<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    y: &mut [f64; N],
    h: f64,
) {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    for i in 0..N {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn block_step(p: &CbjjBlockParams) -> f64 {
    let fastest = p.kappa_j.max(p.omega_n).max(p.delta.abs());
    0.05 / fastest
}

fn to_state(y: &[f64; 5]) -> BlockState {
    BlockState { rho11: y[0], rho22: y[1], rho00: y[2], rho12: C64::new(y[3], y[4]) }
}

/// Integrates the block equations from `ρ₁₁(0) = 1` up to `t` with RK4 at
/// `κ_J dt ≤ 0.05`.
pub fn cbjj_block_ode_solve(p: &CbjjBlockParams, t: f64) -> Result<BlockState> {
    Ok(*cbjj_block_ode_series(p, &[t])?.last().expect("one time requested"))
}

/// Block state at each of the (nondecreasing) `times`, from one integration.
pub fn cbjj_block_ode_series(p: &CbjjBlockParams, times: &[f64]) -> Result<Vec<BlockState>> {
    let mut y = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut now = 0.0;
    let h_max = block_step(p);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= now) {
            return Err(Error::InvalidParameter(format!("times must be nondecreasing and ≥ 0, got {t}")));
        }
        let span = t - now;
        if span > 0.0 {
            let steps = (span / h_max).ceil() as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                rk4_step_fixed(|y| block_rhs(p, y), &mut y, h);
            }
        }
        now = t;
        out.push(to_state(&y));
    }
    Ok(out)
}

/// Which closed form of `ρ₀₀` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedForm {
    /// `1 − e^{s₀ t}` with the dominant pole s₀.
    Full,
    /// `1 − exp[−(4Ω²t/κ_J)(1 − (Δ/κ_J)²)]`.
    Approximate,
    /// `1 − exp[−(4Ω²t/κ_J)(1 − 4(Δ/κ_J)²)]`.
    ApproximateExpanded,
}

pub fn rho00_closed_form(p: &CbjjBlockParams, t: f64, variant: ClosedForm) -> f64 {
    let rate = match variant {
        ClosedForm::Full => -laplace_poles(p)[0].re,
        ClosedForm::Approximate => p.leading_rate() * (1.0 - (p.delta / p.kappa_j).powi(2)),
        ClosedForm::ApproximateExpanded => {
            p.leading_rate() * (1.0 - 4.0 * (p.delta / p.kappa_j).powi(2))
        }
    };
    (1.0 - (-rate * t).exp()).clamp(0.0, 1.0)
}

/// The four poles in the printed order; s₀ is the dominant (slowest) one.
pub fn laplace_poles(p: &CbjjBlockParams) -> [C64; 4] {
    let (om, k, d) = (p.omega_n, p.kappa_j, p.delta);
    let om2 = om * om;
    let a = 16.0 * om2 + k * k + 4.0 * d * d;
    let inner = C64::new(a * a - 64.0 * om2 * k * k, 0.0).sqrt();
    let base = C64::new(-16.0 * om2 + k * k - 4.0 * d * d, 0.0);
    let plus = (base + inner).sqrt() / std::f64::consts::SQRT_2;
    let minus = (base - inner).sqrt() / std::f64::consts::SQRT_2;
    let kk = C64::new(k, 0.0);
    [(plus - kk) * 0.5, (-minus - kk) * 0.5, (minus - kk) * 0.5, (-plus - kk) * 0.5]
}

/// `Q(s)`.
pub fn pole_polynomial(p: &CbjjBlockParams, s: C64) -> C64 {
    let (om, k, d) = (p.omega_n, p.kappa_j, p.delta);
    let h = s + k / 2.0;
    s * (s + k) * (h * h + d * d) + h * h * (4.0 * om * om)
}

/// Residue-sum reconstruction of `(ρ₂₂(t), ρ₀₀(t))`.
pub fn residue_sum(p: &CbjjBlockParams, t: f64) -> (f64, f64) {
    let (om, k) = (p.omega_n, p.kappa_j);
    let c = 2.0 * om * om;
    if om == 0.0 {
        return (0.0, 0.0);
    }
    let poles = laplace_poles(p);
    let mut r22 = C64::new(0.0, 0.0);
    let mut r00 = C64::new(0.0, 0.0);
    // Δ → 0: s₁ = s₂ = −κ/2 cancels against the numerator
    let degenerate = p.delta.abs() <= 1e-9 * k;
    let set: Vec<C64> = if degenerate { vec![poles[0], poles[1], poles[3]] } else { poles.to_vec() };
    for (i, &s) in set.iter().enumerate() {
        let mut deriv = C64::new(1.0, 0.0);
        for (j, &q) in set.iter().enumerate() {
            if i != j {
                deriv *= s - q;
            }
        }
        let num = if degenerate { C64::new(c, 0.0) } else { (s + k / 2.0) * c };
        let res = num / deriv;
        r22 += res * (s * t).exp();
        r00 += res * k * ((s * t).exp() - 1.0) / s;
    }
    (r22.re, r00.re)
}

/// Effective decay rate with the validity flags of its derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub value: f64,
    /// Adiabatic-elimination regime holds (`Ω_n̄ ≤ 0.1 κ_J`).
    pub overdamped: bool,
    /// `|Δ| < κ_J/2`, inside the expansion's range.
    pub in_expansion_range: bool,
    /// `|α|² ≥ 1`, where `n + 1 → n̄` is reasonable.
    pub large_amplitude: bool,
}

/// `4g_J²(|α|² + 1)/κ_J · (1 − 4Δ²/κ_J²)`, clamped at zero.
pub fn kappa_eff_cbjj(params: &SystemParams, delta: f64) -> RateEstimate {
    let nbar = params.mean_photons();
    let k = params.kappa_j;
    let factor = 1.0 - 4.0 * delta * delta / (k * k);
    RateEstimate {
        value: (4.0 * params.g_j * params.g_j * (nbar + 1.0) / k * factor).max(0.0),
        overdamped: params.regime().overdamped,
        in_expansion_range: 2.0 * delta.abs() < k,
        large_amplitude: nbar >= 1.0,
    }
}

/// Leading-order cavity decay rate `4g_J²/κ_J`.
pub fn kappa_eff_cav(params: &SystemParams) -> RateEstimate {
    RateEstimate {
        value: 4.0 * params.g_j * params.g_j / params.kappa_j,
        overdamped: params.regime().overdamped,
        in_expansion_range: true,
        large_amplitude: params.mean_photons() >= 1.0,
    }
}

/// Approximate `ρ₀₀` averaged over a Poisson photon-number distribution of
/// mean `nbar`; the block with `m` photons has `Ω² = g_J² m`.
pub fn poisson_averaged_rho00(nbar: f64, g_j: f64, kappa_j: f64, delta: f64, t: f64) -> f64 {
    let mut acc = 0.0;
    let mut weight = (-nbar).exp();
    let m_max = (nbar + 12.0 * nbar.sqrt() + 30.0) as usize;
    for m in 0..=m_max {
        if m > 0 {
            weight *= nbar / m as f64;
            let p = CbjjBlockParams { n: m - 1, omega_n: g_j * (m as f64).sqrt(), delta, kappa_j };
            acc += weight * rho00_closed_form(&p, t, ClosedForm::Approximate);
        }
    }
    acc
}

/// Approximate `ρ₀₀` with the `n + 1 → n̄` replacement.
pub fn mean_photon_rho00(nbar: f64, g_j: f64, kappa_j: f64, delta: f64, t: f64) -> f64 {
    let p = CbjjBlockParams { n: 0, omega_n: g_j * nbar.sqrt(), delta, kappa_j };
    rho00_closed_form(&p, t, ClosedForm::Approximate)
}
