//! Flat `key = value [unit]` experiment configs, `key=value` overrides and
//! qubit-state expressions.
//!
//! ```text
//! # comment
//! experiment = table1
//! g          = 10 MHz
//! deltas     = 10, 10, 20 MHz
//! taus       = 25, 12.5, 25 ns
//! qubit_state = (gg + ee)/sqrt2
//! ```
//!
//! Rates are stored in rad/µs and times in µs. `MHz` is read as rad/µs and
//! `GHz` as 10³ rad/µs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::linalg::CVector;
use crate::model::{BasisIndex, Parity};
use crate::output::content_hash;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Experiment {
    Revival,
    Kick,
    Table1,
    Bias,
    Validate,
    AppendixB,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "revival" => Experiment::Revival,
            "kick" => Experiment::Kick,
            "table1" => Experiment::Table1,
            "bias" => Experiment::Bias,
            "validate" => Experiment::Validate,
            "appendix-b" => Experiment::AppendixB,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Revival => "revival",
            Experiment::Kick => "kick",
            Experiment::Table1 => "table1",
            Experiment::Bias => "bias",
            Experiment::Validate => "validate",
            Experiment::AppendixB => "appendix-b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    Full,
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rate,
    Time,
    Pure,
    Text,
}

const KEYS: &[(&str, Kind)] = &[
    ("experiment", Kind::Text),
    ("model", Kind::Text),
    ("n_qubits", Kind::Pure),
    ("chi", Kind::Rate),
    ("delta_total", Kind::Rate),
    ("deltas", Kind::Rate),
    ("g", Kind::Rate),
    ("kappa_j", Kind::Rate),
    ("kappa_eff", Kind::Rate),
    ("omega_c", Kind::Rate),
    ("omega_12", Kind::Rate),
    ("omega_20", Kind::Rate),
    ("alpha", Kind::Pure),
    ("nbar", Kind::Pure),
    ("tau", Kind::Time),
    ("taus", Kind::Time),
    ("t_m", Kind::Time),
    ("t_end", Kind::Time),
    ("sample_every", Kind::Time),
    ("forced_jump", Kind::Time),
    ("swap_divisors", Kind::Pure),
    ("eta", Kind::Pure),
    ("trajectories", Kind::Pure),
    ("seed", Kind::Pure),
    ("dt", Kind::Time),
    ("steps_per_tau", Kind::Pure),
    ("fock_cutoff", Kind::Pure),
    ("workers", Kind::Pure),
    ("out", Kind::Text),
    ("qubit_state", Kind::Text),
    ("bright_parity", Kind::Text),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

fn unit_scale(kind: Kind, unit: &str) -> Option<f64> {
    match (kind, unit) {
        (Kind::Rate, "rad/us" | "MHz") => Some(1.0),
        (Kind::Rate, "rad/ns" | "GHz") => Some(1e3),
        (Kind::Time, "us") => Some(1.0),
        (Kind::Time, "ns") => Some(1e-3),
        (Kind::Pure, "1") => Some(1.0),
        _ => None,
    }
}

fn kind_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Rate => "a rate (rad/us, rad/ns, MHz, GHz)",
        Kind::Time => "a time (us, ns)",
        Kind::Pure => "a plain number",
        Kind::Text => "text",
    }
}

/// Numbers with an optional trailing unit, comma separated.
fn parse_numbers(value: &str, kind: Kind) -> std::result::Result<Vec<f64>, String> {
    let value = value.trim();
    let (body, unit) = match value.rsplit_once(char::is_whitespace) {
        Some((b, u)) if u.parse::<f64>().is_err() && !u.ends_with(',') => (b.trim(), Some(u)),
        _ => (value, None),
    };
    let scale = match unit {
        Some(u) => unit_scale(kind, u).ok_or_else(|| format!("unit '{u}' is not {}", kind_name(kind)))?,
        None if kind == Kind::Pure => 1.0,
        None => return Err(format!("missing unit, expected {}", kind_name(kind))),
    };
    if body.is_empty() {
        return Err("missing value".into());
    }
    body.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(|x| x * scale)
                .ok_or_else(|| format!("'{t}' is not a finite number"))
        })
        .collect()
}

/// Raw key/value text keyed by name, with the line each came from
/// (0 for overrides).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigSource {
    entries: BTreeMap<String, (usize, String)>,
    text: String,
}

/// Splits `key = value`, rejecting unknown keys.
fn split_entry(line: &str, line_no: usize, sep: char) -> Result<(String, String)> {
    let err = |message: String| Error::Config { line: line_no, message };
    let (k, v) = line.split_once(sep).ok_or_else(|| err(format!("expected 'key {sep} value'")))?;
    let k = k.trim();
    let v = v.trim();
    if kind_of(k).is_none() {
        return Err(err(format!("unknown key '{k}'")));
    }
    if v.is_empty() {
        return Err(err(format!("empty value for '{k}'")));
    }
    Ok((k.to_string(), v.to_string()))
}

impl ConfigSource {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_entry(line, i + 1, '=')?;
            if entries.insert(k.clone(), (i + 1, v)).is_some() {
                return Err(Error::Config { line: i + 1, message: format!("duplicate key '{k}'") });
            }
        }
        Ok(ConfigSource { entries, text: text.to_string() })
    }

    /// Applies `key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = parse_override(spec)?;
        self.text.push_str(&format!("\n# override {k} = {v}"));
        self.entries.insert(k, (0, v));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// SHA-256 of the config text with overrides appended.
    pub fn hash(&self) -> String {
        content_hash(&self.text)
    }
}

/// Parses one `key=value` override.
pub fn parse_override(spec: &str) -> Result<(String, String)> {
    if spec.contains('\n') {
        return Err(Error::Config { line: 0, message: "override must be a single line".into() });
    }
    split_entry(spec.trim(), 0, '=')
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub n_qubits: usize,
    pub chi: Option<f64>,
    pub deltas: Vec<f64>,
    pub g: f64,
    pub kappa_j: f64,
    pub kappa_eff: Option<f64>,
    pub omega_c: f64,
    pub omega_12: Option<f64>,
    pub omega_20: Option<f64>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub taus: Vec<f64>,
    pub t_m: Option<f64>,
    pub t_end: Option<f64>,
    pub sample_every: Option<f64>,
    pub forced_jump: Option<f64>,
    pub swap_divisors: Vec<usize>,
    pub eta: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    pub steps_per_tau: Option<usize>,
    pub fock_cutoff: usize,
    pub workers: Option<usize>,
    pub out: Option<String>,
    pub qubit_state: Option<String>,
    pub bright_parity: Parity,
    pub config_hash: String,
}

struct Reader<'a> {
    src: &'a ConfigSource,
}

impl Reader<'_> {
    fn err(&self, key: &str, message: String) -> Error {
        let line = self.src.entries.get(key).map(|(l, _)| *l).unwrap_or(0);
        Error::Config { line, message: format!("{key}: {message}") }
    }

    fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.src.get(key) else { return Ok(None) };
        let kind = kind_of(key).expect("known key");
        parse_numbers(v, kind).map(Some).map_err(|m| self.err(key, m))
    }

    fn scalar(&self, key: &str) -> Result<Option<f64>> {
        match self.numbers(key)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(_) => Err(self.err(key, "expected a single value".into())),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        let v = self.scalar(key)?;
        if let Some(x) = v {
            if !(x > 0.0) {
                return Err(self.err(key, format!("must be positive, got {x}")));
            }
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str, default: f64) -> Result<f64> {
        let x = self.scalar(key)?.unwrap_or(default);
        if x < 0.0 {
            return Err(self.err(key, format!("must be non-negative, got {x}")));
        }
        Ok(x)
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        match self.scalar(key)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 => Ok(Some(x as usize)),
            Some(x) => Err(self.err(key, format!("must be a non-negative integer, got {x}"))),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_source(&ConfigSource::parse(text)?)
    }

    pub fn from_source(src: &ConfigSource) -> Result<Self> {
        let r = Reader { src };
        let experiment = match src.get("experiment") {
            Some(s) => Experiment::parse(s).ok_or_else(|| r.err("experiment", format!("unknown experiment '{s}'")))?,
            None => return Err(Error::Config { line: 0, message: "missing key 'experiment'".into() }),
        };
        let model = match src.get("model").unwrap_or("full") {
            "full" => ModelKind::Full,
            "effective" => ModelKind::Effective,
            other => return Err(r.err("model", format!("expected 'full' or 'effective', got '{other}'"))),
        };
        let n_qubits = r.count("n_qubits")?.unwrap_or(2);
        if !(1..=8).contains(&n_qubits) {
            return Err(r.err("n_qubits", format!("must be in 1..=8, got {n_qubits}")));
        }
        let chi = match (r.scalar("chi")?, r.scalar("delta_total")?) {
            (Some(_), Some(_)) => return Err(r.err("delta_total", "give either chi or delta_total".into())),
            (Some(c), None) => Some(c),
            (None, Some(d)) => Some(d / n_qubits as f64),
            (None, None) => None,
        };
        let deltas = r.numbers("deltas")?.unwrap_or_default();
        let taus = r.numbers("taus")?.unwrap_or_default();
        if deltas.len() != taus.len() {
            return Err(r.err("taus", format!("{} taus for {} deltas", taus.len(), deltas.len())));
        }
        if taus.iter().any(|t| !(*t > 0.0)) {
            return Err(r.err("taus", "must be positive".into()));
        }
        let alpha = match (r.scalar("alpha")?, r.scalar("nbar")?) {
            (Some(_), Some(_)) => return Err(r.err("nbar", "give either alpha or nbar".into())),
            (Some(a), None) => Some(a),
            (None, Some(n)) if n >= 0.0 => Some(n.sqrt()),
            (None, Some(n)) => return Err(r.err("nbar", format!("must be non-negative, got {n}"))),
            (None, None) => None,
        };
        let swap_divisors = match r.numbers("swap_divisors")? {
            None => Vec::new(),
            Some(v) => v
                .iter()
                .map(|x| {
                    if *x >= 1.0 && x.fract() == 0.0 {
                        Ok(*x as usize)
                    } else {
                        Err(r.err("swap_divisors", format!("'{x}' is not a positive integer")))
                    }
                })
                .collect::<Result<_>>()?,
        };
        let eta = r.non_negative("eta", 1.0)?;
        if eta > 1.0 {
            return Err(r.err("eta", format!("must lie in [0, 1], got {eta}")));
        }
        let trajectories = r.count("trajectories")?.unwrap_or(1000);
        if trajectories == 0 {
            return Err(r.err("trajectories", "must be at least 1".into()));
        }
        let seed = match src.get("seed") {
            None => 0,
            Some(s) => s.trim().parse::<u64>().map_err(|e| r.err("seed", e.to_string()))?,
        };
        let fock_cutoff = r.count("fock_cutoff")?.unwrap_or(24);
        if fock_cutoff < 2 {
            return Err(r.err("fock_cutoff", "must be at least 2".into()));
        }
        let workers = r.count("workers")?;
        if workers == Some(0) {
            return Err(r.err("workers", "must be at least 1".into()));
        }
        let steps_per_tau = r.count("steps_per_tau")?;
        if steps_per_tau == Some(0) {
            return Err(r.err("steps_per_tau", "must be at least 1".into()));
        }
        let bright_parity = match src.get("bright_parity").unwrap_or("even") {
            "even" => Parity::Even,
            "odd" => Parity::Odd,
            other => return Err(r.err("bright_parity", format!("expected 'even' or 'odd', got '{other}'"))),
        };
        if let Some(q) = src.get("qubit_state") {
            parse_qubit_state(q, n_qubits).map_err(|e| r.err("qubit_state", e.to_string()))?;
        }
        Ok(ExperimentConfig {
            experiment,
            model,
            n_qubits,
            chi,
            deltas,
            g: r.non_negative("g", 0.0)?,
            kappa_j: r.non_negative("kappa_j", 0.0)?,
            kappa_eff: r.positive("kappa_eff")?,
            omega_c: r.scalar("omega_c")?.unwrap_or(0.0),
            omega_12: r.scalar("omega_12")?,
            omega_20: r.scalar("omega_20")?,
            alpha,
            tau: r.positive("tau")?,
            taus,
            t_m: r.positive("t_m")?,
            t_end: r.positive("t_end")?,
            sample_every: r.positive("sample_every")?,
            forced_jump: r.scalar("forced_jump")?.map(|t| {
                if t < 0.0 {
                    Err(r.err("forced_jump", format!("must be non-negative, got {t}")))
                } else {
                    Ok(t)
                }
            }).transpose()?,
            swap_divisors,
            eta,
            trajectories,
            seed,
            dt: r.positive("dt")?,
            steps_per_tau,
            fock_cutoff,
            workers,
            out: src.get("out").map(str::to_string),
            qubit_state: src.get("qubit_state").map(str::to_string),
            bright_parity,
            config_hash: src.hash(),
        })
    }

    /// Effective photon-loss rate: configured, else `4g²/κ_J`.
    pub fn kappa_eff(&self) -> Result<f64> {
        match self.kappa_eff {
            Some(k) => Ok(k),
            None if self.kappa_j > 0.0 && self.g > 0.0 => Ok(4.0 * self.g * self.g / self.kappa_j),
            None => Err(Error::InvalidParameter("kappa_eff needs kappa_eff or g and kappa_j".into())),
        }
    }

    pub fn require<T: Copy>(&self, value: Option<T>, key: &str) -> Result<T> {
        value.ok_or_else(|| Error::Config { line: 0, message: format!("missing key '{key}' for {}", self.experiment.as_str()) })
    }

    pub fn qubit_vector(&self) -> Result<Option<CVector>> {
        self.qubit_state.as_deref().map(|s| parse_qubit_state(s, self.n_qubits)).transpose()
    }
}

struct StateParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl StateParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, message: &str) -> Error {
        Error::InvalidParameter(format!("qubit state, column {}: {message}", self.pos + 1))
    }

    fn number(&mut self) -> Option<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.s.len() && matches!(self.s[self.pos], b'e' | b'E') {
            // exponent, not a qubit label: needs a digit or sign after it
            let next = self.s.get(self.pos + 1).copied();
            if start < self.pos && matches!(next, Some(b'0'..=b'9' | b'+' | b'-')) {
                self.pos += 2;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok().filter(|x: &f64| x.is_finite())
    }

    /// `number | number i | i | sqrt number`
    fn coefficient(&mut self) -> Result<Option<C64>> {
        if self.rest_starts_with(b"sqrt") {
            self.pos += 4;
            let x = self.number().ok_or_else(|| self.err("expected a number after sqrt"))?;
            return Ok(Some(C64::new(x.sqrt(), 0.0)));
        }
        let num = self.number();
        let imag = self.eat(b'i');
        Ok(match (num, imag) {
            (None, false) => None,
            (None, true) => Some(C64::new(0.0, 1.0)),
            (Some(x), false) => Some(C64::new(x, 0.0)),
            (Some(x), true) => Some(C64::new(0.0, x)),
        })
    }

    fn rest_starts_with(&mut self, p: &[u8]) -> bool {
        self.skip_ws();
        self.s[self.pos..].starts_with(p)
    }

    fn label(&mut self, n_qubits: usize) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && matches!(self.s[self.pos], b'e' | b'g') {
            self.pos += 1;
        }
        let label = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
        if label.len() != n_qubits {
            return Err(self.err(&format!("expected a {n_qubits}-letter label of e/g, got '{label}'")));
        }
        Ok(BasisIndex::from_label(label)?.value())
    }

    fn term(&mut self, n_qubits: usize, out: &mut CVector, sign: f64) -> Result<()> {
        let coef = self.coefficient()?.unwrap_or(C64::new(1.0, 0.0));
        self.eat(b'*');
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut inner = CVector::zeros(out.len());
            self.sum(n_qubits, &mut inner)?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            let div = self.divisor()?;
            *out += inner * (coef * sign / div);
            return Ok(());
        }
        let idx = self.label(n_qubits)?;
        let div = self.divisor()?;
        out[idx] += coef * sign / div;
        Ok(())
    }

    fn divisor(&mut self) -> Result<f64> {
        let mut d = 1.0;
        while self.eat(b'/') {
            let c = self.coefficient()?.ok_or_else(|| self.err("expected a divisor"))?;
            if c.im != 0.0 || c.re == 0.0 {
                return Err(self.err("divisor must be a nonzero real number"));
            }
            d *= c.re;
        }
        Ok(d)
    }

    fn sum(&mut self, n_qubits: usize, out: &mut CVector) -> Result<()> {
        let mut sign = if self.eat(b'-') { -1.0 } else { self.eat(b'+'); 1.0 };
        loop {
            self.term(n_qubits, out, sign)?;
            sign = match self.peek() {
                Some(b'+') => 1.0,
                Some(b'-') => -1.0,
                _ => return Ok(()),
            };
            self.pos += 1;
        }
    }
}

/// Parses a qubit-register state such as `(gg + ee)/sqrt2`, `0.6 eg - 0.8i ge`
/// or a bare label `egg`. Qubit 1 is the leftmost letter. The result is
/// normalized; a zero vector is an error.
pub fn parse_qubit_state(text: &str, n_qubits: usize) -> Result<CVector> {
    if !(1..=8).contains(&n_qubits) {
        return Err(Error::InvalidParameter(format!("n_qubits = {n_qubits}")));
    }
    if text.len() > 4096 {
        return Err(Error::InvalidParameter("qubit state expression too long".into()));
    }
    let mut p = StateParser { s: text.as_bytes(), pos: 0 };
    let mut v = CVector::zeros(1 << n_qubits);
    p.sum(n_qubits, &mut v)?;
    if p.peek().is_some() {
        return Err(p.err("unexpected trailing input"));
    }
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroBranch);
    }
    Ok(v.unscale(norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE: &str = "\
# rows of the fidelity table
experiment = table1
g = 10 MHz
kappa_j = 10 GHz
alpha = 2
deltas = 10, 10, 20 MHz
taus = 25, 12.5, 25 ns   # flip spacing
trajectories = 4000
seed = 2024
qubit_state = (gg + ee)/sqrt2
";

    #[test]
    fn parses_units_and_lists() {
        let c = ExperimentConfig::parse(TABLE).unwrap();
        assert_eq!(c.experiment, Experiment::Table1);
        assert_eq!(c.g, 10.0);
        assert_eq!(c.kappa_j, 1e4);
        assert!((c.kappa_eff().unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(c.deltas, vec![10.0, 10.0, 20.0]);
        assert!((c.taus[1] - 0.0125).abs() < 1e-15);
        assert_eq!(c.seed, 2024);
        assert_eq!(c.config_hash, content_hash(TABLE));
        let q = c.qubit_vector().unwrap().unwrap();
        assert!((q[0].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((q[3].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "experiment = table1\nfoo = 1",
            "experiment = table1\ng = 10",
            "experiment = table1\ng = 10 ns",
            "experiment = nope",
            "g = 10 MHz",
            "experiment = bias\neta = 1.5",
            "experiment = bias\nchi = 1 MHz\ndelta_total = 2 MHz",
            "experiment = bias\ndeltas = 1 MHz",
            "experiment = bias\nexperiment = kick",
            "experiment = bias\nqubit_state = gx",
            "experiment = bias\ntrajectories = 2.5",
            "experiment = bias\nnot a pair",
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config { .. })), "{text}");
        }
        match ExperimentConfig::parse("experiment = kick\n\n t_m = -3 us") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_replace_values_and_change_hash() {
        let mut src = ConfigSource::parse(TABLE).unwrap();
        let h0 = src.hash();
        src.apply_override("trajectories=10").unwrap();
        src.apply_override(" seed = 5 ").unwrap();
        let c = ExperimentConfig::from_source(&src).unwrap();
        assert_eq!(c.trajectories, 10);
        assert_eq!(c.seed, 5);
        assert_ne!(c.config_hash, h0);
        assert!(src.apply_override("bogus=1").is_err());
        assert!(src.apply_override("seed").is_err());
        assert_eq!(parse_override("tau=25 ns").unwrap(), ("tau".into(), "25 ns".into()));
    }

    #[test]
    fn delta_total_splits_evenly() {
        let c = ExperimentConfig::parse("experiment = bias\nn_qubits = 2\ndelta_total = 10 MHz").unwrap();
        assert_eq!(c.chi, Some(5.0));
        let c = ExperimentConfig::parse("experiment = bias\nnbar = 4").unwrap();
        assert_eq!(c.alpha, Some(2.0));
    }

    #[test]
    fn qubit_state_expressions() {
        let s = parse_qubit_state("0.6 eg - 0.8i ge", 2).unwrap();
        assert!((s[1] - C64::new(0.6, 0.0)).norm() < 1e-15);
        assert!((s[2] - C64::new(0.0, -0.8)).norm() < 1e-15);
        let s = parse_qubit_state("egg", 3).unwrap();
        assert_eq!(s[BasisIndex::from_label("egg").unwrap().value()], C64::new(1.0, 0.0));
        let a = parse_qubit_state("(egg + eee)/sqrt2", 3).unwrap();
        let b = parse_qubit_state("egg+eee", 3).unwrap();
        assert!((a - b).norm() < 1e-15);
        let c = parse_qubit_state("2*(gg - ee)/2 + 1e-3 eg", 2).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-15);
        for bad in ["", "gg + ee)", "g", "gg - gg", "gg / 0", "gg ++ ee", "(gg", "gx", "3"] {
            assert!(parse_qubit_state(bad, 2).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn parsers_never_panic(s in "\\PC{0,80}") {
            let _ = ConfigSource::parse(&s);
            let _ = ExperimentConfig::parse(&s);
            let _ = parse_override(&s);
            let _ = parse_qubit_state(&s, 2);
        }

        #[test]
        fn state_round_trip(re in proptest::collection::vec(-5.0f64..5.0, 4), im in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let labels = ["ee", "eg", "ge", "gg"];
            let want = CVector::from_fn(4, |k, _| C64::new(re[k], im[k]));
            prop_assume!(want.norm() > 1e-6);
            let expr: Vec<String> = labels.iter().enumerate().map(|(k, l)| format!("{} {l} + {}i {l}", re[k], im[k])).collect();
            let got = parse_qubit_state(&expr.join(" + ").replace("+ -", "- "), 2).unwrap();
            let want = want.unscale(want.norm());
            prop_assert!((got - want).norm() < 1e-12);
        }
    }
}
