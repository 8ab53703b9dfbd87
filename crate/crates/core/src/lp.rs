//! Grid-based `Lᵖ` machinery.
//!
//! Functions on the half-line are represented by [`SampledSignal`]s on a
//! uniform grid. Integrals use the composite trapezoid rule; the `p = ∞`
//! norm is the maximum over grid nodes. Outside the sampled window a signal
//! is taken to be zero.
//!
//! `L₀^∞` (bounded functions vanishing at infinity) is operationalized
//! downstream as "tail maximum below a tolerance"; see
//! [`crate::stability::check_asymptotic`].

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::state::{self, State};

/// Default absolute tolerance for inequality checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// An integrability exponent `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else {
            Err(Error::Domain(format!("exponent must lie in [1, ∞], got {p}")))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    /// `1/p`, with `1/∞ = 0`.
    pub fn reciprocal(self) -> f64 {
        match self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinity => 0.0,
        }
    }

    /// Hölder conjugate `p'` with `1/p + 1/p' = 1`.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(1.0) => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    /// Orders exponents with `∞` as the largest element.
    pub fn le(self, other: Exponent) -> bool {
        match (self, other) {
            (_, Exponent::Infinity) => true,
            (Exponent::Infinity, Exponent::Finite(_)) => false,
            (Exponent::Finite(a), Exponent::Finite(b)) => a <= b,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            other => {
                let p: f64 = other.parse().map_err(|_| Error::Domain(format!("cannot parse exponent {s:?}")))?;
                Exponent::finite(p)
            }
        }
    }
}

// Finite exponents serialize as numbers, infinity as the string "inf".
impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => serializer.serialize_f64(*p),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Num(p) => Exponent::finite(p),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// A uniform time grid `start + k·dt`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub dt: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(start: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("grid step must be positive, got {dt}")));
        }
        if !(start >= 0.0) {
            return Err(Error::Domain(format!("grid start must be >= 0, got {start}")));
        }
        if len == 0 {
            return Err(Error::Domain("grid must have at least one node".into()));
        }
        Ok(Grid { start, dt, len })
    }

    /// Grid covering `[0, horizon]` with step `dt` (horizon rounded to a whole
    /// number of steps).
    pub fn span(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(Error::Domain(format!("horizon must be >= 0, got {horizon}")));
        }
        let steps = (horizon / dt).round() as usize;
        Grid::new(0.0, dt, steps + 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.time(k)).collect()
    }
}

/// A function `ℝ₊ → ℝⁿ` sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<State>,
}

impl SampledSignal {
    pub fn new(t0: f64, dt: f64, values: Vec<State>) -> Result<Self> {
        Grid::new(t0, dt, values.len())?;
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Domain("signal values have inconsistent dimensions".into()));
        }
        Ok(SampledSignal { t0, dt, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64) -> State) -> Self {
        let values = (0..grid.len).map(|k| f(grid.time(k))).collect();
        SampledSignal { t0: grid.start, dt: grid.dt, values }
    }

    pub fn from_scalar_fn(grid: Grid, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_fn(grid, |t| vec![f(t)])
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self::from_fn(grid, |_| state::zeros(dim))
    }

    pub fn grid(&self) -> Grid {
        Grid { start: self.t0, dt: self.dt, len: self.values.len() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid().times()
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// First component of every node; convenient for scalar signals.
    pub fn scalar_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }

    /// Pointwise norms `‖f(t_k)‖`.
    pub fn norms(&self) -> Vec<f64> {
        self.values.iter().map(|v| state::norm(v)).collect()
    }

    /// Linear interpolation between nodes; zero outside the sampled window.
    pub fn value_at(&self, t: f64) -> State {
        let n = self.len();
        let u = (t - self.t0) / self.dt;
        let eps = 1e-9;
        if u < -eps || u > (n - 1) as f64 + eps {
            return state::zeros(self.dim());
        }
        let u = u.clamp(0.0, (n - 1) as f64);
        let k = (u.floor() as usize).min(n - 1);
        let frac = u - k as f64;
        if k + 1 >= n || frac < 1e-12 {
            return self.values[k].clone();
        }
        self.values[k].iter().zip(&self.values[k + 1]).map(|(a, b)| a + frac * (b - a)).collect()
    }

    pub fn map(&self, mut f: impl FnMut(f64, &[f64]) -> State) -> Self {
        let values = self.values.iter().enumerate().map(|(k, v)| f(self.time(k), v)).collect();
        SampledSignal { t0: self.t0, dt: self.dt, values }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|_, v| state::scale(c, v))
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        let same = self.len() == other.len()
            && (self.t0 - other.t0).abs() <= 1e-12
            && (self.dt - other.dt).abs() <= 1e-15 * self.dt.max(1.0);
        if same && self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::Domain("signals live on different grids".into()))
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| state::sub(a, b)).collect();
        Ok(SampledSignal { t0: self.t0, dt: self.dt, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| state::add(a, b)).collect();
        Ok(SampledSignal { t0: self.t0, dt: self.dt, values })
    }

    /// Maximum pointwise distance to another signal on the same grid.
    pub fn max_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| state::distance(a, b)).fold(0.0, f64::max))
    }

    /// Multiplies by `χ_[a,b]` (node membership as in [`indicator`]).
    pub fn truncate(&self, a: f64, b: f64) -> Result<Self> {
        check_interval(a, b)?;
        let eps = 1e-9 * self.dt;
        Ok(self.map(|t, v| if t >= a - eps && t <= b + eps { v.to_vec() } else { state::zeros(v.len()) }))
    }

    /// Writes `t, v0, v1, ...` rows with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim()).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (k, v) in self.values.iter().enumerate() {
            let mut row = vec![format!("{}", self.time(k))];
            row.extend(v.iter().map(|x| format!("{x}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            let mut fields = record
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad number {s:?} in signal CSV"))));
            let t = fields.next().ok_or_else(|| Error::Domain("empty CSV row".into()))??;
            times.push(t);
            values.push(fields.collect::<Result<State>>()?);
        }
        if times.is_empty() {
            return Err(Error::Domain("signal CSV has no rows".into()));
        }
        let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        for (k, t) in times.iter().enumerate() {
            if (t - (times[0] + k as f64 * dt)).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(Error::Domain(format!("CSV row {k} is off the uniform grid")));
            }
        }
        SampledSignal::new(times[0], dt, values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a < 0.0 || a > b || !a.is_finite() || b.is_nan() {
        Err(Error::InvalidInterval { a, b })
    } else {
        Ok(())
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

fn lp_of_norms(norms: &[f64], dt: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => norms.iter().copied().fold(0.0, f64::max),
        Exponent::Finite(p) => {
            let powered: Vec<f64> = norms.iter().map(|v| v.powf(p)).collect();
            trapezoid(&powered, dt).powf(1.0 / p)
        }
    }
}

/// `‖f‖_p` over the sampled window.
pub fn lp_norm(f: &SampledSignal, p: Exponent) -> f64 {
    lp_of_norms(&f.norms(), f.dt, p)
}

/// `‖f − g‖_p` for signals on a common grid.
pub fn lp_distance(f: &SampledSignal, g: &SampledSignal, p: Exponent) -> Result<f64> {
    Ok(lp_norm(&f.sub(g)?, p))
}

/// `a_p(t) = t^{1-1/p}`, and `t` for `p = ∞`.
pub fn a_p(t: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => t,
        Exponent::Finite(p) => t.powf(1.0 - 1.0 / p),
    }
}

/// `b_p(t) = ‖χ_[0,t]‖_p = t^{1/p}`, and `1` for `p = ∞`.
pub fn b_p(t: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => 1.0,
        Exponent::Finite(p) => t.powf(1.0 / p),
    }
}

/// `amplitude · χ_[a,b]` sampled on `grid`.
pub fn indicator(a: f64, b: f64, amplitude: &[f64], grid: Grid) -> Result<SampledSignal> {
    check_interval(a, b)?;
    let eps = 1e-9 * grid.dt;
    Ok(SampledSignal::from_fn(grid, |t| {
        if t >= a - eps && t <= b + eps {
            amplitude.to_vec()
        } else {
            state::zeros(amplitude.len())
        }
    }))
}

/// `∫_a^b ‖f(s)‖ ds`, integrating the piecewise-linear interpolant of the
/// pointwise norms. The window is clipped to the sampled span.
pub fn window_integral(f: &SampledSignal, a: f64, b: f64) -> f64 {
    let norms = f.norms();
    let lo = a.max(f.t0);
    let hi = b.min(f.end_time());
    if !(hi > lo) {
        return 0.0;
    }
    let at = |t: f64| -> f64 {
        let u = ((t - f.t0) / f.dt).clamp(0.0, (norms.len() - 1) as f64);
        let k = (u.floor() as usize).min(norms.len() - 1);
        if k + 1 >= norms.len() {
            return norms[k];
        }
        let frac = u - k as f64;
        norms[k] + frac * (norms[k + 1] - norms[k])
    };
    // Interior nodes strictly inside (lo, hi).
    let first = ((lo - f.t0) / f.dt).floor() as usize + 1;
    let last = ((hi - f.t0) / f.dt).ceil() as usize;
    let mut knots = vec![(lo, at(lo))];
    for (k, &v) in norms.iter().enumerate().take(last).skip(first) {
        let t = f.time(k);
        if t > lo && t < hi {
            knots.push((t, v));
        }
    }
    knots.push((hi, at(hi)));
    knots.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// Both sides of `∫_{t0}^{t0+t} ‖f(s)‖ ds ≤ a_p(t) ‖f‖_p`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn truncation_bound_check(f: &SampledSignal, p: Exponent, t0: f64, t: f64, tol: f64) -> Result<TruncationCheck> {
    if !(t >= 0.0) || !(t0 >= 0.0) {
        return Err(Error::Domain(format!("need t, t0 >= 0, got t0 = {t0}, t = {t}")));
    }
    let lhs = window_integral(f, t0, t0 + t);
    let rhs = a_p(t, p) * lp_norm(f, p);
    Ok(TruncationCheck { lhs, rhs, holds: lhs <= rhs + tol })
}
