//! The scalar flow `u' = h(u)` with `h: ℝ → [1/2, 1]`.
//!
//! With `H(u) = ∫₀ᵘ ds/h(s)` the flow is `X(t,s)x = H⁻¹(t − s + H(x))`.
//! `H` is tabulated by the cumulative trapezoid rule on the lattice `du·ℤ`
//! and extended linearly between nodes. The piecewise-linear `H̃` is itself
//! a strictly increasing bijection with slopes in `[1, 2]`, so the family
//! built from it satisfies the cocycle law exactly (up to rounding), not
//! just to discretization order.
//!
//! The flow is nonexpansive only when `h` is nonincreasing: in general the
//! ratio `|X x − X y| / |x − y|` equals `h(X x)/h(x)` in the limit and lies
//! in `[1/2, 2]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{check_time_order, EvolutionFamily, FamilyKind, Growth, OMEGA_FLOOR};
use crate::state::State;

/// Named choices of `h`, all with values in `[1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum HPreset {
    Constant {
        value: f64,
    },
    /// `clamp(intercept + slope·u, 1/2, 1)`.
    AffineClip {
        intercept: f64,
        slope: f64,
    },
    /// `clamp(center + amplitude·sin(frequency·u), 1/2, 1)`.
    SinClip {
        center: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// `3/4 − (1/4) sin(π/2 · clamp(u/width, −1, 1))`, decreasing from 1 to 1/2.
    SinStep {
        width: f64,
    },
}

impl HPreset {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            HPreset::Constant { value } => value,
            HPreset::AffineClip { intercept, slope } => (intercept + slope * u).clamp(0.5, 1.0),
            HPreset::SinClip { center, amplitude, frequency } => {
                (center + amplitude * (frequency * u).sin()).clamp(0.5, 1.0)
            }
            HPreset::SinStep { width } => {
                let z = (u / width).clamp(-1.0, 1.0);
                0.75 - 0.25 * (std::f64::consts::FRAC_PI_2 * z).sin()
            }
        }
    }

    /// Whether `h` is nonincreasing, which makes the flow nonexpansive.
    pub fn is_nonincreasing(&self) -> bool {
        match *self {
            HPreset::Constant { .. } => true,
            HPreset::AffineClip { slope, .. } => slope <= 0.0,
            HPreset::SinClip { amplitude, frequency, .. } => amplitude == 0.0 || frequency == 0.0,
            HPreset::SinStep { width } => width > 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            HPreset::Constant { value } => (0.5..=1.0).contains(&value),
            HPreset::AffineClip { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            HPreset::SinClip { center, amplitude, frequency } => {
                center.is_finite() && amplitude.is_finite() && frequency.is_finite()
            }
            HPreset::SinStep { width } => width > 0.0 && width.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("h preset does not map into [1/2, 1]: {self:?}")))
        }
    }
}

/// Default lattice spacing of the `H` table.
pub const DEFAULT_DU: f64 = 1e-3;
/// Default half-width of the tabulated span `[-L, L]`.
pub const DEFAULT_TABLE_HALF_WIDTH: f64 = 50.0;
pub const DEFAULT_INVERSION_TOL: f64 = 1e-12;

/// `h` together with a tabulated `H` and its inverse.
#[derive(Debug, Clone)]
pub struct ScalarFieldH {
    pub h: HPreset,
    pub du: f64,
    pub inversion_tol: f64,
    /// Node index of `table[0]`, i.e. `table[i] = H̃((i + first)·du)`.
    first: i64,
    table: Vec<f64>,
}

impl ScalarFieldH {
    pub fn new(h: HPreset) -> Result<Self> {
        Self::with_table(h, DEFAULT_DU, DEFAULT_TABLE_HALF_WIDTH, DEFAULT_INVERSION_TOL)
    }

    pub fn with_table(h: HPreset, du: f64, half_width: f64, inversion_tol: f64) -> Result<Self> {
        h.validate()?;
        if !(du > 0.0 && half_width > 0.0 && inversion_tol > 0.0) {
            return Err(Error::Domain("table spacing, span and tolerance must be positive".into()));
        }
        let k = (half_width / du).ceil() as i64;
        let mut field = ScalarFieldH { h, du, inversion_tol, first: -k, table: Vec::new() };
        let mut up = vec![0.0];
        for i in 0..k {
            up.push(up[i as usize] + field.slope(i) * du);
        }
        let mut down = vec![0.0];
        for i in 0..k {
            down.push(down[i as usize] - field.slope(-i - 1) * du);
        }
        let mut table: Vec<f64> = down.into_iter().skip(1).rev().collect();
        table.extend(up);
        if let Some(bad) = (-k..=k).map(|i| h.eval(i as f64 * du)).find(|v| !(0.5..=1.0).contains(v)) {
            return Err(Error::Domain(format!("h left [1/2, 1]: found {bad}")));
        }
        field.table = table;
        Ok(field)
    }

    pub fn h(&self, u: f64) -> f64 {
        self.h.eval(u)
    }

    /// Slope of `H̃` on `[k du, (k+1) du]`: trapezoid average of `1/h`.
    fn slope(&self, k: i64) -> f64 {
        let du = self.du;
        0.5 * (1.0 / self.h.eval(k as f64 * du) + 1.0 / self.h.eval((k + 1) as f64 * du))
    }

    fn last(&self) -> i64 {
        self.first + self.table.len() as i64 - 1
    }

    /// `H̃(k du)`, walking past the table ends when needed.
    fn node(&self, k: i64) -> f64 {
        if k < self.first {
            let mut v = self.table[0];
            for j in (k..self.first).rev() {
                v -= self.slope(j) * self.du;
            }
            v
        } else if k > self.last() {
            let mut v = *self.table.last().expect("nonempty table");
            for j in self.last()..k {
                v += self.slope(j) * self.du;
            }
            v
        } else {
            self.table[(k - self.first) as usize]
        }
    }

    /// `H̃(u)`.
    pub fn big_h(&self, u: f64) -> f64 {
        let k = (u / self.du).floor() as i64;
        self.node(k) + (u - k as f64 * self.du) * self.slope(k)
    }

    /// `H̃⁻¹(y)`: locate the lattice cell by binary search (or by walking
    /// beyond the table) and solve the linear piece exactly.
    pub fn big_h_inv(&self, y: f64) -> f64 {
        let k = if y < self.table[0] {
            let mut k = self.first;
            let mut v = self.table[0];
            while v > y {
                k -= 1;
                v -= self.slope(k) * self.du;
            }
            k
        } else if y >= *self.table.last().expect("nonempty table") {
            let mut k = self.last();
            let mut v = *self.table.last().expect("nonempty table");
            loop {
                let next = v + self.slope(k) * self.du;
                if next > y {
                    break k;
                }
                v = next;
                k += 1;
            }
        } else {
            // Largest index with table[i] <= y.
            let i = self.table.partition_point(|v| *v <= y) - 1;
            i as i64 + self.first
        };
        let base = self.node(k);
        k as f64 * self.du + (y - base) / self.slope(k)
    }

    /// Declared Lipschitz bound of the flow: 1 for nonincreasing `h`, else 2.
    pub fn declared_m(&self) -> f64 {
        if self.h.is_nonincreasing() {
            1.0
        } else {
            2.0
        }
    }
}

/// `X(t,s)x = H̃⁻¹(t − s + H̃(x))`.
#[derive(Debug, Clone)]
pub struct Example21Family {
    pub field: Arc<ScalarFieldH>,
}

pub fn example21_family(field: ScalarFieldH) -> Example21Family {
    Example21Family { field: Arc::new(field) }
}

impl EvolutionFamily for Example21Family {
    fn dim(&self) -> usize {
        1
    }

    fn growth(&self) -> Growth {
        Growth { m: self.field.declared_m(), omega: OMEGA_FLOOR }
    }

    fn kind(&self) -> FamilyKind {
        FamilyKind::Nonlinear
    }

    fn evaluate(&self, t: f64, s: f64, x: &[f64]) -> Result<State> {
        check_time_order(t, s)?;
        if t == s {
            return Ok(x.to_vec());
        }
        let f = &self.field;
        Ok(vec![f.big_h_inv(t - s + f.big_h(x[0]))])
    }
}
