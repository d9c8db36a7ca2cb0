//! Constitutive laws and the hypothesis validators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::nonlocal::Kernel;

/// Quartic double well `F(s) = (c4/4)(s^2 - 1)^2 + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Potential {
    pub c4: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Default for Potential {
    fn default() -> Self {
        Self {
            c4: 1.0,
            offset: 0.0,
        }
    }
}

impl Potential {
    pub fn new(c4: f64) -> Result<Self> {
        if !(c4 > 0.0 && c4.is_finite()) {
            return Err(Error::HypothesisViolation(format!(
                "potential coefficient c4 = {c4} must be positive"
            )));
        }
        Ok(Self { c4, offset: 0.0 })
    }

    pub fn f(&self, s: f64) -> f64 {
        let w = s * s - 1.0;
        0.25 * self.c4 * w * w + self.offset
    }

    pub fn d1(&self, s: f64) -> f64 {
        self.c4 * s * (s * s - 1.0)
    }

    pub fn d2(&self, s: f64) -> f64 {
        self.c4 * (3.0 * s * s - 1.0)
    }

    pub fn d3(&self, s: f64) -> f64 {
        6.0 * self.c4 * s
    }

    pub fn d4(&self, _s: f64) -> f64 {
        6.0 * self.c4
    }

    /// Lower bound of `F''` over the reals.
    pub fn min_d2(&self) -> f64 {
        -self.c4
    }

    pub fn apply(&self, phi: &ScalarField, which: usize) -> ScalarField {
        match which {
            0 => phi.map(|s| self.f(s)),
            1 => phi.map(|s| self.d1(s)),
            2 => phi.map(|s| self.d2(s)),
            3 => phi.map(|s| self.d3(s)),
            _ => phi.map(|s| self.d4(s)),
        }
    }
}

/// `nu(s) = mean + modulation * tanh(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Viscosity {
    pub mean: f64,
    pub modulation: f64,
    /// lower bound nu_1 claimed for the profile
    pub lower: f64,
    /// upper bound nu_2 claimed for the profile
    pub upper: f64,
}

impl Default for Viscosity {
    fn default() -> Self {
        Self {
            mean: 1.0,
            modulation: 0.5,
            lower: 0.4,
            upper: 1.6,
        }
    }
}

impl Viscosity {
    pub fn nu(&self, s: f64) -> f64 {
        self.mean + self.modulation * s.tanh()
    }

    pub fn d1(&self, s: f64) -> f64 {
        let c = s.cosh();
        self.modulation / (c * c)
    }

    pub fn d2(&self, s: f64) -> f64 {
        let c = s.cosh();
        -2.0 * self.modulation * s.tanh() / (c * c)
    }

    pub fn field(&self, phi: &ScalarField) -> ScalarField {
        phi.map(|s| self.nu(s))
    }

    pub fn d1_field(&self, phi: &ScalarField) -> ScalarField {
        phi.map(|s| self.d1(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConstants {
    /// coercivity margin in `F'' + a >= c1`
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub p: f64,
    pub r: f64,
}

impl Default for HypothesisConstants {
    fn default() -> Self {
        Self {
            c1: 0.1,
            c2: 1.0,
            c3: 1.0,
            c4: 8.0,
            c5: 1.0,
            p: 4.0,
            r: 4.0 / 3.0,
        }
    }
}

impl HypothesisConstants {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.c1, self.c2, self.c3, self.c4];
        if pos.iter().any(|c| !(*c > 0.0)) || !(self.c5 >= 0.0) {
            return Err(Error::HypothesisViolation(
                "constants c1..c4 must be positive and c5 nonnegative".into(),
            ));
        }
        if !(self.p > 2.0) || !(self.r > 1.0 && self.r <= 2.0) {
            return Err(Error::HypothesisViolation(format!(
                "need p > 2 and 1 < r <= 2, got p = {}, r = {}",
                self.p, self.r
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SampleRange {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            points: 10_000,
        }
    }
}

impl SampleRange {
    fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points.max(2);
        (0..n).map(move |k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64)
    }
}

/// One checked inequality; `margin = lhs - rhs` must stay nonnegative.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub worst_s: f64,
    pub worst_margin: f64,
}

impl ConditionCheck {
    fn sample(name: &str, range: &SampleRange, margin: impl Fn(f64) -> f64) -> Self {
        let (mut worst_s, mut worst) = (range.lo, f64::INFINITY);
        for s in range.samples() {
            let m = margin(s);
            if !(m >= worst) {
                worst = m;
                worst_s = s;
            }
        }
        Self {
            name: name.into(),
            passed: worst >= 0.0,
            worst_s,
            worst_margin: worst,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub interval: [f64; 2],
    pub a_min: Option<f64>,
    pub checks: Vec<ConditionCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Samples the three potential conditions on `range`, using `min_x a(x)`.
pub fn validate_h2(
    potential: &Potential,
    kernel: &Kernel,
    c: &HypothesisConstants,
    range: SampleRange,
) -> HypothesisReport {
    let a_min = kernel.a_field().min();
    let checks = vec![
        ConditionCheck::sample("coercivity F''(s) + a >= c1", &range, |s| {
            potential.d2(s) + a_min - c.c1
        }),
        ConditionCheck::sample("growth F''(s) + a >= c2|s|^(p-2) - c3", &range, |s| {
            potential.d2(s) + a_min - (c.c2 * s.abs().powf(c.p - 2.0) - c.c3)
        }),
        ConditionCheck::sample("|F'(s)|^r <= c4|F(s)| + c5", &range, |s| {
            c.c4 * potential.f(s).abs() + c.c5 - potential.d1(s).abs().powf(c.r)
        }),
    ];
    HypothesisReport {
        interval: [range.lo, range.hi],
        a_min: Some(a_min),
        checks,
    }
}

/// Viscosity bounds, analytically and by sampling.
pub fn validate_h3(nu: &Viscosity, range: SampleRange) -> HypothesisReport {
    let d = nu.modulation.abs();
    let analytic = |name: &str, margin: f64| ConditionCheck {
        name: name.into(),
        passed: margin >= 0.0,
        worst_s: f64::NAN,
        worst_margin: margin,
    };
    let checks = vec![
        analytic("positive lower bound nu_1 > 0", nu.lower),
        analytic("mean - |modulation| >= nu_1", nu.mean - d - nu.lower),
        analytic("mean + |modulation| <= nu_2", nu.upper - nu.mean - d),
        ConditionCheck::sample("nu(s) >= nu_1", &range, |s| nu.nu(s) - nu.lower),
        ConditionCheck::sample("nu(s) <= nu_2", &range, |s| nu.upper - nu.nu(s)),
    ];
    HypothesisReport {
        interval: [range.lo, range.hi],
        a_min: None,
        checks,
    }
}

/// `mu = a phi - K * phi + F'(phi)`
pub fn chemical_potential(
    phi: &ScalarField,
    kernel: &Kernel,
    potential: &Potential,
) -> Result<ScalarField> {
    let conv = kernel.convolve(phi)?;
    let a = kernel.a_field();
    Ok(ScalarField {
        grid: phi.grid,
        values: phi
            .values
            .iter()
            .zip(&a.values)
            .zip(&conv.values)
            .map(|((p, a), k)| a * p - k + potential.d1(*p))
            .collect(),
    })
}

/// `1/4 int int K(x-y)(phi(x)-phi(y))^2`, assembled as
/// `1/2 (a phi, phi) - 1/2 (K * phi, phi)`.
pub fn nonlocal_energy(phi: &ScalarField, kernel: &Kernel) -> Result<f64> {
    let conv = kernel.convolve(phi)?;
    let aphi = phi.mul(kernel.a_field());
    Ok(0.5 * aphi.inner(phi) - 0.5 * conv.inner(phi))
}

/// Nonlocal free energy plus `int F(phi)`.
pub fn free_energy(phi: &ScalarField, kernel: &Kernel, potential: &Potential) -> Result<f64> {
    Ok(nonlocal_energy(phi, kernel)? + potential.apply(phi, 0).integral())
}
