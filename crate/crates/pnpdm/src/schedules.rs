//! Scalar schedules: the coupling annealing ρ_k and the diffusion-time
//! schedules s(t), σ(t) with their discretization grids.

use crate::error::{Error, Result};

/// VP noise schedule curvature, fixed by the DDPM parameterization.
pub const VP_BETA_D: f64 = 19.9;
/// VP noise schedule offset.
pub const VP_BETA_MIN: f64 = 0.1;

/// Exponentially decaying coupling strength with a floor:
/// ρ_k = max(α^k ρ₀, ρ_min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSchedule {
    pub rho0: f64,
    pub rho_min: f64,
    pub alpha: f64,
}

impl CouplingSchedule {
    pub fn new(rho0: f64, rho_min: f64, alpha: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho_min > 0.0) {
            return Err(Error::InvalidParameter(
                "coupling levels must be positive".into(),
            ));
        }
        if rho_min > rho0 {
            return Err(Error::InvalidParameter(format!(
                "rho_min ({rho_min}) exceeds rho0 ({rho0})"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self { rho0, rho_min, alpha })
    }

    /// ρ_k = max(α^k ρ₀, ρ_min)
    pub fn rho(&self, k: usize) -> f64 {
        (self.alpha.powi(k as i32) * self.rho0).max(self.rho_min)
    }
}

/// σ_VP(t) = √(exp(½ β_d t² + β_min t) − 1) for t ∈ [0, 1].
pub fn sigma_vp(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("sigma_vp: t={t} outside [0, 1]")));
    }
    Ok((0.5 * VP_BETA_D * t * t + VP_BETA_MIN * t).exp_m1().sqrt())
}

/// Closed-form inverse of `sigma_vp` via the quadratic in t.
pub fn sigma_vp_inverse(sigma: f64) -> Result<f64> {
    if sigma < 0.0 {
        return Err(Error::Domain(format!("sigma_vp_inverse: sigma={sigma} < 0")));
    }
    // ½ β_d t² + β_min t = ln(σ² + 1)
    let c = (sigma * sigma).ln_1p();
    let disc = VP_BETA_MIN * VP_BETA_MIN + 2.0 * VP_BETA_D * c;
    Ok((-VP_BETA_MIN + disc.sqrt()) / VP_BETA_D)
}

/// Diffusion process family in the scale/noise parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleFamily {
    /// s(t) = 1, σ(t) = t
    Edm,
    /// s(t) = 1, σ(t) = √t
    Ve,
    /// σ(t) = σ_VP(t), s(t) = 1/√(σ_VP(t)² + 1)
    Vp,
}

/// Schedule values at a single time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEval {
    pub scale: f64,
    pub sigma: f64,
    pub scale_dot: f64,
    pub sigma_dot: f64,
}

/// A diffusion-time schedule: family plus the σ-space discretization grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub family: ScheduleFamily,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Number of positive grid levels; the grid has `steps + 1` times with
    /// t_N = 0 appended.
    pub steps: usize,
}

impl DiffusionSchedule {
    pub const DEFAULT_SIGMA_MIN: f64 = 0.002;
    pub const DEFAULT_SIGMA_MAX: f64 = 80.0;
    pub const DEFAULT_STEPS: usize = 100;

    /// Exponent of the polynomial σ-space grid.
    const GRID_EXPONENT: f64 = 7.0;

    pub fn new(family: ScheduleFamily, sigma_min: f64, sigma_max: f64, steps: usize) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_max > sigma_min) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        if family == ScheduleFamily::Vp {
            let sigma_cap = sigma_vp(1.0)?;
            if sigma_max > sigma_cap {
                return Err(Error::InvalidParameter(format!(
                    "VP schedule caps at sigma={sigma_cap:.4}, got sigma_max={sigma_max}"
                )));
            }
        }
        Ok(Self { family, sigma_min, sigma_max, steps })
    }

    pub fn with_defaults(family: ScheduleFamily) -> Self {
        Self::new(
            family,
            Self::DEFAULT_SIGMA_MIN,
            Self::DEFAULT_SIGMA_MAX,
            Self::DEFAULT_STEPS,
        )
        .expect("defaults are valid")
    }

    /// (s, σ, ṡ, σ̇) at time t. VE derivatives diverge at t = 0; callers
    /// must only evaluate derivatives at interior grid times.
    pub fn eval(&self, t: f64) -> Result<ScheduleEval> {
        if t < 0.0 {
            return Err(Error::Domain(format!("schedule time t={t} < 0")));
        }
        match self.family {
            ScheduleFamily::Edm => Ok(ScheduleEval {
                scale: 1.0,
                sigma: t,
                scale_dot: 0.0,
                sigma_dot: 1.0,
            }),
            ScheduleFamily::Ve => {
                if t == 0.0 {
                    return Err(Error::Domain(
                        "VE derivative diverges at t = 0".into(),
                    ));
                }
                let sqrt_t = t.sqrt();
                Ok(ScheduleEval {
                    scale: 1.0,
                    sigma: sqrt_t,
                    scale_dot: 0.0,
                    sigma_dot: 0.5 / sqrt_t,
                })
            }
            ScheduleFamily::Vp => {
                let sigma = sigma_vp(t)?;
                let scale = 1.0 / (sigma * sigma + 1.0).sqrt();
                // E := exp(½ β_d t² + β_min t) = σ² + 1
                let e = sigma * sigma + 1.0;
                let rate = VP_BETA_D * t + VP_BETA_MIN;
                let sigma_dot = if sigma == 0.0 {
                    // limit t→0 of E·rate/(2σ): σ ~ √(β_min t), σ̇ → ∞ for
                    // βmin > 0; t = 0 itself is only reached with σ = 0
                    // where the chain never queries the derivative.
                    f64::INFINITY
                } else {
                    e * rate / (2.0 * sigma)
                };
                let scale_dot = -0.5 * rate * scale;
                Ok(ScheduleEval { scale, sigma, scale_dot, sigma_dot })
            }
        }
    }

    /// σ(t) without derivatives; valid at t = 0 for every family.
    pub fn sigma(&self, t: f64) -> f64 {
        match self.family {
            ScheduleFamily::Edm => t,
            ScheduleFamily::Ve => t.sqrt(),
            ScheduleFamily::Vp => sigma_vp(t).expect("grid time within VP range"),
        }
    }

    /// t with σ(t) = sigma, in closed form per family.
    pub fn sigma_inverse(&self, sigma: f64) -> Result<f64> {
        if sigma < 0.0 {
            return Err(Error::Domain(format!("sigma_inverse: sigma={sigma} < 0")));
        }
        match self.family {
            ScheduleFamily::Edm => Ok(sigma),
            ScheduleFamily::Ve => Ok(sigma * sigma),
            ScheduleFamily::Vp => sigma_vp_inverse(sigma),
        }
    }

    /// Discretization times t_0 > t_1 > ... > t_N = 0. The positive levels
    /// follow the polynomial-in-i σ-space grid
    /// σ_i = (σ_max^{1/7} + (i/(N−1))(σ_min^{1/7} − σ_max^{1/7}))^7
    /// mapped through σ⁻¹ per family; t_N = 0 is appended exactly.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.steps;
        let inv = 1.0 / Self::GRID_EXPONENT;
        let hi = self.sigma_max.powf(inv);
        let lo = self.sigma_min.powf(inv);
        let mut grid = Vec::with_capacity(n + 1);
        for i in 0..n {
            let frac = i as f64 / (n - 1) as f64;
            let sigma = (hi + frac * (lo - hi)).powf(Self::GRID_EXPONENT);
            grid.push(self.sigma_inverse(sigma).expect("grid sigma in range"));
        }
        grid.push(0.0);
        grid
    }
}

/// Smallest index i with σ(t_i) ≤ ρ. Returns `grid.len() - 1` (the terminal
/// zero) when ρ is below every positive level, which degenerates the prior
/// step to the identity.
pub fn start_index(schedule: &DiffusionSchedule, grid: &[f64], rho: f64) -> usize {
    grid.iter()
        .position(|&t| schedule.sigma(t) <= rho)
        .unwrap_or(grid.len() - 1)
}
