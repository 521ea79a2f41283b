//! The prior step: sampling x from exp(−g(x) − ‖x − z‖²/(2ρ²)) by running
//! the reverse diffusion SDE (or probability-flow ODE) from the grid level
//! matching σ(t*) = ρ down to t = 0 with a pluggable denoiser.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::denoiser::Denoiser;
use crate::error::Result;
use crate::schedules::{start_index, DiffusionSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Sde,
    Ode,
}

impl Solver {
    /// Score multiplier λ in the Euler drift: 2 for the SDE, 1 for the ODE.
    fn lambda(self) -> f64 {
        match self {
            Solver::Sde => 2.0,
            Solver::Ode => 1.0,
        }
    }
}

pub struct PriorStep {
    schedule: DiffusionSchedule,
    solver: Solver,
    grid: Vec<f64>,
}

/// Result of one prior step, flagging the degenerate identity case.
pub struct PriorStepOutcome {
    pub x: DVector<f64>,
    /// ρ fell below every positive grid level; output is z unchanged.
    pub degenerate: bool,
    /// ρ exceeded σ(t_0); initialization clamped to the top of the grid.
    pub clamped: bool,
}

impl PriorStep {
    pub fn new(schedule: DiffusionSchedule, solver: Solver) -> Self {
        let grid = schedule.time_grid();
        Self { schedule, solver, grid }
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn solver(&self) -> Solver {
        self.solver
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Integration times for a given ρ: the grid tail below ρ, preceded by
    /// the exact start t* = σ⁻¹(ρ) whenever the first grid level
    /// undershoots ρ. Starting below ρ would systematically under-diffuse,
    /// biasing the denoising posterior toward z.
    fn step_times(&self, rho: f64) -> Result<Vec<f64>> {
        let i_star = start_index(&self.schedule, &self.grid, rho);
        if i_star == self.grid.len() - 1 {
            return Ok(Vec::new());
        }
        let mut times = Vec::with_capacity(self.grid.len() - i_star + 1);
        if i_star == 0 {
            if self.schedule.sigma(self.grid[0]) < rho {
                log::warn!(
                    "prior step: rho={rho} above the maximum grid level; starting at sigma={}",
                    self.schedule.sigma(self.grid[0])
                );
            }
        } else if self.schedule.sigma(self.grid[i_star]) < rho * (1.0 - 1e-12) {
            times.push(self.schedule.sigma_inverse(rho)?);
        }
        times.extend_from_slice(&self.grid[i_star..]);
        Ok(times)
    }

    /// One draw from the denoising posterior at noise level ρ.
    pub fn sample(
        &self,
        denoiser: &dyn Denoiser,
        z: &DVector<f64>,
        rho: f64,
        rng: &mut impl Rng,
    ) -> Result<PriorStepOutcome> {
        let times = self.step_times(rho)?;
        if times.is_empty() {
            log::warn!("prior step: rho={rho} below all grid levels; returning z unchanged");
            return Ok(PriorStepOutcome { x: z.clone(), degenerate: true, clamped: false });
        }
        let clamped = self.schedule.sigma(times[0]) < rho * (1.0 - 1e-12);
        let lambda = self.solver.lambda();
        let start = self.schedule.eval(times[0])?;
        let mut v = z * start.scale;
        for (step, pair) in times.windows(2).enumerate() {
            let (t, t_next) = (pair[0], pair[1]);
            let e = self.schedule.eval(t)?;
            let denoised = denoiser.denoise(&(&v / e.scale), e.sigma)?;
            let rate = lambda * e.sigma_dot / e.sigma;
            let drift = &v * (rate + e.scale_dot / e.scale) - denoised * (rate * e.scale);
            v += drift * (t_next - t);
            let last = step + 2 == times.len();
            if self.solver == Solver::Sde && !last {
                // diffusion coefficient evaluated at the left endpoint
                let amp = e.scale * (2.0 * e.sigma_dot * e.sigma * (t - t_next)).sqrt();
                let eps = DVector::from_fn(v.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                v += eps * amp;
            }
        }
        Ok(PriorStepOutcome { x: v, degenerate: false, clamped })
    }
}
