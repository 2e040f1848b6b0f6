//! Barrier profile, Hamiltonian phase factors and turning points.
//!
//! The dimensionless Hamiltonian is `H = −(1/κ0) ∂²/∂ξ² + κ0 v0 v(ξ)` with
//! `v(ξ) = 1 / (1 + |ξ/ξ_b|^α)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Representation, WaveFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    /// Peak height over the carrier kinetic energy.
    pub v0: f64,
    /// Half-width in units of the packet width.
    pub xi_b: f64,
    /// Shape exponent; large values approach a square barrier.
    pub alpha: f64,
}

impl BarrierSpec {
    pub fn validate(&self) -> Result<()> {
        // v0 = 0 is the free particle and is accepted.
        if !(self.v0.is_finite() && self.v0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("v0 must be >= 0, got {}", self.v0)));
        }
        if !(self.xi_b.is_finite() && self.xi_b > 0.0) {
            return Err(Error::InvalidParameter(format!("xi_b must be > 0, got {}", self.xi_b)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Normalized shape `v(ξ) ∈ (0, 1]`.
    pub fn shape(&self, xi: f64) -> f64 {
        1.0 / (1.0 + (xi / self.xi_b).abs().powf(self.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.half_width, self.n_points)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: 40.0,
            n_points: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Mean momentum over momentum spread.
    pub kappa0: f64,
    pub barrier: BarrierSpec,
    /// Initial packet center.
    pub xi0: f64,
    pub tau_max: f64,
    pub grid: GridSpec,
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        self.barrier.validate()?;
        if !(self.kappa0.is_finite() && self.kappa0 > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa0 must be > 0, got {}", self.kappa0)));
        }
        if !(self.tau_max.is_finite() && self.tau_max > 0.0) {
            return Err(Error::InvalidParameter(format!("tau_max must be > 0, got {}", self.tau_max)));
        }
        if !self.xi0.is_finite() {
            return Err(Error::InvalidParameter("xi0 must be finite".into()));
        }
        if self.barrier.v0 > 0.0 && self.xi0 >= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "xi0 must be < 0 (packet launched from the left), got {}",
                self.xi0
            )));
        }
        if !(self.xi0.abs() < self.grid.half_width) {
            return Err(Error::InvalidParameter(format!(
                "xi0 = {} lies outside the grid [-{}, {})",
                self.xi0, self.grid.half_width, self.grid.half_width
            )));
        }
        self.grid.build().map(|_| ())
    }
}

pub fn barrier_profile(spec: &BarrierSpec, grid: &Grid) -> Vec<f64> {
    grid.xi().iter().map(|&x| spec.shape(x)).collect()
}

/// Classical turning points `±ξ_b (v0 − 1)^{1/α}` of the carrier plane wave,
/// where `κ0 v0 v(ξ) = κ0`.
pub fn turning_points(params: &SimulationParams) -> Result<(f64, f64)> {
    let b = &params.barrier;
    if !(b.v0 > 1.0) {
        return Err(Error::NoTurningPoints(b.v0));
    }
    let x = b.xi_b * (b.v0 - 1.0).powf(1.0 / b.alpha);
    Ok((-x, x))
}

/// Diagonal factors of the Hamiltonian on a fixed grid.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid,
    kappa0: f64,
    /// `κ0 v0 v(ξ_j)`
    potential: Vec<f64>,
    /// `κ_m² / κ0`
    kinetic: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(grid: &Grid, kappa0: f64, barrier: &BarrierSpec) -> Result<Self> {
        barrier.validate()?;
        if !(kappa0.is_finite() && kappa0 > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa0 must be > 0, got {kappa0}")));
        }
        let height = kappa0 * barrier.v0;
        Ok(Self {
            grid: grid.clone(),
            kappa0,
            potential: barrier_profile(barrier, grid).into_iter().map(|v| height * v).collect(),
            kinetic: grid.kappa().iter().map(|k| k * k / kappa0).collect(),
        })
    }

    pub fn from_params(params: &SimulationParams) -> Result<Self> {
        Self::new(&params.grid.build()?, params.kappa0, &params.barrier)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn kinetic(&self) -> &[f64] {
        &self.kinetic
    }

    /// Multiplies position amplitudes by `exp(−i κ0 v0 v(ξ) dt)`.
    pub fn apply_potential_phase(&self, mut psi: WaveFunction, dt: f64) -> Result<WaveFunction> {
        psi.expect(Representation::Position)?;
        apply_phase(psi.amplitudes_mut(), &self.potential, dt);
        Ok(psi)
    }

    /// Multiplies momentum amplitudes by `exp(−i κ²/κ0 dt)`.
    pub fn apply_kinetic_phase(&self, mut psi: WaveFunction, dt: f64) -> Result<WaveFunction> {
        psi.expect(Representation::Momentum)?;
        apply_phase(psi.amplitudes_mut(), &self.kinetic, dt);
        Ok(psi)
    }
}

fn apply_phase(amps: &mut [Complex64], energies: &[f64], dt: f64) {
    for (a, e) in amps.iter_mut().zip(energies) {
        *a *= Complex64::from_polar(1.0, -e * dt);
    }
}

pub(crate) fn phase_factors(energies: &[f64], dt: f64, scale: f64) -> Vec<Complex64> {
    energies
        .iter()
        .map(|e| Complex64::from_polar(scale, -e * dt))
        .collect()
}
