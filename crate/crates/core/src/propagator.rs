//! Unitary evolution over a measurement interval.
//!
//! [`Propagator::evolve`] uses symmetric (Strang) splitting: each substep is
//! a half kinetic phase, a full potential phase and a half kinetic phase,
//! with adjacent half steps fused. The loop runs on raw FFT buffers; the
//! unitary scale and sign factors of the physical transform cancel between
//! neighbouring transforms and are applied only at the ends.
//!
//! [`evolve_oracle`] is an independent reference that exponentiates the
//! dense Hamiltonian built from the spectral second-derivative matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Representation, WaveFunction};
use crate::potential::{phase_factors, Hamiltonian};

/// Largest grid accepted by the dense oracle.
pub const ORACLE_MAX_POINTS: usize = 512;

/// Default cap on the substep length for production runs.
pub const DEFAULT_MAX_SUBSTEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepControl {
    /// Fixed number of substeps per interval.
    Substeps(usize),
    /// Largest allowed substep; each interval is divided into
    /// `ceil(Δτ / max)` equal substeps.
    MaxSubstep(f64),
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::MaxSubstep(DEFAULT_MAX_SUBSTEP)
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepControl::Substeps(0) => Err(Error::ZeroSubsteps),
            StepControl::MaxSubstep(s) if !(s.is_finite() && s > 0.0) => Err(Error::InvalidParameter(
                format!("maximum substep must be > 0, got {s}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn substeps_for(&self, interval: f64) -> Result<usize> {
        self.validate()?;
        Ok(match *self {
            StepControl::Substeps(n) => n,
            StepControl::MaxSubstep(max) => ((interval.abs() / max).ceil() as usize).max(1),
        })
    }
}

struct PhaseCache {
    interval: f64,
    substeps: usize,
    half_kinetic: Vec<Complex64>,
    full_kinetic: Vec<Complex64>,
    // includes the 1/N of the inverse FFT
    potential: Vec<Complex64>,
}

/// Split-step propagator with its own FFT workspace. Clone one per thread.
pub struct Propagator {
    hamiltonian: Hamiltonian,
    control: StepControl,
    scratch: Vec<Complex64>,
    cache: Option<PhaseCache>,
}

impl Clone for Propagator {
    fn clone(&self) -> Self {
        Self {
            hamiltonian: self.hamiltonian.clone(),
            control: self.control,
            scratch: self.hamiltonian.grid().scratch(),
            cache: None,
        }
    }
}

impl Propagator {
    pub fn new(hamiltonian: Hamiltonian, control: StepControl) -> Result<Self> {
        control.validate()?;
        let scratch = hamiltonian.grid().scratch();
        Ok(Self {
            hamiltonian,
            control,
            scratch,
            cache: None,
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn control(&self) -> StepControl {
        self.control
    }

    /// Evolves `psi` by `dt ≥ 0`. The output keeps the input representation.
    pub fn evolve(&mut self, psi: WaveFunction, dt: f64) -> Result<WaveFunction> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::TimeStep(dt));
        }
        self.evolve_signed(psi, dt)
    }

    pub(crate) fn evolve_signed(&mut self, psi: WaveFunction, dt: f64) -> Result<WaveFunction> {
        if psi.grid() != self.hamiltonian.grid() {
            return Err(Error::GridMismatch);
        }
        if dt == 0.0 {
            return Ok(psi);
        }
        self.prepare(dt)?;
        let rep = psi.representation();
        let grid = self.hamiltonian.grid().clone();
        let mut buf = psi.into_amplitudes();
        let scratch = &mut self.scratch;
        let cache = self.cache.as_ref().expect("phase cache prepared");

        // to raw momentum
        match rep {
            Representation::Position => grid.fft_raw(&mut buf, scratch),
            Representation::Momentum => {
                for (a, f) in buf.iter_mut().zip(grid.momentum_factor()) {
                    *a /= f;
                }
            }
        }

        multiply(&mut buf, &cache.half_kinetic);
        for step in 0..cache.substeps {
            grid.ifft_raw(&mut buf, scratch);
            multiply(&mut buf, &cache.potential);
            grid.fft_raw(&mut buf, scratch);
            if step + 1 < cache.substeps {
                multiply(&mut buf, &cache.full_kinetic);
            } else {
                multiply(&mut buf, &cache.half_kinetic);
            }
        }

        match rep {
            Representation::Position => {
                grid.ifft_raw(&mut buf, scratch);
                let inv = 1.0 / grid.n_points() as f64;
                for a in &mut buf {
                    *a *= inv;
                }
            }
            Representation::Momentum => multiply(&mut buf, grid.momentum_factor()),
        }
        WaveFunction::new(&grid, buf, rep)
    }

    fn prepare(&mut self, dt: f64) -> Result<()> {
        if let Some(c) = &self.cache {
            if c.interval == dt {
                return Ok(());
            }
        }
        let substeps = self.control.substeps_for(dt)?;
        let sub = dt / substeps as f64;
        let h = &self.hamiltonian;
        let inv_n = 1.0 / h.grid().n_points() as f64;
        self.cache = Some(PhaseCache {
            interval: dt,
            substeps,
            half_kinetic: phase_factors(h.kinetic(), 0.5 * sub, 1.0),
            full_kinetic: phase_factors(h.kinetic(), sub, 1.0),
            potential: phase_factors(h.potential(), sub, inv_n),
        });
        Ok(())
    }
}

#[inline]
fn multiply(buf: &mut [Complex64], factors: &[Complex64]) {
    for (a, f) in buf.iter_mut().zip(factors) {
        *a *= f;
    }
}

/// Dense Hamiltonian `−(1/κ0) D₂ + diag(κ0 v0 v(ξ))` with the spectral
/// second-derivative matrix `D₂[j,k] = −(1/N) Σ_m κ_m² cos(κ_m (ξ_j − ξ_k))`.
/// Real symmetric on an even grid.
pub fn dense_hamiltonian(hamiltonian: &Hamiltonian) -> Result<DMatrix<f64>> {
    let grid = hamiltonian.grid();
    let n = grid.n_points();
    if n > ORACLE_MAX_POINTS {
        return Err(Error::OracleGridTooLarge {
            found: n,
            max: ORACLE_MAX_POINTS,
        });
    }
    let dxi = grid.dxi();
    let kappa = grid.kappa();
    let kappa0 = hamiltonian.kappa0();
    // depends only on the index offset
    let column: Vec<f64> = (0..n)
        .map(|d| {
            let s: f64 = kappa.iter().map(|k| k * k * (k * d as f64 * dxi).cos()).sum();
            s / (n as f64 * kappa0)
        })
        .collect();
    let mut h = DMatrix::from_fn(n, n, |j, k| column[j.abs_diff(k)]);
    for (j, v) in hamiltonian.potential().iter().enumerate() {
        h[(j, j)] += v;
    }
    Ok(h)
}

/// Reference evolution by exact exponentiation of the dense Hamiltonian.
/// Returns the state in position representation.
pub fn evolve_oracle(hamiltonian: &Hamiltonian, psi: &WaveFunction, dt: f64) -> Result<WaveFunction> {
    let h = dense_hamiltonian(hamiltonian)?;
    let eig = SymmetricEigen::new(h);
    evolve_with_eigen(&eig, psi, dt)
}

/// As [`evolve_oracle`] with a precomputed eigendecomposition.
pub fn evolve_with_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>, psi: &WaveFunction, dt: f64) -> Result<WaveFunction> {
    let grid = psi.grid().clone();
    if eig.eigenvalues.len() != grid.n_points() {
        return Err(Error::Length {
            expected: eig.eigenvalues.len(),
            found: grid.n_points(),
        });
    }
    let pos = psi.clone().into_position();
    if dt == 0.0 {
        return Ok(pos);
    }
    let q = &eig.eigenvectors;
    let re = DVector::from_iterator(pos.amplitudes().len(), pos.amplitudes().iter().map(|a| a.re));
    let im = DVector::from_iterator(pos.amplitudes().len(), pos.amplitudes().iter().map(|a| a.im));
    let cre = q.tr_mul(&re);
    let cim = q.tr_mul(&im);
    let n = grid.n_points();
    let mut rot_re = DVector::zeros(n);
    let mut rot_im = DVector::zeros(n);
    for i in 0..n {
        let c = Complex64::new(cre[i], cim[i]) * Complex64::from_polar(1.0, -eig.eigenvalues[i] * dt);
        rot_re[i] = c.re;
        rot_im[i] = c.im;
    }
    let out_re = q * rot_re;
    let out_im = q * rot_im;
    let amps = out_re.iter().zip(out_im.iter()).map(|(&r, &i)| Complex64::new(r, i)).collect();
    WaveFunction::new(&grid, amps, Representation::Position)
}
