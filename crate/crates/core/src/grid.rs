//! Uniform periodic grid, spectral transforms and density primitives.
//!
//! Position amplitudes `ψ_j` and momentum amplitudes `φ_m` carry the
//! continuum measures `dξ` and `dκ`:
//!
//! ```text
//! ‖ψ‖² = Σ_j |ψ_j|² dξ = Σ_m |φ_m|² dκ
//! φ_m  = dξ/√(2π) · Σ_j ψ_j exp(−i κ_m ξ_j)
//! ```
//!
//! so every probability is a literal Riemann sum of the continuum integral.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Position,
    Momentum,
}

/// Immutable periodic lattice on `[−half_width, half_width)` and its
/// conjugate momentum lattice. Cloning is cheap; the FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    half_width: f64,
    n_points: usize,
    dxi: f64,
    dkappa: f64,
    xi: Vec<f64>,
    kappa: Vec<f64>,
    // raw FFT output -> physical momentum amplitude
    momentum_factor: Vec<Complex64>,
    // physical momentum amplitude -> raw FFT input, includes the 1/N of the inverse
    inverse_factor: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_width", &self.inner.half_width)
            .field("n_points", &self.inner.n_points)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.half_width == other.inner.half_width
                && self.inner.n_points == other.inner.n_points)
    }
}

impl Grid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::HalfWidth(half_width));
        }
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::GridSize(n_points));
        }
        let n = n_points;
        let dxi = 2.0 * half_width / n as f64;
        let dkappa = PI / half_width;
        let xi = (0..n).map(|j| -half_width + j as f64 * dxi).collect();
        // standard FFT ordering: 0, 1, .., n/2-1, -n/2, .., -1
        let kappa = (0..n)
            .map(|m| {
                let signed = if m < n / 2 { m as i64 } else { m as i64 - n as i64 };
                signed as f64 * dkappa
            })
            .collect();

        // exp(i κ_m half_width) = (−1)^m
        let scale = dxi / (2.0 * PI).sqrt();
        let momentum_factor = (0..n)
            .map(|m| Complex64::new(if m % 2 == 0 { scale } else { -scale }, 0.0))
            .collect();
        let inv = 1.0 / (scale * n as f64);
        let inverse_factor = (0..n)
            .map(|m| Complex64::new(if m % 2 == 0 { inv } else { -inv }, 0.0))
            .collect();

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());

        Ok(Self {
            inner: Arc::new(GridInner {
                half_width,
                n_points,
                dxi,
                dkappa,
                xi,
                kappa,
                momentum_factor,
                inverse_factor,
                forward,
                inverse,
                scratch_len,
            }),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.inner.half_width
    }

    pub fn n_points(&self) -> usize {
        self.inner.n_points
    }

    pub fn dxi(&self) -> f64 {
        self.inner.dxi
    }

    pub fn dkappa(&self) -> f64 {
        self.inner.dkappa
    }

    /// Position samples `ξ_j = −half_width + j·dξ`.
    pub fn xi(&self) -> &[f64] {
        &self.inner.xi
    }

    /// Momentum samples in FFT ordering; index 0 is `κ = 0`, the Nyquist
    /// bin `−n/2·dκ` is negative.
    pub fn kappa(&self) -> &[f64] {
        &self.inner.kappa
    }

    pub fn measure(&self, rep: Representation) -> f64 {
        match rep {
            Representation::Position => self.inner.dxi,
            Representation::Momentum => self.inner.dkappa,
        }
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::default(); self.inner.scratch_len]
    }

    /// Unnormalized in-place forward FFT.
    pub(crate) fn fft_raw(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inner.forward.process_with_scratch(buf, scratch);
    }

    /// Unnormalized in-place inverse FFT (no 1/N).
    pub(crate) fn ifft_raw(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inner.inverse.process_with_scratch(buf, scratch);
    }

    pub(crate) fn momentum_factor(&self) -> &[Complex64] {
        &self.inner.momentum_factor
    }

    pub(crate) fn inverse_factor(&self) -> &[Complex64] {
        &self.inner.inverse_factor
    }

    /// Position amplitudes to physical momentum amplitudes, in place.
    pub(crate) fn forward_in_place(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fft_raw(buf, scratch);
        for (a, f) in buf.iter_mut().zip(self.momentum_factor()) {
            *a *= f;
        }
    }

    /// Physical momentum amplitudes to position amplitudes, in place.
    pub(crate) fn inverse_in_place(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        for (a, f) in buf.iter_mut().zip(self.inverse_factor()) {
            *a *= f;
        }
        self.ifft_raw(buf, scratch);
    }
}

/// Complex amplitudes on a grid, tagged with their representation.
/// Post-measurement states are generally unnormalized.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    amplitudes: Vec<Complex64>,
    representation: Representation,
    grid: Grid,
}

impl WaveFunction {
    pub fn new(grid: &Grid, amplitudes: Vec<Complex64>, representation: Representation) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::Length {
                expected: grid.n_points(),
                found: amplitudes.len(),
            });
        }
        Ok(Self {
            amplitudes,
            representation,
            grid: grid.clone(),
        })
    }

    pub fn zeros(grid: &Grid, representation: Representation) -> Self {
        Self {
            amplitudes: vec![Complex64::default(); grid.n_points()],
            representation,
            grid: grid.clone(),
        }
    }

    /// Samples `f(ξ_j)` on the position lattice.
    pub fn from_position_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            amplitudes: grid.xi().iter().map(|&x| f(x)).collect(),
            representation: Representation::Position,
            grid: grid.clone(),
        }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn to_momentum(&self) -> Result<WaveFunction> {
        self.expect(Representation::Position)?;
        Ok(self.clone().into_momentum())
    }

    pub fn to_position(&self) -> Result<WaveFunction> {
        self.expect(Representation::Momentum)?;
        Ok(self.clone().into_position())
    }

    /// Converts to momentum representation if needed.
    pub fn into_momentum(mut self) -> WaveFunction {
        if self.representation == Representation::Position {
            let mut scratch = self.grid.scratch();
            self.grid.forward_in_place(&mut self.amplitudes, &mut scratch);
            self.representation = Representation::Momentum;
        }
        self
    }

    /// Converts to position representation if needed.
    pub fn into_position(mut self) -> WaveFunction {
        if self.representation == Representation::Momentum {
            let mut scratch = self.grid.scratch();
            self.grid.inverse_in_place(&mut self.amplitudes, &mut scratch);
            self.representation = Representation::Position;
        }
        self
    }

    pub fn into_representation(self, rep: Representation) -> WaveFunction {
        match rep {
            Representation::Position => self.into_position(),
            Representation::Momentum => self.into_momentum(),
        }
    }

    pub(crate) fn expect(&self, rep: Representation) -> Result<()> {
        if self.representation != rep {
            return Err(Error::Representation {
                expected: rep,
                found: self.representation,
            });
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        let sum: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        sum * self.grid.measure(self.representation)
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }

    /// `|ψ(ξ_j)|²`, transforming a copy if the state is held in momentum space.
    pub fn position_density(&self) -> Vec<f64> {
        match self.representation {
            Representation::Position => self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            Representation::Momentum => self.clone().into_position().position_density(),
        }
    }

    /// `|φ(κ_m)|²` in FFT ordering of [`Grid::kappa`].
    pub fn momentum_density(&self) -> Vec<f64> {
        match self.representation {
            Representation::Momentum => self.amplitudes.iter().map(|a| a.norm_sqr()).collect(),
            Representation::Position => self.clone().into_momentum().momentum_density(),
        }
    }

    /// Inner product `⟨self|other⟩` with the continuum measure. Both states
    /// must share grid and representation.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        self.compatible(other)?;
        let sum: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(sum * self.grid.measure(self.representation))
    }

    /// `‖self − other‖₂` with the continuum measure.
    pub fn distance(&self, other: &WaveFunction) -> Result<f64> {
        self.compatible(other)?;
        let sum: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((sum * self.grid.measure(self.representation)).sqrt())
    }

    fn compatible(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        other.expect(self.representation)
    }
}

/// Riemann sum `Σ density·measure`.
pub fn integrate(density: &[f64], measure: f64) -> f64 {
    density.iter().sum::<f64>() * measure
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: &Grid, xi0: f64, kappa0: f64) -> WaveFunction {
        let norm = (2.0 / PI).powf(0.25);
        WaveFunction::from_position_fn(grid, |x| {
            Complex64::from_polar(norm * (-(x - xi0).powi(2)).exp(), kappa0 * x)
        })
    }

    #[test]
    fn grid_spacings() {
        let g = Grid::new(40.0, 4096).unwrap();
        assert!((g.dxi() - 80.0 / 4096.0).abs() < 1e-15);
        assert!((g.dkappa() - PI / 40.0).abs() < 1e-15);
        assert!((g.dxi() * g.dkappa() * 4096.0 - 2.0 * PI).abs() < 1e-12);
        assert_eq!(g.kappa().iter().filter(|&&k| k == 0.0).count(), 1);
    }

    #[test]
    fn small_grid_momentum_lattice() {
        let g = Grid::new(1.0, 16).unwrap();
        assert!((g.kappa()[1] - PI).abs() < 1e-14);
        let max = g.kappa().iter().cloned().fold(f64::MIN, f64::max);
        let min = g.kappa().iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 7.0 * PI).abs() < 1e-12);
        assert!((min + 8.0 * PI).abs() < 1e-12);
        assert_eq!(g.xi()[0], -1.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid::new(40.0, 4095), Err(Error::GridSize(4095))));
        assert!(matches!(Grid::new(40.0, 8), Err(Error::GridSize(8))));
        assert!(matches!(Grid::new(0.0, 64), Err(Error::HalfWidth(_))));
        assert!(matches!(Grid::new(-1.0, 64), Err(Error::HalfWidth(_))));
    }

    #[test]
    fn gaussian_self_transform() {
        let g = Grid::new(20.0, 1024).unwrap();
        let psi = gaussian(&g, 0.0, 0.0);
        assert!((psi.norm_sq() - 1.0).abs() < 1e-12);
        let phi = psi.to_momentum().unwrap();
        // FT of (2/π)^{1/4} e^{−ξ²} is (2π)^{−1/4} e^{−κ²/4}
        for (k, a) in g.kappa().iter().zip(phi.amplitudes()) {
            let expected = (2.0 * PI).powf(-0.25) * (-k * k / 4.0).exp();
            assert!((a - Complex64::new(expected, 0.0)).norm() < 1e-12, "κ={k}");
        }
    }

    #[test]
    fn shift_theorem_centers_on_carrier() {
        let g = Grid::new(40.0, 2048).unwrap();
        let phi = gaussian(&g, -4.0, 4.0).to_momentum().unwrap();
        let dens = phi.momentum_density();
        let mean: f64 = g.kappa().iter().zip(&dens).map(|(k, d)| k * d).sum::<f64>() * g.dkappa();
        assert!((mean - 4.0).abs() < g.dkappa());
        let peak = dens
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((g.kappa()[peak] - 4.0).abs() < g.dkappa());
    }

    #[test]
    fn wrong_representation_rejected() {
        let g = Grid::new(10.0, 64).unwrap();
        let psi = gaussian(&g, 0.0, 0.0);
        assert!(psi.to_position().is_err());
        let phi = psi.to_momentum().unwrap();
        assert!(phi.to_momentum().is_err());
    }

    #[test]
    fn homogeneity_and_densities() {
        let g = Grid::new(20.0, 512).unwrap();
        let psi = gaussian(&g, 1.0, 2.0);
        let mut half = psi.clone();
        half.scale(0.5);
        assert!((half.norm_sq() - 0.25 * psi.norm_sq()).abs() < 1e-14);
        let pd = integrate(&psi.position_density(), g.dxi());
        let md = integrate(&psi.momentum_density(), g.dkappa());
        assert!((pd - 1.0).abs() < 1e-12);
        assert!((md - 1.0).abs() < 1e-12);
    }
}
