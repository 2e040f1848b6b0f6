//! Wigner distribution `W(ξ,κ) = (1/π) ∫ ψ*(ξ+η) ψ(ξ−η) e^{2iκη} dη`.
//!
//! The state is first interpolated spectrally onto a grid of half the
//! spacing, so that `ξ ± η` always falls on a sample. The correlation is
//! taken over `|η| < half_width/2` and transformed with a length-`N` FFT,
//! which places the output on the grid's own momentum lattice (ascending
//! order in the map). With that window the map has no periodic ghost
//! images for states narrower than `half_width`, the position marginal is
//! exact, and the momentum marginal holds up to the state's spectral
//! content near the Nyquist edge. States that touch the boundary alias.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Grid, Representation, WaveFunction};
use crate::measurement::BranchEnsemble;

/// Rectangular region of phase space to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WignerWindow {
    pub xi_min: f64,
    pub xi_max: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl WignerWindow {
    pub fn full() -> Self {
        Self {
            xi_min: f64::NEG_INFINITY,
            xi_max: f64::INFINITY,
            kappa_min: f64::NEG_INFINITY,
            kappa_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WignerMap {
    /// Row positions.
    pub xi: Vec<f64>,
    /// Column momenta, ascending.
    pub kappa: Vec<f64>,
    /// Row-major `xi.len() × kappa.len()`.
    pub values: Vec<f64>,
    pub dxi: f64,
    pub dkappa: f64,
    /// Largest imaginary part discarded, relative to the largest |W|.
    pub imag_residue: f64,
}

impl WignerMap {
    pub fn rows(&self) -> usize {
        self.xi.len()
    }

    pub fn cols(&self) -> usize {
        self.kappa.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    /// `Σ_κ W dκ` per row.
    pub fn position_marginal(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|r| self.row(r).iter().sum::<f64>() * self.dkappa)
            .collect()
    }

    /// `Σ_ξ W dξ` per column.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols()];
        for r in 0..self.rows() {
            for (a, w) in acc.iter_mut().zip(self.row(r)) {
                *a += w;
            }
        }
        acc.iter_mut().for_each(|a| *a *= self.dxi);
        acc
    }

    /// `ΣΣ W dξ dκ`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dxi * self.dkappa
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Location `(ξ, κ, W)` of the maximum.
    pub fn peak(&self) -> (f64, f64, f64) {
        let (idx, &w) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty map");
        (self.xi[idx / self.cols()], self.kappa[idx % self.cols()], w)
    }

    fn add_assign(&mut self, other: &WignerMap) -> Result<()> {
        if self.xi != other.xi || self.kappa != other.kappa {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        self.imag_residue = self.imag_residue.max(other.imag_residue);
        Ok(())
    }
}

/// Spectral interpolation onto `2N` points; even samples reproduce the input.
fn upsample(grid: &Grid, psi: &WaveFunction) -> Vec<Complex64> {
    let n = grid.n_points();
    let mut planner = FftPlanner::new();
    let mut spec = psi.clone().into_position().into_amplitudes();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut fine = vec![Complex64::default(); 2 * n];
    let half = n / 2;
    fine[..half].copy_from_slice(&spec[..half]);
    fine[n + half + 1..].copy_from_slice(&spec[half + 1..]);
    // split the Nyquist bin between ±N/2
    fine[half] = spec[half] * 0.5;
    fine[n + half] = spec[half] * 0.5;
    planner.plan_fft_inverse(2 * n).process(&mut fine);
    let inv = 1.0 / n as f64;
    fine.iter_mut().for_each(|a| *a *= inv);
    fine
}

pub fn wigner_transform(psi: &WaveFunction) -> Result<WignerMap> {
    wigner_transform_window(psi, &WignerWindow::full())
}

/// Wigner map of a position-representation state, restricted to `window`.
pub fn wigner_transform_window(psi: &WaveFunction, window: &WignerWindow) -> Result<WignerMap> {
    psi.expect(Representation::Position)?;
    let grid = psi.grid().clone();
    let n = grid.n_points();
    let fine = upsample(&grid, psi);
    let two_n = 2 * n;
    let h = 0.5 * grid.dxi();
    let prefactor = h / PI;

    // ascending κ: FFT index of the k-th column
    let order: Vec<usize> = (0..n).map(|k| (k + n / 2) % n).collect();
    let cols: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&m| (window.kappa_min..=window.kappa_max).contains(&grid.kappa()[m]))
        .collect();
    let rows: Vec<usize> = (0..n)
        .filter(|&j| (window.xi_min..=window.xi_max).contains(&grid.xi()[j]))
        .collect();

    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let computed: Vec<(Vec<f64>, f64)> = rows
        .par_iter()
        .map_init(
            || (vec![Complex64::default(); n], vec![Complex64::default(); ifft.get_inplace_scratch_len()]),
            |(buf, scratch), &j| {
                let r = 2 * j;
                let half = n / 2;
                for l in 0..half {
                    buf[l] = fine[(r + l) % two_n].conj() * fine[(r + two_n - l) % two_n];
                }
                for l in 1..half {
                    buf[n - l] = fine[(r + two_n - l) % two_n].conj() * fine[(r + l) % two_n];
                }
                // η = ±half_width/2 share one slot
                let edge = fine[(r + two_n - half) % two_n].conj() * fine[(r + half) % two_n];
                buf[half] = Complex64::new(edge.re, 0.0);
                ifft.process_with_scratch(buf, scratch);
                let mut imag: f64 = 0.0;
                let row = cols
                    .iter()
                    .map(|&m| {
                        imag = imag.max(buf[m].im.abs());
                        prefactor * buf[m].re
                    })
                    .collect();
                (row, prefactor * imag)
            },
        )
        .collect();

    let mut values = Vec::with_capacity(rows.len() * cols.len());
    let mut imag: f64 = 0.0;
    for (row, im) in computed {
        values.extend(row);
        imag = imag.max(im);
    }
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(WignerMap {
        xi: rows.iter().map(|&j| grid.xi()[j]).collect(),
        kappa: cols.iter().map(|&m| grid.kappa()[m]).collect(),
        values,
        dxi: grid.dxi(),
        dkappa: grid.dkappa(),
        imag_residue: if max_abs > 0.0 { imag / max_abs } else { imag },
    })
}

/// Incoherent sum of the branch Wigner maps, in branch order.
pub fn wigner_of_ensemble(ensemble: &BranchEnsemble) -> Result<WignerMap> {
    wigner_of_ensemble_window(ensemble, &WignerWindow::full())
}

pub fn wigner_of_ensemble_window(ensemble: &BranchEnsemble, window: &WignerWindow) -> Result<WignerMap> {
    let mut iter = ensemble.branches.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let mut acc = wigner_transform_window(&first.state.clone().into_position(), window)?;
    for b in iter {
        acc.add_assign(&wigner_transform_window(&b.state.clone().into_position(), window)?)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{Branch, History, Sign};

    fn packet(grid: &Grid, xi0: f64, kappa0: f64) -> WaveFunction {
        let norm = (2.0 / PI).powf(0.25);
        WaveFunction::from_position_fn(grid, |x| Complex64::from_polar(norm * (-(x - xi0).powi(2)).exp(), kappa0 * x))
    }

    fn cat(grid: &Grid, kappa0: f64) -> WaveFunction {
        let norm = (2.0 / PI).powf(0.25);
        let mut w = WaveFunction::from_position_fn(grid, |x| {
            let env = norm * (-x * x).exp();
            Complex64::from_polar(env, kappa0 * x) + Complex64::from_polar(env, -kappa0 * x)
        });
        let n = w.norm_sq();
        w.scale(1.0 / n.sqrt());
        w
    }

    /// Closed form for `(e^{−ξ²+iaξ} + e^{−ξ²−iaξ})` normalized by `norm_sq`.
    fn cat_wigner(x: f64, k: f64, a: f64, norm_sq: f64) -> f64 {
        let amp2 = (2.0 / PI).sqrt() / norm_sq;
        let g = |kk: f64| (-2.0 * x * x - 0.5 * kk * kk).exp();
        // each Gaussian term contributes (1/π)·√(π/2)·amp2·e^{−2ξ²−(κ∓a)²/2}
        let c = amp2 * (PI / 2.0).sqrt() / PI;
        c * (g(k - a) + g(k + a) + 2.0 * (-2.0 * x * x - 0.5 * k * k).exp() * (2.0 * a * x).cos())
    }

    #[test]
    fn ground_gaussian_is_positive_and_centered() {
        let g = Grid::new(10.0, 256).unwrap();
        let w = wigner_transform(&packet(&g, 0.0, 0.0)).unwrap();
        let (x, k, peak) = w.peak();
        assert_eq!((x, k), (0.0, 0.0));
        assert!((peak - 1.0 / PI).abs() < 1e-10);
        assert!(w.min() > -1e-12 * peak);
        assert!(w.imag_residue < 1e-10);
    }

    #[test]
    fn displaced_packet_peaks_at_its_phase_space_point() {
        let g = Grid::new(20.0, 512).unwrap();
        let w = wigner_transform(&packet(&g, -3.0, 2.0 * g.dkappa() * 10.0)).unwrap();
        let (x, k, _) = w.peak();
        assert!((x + 3.0).abs() < g.dxi());
        assert!((k - 20.0 * g.dkappa()).abs() < 1e-12);
    }

    #[test]
    fn cat_state_matches_closed_form() {
        let g = Grid::new(10.0, 256).unwrap();
        let a = 3.0;
        let norm = (2.0 / PI).powf(0.25);
        let raw = WaveFunction::from_position_fn(&g, |x| {
            let env = norm * (-x * x).exp();
            Complex64::from_polar(env, a * x) + Complex64::from_polar(env, -a * x)
        });
        let norm_sq = raw.norm_sq();
        let w = wigner_transform(&cat(&g, a)).unwrap();
        let mut worst: f64 = 0.0;
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let expected = cat_wigner(w.xi[r], w.kappa[c], a, norm_sq);
                worst = worst.max((w.get(r, c) - expected).abs());
            }
        }
        assert!(worst < 1e-10, "max deviation {worst}");
        // interference fringes near κ = 0 go negative
        assert!(w.min() < -0.1 * w.max());
    }

    #[test]
    fn marginals_and_normalization() {
        let g = Grid::new(20.0, 512).unwrap();
        let psi = cat(&g, 2.5);
        let w = wigner_transform(&psi).unwrap();
        let pd = psi.position_density();
        for (a, b) in w.position_marginal().iter().zip(&pd) {
            assert!((a - b).abs() < 1e-12);
        }
        let md = psi.momentum_density();
        let mm = w.momentum_marginal();
        for (c, k) in w.kappa.iter().enumerate() {
            let m = g.kappa().iter().position(|kk| kk == k).unwrap();
            assert!((mm[c] - md[m]).abs() < 1e-10, "κ={k}");
        }
        assert!((w.total() - psi.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn parity_covariance() {
        let g = Grid::new(10.0, 128).unwrap();
        let psi = packet(&g, 1.3, 2.2);
        let n = g.n_points();
        let amps = psi.amplitudes();
        let reflected: Vec<Complex64> = (0..n).map(|j| amps[(n - j) % n]).collect();
        let refl = WaveFunction::new(&g, reflected, Representation::Position).unwrap();
        let w = wigner_transform(&psi).unwrap();
        let wr = wigner_transform(&refl).unwrap();
        // rows: ξ_j ↔ ξ_{n−j}; cols ascending with col 0 the unpaired Nyquist bin
        for j in 1..n {
            for c in 1..n {
                let a = wr.get(j, c);
                let b = w.get(n - j, n - c);
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mixture_has_no_fringes() {
        let g = Grid::new(10.0, 256).unwrap();
        let norm = std::f64::consts::FRAC_1_SQRT_2;
        let mut plus = packet(&g, 0.0, 3.0);
        plus.scale(norm);
        let mut minus = packet(&g, 0.0, -3.0);
        minus.scale(norm);
        let ens = BranchEnsemble {
            branches: vec![
                Branch {
                    state: plus,
                    history: History::from_signs(vec![Sign::Plus]),
                },
                Branch {
                    state: minus,
                    history: History::from_signs(vec![Sign::Minus]),
                },
            ],
            generation: 1,
            discarded_probability: 0.0,
        };
        let w = wigner_of_ensemble(&ens).unwrap();
        assert!(w.min() > -1e-10 * w.max());
        let pd = ens.position_density();
        for (a, b) in w.position_marginal().iter().zip(&pd) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = wigner_of_ensemble(&BranchEnsemble::pure(packet(&g, 0.0, 3.0))).unwrap();
        assert_eq!(single.values, wigner_transform(&packet(&g, 0.0, 3.0)).unwrap().values);
    }

    #[test]
    fn window_selects_subset() {
        let g = Grid::new(10.0, 128).unwrap();
        let psi = packet(&g, 0.0, 1.0);
        let full = wigner_transform(&psi).unwrap();
        let win = WignerWindow {
            xi_min: -2.0,
            xi_max: 2.0,
            kappa_min: -3.0,
            kappa_max: 3.0,
        };
        let part = wigner_transform_window(&psi, &win).unwrap();
        assert!(part.rows() < full.rows() && part.cols() < full.cols());
        let r0 = full.xi.iter().position(|x| *x == part.xi[0]).unwrap();
        let c0 = full.kappa.iter().position(|k| *k == part.kappa[0]).unwrap();
        assert_eq!(part.get(0, 0), full.get(r0, c0));
        assert!(wigner_transform(&psi.into_momentum()).is_err());
    }
}
