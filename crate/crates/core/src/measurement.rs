//! Momentum-direction measurement channels.
//!
//! The positive half-space includes the `κ = 0` bin. Both channels work on
//! momentum amplitudes, so [`project_positive`] and the first component of
//! [`split_by_sign`] are bit-identical.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Outcome record of a branch, oldest measurement first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct History(Vec<Sign>);

impl History {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_signs(signs: Vec<Sign>) -> Self {
        Self(signs)
    }

    /// History of `len` outcomes packed little-endian in `bits` (1 = minus).
    pub(crate) fn from_bits(bits: u64, len: usize) -> Self {
        Self(
            (0..len)
                .map(|i| if bits >> i & 1 == 1 { Sign::Minus } else { Sign::Plus })
                .collect(),
        )
    }

    pub fn signs(&self) -> &[Sign] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<Sign> {
        self.0.last().copied()
    }

    pub fn extended(&self, sign: Sign) -> Self {
        let mut v = self.0.clone();
        v.push(sign);
        Self(v)
    }

    pub fn all_plus(&self) -> bool {
        self.0.iter().all(|s| *s == Sign::Plus)
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

/// Unnormalized state conditioned on an outcome history; its squared norm
/// is the joint probability of that history.
#[derive(Debug, Clone)]
pub struct Branch {
    pub state: WaveFunction,
    pub history: History,
}

impl Branch {
    pub fn norm_sq(&self) -> f64 {
        self.state.norm_sq()
    }
}

/// Incoherent mixture of branches.
#[derive(Debug, Clone)]
pub struct BranchEnsemble {
    pub branches: Vec<Branch>,
    /// Number of measurements applied so far.
    pub generation: usize,
    /// Probability carried by pruned branches.
    pub discarded_probability: f64,
}

impl BranchEnsemble {
    pub fn pure(state: WaveFunction) -> Self {
        Self {
            branches: vec![Branch {
                state,
                history: History::new(),
            }],
            generation: 0,
            discarded_probability: 0.0,
        }
    }

    /// Σ‖branch‖² in branch order.
    pub fn retained_probability(&self) -> f64 {
        self.branches.iter().map(Branch::norm_sq).sum()
    }

    /// Retained plus discarded probability; 1 for a complete channel.
    pub fn total_probability(&self) -> f64 {
        self.retained_probability() + self.discarded_probability
    }

    /// Probability that the last outcome was positive.
    pub fn positive_probability(&self) -> f64 {
        self.branches
            .iter()
            .filter(|b| b.history.last() == Some(Sign::Plus))
            .map(Branch::norm_sq)
            .sum()
    }

    /// Ensemble density `⟨ξ|ρ|ξ⟩ = Σ |ψ_i(ξ)|²`.
    pub fn position_density(&self) -> Vec<f64> {
        let n = self.branches.first().map_or(0, |b| b.state.grid().n_points());
        let mut acc = vec![0.0; n];
        for b in &self.branches {
            for (a, d) in acc.iter_mut().zip(b.state.position_density()) {
                *a += d;
            }
        }
        acc
    }
}

fn positive_mask(psi: &WaveFunction) -> impl Iterator<Item = bool> + '_ {
    psi.grid().kappa().iter().map(|&k| k >= 0.0)
}

/// Projects onto non-negative momenta. The result is in momentum
/// representation and unnormalized; its squared norm is the probability
/// of a positive outcome.
pub fn project_positive(psi: &WaveFunction) -> WaveFunction {
    let mut out = psi.clone().into_momentum();
    let mask: Vec<bool> = positive_mask(&out).collect();
    for (a, keep) in out.amplitudes_mut().iter_mut().zip(mask) {
        if !keep {
            *a = Complex64::default();
        }
    }
    out
}

/// Splits into non-negative and negative momentum parts. Both outputs are
/// in momentum representation with disjoint supports.
pub fn split_by_sign(psi: &WaveFunction) -> (WaveFunction, WaveFunction) {
    let mut plus = psi.clone().into_momentum();
    let mut minus = plus.clone();
    let mask: Vec<bool> = positive_mask(&plus).collect();
    for ((p, m), keep) in plus
        .amplitudes_mut()
        .iter_mut()
        .zip(minus.amplitudes_mut().iter_mut())
        .zip(mask)
    {
        if keep {
            *m = Complex64::default();
        } else {
            *p = Complex64::default();
        }
    }
    (plus, minus)
}

/// One nonselective measurement: every branch is replaced by its two
/// sign-split children, `+` first. Children with `‖ψ‖² < prune_eps` are
/// dropped and their probability is added to `discarded_probability`.
pub fn measure_nonselective(ensemble: BranchEnsemble, prune_eps: f64) -> BranchEnsemble {
    let mut branches = Vec::with_capacity(2 * ensemble.branches.len());
    let mut discarded = ensemble.discarded_probability;
    for branch in ensemble.branches {
        let (plus, minus) = split_by_sign(&branch.state);
        for (state, sign) in [(plus, Sign::Plus), (minus, Sign::Minus)] {
            let p = state.norm_sq();
            if p < prune_eps {
                discarded += p;
            } else {
                branches.push(Branch {
                    state,
                    history: branch.history.extended(sign),
                });
            }
        }
    }
    BranchEnsemble {
        branches,
        generation: ensemble.generation + 1,
        discarded_probability: discarded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Representation};
    use std::f64::consts::PI;

    fn gaussian(grid: &Grid, kappa0: f64) -> WaveFunction {
        let norm = (2.0 / PI).powf(0.25);
        WaveFunction::from_position_fn(grid, |x| Complex64::from_polar(norm * (-x * x).exp(), kappa0 * x))
    }

    fn positive_only(grid: &Grid) -> WaveFunction {
        let amps = grid
            .kappa()
            .iter()
            .map(|&k| if k > 0.5 { Complex64::new((-(k - 3.0).powi(2)).exp(), 0.2) } else { Complex64::default() })
            .collect();
        let mut w = WaveFunction::new(grid, amps, Representation::Momentum).unwrap();
        let n = w.norm_sq();
        w.scale(1.0 / n.sqrt());
        w
    }

    #[test]
    fn positive_state_is_unchanged() {
        let g = Grid::new(20.0, 256).unwrap();
        let w = positive_only(&g);
        let p = project_positive(&w);
        assert_eq!(p.amplitudes(), w.amplitudes());
        let (plus, minus) = split_by_sign(&w);
        assert_eq!(plus.amplitudes(), w.amplitudes());
        assert_eq!(minus.norm_sq(), 0.0);
    }

    #[test]
    fn symmetric_gaussian_halves() {
        let g = Grid::new(20.0, 512).unwrap();
        let w = gaussian(&g, 0.0);
        let p = project_positive(&w).norm_sq();
        // κ = 0 bin carries the resolution error
        let zero_bin = w.momentum_density()[0] * g.dkappa();
        assert!((p - 0.5).abs() <= zero_bin);
        let (plus, minus) = split_by_sign(&w);
        assert!((plus.norm_sq() - minus.norm_sq()).abs() <= zero_bin * 1.0001);
    }

    #[test]
    fn projection_is_idempotent() {
        let g = Grid::new(20.0, 256).unwrap();
        let w = gaussian(&g, 1.0);
        let once = project_positive(&w);
        let twice = project_positive(&once);
        assert_eq!(once.amplitudes(), twice.amplitudes());
    }

    #[test]
    fn projection_equals_plus_component() {
        let g = Grid::new(20.0, 256).unwrap();
        let w = gaussian(&g, 0.7);
        let (plus, _) = split_by_sign(&w);
        assert_eq!(project_positive(&w).amplitudes(), plus.amplitudes());
    }

    #[test]
    fn pure_positive_branch_gives_empty_minus_child() {
        let g = Grid::new(20.0, 256).unwrap();
        let w = positive_only(&g);
        let n0 = w.norm_sq();
        let ens = measure_nonselective(BranchEnsemble::pure(w), 0.0);
        assert_eq!(ens.branches.len(), 2);
        assert_eq!(ens.branches[0].norm_sq(), n0);
        assert!((n0 - 1.0).abs() < 1e-13, "{n0}");
        assert_eq!(ens.branches[1].norm_sq(), 0.0);
        let pruned = measure_nonselective(BranchEnsemble::pure(positive_only(&g)), 1e-300);
        assert_eq!(pruned.branches.len(), 1);
        assert_eq!(pruned.branches[0].history.to_string(), "+");
    }

    #[test]
    fn exact_channel_doubles_branches() {
        let g = Grid::new(20.0, 256).unwrap();
        let mut ens = BranchEnsemble::pure(gaussian(&g, 0.5));
        for gen in 1..=3 {
            ens = measure_nonselective(ens, 0.0);
            assert_eq!(ens.branches.len(), 1 << gen);
            assert_eq!(ens.generation, gen);
            assert_eq!(ens.discarded_probability, 0.0);
            assert!((ens.total_probability() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pruning_keeps_completeness() {
        let g = Grid::new(20.0, 256).unwrap();
        let ens = measure_nonselective(BranchEnsemble::pure(gaussian(&g, 1.0)), 0.3);
        assert_eq!(ens.branches.len(), 1);
        assert!(ens.discarded_probability > 0.0);
        assert!((ens.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn history_formatting() {
        let h = History::from_bits(0b010, 3);
        assert_eq!(h.to_string(), "+-+");
        assert_eq!(h.last(), Some(Sign::Plus));
        assert!(!h.all_plus());
        assert!(History::from_bits(0, 4).all_plus());
    }
}
