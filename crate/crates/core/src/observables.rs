//! Populations, photon statistics and labeling of pulse-spectrum peaks.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::model::{DressedSpectrum, DressedTransition, KHZ};
use crate::propagation::Trajectory;
use crate::state;
#[allow(unused_imports)]
use num_traits::Float;

/// `(ρ_gg, ρ_ee)` at every grid time.
pub fn atom_populations(traj: &Trajectory) -> Vec<(f64, f64)> {
    let half = traj.dim() / 2;
    traj.states()
        .map(|psi| (state::norm_sqr(&psi[..half]), state::norm_sqr(&psi[half..])))
        .collect()
}

/// `(⟨n⟩, Δn)` at every grid time.
pub fn photon_statistics(traj: &Trajectory) -> Vec<(f64, f64)> {
    let n_max = traj.n_max();
    traj.states()
        .map(|psi| photon_moments(&state::photon_distribution(psi, n_max)))
        .collect()
}

/// Mean and standard deviation of a photon-number distribution.
pub fn photon_moments(p: &[f64]) -> (f64, f64) {
    let total: f64 = p.iter().sum();
    let mean = p.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / total;
    let var = p
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let d = n as f64 - mean;
            d * d * p
        })
        .sum::<f64>()
        / total;
    (mean, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPeak {
    /// kHz relative to the rotating frame.
    pub frequency: f64,
    pub intensity: f64,
    pub transition: Option<DressedTransition>,
}

/// Intensity `|ξ_F(ω)|²` of `ξ_F(ω) = (1/2π) Σ_j ξ_j e^{−iωt_j} dt` on a uniform frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Ascending frequencies in kHz.
    pub frequencies: Vec<f64>,
    /// Intensity with ω in rad/μs and ξ in kHz.
    pub intensity: Vec<f64>,
    pub labeled_peaks: Vec<LabeledPeak>,
}

impl SpectrumResult {
    pub fn new(frequencies: Vec<f64>, intensity: Vec<f64>) -> Self {
        Self {
            frequencies,
            intensity,
            labeled_peaks: Vec::new(),
        }
    }

    /// Frequency spacing, kHz.
    pub fn spacing(&self) -> f64 {
        match self.frequencies.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }

    /// `2π Σ I(ω) dω`, equal to `Σ |ξ_j|² dt` for an unpadded-or-padded DFT.
    pub fn energy(&self) -> f64 {
        TAU * self.intensity.iter().sum::<f64>() * self.spacing() * KHZ
    }

    /// Local maxima whose intensity is at least `fraction` of the global maximum.
    pub fn peaks(&self, fraction: f64) -> Vec<(f64, f64)> {
        let i = &self.intensity;
        let max = i.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        let floor = fraction * max;
        (0..i.len())
            .filter(|&k| {
                let left = if k > 0 { i[k - 1] } else { f64::NEG_INFINITY };
                let right = if k + 1 < i.len() { i[k + 1] } else { f64::NEG_INFINITY };
                i[k] >= floor && i[k] > left && i[k] >= right
            })
            .map(|k| (self.frequencies[k], i[k]))
            .collect()
    }
}

/// Default peak threshold relative to the strongest peak.
pub const PEAK_THRESHOLD: f64 = 0.01;

/// Matches each peak to the dressed transition whose drive frequency is closest,
/// within `tolerance` kHz; peaks without a match stay unlabeled.
pub fn label_peaks(spectrum: &SpectrumResult, dressed: &DressedSpectrum, tolerance: f64) -> Vec<LabeledPeak> {
    label_peaks_with(spectrum, dressed, tolerance, PEAK_THRESHOLD)
}

pub fn label_peaks_with(
    spectrum: &SpectrumResult,
    dressed: &DressedSpectrum,
    tolerance: f64,
    threshold: f64,
) -> Vec<LabeledPeak> {
    let transitions = dressed.transitions();
    spectrum
        .peaks(threshold)
        .into_iter()
        .map(|(frequency, intensity)| {
            let transition = transitions
                .iter()
                .map(|t| (t, (frequency - t.drive_frequency() / KHZ).abs()))
                .filter(|(_, d)| *d <= tolerance)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(t, _)| *t);
            LabeledPeak {
                frequency,
                intensity,
                transition,
            }
        })
        .collect()
}
