//! Pulse spectra `ξ_F(ω) = (1/2π) Σ_j ξ(t_j) e^{−iωt_j} dt` by zero-padded FFT.

use jc_core::observables::SpectrumResult;
use jc_core::{TimeGrid, C64};
use rustfft::FftPlanner;

pub const DEFAULT_PADDING: usize = 8;

/// Spectrum of control samples on the midpoint grid of `grid`. `padding`
/// multiplies the transform length; `center` (kHz) is added to the frequency axis.
pub fn pulse_spectrum(samples: &[C64], grid: &TimeGrid, center: f64, padding: usize) -> SpectrumResult {
    let n = samples.len();
    if n == 0 {
        return SpectrumResult::new(Vec::new(), Vec::new());
    }
    let len = n * padding.max(1);
    let dt = grid.dt();
    let mut buf = vec![C64::new(0.0, 0.0); len];
    buf[..n].copy_from_slice(samples);
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let scale = dt / std::f64::consts::TAU;
    // bin k ↔ k/(len·dt) MHz; shift so that frequencies ascend from −len/2
    let df = 1e3 / (len as f64 * dt);
    let half = len / 2;
    let mut frequencies = Vec::with_capacity(len);
    let mut intensity = Vec::with_capacity(len);
    for i in 0..len {
        let k = (i + len - half) % len;
        let signed = i as isize - half as isize;
        frequencies.push(signed as f64 * df + center);
        intensity.push((buf[k] * scale).norm_sqr());
    }
    SpectrumResult::new(frequencies, intensity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parseval_and_symmetry_for_real_pulse() {
        let grid = TimeGrid::new(20.0, 500).unwrap();
        let s: Vec<C64> = (0..500)
            .map(|j| {
                let t = grid.control_time(j);
                C64::new(30.0 * (-(t - 10.0) * (t - 10.0) / 8.0).exp() * (0.3 * t).cos(), 0.0)
            })
            .collect();
        let spec = pulse_spectrum(&s, &grid, 0.0, DEFAULT_PADDING);
        let energy: f64 = s.iter().map(|x| x.norm_sqr()).sum::<f64>() * grid.dt();
        assert!((spec.energy() - energy).abs() < 1e-6 * energy);
        let len = spec.intensity.len();
        let zero = len / 2;
        let peak = spec.intensity.iter().cloned().fold(0.0, f64::max);
        for k in 1..zero {
            let (a, b) = (spec.intensity[zero + k], spec.intensity[zero - k]);
            assert!((a - b).abs() <= 1e-12 * peak);
        }
    }

    #[test]
    fn constant_pulse_peaks_at_zero() {
        let grid = TimeGrid::new(10.0, 100).unwrap();
        let spec = pulse_spectrum(&vec![C64::new(2.0, 0.0); 100], &grid, 0.0, 4);
        let peaks = spec.peaks(0.01);
        let (f, _) = peaks.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(f, 0.0);
        // sinc main lobe: all other maxima are side lobes well below 5%
        assert!(peaks
            .iter()
            .filter(|(g, _)| *g != 0.0)
            .all(|(_, i)| *i < 0.05 * spec.intensity.iter().cloned().fold(0.0, f64::max)));
    }

    #[test]
    fn empty_input_gives_empty_spectrum() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(pulse_spectrum(&[], &grid, 0.0, 8).frequencies.is_empty());
    }
}
