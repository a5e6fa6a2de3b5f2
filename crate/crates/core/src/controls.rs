//! Sampled control envelopes and guess pulses.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::propagation::TimeGrid;
#[allow(unused_imports)]
use num_traits::Float;

/// A drive entering the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    /// Atom drive Ω̃(t).
    Atom,
    /// Cavity drive η̃(t).
    Cavity,
    /// Stark shift Δ(t).
    Stark,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Atom, Channel::Cavity, Channel::Stark];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Atom => "atom",
            Channel::Cavity => "cavity",
            Channel::Stark => "stark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Complexity {
    Real,
    Complex,
}

/// One real degree of freedom of the controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    AtomRe,
    AtomIm,
    CavityRe,
    CavityIm,
    Stark,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::AtomRe,
        Direction::AtomIm,
        Direction::CavityRe,
        Direction::CavityIm,
        Direction::Stark,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn channel(self) -> Channel {
        match self {
            Direction::AtomRe | Direction::AtomIm => Channel::Atom,
            Direction::CavityRe | Direction::CavityIm => Channel::Cavity,
            Direction::Stark => Channel::Stark,
        }
    }

    pub fn is_imaginary(self) -> bool {
        matches!(self, Direction::AtomIm | Direction::CavityIm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSamples {
    pub enabled: bool,
    pub complexity: Complexity,
    /// Envelope samples in kHz at the control-grid midpoints.
    pub samples: Vec<C64>,
}

/// Complex envelopes for the atom, cavity and Stark channels on a control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    n_steps: usize,
    channels: [ChannelSamples; 3],
}

impl ControlSet {
    /// All channels disabled and zero.
    pub fn zeros(n_steps: usize) -> Self {
        let off = ChannelSamples {
            enabled: false,
            complexity: Complexity::Real,
            samples: vec![C64::new(0.0, 0.0); n_steps],
        };
        Self {
            n_steps,
            channels: [off.clone(), off.clone(), off],
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Enables `channel` with the given samples. Real channels must have zero imaginary parts.
    pub fn set_channel(&mut self, channel: Channel, complexity: Complexity, samples: Vec<C64>) -> Result<()> {
        if samples.len() != self.n_steps {
            return Err(Error::DimensionMismatch {
                expected: self.n_steps,
                found: samples.len(),
            });
        }
        if channel == Channel::Stark && complexity == Complexity::Complex {
            return Err(Error::InvalidParameter("the Stark channel is real".into()));
        }
        if complexity == Complexity::Real {
            if let Some(i) = samples.iter().position(|s| s.im != 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{} channel is real but sample {i} has an imaginary part",
                    channel.name()
                )));
            }
        }
        if let Some(i) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} sample {i} is not finite",
                channel.name()
            )));
        }
        self.channels[channel.index()] = ChannelSamples {
            enabled: true,
            complexity,
            samples,
        };
        Ok(())
    }

    pub fn with_channel(mut self, channel: Channel, complexity: Complexity, samples: Vec<C64>) -> Result<Self> {
        self.set_channel(channel, complexity, samples)?;
        Ok(self)
    }

    pub fn channel(&self, channel: Channel) -> &ChannelSamples {
        &self.channels[channel.index()]
    }

    pub fn samples(&self, channel: Channel) -> &[C64] {
        &self.channels[channel.index()].samples
    }

    pub fn is_enabled(&self, channel: Channel) -> bool {
        self.channels[channel.index()].enabled
    }

    /// Real directions that the optimizer may change.
    pub fn active_directions(&self) -> Vec<Direction> {
        Direction::ALL
            .into_iter()
            .filter(|d| {
                let ch = self.channel(d.channel());
                ch.enabled && (!d.is_imaginary() || ch.complexity == Complexity::Complex)
            })
            .collect()
    }

    /// Value of a real direction at control step `j`.
    #[inline]
    pub fn direction_value(&self, direction: Direction, j: usize) -> f64 {
        let s = self.channels[direction.channel().index()].samples[j];
        if direction.is_imaginary() {
            s.im
        } else {
            s.re
        }
    }

    /// All five real direction values at step `j`.
    #[inline]
    pub fn values_at(&self, j: usize) -> [f64; 5] {
        let a = self.channels[0].samples[j];
        let c = self.channels[1].samples[j];
        let s = self.channels[2].samples[j];
        [a.re, a.im, c.re, c.im, s.re]
    }

    #[inline]
    pub(crate) fn add_to_direction(&mut self, direction: Direction, j: usize, delta: f64) {
        let s = &mut self.channels[direction.channel().index()].samples[j];
        if direction.is_imaginary() {
            s.im += delta;
        } else {
            s.re += delta;
        }
    }

    /// Replaces every block of `block` consecutive samples by its mean.
    pub fn block_averaged(&self, block: usize) -> ControlSet {
        let mut out = self.clone();
        if block <= 1 {
            return out;
        }
        for ch in &mut out.channels {
            for chunk in ch.samples.chunks_mut(block) {
                let mean = chunk.iter().sum::<C64>() / chunk.len() as f64;
                chunk.iter_mut().for_each(|s| *s = mean);
            }
        }
        out
    }

    /// Largest absolute sample over all channels, kHz.
    pub fn max_amplitude(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.samples.iter())
            .map(|s| s.norm())
            .fold(0.0, f64::max)
    }
}

/// Gaussian envelope `A exp(-(t - t_c)²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    /// Peak amplitude, kHz.
    pub amplitude: f64,
    /// Width, μs.
    pub sigma: f64,
    /// Center, μs; `None` centers the pulse in the interaction window.
    pub center: Option<f64>,
}

impl Gaussian {
    pub fn new(amplitude: f64, sigma: f64) -> Self {
        Self {
            amplitude,
            sigma,
            center: None,
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> Vec<C64> {
        let center = self.center.unwrap_or(0.5 * grid.duration());
        (0..grid.n_steps())
            .map(|j| {
                let x = (grid.control_time(j) - center) / self.sigma;
                C64::new(self.amplitude * (-0.5 * x * x).exp(), 0.0)
            })
            .collect()
    }
}

/// Guess pulse for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGuess {
    pub complexity: Complexity,
    pub shape: Gaussian,
}

/// Guess pulses per channel; `None` leaves the channel disabled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GuessSpec {
    pub atom: Option<ChannelGuess>,
    pub cavity: Option<ChannelGuess>,
    pub stark: Option<ChannelGuess>,
}

impl GuessSpec {
    /// Real atom drive, 40 kHz peak, σ = 5 μs.
    pub fn fock4() -> Self {
        Self {
            atom: Some(ChannelGuess {
                complexity: Complexity::Real,
                shape: Gaussian::new(40.0, 5.0),
            }),
            ..Self::default()
        }
    }

    /// Complex atom drive, 50 kHz peak, σ = 2.5 μs.
    pub fn sup02() -> Self {
        Self {
            atom: Some(ChannelGuess {
                complexity: Complexity::Complex,
                shape: Gaussian::new(50.0, 2.5),
            }),
            ..Self::default()
        }
    }

    /// Complex atom drive (10 kHz) and complex cavity drive (1 kHz), σ = 2.5 μs.
    pub fn cat() -> Self {
        Self {
            atom: Some(ChannelGuess {
                complexity: Complexity::Complex,
                shape: Gaussian::new(10.0, 2.5),
            }),
            cavity: Some(ChannelGuess {
                complexity: Complexity::Complex,
                shape: Gaussian::new(1.0, 2.5),
            }),
            stark: None,
        }
    }

    pub fn get(&self, channel: Channel) -> Option<&ChannelGuess> {
        match channel {
            Channel::Atom => self.atom.as_ref(),
            Channel::Cavity => self.cavity.as_ref(),
            Channel::Stark => self.stark.as_ref(),
        }
    }

    pub fn build(&self, grid: &TimeGrid) -> Result<ControlSet> {
        let mut set = ControlSet::zeros(grid.n_steps());
        for ch in Channel::ALL {
            if let Some(g) = self.get(ch) {
                set.set_channel(ch, g.complexity, g.shape.sample(grid))?;
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_channel_rejects_imaginary_samples() {
        let mut c = ControlSet::zeros(3);
        let err = c.set_channel(Channel::Atom, Complexity::Real, vec![C64::new(1.0, 0.1); 3]);
        assert!(err.is_err());
        assert!(c
            .set_channel(Channel::Stark, Complexity::Complex, vec![C64::new(1.0, 0.0); 3])
            .is_err());
        assert!(c
            .set_channel(Channel::Atom, Complexity::Real, vec![C64::new(1.0, 0.0); 2])
            .is_err());
    }

    #[test]
    fn active_directions_follow_complexity() {
        let grid = TimeGrid::new(10.0, 10).unwrap();
        let c = GuessSpec::cat().build(&grid).unwrap();
        assert_eq!(
            c.active_directions(),
            vec![
                Direction::AtomRe,
                Direction::AtomIm,
                Direction::CavityRe,
                Direction::CavityIm
            ]
        );
        let c = GuessSpec::fock4().build(&grid).unwrap();
        assert_eq!(c.active_directions(), vec![Direction::AtomRe]);
    }

    #[test]
    fn fock4_guess_is_close_to_a_pi_pulse() {
        let grid = TimeGrid::new(40.0, 4000).unwrap();
        let c = GuessSpec::fock4().build(&grid).unwrap();
        let area: f64 = c.samples(Channel::Atom).iter().map(|s| s.re).sum::<f64>() * grid.dt();
        // 2π × 40 kHz × 5 μs × √(2π)
        let area = area * crate::model::KHZ;
        assert!((area - core::f64::consts::PI).abs() < 0.01);
        let peak = c.max_amplitude();
        assert!((peak - 40.0).abs() < 1e-3);
    }

    #[test]
    fn block_average_is_piecewise_constant() {
        let grid = TimeGrid::new(10.0, 100).unwrap();
        let c = GuessSpec::sup02().build(&grid).unwrap().block_averaged(10);
        let s = c.samples(Channel::Atom);
        for block in s.chunks(10) {
            assert!(block.iter().all(|x| *x == block[0]));
        }
    }
}
