//! On-disk formats: pulse files, iteration logs, states and series CSVs.

use std::fmt::Write as _;

use jc_core::ensemble::CopyKey;
use jc_core::krotov::IterationRecord;
use jc_core::observables::{LabeledPeak, SpectrumResult};
use jc_core::{Atom, Channel, Complexity, ControlSet, StateVector, TimeGrid, C64};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!("jc-oct ", env!("CARGO_PKG_VERSION"));

pub const PULSE_MAGIC: &str = "# jc-pulse v1";

pub const PULSE_COLUMNS: &str = "t_us,re_omega_kHz,im_omega_kHz,re_eta_kHz,im_eta_kHz,stark_kHz";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("pulse file is empty")]
    Empty,
    #[error("pulse file line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Comment line naming the tool version and the hash of the config that produced a file.
pub fn provenance(config_sha256: &str) -> String {
    format!("# {TOOL_VERSION}; config_sha256={config_sha256}")
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pulse file text: one row per control-grid midpoint, 17 significant digits.
pub fn write_pulse(controls: &ControlSet, grid: &TimeGrid, config_sha256: &str) -> String {
    let n = controls.n_steps();
    let mut out = String::with_capacity(120 * (n + 3));
    writeln!(out, "{PULSE_MAGIC}; dt_us={}; n={n}", num(grid.dt())).unwrap();
    writeln!(out, "{}", provenance(config_sha256)).unwrap();
    writeln!(out, "{PULSE_COLUMNS}").unwrap();
    for j in 0..n {
        let [a, b, c, d, s] = controls.values_at(j);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            num(grid.control_time(j)),
            num(a),
            num(b),
            num(c),
            num(d),
            num(s)
        )
        .unwrap();
    }
    out
}

/// Parsed pulse file.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseData {
    pub dt: f64,
    /// Per row: `[re Ω, im Ω, re η, im η, Δ]` in kHz.
    pub rows: Vec<[f64; 5]>,
}

impl PulseData {
    pub fn n_steps(&self) -> usize {
        self.rows.len()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.rows.len() as f64
    }

    pub fn samples(&self, channel: Channel) -> Vec<C64> {
        self.rows
            .iter()
            .map(|r| match channel {
                Channel::Atom => C64::new(r[0], r[1]),
                Channel::Cavity => C64::new(r[2], r[3]),
                Channel::Stark => C64::new(r[4], 0.0),
            })
            .collect()
    }

    /// Channels carrying any nonzero sample, complex if any imaginary part is nonzero.
    pub fn inferred_layout(&self) -> [Option<Complexity>; 3] {
        Channel::ALL.map(|ch| {
            let s = self.samples(ch);
            if s.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                None
            } else if s.iter().any(|z| z.im != 0.0) {
                Some(Complexity::Complex)
            } else {
                Some(Complexity::Real)
            }
        })
    }

    /// Builds a control set with the given channel layout; samples of disabled channels must be zero.
    pub fn controls(&self, layout: [Option<Complexity>; 3]) -> jc_core::Result<ControlSet> {
        let mut c = ControlSet::zeros(self.n_steps());
        for (ch, kind) in Channel::ALL.into_iter().zip(layout) {
            let s = self.samples(ch);
            match kind {
                Some(kind) => c.set_channel(ch, kind, s)?,
                None if s.iter().any(|z| z.norm() != 0.0) => {
                    return Err(jc_core::Error::InvalidParameter(format!(
                        "pulse file drives the {} channel, which the configuration leaves disabled",
                        ch.name()
                    )))
                }
                None => {}
            }
        }
        Ok(c)
    }
}

fn malformed(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        line,
        message: message.into(),
    }
}

pub fn read_pulse(text: &str) -> Result<PulseData, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.find(|(_, l)| !l.is_empty()).ok_or(FormatError::Empty)?;
    let rest = header
        .strip_prefix(PULSE_MAGIC)
        .ok_or_else(|| malformed(1, format!("expected header starting with '{PULSE_MAGIC}'")))?;
    let mut dt = None;
    let mut n = None;
    for field in rest.split(';').map(str::trim).filter(|f| !f.is_empty()) {
        match field.split_once('=') {
            Some(("dt_us", v)) => dt = v.trim().parse::<f64>().ok(),
            Some(("n", v)) => n = v.trim().parse::<usize>().ok(),
            _ => return Err(malformed(1, format!("unknown header field '{field}'"))),
        }
    }
    let dt = dt
        .filter(|d| *d > 0.0 && d.is_finite())
        .ok_or_else(|| malformed(1, "missing or invalid dt_us"))?;
    let n = n.ok_or_else(|| malformed(1, "missing or invalid n"))?;
    let mut rows = Vec::with_capacity(n);
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('#') || line == PULSE_COLUMNS {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(no, e.to_string()))?;
        if vals.len() != 6 {
            return Err(malformed(no, format!("expected 6 columns, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(malformed(no, "non-finite value"));
        }
        let j = rows.len();
        let t = (j as f64 + 0.5) * dt;
        if (vals[0] - t).abs() > 1e-9 * t.max(1.0) {
            return Err(malformed(
                no,
                format!("time {} does not match row {j} of the grid ({t})", vals[0]),
            ));
        }
        rows.push([vals[1], vals[2], vals[3], vals[4], vals[5]]);
    }
    if rows.len() != n {
        return Err(malformed(
            1,
            format!("header announces {n} rows, file has {}", rows.len()),
        ));
    }
    if n == 0 {
        return Err(FormatError::Empty);
    }
    Ok(PulseData { dt, rows })
}

pub const LOG_COLUMNS: &str = "iter,J,J_tau,J_t,wall_ms";

pub fn log_header(config_sha256: &str) -> String {
    format!("{}\n{LOG_COLUMNS}\n", provenance(config_sha256))
}

pub fn log_line(r: &IterationRecord) -> String {
    format!(
        "{},{},{},{},{:.3}\n",
        r.iteration,
        num(r.j_total),
        num(r.j_tau),
        num(r.j_t),
        r.wall_ms
    )
}

/// Amplitudes per Fock level: `n,re_g,im_g,re_e,im_e`.
pub fn write_state(state: &StateVector, config_sha256: &str) -> String {
    let mut out = format!(
        "{}\n# n_max={}\nn,re_g,im_g,re_e,im_e\n",
        provenance(config_sha256),
        state.n_max()
    );
    for n in 0..=state.n_max() {
        let g = state.amplitude(Atom::Ground, n);
        let e = state.amplitude(Atom::Excited, n);
        writeln!(out, "{n},{},{},{},{}", num(g.re), num(g.im), num(e.re), num(e.im)).unwrap();
    }
    out
}

/// Time series with one column per value: `t_us,<names...>`.
pub fn write_series(times: &[f64], columns: &[&str], rows: &[Vec<f64>], config_sha256: &str) -> String {
    let mut out = format!("{}\nt_us,{}\n", provenance(config_sha256), columns.join(","));
    for (t, row) in times.iter().zip(rows) {
        out.push_str(&num(*t));
        for v in row {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_spectrum(spec: &SpectrumResult, config_sha256: &str) -> String {
    let mut out = format!("{}\nfreq_kHz,intensity\n", provenance(config_sha256));
    for (f, i) in spec.frequencies.iter().zip(&spec.intensity) {
        writeln!(out, "{},{}", num(*f), num(*i)).unwrap();
    }
    out
}

pub fn write_peaks(peaks: &[LabeledPeak], config_sha256: &str) -> String {
    let mut out = format!("{}\nfreq_kHz,intensity,transition\n", provenance(config_sha256));
    for p in peaks {
        let label = p.transition.map(|t| t.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{label}", num(p.frequency), num(p.intensity)).unwrap();
    }
    out
}

pub fn write_per_copy(keys: &[CopyKey], values: &[f64], config_sha256: &str) -> String {
    let mut out = format!(
        "{}\ncopy,x_mm,y_mm,z_mm,xi,freq_offset_kHz,noise_seed,J_tau\n",
        provenance(config_sha256)
    );
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for (i, (k, v)) in keys.iter().zip(values).enumerate() {
        let p = k.position;
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{}",
            opt(p.map(|p| p[0])),
            opt(p.map(|p| p[1])),
            opt(p.map(|p| p[2])),
            opt(k.crosstalk),
            opt(k.frequency_offset),
            k.noise.map(|(_, s)| s.to_string()).unwrap_or_default(),
            num(*v)
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_controls() -> (ControlSet, TimeGrid) {
        let grid = TimeGrid::new(3.0, 7).unwrap();
        let atom = (0..7)
            .map(|j| C64::new(0.1 * j as f64 + 1.0 / 3.0, -(j as f64).sqrt()))
            .collect();
        let stark = (0..7).map(|j| C64::new(std::f64::consts::PI * j as f64, 0.0)).collect();
        let c = ControlSet::zeros(7)
            .with_channel(Channel::Atom, Complexity::Complex, atom)
            .unwrap()
            .with_channel(Channel::Stark, Complexity::Real, stark)
            .unwrap();
        (c, grid)
    }

    #[test]
    fn pulse_round_trip_is_exact() {
        let (c, grid) = sample_controls();
        let text = write_pulse(&c, &grid, "abc");
        assert!(text.starts_with("# jc-pulse v1; dt_us="));
        let data = read_pulse(&text).unwrap();
        assert_eq!(data.dt, grid.dt());
        let back = data.controls(data.inferred_layout()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn malformed_pulses_are_rejected() {
        assert_eq!(read_pulse(""), Err(FormatError::Empty));
        assert!(read_pulse("t,1,2\n").is_err());
        let (c, grid) = sample_controls();
        let text = write_pulse(&c, &grid, "abc");
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(read_pulse(&truncated).is_err());
        let wrong_n = text.replace("n=7", "n=8");
        assert!(read_pulse(&wrong_n).is_err());
    }

    #[test]
    fn disabled_channel_with_samples_is_an_error() {
        let (c, grid) = sample_controls();
        let data = read_pulse(&write_pulse(&c, &grid, "x")).unwrap();
        assert!(data.controls([Some(Complexity::Complex), None, None]).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    proptest::proptest! {
        #[test]
        fn any_finite_pulse_round_trips(
            re in proptest::collection::vec(-1e6f64..1e6, 2..40),
            scale in 1e-3f64..1e3,
            duration in 0.1f64..500.0,
        ) {
            let n = re.len();
            let grid = TimeGrid::new(duration, n).unwrap();
            let atom = re.iter().map(|&x| C64::new(x, -x * scale)).collect();
            let cavity = re.iter().rev().map(|&x| C64::new(x / scale, 0.0)).collect();
            let c = ControlSet::zeros(n)
                .with_channel(Channel::Atom, Complexity::Complex, atom)
                .unwrap()
                .with_channel(Channel::Cavity, Complexity::Real, cavity)
                .unwrap();
            let data = read_pulse(&write_pulse(&c, &grid, "x")).unwrap();
            let layout = [Some(Complexity::Complex), Some(Complexity::Real), None];
            proptest::prop_assert_eq!(data.controls(layout).unwrap(), c);
        }
    }
}
