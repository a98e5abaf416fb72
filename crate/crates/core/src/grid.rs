//! Frequency and space grids and the complex spectral field container.
//!
//! Units throughout the crate: angular frequency in rad/ns, time in ns,
//! length in m, velocity in m/ns.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::quad;

/// Uniform grid of angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::invalid(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        if !(omega_min.is_finite() && omega_max.is_finite()) || omega_max <= omega_min {
            return Err(Error::invalid(format!(
                "grid bounds must satisfy omega_min < omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        Ok(FrequencyGrid {
            omega_min,
            omega_max,
            n_points,
        })
    }

    /// Grid on `[-half_width, half_width]` with an odd number of points, so
    /// that zero and every negated point are grid points.
    pub fn symmetric(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::invalid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "symmetric grid needs an odd point count >= 3, got {n_points}"
            )));
        }
        Self::new(-half_width, half_width, n_points)
    }

    /// Default grid for spectra of the given widths: half width
    /// `8·max(widths)` and spacing at most `min(widths)/50`.
    pub fn for_widths(widths: &[f64]) -> Result<Self> {
        let max = widths.iter().copied().fold(0.0, f64::max);
        let min = widths
            .iter()
            .copied()
            .filter(|w| *w > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !(max > 0.0) {
            return Err(Error::invalid("at least one positive width is required"));
        }
        let half = 8.0 * max;
        let mut n = (2.0 * half / (min / 50.0)).ceil() as usize + 1;
        if n.is_multiple_of(2) {
            n += 1;
        }
        Self::symmetric(half, n.max(3))
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.omega_max
        } else {
            self.omega_min + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point equal to `omega` (within a tenth of a step).
    pub fn index_of(&self, omega: f64) -> Option<usize> {
        let x = (omega - self.omega_min) / self.spacing();
        let i = x.round();
        if (x - i).abs() < 0.1 && i >= 0.0 && (i as usize) < self.n_points {
            Some(i as usize)
        } else {
            None
        }
    }
}

/// Uniform grid of positions on `[0, L]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    length: f64,
    n_points: usize,
}

impl SpaceGrid {
    pub fn new(length: f64, n_points: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid(format!(
                "medium length must be positive, got {length}"
            )));
        }
        if n_points < 2 {
            return Err(Error::invalid("space grid needs at least 2 points"));
        }
        Ok(SpaceGrid { length, n_points })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.length
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }
}

/// Complex photon amplitude sampled on a frequency grid, normalized so
/// that `∫|E(ω)|² dω` is a photon number.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: FrequencyGrid,
    amplitude: Vec<C64>,
}

impl SpectralField {
    pub fn new(grid: FrequencyGrid, amplitude: Vec<C64>) -> Result<Self> {
        if amplitude.len() != grid.len() {
            return Err(Error::invalid(format!(
                "amplitude has {} samples but grid has {}",
                amplitude.len(),
                grid.len()
            )));
        }
        if let Some(i) = amplitude
            .iter()
            .position(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(Error::invalid(format!("non-finite amplitude at index {i}")));
        }
        Ok(SpectralField { grid, amplitude })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        SpectralField {
            grid,
            amplitude: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> C64) -> Self {
        let amplitude = grid.points().into_iter().map(f).collect();
        SpectralField { grid, amplitude }
    }

    /// Spectrum of the temporal pulse
    /// `E(t) = A·exp(−(t − t_peak)²/(2τ²))·exp(−i·ω_c·t)`, with `A` chosen so
    /// the continuous spectrum carries one photon.
    ///
    /// Fourier convention: `E(ω) = (2π)^{-1/2} ∫ E(t) e^{iωt} dt`.
    pub fn gaussian_pulse(grid: FrequencyGrid, tau: f64, t_peak: f64, carrier: f64) -> Self {
        let amp = 1.0 / (tau * std::f64::consts::PI.sqrt()).sqrt() * tau;
        Self::from_fn(grid, |w| {
            let x = w - carrier;
            C64::from_polar(amp * (-0.5 * x * x * tau * tau).exp(), x * t_peak)
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn amplitude(&self) -> &[C64] {
        &self.amplitude
    }

    pub fn into_amplitude(self) -> Vec<C64> {
        self.amplitude
    }

    /// Trapezoid estimate of `∫|E|² dω`.
    pub fn norm(&self) -> f64 {
        let w = self.grid.points();
        let p: Vec<f64> = self.amplitude.iter().map(|a| a.norm_sqr()).collect();
        quad::trapezoid(&w, &p)
    }

    /// Trapezoid estimate of `∫ conj(self)·other dω`.
    pub fn inner(&self, other: &SpectralField) -> Result<C64> {
        self.check_same_grid(other)?;
        let w = self.grid.points();
        let p: Vec<C64> = self
            .amplitude
            .iter()
            .zip(&other.amplitude)
            .map(|(a, b)| a.conj() * b)
            .collect();
        Ok(quad::trapezoid(&w, &p))
    }

    pub fn scaled(&self, s: C64) -> SpectralField {
        self.map(|_, a| a * s)
    }

    pub fn map(&self, f: impl Fn(f64, C64) -> C64) -> SpectralField {
        let amplitude = self
            .grid
            .points()
            .into_iter()
            .zip(&self.amplitude)
            .map(|(w, &a)| f(w, a))
            .collect();
        SpectralField {
            grid: self.grid,
            amplitude,
        }
    }

    /// Rescale to unit photon number.
    pub fn normalized(&self) -> Result<SpectralField> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::invalid("cannot normalize a zero field"));
        }
        Ok(self.scaled(C64::new(1.0 / n.sqrt(), 0.0)))
    }

    /// `E(−ω)` on the same grid (zero where `−ω` falls outside).
    pub fn reversed(&self) -> SpectralField {
        let w = self.grid.points();
        SpectralField::from_fn(self.grid, |x| quad::interp(&w, &self.amplitude, -x))
    }

    pub fn check_same_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::invalid("fields live on different frequency grids"));
        }
        Ok(())
    }

    /// Write `ω, Re E, Im E, |E|²` rows.
    pub fn write_csv(&self, path: &Path, header_comment: &str) -> Result<()> {
        self.write_csv_digits(path, header_comment, SIG_DIGITS)
    }

    pub fn write_csv_digits(&self, path: &Path, header_comment: &str, digits: usize) -> Result<()> {
        let mut out = String::new();
        if !header_comment.is_empty() {
            out.push_str(&format!("# {header_comment}\n"));
        }
        out.push_str("omega,re,im,intensity\n");
        for (w, a) in self.grid.points().iter().zip(&self.amplitude) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_digits(*w, digits),
                fmt_digits(a.re, digits),
                fmt_digits(a.im, digits),
                fmt_digits(a.norm_sqr(), digits)
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Photon number `∫|E|² dω` of a field.
pub fn field_norm(field: &SpectralField) -> f64 {
    field.norm()
}

/// Significant digits of every number written to CSV.
pub const SIG_DIGITS: usize = 12;

/// Format with 12 significant digits.
pub fn fmt_sig(x: f64) -> String {
    fmt_digits(x, SIG_DIGITS)
}

/// Format with `digits` significant digits in scientific notation.
pub fn fmt_digits(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{:.*e}", digits.max(1) - 1, x)
}
