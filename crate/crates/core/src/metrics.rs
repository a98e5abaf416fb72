//! Photon-number and overlap figures of merit for output spectra.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use crate::distributions::SpectralProfile;
use crate::error::{Error, Result};
use crate::grid::{fmt_digits, FrequencyGrid, SpectralField, SIG_DIGITS};
use crate::transducer::StoredExcitation;

/// Efficiency above which the channel has nonzero quantum capacity.
pub const CAPACITY_THRESHOLD: f64 = 0.5;

/// Ratio of outgoing to incoming photon number.
pub fn efficiency(e_out: &SpectralField, e_in: &SpectralField) -> Result<f64> {
    let n_in = e_in.norm();
    if !(n_in > 0.0) {
        return Err(Error::invalid("input field has zero photon number"));
    }
    Ok(e_out.norm() / n_in)
}

/// Photon number `∫|E_out|² dω` of the emitted field.
pub fn retrieval_probability(e_out: &SpectralField) -> f64 {
    e_out.norm()
}

/// Normalized overlap `|⟨E_out, E_ref⟩| / (‖E_out‖‖E_ref‖)`.
pub fn fidelity(e_out: &SpectralField, reference: &SpectralField) -> Result<f64> {
    let (a, b) = (e_out.norm(), reference.norm());
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::invalid("fidelity needs two nonzero fields"));
    }
    let ov = e_out.inner(reference)?;
    Ok((ov.norm() / (a * b).sqrt()).min(1.0))
}

/// Reference spectrum shaped like the stored excitation, `E₀(ω) ∝ f(ω)`.
pub fn reference_excitation(f: &StoredExcitation, grid: &FrequencyGrid) -> SpectralField {
    SpectralField::from_fn(*grid, |w| f.value(w))
}

/// Reference spectrum shaped like the emitter line, `E₀(ω) ∝ n(ω)`.
///
/// The phase of `f(ω)` is attached so the reference carries the same
/// emission time as the stored excitation; a real `n(ω)` alone would mostly
/// measure the emission delay.
pub fn reference_line(
    profile: &SpectralProfile,
    f: &StoredExcitation,
    grid: &FrequencyGrid,
) -> SpectralField {
    SpectralField::from_fn(*grid, |w| {
        let v = f.value(w);
        let phase = if v.norm() > 0.0 {
            v / v.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        phase * profile.density(w)
    })
}

/// Real, phase-free line reference `E₀(ω) = n(ω)`.
pub fn reference_line_real(profile: &SpectralProfile, grid: &FrequencyGrid) -> SpectralField {
    SpectralField::from_fn(*grid, |w| C64::new(profile.density(w), 0.0))
}

/// Figures of merit for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub efficiency: Option<f64>,
    pub probability: f64,
    pub fidelity_f: Option<f64>,
    pub fidelity_n: Option<f64>,
    pub leakage: Option<f64>,
    pub grid: FrequencyGrid,
}

impl MetricsReport {
    pub fn new(probability: f64, grid: FrequencyGrid) -> Self {
        MetricsReport {
            efficiency: None,
            probability,
            fidelity_f: None,
            fidelity_n: None,
            leakage: None,
            grid,
        }
    }

    /// Whether the efficiency exceeds the quantum-capacity threshold.
    pub fn above_capacity_threshold(&self) -> Option<bool> {
        self.efficiency.map(|e| e > CAPACITY_THRESHOLD)
    }

    fn fields(&self, digits: usize) -> Vec<(&'static str, String)> {
        let fmt_sig = |x: f64| fmt_digits(x, digits);
        let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_else(|| "nan".to_string());
        vec![
            ("efficiency", opt(self.efficiency)),
            ("probability", fmt_sig(self.probability)),
            ("fidelity_f", opt(self.fidelity_f)),
            ("fidelity_n", opt(self.fidelity_n)),
            ("leakage", opt(self.leakage)),
            (
                "above_capacity_threshold",
                self.above_capacity_threshold()
                    .map(|b| b.to_string())
                    .unwrap_or_else(|| "nan".into()),
            ),
            ("grid_min", fmt_sig(self.grid.omega_min())),
            ("grid_max", fmt_sig(self.grid.omega_max())),
            ("grid_points", self.grid.len().to_string()),
        ]
    }

    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields(SIG_DIGITS) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn csv_header() -> String {
        "efficiency,probability,fidelity_f,fidelity_n,leakage,above_capacity_threshold,grid_min,grid_max,grid_points"
            .to_string()
    }

    pub fn csv_row(&self) -> String {
        self.csv_row_digits(SIG_DIGITS)
    }

    pub fn csv_row_digits(&self, digits: usize) -> String {
        self.fields(digits)
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::symmetric(10.0, 401).unwrap()
    }

    fn pulse(t: f64, carrier: f64) -> SpectralField {
        SpectralField::gaussian_pulse(grid(), 1.0, t, carrier)
    }

    #[test]
    fn efficiency_examples() {
        let e = pulse(0.0, 0.0);
        assert!((efficiency(&e, &e).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(efficiency(&SpectralField::zeros(grid()), &e).unwrap(), 0.0);
        let half = e.scaled(C64::new(0.5f64.sqrt(), 0.0));
        assert!((efficiency(&half, &e).unwrap() - 0.5).abs() < 1e-14);
        assert!(efficiency(&e, &SpectralField::zeros(grid())).is_err());
    }

    #[test]
    fn probability_of_unit_pulse() {
        assert!((retrieval_probability(&pulse(0.0, 0.0)) - 1.0).abs() < 1e-10);
        assert_eq!(retrieval_probability(&SpectralField::zeros(grid())), 0.0);
    }

    #[test]
    fn fidelity_limits() {
        let e = pulse(1.0, 0.0);
        assert!((fidelity(&e.scaled(C64::new(0.0, -3.0)), &e).unwrap() - 1.0).abs() < 1e-12);
        let a = SpectralField::gaussian_pulse(grid(), 3.0, 0.0, -6.0);
        let b = SpectralField::gaussian_pulse(grid(), 3.0, 0.0, 6.0);
        assert!(fidelity(&a, &b).unwrap() < 1e-12);
        assert!(fidelity(&a, &SpectralField::zeros(grid())).is_err());
    }

    #[test]
    fn probability_adds_for_disjoint_spectra() {
        let a = SpectralField::gaussian_pulse(grid(), 3.0, 0.0, -6.0);
        let b = SpectralField::gaussian_pulse(grid(), 3.0, 0.0, 6.0);
        let sum = SpectralField::new(
            grid(),
            a.amplitude()
                .iter()
                .zip(b.amplitude())
                .map(|(x, y)| x + y)
                .collect(),
        )
        .unwrap();
        let lhs = retrieval_probability(&sum);
        assert!((lhs - retrieval_probability(&a) - retrieval_probability(&b)).abs() < 1e-12);
    }

    #[test]
    fn report_serializes() {
        let mut r = MetricsReport::new(0.7, grid());
        r.efficiency = Some(0.7);
        let kv = r.to_key_value();
        assert!(kv.contains("probability=7.00000000000e-1"));
        assert!(kv.contains("above_capacity_threshold=true"));
        assert!(kv.contains("fidelity_f=nan"));
        assert_eq!(
            MetricsReport::csv_header().split(',').count(),
            r.csv_row().split(',').count()
        );
    }

    proptest! {
        #[test]
        fn fidelity_scale_and_phase_invariant(
            t1 in -2.0f64..2.0, t2 in -2.0f64..2.0, w in -2.0f64..2.0,
            a in 0.01f64..100.0, pa in 0.0f64..6.3, b in 0.01f64..100.0, pb in 0.0f64..6.3,
        ) {
            let x = pulse(t1, 0.0);
            let y = pulse(t2, w);
            let f0 = fidelity(&x, &y).unwrap();
            let f1 = fidelity(&x.scaled(C64::from_polar(a, pa)), &y.scaled(C64::from_polar(b, pb))).unwrap();
            prop_assert!((f0 - f1).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&f0));
        }
    }
}
