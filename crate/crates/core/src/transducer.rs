//! Optical emission from an excitation stored on a microwave transition.
//!
//! A fast read pulse hands the stored amplitude `f(Δ)` to the optical
//! polarization, which then radiates through the medium. The output
//! spectrum is available from the full position integral
//! ([`mw_output_general`]), the spatially uniform closed form
//! ([`mw_output_uniform`]) and two asymptotic regimes ([`mw_output_approx`]).

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::distributions::{read_columns, EmitterDistribution, SpectralProfile};
use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, SpectralField};
use crate::par;
use crate::quad::{self, GaussPanels, Tolerance};
use crate::response::{h_table, response_h_profile_tol};
use crate::transition::TransitionParams;

/// Half-width of a Gaussian excitation's integration support, in widths.
const GAUSSIAN_SUPPORT: f64 = 9.0;

/// Unnormalized shape of the stored amplitude.
#[derive(Debug, Clone, PartialEq)]
pub enum ExcitationShape {
    /// `e^{−(Δ−Δc)²/δω²} e^{iΔ t_c}`.
    Gaussian {
        width: f64,
        emission_time: f64,
        center: f64,
    },
    /// Piecewise-linear complex samples, zero outside the table.
    Tabulated { deltas: Vec<f64>, values: Vec<C64> },
}

impl ExcitationShape {
    pub fn gaussian(width: f64, emission_time: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !emission_time.is_finite() {
            return Err(Error::invalid(
                "excitation width must be positive and finite",
            ));
        }
        Ok(ExcitationShape::Gaussian {
            width,
            emission_time,
            center: 0.0,
        })
    }

    pub fn tabulated(deltas: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if deltas.len() != values.len() || deltas.len() < 2 {
            return Err(Error::invalid("excitation table needs at least two rows"));
        }
        if deltas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "excitation detunings must be strictly increasing",
            ));
        }
        Ok(ExcitationShape::Tabulated { deltas, values })
    }

    /// Parse three columns: detuning, real part, imaginary part.
    pub fn from_table_text(text: &str) -> Result<Self> {
        let rows = read_columns(text, 3)?;
        let deltas = rows.iter().map(|r| r[0]).collect();
        let values = rows.iter().map(|r| C64::new(r[1], r[2])).collect();
        Self::tabulated(deltas, values)
    }

    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table_text(&text)
    }

    pub fn scaled(&self, s: C64) -> Self {
        match self {
            ExcitationShape::Tabulated { deltas, values } => ExcitationShape::Tabulated {
                deltas: deltas.clone(),
                values: values.iter().map(|v| v * s).collect(),
            },
            // A Gaussian carries no amplitude; normalization removes it anyway.
            g => g.clone(),
        }
    }

    pub fn value(&self, delta: f64) -> C64 {
        match self {
            ExcitationShape::Gaussian {
                width,
                emission_time,
                center,
            } => {
                let x = (delta - center) / width;
                C64::from_polar((-x * x).exp(), delta * emission_time)
            }
            ExcitationShape::Tabulated { deltas, values } => quad::interp(deltas, values, delta),
        }
    }

    /// Interval outside which the shape vanishes (to double precision).
    pub fn support(&self) -> (f64, f64) {
        match self {
            ExcitationShape::Gaussian { width, center, .. } => (
                center - GAUSSIAN_SUPPORT * width,
                center + GAUSSIAN_SUPPORT * width,
            ),
            ExcitationShape::Tabulated { deltas, .. } => (deltas[0], deltas[deltas.len() - 1]),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            ExcitationShape::Gaussian { width, center, .. } => {
                vec![center - 2.0 * width, *center, center + 2.0 * width]
            }
            ExcitationShape::Tabulated { deltas, .. } => deltas.clone(),
        }
    }

    /// Spectral width used for default grids.
    pub fn width(&self) -> f64 {
        match self {
            ExcitationShape::Gaussian { width, .. } => *width,
            ExcitationShape::Tabulated { deltas, .. } => {
                0.5 * (deltas[deltas.len() - 1] - deltas[0])
            }
        }
    }
}

/// Stored amplitude `f(Δ) = 𝒩·shape(Δ)`, normalized so the medium holds
/// exactly one excitation.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredExcitation {
    shape: ExcitationShape,
    norm: f64,
}

impl StoredExcitation {
    pub fn shape(&self) -> &ExcitationShape {
        &self.shape
    }

    /// Normalization constant `𝒩`.
    pub fn norm_constant(&self) -> f64 {
        self.norm
    }

    pub fn value(&self, delta: f64) -> C64 {
        self.shape.value(delta) * self.norm
    }
}

/// `∫ n(Δ) shape(Δ) / (i(Δ − ω) + γ/2) dΔ` (or the `|shape|²` overlap when
/// `omega` is `None`) over the common support of density and excitation.
fn overlap_domain(
    profile: &SpectralProfile,
    shape: &ExcitationShape,
) -> Option<(f64, f64, Vec<f64>)> {
    let (a0, b0) = profile.domain();
    let (a1, b1) = shape.support();
    let (a, b) = (a0.max(a1), b0.min(b1));
    if !(b > a) {
        return None;
    }
    let mut br: Vec<f64> = profile
        .breakpoints()
        .into_iter()
        .chain(shape.breakpoints())
        .collect();
    br.retain(|x| *x > a && *x < b);
    Some((a, b, br))
}

fn density_overlap(profile: &SpectralProfile, shape: &ExcitationShape) -> Result<f64> {
    let Some((a, b, br)) = overlap_domain(profile, shape) else {
        return Ok(0.0);
    };
    let e = quad::adaptive(
        |d| C64::new(profile.density(d) * shape.value(d).norm_sqr(), 0.0),
        a,
        b,
        &br,
        Tolerance::with_rel(1e-12),
    )?;
    Ok(e.value.re)
}

/// Solve for `𝒩` so that `(L/c) ∫dz ∫dΔ G |f|² = 1`.
pub fn normalize_excitation(
    shape: ExcitationShape,
    dist: &EmitterDistribution,
    params: &TransitionParams,
) -> Result<StoredExcitation> {
    let integral = match dist {
        EmitterDistribution::Separable { spatial, spectral } => {
            spatial.mass() * density_overlap(spectral, &shape)?
        }
        EmitterDistribution::Tabulated {
            zs, deltas, values, ..
        } => {
            let nd = deltas.len();
            let w: Vec<f64> = deltas.iter().map(|&d| shape.value(d).norm_sqr()).collect();
            let rows: Vec<f64> = (0..zs.len())
                .map(|i| {
                    let p: Vec<f64> = (0..nd).map(|j| values[i * nd + j] * w[j]).collect();
                    quad::trapezoid(deltas, &p)
                })
                .collect();
            quad::trapezoid(zs, &rows)
        }
    };
    if !(integral > 0.0) || !integral.is_finite() {
        return Err(Error::invalid(
            "stored excitation has no overlap with the emitter distribution",
        ));
    }
    let norm = (params.c() / (params.length() * integral)).sqrt();
    Ok(StoredExcitation { shape, norm })
}

/// `𝒞(ω) = (2π n0)⁻¹ ∫ n f / (i(Δ − ω) + γ/2) dΔ` for a normalized excitation.
pub fn excitation_response(
    profile: &SpectralProfile,
    f: &StoredExcitation,
    gamma: f64,
    omega: f64,
    tol: Tolerance,
) -> Result<C64> {
    let Some((a, b, br)) = overlap_domain(profile, &f.shape) else {
        return Ok(C64::new(0.0, 0.0));
    };
    let e = quad::pole_integral_fn(
        |d| f.value(d) * profile.density(d),
        a,
        b,
        omega,
        0.5 * gamma,
        1.0,
        &br,
        tol,
    )?;
    Ok(e.value / (2.0 * PI * profile.peak()))
}

/// Asymptotic regimes of the uniform-medium output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Lowest order in the optical depth.
    LowDepth,
    /// Line and excitation far narrower than the cutoff.
    LargeCutoff,
}

/// Options shared by the output evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputOptions {
    /// Keep the `e^{iωL/c′}` read-pulse transit phase. Off by default: it
    /// only shifts the emission time origin.
    pub control_phase: bool,
}

/// `ℋ` and `𝒞` tabulated on an output grid for one profile, excitation and
/// decay rate. Independent of `d`, so a depth sweep evaluates them once.
#[derive(Debug, Clone)]
pub struct TransducerSpectra {
    grid: FrequencyGrid,
    gamma: f64,
    h: Vec<C64>,
    c: Vec<C64>,
    n0: f64,
}

impl TransducerSpectra {
    pub fn new(
        profile: &SpectralProfile,
        f: &StoredExcitation,
        gamma: f64,
        grid: FrequencyGrid,
        tol: Tolerance,
    ) -> Result<Self> {
        let pts = grid.points();
        let h = par::try_map_range(pts.len(), |i| {
            response_h_profile_tol(profile, gamma, pts[i], tol)
        })?;
        let c = par::try_map_range(pts.len(), |i| {
            excitation_response(profile, f, gamma, pts[i], tol)
        })?;
        Ok(TransducerSpectra {
            grid,
            gamma,
            h,
            c,
            n0: profile.peak(),
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self) -> &[C64] {
        &self.h
    }

    pub fn c(&self) -> &[C64] {
        &self.c
    }

    fn check(&self, params: &TransitionParams) -> Result<()> {
        if params.gamma() != self.gamma {
            return Err(Error::invalid(
                "decay rate differs from the one the spectra were built for",
            ));
        }
        Ok(())
    }

    fn control(&self, params: &TransitionParams, opts: OutputOptions, w: f64) -> C64 {
        if opts.control_phase {
            C64::from_polar(1.0, w * params.length() * params.inv_c_prime())
        } else {
            C64::new(1.0, 0.0)
        }
    }

    /// Uniform-medium output `i√(d n0 L/c) 𝒞 φ1(i·ωζ + dℋ)` with
    /// `φ1(x) = (1 − e^{−x})/x` and `ζ = L/c_eff`.
    pub fn uniform(&self, params: &TransitionParams, opts: OutputOptions) -> Result<SpectralField> {
        self.check(params)?;
        if params.delta_k() != 0.0 {
            return Err(Error::invalid(
                "the uniform closed form neglects the phase mismatch; use the general path",
            ));
        }
        let pref = C64::new(
            0.0,
            (params.d() * self.n0 * params.length() / params.c()).sqrt(),
        );
        let zeta = params.length() * params.inv_c_eff();
        let d = params.d();
        let pts = self.grid.points();
        let amp = par::map_range(pts.len(), |i| {
            let w = pts[i];
            pref * self.c[i]
                * self.control(params, opts, w)
                * quad::phi1(C64::new(0.0, w * zeta) + d * self.h[i])
        });
        SpectralField::new(self.grid, amp)
    }

    pub fn approx(
        &self,
        params: &TransitionParams,
        regime: Regime,
        opts: OutputOptions,
    ) -> Result<SpectralField> {
        self.check(params)?;
        let d = params.d();
        let pref = C64::new(0.0, (d * self.n0 * params.length() / params.c()).sqrt());
        let zeta = params.length() * params.inv_c_eff();
        let pts = self.grid.points();
        let amp = par::map_range(pts.len(), |i| {
            let w = pts[i];
            let tail = match regime {
                Regime::LowDepth => {
                    // e^{−iωζ/2} sinc(ωζ/2).
                    let x = 0.5 * w * zeta;
                    let sinc = if x.abs() < 1e-8 {
                        1.0 - x * x / 6.0
                    } else {
                        x.sin() / x
                    };
                    C64::from_polar(sinc, -x)
                }
                Regime::LargeCutoff => quad::phi1(d * self.h[i]),
            };
            pref * self.c[i] * self.control(params, opts, w) * tail
        });
        SpectralField::new(self.grid, amp)
    }
}

/// Output spectrum for a spatially uniform medium.
pub fn mw_output_uniform(
    f: &StoredExcitation,
    profile: &SpectralProfile,
    params: &TransitionParams,
    out_grid: &FrequencyGrid,
) -> Result<SpectralField> {
    TransducerSpectra::new(profile, f, params.gamma(), *out_grid, Tolerance::default())?
        .uniform(params, OutputOptions::default())
}

/// Output spectrum in one of the asymptotic regimes. Regime validity is the
/// caller's responsibility; any phase mismatch is ignored.
pub fn mw_output_approx(
    f: &StoredExcitation,
    profile: &SpectralProfile,
    params: &TransitionParams,
    out_grid: &FrequencyGrid,
    regime: Regime,
) -> Result<SpectralField> {
    TransducerSpectra::new(profile, f, params.gamma(), *out_grid, Tolerance::default())?.approx(
        params,
        regime,
        OutputOptions::default(),
    )
}

/// Output spectrum from the full position integral; handles
/// position-dependent distributions and phase mismatch.
pub fn mw_output_general(
    f: &StoredExcitation,
    dist: &EmitterDistribution,
    params: &TransitionParams,
    out_grid: &FrequencyGrid,
) -> Result<SpectralField> {
    mw_output_general_with(f, dist, params, out_grid, OutputOptions::default())
}

pub fn mw_output_general_with(
    f: &StoredExcitation,
    dist: &EmitterDistribution,
    params: &TransitionParams,
    out_grid: &FrequencyGrid,
    opts: OutputOptions,
) -> Result<SpectralField> {
    let l = params.length();
    if (dist.length() - l).abs() > 1e-12 * l {
        return Err(Error::invalid("distribution and transition lengths differ"));
    }
    let pts = out_grid.points();
    if params.d() == 0.0 && params.mu0().is_none() {
        return Ok(SpectralField::zeros(*out_grid));
    }
    let n0 = dist.peak_density()?;
    let mu0 = params.mu0().unwrap_or_else(|| params.coupling_for(n0));
    let pref = C64::new(0.0, mu0 * l / ((2.0 * PI).sqrt() * params.c()));
    let tol = Tolerance::default();
    let gamma = params.gamma();

    let wmax = pts.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let span = params.delta_k().abs() * l + wmax * l * params.inv_c_eff().abs();
    let panels = 4 + params.d().ceil() as usize + (span / PI).ceil() as usize;
    let rule = GaussPanels::new(0.0, l, panels, 10);
    let zs = &rule.nodes;
    let h = h_table(dist, gamma, &pts, zs, tol)?;

    // Detuning factor ∫G(z,Δ) f(Δ)/(i(Δ−ω)+γ/2) dΔ, per node and frequency.
    let spectral_factor: Box<dyn Fn(usize, usize) -> C64 + Sync> = match dist {
        EmitterDistribution::Separable { spatial, spectral } => {
            let c = par::try_map_range(pts.len(), |i| {
                excitation_response(spectral, f, gamma, pts[i], tol)
            })?;
            let scale = 2.0 * PI * spectral.peak();
            let s: Vec<f64> = zs.iter().map(|&z| spatial.density(z)).collect();
            Box::new(move |iz, i| c[i] * scale * s[iz])
        }
        EmitterDistribution::Tabulated {
            zs: tz,
            deltas,
            values,
            ..
        } => {
            let nd = deltas.len();
            let fw: Vec<C64> = deltas.iter().map(|&d| f.value(d)).collect();
            let rows: Vec<Vec<C64>> = zs
                .iter()
                .map(|&z| {
                    let k = tz.partition_point(|p| *p <= z).clamp(1, tz.len() - 1) - 1;
                    let t = ((z - tz[k]) / (tz[k + 1] - tz[k])).clamp(0.0, 1.0);
                    (0..nd)
                        .map(|j| {
                            let a = values[k * nd + j];
                            let b = values[(k + 1) * nd + j];
                            fw[j] * (a + (b - a) * t)
                        })
                        .collect()
                })
                .collect();
            let table = par::map_range(zs.len() * pts.len(), |idx| {
                let (iz, i) = (idx / pts.len(), idx % pts.len());
                quad::pole_integral_linear(deltas, &rows[iz], pts[i], 0.5 * gamma, 1.0)
            });
            let np = pts.len();
            Box::new(move |iz, i| table[iz * np + i])
        }
    };

    let d = params.d();
    let dk = params.delta_k();
    let ice = params.inv_c_eff();
    let amp = par::map_range(pts.len(), |i| {
        let w = pts[i];
        let mut acc = C64::new(0.0, 0.0);
        for (iz, (&z, &wt)) in zs.iter().zip(&rule.weights).enumerate() {
            let a = (C64::new(0.0, dk * z - w * (l - z) * ice) - d * h[iz][i]).exp();
            acc += a * spectral_factor(iz, i) * wt;
        }
        let ctrl = if opts.control_phase {
            C64::from_polar(1.0, w * l * params.inv_c_prime())
        } else {
            C64::new(1.0, 0.0)
        };
        pref * ctrl * acc
    });
    SpectralField::new(*out_grid, amp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SpatialProfile;
    use crate::transition::{ControlVelocity, TransitionSpec};

    const L: f64 = 0.01;
    const TWO_PI: f64 = 2.0 * PI;

    fn params(d: f64, c: f64, cutoff: f64) -> TransitionParams {
        TransitionSpec::new(TWO_PI * 0.01, L, c, d)
            .with_control(ControlVelocity::Cutoff(cutoff))
            .derive()
            .unwrap()
    }

    fn setup(
        gw: f64,
        fw: f64,
        tc: f64,
        d: f64,
    ) -> (
        SpectralProfile,
        EmitterDistribution,
        StoredExcitation,
        TransitionParams,
    ) {
        let p = params(d, 0.3, -TWO_PI * 30.0);
        let prof = SpectralProfile::gaussian(gw).unwrap();
        let dist = EmitterDistribution::uniform_in_space(L, prof.clone()).unwrap();
        let f =
            normalize_excitation(ExcitationShape::gaussian(fw, tc).unwrap(), &dist, &p).unwrap();
        (prof, dist, f, p)
    }

    fn rel_l2(a: &SpectralField, b: &SpectralField) -> f64 {
        let diff = SpectralField::new(
            *a.grid(),
            a.amplitude()
                .iter()
                .zip(b.amplitude())
                .map(|(x, y)| x - y)
                .collect(),
        )
        .unwrap();
        (diff.norm() / b.norm()).sqrt()
    }

    #[test]
    fn uniform_line_with_flat_excitation() {
        let p = params(1.0, 0.3, -TWO_PI * 30.0);
        let prof = SpectralProfile::uniform(10.0).unwrap();
        let dist = EmitterDistribution::uniform_in_space(L, prof).unwrap();
        let flat =
            ExcitationShape::tabulated(vec![-100.0, 100.0], vec![C64::new(1.0, 0.0); 2]).unwrap();
        let f = normalize_excitation(flat, &dist, &p).unwrap();
        // (L/c)·𝒩²·∫n = 1 with ∫n = 1.
        assert!((f.norm_constant().powi(2) - 0.3 / L).abs() < 1e-9 * 30.0);
    }

    #[test]
    fn gaussian_normalization_matches_closed_form() {
        // ∫ e^{−Δ²/Γ²} e^{−2Δ²/δω²} dΔ / (√π Γ) = 1/√(1 + 2Γ²/δω²).
        let (gw, fw) = (3.0, 5.0);
        let (_, dist, f, p) = setup(gw, fw, 1.0, 1.0);
        let integral = 1.0 / (1.0 + 2.0 * gw * gw / (fw * fw)).sqrt();
        let want = (p.c() / (L * integral)).sqrt();
        assert!((f.norm_constant() - want).abs() < 1e-9 * want);
        let check = (L / p.c())
            * f.norm_constant().powi(2)
            * density_overlap(dist.marginal_spectral().as_ref().unwrap(), f.shape()).unwrap();
        assert!((check - 1.0).abs() < 1e-8);
    }

    #[test]
    fn normalization_ignores_raw_scale() {
        let p = params(1.0, 0.3, -TWO_PI * 30.0);
        let dist =
            EmitterDistribution::uniform_in_space(L, SpectralProfile::gaussian(4.0).unwrap())
                .unwrap();
        let xs: Vec<f64> = (0..41).map(|i| -20.0 + i as f64).collect();
        let ys: Vec<C64> = xs
            .iter()
            .map(|x| C64::new((-x * x / 30.0f64).exp(), 0.1 * x))
            .collect();
        let raw = ExcitationShape::tabulated(xs, ys).unwrap();
        let a = normalize_excitation(raw.clone(), &dist, &p).unwrap();
        let b = normalize_excitation(raw.scaled(C64::new(5.0, 0.0)), &dist, &p).unwrap();
        for d in [-7.3, 0.0, 2.5] {
            assert!((a.value(d) - b.value(d)).norm() < 1e-12 * (1.0 + a.value(d).norm()));
        }
        let zero =
            ExcitationShape::tabulated(vec![500.0, 600.0], vec![C64::new(1.0, 0.0); 2]).unwrap();
        assert!(normalize_excitation(zero, &dist, &p).is_err());
    }

    #[test]
    fn table_loader_reads_three_columns() {
        let f =
            ExcitationShape::from_table_text("# delta re im\n-1 0 0\n0 1 0.5\n1 0 0\n").unwrap();
        assert_eq!(f.value(0.0), C64::new(1.0, 0.5));
        assert_eq!(f.value(0.5), C64::new(0.5, 0.25));
        assert!(ExcitationShape::from_table_text("0 1\n1 2\n").is_err());
    }

    #[test]
    fn zero_excitation_gives_zero_field() {
        let (_, dist, f, p) = setup(6.0, 3.0, 1.0, 1.0);
        let zero = StoredExcitation {
            shape: f.shape().clone(),
            norm: 0.0,
        };
        let grid = FrequencyGrid::symmetric(30.0, 101).unwrap();
        let out = mw_output_general(&zero, &dist, &p, &grid).unwrap();
        assert!(out.amplitude().iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn general_matches_uniform_closed_form() {
        let (prof, dist, f, p) = setup(6.0, 3.0, 1.0, 2.5);
        let grid = FrequencyGrid::symmetric(60.0, 301).unwrap();
        let a = mw_output_general(&f, &dist, &p, &grid).unwrap();
        let b = mw_output_uniform(&f, &prof, &p, &grid).unwrap();
        assert!(rel_l2(&a, &b) < 1e-6, "{}", rel_l2(&a, &b));
    }

    #[test]
    fn general_handles_position_dependence() {
        // A linear density ramp on a separable and on a fully tabulated
        // distribution must give the same output.
        let p = params(1.5, 0.3, -TWO_PI * 30.0);
        let prof = SpectralProfile::gaussian(5.0).unwrap();
        let zs: Vec<f64> = (0..=20).map(|i| L * i as f64 / 20.0).collect();
        let ramp: Vec<f64> = zs.iter().map(|z| 1.0 + z / L).collect();
        let sep = EmitterDistribution::separable(
            SpatialProfile::tabulated(zs.clone(), ramp.clone()).unwrap(),
            prof.clone(),
        );
        let deltas: Vec<f64> = (0..=2400).map(|j| -60.0 + 0.05 * j as f64).collect();
        let s_mass = quad::trapezoid(&zs, &ramp);
        let mut values = Vec::new();
        for r in &ramp {
            for &d in &deltas {
                values.push(r / s_mass * prof.density(d));
            }
        }
        let tab = EmitterDistribution::tabulated(zs, deltas, values).unwrap();
        let f =
            normalize_excitation(ExcitationShape::gaussian(3.0, 1.0).unwrap(), &sep, &p).unwrap();
        let grid = FrequencyGrid::symmetric(40.0, 161).unwrap();
        let a = mw_output_general(&f, &sep, &p, &grid).unwrap();
        let b = mw_output_general(&f, &tab, &p, &grid).unwrap();
        assert!(rel_l2(&b, &a) < 2e-3, "{}", rel_l2(&b, &a));
        // A uniform medium gives a different spectrum.
        let u = mw_output_general(
            &f,
            &EmitterDistribution::uniform_in_space(L, prof).unwrap(),
            &p,
            &grid,
        )
        .unwrap();
        assert!(rel_l2(&u, &a) > 10.0 * rel_l2(&b, &a), "{}", rel_l2(&u, &a));
    }

    #[test]
    fn low_depth_limit_agrees() {
        let (prof, _, f, p) = setup(6.0, 3.0, 1.0, 0.01);
        let grid = FrequencyGrid::symmetric(40.0, 201).unwrap();
        let a = mw_output_uniform(&f, &prof, &p, &grid).unwrap();
        let b = mw_output_approx(&f, &prof, &p, &grid, Regime::LowDepth).unwrap();
        for (x, y) in a.amplitude().iter().zip(b.amplitude()) {
            assert!((x - y).norm() <= 0.05 * y.norm() + 1e-14);
        }
    }

    #[test]
    fn large_cutoff_drops_cutoff_terms() {
        let (prof, _, f, p) = setup(6.0, 3.0, 1.0, 4.0);
        let grid = FrequencyGrid::symmetric(40.0, 201).unwrap();
        let spectra =
            TransducerSpectra::new(&prof, &f, p.gamma(), grid, Tolerance::default()).unwrap();
        let matched = TransitionSpec::new(p.gamma(), L, 0.3, 4.0)
            .derive()
            .unwrap();
        let a = spectra.uniform(&matched, OutputOptions::default()).unwrap();
        let b = spectra
            .approx(&p, Regime::LargeCutoff, OutputOptions::default())
            .unwrap();
        assert_eq!(a.amplitude(), b.amplitude());
    }

    #[test]
    fn probability_independent_of_c() {
        let prof = SpectralProfile::gaussian(6.0).unwrap();
        let dist = EmitterDistribution::uniform_in_space(L, prof.clone()).unwrap();
        let grid = FrequencyGrid::symmetric(60.0, 301).unwrap();
        let w = |c: f64| {
            let p = params(2.0, c, -TWO_PI * 30.0);
            let f = normalize_excitation(ExcitationShape::gaussian(3.0, 1.0).unwrap(), &dist, &p)
                .unwrap();
            mw_output_uniform(&f, &prof, &p, &grid).unwrap().norm()
        };
        let (a, b) = (w(0.03), w(0.3));
        assert!((a - b).abs() < 1e-10 * a, "{a} {b}");
    }

    #[test]
    fn cutoff_sign_symmetry() {
        let prof = SpectralProfile::gaussian(6.0).unwrap();
        let dist = EmitterDistribution::uniform_in_space(L, prof.clone()).unwrap();
        let grid = FrequencyGrid::symmetric(80.0, 401).unwrap();
        let w = |cut: f64, tc: f64| {
            let p = params(2.0, 0.3, cut);
            let f = normalize_excitation(ExcitationShape::gaussian(3.0, tc).unwrap(), &dist, &p)
                .unwrap();
            mw_output_uniform(&f, &prof, &p, &grid).unwrap().norm()
        };
        // The exact conjugation symmetry is E(ω) = −conj E(−ω) at fixed
        // cutoff. Flipping the cutoff is only approximately neutral, and
        // negating the emission time as well moves the emission before the
        // read pulse.
        let (a, b) = (w(-TWO_PI * 30.0, 1.0), w(TWO_PI * 30.0, 1.0));
        assert!((a - b).abs() < 1e-2 * a, "{a} {b}");
        assert!(w(TWO_PI * 30.0, -1.0) < 0.1 * a);
        let p = params(2.0, 0.3, -TWO_PI * 30.0);
        let f =
            normalize_excitation(ExcitationShape::gaussian(3.0, 1.0).unwrap(), &dist, &p).unwrap();
        let e = mw_output_uniform(&f, &prof, &p, &grid).unwrap();
        let amp = e.amplitude();
        let n = amp.len();
        let peak = amp.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..n {
            assert!((amp[i] + amp[n - 1 - i].conj()).norm() < 1e-7 * peak);
        }
    }

    #[test]
    fn uniform_rejects_phase_mismatch() {
        let (prof, _, f, _) = setup(6.0, 3.0, 1.0, 1.0);
        let p = TransitionSpec::new(TWO_PI * 0.01, L, 0.3, 1.0)
            .with_wave_numbers(0.0, 5.0)
            .derive()
            .unwrap();
        let grid = FrequencyGrid::symmetric(40.0, 21).unwrap();
        assert!(matches!(
            mw_output_uniform(&f, &prof, &p, &grid),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn control_phase_is_pure_phase() {
        let (prof, _, f, _) = setup(6.0, 3.0, 1.0, 1.0);
        let p = params(1.0, 0.1, -TWO_PI * 30.0);
        let grid = FrequencyGrid::symmetric(40.0, 201).unwrap();
        let s = TransducerSpectra::new(&prof, &f, p.gamma(), grid, Tolerance::default()).unwrap();
        let a = s.uniform(&p, OutputOptions::default()).unwrap();
        let b = s
            .uniform(
                &p,
                OutputOptions {
                    control_phase: true,
                },
            )
            .unwrap();
        assert!(a.amplitude() != b.amplitude());
        for (x, y) in a.amplitude().iter().zip(b.amplitude()) {
            assert!((x.norm() - y.norm()).abs() < 1e-14 * (1.0 + x.norm()));
        }
    }
}
