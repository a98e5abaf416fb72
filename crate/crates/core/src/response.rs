//! Medium response integrals and the field transmitted during storage.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::distributions::{EmitterDistribution, SpectralProfile};
use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, SpectralField};
use crate::par;
use crate::quad::Tolerance;
use crate::transition::TransitionParams;

/// Complex weight `f(Δ)` multiplying the density inside a response integral.
pub type Weight<'a> = &'a (dyn Fn(f64) -> C64 + Sync);

/// `ℋ(ω) = (2π n0)⁻¹ ∫ n(Δ) / (i(Δ − ω) + γ/2) dΔ` with `n0` the profile peak.
pub fn response_h_profile(profile: &SpectralProfile, gamma: f64, omega: f64) -> Result<C64> {
    response_h_profile_tol(profile, gamma, omega, Tolerance::default())
}

pub fn response_h_profile_tol(
    profile: &SpectralProfile,
    gamma: f64,
    omega: f64,
    tol: Tolerance,
) -> Result<C64> {
    check_gamma(gamma)?;
    let v = profile.pole_transform(omega, 0.5 * gamma, 1.0, None, tol)?;
    Ok(v / (2.0 * PI * profile.peak()))
}

/// Alias for [`response_h_profile`] under its conventional name.
#[allow(non_snake_case)]
pub fn response_H(profile: &SpectralProfile, gamma: f64, omega: f64) -> Result<C64> {
    response_h_profile(profile, gamma, omega)
}

/// `h(z, ω) = (2π n0)⁻¹ ∫_z^L dz′ ∫ dΔ G(z′, Δ) / (i(Δ − ω) + γ/2)`.
pub fn response_h(z: f64, omega: f64, dist: &EmitterDistribution, gamma: f64) -> Result<C64> {
    response_h_tol(z, omega, dist, gamma, Tolerance::default())
}

pub fn response_h_tol(
    z: f64,
    omega: f64,
    dist: &EmitterDistribution,
    gamma: f64,
    tol: Tolerance,
) -> Result<C64> {
    check_gamma(gamma)?;
    let l = dist.length();
    if !(0.0..=l).contains(&z) {
        return Err(Error::invalid(format!("z = {z} outside [0, {l}]")));
    }
    if z == l {
        return Ok(C64::new(0.0, 0.0));
    }
    let n0 = dist.peak_density()?;
    Ok(dist.tail_response(z, omega, gamma, tol)? / (2.0 * PI * n0))
}

/// `𝒞(ω) = (2π n0)⁻¹ ∫ n(Δ) f(Δ) / (i(Δ − ω) + γ/2) dΔ`.
#[allow(non_snake_case)]
pub fn response_C(profile: &SpectralProfile, f: Weight<'_>, gamma: f64, omega: f64) -> Result<C64> {
    response_c_tol(profile, f, gamma, omega, Tolerance::default())
}

pub fn response_c_tol(
    profile: &SpectralProfile,
    f: Weight<'_>,
    gamma: f64,
    omega: f64,
    tol: Tolerance,
) -> Result<C64> {
    check_gamma(gamma)?;
    let v = profile.pole_transform(omega, 0.5 * gamma, 1.0, Some(f), tol)?;
    Ok(v / (2.0 * PI * profile.peak()))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )))
    }
}

/// `ℋ` and optionally `𝒞` tabulated on a frequency grid for one
/// `(profile, γ)` pair. Neither depends on the optical depth, so a sweep
/// over `d` reuses one cache.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    profile: SpectralProfile,
    gamma: f64,
    grid: FrequencyGrid,
    h: Vec<C64>,
    c: Option<Vec<C64>>,
}

impl ResponseCache {
    pub fn new(
        profile: &SpectralProfile,
        gamma: f64,
        grid: FrequencyGrid,
        weight: Option<Weight<'_>>,
        tol: Tolerance,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        let pts = grid.points();
        let h = par::try_map_range(pts.len(), |i| {
            response_h_profile_tol(profile, gamma, pts[i], tol)
        })?;
        let c = match weight {
            Some(f) => Some(par::try_map_range(pts.len(), |i| {
                response_c_tol(profile, f, gamma, pts[i], tol)
            })?),
            None => None,
        };
        Ok(ResponseCache {
            profile: profile.clone(),
            gamma,
            grid,
            h,
            c,
        })
    }

    /// Whether this cache was built for the given key.
    pub fn matches(&self, profile: &SpectralProfile, gamma: f64, grid: &FrequencyGrid) -> bool {
        &self.profile == profile && self.gamma == gamma && &self.grid == grid
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn h(&self) -> &[C64] {
        &self.h
    }

    pub fn c(&self) -> Option<&[C64]> {
        self.c.as_deref()
    }
}

/// `h(z_i, ω_k)` for every requested position and grid frequency, indexed
/// `[i][k]`. Separable distributions evaluate `ℋ` once and scale it by the
/// spatial tail mass.
pub fn h_table(
    dist: &EmitterDistribution,
    gamma: f64,
    omegas: &[f64],
    zs: &[f64],
    tol: Tolerance,
) -> Result<Vec<Vec<C64>>> {
    check_gamma(gamma)?;
    match dist {
        EmitterDistribution::Separable { spatial, spectral } => {
            let h = par::try_map_range(omegas.len(), |k| {
                response_h_profile_tol(spectral, gamma, omegas[k], tol)
            })?;
            Ok(zs
                .iter()
                .map(|&z| {
                    let m = spatial.tail_mass(z);
                    h.iter().map(|v| v * m).collect()
                })
                .collect())
        }
        EmitterDistribution::Tabulated { .. } => {
            let n0 = dist.peak_density()?;
            let flat = par::try_map_range(zs.len() * omegas.len(), |idx| {
                let (i, k) = (idx / omegas.len(), idx % omegas.len());
                Ok::<C64, Error>(
                    dist.tail_response(zs[i], omegas[k], gamma, tol)? / (2.0 * PI * n0),
                )
            })?;
            Ok(flat
                .chunks(omegas.len().max(1))
                .map(|c| c.to_vec())
                .collect())
        }
    }
}

/// Spectral intensity `ℐ(ω)` on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySpectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<f64>,
}

impl IntensitySpectrum {
    /// `∫ ℐ(ω) dω`.
    pub fn total(&self) -> f64 {
        crate::quad::trapezoid(&self.grid.points(), &self.values)
    }
}

/// Absorption exponent `h(0, ω)` on the field grid.
fn absorption(field: &SpectralField, dist: &EmitterDistribution, gamma: f64) -> Result<Vec<C64>> {
    let pts = field.grid().points();
    par::try_map_range(pts.len(), |i| response_h(0.0, pts[i], dist, gamma))
}

/// Spectral intensity leaving the far edge during storage,
/// `ℐ(ω) = |E_in(ω)|² exp(−2d Re h(0, ω))`.
pub fn transmitted_intensity(
    e_in: &SpectralField,
    dist: &EmitterDistribution,
    d: f64,
    gamma: f64,
) -> Result<IntensitySpectrum> {
    if !(d >= 0.0) {
        return Err(Error::invalid(format!(
            "optical depth must be >= 0, got {d}"
        )));
    }
    if d == 0.0 {
        let values = e_in.amplitude().iter().map(|a| a.norm_sqr()).collect();
        return Ok(IntensitySpectrum {
            grid: *e_in.grid(),
            values,
        });
    }
    let h = absorption(e_in, dist, gamma)?;
    let values = e_in
        .amplitude()
        .iter()
        .zip(&h)
        .map(|(a, h)| a.norm_sqr() * (-2.0 * d * h.re.max(0.0)).exp())
        .collect();
    Ok(IntensitySpectrum {
        grid: *e_in.grid(),
        values,
    })
}

/// Complex field at the far edge: `E_in(ω) e^{iωL/c} e^{−d h(0, ω)}`.
pub fn transmitted_field(
    e_in: &SpectralField,
    dist: &EmitterDistribution,
    params: &TransitionParams,
) -> Result<SpectralField> {
    let h = absorption(e_in, dist, params.gamma())?;
    let t = params.transit();
    let d = params.d();
    let pts = e_in.grid().points();
    let amp = e_in
        .amplitude()
        .iter()
        .zip(&h)
        .zip(&pts)
        .map(|((a, h), w)| a * (C64::new(0.0, w * t) - d * h).exp())
        .collect();
    SpectralField::new(*e_in.grid(), amp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Shape;
    use crate::quad;
    use proptest::prelude::*;

    fn dense_oracle(
        profile: &SpectralProfile,
        f: impl Fn(f64) -> C64,
        gamma: f64,
        w: f64,
        step: f64,
    ) -> C64 {
        let (a, b) = profile.domain();
        let n = ((b - a) / step).ceil() as usize + 1;
        let xs: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect();
        let ys: Vec<C64> = xs
            .iter()
            .map(|&x| f(x) * profile.density(x) / C64::new(0.5 * gamma, x - w))
            .collect();
        quad::trapezoid(&xs, &ys) / (2.0 * PI * profile.peak())
    }

    #[test]
    fn uniform_band_center_is_one_half() {
        let p = SpectralProfile::uniform(2.0 * PI * 20.0).unwrap();
        let h = response_H(&p, 2.0 * PI * 0.01, 0.0).unwrap();
        assert!((h.re - 0.5).abs() < 0.005);
        assert!(h.im.abs() < 1e-12);
    }

    #[test]
    fn far_detuned_response_is_small() {
        for shape in [Shape::Gaussian, Shape::Sech, Shape::Uniform] {
            let p = SpectralProfile::new(shape, 1.0).unwrap();
            assert!(response_H(&p, 0.01, 100.0).unwrap().norm() < 0.01);
        }
    }

    #[test]
    fn gaussian_matches_dense_trapezoid() {
        let p = SpectralProfile::gaussian(2.0 * PI).unwrap();
        let gamma = 2.0 * PI * 0.01;
        let got = response_H(&p, gamma, 0.0).unwrap();
        // Oracle step is a tenth of the Lorentzian half-width.
        let want = dense_oracle(&p, |_| C64::new(1.0, 0.0), gamma, 0.0, 0.05 * gamma);
        assert!((got - want).norm() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn constant_weight_reproduces_h() {
        for shape in Shape::CLOSED_FORM {
            let p = SpectralProfile::new(shape, 3.0).unwrap();
            let one = |_: f64| C64::new(1.0, 0.0);
            for &w in &[0.0, 0.7, -2.9, 40.0] {
                let h = response_H(&p, 0.02, w).unwrap();
                let c = response_C(&p, &one, 0.02, w).unwrap();
                let tol = if shape == Shape::Uniform { 1e-7 } else { 1e-10 };
                assert!((h - c).norm() <= tol * h.norm().max(1e-3), "{shape:?} {w}");
            }
        }
    }

    #[test]
    fn emission_phase_gives_unit_modulus_inside_band() {
        // A uniform band much wider than 1/t_c: the response to e^{iΔt_c}
        // is the phase itself, damped by e^{−γ t_c / 2}.
        let g = 2.0 * PI * 20.0;
        let p = SpectralProfile::uniform(g).unwrap();
        let (gamma, tc) = (0.05, 1.0);
        let f = move |d: f64| C64::from_polar(1.0, d * tc);
        for &w in &[0.0, 5.0, -12.0] {
            let c = response_C(&p, &f, gamma, w).unwrap();
            let want = dense_oracle(&p, f, gamma, w, 2e-3);
            assert!((c - want).norm() < 2e-4, "{c} vs {want}");
            assert!((c.norm() - (-0.5 * gamma * tc).exp()).abs() < 0.05);
        }
        // Without the emission phase the band-center value is one half.
        let one = |_: f64| C64::new(1.0, 0.0);
        assert!((response_C(&p, &one, gamma, 0.0).unwrap().norm() - 0.5).abs() < 0.01);
    }

    #[test]
    fn odd_weight_at_center_is_principal_value() {
        let p = SpectralProfile::gaussian(1.0).unwrap();
        let f = |d: f64| C64::new(d * (-d * d).exp(), 0.0);
        let gamma = 1e-6;
        let c = response_C(&p, &f, gamma, 0.0).unwrap();
        // Oracle: −i/(2πn0) PV∫ n f / Δ with the pole split symmetrically;
        // n f / Δ = n e^{−Δ²} is regular.
        let pv = quad::adaptive(
            |d| C64::new(p.density(d) * (-d * d).exp(), 0.0),
            -12.0,
            12.0,
            &[0.0],
            Tolerance::with_rel(1e-12),
        )
        .unwrap()
        .value
        .re;
        let want = C64::new(0.0, -pv / (2.0 * PI * p.peak()));
        assert!((c - want).norm() < 1e-6);
    }

    #[test]
    fn h_endpoints_and_factorization() {
        let p = SpectralProfile::gaussian(2.0).unwrap();
        let d = EmitterDistribution::uniform_in_space(0.01, p.clone()).unwrap();
        assert_eq!(response_h(0.01, 0.3, &d, 0.1).unwrap(), C64::new(0.0, 0.0));
        let h0 = response_h(0.0, 0.3, &d, 0.1).unwrap();
        let big = response_H(&p, 0.1, 0.3).unwrap();
        assert!((h0 - big).norm() < 1e-14);
        let hz = response_h(0.0025, 0.3, &d, 0.1).unwrap();
        assert!((hz - big * 0.75).norm() < 1e-14);
        assert!(response_h(0.02, 0.0, &d, 0.1).is_err());
    }

    #[test]
    fn tabulated_h_matches_2d_brute_force() {
        let zs: Vec<f64> = (0..6).map(|i| i as f64 * 0.2).collect();
        let ds: Vec<f64> = (0..61).map(|j| -3.0 + 0.1 * j as f64).collect();
        let mut v = Vec::new();
        for &z in &zs {
            for &x in &ds {
                v.push((1.0 + 2.0 * z) * (-(x - z) * (x - z)).exp());
            }
        }
        let dist = EmitterDistribution::tabulated(zs, ds, v).unwrap();
        let (z, w, gamma) = (0.3, 0.4, 0.3);
        let got = response_h(z, w, &dist, gamma).unwrap();
        let nz = 1401;
        let nd = 24_001;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..nz {
            let zz = z + (1.0 - z) * i as f64 / (nz - 1) as f64;
            let wz = if i == 0 || i == nz - 1 { 0.5 } else { 1.0 } * (1.0 - z) / (nz - 1) as f64;
            let mut row = C64::new(0.0, 0.0);
            for j in 0..nd {
                let x = -3.0 + 6.0 * j as f64 / (nd - 1) as f64;
                let wx = if j == 0 || j == nd - 1 { 0.5 } else { 1.0 } * 6.0 / (nd - 1) as f64;
                row += dist.eval_unchecked(zz, x) / C64::new(0.5 * gamma, x - w) * wx;
            }
            acc += row * wz;
        }
        let want = acc / (2.0 * PI * dist.peak_density().unwrap());
        assert!((got - want).norm() < 1e-5 * want.norm(), "{got} vs {want}");
    }

    #[test]
    fn intensity_limits() {
        let g = FrequencyGrid::symmetric(20.0, 801).unwrap();
        let e = SpectralField::gaussian_pulse(g, 2.0, 0.0, 0.0);
        let wide = SpectralProfile::uniform(200.0).unwrap();
        let dist = EmitterDistribution::uniform_in_space(0.01, wide.clone()).unwrap();
        let i0 = transmitted_intensity(&e, &dist, 0.0, 0.1).unwrap();
        for (a, b) in i0.values.iter().zip(e.amplitude()) {
            assert_eq!(*a, b.norm_sqr());
        }
        // Narrow homogeneous line inside a broad band: attenuation e^{−d}.
        let gamma = wide.width() / 1e3;
        let d = 1.5;
        let i = transmitted_intensity(&e, &dist, d, gamma).unwrap();
        let k = g.index_of(0.0).unwrap();
        let ratio = i.values[k] / e.amplitude()[k].norm_sqr();
        assert!((ratio - (-d).exp()).abs() < 5e-3 * (-d).exp());
    }

    #[test]
    fn field_and_intensity_agree() {
        let g = FrequencyGrid::symmetric(20.0, 401).unwrap();
        let e = SpectralField::gaussian_pulse(g, 1.0, -1.0, 0.0);
        let p = SpectralProfile::gaussian(6.0).unwrap();
        let dist = EmitterDistribution::uniform_in_space(0.01, p).unwrap();
        let params = crate::TransitionSpec::new(0.2, 0.01, 0.01, 1.3)
            .derive()
            .unwrap();
        let f = transmitted_field(&e, &dist, &params).unwrap();
        let i = transmitted_intensity(&e, &dist, 1.3, 0.2).unwrap();
        for (a, b) in f.amplitude().iter().zip(&i.values) {
            assert!((a.norm_sqr() - b).abs() < 1e-13);
        }
    }

    #[test]
    fn cache_is_keyed() {
        let g = FrequencyGrid::symmetric(5.0, 11).unwrap();
        let p = SpectralProfile::gaussian(1.0).unwrap();
        let c = ResponseCache::new(&p, 0.1, g, None, Tolerance::default()).unwrap();
        assert!(c.matches(&p, 0.1, &g));
        assert!(!c.matches(&p, 0.2, &g));
        assert!(c.c().is_none());
        assert_eq!(c.h().len(), 11);
    }

    #[test]
    fn storage_completeness_heuristic() {
        // d·n(ω)/n0 ≥ 10 over the photon band ⇒ leakage < 1e−3.
        let g = FrequencyGrid::symmetric(30.0, 1201).unwrap();
        let e = SpectralField::gaussian_pulse(g, 1.0, 0.0, 0.0);
        let p = SpectralProfile::uniform(40.0).unwrap();
        let dist = EmitterDistribution::uniform_in_space(0.01, p).unwrap();
        let i = transmitted_intensity(&e, &dist, 10.0, 0.01).unwrap();
        assert!(i.total() / e.norm() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn hermitian_for_symmetric_profiles(w in -30.0f64..30.0, gamma in 1e-3f64..1.0, s in 0usize..4) {
            let p = SpectralProfile::new(Shape::CLOSED_FORM[s], 5.0).unwrap();
            let a = response_H(&p, gamma, w).unwrap();
            let b = response_H(&p, gamma, -w).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-6 * a.norm().max(1e-6));
            prop_assert!(a.re >= 0.0);
        }

        #[test]
        fn leakage_monotone_in_depth(d1 in 0.0f64..10.0, dd in 0.0f64..5.0) {
            let g = FrequencyGrid::symmetric(20.0, 201).unwrap();
            let e = SpectralField::gaussian_pulse(g, 0.5, 0.0, 0.0);
            let p = SpectralProfile::gaussian(4.0).unwrap();
            let dist = EmitterDistribution::uniform_in_space(0.01, p).unwrap();
            let a = transmitted_intensity(&e, &dist, d1, 0.1).unwrap().total();
            let b = transmitted_intensity(&e, &dist, d1 + dd, 0.1).unwrap().total();
            prop_assert!(b <= a * (1.0 + 1e-14));
            prop_assert!(a <= e.norm() * (1.0 + 1e-14));
        }
    }
}
