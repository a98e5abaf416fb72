//! Storage of an incoming photon into a spin wave.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::distributions::EmitterDistribution;
use crate::error::{Error, Result};
use crate::grid::{fmt_sig, FrequencyGrid, SpaceGrid, SpectralField};
use crate::par;
use crate::quad::{self, Tolerance};
use crate::response::{h_table, transmitted_intensity};
use crate::transition::TransitionParams;

/// Default number of positions in a stored spin wave.
pub const DEFAULT_SPACE_POINTS: usize = 64;

/// Stored spin wave `S(z_i, Δ_j)`.
#[derive(Debug, Clone)]
pub struct SpinWave {
    zs: Vec<f64>,
    deltas: Vec<f64>,
    values: Vec<C64>,
    t0: f64,
    delta_t: f64,
    params: TransitionParams,
}

impl SpinWave {
    pub fn positions(&self) -> &[f64] {
        &self.zs
    }

    pub fn detunings(&self) -> &[f64] {
        &self.deltas
    }

    /// Values in row-major order, one row per position.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[C64] {
        let n = self.deltas.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.deltas.len() + j]
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn params(&self) -> &TransitionParams {
        &self.params
    }

    /// Photon number held by the medium,
    /// `(L/c) ∫dz ∫dΔ G(z, Δ) |S(z, Δ)|²`.
    pub fn stored_norm(&self, dist: &EmitterDistribution) -> f64 {
        let rows: Vec<f64> = (0..self.zs.len())
            .map(|i| {
                let z = self.zs[i];
                let p: Vec<f64> = self
                    .row(i)
                    .iter()
                    .zip(&self.deltas)
                    .map(|(s, &d)| dist.eval_unchecked(z, d) * s.norm_sqr())
                    .collect();
                quad::trapezoid(&self.deltas, &p)
            })
            .collect();
        self.params.transit() * quad::trapezoid(&self.zs, &rows)
    }

    /// Stored norm restricted to `z >= z_min`, as a fraction of the total.
    pub fn fraction_beyond(&self, dist: &EmitterDistribution, z_min: f64) -> f64 {
        let total = self.stored_norm(dist);
        let keep: Vec<usize> = (0..self.zs.len())
            .filter(|&i| self.zs[i] >= z_min)
            .collect();
        if keep.len() < 2 || total == 0.0 {
            return 0.0;
        }
        let zs: Vec<f64> = keep.iter().map(|&i| self.zs[i]).collect();
        let rows: Vec<f64> = keep
            .iter()
            .map(|&i| {
                let p: Vec<f64> = self
                    .row(i)
                    .iter()
                    .zip(&self.deltas)
                    .map(|(s, &d)| dist.eval_unchecked(self.zs[i], d) * s.norm_sqr())
                    .collect();
                quad::trapezoid(&self.deltas, &p)
            })
            .collect();
        self.params.transit() * quad::trapezoid(&zs, &rows) / total
    }

    /// Write `z, Δ, Re S, Im S` rows.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut out = String::from("z,delta,re,im\n");
        for (i, &z) in self.zs.iter().enumerate() {
            for (j, &d) in self.deltas.iter().enumerate() {
                let s = self.get(i, j);
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_sig(z),
                    fmt_sig(d),
                    fmt_sig(s.re),
                    fmt_sig(s.im)
                ));
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Coupling `μ0` for a transition, from the explicit value or from `d`.
pub(crate) fn coupling(params: &TransitionParams, dist: &EmitterDistribution) -> Result<f64> {
    match params.mu0() {
        Some(m) => Ok(m),
        None => Ok(params.coupling_for(dist.peak_density()?)),
    }
}

/// Default storage timing: `δt` at its sufficient bound and `t0` such that
/// the control pulse leaves the medium at `T1 = 0`.
pub fn default_timing(params: &TransitionParams) -> (f64, f64) {
    let dt = params.min_store_delay();
    (-dt - params.length() * params.inv_c_prime(), dt)
}

/// Spin wave left behind by the storage control pulse, on
/// [`DEFAULT_SPACE_POINTS`] positions and the field grid points inside the
/// distribution's detuning domain.
pub fn store_spin_wave(
    e_in: &SpectralField,
    params: &TransitionParams,
    dist: &EmitterDistribution,
    t0: f64,
    delta_t: f64,
) -> Result<SpinWave> {
    let space = SpaceGrid::new(params.length(), DEFAULT_SPACE_POINTS)?;
    let (a, b) = dist.spectral_domain();
    let deltas: Vec<f64> = e_in
        .grid()
        .points()
        .into_iter()
        .filter(|w| *w >= a && *w <= b)
        .collect();
    if deltas.len() < 2 {
        return Err(Error::invalid(
            "field grid does not overlap the distribution's detunings",
        ));
    }
    store_spin_wave_on(e_in, params, dist, t0, delta_t, &space.points(), &deltas)
}

/// [`store_spin_wave`] on explicit positions and detunings.
pub fn store_spin_wave_on(
    e_in: &SpectralField,
    params: &TransitionParams,
    dist: &EmitterDistribution,
    t0: f64,
    delta_t: f64,
    zs: &[f64],
    deltas: &[f64],
) -> Result<SpinWave> {
    let l = params.length();
    if (dist.length() - l).abs() > 1e-12 * l {
        return Err(Error::invalid("distribution and transition lengths differ"));
    }
    if delta_t < params.min_store_delay() - 1e-12 * params.transit() {
        return Err(Error::invalid(format!(
            "storage delay {delta_t} ns is shorter than the ordering bound {} ns",
            params.min_store_delay()
        )));
    }
    let omegas = e_in.grid().points();
    let zero = e_in.amplitude().iter().all(|a| *a == C64::new(0.0, 0.0));
    let nd = deltas.len();
    if zero || params.d() == 0.0 {
        return Ok(SpinWave {
            zs: zs.to_vec(),
            deltas: deltas.to_vec(),
            values: vec![C64::new(0.0, 0.0); zs.len() * nd],
            t0,
            delta_t,
            params: *params,
        });
    }
    let mu0 = coupling(params, dist)?;
    let gamma = params.gamma();
    let h = h_table(dist, gamma, &omegas, zs, Tolerance::default())?;
    let d = params.d();
    let icf = params.inv_c_eff();
    let tstore = t0 + delta_t;
    let pref = mu0 / (2.0 * PI).sqrt();
    let mut values = vec![C64::new(0.0, 0.0); zs.len() * nd];
    par::for_each_chunk_mut(&mut values, nd, |i, row| {
        let z = zs[i];
        let g: Vec<C64> = omegas
            .iter()
            .zip(e_in.amplitude())
            .zip(&h[i])
            .map(|((&w, &e), &hz)| {
                e * (C64::new(0.0, -w * (tstore + (l - z) * icf)) - d * hz).exp()
            })
            .collect();
        let phase = C64::from_polar(pref, params.delta_k() * z);
        for (j, &delta) in deltas.iter().enumerate() {
            // i(Δ − ω) + γ/2 = κ + iσ(ω − Δ) with σ = −1.
            row[j] = phase * quad::pole_integral(&omegas, &g, delta, 0.5 * gamma, -1.0);
        }
    });
    Ok(SpinWave {
        zs: zs.to_vec(),
        deltas: deltas.to_vec(),
        values,
        t0,
        delta_t,
        params: *params,
    })
}

/// Storage response `ℱ(z, t; Δ)`, the polarization produced at `(z, t)` by
/// a delta pulse entering at `z = L` at `t = 0`.
///
/// The free-propagation part `iμ0 e^{−(iΔ+γ/2)s} θ(s)`, `s = t − (L−z)/c`,
/// is added in closed form; only the absorption correction is inverted
/// numerically on the kernel's frequency grid.
#[derive(Debug, Clone)]
pub struct StorageKernel {
    params: TransitionParams,
    mu0: f64,
    omegas: Vec<f64>,
    h: Vec<C64>,
    dist: EmitterDistribution,
}

impl StorageKernel {
    pub fn new(
        params: &TransitionParams,
        dist: &EmitterDistribution,
        grid: FrequencyGrid,
    ) -> Result<Self> {
        let mu0 = coupling(params, dist)?;
        let omegas = grid.points();
        let h = h_table(dist, params.gamma(), &omegas, &[0.0], Tolerance::default())?
            .pop()
            .expect("one row");
        Ok(StorageKernel {
            params: *params,
            mu0,
            omegas,
            h,
            dist: dist.clone(),
        })
    }

    /// Use an explicit coupling prefactor while keeping `d` in the exponent.
    pub fn with_coupling(mut self, mu0: f64) -> Self {
        self.mu0 = mu0;
        self
    }

    fn h_at(&self, z: f64) -> Result<Vec<C64>> {
        match &self.dist {
            EmitterDistribution::Separable { spatial, .. } => {
                let m = spatial.tail_mass(z) / spatial.tail_mass(0.0);
                Ok(self.h.iter().map(|v| v * m).collect())
            }
            EmitterDistribution::Tabulated { .. } => Ok(h_table(
                &self.dist,
                self.params.gamma(),
                &self.omegas,
                &[z],
                Tolerance::default(),
            )?
            .pop()
            .expect("one row")),
        }
    }

    pub fn eval(&self, z: f64, t: f64, delta: f64) -> Result<C64> {
        Ok(self.eval_many(z, &[t], delta)?[0])
    }

    /// Evaluate at several times for one `(z, Δ)`.
    pub fn eval_many(&self, z: f64, ts: &[f64], delta: f64) -> Result<Vec<C64>> {
        let l = self.params.length();
        if !(0.0..=l).contains(&z) {
            return Err(Error::invalid(format!("z = {z} outside [0, {l}]")));
        }
        let h = self.h_at(z)?;
        let d = self.params.d();
        let lag = (l - z) / self.params.c();
        let kappa = 0.5 * self.params.gamma();
        let mu0 = self.mu0;
        let out = ts
            .iter()
            .map(|&t| {
                let s = t - lag;
                let free = if s > 0.0 {
                    C64::new(0.0, mu0) * C64::new(-kappa * s, -delta * s).exp()
                } else if s == 0.0 {
                    C64::new(0.0, 0.5 * mu0)
                } else {
                    C64::new(0.0, 0.0)
                };
                if d == 0.0 {
                    return free;
                }
                let g: Vec<C64> = self
                    .omegas
                    .iter()
                    .zip(&h)
                    .map(|(&w, &hz)| C64::from_polar(1.0, -w * s) * ((-d * hz).exp() - 1.0))
                    .collect();
                let corr = quad::pole_integral(&self.omegas, &g, delta, kappa, -1.0);
                free + C64::new(0.0, mu0 / (2.0 * PI)) * corr
            })
            .collect();
        Ok(out)
    }
}

/// Storage response on a default grid covering the distribution and the
/// requested time with margin.
pub fn storage_response(
    z: f64,
    t: f64,
    delta: f64,
    params: &TransitionParams,
    dist: &EmitterDistribution,
) -> Result<C64> {
    let (a, b) = dist.spectral_domain();
    let half = 2.0 * a.abs().max(b.abs()).max(delta.abs());
    let horizon = t.abs() + params.transit();
    let step = (PI / (8.0 * horizon)).min((b - a) / 400.0);
    let mut n = (2.0 * half / step).ceil() as usize + 1;
    n += 1 - n % 2;
    let grid = FrequencyGrid::symmetric(half, n.min(400_001))?;
    StorageKernel::new(params, dist, grid)?.eval(z, t, delta)
}

/// Fraction of the input photon number transmitted through the medium
/// during storage.
pub fn storage_leakage(
    e_in: &SpectralField,
    params: &TransitionParams,
    dist: &EmitterDistribution,
) -> Result<f64> {
    let n = e_in.norm();
    if !(n > 0.0) {
        return Err(Error::invalid("input field has zero norm"));
    }
    let i = transmitted_intensity(e_in, dist, params.d(), params.gamma())?;
    Ok((i.total() / n).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SpectralProfile;
    use crate::transition::{ControlVelocity, TransitionSpec};

    const L: f64 = 0.01;
    const C: f64 = 0.01;

    fn setup(d: f64, gamma: f64) -> (TransitionParams, EmitterDistribution, SpectralField) {
        let params = TransitionSpec::new(gamma, L, C, d).derive().unwrap();
        let dist =
            EmitterDistribution::uniform_in_space(L, SpectralProfile::uniform(40.0).unwrap())
                .unwrap();
        let grid = FrequencyGrid::symmetric(24.0, 961).unwrap();
        // Pulse well ahead of the storage pulse at t = −L/c = −1 ns.
        let e = SpectralField::gaussian_pulse(grid, 0.5, -5.0, 0.0);
        (params, dist, e)
    }

    #[test]
    fn zero_input_gives_zero_spin_wave() {
        let (p, dist, e) = setup(2.0, 0.01);
        let zero = SpectralField::zeros(*e.grid());
        let (t0, dt) = default_timing(&p);
        let s = store_spin_wave(&zero, &p, &dist, t0, dt).unwrap();
        assert!(s.values().iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn ordering_bound_enforced() {
        let p = TransitionSpec::new(0.01, L, C, 2.0)
            .with_control(ControlVelocity::Velocity(2.0 * C))
            .derive()
            .unwrap();
        let (_, dist, e) = setup(2.0, 0.01);
        assert!(store_spin_wave(&e, &p, &dist, -1.0, 0.0).is_err());
        assert!(store_spin_wave(&e, &p, &dist, -1.0, p.min_store_delay()).is_ok());
    }

    #[test]
    fn high_depth_stores_near_entry_edge() {
        let (p, dist, e) = setup(20.0, 0.01);
        let (t0, dt) = default_timing(&p);
        let zs = SpaceGrid::new(L, 201).unwrap().points();
        let deltas: Vec<f64> = e
            .grid()
            .points()
            .into_iter()
            .filter(|w| w.abs() < 35.0)
            .collect();
        let s = store_spin_wave_on(&e, &p, &dist, t0, dt, &zs, &deltas).unwrap();
        let frac = s.fraction_beyond(&dist, L * (1.0 - 3.0 / 20.0));
        assert!(frac >= 0.9, "{frac}");
    }

    #[test]
    fn stored_plus_leaked_is_conserved() {
        // γ T_coh = 0.005 · 0.5 ns.
        for &d in &[0.5, 3.0] {
            let (p, dist, e) = setup(d, 0.005);
            let (t0, dt) = default_timing(&p);
            let zs = SpaceGrid::new(L, 129).unwrap().points();
            let s = store_spin_wave_on(&e, &p, &dist, t0, dt, &zs, &e.grid().points()).unwrap();
            let total = s.stored_norm(&dist) + storage_leakage(&e, &p, &dist).unwrap();
            assert!((total - 1.0).abs() < 0.02, "d = {d}: {total}");
        }
    }

    #[test]
    fn phase_grating_is_pointwise() {
        let (p, dist, e) = setup(2.0, 0.01);
        let kappa = 314.0;
        let q = TransitionSpec::new(0.01, L, C, 2.0)
            .with_wave_numbers(0.0, kappa)
            .derive()
            .unwrap();
        let (t0, dt) = default_timing(&p);
        let a = store_spin_wave(&e, &p, &dist, t0, dt).unwrap();
        let b = store_spin_wave(&e, &q, &dist, t0, dt).unwrap();
        for (i, &z) in a.positions().iter().enumerate() {
            let ph = C64::from_polar(1.0, kappa * z);
            for (x, y) in a.row(i).iter().zip(b.row(i)) {
                assert!((x * ph - y).norm() <= 1e-12 * x.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn response_is_causal() {
        // Smooth line shape, so the numerical inverse transform has no edge ringing.
        let (p, _, _) = setup(2.0, 0.05);
        let dist =
            EmitterDistribution::uniform_in_space(L, SpectralProfile::gaussian(10.0).unwrap())
                .unwrap();
        let grid = FrequencyGrid::symmetric(800.0, 64001).unwrap();
        let k = StorageKernel::new(&p, &dist, grid).unwrap();
        let z = 0.4 * L;
        let lag = (L - z) / C;
        let ts: Vec<f64> = (0..400).map(|i| -2.0 + 6.0 * i as f64 / 399.0).collect();
        let v = k.eval_many(z, &ts, 3.0).unwrap();
        let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (t, x) in ts.iter().zip(&v) {
            if *t < lag - 0.05 {
                assert!(x.norm() <= 1e-3 * peak, "t = {t}: {}", x.norm() / peak);
            }
        }
    }

    #[test]
    fn free_response_peaks_at_arrival() {
        let (p, dist, _) = setup(0.0, 0.05);
        let grid = FrequencyGrid::symmetric(80.0, 801).unwrap();
        let k = StorageKernel::new(&p, &dist, grid)
            .unwrap()
            .with_coupling(1.0);
        let z = 0.25 * L;
        let lag = (L - z) / C;
        let ts: Vec<f64> = (0..301).map(|i| 0.01 * i as f64).collect();
        let v: Vec<f64> = k
            .eval_many(z, &ts, 1.0)
            .unwrap()
            .iter()
            .map(|x| x.norm())
            .collect();
        let imax = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((ts[imax] - lag).abs() <= 0.011);
        assert!(v[0] == 0.0);
    }

    #[test]
    fn convolution_with_response_matches_spin_wave() {
        // Two code paths: S from the spectral formula, and
        // −i e^{iδkz} ∫ dτ ℱ(z, t0(z) − τ; Δ) E_in(τ) in the time domain.
        let (p, dist, e) = setup(1.5, 0.02);
        let (t0, dt) = default_timing(&p);
        let zs = [0.3 * L, 0.8 * L];
        let deltas = [-4.0, 0.0, 2.5];
        let s = store_spin_wave_on(&e, &p, &dist, t0, dt, &zs, &deltas).unwrap();
        let grid = FrequencyGrid::symmetric(100.0, 8001).unwrap();
        let k = StorageKernel::new(&p, &dist, grid).unwrap();
        let (tau, tp) = (0.5, -5.0);
        let amp = 1.0 / (tau * PI.sqrt()).sqrt();
        let n = 1201;
        let taus: Vec<f64> = (0..n)
            .map(|i| tp - 6.0 * tau + 12.0 * tau * i as f64 / (n - 1) as f64)
            .collect();
        for (i, &z) in zs.iter().enumerate() {
            let tz = t0 + dt + (L - z) * p.inv_c_prime();
            for (j, &delta) in deltas.iter().enumerate() {
                let ts: Vec<f64> = taus.iter().map(|t| tz - t).collect();
                let f = k.eval_many(z, &ts, delta).unwrap();
                let y: Vec<C64> = f
                    .iter()
                    .zip(&taus)
                    .map(|(f, t)| f * amp * (-(t - tp) * (t - tp) / (2.0 * tau * tau)).exp())
                    .collect();
                let pz = quad::trapezoid(&taus, &y);
                let want = C64::new(0.0, -1.0) * pz;
                let got = s.get(i, j);
                assert!(
                    (got - want).norm() < 0.01 * got.norm(),
                    "{z} {delta}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn leakage_limits() {
        let (p, dist, e) = setup(0.0, 0.01);
        assert_eq!(storage_leakage(&e, &p, &dist).unwrap(), 1.0);
        let (p, dist, e) = setup(10.0, 0.001);
        assert!(storage_leakage(&e, &p, &dist).unwrap() < 1e-3);
    }

    #[test]
    fn dump_writes_rows() {
        let (p, dist, e) = setup(1.0, 0.05);
        let (t0, dt) = default_timing(&p);
        let s = store_spin_wave_on(&e, &p, &dist, t0, dt, &[0.0, L], &[0.0, 1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        s.dump(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 5);
    }
}
