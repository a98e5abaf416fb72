//! Retrieval kernels `S(ω, ω′)` linking the input spectrum to the spectrum
//! re-emitted after storage, and their application to fields.
//!
//! Kernels that contain the echo ridge `1/(γ̄ − i(ω + ω′))` keep it factored
//! out: the stored entries are the smooth numerator and [`apply_kernel`]
//! integrates the ridge analytically, so the grids do not need to resolve
//! `γ`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::distributions::{EmitterDistribution, SpatialProfile, SpectralProfile};
use crate::error::{Error, Result};
use crate::grid::{fmt_sig, FrequencyGrid, SpectralField};
use crate::par;
use crate::quad::{self, GaussPanels, Tolerance};
use crate::response::h_table;
use crate::transition::TransitionParams;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// How emitter detunings are mapped between storage and retrieval.
#[derive(Debug, Clone, PartialEq)]
pub enum BroadeningMap {
    /// Reversed broadening, `Δ → −Δ`.
    Negate,
    /// Unchanged broadening.
    Identity,
    /// Retrieval detunings drawn independently from a normalized profile.
    Uncorrelated(SpectralProfile),
}

impl BroadeningMap {
    pub fn uncorrelated(profile: SpectralProfile) -> Result<Self> {
        let m = profile.mass();
        if (m - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidDistribution(format!(
                "uncorrelated profile has mass {m}"
            )));
        }
        Ok(BroadeningMap::Uncorrelated(profile))
    }
}

/// Which construction produced a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    General,
    CribUniform,
    Ideal,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::General => "general",
            KernelKind::CribUniform => "crib_uniform",
            KernelKind::Ideal => "ideal",
        }
    }
}

/// Kernel sampled on an output grid (rows) and input grid (columns).
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    out_grid: FrequencyGrid,
    in_grid: FrequencyGrid,
    /// Row-major; the smooth numerator when `ridge` is set.
    entries: Vec<C64>,
    kind: KernelKind,
    /// Decay `κ` of a factored `1/(κ − i(ω + ω′))` ridge.
    ridge: Option<f64>,
}

impl KernelMatrix {
    fn new(
        out_grid: FrequencyGrid,
        in_grid: FrequencyGrid,
        entries: Vec<C64>,
        kind: KernelKind,
        ridge: Option<f64>,
    ) -> Result<Self> {
        debug_assert_eq!(entries.len(), out_grid.len() * in_grid.len());
        if let Some(k) = entries
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            let (i, j) = (k / in_grid.len(), k % in_grid.len());
            return Err(Error::numeric(
                format!(
                    "non-finite kernel entry at ω = {}, ω′ = {}",
                    out_grid.point(i),
                    in_grid.point(j)
                ),
                f64::INFINITY,
            ));
        }
        Ok(KernelMatrix {
            out_grid,
            in_grid,
            entries,
            kind,
            ridge,
        })
    }

    pub fn out_grid(&self) -> &FrequencyGrid {
        &self.out_grid
    }

    pub fn in_grid(&self) -> &FrequencyGrid {
        &self.in_grid
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Width of the echo ridge, if the kernel has one.
    pub fn ridge_width(&self) -> Option<f64> {
        self.ridge
    }

    /// Full kernel value `S(ω_i, ω′_j)`.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let v = self.entries[i * self.in_grid.len() + j];
        match self.ridge {
            Some(k) => v / C64::new(k, -(self.out_grid.point(i) + self.in_grid.point(j))),
            None => v,
        }
    }

    pub fn rows(&self) -> usize {
        self.out_grid.len()
    }

    pub fn cols(&self) -> usize {
        self.in_grid.len()
    }

    /// Write `ω, ω′, Re S, Im S` rows.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut out = String::from("omega,omega_in,re,im\n");
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let v = self.entry(i, j);
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_sig(self.out_grid.point(i)),
                    fmt_sig(self.in_grid.point(j)),
                    fmt_sig(v.re),
                    fmt_sig(v.im)
                ));
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Output of [`apply_kernel`].
#[derive(Debug, Clone)]
pub struct Retrieved {
    pub field: SpectralField,
    pub warnings: Vec<String>,
}

impl Retrieved {
    /// Retrieval probability `∫|E_out|² dω`.
    pub fn probability(&self) -> f64 {
        self.field.norm()
    }
}

fn check_delay(t_s: f64) -> Result<()> {
    if !(t_s >= 0.0) || !t_s.is_finite() {
        return Err(Error::invalid(format!(
            "storage time must be >= 0, got {t_s}"
        )));
    }
    Ok(())
}

/// Output and input phase factors `e^{iω(T_S + L/c′_R)}`, `e^{iω′L/c′_S}`.
fn edge_phases(
    storage: &TransitionParams,
    retrieval: &TransitionParams,
    t_s: f64,
    outs: &[f64],
    ins: &[f64],
) -> (Vec<C64>, Vec<C64>) {
    let tr = t_s + retrieval.length() * retrieval.inv_c_prime();
    let ts = storage.length() * storage.inv_c_prime();
    (
        outs.iter().map(|&w| C64::from_polar(1.0, w * tr)).collect(),
        ins.iter().map(|&w| C64::from_polar(1.0, w * ts)).collect(),
    )
}

/// Kernel from the full nested position and detuning integrals, for
/// arbitrary distributions and broadening maps.
///
/// Both transitions share one peak density `n0`, taken from `G_S`; a
/// retrieval distribution with a different peak enters through its scale.
#[allow(clippy::too_many_arguments)]
pub fn build_kernel_general(
    storage: &TransitionParams,
    retrieval: &TransitionParams,
    g_s: &EmitterDistribution,
    g_r: &EmitterDistribution,
    map: &BroadeningMap,
    t_s: f64,
    out_grid: &FrequencyGrid,
    in_grid: &FrequencyGrid,
) -> Result<KernelMatrix> {
    check_delay(t_s)?;
    let l = storage.length();
    if (retrieval.length() - l).abs() > 1e-12 * l
        || (g_s.length() - l).abs() > 1e-12 * l
        || (g_r.length() - l).abs() > 1e-12 * l
    {
        return Err(Error::invalid(
            "storage and retrieval media must have the same length",
        ));
    }
    let outs = out_grid.points();
    let ins = in_grid.points();
    let (no, ni) = (outs.len(), ins.len());
    let pref = (storage.d() * retrieval.d()).sqrt() / (2.0 * PI * g_s.peak_density()?)
        * (storage.c() / retrieval.c()).sqrt();
    let ridge = match map {
        BroadeningMap::Negate => Some(0.5 * (storage.gamma() + retrieval.gamma())),
        _ => None,
    };
    if pref == 0.0 {
        return KernelMatrix::new(
            *out_grid,
            *in_grid,
            vec![ZERO; no * ni],
            KernelKind::General,
            ridge,
        );
    }

    let dk = storage.delta_k() + retrieval.delta_k();
    let wmax = outs.iter().chain(&ins).fold(0.0f64, |m, w| m.max(w.abs()));
    let phase_span =
        dk.abs() * l + wmax * l * (storage.inv_c_eff().abs() + retrieval.inv_c_eff().abs());
    let panels = 4
        + (0.5 * (storage.d() + retrieval.d())).ceil() as usize
        + (phase_span / PI).ceil() as usize;
    let rule = GaussPanels::new(0.0, l, panels, 10);
    let zs = &rule.nodes;
    let nz = zs.len();
    let tol = Tolerance::default();

    // Propagation factors a(z, ω) = e^{−iω(L−z)/c_eff − d h(z, ω)}.
    let prop =
        |p: &TransitionParams, dist: &EmitterDistribution, ws: &[f64]| -> Result<Vec<Vec<C64>>> {
            let h = h_table(dist, p.gamma(), ws, zs, tol)?;
            Ok(zs
                .iter()
                .zip(h)
                .map(|(&z, row)| {
                    ws.iter()
                        .zip(row)
                        .map(|(&w, hz)| {
                            (C64::new(0.0, -w * (l - z) * p.inv_c_eff()) - p.d() * hz).exp()
                        })
                        .collect()
                })
                .collect())
        };
    let a_r = prop(retrieval, g_r, &outs)?;
    let a_s = prop(storage, g_s, &ins)?;
    // Quadrature weight, grating phase and prefactor folded into the z weight.
    let wz: Vec<C64> = zs
        .iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| C64::from_polar(w * pref, dk * z))
        .collect();

    // Position/detuning factors of the two partial-fraction terms.
    let (gr, gs_) = (retrieval.gamma(), storage.gamma());
    let local = |ws: &[f64], sign: f64, gamma: f64, conj: bool| -> Result<Vec<Vec<C64>>> {
        let flat = par::try_map_range(nz * ws.len(), |idx| {
            let (iz, k) = (idx / ws.len(), idx % ws.len());
            let v = g_r.local_response(zs[iz], sign * ws[k], gamma, tol)?;
            Ok::<C64, Error>(if conj { v.conj() } else { v })
        })?;
        Ok(flat.chunks(ws.len()).map(|c| c.to_vec()).collect())
    };
    // Row factor u(z, i) and column factor v(z, j) such that the z-sum of
    // wz·a_R·a_S·(u + v) (or u·v) gives the entry.
    enum Combine {
        Sum,
        Product,
        Difference,
    }
    let (u, v, combine) = match map {
        BroadeningMap::Negate => (
            local(&outs, 1.0, gr, false)?,
            local(&ins, -1.0, gs_, true)?,
            Combine::Sum,
        ),
        BroadeningMap::Identity => (
            local(&outs, 1.0, gr, false)?,
            local(&ins, 1.0, gs_, false)?,
            Combine::Difference,
        ),
        BroadeningMap::Uncorrelated(g0) => {
            let (a, b) = g_s.spectral_domain();
            let col: Vec<C64> = ins
                .iter()
                .map(|&w| quad::pole_log(0.5 * gs_, 1.0, a - w, b - w))
                .collect();
            let rows = par::try_map_range(nz, |iz| {
                outs.iter()
                    .map(|&w| weighted_local_response(g_r, g0, zs[iz], w, gr, tol))
                    .collect::<Result<Vec<C64>>>()
            })?;
            (rows, vec![col; nz], Combine::Product)
        }
    };

    // Diagonal derivative for the identity map with equal decay rates.
    let eps = 1e-3 * gr.min(gs_);
    let mut entries = vec![ZERO; no * ni];
    let (ph_out, ph_in) = edge_phases(storage, retrieval, t_s, &outs, &ins);
    let res: Result<()> = {
        let fail = std::sync::Mutex::new(None);
        par::for_each_chunk_mut(&mut entries, ni, |i, row| {
            let w = outs[i];
            let mut acc_u = vec![ZERO; ni];
            let mut acc_v = vec![ZERO; ni];
            for iz in 0..nz {
                let ar = wz[iz] * a_r[iz][i];
                let ui = u[iz][i];
                for j in 0..ni {
                    let t = ar * a_s[iz][j];
                    match combine {
                        Combine::Product => acc_u[j] += t * ui * v[iz][j],
                        _ => {
                            acc_u[j] += t * ui;
                            acc_v[j] += t * v[iz][j];
                        }
                    }
                }
            }
            for j in 0..ni {
                let val = match combine {
                    Combine::Sum => acc_u[j] + acc_v[j],
                    Combine::Product => acc_u[j],
                    Combine::Difference => {
                        let den = C64::new(0.5 * (gs_ - gr), w - ins[j]);
                        if den.norm() > 1e-6 * gr.max(gs_) {
                            (acc_u[j] - acc_v[j]) / den
                        } else {
                            match diagonal_term(g_r, zs, &wz, &a_r, &a_s, i, j, w, gr, eps, tol) {
                                Ok(v) => v,
                                Err(e) => {
                                    *fail.lock().expect("lock") = Some(e);
                                    ZERO
                                }
                            }
                        }
                    }
                };
                row[j] = ph_out[i] * ph_in[j] * val;
            }
        });
        match fail.into_inner().expect("lock") {
            Some(e) => Err(e),
            None => Ok(()),
        }
    };
    res?;
    KernelMatrix::new(*out_grid, *in_grid, entries, KernelKind::General, ridge)
}

/// `Σ_z wz a_R a_S ∫G/(i(Δ−ω)+γ/2)²` via a central difference of `ρ`.
#[allow(clippy::too_many_arguments)]
fn diagonal_term(
    g_r: &EmitterDistribution,
    zs: &[f64],
    wz: &[C64],
    a_r: &[Vec<C64>],
    a_s: &[Vec<C64>],
    i: usize,
    j: usize,
    w: f64,
    gamma: f64,
    eps: f64,
    tol: Tolerance,
) -> Result<C64> {
    let mut acc = ZERO;
    for iz in 0..zs.len() {
        let hi = g_r.local_response(zs[iz], w + eps, gamma, tol)?;
        let lo = g_r.local_response(zs[iz], w - eps, gamma, tol)?;
        // d/dω of 1/(i(Δ−ω)+γ/2) is i/(…)², so ∫G/(…)² = −i ∂ρ/∂ω.
        let d = C64::new(0.0, -1.0) * (hi - lo) / (2.0 * eps);
        acc += wz[iz] * a_r[iz][i] * a_s[iz][j] * d;
    }
    Ok(acc)
}

/// `∫ G0(Δ) G(z, Δ) / (i(Δ − ω) + γ/2) dΔ`.
fn weighted_local_response(
    dist: &EmitterDistribution,
    g0: &SpectralProfile,
    z: f64,
    omega: f64,
    gamma: f64,
    tol: Tolerance,
) -> Result<C64> {
    match dist {
        EmitterDistribution::Separable { spatial, spectral } => {
            let s = spatial.density(z);
            if s == 0.0 {
                return Ok(ZERO);
            }
            // Integrate over the narrower support so its features are seen.
            let (a0, b0) = g0.domain();
            let (a1, b1) = spectral.domain();
            let (base, other) = if b0 - a0 <= b1 - a1 {
                (g0, spectral)
            } else {
                (spectral, g0)
            };
            let w = |d: f64| C64::new(other.density(d), 0.0);
            Ok(base.pole_transform(omega, 0.5 * gamma, 1.0, Some(&w), tol)? * s)
        }
        EmitterDistribution::Tabulated {
            zs, deltas, values, ..
        } => {
            let nd = deltas.len();
            let nzs = zs.len();
            let zc = z.clamp(zs[0], zs[nzs - 1]);
            let k = zs.partition_point(|p| *p <= zc).clamp(1, nzs - 1) - 1;
            let t = (zc - zs[k]) / (zs[k + 1] - zs[k]);
            let row: Vec<C64> = (0..nd)
                .map(|j| {
                    let a = values[k * nd + j];
                    let b = values[(k + 1) * nd + j];
                    C64::new((a + (b - a) * t) * g0.density(deltas[j]), 0.0)
                })
                .collect();
            Ok(quad::pole_integral_linear(
                deltas,
                &row,
                omega,
                0.5 * gamma,
                1.0,
            ))
        }
    }
}

/// Closed-form reversed-broadening kernel for spatially uniform media whose
/// line is flat across the photon bandwidth (`ℋ = 1/2`).
pub fn build_kernel_crib_uniform(
    storage: &TransitionParams,
    retrieval: &TransitionParams,
    t_s: f64,
    out_grid: &FrequencyGrid,
    in_grid: &FrequencyGrid,
) -> Result<KernelMatrix> {
    check_delay(t_s)?;
    let l = storage.length();
    let outs = out_grid.points();
    let ins = in_grid.points();
    let dk_l = (storage.delta_k() + retrieval.delta_k()) * l;
    let dbar = 0.5 * (storage.d() + retrieval.d());
    let amp = (storage.d() * retrieval.d() * storage.c() / retrieval.c()).sqrt();
    let kappa = 0.5 * (storage.gamma() + retrieval.gamma());
    let (ph_out, ph_in) = edge_phases(storage, retrieval, t_s, &outs, &ins);
    let grating = C64::from_polar(amp, dk_l);
    let (zr, zs) = (l * retrieval.inv_c_eff(), l * storage.inv_c_eff());
    let ni = ins.len();
    let mut entries = vec![ZERO; outs.len() * ni];
    par::for_each_chunk_mut(&mut entries, ni, |i, row| {
        for j in 0..ni {
            let f = dk_l + outs[i] * zr + ins[j] * zs;
            row[j] = ph_out[i] * ph_in[j] * grating * quad::phi1(C64::new(dbar, f));
        }
    });
    KernelMatrix::new(
        *out_grid,
        *in_grid,
        entries,
        KernelKind::CribUniform,
        Some(kappa),
    )
}

/// Matched single-transition kernel: equal depths, velocities and cutoff
/// for storage and retrieval, no phase mismatch.
pub fn build_kernel_ideal(
    params: &TransitionParams,
    t_s: f64,
    out_grid: &FrequencyGrid,
    in_grid: &FrequencyGrid,
) -> Result<KernelMatrix> {
    check_delay(t_s)?;
    let outs = out_grid.points();
    let ins = in_grid.points();
    let d = params.d();
    let zeta = params.length() * params.inv_c_eff();
    let lc = params.length() * params.inv_c_prime();
    let ni = ins.len();
    let mut entries = vec![ZERO; outs.len() * ni];
    par::for_each_chunk_mut(&mut entries, ni, |i, row| {
        for j in 0..ni {
            let s = outs[i] + ins[j];
            let phase = C64::from_polar(1.0, outs[i] * t_s + s * lc);
            row[j] = phase * d * quad::phi1(C64::new(d, s * zeta));
        }
    });
    KernelMatrix::new(
        *out_grid,
        *in_grid,
        entries,
        KernelKind::Ideal,
        Some(params.gamma()),
    )
}

/// `E_out(ω) = (1/2π) ∫ dω′ S(ω, ω′) E_in(ω′)`.
pub fn apply_kernel(kernel: &KernelMatrix, e_in: &SpectralField) -> Result<Retrieved> {
    if e_in.grid() != kernel.in_grid() {
        return Err(Error::invalid(
            "input field grid does not match the kernel's input grid",
        ));
    }
    let ins = kernel.in_grid.points();
    let outs = kernel.out_grid.points();
    let ni = ins.len();
    let amp = e_in.amplitude();
    let mut warnings = Vec::new();
    let values: Vec<C64> = match kernel.ridge {
        Some(kappa) => {
            let h = kernel.in_grid.spacing();
            if h > 0.25 * kappa {
                warnings.push(format!(
                    "input grid spacing {h:.3e} does not resolve the echo ridge of width {kappa:.3e}; \
                     the ridge is integrated analytically"
                ));
            }
            par::map_range(outs.len(), |i| {
                let g: Vec<C64> = (0..ni)
                    .map(|j| kernel.entries[i * ni + j] * amp[j])
                    .collect();
                quad::pole_integral(&ins, &g, -outs[i], kappa, -1.0) / (2.0 * PI)
            })
        }
        None => par::map_range(outs.len(), |i| {
            let g: Vec<C64> = (0..ni)
                .map(|j| kernel.entries[i * ni + j] * amp[j])
                .collect();
            quad::trapezoid(&ins, &g) / (2.0 * PI)
        }),
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Retrieved {
        field: SpectralField::new(kernel.out_grid, values)?,
        warnings,
    })
}

/// Spatially uniform media are the only case the closed-form kernels cover.
pub fn closed_form_applies(g_s: &EmitterDistribution, g_r: &EmitterDistribution) -> bool {
    let uniform = |g: &EmitterDistribution| {
        matches!(
            g,
            EmitterDistribution::Separable {
                spatial: SpatialProfile::Uniform { .. },
                ..
            }
        )
    };
    uniform(g_s) && uniform(g_r)
}
