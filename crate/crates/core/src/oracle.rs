//! Time-domain integrator of the one-dimensional Maxwell–Bloch amplitude
//! equations with instantaneous π-pulse events.
//!
//! The oracle shares no code with the spectral pipeline beyond parameter
//! types; it exists to cross-check it. Fields are carried as slowly varying
//! envelopes with the optical phase `e^{±ikz}` divided out, so only the
//! phase mismatch `δk` survives.
//!
//! Transport is first-order upwind (linear interpolation at the foot of the
//! characteristic) with the medium source integrated by the trapezoid rule
//! along the characteristic. Polarizations use an exponential integrator
//! that is exact for the `−(γ/2 + iΔ)` part and treats the driving field as
//! linear over the step. Forward and backward fields are not coupled: the
//! storage transition evolves `(E_b, P)`, the retrieval transition
//! `(E_f, Q)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64 as C64;

use crate::distributions::EmitterDistribution;
use crate::error::{Error, Result};
use crate::grid::{fmt_sig, FrequencyGrid, SpectralField};
use crate::par;
use crate::response::transmitted_field;
use crate::retrieval::{apply_kernel, build_kernel_general, BroadeningMap};
use crate::storage::default_timing;
use crate::transducer::{mw_output_general_with, OutputOptions, StoredExcitation};
use crate::transition::TransitionParams;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Baseline number of spatial cells.
pub const BASELINE_SPACE_POINTS: usize = 256;
/// Baseline Courant number `c·Δt/Δz`.
pub const BASELINE_CFL: f64 = 0.9;
/// Fewest detuning nodes accepted.
pub const MIN_DETUNING_POINTS: usize = 64;
/// Largest detuning grid built automatically.
const MAX_DETUNING_POINTS: usize = 200_000;
/// Allowed relative growth of the total excitation per undriven step.
const GROWTH_LIMIT: f64 = 1e-6;
/// Detunings where the line density is below this fraction of its peak are
/// left out of the node set.
const DENSITY_CUTOFF: f64 = 1e-12;
/// Spurious comb revivals occur `2π/δΔ` after excitation; the node spacing
/// keeps them this many windows away.
const REVIVAL_MARGIN: f64 = 1.5;

/// Discretization of one oracle run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub space_points: usize,
    pub cfl: f64,
    /// Detuning nodes; chosen from the time window when `None`.
    pub detuning_points: Option<usize>,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            space_points: BASELINE_SPACE_POINTS,
            cfl: BASELINE_CFL,
            detuning_points: None,
        }
    }
}

impl Resolution {
    /// Scale the spatial cells, and with them the time steps, and the
    /// detuning nodes by `factor`.
    pub fn refined(&self, factor: usize, detuning_points: usize) -> Resolution {
        Resolution {
            space_points: self.space_points * factor,
            cfl: self.cfl,
            detuning_points: Some(detuning_points * factor),
        }
    }
}

/// Instantaneous control-pulse events.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEvent {
    /// Storage π-pulse entering at `z = L` at `t0 + delta_t` and running
    /// backward at the storage control velocity; maps `P → S`.
    StorePiPulse { t0: f64, delta_t: f64 },
    /// Detuning map applied to the spin wave before retrieval.
    DetuningMap(BroadeningMap),
    /// Retrieval π-pulse entering at `z = 0` a time `storage_time` after the
    /// storage pulse has left the medium, running forward; maps `S → Q`.
    RetrievePiPulse { storage_time: f64 },
}

/// Medium, drive and discretization of one oracle run.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub storage: TransitionParams,
    pub storage_dist: EmitterDistribution,
    pub retrieval: TransitionParams,
    pub retrieval_dist: EmitterDistribution,
    /// Backward input field at `z = L`.
    pub input: Option<SpectralField>,
    /// Spin wave present at the start, uniform in position.
    pub stored: Option<StoredExcitation>,
    /// Simulated interval `[t_start, t_end]`.
    pub window: (f64, f64),
    pub resolution: Resolution,
}

/// Snapshot of the discretized fields.
#[derive(Debug, Clone)]
pub struct TimeDomainState {
    pub time: f64,
    pub positions: Vec<f64>,
    pub detunings: Vec<f64>,
    pub forward: Vec<C64>,
    pub backward: Vec<C64>,
    /// Storage-transition polarization, row per position.
    pub storage_polarization: Vec<Vec<C64>>,
    /// Retrieval-transition polarization, row per position.
    pub retrieval_polarization: Vec<Vec<C64>>,
    pub spin: Vec<Vec<C64>>,
}

/// Boundary records of a run.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub t_start: f64,
    pub dt: f64,
    /// Forward field leaving at `z = L`.
    pub forward_out: Vec<C64>,
    /// Backward field leaving at `z = 0`.
    pub backward_out: Vec<C64>,
    /// Total excitation (fields, polarizations and spin wave) per step.
    pub excitation: Vec<f64>,
    pub state: TimeDomainState,
    pub warnings: Vec<String>,
}

/// Which boundary record to transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Forward,
    Backward,
}

impl OracleRun {
    pub fn times(&self) -> Vec<f64> {
        (0..self.forward_out.len())
            .map(|n| self.t_start + n as f64 * self.dt)
            .collect()
    }

    pub fn record(&self, port: Port) -> &[C64] {
        match port {
            Port::Forward => &self.forward_out,
            Port::Backward => &self.backward_out,
        }
    }

    /// `∫|E(t)|² dt` at a port.
    pub fn photons(&self, port: Port) -> f64 {
        let r = self.record(port);
        let s: f64 = r.iter().map(|a| a.norm_sqr()).sum();
        let ends = (r[0].norm_sqr() + r[r.len() - 1].norm_sqr()) / 2.0;
        (s - ends) * self.dt
    }

    /// Spectrum `(2π)^{-1/2} ∫E(t) e^{iωt} dt` of a port record.
    pub fn spectrum(&self, port: Port, grid: &FrequencyGrid) -> SpectralField {
        let r = self.record(port);
        let n = r.len();
        let (t0, dt) = (self.t_start, self.dt);
        let amp = par::map_range(grid.len(), |k| {
            let w = grid.point(k);
            let step = C64::from_polar(1.0, w * dt);
            let mut rot = C64::from_polar(1.0, w * t0);
            let mut acc = ZERO;
            for (m, e) in r.iter().enumerate() {
                let wt = if m == 0 || m == n - 1 { 0.5 } else { 1.0 };
                acc += e * rot * wt;
                rot *= step;
            }
            acc * dt / (2.0 * PI).sqrt()
        });
        SpectralField::new(*grid, amp).expect("finite record")
    }

    /// Write `t, Re E, Im E` rows for a port.
    pub fn dump(&self, port: Port, path: &Path) -> Result<()> {
        let mut out = String::from("t,re,im\n");
        for (t, e) in self.times().iter().zip(self.record(port)) {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig(*t),
                fmt_sig(e.re),
                fmt_sig(e.im)
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `(1 − e^{−x}(1 + x))/x²`, weight of the step-start field.
fn psi(x: C64) -> C64 {
    if x.norm() < 1e-2 {
        // Σ (−x)^n (n+1)/(n+2)!
        let mut term = C64::new(1.0, 0.0);
        let mut s = ZERO;
        let mut fact = 2.0;
        for n in 0..8 {
            s += term * ((n + 1) as f64 / fact);
            term *= -x;
            fact *= (n + 3) as f64;
        }
        s
    } else {
        (C64::new(1.0, 0.0) - (-x).exp() * (1.0 + x)) / (x * x)
    }
}

fn phi1(x: C64) -> C64 {
    crate::quad::phi1(x)
}

/// Per-detuning coefficients of the exact linear step
/// `P ← e·P + iμ0(c0·E_start + c1·E_end)`.
struct Stepper {
    decay: Vec<C64>,
    c0: Vec<C64>,
    c1: Vec<C64>,
    rates: Vec<C64>,
}

impl Stepper {
    fn new(gamma: f64, detunings: &[f64], dt: f64) -> Self {
        let rates: Vec<C64> = detunings
            .iter()
            .map(|&d| C64::new(gamma / 2.0, d))
            .collect();
        let mut decay = Vec::with_capacity(rates.len());
        let mut c0 = Vec::with_capacity(rates.len());
        let mut c1 = Vec::with_capacity(rates.len());
        for a in &rates {
            let x = a * dt;
            let p = psi(x);
            decay.push((-x).exp());
            c0.push(p * dt);
            c1.push((phi1(x) - p) * dt);
        }
        Stepper {
            decay,
            c0,
            c1,
            rates,
        }
    }
}

/// Per-position working set.
#[derive(Debug, Clone)]
struct Row {
    p: Vec<C64>,
    q: Vec<C64>,
    s: Vec<C64>,
    src_p: C64,
    src_q: C64,
    norm_p: f64,
    norm_q: f64,
    norm_s: f64,
    e_new: C64,
}

fn sum_sources(w: &[f64], x: &[C64]) -> (C64, f64) {
    let mut s = ZERO;
    let mut n = 0.0;
    for (wj, xj) in w.iter().zip(x) {
        s += xj * *wj;
        n += wj * xj.norm_sqr();
    }
    (s, n)
}

/// Fail when the undriven total excitation (plus what left the medium)
/// grew by more than [`GROWTH_LIMIT`] over one step.
fn check_growth(before: f64, after: f64, t: f64) -> Result<()> {
    if before > 0.0 && after > before * (1.0 + GROWTH_LIMIT) {
        return Err(Error::numeric(
            format!(
                "oracle unstable at t = {t}: excitation grew by a factor {} in one step",
                after / before
            ),
            after / before - 1.0,
        ));
    }
    Ok(())
}

/// Implicit field–polarization exchange at one node.
struct Coupling<'a> {
    mu: f64,
    l: f64,
    dt: f64,
    stepper: &'a Stepper,
}

impl Coupling<'_> {
    /// Advance `pol` over one step and return the new field, source and
    /// weighted norm. The new field is `foot + (dt/2)·source(new pol)`
    /// unless `boundary`, where it is `foot` itself; the polarization is
    /// linear in it, so the trapezoid coupling is solved in closed form.
    fn step(
        &self,
        pol: &mut [C64],
        w: &[f64],
        c1_sum: C64,
        e_old: C64,
        foot: C64,
        boundary: bool,
    ) -> (C64, C64, f64) {
        let st = self.stepper;
        if self.mu == 0.0 {
            return (foot, ZERO, 0.0);
        }
        let drive0 = I * self.mu * e_old;
        let mut b_sum = ZERO;
        for j in 0..pol.len() {
            pol[j] = st.decay[j] * pol[j] + st.c0[j] * drive0;
            b_sum += pol[j] * w[j];
        }
        let e_new = if boundary {
            foot
        } else {
            let h = self.dt / 2.0;
            (foot + I * (h * self.mu * self.l) * b_sum)
                / (1.0 + c1_sum * (h * self.mu * self.mu * self.l))
        };
        let drive1 = I * self.mu * e_new;
        let mut s = ZERO;
        let mut nrm = 0.0;
        for j in 0..pol.len() {
            pol[j] += st.c1[j] * drive1;
            s += pol[j] * w[j];
            nrm += w[j] * pol[j].norm_sqr();
        }
        (e_new, I * (self.mu * self.l) * s, nrm)
    }
}

/// Uniform midpoint detuning nodes covering where either line is non-negligible.
fn detuning_nodes(cfg: &OracleConfig, symmetric: bool) -> Result<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for dist in [&cfg.storage_dist, &cfg.retrieval_dist] {
        let prof = dist.marginal_spectral()?;
        let (a, b) = prof.domain();
        let peak = prof.peak();
        let n = 20_001;
        let h = (b - a) / (n - 1) as f64;
        let mut first = None;
        let mut last = None;
        for k in 0..n {
            let x = a + k as f64 * h;
            if prof.density(x) >= DENSITY_CUTOFF * peak {
                first.get_or_insert(x);
                last = Some(x);
            }
        }
        if let (Some(f), Some(l)) = (first, last) {
            lo = lo.min((f - h).max(a));
            hi = hi.max((l + h).min(b));
        }
    }
    if !(hi > lo) {
        return Err(Error::InvalidDistribution(
            "emitter lines have no support".into(),
        ));
    }
    if symmetric {
        let m = lo.abs().max(hi.abs());
        lo = -m;
        hi = m;
    }
    let window = cfg.window.1 - cfg.window.0;
    let n = match cfg.resolution.detuning_points {
        Some(n) => n,
        None => {
            let spacing = 2.0 * PI / (REVIVAL_MARGIN * window);
            ((hi - lo) / spacing).ceil() as usize
        }
    }
    .max(MIN_DETUNING_POINTS);
    if n > MAX_DETUNING_POINTS {
        return Err(Error::invalid(format!(
            "detuning grid would need {n} nodes over [{lo}, {hi}]; shorten the window or narrow the line"
        )));
    }
    let h = (hi - lo) / n as f64;
    Ok((0..n).map(|j| lo + (j as f64 + 0.5) * h).collect())
}

/// Sample `(2π)^{-1/2} ∫Ẽ(ω) e^{−iωt} dω` at `t_start + n·dt`.
fn synthesize(field: &SpectralField, t_start: f64, dt: f64, steps: usize) -> Vec<C64> {
    let w = field.grid().points();
    let h = field.grid().spacing();
    let amp = field.amplitude();
    let nw = w.len();
    let mut coef: Vec<C64> = (0..nw)
        .map(|k| {
            let wt = if k == 0 || k == nw - 1 { 0.5 } else { 1.0 };
            amp[k] * wt * h / (2.0 * PI).sqrt() * C64::from_polar(1.0, -w[k] * t_start)
        })
        .collect();
    let rot: Vec<C64> = w.iter().map(|x| C64::from_polar(1.0, -x * dt)).collect();
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        out.push(coef.iter().sum());
        for (c, r) in coef.iter_mut().zip(&rot) {
            *c *= r;
        }
    }
    out
}

/// Interval outside which `|(2π)^{-1/2}∫g(ω)e^{−iωt}dω|` stays below
/// `rel` of its maximum, searched over one aliasing period of the grid.
pub fn temporal_support(grid: &FrequencyGrid, values: &[C64], rel: f64) -> (f64, f64) {
    let period = 2.0 * PI / grid.spacing();
    let n = 4096;
    let dt = period / n as f64;
    let t0 = -period / 2.0;
    let field = SpectralField::new(*grid, values.to_vec()).expect("finite values");
    let e = synthesize(&field, t0, dt, n);
    let mags: Vec<f64> = e.iter().map(|x| x.norm()).collect();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return (0.0, 0.0);
    }
    let first = mags.iter().position(|m| *m >= rel * peak).unwrap_or(0);
    let last = mags.iter().rposition(|m| *m >= rel * peak).unwrap_or(n);
    (t0 + first as f64 * dt, t0 + last as f64 * dt)
}

struct Schedule {
    store: Option<(f64, f64)>,
    map: BroadeningMap,
    retrieve: Option<f64>,
}

fn schedule(events: &[ProtocolEvent]) -> Result<Schedule> {
    let mut s = Schedule {
        store: None,
        map: BroadeningMap::Identity,
        retrieve: None,
    };
    let mut stage = 0;
    for ev in events {
        let (rank, name) = match ev {
            ProtocolEvent::StorePiPulse { .. } => (1, "store_pi_pulse"),
            ProtocolEvent::DetuningMap(_) => (2, "detuning_map"),
            ProtocolEvent::RetrievePiPulse { .. } => (3, "retrieve_pi_pulse"),
        };
        if rank <= stage {
            return Err(Error::invalid(format!(
                "event {name} is out of order or repeated"
            )));
        }
        stage = rank;
        match ev {
            ProtocolEvent::StorePiPulse { t0, delta_t } => s.store = Some((*t0, *delta_t)),
            ProtocolEvent::DetuningMap(m) => {
                if matches!(m, BroadeningMap::Uncorrelated(_)) {
                    return Err(Error::invalid(
                        "the time-domain oracle supports only the negate and identity detuning maps",
                    ));
                }
                s.map = m.clone();
            }
            ProtocolEvent::RetrievePiPulse { storage_time } => {
                if !(*storage_time >= 0.0) {
                    return Err(Error::invalid("storage time must be non-negative"));
                }
                s.retrieve = Some(*storage_time);
            }
        }
    }
    Ok(s)
}

fn coupling(params: &TransitionParams, dist: &EmitterDistribution) -> Result<f64> {
    if params.mu0().is_none() && params.d() == 0.0 {
        return Ok(0.0);
    }
    let n0 = dist.peak_density()?;
    Ok(params.mu0().unwrap_or_else(|| params.coupling_for(n0)))
}

/// Integrate the amplitude equations over the configured window.
pub fn integrate_maxwell_bloch(cfg: &OracleConfig, events: &[ProtocolEvent]) -> Result<OracleRun> {
    let sched = schedule(events)?;
    let (ps, pr) = (&cfg.storage, &cfg.retrieval);
    let l = ps.length();
    if (pr.length() - l).abs() > 1e-12 * l
        || (cfg.storage_dist.length() - l).abs() > 1e-12 * l
        || (cfg.retrieval_dist.length() - l).abs() > 1e-12 * l
    {
        return Err(Error::invalid(
            "transitions and distributions must share one medium length",
        ));
    }
    let (t_start, t_end) = cfg.window;
    if !(t_end > t_start) {
        return Err(Error::invalid("time window is empty"));
    }
    let res = cfg.resolution;
    if res.space_points < 2 {
        return Err(Error::invalid("need at least two spatial cells"));
    }
    if !(res.cfl > 0.0 && res.cfl <= 1.0) {
        return Err(Error::invalid(format!(
            "CFL number {} violates c·Δt ≤ Δz",
            res.cfl
        )));
    }
    let nz = res.space_points;
    let dz = l / nz as f64;
    let c_max = ps.c().max(pr.c());
    let dt = res.cfl * dz / c_max;
    let steps = ((t_end - t_start) / dt).ceil() as usize;
    let nu_s = ps.c() * dt / dz;
    let nu_r = pr.c() * dt / dz;

    let symmetric = matches!(sched.map, BroadeningMap::Negate);
    let deltas = detuning_nodes(cfg, symmetric)?;
    let nd = deltas.len();
    let hd = deltas[1] - deltas[0];
    let zs: Vec<f64> = (0..=nz).map(|i| i as f64 * dz).collect();
    let weights = |dist: &EmitterDistribution| -> Result<Vec<Vec<f64>>> {
        zs.iter()
            .map(|&z| {
                deltas
                    .iter()
                    .map(|&d| Ok(dist.evaluate(z, d)? * hd))
                    .collect()
            })
            .collect()
    };
    let w_s = weights(&cfg.storage_dist)?;
    let w_r = weights(&cfg.retrieval_dist)?;
    let mu_s = coupling(ps, &cfg.storage_dist)?;
    let mu_r = coupling(pr, &cfg.retrieval_dist)?;
    let st_s = Stepper::new(ps.gamma(), &deltas, dt);
    let st_r = Stepper::new(pr.gamma(), &deltas, dt);
    let mapped: Vec<usize> = match sched.map {
        BroadeningMap::Negate => (0..nd).map(|j| nd - 1 - j).collect(),
        _ => (0..nd).collect(),
    };

    // Event fronts per node.
    let store_at: Option<Vec<f64>> = sched.store.map(|(t0, dd)| {
        zs.iter()
            .map(|z| t0 + dd + (l - z) * ps.inv_c_prime())
            .collect()
    });
    let t1 = sched
        .store
        .map(|(t0, dd)| t0 + dd + l * ps.inv_c_prime())
        .unwrap_or(0.0);
    let release_at: Option<Vec<f64>> = sched
        .retrieve
        .map(|ts| zs.iter().map(|z| t1 + ts + z * pr.inv_c_prime()).collect());
    for (name, fronts) in [("storage", &store_at), ("retrieval", &release_at)] {
        if let Some(f) = fronts {
            if f.iter().any(|t| *t <= t_start || *t > t_end) {
                return Err(Error::invalid(format!(
                    "{name} pulse front leaves the simulated window"
                )));
            }
        }
    }
    if let (Some(s), Some(r)) = (&store_at, &release_at) {
        let last_store = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first_release = r.iter().cloned().fold(f64::INFINITY, f64::min);
        if first_release < last_store {
            return Err(Error::invalid(
                "retrieval pulse would precede the end of storage",
            ));
        }
    }
    let retrieve_start = release_at
        .as_ref()
        .map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min));

    let input = match &cfg.input {
        Some(f) => synthesize(f, t_start, dt, steps),
        None => vec![ZERO; steps + 1],
    };

    let init_spin: Vec<C64> = match &cfg.stored {
        Some(f) => deltas.iter().map(|&d| I * f.value(d)).collect(),
        None => vec![ZERO; nd],
    };
    let in_peak = input.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let mut rows: Vec<Row> = (0..=nz)
        .map(|_| Row {
            p: vec![ZERO; nd],
            q: vec![ZERO; nd],
            s: init_spin.clone(),
            src_p: ZERO,
            src_q: ZERO,
            norm_p: 0.0,
            norm_q: 0.0,
            norm_s: 0.0,
            e_new: ZERO,
        })
        .collect();
    for (i, r) in rows.iter_mut().enumerate() {
        r.norm_s = sum_sources(&w_s[i], &r.s).1;
    }
    let mut e_b = vec![ZERO; nz + 1];
    let mut e_f = vec![ZERO; nz + 1];
    e_b[nz] = input[0];

    // One-sided field sums make the transport part exactly non-increasing
    // once the boundary fluxes at the step start are accounted for.
    let zw: Vec<f64> = (0..=nz)
        .map(|i| if i == 0 || i == nz { dz / 2.0 } else { dz })
        .collect();
    let total = |rows: &[Row], e_b: &[C64], e_f: &[C64]| -> f64 {
        let mut n = 0.0;
        for i in 0..=nz {
            if i < nz {
                n += dz * e_b[i].norm_sqr() / ps.c();
            }
            if i > 0 {
                n += dz * e_f[i].norm_sqr() / pr.c();
            }
            n += zw[i]
                * (l / ps.c() * (rows[i].norm_p + rows[i].norm_s) + l / pr.c() * rows[i].norm_q);
        }
        n
    };
    let mut forward_out = Vec::with_capacity(steps + 1);
    let mut backward_out = Vec::with_capacity(steps + 1);
    let mut excitation = Vec::with_capacity(steps + 1);
    forward_out.push(e_f[nz]);
    backward_out.push(e_b[0]);
    excitation.push(total(&rows, &e_b, &e_f));
    let mut foot = vec![ZERO; nz + 1];
    let chunk = 8.max((nz + 1) / 64);
    let c1_sum = |w: &[Vec<f64>], st: &Stepper| -> Vec<C64> {
        w.iter()
            .map(|row| row.iter().zip(&st.c1).map(|(wj, c)| c * *wj).sum())
            .collect()
    };
    let cs_s = c1_sum(&w_s, &st_s);
    let cs_r = c1_sum(&w_r, &st_r);

    for n in 0..steps {
        let t = t_start + n as f64 * dt;
        let tn = t + dt;
        let storage_on = cfg.input.is_some() && retrieve_start.is_none_or(|r| t < r);
        let retrieval_on = retrieve_start.is_some_and(|r| tn >= r);
        let mut event = false;

        if storage_on {
            // Backward transport: the foot of node i lies between i and i+1.
            for i in 0..nz {
                let src = rows[i].src_p * (1.0 - nu_s) + rows[i + 1].src_p * nu_s;
                foot[i] = e_b[i] * (1.0 - nu_s) + e_b[i + 1] * nu_s + src * (dt / 2.0);
            }
            foot[nz] = input[n + 1];
            let store_at = store_at.as_deref();
            let coupling = Coupling {
                mu: mu_s,
                l,
                dt,
                stepper: &st_s,
            };
            let (e_old, foot) = (&e_b, &foot);
            par::for_each_chunk_mut(&mut rows, chunk, |ci, block| {
                for (k, row) in block.iter_mut().enumerate() {
                    let i = ci * chunk + k;
                    let boundary = i == nz;
                    let (e, src, nrm) =
                        coupling.step(&mut row.p, &w_s[i], cs_s[i], e_old[i], foot[i], boundary);
                    row.e_new = e;
                    row.src_p = src;
                    row.norm_p = nrm;
                    if let Some(ts) = store_at.map(|s| s[i]) {
                        if ts > t && ts <= tn {
                            let grating = C64::from_polar(1.0, ps.delta_k() * zs[i]);
                            for j in 0..nd {
                                let back = (st_s.rates[j] * (tn - ts)).exp();
                                row.s[j] = -I * grating * back * row.p[j];
                                row.p[j] = ZERO;
                            }
                            row.norm_s = sum_sources(&w_s[i], &row.s).1;
                            row.src_p = ZERO;
                            row.norm_p = 0.0;
                        }
                    }
                }
            });
            if let Some(s) = store_at {
                event |= s.iter().any(|ts| *ts > t && *ts <= tn);
            }
            for (e, r) in e_b.iter_mut().zip(&rows) {
                *e = r.e_new;
            }
        } else {
            e_b.iter_mut().for_each(|e| *e = ZERO);
        }

        if retrieval_on {
            for i in (1..=nz).rev() {
                let src = rows[i].src_q * (1.0 - nu_r) + rows[i - 1].src_q * nu_r;
                foot[i] = e_f[i] * (1.0 - nu_r) + e_f[i - 1] * nu_r + src * (dt / 2.0);
            }
            foot[0] = ZERO;
            let release_at = release_at.as_deref().expect("retrieval scheduled");
            let mapped = &mapped;
            let coupling = Coupling {
                mu: mu_r,
                l,
                dt,
                stepper: &st_r,
            };
            let (e_old, foot) = (&e_f, &foot);
            par::for_each_chunk_mut(&mut rows, chunk, |ci, block| {
                for (k, row) in block.iter_mut().enumerate() {
                    let i = ci * chunk + k;
                    let tr = release_at[i];
                    if tr > t && tr <= tn {
                        // Released at tr; written as the free state it would have at t.
                        let grating = C64::from_polar(1.0, pr.delta_k() * zs[i]);
                        for (&m, &s) in mapped.iter().zip(&row.s) {
                            let back = (st_r.rates[m] * (tr - t)).exp();
                            row.q[m] += -I * grating * back * s;
                        }
                        row.s.iter_mut().for_each(|x| *x = ZERO);
                        row.norm_s = 0.0;
                    }
                    let (e, src, nrm) =
                        coupling.step(&mut row.q, &w_r[i], cs_r[i], e_old[i], foot[i], i == 0);
                    row.e_new = e;
                    row.src_q = src;
                    row.norm_q = nrm;
                }
            });
            event |= release_at.iter().any(|tr| *tr > t && *tr <= tn);
            for (e, r) in e_f.iter_mut().zip(&rows) {
                *e = r.e_new;
            }
        }

        forward_out.push(e_f[nz]);
        backward_out.push(e_b[0]);
        let now = total(&rows, &e_b, &e_f);
        let before = excitation[n];
        let flux =
            dt * (backward_out[n].norm_sqr() + forward_out[n].norm_sqr() - input[n].norm_sqr());
        let driven = input[n].norm() > 1e-9 * in_peak || input[n + 1].norm() > 1e-9 * in_peak;
        if !driven && !event {
            check_growth(before, now + flux, tn)?;
        }
        if !now.is_finite() {
            return Err(Error::numeric(
                format!("oracle produced non-finite fields at t = {tn}"),
                f64::NAN,
            ));
        }
        excitation.push(now);
    }

    let mut warnings = Vec::new();
    let tail = |r: &[C64]| {
        let peak = r.iter().map(|e| e.norm()).fold(0.0, f64::max);
        peak > 0.0 && r[r.len() - 1].norm() > 1e-4 * peak
    };
    if tail(&forward_out) || tail(&backward_out) {
        warnings.push("output field has not decayed by the end of the time window".to_string());
    }
    let state = TimeDomainState {
        time: t_start + steps as f64 * dt,
        positions: zs,
        detunings: deltas,
        forward: e_f,
        backward: e_b,
        storage_polarization: rows.iter().map(|r| r.p.clone()).collect(),
        retrieval_polarization: rows.iter().map(|r| r.q.clone()).collect(),
        spin: rows.into_iter().map(|r| r.s).collect(),
    };
    Ok(OracleRun {
        t_start,
        dt,
        forward_out,
        backward_out,
        excitation,
        state,
        warnings,
    })
}

/// Pipeline configurations the oracle can be compared on.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Scenario {
    /// Input absorbed without any control pulse; compares the field leaving
    /// at `z = 0`.
    Leakage {
        params: TransitionParams,
        dist: EmitterDistribution,
        input: SpectralField,
    },
    /// Store with default timing, map detunings and retrieve after
    /// `storage_time`.
    Retrieve {
        storage: TransitionParams,
        retrieval: TransitionParams,
        storage_dist: EmitterDistribution,
        retrieval_dist: EmitterDistribution,
        map: BroadeningMap,
        storage_time: f64,
        input: SpectralField,
    },
    /// Uniform stored excitation released into the retrieval transition.
    Transduce {
        params: TransitionParams,
        dist: EmitterDistribution,
        excitation: StoredExcitation,
        grid: FrequencyGrid,
    },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Leakage { .. } => "leakage",
            Scenario::Retrieve { .. } => "retrieve",
            Scenario::Transduce { .. } => "transduce",
        }
    }

    pub fn grid(&self) -> FrequencyGrid {
        match self {
            Scenario::Leakage { input, .. } | Scenario::Retrieve { input, .. } => *input.grid(),
            Scenario::Transduce { grid, .. } => *grid,
        }
    }

    fn gamma(&self) -> f64 {
        match self {
            Scenario::Leakage { params, .. } | Scenario::Transduce { params, .. } => params.gamma(),
            Scenario::Retrieve {
                storage, retrieval, ..
            } => storage.gamma().min(retrieval.gamma()),
        }
    }

    /// A window long enough for the drive, the transit and the emission.
    pub fn default_window(&self) -> Result<(f64, f64)> {
        let rel = 1e-7;
        let linger = |p: &TransitionParams, dist: &EmitterDistribution| -> Result<f64> {
            // Free-induction tails decay on the inverse line width.
            let prof = dist.marginal_spectral()?;
            Ok(4.0 * p.transit() + 40.0 / prof.width().max(p.gamma()))
        };
        match self {
            Scenario::Leakage {
                params,
                dist,
                input,
            } => {
                let (a, b) = temporal_support(input.grid(), input.amplitude(), rel);
                Ok((a, b + linger(params, dist)?))
            }
            Scenario::Retrieve {
                storage,
                retrieval,
                retrieval_dist,
                storage_time,
                input,
                ..
            } => {
                let (a, _) = temporal_support(input.grid(), input.amplitude(), rel);
                let (t0, _) = default_timing(storage);
                let start = a.min(t0) - 0.05 * storage.transit();
                let release = storage_time + retrieval.length() * retrieval.inv_c_prime();
                Ok((start, release - a + linger(retrieval, retrieval_dist)?))
            }
            Scenario::Transduce {
                params,
                dist,
                excitation,
                grid,
            } => {
                let g = grid.points();
                let vals: Vec<C64> = g.iter().map(|&d| excitation.value(d)).collect();
                let (_, b) = temporal_support(grid, &vals, rel);
                Ok((
                    -0.05 * params.transit(),
                    b.max(0.0) + params.length() * params.inv_c_prime() + linger(params, dist)?,
                ))
            }
        }
    }

    /// Oracle configuration and events reproducing this scenario.
    pub fn oracle_setup(
        &self,
        window: (f64, f64),
        resolution: Resolution,
    ) -> (OracleConfig, Vec<ProtocolEvent>) {
        match self {
            Scenario::Leakage {
                params,
                dist,
                input,
            } => (
                OracleConfig {
                    storage: *params,
                    storage_dist: dist.clone(),
                    retrieval: *params,
                    retrieval_dist: dist.clone(),
                    input: Some(input.clone()),
                    stored: None,
                    window,
                    resolution,
                },
                vec![],
            ),
            Scenario::Retrieve {
                storage,
                retrieval,
                storage_dist,
                retrieval_dist,
                map,
                storage_time,
                input,
            } => {
                let (t0, delta_t) = default_timing(storage);
                (
                    OracleConfig {
                        storage: *storage,
                        storage_dist: storage_dist.clone(),
                        retrieval: *retrieval,
                        retrieval_dist: retrieval_dist.clone(),
                        input: Some(input.clone()),
                        stored: None,
                        window,
                        resolution,
                    },
                    vec![
                        ProtocolEvent::StorePiPulse { t0, delta_t },
                        ProtocolEvent::DetuningMap(map.clone()),
                        ProtocolEvent::RetrievePiPulse {
                            storage_time: *storage_time,
                        },
                    ],
                )
            }
            Scenario::Transduce {
                params,
                dist,
                excitation,
                ..
            } => (
                OracleConfig {
                    storage: *params,
                    storage_dist: dist.clone(),
                    retrieval: *params,
                    retrieval_dist: dist.clone(),
                    input: None,
                    stored: Some(excitation.clone()),
                    window,
                    resolution,
                },
                vec![ProtocolEvent::RetrievePiPulse { storage_time: 0.0 }],
            ),
        }
    }

    /// Output of the spectral pipeline and its resolution warnings.
    pub fn spectral(&self) -> Result<(SpectralField, Vec<String>)> {
        match self {
            Scenario::Leakage {
                params,
                dist,
                input,
            } => Ok((transmitted_field(input, dist, params)?, vec![])),
            Scenario::Retrieve {
                storage,
                retrieval,
                storage_dist,
                retrieval_dist,
                map,
                storage_time,
                input,
            } => {
                let g = *input.grid();
                let k = build_kernel_general(
                    storage,
                    retrieval,
                    storage_dist,
                    retrieval_dist,
                    map,
                    *storage_time,
                    &g,
                    &g,
                )?;
                let r = apply_kernel(&k, input)?;
                Ok((r.field, r.warnings))
            }
            Scenario::Transduce {
                params,
                dist,
                excitation,
                grid,
            } => {
                let e = mw_output_general_with(
                    excitation,
                    dist,
                    params,
                    grid,
                    OutputOptions {
                        control_phase: true,
                    },
                )?;
                Ok((e, vec![]))
            }
        }
    }

    fn port(&self) -> Port {
        match self {
            Scenario::Leakage { .. } => Port::Backward,
            _ => Port::Forward,
        }
    }
}

/// Scenario plus oracle discretization.
#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub scenario: Scenario,
    pub resolution: Resolution,
    /// Simulated interval; [`Scenario::default_window`] when `None`.
    pub window: Option<(f64, f64)>,
}

impl ComparisonConfig {
    pub fn new(scenario: Scenario) -> Self {
        ComparisonConfig {
            scenario,
            resolution: Resolution::default(),
            window: None,
        }
    }
}

/// Agreement between the oracle and the spectral pipeline.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub scenario: &'static str,
    /// `‖E_oracle − E_spectral‖ / max(‖E_oracle‖, ‖E_spectral‖)`, zero when
    /// both vanish.
    pub relative_l2: f64,
    pub probability_oracle: f64,
    pub probability_spectral: f64,
    pub delta_probability: f64,
    pub warnings: Vec<String>,
    pub oracle_seconds: f64,
    pub detuning_points: usize,
    pub time_steps: usize,
}

impl DeviationReport {
    pub fn to_key_value(&self) -> String {
        let mut s = format!(
            "scenario={}\nrelative_l2={}\nprobability_oracle={}\nprobability_spectral={}\ndelta_probability={}\n\
             oracle_seconds={:.3}\ndetuning_points={}\ntime_steps={}\n",
            self.scenario,
            fmt_sig(self.relative_l2),
            fmt_sig(self.probability_oracle),
            fmt_sig(self.probability_spectral),
            fmt_sig(self.delta_probability),
            self.oracle_seconds,
            self.detuning_points,
            self.time_steps
        );
        for w in &self.warnings {
            s.push_str(&format!("warning={w}\n"));
        }
        s
    }
}

/// Relative L2 distance, zero when both fields vanish.
pub fn relative_l2(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    a.check_same_grid(b)?;
    let diff = SpectralField::new(
        *a.grid(),
        a.amplitude()
            .iter()
            .zip(b.amplitude())
            .map(|(x, y)| x - y)
            .collect(),
    )?;
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((diff.norm() / scale).sqrt())
}

/// Run both pipelines on one scenario and report their disagreement.
pub fn compare_with_spectral(cfg: &ComparisonConfig) -> Result<DeviationReport> {
    compare_fields(cfg).map(|c| c.report)
}

/// Both output spectra of a comparison next to the report.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: DeviationReport,
    pub oracle: SpectralField,
    pub spectral: SpectralField,
}

pub fn compare_fields(cfg: &ComparisonConfig) -> Result<Comparison> {
    let sc = &cfg.scenario;
    let grid = sc.grid();
    let window = match cfg.window {
        Some(w) => w,
        None => sc.default_window()?,
    };
    let (spec, mut warnings) = sc.spectral()?;
    let (ocfg, events) = sc.oracle_setup(window, cfg.resolution);
    let clock = Instant::now();
    let run = integrate_maxwell_bloch(&ocfg, &events)?;
    let secs = clock.elapsed().as_secs_f64();
    let oracle = run.spectrum(sc.port(), &grid);
    let gamma = sc.gamma();
    if grid.spacing() > gamma / 4.0 {
        let w = format!(
            "frequency spacing {} exceeds gamma/4 = {}",
            grid.spacing(),
            gamma / 4.0
        );
        if !warnings
            .iter()
            .any(|x| x.contains("gamma/4") || x.contains("γ/4"))
        {
            warnings.push(w);
        }
    }
    warnings.extend(run.warnings.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }
    let (po, ps) = (oracle.norm(), spec.norm());
    let report = DeviationReport {
        scenario: sc.name(),
        relative_l2: relative_l2(&oracle, &spec)?,
        probability_oracle: po,
        probability_spectral: ps,
        delta_probability: (po - ps).abs(),
        warnings,
        oracle_seconds: secs,
        detuning_points: run.state.detunings.len(),
        time_steps: run.forward_out.len() - 1,
    };
    Ok(Comparison {
        report,
        oracle,
        spectral: spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SpectralProfile;
    use crate::transition::TransitionSpec;

    const GAMMA: f64 = 2.0 * PI * 0.01;

    fn optical(d: f64) -> TransitionParams {
        TransitionSpec::new(GAMMA, 0.01, 0.01, d).derive().unwrap()
    }

    fn line(width: f64) -> EmitterDistribution {
        EmitterDistribution::uniform_in_space(0.01, SpectralProfile::gaussian(width).unwrap())
            .unwrap()
    }

    fn input() -> SpectralField {
        SpectralField::gaussian_pulse(FrequencyGrid::symmetric(8.0, 321).unwrap(), 1.0, -6.0, 0.0)
    }

    fn leakage(d: f64) -> Scenario {
        Scenario::Leakage {
            params: optical(d),
            dist: line(2.0 * PI * 2.0),
            input: input(),
        }
    }

    fn crib(d: f64) -> Scenario {
        Scenario::Retrieve {
            storage: optical(d),
            retrieval: optical(d),
            storage_dist: line(2.0 * PI * 2.0),
            retrieval_dist: line(2.0 * PI * 2.0),
            map: BroadeningMap::Negate,
            storage_time: 0.5,
            input: input(),
        }
    }

    fn run(sc: &Scenario, res: Resolution) -> OracleRun {
        let (cfg, ev) = sc.oracle_setup(sc.default_window().unwrap(), res);
        integrate_maxwell_bloch(&cfg, &ev).unwrap()
    }

    #[test]
    fn empty_medium_delays_the_pulse() {
        let r = compare_with_spectral(&ComparisonConfig::new(leakage(0.0))).unwrap();
        assert!(r.relative_l2 < 1e-3, "{}", r.relative_l2);
        assert!((r.probability_oracle - 1.0).abs() < 1e-3);
    }

    #[test]
    fn transmitted_fraction_matches_absorption_law() {
        for d in [0.5, 2.0, 8.0] {
            let sc = leakage(d);
            let Scenario::Leakage {
                params,
                dist,
                input,
            } = &sc
            else {
                unreachable!()
            };
            let expected =
                crate::response::transmitted_intensity(input, dist, params.d(), params.gamma())
                    .unwrap()
                    .total();
            let got = run(&sc, Resolution::default()).photons(Port::Backward);
            assert!(
                (got / expected - 1.0).abs() < 0.01,
                "d={d}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn crib_matches_closed_form_for_a_flat_line() {
        let flat = EmitterDistribution::uniform_in_space(
            0.01,
            SpectralProfile::uniform(2.0 * PI * 4.0).unwrap(),
        )
        .unwrap();
        let sc = Scenario::Retrieve {
            storage: optical(2.0),
            retrieval: optical(2.0),
            storage_dist: flat.clone(),
            retrieval_dist: flat,
            map: BroadeningMap::Negate,
            storage_time: 0.5,
            input: input(),
        };
        let w = run(&sc, Resolution::default())
            .spectrum(Port::Forward, input().grid())
            .norm();
        let g = *input().grid();
        let k =
            crate::retrieval::build_kernel_crib_uniform(&optical(2.0), &optical(2.0), 0.5, &g, &g)
                .unwrap();
        let expected = apply_kernel(&k, &input()).unwrap().probability();
        assert!((w - expected).abs() < 0.02 * expected, "{w} vs {expected}");
    }

    #[test]
    fn no_emitters_means_no_retrieval() {
        let r = compare_with_spectral(&ComparisonConfig::new(crib(0.0))).unwrap();
        assert_eq!(r.probability_oracle, 0.0);
        assert_eq!(r.probability_spectral, 0.0);
        assert_eq!(r.relative_l2, 0.0);
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let grid = FrequencyGrid::new(-8.0, -8.0 + 255.0 * GAMMA, 256).unwrap();
        let Scenario::Retrieve {
            storage,
            retrieval,
            storage_dist,
            retrieval_dist,
            map,
            storage_time,
            ..
        } = crib(0.0)
        else {
            unreachable!()
        };
        let sc = Scenario::Retrieve {
            storage,
            retrieval,
            storage_dist,
            retrieval_dist,
            map,
            storage_time,
            input: SpectralField::gaussian_pulse(grid, 1.0, -6.0, 0.0),
        };
        let r = compare_with_spectral(&ComparisonConfig::new(sc)).unwrap();
        assert!(
            r.warnings
                .iter()
                .any(|w| w.contains("gamma/4") || w.contains("ridge")),
            "{:?}",
            r.warnings
        );
    }

    #[test]
    fn excitation_is_conserved_without_damping() {
        let params = TransitionSpec::new(1e-12, 0.01, 0.01, 2.0)
            .derive()
            .unwrap();
        let sc = Scenario::Leakage {
            params,
            dist: line(2.0 * PI * 2.0),
            input: input(),
        };
        // The exchange error is second order in the cell size; 512 cells keep
        // it under the budget.
        let res = Resolution {
            cfl: 1.0,
            space_points: 512,
            ..Resolution::default()
        };
        let (cfg, ev) = sc.oracle_setup(sc.default_window().unwrap(), res);
        let r = integrate_maxwell_bloch(&cfg, &ev).unwrap();
        let e_in = synthesize(&input(), r.t_start, r.dt, r.excitation.len() - 1);
        // Balance: stored excitation + emitted − injected stays constant.
        let mut balance = Vec::with_capacity(r.excitation.len());
        let mut flux = 0.0;
        for n in 0..r.excitation.len() {
            if n > 0 {
                let (b, i) = (r.backward_out[n - 1].norm_sqr(), e_in[n - 1].norm_sqr());
                flux += r.dt * (b - i);
            }
            balance.push(r.excitation[n] + flux);
        }
        let per_transit = (params.transit() / r.dt).round() as usize;
        let worst = balance
            .windows(per_transit)
            .map(|w| (w[w.len() - 1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "drift per transit {worst}");
    }

    #[test]
    fn refinement_converges() {
        // Coarse, half-baseline and baseline cells; the middle level has the
        // detuning count the window rule picks.
        let sc = leakage(2.0);
        let auto = run(
            &sc,
            Resolution {
                space_points: 16,
                ..Resolution::default()
            },
        )
        .state
        .detunings
        .len();
        let w: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&f| {
                let res = Resolution {
                    space_points: 64,
                    cfl: BASELINE_CFL,
                    detuning_points: None,
                }
                .refined(f, auto / 2);
                run(&sc, res).photons(Port::Backward)
            })
            .collect();
        assert!((w[2] - w[1]).abs() < 0.5 * (w[1] - w[0]).abs(), "{w:?}");
    }

    #[test]
    fn nothing_leaves_before_the_retrieval_front() {
        let sc = crib(2.0);
        let r = run(
            &sc,
            Resolution {
                space_points: 64,
                ..Resolution::default()
            },
        );
        let arrival = 0.5 + 0.01 / 0.01;
        let peak = r.forward_out.iter().map(|e| e.norm()).fold(0.0, f64::max);
        assert!(peak > 0.0);
        for (t, e) in r.times().iter().zip(&r.forward_out) {
            if *t < arrival - r.dt {
                assert!(e.norm() <= 1e-3 * peak, "t={t}");
            }
        }
        // The spectral output, taken back to the time domain, is causal too.
        let (spec, _) = sc.spectral().unwrap();
        let dt = 0.01;
        let t0 = -20.0;
        let n = 4000;
        let e = synthesize(&spec, t0, dt, n);
        let peak = e.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (k, x) in e.iter().enumerate() {
            let t = t0 + k as f64 * dt;
            if t < arrival - 0.3 {
                assert!(x.norm() <= 1e-3 * peak, "t={t}: {}", x.norm() / peak);
            }
        }
    }

    #[test]
    fn invalid_setups_are_rejected() {
        let sc = crib(2.0);
        let win = sc.default_window().unwrap();
        let (cfg, ev) = sc.oracle_setup(
            win,
            Resolution {
                cfl: 1.5,
                ..Resolution::default()
            },
        );
        assert!(matches!(
            integrate_maxwell_bloch(&cfg, &ev),
            Err(Error::InvalidArgument(_))
        ));
        let (cfg, mut ev) = sc.oracle_setup(win, Resolution::default());
        ev.reverse();
        assert!(matches!(
            integrate_maxwell_bloch(&cfg, &ev),
            Err(Error::InvalidArgument(_))
        ));
        let wide = SpectralProfile::gaussian(1.0).unwrap();
        let ev = vec![ProtocolEvent::DetuningMap(
            BroadeningMap::uncorrelated(wide).unwrap(),
        )];
        assert!(matches!(
            integrate_maxwell_bloch(&cfg, &ev),
            Err(Error::InvalidArgument(_))
        ));
        let (cfg, ev) = sc.oracle_setup((win.0, 0.2), Resolution::default());
        assert!(matches!(
            integrate_maxwell_bloch(&cfg, &ev),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn growth_detector() {
        assert!(check_growth(1.0, 1.0 + 1e-7, 0.0).is_ok());
        assert!(check_growth(1.0, 0.5, 0.0).is_ok());
        assert!(check_growth(0.0, 1.0, 0.0).is_ok());
        assert!(matches!(
            check_growth(1.0, 1.0 + 1e-5, 0.0),
            Err(Error::NumericFailure { .. })
        ));
    }

    #[test]
    fn dump_writes_time_series() {
        let r = run(
            &leakage(0.5),
            Resolution {
                space_points: 16,
                cfl: 0.9,
                detuning_points: Some(64),
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        r.dump(Port::Backward, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), r.backward_out.len() + 1);
        assert!(text.starts_with("t,re,im"));
    }
}
