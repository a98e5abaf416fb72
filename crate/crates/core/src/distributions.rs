//! Emitter distributions over position and detuning.
//!
//! Closed-form spectral shapes share the peak density `1/(√π Γ)`:
//!
//! | shape      | density                                   |
//! |------------|-------------------------------------------|
//! | gaussian   | `N exp(−Δ²/Γ²)`                           |
//! | sech       | `N sech(√π Δ/Γ)`                          |
//! | lorentzian | `N' / (Δ² + a²)`, `a = Γ/√π`, `N' = a/π`  |
//! | uniform    | `N` on `|Δ| < √π Γ / 2`                   |
//!
//! with `N = 1/(√π Γ)`. Tabulated profiles are linearly interpolated and
//! renormalized on construction.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Default truncation half-width in units of `Γ` for the Lorentzian.
pub const LORENTZIAN_TRUNCATION: f64 = 4000.0;
/// Default truncation half-width in units of `Γ` for the other smooth shapes.
pub const SMOOTH_TRUNCATION: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Gaussian,
    Sech,
    Lorentzian,
    Uniform,
    Tabulated,
}

impl Shape {
    pub const CLOSED_FORM: [Shape; 4] = [
        Shape::Gaussian,
        Shape::Sech,
        Shape::Lorentzian,
        Shape::Uniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Gaussian => "gaussian",
            Shape::Sech => "sech",
            Shape::Lorentzian => "lorentzian",
            Shape::Uniform => "uniform",
            Shape::Tabulated => "tabulated",
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Shape::Gaussian),
            "sech" => Ok(Shape::Sech),
            "lorentzian" => Ok(Shape::Lorentzian),
            "uniform" => Ok(Shape::Uniform),
            "tabulated" => Ok(Shape::Tabulated),
            other => Err(Error::invalid(format!(
                "unknown distribution shape '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

/// Normalized spectral density `n(Δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    shape: Shape,
    width: f64,
    center: f64,
    truncation: f64,
    table: Option<Table>,
}

impl SpectralProfile {
    /// Closed-form profile of width `Γ`, centered at zero.
    pub fn new(shape: Shape, width: f64) -> Result<Self> {
        if shape == Shape::Tabulated {
            return Err(Error::invalid("tabulated profiles need a table"));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid(format!(
                "profile width must be positive, got {width}"
            )));
        }
        let truncation = match shape {
            Shape::Lorentzian => LORENTZIAN_TRUNCATION,
            _ => SMOOTH_TRUNCATION,
        };
        Ok(SpectralProfile {
            shape,
            width,
            center: 0.0,
            truncation,
            table: None,
        })
    }

    pub fn gaussian(width: f64) -> Result<Self> {
        Self::new(Shape::Gaussian, width)
    }

    pub fn uniform(width: f64) -> Result<Self> {
        Self::new(Shape::Uniform, width)
    }

    /// Piecewise-linear profile through `(xs, ys)`, renormalized to unit mass.
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidDistribution(
                "table needs at least two (detuning, weight) rows".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDistribution(
                "detunings must be strictly ascending".into(),
            ));
        }
        if ys.iter().any(|y| !(*y >= 0.0) || !y.is_finite()) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let mass = quad::trapezoid(&xs, &ys);
        if !(mass > 0.0) {
            return Err(Error::InvalidDistribution(
                "table has zero total weight".into(),
            ));
        }
        let ys: Vec<f64> = ys.iter().map(|y| y / mass).collect();
        let mean = moment(&xs, &ys, 1, 0.0);
        let var = moment(&xs, &ys, 2, mean);
        let width = (2.0 * var).sqrt().max(xs[1] - xs[0]);
        Ok(SpectralProfile {
            shape: Shape::Tabulated,
            width,
            center: 0.0,
            truncation: 0.0,
            table: Some(Table { xs, ys }),
        })
    }

    /// Parse two-column text (detuning in rad/ns, weight). Columns may be
    /// separated by commas, semicolons or whitespace; `#` starts a comment.
    pub fn from_table_text(text: &str) -> Result<Self> {
        let rows = read_columns(text, 2)?;
        let (xs, ys) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Self::tabulated(xs, ys)
    }

    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table_text(&text)
    }

    /// Shift the profile so it is centered at `center`.
    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    /// Override the truncation half-width used by integrals, in units of
    /// the profile width. Ignored for uniform and tabulated profiles.
    pub fn with_truncation(mut self, widths: f64) -> Result<Self> {
        if !(widths > 0.0) {
            return Err(Error::invalid("truncation must be positive"));
        }
        self.truncation = widths;
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Normalization constant of the closed-form shapes.
    pub fn norm_constant(&self) -> f64 {
        match self.shape {
            Shape::Lorentzian => {
                let a = self.width / SQRT_PI;
                a / PI
            }
            Shape::Tabulated => self.peak(),
            _ => 1.0 / (SQRT_PI * self.width),
        }
    }

    pub fn density(&self, delta: f64) -> f64 {
        let x = delta - self.center;
        let g = self.width;
        let n = 1.0 / (SQRT_PI * g);
        match self.shape {
            Shape::Gaussian => n * (-(x * x) / (g * g)).exp(),
            Shape::Sech => n / (SQRT_PI * x / g).cosh(),
            Shape::Lorentzian => {
                let a = g / SQRT_PI;
                (a / PI) / (x * x + a * a)
            }
            Shape::Uniform => {
                if x.abs() < 0.5 * SQRT_PI * g {
                    n
                } else if x.abs() == 0.5 * SQRT_PI * g {
                    0.5 * n
                } else {
                    0.0
                }
            }
            Shape::Tabulated => {
                let t = self.table.as_ref().expect("tabulated profile has a table");
                interp_linear(&t.xs, &t.ys, x)
            }
        }
    }

    /// Maximum of the density.
    pub fn peak(&self) -> f64 {
        match &self.table {
            Some(t) => t.ys.iter().copied().fold(0.0, f64::max),
            None => 1.0 / (SQRT_PI * self.width),
        }
    }

    /// Integration domain: exact support for uniform and tabulated
    /// profiles, truncated otherwise.
    pub fn domain(&self) -> (f64, f64) {
        let half = match self.shape {
            Shape::Uniform => 0.5 * SQRT_PI * self.width,
            Shape::Tabulated => {
                let t = self.table.as_ref().expect("table");
                return (t.xs[0] + self.center, t.xs[t.xs.len() - 1] + self.center);
            }
            _ => self.truncation * self.width,
        };
        (self.center - half, self.center + half)
    }

    /// Points where the integrand structure changes (center, width marks,
    /// support edges, table knots).
    pub fn breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.domain();
        let c = self.center;
        let g = self.width;
        let mut v = vec![a, b, c];
        match self.shape {
            Shape::Tabulated => {
                let t = self.table.as_ref().expect("table");
                v.extend(t.xs.iter().map(|x| x + c));
            }
            Shape::Uniform => {}
            _ => {
                let mut s = 1.0;
                while s < self.truncation {
                    v.push(c - s * g);
                    v.push(c + s * g);
                    s *= if s < 4.0 { 2.0 } else { 5.0 };
                }
            }
        }
        v.retain(|x| *x >= a && *x <= b);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn table(&self) -> Option<(&[f64], &[f64])> {
        self.table
            .as_ref()
            .map(|t| (t.xs.as_slice(), t.ys.as_slice()))
    }

    /// `∫ n(Δ)·w(Δ) / (κ + iσ(Δ − x0)) dΔ` over the profile domain, with
    /// `w ≡ 1` when no weight is given.
    pub fn pole_transform(
        &self,
        x0: f64,
        kappa: f64,
        sigma: f64,
        weight: Option<&(dyn Fn(f64) -> C64 + Sync)>,
        tol: Tolerance,
    ) -> Result<C64> {
        if !(kappa > 0.0) {
            return Err(Error::invalid(format!(
                "decay rate must be positive, got {kappa}"
            )));
        }
        let (a, b) = self.domain();
        match (self.shape, weight) {
            (Shape::Uniform, None) => {
                let h = 1.0 / (SQRT_PI * self.width);
                Ok(quad::pole_log(kappa, sigma, a - x0, b - x0) * h)
            }
            (Shape::Tabulated, None) => {
                let (xs, ys) = self.table().expect("table");
                let xs: Vec<f64> = xs.iter().map(|x| x + self.center).collect();
                let gs: Vec<C64> = ys.iter().map(|&y| C64::new(y, 0.0)).collect();
                Ok(quad::pole_integral_linear(&xs, &gs, x0, kappa, sigma))
            }
            (_, w) => {
                let g = |d: f64| {
                    let n = self.density(d);
                    match w {
                        Some(w) => w(d) * n,
                        None => C64::new(n, 0.0),
                    }
                };
                let br = self.breakpoints();
                let e = quad::pole_integral_fn(g, a, b, x0, kappa, sigma, &br, tol)?;
                Ok(e.value)
            }
        }
    }

    /// Numerical mass over the integration domain.
    pub fn mass(&self) -> f64 {
        let (a, b) = self.domain();
        match self.table() {
            Some((xs, ys)) => quad::trapezoid(xs, ys),
            None => quad::adaptive(
                |d| C64::new(self.density(d), 0.0),
                a,
                b,
                &self.breakpoints(),
                Tolerance::with_rel(1e-12),
            )
            .map(|e| e.value.re)
            .unwrap_or(f64::NAN),
        }
    }

    /// Sample the density on `n` uniform points spanning the domain.
    pub fn sample(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.domain();
        let n = n.max(2);
        let xs: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect();
        let ys = xs.iter().map(|&x| self.density(x)).collect();
        (xs, ys)
    }
}

fn moment(xs: &[f64], ys: &[f64], k: i32, about: f64) -> f64 {
    let p: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - about).powi(k) * y)
        .collect();
    quad::trapezoid(xs, &p)
}

pub(crate) fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return 0.0;
    }
    let i = match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => return ys[i],
        Err(i) => i - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + (ys[i + 1] - ys[i]) * t
}

/// Parse delimited numeric text into rows of exactly `ncols` values.
pub(crate) fn read_columns(text: &str, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != ncols {
            // Allow a single non-numeric header row.
            if rows.is_empty() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
                continue;
            }
            return Err(Error::Config {
                line: lineno + 1,
                message: format!("expected {ncols} columns, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(ncols);
        for f in fields {
            match f.parse::<f64>() {
                Ok(v) => row.push(v),
                Err(_) if rows.is_empty() => {
                    row.clear();
                    break;
                }
                Err(_) => {
                    return Err(Error::Config {
                        line: lineno + 1,
                        message: format!("'{f}' is not a number"),
                    })
                }
            }
        }
        if row.len() == ncols {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Spatial density `ñ(z)` on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialProfile {
    Uniform { length: f64 },
    Tabulated { zs: Vec<f64>, ys: Vec<f64> },
}

impl SpatialProfile {
    pub fn uniform(length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::invalid("medium length must be positive"));
        }
        Ok(SpatialProfile::Uniform { length })
    }

    /// Piecewise-linear density through samples spanning exactly `[0, L]`.
    pub fn tabulated(zs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if zs.len() != ys.len() || zs.len() < 2 || zs[0] != 0.0 {
            return Err(Error::InvalidDistribution(
                "spatial table must start at z = 0 and have matching columns".into(),
            ));
        }
        if zs.windows(2).any(|w| !(w[1] > w[0])) || ys.iter().any(|y| !(*y >= 0.0)) {
            return Err(Error::InvalidDistribution("invalid spatial table".into()));
        }
        let mass = quad::trapezoid(&zs, &ys);
        if !(mass > 0.0) {
            return Err(Error::InvalidDistribution(
                "spatial table has zero mass".into(),
            ));
        }
        let ys = ys.iter().map(|y| y / mass).collect();
        Ok(SpatialProfile::Tabulated { zs, ys })
    }

    pub fn length(&self) -> f64 {
        match self {
            SpatialProfile::Uniform { length } => *length,
            SpatialProfile::Tabulated { zs, .. } => zs[zs.len() - 1],
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        match self {
            SpatialProfile::Uniform { length } => {
                if (0.0..=*length).contains(&z) {
                    1.0 / length
                } else {
                    0.0
                }
            }
            SpatialProfile::Tabulated { zs, ys } => interp_linear(zs, ys, z),
        }
    }

    /// `∫_z^L ñ(z') dz'`.
    pub fn tail_mass(&self, z: f64) -> f64 {
        match self {
            SpatialProfile::Uniform { length } => ((length - z) / length).clamp(0.0, 1.0),
            SpatialProfile::Tabulated { zs, ys } => tail_linear(zs, ys, z),
        }
    }

    pub fn mass(&self) -> f64 {
        self.tail_mass(0.0)
    }
}

/// `∫_z^{x_end}` of a piecewise-linear function.
fn tail_linear(xs: &[f64], ys: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() - 1 {
        let (a, b) = (xs[i], xs[i + 1]);
        if b <= z {
            continue;
        }
        let lo = a.max(z);
        let ylo = interp_linear(xs, ys, lo);
        acc += 0.5 * (ylo + ys[i + 1]) * (b - lo);
    }
    acc
}

/// Joint density `G(z, Δ)` of emitters over position and detuning.
#[derive(Debug, Clone, PartialEq)]
pub enum EmitterDistribution {
    Separable {
        spatial: SpatialProfile,
        spectral: SpectralProfile,
    },
    /// Bilinear interpolation of `values[i * deltas.len() + j] = G(z_i, Δ_j)`.
    Tabulated {
        zs: Vec<f64>,
        deltas: Vec<f64>,
        values: Vec<f64>,
        peak: f64,
    },
}

impl EmitterDistribution {
    pub fn separable(spatial: SpatialProfile, spectral: SpectralProfile) -> Self {
        EmitterDistribution::Separable { spatial, spectral }
    }

    /// Spatially uniform medium of length `L` with spectral profile `n`.
    pub fn uniform_in_space(length: f64, spectral: SpectralProfile) -> Result<Self> {
        Ok(Self::separable(SpatialProfile::uniform(length)?, spectral))
    }

    /// Tabulated `G(z_i, Δ_j)`; renormalized so the bilinear interpolant has
    /// unit mass.
    pub fn tabulated(zs: Vec<f64>, deltas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let (nz, nd) = (zs.len(), deltas.len());
        if nz < 2 || nd < 2 || values.len() != nz * nd || zs[0] != 0.0 {
            return Err(Error::InvalidDistribution(
                "tabulated G needs a z column starting at 0, a detuning row and nz·nΔ values"
                    .into(),
            ));
        }
        if zs.windows(2).any(|w| !(w[1] > w[0])) || deltas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDistribution(
                "axes must be strictly ascending".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "G must be finite and nonnegative".into(),
            ));
        }
        let rows: Vec<f64> = (0..nz)
            .map(|i| quad::trapezoid(&deltas, &values[i * nd..(i + 1) * nd]))
            .collect();
        let mass = quad::trapezoid(&zs, &rows);
        if !(mass > 0.0) {
            return Err(Error::InvalidDistribution("G has zero total mass".into()));
        }
        let values: Vec<f64> = values.iter().map(|v| v / mass).collect();
        let mut d = EmitterDistribution::Tabulated {
            zs,
            deltas,
            values,
            peak: 0.0,
        };
        let peak = d.marginal_spectral()?.peak();
        if let EmitterDistribution::Tabulated { peak: p, .. } = &mut d {
            *p = peak;
        }
        Ok(d)
    }

    pub fn length(&self) -> f64 {
        match self {
            EmitterDistribution::Separable { spatial, .. } => spatial.length(),
            EmitterDistribution::Tabulated { zs, .. } => zs[zs.len() - 1],
        }
    }

    pub fn evaluate(&self, z: f64, delta: f64) -> Result<f64> {
        let l = self.length();
        if !(0.0..=l).contains(&z) {
            return Err(Error::invalid(format!("z = {z} outside [0, {l}]")));
        }
        Ok(self.eval_unchecked(z, delta))
    }

    pub(crate) fn eval_unchecked(&self, z: f64, delta: f64) -> f64 {
        match self {
            EmitterDistribution::Separable { spatial, spectral } => {
                spatial.density(z) * spectral.density(delta)
            }
            EmitterDistribution::Tabulated {
                zs, deltas, values, ..
            } => {
                let nd = deltas.len();
                let (i, t) = locate(zs, z);
                let a = interp_linear(deltas, &values[i * nd..(i + 1) * nd], delta);
                let b = interp_linear(deltas, &values[(i + 1) * nd..(i + 2) * nd], delta);
                a + (b - a) * t
            }
        }
    }

    pub fn marginal_spectral(&self) -> Result<SpectralProfile> {
        match self {
            EmitterDistribution::Separable { spectral, .. } => Ok(spectral.clone()),
            EmitterDistribution::Tabulated {
                zs, deltas, values, ..
            } => {
                let nd = deltas.len();
                let n: Vec<f64> = (0..nd)
                    .map(|j| {
                        let col: Vec<f64> = (0..zs.len()).map(|i| values[i * nd + j]).collect();
                        quad::trapezoid(zs, &col)
                    })
                    .collect();
                SpectralProfile::tabulated(deltas.clone(), n)
            }
        }
    }

    pub fn marginal_spatial(&self) -> Result<SpatialProfile> {
        match self {
            EmitterDistribution::Separable { spatial, .. } => Ok(spatial.clone()),
            EmitterDistribution::Tabulated {
                zs, deltas, values, ..
            } => {
                let nd = deltas.len();
                let m: Vec<f64> = (0..zs.len())
                    .map(|i| quad::trapezoid(deltas, &values[i * nd..(i + 1) * nd]))
                    .collect();
                SpatialProfile::tabulated(zs.clone(), m)
            }
        }
    }

    /// Peak of the spectral marginal, `n0`.
    pub fn peak_density(&self) -> Result<f64> {
        let p = match self {
            EmitterDistribution::Separable { spectral, .. } => spectral.peak(),
            EmitterDistribution::Tabulated { peak, .. } => *peak,
        };
        if !(p > 0.0) {
            return Err(Error::InvalidDistribution("peak density is zero".into()));
        }
        Ok(p)
    }

    /// Detuning integration domain.
    pub fn spectral_domain(&self) -> (f64, f64) {
        match self {
            EmitterDistribution::Separable { spectral, .. } => spectral.domain(),
            EmitterDistribution::Tabulated { deltas, .. } => (deltas[0], deltas[deltas.len() - 1]),
        }
    }

    /// Total mass `∫dz ∫dΔ G`.
    pub fn mass(&self) -> f64 {
        match self {
            EmitterDistribution::Separable { spatial, spectral } => {
                spatial.mass() * spectral.mass()
            }
            EmitterDistribution::Tabulated { .. } => self
                .marginal_spatial()
                .map(|s| s.mass())
                .unwrap_or(f64::NAN),
        }
    }

    /// Whether `G` factorizes as `ñ(z)·n(Δ)` (so that `h = N(z)·ℋ`).
    pub fn is_separable(&self) -> bool {
        matches!(self, EmitterDistribution::Separable { .. })
    }

    /// Whether `G = n(Δ)/L`.
    pub fn is_uniform_in_space(&self) -> bool {
        matches!(
            self,
            EmitterDistribution::Separable {
                spatial: SpatialProfile::Uniform { .. },
                ..
            }
        )
    }

    /// Local response `ρ(z, ω; γ) = ∫ G(z, Δ) / (i(Δ − ω) + γ/2) dΔ`.
    pub fn local_response(&self, z: f64, omega: f64, gamma: f64, tol: Tolerance) -> Result<C64> {
        match self {
            EmitterDistribution::Separable { spatial, spectral } => {
                let w = spatial.density(z);
                if w == 0.0 {
                    return Ok(C64::new(0.0, 0.0));
                }
                Ok(spectral.pole_transform(omega, 0.5 * gamma, 1.0, None, tol)? * w)
            }
            EmitterDistribution::Tabulated {
                zs, deltas, values, ..
            } => {
                let nd = deltas.len();
                let (i, t) = locate(zs, z);
                let row: Vec<C64> = (0..nd)
                    .map(|j| {
                        let a = values[i * nd + j];
                        let b = values[(i + 1) * nd + j];
                        C64::new(a + (b - a) * t, 0.0)
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

    /// `∫_z^L dz' ∫ dΔ G(z', Δ) / (i(Δ − ω) + γ/2)`, exact for the
    /// interpolants used here.
    pub fn tail_response(&self, z: f64, omega: f64, gamma: f64, tol: Tolerance) -> Result<C64> {
        match self {
            EmitterDistribution::Separable { spatial, spectral } => {
                let w = spatial.tail_mass(z);
                if w == 0.0 {
                    return Ok(C64::new(0.0, 0.0));
                }
                Ok(spectral.pole_transform(omega, 0.5 * gamma, 1.0, None, tol)? * w)
            }
            EmitterDistribution::Tabulated {
                zs, deltas, values, ..
            } => {
                let nd = deltas.len();
                let row: Vec<C64> = (0..nd)
                    .map(|j| {
                        let col: Vec<f64> = (0..zs.len()).map(|i| values[i * nd + j]).collect();
                        C64::new(tail_linear(zs, &col, z), 0.0)
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
}

fn locate(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    let x = x.clamp(xs[0], xs[n - 1]);
    let i = match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => (i - 1).min(n - 2),
    };
    (i, (x - xs[i]) / (xs[i + 1] - xs[i]))
}

/// Dense uniform core of 2001 points around `center`, plus geometric tails
/// when the support extends further.
fn compose_abscissae(lo: f64, hi: f64, center: f64, core: f64) -> Vec<f64> {
    let (clo, chi) = ((center - core).max(lo), (center + core).min(hi));
    let n = 2001;
    let mut xs: Vec<f64> = (0..n)
        .map(|i| clo + (chi - clo) * i as f64 / (n - 1) as f64)
        .collect();
    let step = (chi - clo) / (n - 1) as f64;
    let tail = |from: f64, to: f64, out: &mut Vec<f64>| {
        let span = (to - from).abs();
        if span <= step {
            if span > 0.0 {
                out.push(to);
            }
            return;
        }
        let m = 200;
        let ratio = (span / step).powf(1.0 / m as f64);
        let mut d = step;
        for _ in 0..m {
            out.push(from + (to - from).signum() * d.min(span));
            d *= ratio;
        }
    };
    let mut left = Vec::new();
    tail(clo, lo, &mut left);
    let mut right = Vec::new();
    tail(chi, hi, &mut right);
    left.reverse();
    left.append(&mut xs);
    left.append(&mut right);
    left.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + b.abs()));
    left
}

/// Density of `Δ = Δ0 + Δ1` for independent reversible and irreversible
/// contributions, tabulated and renormalized.
pub fn compose_broadening(
    reversible: &SpectralProfile,
    irreversible: &SpectralProfile,
) -> Result<SpectralProfile> {
    let (a1, b1) = reversible.domain();
    let (a2, b2) = irreversible.domain();
    // Integrate over the narrower factor.
    let (narrow, wide) = if (b2 - a2) <= (b1 - a1) {
        (irreversible, reversible)
    } else {
        (reversible, irreversible)
    };
    let (na, nb) = narrow.domain();
    let (lo, hi) = (a1 + a2, b1 + b2);
    let xs = compose_abscissae(lo, hi, reversible.center() + irreversible.center(), {
        let w = reversible.width().max(irreversible.width());
        SMOOTH_TRUNCATION * w
    });
    let n = xs.len();
    let nbreaks = narrow.breakpoints();
    let wbreaks = wide.breakpoints();
    let ys = crate::par::try_map_range(n, |i| {
        let x = xs[i];
        let mut br = nbreaks.clone();
        br.extend(wbreaks.iter().map(|w| x - w));
        quad::adaptive(
            |y| C64::new(narrow.density(y) * wide.density(x - y), 0.0),
            na,
            nb,
            &br,
            Tolerance {
                rel: 1e-9,
                abs: 1e-300,
                max_intervals: 20_000,
            },
        )
        .map(|e| e.value.re.max(0.0))
    })?;
    SpectralProfile::tabulated(xs, ys)
}
