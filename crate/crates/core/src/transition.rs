//! Per-transition physical parameters and the derived mismatch quantities.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// How the coupling strength is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strength {
    OpticalDepth(f64),
    /// Collective coupling `μ0` (rad/ns) with peak spectral density `n0`.
    Coupling {
        mu0: f64,
        n0: f64,
    },
}

/// How the control-pulse velocity is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlVelocity {
    /// Group velocity `c′` in m/ns; `f64::INFINITY` is allowed.
    Velocity(f64),
    /// Characteristic cutoff `2π c_eff / L` in rad/ns.
    Cutoff(f64),
    /// `c′ = c`.
    Matched,
}

/// Raw transition parameters as supplied by a caller or config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSpec {
    pub gamma: f64,
    pub length: f64,
    pub c: f64,
    pub control: ControlVelocity,
    pub k: f64,
    pub k_prime: f64,
    pub strength: Strength,
}

impl TransitionSpec {
    /// Matched velocities, zero wave numbers.
    pub fn new(gamma: f64, length: f64, c: f64, d: f64) -> Self {
        TransitionSpec {
            gamma,
            length,
            c,
            control: ControlVelocity::Matched,
            k: 0.0,
            k_prime: 0.0,
            strength: Strength::OpticalDepth(d),
        }
    }

    pub fn with_control(mut self, control: ControlVelocity) -> Self {
        self.control = control;
        self
    }

    pub fn with_wave_numbers(mut self, k: f64, k_prime: f64) -> Self {
        self.k = k;
        self.k_prime = k_prime;
        self
    }

    pub fn derive(&self) -> Result<TransitionParams> {
        derive(self)
    }
}

/// Validated parameters with derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionParams {
    gamma: f64,
    length: f64,
    c: f64,
    inv_c_prime: f64,
    k: f64,
    k_prime: f64,
    d: f64,
    mu0: Option<f64>,
    inv_c_eff: f64,
}

/// Validate a [`TransitionSpec`] and compute `δk`, `1/c_eff` and the
/// inverse cutoff.
pub fn derive(spec: &TransitionSpec) -> Result<TransitionParams> {
    let pos = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{name} must be positive and finite, got {v}"
            )))
        }
    };
    pos("gamma", spec.gamma)?;
    pos("length", spec.length)?;
    pos("c", spec.c)?;
    if !(spec.k.is_finite() && spec.k_prime.is_finite()) {
        return Err(Error::invalid("wave numbers must be finite"));
    }
    let inv_c = 1.0 / spec.c;
    let inv_c_prime = match spec.control {
        ControlVelocity::Matched => inv_c,
        ControlVelocity::Velocity(v) => {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("c_prime must be positive, got {v}")));
            }
            1.0 / v
        }
        ControlVelocity::Cutoff(w) => {
            if w == 0.0 || !w.is_finite() {
                return Err(Error::invalid(
                    "cutoff frequency must be finite and nonzero",
                ));
            }
            let icp = inv_c + 2.0 * PI / (spec.length * w);
            // Round-off can leave a tiny negative residue when c′ is infinite.
            if icp < -1e-12 * inv_c {
                return Err(Error::invalid(format!(
                    "cutoff {w} implies a negative control velocity for c = {}",
                    spec.c
                )));
            }
            icp.max(0.0)
        }
    };
    let (d, mu0) = match spec.strength {
        Strength::OpticalDepth(d) => {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::invalid(format!(
                    "optical depth must be >= 0, got {d}"
                )));
            }
            (d, None)
        }
        Strength::Coupling { mu0, n0 } => {
            if !(n0 > 0.0) || !mu0.is_finite() {
                return Err(Error::invalid("mu0 must be finite and n0 positive"));
            }
            (2.0 * PI * mu0 * mu0 * n0 * spec.length / spec.c, Some(mu0))
        }
    };
    let inv_c_eff = match spec.control {
        ControlVelocity::Matched => 0.0,
        ControlVelocity::Cutoff(w) => 2.0 * PI / (spec.length * w),
        ControlVelocity::Velocity(_) => inv_c_prime - inv_c,
    };
    Ok(TransitionParams {
        gamma: spec.gamma,
        length: spec.length,
        c: spec.c,
        inv_c_prime,
        k: spec.k,
        k_prime: spec.k_prime,
        d,
        mu0,
        inv_c_eff,
    })
}

impl TransitionParams {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `1/c′`; zero when the control pulse is infinitely fast.
    pub fn inv_c_prime(&self) -> f64 {
        self.inv_c_prime
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn k_prime(&self) -> f64 {
        self.k_prime
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn mu0(&self) -> Option<f64> {
        self.mu0
    }

    /// `δk = k′ − k`.
    pub fn delta_k(&self) -> f64 {
        self.k_prime - self.k
    }

    /// `1/c_eff = 1/c′ − 1/c`.
    pub fn inv_c_eff(&self) -> f64 {
        self.inv_c_eff
    }

    /// `ζ = L/(2π c_eff)`, the inverse characteristic cutoff.
    pub fn inverse_cutoff(&self) -> f64 {
        self.length * self.inv_c_eff / (2.0 * PI)
    }

    /// `2π c_eff / L`, or `None` for matched velocities.
    pub fn cutoff(&self) -> Option<f64> {
        let z = self.inverse_cutoff();
        if z == 0.0 {
            None
        } else {
            Some(1.0 / z)
        }
    }

    /// Transit time `L/c`.
    pub fn transit(&self) -> f64 {
        self.length / self.c
    }

    /// Same transition at a different optical depth.
    pub fn with_d(&self, d: f64) -> Result<TransitionParams> {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::invalid(format!(
                "optical depth must be >= 0, got {d}"
            )));
        }
        Ok(TransitionParams {
            d,
            mu0: None,
            ..*self
        })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<TransitionParams> {
        if !(gamma > 0.0) {
            return Err(Error::invalid("gamma must be positive"));
        }
        Ok(TransitionParams { gamma, ..*self })
    }

    /// Collective coupling `μ0` reproducing this optical depth for the given
    /// peak density.
    pub fn coupling_for(&self, n0: f64) -> f64 {
        (self.d * self.c / (2.0 * PI * n0 * self.length)).sqrt()
    }

    /// Smallest delay of the storage control pulse that keeps it behind the
    /// photon everywhere in the medium.
    pub fn min_store_delay(&self) -> f64 {
        (self.length * (1.0 / self.c - self.inv_c_prime)).max(0.0)
    }
}
