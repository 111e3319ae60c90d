//! Exact spectral solution of the 1-D periodic upscaled advection–diffusion
//! equation
//!
//! ```text
//! ∂t c + u ∂x c = ν_p ∂xx c + L c,    c(x, 0) = exp(-(x - s)² / (2ℓ²)),
//! ```
//!
//! where the dispersion operator `L` is diagonal in the Fourier basis with
//! eigenvalues `λ_k`. Each Fourier coefficient evolves as
//! `ĉ_k(t) = ĉ_k(0) exp(μ_k t)` with `μ_k = -i a_k u - ν_p a_k² + λ_k` and
//! `a_k = 2πk / Lx`, so no time stepping is involved.
//!
//! Only the non-negative wavenumbers `k = 0..=Nk` (with `Nk = Nx/2 - 1`) are
//! stored; negative wavenumbers follow from conjugate symmetry, which keeps
//! the field real. The Nyquist mode is dropped.

use crate::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Growth rates above this value are treated as an unstable operator.
const INSTABILITY_TOL: f64 = 1e-12;
/// Relative undershoot tolerated by the positivity check.
const POSITIVITY_TOL: f64 = 1e-10;

/// Domain, discretisation and output settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    /// Domain length.
    pub lx: f64,
    /// Number of grid points (power of two, at least 8).
    pub nx: usize,
    /// Width of the initial Gaussian pulse.
    pub ell: f64,
    /// Times at which positivity is checked on the grid.
    pub check_times: Vec<f64>,
    /// Time at which the outflow quantity of interest is evaluated.
    pub qoi_time: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            lx: 4.0,
            nx: 512,
            ell: 0.1,
            check_times: vec![0.1, 0.5, 1.0, 1.5, 2.0],
            qoi_time: 1.5,
        }
    }
}

impl TransportConfig {
    /// Checks the configuration invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.lx.is_finite() && self.lx > 0.0) {
            return Err(Error::Parameter(format!(
                "lx must be positive, got {}",
                self.lx
            )));
        }
        if self.nx < 8 || !self.nx.is_power_of_two() {
            return Err(Error::Parameter(format!(
                "nx must be a power of two >= 8, got {}",
                self.nx
            )));
        }
        if !(self.ell.is_finite() && self.ell > 0.0 && self.ell < 0.25 * self.lx) {
            return Err(Error::Parameter(format!(
                "ell must lie in (0, lx/4), got {}",
                self.ell
            )));
        }
        if self
            .check_times
            .iter()
            .any(|t| !(t.is_finite() && *t >= 0.0))
        {
            return Err(Error::Parameter(
                "check_times must be finite and >= 0".into(),
            ));
        }
        if !(self.qoi_time.is_finite() && self.qoi_time >= 0.0) {
            return Err(Error::Parameter("qoi_time must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Highest retained wavenumber index `Nk = Nx/2 - 1`.
    pub fn n_modes(&self) -> usize {
        self.nx / 2 - 1
    }

    /// Wavenumbers `a_k = 2πk/Lx` for `k = 0..=Nk`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..=self.n_modes())
            .map(|k| 2.0 * PI * k as f64 / self.lx)
            .collect()
    }

    /// Uniform grid `x_j = j Lx / Nx`.
    pub fn grid(&self) -> Vec<f64> {
        let dx = self.lx / self.nx as f64;
        (0..self.nx).map(|j| j as f64 * dx).collect()
    }
}

/// Mean velocity, pore-scale diffusivity and source location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub u_mean: f64,
    pub nu_p: f64,
    pub s: f64,
}

impl PhysicalParams {
    pub fn new(u_mean: f64, nu_p: f64, s: f64) -> Self {
        Self { u_mean, nu_p, s }
    }

    /// Builds parameters from a `[u_mean, nu_p, s]` slice.
    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Checks `u_mean > 0`, `nu_p >= 0` and finiteness. The source location
    /// is wrapped periodically, so any finite value is accepted.
    pub fn validate(&self) -> Result<()> {
        if !(self.u_mean.is_finite() && self.u_mean > 0.0) {
            return Err(Error::Parameter(format!(
                "u_mean must be positive, got {}",
                self.u_mean
            )));
        }
        if !(self.nu_p.is_finite() && self.nu_p >= 0.0) {
            return Err(Error::Parameter(format!(
                "nu_p must be non-negative, got {}",
                self.nu_p
            )));
        }
        if !self.s.is_finite() {
            return Err(Error::Parameter("source location must be finite".into()));
        }
        Ok(())
    }
}

/// Dispersion MFU representation, described by its Fourier eigenvalues.
///
/// For the fractional variants the imaginary parts are negative for `k > 0`,
/// which (like the mean-advection symbol `-i a_k u`) moves mass downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispersionOperator {
    /// Arbitrary eigenvalues `λ_0..=λ_Nk`; `λ_0` must be zero.
    GeneralLinear { lambda: Vec<Complex64> },
    /// Riesz-type fractional derivative with scaling `nu_m` and power `alpha`.
    Fractional { nu_m: f64, alpha: f64 },
    /// Independent real and imaginary power laws.
    ComplexFractional {
        nu_m_r: f64,
        alpha_r: f64,
        nu_m_i: f64,
        alpha_i: f64,
    },
}

impl DispersionOperator {
    /// The zero operator (no dispersion) with `nk + 1` eigenvalues.
    pub fn zero(nk: usize) -> Self {
        DispersionOperator::GeneralLinear {
            lambda: vec![Complex64::new(0.0, 0.0); nk + 1],
        }
    }

    /// Checks the parameter invariants of the representation.
    pub fn validate(&self) -> Result<()> {
        fn check_power(name: &str, a: f64) -> Result<()> {
            if !(a > 1.0 && a <= 2.0) {
                return Err(Error::Domain(format!("{name} must lie in (1, 2], got {a}")));
            }
            Ok(())
        }
        fn check_scale(name: &str, v: f64) -> Result<()> {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
            Ok(())
        }
        match self {
            DispersionOperator::GeneralLinear { lambda } => {
                if lambda.is_empty() {
                    return Err(Error::Domain(
                        "general linear operator needs eigenvalues".into(),
                    ));
                }
                if lambda[0] != Complex64::new(0.0, 0.0) {
                    return Err(Error::Domain(format!(
                        "lambda_0 must be zero for mass conservation, got {}",
                        lambda[0]
                    )));
                }
                if lambda
                    .iter()
                    .any(|l| !(l.re.is_finite() && l.im.is_finite()))
                {
                    return Err(Error::Domain("eigenvalues must be finite".into()));
                }
                Ok(())
            }
            DispersionOperator::Fractional { nu_m, alpha } => {
                check_scale("nu_m", *nu_m)?;
                check_power("alpha", *alpha)
            }
            DispersionOperator::ComplexFractional {
                nu_m_r,
                alpha_r,
                nu_m_i,
                alpha_i,
            } => {
                check_scale("nu_m_r", *nu_m_r)?;
                check_scale("nu_m_i", *nu_m_i)?;
                check_power("alpha_r", *alpha_r)?;
                check_power("alpha_i", *alpha_i)
            }
        }
    }

    /// Eigenvalues `λ_k` for `k = 0..=nk`.
    pub fn eigenvalues(&self, nk: usize, lx: f64) -> Result<Vec<Complex64>> {
        dispersion_eigenvalues(self, nk, lx)
    }
}

/// Eigenvalues `λ_k`, `k = 0..=nk`, of a dispersion operator on a domain of
/// length `lx`.
pub fn dispersion_eigenvalues(
    op: &DispersionOperator,
    nk: usize,
    lx: f64,
) -> Result<Vec<Complex64>> {
    op.validate()?;
    if !(lx.is_finite() && lx > 0.0) {
        return Err(Error::Parameter(format!("lx must be positive, got {lx}")));
    }
    let a = |k: usize| 2.0 * PI * k as f64 / lx;
    let mut out = Vec::with_capacity(nk + 1);
    out.push(Complex64::new(0.0, 0.0));
    match op {
        DispersionOperator::GeneralLinear { lambda } => {
            if lambda.len() != nk + 1 {
                return Err(Error::Domain(format!(
                    "general linear operator has {} eigenvalues, expected {}",
                    lambda.len(),
                    nk + 1
                )));
            }
            out.extend_from_slice(&lambda[1..]);
        }
        DispersionOperator::Fractional { nu_m, alpha } => {
            let half = alpha * PI / 2.0;
            let re_fac = half.cos().abs();
            // sin(π) is not exactly zero in floating point; the α = 2 limit is
            // pure diffusion.
            let im_fac = if *alpha == 2.0 { 0.0 } else { half.sin() };
            for k in 1..=nk {
                let mag = nu_m * a(k).powf(*alpha);
                out.push(Complex64::new(-mag * re_fac, -mag * im_fac));
            }
        }
        DispersionOperator::ComplexFractional {
            nu_m_r,
            alpha_r,
            nu_m_i,
            alpha_i,
        } => {
            for k in 1..=nk {
                let ak = a(k);
                out.push(Complex64::new(
                    -nu_m_r * ak.powf(*alpha_r),
                    -nu_m_i * ak.powf(*alpha_i),
                ));
            }
        }
    }
    Ok(out)
}

/// Synthetic data-generating dispersion operator: a complex fractional
/// operator whose eigenvalues are multiplied by the smooth profile
/// `1 + amplitude · exp(-a_k² / (2 width²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTruth {
    pub nu_m_r: f64,
    pub alpha_r: f64,
    pub nu_m_i: f64,
    pub alpha_i: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        Self {
            nu_m_r: 0.2,
            alpha_r: 1.5,
            nu_m_i: 0.2,
            alpha_i: 1.5,
            amplitude: 0.2,
            width: 10.0,
        }
    }
}

impl SyntheticTruth {
    /// Materialises the truth as a general linear operator on `cfg`'s modes.
    pub fn operator(&self, cfg: &TransportConfig) -> Result<DispersionOperator> {
        if !(self.width.is_finite() && self.width > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Parameter(
                "perturbation width must be positive".into(),
            ));
        }
        let base = DispersionOperator::ComplexFractional {
            nu_m_r: self.nu_m_r,
            alpha_r: self.alpha_r,
            nu_m_i: self.nu_m_i,
            alpha_i: self.alpha_i,
        };
        let mut lambda = base.eigenvalues(cfg.n_modes(), cfg.lx)?;
        for (l, a) in lambda.iter_mut().zip(cfg.wavenumbers()) {
            *l *= 1.0 + self.amplitude * (-a * a / (2.0 * self.width * self.width)).exp();
        }
        Ok(DispersionOperator::GeneralLinear { lambda })
    }
}

/// Fourier coefficients of the solution at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    /// `ĉ_k(t)` for `k = 0..=Nk` (unnormalised DFT convention).
    pub coefficients: Vec<Complex64>,
    pub time: f64,
    lx: f64,
    nx: usize,
}

impl SpectralSolution {
    /// Full Hermitian spectrum of length `nx` (Nyquist entry zero).
    fn full_spectrum(&self) -> Vec<Complex64> {
        let mut full = vec![Complex64::new(0.0, 0.0); self.nx];
        full[0] = self.coefficients[0];
        for (k, c) in self.coefficients.iter().enumerate().skip(1) {
            full[k] = *c;
            full[self.nx - k] = c.conj();
        }
        full
    }

    fn inverse(&self) -> Vec<Complex64> {
        let mut buf = self.full_spectrum();
        FftPlanner::new()
            .plan_fft_inverse(self.nx)
            .process(&mut buf);
        let scale = 1.0 / self.nx as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Concentration on the uniform grid.
    pub fn grid_values(&self) -> Vec<f64> {
        self.inverse().into_iter().map(|v| v.re).collect()
    }

    /// Largest imaginary part of the inverse transform relative to the
    /// largest magnitude; zero up to roundoff for a Hermitian spectrum.
    pub fn imaginary_residue(&self) -> f64 {
        let vals = self.inverse();
        let max = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let im = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if max > 0.0 {
            im / max
        } else {
            im
        }
    }

    /// Concentration at an arbitrary location by direct series summation.
    pub fn value_at(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.coefficients.iter().enumerate().skip(1) {
            let a = 2.0 * PI * k as f64 / self.lx;
            acc += (c * Complex64::from_polar(1.0, a * x)).re;
        }
        (self.coefficients[0].re + 2.0 * acc) / self.nx as f64
    }

    /// Spatial mean of the concentration.
    pub fn spatial_mean(&self) -> f64 {
        self.coefficients[0].re / self.nx as f64
    }
}

/// Spectral solver with cached FFT plans.
#[derive(Clone)]
pub struct Transport {
    cfg: TransportConfig,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transport").field("cfg", &self.cfg).finish()
    }
}

impl Transport {
    pub fn new(cfg: TransportConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(cfg.nx);
        let inverse = planner.plan_fft_inverse(cfg.nx);
        Ok(Self {
            wavenumbers: cfg.wavenumbers(),
            cfg,
            forward,
            inverse,
        })
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    /// Highest retained wavenumber index.
    pub fn n_modes(&self) -> usize {
        self.cfg.n_modes()
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Eigenvalues of `op` on this solver's modes.
    pub fn eigenvalues(&self, op: &DispersionOperator) -> Result<Vec<Complex64>> {
        op.eigenvalues(self.n_modes(), self.cfg.lx)
    }

    /// Initial pulse sampled on the grid (periodic minimal-image distance).
    pub fn initial_pulse(&self, s: f64) -> Vec<f64> {
        let lx = self.cfg.lx;
        let two_l2 = 2.0 * self.cfg.ell * self.cfg.ell;
        self.cfg
            .grid()
            .into_iter()
            .map(|x| {
                let d = (x - s).rem_euclid(lx);
                let d = if d >= 0.5 * lx { d - lx } else { d };
                (-d * d / two_l2).exp()
            })
            .collect()
    }

    /// DFT coefficients `ĉ_k(0)` of the grid-sampled pulse, `k = 0..=Nk`.
    pub fn initial_coefficients(&self, s: f64) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = self
            .initial_pulse(s)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n_modes() + 1);
        buf
    }

    /// Growth rates `μ_k = -i a_k u - ν_p a_k² + λ_k`; errors if any has a
    /// positive real part.
    pub fn growth_rates(
        &self,
        params: &PhysicalParams,
        lambda: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        params.validate()?;
        if lambda.len() != self.wavenumbers.len() {
            return Err(Error::Domain(format!(
                "expected {} eigenvalues, got {}",
                self.wavenumbers.len(),
                lambda.len()
            )));
        }
        let mut mu = Vec::with_capacity(lambda.len());
        for (k, (&a, &l)) in self.wavenumbers.iter().zip(lambda).enumerate() {
            let m = Complex64::new(-params.nu_p * a * a, -a * params.u_mean) + l;
            if m.re > INSTABILITY_TOL {
                return Err(Error::Instability {
                    mode: k,
                    real: m.re,
                });
            }
            mu.push(m);
        }
        Ok(mu)
    }

    /// Solution coefficients at time `t` given precomputed eigenvalues.
    pub fn solve_with_eigenvalues(
        &self,
        params: &PhysicalParams,
        lambda: &[Complex64],
        t: f64,
    ) -> Result<SpectralSolution> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Argument(format!(
                "time must be finite and >= 0, got {t}"
            )));
        }
        let mu = self.growth_rates(params, lambda)?;
        let c0 = self.initial_coefficients(params.s);
        let coefficients = c0.iter().zip(&mu).map(|(c, m)| c * (m * t).exp()).collect();
        Ok(SpectralSolution {
            coefficients,
            time: t,
            lx: self.cfg.lx,
            nx: self.cfg.nx,
        })
    }

    /// Solution coefficients at time `t`.
    pub fn solve_at(
        &self,
        params: &PhysicalParams,
        op: &DispersionOperator,
        t: f64,
    ) -> Result<SpectralSolution> {
        let lambda = self.eigenvalues(op)?;
        self.solve_with_eigenvalues(params, &lambda, t)
    }

    /// Concentration at location `x` for each of `times`.
    pub fn probe_with_eigenvalues(
        &self,
        params: &PhysicalParams,
        lambda: &[Complex64],
        x: f64,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        if !(0.0..=self.cfg.lx).contains(&x) {
            return Err(Error::Argument(format!(
                "probe location {x} outside [0, lx]"
            )));
        }
        let mu = self.growth_rates(params, lambda)?;
        let c0 = self.initial_coefficients(params.s);
        // Pre-rotate the coefficients to the probe location.
        let rotated: Vec<Complex64> = c0
            .iter()
            .zip(&self.wavenumbers)
            .map(|(c, a)| c * Complex64::from_polar(1.0, a * x))
            .collect();
        let n = self.cfg.nx as f64;
        times
            .iter()
            .map(|&t| {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::Argument(format!(
                        "time must be finite and >= 0, got {t}"
                    )));
                }
                let mut acc = 0.0;
                for (c, m) in rotated.iter().zip(&mu).skip(1) {
                    acc += (c * (m * t).exp()).re;
                }
                Ok((rotated[0].re + 2.0 * acc) / n)
            })
            .collect()
    }

    /// Concentration at location `x` for each of `times`.
    pub fn probe(
        &self,
        params: &PhysicalParams,
        op: &DispersionOperator,
        x: f64,
        times: &[f64],
    ) -> Result<Vec<f64>> {
        let lambda = self.eigenvalues(op)?;
        self.probe_with_eigenvalues(params, &lambda, x, times)
    }

    /// Outflow concentration `c(Lx, qoi_time)`.
    pub fn qoi(&self, params: &PhysicalParams, op: &DispersionOperator) -> Result<f64> {
        let lambda = self.eigenvalues(op)?;
        self.qoi_with_eigenvalues(params, &lambda)
    }

    /// Outflow concentration for precomputed eigenvalues.
    pub fn qoi_with_eigenvalues(
        &self,
        params: &PhysicalParams,
        lambda: &[Complex64],
    ) -> Result<f64> {
        Ok(self.probe_with_eigenvalues(params, lambda, self.cfg.lx, &[self.cfg.qoi_time])?[0])
    }

    /// Grid values at time `t` computed with the cached inverse plan.
    fn grid_at(&self, c0: &[Complex64], mu: &[Complex64], t: f64, buf: &mut [Complex64]) {
        let nx = self.cfg.nx;
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        buf[0] = c0[0];
        for k in 1..c0.len() {
            let v = c0[k] * (mu[k] * t).exp();
            buf[k] = v;
            buf[nx - k] = v.conj();
        }
        self.inverse.process(buf);
    }

    /// Smallest grid value over the check times, relative to the largest
    /// magnitude at the same time (the most negative ratio is returned).
    pub fn min_relative_concentration(
        &self,
        params: &PhysicalParams,
        lambda: &[Complex64],
    ) -> Result<f64> {
        let mu = self.growth_rates(params, lambda)?;
        let c0 = self.initial_coefficients(params.s);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.nx];
        let mut worst = f64::INFINITY;
        for &t in &self.cfg.check_times {
            self.grid_at(&c0, &mu, t, &mut buf);
            let max = buf.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
            let min = buf.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
            if max > 0.0 {
                worst = worst.min(min / max);
            }
        }
        Ok(worst)
    }

    /// True iff no grid value at any check time falls below
    /// `-1e-10 · max|c|`.
    pub fn positivity_check_with_eigenvalues(
        &self,
        params: &PhysicalParams,
        lambda: &[Complex64],
    ) -> Result<bool> {
        Ok(self.min_relative_concentration(params, lambda)? >= -POSITIVITY_TOL)
    }

    /// True iff no grid value at any check time falls below
    /// `-1e-10 · max|c|`.
    pub fn positivity_check(
        &self,
        params: &PhysicalParams,
        op: &DispersionOperator,
    ) -> Result<bool> {
        let lambda = self.eigenvalues(op)?;
        self.positivity_check_with_eigenvalues(params, &lambda)
    }

    /// Precomputes everything in the point value `c(x, t)` that depends on the
    /// physical parameters only, so the dependence on the dispersion operator
    /// reduces to a dot product with `exp(λ_k t)`.
    pub fn point_basis(&self, params: &PhysicalParams, x: f64, t: f64) -> Result<PointBasis> {
        let zero = vec![Complex64::new(0.0, 0.0); self.wavenumbers.len()];
        let mu = self.growth_rates(params, &zero)?;
        let c0 = self.initial_coefficients(params.s);
        let n = self.cfg.nx as f64;
        let terms = c0
            .iter()
            .zip(&mu)
            .zip(&self.wavenumbers)
            .skip(1)
            .map(|((c, m), a)| c * (m * t).exp() * Complex64::from_polar(2.0 / n, a * x))
            .collect();
        Ok(PointBasis {
            constant: c0[0].re / n,
            terms,
            time: t,
        })
    }

    /// Basis for the outflow quantity of interest.
    pub fn qoi_basis(&self, params: &PhysicalParams) -> Result<PointBasis> {
        self.point_basis(params, self.cfg.lx, self.cfg.qoi_time)
    }
}

/// Point value `c(x, t)` factored as `constant + Re Σ_k terms_k · exp(λ_k t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBasis {
    constant: f64,
    terms: Vec<Complex64>,
    time: f64,
}

impl PointBasis {
    /// Operator factors `exp(λ_k t)` for `k = 1..=Nk` at this basis' time.
    pub fn factors(&self, lambda: &[Complex64]) -> Vec<Complex64> {
        lambda
            .iter()
            .skip(1)
            .map(|l| (l * self.time).exp())
            .collect()
    }

    /// Point value for precomputed operator factors (see [`Self::factors`]).
    pub fn eval(&self, factors: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for (t, f) in self.terms.iter().zip(factors) {
            acc += t.re * f.re - t.im * f.im;
        }
        self.constant + acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solver() -> Transport {
        Transport::new(TransportConfig::default()).unwrap()
    }

    fn nominal() -> PhysicalParams {
        PhysicalParams::new(1.0, 0.01, 0.85)
    }

    #[test]
    fn fractional_limits() {
        let l = dispersion_eigenvalues(
            &DispersionOperator::Fractional {
                nu_m: 0.1,
                alpha: 2.0,
            },
            10,
            4.0,
        )
        .unwrap();
        for (k, v) in l.iter().enumerate() {
            let a = 2.0 * PI * k as f64 / 4.0;
            assert_relative_eq!(v.re, -0.1 * a * a, max_relative = 1e-14);
            assert_eq!(v.im, 0.0);
        }
        let l = dispersion_eigenvalues(
            &DispersionOperator::Fractional {
                nu_m: 0.1,
                alpha: 1.0 + 1e-9,
            },
            10,
            4.0,
        )
        .unwrap();
        assert!(l.iter().all(|v| v.re.abs() < 1e-8 && v.im <= 0.0));
        let l = dispersion_eigenvalues(
            &DispersionOperator::ComplexFractional {
                nu_m_r: 0.2,
                alpha_r: 1.5,
                nu_m_i: 0.0,
                alpha_i: 1.5,
            },
            10,
            4.0,
        )
        .unwrap();
        assert!(l.iter().all(|v| v.im == 0.0));
        assert!(l.iter().skip(1).all(|v| v.re < 0.0));
    }

    #[test]
    fn domain_errors() {
        for alpha in [1.0, 2.5, 0.5, f64::NAN] {
            let op = DispersionOperator::Fractional { nu_m: 0.1, alpha };
            assert!(matches!(
                dispersion_eigenvalues(&op, 4, 4.0),
                Err(Error::Domain(_))
            ));
        }
        let op = DispersionOperator::Fractional {
            nu_m: -0.1,
            alpha: 1.5,
        };
        assert!(matches!(
            dispersion_eigenvalues(&op, 4, 4.0),
            Err(Error::Domain(_))
        ));
        let op = DispersionOperator::GeneralLinear {
            lambda: vec![Complex64::new(1.0, 0.0); 5],
        };
        assert!(matches!(op.validate(), Err(Error::Domain(_))));
    }

    #[test]
    fn initial_condition_is_reproduced() {
        let tr = solver();
        let p = nominal();
        let sol = tr
            .solve_at(&p, &DispersionOperator::zero(tr.n_modes()), 0.0)
            .unwrap();
        let grid = sol.grid_values();
        let pulse = tr.initial_pulse(p.s);
        for (g, c) in grid.iter().zip(&pulse) {
            assert!((g - c).abs() < 1e-12);
        }
        // Off-grid evaluation interpolates the pulse closely.
        assert!((sol.value_at(1.0) - (-(0.15f64).powi(2) / 0.02).exp()).abs() < 1e-10);
    }

    #[test]
    fn pure_advection_translates() {
        let tr = solver();
        let p = PhysicalParams::new(1.0, 0.0, 0.85);
        let sol = tr
            .solve_at(&p, &DispersionOperator::zero(tr.n_modes()), 1.0)
            .unwrap();
        let grid = sol.grid_values();
        let shifted = tr.initial_pulse(1.85);
        for (g, c) in grid.iter().zip(&shifted) {
            assert!((g - c).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved_and_field_is_real() {
        let tr = solver();
        let p = nominal();
        let op = DispersionOperator::ComplexFractional {
            nu_m_r: 0.3,
            alpha_r: 1.3,
            nu_m_i: 0.5,
            alpha_i: 1.7,
        };
        let m0 = tr.solve_at(&p, &op, 0.0).unwrap();
        for t in [0.1, 1.0, 3.0] {
            let s = tr.solve_at(&p, &op, t).unwrap();
            assert_eq!(s.coefficients[0], m0.coefficients[0]);
            assert_relative_eq!(s.spatial_mean(), m0.spatial_mean(), max_relative = 1e-12);
            let grid_mean = s.grid_values().iter().sum::<f64>() / tr.config().nx as f64;
            assert_relative_eq!(grid_mean, m0.spatial_mean(), max_relative = 1e-12);
            assert!(s.imaginary_residue() < 1e-9);
        }
    }

    #[test]
    fn energy_is_non_increasing() {
        let tr = solver();
        let p = nominal();
        let op = DispersionOperator::Fractional {
            nu_m: 0.1,
            alpha: 1.4,
        };
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let g = tr.solve_at(&p, &op, i as f64 * 0.1).unwrap().grid_values();
            let e: f64 = g.iter().map(|v| v * v).sum();
            assert!(e <= prev * (1.0 + 1e-12));
            prev = e;
        }
    }

    #[test]
    fn fractional_alpha_two_matches_extra_diffusion() {
        let tr = solver();
        let p = nominal();
        let a = tr
            .probe(
                &p,
                &DispersionOperator::Fractional {
                    nu_m: 0.05,
                    alpha: 2.0,
                },
                1.4,
                &[0.1, 0.7, 1.5],
            )
            .unwrap();
        let q = PhysicalParams::new(1.0, 0.06, 0.85);
        let b = tr
            .probe(
                &q,
                &DispersionOperator::zero(tr.n_modes()),
                1.4,
                &[0.1, 0.7, 1.5],
            )
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn translation_equivariance() {
        let tr = solver();
        let op = DispersionOperator::Fractional {
            nu_m: 0.1,
            alpha: 1.5,
        };
        // A shift by a whole number of grid cells is exact.
        let dx = 4.0 / 512.0;
        let g0 = tr
            .solve_at(&PhysicalParams::new(1.0, 0.01, 0.5), &op, 0.8)
            .unwrap()
            .grid_values();
        let g1 = tr
            .solve_at(&PhysicalParams::new(1.0, 0.01, 0.5 + 10.0 * dx), &op, 0.8)
            .unwrap()
            .grid_values();
        for j in 0..512 {
            assert!((g1[(j + 10) % 512] - g0[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodicity_of_probe() {
        let tr = solver();
        let op = DispersionOperator::Fractional {
            nu_m: 0.1,
            alpha: 1.5,
        };
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.01).collect();
        let a = tr.probe(&nominal(), &op, 0.0, &times).unwrap();
        let b = tr.probe(&nominal(), &op, 4.0, &times).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(tr.probe(&nominal(), &op, 4.5, &times).is_err());
    }

    #[test]
    fn imaginary_part_moves_mass_downstream() {
        let tr = solver();
        let p = nominal();
        let com = |op: &DispersionOperator| {
            let g = tr.solve_at(&p, op, 0.5).unwrap().grid_values();
            let xs = tr.config().grid();
            g.iter().zip(&xs).map(|(c, x)| c * x).sum::<f64>() / g.iter().sum::<f64>()
        };
        let plain = com(&DispersionOperator::ComplexFractional {
            nu_m_r: 0.1,
            alpha_r: 1.5,
            nu_m_i: 0.0,
            alpha_i: 1.2,
        });
        let drift = com(&DispersionOperator::ComplexFractional {
            nu_m_r: 0.1,
            alpha_r: 1.5,
            nu_m_i: 0.1,
            alpha_i: 1.2,
        });
        assert!(drift > plain + 1e-3, "{drift} vs {plain}");
    }

    #[test]
    fn instability_is_reported() {
        let tr = solver();
        let mut lambda = vec![Complex64::new(0.0, 0.0); tr.n_modes() + 1];
        lambda[3] = Complex64::new(5.0, 0.0);
        let op = DispersionOperator::GeneralLinear { lambda };
        assert!(matches!(
            tr.solve_at(&nominal(), &op, 1.0),
            Err(Error::Instability { mode: 3, .. })
        ));
    }

    #[test]
    fn positivity_examples() {
        let tr = solver();
        let p = nominal();
        assert!(tr
            .positivity_check(&p, &DispersionOperator::zero(tr.n_modes()))
            .unwrap());
        for (nu_m, alpha) in [(0.05, 1.05), (0.1, 1.5), (0.15, 1.95)] {
            let op = DispersionOperator::Fractional { nu_m, alpha };
            assert!(tr.positivity_check(&p, &op).unwrap());
        }
        // A strongly phase-shifted single low mode with negligible damping
        // produces an undershoot.
        let mut lambda = vec![Complex64::new(0.0, 0.0); tr.n_modes() + 1];
        lambda[2] = Complex64::new(-1e-6, -4.0);
        let op = DispersionOperator::GeneralLinear { lambda };
        assert!(!tr.positivity_check(&p, &op).unwrap());
    }

    #[test]
    fn point_basis_matches_probe() {
        let tr = solver();
        let p = nominal();
        let op = DispersionOperator::Fractional {
            nu_m: 0.12,
            alpha: 1.6,
        };
        let lambda = tr.eigenvalues(&op).unwrap();
        let basis = tr.qoi_basis(&p).unwrap();
        let fast = basis.eval(&basis.factors(&lambda));
        let slow = tr.qoi(&p, &op).unwrap();
        assert!((fast - slow).abs() < 1e-13);
    }

    #[test]
    fn synthetic_truth_is_stable_and_serde_round_trips() {
        let cfg = TransportConfig::default();
        let op = SyntheticTruth::default().operator(&cfg).unwrap();
        let lambda = op.eigenvalues(cfg.n_modes(), cfg.lx).unwrap();
        assert!(lambda.iter().skip(1).all(|l| l.re < 0.0 && l.im < 0.0));
        let json = serde_json::to_string(&DispersionOperator::Fractional {
            nu_m: 0.1,
            alpha: 1.5,
        })
        .unwrap();
        assert!(json.contains("\"kind\":\"fractional\""));
        let back: DispersionOperator = serde_json::from_str(&json).unwrap();
        assert_eq!(
            back,
            DispersionOperator::Fractional {
                nu_m: 0.1,
                alpha: 1.5
            }
        );
    }
}
