//! Flatness ODE for helicoidal profile curves: residuals, fixed-step RK4
//! integration with singular-band guards, θ by quadrature, and the
//! flatness functional of the first fundamental form.

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::curves::{Jet1D, Profile};
use crate::error::{GeomError, Result};

/// Residual β²φ''sin³φ cosφ − β²φ'²sin⁴φ + α²φ'⁴cos⁴φ.
pub fn ode_residual(phi: f64, dphi: f64, ddphi: f64, alpha: f64, beta: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let b2 = beta * beta;
    b2 * ddphi * s.powi(3) * c - b2 * dphi * dphi * s.powi(4) + alpha * alpha * dphi.powi(4) * c.powi(4)
}

/// φ'' solved from the flatness equation.
pub fn ode_rhs(phi: f64, dphi: f64, alpha: f64, beta: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let b2 = beta * beta;
    (b2 * dphi * dphi * s.powi(4) - alpha * alpha * dphi.powi(4) * c.powi(4)) / (b2 * s.powi(3) * c)
}

/// E_s W_s − 2 W E_ss with E = α²cos²φ + β²sin²φ and
/// W = EG − F² = β²sin²φ + α²φ'²cos²φ. It equals −4(β²−α²)·ode_residual.
pub fn gauss_flatness_residual(phi: f64, dphi: f64, ddphi: f64, alpha: f64, beta: f64) -> f64 {
    let (a2, b2) = (alpha * alpha, beta * beta);
    let (s2, c2) = ((2.0 * phi).sin(), (2.0 * phi).cos());
    let cos2 = phi.cos().powi(2);
    let e_s = (b2 - a2) * s2 * dphi;
    let e_ss = (b2 - a2) * (2.0 * c2 * dphi * dphi + s2 * ddphi);
    let w = b2 * phi.sin().powi(2) + a2 * dphi * dphi * cos2;
    let w_s = b2 * s2 * dphi + a2 * (2.0 * dphi * ddphi * cos2 - dphi.powi(3) * s2);
    e_s * w_s - 2.0 * w * e_ss
}

/// cos of the angle between E1 and the normal of the helicoidal surface
/// swept by the profile, from x3 = sin φ and x3' = φ' cos φ.
pub fn hopf_cos_nu(phi: f64, dphi: f64, alpha: f64, beta: f64) -> f64 {
    let x3 = phi.sin();
    let dx3 = dphi * phi.cos();
    (beta - alpha) * x3 * dx3 / (beta * beta * x3 * x3 + alpha * alpha * dx3 * dx3).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub s: f64,
    pub phi: f64,
    pub dphi: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    /// Width of the guard band around sin φ = 0, cos φ = 0 and |φ'| = 1.
    pub delta: f64,
    /// Per-step error budget from step doubling; `None` gives plain RK4.
    pub local_tol: Option<f64>,
    /// Take θ' negative (mirror image profile).
    pub mirror: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { delta: 1e-3, local_tol: Some(1e-10), mirror: false }
    }
}

/// Sampled profile on a uniform arc-length grid starting at s = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub alpha: f64,
    pub beta: f64,
    pub step: f64,
    pub samples: Vec<ProfileSample>,
    /// Integration stopped before s_max at the guard band.
    pub truncated: bool,
    pub theta_sign: f64,
}

type State = [f64; 2];

fn rk4_step(y: State, h: f64, alpha: f64, beta: f64) -> State {
    let f = |y: State| [y[1], ode_rhs(y[0], y[1], alpha, beta)];
    let add = |y: State, k: State, c: f64| [y[0] + c * k[0], y[1] + c * k[1]];
    let k1 = f(y);
    let k2 = f(add(y, k1, h / 2.0));
    let k3 = f(add(y, k2, h / 2.0));
    let k4 = f(add(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// n substeps of size h/n, with the largest step-doubling error estimate.
fn substepped(y: State, h: f64, n: usize, alpha: f64, beta: f64) -> (State, f64) {
    let dt = h / n as f64;
    let mut y = y;
    let mut est: f64 = 0.0;
    for _ in 0..n {
        let full = rk4_step(y, dt, alpha, beta);
        let half = rk4_step(rk4_step(y, dt / 2.0, alpha, beta), dt / 2.0, alpha, beta);
        est = est.max((full[0] - half[0]).abs().max((full[1] - half[1]).abs()) / 15.0);
        y = full;
    }
    (y, est)
}

pub(crate) fn in_band(y: State, delta: f64) -> bool {
    y[0] >= delta && y[0] <= FRAC_PI_2 - delta && y[1].abs() < 1.0 - delta
}

fn theta_rate(phi: f64, dphi: f64, sign: f64) -> f64 {
    sign * (1.0 - dphi * dphi).max(0.0).sqrt() / phi.cos()
}

pub fn integrate(alpha: f64, beta: f64, phi0: f64, dphi0: f64, s_max: f64, h: f64) -> Result<ProfileSolution> {
    integrate_with(alpha, beta, phi0, dphi0, s_max, h, &IntegrateOptions::default())
}

/// Classical RK4 on a fixed grid of step h. When `local_tol` is set, a step
/// whose step-doubling estimate exceeds it is redone with 2, 4, then 8
/// substeps; the output grid never changes.
pub fn integrate_with(
    alpha: f64,
    beta: f64,
    phi0: f64,
    dphi0: f64,
    s_max: f64,
    h: f64,
    opts: &IntegrateOptions,
) -> Result<ProfileSolution> {
    if beta == 0.0 {
        return Err(GeomError::SingularInitialData("beta must be nonzero".into()));
    }
    if !(h > 0.0) || !(s_max >= 0.0) {
        return Err(GeomError::Domain(format!("need h > 0 and s_max >= 0, got h = {h}, s_max = {s_max}")));
    }
    let delta = opts.delta;
    if phi0.sin() <= delta || phi0.cos() <= delta {
        return Err(GeomError::SingularInitialData(format!("sin and cos of phi0 must exceed {delta}")));
    }
    if dphi0.abs() >= 1.0 {
        return Err(GeomError::SingularInitialData("|dphi0| must be below 1".into()));
    }
    let n = (s_max / h).round() as usize;
    let mut states = vec![[phi0, dphi0]];
    let mut truncated = false;
    for _ in 0..n {
        let y = *states.last().unwrap();
        let next = match opts.local_tol {
            None => rk4_step(y, h, alpha, beta),
            Some(tol) => {
                let (mut next, mut est) = substepped(y, h, 1, alpha, beta);
                let mut pieces = 1;
                while est > tol {
                    if pieces == 8 {
                        return Err(GeomError::StiffnessAbort(est));
                    }
                    pieces *= 2;
                    (next, est) = substepped(y, h, pieces, alpha, beta);
                }
                next
            }
        };
        if !in_band(next, delta) || !next[0].is_finite() {
            truncated = true;
            break;
        }
        states.push(next);
    }
    let sign = if opts.mirror { -1.0 } else { 1.0 };
    let rates: Vec<f64> = states.iter().map(|y| theta_rate(y[0], y[1], sign)).collect();
    let theta = cumulative_simpson(&rates, h);
    let samples = states
        .iter()
        .zip(theta)
        .enumerate()
        .map(|(i, (y, th))| ProfileSample { s: i as f64 * h, phi: y[0], dphi: y[1], theta: th })
        .collect();
    Ok(ProfileSolution { alpha, beta, step: h, samples, truncated, theta_sign: sign })
}

/// Running integral of uniformly sampled f: composite Simpson at even
/// nodes, a three-point cubic rule for the odd ones.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
    }
    if n < 3 {
        return out;
    }
    for i in (2..n).step_by(2) {
        out[i] = out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
    }
    for i in (1..n).step_by(2) {
        out[i] = if i + 1 < n {
            out[i - 1] + h / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1])
        } else {
            out[i - 1] + h / 12.0 * (-f[i - 2] + 8.0 * f[i - 1] + 5.0 * f[i])
        };
    }
    out
}

impl ProfileSolution {
    /// Constant solution φ ≡ phi0, sampled like an integrated one.
    pub fn constant(alpha: f64, beta: f64, phi0: f64, s_max: f64, h: f64) -> Result<ProfileSolution> {
        let opts = IntegrateOptions { local_tol: None, ..IntegrateOptions::default() };
        integrate_with(alpha, beta, phi0, 0.0, s_max, h, &opts)
    }

    pub fn s_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.s)
    }

    /// Node index and RK4 state at arc length s, reached by a partial step
    /// from the nearest node at or below s.
    fn state_at(&self, s: f64) -> (usize, State) {
        let last = self.samples.len() - 1;
        let i = ((s / self.step).floor().max(0.0) as usize).min(last.saturating_sub(1));
        let p = self.samples[i];
        let dt = s - p.s;
        let y = if dt == 0.0 { [p.phi, p.dphi] } else { rk4_step([p.phi, p.dphi], dt, self.alpha, self.beta) };
        (i, y)
    }

    pub fn phi_at(&self, s: f64) -> (f64, f64) {
        let (_, y) = self.state_at(s);
        (y[0], y[1])
    }

    /// Largest |φ'² + θ'²cos²φ − 1| with θ' from central differences of the
    /// stored θ samples.
    pub fn arc_length_defect(&self) -> f64 {
        let h = self.step;
        self.samples
            .windows(3)
            .map(|w| {
                let dth = (w[2].theta - w[0].theta) / (2.0 * h);
                (w[1].dphi * w[1].dphi + dth * dth * w[1].phi.cos().powi(2) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest |ode_residual| with φ'' from a five-point difference of the
    /// stored φ' samples.
    pub fn ode_residual_max(&self) -> f64 {
        let h = self.step;
        self.samples
            .windows(5)
            .map(|w| {
                let dd = (-w[4].dphi + 8.0 * w[3].dphi - 8.0 * w[1].dphi + w[0].dphi) / (12.0 * h);
                ode_residual(w[2].phi, w[2].dphi, dd, self.alpha, self.beta).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn cos_nu_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|p| hopf_cos_nu(p.phi, p.dphi, self.alpha, self.beta)).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "s,phi,dphi,theta")?;
        for p in &self.samples {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", p.s, p.phi, p.dphi, p.theta)?;
        }
        Ok(())
    }
}

impl Profile for ProfileSolution {
    fn phi_theta(&self, s: f64) -> (Jet1D, Jet1D) {
        let (i, y) = self.state_at(s);
        let p = self.samples[i];
        let (phi, dphi) = (y[0], y[1]);
        let ddphi = ode_rhs(phi, dphi, self.alpha, self.beta);
        let sign = self.theta_sign;
        let dt = s - p.s;
        let mid = if dt == 0.0 { [p.phi, p.dphi] } else { rk4_step([p.phi, p.dphi], dt / 2.0, self.alpha, self.beta) };
        let theta = p.theta
            + dt / 6.0 * (theta_rate(p.phi, p.dphi, sign) + 4.0 * theta_rate(mid[0], mid[1], sign) + theta_rate(phi, dphi, sign));
        let root = (1.0 - dphi * dphi).sqrt();
        let c = phi.cos();
        let dtheta = sign * root / c;
        let ddtheta = sign * (-dphi * ddphi / (root * c) + root * phi.sin() * dphi / (c * c));
        ([phi, dphi, ddphi], [theta, dtheta, ddtheta])
    }

    fn range(&self) -> (f64, f64) {
        (0.0, self.s_max())
    }
}

/// Observed order of RK4 on [0, s_max]: the final-state error at h0 and
/// h0/2 is measured against an h0/4 reference and
/// log2(e(h0)/e(h0/2)) is returned.
pub fn convergence_order(alpha: f64, beta: f64, phi0: f64, dphi0: f64, s_max: f64, h0: f64) -> Result<f64> {
    let opts = IntegrateOptions { local_tol: None, ..IntegrateOptions::default() };
    let run = |h: f64| -> Result<[f64; 2]> {
        let sol = integrate_with(alpha, beta, phi0, dphi0, s_max, h, &opts)?;
        if sol.truncated {
            return Err(GeomError::Domain("trajectory reached the guard band".into()));
        }
        let p = sol.samples.last().unwrap();
        Ok([p.phi, p.dphi])
    };
    let reference = run(h0 / 4.0)?;
    let err = |y: [f64; 2]| (y[0] - reference[0]).abs().max((y[1] - reference[1]).abs());
    let e1 = err(run(h0)?);
    let e2 = err(run(h0 / 2.0)?);
    Ok((e1 / e2).log2())
}
