//! Lamé system and Guichard condition for solutions (l1, l2, l3) that depend
//! on one linear combination ξ = a·x of the coordinates, and the
//! curvature-line forms of the associated flat surfaces in S^3.
//!
//! Residual order, with (i,j,k) a permutation of (1,2,3):
//!   0..3  l_{i,jk} − l_{i,j} l_{j,k}/l_j − l_{i,k} l_{k,j}/l_k   for i = 1, 2, 3
//!   3..6  (l_{i,j}/l_j)_{,j} + (l_{j,i}/l_i)_{,i} + l_{i,k} l_{j,k}/l_k²
//!         for {i,j} = {1,2}, {1,3}, {2,3}
//! The first expression is symmetric in (j,k) and the second in (i,j), so
//! these six cover every ordered triple of distinct indices.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector3};

use crate::error::{GeomError, Result};
use crate::forms::{FormCoefficients, FormSource, LinearChange, IMMERSION_TOL};

/// Values and ξ-derivatives (f, f', f'').
pub type Jet1 = [f64; 3];

pub type PhiFn = dyn Fn(f64) -> Jet1 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LameFamily {
    A,
    B1,
    B2,
    C,
}

impl fmt::Display for LameFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LameFamily::A => "a",
            LameFamily::B1 => "b1",
            LameFamily::B2 => "b2",
            LameFamily::C => "c",
        })
    }
}

/// l and its partials in x1, x2, x3 at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LameJet {
    pub l: [f64; 3],
    /// d1[i][j] = ∂l_i/∂x_j.
    pub d1: [[f64; 3]; 3],
    /// d2[i][j][k] = ∂²l_i/∂x_j∂x_k.
    pub d2: [[[f64; 3]; 3]; 3],
}

/// Multiplies l3 by g(x) = scale + slope·x. A pure rescaling keeps the
/// Lamé system (it is invariant under l_i ↦ c_i l_i) and breaks only the
/// Guichard condition; a nonzero slope breaks the system itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub scale: f64,
    pub slope: [f64; 3],
}

#[derive(Clone)]
pub struct LameSolution {
    pub family: LameFamily,
    /// λ1, λ2 or λ3 depending on the family.
    pub lambda: f64,
    pub b: f64,
    pub xi0: f64,
    /// ξ = dir·x; the entry of the absent coordinate is zero.
    pub dir: [f64; 3],
    phi: Option<Arc<PhiFn>>,
    pub phi_name: Option<String>,
    pub perturbation: Option<Perturbation>,
}

impl fmt::Debug for LameSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LameSolution")
            .field("family", &self.family)
            .field("lambda", &self.lambda)
            .field("b", &self.b)
            .field("xi0", &self.xi0)
            .field("dir", &self.dir)
            .field("phi", &self.phi_name)
            .field("perturbation", &self.perturbation)
            .finish()
    }
}

fn nonzero_pair(x: f64, y: f64) -> Result<()> {
    if x * x + y * y == 0.0 {
        return Err(GeomError::Precondition("direction coefficients must not both vanish".into()));
    }
    Ok(())
}

impl LameSolution {
    fn plain(family: LameFamily, lambda: f64, b: f64, xi0: f64, dir: [f64; 3]) -> Self {
        LameSolution { family, lambda, b, xi0, dir, phi: None, phi_name: None, perturbation: None }
    }

    /// l1 = λ1, l2 = λ1 cosh(bξ+ξ0), l3 = λ1 sinh(bξ+ξ0), ξ = α2 x2 + α3 x3.
    pub fn family_a(lambda1: f64, b: f64, xi0: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        nonzero_pair(alpha2, alpha3)?;
        Ok(Self::plain(LameFamily::A, lambda1, b, xi0, [0.0, alpha2, alpha3]))
    }

    /// l2 = λ2, l1 = λ2 cos(bξ+ξ0), l3 = λ2 sin(bξ+ξ0), ξ = α1 x1 + α3 x3,
    /// α1² ≠ α3².
    pub fn family_b1(lambda2: f64, b: f64, xi0: f64, alpha1: f64, alpha3: f64) -> Result<Self> {
        nonzero_pair(alpha1, alpha3)?;
        if alpha1 * alpha1 == alpha3 * alpha3 {
            return Err(GeomError::Precondition("family b1 needs alpha1^2 != alpha3^2".into()));
        }
        Ok(Self::plain(LameFamily::B1, lambda2, b, xi0, [alpha1, 0.0, alpha3]))
    }

    /// l2 = λ2, l1 = λ2 cos φ(ξ), l3 = λ2 sin φ(ξ) for any φ, α1² = α3².
    pub fn family_b2(lambda2: f64, alpha1: f64, alpha3: f64, name: &str, phi: impl Fn(f64) -> Jet1 + Send + Sync + 'static) -> Result<Self> {
        nonzero_pair(alpha1, alpha3)?;
        if (alpha1 * alpha1 - alpha3 * alpha3).abs() > 1e-15 {
            return Err(GeomError::Precondition("family b2 needs alpha1^2 = alpha3^2".into()));
        }
        let mut s = Self::plain(LameFamily::B2, lambda2, 0.0, 0.0, [alpha1, 0.0, alpha3]);
        s.phi = Some(Arc::new(phi));
        s.phi_name = Some(name.into());
        Ok(s)
    }

    /// l3 = λ3, l2 = λ3 cosh(bξ+ξ0), l1 = λ3 sinh(bξ+ξ0), ξ = α1 x1 + α2 x2.
    pub fn family_c(lambda3: f64, b: f64, xi0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        nonzero_pair(alpha1, alpha2)?;
        Ok(Self::plain(LameFamily::C, lambda3, b, xi0, [alpha1, alpha2, 0.0]))
    }

    pub fn perturbed(mut self, p: Perturbation) -> Self {
        self.perturbation = Some(p);
        self
    }

    /// (L1, L2, L3) as jets in ξ.
    fn profile(&self, xi: f64) -> [Jet1; 3] {
        let (lam, b) = (self.lambda, self.b);
        let arg = b * xi + self.xi0;
        let constant = [lam, 0.0, 0.0];
        let (ch, sh) = (arg.cosh(), arg.sinh());
        let cosh = [lam * ch, lam * b * sh, lam * b * b * ch];
        let sinh = [lam * sh, lam * b * ch, lam * b * b * sh];
        match self.family {
            LameFamily::A => [constant, cosh, sinh],
            LameFamily::C => [sinh, cosh, constant],
            LameFamily::B1 | LameFamily::B2 => {
                let [p, dp, ddp] = match &self.phi {
                    Some(f) => f(xi),
                    None => [arg, b, 0.0],
                };
                let (c, s) = (p.cos(), p.sin());
                let cos = [lam * c, -lam * s * dp, -lam * (c * dp * dp + s * ddp)];
                let sin = [lam * s, lam * c * dp, lam * (c * ddp - s * dp * dp)];
                [cos, constant, sin]
            }
        }
    }

    pub fn jet(&self, x: &Vector3<f64>) -> LameJet {
        let a = self.dir;
        let xi = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
        let prof = self.profile(xi);
        let mut out = LameJet { l: [0.0; 3], d1: [[0.0; 3]; 3], d2: [[[0.0; 3]; 3]; 3] };
        for i in 0..3 {
            out.l[i] = prof[i][0];
            for j in 0..3 {
                out.d1[i][j] = prof[i][1] * a[j];
                for k in 0..3 {
                    out.d2[i][j][k] = prof[i][2] * a[j] * a[k];
                }
            }
        }
        if let Some(p) = self.perturbation {
            let g = p.scale + p.slope[0] * x[0] + p.slope[1] * x[1] + p.slope[2] * x[2];
            let (l, d1, d2) = (out.l[2], out.d1[2], out.d2[2]);
            out.l[2] = l * g;
            for j in 0..3 {
                out.d1[2][j] = d1[j] * g + l * p.slope[j];
                for k in 0..3 {
                    out.d2[2][j][k] = d2[j][k] * g + d1[j] * p.slope[k] + d1[k] * p.slope[j];
                }
            }
        }
        out
    }

    pub fn values(&self, x: &Vector3<f64>) -> [f64; 3] {
        self.jet(x).l
    }
}

/// Threshold below which a component counts as vanishing.
pub const COMPONENT_TOL: f64 = 1e-12;

pub fn lame_residuals(sol: &LameSolution, x: &Vector3<f64>) -> Result<[f64; 6]> {
    let LameJet { l, d1, d2 } = sol.jet(x);
    if let Some(index) = (0..3).find(|&i| l[i].abs() < COMPONENT_TOL) {
        return Err(GeomError::DivisionByZeroComponent { index: index + 1 });
    }
    let mut r = [0.0; 6];
    for (i, j, k) in [(0, 1, 2), (1, 0, 2), (2, 0, 1)] {
        r[i] = d2[i][j][k] - d1[i][j] * d1[j][k] / l[j] - d1[i][k] * d1[k][j] / l[k];
    }
    // (l_{i,j}/l_j)_{,j} = l_{i,jj}/l_j − l_{i,j} l_{j,j}/l_j²
    let quot = |i: usize, j: usize| d2[i][j][j] / l[j] - d1[i][j] * d1[j][j] / (l[j] * l[j]);
    for (slot, (i, j, k)) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)].into_iter().enumerate() {
        r[3 + slot] = quot(i, j) + quot(j, i) + d1[i][k] * d1[j][k] / (l[k] * l[k]);
    }
    Ok(r)
}

/// l1² − l2² + l3².
pub fn guichard_residual(sol: &LameSolution, x: &Vector3<f64>) -> f64 {
    let [l1, l2, l3] = sol.values(x);
    l1 * l1 - l2 * l2 + l3 * l3
}

/// Largest |residual| over the Lamé system and the Guichard condition.
pub fn system_residual(sol: &LameSolution, x: &Vector3<f64>) -> Result<f64> {
    let r = lame_residuals(sol, x)?;
    Ok(r.iter().fold(guichard_residual(sol, x).abs(), |m, v| m.max(v.abs())))
}

/// Sample φ evaluators for family b2.
pub fn sample_phis() -> Vec<(&'static str, Arc<PhiFn>)> {
    vec![
        ("xi^2", Arc::new(|x: f64| [x * x, 2.0 * x, 2.0])),
        ("sin(xi)+xi/3", Arc::new(|x: f64| [x.sin() + x / 3.0, x.cos() + 1.0 / 3.0, -x.sin()])),
        ("exp(xi/2)", Arc::new(|x: f64| {
            let e = (0.5 * x).exp();
            [e, 0.5 * e, 0.25 * e]
        })),
    ]
}

/// Forms of the flat surface in S^3 in curvature-line coordinates:
/// I = sin²θ dx1² + cos²θ dx3², II = sinθ cosθ (dx1² − dx3²), θ = α1x1 + α3x3 + ξ0.
/// `k_ext` is `None` where the first form degenerates.
pub fn curvature_line_forms(xi0: f64, alpha1: f64, alpha3: f64, x1: f64, x3: f64) -> FormCoefficients {
    let th = alpha1 * x1 + alpha3 * x3 + xi0;
    let (s, c) = th.sin_cos();
    let mut f = FormCoefficients::new(s * s, 0.0, c * c, s * c, 0.0, -s * c);
    if f.det < IMMERSION_TOL {
        f.k_ext = None;
    }
    f
}

/// The curvature-line forms as a form source in (x1, x3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureLineForms {
    pub alpha1: f64,
    pub alpha3: f64,
    pub xi0: f64,
}

impl FormSource for CurvatureLineForms {
    fn forms(&self, x1: f64, x3: f64) -> Result<FormCoefficients> {
        let f = curvature_line_forms(self.xi0, self.alpha1, self.alpha3, x1, x3);
        if f.det < 1e-20 {
            return Err(GeomError::DegenerateImmersion { u: x1, v: x3 });
        }
        Ok(f)
    }
}

/// x1 = u + v, x3 = u − v.
pub fn asymptotic_change() -> Matrix2<f64> {
    Matrix2::new(1.0, 1.0, 1.0, -1.0)
}

/// The curvature-line forms read in asymptotic coordinates (u, v).
pub fn asymptotic_forms(alpha1: f64, alpha3: f64, xi0: f64) -> LinearChange<CurvatureLineForms> {
    LinearChange { inner: CurvatureLineForms { alpha1, alpha3, xi0 }, m: asymptotic_change() }
}

/// Coefficients of ω(u,v) = π − 2θ = λ1 u + λ2 v + λ3 after x1 = u+v, x3 = u−v.
pub fn asymptotic_from_curvature_line(alpha1: f64, alpha3: f64, xi0: f64) -> (f64, f64, f64) {
    (-2.0 * (alpha1 + alpha3), -2.0 * (alpha1 - alpha3), PI - 2.0 * xi0)
}
