//! The three built-in branching-diffusion models.
//!
//! - [`Model::inward_ou_quadratic`]: inward OU motion with breeding rate
//!   `b x^2 + beta0`; everything closed-form provided the drift dominates
//!   the breeding (`mu > sigma * sqrt(2 b)`). Supports general dimension.
//! - [`Model::outward_ou_constant`]: outward OU motion with constant
//!   breeding `b`; `lambda_c = b - mu` may have either sign, separating
//!   local exponential growth from local extinction. 1-D only.
//! - [`Model::compact_beta_bbm`]: Brownian motion with an indicator
//!   breeding rate `M 1_{[-b, b]}`; `lambda_c` solves a transcendental
//!   matching equation and the eigenfunction is a cosine/exponential
//!   splice with a continuous derivative.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{DiffusionField, DomainSpec, DriftField, EigenTriple, Model, OuLaw};
use crate::{Error, Result};

/// Free parameters of the spread/mixing envelope functions. The containment
/// and mixing conditions hold for *any* positive choice; these defaults keep
/// the envelopes tight. Finite-time statistical checks may need looser
/// (larger) values to meet their thresholds at small horizons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    /// The epsilon in the mixing-time functions.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// The delta in the outward-OU spread bound.
    #[serde(default = "default_eps")]
    pub delta: f64,
    /// Spread-bound rate as a multiple of `lambda_c` (inward-OU model).
    #[serde(default = "default_lambda_factor")]
    pub lambda_factor: f64,
}

fn default_eps() -> f64 {
    0.1
}

fn default_lambda_factor() -> f64 {
    1.1
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self {
            eps: 0.1,
            delta: 0.1,
            lambda_factor: 1.1,
        }
    }
}

/// Serializable description of a built-in model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    InwardOuQuadratic {
        sigma: f64,
        mu: f64,
        b_quad: f64,
        beta0: f64,
        dim: usize,
    },
    OutwardOuConstant {
        sigma: f64,
        mu: f64,
        b_const: f64,
        dim: usize,
    },
    CompactBetaBbm { big_m: f64, half_width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default)]
    pub envelope: EnvelopeParams,
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        match self.kind {
            ModelKind::InwardOuQuadratic {
                sigma,
                mu,
                b_quad,
                beta0,
                dim,
            } => inward_ou_quadratic(sigma, mu, b_quad, beta0, dim, self.envelope),
            ModelKind::OutwardOuConstant {
                sigma,
                mu,
                b_const,
                dim,
            } => outward_ou_constant(sigma, mu, b_const, dim, self.envelope),
            ModelKind::CompactBetaBbm { big_m, half_width } => {
                compact_beta_bbm(big_m, half_width, self.envelope)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::InwardOuQuadratic { .. } => "inward-ou-quadratic",
            ModelKind::OutwardOuConstant { .. } => "outward-ou-constant",
            ModelKind::CompactBetaBbm { .. } => "compact-beta-bbm",
        }
    }
}

impl Model {
    /// Inward OU motion (`1/2 sigma^2 Lap - mu x . grad`) with quadratic
    /// breeding `b_quad |x|^2 + beta0`. Requires `mu > sigma sqrt(2 b_quad)`;
    /// a weaker drift cannot balance the quadratic breeding and leaves the
    /// regime where the eigen-structure below applies. `b_quad = 0`
    /// degenerates to constant breeding with a constant `phi`.
    pub fn inward_ou_quadratic(
        sigma: f64,
        mu: f64,
        b_quad: f64,
        beta0: f64,
        dim: usize,
    ) -> Result<Model> {
        inward_ou_quadratic(sigma, mu, b_quad, beta0, dim, EnvelopeParams::default())
    }

    /// Outward OU motion (`1/2 sigma^2 Lap + mu x . grad`) with constant
    /// breeding `b_const`. `lambda_c = b_const - mu`; both signs are
    /// accepted, negative values flag the local-extinction regime. 1-D only.
    pub fn outward_ou_constant(sigma: f64, mu: f64, b_const: f64, dim: usize) -> Result<Model> {
        outward_ou_constant(sigma, mu, b_const, dim, EnvelopeParams::default())
    }

    /// Brownian motion with breeding `big_m` on `[-half_width, half_width]`
    /// and zero outside. 1-D.
    pub fn compact_beta_bbm(big_m: f64, half_width: f64) -> Result<Model> {
        compact_beta_bbm(big_m, half_width, EnvelopeParams::default())
    }
}

fn inward_ou_quadratic(
    sigma: f64,
    mu: f64,
    b_quad: f64,
    beta0: f64,
    dim: usize,
    env: EnvelopeParams,
) -> Result<Model> {
    if sigma <= 0.0 || mu <= 0.0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "sigma, mu must be positive and dim >= 1".into(),
        ));
    }
    if b_quad < 0.0 || beta0 < 0.0 || (b_quad == 0.0 && beta0 == 0.0) {
        return Err(Error::InvalidParameter(
            "breeding rate must be nonnegative and not identically zero".into(),
        ));
    }
    if mu <= sigma * (2.0 * b_quad).sqrt() {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} must exceed sigma * sqrt(2 b_quad) = {}: weaker drift cannot \
             balance quadratic breeding",
            sigma * (2.0 * b_quad).sqrt()
        )));
    }
    let sigma2 = sigma * sigma;
    let alpha = (mu * mu - 2.0 * b_quad * sigma2).sqrt();
    let gamma_minus = (mu - alpha) / (2.0 * sigma2);
    let gamma_plus = (mu + alpha) / (2.0 * sigma2);
    let d = dim as f64;
    // lambda_c = d sigma^2 gamma_minus + beta0: the d = 1 case is the usual
    // printed value; the factor d keeps (L + beta - lambda_c) phi = 0 exact
    // in every dimension.
    let lambda_c = d * sigma2 * gamma_minus + beta0;
    let c_minus = (1.0 - 2.0 * b_quad * sigma2 / (mu * mu)).powf(d / 8.0);
    let c_plus = c_minus * (mu / (std::f64::consts::PI * sigma2)).powf(d / 2.0);

    let phi: crate::model::ScalarField =
        Arc::new(move |x: &[f64]| c_minus * (gamma_minus * norm_sq(x)).exp());
    let phi_tilde: crate::model::ScalarField =
        Arc::new(move |x: &[f64]| c_plus * (-gamma_plus * norm_sq(x)).exp());
    let breeding: crate::model::ScalarField =
        Arc::new(move |x: &[f64]| b_quad * norm_sq(x) + beta0);

    let lam = env.lambda_factor * lambda_c;
    let mix_scale = (1.0 + env.eps) * sigma2 / alpha;

    Ok(Model {
        dim,
        drift: DriftField::Linear { rate: -mu },
        diffusion: DiffusionField::Scalar(sigma2),
        breeding,
        domain: DomainSpec::FullSpace,
        eigen: EigenTriple {
            lambda_c,
            phi,
            phi_tilde,
            spine_drift: DriftField::Linear { rate: -alpha },
            spine_ou: Some(OuLaw {
                rate: alpha,
                sigma2,
            }),
        },
        spread_bound: Arc::new(move |t: f64| (lam * t / gamma_plus).max(0.0).sqrt()),
        mixing_time: Arc::new(move |s: f64| (mix_scale * s.ln()).max(0.0)),
        beta_bounded: b_quad == 0.0,
        p_critical_sup: if gamma_minus > 0.0 {
            gamma_plus / gamma_minus
        } else {
            f64::INFINITY
        },
        local_extinction_expected: lambda_c <= 0.0,
        spec: Some(ModelSpec {
            kind: ModelKind::InwardOuQuadratic {
                sigma,
                mu,
                b_quad,
                beta0,
                dim,
            },
            envelope: env,
        }),
    })
}

fn outward_ou_constant(
    sigma: f64,
    mu: f64,
    b_const: f64,
    dim: usize,
    env: EnvelopeParams,
) -> Result<Model> {
    if dim != 1 {
        return Err(Error::InvalidParameter(
            "outward-OU model: the printed eigenvalue is confirmed for dim = 1 only".into(),
        ));
    }
    if sigma <= 0.0 || mu <= 0.0 || b_const <= 0.0 {
        return Err(Error::InvalidParameter(
            "sigma, mu, b_const must be positive".into(),
        ));
    }
    let sigma2 = sigma * sigma;
    let lambda_c = b_const - mu;
    let k = mu / sigma2;
    // <phi, 1> = 1 fixes the constant
    let c = (mu / (std::f64::consts::PI * sigma2)).sqrt();

    let phi: crate::model::ScalarField = Arc::new(move |x: &[f64]| c * (-k * norm_sq(x)).exp());
    let phi_tilde: crate::model::ScalarField = Arc::new(|_: &[f64]| 1.0);
    let breeding: crate::model::ScalarField = Arc::new(move |_: &[f64]| b_const);

    let spread_rate = (1.0 + env.delta) * mu / sigma2;
    let mix_scale = (1.0 + env.eps) * sigma2 / mu;

    Ok(Model {
        dim,
        drift: DriftField::Linear { rate: mu },
        diffusion: DiffusionField::Scalar(sigma2),
        breeding,
        domain: DomainSpec::FullSpace,
        eigen: EigenTriple {
            lambda_c,
            phi,
            phi_tilde,
            spine_drift: DriftField::Linear { rate: -mu },
            spine_ou: Some(OuLaw { rate: mu, sigma2 }),
        },
        spread_bound: Arc::new(move |t: f64| (spread_rate * t).exp()),
        mixing_time: Arc::new(move |s: f64| (mix_scale * s.ln()).max(0.0)),
        beta_bounded: true,
        p_critical_sup: f64::INFINITY,
        local_extinction_expected: lambda_c <= 0.0,
        spec: Some(ModelSpec {
            kind: ModelKind::OutwardOuConstant {
                sigma,
                mu,
                b_const,
                dim,
            },
            envelope: env,
        }),
    })
}

fn compact_beta_bbm(big_m: f64, half_width: f64, env: EnvelopeParams) -> Result<Model> {
    if big_m <= 0.0 || half_width <= 0.0 {
        return Err(Error::InvalidParameter(
            "big_m and half_width must be positive".into(),
        ));
    }
    let lambda_c = solve_lambda_c_compact(big_m, half_width, 1e-12)?;
    let k = (2.0 * (big_m - lambda_c)).sqrt();
    let kappa = (2.0 * lambda_c).sqrt();
    let b = half_width;
    let edge = (k * b).cos();

    // un-normalized eigenfunction: cos(k x) inside, matched exponential tails
    let psi = move |x: f64| -> f64 {
        let r = x.abs();
        if r <= b {
            (k * r).cos()
        } else {
            edge * (-kappa * (r - b)).exp()
        }
    };
    // <psi, psi> in closed form
    let psi_sq = b + (2.0 * k * b).sin() / (2.0 * k) + edge * edge / kappa;

    let phi: crate::model::ScalarField = Arc::new(move |x: &[f64]| psi(x[0]));
    let phi_tilde: crate::model::ScalarField = Arc::new(move |x: &[f64]| psi(x[0]) / psi_sq);
    let breeding: crate::model::ScalarField =
        Arc::new(move |x: &[f64]| if x[0].abs() <= b { big_m } else { 0.0 });

    let spine_drift = DriftField::General(Arc::new(move |x: &[f64], out: &mut [f64]| {
        let r = x[0];
        out[0] = if r.abs() < b {
            -k * (k * r).tan()
        } else {
            -r.signum() * kappa
        };
    }));

    let spread_rate = (2.0 * big_m).sqrt();
    let mix_scale = (1.0 + 2.0 * env.eps) / kappa;

    Ok(Model {
        dim: 1,
        drift: DriftField::Linear { rate: 0.0 },
        diffusion: DiffusionField::Scalar(1.0),
        breeding,
        domain: DomainSpec::FullSpace,
        eigen: EigenTriple {
            lambda_c,
            phi,
            phi_tilde,
            spine_drift,
            spine_ou: None,
        },
        spread_bound: Arc::new(move |t: f64| spread_rate * t),
        mixing_time: Arc::new(move |s: f64| mix_scale * s.max(0.0)),
        beta_bounded: true,
        p_critical_sup: f64::INFINITY,
        local_extinction_expected: false,
        spec: Some(ModelSpec {
            kind: ModelKind::CompactBetaBbm { big_m, half_width },
            envelope: env,
        }),
    })
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Principal eigenvalue of `1/2 d^2/dx^2 + M 1_{[-b,b]}` on R: the unique
/// root in `(0, M)` of the even-mode matching equation
/// `sqrt(M - l) tan(sqrt(2 (M - l)) b) = sqrt(l)`.
///
/// The ground state has no node, which pins `sqrt(2 (M - l)) b < pi / 2`
/// and makes the matching function strictly decreasing on the bracket; the
/// root is found by bisection down to an interval of width `tol`.
pub fn solve_lambda_c_compact(big_m: f64, half_width: f64, tol: f64) -> Result<f64> {
    if big_m <= 0.0 || half_width <= 0.0 || tol <= 0.0 {
        return Err(Error::InvalidParameter(
            "big_m, half_width, tol must be positive".into(),
        ));
    }
    let matching = |l: f64| -> f64 {
        let k = (2.0 * (big_m - l)).sqrt();
        (big_m - l).sqrt() * (k * half_width).tan() - l.sqrt()
    };
    // restrict to the nodeless branch k b < pi/2
    let pi = std::f64::consts::PI;
    let floor = (big_m - pi * pi / (8.0 * half_width * half_width)).max(0.0);
    let mut lo = floor + 1e-13 * big_m.max(1.0);
    let mut hi = big_m * (1.0 - 1e-13);
    let f_lo = matching(lo);
    let f_hi = matching(hi);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoEigenvalueBracket { sup_beta: big_m });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if matching(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
