//! Symbolic P&L laws: a base family plus a chain of transforms.
//!
//! Sign convention: every law describes a P&L, so the loss tail is the lower
//! tail and `true_var(alpha) = -quantile(alpha)`. The GPD family is the
//! exception-free case of this convention: `Gpd { u, xi, beta }` is the P&L
//! `X = u - Y` where `Y` is a GPD excess with shape `xi` and scale `beta`, so
//! losses beyond the threshold follow the generalized Pareto tail.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Exp1, Gamma, Normal, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

use crate::error::{check_probability, invalid, Error, Result};
use crate::rng::RngStream;

/// Draw count behind the numeric quantile/ES path for non-stable convolutions.
pub const EMPIRICAL_DRAWS: usize = 1_000_000;

const SAMPLE_CHUNK: usize = 8192;

/// Base family of a P&L law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Normal { mu: f64, sigma: f64 },
    StudentT { nu: f64 },
    Laplace { scale: f64 },
    Cauchy { location: f64, scale: f64 },
    /// Density proportional to `exp(-|x|^beta)`.
    GeneralizedNormal { beta: f64 },
    Gpd { u: f64, xi: f64, beta: f64 },
}

/// Transform applied on top of the law built so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Sum of `k` independent copies.
    Convolution(u32),
    Scale(f64),
    Shift(f64),
}

/// An immutable, validated description of a P&L law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DistributionSpec {
    family: Family,
    transforms: Vec<Transform>,
}

impl Family {
    fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite, got {v}")))
            }
        };
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be a positive real, got {v}")))
            }
        };
        match *self {
            Family::Normal { mu, sigma } => {
                finite(mu, "normal mu")?;
                positive(sigma, "normal sigma")
            }
            Family::StudentT { nu } => {
                if nu.is_finite() && nu > 2.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("student-t nu must exceed 2, got {nu}")))
                }
            }
            Family::Laplace { scale } => positive(scale, "laplace scale"),
            Family::Cauchy { location, scale } => {
                finite(location, "cauchy location")?;
                positive(scale, "cauchy scale")
            }
            Family::GeneralizedNormal { beta } => positive(beta, "generalized normal beta"),
            Family::Gpd { u, xi, beta } => {
                finite(u, "gpd u")?;
                positive(beta, "gpd beta")?;
                if xi.is_finite() && xi < 1.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("gpd xi must be below 1, got {xi}")))
                }
            }
        }
    }

    fn mean(&self) -> Result<f64> {
        Ok(match *self {
            Family::Normal { mu, .. } => mu,
            Family::StudentT { .. } | Family::Laplace { .. } | Family::GeneralizedNormal { .. } => 0.0,
            Family::Cauchy { .. } => return Err(Error::InfiniteMean("cauchy".into())),
            Family::Gpd { u, xi, beta } => u - beta / (1.0 - xi),
        })
    }

    fn variance(&self) -> Result<f64> {
        Ok(match *self {
            Family::Normal { sigma, .. } => sigma * sigma,
            Family::StudentT { nu } => nu / (nu - 2.0),
            Family::Laplace { scale } => 2.0 * scale * scale,
            Family::Cauchy { .. } => return Err(Error::InfiniteVariance("cauchy".into())),
            Family::GeneralizedNormal { beta } => gamma(3.0 / beta) / gamma(1.0 / beta),
            Family::Gpd { xi, beta, .. } => {
                if xi >= 0.5 {
                    return Err(Error::InfiniteVariance(format!("gpd with xi = {xi}")));
                }
                beta * beta / ((1.0 - xi).powi(2) * (1.0 - 2.0 * xi))
            }
        })
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mu, sigma } => std_normal().cdf((x - mu) / sigma),
            Family::StudentT { nu } => student_t(nu).cdf(x),
            Family::Laplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            Family::Cauchy { location, scale } => 0.5 + ((x - location) / scale).atan() / PI,
            Family::GeneralizedNormal { beta } => {
                let y = x.abs().powf(beta);
                if y == 0.0 {
                    return 0.5;
                }
                // Half the two-sided mass beyond |x|, from whichever incomplete
                // gamma ratio is accurate at this y.
                let a = 1.0 / beta;
                let half_tail = if y < 1e-8 {
                    // statrs flushes P(a, y) to zero for tiny y; leading series terms
                    0.5 - 0.5 * y.powf(a) / gamma(a + 1.0) * (1.0 - a * y / (a + 1.0))
                } else if y < 1.0 {
                    0.5 - 0.5 * gamma_lr(a, y)
                } else {
                    0.5 * gamma_ur(a, y)
                };
                if x < 0.0 {
                    half_tail
                } else {
                    1.0 - half_tail
                }
            }
            Family::Gpd { u, xi, beta } => {
                if x >= u {
                    return 1.0;
                }
                let z = xi * (u - x) / beta;
                if xi == 0.0 {
                    (-(u - x) / beta).exp()
                } else if z <= -1.0 {
                    0.0
                } else {
                    (-z.ln_1p() / xi).exp()
                }
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match *self {
            Family::Normal { mu, sigma } => mu + sigma * std_normal().inverse_cdf(p),
            Family::StudentT { nu } => student_t(nu).inverse_cdf(p),
            Family::Laplace { scale } => {
                if p < 0.5 {
                    scale * (2.0 * p).ln()
                } else {
                    -scale * (2.0 * (1.0 - p)).ln()
                }
            }
            Family::Cauchy { location, scale } => location + scale * (PI * (p - 0.5)).tan(),
            Family::GeneralizedNormal { .. } => invert_cdf(|x| self.cdf(x), p),
            Family::Gpd { u, xi, beta } => u - gpd_excess_upper_quantile(xi, beta, p),
        }
    }

    /// Expected shortfall at level `alpha` in closed form where one exists,
    /// otherwise by double-exponential quadrature of the quantile function.
    fn expected_shortfall(&self, alpha: f64) -> Result<f64> {
        match *self {
            Family::Normal { mu, sigma } => {
                let n = std_normal();
                Ok(-mu + sigma * n.pdf(n.inverse_cdf(alpha)) / alpha)
            }
            Family::StudentT { nu } => {
                let t = student_t(nu);
                let q = t.inverse_cdf(alpha);
                Ok((nu + q * q) / (nu - 1.0) * t.pdf(q) / alpha)
            }
            Family::Laplace { scale } if alpha <= 0.5 => Ok(scale * (1.0 - (2.0 * alpha).ln())),
            Family::Cauchy { .. } => Err(Error::InfiniteMean("cauchy".into())),
            Family::Gpd { u, xi, beta } => {
                let var_excess = gpd_excess_upper_quantile(xi, beta, alpha);
                Ok(-u + (var_excess + beta) / (1.0 - xi))
            }
            _ => Ok(es_by_quadrature(|p| self.quantile(p), alpha)),
        }
    }
}

/// `-(1/alpha) * integral_0^alpha q(u) du`.
pub(crate) fn es_by_quadrature(q: impl Fn(f64) -> f64, alpha: f64) -> f64 {
    let out = quadrature::double_exponential::integrate(q, 0.0, alpha, 1e-10 * alpha);
    -out.integral / alpha
}

/// Upper `p`-quantile of a GPD excess: `beta/xi * (p^-xi - 1)`.
fn gpd_excess_upper_quantile(xi: f64, beta: f64, p: f64) -> f64 {
    let lp = p.ln();
    if xi.abs() < 1e-12 {
        -beta * lp
    } else {
        beta * (-xi * lp).exp_m1() / xi
    }
}

fn std_normal() -> statrs::distribution::Normal {
    statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal")
}

fn student_t(nu: f64) -> statrs::distribution::StudentsT {
    statrs::distribution::StudentsT::new(0.0, 1.0, nu).expect("validated degrees of freedom")
}

/// Inverts a continuous increasing CDF by bracketing and bisection down to
/// floating-point resolution.
fn invert_cdf(cdf: impl Fn(f64) -> f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while cdf(lo) > p {
        lo *= 2.0;
    }
    while cdf(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `X = scale * B + shift` for a base law `B`.
struct Affine {
    base: Family,
    scale: f64,
    shift: f64,
}

impl DistributionSpec {
    pub fn new(family: Family) -> Result<Self> {
        family.validate()?;
        Ok(Self {
            family,
            transforms: Vec::new(),
        })
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Normal { mu, sigma })
    }

    pub fn standard_normal() -> Self {
        Self::normal(0.0, 1.0).expect("valid")
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        Self::new(Family::StudentT { nu })
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        Self::new(Family::Laplace { scale })
    }

    pub fn cauchy(location: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Cauchy { location, scale })
    }

    pub fn generalized_normal(beta: f64) -> Result<Self> {
        Self::new(Family::GeneralizedNormal { beta })
    }

    pub fn gpd(u: f64, xi: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Gpd { u, xi, beta })
    }

    /// Appends a transform after validating its parameter.
    pub fn with(mut self, t: Transform) -> Result<Self> {
        match t {
            Transform::Convolution(0) => {
                return Err(invalid("convolution count must be a positive integer"))
            }
            Transform::Scale(a) if !(a.is_finite() && a > 0.0) => {
                return Err(invalid(format!("scale factor must be a positive real, got {a}")))
            }
            Transform::Shift(m) if !m.is_finite() => {
                return Err(invalid(format!("shift must be finite, got {m}")))
            }
            _ => {}
        }
        self.transforms.push(t);
        Ok(self)
    }

    pub fn convolved(self, k: u32) -> Result<Self> {
        self.with(Transform::Convolution(k))
    }

    pub fn scaled(self, a: f64) -> Result<Self> {
        self.with(Transform::Scale(a))
    }

    pub fn shifted(self, m: f64) -> Result<Self> {
        self.with(Transform::Shift(m))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn is_cauchy(&self) -> bool {
        matches!(self.family, Family::Cauchy { .. })
    }

    pub fn mean(&self) -> Result<f64> {
        let mut m = self.family.mean()?;
        for t in &self.transforms {
            match *t {
                Transform::Convolution(k) => m *= f64::from(k),
                Transform::Scale(a) => m *= a,
                Transform::Shift(s) => m += s,
            }
        }
        Ok(m)
    }

    pub fn variance(&self) -> Result<f64> {
        let mut v = self.family.variance()?;
        for t in &self.transforms {
            match *t {
                Transform::Convolution(k) => v *= f64::from(k),
                Transform::Scale(a) => v *= a * a,
                Transform::Shift(_) => {}
            }
        }
        Ok(v)
    }

    fn affine(&self) -> Option<Affine> {
        let mut out = Affine {
            base: self.family,
            scale: 1.0,
            shift: 0.0,
        };
        for t in &self.transforms {
            match *t {
                Transform::Scale(a) => {
                    out.scale *= a;
                    out.shift *= a;
                }
                Transform::Shift(m) => out.shift += m,
                Transform::Convolution(1) => {}
                Transform::Convolution(k) => {
                    let kf = f64::from(k);
                    out.base = match out.base {
                        Family::Normal { mu, sigma } => Family::Normal {
                            mu: kf * mu,
                            sigma: kf.sqrt() * sigma,
                        },
                        Family::Cauchy { location, scale } => Family::Cauchy {
                            location: kf * location,
                            scale: kf * scale,
                        },
                        _ => return None,
                    };
                    out.shift *= kf;
                }
            }
        }
        Some(out)
    }

    fn empirical_law(&self) -> EmpiricalLaw {
        let seed = fnv1a(self.to_string().as_bytes());
        let mut draws = self
            .sample(&RngStream::new(seed, 0), EMPIRICAL_DRAWS)
            .expect("positive draw count");
        draws.sort_unstable_by(f64::total_cmp);
        EmpiricalLaw { sorted: draws }
    }

    /// Builds a reusable sampler for this law.
    pub fn sampler(&self) -> Sampler {
        let base = match self.family {
            Family::Normal { mu, sigma } => {
                BaseSampler::Normal(Normal::new(mu, sigma).expect("validated"))
            }
            Family::StudentT { nu } => BaseSampler::StudentT(StudentT::new(nu).expect("validated")),
            Family::Laplace { scale } => BaseSampler::Laplace(scale),
            Family::Cauchy { location, scale } => {
                BaseSampler::Cauchy(Cauchy::new(location, scale).expect("validated"))
            }
            Family::GeneralizedNormal { beta } => BaseSampler::GeneralizedNormal {
                gamma: Gamma::new(1.0 / beta, 1.0).expect("validated"),
                inv_beta: 1.0 / beta,
            },
            Family::Gpd { u, xi, beta } => BaseSampler::Gpd { u, xi, beta },
        };
        Sampler {
            base,
            transforms: self.transforms.clone(),
        }
    }

    /// `count` i.i.d. draws. Work is split into fixed chunks, each on its own
    /// substream of `stream`, so the output is independent of thread count.
    pub fn sample(&self, stream: &RngStream, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(invalid("sample count must be at least 1"));
        }
        let sampler = self.sampler();
        let chunks = count.div_ceil(SAMPLE_CHUNK);
        let parts: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
                let mut rng = stream.substream(c as u64).rng();
                (0..len).map(|_| sampler.draw(&mut rng)).collect()
            })
            .collect();
        Ok(parts.concat())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.affine() {
            Some(a) => a.base.cdf((x - a.shift) / a.scale),
            None => self.empirical_law().cdf(x),
        }
    }

    /// Inverse CDF. Analytic for every family except the generalized normal
    /// (numeric inversion of its incomplete-gamma CDF) and convolutions of
    /// non-stable families, which use the empirical quantile of
    /// [`EMPIRICAL_DRAWS`] draws with a seed pinned to the spec.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(match self.affine() {
            Some(a) => a.scale * a.base.quantile(p) + a.shift,
            None => self.empirical_law().quantile(p),
        })
    }

    pub fn true_var(&self, alpha: f64) -> Result<f64> {
        Ok(-self.quantile(alpha)?)
    }

    pub fn true_es(&self, alpha: f64) -> Result<f64> {
        check_probability(alpha)?;
        self.family.mean()?;
        match self.affine() {
            Some(a) => Ok(a.scale * a.base.expected_shortfall(alpha)? - a.shift),
            None => Ok(self.empirical_law().expected_shortfall(alpha)),
        }
    }

    /// Rescales the law to unit variance.
    pub fn standardize(&self) -> Result<Self> {
        let var = self.variance()?;
        if let (Family::Normal { mu, sigma }, true) = (self.family, self.transforms.is_empty()) {
            return Self::normal(mu / sigma, 1.0);
        }
        self.clone().scaled(1.0 / var.sqrt())
    }
}

struct EmpiricalLaw {
    sorted: Vec<f64>,
}

impl EmpiricalLaw {
    fn quantile(&self, p: f64) -> f64 {
        let m = self.sorted.len();
        let idx = ((p * m as f64).ceil() as usize).clamp(1, m) - 1;
        self.sorted[idx]
    }

    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    fn expected_shortfall(&self, alpha: f64) -> f64 {
        let k = ((alpha * self.sorted.len() as f64).floor() as usize).max(1);
        -self.sorted[..k].iter().sum::<f64>() / k as f64
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

enum BaseSampler {
    Normal(Normal<f64>),
    StudentT(StudentT<f64>),
    Laplace(f64),
    Cauchy(Cauchy<f64>),
    GeneralizedNormal { gamma: Gamma<f64>, inv_beta: f64 },
    Gpd { u: f64, xi: f64, beta: f64 },
}

/// Draws from a [`DistributionSpec`]; cheap to share across threads.
pub struct Sampler {
    base: BaseSampler,
    transforms: Vec<Transform>,
}

impl Sampler {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_depth(rng, self.transforms.len())
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out {
            *v = self.draw(rng);
        }
    }

    fn draw_depth<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize) -> f64 {
        if depth == 0 {
            return self.draw_base(rng);
        }
        match self.transforms[depth - 1] {
            Transform::Convolution(k) => (0..k).map(|_| self.draw_depth(rng, depth - 1)).sum(),
            Transform::Scale(a) => a * self.draw_depth(rng, depth - 1),
            Transform::Shift(m) => m + self.draw_depth(rng, depth - 1),
        }
    }

    #[inline]
    fn draw_base<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.base {
            BaseSampler::Normal(d) => d.sample(rng),
            BaseSampler::StudentT(d) => d.sample(rng),
            BaseSampler::Laplace(b) => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    b * e
                } else {
                    -b * e
                }
            }
            BaseSampler::Cauchy(d) => d.sample(rng),
            BaseSampler::GeneralizedNormal { gamma, inv_beta } => {
                let g = gamma.sample(rng).powf(*inv_beta);
                if rng.random::<bool>() {
                    g
                } else {
                    -g
                }
            }
            BaseSampler::Gpd { u, xi, beta } => {
                // 1 - U lies in (0, 1], keeping the log finite.
                let v: f64 = 1.0 - rng.random::<f64>();
                u - gpd_excess_upper_quantile(*xi, *beta, v)
            }
        }
    }
}

/// Standard normal draw helper used by callers that need raw variates.
pub fn standard_normal_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------------------
// Config representation: `family`, `params`, `transform`.

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FamilyName {
    Normal,
    #[serde(alias = "t")]
    StudentT,
    Laplace,
    Cauchy,
    #[serde(alias = "gn")]
    GeneralizedNormal,
    Gpd,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xi: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    family: FamilyName,
    #[serde(default)]
    params: RawParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    transform: Vec<Transform>,
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let p = raw.params;
        let allowed: &[&str] = match raw.family {
            FamilyName::Normal => &["mu", "sigma"],
            FamilyName::StudentT => &["nu"],
            FamilyName::Laplace => &["scale"],
            FamilyName::Cauchy => &["location", "scale"],
            FamilyName::GeneralizedNormal => &["beta"],
            FamilyName::Gpd => &["u", "xi", "beta"],
        };
        let present = [
            ("mu", p.mu),
            ("sigma", p.sigma),
            ("nu", p.nu),
            ("scale", p.scale),
            ("location", p.location),
            ("beta", p.beta),
            ("u", p.u),
            ("xi", p.xi),
        ];
        for (name, value) in present {
            if value.is_some() && !allowed.contains(&name) {
                return Err(Error::Config(format!(
                    "parameter `{name}` does not apply to family `{:?}`",
                    raw.family
                )));
            }
        }
        let required = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("missing distribution parameter `{name}`")))
        };
        let family = match raw.family {
            FamilyName::Normal => Family::Normal {
                mu: p.mu.unwrap_or(0.0),
                sigma: p.sigma.unwrap_or(1.0),
            },
            FamilyName::StudentT => Family::StudentT {
                nu: required(p.nu, "nu")?,
            },
            FamilyName::Laplace => Family::Laplace {
                scale: p.scale.unwrap_or(1.0),
            },
            FamilyName::Cauchy => Family::Cauchy {
                location: p.location.unwrap_or(0.0),
                scale: p.scale.unwrap_or(1.0),
            },
            FamilyName::GeneralizedNormal => Family::GeneralizedNormal {
                beta: required(p.beta, "beta")?,
            },
            FamilyName::Gpd => Family::Gpd {
                u: p.u.unwrap_or(0.0),
                xi: required(p.xi, "xi")?,
                beta: p.beta.unwrap_or(1.0),
            },
        };
        raw.transform
            .into_iter()
            .try_fold(Self::new(family)?, |spec, t| spec.with(t))
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(spec: DistributionSpec) -> Self {
        let mut params = RawParams::default();
        let family = match spec.family {
            Family::Normal { mu, sigma } => {
                params.mu = Some(mu);
                params.sigma = Some(sigma);
                FamilyName::Normal
            }
            Family::StudentT { nu } => {
                params.nu = Some(nu);
                FamilyName::StudentT
            }
            Family::Laplace { scale } => {
                params.scale = Some(scale);
                FamilyName::Laplace
            }
            Family::Cauchy { location, scale } => {
                params.location = Some(location);
                params.scale = Some(scale);
                FamilyName::Cauchy
            }
            Family::GeneralizedNormal { beta } => {
                params.beta = Some(beta);
                FamilyName::GeneralizedNormal
            }
            Family::Gpd { u, xi, beta } => {
                params.u = Some(u);
                params.xi = Some(xi);
                params.beta = Some(beta);
                FamilyName::Gpd
            }
        };
        RawDistribution {
            family,
            params,
            transform: spec.transforms,
        }
    }
}

// ---------------------------------------------------------------------------
// Compact text notation, e.g. `t(5)*conv(10)` or `gpd(0,0.25,1)*scale(2)`.

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::Normal { mu, sigma } => write!(f, "normal({mu},{sigma})"),
            Family::StudentT { nu } => write!(f, "t({nu})"),
            Family::Laplace { scale } => write!(f, "laplace({scale})"),
            Family::Cauchy { location, scale } => write!(f, "cauchy({location},{scale})"),
            Family::GeneralizedNormal { beta } => write!(f, "gn({beta})"),
            Family::Gpd { u, xi, beta } => write!(f, "gpd({u},{xi},{beta})"),
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        for t in &self.transforms {
            match t {
                Transform::Convolution(k) => write!(f, "*conv({k})")?,
                Transform::Scale(a) => write!(f, "*scale({a})")?,
                Transform::Shift(m) => write!(f, "*shift({m})")?,
            }
        }
        Ok(())
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('*').map(str::trim);
        let head = parts.next().unwrap_or_default();
        let (name, args) = split_call(head)?;
        let arg = |i: usize, default: Option<f64>| -> Result<f64> {
            args.get(i).copied().or(default).ok_or_else(|| {
                Error::Config(format!("`{head}`: missing argument {} for `{name}`", i + 1))
            })
        };
        let max_args = match name {
            "normal" | "cauchy" => 2,
            "t" | "student_t" | "laplace" | "gn" | "generalized_normal" => 1,
            "gpd" => 3,
            other => return Err(Error::Config(format!("unknown distribution family `{other}`"))),
        };
        if args.len() > max_args {
            return Err(Error::Config(format!("`{head}`: too many arguments")));
        }
        let family = match name {
            "normal" => Family::Normal {
                mu: arg(0, Some(0.0))?,
                sigma: arg(1, Some(1.0))?,
            },
            "t" | "student_t" => Family::StudentT { nu: arg(0, None)? },
            "laplace" => Family::Laplace {
                scale: arg(0, Some(1.0))?,
            },
            "cauchy" => Family::Cauchy {
                location: arg(0, Some(0.0))?,
                scale: arg(1, Some(1.0))?,
            },
            "gn" | "generalized_normal" => Family::GeneralizedNormal { beta: arg(0, None)? },
            _ => {
                // gpd(xi), gpd(xi,beta) or gpd(u,xi,beta)
                match args.len() {
                    1 => Family::Gpd { u: 0.0, xi: args[0], beta: 1.0 },
                    2 => Family::Gpd { u: 0.0, xi: args[0], beta: args[1] },
                    3 => Family::Gpd { u: args[0], xi: args[1], beta: args[2] },
                    _ => return Err(Error::Config(format!("`{head}`: gpd needs xi"))),
                }
            }
        };
        let mut spec = Self::new(family)?;
        for part in parts {
            let (tname, targs) = split_call(part)?;
            let v = match targs.as_slice() {
                [v] => *v,
                _ => return Err(Error::Config(format!("`{part}`: expected one argument"))),
            };
            let t = match tname {
                "conv" | "convolution" => {
                    if v.fract() != 0.0 || v < 1.0 || v > f64::from(u32::MAX) {
                        return Err(Error::Config(format!("`{part}`: k must be a positive integer")));
                    }
                    Transform::Convolution(v as u32)
                }
                "scale" => Transform::Scale(v),
                "shift" => Transform::Shift(v),
                other => return Err(Error::Config(format!("unknown transform `{other}`"))),
            };
            spec = spec.with(t)?;
        }
        Ok(spec)
    }
}

fn split_call(s: &str) -> Result<(&str, Vec<f64>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s, Vec::new()));
    };
    let inner = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::Config(format!("`{s}`: missing closing parenthesis")))?;
    let args = inner
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| {
            a.parse::<f64>()
                .map_err(|_| Error::Config(format!("`{s}`: `{a}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((&s[..open], args))
}
