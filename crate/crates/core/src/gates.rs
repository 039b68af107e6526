//! Gate functions `g(x) = act(arg(x))` with values in `[0, 1]`.
//!
//! A gate pairs an [`ActivationKind`] with a [`GateArgument`]: a rectifier
//! MLP, a radial ball, an axis-aligned ellipsoid, or a direction-dependent
//! shell whose outer extent is constant, a Fourier series in the polar angle
//! (2-D), or a monomial expansion in the unit direction.
//!
//! Positive quantities (radii, axis lengths, sharpness) are stored as
//! unconstrained raw values and mapped through `softplus(raw) + RADIUS_FLOOR`.
//! Series-valued extents are clamped below at `RADIUS_FLOOR` instead.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, PunnError, Result};
use crate::numeric::{DenseMatrix, MlpCache, MlpParams, Rng};
use crate::scalar::{sigmoid, softplus, softplus_inv, Scalar};

/// Lower bound for every radius, axis length and sharpness.
pub const RADIUS_FLOOR: f64 = 1e-3;

/// Initial raw amplitude of tanh-compressed bump gates (peak value ≈ 0.88).
const AMPLITUDE_INIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Sigmoid,
    Gaussian,
    Bump,
    /// Bump composed with `tanh`, so any real argument lands in the support.
    BumpTanh,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::Gaussian => "gaussian",
            Self::Bump => "bump",
            Self::BumpTanh => "bump_tanh",
        }
    }

    /// Gates with this activation carry one learnable amplitude.
    pub fn has_amplitude(self) -> bool {
        matches!(self, Self::BumpTanh)
    }
}

/// `exp(-1 / (1 - t^2))` on `|t| < 1`, zero elsewhere, with its derivative.
fn bump<T: Scalar>(t: T) -> (T, T) {
    let one = T::one();
    if t.abs() >= one {
        return (T::zero(), T::zero());
    }
    let w = one - t * t;
    let v = (-one / w).exp();
    let two = T::lit(2.0);
    (v, v * (-two * t) / (w * w))
}

/// Activation value and derivative at `t`.
pub fn activation_eval<T: Scalar>(kind: ActivationKind, t: T) -> (T, T) {
    match kind {
        ActivationKind::Sigmoid => {
            let s = sigmoid(t);
            (s, s * (T::one() - s))
        }
        ActivationKind::Gaussian => {
            let v = (-t * t).exp();
            (v, -T::lit(2.0) * t * v)
        }
        ActivationKind::Bump => bump(t),
        ActivationKind::BumpTanh => {
            let th = t.tanh();
            let (v, dv) = bump(th);
            (v, dv * (T::one() - th * th))
        }
    }
}

fn positive<T: Scalar>(raw: T) -> (T, T) {
    (softplus(raw) + T::lit(RADIUS_FLOOR), sigmoid(raw))
}

fn positive_raw<T: Scalar>(value: T, what: &str) -> Result<T> {
    let floor = T::lit(RADIUS_FLOOR);
    if !(value > floor) || !value.is_finite() {
        return Err(PunnError::Config(format!(
            "{what} must exceed {RADIUS_FLOOR}, got {value}"
        )));
    }
    Ok(softplus_inv(value - floor))
}

/// Ball `s * (r - |x - c|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RadialParams<T> {
    pub center: Vec<T>,
    pub radius_raw: T,
    pub sharpness_raw: T,
}

impl<T: Scalar> RadialParams<T> {
    pub fn new(center: Vec<T>, radius: T, sharpness: T) -> Result<Self> {
        Ok(Self {
            center,
            radius_raw: positive_raw(radius, "radius")?,
            sharpness_raw: positive_raw(sharpness, "sharpness")?,
        })
    }

    pub fn radius(&self) -> T {
        positive(self.radius_raw).0
    }

    pub fn sharpness(&self) -> T {
        positive(self.sharpness_raw).0
    }
}

/// Axis-aligned ellipsoid `s * (1 - sum_j (x_j - c_j)^2 / r_j^2) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EllipsoidParams<T> {
    pub center: Vec<T>,
    pub axes_raw: Vec<T>,
    pub sharpness_raw: T,
    pub bias: T,
}

impl<T: Scalar> EllipsoidParams<T> {
    pub fn new(center: Vec<T>, axes: &[T], sharpness: T, bias: T) -> Result<Self> {
        if axes.len() != center.len() {
            return Err(shape_err("ellipsoid needs one axis per dimension"));
        }
        Ok(Self {
            center,
            axes_raw: axes
                .iter()
                .map(|&a| positive_raw(a, "axis length"))
                .collect::<Result<_>>()?,
            sharpness_raw: positive_raw(sharpness, "sharpness")?,
            bias,
        })
    }
}

/// `a0 + sum_k (a_k cos k.angle + b_k sin k.angle)`, clamped at the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FourierRadius<T> {
    pub a0: T,
    pub cos: Vec<T>,
    pub sin: Vec<T>,
}

impl<T: Scalar> FourierRadius<T> {
    pub fn order(&self) -> usize {
        self.cos.len()
    }

    /// Unclamped series value and its derivative in the angle.
    fn series(&self, angle: T) -> (T, T) {
        let mut v = self.a0;
        let mut dv = T::zero();
        for (i, (&a, &b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let k = T::lit((i + 1) as f64);
            let (s, c) = (k * angle).sin_cos();
            v = v + a * c + b * s;
            dv = dv + k * (b * c - a * s);
        }
        (v, dv)
    }

    pub fn eval_angle(&self, angle: T) -> T {
        self.series(angle).0.max(T::lit(RADIUS_FLOOR))
    }
}

/// Polynomial in the components of a unit direction, total degree `<= degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HarmonicRadius<T> {
    pub dim: usize,
    pub degree: usize,
    /// One coefficient per monomial, in [`monomial_exponents`] order.
    pub coeffs: Vec<T>,
}

/// Exponent vectors of all monomials in `dim` variables with total degree
/// `<= degree`, graded then lexicographic (constant term first).
pub fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    fn fill(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            fill(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        out.push(Vec::new());
        return out;
    }
    for total in 0..=degree {
        fill(dim, total, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// Number of monomials of total degree `<= degree` in `dim` variables.
pub fn harmonic_coeff_count(dim: usize, degree: usize) -> usize {
    // C(dim + degree, degree)
    (1..=degree).fold(1usize, |acc, j| acc * (dim + j) / j)
}

impl<T: Scalar> HarmonicRadius<T> {
    pub fn constant(dim: usize, degree: usize, value: T) -> Self {
        let mut coeffs = vec![T::zero(); harmonic_coeff_count(dim, degree)];
        coeffs[0] = value;
        Self { dim, degree, coeffs }
    }

    /// Unclamped value plus gradient in the direction components.
    fn series(&self, dir: &[T], exps: &[Vec<usize>]) -> (T, Vec<T>) {
        let mut v = T::zero();
        let mut grad = vec![T::zero(); self.dim];
        for (&a, e) in self.coeffs.iter().zip(exps) {
            v = v + a * monomial(dir, e);
            for j in 0..self.dim {
                if e[j] > 0 {
                    let mut ej = e.clone();
                    ej[j] -= 1;
                    grad[j] = grad[j] + a * T::lit(e[j] as f64) * monomial(dir, &ej);
                }
            }
        }
        (v, grad)
    }

    pub fn eval(&self, dir: &[T]) -> T {
        let exps = monomial_exponents(self.dim, self.degree);
        self.series(dir, &exps).0.max(T::lit(RADIUS_FLOOR))
    }
}

fn monomial<T: Scalar>(dir: &[T], e: &[usize]) -> T {
    dir.iter()
        .zip(e)
        .fold(T::one(), |acc, (&x, &k)| acc * x.powi(k as i32))
}

/// Radius (or shell thickness) as a function of direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum RadiusProfile<T> {
    /// `softplus(raw) + floor`, independent of direction.
    Constant { raw: T },
    Fourier(FourierRadius<T>),
    Harmonic(HarmonicRadius<T>),
}

impl<T: Scalar> RadiusProfile<T> {
    pub fn constant(value: T) -> Result<Self> {
        Ok(Self::Constant {
            raw: positive_raw(value, "radius")?,
        })
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Constant { .. } => 1,
            Self::Fourier(f) => 1 + 2 * f.order(),
            Self::Harmonic(h) => h.coeffs.len(),
        }
    }

    /// Evaluates the profile along a unit direction (2-D angle for Fourier).
    pub fn eval(&self, dir: &[T]) -> T {
        match self {
            Self::Constant { raw } => positive(*raw).0,
            Self::Fourier(f) => f.eval_angle(dir[1].atan2(dir[0])),
            Self::Harmonic(h) => h.eval(dir),
        }
    }

    fn write(&self, out: &mut Vec<T>) {
        match self {
            Self::Constant { raw } => out.push(*raw),
            Self::Fourier(f) => {
                out.push(f.a0);
                out.extend_from_slice(&f.cos);
                out.extend_from_slice(&f.sin);
            }
            Self::Harmonic(h) => out.extend_from_slice(&h.coeffs),
        }
    }

    fn read(&mut self, src: &[T]) -> usize {
        match self {
            Self::Constant { raw } => {
                *raw = src[0];
                1
            }
            Self::Fourier(f) => {
                let k = f.order();
                f.a0 = src[0];
                f.cos.copy_from_slice(&src[1..1 + k]);
                f.sin.copy_from_slice(&src[1 + k..1 + 2 * k]);
                1 + 2 * k
            }
            Self::Harmonic(h) => {
                let n = h.coeffs.len();
                h.coeffs.copy_from_slice(&src[..n]);
                n
            }
        }
    }
}

/// Direction-dependent shell around `center`.
///
/// With an inner radius `r1` the region is `r1 <= |x - c| <= r1 + e(n)`;
/// without one it is the star-shaped ball `|x - c| <= e(n)`. Here `e` is the
/// outer profile and `n` the unit direction from the center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ShellParams<T> {
    pub center: Vec<T>,
    pub sharpness_raw: T,
    pub inner_raw: Option<T>,
    pub outer: RadiusProfile<T>,
}

impl<T: Scalar> ShellParams<T> {
    /// Constant-radius shell `r1 <= |x - c| <= r2`.
    pub fn spherical(center: Vec<T>, r1: T, r2: T, sharpness: T) -> Result<Self> {
        if !(r2 > r1) {
            return Err(PunnError::Config(format!(
                "outer radius {r2} must exceed inner radius {r1}"
            )));
        }
        Ok(Self {
            center,
            sharpness_raw: positive_raw(sharpness, "sharpness")?,
            inner_raw: Some(positive_raw(r1, "inner radius")?),
            outer: RadiusProfile::constant(r2 - r1)?,
        })
    }

    pub fn sharpness(&self) -> T {
        positive(self.sharpness_raw).0
    }

    pub fn inner_radius(&self) -> T {
        self.inner_raw.map_or(T::zero(), |r| positive(r).0)
    }

    /// Outer radius along a unit direction.
    pub fn outer_radius(&self, dir: &[T]) -> T {
        self.inner_radius() + self.outer.eval(dir)
    }

    /// Normalized radial coordinate: 0 on the inner boundary, 1 on the outer.
    pub fn normalized_radius(&self, x: &[T]) -> T {
        self.geometry(x).t
    }

    fn geometry(&self, x: &[T]) -> ShellGeometry<T> {
        let d = self.center.len();
        let delta: Vec<T> = x.iter().zip(&self.center).map(|(&a, &c)| a - c).collect();
        let rho = delta.iter().map(|&v| v * v).sum::<T>().sqrt();
        let dir: Vec<T> = if rho > T::zero() {
            delta.iter().map(|&v| v / rho).collect()
        } else {
            let mut e1 = vec![T::zero(); d];
            e1[0] = T::one();
            e1
        };
        let floor = T::lit(RADIUS_FLOOR);
        // extent, d(extent)/d(dir) (projected onto the tangent space later),
        // d(extent)/d(profile params)
        let (extent, d_dir, d_profile): (T, Vec<T>, Vec<T>) = match &self.outer {
            RadiusProfile::Constant { raw } => {
                let (v, dv) = positive(*raw);
                (v, vec![T::zero(); d], vec![dv])
            }
            RadiusProfile::Fourier(f) => {
                let angle = dir[1].atan2(dir[0]);
                let (v, dv_dangle) = f.series(angle);
                let k = f.order();
                if v < floor {
                    (floor, vec![T::zero(); d], vec![T::zero(); 1 + 2 * k])
                } else {
                    let mut dp = Vec::with_capacity(1 + 2 * k);
                    dp.push(T::one());
                    for i in 1..=k {
                        dp.push((T::lit(i as f64) * angle).cos());
                    }
                    for i in 1..=k {
                        dp.push((T::lit(i as f64) * angle).sin());
                    }
                    // d angle / d dir on the unit circle is (-n2, n1)
                    (v, vec![-dir[1] * dv_dangle, dir[0] * dv_dangle], dp)
                }
            }
            RadiusProfile::Harmonic(h) => {
                let exps = monomial_exponents(h.dim, h.degree);
                let (v, g) = h.series(&dir, &exps);
                if v < floor {
                    (floor, vec![T::zero(); d], vec![T::zero(); h.coeffs.len()])
                } else {
                    let dp = exps.iter().map(|e| monomial(&dir, e)).collect();
                    (v, g, dp)
                }
            }
        };
        let (r1, dr1) = self.inner_raw.map_or((T::zero(), T::zero()), positive);
        let t = (rho - r1) / extent;
        let ball = self.inner_raw.is_none();
        let (u, du_dt) = if ball {
            (t, T::one())
        } else {
            (T::lit(2.0) * t - T::one(), T::lit(2.0))
        };
        ShellGeometry {
            dir,
            rho,
            extent,
            d_dir,
            d_profile,
            dr1,
            t,
            q: T::one() - u * u,
            dq_dt: -T::lit(2.0) * u * du_dt,
        }
    }
}

struct ShellGeometry<T> {
    dir: Vec<T>,
    rho: T,
    extent: T,
    d_dir: Vec<T>,
    d_profile: Vec<T>,
    dr1: T,
    t: T,
    /// `1 - u^2`, positive exactly inside the shell region.
    q: T,
    dq_dt: T,
}

/// Shell transition: gate value and partials in `q` and the sharpness.
fn shell_transition<T: Scalar>(kind: ActivationKind, q: T, s: T) -> (T, T, T) {
    let one = T::one();
    match kind {
        ActivationKind::Sigmoid => {
            let v = sigmoid(s * q);
            let dv = v * (one - v);
            (v, s * dv, q * dv)
        }
        ActivationKind::Gaussian => {
            let w = one - q;
            let v = (-s * s * w).exp();
            (v, s * s * v, -T::lit(2.0) * s * w * v)
        }
        // tanh compression is unnecessary on an already normalized coordinate
        ActivationKind::Bump => {
            if q <= T::zero() {
                (T::zero(), T::zero(), T::zero())
            } else {
                let v = (-one / (s * q)).exp();
                (v, v / (s * q * q), v / (s * s * q))
            }
        }
        // rescaled to peak at exp(-1) on the mid-shell, so the amplitude
        // keeps the gate inside [0, 1]
        ActivationKind::BumpTanh => {
            if q <= T::zero() {
                (T::zero(), T::zero(), T::zero())
            } else {
                let v = (one / s - one / (s * q) - one).exp();
                (v, v / (s * q * q), v * (one / q - one) / (s * s))
            }
        }
    }
}

/// Argument parameterization of a gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "snake_case")]
pub enum GateArgument<T> {
    Mlp(MlpParams<T>),
    Radial(RadialParams<T>),
    Ellipsoid(EllipsoidParams<T>),
    Shell(ShellParams<T>),
}

/// Coarse family name of a gate, used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateFamily {
    Mlp,
    Radial,
    Ellipsoid,
    Shell,
    FourierShell,
    HarmonicShell,
}

/// Architecture of a gate argument, without parameter values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateShape {
    Mlp { hidden: Vec<usize> },
    Radial,
    Ellipsoid,
    /// Constant radii; `inner = false` gives a ball.
    Shell { inner: bool },
    Fourier { order: usize, inner: bool },
    Harmonic { degree: usize, inner: bool },
}

impl GateShape {
    /// Exact parameter count of one gate in `dim` dimensions (excluding the
    /// bump-tanh amplitude).
    pub fn param_count(&self, dim: usize) -> usize {
        match self {
            Self::Mlp { hidden } => {
                let mut sizes = vec![dim];
                sizes.extend_from_slice(hidden);
                sizes.push(1);
                crate::numeric::mlp_param_count(&sizes)
            }
            Self::Radial => dim + 2,
            Self::Ellipsoid => 2 * dim + 2,
            Self::Shell { inner } => dim + 2 + usize::from(*inner),
            Self::Fourier { order, inner } => dim + 1 + usize::from(*inner) + 2 * order + 1,
            Self::Harmonic { degree, inner } => {
                dim + 1 + usize::from(*inner) + harmonic_coeff_count(dim, *degree)
            }
        }
    }
}

/// One gate: activation, argument and (for bump-tanh) an amplitude.
///
/// Bump-tanh gates are scaled by `e * sigmoid(amplitude_raw)`, which keeps
/// their peak inside `(0, 1]` while letting it reach values above 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GateSpec<T> {
    pub activation: ActivationKind,
    pub argument: GateArgument<T>,
    pub amplitude_raw: Option<T>,
}

/// Values recorded by a batched gate forward pass.
#[derive(Debug, Clone)]
pub struct GateCache<T> {
    batch: usize,
    /// Gate value before the amplitude.
    base: Vec<T>,
    /// d(base)/d(argument); for shells d(base)/dq.
    d_arg: Vec<T>,
    /// d(base)/d(sharpness) for shells.
    d_sharp: Vec<T>,
    mlp: Option<MlpCache<T>>,
}

impl<T: Scalar> GateSpec<T> {
    pub fn new(activation: ActivationKind, argument: GateArgument<T>) -> Result<Self> {
        let spec = Self {
            activation,
            amplitude_raw: activation.has_amplitude().then(|| T::lit(AMPLITUDE_INIT)),
            argument,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        if d == 0 && !matches!(self.argument, GateArgument::Mlp(_)) {
            return Err(shape_err("shape gates need at least one input dimension"));
        }
        match &self.argument {
            GateArgument::Mlp(p) => {
                if p.output_dim() != 1 {
                    return Err(shape_err("gate MLP must have a single output"));
                }
            }
            GateArgument::Radial(_) => {}
            GateArgument::Ellipsoid(e) => {
                if e.axes_raw.len() != d {
                    return Err(shape_err("ellipsoid needs one axis per dimension"));
                }
            }
            GateArgument::Shell(s) => match &s.outer {
                RadiusProfile::Constant { .. } => {}
                RadiusProfile::Fourier(f) => {
                    if d != 2 {
                        return Err(PunnError::Unsupported(
                            "Fourier shells are defined in two dimensions".into(),
                        ));
                    }
                    if f.cos.len() != f.sin.len() {
                        return Err(shape_err("Fourier cos/sin coefficient counts differ"));
                    }
                }
                RadiusProfile::Harmonic(h) => {
                    if h.dim != d || h.coeffs.len() != harmonic_coeff_count(d, h.degree) {
                        return Err(shape_err("harmonic coefficients do not match dimension/degree"));
                    }
                }
            },
        }
        if self.activation.has_amplitude() != self.amplitude_raw.is_some() {
            return Err(PunnError::Internal("amplitude presence does not match activation".into()));
        }
        Ok(())
    }

    /// Randomly initialized gate for `dim`-dimensional (standardized) inputs.
    pub fn init(activation: ActivationKind, shape: &GateShape, dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut center = || -> Vec<T> { (0..dim).map(|_| T::lit(rng.uniform(-0.5, 0.5))).collect() };
        let argument = match shape {
            GateShape::Mlp { hidden } => {
                let mut sizes = vec![dim];
                sizes.extend_from_slice(hidden);
                sizes.push(1);
                GateArgument::Mlp(MlpParams::init(&sizes, rng)?)
            }
            GateShape::Radial => GateArgument::Radial(RadialParams::new(center(), T::one(), T::lit(2.0))?),
            GateShape::Ellipsoid => GateArgument::Ellipsoid(EllipsoidParams::new(
                center(),
                &vec![T::one(); dim],
                T::lit(2.0),
                T::zero(),
            )?),
            GateShape::Shell { inner } => GateArgument::Shell(ShellParams {
                center: center(),
                sharpness_raw: positive_raw(T::lit(2.0), "sharpness")?,
                inner_raw: if *inner { Some(positive_raw(T::lit(0.5), "inner radius")?) } else { None },
                outer: RadiusProfile::constant(T::one())?,
            }),
            GateShape::Fourier { order, inner } => {
                let c = center();
                let mut small = |n: usize| -> Vec<T> { (0..n).map(|_| T::lit(rng.uniform(-0.05, 0.05))).collect() };
                let cos = small(*order);
                let sin = small(*order);
                GateArgument::Shell(ShellParams {
                    center: c,
                    sharpness_raw: positive_raw(T::lit(2.0), "sharpness")?,
                    inner_raw: if *inner { Some(positive_raw(T::lit(0.5), "inner radius")?) } else { None },
                    outer: RadiusProfile::Fourier(FourierRadius { a0: T::one(), cos, sin }),
                })
            }
            GateShape::Harmonic { degree, inner } => {
                let c = center();
                let mut h = HarmonicRadius::constant(dim, *degree, T::one());
                for v in h.coeffs.iter_mut().skip(1) {
                    *v = T::lit(rng.uniform(-0.05, 0.05));
                }
                GateArgument::Shell(ShellParams {
                    center: c,
                    sharpness_raw: positive_raw(T::lit(2.0), "sharpness")?,
                    inner_raw: if *inner { Some(positive_raw(T::lit(0.5), "inner radius")?) } else { None },
                    outer: RadiusProfile::Harmonic(h),
                })
            }
        };
        Self::new(activation, argument)
    }

    pub fn input_dim(&self) -> usize {
        match &self.argument {
            GateArgument::Mlp(p) => p.input_dim(),
            GateArgument::Radial(r) => r.center.len(),
            GateArgument::Ellipsoid(e) => e.center.len(),
            GateArgument::Shell(s) => s.center.len(),
        }
    }

    pub fn family(&self) -> GateFamily {
        match &self.argument {
            GateArgument::Mlp(_) => GateFamily::Mlp,
            GateArgument::Radial(_) => GateFamily::Radial,
            GateArgument::Ellipsoid(_) => GateFamily::Ellipsoid,
            GateArgument::Shell(s) => match s.outer {
                RadiusProfile::Constant { .. } => GateFamily::Shell,
                RadiusProfile::Fourier(_) => GateFamily::FourierShell,
                RadiusProfile::Harmonic(_) => GateFamily::HarmonicShell,
            },
        }
    }

    /// Architecture descriptor matching this gate.
    pub fn shape(&self) -> GateShape {
        match &self.argument {
            GateArgument::Mlp(p) => {
                let sizes = p.sizes();
                GateShape::Mlp {
                    hidden: sizes[1..sizes.len() - 1].to_vec(),
                }
            }
            GateArgument::Radial(_) => GateShape::Radial,
            GateArgument::Ellipsoid(_) => GateShape::Ellipsoid,
            GateArgument::Shell(s) => {
                let inner = s.inner_raw.is_some();
                match &s.outer {
                    RadiusProfile::Constant { .. } => GateShape::Shell { inner },
                    RadiusProfile::Fourier(f) => GateShape::Fourier { order: f.order(), inner },
                    RadiusProfile::Harmonic(h) => GateShape::Harmonic { degree: h.degree, inner },
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let base = match &self.argument {
            GateArgument::Mlp(p) => p.param_count(),
            GateArgument::Radial(r) => r.center.len() + 2,
            GateArgument::Ellipsoid(e) => e.center.len() * 2 + 2,
            GateArgument::Shell(s) => {
                s.center.len() + 1 + usize::from(s.inner_raw.is_some()) + s.outer.param_count()
            }
        };
        base + usize::from(self.amplitude_raw.is_some())
    }

    pub fn write_params(&self, out: &mut Vec<T>) {
        match &self.argument {
            GateArgument::Mlp(p) => p.write_params(out),
            GateArgument::Radial(r) => {
                out.extend_from_slice(&r.center);
                out.push(r.radius_raw);
                out.push(r.sharpness_raw);
            }
            GateArgument::Ellipsoid(e) => {
                out.extend_from_slice(&e.center);
                out.extend_from_slice(&e.axes_raw);
                out.push(e.sharpness_raw);
                out.push(e.bias);
            }
            GateArgument::Shell(s) => {
                out.extend_from_slice(&s.center);
                out.push(s.sharpness_raw);
                if let Some(r) = s.inner_raw {
                    out.push(r);
                }
                s.outer.write(out);
            }
        }
        if let Some(a) = self.amplitude_raw {
            out.push(a);
        }
    }

    /// Reads `param_count()` values from the front of `src`.
    pub fn read_params(&mut self, src: &[T]) -> Result<usize> {
        let n = self.param_count();
        if src.len() < n {
            return Err(shape_err(format!("gate needs {n} parameters, got {}", src.len())));
        }
        let mut off = match &mut self.argument {
            GateArgument::Mlp(p) => p.read_params(src)?,
            GateArgument::Radial(r) => {
                let d = r.center.len();
                r.center.copy_from_slice(&src[..d]);
                r.radius_raw = src[d];
                r.sharpness_raw = src[d + 1];
                d + 2
            }
            GateArgument::Ellipsoid(e) => {
                let d = e.center.len();
                e.center.copy_from_slice(&src[..d]);
                e.axes_raw.copy_from_slice(&src[d..2 * d]);
                e.sharpness_raw = src[2 * d];
                e.bias = src[2 * d + 1];
                2 * d + 2
            }
            GateArgument::Shell(s) => {
                let d = s.center.len();
                s.center.copy_from_slice(&src[..d]);
                s.sharpness_raw = src[d];
                let mut off = d + 1;
                if let Some(r) = s.inner_raw.as_mut() {
                    *r = src[off];
                    off += 1;
                }
                off + s.outer.read(&src[off..])
            }
        };
        if let Some(a) = self.amplitude_raw.as_mut() {
            *a = src[off];
            off += 1;
        }
        debug_assert_eq!(off, n);
        Ok(n)
    }

    fn amplitude(&self) -> Option<(T, T)> {
        self.amplitude_raw.map(|a| {
            let s = sigmoid(a);
            let e = T::lit(E);
            (e * s, e * s * (T::one() - s))
        })
    }

    /// Batched evaluation; `x` is `batch x input_dim`.
    pub fn forward(&self, x: &DenseMatrix<T>) -> Result<(Vec<T>, GateCache<T>)> {
        let d = self.input_dim();
        if x.cols() != d {
            return Err(shape_err(format!(
                "gate expects {d} features, got {}",
                x.cols()
            )));
        }
        let batch = x.rows();
        let mut base = Vec::with_capacity(batch);
        let mut d_arg = Vec::with_capacity(batch);
        let mut d_sharp = Vec::new();
        let mut mlp = None;
        match &self.argument {
            GateArgument::Mlp(p) => {
                let (theta, cache) = p.forward(x)?;
                for &t in theta.as_slice() {
                    let (v, dv) = activation_eval(self.activation, t);
                    base.push(v);
                    d_arg.push(dv);
                }
                mlp = Some(cache);
            }
            GateArgument::Radial(r) => {
                let (radius, s) = (r.radius(), r.sharpness());
                for row in x.iter_rows() {
                    let rho = distance(row, &r.center);
                    let (v, dv) = activation_eval(self.activation, s * (radius - rho));
                    base.push(v);
                    d_arg.push(dv);
                }
            }
            GateArgument::Ellipsoid(e) => {
                let s = positive(e.sharpness_raw).0;
                let axes: Vec<T> = e.axes_raw.iter().map(|&a| positive(a).0).collect();
                for row in x.iter_rows() {
                    let quad = ellipsoid_quad(row, &e.center, &axes);
                    let (v, dv) = activation_eval(self.activation, s * (T::one() - quad) + e.bias);
                    base.push(v);
                    d_arg.push(dv);
                }
            }
            GateArgument::Shell(sh) => {
                let s = sh.sharpness();
                d_sharp.reserve(batch);
                for row in x.iter_rows() {
                    let geo = sh.geometry(row);
                    let (v, dq, ds) = shell_transition(self.activation, geo.q, s);
                    base.push(v);
                    d_arg.push(dq);
                    d_sharp.push(ds);
                }
            }
        }
        let values = match self.amplitude() {
            Some((amp, _)) => base.iter().map(|&v| amp * v).collect(),
            None => base.clone(),
        };
        Ok((
            values,
            GateCache {
                batch,
                base,
                d_arg,
                d_sharp,
                mlp,
            },
        ))
    }

    /// Accumulates `sum_b upstream[b] * dg_b/dparams` into `grad`.
    pub fn backward(
        &self,
        x: &DenseMatrix<T>,
        cache: &GateCache<T>,
        upstream: &[T],
        grad: &mut [T],
    ) -> Result<()> {
        if cache.batch != x.rows() || upstream.len() != x.rows() {
            return Err(PunnError::Internal("gate cache does not match the batch".into()));
        }
        if grad.len() != self.param_count() {
            return Err(shape_err(format!(
                "gradient buffer has {} slots, gate has {} parameters",
                grad.len(),
                self.param_count()
            )));
        }
        let (scale, amp_slot) = match self.amplitude() {
            Some((amp, damp)) => {
                let slot = grad.len() - 1;
                let g: T = upstream.iter().zip(&cache.base).map(|(&u, &b)| u * b).sum();
                grad[slot] = grad[slot] + g * damp;
                (amp, slot)
            }
            None => (T::one(), grad.len()),
        };
        let grad = &mut grad[..amp_slot];
        // upstream for the base value, times d(base)/d(argument)
        let d_theta: Vec<T> = upstream
            .iter()
            .zip(&cache.d_arg)
            .map(|(&u, &da)| u * scale * da)
            .collect();
        match &self.argument {
            GateArgument::Mlp(p) => {
                let mlp_cache = cache
                    .mlp
                    .as_ref()
                    .ok_or_else(|| PunnError::Internal("missing MLP cache".into()))?;
                let up = DenseMatrix::from_vec(d_theta.len(), 1, d_theta)?;
                p.backward(mlp_cache, &up, grad, false)?;
            }
            GateArgument::Radial(r) => {
                let d = r.center.len();
                let (radius, dr) = positive(r.radius_raw);
                let (s, ds) = positive(r.sharpness_raw);
                for (row, &dt) in x.iter_rows().zip(&d_theta) {
                    if dt == T::zero() {
                        continue;
                    }
                    let rho = distance(row, &r.center);
                    let dir = unit_direction(row, &r.center, rho);
                    for j in 0..d {
                        grad[j] = grad[j] + dt * s * dir[j];
                    }
                    grad[d] = grad[d] + dt * s * dr;
                    grad[d + 1] = grad[d + 1] + dt * (radius - rho) * ds;
                }
            }
            GateArgument::Ellipsoid(e) => {
                let d = e.center.len();
                let (s, ds) = positive(e.sharpness_raw);
                let axes: Vec<(T, T)> = e.axes_raw.iter().map(|&a| positive(a)).collect();
                let two = T::lit(2.0);
                for (row, &dt) in x.iter_rows().zip(&d_theta) {
                    if dt == T::zero() {
                        continue;
                    }
                    let mut quad = T::zero();
                    for j in 0..d {
                        let (a, da) = axes[j];
                        let delta = row[j] - e.center[j];
                        let a2 = a * a;
                        quad = quad + delta * delta / a2;
                        grad[j] = grad[j] + dt * s * two * delta / a2;
                        grad[d + j] = grad[d + j] + dt * s * two * delta * delta / (a2 * a) * da;
                    }
                    grad[2 * d] = grad[2 * d] + dt * (T::one() - quad) * ds;
                    grad[2 * d + 1] = grad[2 * d + 1] + dt;
                }
            }
            GateArgument::Shell(sh) => {
                let d = sh.center.len();
                let (_, ds_raw) = positive(sh.sharpness_raw);
                let has_inner = sh.inner_raw.is_some();
                let profile_off = d + 1 + usize::from(has_inner);
                for ((row, &dq), (&u, &dsh)) in x
                    .iter_rows()
                    .zip(&d_theta)
                    .zip(upstream.iter().zip(&cache.d_sharp))
                {
                    grad[d] = grad[d] + u * scale * dsh * ds_raw;
                    if dq == T::zero() {
                        continue;
                    }
                    let geo = sh.geometry(row);
                    let dt = dq * geo.dq_dt;
                    let inv_e = T::one() / geo.extent;
                    let dt_drho = inv_e;
                    let dt_dext = -geo.t * inv_e;
                    // d extent / d center = -(P d_dir) / rho, P = I - n n^T
                    let proj: T = geo.d_dir.iter().zip(&geo.dir).map(|(&a, &b)| a * b).sum();
                    for j in 0..d {
                        let mut dc = -geo.dir[j] * dt_drho;
                        if geo.rho > T::zero() {
                            let tangent = geo.d_dir[j] - geo.dir[j] * proj;
                            dc = dc - dt_dext * tangent / geo.rho;
                        }
                        grad[j] = grad[j] + dt * dc;
                    }
                    if has_inner {
                        grad[d + 1] = grad[d + 1] - dt * inv_e * geo.dr1;
                    }
                    for (k, &dp) in geo.d_profile.iter().enumerate() {
                        grad[profile_off + k] = grad[profile_off + k] + dt * dt_dext * dp;
                    }
                }
            }
        }
        Ok(())
    }
}

fn distance<T: Scalar>(x: &[T], c: &[T]) -> T {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt()
}

/// `(x - c) / |x - c|`, or `e_1` at the center.
fn unit_direction<T: Scalar>(x: &[T], c: &[T], rho: T) -> Vec<T> {
    if rho > T::zero() {
        x.iter().zip(c).map(|(&a, &b)| (a - b) / rho).collect()
    } else {
        let mut e1 = vec![T::zero(); c.len()];
        e1[0] = T::one();
        e1
    }
}

fn ellipsoid_quad<T: Scalar>(x: &[T], c: &[T], axes: &[T]) -> T {
    x.iter()
        .zip(c)
        .zip(axes)
        .map(|((&a, &b), &r)| (a - b) * (a - b) / (r * r))
        .sum()
}

/// Single-point gate evaluation.
pub fn gate_eval<T: Scalar>(spec: &GateSpec<T>, x: &[T]) -> Result<(T, GateCache<T>)> {
    let batch = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
    let (v, cache) = spec.forward(&batch)?;
    Ok((v[0], cache))
}

/// Single-point gradient of `upstream * g(x)` with respect to the gate's
/// flattened parameters.
pub fn gate_grad<T: Scalar>(spec: &GateSpec<T>, x: &[T], cache: &GateCache<T>, upstream: T) -> Result<Vec<T>> {
    let batch = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
    let mut grad = vec![T::zero(); spec.param_count()];
    spec.backward(&batch, cache, &[upstream], &mut grad)?;
    Ok(grad)
}

pub fn gate_param_count<T: Scalar>(spec: &GateSpec<T>) -> usize {
    spec.param_count()
}

/// Radius along a unit direction (angle-based for Fourier profiles).
pub fn radius_eval<T: Scalar>(profile: &RadiusProfile<T>, direction: &[T]) -> T {
    profile.eval(direction)
}
