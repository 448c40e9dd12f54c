//! Weak approximation schemes for Stratonovich SDEs
//! `dX = V_0(X) dt + Σ_i V_i(X) ∘ dB^i`.
//!
//! Three one-step maps are provided: the Gaussian two-flow splitting (`Nn`),
//! Euler-Maruyama on the Itô form (`Em`) and a Strang-type splitting whose
//! noise flows run in a randomly chosen order (`Nv`). [`run_path`] drives any
//! of them from a block of uniforms.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::moment_match::SchemeParams;
use crate::rk_integrator::IntegrationScheme;
use crate::sampling::{normal_quantile, PairCholesky};

/// Largest supported Brownian dimension.
pub const MAX_BROWNIAN: usize = 8;

/// An SDE on `R^N` given in Stratonovich form, plus its Itô drift for Euler-Maruyama.
pub trait SdeModel<const N: usize>: Sync {
    /// Number of driving Brownian motions `d`.
    fn brownian_dim(&self) -> usize;

    /// `V_0`.
    fn drift(&self, y: &[f64; N]) -> [f64; N];

    /// `V_i` for `1 <= i <= d`; also the Itô diffusion columns.
    fn diffusion(&self, i: usize, y: &[f64; N]) -> [f64; N];

    /// Itô drift `V_0 + ½ Σ_i (∂V_i) V_i`.
    fn ito_drift(&self, y: &[f64; N]) -> [f64; N];

    /// `a0 V_0(y) + Σ_i a[i-1] V_i(y)`.
    fn combined(&self, y: &[f64; N], a0: f64, a: &[f64]) -> [f64; N] {
        let mut out = self.drift(y).map(|v| a0 * v);
        for (i, &ai) in a.iter().enumerate() {
            if ai != 0.0 {
                for (o, v) in out.iter_mut().zip(self.diffusion(i + 1, y)) {
                    *o += ai * v;
                }
            }
        }
        out
    }

    /// `true` when `y` has left the region where the fields are defined
    /// (the fields are then evaluated on a clamped state).
    fn out_of_domain(&self, _y: &[f64; N]) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Nn,
    Em,
    Nv,
}

impl SchemeKind {
    /// Weak order, used as the Romberg exponent.
    pub fn weak_order(self) -> u32 {
        match self {
            SchemeKind::Em => 1,
            SchemeKind::Nn | SchemeKind::Nv => 2,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Nn => "nn",
            SchemeKind::Em => "em",
            SchemeKind::Nv => "nv",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(SchemeKind::Nn),
            "em" => Ok(SchemeKind::Em),
            "nv" => Ok(SchemeKind::Nv),
            other => Err(Error::Parse(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Drift weights and the Gaussian factor of a two-stage splitting, in float form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub chol: PairCholesky,
}

impl NnCoefficients {
    pub fn new(params: &SchemeParams<f64>) -> Result<Self> {
        Ok(Self { c1: params.c1, c2: params.c2, chol: PairCholesky::new(params.r11, params.r12, params.r22)? })
    }
}

fn check_brownian(d: usize) -> Result<()> {
    if d == 0 || d > MAX_BROWNIAN {
        return Err(Error::Config(format!("Brownian dimension must be in 1..={MAX_BROWNIAN}, got {d}")));
    }
    Ok(())
}

/// One step of the Gaussian splitting: with
/// `W_j = s c_j V_0 + √s Σ_i S^i_j V_i`, returns `g(W_1)(g(W_2)(x))`.
/// `gaussians[i] = (S^i_1, S^i_2)`.
pub fn nn_step<const N: usize, M: SdeModel<N> + ?Sized>(
    model: &M,
    coeffs: &NnCoefficients,
    rk: &IntegrationScheme,
    x: &[f64; N],
    s: f64,
    gaussians: &[(f64, f64)],
) -> Result<[f64; N]> {
    nn_flows(model, coeffs, rk, x, s, gaussians).map(|(_, y)| y)
}

// Returns the state after the `W_2` flow and after both flows.
fn nn_flows<const N: usize, M: SdeModel<N> + ?Sized>(
    model: &M,
    coeffs: &NnCoefficients,
    rk: &IntegrationScheme,
    x: &[f64; N],
    s: f64,
    gaussians: &[(f64, f64)],
) -> Result<([f64; N], [f64; N])> {
    let d = gaussians.len();
    let rs = s.sqrt();
    let mut a1 = [0.0; MAX_BROWNIAN];
    let mut a2 = [0.0; MAX_BROWNIAN];
    for (i, &(s1, s2)) in gaussians.iter().enumerate() {
        a1[i] = rs * s1;
        a2[i] = rs * s2;
    }
    let w2 = |y: &[f64; N]| model.combined(y, s * coeffs.c2, &a2[..d]);
    let w1 = |y: &[f64; N]| model.combined(y, s * coeffs.c1, &a1[..d]);
    let mid = rk.flow(&w2, x)?;
    let end = rk.flow(&w1, &mid)?;
    Ok((mid, end))
}

/// `x + b(x) s + Σ_i V_i(x) ΔB^i` with `b` the Itô drift and `ΔB^i ~ N(0, s)`.
pub fn em_step<const N: usize, M: SdeModel<N> + ?Sized>(
    model: &M,
    x: &[f64; N],
    s: f64,
    increments: &[f64],
) -> [f64; N] {
    let mut y = *x;
    for (yk, b) in y.iter_mut().zip(model.ito_drift(x)) {
        *yk += b * s;
    }
    for (i, &db) in increments.iter().enumerate() {
        for (yk, v) in y.iter_mut().zip(model.diffusion(i + 1, x)) {
            *yk += v * db;
        }
    }
    y
}

/// Randomly ordered splitting step: `exp(½ s V_0)`, then the flows of `√s η_i V_i` in
/// ascending `i` (`forward = true`) or descending order, then `exp(½ s V_0)`.
pub fn nv_step<const N: usize, M: SdeModel<N> + ?Sized>(
    model: &M,
    rk: &IntegrationScheme,
    x: &[f64; N],
    s: f64,
    forward: bool,
    gaussians: &[f64],
) -> Result<[f64; N]> {
    let half = |y: &[f64; N]| model.drift(y).map(|v| 0.5 * s * v);
    let rs = s.sqrt();
    let mut y = rk.flow(&half, x)?;
    let d = gaussians.len();
    for k in 0..d {
        let i = if forward { k } else { d - 1 - k };
        let a = rs * gaussians[i];
        if a != 0.0 {
            let field = |z: &[f64; N]| model.diffusion(i + 1, z).map(|v| a * v);
            y = rk.flow(&field, &y)?;
        }
    }
    rk.flow(&half, &y)
}

/// Everything needed to turn a block of uniforms into one simulated path.
#[derive(Clone, Debug)]
pub struct SchemeStepPlan {
    kind: SchemeKind,
    steps: usize,
    brownian: usize,
    nn: Option<NnCoefficients>,
    rk: Option<IntegrationScheme>,
}

impl SchemeStepPlan {
    pub fn nn(steps: usize, brownian: usize, params: &SchemeParams<f64>, rk: IntegrationScheme) -> Result<Self> {
        Self::checked(SchemeKind::Nn, steps, brownian, Some(NnCoefficients::new(params)?), Some(rk))
    }

    pub fn em(steps: usize, brownian: usize) -> Result<Self> {
        Self::checked(SchemeKind::Em, steps, brownian, None, None)
    }

    pub fn nv(steps: usize, brownian: usize, rk: IntegrationScheme) -> Result<Self> {
        Self::checked(SchemeKind::Nv, steps, brownian, None, Some(rk))
    }

    fn checked(
        kind: SchemeKind,
        steps: usize,
        brownian: usize,
        nn: Option<NnCoefficients>,
        rk: Option<IntegrationScheme>,
    ) -> Result<Self> {
        check_brownian(brownian)?;
        if steps == 0 {
            return Err(Error::Config("number of steps must be positive".into()));
        }
        Ok(Self { kind, steps, brownian, nn, rk })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn brownian(&self) -> usize {
        self.brownian
    }

    /// The same plan with a different number of steps.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::checked(self.kind, steps, self.brownian, self.nn, self.rk.clone())
    }

    /// Uniforms consumed per step: `2d` (NN), `d` (EM), `1 + d` (NV).
    pub fn uniforms_per_step(&self) -> usize {
        match self.kind {
            SchemeKind::Nn => 2 * self.brownian,
            SchemeKind::Em => self.brownian,
            SchemeKind::Nv => 1 + self.brownian,
        }
    }

    /// Uniforms consumed per path.
    pub fn uniform_dim(&self) -> usize {
        self.steps * self.uniforms_per_step()
    }
}

/// Terminal state of a path and the number of steps in which some
/// intermediate state left the model's domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathOutcome<const N: usize> {
    pub state: [f64; N],
    pub guard_hits: u32,
}

/// Simulates one path on `[0, horizon]` with `s = horizon / n`.
///
/// Uniforms are read step by step. Within a step, NN reads
/// `u(S^1_1), u(S^1_2), u(S^2_1), ...`, EM reads one uniform per Brownian
/// index, and NV reads the ordering coin (`u >= 1/2` means ascending) followed
/// by one uniform per Brownian index.
pub fn run_path<const N: usize, M: SdeModel<N> + ?Sized>(
    plan: &SchemeStepPlan,
    model: &M,
    x0: &[f64; N],
    horizon: f64,
    uniforms: &[f64],
) -> Result<PathOutcome<N>> {
    if uniforms.len() != plan.uniform_dim() {
        return Err(Error::Dimension { expected: plan.uniform_dim(), got: uniforms.len() });
    }
    if model.brownian_dim() != plan.brownian {
        return Err(Error::Dimension { expected: plan.brownian, got: model.brownian_dim() });
    }
    let d = plan.brownian;
    let s = horizon / plan.steps as f64;
    let mut x = *x0;
    let mut guard_hits = 0u32;
    let with_step = |k: usize| {
        move |e: Error| match e {
            Error::Integration { stage, .. } => Error::Integration { stage, step: k + 1 },
            other => other,
        }
    };
    for (k, u) in uniforms.chunks_exact(plan.uniforms_per_step()).enumerate() {
        let mut hit = false;
        x = match plan.kind {
            SchemeKind::Nn => {
                let coeffs = plan.nn.as_ref().expect("NN plan carries coefficients");
                let rk = plan.rk.as_ref().expect("NN plan carries an integrator");
                let mut g = [(0.0, 0.0); MAX_BROWNIAN];
                for i in 0..d {
                    g[i] = coeffs.chol.apply(normal_quantile(u[2 * i]), normal_quantile(u[2 * i + 1]));
                }
                let (mid, end) = nn_flows(model, coeffs, rk, &x, s, &g[..d]).map_err(with_step(k))?;
                hit |= model.out_of_domain(&mid);
                end
            }
            SchemeKind::Em => {
                let mut db = [0.0; MAX_BROWNIAN];
                let rs = s.sqrt();
                for i in 0..d {
                    db[i] = rs * normal_quantile(u[i]);
                }
                em_step(model, &x, s, &db[..d])
            }
            SchemeKind::Nv => {
                let rk = plan.rk.as_ref().expect("NV plan carries an integrator");
                let forward = u[0] >= 0.5;
                let mut eta = [0.0; MAX_BROWNIAN];
                for i in 0..d {
                    eta[i] = normal_quantile(u[1 + i]);
                }
                nv_step(model, rk, &x, s, forward, &eta[..d]).map_err(with_step(k))?
            }
        };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration { stage: 0, step: k + 1 });
        }
        hit |= model.out_of_domain(&x);
        guard_hits += hit as u32;
    }
    Ok(PathOutcome { state: x, guard_hits })
}

/// `(2^p e_{2n} − e_n) / (2^p − 1)`, evaluated as `e_{2n} + (e_{2n} − e_n) / (2^p − 1)`.
pub fn romberg(estimate_n: f64, estimate_2n: f64, p: u32) -> f64 {
    let w = (1u64 << p) as f64;
    estimate_2n + (estimate_2n - estimate_n) / (w - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment_match::{solution_params, Branch};

    struct Scalar1 {
        a: f64,
        b: f64,
    }

    impl SdeModel<1> for Scalar1 {
        fn brownian_dim(&self) -> usize {
            1
        }
        fn drift(&self, y: &[f64; 1]) -> [f64; 1] {
            [self.a * y[0]]
        }
        fn diffusion(&self, _i: usize, y: &[f64; 1]) -> [f64; 1] {
            [self.b * y[0]]
        }
        fn ito_drift(&self, y: &[f64; 1]) -> [f64; 1] {
            [(self.a + 0.5 * self.b * self.b) * y[0]]
        }
    }

    fn default_plan(kind: SchemeKind, n: usize, d: usize) -> SchemeStepPlan {
        let params = solution_params(0.75, Branch::Lower).unwrap();
        let rk = IntegrationScheme::builtin("rk5-butcher").unwrap();
        match kind {
            SchemeKind::Nn => SchemeStepPlan::nn(n, d, &params, rk).unwrap(),
            SchemeKind::Em => SchemeStepPlan::em(n, d).unwrap(),
            SchemeKind::Nv => SchemeStepPlan::nv(n, d, rk).unwrap(),
        }
    }

    #[test]
    fn uniform_dimensions() {
        assert_eq!(default_plan(SchemeKind::Nn, 1, 2).uniform_dim(), 4);
        assert_eq!(default_plan(SchemeKind::Em, 3, 2).uniform_dim(), 6);
        assert_eq!(default_plan(SchemeKind::Nv, 5, 2).uniform_dim(), 15);
        assert!(SchemeStepPlan::em(0, 1).is_err());
        assert!(SchemeStepPlan::em(2, MAX_BROWNIAN + 1).is_err());
    }

    #[test]
    fn romberg_examples() {
        assert_eq!(romberg(0.7, 0.7, 2), 0.7);
        assert_eq!(romberg(0.0, 3.0, 1), 6.0);
        assert_eq!(romberg(0.0, 3.0, 2), 4.0);
    }

    #[test]
    fn zero_step_is_identity() {
        let model = Scalar1 { a: 0.3, b: 0.4 };
        let plan = default_plan(SchemeKind::Nn, 1, 1);
        let rk = IntegrationScheme::builtin("rk5-butcher").unwrap();
        let x = nn_step(&model, plan.nn.as_ref().unwrap(), &rk, &[1.5], 0.0, &[(0.7, -0.2)]).unwrap();
        assert_eq!(x, [1.5]);
        assert_eq!(em_step(&model, &[1.5], 0.3, &[0.0]), [1.5 + 0.3 * 1.5 * (0.3 + 0.08)]);
    }

    #[test]
    fn dimension_mismatch() {
        let model = Scalar1 { a: 0.0, b: 1.0 };
        let plan = default_plan(SchemeKind::Em, 3, 1);
        let err = run_path(&plan, &model, &[1.0], 1.0, &[0.5; 4]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, got: 4 }));
    }

    #[test]
    fn nv_single_noise_ignores_coin() {
        let model = Scalar1 { a: -0.2, b: 0.5 };
        let plan = default_plan(SchemeKind::Nv, 2, 1);
        let a = run_path(&plan, &model, &[1.0], 1.0, &[0.1, 0.3, 0.2, 0.8]).unwrap();
        let b = run_path(&plan, &model, &[1.0], 1.0, &[0.9, 0.3, 0.7, 0.8]).unwrap();
        assert_eq!(a, b);
    }
}
