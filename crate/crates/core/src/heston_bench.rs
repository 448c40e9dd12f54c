//! Asian call under the Heston model, and price/convergence drivers for it.
//!
//! The state is `(Y_1, Y_2, Y_3)`: asset price, variance and the running
//! integral `∫ Y_1 dt`, so the payoff `max(Y_3(T)/T − K, 0)` reads the
//! terminal state only.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment_match::{solution_params, Branch, SchemeParams};
use crate::rk_integrator::IntegrationScheme;
use crate::rk_trees::ButcherTableau;
use crate::sampling::{estimate, sample_std, EstimatorReport, Mode, UniformSource, BATCHES};
use crate::schemes::{romberg, run_path, SchemeKind, SchemeStepPlan, SdeModel};

/// Undiscounted Asian call price for [`HestonParams::default`].
pub const REFERENCE_PRICE: f64 = 6.0473534496e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HestonParams {
    pub mu: f64,
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub rho: f64,
    pub x1: f64,
    pub x2: f64,
    pub maturity: f64,
    pub strike: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self { mu: 0.05, alpha: 2.0, theta: 0.09, beta: 0.1, rho: 0.0, x1: 1.0, x2: 0.09, maturity: 1.0, strike: 1.05 }
    }
}

impl HestonParams {
    /// Positivity of the rates and initial values, `|ρ| <= 1` and Feller's
    /// condition `2αθ − β² > 0`.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("beta", self.beta),
            ("x1", self.x1),
            ("x2", self.x2),
            ("maturity", self.maturity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if !self.strike.is_finite() {
            return Err(Error::Config("strike must be finite".into()));
        }
        let feller = 2.0 * self.alpha * self.theta - self.beta * self.beta;
        if feller <= 0.0 {
            return Err(Error::Config(format!("Feller condition fails: 2 alpha theta - beta^2 = {feller}")));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> [f64; 3] {
        [self.x1, self.x2, 0.0]
    }
}

/// The Heston system with two Brownian motions. Square roots are taken of
/// `max(y_2, 0)`.
#[derive(Clone, Copy, Debug)]
pub struct HestonModel {
    params: HestonParams,
    drift_shift: f64,
    variance_drift_shift: f64,
    rho_beta: f64,
    beta_perp: f64,
}

impl HestonModel {
    pub fn new(params: HestonParams) -> Result<Self> {
        params.validate()?;
        let HestonParams { rho, beta, .. } = params;
        Ok(Self {
            params,
            drift_shift: rho * beta / 4.0,
            variance_drift_shift: beta * beta / 4.0,
            rho_beta: rho * beta,
            beta_perp: beta * (1.0 - rho * rho).sqrt(),
        })
    }

    pub fn params(&self) -> &HestonParams {
        &self.params
    }
}

impl SdeModel<3> for HestonModel {
    fn brownian_dim(&self) -> usize {
        2
    }

    fn drift(&self, y: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        [
            y[0] * (p.mu - y[1] / 2.0 - self.drift_shift),
            p.alpha * (p.theta - y[1]) - self.variance_drift_shift,
            y[0],
        ]
    }

    fn diffusion(&self, i: usize, y: &[f64; 3]) -> [f64; 3] {
        let r = y[1].max(0.0).sqrt();
        match i {
            1 => [y[0] * r, self.rho_beta * r, 0.0],
            2 => [0.0, self.beta_perp * r, 0.0],
            _ => [0.0; 3],
        }
    }

    fn ito_drift(&self, y: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        [p.mu * y[0], p.alpha * (p.theta - y[1]), y[0]]
    }

    fn combined(&self, y: &[f64; 3], a0: f64, a: &[f64]) -> [f64; 3] {
        let p = &self.params;
        let r = y[1].max(0.0).sqrt();
        let (a1, a2) = (a.first().copied().unwrap_or(0.0), a.get(1).copied().unwrap_or(0.0));
        [
            a0 * y[0] * (p.mu - y[1] / 2.0 - self.drift_shift) + a1 * y[0] * r,
            a0 * (p.alpha * (p.theta - y[1]) - self.variance_drift_shift) + (a1 * self.rho_beta + a2 * self.beta_perp) * r,
            a0 * y[0],
        ]
    }

    fn out_of_domain(&self, y: &[f64; 3]) -> bool {
        y[1] < 0.0
    }
}

/// `max(y_3 / T − K, 0)`, undiscounted.
pub fn asian_payoff(state: &[f64; 3], params: &HestonParams) -> f64 {
    (state[2] / params.maturity - params.strike).max(0.0)
}

/// The splitting used by the NN scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingChoice {
    pub u: f64,
    pub branch: Branch,
}

impl Default for SplittingChoice {
    fn default() -> Self {
        Self { u: 0.75, branch: Branch::Lower }
    }
}

impl SplittingChoice {
    pub fn params(&self) -> Result<SchemeParams<f64>> {
        solution_params(self.u, self.branch)
    }
}

/// One pricing run. With `romberg`, `n` is the fine partition and must be
/// even; the estimates at `n / 2` and `n` steps are extrapolated with the
/// scheme's weak order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSpec {
    pub scheme: SchemeKind,
    pub n: usize,
    pub mode: Mode,
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub skip: u64,
    #[serde(default)]
    pub romberg: bool,
    #[serde(default)]
    pub splitting: SplittingChoice,
    /// Built-in tableau name or JSON file; `rk5-butcher` when absent.
    #[serde(default)]
    pub tableau: Option<String>,
}

impl PriceSpec {
    pub fn new(scheme: SchemeKind, n: usize, mode: Mode, samples: u64) -> Self {
        Self { scheme, n, mode, samples, seed: 0, skip: 0, romberg: false, splitting: SplittingChoice::default(), tableau: None }
    }

    /// `nn`, `em+romberg` and so on.
    pub fn label(&self) -> String {
        if self.romberg {
            format!("{}+romberg", self.scheme)
        } else {
            self.scheme.to_string()
        }
    }

    fn integrator(&self) -> Result<IntegrationScheme> {
        let tableau = ButcherTableau::load(self.tableau.as_deref().unwrap_or("rk5-butcher"))?;
        let order = tableau.declared_order();
        IntegrationScheme::certified(tableau, order)
    }

    fn plan(&self, steps: usize) -> Result<SchemeStepPlan> {
        match self.scheme {
            SchemeKind::Nn => SchemeStepPlan::nn(steps, 2, &self.splitting.params()?, self.integrator()?),
            SchemeKind::Em => SchemeStepPlan::em(steps, 2),
            SchemeKind::Nv => SchemeStepPlan::nv(steps, 2, self.integrator()?),
        }
    }

    fn source(&self, dim: usize) -> UniformSource {
        match self.mode {
            Mode::Mc => UniformSource::Pseudo { seed: self.seed, dim },
            Mode::Qmc => UniformSource::Sobol { dim, skip: self.skip },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceResult {
    pub spec: PriceSpec,
    pub report: EstimatorReport,
    /// Steps in which the variance left `[0, ∞)`, over all simulated steps.
    pub guard_fraction: f64,
}

fn price_plain(
    model: &HestonModel,
    spec: &PriceSpec,
    steps: usize,
    reference: Option<f64>,
) -> Result<(EstimatorReport, u64, u64)> {
    let plan = spec.plan(steps)?;
    let source = spec.source(plan.uniform_dim());
    let x0 = model.params().initial_state();
    let horizon = model.params().maturity;
    let hits = AtomicU64::new(0);
    let report = estimate(
        |u| {
            let path = run_path(&plan, model, &x0, horizon, u)?;
            if path.guard_hits > 0 {
                hits.fetch_add(path.guard_hits as u64, Ordering::Relaxed);
            }
            Ok(asian_payoff(&path.state, model.params()))
        },
        &source,
        spec.samples,
        spec.mode,
        reference,
    )?;
    Ok((report, hits.into_inner(), spec.samples * steps as u64))
}

/// Prices the Asian call. `reference` is only used for the QMC error.
pub fn price(params: &HestonParams, spec: &PriceSpec, reference: Option<f64>) -> Result<PriceResult> {
    let model = HestonModel::new(*params)?;
    if !spec.romberg {
        let (report, hits, steps) = price_plain(&model, spec, spec.n, reference)?;
        return Ok(PriceResult { spec: spec.clone(), report, guard_fraction: hits as f64 / steps as f64 });
    }
    if spec.n < 2 || spec.n % 2 != 0 {
        return Err(Error::Config(format!("Romberg needs an even fine partition, got n = {}", spec.n)));
    }
    let p = spec.scheme.weak_order();
    let (coarse, hits_c, steps_c) = price_plain(&model, spec, spec.n / 2, None)?;
    let (fine, hits_f, steps_f) = price_plain(&model, spec, spec.n, None)?;
    let batch_means: Vec<f64> =
        coarse.batch_means.iter().zip(&fine.batch_means).map(|(&c, &f)| romberg(c, f, p)).collect();
    debug_assert_eq!(batch_means.len(), BATCHES);
    let estimate = romberg(coarse.estimate, fine.estimate, p);
    let error = match spec.mode {
        Mode::Mc => Some(2.0 * sample_std(&batch_means)),
        Mode::Qmc => reference.map(|r| (estimate - r).abs()),
    };
    let report = EstimatorReport {
        estimate,
        error,
        samples: spec.samples,
        batch_means,
        seconds: coarse.seconds + fine.seconds,
    };
    let guard_fraction = (hits_c + hits_f) as f64 / (steps_c + steps_f) as f64;
    Ok(PriceResult { spec: spec.clone(), report, guard_fraction })
}

/// A grid of runs: every combination of `n` and `samples`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub scheme: SchemeKind,
    pub n: Vec<usize>,
    pub samples: Vec<u64>,
    pub mode: Mode,
    #[serde(default)]
    pub romberg: bool,
    #[serde(default)]
    pub tableau: Option<String>,
}

/// Input of [`convergence_study`]. `discretization` sweeps vary `n` at large
/// `samples`; `integration` sweeps vary `samples` at fixed `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub params: HestonParams,
    #[serde(default)]
    pub splitting: SplittingChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub skip: u64,
    /// Defaults to [`REFERENCE_PRICE`] for the default parameters.
    #[serde(default)]
    pub reference: Option<f64>,
    #[serde(default)]
    pub discretization: Vec<Sweep>,
    #[serde(default)]
    pub integration: Vec<Sweep>,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference.or((self.params == HestonParams::default()).then_some(REFERENCE_PRICE))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub sweep: &'static str,
    pub result: PriceResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkResult {
    pub reference: Option<f64>,
    pub rows: Vec<StudyRow>,
}

/// Runs every cell of every sweep, in the order listed.
pub fn convergence_study(config: &StudyConfig) -> Result<BenchmarkResult> {
    config.params.validate()?;
    let reference = config.reference();
    let mut rows = Vec::new();
    for (name, sweeps) in [("discretization", &config.discretization), ("integration", &config.integration)] {
        for sweep in sweeps {
            for &n in &sweep.n {
                for &samples in &sweep.samples {
                    let spec = PriceSpec {
                        scheme: sweep.scheme,
                        n,
                        mode: sweep.mode,
                        samples,
                        seed: config.seed,
                        skip: config.skip,
                        romberg: sweep.romberg,
                        splitting: config.splitting,
                        tableau: sweep.tableau.clone(),
                    };
                    rows.push(StudyRow { sweep: name, result: price(&config.params, &spec, reference)? });
                }
            }
        }
    }
    Ok(BenchmarkResult { reference, rows })
}

/// Column header of [`to_csv`]; `seconds` is appended when timings are requested.
pub const CSV_HEADER: &str = "sweep,scheme,mode,n,M,estimate,error,guard_fraction";

fn csv_line(out: &mut String, sweep: &str, r: &PriceResult, with_timings: bool) {
    let error = r.report.error.map(|e| format!("{e:.10e}")).unwrap_or_default();
    let _ = write!(
        out,
        "{},{},{},{},{},{:.12e},{},{:.3e}",
        sweep,
        r.spec.label(),
        r.spec.mode,
        r.spec.n,
        r.spec.samples,
        r.report.estimate,
        error,
        r.guard_fraction
    );
    if with_timings {
        let _ = write!(out, ",{:.3}", r.report.seconds);
    }
    out.push('\n');
}

/// CSV with [`CSV_HEADER`]. Without timings the output depends only on the inputs.
pub fn to_csv(rows: &[(&str, &PriceResult)], with_timings: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    if with_timings {
        out.push_str(",seconds");
    }
    out.push('\n');
    for (sweep, r) in rows {
        csv_line(&mut out, sweep, r, with_timings);
    }
    out
}

impl BenchmarkResult {
    pub fn to_csv(&self, with_timings: bool) -> String {
        let rows: Vec<(&str, &PriceResult)> = self.rows.iter().map(|r| (r.sweep, &r.result)).collect();
        to_csv(&rows, with_timings)
    }
}
