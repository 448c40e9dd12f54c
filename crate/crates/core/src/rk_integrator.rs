//! Explicit Runge-Kutta flows of autonomous vector fields on `R^N`.

use crate::error::{Error, Result};
use crate::rk_trees::{check_order, ButcherTableau};
use crate::scalar::Scalar;

/// Upper bound on stage count; stages live on the stack.
pub const MAX_STAGES: usize = 16;

/// An autonomous vector field `W: R^N -> R^N`.
pub trait VectorField<const N: usize> {
    fn eval(&self, y: &[f64; N]) -> [f64; N];
}

impl<const N: usize, F> VectorField<N> for F
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    fn eval(&self, y: &[f64; N]) -> [f64; N] {
        self(y)
    }
}

/// An explicit method whose order has been certified against every rooted tree.
#[derive(Clone, Debug)]
pub struct IntegrationScheme {
    tableau: ButcherTableau,
    order: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl IntegrationScheme {
    /// Accepts `tableau` only if it satisfies all order conditions up to `order`.
    pub fn certified(tableau: ButcherTableau, order: usize) -> Result<Self> {
        let k = tableau.stages();
        if k > MAX_STAGES {
            return Err(Error::Config(format!("{k} stages exceeds the limit of {MAX_STAGES}")));
        }
        let report = check_order(&tableau, order);
        if let Some(bad) = report.failures().next() {
            return Err(Error::Config(format!(
                "tableau `{}` fails the order-{} condition for {}: {} != {}",
                tableau.name(),
                order,
                bad.tree,
                bad.lhs,
                bad.rhs
            )));
        }
        let a = tableau.a().iter().flat_map(|row| row.iter().map(Scalar::to_f64)).collect();
        let b = tableau.b().iter().map(Scalar::to_f64).collect();
        Ok(Self { tableau, order, a, b })
    }

    /// A built-in tableau certified at its declared order.
    pub fn builtin(name: &str) -> Result<Self> {
        let t = ButcherTableau::builtin(name)?;
        let order = t.declared_order();
        Self::certified(t, order)
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// One step `Y(y0; W, s) = y0 + s Σ b_i W(Y_i)` with
    /// `Y_i = y0 + s Σ_{j<i} a_ij W(Y_j)`.
    pub fn step<const N: usize, W: VectorField<N> + ?Sized>(
        &self,
        field: &W,
        y0: &[f64; N],
        s: f64,
    ) -> Result<[f64; N]> {
        let k = self.stages();
        let mut slopes = [[0.0f64; N]; MAX_STAGES];
        for i in 0..k {
            let mut yi = *y0;
            let row = &self.a[i * k..i * k + i];
            for (j, &aij) in row.iter().enumerate() {
                if aij != 0.0 {
                    for (y, w) in yi.iter_mut().zip(&slopes[j]) {
                        *y += s * aij * w;
                    }
                }
            }
            slopes[i] = field.eval(&yi);
            if !slopes[i].iter().all(|v| v.is_finite()) {
                return Err(Error::Integration { stage: i + 1, step: 0 });
            }
        }
        let mut y = *y0;
        for (bi, w) in self.b.iter().zip(&slopes[..k]) {
            if *bi != 0.0 {
                for (yj, wj) in y.iter_mut().zip(w) {
                    *yj += s * bi * wj;
                }
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration { stage: k, step: 0 });
        }
        Ok(y)
    }

    /// `g(W)(y0)`: the time-one step, for fields that already carry the step size.
    pub fn flow<const N: usize, W: VectorField<N> + ?Sized>(&self, field: &W, y0: &[f64; N]) -> Result<[f64; N]> {
        self.step(field, y0, 1.0)
    }

    /// The time-one flow split into `substeps` equal steps.
    pub fn flow_substeps<const N: usize, W: VectorField<N> + ?Sized>(
        &self,
        field: &W,
        y0: &[f64; N],
        substeps: usize,
    ) -> Result<[f64; N]> {
        let n = substeps.max(1);
        let h = 1.0 / n as f64;
        let mut y = *y0;
        for k in 0..n {
            y = self.step(field, &y, h).map_err(|e| match e {
                Error::Integration { stage, .. } => Error::Integration { stage, step: k + 1 },
                other => other,
            })?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_identity() {
        for name in ButcherTableau::BUILTIN_NAMES {
            let rk = IntegrationScheme::builtin(name).unwrap();
            let y = rk.step(&|_: &[f64; 3]| [0.0; 3], &[1.0, -2.0, 3.5], 0.7).unwrap();
            assert_eq!(y, [1.0, -2.0, 3.5]);
        }
    }

    #[test]
    fn certification_rejects_overclaimed_order() {
        let t = ButcherTableau::builtin("rk5-butcher").unwrap();
        assert!(matches!(IntegrationScheme::certified(t, 6), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_stage_is_reported() {
        let rk = IntegrationScheme::builtin("rk5-butcher").unwrap();
        let blowup = |y: &[f64; 1]| [1.0 / (y[0] - 1.0)];
        let err = rk.step(&blowup, &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Integration { stage: 1, .. }));
        let err = rk.flow_substeps(&|y: &[f64; 1]| [y[0] * y[0] * 1e200], &[1e100], 3).unwrap_err();
        assert!(matches!(err, Error::Integration { step: 1, .. }));
    }

    #[test]
    fn exponential_growth_with_rk7() {
        let rk = IntegrationScheme::builtin("rk7-butcher").unwrap();
        let f = |y: &[f64; 1]| [y[0]];
        let err = |s: f64| (rk.step(&f, &[1.0], s).unwrap()[0] - s.exp()).abs();
        assert!(err(1.0) < 1e-4);
        let ratio = err(0.25) / err(0.125);
        assert!(ratio.log2() > 7.0 && ratio.log2() < 8.5, "ratio {ratio}");
    }

    #[test]
    fn steps_are_bit_reproducible() {
        let rk = IntegrationScheme::builtin("rk7-butcher").unwrap();
        let f = |y: &[f64; 2]| [y[1].sin(), -y[0] * y[1]];
        let a = rk.step(&f, &[0.3, 0.9], 0.2).unwrap();
        let b = rk.step(&f, &[0.3, 0.9], 0.2).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }
}
