//! The reduced functional `J(v) = ½‖u(v) − u_meas‖²_Σ + α·GL_ε(v)`.

use serde::Serialize;

use crate::adjoint::{reduced_gradient, solve_adjoint_from, AdjointSolution, GradientField};
use crate::error::{Error, Result};
use crate::fem::{Discretization, SourceField};
use crate::forward::{solve_state_from, NewtonOptions, StateSolution};
use crate::scalar::{dot, Real};

/// Normalization of the Ginzburg–Landau term, 4√2/π.
pub fn default_gamma<T: Real>() -> T {
    T::lit(4.0) * T::SQRT_2() / T::PI()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveParams<T> {
    pub delta: T,
    pub epsilon: T,
    pub alpha: T,
    pub gamma: T,
}

impl<T: Real> ObjectiveParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta <= T::one()) {
            return Err(Error::InvalidArgument(format!("delta = {} outside (0, 1]", self.delta)));
        }
        if !(self.epsilon > T::zero()) || !(self.gamma > T::zero()) {
            return Err(Error::InvalidArgument("epsilon and gamma must be positive".into()));
        }
        if !(self.alpha >= T::zero()) {
            return Err(Error::InvalidArgument("alpha must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `γ(ε vᵀK₁v + (1/ε) Σ m_i v_i(1 − v_i))` with the lumped mass m.
pub fn gl_energy<T: Real>(disc: &Discretization<T>, v: &[T], epsilon: T, gamma: T) -> T {
    let grad = disc.unweighted_stiffness().bilinear(v, v);
    let pot: T = disc
        .lumped_mass()
        .iter()
        .zip(v)
        .map(|(&m, &x)| m * x * (T::one() - x))
        .sum();
    gamma * (epsilon * grad + pot / epsilon)
}

/// Exact gradient of [`gl_energy`].
pub fn gl_gradient<T: Real>(disc: &Discretization<T>, v: &[T], epsilon: T, gamma: T) -> Vec<T> {
    let k1v = disc.unweighted_stiffness().matvec(v);
    k1v.iter()
        .zip(disc.lumped_mass())
        .zip(v)
        .map(|((&kv, &m), &x)| gamma * (T::lit(2.0) * epsilon * kv + m * (T::one() - T::lit(2.0) * x) / epsilon))
        .collect()
}

/// Full-length nodal vector equal to `u − meas` on Σ and zero elsewhere.
pub fn sigma_difference<T: Real>(disc: &Discretization<T>, u: &[T], meas: &[T]) -> Vec<T> {
    let mut d = vec![T::zero(); disc.n()];
    for (&k, &m) in disc.labels().sigma_nodes.iter().zip(meas) {
        d[k] = u[k] - m;
    }
    d
}

/// `½ dᵀ M_Σ d`.
pub fn misfit<T: Real>(disc: &Discretization<T>, u: &[T], meas: &[T]) -> T {
    let d = sigma_difference(disc, u, meas);
    T::lit(0.5) * disc.sigma_mass().bilinear(&d, &d)
}

/// ‖a − b‖_{L²(Σ)} for two traces given on the Σ nodes.
pub fn trace_distance<T: Real>(disc: &Discretization<T>, a: &[T], b: &[T]) -> T {
    (T::lit(2.0) * misfit_traces(disc, a, b)).max(T::zero()).sqrt()
}

fn misfit_traces<T: Real>(disc: &Discretization<T>, a: &[T], b: &[T]) -> T {
    let mut d = vec![T::zero(); disc.n()];
    for ((&k, &x), &y) in disc.labels().sigma_nodes.iter().zip(a).zip(b) {
        d[k] = x - y;
    }
    T::lit(0.5) * disc.sigma_mass().bilinear(&d, &d)
}

#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub j: T,
    pub misfit: T,
    /// GL energy without the α factor.
    pub gl: T,
    pub state: StateSolution<T>,
}

/// The reduced functional for one data set and one parameter choice.
#[derive(Debug, Clone)]
pub struct ReducedFunctional<'a, T> {
    pub disc: &'a Discretization<T>,
    pub f: &'a SourceField<T>,
    /// Measured values on the Σ nodes, ordered by arc length.
    pub meas: &'a [T],
    pub params: ObjectiveParams<T>,
    pub newton: NewtonOptions<T>,
}

impl<'a, T: Real> ReducedFunctional<'a, T> {
    pub fn new(
        disc: &'a Discretization<T>,
        f: &'a SourceField<T>,
        meas: &'a [T],
        params: ObjectiveParams<T>,
        newton: NewtonOptions<T>,
    ) -> Result<Self> {
        params.validate()?;
        newton.validate()?;
        if meas.len() != disc.labels().sigma_nodes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} measurements for {} sigma nodes",
                meas.len(),
                disc.labels().sigma_nodes.len()
            )));
        }
        Ok(Self {
            disc,
            f,
            meas,
            params,
            newton,
        })
    }

    pub fn with_params(&self, params: ObjectiveParams<T>) -> Result<Self> {
        Self::new(self.disc, self.f, self.meas, params, self.newton)
    }

    /// Solves the state (optionally warm-started) and evaluates both terms.
    pub fn evaluate(&self, v: &[T], warm: Option<&[T]>) -> Result<Evaluation<T>> {
        let p = &self.params;
        let state = solve_state_from(self.disc, v, p.delta, self.f, &self.newton, warm)?;
        let misfit = misfit(self.disc, &state.u, self.meas);
        let gl = gl_energy(self.disc, v, p.epsilon, p.gamma);
        Ok(Evaluation {
            j: misfit + p.alpha * gl,
            misfit,
            gl,
            state,
        })
    }

    pub fn value(&self, v: &[T]) -> Result<T> {
        Ok(self.evaluate(v, None)?.j)
    }

    /// Reduced gradient at the point of `eval`.
    pub fn gradient(&self, v: &[T], eval: &Evaluation<T>) -> Result<(GradientField<T>, AdjointSolution<T>)> {
        self.gradient_from(v, eval, None)
    }

    /// As [`Self::gradient`], warm-starting the adjoint solve from `p0`.
    pub fn gradient_from(
        &self,
        v: &[T],
        eval: &Evaluation<T>,
        p0: Option<&[T]>,
    ) -> Result<(GradientField<T>, AdjointSolution<T>)> {
        let adj = solve_adjoint_from(self.disc, v, self.params.delta, &eval.state, self.meas, &self.newton, p0)?;
        let g = reduced_gradient(self.disc, v, &self.params, &eval.state, &adj)?;
        Ok((g, adj))
    }

    /// Directional derivative `g·w`.
    pub fn directional(&self, g: &GradientField<T>, w: &[T]) -> T {
        dot(&g.g, w)
    }
}
