//! Projected-gradient minimization of the reduced functional over the admissible set.
//!
//! Steps are taken in the lumped-mass metric: `v⁺ = P(v − s M⁻¹g)`, accepted when
//! `J(v⁺) ≤ J(v) − (c/s)‖v⁺ − v‖²_M`. The trial step of each iteration is the Barzilai–Borwein
//! step of the previous pair, clipped to `[s_min, s_max]`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::forward::{solve_state, NewtonOptions};
use crate::metrics::interface_width;
use crate::objective::{trace_distance, Evaluation, ObjectiveParams, ReducedFunctional};
use crate::phase_field::{project_admissible, PhaseField};
use crate::scalar::Real;
use crate::fem::SourceField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerOptions<T> {
    pub max_iters: usize,
    pub armijo_c: T,
    pub backtrack_factor: T,
    /// Trial step of the first iteration.
    pub s0: T,
    pub s_min: T,
    pub s_max: T,
    /// Relative decrease below which an iteration counts as stalled.
    pub tol_j: T,
    /// Stop when ‖v − P(v − M⁻¹g)‖_M falls below this.
    pub tol_g: T,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
}

impl<T: Real> Default for OptimizerOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 400,
            armijo_c: T::lit(1e-4),
            backtrack_factor: T::lit(0.5),
            s0: T::one(),
            s_min: T::lit(1e-12),
            s_max: T::lit(1e8),
            tol_j: T::lit(1e-8),
            tol_g: T::lit(1e-12),
            patience: 5,
        }
    }
}

impl<T: Real> OptimizerOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.armijo_c > T::zero()
            && self.armijo_c < T::lit(0.5)
            && self.backtrack_factor > T::zero()
            && self.backtrack_factor < T::one()
            && self.s_min > T::zero()
            && self.s0 >= self.s_min
            && self.s_max >= self.s0
            && self.tol_j > T::zero()
            && self.tol_g > T::zero()
            && self.patience > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("optimizer options out of range".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub misfit: f64,
    pub gl: f64,
    pub step: f64,
    pub pgnorm: f64,
    pub active: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ProjectedGradient,
    RelativeDecrease,
    IterationCap,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptHistory {
    /// Record 0 is the initial point (step 0); each later record is an accepted iterate.
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
    pub stagnated: bool,
}

impl OptHistory {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r).expect("record serializes")).unwrap();
        }
        out
    }

    pub fn final_j(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.j)
    }

    /// Fraction of accepted iterations with a strict decrease of J.
    pub fn strict_decrease_fraction(&self) -> f64 {
        let n = self.records.len().saturating_sub(1);
        if n == 0 {
            return 1.0;
        }
        let k = self.records.windows(2).filter(|w| w[1].j < w[0].j).count();
        k as f64 / n as f64
    }
}

fn mass_norm_sq<T: Real>(m: &[T], a: &[T]) -> T {
    m.iter().zip(a).map(|(&mi, &x)| mi * x * x).sum()
}

fn count_active<T: Real>(disc: &Discretization<T>, v: &[T]) -> usize {
    v.iter()
        .enumerate()
        .filter(|&(k, &x)| !disc.labels().is_frozen(k) && (x == T::zero() || x == T::one()))
        .count()
}

/// Projected gradient descent at fixed ε.
pub fn minimize_fixed_epsilon<T: Real>(
    functional: &ReducedFunctional<'_, T>,
    v0: &PhaseField<T>,
    opts: &OptimizerOptions<T>,
) -> Result<(PhaseField<T>, OptHistory)> {
    opts.validate()?;
    let disc = functional.disc;
    let labels = disc.labels();
    let m = disc.lumped_mass();
    // Re-validate in case v0 was built for another labelling.
    let mut v = PhaseField::new(v0.values().to_vec(), labels)?.into_inner();
    let mut cur: Evaluation<T> = functional.evaluate(&v, None)?;
    let (mut g, mut adj) = functional.gradient(&v, &cur)?;

    let pg_norm = |v: &[T], g: &[T]| -> T {
        let raw: Vec<T> = v.iter().zip(g).zip(m).map(|((&x, &gi), &mi)| x - gi / mi).collect();
        let p = project_admissible(&raw, labels);
        let d: Vec<T> = v.iter().zip(p.values()).map(|(&a, &b)| a - b).collect();
        mass_norm_sq(m, &d).sqrt()
    };

    let mut records = vec![IterRecord {
        iter: 0,
        j: cur.j.as_f64(),
        misfit: cur.misfit.as_f64(),
        gl: cur.gl.as_f64(),
        step: 0.0,
        pgnorm: pg_norm(&v, &g.g).as_f64(),
        active: count_active(disc, &v),
    }];
    let mut s = opts.s0;
    let mut stalled = 0;
    let mut stop = StopReason::IterationCap;
    for iter in 1..=opts.max_iters {
        if pg_norm(&v, &g.g) <= opts.tol_g {
            stop = StopReason::ProjectedGradient;
            break;
        }
        let mut accepted = None;
        while s >= opts.s_min {
            let raw: Vec<T> = v.iter().zip(&g.g).zip(m).map(|((&x, &gi), &mi)| x - s * gi / mi).collect();
            let trial = project_admissible(&raw, labels).into_inner();
            let dv: Vec<T> = trial.iter().zip(&v).map(|(&a, &b)| a - b).collect();
            let dn = mass_norm_sq(m, &dv);
            if dn == T::zero() {
                break;
            }
            // A failed state solve at the trial point counts as a rejected step.
            if let Ok(e) = functional.evaluate(&trial, Some(&cur.state.u)) {
                let slack = T::lit(1e-14) * cur.j.abs();
                if e.j <= cur.j - opts.armijo_c / s * dn + slack {
                    accepted = Some((trial, dv, e));
                    break;
                }
            }
            s *= opts.backtrack_factor;
        }
        let Some((trial, dv, e)) = accepted else {
            stop = StopReason::Stagnation;
            break;
        };
        let (g_new, adj_new) = functional.gradient_from(&trial, &e, Some(&adj.p))?;
        let step = s;
        // Barzilai–Borwein trial step for the next iteration.
        let dg: T = dv.iter().zip(g_new.g.iter().zip(&g.g)).map(|(&d, (&a, &b))| d * (a - b)).sum();
        let dn = mass_norm_sq(m, &dv);
        s = if dg > T::zero() { dn / dg } else { s * T::lit(2.0) };
        s = s.max(opts.s_min).min(opts.s_max);

        let rel = (cur.j - e.j) / cur.j.abs().max(T::min_positive_value());
        stalled = if rel < opts.tol_j { stalled + 1 } else { 0 };
        v = trial;
        cur = e;
        g = g_new;
        adj = adj_new;
        records.push(IterRecord {
            iter,
            j: cur.j.as_f64(),
            misfit: cur.misfit.as_f64(),
            gl: cur.gl.as_f64(),
            step: step.as_f64(),
            pgnorm: pg_norm(&v, &g.g).as_f64(),
            active: count_active(disc, &v),
        });
        if stalled >= opts.patience {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    let history = OptHistory {
        records,
        stop,
        stagnated: stop == StopReason::Stagnation,
    };
    Ok((PhaseField::new(v, labels)?, history))
}

/// Decreasing ε values with fixed δ and α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationSchedule<T> {
    pub epsilons: Vec<T>,
    pub delta: T,
    pub alpha: T,
    pub gamma: T,
}

impl<T: Real> ContinuationSchedule<T> {
    /// Strictly decreasing and no ε below `min_epsilon` (typically 2h).
    pub fn validate(&self, min_epsilon: T) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidArgument("empty epsilon schedule".into()));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument("epsilon schedule must be strictly decreasing".into()));
        }
        let last = *self.epsilons.last().unwrap();
        if last < min_epsilon * (T::one() - T::lit(1e-9)) {
            return Err(Error::InvalidArgument(format!(
                "final epsilon {last} is below the resolution floor {min_epsilon}"
            )));
        }
        Ok(())
    }

    pub fn stage_params(&self, k: usize) -> ObjectiveParams<T> {
        ObjectiveParams {
            delta: self.delta,
            epsilon: self.epsilons[k],
            alpha: self.alpha,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub epsilon: f64,
    /// J of the warm start evaluated with this stage's parameters.
    pub initial_j: f64,
    pub final_j: f64,
    pub misfit: f64,
    /// GL energy without the α factor.
    pub gl: f64,
    /// Median 0.1–0.9 transition length along grid lines; `None` without transitions.
    pub interface_width: Option<f64>,
    pub history: OptHistory,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult<T> {
    pub v: PhaseField<T>,
    pub stages: Vec<StageReport>,
}

/// Minimizes for each ε of the schedule, warm-starting every stage from the previous minimizer.
pub fn run_continuation<T: Real>(
    functional: &ReducedFunctional<'_, T>,
    schedule: &ContinuationSchedule<T>,
    v0: &PhaseField<T>,
    opts: &OptimizerOptions<T>,
) -> Result<ContinuationResult<T>> {
    let disc = functional.disc;
    schedule.validate(T::lit(2.0) * disc.mesh().h() / T::SQRT_2())?;
    let mut v = v0.clone();
    let mut stages = Vec::with_capacity(schedule.epsilons.len());
    for k in 0..schedule.epsilons.len() {
        let stage = functional.with_params(schedule.stage_params(k))?;
        let (next, history) = minimize_fixed_epsilon(&stage, &v, opts)?;
        let last = history.records.last().expect("history has the initial record");
        stages.push(StageReport {
            epsilon: schedule.epsilons[k].as_f64(),
            initial_j: history.records[0].j,
            final_j: last.j,
            misfit: last.misfit,
            gl: last.gl,
            interface_width: interface_width(disc.mesh(), next.values()).map(|w| w.as_f64()),
            history,
        });
        v = next;
    }
    Ok(ContinuationResult { v, stages })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaSweepRow {
    pub delta: f64,
    pub trace_error: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaSweepReport {
    pub rows: Vec<DeltaSweepRow>,
    pub strictly_decreasing: bool,
    /// error(last δ) / error(first δ).
    pub end_ratio: f64,
}

/// ‖trace(u_δ(v)) − reference‖_{L²(Σ)} for each δ, with `v` held fixed.
pub fn delta_sweep<T: Real>(
    disc: &Discretization<T>,
    f: &SourceField<T>,
    v: &PhaseField<T>,
    deltas: &[T],
    reference_trace: &[T],
    newton: &NewtonOptions<T>,
) -> Result<DeltaSweepReport> {
    if deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("deltas must be strictly decreasing".into()));
    }
    if reference_trace.len() != disc.labels().sigma_nodes.len() {
        return Err(Error::ShapeMismatch("reference trace does not match sigma".into()));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let s = solve_state(disc, v.values(), delta, f, newton)?;
        rows.push(DeltaSweepRow {
            delta: delta.as_f64(),
            trace_error: trace_distance(disc, &s.trace(disc), reference_trace).as_f64(),
            newton_iters: s.newton_iters,
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].trace_error < w[0].trace_error);
    let end_ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if a.trace_error > 0.0 => b.trace_error / a.trace_error,
        _ => 0.0,
    };
    Ok(DeltaSweepReport {
        rows,
        strictly_decreasing,
        end_ratio,
    })
}

/// `α = c·η²` for η > 0, otherwise `floor`.
pub fn alpha_from_noise<T: Real>(eta: T, c: T, floor: T) -> Result<T> {
    if !(eta >= T::zero()) || !(c > T::zero()) || !(floor > T::zero()) {
        return Err(Error::InvalidArgument("alpha_from_noise needs eta >= 0, c > 0, floor > 0".into()));
    }
    Ok(if eta > T::zero() { c * eta * eta } else { floor })
}

/// Cells whose mean phase value is below ½.
pub fn recovered_cells<T: Real>(disc: &Discretization<T>, v: &[T]) -> Vec<usize> {
    crate::phase_field::cell_means(disc.mesh(), v)
        .iter()
        .enumerate()
        .filter(|(_, &m)| m < T::lit(0.5))
        .map(|(c, _)| c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::CoefficientField;
    use crate::geometry::{build_structured_mesh, mark_regions, Rect, RegionSpec, Side};
    use crate::objective::default_gamma;

    fn disc(n: usize) -> Discretization<f64> {
        let mesh = build_structured_mesh(n, n, Rect::unit()).unwrap();
        let spec = RegionSpec {
            omega1: Rect::new(0.0, 0.0, 1.0, 0.2).unwrap(),
            omega2: Rect::new(0.0, 0.0, 1.0, 0.1).unwrap(),
            sigma_side: Side::Bottom,
            sigma_interval: [0.0, 1.0],
        };
        let labels = mark_regions(&mesh, &spec).unwrap();
        let a = CoefficientField::identity(&mesh);
        Discretization::new(mesh, labels, a).unwrap()
    }

    #[test]
    fn alpha_rule() {
        assert_eq!(alpha_from_noise(0.0, 10.0, 1e-6).unwrap(), 1e-6);
        assert!((alpha_from_noise(0.01f64, 10.0, 1e-6).unwrap() - 1e-3).abs() < 1e-18);
        let a: f64 = alpha_from_noise(0.02, 3.0, 1e-6).unwrap();
        let b = alpha_from_noise(0.01, 3.0, 1e-6).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
        assert!(alpha_from_noise(-1.0, 1.0, 1e-6).is_err());
    }

    #[test]
    fn schedule_validation() {
        let s = ContinuationSchedule {
            epsilons: vec![0.1, 0.1],
            delta: 1e-3,
            alpha: 1e-3,
            gamma: 1.0,
        };
        assert!(s.validate(0.01).is_err());
        let s = ContinuationSchedule {
            epsilons: vec![0.1, 0.005],
            ..s
        };
        assert!(s.validate(0.01).is_err());
    }

    #[test]
    fn exact_data_at_start_stops_immediately() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let newton = NewtonOptions::default();
        let v0 = PhaseField::uniform(d.labels(), 1.0).unwrap();
        let s = solve_state(&d, v0.values(), 1e-3, &f, &newton).unwrap();
        let meas = s.trace(&d);
        let params = ObjectiveParams {
            delta: 1e-3,
            epsilon: 0.1,
            alpha: 0.0,
            gamma: default_gamma(),
        };
        let rf = ReducedFunctional::new(&d, &f, &meas, params, newton).unwrap();
        let (v, h) = minimize_fixed_epsilon(&rf, &v0, &OptimizerOptions::default()).unwrap();
        assert_eq!(h.stop, StopReason::ProjectedGradient);
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.records[0].pgnorm, 0.0);
        assert_eq!(v, v0);
    }

    #[test]
    fn iterates_are_admissible_and_monotone() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let newton = NewtonOptions::default();
        let shape = crate::geometry::CavityShape::disk([0.5, 0.6], 0.2).unwrap();
        let truth = crate::forward::solve_cavity_reference(&d, &shape, &f, &newton).unwrap();
        let meas = truth.trace(&d);
        let params = ObjectiveParams {
            delta: 1e-3,
            epsilon: 0.25,
            alpha: 1e-4,
            gamma: default_gamma(),
        };
        let rf = ReducedFunctional::new(&d, &f, &meas, params, newton).unwrap();
        let v0 = PhaseField::uniform(d.labels(), 1.0).unwrap();
        let opts = OptimizerOptions {
            max_iters: 30,
            ..Default::default()
        };
        let (v, h) = minimize_fixed_epsilon(&rf, &v0, &opts).unwrap();
        for w in h.records.windows(2) {
            assert!(w[1].j <= w[0].j * (1.0 + 1e-12));
        }
        assert!(h.final_j() < h.records[0].j);
        assert!(PhaseField::new(v.values().to_vec(), d.labels()).is_ok());
        let jsonl = h.to_jsonl();
        assert_eq!(jsonl.lines().count(), h.records.len());
        assert!(jsonl.lines().next().unwrap().contains("\"J\""));
    }

    #[test]
    fn huge_alpha_gives_no_cavity() {
        let d = disc(16);
        let f = SourceField::plateau(d.mesh(), d.labels(), 1.0, d.labels().omega2_rect).unwrap();
        let newton = NewtonOptions::default();
        let shape = crate::geometry::CavityShape::disk([0.5, 0.6], 0.2).unwrap();
        let truth = crate::forward::solve_cavity_reference(&d, &shape, &f, &newton).unwrap();
        let meas = truth.trace(&d);
        let params = ObjectiveParams {
            delta: 1e-3,
            epsilon: 0.125,
            alpha: 1e3,
            gamma: default_gamma(),
        };
        let rf = ReducedFunctional::new(&d, &f, &meas, params, newton).unwrap();
        let v0 = PhaseField::uniform(d.labels(), 1.0).unwrap();
        let (v, _) = minimize_fixed_epsilon(&rf, &v0, &OptimizerOptions::default()).unwrap();
        assert!(recovered_cells(&d, v.values()).is_empty());
    }
}
