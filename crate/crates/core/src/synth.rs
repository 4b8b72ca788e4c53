//! Synthetic measurements from fine-mesh reference solves.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Discretization, SourceField};
use crate::forward::{solve_cavity_reference, NewtonOptions};
use crate::geometry::{CavityShape, Side};
use crate::scalar::Real;

/// Boundary data on Σ, ordered by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTrace<T> {
    pub s: Vec<T>,
    pub values: Vec<T>,
    pub meta: TraceMeta,
}

/// Sidecar metadata of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub eta: f64,
    pub seed: u64,
    pub fine_mesh_id: String,
    pub realized_l2_noise: f64,
}

impl<T: Real> MeasurementTrace<T> {
    pub fn new(s: Vec<T>, values: Vec<T>, meta: TraceMeta) -> Result<Self> {
        if s.len() != values.len() || s.is_empty() {
            return Err(Error::ShapeMismatch("trace needs matching, nonempty columns".into()));
        }
        if s[0] < T::zero() || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("trace coordinates must be nonnegative and strictly increasing".into()));
        }
        if !(meta.eta >= 0.0) {
            return Err(Error::Parse("eta must be nonnegative".into()));
        }
        Ok(Self { s, values, meta })
    }

    /// Checks that the coordinates coincide with the Σ nodes of `disc`.
    pub fn check_matches(&self, disc: &Discretization<T>) -> Result<()> {
        let arc = &disc.labels().sigma_arc;
        let tol = disc.mesh().h() * T::lit(1e-6);
        if arc.len() != self.s.len() || arc.iter().zip(&self.s).any(|(&a, &b)| (a - b).abs() > tol) {
            return Err(Error::ShapeMismatch(format!(
                "trace has {} samples that do not match the {} sigma nodes of the mesh",
                self.s.len(),
                arc.len()
            )));
        }
        if let Some(&last) = arc.last() {
            if last > disc.labels().sigma_length() + disc.labels().sigma_arc[0] + tol {
                return Err(Error::ShapeMismatch("trace extends beyond sigma".into()));
            }
        }
        Ok(())
    }

    /// Refuses data generated on the mesh used for reconstruction unless `allow` is set.
    pub fn guard_inverse_crime(&self, reconstruction_mesh_id: &str, allow: bool) -> Result<()> {
        if !allow && self.meta.fine_mesh_id == reconstruction_mesh_id {
            return Err(Error::InverseCrime(format!(
                "measurement was synthesized on the reconstruction mesh {reconstruction_mesh_id}"
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,value\n");
        for (s, v) in self.s.iter().zip(&self.values) {
            writeln!(out, "{},{}", s.as_f64(), v.as_f64()).unwrap();
        }
        out
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.meta)?)
    }

    pub fn from_csv(csv: &str, sidecar: &str) -> Result<Self> {
        let meta: TraceMeta = serde_json::from_str(sidecar)?;
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("s,value") => {}
            other => return Err(Error::Parse(format!("expected header 's,value', found {other:?}"))),
        }
        let mut s = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines.enumerate() {
            let mut cols = line.split(',');
            let parse = |c: Option<&str>| -> Result<T> {
                c.ok_or_else(|| Error::Parse(format!("row {}: missing column", k + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Parse(format!("row {}: {e}", k + 1)))
            };
            s.push(parse(cols.next())?);
            values.push(parse(cols.next())?);
            if cols.next().is_some() {
                return Err(Error::Parse(format!("row {}: too many columns", k + 1)));
            }
        }
        Self::new(s, values, meta)
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `at`; constant extension outside the range.
pub fn interpolate_linear<T: Real>(xs: &[T], ys: &[T], at: &[T]) -> Vec<T> {
    at.iter()
        .map(|&x| {
            let k = xs.partition_point(|&a| a <= x);
            if k == 0 {
                ys[0]
            } else if k == xs.len() {
                ys[xs.len() - 1]
            } else {
                let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                ys[k - 1] + t * (ys[k] - ys[k - 1])
            }
        })
        .collect()
}

/// Solves the cavity problem on `fine`, samples the trace at the Σ nodes of `coarse` and adds
/// Gaussian noise of standard deviation `η·max|clean|`.
pub fn generate_measurement<T: Real>(
    fine: &Discretization<T>,
    f_fine: &SourceField<T>,
    coarse: &Discretization<T>,
    shape: &CavityShape<T>,
    newton: &NewtonOptions<T>,
    eta: f64,
    seed: u64,
) -> Result<MeasurementTrace<T>> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument("eta must be nonnegative".into()));
    }
    let ratio = coarse.mesh().h() / fine.mesh().h();
    if ratio < T::lit(2.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "synthesis mesh must be at least twice as fine as the reconstruction mesh (ratio {ratio})"
        )));
    }
    let state = solve_cavity_reference(fine, shape, f_fine, newton)?;
    let fine_trace = state.trace(fine);
    let s = coarse.labels().sigma_arc.clone();
    let clean = interpolate_linear(&fine.labels().sigma_arc, &fine_trace, &s);

    let scale = clean.iter().map(|x| x.abs().as_f64()).fold(0.0, f64::max);
    let noise: Vec<f64> = if eta > 0.0 && scale > 0.0 {
        let dist = Normal::new(0.0, eta * scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..s.len()).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; s.len()]
    };
    let values: Vec<T> = clean.iter().zip(&noise).map(|(&c, &e)| c + T::lit(e)).collect();
    let noise_t: Vec<T> = noise.iter().map(|&e| T::lit(e)).collect();
    let zeros = vec![T::zero(); noise_t.len()];
    let realized = crate::objective::trace_distance(coarse, &noise_t, &zeros).as_f64();
    MeasurementTrace::new(
        s,
        values,
        TraceMeta {
            eta,
            seed,
            fine_mesh_id: fine.mesh().id().to_string(),
            realized_l2_noise: realized,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogCase<T> {
    pub name: &'static str,
    pub shape: CavityShape<T>,
}

/// Benchmark cavities for the unit square with the measured strip at the bottom.
pub fn catalog_cases<T: Real>() -> Result<Vec<CatalogCase<T>>> {
    let l = T::lit;
    Ok(vec![
        CatalogCase {
            name: "disk",
            shape: CavityShape::disk([l(0.5), l(0.5)], l(0.2))?,
        },
        CatalogCase {
            name: "ellipse",
            shape: CavityShape::ellipse([l(0.35), l(0.6)], [l(0.18), l(0.1)], l(std::f64::consts::PI / 6.0))?,
        },
        CatalogCase {
            name: "square",
            shape: CavityShape::polygon(vec![[l(0.55), l(0.45)], [l(0.8), l(0.45)], [l(0.8), l(0.7)], [l(0.55), l(0.7)]])?,
        },
        CatalogCase {
            name: "half-disk-top",
            shape: CavityShape::half_disk([l(0.5), l(1.0)], l(0.25), Side::Top)?,
        },
        CatalogCase {
            name: "empty",
            shape: CavityShape::Empty,
        },
    ])
}

pub fn catalog_case<T: Real>(name: &str) -> Result<CavityShape<T>> {
    catalog_cases()?
        .into_iter()
        .find(|c| c.name == name)
        .map(|c| c.shape)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown catalog case '{name}'")))
}
