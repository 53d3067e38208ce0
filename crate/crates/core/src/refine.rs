//! Least-squares refinement of a closed-form estimate against every recorded
//! power.
//!
//! Unknowns are the element fields `b_ik exp(j phi_ik) = x_R + j x_C`. The
//! residual of a reading is model power minus measured power; the noise term
//! is unobservable and does not appear in the model. The global phase is
//! fixed inside the solver by dropping the imaginary part of `Ant0Ph0`, so
//! there are `2 N 2^Q - 1` parameters.
//!
//! The solver is Levenberg-Marquardt with Marquardt diagonal scaling: the
//! damping is multiplied by 10 after a rejected step and divided by 3 after
//! an accepted one.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::calibrate::CalibrationEstimate;
use crate::error::{Error, Result};
use crate::measurement::{Element, MeasurementRecord, Probe};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSettings {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub damping_init: f64,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            damping_init: 1e-3,
        }
    }
}

impl RefineSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iterations == 0
            || !positive(self.gradient_tol)
            || !positive(self.step_tol)
            || !positive(self.damping_init)
        {
            return Err(Error::Config(format!(
                "refine settings must all be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sum of squared power residuals for element fields `fields` (row-major
/// over `(antenna, setting)`).
pub fn objective(
    config: &ArrayConfig,
    fields: &[Complex64],
    records: &[MeasurementRecord],
) -> Result<f64> {
    if fields.len() != config.n_elements() {
        return Err(Error::Config(format!(
            "expected {} element fields, got {}",
            config.n_elements(),
            fields.len()
        )));
    }
    let at = |el: Element| -> Result<Complex64> {
        config.check_element(el)?;
        Ok(fields[el.antenna * config.n_phases() + el.phase])
    };
    records.iter().try_fold(0.0, |acc, rec| {
        let model = match rec.probe {
            Probe::Individual(a) => at(a)?.norm_sqr(),
            Probe::Pair(a, b) => (at(a)? + at(b)?).norm_sqr(),
        };
        Ok(acc + (model - rec.power).powi(2))
    })
}

/// The least-squares problem over the gauge-fixed real parameter vector.
///
/// Parameter 0 is the real part of `Ant0Ph0`; element `e >= 1` (flat index)
/// owns parameters `2e - 1` (real) and `2e` (imaginary).
#[derive(Debug, Clone)]
pub struct PowerFit<'a> {
    config: ArrayConfig,
    records: &'a [MeasurementRecord],
    // flat element indices of each record: (first, second or usize::MAX)
    index: Vec<(usize, usize)>,
}

const NONE: usize = usize::MAX;

impl<'a> PowerFit<'a> {
    pub fn new(config: ArrayConfig, records: &'a [MeasurementRecord]) -> Result<Self> {
        let flat = |el| -> Result<usize> {
            config.check_element(el)?;
            Ok(el.antenna * config.n_phases() + el.phase)
        };
        let index = records
            .iter()
            .map(|rec| match rec.probe {
                Probe::Individual(a) => Ok((flat(a)?, NONE)),
                Probe::Pair(a, b) => Ok((flat(a)?, flat(b)?)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            records,
            index,
        })
    }

    pub fn n_params(&self) -> usize {
        2 * self.config.n_elements() - 1
    }

    pub fn n_residuals(&self) -> usize {
        self.records.len()
    }

    fn re_param(e: usize) -> usize {
        if e == 0 {
            0
        } else {
            2 * e - 1
        }
    }

    fn im_param(e: usize) -> Option<usize> {
        (e != 0).then(|| 2 * e)
    }

    fn field(x: &DVector<f64>, e: usize) -> Complex64 {
        match Self::im_param(e) {
            Some(im) => Complex64::new(x[Self::re_param(e)], x[im]),
            None => Complex64::new(x[0], 0.0),
        }
    }

    /// Packs element fields; the imaginary part of `Ant0Ph0` is dropped, so
    /// callers should rotate into the gauge first.
    pub fn pack(&self, fields: &[Complex64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_params());
        for (e, z) in fields.iter().enumerate() {
            x[Self::re_param(e)] = z.re;
            if let Some(im) = Self::im_param(e) {
                x[im] = z.im;
            }
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> Vec<Complex64> {
        (0..self.config.n_elements())
            .map(|e| Self::field(x, e))
            .collect()
    }

    fn combined(x: &DVector<f64>, (a, b): (usize, usize)) -> Complex64 {
        let mut z = Self::field(x, a);
        if b != NONE {
            z += Self::field(x, b);
        }
        z
    }

    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.records.len(),
            self.records
                .iter()
                .zip(&self.index)
                .map(|(rec, &ix)| Self::combined(x, ix).norm_sqr() - rec.power),
        )
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.residuals(x).norm_squared()
    }

    /// Analytic Jacobian: `d|s|^2/d re = 2 Re(s)`, `d|s|^2/d im = 2 Im(s)`
    /// for every element contributing to the summed field `s`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.records.len(), self.n_params());
        for (row, &(a, b)) in self.index.iter().enumerate() {
            let s = Self::combined(x, (a, b));
            for e in [a, b].into_iter().filter(|&e| e != NONE) {
                jac[(row, Self::re_param(e))] += 2.0 * s.re;
                if let Some(im) = Self::im_param(e) {
                    jac[(row, im)] += 2.0 * s.im;
                }
            }
        }
        jac
    }
}

/// One accepted step (row 0 is the starting point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub damping: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub estimate: CalibrationEstimate,
    /// Gradient or step tolerance reached before the iteration limit.
    pub converged: bool,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub trace: Vec<TraceRow>,
}

/// Refines `initial` against `records`. The objective at the output never
/// exceeds the objective at the input.
pub fn refine(
    initial: &CalibrationEstimate,
    records: &[MeasurementRecord],
    settings: &RefineSettings,
) -> Result<RefineOutcome> {
    settings.validate()?;
    let config = *initial.config();
    let fit = PowerFit::new(config, records)?;

    let origin = initial.phase(Element::new(0, 0));
    let rotate = Complex64::from_polar(1.0, -origin);
    let start: Vec<Complex64> = (0..config.n_elements())
        .map(|e| {
            let el = Element::new(e / config.n_phases(), e % config.n_phases());
            initial.response(el) * rotate
        })
        .collect();

    let mut x = fit.pack(&start);
    let mut f = fit.objective(&x);
    let initial_objective = f;
    let mut damping = settings.damping_init;
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: f,
        damping,
        step_norm: 0.0,
    }];

    let mut converged = false;
    let mut iterations = 0;
    let mut normal: Option<(DMatrix<f64>, DVector<f64>)> = None;
    while iterations < settings.max_iterations {
        iterations += 1;
        let (jtj, grad) = match &normal {
            Some(ng) => ng,
            None => {
                let jac = fit.jacobian(&x);
                let grad = jac.tr_mul(&fit.residuals(&x));
                if grad.amax() <= settings.gradient_tol {
                    converged = true;
                    break;
                }
                normal.insert((jac.tr_mul(&jac), grad))
            }
        };

        let mut lhs = jtj.clone();
        for d in 0..lhs.nrows() {
            lhs[(d, d)] += damping * jtj[(d, d)].max(1e-12);
        }
        let Some(chol) = lhs.cholesky() else {
            damping *= 10.0;
            continue;
        };
        let step = chol.solve(&(-grad));
        let step_norm = step.norm();
        if step_norm <= settings.step_tol * (x.norm() + settings.step_tol) {
            converged = true;
            break;
        }

        let candidate = &x + &step;
        let f_new = fit.objective(&candidate);
        if f_new < f {
            x = candidate;
            f = f_new;
            damping /= 3.0;
            normal = None;
            trace.push(TraceRow {
                iteration: iterations,
                objective: f,
                damping,
                step_norm,
            });
        } else {
            damping *= 10.0;
            if damping > 1e20 {
                break;
            }
        }
    }

    let fields = fit.unpack(&x);
    let estimate = CalibrationEstimate::from_parts(
        config,
        fields.iter().map(|z| z.norm()).collect(),
        fields.iter().map(|z| z.arg()).collect(),
        initial.refs,
    )?;
    Ok(RefineOutcome {
        estimate,
        converged,
        iterations,
        initial_objective,
        final_objective: f,
        trace,
    })
}
