//! Central-difference verification of tape gradients.

use super::{Parameter, Tape, Tensor, Var};
use crate::error::Result;

/// `|a − b| / max(|a|, |b|, 1e-8)`; zero when both are zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Entries whose stencil straddles a kink (relu, max, nearest-neighbour switch).
    pub skipped: usize,
    /// Entries whose tape and numeric gradients are both too small for the
    /// central difference to resolve at `tol` (see [`GradCheck::noise_ulps`]).
    pub below_noise: usize,
    pub failures: usize,
    pub max_rel_err: f64,
    /// `(flat index, tape gradient, numeric gradient)` of the worst checked entry.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.failures == 0)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped).sum()
    }

    pub fn below_noise(&self) -> usize {
        self.params.iter().map(|p| p.below_noise).sum()
    }
}

/// Settings for [`GradCheck::run`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub h: f64,
    pub tol: f64,
    /// An entry is skipped when its one-sided slopes disagree by more than
    /// this fraction of their magnitude, i.e. the ±h stencil crosses a kink.
    /// `None` checks every entry.
    pub kink_tol: Option<f64>,
    /// Rounding in `f(x ± h)` limits the numeric slope to about
    /// `noise_ulps · ε · |f| / h`; entries where both gradients fall below that
    /// floor divided by `tol` and that would otherwise fail are counted as
    /// `below_noise` instead of checked.
    /// `None` checks every entry.
    pub noise_ulps: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-5,
            tol: 1e-4,
            kink_tol: Some(1e-4),
            noise_ulps: Some(2.0),
        }
    }
}

/// Checks every entry of `params` with no kink skipping.
pub fn finite_difference_check<F>(f: F, params: &[Parameter], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    GradCheck {
        h,
        tol,
        kink_tol: None,
        noise_ulps: None,
    }
    .run(f, params)
}

impl GradCheck {
    /// Compares the tape gradient of `f` against central differences.
    ///
    /// `f` builds a scalar from the parameter handles it is given, in the
    /// same order as `params`.
    pub fn run<F>(&self, mut f: F, params: &[Parameter]) -> Result<GradCheckReport>
    where
        F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut values: Vec<Tensor> = params.iter().map(|p| p.value().clone()).collect();

        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .enumerate()
            .map(|(i, v)| tape.param(i, v.clone()))
            .collect();
        let loss = f(&mut tape, &vars)?;
        let base = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .zip(&values)
            .map(|(&v, t)| grads.wrt(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect();
        drop(tape);

        let mut eval = |values: &[Tensor]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
            let loss = f(&mut tape, &vars)?;
            tape.value(loss).item()
        };

        let mut report = GradCheckReport {
            params: Vec::with_capacity(params.len()),
            tol: self.tol,
        };
        for (pi, param) in params.iter().enumerate() {
            let mut check = ParamCheck {
                name: param.name.clone(),
                checked: 0,
                skipped: 0,
                below_noise: 0,
                failures: 0,
                max_rel_err: 0.0,
                worst: None,
            };
            for e in 0..values[pi].len() {
                let x0 = values[pi].data()[e];
                values[pi].data_mut()[e] = x0 + self.h;
                let plus = eval(&values)?;
                values[pi].data_mut()[e] = x0 - self.h;
                let minus = eval(&values)?;
                values[pi].data_mut()[e] = x0;

                if let Some(kink_tol) = self.kink_tol {
                    let right = (plus - base) / self.h;
                    let left = (base - minus) / self.h;
                    let scale = right.abs().max(left.abs()).max(1e-8);
                    if (right - left).abs() > kink_tol * scale {
                        check.skipped += 1;
                        continue;
                    }
                }

                let numeric = (plus - minus) / (2.0 * self.h);
                let a = analytic[pi][e];
                let err = relative_error(a, numeric);
                if let Some(ulps) = self.noise_ulps {
                    let floor = ulps * f64::EPSILON * plus.abs().max(minus.abs()) / self.h;
                    if err > self.tol && a.abs().max(numeric.abs()) * self.tol < floor {
                        check.below_noise += 1;
                        continue;
                    }
                }
                check.checked += 1;
                if err > self.tol {
                    check.failures += 1;
                }
                if err > check.max_rel_err || check.worst.is_none() {
                    check.max_rel_err = check.max_rel_err.max(err);
                    check.worst = Some((e, a, numeric));
                }
            }
            report.params.push(check);
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_one() {
        let p = Parameter::new("x", Tensor::vector(vec![1.0]));
        let report = finite_difference_check(
            |t, v| {
                let s = t.square(v[0])?;
                t.sum(s)
            },
            &[p],
            1e-5,
            1e-8,
        )
        .unwrap();
        let (_, a, n) = report.params[0].worst.unwrap();
        assert_eq!(a, 2.0);
        assert!((n - 2.0).abs() < 1e-8);
        assert!(report.passed());
        assert!(report.max_rel_err() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let p = Parameter::new("x", Tensor::vector(vec![0.3, -2.0]));
        let report = finite_difference_check(
            |t, _| Ok(t.constant(Tensor::scalar(4.0))),
            &[p],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(report.max_rel_err(), 0.0);
        assert!(report.passed());
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu evaluated exactly at its kink: tape says 0, numeric says 0.5
        let p = Parameter::new("x", Tensor::vector(vec![0.0]));
        let f = |t: &mut Tape, v: &[Var]| {
            let r = t.relu(v[0])?;
            t.sum(r)
        };
        let strict = finite_difference_check(f, std::slice::from_ref(&p), 1e-5, 1e-4).unwrap();
        assert!(!strict.passed());
        let lenient = GradCheck::default().run(f, &[p]).unwrap();
        assert_eq!(lenient.skipped(), 1);
        assert!(lenient.passed());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn tiny_gradients_below_rounding_are_set_aside() {
        // a large constant offset swamps a slope of 1e-9 in rounding
        let p = Parameter::new("x", Tensor::vector(vec![0.5]));
        let f = |t: &mut Tape, v: &[Var]| {
            let s = t.scale(v[0], 1e-9)?;
            let c = t.constant(Tensor::vector(vec![1e3]));
            let y = t.add(s, c)?;
            t.sum(y)
        };
        let report = GradCheck::default().run(f, &[p.clone()]).unwrap();
        assert_eq!((report.checked(), report.below_noise()), (0, 1));
        let strict = finite_difference_check(f, &[p], 1e-5, 1e-4).unwrap();
        assert_eq!(strict.checked(), 1);
    }
}
