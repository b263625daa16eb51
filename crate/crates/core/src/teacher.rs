//! Mean-teacher lifecycle: the teacher starts as a copy of the student and
//! then tracks it by an exponential moving average of the weights.

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// EMA momentum and the number of updates applied so far.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmaState {
    momentum: f64,
    pub step: u64,
}

impl EmaState {
    pub fn new(momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!("EMA momentum must be in [0, 1), got {momentum}")));
        }
        Ok(EmaState { momentum, step: 0 })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// One update: `v′ ← α·v′ + (1 − α)·v` for every teacher value.
    pub fn update(&mut self, teacher: &mut ModelParams, student: &ModelParams) -> Result<()> {
        ema_update(teacher, student, self.momentum)?;
        self.step += 1;
        Ok(())
    }
}

/// A deep copy of the student with cleared gradients.
pub fn init_teacher(student: &ModelParams) -> ModelParams {
    let mut teacher = student.clone();
    teacher.zero_grad();
    teacher
}

pub fn ema_update(teacher: &mut ModelParams, student: &ModelParams, momentum: f64) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::invalid(format!("EMA momentum must be in [0, 1), got {momentum}")));
    }
    if !teacher.same_layout(student) {
        return Err(Error::invalid("ema_update: teacher and student parameters differ in names or shapes"));
    }
    let keep = 1.0 - momentum;
    for (t, s) in teacher.iter_mut().zip(student.iter()) {
        for (tv, &sv) in t.values_mut().iter_mut().zip(s.value().data()) {
            *tv = momentum * *tv + keep * sv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, Task};

    fn tiny(seed: u64) -> ModelParams {
        ModelParams::init(Arch::tiny(Task::Classification, 3, 16), seed).unwrap()
    }

    fn fill(p: &mut ModelParams, v: f64) {
        p.iter_mut().for_each(|q| q.values_mut().fill(v));
    }

    #[test]
    fn momentum_range() {
        assert!(EmaState::new(0.0).is_ok());
        assert!(EmaState::new(0.99).is_ok());
        assert!(EmaState::new(1.0).is_err());
        assert!(EmaState::new(-0.1).is_err());
    }

    #[test]
    fn init_is_a_deep_copy() {
        let mut s = tiny(1);
        let t = init_teacher(&s);
        assert_eq!(t, s);
        assert!(t.names().eq(s.names()));
        fill(&mut s, 5.0);
        assert_ne!(t, s);
    }

    #[test]
    fn zero_momentum_copies_the_student() {
        let s = tiny(1);
        let mut t = tiny(2);
        ema_update(&mut t, &s, 0.0).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn one_step_from_zero_to_one() {
        let mut s = tiny(1);
        let mut t = tiny(1);
        fill(&mut s, 1.0);
        fill(&mut t, 0.0);
        ema_update(&mut t, &s, 0.99).unwrap();
        for p in t.iter() {
            assert!(p.value().data().iter().all(|&v| (v - 0.01).abs() < 1e-15));
        }
    }

    #[test]
    fn geometric_convergence_over_a_hundred_steps() {
        let s = tiny(1);
        let start = tiny(2);
        let mut t = start.clone();
        let mut ema = EmaState::new(0.9).unwrap();
        for step in 1..=100 {
            ema.update(&mut t, &s).unwrap();
            let factor = 0.9f64.powi(step);
            for ((tp, sp), p0) in t.iter().zip(s.iter()).zip(start.iter()) {
                for ((&v, &target), &v0) in tp.value().data().iter().zip(sp.value().data()).zip(p0.value().data()) {
                    let expect = factor * (v0 - target).abs();
                    assert!(((v - target).abs() - expect).abs() < 1e-12);
                }
            }
        }
        assert_eq!(ema.step, 100);
    }

    #[test]
    fn update_is_linear_in_the_student() {
        let (a, b) = (2.0, -0.5);
        let s1 = tiny(1);
        let s2 = tiny(2);
        let mut mix = s1.clone();
        for (m, q) in mix.iter_mut().zip(s2.iter()) {
            for (v, &w) in m.values_mut().iter_mut().zip(q.value().data()) {
                *v = a * *v + b * w;
            }
        }
        let mut t_mix = tiny(3);
        fill(&mut t_mix, 0.0);
        let mut t1 = t_mix.clone();
        let mut t2 = t_mix.clone();
        ema_update(&mut t_mix, &mix, 0.7).unwrap();
        ema_update(&mut t1, &s1, 0.7).unwrap();
        ema_update(&mut t2, &s2, 0.7).unwrap();
        for ((m, p1), p2) in t_mix.iter().zip(t1.iter()).zip(t2.iter()) {
            for ((&v, &x), &y) in m.value().data().iter().zip(p1.value().data()).zip(p2.value().data()) {
                assert!((v - (a * x + b * y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let s = ModelParams::init(Arch::tiny(Task::Classification, 4, 16), 0).unwrap();
        let mut t = tiny(0);
        assert!(ema_update(&mut t, &s, 0.5).is_err());
    }
}
