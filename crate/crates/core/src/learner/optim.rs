use serde::{Deserialize, Serialize};

use super::{LearnerError, Params};
use crate::scalar::Scalar;

/// A parameter update rule `theta <- U(theta, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UpdateRule {
    Sgd {
        lr: f64,
    },
    Adam {
        #[serde(default = "adam::lr")]
        lr: f64,
        #[serde(default = "adam::beta1")]
        beta1: f64,
        #[serde(default = "adam::beta2")]
        beta2: f64,
        #[serde(default = "adam::eps")]
        eps: f64,
    },
}

mod adam {
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
}

impl Default for UpdateRule {
    fn default() -> Self {
        Self::adam(adam::lr())
    }
}

impl UpdateRule {
    pub fn sgd(lr: f64) -> Self {
        Self::Sgd { lr }
    }

    /// Adam with the usual `beta1 = 0.9, beta2 = 0.999, eps = 1e-8`.
    pub fn adam(lr: f64) -> Self {
        Self::Adam { lr, beta1: adam::beta1(), beta2: adam::beta2(), eps: adam::eps() }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let ok = match *self {
            Self::Sgd { lr } => lr > 0.0 && lr.is_finite(),
            Self::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && lr.is_finite() && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LearnerError::InvalidRule(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State<T> {
    Sgd,
    Adam { m: Vec<T>, v: Vec<T>, t: u64 },
}

/// An update rule together with its per-agent state (Adam moments and step count).
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    rule: UpdateRule,
    state: State<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(rule: UpdateRule, num_params: usize) -> Result<Self, LearnerError> {
        rule.validate()?;
        let state = match rule {
            UpdateRule::Sgd { .. } => State::Sgd,
            UpdateRule::Adam { .. } => State::Adam { m: vec![T::zero(); num_params], v: vec![T::zero(); num_params], t: 0 },
        };
        Ok(Self { rule, state })
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    /// Number of updates applied so far (always 0 for SGD, which keeps no state).
    pub fn steps(&self) -> u64 {
        match &self.state {
            State::Sgd => 0,
            State::Adam { t, .. } => *t,
        }
    }

    /// Applies one update in place. On a non-finite result the parameters
    /// are left modified and an error is returned.
    pub fn apply_update(&mut self, params: &mut Params<T>, grad: &[T]) -> Result<(), LearnerError> {
        if grad.len() != params.len() {
            return Err(LearnerError::ParamLen { expected: params.len(), got: grad.len() });
        }
        let theta = params.as_mut_slice();
        let mut finite = true;
        match (&mut self.state, self.rule) {
            (State::Sgd, UpdateRule::Sgd { lr }) => {
                let lr = T::lit(lr);
                for (p, &g) in theta.iter_mut().zip(grad) {
                    *p -= lr * g;
                    finite &= p.is_finite();
                }
            }
            (State::Adam { m, v, t }, UpdateRule::Adam { lr, beta1, beta2, eps }) => {
                if m.len() != theta.len() {
                    return Err(LearnerError::ParamLen { expected: m.len(), got: theta.len() });
                }
                *t += 1;
                let inv_bc1 = T::lit(1.0 / (1.0 - beta1.powf(*t as f64)));
                let inv_bc2 = T::lit(1.0 / (1.0 - beta2.powf(*t as f64)));
                let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                let (c1, c2) = (T::one() - b1, T::one() - b2);
                let (lr, eps) = (T::lit(lr), T::lit(eps));
                // Moments of parameters that stop receiving gradient decay
                // geometrically into the subnormal range, where arithmetic is
                // very slow on common hardware. They are flushed to zero.
                let tiny = T::min_positive_value();
                let flush = |x: T| if x.abs() < tiny { T::zero() } else { x };
                for (((p, &g), m), v) in theta.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = flush(b1 * *m + c1 * g);
                    *v = flush(b2 * *v + c2 * g * g);
                    *p -= lr * (*m * inv_bc1) / ((*v * inv_bc2).sqrt() + eps);
                    finite &= p.is_finite();
                }
            }
            _ => unreachable!("state always matches the rule"),
        }
        if finite {
            Ok(())
        } else {
            Err(LearnerError::NonFinite("parameters"))
        }
    }
}
