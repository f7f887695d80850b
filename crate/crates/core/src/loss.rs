//! Tversky index and loss over soft set cardinalities.
//!
//! With `p` the predicted probabilities and `g` the binary ground truth,
//! `|PG| = sum p*g`, `|P\G| = sum p*(1-g)`, `|G\P| = sum (1-p)*g` and
//!
//! ```text
//! T = (|PG| + eps) / (|PG| + alpha*|P\G| + (1-alpha)*|G\P| + eps)
//! ```
//!
//! The loss is `1 - T`, taken jointly over every pixel of a batch.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Soft true positive, false positive and false negative mass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SoftCounts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
}

impl SoftCounts {
    pub fn merge(self, other: SoftCounts) -> SoftCounts {
        SoftCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("tversky alpha must lie in (0,1), got {alpha}")))
    }
}

/// Accumulates soft counts in f64.
pub fn soft_counts<T: Scalar>(p: &[T], g: &[T]) -> Result<SoftCounts> {
    if p.len() != g.len() {
        return Err(Error::Shape(format!(
            "prediction has {} values, ground truth {}",
            p.len(),
            g.len()
        )));
    }
    let mut c = SoftCounts::default();
    for (&pv, &gv) in p.iter().zip(g) {
        let (pv, gv) = (pv.as_f64(), gv.as_f64());
        if !(0.0..=1.0).contains(&pv) {
            return Err(Error::Numerical(format!("probability {pv} outside [0,1]")));
        }
        if gv != 0.0 && gv != 1.0 {
            return Err(Error::Data(format!("ground truth value {gv} is not binary")));
        }
        c.tp += pv * gv;
        c.fp += pv * (1.0 - gv);
        c.fn_ += (1.0 - pv) * gv;
    }
    Ok(c)
}

pub fn tversky_from_counts(c: SoftCounts, alpha: f64, eps: f64) -> f64 {
    (c.tp + eps) / (c.tp + alpha * c.fp + (1.0 - alpha) * c.fn_ + eps)
}

pub fn tversky_index<T: Scalar>(p: &[T], g: &[T], alpha: f64, eps: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(tversky_from_counts(soft_counts(p, g)?, alpha, eps))
}

pub fn tversky_loss<T: Scalar>(p: &[T], g: &[T], alpha: f64, eps: f64) -> Result<f64> {
    tversky_index(p, g, alpha, eps).map(|t| 1.0 - t)
}

/// `d(1 - T)/dp_i` for every pixel of `g`, where `T` is evaluated on the
/// (possibly larger) set summarised by `total`. Passing counts gathered
/// over several micro-batches gives the exact gradient of the joint loss.
pub fn tversky_loss_grad<T: Scalar>(g: &[T], total: SoftCounts, alpha: f64, eps: f64) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    let num = total.tp + eps;
    let den = total.tp + alpha * total.fp + (1.0 - alpha) * total.fn_ + eps;
    let d2 = den * den;
    // dN/dp = g and dD/dp = g + alpha*(1-g) - (1-alpha)*g = alpha
    let on = (den - num * alpha) / d2;
    let off = -num * alpha / d2;
    let (on, off) = (T::from_f64_lossy(-on), T::from_f64_lossy(-off));
    Ok(g.iter().map(|&gv| if gv > T::zero() { on } else { off }).collect())
}
