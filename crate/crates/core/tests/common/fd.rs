//! Central finite differences for blocks with two inputs and a
//! `sum(w * out)` objective.
//!
//! The networks are only piecewise smooth (ReLU, max pooling). A probe is
//! discarded as straddling a kink when the central differences at `H` and
//! `H / 2` disagree, since on a smooth stretch both agree to `O(H^2)`.

use bagau_core::params::ParameterSet;
use bagau_core::{Gradients, Tensor, Var};

use super::{input_grad, probe_indices, rel_error, rng};

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-5;
/// Relative disagreement between the two step sizes that marks a kink.
pub const KINK: f64 = 1e-6;
/// Largest share of probes that may be discarded as kinks.
pub const MAX_KINK_SHARE: f64 = 0.1;

/// Probe counts of one check.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub probes: usize,
    pub kinks: usize,
    /// Largest per-tensor relative error.
    pub worst: f64,
}

/// Central difference at `H`, or `None` when the probe straddles a kink.
fn central(mut eval: impl FnMut(f64) -> f64) -> Option<f64> {
    let d1 = (eval(H) - eval(-H)) / (2.0 * H);
    let d2 = (eval(H / 2.0) - eval(-H / 2.0)) / H;
    let scale = d1.abs().max(d2.abs()).max(1e-3);
    ((d1 - d2).abs() <= KINK * scale).then_some(d2)
}

fn compare(what: &str, analytic: &[f64], numeric: &[f64], report: &mut FdReport) {
    let e = rel_error(analytic, numeric);
    report.worst = report.worst.max(e);
    assert!(e < TOL, "{what}: relative error {e:e}");
}

/// Checks every parameter (up to `per_tensor` seeded probes each) and both
/// inputs against the analytic gradient.
pub fn check_block<F>(
    params: &mut ParameterSet<f64>,
    a: &Tensor<f64>,
    b: &Tensor<f64>,
    per_tensor: usize,
    mut run: F,
) -> FdReport
where
    F: FnMut(&ParameterSet<f64>, &Tensor<f64>, &Tensor<f64>, bool) -> (f64, Option<(Gradients<f64>, Var, Var)>),
{
    let (_, grads) = run(params, a, b, true);
    let (grads, va, vb) = grads.unwrap();
    let mut r = rng(99);
    let mut report = FdReport::default();

    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.entry(id).name.clone();
        let len = params.get(id).len();
        let analytic_all = grads.param(id).map(|g| g.data().to_vec()).unwrap_or(vec![0.0; len]);
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for i in probe_indices(len, per_tensor, &mut r) {
            report.probes += 1;
            let orig = params.get(id).data()[i];
            let d = central(|delta| {
                params.get_mut(id).data_mut()[i] = orig + delta;
                let v = run(params, a, b, false).0;
                params.get_mut(id).data_mut()[i] = orig;
                v
            });
            match d {
                Some(d) => {
                    analytic.push(analytic_all[i]);
                    numeric.push(d);
                }
                None => report.kinks += 1,
            }
        }
        compare(&format!("parameter {name}"), &analytic, &numeric, &mut report);
    }

    for (first, v, t) in [(true, va, a), (false, vb, b)] {
        let analytic_all = input_grad(&grads, v);
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for i in probe_indices(t.len(), per_tensor, &mut r) {
            report.probes += 1;
            let d = central(|delta| {
                let mut tp = t.clone();
                tp.data_mut()[i] += delta;
                if first {
                    run(params, &tp, b, false).0
                } else {
                    run(params, a, &tp, false).0
                }
            });
            match d {
                Some(d) => {
                    analytic.push(analytic_all[i]);
                    numeric.push(d);
                }
                None => report.kinks += 1,
            }
        }
        compare(
            if first { "first input" } else { "second input" },
            &analytic,
            &numeric,
            &mut report,
        );
    }
    let share = report.kinks as f64 / report.probes as f64;
    assert!(
        share <= MAX_KINK_SHARE,
        "{} of {} probes straddle kinks",
        report.kinks,
        report.probes
    );
    report
}
