//! Central finite-difference gradient checking against analytic gradients.

use rand::Rng;

use crate::params::ParamSet;
use crate::tensor::Tensor;

/// One checked scalar parameter entry.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }
}

/// Relative error with a floor so agreeing near-zero pairs count as exact.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m < 1e-8 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// Compare analytic gradients with central differences on `n_checks`
/// randomly chosen scalar parameters.
///
/// `loss_fn` evaluates the scalar objective for the current parameter
/// values; `grad_fn` returns per-parameter gradient tensors aligned with the
/// param set order. Both must be pure functions of the parameters.
pub fn check_gradients(
    ps: &mut ParamSet,
    n_checks: usize,
    step: f64,
    rng: &mut impl Rng,
    loss_fn: impl Fn(&ParamSet) -> f64,
    grad_fn: impl Fn(&ParamSet) -> Vec<Tensor>,
) -> GradCheckReport {
    let grads = grad_fn(ps);
    assert_eq!(grads.len(), ps.len());
    let mut entries = Vec::with_capacity(n_checks);
    let total: usize = ps.scalar_count();
    assert!(total > 0, "empty parameter set");
    for _ in 0..n_checks {
        let mut flat = rng.gen_range(0..total);
        let mut chosen = None;
        for r in ps.refs() {
            let n = ps.get(r).numel();
            if flat < n {
                chosen = Some((r, flat));
                break;
            }
            flat -= n;
        }
        let (r, idx) = chosen.expect("index within total");
        let orig = ps.get(r).data()[idx];
        ps.get_mut(r).data_mut()[idx] = orig + step;
        let up = loss_fn(ps);
        ps.get_mut(r).data_mut()[idx] = orig - step;
        let down = loss_fn(ps);
        ps.get_mut(r).data_mut()[idx] = orig;
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads[r.0].data()[idx];
        entries.push(GradCheckEntry {
            param: ps.name(r).to_string(),
            index: idx,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    GradCheckReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use rand::SeedableRng;

    #[test]
    fn quadratic_loss_checks_out() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::new(&[3], vec![0.3, -1.2, 2.0]));
        let loss = |ps: &ParamSet| {
            let mut tape = Tape::new();
            let bp = ps.bind(&mut tape);
            let w = bp.all()[0];
            let sq = tape.mul(w, w);
            let y = tape.sum_all(sq);
            tape.value(y).item()
        };
        let grad = |ps: &ParamSet| {
            let mut tape = Tape::new();
            let bp = ps.bind(&mut tape);
            let w = bp.all()[0];
            let sq = tape.mul(w, w);
            let y = tape.sum_all(sq);
            tape.grad_tensors(y, bp.all())
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let report = check_gradients(&mut ps, 6, 1e-5, &mut rng, loss, grad);
        assert!(report.max_rel_err() < 1e-8, "report: {:?}", report.entries);
    }
}
