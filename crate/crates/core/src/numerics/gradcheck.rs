use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Gradients, ParamStore};
use super::NumericsError;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates sampled per parameter tensor; all of them when the
    /// tensor is smaller.
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-5, tolerance: 1e-4, coords_per_param: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub passed: bool,
}

/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the analytic gradients returned by `f` against central
/// differences on a seeded sample of coordinates.
pub fn grad_check<F>(params: &ParamStore, f: F, opts: GradCheckOptions) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients), NumericsError>,
{
    let (loss_a, analytic) = f(params)?;
    let (loss_b, _) = f(params)?;
    if loss_a.to_bits() != loss_b.to_bits() {
        return Err(NumericsError::Nondeterministic { first: loss_a, second: loss_b });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, passed: true };
    for id in params.ids() {
        if !params.param(id).trainable {
            continue;
        }
        let len = params.get(id).len();
        let coords: Vec<usize> = if len <= opts.coords_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let original = params.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = original + opts.step;
            let (plus, _) = f(&probe)?;
            probe.get_mut(id).data_mut()[i] = original - opts.step;
            let (minus, _) = f(&probe)?;
            probe.get_mut(id).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = relative_error(analytic.get(id).data()[i], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.name(id).to_string(), i));
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Graph, Mode, Tensor};

    fn linear_loss(store: &ParamStore) -> Result<(f64, Gradients), NumericsError> {
        let w = store.find("w").unwrap();
        let b = store.find("b").unwrap();
        let mut g = Graph::new(store, Mode::Eval, 0);
        let wv = g.param(w);
        let bv = g.param(b);
        let x = g.input(Tensor::vector(vec![0.5, -1.0, 2.0]));
        let y = g.matvec(wv, x)?;
        let y = g.add(y, bv)?;
        let loss = g.sum(y);
        let grads = g.backward(loss)?;
        Ok((g.value(loss).data()[0], grads))
    }

    fn linear_store() -> ParamStore {
        let mut store = ParamStore::new();
        store.add("w", Tensor::matrix(2, 3, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap());
        store.add("b", Tensor::vector(vec![0.01, -0.02]));
        store
    }

    #[test]
    fn linear_model_is_exact() {
        let report = grad_check(&linear_store(), linear_loss, GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert!(report.passed);
        assert_eq!(report.checked, 8);
    }

    #[test]
    fn lstm_style_cell_passes() {
        let mut store = ParamStore::new();
        let wi = store.add("wi", Tensor::matrix(2, 2, vec![0.3, -0.2, 0.5, 0.1]).unwrap());
        let wc = store.add("wc", Tensor::matrix(2, 2, vec![-0.4, 0.6, 0.2, 0.7]).unwrap());
        let f = |store: &ParamStore| {
            let mut g = Graph::new(store, Mode::Eval, 0);
            let x = g.input(Tensor::vector(vec![0.8, -0.5]));
            let (wi, wc) = (g.param(wi), g.param(wc));
            let gi = g.matvec(wi, x)?;
            let gate = g.sigmoid(gi);
            let ci = g.matvec(wc, x)?;
            let cand = g.tanh(ci);
            let cell = g.mul(gate, cand)?;
            let h = g.tanh(cell);
            let loss = g.sum_sq(h);
            let grads = g.backward(loss)?;
            Ok((g.value(loss).data()[0], grads))
        };
        let report = grad_check(&store, f, GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let corrupted = |store: &ParamStore| {
            let (loss, mut grads) = linear_loss(store)?;
            let w = store.find("w").unwrap();
            grads.get_mut(w).data_mut()[1] += 0.5;
            Ok((loss, grads))
        };
        let report = grad_check(&linear_store(), corrupted, GradCheckOptions::default()).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst, Some(("w".to_string(), 1)));
    }

    #[test]
    fn nondeterminism_is_detected() {
        let counter = std::cell::Cell::new(0.0);
        let flaky = |store: &ParamStore| {
            counter.set(counter.get() + 1.0);
            Ok((counter.get(), Gradients::zeros_like(store)))
        };
        assert!(matches!(grad_check(&linear_store(), flaky, GradCheckOptions::default()), Err(NumericsError::Nondeterministic { .. })));
    }
}
