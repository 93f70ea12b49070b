//! Central finite-difference checks of parameter gradients.

use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub worst_rel_error: f64,
    pub failures: Vec<GradMismatch>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to rounding compare by absolute difference. Central differences
    /// of an O(1) loss carry about 1e-11 of rounding noise at the default step.
    pub floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` (one tensor per parameter, in `params` order) with
/// central differences of `loss` at the listed `(parameter, flat index)` entries.
/// `params` is restored before returning.
pub fn check_gradients(
    params: &mut ParamSet,
    analytic: &[Tensor],
    entries: &[(ParamId, usize)],
    opts: CheckOptions,
    mut loss: impl FnMut(&ParamSet) -> f64,
) -> GradCheck {
    assert_eq!(analytic.len(), params.len(), "one gradient tensor per parameter");
    let mut out = GradCheck::default();
    for &(id, index) in entries {
        let original = params.get(id).data()[index];
        let mut at = |v: f64, params: &mut ParamSet| {
            params.get_mut(id).data_mut()[index] = v;
            loss(params)
        };
        let plus = at(original + opts.step, params);
        let minus = at(original - opts.step, params);
        params.get_mut(id).data_mut()[index] = original;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[id.0].data()[index];
        let rel = relative_error(a, numeric, opts.floor);
        out.checked += 1;
        out.worst_rel_error = out.worst_rel_error.max(rel);
        if rel.is_nan() || rel >= opts.tolerance {
            out.failures.push(GradMismatch {
                param: params.name(id).to_string(),
                index,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    out
}

/// Every entry of every parameter.
pub fn all_entries(params: &ParamSet) -> Vec<(ParamId, usize)> {
    params.iter().flat_map(|(id, _, t)| (0..t.numel()).map(move |i| (id, i))).collect()
}

/// At least one entry of each parameter, then further entries spread evenly
/// until about `budget` are listed.
pub fn spread_entries(params: &ParamSet, budget: usize) -> Vec<(ParamId, usize)> {
    let total = params.num_scalars().max(1);
    let mut out = Vec::new();
    for (id, _, t) in params.iter() {
        let n = t.numel();
        let share = (budget * n).div_ceil(total).clamp(1, n);
        // Stride through the tensor so both ends get sampled.
        for j in 0..share {
            out.push((id, j * n / share + (n / share) / 2));
        }
    }
    out
}
