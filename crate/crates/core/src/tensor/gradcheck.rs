use serde::Serialize;

use super::{Tape, TensorError, Var};
use crate::nn::ParamStore;

/// Relative error below which denominators are floored, so that gradients
/// that are zero on both routes compare as equal.
const DENOMINATOR_FLOOR: f64 = 1e-8;

pub fn relative_error(autodiff: f64, numeric: f64) -> f64 {
    let denom = autodiff.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
    (autodiff - numeric).abs() / denom
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub autodiff: f64,
    pub numeric: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.within_tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| !e.within_tolerance)
    }
}

/// Compares autodiff gradients of `f` against central differences
/// `(f(p+h) − f(p−h)) / 2h` for every element of every parameter in `store`.
///
/// Entries beyond `tolerance` are reported, not raised. Errors from `f`
/// itself are propagated. Parameter values are restored bit-for-bit.
pub fn grad_check<F, E>(store: &mut ParamStore, f: F, step: f64, tolerance: f64) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    grad_check_with_hook(store, f, step, tolerance, |_| {})
}

/// [`grad_check`] with a hook that may rewrite the autodiff gradients before
/// comparison (fault injection for exercising the failure path).
pub fn grad_check_with_hook<F, E, H>(
    store: &mut ParamStore,
    mut f: F,
    step: f64,
    tolerance: f64,
    mut hook: H,
) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
    H: FnMut(&mut [Vec<f64>]),
{
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape, true);
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let mut analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(store.values())
        .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    drop(tape);
    hook(&mut analytic);

    let mut eval = |store: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape, false);
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root).item())
    };

    let mut entries = Vec::with_capacity(analytic.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut entry = GradCheckEntry {
            name: store.name(pi).to_string(),
            elements: grad.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            autodiff: grad.first().copied().unwrap_or(0.0),
            numeric: 0.0,
            within_tolerance: true,
        };
        for (j, &g) in grad.iter().enumerate() {
            let original = store.value_at(pi, j);
            store.set_value_at(pi, j, original + step);
            let plus = eval(store);
            store.set_value_at(pi, j, original - step);
            let minus = eval(store);
            store.set_value_at(pi, j, original);
            let numeric = (plus? - minus?) / (2.0 * step);
            let err = relative_error(g, numeric);
            if err > entry.max_rel_error || j == 0 {
                entry.max_rel_error = err;
                entry.worst_index = j;
                entry.autodiff = g;
                entry.numeric = numeric;
            }
        }
        entry.within_tolerance = entry.max_rel_error < tolerance;
        entries.push(entry);
    }
    Ok(GradCheckReport {
        step,
        tolerance,
        entries,
    })
}
