use super::{Gradients, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function of `params`.
///
/// Each coordinate is perturbed by `±epsilon` in turn on a private copy of the
/// parameter set, so `eval` only ever sees one coordinate displaced.
pub fn finite_diff_gradient<F>(mut eval: F, params: &ParamSet, epsilon: f64) -> Result<Gradients>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if !(1e-6..=1e-2).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-6, 1e-2]"
        )));
    }
    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let mut out = Gradients::new();
    for name in names {
        let len = work.value(&name)?.len();
        let mut grad = vec![0.0; len];
        for i in 0..len {
            let orig = work.value(&name)?.data()[i];
            let mut probe = |v: f64, work: &mut ParamSet| -> Result<f64> {
                work.get_mut(&name).expect("name from the same set").value.data_mut()[i] = v;
                let y = eval(work)?;
                if !y.is_finite() {
                    return Err(Error::NonFinite(format!("eval returned {y} probing {name}[{i}]")));
                }
                Ok(y)
            };
            let plus = probe(orig + epsilon, &mut work)?;
            let minus = probe(orig - epsilon, &mut work)?;
            work.get_mut(&name).expect("present").value.data_mut()[i] = orig;
            grad[i] = (plus - minus) / (2.0 * epsilon);
        }
        let shape = work.value(&name)?.shape().to_vec();
        out.insert(name, Tensor::new(shape, grad)?);
    }
    Ok(out)
}

/// Largest relative error between two gradient sets, with an absolute floor
/// in the denominator: `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Gradients, b: &Gradients, floor: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (name, ga) in a {
        let gb = b.get(name).ok_or_else(|| Error::UnknownParam(name.clone()))?;
        if ga.shape() != gb.shape() {
            return Err(Error::shape("max_relative_error", format!("{name}")));
        }
        for (&x, &y) in ga.data().iter().zip(gb.data()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    Ok(worst)
}
