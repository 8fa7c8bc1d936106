use super::{Tape, Var};
use crate::error::{Error, Result};

/// Worst disagreement between reverse-mode and central-difference gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub analytic: f64,
    pub numeric: f64,
    /// `(leaf, element)` of the worst entry.
    pub worst: (Var, usize),
    pub entries: usize,
}

/// Compares `d root / d leaf` for every element of every leaf in `leaves`
/// against central differences with step `h`.
///
/// The relative error of an entry is `|a − n| / max(|a|, |n|, floor)`, so
/// gradients much smaller than `floor` are compared in absolute terms.
/// The tape is restored to its original leaf values on return.
pub fn gradient_check(tape: &mut Tape, root: Var, leaves: &[Var], h: f64, floor: f64) -> Result<GradientCheck> {
    let grads = tape.backward(root)?;
    let mut out = GradientCheck { max_relative_error: 0.0, analytic: 0.0, numeric: 0.0, worst: (root, 0), entries: 0 };
    for &leaf in leaves {
        let base = tape.value(leaf).clone();
        let analytic = grads.wrt(leaf);
        for k in 0..base.len() {
            let mut probe = base.clone();
            probe.data_mut()[k] = base.data()[k] + h;
            tape.set_value(leaf, probe.clone())?;
            tape.forward()?;
            let up = tape.value(root).item();
            probe.data_mut()[k] = base.data()[k] - h;
            tape.set_value(leaf, probe)?;
            tape.forward()?;
            let down = tape.value(root).item();
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[k];
            if !numeric.is_finite() {
                return Err(Error::InvalidArgument(format!("central difference at element {k} is {numeric}")));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            out.entries += 1;
            if rel > out.max_relative_error || out.entries == 1 {
                out = GradientCheck { max_relative_error: rel, analytic: a, numeric, worst: (leaf, k), entries: out.entries };
            }
        }
        tape.set_value(leaf, base)?;
    }
    tape.forward()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn polynomial_gradient_matches() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![0.5, -1.5, 2.0]));
        let sq = t.square(x).unwrap();
        let cube = t.mul(sq, x).unwrap();
        let s = t.sum(cube).unwrap();
        let r = gradient_check(&mut t, s, &[x], 1e-6, 1e-3).unwrap();
        assert!(r.max_relative_error < 1e-8, "{r:?}");
        assert_eq!(r.entries, 3);
        assert_eq!(t.value(s).item(), 0.125 - 3.375 + 8.0);
    }
}
