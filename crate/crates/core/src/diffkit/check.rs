use super::{Error, Tape, Tensor, Var};

/// Worst coordinate found by [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares reverse-mode gradients of `f` with central differences
/// `(f(p+h) − f(p−h)) / 2h` at every coordinate of every parameter.
///
/// `f` builds a scalar loss on the tape from the parameter handles it is
/// given; it is called once for the analytic pass and twice per coordinate.
/// Relative error is `|a − n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<GradCheckReport, Error>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, Error>,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("step h = {h} must be positive")));
    }
    let eval = |values: &[Tensor]| -> Result<f64, Error> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss)
            .item()
            .ok_or_else(|| Error::Contract("loss is not a scalar".into()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, (v, p)) in vars.iter().zip(params).enumerate() {
        let analytic = grads.get_or_zeros(*v, p);
        for j in 0..p.numel() {
            let orig = p.data()[j];
            work[pi].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if !err.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient check at parameter {pi} entry {j}"
                )));
            }
            if err > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: err,
                    param: pi,
                    index: j,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_is_exact() {
        // f(x) = Σ_ij x_i A_ij x_j with A = [[2,1],[1,3]] built from primitives
        let a = Tensor::matrix(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let x = Tensor::matrix(1, 2, vec![0.7, -1.3]).unwrap();
        let f = |t: &mut Tape, v: &[Var]| {
            let zero = t.constant(Tensor::zeros(&[2]));
            let ax = t.affine(v[0], v[1], zero)?;
            let prod = t.mul(ax, v[0])?;
            Ok(t.sum(prod))
        };
        let r = grad_check(f, &[x, a], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let f = |t: &mut Tape, v: &[Var]| Ok(t.sum(v[0]));
        assert!(grad_check(f, &[Tensor::scalar(1.0)], 0.0).is_err());
    }
}
