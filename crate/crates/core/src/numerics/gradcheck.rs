//! Central finite-difference verification of analytic gradients.

/// Outcome of a finite-difference sweep over a parameter vector.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare `analytic` against central differences of `loss` at `params`.
///
/// Relative error per parameter is `|a - n| / max(|a|, |n|, 1e-8)`; the
/// check passes iff the maximum stays below `tolerance`. `loss` must be a
/// pure function of the parameter vector.
pub fn gradient_check(
    params: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    epsilon: f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len());
    let mut probe = params.to_vec();
    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for i in 0..probe.len() {
        let saved = probe[i];
        probe[i] = saved + epsilon;
        let plus = loss(&probe);
        probe[i] = saved - epsilon;
        let minus = loss(&probe);
        probe[i] = saved;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }
    GradCheckReport {
        max_rel_err,
        worst_index,
        checked: params.len(),
        tolerance,
        passed: max_rel_err < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        let params = vec![0.4, -1.2, 2.0];
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let report = gradient_check(
            &params,
            &analytic,
            |p| p.iter().map(|x| x * x).sum(),
            1e-5,
            1e-6,
        );
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn wrong_gradient_fails() {
        let params = vec![1.0];
        let report = gradient_check(&params, &[1.0], |p| p[0] * p[0], 1e-5, 1e-4);
        assert!(!report.passed);
        assert_eq!(report.worst_index, 0);
    }
}
