use super::{Matrix, NodeId, Tape};
use crate::error::Result;

/// Absolute differences at or below this are treated as agreement.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|)` over entries
    /// whose absolute difference exceeds [`ABS_FLOOR`].
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(tensor, entry)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

fn evaluate<F>(params: &[Matrix], loss: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = loss(&mut tape, &leaves)?;
    Ok(tape.value(out).get(0, 0))
}

/// Reverse-mode gradients of `loss` at `params`.
pub fn analytic_gradients<F>(params: &[Matrix], loss: &F) -> Result<Vec<Matrix>>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = loss(&mut tape, &leaves)?;
    let grads = tape.backward(out)?;
    Ok(leaves.iter().zip(params).map(|(l, p)| grads.get_or_zeros(*l, p)).collect())
}

/// Compares supplied gradients against central differences with step `h`.
pub fn compare_with_finite_differences<F>(
    params: &[Matrix],
    analytic: &[Matrix],
    loss: &F,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        checked: 0,
        tolerance,
        passed: true,
    };
    for (t, grad) in analytic.iter().enumerate() {
        for e in 0..grad.len() {
            let orig = work[t].as_slice()[e];
            work[t].as_mut_slice()[e] = orig + h;
            let up = evaluate(&work, loss)?;
            work[t].as_mut_slice()[e] = orig - h;
            let down = evaluate(&work, loss)?;
            work[t].as_mut_slice()[e] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = grad.as_slice()[e];
            let diff = (a - numeric).abs();
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(diff);
            if !diff.is_finite() {
                report.max_rel_error = f64::INFINITY;
                report.worst = Some((t, e));
                continue;
            }
            if diff > ABS_FLOOR {
                let rel = diff / a.abs().max(numeric.abs());
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((t, e));
                }
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    Ok(report)
}

/// Checks every reverse-mode gradient of the scalar built by `loss` against
/// central finite differences (step `1e-5`).
///
/// `loss` receives a fresh tape and one leaf per entry of `params`, in order.
pub fn grad_check<F>(params: &[Matrix], loss: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let analytic = analytic_gradients(params, &loss)?;
    compare_with_finite_differences(params, &analytic, &loss, 1e-5, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::ParamSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Three-layer ReLU network with a softmax/sigmoid/tanh/log head.
    fn network_loss(input: Matrix, target: Matrix) -> impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId> {
        move |tape, leaves| {
            let x = tape.constant(input.clone());
            let dims = [4, 6, 5, 4];
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let shape = ParamSet::xavier(&dims, &mut rng)?;
            let z = shape.forward_tape(tape, leaves, x)?;
            let s = tape.softmax(z, 2)?;
            let sg = tape.sigmoid(z);
            let th = tape.tanh(z);
            let l = tape.log(s, 1e-300);
            let t = tape.constant(target.clone());
            let a = tape.mul(l, t)?;
            let b = tape.mul(sg, th)?;
            let c = tape.div(b, s)?;
            let e = tape.exp(th);
            let d = tape.sub(a, c)?;
            let f = tape.add(d, e)?;
            let f = tape.scale(f, 0.5);
            let f = tape.add_scalar(f, 2.0);
            let g = tape.group_sum(f, 2)?;
            let gg = tape.gather(g, vec![1, 0, 1])?;
            Ok(tape.mean(gg))
        }
    }

    fn random_params(seed: u64) -> Vec<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::xavier(&[4, 6, 5, 4], &mut rng).unwrap();
        for t in p.tensors_mut() {
            for x in t.as_mut_slice() {
                *x += rng.random_range(-0.2..0.2);
            }
        }
        p.tensors().into_iter().cloned().collect()
    }

    #[test]
    fn healthy_gradients_pass() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let loss = network_loss(random_matrix(&mut rng, 3, 4), random_matrix(&mut rng, 3, 4));
            let report = grad_check(&random_params(seed), loss, 1e-4).unwrap();
            assert!(report.passed, "{report:?}");
            assert_eq!(report.checked, 4 * 6 + 6 + 6 * 5 + 5 + 5 * 4 + 4);
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let loss = network_loss(random_matrix(&mut rng, 3, 4), random_matrix(&mut rng, 3, 4));
        let params = random_params(7);
        let mut analytic = analytic_gradients(&params, &loss).unwrap();
        let g = analytic[2].as_mut_slice();
        g[3] = g[3] * 1.01 + 0.01;
        let report = compare_with_finite_differences(&params, &analytic, &loss, 1e-5, 1e-4).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst, Some((2, 3)));
    }

    #[test]
    fn inactive_positive_part_branch() {
        // [x - 10]^+ is identically zero near these inputs.
        let params = vec![Matrix::from_rows(&[vec![0.3, -0.4, 1.2]]).unwrap()];
        let loss = |tape: &mut Tape, leaves: &[NodeId]| {
            let shifted = tape.add_scalar(leaves[0], -10.0);
            let p = tape.pos(shifted);
            let t = tape.tanh(p);
            let sq = tape.mul(leaves[0], leaves[0])?;
            let s = tape.add(t, sq)?;
            Ok(tape.mean(s))
        };
        let report = grad_check(&params, loss, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
