//! Central finite-difference verification of tape gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NodeId, NodeKind, Tape};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many randomly chosen coordinates per parameter.
    /// `None` checks every scalar.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-6,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCoordinate {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a kink.
    pub skipped: usize,
    pub worst: Option<WorstCoordinate>,
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Check every trainable scalar and return the worst relative error.
pub fn finite_diff_check(tape: &mut Tape, loss: NodeId, epsilon: f64) -> Result<f64> {
    let opts = GradCheckOptions {
        epsilon,
        ..GradCheckOptions::default()
    };
    Ok(finite_diff_check_with(tape, loss, &opts)?.max_rel_error)
}

fn kink_patterns(tape: &Tape, after: NodeId) -> Vec<(NodeId, Vec<bool>)> {
    tape.nodes()
        .iter()
        .skip(after + 1)
        .filter_map(|node| {
            let NodeKind::Op(op) = &node.kind else {
                return None;
            };
            let inputs: Vec<_> = node.inputs.iter().map(|&j| tape.value(j)).collect();
            op.kink_pattern(&inputs).map(|p| (node.id, p))
        })
        .collect()
}

fn crossed_kink(tape: &Tape, base: &[(NodeId, Vec<bool>)]) -> bool {
    base.iter().any(|(id, pattern)| {
        let node = &tape.nodes()[*id];
        let NodeKind::Op(op) = &node.kind else {
            return false;
        };
        let inputs: Vec<_> = node.inputs.iter().map(|&j| tape.value(j)).collect();
        op.kink_pattern(&inputs).as_ref() != Some(pattern)
    })
}

fn perturbed_loss(
    tape: &mut Tape,
    param: NodeId,
    original: &Tensor,
    index: usize,
    value: f64,
    loss: NodeId,
) -> Result<f64> {
    let mut t = original.clone();
    t.data_mut()[index] = value;
    tape.set_leaf(param, t)?;
    tape.replay_from(param)?;
    Ok(tape.value(loss).data()[0])
}

/// Compare analytic gradients against `(L(p + eps) - L(p - eps)) / 2 eps`.
///
/// The tape is restored to its original leaf values before returning.
pub fn finite_diff_check_with(tape: &mut Tape, loss: NodeId, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&opts.epsilon) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference epsilon {} outside [1e-7, 1e-3]",
            opts.epsilon
        )));
    }
    let grads = tape.backward(loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    let eps = opts.epsilon;

    for (&param, analytic) in &grads {
        let original = tape.value(param).clone();
        let numel = original.numel();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < numel => index::sample(&mut rng, numel, k).into_vec(),
            _ => (0..numel).collect(),
        };
        let base = kink_patterns(tape, param);
        let name = tape.parameter_name(param).unwrap_or("?").to_string();

        for i in coords {
            let p = original.data()[i];
            let plus = perturbed_loss(tape, param, &original, i, p + eps, loss)?;
            let crossed_plus = crossed_kink(tape, &base);
            let minus = perturbed_loss(tape, param, &original, i, p - eps, loss)?;
            let crossed_minus = crossed_kink(tape, &base);
            if crossed_plus || crossed_minus {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(WorstCoordinate {
                    parameter: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                });
            }
        }
        tape.set_leaf(param, original)?;
        tape.replay_from(param)?;
    }
    Ok(report)
}
