use super::dense::stack_backward;
use super::model::{ParamSet, TriBranchNetwork};
use super::NetworkError;
use crate::dataset::Row;

/// Mean squared error over normalized rows and its gradient.
///
/// The interface threshold has zero derivative almost everywhere; its
/// backward pass uses the straight-through surrogate instead: the gradient
/// reaching a bit is passed to its pre-activation unchanged when
/// `|preact| <= ste_clip`, and dropped otherwise.
pub fn loss_and_gradients(
    net: &TriBranchNetwork,
    batch: &[Row],
    ste_clip: f64,
) -> Result<(f64, ParamSet), NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let p = &net.params;
    let mut grads = p.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let k = net.architecture.k;
    let mut loss = 0.0;

    for row in batch {
        net.check_inputs(&row.x, &row.y)?;
        let tr = net.trace(&row.x, &row.y);
        let err = tr.output - row.t;
        loss += err * err;

        let g_out = 2.0 * err * scale;
        grads.output.accumulate(tr.joint_acts.last().expect("non-empty"), &[g_out]);
        let g_joint_top = p.output.backprop_input(&[g_out]);
        let g_joint_in = stack_backward(&p.joint, &mut grads.joint, &tr.joint_acts, g_joint_top);

        let (g_bits, g_public) = g_joint_in.split_at(k);
        stack_backward(&p.public, &mut grads.public, &tr.public_acts, g_public.to_vec());

        if let (Some(iface), Some(g_iface)) = (&p.interface, grads.interface.as_mut()) {
            let g_pre: Vec<f64> = g_bits
                .iter()
                .zip(&tr.preact)
                .map(|(&g, &u)| if u.abs() <= ste_clip { g } else { 0.0 })
                .collect();
            let top = tr.secret_acts.last().expect("non-empty");
            g_iface.accumulate(top, &g_pre);
            let g_hidden = iface.backprop_input(&g_pre);
            stack_backward(&p.secret, &mut grads.secret, &tr.secret_acts, g_hidden);
        }
    }

    let mse = loss * scale;
    if !mse.is_finite() {
        return Err(NetworkError::NonFiniteLoss { epoch: None });
    }
    Ok((mse, grads))
}
