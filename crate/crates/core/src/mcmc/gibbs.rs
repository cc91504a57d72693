//! Direct evaluation of the latent-category full conditional.

use rand::Rng;

use crate::error::{FusionError, Result};
use crate::model::{log_f_c, log_f_y, log_f_z, Dataset, ParamState, Sequence};
use crate::sampling::draw_categorical;
use crate::special::{softmax_in_place, LOG_FLOOR};

/// Full conditional of one sequence's latent category: proportional to
/// `f_Y(y) prod f_Z(z | y) prod f_C(c | y)` over the sequence's annotations
/// and confidences, normalized on the log scale.
pub fn gibbs_y_conditional(seq: &Sequence, state: &ParamState) -> Result<Vec<f64>> {
    let l = state.n_categories();
    let mut w = Vec::with_capacity(l);
    let mut degenerate = true;
    for y in 0..l {
        let fy = log_f_y(y, &seq.x, state)?;
        let mut clamped = fy <= LOG_FLOOR;
        let mut lw = fy;
        for ann in seq.annotations() {
            let fz = log_f_z(ann.score, y, ann.annotator, state)?;
            clamped |= fz <= LOG_FLOOR;
            lw += fz;
        }
        for (im, c) in seq.confidences() {
            lw += log_f_c(c, y, &im.u, state)?;
        }
        degenerate &= clamped;
        w.push(lw);
    }
    if degenerate {
        return Err(degenerate_error(&seq.id));
    }
    softmax_in_place(&mut w);
    Ok(w)
}

pub(crate) fn degenerate_error(id: &str) -> FusionError {
    FusionError::DegenerateState(format!(
        "every category of sequence {id} has a likelihood factor at the log floor"
    ))
}

/// Draws every latent category independently from its full conditional,
/// one uniform per sequence in sequence order.
pub fn gibbs_sweep_y<R: Rng + ?Sized>(
    data: &Dataset,
    state: &ParamState,
    rng: &mut R,
) -> Result<Vec<usize>> {
    data.sequences
        .iter()
        .map(|seq| Ok(draw_categorical(&gibbs_y_conditional(seq, state)?, rng)))
        .collect()
}
