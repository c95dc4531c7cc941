//! Gated recurrent unit on the tape.
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! Rows are batch entries. Initial states are zero.

use crate::ndmath::{NdError, Real, Tape, Tensor, Var};

use super::params::{BiGruVars, GruVars};

fn cell<T: Real>(
    tape: &mut Tape<T>,
    xz: Var,
    xr: Var,
    xh: Var,
    h: Var,
    w: &GruVars,
) -> Result<Var, NdError> {
    let hz = tape.matmul(h, w.u_z)?;
    let z = tape.add(xz, hz)?;
    let z = tape.sigmoid(z)?;
    let hr = tape.matmul(h, w.u_r)?;
    let r = tape.add(xr, hr)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.hadamard(r, h)?;
    let hh = tape.matmul(rh, w.u_h)?;
    let cand = tape.add(xh, hh)?;
    let cand = tape.tanh(cand)?;
    let delta = tape.sub(cand, h)?;
    let step = tape.hadamard(z, delta)?;
    tape.add(h, step)
}

/// One GRU step for a batch: `x` is `B×E`, `h_prev` is `B×H`.
pub fn gru_step<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    h_prev: Var,
    w: &GruVars,
) -> Result<Var, NdError> {
    let mut proj = |wm: Var, b: Var| -> Result<Var, NdError> {
        let p = tape.matmul(x, wm)?;
        tape.add_row_bias(p, b)
    };
    let xz = proj(w.w_z, w.b_z)?;
    let xr = proj(w.w_r, w.b_r)?;
    let xh = proj(w.w_h, w.b_h)?;
    cell(tape, xz, xr, xh, h_prev, w)
}

/// Runs one direction over a time-major input `(steps·batch)×E`.
///
/// `mask` is time-major too; where it is false the state is carried over
/// unchanged, so padding never alters the state at real positions. Returns
/// the state after each time step, indexed by time.
pub fn unroll<T: Real>(
    tape: &mut Tape<T>,
    inputs: Var,
    steps: usize,
    batch: usize,
    mask: &[bool],
    w: &GruVars,
    reverse: bool,
) -> Result<Vec<Var>, NdError> {
    let hidden = tape.value(w.u_z).rows();
    let mut proj = |wm: Var, b: Var| -> Result<Var, NdError> {
        let p = tape.matmul(inputs, wm)?;
        tape.add_row_bias(p, b)
    };
    let xz_all = proj(w.w_z, w.b_z)?;
    let xr_all = proj(w.w_r, w.b_r)?;
    let xh_all = proj(w.w_h, w.b_h)?;

    let mut h = tape.constant(Tensor::zeros(vec![batch, hidden]));
    let mut states = vec![h; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let step_mask = &mask[t * batch..(t + 1) * batch];
        if step_mask.iter().any(|&m| m) {
            let xz = tape.slice_rows(xz_all, t * batch, batch)?;
            let xr = tape.slice_rows(xr_all, t * batch, batch)?;
            let xh = tape.slice_rows(xh_all, t * batch, batch)?;
            let next = cell(tape, xz, xr, xh, h, w)?;
            h = if step_mask.iter().all(|&m| m) {
                next
            } else {
                tape.blend_rows(next, h, step_mask)?
            };
        }
        states[t] = h;
    }
    Ok(states)
}

/// Forward and backward state sequences of a bidirectional unroll.
pub struct BiStates {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

pub fn bidirectional<T: Real>(
    tape: &mut Tape<T>,
    inputs: Var,
    steps: usize,
    batch: usize,
    mask: &[bool],
    w: &BiGruVars,
) -> Result<BiStates, NdError> {
    Ok(BiStates {
        forward: unroll(tape, inputs, steps, batch, mask, &w.forward, false)?,
        backward: unroll(tape, inputs, steps, batch, mask, &w.backward, true)?,
    })
}
