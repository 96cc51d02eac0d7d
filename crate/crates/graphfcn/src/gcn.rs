//! 2-layer graph convolutional node classifier over the propagation
//! operator Ahat. Layers are the bare Ahat * X * Theta form, no bias; the
//! depth is fixed at two to keep propagation short of over-smoothing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, VarId};
use crate::backbone::glorot;
use crate::error::{Error, Result};
use crate::params::{ModelParams, TapeBindings};
use crate::sparse::SparseMatrix;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GcnConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return Err(Error::Parameter("GCN dimensions must be positive".into()));
        }
        Ok(())
    }
}

pub fn init_params(cfg: &GcnConfig, seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    append_params(cfg, &mut rng, &mut params)?;
    Ok(params)
}

pub(crate) fn append_params(
    cfg: &GcnConfig,
    rng: &mut ChaCha8Rng,
    params: &mut ModelParams,
) -> Result<()> {
    cfg.validate()?;
    params.insert("gcn.theta1", theta(rng, cfg.in_dim, cfg.hidden_dim));
    params.insert("gcn.theta2", theta(rng, cfg.hidden_dim, cfg.num_classes));
    Ok(())
}

fn theta(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> Tensor {
    let k = glorot(rng, dout, din, 1, 1);
    // glorot emits [dout, din, 1, 1]; theta is [din, dout]
    let mut t = Tensor::zeros(vec![din, dout]);
    for o in 0..dout {
        for i in 0..din {
            t.data_mut()[i * dout + o] = k.data()[o * din + i];
        }
    }
    t
}

/// One propagation layer: relu(Ahat * X * Theta), or the bare product when
/// `apply_relu` is false.
pub fn gcn_layer(
    tape: &mut Tape,
    ahat: &SparseMatrix,
    x: VarId,
    theta: VarId,
    apply_relu: bool,
) -> Result<VarId> {
    let propagated = tape.sparse_dense_matmul(ahat, x)?;
    let scored = tape.matmul(propagated, theta)?;
    if apply_relu {
        tape.relu(scored)
    } else {
        Ok(scored)
    }
}

/// Two propagation layers: relu on the first, bare logits on the second.
pub fn gcn_forward(
    tape: &mut Tape,
    ahat: &SparseMatrix,
    annotations: VarId,
    binds: &TapeBindings,
    cfg: &GcnConfig,
) -> Result<VarId> {
    cfg.validate()?;
    if tape.value(annotations).shape()[1] != cfg.in_dim {
        return Err(Error::ShapeMismatch {
            op: "gcn_forward (layer 1)",
            lhs: tape.value(annotations).shape().to_vec(),
            rhs: vec![cfg.in_dim],
        });
    }
    let hidden = gcn_layer(tape, ahat, annotations, binds.id("gcn.theta1"), true)
        .map_err(|e| Error::Parameter(format!("gcn layer 1: {e}")))?;
    gcn_layer(tape, ahat, hidden, binds.id("gcn.theta2"), false)
        .map_err(|e| Error::Parameter(format!("gcn layer 2: {e}")))
}
