use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Tape, Var};

use super::GraphOperators;

/// Weight (and optional bias) of one affine layer, already on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Option<Var>,
}

#[derive(Debug, Clone)]
pub enum GnnVars {
    Sage(LinearVars),
    /// Per layer: the transform of `side + E` and of the interaction `side ⊙ E`.
    Ngcf(Vec<(LinearVars, LinearVars)>),
    Lgc { layers: usize },
}

fn affine<T: Real>(tape: &mut Tape<'_, T>, x: Var, layer: LinearVars) -> Result<Var> {
    let y = tape.matmul(x, layer.weight)?;
    match layer.bias {
        Some(b) => tape.add_bias(y, b),
        None => Ok(y),
    }
}

/// `X = [ReLU(x_u·W_U); ReLU(x_p·W_P)]`, users first.
///
/// `product_x = None` stands for one-hot products, where `x_p·W_P = W_P`.
pub fn project_features<T: Real>(
    tape: &mut Tape<'_, T>,
    user_x: Var,
    product_x: Option<Var>,
    user_w: LinearVars,
    product_w: LinearVars,
) -> Result<Var> {
    let users = affine(tape, user_x, user_w)?;
    let users = tape.relu(users);
    let products = match product_x {
        Some(x) => affine(tape, x, product_w)?,
        None => match product_w.bias {
            Some(b) => tape.add_bias(product_w.weight, b)?,
            None => product_w.weight,
        },
    };
    let products = tape.relu(products);
    tape.concat_rows(users, products)
}

pub fn encode<'a, T: Real>(
    tape: &mut Tape<'a, T>,
    operators: &'a GraphOperators,
    x: Var,
    gnn: &GnnVars,
) -> Result<Var> {
    let rows = tape.value(x).rows();
    if operators.mean.dimension() != rows {
        return Err(Error::shape(
            "encode",
            format!("adjacency of dimension {} for {rows} feature rows", operators.mean.dimension()),
        ));
    }
    match gnn {
        GnnVars::Sage(layer) => {
            let neighbors = tape.spmm(&operators.mean, x)?;
            let joined = tape.concat_cols(x, neighbors)?;
            let h = affine(tape, joined, *layer)?;
            Ok(tape.relu(h))
        }
        GnnVars::Ngcf(layers) => {
            let mut e = x;
            for &(sum_w, inter_w) in layers {
                let side = tape.spmm(&operators.symmetric, e)?;
                let sum = tape.add(side, e)?;
                let inter = tape.mul(side, e)?;
                let a = affine(tape, sum, sum_w)?;
                let b = affine(tape, inter, inter_w)?;
                let pre = tape.add(a, b)?;
                e = tape.relu(pre);
            }
            Ok(e)
        }
        GnnVars::Lgc { layers } => {
            let mut e = x;
            let mut total = x;
            for _ in 0..*layers {
                e = tape.spmm(&operators.symmetric, e)?;
                total = tape.add(total, e)?;
            }
            Ok(tape.scale(total, T::from_f64_lossy(1.0 / (*layers as f64 + 1.0))))
        }
    }
}

/// First `users` rows of `X` and `H₁`, side by side.
pub fn user_representation<T: Real>(tape: &mut Tape<'_, T>, x: Var, h1: Var, users: usize) -> Result<Var> {
    let xu = tape.slice_rows(x, 0, users)?;
    let hu = tape.slice_rows(h1, 0, users)?;
    tape.concat_cols(xu, hu)
}

/// Hidden ReLU layers, each followed by dropout when an rng is supplied, then the
/// final layer of `layers` as a linear output.
pub fn branch_forward<T: Real, R: rand::Rng + ?Sized>(
    tape: &mut Tape<'_, T>,
    input: Var,
    layers: &[LinearVars],
    dropout: f64,
    mut rng: Option<&mut R>,
) -> Result<Var> {
    let (out, hidden) = layers
        .split_last()
        .ok_or_else(|| Error::param("head needs an output layer"))?;
    let mut h = input;
    for &layer in hidden {
        let pre = affine(tape, h, layer)?;
        h = tape.relu(pre);
        if let Some(r) = rng.as_deref_mut() {
            h = tape.dropout(h, dropout, true, r)?;
        }
    }
    affine(tape, h, *out)
}

/// One outcome branch on the user rows of `[X, H₁]`.
#[allow(clippy::too_many_arguments)]
pub fn head_forward<T: Real, R: rand::Rng + ?Sized>(
    tape: &mut Tape<'_, T>,
    x: Var,
    h1: Var,
    users: usize,
    layers: &[LinearVars],
    dropout: f64,
    rng: Option<&mut R>,
) -> Result<Var> {
    let z = user_representation(tape, x, h1, users)?;
    branch_forward(tape, z, layers, dropout, rng)
}

pub fn loss_y<T: Real>(
    tape: &mut Tape<'_, T>,
    treated: Var,
    control: Var,
    outcome: &[T],
    treatment: &[bool],
    mask: &[bool],
) -> Result<Var> {
    tape.factual_mse(treated, control, outcome, treatment, mask)
}

pub fn loss_t<T: Real>(tape: &mut Tape<'_, T>, logits: Var, treatment: &[bool], mask: &[bool]) -> Result<Var> {
    tape.bce_with_logits(logits, treatment, mask)
}
