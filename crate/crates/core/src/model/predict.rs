use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{indexed_stream, Rng, Stream};
use crate::tensor::Tape;

use super::{ModelInputs, UpliftModel};

/// Per-user outcome predictions, uplift and its dropout variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftPrediction {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
    pub uplift: Vec<f64>,
    /// Population variance of the uplift across dropout passes.
    pub uncertainty: Vec<f64>,
}

impl UpliftPrediction {
    pub fn len(&self) -> usize {
        self.uplift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uplift.is_empty()
    }
}

/// Dropout-free forward pass; uncertainty is zero.
pub fn predict<T: Real>(model: &UpliftModel<T>, inputs: &ModelInputs<T>) -> Result<UpliftPrediction> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let z = model.representation(&mut tape, inputs, &vars)?;
    let heads = model.heads::<Rng>(&mut tape, z, &vars, None)?;
    let treated: Vec<f64> = tape.value(heads.treated).as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let control: Vec<f64> = tape.value(heads.control).as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let uplift = treated.iter().zip(&control).map(|(t, c)| t - c).collect();
    Ok(UpliftPrediction {
        uncertainty: vec![0.0; treated.len()],
        treated,
        control,
        uplift,
    })
}

/// Averages `passes` stochastic forward passes with dropout active in the heads.
///
/// Pass `i` draws its masks from its own sub-stream, so the result does not depend
/// on the order in which passes run.
pub fn mc_dropout_predict<T: Real>(
    model: &UpliftModel<T>,
    inputs: &ModelInputs<T>,
    passes: usize,
    seed: u64,
) -> Result<UpliftPrediction> {
    if passes == 0 {
        return Err(Error::param("MC dropout needs at least one pass"));
    }
    let n = inputs.dims.users;
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let z = model.representation(&mut tape, inputs, &vars)?;

    let mut treated = vec![0.0; n];
    let mut control = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for pass in 0..passes {
        let mut rng = indexed_stream(seed, Stream::McDropout, pass as u32);
        let mark = tape.len();
        let heads = model.heads(&mut tape, z, &vars, Some(&mut rng))?;
        let k = (pass + 1) as f64;
        let (t, c) = (tape.value(heads.treated).as_slice(), tape.value(heads.control).as_slice());
        for u in 0..n {
            let (tv, cv) = (t[u].to_f64_lossy(), c[u].to_f64_lossy());
            treated[u] += (tv - treated[u]) / k;
            control[u] += (cv - control[u]) / k;
            // Welford: identical passes leave the variance at exactly zero
            let x = tv - cv;
            let delta = x - mean[u];
            mean[u] += delta / k;
            m2[u] += delta * (x - mean[u]);
        }
        tape.truncate(mark);
    }
    let p = passes as f64;
    Ok(UpliftPrediction {
        treated,
        control,
        uplift: mean,
        uncertainty: m2.into_iter().map(|s| if passes == 1 { 0.0 } else { (s / p).max(0.0) }).collect(),
    })
}
