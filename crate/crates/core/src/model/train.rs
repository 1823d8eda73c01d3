use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::real::Real;
use crate::rng::{stream, Stream};
use crate::tensor::{AdamW, AdamWConfig, Matrix, Tape, Var};

use super::{loss_t, loss_y, ModelConfig, ModelInputs, UpliftModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_y: f64,
    pub loss_t: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainWarning {
    /// Only one arm is labeled, so the other outcome head receives no data gradient.
    SingleArm { treated: usize, control: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub trace: Vec<EpochLoss>,
    pub warnings: Vec<TrainWarning>,
}

pub(crate) fn label_mask(users: usize, labeled: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; users];
    for &u in labeled {
        if u >= users {
            return Err(Error::param(format!("labeled user {u} out of range for {users} users")));
        }
        mask[u] = true;
    }
    if labeled.is_empty() {
        return Err(Error::NoTrainingData("labeled set is empty".into()));
    }
    Ok(mask)
}

pub(crate) struct Objective {
    pub loss_y: Var,
    pub loss_t: Option<Var>,
    pub total: Var,
}

/// Builds the training objective on `tape`; dropout is active iff `rng` is given.
pub(crate) fn objective<'a, T: Real, R: rand::Rng + ?Sized>(
    model: &UpliftModel<T>,
    tape: &mut Tape<'a, T>,
    inputs: &'a ModelInputs<T>,
    vars: &[Var],
    mask: &[bool],
    rng: Option<&mut R>,
) -> Result<Objective> {
    let z = model.representation(tape, inputs, vars)?;
    let heads = model.heads(tape, z, vars, rng)?;
    let ly = loss_y(tape, heads.treated, heads.control, &inputs.outcome, &inputs.treatment, mask)?;
    match heads.treatment_logit {
        Some(logit) => {
            let lt = loss_t(tape, logit, &inputs.treatment, mask)?;
            let alpha = T::from_f64_lossy(model.config().treatment_weight);
            let total = tape.axpy(ly, lt, alpha)?;
            Ok(Objective {
                loss_y: ly,
                loss_t: Some(lt),
                total,
            })
        }
        None => Ok(Objective {
            loss_y: ly,
            loss_t: None,
            total: ly,
        }),
    }
}

pub fn train<T: Real>(
    dataset: &Dataset,
    labeled: &[usize],
    config: &ModelConfig,
) -> Result<(UpliftModel<T>, TrainReport)> {
    train_with_inputs(&ModelInputs::new(dataset), labeled, config)
}

/// Full-batch AdamW training on the factual loss of the `labeled` users.
///
/// Only the outcomes of labeled users are ever read.
pub fn train_with_inputs<T: Real>(
    inputs: &ModelInputs<T>,
    labeled: &[usize],
    config: &ModelConfig,
) -> Result<(UpliftModel<T>, TrainReport)> {
    let mut model = UpliftModel::init(config, inputs.dims)?;
    let mask = label_mask(inputs.dims.users, labeled)?;
    let treated = mask
        .iter()
        .zip(&inputs.treatment)
        .filter(|(&m, &t)| m && t)
        .count();
    let control = mask.iter().filter(|&&m| m).count() - treated;
    let mut report = TrainReport::default();
    if treated == 0 || control == 0 {
        report.warnings.push(TrainWarning::SingleArm { treated, control });
    }

    let mut optimizer = AdamW::new(
        AdamWConfig {
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        model.params().iter().map(|p| p.value.shape()),
    );
    let mut rng = stream(config.seed, Stream::Dropout);
    report.trace.reserve(config.epochs);

    for epoch in 0..config.epochs {
        let grads: Vec<Matrix<T>> = {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape);
            let obj = objective(&model, &mut tape, inputs, &vars, &mask, Some(&mut rng))?;
            let ly = tape.scalar(obj.loss_y)?.to_f64_lossy();
            let lt = obj.loss_t.map(|v| tape.scalar(v)).transpose()?.map(|v| v.to_f64_lossy());
            let total = tape.scalar(obj.total)?.to_f64_lossy();
            if !total.is_finite() {
                return Err(Error::Numerical(format!("loss became {total} at epoch {epoch}")));
            }
            report.trace.push(EpochLoss {
                epoch,
                loss_y: ly,
                loss_t: lt,
                total,
            });
            let grads = tape.backward(obj.total)?;
            vars.iter().map(|&v| grads.wrt(v).clone()).collect()
        };
        let mut params: Vec<&mut Matrix<T>> = model.params_mut().iter_mut().map(|p| &mut p.value).collect();
        let grad_refs: Vec<&Matrix<T>> = grads.iter().collect();
        optimizer.step(&mut params, &grad_refs)?;
        if let Some(bad) = model.params().iter().find(|p| !p.value.is_finite()) {
            return Err(Error::Numerical(format!(
                "parameter '{}' became non-finite at epoch {epoch}",
                bad.name
            )));
        }
    }
    Ok((model, report))
}
