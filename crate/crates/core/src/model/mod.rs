//! Two-headed GNN uplift model.
//!
//! Users and products are projected into a shared width, encoded by one GNN
//! (SAGE, NGCF or LGC) over the bipartite adjacency, and the user rows of
//! `[X, H₁]` feed two outcome heads (treated / control) plus an optional
//! treatment-prediction head.

mod layers;
mod predict;
mod train;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, ProductFeatures};
use crate::real::Real;
use crate::rng::{stream, Stream};
use crate::tensor::{Matrix, Normalization, SparseAdjacency, Tape, Var};

pub use layers::{
    branch_forward, encode, head_forward, loss_t, loss_y, project_features, user_representation,
    GnnVars, LinearVars,
};
pub use predict::{mc_dropout_predict, predict, UpliftPrediction};
pub use train::{train, train_with_inputs, EpochLoss, TrainReport, TrainWarning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Sage,
    Ngcf,
    Lgc,
}

impl GnnKind {
    pub fn default_layers(self) -> usize {
        match self {
            GnnKind::Sage => 1,
            GnnKind::Ngcf => 3,
            GnnKind::Lgc => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GnnKind::Sage => "sage",
            GnnKind::Ngcf => "ngcf",
            GnnKind::Lgc => "lgc",
        }
    }
}

impl FromStr for GnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sage" => Ok(GnnKind::Sage),
            "ngcf" => Ok(GnnKind::Ngcf),
            "lgc" => Ok(GnnKind::Lgc),
            other => Err(Error::Config(format!("unknown GNN kind '{other}' (expected sage, ngcf or lgc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gnn: GnnKind,
    /// Message-passing depth; the kind's default when absent.
    pub gnn_layers: Option<usize>,
    pub projection_dim: usize,
    pub gnn_dim: usize,
    /// Hidden widths of each outcome head before its scalar output layer.
    pub head_dims: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Adds the treatment-prediction head and its loss term.
    pub treatment_head: bool,
    pub treatment_weight: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gnn: GnnKind::Sage,
            gnn_layers: None,
            projection_dim: 64,
            gnn_dim: 64,
            head_dims: vec![32],
            dropout: 0.4,
            epochs: 2000,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            treatment_head: false,
            treatment_weight: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn layers(&self) -> usize {
        self.gnn_layers.unwrap_or_else(|| self.gnn.default_layers())
    }

    pub fn validate(&self) -> Result<()> {
        if self.projection_dim == 0 || self.gnn_dim == 0 || self.head_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.layers() == 0 {
            return Err(Error::Config("GNN needs at least one layer".into()));
        }
        if self.gnn == GnnKind::Sage && self.layers() != 1 {
            return Err(Error::Config("SAGE encoder has exactly one layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if !(self.treatment_weight >= 0.0 && self.treatment_weight.is_finite()) {
            return Err(Error::Config(format!(
                "treatment loss weight {} must be >= 0",
                self.treatment_weight
            )));
        }
        Ok(())
    }
}

/// Sizes the parameter shapes depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub users: usize,
    pub products: usize,
    pub user_features: usize,
    /// Dense product feature width; `None` means one-hot products.
    pub product_features: Option<usize>,
}

impl ModelDims {
    pub fn of(dataset: &Dataset) -> Self {
        ModelDims {
            users: dataset.users(),
            products: dataset.products(),
            user_features: dataset.user_features().cols(),
            product_features: match dataset.product_features() {
                ProductFeatures::OneHot => None,
                ProductFeatures::Dense(x) => Some(x.cols()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam<T> {
    pub name: String,
    pub value: Matrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LinearSlot {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum GnnSlots {
    Sage(LinearSlot),
    Ngcf(Vec<(LinearSlot, LinearSlot)>),
    Lgc(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    proj_user: LinearSlot,
    proj_product: LinearSlot,
    gnn: GnnSlots,
    head_t: Vec<LinearSlot>,
    head_c: Vec<LinearSlot>,
    treat: Option<LinearSlot>,
}

struct Spec {
    name: String,
    rows: usize,
    cols: usize,
    bias: bool,
}

impl Layout {
    /// Parameter names/shapes in registration order, plus their slot layout.
    fn build(cfg: &ModelConfig, dims: &ModelDims) -> (Layout, Vec<Spec>) {
        let mut specs = Vec::new();
        let linear = |specs: &mut Vec<Spec>, name: &str, fan_in: usize, fan_out: usize| {
            let weight = specs.len();
            specs.push(Spec {
                name: format!("{name}.weight"),
                rows: fan_in,
                cols: fan_out,
                bias: false,
            });
            specs.push(Spec {
                name: format!("{name}.bias"),
                rows: 1,
                cols: fan_out,
                bias: true,
            });
            LinearSlot { weight, bias: weight + 1 }
        };
        let w = cfg.projection_dim;
        let proj_user = linear(&mut specs, "proj_user", dims.user_features, w);
        let proj_product = linear(
            &mut specs,
            "proj_product",
            dims.product_features.unwrap_or(dims.products),
            w,
        );
        let (gnn, gnn_out) = match cfg.gnn {
            GnnKind::Sage => (GnnSlots::Sage(linear(&mut specs, "gnn.0", 2 * w, cfg.gnn_dim)), cfg.gnn_dim),
            GnnKind::Ngcf => {
                let mut layers = Vec::new();
                let mut input = w;
                for l in 0..cfg.layers() {
                    let own = linear(&mut specs, &format!("gnn.{l}.sum"), input, cfg.gnn_dim);
                    let inter = linear(&mut specs, &format!("gnn.{l}.interaction"), input, cfg.gnn_dim);
                    layers.push((own, inter));
                    input = cfg.gnn_dim;
                }
                (GnnSlots::Ngcf(layers), cfg.gnn_dim)
            }
            GnnKind::Lgc => (GnnSlots::Lgc(cfg.layers()), w),
        };
        let head_in = w + gnn_out;
        let head = |specs: &mut Vec<Spec>, prefix: &str| {
            let mut slots = Vec::new();
            let mut input = head_in;
            for (i, &h) in cfg.head_dims.iter().enumerate() {
                slots.push(linear(specs, &format!("{prefix}.{i}"), input, h));
                input = h;
            }
            slots.push(linear(specs, &format!("{prefix}.out"), input, 1));
            slots
        };
        let head_t = head(&mut specs, "head_t");
        let head_c = head(&mut specs, "head_c");
        let treat = cfg
            .treatment_head
            .then(|| linear(&mut specs, "treatment", head_in, 1));
        (
            Layout {
                proj_user,
                proj_product,
                gnn,
                head_t,
                head_c,
                treat,
            },
            specs,
        )
    }
}

/// Learnable parameters plus the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct UpliftModel<T> {
    config: ModelConfig,
    dims: ModelDims,
    params: Vec<NamedParam<T>>,
    layout: Layout,
}

impl<T: Real> UpliftModel<T> {
    /// Seeded initialization: Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, dims: ModelDims) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = Layout::build(config, &dims);
        let mut rng = stream(config.seed, Stream::Init);
        let params = specs
            .into_iter()
            .map(|s| {
                let value = if s.bias {
                    Matrix::zeros(s.rows, s.cols)
                } else {
                    let limit = num_traits::Float::sqrt(6.0 / (s.rows + s.cols) as f64);
                    Matrix::from_raw(
                        s.rows,
                        s.cols,
                        (0..s.rows * s.cols)
                            .map(|_| T::from_f64_lossy(rng.random_range(-limit..limit)))
                            .collect(),
                    )
                };
                NamedParam { name: s.name, value }
            })
            .collect();
        Ok(UpliftModel {
            config: config.clone(),
            dims,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored parameters, checking every name and shape.
    pub fn from_params(config: ModelConfig, dims: ModelDims, params: Vec<NamedParam<T>>) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = Layout::build(&config, &dims);
        if specs.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.name != p.name || (s.rows, s.cols) != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter '{}' {:?} does not match expected '{}' {:?}",
                    p.name,
                    p.value.shape(),
                    s.name,
                    (s.rows, s.cols)
                )));
            }
            if !p.value.is_finite() {
                return Err(Error::Numerical(format!("parameter '{}' is not finite", p.name)));
            }
        }
        Ok(UpliftModel {
            config,
            dims,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &[NamedParam<T>] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Matrix<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [NamedParam<T>] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    fn check_inputs(&self, inputs: &ModelInputs<T>) -> Result<()> {
        let expected = self.dims;
        if inputs.dims != expected {
            return Err(Error::shape(
                "model inputs",
                format!("model built for {expected:?}, inputs have {:?}", inputs.dims),
            ));
        }
        Ok(())
    }

    /// Puts every parameter on the tape, in layout order.
    pub fn register<'a>(&self, tape: &mut Tape<'a, T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    fn linear(&self, vars: &[Var], slot: LinearSlot) -> LinearVars {
        LinearVars {
            weight: vars[slot.weight],
            bias: Some(vars[slot.bias]),
        }
    }

    /// Deterministic trunk: projection, GNN and the `[X, H₁]` user slice.
    pub fn representation<'a>(
        &self,
        tape: &mut Tape<'a, T>,
        inputs: &'a ModelInputs<T>,
        vars: &[Var],
    ) -> Result<Var> {
        self.check_inputs(inputs)?;
        let user_x = tape.constant(inputs.user_x.clone());
        let product_x = inputs.product_x.as_ref().map(|x| tape.constant(x.clone()));
        let x = project_features(
            tape,
            user_x,
            product_x,
            self.linear(vars, self.layout.proj_user),
            self.linear(vars, self.layout.proj_product),
        )?;
        let gnn = match &self.layout.gnn {
            GnnSlots::Sage(slot) => GnnVars::Sage(self.linear(vars, *slot)),
            GnnSlots::Ngcf(layers) => GnnVars::Ngcf(
                layers
                    .iter()
                    .map(|&(a, b)| (self.linear(vars, a), self.linear(vars, b)))
                    .collect(),
            ),
            GnnSlots::Lgc(layers) => GnnVars::Lgc { layers: *layers },
        };
        let h1 = encode(tape, &inputs.operators, x, &gnn)?;
        user_representation(tape, x, h1, self.dims.users)
    }

    /// Outcome heads (and treatment head when configured) on a user representation.
    pub fn heads<'a, R: rand::Rng + ?Sized>(
        &self,
        tape: &mut Tape<'a, T>,
        representation: Var,
        vars: &[Var],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<HeadOutputs> {
        let p = self.config.dropout;
        let t_layers: Vec<LinearVars> = self.layout.head_t.iter().map(|&s| self.linear(vars, s)).collect();
        let c_layers: Vec<LinearVars> = self.layout.head_c.iter().map(|&s| self.linear(vars, s)).collect();
        let treated = branch_forward(tape, representation, &t_layers, p, dropout_rng.as_deref_mut())?;
        let control = branch_forward(tape, representation, &c_layers, p, dropout_rng.as_deref_mut())?;
        let treatment_logit = match self.layout.treat {
            Some(slot) => Some(branch_forward::<T, R>(tape, representation, &[self.linear(vars, slot)], p, None)?),
            None => None,
        };
        Ok(HeadOutputs {
            treated,
            control,
            treatment_logit,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadOutputs {
    pub treated: Var,
    pub control: Var,
    pub treatment_logit: Option<Var>,
}

/// Normalized adjacency operators shared by all encoders.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// Row-normalized (neighbor mean), used by SAGE.
    pub mean: SparseAdjacency,
    /// Symmetrically normalized, used by NGCF and LGC.
    pub symmetric: SparseAdjacency,
}

impl GraphOperators {
    pub fn new(adjacency: &SparseAdjacency) -> Self {
        GraphOperators {
            mean: adjacency.normalized(Normalization::Mean),
            symmetric: adjacency.normalized(Normalization::Symmetric),
        }
    }
}

/// Dataset tensors in the model's precision, prepared once per dataset.
#[derive(Debug, Clone)]
pub struct ModelInputs<T> {
    pub dims: ModelDims,
    pub user_x: Matrix<T>,
    pub product_x: Option<Matrix<T>>,
    pub operators: GraphOperators,
    pub treatment: Vec<bool>,
    pub outcome: Vec<T>,
}

impl<T: Real> ModelInputs<T> {
    pub fn new(dataset: &Dataset) -> Self {
        ModelInputs {
            dims: ModelDims::of(dataset),
            user_x: dataset.user_features().cast(),
            product_x: match dataset.product_features() {
                ProductFeatures::OneHot => None,
                ProductFeatures::Dense(x) => Some(x.cast()),
            },
            operators: GraphOperators::new(dataset.graph().adjacency()),
            treatment: dataset.treatment().to_vec(),
            outcome: dataset
                .outcome()
                .iter()
                .map(|&y| T::from_f64_lossy(y as f64))
                .collect(),
        }
    }
}

/// Parameter names in registration order for a configuration and input sizes.
pub fn param_names(cfg: &ModelConfig, dims: &ModelDims) -> Vec<String> {
    Layout::build(cfg, dims).1.into_iter().map(|s| s.name.to_string()).collect()
}
