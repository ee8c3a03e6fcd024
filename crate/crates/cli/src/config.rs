//! Config documents for the CLI. Parsing is strict: unknown fields are
//! rejected, and activation parameters are validated against the named kind.

use fixnet::activations::{make_activation, ActivationKind, ActivationSpec};
use fixnet::linalg::{Matrix, Vector};
use fixnet::network::{LambdaSchedule, LayerSpec, NetworkSpec};
use fixnet::training::{LayerTemplate, Sample};
use fixnet::transformer::{AttentionHead, DecoderBlock, NormParams, SoftmaxMode};
use ndarray::{Array1, Array2};
use serde::Deserialize;

pub type ConfigResult<T> = Result<T, String>;

fn to_matrix(rows: &[Vec<f64>], what: &str) -> ConfigResult<Matrix> {
    if rows.is_empty() {
        return Err(format!("{what}: empty matrix"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(format!("{what}: ragged matrix rows"));
    }
    Ok(Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j]))
}

fn to_vector(v: &[f64]) -> Vector {
    Array1::from_vec(v.to_vec())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationConfig {
    pub kind: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub bias: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub softmax_lambda: Option<f64>,
    #[serde(default)]
    pub inner: Option<Box<ActivationConfig>>,
}

impl ActivationConfig {
    fn reject_extras(&self, allowed: &[&str]) -> ConfigResult<()> {
        let mut extras = Vec::new();
        if self.lambda.is_some() && !allowed.contains(&"lambda") {
            extras.push("lambda");
        }
        if self.bias.is_some() && !allowed.contains(&"bias") {
            extras.push("bias");
        }
        if self.alpha.is_some() && !allowed.contains(&"alpha") {
            extras.push("alpha");
        }
        if self.epsilon.is_some() && !allowed.contains(&"epsilon") {
            extras.push("epsilon");
        }
        if self.softmax_lambda.is_some() && !allowed.contains(&"softmax_lambda") {
            extras.push("softmax_lambda");
        }
        if self.inner.is_some() && !allowed.contains(&"inner") {
            extras.push("inner");
        }
        if extras.is_empty() {
            Ok(())
        } else {
            Err(format!(
                "activation '{}' does not take parameter(s): {}",
                self.kind,
                extras.join(", ")
            ))
        }
    }

    fn need(&self, v: Option<f64>, name: &str) -> ConfigResult<f64> {
        v.ok_or_else(|| format!("activation '{}' requires parameter '{name}'", self.kind))
    }

    pub fn to_kind(&self) -> ConfigResult<ActivationKind> {
        use ActivationKind::*;
        let k = match self.kind.as_str() {
            "identity" => {
                self.reject_extras(&[])?;
                Identity
            }
            "linear" => {
                self.reject_extras(&["lambda", "bias"])?;
                Linear { lambda: self.need(self.lambda, "lambda")?, bias: self.need(self.bias, "bias")? }
            }
            "relu" => {
                self.reject_extras(&["lambda", "bias"])?;
                Relu { lambda: self.need(self.lambda, "lambda")?, bias: self.need(self.bias, "bias")? }
            }
            "logistic" => {
                self.reject_extras(&["lambda", "bias"])?;
                Logistic { lambda: self.need(self.lambda, "lambda")?, bias: self.need(self.bias, "bias")? }
            }
            "sigmoid" => {
                self.reject_extras(&[])?;
                Sigmoid
            }
            "tanh-scaled" => {
                self.reject_extras(&["lambda"])?;
                TanhScaled { lambda: self.need(self.lambda, "lambda")? }
            }
            "softmax" => {
                self.reject_extras(&["lambda"])?;
                Softmax { lambda: self.need(self.lambda, "lambda")? }
            }
            "gelu2" => {
                self.reject_extras(&["lambda"])?;
                Gelu2 { lambda: self.need(self.lambda, "lambda")? }
            }
            "gelu" => {
                self.reject_extras(&["lambda"])?;
                Gelu { lambda: self.need(self.lambda, "lambda")? }
            }
            "softplus-scaled" => {
                self.reject_extras(&["lambda"])?;
                SoftplusScaled { lambda: self.need(self.lambda, "lambda")? }
            }
            "softplus-sharp" => {
                self.reject_extras(&["lambda"])?;
                SoftplusSharp { lambda: self.need(self.lambda, "lambda")? }
            }
            "softplus-vec" => {
                self.reject_extras(&[])?;
                SoftplusVec
            }
            "elu" => {
                self.reject_extras(&["lambda"])?;
                Elu { lambda: self.need(self.lambda, "lambda")? }
            }
            "selu" => {
                self.reject_extras(&["alpha", "lambda"])?;
                Selu { alpha: self.need(self.alpha, "alpha")?, lambda: self.need(self.lambda, "lambda")? }
            }
            "leaky-relu" => {
                self.reject_extras(&[])?;
                LeakyRelu
            }
            "prelu" => {
                self.reject_extras(&["lambda"])?;
                Prelu { lambda: self.need(self.lambda, "lambda")? }
            }
            "silu" => {
                self.reject_extras(&[])?;
                Silu
            }
            "swish" => {
                self.reject_extras(&["epsilon", "lambda"])?;
                Swish {
                    epsilon: self.need(self.epsilon, "epsilon")?,
                    lambda: self.need(self.lambda, "lambda")?,
                }
            }
            "gaussian" => {
                self.reject_extras(&[])?;
                Gaussian
            }
            "maxout" => {
                self.reject_extras(&[])?;
                Maxout
            }
            "approx-heaviside" => {
                self.reject_extras(&["epsilon"])?;
                ApproxHeaviside { epsilon: self.need(self.epsilon, "epsilon")? }
            }
            "multiquadric" => {
                self.reject_extras(&["alpha", "lambda"])?;
                Multiquadric {
                    alpha: self.need(self.alpha, "alpha")?,
                    lambda: self.need(self.lambda, "lambda")?,
                }
            }
            "inv-multiquadric" => {
                self.reject_extras(&["alpha", "lambda"])?;
                InvMultiquadric {
                    alpha: self.need(self.alpha, "alpha")?,
                    lambda: self.need(self.lambda, "lambda")?,
                }
            }
            "mish" => {
                self.reject_extras(&[])?;
                Mish
            }
            "metallic-mean" => {
                self.reject_extras(&[])?;
                MetallicMean
            }
            "arctan" => {
                self.reject_extras(&[])?;
                Arctan
            }
            "softsign" => {
                self.reject_extras(&[])?;
                Softsign
            }
            "isru" => {
                self.reject_extras(&["lambda"])?;
                Isru { lambda: self.need(self.lambda, "lambda")? }
            }
            "isrlu" => {
                self.reject_extras(&["lambda"])?;
                Isrlu { lambda: self.need(self.lambda, "lambda")? }
            }
            "sqnl" => {
                self.reject_extras(&[])?;
                Sqnl
            }
            "bent-identity" => {
                self.reject_extras(&["lambda"])?;
                BentIdentity { lambda: self.need(self.lambda, "lambda")? }
            }
            "soft-exponential" => {
                self.reject_extras(&["lambda"])?;
                SoftExponential { lambda: self.need(self.lambda, "lambda")? }
            }
            "soft-clipping" => {
                self.reject_extras(&["lambda"])?;
                SoftClipping { lambda: self.need(self.lambda, "lambda")? }
            }
            "softsign-vec" => {
                self.reject_extras(&[])?;
                SoftsignVec
            }
            "sinusoid" => {
                self.reject_extras(&[])?;
                Sinusoid
            }
            "sinc" => {
                self.reject_extras(&[])?;
                Sinc
            }
            "piecewise-linear" => {
                self.reject_extras(&[])?;
                PiecewiseLinear
            }
            "silu-sin" => {
                self.reject_extras(&["lambda", "alpha"])?;
                SiluSin {
                    lambda: self.need(self.lambda, "lambda")?,
                    alpha: self.need(self.alpha, "alpha")?,
                }
            }
            "cloglog" => {
                self.reject_extras(&[])?;
                Cloglog
            }
            "bipolar-sigmoid" => {
                self.reject_extras(&[])?;
                BipolarSigmoid
            }
            "hard-tanh" => {
                self.reject_extras(&[])?;
                HardTanh
            }
            "abs" => {
                self.reject_extras(&[])?;
                Abs
            }
            "logit" => {
                self.reject_extras(&[])?;
                Logit
            }
            "probit-softsign" => {
                self.reject_extras(&[])?;
                ProbitSoftsign
            }
            "linear-gaussian" => {
                self.reject_extras(&[])?;
                LinearGaussian
            }
            "attention-softmax" => {
                self.reject_extras(&["inner", "softmax_lambda"])?;
                let inner = self
                    .inner
                    .as_ref()
                    .ok_or("attention-softmax requires 'inner'")?
                    .to_kind()?;
                AttentionSoftmax {
                    inner: Box::new(inner),
                    softmax_lambda: self.need(self.softmax_lambda, "softmax_lambda")?,
                }
            }
            "attention-linear-gaussian" => {
                self.reject_extras(&["inner", "softmax_lambda"])?;
                let inner = self
                    .inner
                    .as_ref()
                    .ok_or("attention-linear-gaussian requires 'inner'")?
                    .to_kind()?;
                AttentionLinearGaussian {
                    inner: Box::new(inner),
                    softmax_lambda: self.need(self.softmax_lambda, "softmax_lambda")?,
                }
            }
            other => {
                let names: Vec<&str> = ActivationKind::default_catalog()
                    .iter()
                    .map(|k| k.name())
                    .collect::<Vec<_>>()
                    .into_iter()
                    .collect();
                return Err(format!(
                    "unknown activation kind '{other}'; valid kinds: {}",
                    names.join(", ")
                ));
            }
        };
        Ok(k)
    }

    pub fn to_spec(&self) -> ConfigResult<ActivationSpec> {
        make_activation(self.to_kind()?).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: ActivationConfig,
}

impl LayerConfig {
    pub fn to_layer(&self) -> ConfigResult<LayerSpec> {
        LayerSpec::new(
            to_matrix(&self.weight, "layer weight")?,
            to_vector(&self.bias),
            self.activation.to_spec()?,
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum LambdaConfig {
    Constant { value: f64 },
    Sequence { values: Vec<f64> },
}

impl LambdaConfig {
    pub fn to_schedule(&self) -> LambdaSchedule {
        match self {
            LambdaConfig::Constant { value } => LambdaSchedule::Constant { value: *value },
            LambdaConfig::Sequence { values } => LambdaSchedule::Sequence { values: values.clone() },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub x0: Vec<f64>,
    pub layers: Vec<LayerConfig>,
    pub lambda: LambdaConfig,
}

impl NetworkConfig {
    pub fn to_network(&self) -> ConfigResult<NetworkSpec> {
        let layers = self
            .layers
            .iter()
            .map(|l| l.to_layer())
            .collect::<ConfigResult<Vec<_>>>()?;
        NetworkSpec::new(to_vector(&self.x0), layers, self.lambda.to_schedule())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// "km" (default) or "contraction".
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub include_iterates: bool,
}

pub fn default_tol() -> f64 {
    1e-8
}

pub fn default_max_iter() -> usize {
    100_000
}

fn default_mode() -> String {
    "km".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateLayerConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: ActivationConfig,
}

impl TemplateLayerConfig {
    pub fn to_template(&self) -> ConfigResult<LayerTemplate> {
        Ok(LayerTemplate {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            activation: self.activation.to_spec()?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Inline samples, or a path to a JSON-lines dataset.
    #[serde(default)]
    pub samples: Option<Vec<Sample>>,
    #[serde(default)]
    pub dataset_path: Option<String>,
    pub template: Vec<TemplateLayerConfig>,
    #[serde(default)]
    pub teacher: Option<NetworkConfig>,
    #[serde(default)]
    pub omega: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
}

pub fn default_gamma() -> f64 {
    0.5
}

pub fn default_max_epochs() -> usize {
    100_000
}

pub fn default_fit_tol() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub id: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub id: String,
    pub template: Vec<TemplateLayerConfig>,
    pub clients: Vec<ClientConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "rule", rename_all = "snake_case")]
pub enum AggregationConfig {
    ParameterMean,
    ParameterWeighted { weights: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "policy", rename_all = "snake_case")]
pub enum SelectionConfig {
    All,
    RandomSubset { count: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedConfig {
    pub seed: u64,
    pub rounds: usize,
    pub tau: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub aggregation: AggregationConfig,
    #[serde(default = "default_selection")]
    pub selection: SelectionConfig,
    pub servers: Vec<ServerConfig>,
    /// Verification threshold on the final global VI residual, if any.
    #[serde(default)]
    pub target_residual: Option<f64>,
}

fn default_selection() -> SelectionConfig {
    SelectionConfig::All
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramSchmidtConfig {
    pub seed: u64,
    /// members[k] is the sample matrix (draws × components) of variable k.
    pub members: Vec<Vec<Vec<f64>>>,
    #[serde(default = "default_gram_tol")]
    pub gram_tol: f64,
}

pub fn default_gram_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub w_qk: Vec<Vec<f64>>,
    pub w_ov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub rho: Vec<f64>,
    pub zeta: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub heads: Vec<HeadConfig>,
    pub ff: LayerConfig,
    pub norm: NormConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub seed: u64,
    pub d: usize,
    pub n_tokens: usize,
    pub blocks: Vec<BlockConfig>,
    #[serde(default = "default_softmax_mode")]
    pub softmax_mode: String,
    pub x0: Vec<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_estimate_box")]
    pub estimate_box: (f64, f64),
    #[serde(default = "default_estimate_samples")]
    pub estimate_samples: usize,
    /// Iterate anyway when certification fails (exit 0 on convergence).
    #[serde(default)]
    pub allow_uncertified: bool,
}

fn default_softmax_mode() -> String {
    "paper_global".to_string()
}

fn default_estimate_box() -> (f64, f64) {
    (-2.0, 2.0)
}

fn default_estimate_samples() -> usize {
    800
}

impl LlmConfig {
    pub fn softmax_mode(&self) -> ConfigResult<SoftmaxMode> {
        match self.softmax_mode.as_str() {
            "paper_global" => Ok(SoftmaxMode::PaperGlobal),
            "rowwise" => Ok(SoftmaxMode::Rowwise),
            other => Err(format!("unknown softmax_mode '{other}' (paper_global | rowwise)")),
        }
    }

    pub fn to_blocks(&self) -> ConfigResult<Vec<DecoderBlock>> {
        let mode = self.softmax_mode()?;
        self.blocks
            .iter()
            .map(|b| {
                let heads = b
                    .heads
                    .iter()
                    .map(|h| {
                        Ok(AttentionHead {
                            w_qk: to_matrix(&h.w_qk, "w_qk")?,
                            w_ov: to_matrix(&h.w_ov, "w_ov")?,
                        })
                    })
                    .collect::<ConfigResult<Vec<_>>>()?;
                Ok(DecoderBlock {
                    heads,
                    ff: b.ff.to_layer()?,
                    norm: NormParams {
                        rho: to_vector(&b.norm.rho),
                        zeta: to_vector(&b.norm.zeta),
                        eps: b.norm.eps,
                    },
                    softmax_mode: mode,
                })
            })
            .collect()
    }

    pub fn x0_matrix(&self) -> ConfigResult<Matrix> {
        let m = to_matrix(&self.x0, "x0")?;
        if m.nrows() != self.n_tokens || m.ncols() != self.d {
            return Err(format!(
                "x0 must be {} x {}, got {} x {}",
                self.n_tokens,
                self.d,
                m.nrows(),
                m.ncols()
            ));
        }
        Ok(m)
    }
}
