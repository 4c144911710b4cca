//! Feature extractor and classifier as small fully connected networks.
//!
//! The extractor applies ReLU after every layer, so its output features are
//! non-negative. The classifier applies ReLU between hidden layers only and
//! ends in a row softmax.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::Predictions;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output widths, got {layer_widths:?}"
            )));
        }
        if layer_widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be >= 1, got {layer_widths:?}"
            )));
        }
        Ok(Self { layer_widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`
    pub weight: Tensor,
    /// `1 × fan_out`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub spec: MlpSpec,
    pub rng_seed: u64,
    pub layers: Vec<Layer>,
}

/// Xavier-uniform weights, zero biases. Deterministic in `seed`.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .widths()
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Layer {
                weight: Tensor::matrix(fan_in, fan_out, data).expect("consistent shape"),
                bias: Tensor::zeros(&[1, fan_out]),
            }
        })
        .collect();
    ModelParams {
        spec: spec.clone(),
        rng_seed: seed,
        layers,
    }
}

impl ModelParams {
    /// Parameter tensors in a fixed order (`w0, b0, w1, b1, …`).
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Records every parameter as a differentiable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        self.bind_with(tape, true)
    }

    /// Records every parameter as a constant (forward-only evaluation).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        self.bind_with(tape, false)
    }

    fn bind_with<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundMlp<'t> {
        let put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BoundMlp {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| (put(&l.weight), put(&l.bias)))
                .collect(),
        }
    }
}

/// Parameters of one network as nodes on a tape.
#[derive(Debug, Clone)]
pub struct BoundMlp<'t> {
    spec: MlpSpec,
    layers: Vec<(Var<'t>, Var<'t>)>,
}

impl<'t> BoundMlp<'t> {
    /// Reassembles a network from parameter nodes ordered as in
    /// [`ModelParams::tensors`].
    pub fn from_vars(spec: &MlpSpec, vars: &[Var<'t>]) -> Result<Self> {
        if vars.len() != 2 * spec.num_layers() {
            return Err(Error::Contract(format!(
                "expected {} parameter nodes, got {}",
                2 * spec.num_layers(),
                vars.len()
            )));
        }
        for (pair, w) in vars.chunks(2).zip(spec.widths().windows(2)) {
            let (ws, bs) = (pair[0].shape(), pair[1].shape());
            if ws != [w[0], w[1]] || bs != [1, w[1]] {
                return Err(Error::shape("mlp parameters", &ws, &bs));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers: vars.chunks(2).map(|c| (c[0], c[1])).collect(),
        })
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    fn forward(&self, x: Var<'t>, relu_last: bool) -> Result<Var<'t>> {
        let width = x.value().cols();
        if x.value().rank() != 2 || width != self.spec.input_width() {
            return Err(Error::shape(
                "mlp input",
                &x.shape(),
                &[usize::MAX, self.spec.input_width()],
            ));
        }
        let n = self.layers.len();
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(w)?.add_row(b)?;
            if i + 1 < n || relu_last {
                h = h.relu();
            }
        }
        Ok(h)
    }
}

/// Semantic features `G(x)`.
pub fn extract<'t>(g: &BoundMlp<'t>, x: Var<'t>) -> Result<Var<'t>> {
    g.forward(x, true)
}

/// Class probabilities `C(f)`. With `reverse_lambda`, `f` first passes through
/// a gradient reversal node scaled by that factor.
pub fn classify<'t>(
    c: &BoundMlp<'t>,
    features: Var<'t>,
    reverse_lambda: Option<f64>,
) -> Result<Predictions<'t>> {
    let input = match reverse_lambda {
        Some(lambda) => features.grl(lambda)?,
        None => features,
    };
    let logits = c.forward(input, false)?;
    Ok(Predictions::from_softmax(logits.softmax_rows()?))
}

/// Forward-only prediction matrix for a feature matrix `x`.
pub fn predict(g: &ModelParams, c: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let gb = g.bind_frozen(&tape);
    let cb = c.bind_frozen(&tape);
    let f = extract(&gb, tape.constant(x.clone()))?;
    let p = classify(&cb, f, None)?;
    let out = p.var().value().clone();
    Ok(out)
}

/// Forward-only features for `x`.
pub fn features(g: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let gb = g.bind_frozen(&tape);
    let f = extract(&gb, tape.constant(x.clone()))?;
    let out = f.value().clone();
    Ok(out)
}

pub const CHECKPOINT_FORMAT: &str = "uda-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model state. Serialized as a single JSON document; see the README
/// for the field list. Floats are written in shortest round-trip form, so a
/// save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub extractor: ModelParams,
    pub classifier: ModelParams,
}

impl Checkpoint {
    pub fn new(seed: u64, config_hash: String, extractor: ModelParams, classifier: ModelParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed,
            config_hash,
            extractor,
            classifier,
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(r))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        for p in [&ck.extractor, &ck.classifier] {
            p.validate()?;
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

impl ModelParams {
    fn validate(&self) -> Result<()> {
        MlpSpec::new(self.spec.layer_widths.clone())?;
        if self.layers.len() != self.spec.num_layers() {
            return Err(Error::Data("layer count does not match spec".into()));
        }
        for (l, w) in self.layers.iter().zip(self.spec.widths().windows(2)) {
            if l.weight.shape() != [w[0], w[1]] || l.bias.shape() != [1, w[1]] {
                return Err(Error::Data(format!(
                    "layer shapes {:?}/{:?} do not chain with widths {w:?}",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
            if l.weight.len() != w[0] * w[1] || l.bias.len() != w[1] {
                return Err(Error::Data("parameter buffer length mismatch".into()));
            }
        }
        Ok(())
    }
}
