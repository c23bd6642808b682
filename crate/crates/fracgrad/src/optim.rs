//! Fractional SGD training for feed-forward stacks of linear layers.
//!
//! One iteration is: forward a shuffled mini-batch through a fresh tape,
//! reverse-sweep, step every layer by `lr * grad`, then score the model on
//! the full validation split. The best-validation parameters are snapshotted
//! and restored at the end, so the model that leaves [`train`] is the one
//! the test metrics describe. Everything is seeded; two runs with the same
//! configuration produce bitwise-identical loss histories.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{BackwardRoute, FLinearLayer, Tape};
use crate::data::{batches, Sample, WindowDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::special::FracOrder;

/// Plain SGD hyper-parameters. Momentum and weight decay are carried for
/// shape compatibility with the usual optimizer signature but are fixed at
/// zero; a step is exactly `w <- w - lr * g`.
#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 1e-4,
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl SgdConfig {
    pub fn with_lr(lr: f64) -> Self {
        SgdConfig {
            lr,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config {
                message: format!("learning rate must be positive and finite, got {}", self.lr),
            });
        }
        if self.momentum != 0.0 || self.weight_decay != 0.0 {
            return Err(Error::Config {
                message: "momentum and weight decay are fixed at zero".into(),
            });
        }
        Ok(())
    }
}

/// Run-level configuration: data windowing, network width, differentiation
/// order, iteration budget, seed, and clamp floor.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub window: usize,
    pub horizon: usize,
    pub batch: usize,
    pub hidden: usize,
    pub alpha: FracOrder,
    pub iters: usize,
    pub seed: u64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 36,
            horizon: 48,
            batch: 256,
            hidden: 128,
            alpha: FracOrder::new(1.0).expect("1.0 is a valid order"),
            iters: 1500,
            seed: 42,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("window", self.window),
            ("horizon", self.horizon),
            ("batch", self.batch),
            ("hidden", self.hidden),
            ("iters", self.iters),
        ] {
            if v == 0 {
                return Err(Error::Config {
                    message: format!("{what} must be positive"),
                });
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config {
                message: format!("clamp floor eps must be positive, got {}", self.eps),
            });
        }
        Ok(())
    }
}

/// Per-layer gradients extracted from one backward sweep.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// A stack of linear layers applied in order.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<FLinearLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<FLinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config {
                message: "network needs at least one layer".into(),
            });
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch {
                    op: "layer stack",
                    left: pair[0].w().shape(),
                    right: pair[1].w().shape(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    /// Fresh network with the given layer widths, e.g. `[input, hidden,
    /// output]` for the two-layer shape. Weights and biases come from
    /// [`init_params`] with the given seed.
    pub fn init(dims: &[usize], alpha: FracOrder, eps: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config {
                message: "network needs at least two widths (input, output)".into(),
            });
        }
        let shapes: Vec<(usize, usize)> = dims.windows(2).map(|p| (p[0], p[1])).collect();
        let params = init_params(&shapes, seed)?;
        let layers = params
            .into_iter()
            .map(|(w, b)| FLinearLayer::new(w, b, alpha, eps))
            .collect::<Result<Vec<_>>>()?;
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[FLinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FLinearLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Plain forward pass with no tape.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            y = layer.forward(&y)?;
        }
        Ok(y)
    }

    /// Copies of all parameters, layer by layer: w0, b0, w1, b1, ...
    pub fn snapshot(&self) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push(layer.w().clone());
            out.push(layer.b().clone());
        }
        out
    }

    /// Writes a snapshot back into the network. Shapes must match.
    pub fn restore(&mut self, snapshot: &[Matrix]) -> Result<()> {
        if snapshot.len() != self.layers.len() * 2 {
            return Err(Error::State {
                message: format!(
                    "snapshot has {} matrices, network needs {}",
                    snapshot.len(),
                    self.layers.len() * 2
                ),
            });
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (w, b) = (&snapshot[2 * i], &snapshot[2 * i + 1]);
            if w.shape() != layer.w().shape() || b.shape() != layer.b().shape() {
                return Err(Error::ShapeMismatch {
                    op: "snapshot restore",
                    left: w.shape(),
                    right: layer.w().shape(),
                });
            }
            *layer.w_mut() = w.clone();
            *layer.b_mut() = b.clone();
        }
        Ok(())
    }
}

/// Draws `(weight, bias)` pairs for the given `(fan_in, fan_out)` shapes:
/// weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` from a ChaCha8
/// stream seeded with `seed`, biases zero. Identical seeds give bitwise
/// identical parameters.
pub fn init_params(shapes: &[(usize, usize)], seed: u64) -> Result<Vec<(Matrix, Matrix)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(shapes.len());
    for &(fan_in, fan_out) in shapes {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Config {
                message: format!("layer shape {fan_in}x{fan_out} must be positive"),
            });
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..=bound));
        let b = Matrix::zeros(1, fan_out);
        out.push((w, b));
    }
    Ok(out)
}

/// In-place step `w <- w - lr * g` for every parameter. One gradient entry
/// per layer is required.
pub fn sgd_step(model: &mut Mlp, grads: &[LayerGrads], cfg: &SgdConfig) -> Result<()> {
    cfg.validate()?;
    if grads.len() != model.layers.len() {
        return Err(Error::State {
            message: format!(
                "{} gradient entries for {} layers",
                grads.len(),
                model.layers.len()
            ),
        });
    }
    for (layer, g) in model.layers.iter_mut().zip(grads) {
        if g.weight.shape() != layer.w().shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd weight step",
                left: layer.w().shape(),
                right: g.weight.shape(),
            });
        }
        if g.bias.shape() != layer.b().shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd bias step",
                left: layer.b().shape(),
                right: g.bias.shape(),
            });
        }
        for (p, gv) in layer.w_mut().data_mut().iter_mut().zip(g.weight.data()) {
            *p -= cfg.lr * gv;
        }
        for (p, gv) in layer.b_mut().data_mut().iter_mut().zip(g.bias.data()) {
            *p -= cfg.lr * gv;
        }
    }
    Ok(())
}

/// Outcome of a training run. The loss histories have one entry per
/// iteration; timing and buffer fields describe the run that produced them
/// and are the only non-reproducible fields.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_iter: usize,
    pub best_val_loss: f64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub secs_per_epoch: f64,
    pub peak_buffer_bytes: usize,
}

fn forward_backward(
    model: &Mlp,
    xb: Matrix,
    yb: Matrix,
    route: BackwardRoute,
) -> Result<(f64, Vec<LayerGrads>, usize)> {
    let mut tape = Tape::new();
    let mut node = tape.input(xb, false);
    let mut layer_nodes = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        node = tape.flinear(layer, node)?;
        layer_nodes.push(node);
    }
    let loss_node = tape.mse(node, yb)?;
    tape.backward_route(route)?;
    let loss = tape.loss(loss_node).expect("loss node was just created");
    let grads = layer_nodes
        .iter()
        .map(|&id| {
            Ok(LayerGrads {
                weight: tape
                    .weight_grad(id)
                    .cloned()
                    .ok_or_else(|| Error::State {
                        message: "backward left no weight gradient".into(),
                    })?,
                bias: tape.bias_grad(id).cloned().ok_or_else(|| Error::State {
                    message: "backward left no bias gradient".into(),
                })?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, grads, tape.buffer_bytes()))
}

/// Runs seeded shuffled mini-batch SGD for `cfg.iters` iterations, scoring
/// the validation split after every step and keeping the best-validation
/// snapshot. On return the model holds that snapshot and the report carries
/// its test metrics. A non-finite loss aborts with a divergence error that
/// names the order, the learning rate, and the iteration.
pub fn train(
    model: &mut Mlp,
    data: &WindowDataset,
    cfg: &TrainConfig,
    sgd: &SgdConfig,
    route: BackwardRoute,
) -> Result<TrainReport> {
    cfg.validate()?;
    sgd.validate()?;
    for (name, split) in [
        ("train", &data.train),
        ("validation", &data.val),
        ("test", &data.test),
    ] {
        if split.is_empty() {
            return Err(Error::Config {
                message: format!("{name} split is empty"),
            });
        }
    }
    if model.in_dim() != data.input_dim() || model.out_dim() != data.horizon {
        return Err(Error::Config {
            message: format!(
                "network {}->{} does not fit windows {} -> horizon {}",
                model.in_dim(),
                model.out_dim(),
                data.input_dim(),
                data.horizon
            ),
        });
    }

    let mut train_hist = Vec::with_capacity(cfg.iters);
    let mut val_hist = Vec::with_capacity(cfg.iters);
    let mut best_iter = 0usize;
    let mut best_val = f64::INFINITY;
    let mut best_snapshot = model.snapshot();
    let mut peak_bytes = 0usize;
    let mut iter = 0usize;
    let mut epochs = 0usize;
    let started = Instant::now();

    'outer: loop {
        let epoch_seed = cfg.seed.wrapping_add(epochs as u64);
        let epoch_batches = batches(&data.train, cfg.batch, epoch_seed, true)?;
        epochs += 1;
        for (xb, yb) in epoch_batches {
            iter += 1;
            let (loss, grads, bytes) = forward_backward(model, xb, yb, route)?;
            peak_bytes = peak_bytes.max(bytes);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    alpha: cfg.alpha.value(),
                    lr: sgd.lr,
                    iteration: iter,
                });
            }
            sgd_step(model, &grads, sgd)?;
            let (val_mse, _) = evaluate(model, &data.val)?;
            if !val_mse.is_finite() {
                return Err(Error::Divergence {
                    alpha: cfg.alpha.value(),
                    lr: sgd.lr,
                    iteration: iter,
                });
            }
            train_hist.push(loss);
            val_hist.push(val_mse);
            if val_mse < best_val {
                best_val = val_mse;
                best_iter = iter;
                best_snapshot = model.snapshot();
            }
            if iter == cfg.iters {
                break 'outer;
            }
        }
    }
    let secs_total = started.elapsed().as_secs_f64();

    model.restore(&best_snapshot)?;
    let (test_mse, test_mae) = evaluate(model, &data.test)?;
    Ok(TrainReport {
        train_loss: train_hist,
        val_loss: val_hist,
        best_iter,
        best_val_loss: best_val,
        test_mse,
        test_mae,
        secs_per_epoch: secs_total / epochs as f64,
        peak_buffer_bytes: peak_bytes,
    })
}

/// Mean squared error and mean absolute error over a split: both are summed
/// over every prediction entry first and divided once, so batching does not
/// change the result.
pub fn evaluate(model: &Mlp, samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::State {
            message: "cannot evaluate an empty split".into(),
        });
    }
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    let mut count = 0usize;
    for (xb, yb) in batches(samples, 256, 0, false)? {
        let pred = model.forward(&xb)?;
        for (p, t) in pred.data().iter().zip(yb.data()) {
            let d = p - t;
            sum_sq += d * d;
            sum_abs += d.abs();
        }
        count += pred.data().len();
    }
    Ok((sum_sq / count as f64, sum_abs / count as f64))
}

/// Times one training epoch (no validation inside the loop) from a fresh
/// seeded model, `repeats` times, and reports the fastest pass together
/// with the peak tape bytes seen. The minimum filters scheduler noise while
/// keeping systematic cost differences between routes visible.
pub fn bench_epoch(
    data: &WindowDataset,
    cfg: &TrainConfig,
    sgd: &SgdConfig,
    route: BackwardRoute,
    repeats: usize,
) -> Result<(f64, usize)> {
    if repeats == 0 {
        return Err(Error::Config {
            message: "bench needs at least one repeat".into(),
        });
    }
    cfg.validate()?;
    sgd.validate()?;
    let mut best_secs = f64::INFINITY;
    let mut peak_bytes = 0usize;
    for _ in 0..repeats {
        let mut model = Mlp::init(
            &[data.input_dim(), cfg.hidden, data.horizon],
            cfg.alpha,
            cfg.eps,
            cfg.seed,
        )?;
        let epoch_batches = batches(&data.train, cfg.batch, cfg.seed, true)?;
        let started = Instant::now();
        for (xb, yb) in epoch_batches {
            let (_, grads, bytes) = forward_backward(&model, xb, yb, route)?;
            peak_bytes = peak_bytes.max(bytes);
            sgd_step(&mut model, &grads, sgd)?;
        }
        best_secs = best_secs.min(started.elapsed().as_secs_f64());
    }
    Ok((best_secs, peak_bytes))
}

/// The numbers a run leaves behind next to its loss history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub alpha: f64,
    pub lr: f64,
    pub seed: u64,
    pub best_iter: usize,
    pub best_val_loss: f64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub secs_per_epoch: f64,
    pub peak_buffer_bytes: usize,
}

impl RunMetrics {
    pub fn from_report(report: &TrainReport, alpha: FracOrder, lr: f64, seed: u64) -> Self {
        RunMetrics {
            alpha: alpha.value(),
            lr,
            seed,
            best_iter: report.best_iter,
            best_val_loss: report.best_val_loss,
            test_mse: report.test_mse,
            test_mae: report.test_mae,
            secs_per_epoch: report.secs_per_epoch,
            peak_buffer_bytes: report.peak_buffer_bytes,
        }
    }
}

/// Writes `iter,train_loss,val_loss` rows, 1-based iterations, full float
/// precision.
pub fn write_history_csv(path: &Path, report: &TrainReport) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iter,train_loss,val_loss")?;
    for (i, (tr, va)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
        writeln!(out, "{},{tr},{va}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_metrics_json(path: &Path, metrics: &RunMetrics) -> Result<()> {
    let text = serde_json::to_string_pretty(metrics).map_err(|e| Error::Config {
        message: format!("metrics serialization failed: {e}"),
    })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_metrics_json(path: &Path) -> Result<RunMetrics> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        message: format!("{}: {e}", path.display()),
    })
}

const MODEL_MAGIC: &[u8; 5] = b"FGRD1";

/// Serializes the model parameters: magic `FGRD1`, then a little-endian u32
/// matrix count, then per matrix u32 rows, u32 cols, and row-major f64
/// little-endian data. Matrices appear as w0, b0, w1, b1, ...
pub fn save_model(path: &Path, model: &Mlp) -> Result<()> {
    let matrices = model.snapshot();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&(matrices.len() as u32).to_le_bytes())?;
    for m in &matrices {
        out.write_all(&(m.rows() as u32).to_le_bytes())?;
        out.write_all(&(m.cols() as u32).to_le_bytes())?;
        for v in m.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads back the matrix list written by [`save_model`].
pub fn load_matrices(path: &Path) -> Result<Vec<Matrix>> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 5];
    reader.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Config {
            message: format!("{}: not a model file (bad magic)", path.display()),
        });
    }
    let mut u32_buf = [0u8; 4];
    reader.read_exact(&mut u32_buf)?;
    let count = u32::from_le_bytes(u32_buf) as usize;
    let mut matrices = Vec::with_capacity(count);
    for _ in 0..count {
        reader.read_exact(&mut u32_buf)?;
        let rows = u32::from_le_bytes(u32_buf) as usize;
        reader.read_exact(&mut u32_buf)?;
        let cols = u32::from_le_bytes(u32_buf) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut f64_buf = [0u8; 8];
        for _ in 0..rows * cols {
            reader.read_exact(&mut f64_buf)?;
            data.push(f64::from_le_bytes(f64_buf));
        }
        matrices.push(Matrix::from_vec(rows, cols, data)?);
    }
    Ok(matrices)
}

/// Rebuilds a network from a `w, b, w, b, ...` matrix list.
pub fn mlp_from_matrices(matrices: Vec<Matrix>, alpha: FracOrder, eps: f64) -> Result<Mlp> {
    if matrices.is_empty() || matrices.len() % 2 != 0 {
        return Err(Error::Config {
            message: format!(
                "model file holds {} matrices, expected weight/bias pairs",
                matrices.len()
            ),
        });
    }
    let mut layers = Vec::with_capacity(matrices.len() / 2);
    let mut it = matrices.into_iter();
    while let (Some(w), Some(b)) = (it.next(), it.next()) {
        layers.push(FLinearLayer::new(w, b, alpha, eps)?);
    }
    Mlp::new(layers)
}
