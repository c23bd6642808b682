//! Command-line surface: training and evaluation runs, a verification
//! battery against the explicit oracles, the closed-form demo scenes, and
//! a per-order timing table.
//!
//! Exit codes are part of the contract: 0 success, 1 a verification suite
//! failed, 2 bad invocation, 3 training diverged. The environment variable
//! `FRACGRAD_SEED` overrides every `--seed` flag when set.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{BackwardRoute, Tape};
use crate::data::{load_csv, synth_series, SynthKind, WindowDataset};
use crate::demos::{bowl_trajectory, saddle_gradients, scaled_deriv, scaled_deriv_split};
use crate::error::{Error, Result};
use crate::fracdiff::{
    count_distinct_blocks, diff_block_explicit, weight_grad_block11, JacobianBlockId,
    LinearContext,
};
use crate::linalg::Matrix;
use crate::optim::{
    bench_epoch, evaluate, load_matrices, mlp_from_matrices, save_model, train, write_history_csv,
    write_metrics_json, Mlp, RunMetrics, SgdConfig, TrainConfig,
};
use crate::special::FracOrder;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "fracgrad",
    version,
    about = "Fractional-order gradients for linear layers: train, evaluate, verify, demo, bench."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a two-layer network with fractional SGD and write run artifacts.
    Train(TrainArgs),
    /// Rebuild the dataset, load a saved model, and print its test metrics.
    Eval(EvalArgs),
    /// Run the oracle suites and exit nonzero if any property fails.
    Verify(VerifyArgs),
    /// Write one of the closed-form demo scenes as CSV.
    Demo(DemoArgs),
    /// Time one training epoch per differentiation order.
    Bench(BenchArgs),
}

/// Flags shared by every command that needs a windowed dataset.
#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Data source: synth:smooth, synth:spiky, or a CSV file path.
    #[arg(long, default_value = "synth:smooth")]
    data: String,
    /// Label column name for CSV sources.
    #[arg(long, default_value = "OT")]
    label: String,
    /// Rows generated for synth sources.
    #[arg(long, default_value_t = 1600)]
    synth_len: usize,
    /// Feature columns generated for synth sources.
    #[arg(long, default_value_t = 7)]
    synth_features: usize,
    /// Sliding-window length fed to the network.
    #[arg(long, default_value_t = 36)]
    window: usize,
    /// Steps ahead the network predicts.
    #[arg(long, default_value_t = 48)]
    horizon: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Differentiation order in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Magnitude clamp floor for the fractional power terms.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Directory receiving history.csv, metrics.json, model.bin.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Saved model to load.
    #[arg(long, default_value = "out/model.bin")]
    model: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Random cases per suite.
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated orders exercised by the random suites.
    #[arg(long, default_value = "0.3,0.5,0.7,0.9,1.0", value_delimiter = ',')]
    alpha_grid: Vec<f64>,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[command(subcommand)]
    scene: DemoScene,
}

#[derive(Subcommand, Debug)]
enum DemoScene {
    /// Descend a shifted bowl with fractional steps; one row per iterate.
    Trajectory(TrajectoryArgs),
    /// Classical vs fractional gradient field of the saddle z = x^2 - y^2.
    Saddle(SaddleArgs),
    /// Power-rule and bias-coupling split of the scalar derivative.
    Decomposition(DecompositionArgs),
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Step size.
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = -3.5, allow_negative_numbers = true)]
    x1: f64,
    #[arg(long, default_value_t = -4.7, allow_negative_numbers = true)]
    x2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SaddleArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Half-width of the sampled square around the origin.
    #[arg(long, default_value_t = 2.0)]
    extent: f64,
    /// Sample points per axis.
    #[arg(long, default_value_t = 21)]
    grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DecompositionArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Coefficient of the differentiated weight.
    #[arg(long, default_value_t = 1.0)]
    x: f64,
    /// Bias feeding the coupling term.
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    /// Upstream loss derivative scaling both pieces.
    #[arg(long, default_value_t = 1.0)]
    j_prime: f64,
    /// Sample points across w in [-2, 2].
    #[arg(long, default_value_t = 81)]
    grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated orders to time.
    #[arg(long, default_value = "0.9,1.0", value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    /// Timing repeats per row; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Add a row timing the dedicated integer-order backward path.
    #[arg(long)]
    reference: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Runs the parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Demo(args) => cmd_demo(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Divergence { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn resolve_seed(flag: u64) -> Result<u64> {
    match std::env::var("FRACGRAD_SEED") {
        Ok(text) => text.trim().parse::<u64>().map_err(|_| Error::Config {
            message: format!("FRACGRAD_SEED must be an unsigned integer, got {text:?}"),
        }),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(Error::Config {
            message: format!("FRACGRAD_SEED is not readable: {e}"),
        }),
    }
}

fn build_dataset(args: &DataArgs, seed: u64) -> Result<WindowDataset> {
    let frame = if let Some(kind) = args.data.strip_prefix("synth:") {
        let kind = SynthKind::from_str(kind).map_err(|message| Error::Config { message })?;
        synth_series(kind, args.synth_len, args.synth_features, seed)?
    } else {
        load_csv(Path::new(&args.data), &args.label)?
    };
    WindowDataset::build(&frame, args.window, args.horizon)
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed)?;
    let alpha = FracOrder::new(args.alpha)?;
    let sgd = SgdConfig::with_lr(args.lr);
    let cfg = TrainConfig {
        window: args.data.window,
        horizon: args.data.horizon,
        batch: args.batch,
        hidden: args.hidden,
        alpha,
        iters: args.iters,
        seed,
        eps: args.eps,
    };
    let dataset = build_dataset(&args.data, seed)?;
    let mut model = Mlp::init(
        &[dataset.input_dim(), cfg.hidden, cfg.horizon],
        alpha,
        cfg.eps,
        seed,
    )?;
    let report = train(&mut model, &dataset, &cfg, &sgd, BackwardRoute::Fractional)?;

    std::fs::create_dir_all(&args.out)?;
    write_history_csv(&args.out.join("history.csv"), &report)?;
    let metrics = RunMetrics::from_report(&report, alpha, args.lr, seed);
    write_metrics_json(&args.out.join("metrics.json"), &metrics)?;
    save_model(&args.out.join("model.bin"), &model)?;

    println!(
        "trained alpha {} for {} iterations (seed {seed}): best iter {} val_mse {}",
        alpha,
        report.train_loss.len(),
        report.best_iter,
        report.best_val_loss
    );
    println!("test_mse {}", report.test_mse);
    println!("test_mae {}", report.test_mae);
    println!("artifacts in {}", args.out.display());
    Ok(EXIT_OK)
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed)?;
    let dataset = build_dataset(&args.data, seed)?;
    let matrices = load_matrices(&args.model)?;
    // The order never enters a forward pass, so any valid one will do.
    let alpha = FracOrder::new(1.0).expect("1.0 is a valid order");
    let model = mlp_from_matrices(matrices, alpha, 1e-8)?;
    if model.in_dim() != dataset.input_dim() || model.out_dim() != dataset.horizon {
        return Err(Error::Config {
            message: format!(
                "model {}->{} does not fit windows {} -> horizon {}",
                model.in_dim(),
                model.out_dim(),
                dataset.input_dim(),
                dataset.horizon
            ),
        });
    }
    let (mse, mae) = evaluate(&model, &dataset.test)?;
    println!("test_mse {mse}");
    println!("test_mae {mae}");
    Ok(EXIT_OK)
}

/// One verification suite's verdict.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))
}

/// Weight entries kept away from zero so negative powers stay tame.
fn random_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let magnitude = rng.gen_range(0.05..2.0);
        if rng.gen_bool(0.5) {
            magnitude
        } else {
            -magnitude
        }
    })
}

fn suite_oracle_equivalence(cases: usize, seed: u64, grid: &[FracOrder]) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..cases {
        let (p, m, n) = (
            rng.gen_range(1..=6),
            rng.gen_range(1..=6),
            rng.gen_range(1..=6),
        );
        let x = random_matrix(&mut rng, p, m);
        let w = random_weights(&mut rng, m, n);
        let b = random_matrix(&mut rng, 1, n);
        let g = random_matrix(&mut rng, p, n);
        let alpha = grid[i % grid.len()];
        let outcome = (|| -> Result<f64> {
            let ctx = LinearContext::new(&x, &w, &b, alpha, 1e-8)?;
            let implicit = weight_grad_block11(&ctx, &g)?;
            let block = diff_block_explicit(&ctx, JacobianBlockId::new(1, 1))?;
            let explicit = block.transpose().matmul(&g)?;
            Ok(implicit.max_abs_diff(&explicit)? / explicit.max_abs().max(1.0))
        })();
        match outcome {
            Ok(gap) => worst = worst.max(gap),
            Err(e) => {
                return SuiteOutcome {
                    name: "weight-grad vs explicit block oracle",
                    passed: false,
                    detail: format!("case {i}: {e}"),
                }
            }
        }
    }
    SuiteOutcome {
        name: "weight-grad vs explicit block oracle",
        passed: worst <= 1e-10,
        detail: format!("{cases} cases, worst relative gap {worst:.3e} (bound 1e-10)"),
    }
}

fn suite_order_one_reduction(cases: usize, seed: u64) -> SuiteOutcome {
    let name = "order-one bitwise reduction";
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let alpha = FracOrder::new(1.0).expect("1.0 is a valid order");
    for i in 0..cases {
        let (p, m, n) = (
            rng.gen_range(1..=6),
            rng.gen_range(1..=6),
            rng.gen_range(1..=6),
        );
        let x = random_matrix(&mut rng, p, m);
        let w = random_weights(&mut rng, m, n);
        let b = random_matrix(&mut rng, 1, n);
        let g = random_matrix(&mut rng, p, n);
        let outcome = (|| -> Result<bool> {
            let ctx = LinearContext::new(&x, &w, &b, alpha, 1e-8)?;
            let got = weight_grad_block11(&ctx, &g)?;
            let want = x.transpose().matmul(&g)?;
            Ok(got
                .data()
                .iter()
                .zip(want.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()))
        })();
        match outcome {
            Ok(true) => {}
            Ok(false) => {
                return SuiteOutcome {
                    name,
                    passed: false,
                    detail: format!("case {i}: order-one gradient differs from X^T G"),
                }
            }
            Err(e) => {
                return SuiteOutcome {
                    name,
                    passed: false,
                    detail: format!("case {i}: {e}"),
                }
            }
        }
    }
    SuiteOutcome {
        name,
        passed: true,
        detail: format!("{cases} cases bitwise equal to X^T G"),
    }
}

fn suite_block_census(seed: u64) -> SuiteOutcome {
    let name = "jacobian block census";
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let half = FracOrder::new(0.5).expect("0.5 is a valid order");
    let one = FracOrder::new(1.0).expect("1.0 is a valid order");
    let mut seen = Vec::new();
    for n in 1..=3usize {
        let x = random_matrix(&mut rng, 3, 4);
        let w = random_weights(&mut rng, 4, n);
        let b = random_matrix(&mut rng, 1, n);
        let outcome = (|| -> Result<(usize, bool)> {
            let ctx = LinearContext::new(&x, &w, &b, half, 1e-8)?;
            let distinct = count_distinct_blocks(&ctx, 1e-12)?;
            let ctx_one = LinearContext::new(&x, &w, &b, one, 1e-8)?;
            let mut structure_ok = true;
            for i in 1..=n {
                for j in 1..=n {
                    let block = diff_block_explicit(&ctx_one, JacobianBlockId::new(i, j))?;
                    if i == j {
                        structure_ok &= block.max_abs_diff(&x)? == 0.0;
                    } else {
                        structure_ok &= block.max_abs() == 0.0;
                    }
                }
            }
            Ok((distinct, structure_ok))
        })();
        match outcome {
            Ok((distinct, structure_ok)) => {
                if distinct != n * n {
                    return SuiteOutcome {
                        name,
                        passed: false,
                        detail: format!("n={n}: {distinct} distinct half-order blocks, want {}", n * n),
                    };
                }
                if !structure_ok {
                    return SuiteOutcome {
                        name,
                        passed: false,
                        detail: format!("n={n}: order-one grid is not X on the diagonal, zero off it"),
                    };
                }
                seen.push(distinct);
            }
            Err(e) => {
                return SuiteOutcome {
                    name,
                    passed: false,
                    detail: format!("n={n}: {e}"),
                }
            }
        }
    }
    SuiteOutcome {
        name,
        passed: true,
        detail: format!(
            "half-order census {:?} for n=1,2,3; order-one grids block-diagonal",
            seen
        ),
    }
}

fn suite_finite_differences(seed: u64) -> SuiteOutcome {
    let name = "order-one finite differences";
    match fd_worst_gap(seed) {
        Ok((worst, params)) => SuiteOutcome {
            name,
            passed: worst <= 1e-6,
            detail: format!("worst relative gap {worst:.3e} over {params} parameters (bound 1e-6)"),
        },
        Err(e) => SuiteOutcome {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Central-difference check of a whole two-layer backward sweep at order
/// one, step 1e-5. Returns the worst relative gap and the parameter count.
fn fd_worst_gap(seed: u64) -> Result<(f64, usize)> {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let alpha = FracOrder::new(1.0).expect("1.0 is a valid order");
    let (p, input, hidden, output) = (4, 5, 6, 3);
    let x = random_matrix(&mut rng, p, input);
    let label = random_matrix(&mut rng, p, output);
    let mut model = Mlp::init(&[input, hidden, output], alpha, 1e-8, seed)?;

    let loss_of = |model: &Mlp| -> Result<f64> {
        let pred = model.forward(&x)?;
        let d = pred.sub(&label)?;
        Ok(d.data().iter().map(|v| v * v).sum::<f64>() / d.data().len() as f64)
    };

    // One tape sweep collects every analytic gradient.
    let mut tape = Tape::new();
    let mut node = tape.input(x.clone(), false);
    let mut nodes = Vec::new();
    for layer in model.layers() {
        node = tape.flinear(layer, node)?;
        nodes.push(node);
    }
    tape.mse(node, label.clone())?;
    tape.backward()?;
    let mut analytic = Vec::new();
    for &id in &nodes {
        analytic.push((
            tape.weight_grad(id).cloned().expect("weight grad stored"),
            tape.bias_grad(id).cloned().expect("bias grad stored"),
        ));
    }
    drop(tape);

    let mut worst = 0.0f64;
    let mut params = 0usize;
    for layer_idx in 0..analytic.len() {
        for pick_weight in [true, false] {
            let grad = if pick_weight {
                analytic[layer_idx].0.clone()
            } else {
                analytic[layer_idx].1.clone()
            };
            let (rows, cols) = grad.shape();
            for r in 0..rows {
                for c in 0..cols {
                    let nudge = |model: &mut Mlp, delta: f64| {
                        let layer = &mut model.layers_mut()[layer_idx];
                        let target = if pick_weight { layer.w_mut() } else { layer.b_mut() };
                        let v = target.get(r, c);
                        target.set(r, c, v + delta);
                    };
                    nudge(&mut model, STEP);
                    let up = loss_of(&model)?;
                    nudge(&mut model, -2.0 * STEP);
                    let down = loss_of(&model)?;
                    nudge(&mut model, STEP);
                    let numeric = (up - down) / (2.0 * STEP);
                    let gap = (grad.get(r, c) - numeric).abs() / numeric.abs().max(1.0);
                    worst = worst.max(gap);
                    params += 1;
                }
            }
        }
    }
    Ok((worst, params))
}

/// Runs every suite and collects the verdicts. Deterministic in `seed`.
pub fn run_verification(cases: usize, seed: u64, alpha_grid: &[f64]) -> Result<Vec<SuiteOutcome>> {
    if cases == 0 {
        return Err(Error::Config {
            message: "verification needs at least one case".into(),
        });
    }
    if alpha_grid.is_empty() {
        return Err(Error::Config {
            message: "alpha grid is empty".into(),
        });
    }
    let grid = alpha_grid
        .iter()
        .map(|&a| FracOrder::new(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        suite_oracle_equivalence(cases, seed, &grid),
        suite_order_one_reduction(cases, seed),
        suite_block_census(seed),
        suite_finite_differences(seed),
    ])
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed)?;
    let outcomes = run_verification(args.cases, seed, &args.alpha_grid)?;
    println!(
        "verification: {} cases, seed {seed}, orders {:?}",
        args.cases, args.alpha_grid
    );
    let mut all_passed = true;
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{verdict}  {:<40} {}", o.name, o.detail);
        all_passed &= o.passed;
    }
    if all_passed {
        println!("all suites passed");
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_VERIFY_FAILED)
    }
}

fn cmd_demo(args: DemoArgs) -> Result<i32> {
    match args.scene {
        DemoScene::Trajectory(t) => {
            let alpha = FracOrder::new(t.alpha)?;
            let points = bowl_trajectory(alpha, t.eta, t.steps, (t.x1, t.x2), t.eps)?;
            std::fs::create_dir_all(&t.out)?;
            let path = t.out.join("demo_trajectory.csv");
            let mut out = BufWriter::new(std::fs::File::create(&path)?);
            writeln!(out, "k,x1,x2,y")?;
            for p in &points {
                writeln!(out, "{},{},{},{}", p.iter, p.x1, p.x2, p.objective)?;
            }
            out.flush()?;
            println!("wrote {} ({} points)", path.display(), points.len());
        }
        DemoScene::Saddle(s) => {
            let alpha = FracOrder::new(s.alpha)?;
            if s.grid < 2 || !(s.extent > 0.0) {
                return Err(Error::Config {
                    message: "saddle demo needs a grid of at least 2 and a positive extent".into(),
                });
            }
            std::fs::create_dir_all(&s.out)?;
            let path = s.out.join("demo_saddle.csv");
            let mut out = BufWriter::new(std::fs::File::create(&path)?);
            writeln!(out, "x,y,gx_int,gy_int,gx_frac,gy_frac")?;
            let coord = |i: usize| -s.extent + 2.0 * s.extent * i as f64 / (s.grid - 1) as f64;
            for i in 0..s.grid {
                for j in 0..s.grid {
                    let (x, y) = (coord(i), coord(j));
                    let g = saddle_gradients(alpha, (x, y), s.eps)?;
                    writeln!(
                        out,
                        "{x},{y},{},{},{},{}",
                        g.integer_x, g.integer_y, g.fractional_x, g.fractional_y
                    )?;
                }
            }
            out.flush()?;
            println!("wrote {} ({} grid points)", path.display(), s.grid * s.grid);
        }
        DemoScene::Decomposition(d) => {
            let alpha = FracOrder::new(d.alpha)?;
            if d.grid < 2 {
                return Err(Error::Config {
                    message: "decomposition demo needs a grid of at least 2".into(),
                });
            }
            std::fs::create_dir_all(&d.out)?;
            let path = d.out.join("demo_decomposition.csv");
            let mut out = BufWriter::new(std::fs::File::create(&path)?);
            writeln!(out, "w,main,coupling,total")?;
            for i in 0..d.grid {
                let w = -2.0 + 4.0 * i as f64 / (d.grid - 1) as f64;
                let (main, coupling) = scaled_deriv_split(d.x, w, d.b, alpha, d.j_prime, d.eps);
                let total = scaled_deriv(d.x, w, d.b, alpha, d.j_prime, d.eps);
                writeln!(out, "{w},{main},{coupling},{total}")?;
            }
            out.flush()?;
            println!("wrote {} ({} samples)", path.display(), d.grid);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed)?;
    if args.alphas.is_empty() {
        return Err(Error::Config {
            message: "bench needs at least one order".into(),
        });
    }
    let dataset = build_dataset(&args.data, seed)?;
    let sgd = SgdConfig::default();
    let cfg_for = |alpha: FracOrder| TrainConfig {
        window: args.data.window,
        horizon: args.data.horizon,
        batch: args.batch,
        hidden: args.hidden,
        alpha,
        iters: 1,
        seed,
        eps: args.eps,
    };
    let mut rows: Vec<(String, f64, f64, usize)> = Vec::new();
    for &a in &args.alphas {
        let alpha = FracOrder::new(a)?;
        let (secs, bytes) =
            bench_epoch(&dataset, &cfg_for(alpha), &sgd, BackwardRoute::Fractional, args.repeat)?;
        println!("alpha {a}: {secs:.4} s/epoch, peak buffer {bytes} bytes");
        rows.push(("fractional".into(), a, secs, bytes));
    }
    if args.reference {
        let alpha = FracOrder::new(1.0).expect("1.0 is a valid order");
        let (secs, bytes) =
            bench_epoch(&dataset, &cfg_for(alpha), &sgd, BackwardRoute::Integer, args.repeat)?;
        println!("integer reference: {secs:.4} s/epoch, peak buffer {bytes} bytes");
        rows.push(("integer-reference".into(), 1.0, secs, bytes));
    }
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("bench.csv");
    let mut out = BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "label,alpha,secs_per_epoch,peak_buffer_bytes")?;
    for (label, a, secs, bytes) in &rows {
        writeln!(out, "{label},{a},{secs},{bytes}")?;
    }
    out.flush()?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}
