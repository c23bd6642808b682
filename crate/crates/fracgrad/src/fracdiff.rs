//! Fractional differentiation of a linear map y = x·W + b.
//!
//! The scalar rule for y = x·w + b at order `alpha` in (0, 1] is
//!
//! ```text
//! d^a y / dw^a = x / gamma(2 - a) * |w|^(1 - a)
//!              + sign(w) * b / gamma(1 - a) * |w|^(-a)
//! ```
//!
//! where the reciprocal gamma is taken as 0 on its poles, so at `a = 1` the
//! second addend vanishes and the rule returns the plain coefficient `x`.
//! `|w|` is clamped below by `eps` to keep the negative powers finite.
//!
//! At the matrix level the full fractional Jacobian of Y = X·W + b is an
//! n x n grid of p x m blocks, one per (output column, weight column) pair.
//! Training only ever consumes block (1,1) contracted against the upstream
//! gradient, which [`weight_grad_block11`] computes without materializing
//! the grid; [`diff_block_explicit`] and [`jacobian_full`] build the blocks
//! element by element and serve as the structural reference.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::special::{gamma, recip_gamma_or_zero, sign, FracOrder};

/// One linear application y = x·W + b together with its differentiation
/// order and clamp floor. X is p x m, W is m x n, b is 1 x n.
#[derive(Debug, Clone)]
pub struct LinearContext<'a> {
    x: &'a Matrix,
    w: &'a Matrix,
    b: &'a Matrix,
    alpha: FracOrder,
    eps: f64,
}

impl<'a> LinearContext<'a> {
    pub fn new(
        x: &'a Matrix,
        w: &'a Matrix,
        b: &'a Matrix,
        alpha: FracOrder,
        eps: f64,
    ) -> Result<Self> {
        if x.cols() != w.rows() {
            return Err(Error::ShapeMismatch {
                op: "linear context (x against w)",
                left: x.shape(),
                right: w.shape(),
            });
        }
        if b.shape() != (1, w.cols()) {
            return Err(Error::ShapeMismatch {
                op: "linear context (w against b)",
                left: w.shape(),
                right: b.shape(),
            });
        }
        if x.rows() == 0 || x.cols() == 0 || w.cols() == 0 {
            return Err(Error::Config {
                message: "linear context requires non-empty x, w, b".into(),
            });
        }
        if !(eps > 0.0) {
            return Err(Error::Config {
                message: format!("clamp floor eps must be positive, got {eps}"),
            });
        }
        Ok(LinearContext { x, w, b, alpha, eps })
    }

    pub fn x(&self) -> &Matrix {
        self.x
    }

    pub fn w(&self) -> &Matrix {
        self.w
    }

    pub fn b(&self) -> &Matrix {
        self.b
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Batch rows p, input width m, output width n.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x.rows(), self.w.rows(), self.w.cols())
    }

    fn forward(&self) -> Matrix {
        self.x
            .matmul(self.w)
            .and_then(|y| y.add(self.b))
            .expect("context shapes were validated at construction")
    }
}

/// Position of one p x m block inside the full Jacobian grid, 1-based:
/// `block_row` picks the output column, `block_col` the weight column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JacobianBlockId {
    pub block_row: usize,
    pub block_col: usize,
}

impl JacobianBlockId {
    pub fn new(block_row: usize, block_col: usize) -> Self {
        JacobianBlockId {
            block_row,
            block_col,
        }
    }
}

/// Scalar fractional derivative of y = x·w + b with respect to w, split
/// into its two addends: the power term carrying the coefficient `x` and
/// the term carrying the constant `b`. At order one this is exactly
/// `(x, 0.0)`.
pub fn frac_scalar_deriv_parts(
    x: f64,
    w: f64,
    b: f64,
    alpha: FracOrder,
    eps: f64,
) -> (f64, f64) {
    if alpha.is_one() {
        return (x, 0.0);
    }
    let a = alpha.value();
    let wa = w.abs().max(eps);
    let main = x / gamma(2.0 - a).expect("2 - alpha stays clear of the poles") * wa.powf(1.0 - a);
    let frac = sign(w) * b * recip_gamma_or_zero(1.0 - a) * wa.powf(-a);
    (main, frac)
}

/// Scalar fractional derivative of y = x·w + b with respect to w.
pub fn frac_scalar_deriv(x: f64, w: f64, b: f64, alpha: FracOrder, eps: f64) -> f64 {
    let (main, frac) = frac_scalar_deriv_parts(x, w, b, alpha, eps);
    main + frac
}

/// Weight gradient `transpose(block(1,1)) · G` at matrix level, without
/// building the block element by element. `g` must be p x n. At order one
/// the computation short-circuits to the classical `X^T · G`, so the
/// integer-order reduction is bitwise, and the fractional bookkeeping costs
/// nothing.
pub fn weight_grad_block11(ctx: &LinearContext, g: &Matrix) -> Result<Matrix> {
    let (p, m, n) = ctx.dims();
    if g.shape() != (p, n) {
        return Err(Error::ShapeMismatch {
            op: "weight_grad_block11 (x against g)",
            left: ctx.x.shape(),
            right: g.shape(),
        });
    }
    if ctx.alpha.is_one() {
        return ctx.x.transpose().matmul(g);
    }
    let a = ctx.alpha.value();
    let eps = ctx.eps;
    // First weight column as a row, the only column block (1,1) touches.
    let f = ctx.w.slice_column(0)?.transpose();
    let inv_g2 = 1.0 / gamma(2.0 - a).expect("2 - alpha stays clear of the poles");
    let rg1 = recip_gamma_or_zero(1.0 - a);

    let main_row = f.map(|w| w.abs().max(eps).powf(1.0 - a) * inv_g2);
    let w_main = ctx.x.hadamard(&main_row)?;

    let xf = ctx.x.hadamard(&f)?;
    let row_sums = ctx.x.matmul(&f.transpose())?;
    let expanded = row_sums.expand_cols(m)?;
    let bias = Matrix::fill(p, m, ctx.b.get(0, 0));
    let partial_const = expanded.sub(&xf)?.add(&bias)?;
    let partial_row = f.map(|w| sign(w) * w.abs().max(eps).powf(-a) * rg1);
    let w_partial = partial_const.hadamard(&partial_row)?;

    let differentiation = w_main.add(&w_partial)?.transpose();
    differentiation.matmul(g)
}

/// Block (i, j) of the fractional Jacobian, built element by element from
/// the scalar rule. Entry (k, l) differentiates output y_{k,i} with respect
/// to weight w_{l,j}: on the diagonal block the weight carries coefficient
/// x_{k,l} and the rest of the output rides in the constant slot; off the
/// diagonal the output does not contain the weight at all, so the
/// coefficient is zero and the whole value is the constant. The sign factor
/// always comes from the differentiated weight.
pub fn diff_block_explicit(ctx: &LinearContext, id: JacobianBlockId) -> Result<Matrix> {
    let (p, m, n) = ctx.dims();
    for (what, idx) in [("block row", id.block_row), ("block column", id.block_col)] {
        if idx == 0 || idx > n {
            return Err(Error::IndexOutOfRange {
                what,
                index: idx,
                bound: n,
            });
        }
    }
    let out_col = id.block_row - 1;
    let var_col = id.block_col - 1;
    let y = ctx.forward();
    let mut block = Matrix::zeros(p, m);
    for k in 0..p {
        for l in 0..m {
            let coeff = if out_col == var_col { ctx.x.get(k, l) } else { 0.0 };
            let var = ctx.w.get(l, var_col);
            let constant = y.get(k, out_col) - coeff * var;
            block.set(
                k,
                l,
                frac_scalar_deriv(coeff, var, constant, ctx.alpha, ctx.eps),
            );
        }
    }
    Ok(block)
}

/// The full pn x mn fractional Jacobian, blocks laid out on the n x n grid
/// with output columns down the rows and weight columns across.
pub fn jacobian_full(ctx: &LinearContext) -> Result<Matrix> {
    let (p, m, n) = ctx.dims();
    let mut full = Matrix::zeros(p * n, m * n);
    for i in 1..=n {
        for j in 1..=n {
            let block = diff_block_explicit(ctx, JacobianBlockId::new(i, j))?;
            for k in 0..p {
                for l in 0..m {
                    full.set((i - 1) * p + k, (j - 1) * m + l, block.get(k, l));
                }
            }
        }
    }
    Ok(full)
}

/// Number of distinct blocks in the Jacobian grid, where two blocks are the
/// same when their element-wise max difference is at most `tol`. At order
/// one the grid collapses to the repeated coefficient block plus the zero
/// block; at fractional orders a generic context keeps all n^2 blocks
/// distinct.
pub fn count_distinct_blocks(ctx: &LinearContext, tol: f64) -> Result<usize> {
    let (_, _, n) = ctx.dims();
    let mut representatives: Vec<Matrix> = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            let block = diff_block_explicit(ctx, JacobianBlockId::new(i, j))?;
            let known = representatives
                .iter()
                .any(|rep| rep.max_abs_diff(&block).map(|d| d <= tol).unwrap_or(false));
            if !known {
                representatives.push(block);
            }
        }
    }
    Ok(representatives.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const EPS: f64 = 1e-8;

    fn order(a: f64) -> FracOrder {
        FracOrder::new(a).unwrap()
    }

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))
    }

    /// Weight entries kept away from zero so negative powers stay tame.
    fn random_weights(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| {
            let magnitude = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
    }

    fn rel_gap(got: &Matrix, want: &Matrix) -> f64 {
        got.max_abs_diff(want).unwrap() / want.max_abs().max(1.0)
    }

    #[test]
    fn scalar_rule_returns_coefficient_at_order_one() {
        let d = frac_scalar_deriv(2.0, 1.5, 0.5, order(1.0), EPS);
        assert_eq!(d, 2.0, "order one must return the coefficient exactly");
        let (main, frac) = frac_scalar_deriv_parts(2.0, 1.5, 0.5, order(1.0), EPS);
        assert_eq!((main, frac), (2.0, 0.0));
    }

    #[test]
    fn scalar_rule_half_order_unit_inputs() {
        // x = w = 1, b = 0: only the power term survives, 1/gamma(1.5) = 2/sqrt(pi).
        let d = frac_scalar_deriv(1.0, 1.0, 0.0, order(0.5), EPS);
        let want = 2.0 / std::f64::consts::PI.sqrt();
        assert!((d - want).abs() <= 1e-12 * want, "got {d}, want {want}");
    }

    #[test]
    fn scalar_rule_half_order_constant_only() {
        // x = 0, w = 2, b = 3: only the constant term survives,
        // 3 / (gamma(0.5) * sqrt(2)) = 3 / sqrt(2 pi).
        let d = frac_scalar_deriv(0.0, 2.0, 3.0, order(0.5), EPS);
        let want = 3.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((d - want).abs() <= 1e-12 * want, "got {d}, want {want}");
    }

    #[test]
    fn scalar_rule_clamps_zero_weight() {
        let d = frac_scalar_deriv(1.0, 0.0, 1.0, order(0.5), EPS);
        assert!(d.is_finite(), "clamped derivative must be finite, got {d}");
        let tiny = frac_scalar_deriv(1.0, 1e-300, 1.0, order(0.5), EPS);
        assert!(tiny.is_finite(), "got {tiny}");
    }

    #[test]
    fn scalar_rule_fractional_term_fades_as_order_approaches_one() {
        let alpha = order(1.0 - 1e-6);
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let x = rng.gen_range(-3.0..3.0);
            let w_mag = rng.gen_range(0.1..3.0);
            let w = if rng.gen_bool(0.5) { w_mag } else { -w_mag };
            let b = rng.gen_range(-3.0..3.0);
            let (_, frac) = frac_scalar_deriv_parts(x, w, b, alpha, EPS);
            let bound = 1e-4 * (b.abs() + 1.0);
            assert!(
                frac.abs() <= bound,
                "fractional term {frac} should fade near order one (bound {bound})"
            );
        }
    }

    #[test]
    fn context_rejects_bad_shapes_and_eps() {
        let x = Matrix::zeros(2, 3);
        let w = Matrix::zeros(3, 2);
        let b = Matrix::zeros(1, 2);
        assert!(LinearContext::new(&x, &w, &b, order(0.5), EPS).is_ok());
        let w_bad = Matrix::zeros(4, 2);
        assert!(LinearContext::new(&x, &w_bad, &b, order(0.5), EPS).is_err());
        let b_bad = Matrix::zeros(1, 3);
        assert!(LinearContext::new(&x, &w, &b_bad, order(0.5), EPS).is_err());
        assert!(LinearContext::new(&x, &w, &b, order(0.5), 0.0).is_err());
    }

    #[test]
    fn weight_grad_single_entry_matches_scalar_rule() {
        let x = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let w = Matrix::from_vec(1, 1, vec![1.5]).unwrap();
        let b = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let g = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let ctx = LinearContext::new(&x, &w, &b, order(0.5), EPS).unwrap();
        let grad = weight_grad_block11(&ctx, &g).unwrap();
        let want = frac_scalar_deriv(2.0, 1.5, 0.5, order(0.5), EPS);
        assert!(
            (grad.get(0, 0) - want).abs() <= 1e-12 * want.abs(),
            "got {}, want {want}",
            grad.get(0, 0)
        );
        // Frozen magnitude for the same inputs.
        assert!((grad.get(0, 0) - 2.9943).abs() < 1e-4);
    }

    #[test]
    fn weight_grad_at_order_one_is_bitwise_classical() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let (p, m, n) = (
                rng.gen_range(1..=6),
                rng.gen_range(1..=6),
                rng.gen_range(1..=6),
            );
            let x = random_matrix(&mut rng, p, m);
            let w = random_weights(&mut rng, m, n);
            let b = random_matrix(&mut rng, 1, n);
            let g = random_matrix(&mut rng, p, n);
            let ctx = LinearContext::new(&x, &w, &b, order(1.0), EPS).unwrap();
            let got = weight_grad_block11(&ctx, &g).unwrap();
            let want = x.transpose().matmul(&g).unwrap();
            for (a, b) in got.data().iter().zip(want.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "order-one path must be bitwise");
            }
        }
    }

    #[test]
    fn weight_grad_matches_explicit_block_oracle() {
        let mut rng = StdRng::seed_from_u64(29);
        let grid = [0.3, 0.5, 0.7, 0.9, 1.0];
        for trial in 0..200 {
            let (p, m, n) = (
                rng.gen_range(1..=6),
                rng.gen_range(1..=6),
                rng.gen_range(1..=6),
            );
            let alpha = order(grid[trial % grid.len()]);
            let x = random_matrix(&mut rng, p, m);
            let w = random_weights(&mut rng, m, n);
            let b = random_matrix(&mut rng, 1, n);
            let g = random_matrix(&mut rng, p, n);
            let ctx = LinearContext::new(&x, &w, &b, alpha, EPS).unwrap();
            let fast = weight_grad_block11(&ctx, &g).unwrap();
            let block = diff_block_explicit(&ctx, JacobianBlockId::new(1, 1)).unwrap();
            let oracle = block.transpose().matmul(&g).unwrap();
            let gap = rel_gap(&fast, &oracle);
            assert!(
                gap <= 1e-10,
                "trial {trial} (alpha {alpha}): gap {gap} exceeds 1e-10"
            );
        }
    }

    #[test]
    fn explicit_blocks_at_order_one_recover_integer_structure() {
        let mut rng = StdRng::seed_from_u64(31);
        let x = random_matrix(&mut rng, 3, 4);
        let w = random_weights(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 1, 3);
        let ctx = LinearContext::new(&x, &w, &b, order(1.0), EPS).unwrap();
        for i in 1..=3 {
            for j in 1..=3 {
                let block = diff_block_explicit(&ctx, JacobianBlockId::new(i, j)).unwrap();
                if i == j {
                    assert_eq!(block, x, "diagonal block ({i},{j}) must equal x");
                } else {
                    assert_eq!(
                        block.max_abs(),
                        0.0,
                        "off-diagonal block ({i},{j}) must vanish"
                    );
                }
            }
        }
    }

    #[test]
    fn block_id_out_of_range_is_rejected() {
        let x = Matrix::fill(2, 2, 1.0);
        let w = Matrix::fill(2, 2, 1.0);
        let b = Matrix::zeros(1, 2);
        let ctx = LinearContext::new(&x, &w, &b, order(0.5), EPS).unwrap();
        assert!(diff_block_explicit(&ctx, JacobianBlockId::new(0, 1)).is_err());
        assert!(diff_block_explicit(&ctx, JacobianBlockId::new(1, 3)).is_err());
    }

    #[test]
    fn jacobian_full_places_blocks_on_the_grid() {
        let mut rng = StdRng::seed_from_u64(37);
        let (p, m, n) = (2, 3, 2);
        let x = random_matrix(&mut rng, p, m);
        let w = random_weights(&mut rng, m, n);
        let b = random_matrix(&mut rng, 1, n);
        let ctx = LinearContext::new(&x, &w, &b, order(0.5), EPS).unwrap();
        let full = jacobian_full(&ctx).unwrap();
        assert_eq!(full.shape(), (p * n, m * n));
        for i in 1..=n {
            for j in 1..=n {
                let block = diff_block_explicit(&ctx, JacobianBlockId::new(i, j)).unwrap();
                for k in 0..p {
                    for l in 0..m {
                        assert_eq!(
                            full.get((i - 1) * p + k, (j - 1) * m + l),
                            block.get(k, l),
                            "block ({i},{j}) entry ({k},{l})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn census_counts_square_of_width_at_fractional_order() {
        let mut rng = StdRng::seed_from_u64(41);
        for n in 1..=3 {
            let x = random_matrix(&mut rng, 3, 4);
            let w = random_weights(&mut rng, 4, n);
            let b = random_matrix(&mut rng, 1, n);
            let ctx = LinearContext::new(&x, &w, &b, order(0.5), EPS).unwrap();
            let count = count_distinct_blocks(&ctx, 1e-9).unwrap();
            assert_eq!(count, n * n, "generic width-{n} grid");
        }
    }

    #[test]
    fn census_collapses_at_order_one() {
        let mut rng = StdRng::seed_from_u64(43);
        let x = random_matrix(&mut rng, 3, 4);
        for (n, want) in [(1, 1), (2, 2), (3, 2)] {
            let w = random_weights(&mut rng, 4, n);
            let b = random_matrix(&mut rng, 1, n);
            let ctx = LinearContext::new(&x, &w, &b, order(1.0), EPS).unwrap();
            let count = count_distinct_blocks(&ctx, 1e-9).unwrap();
            assert_eq!(count, want, "width-{n} grid at order one");
        }
    }
}
