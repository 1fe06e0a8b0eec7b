//! Graph-guided fused lasso multi-trait regression.
//!
//! Minimizes
//! `sum_k ||y_k - X b_k||^2 + lambda sum |b_jk|
//!  + gamma sum_{(m,l) in E} r_ml^2 sum_j |b_jm - sign(r_ml) b_jl|`
//! by exact coordinate descent: each scalar update minimizes a piecewise
//! quadratic in closed form (breakpoint scan), so the recorded objective
//! never increases.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::score::BlockScore;

/// Phenotype correlation graph: edges for trait pairs whose absolute
/// sample correlation reaches the cutoff.
#[derive(Debug, Clone)]
pub struct CorrelationGraph {
    /// (m, l, r_ml) with m < l.
    pub edges: Vec<(usize, usize, f64)>,
    pub cutoff: f64,
}

#[derive(Debug, Clone)]
pub struct GflassoModel {
    /// q x p coefficient matrix.
    pub b: DMatrix<f64>,
    pub lambda: f64,
    pub gamma: f64,
    /// Objective after each full coordinate sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Build the trait correlation graph from a preprocessed phenotype matrix.
pub fn correlation_graph(y: &DMatrix<f64>, cutoff: f64) -> CorrelationGraph {
    let p = y.ncols();
    let n = y.nrows() as f64;
    let mut centered = y.clone();
    let mut norms = vec![0.0; p];
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        norms[j] = col.norm();
    }
    let mut edges = Vec::new();
    for m in 0..p {
        for l in (m + 1)..p {
            let denom = norms[m] * norms[l];
            if denom == 0.0 {
                continue;
            }
            let r = centered.column(m).dot(&centered.column(l)) / denom;
            if r.abs() >= cutoff {
                edges.push((m, l, r));
            }
        }
    }
    CorrelationGraph { edges, cutoff }
}

/// Exact minimizer of (a/2) b^2 - g b + sum_i w_i |b - c_i| with a > 0.
/// `terms` holds (c_i, w_i) pairs; the lasso penalty enters as (0, lambda).
fn piecewise_min(a: f64, g: f64, terms: &[(f64, f64)]) -> f64 {
    debug_assert!(a > 0.0);
    let mut pts: Vec<(f64, f64)> = terms.iter().filter(|&&(_, w)| w > 0.0).cloned().collect();
    if pts.is_empty() {
        return g / a;
    }
    pts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    // scan intervals between breakpoints; derivative is a*b - g + sum w_i sign(b - c_i)
    let total_w: f64 = pts.iter().map(|&(_, w)| w).sum();
    // below all breakpoints every sign is -1
    let mut sign_sum = -total_w;
    let mut lower = f64::NEG_INFINITY;
    for i in 0..=pts.len() {
        let upper = if i < pts.len() { pts[i].0 } else { f64::INFINITY };
        let cand = (g - sign_sum) / a;
        if cand > lower && cand < upper {
            return cand;
        }
        if i < pts.len() {
            // subgradient at the breakpoint: derivative jumps by 2*w_i
            let at = pts[i].0;
            let d_left = a * at - g + sign_sum;
            let d_right = d_left + 2.0 * pts[i].1;
            if d_left <= 0.0 && d_right >= 0.0 {
                return at;
            }
            sign_sum += 2.0 * pts[i].1;
            lower = at;
        }
    }
    // numerically unreachable; fall back to the unpenalized minimizer
    g / a
}

/// Full objective of the model on (x, y).
pub fn gflasso_objective(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    graph: &CorrelationGraph,
    lambda: f64,
    gamma: f64,
    b: &DMatrix<f64>,
) -> f64 {
    let resid = y - x * b;
    let mut obj = resid.iter().map(|v| v * v).sum::<f64>();
    obj += lambda * b.iter().map(|v| v.abs()).sum::<f64>();
    for &(m, l, r) in &graph.edges {
        let w = gamma * r * r;
        if w == 0.0 {
            continue;
        }
        for j in 0..b.nrows() {
            obj += w * (b[(j, m)] - r.signum() * b[(j, l)]).abs();
        }
    }
    obj
}

const MAX_SWEEPS: usize = 2000;
const REL_TOL: f64 = 1e-8;

/// Coordinate descent fit of the fused-lasso objective.
pub fn gflasso_fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    graph: &CorrelationGraph,
    lambda: f64,
    gamma: f64,
) -> Result<GflassoModel> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::Dimension("X and Y row counts differ".into()));
    }
    if lambda < 0.0 || gamma < 0.0 {
        return Err(Error::Validation("lambda and gamma must be >= 0".into()));
    }
    let (q, p) = (x.ncols(), y.ncols());
    let col_sq: Vec<f64> = (0..q).map(|j| x.column(j).norm_squared()).collect();
    // adjacency: for trait k, list of (other trait, signed weight target info)
    let mut neighbors: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); p]; // (other, w, sign)
    for &(m, l, r) in &graph.edges {
        let w = gamma * r * r;
        if w == 0.0 {
            continue;
        }
        let s = r.signum();
        // |b_jm - s b_jl|: from m's view target is s*b_jl; from l's view
        // |b_jl - s b_jm| since |u - s v| = |v - s u| for s in {-1, 1}
        neighbors[m].push((l, w, s));
        neighbors[l].push((m, w, s));
    }

    let mut b = DMatrix::zeros(q, p);
    let mut resid = y.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev_obj = f64::INFINITY;
    for _sweep in 0..MAX_SWEEPS {
        let mut max_step = 0.0f64;
        for j in 0..q {
            if col_sq[j] == 0.0 {
                continue;
            }
            for k in 0..p {
                let old = b[(j, k)];
                // gradient pieces of the smooth part at b_jk = 0 baseline
                let xr = x.column(j).dot(&resid.column(k)) + col_sq[j] * old;
                let a = 2.0 * col_sq[j];
                let g = 2.0 * xr;
                let mut terms: Vec<(f64, f64)> = Vec::with_capacity(1 + neighbors[k].len());
                if lambda > 0.0 {
                    terms.push((0.0, lambda));
                }
                for &(other, w, s) in &neighbors[k] {
                    terms.push((s * b[(j, other)], w));
                }
                let new = piecewise_min(a, g, &terms);
                if new != old {
                    let delta = new - old;
                    max_step = max_step.max(delta.abs());
                    let xcol = x.column(j);
                    let mut rc = resid.column_mut(k);
                    rc.axpy(-delta, &xcol, 1.0);
                    b[(j, k)] = new;
                }
            }
        }
        // Fusion moves: the fused penalty is not separable, so tied pairs
        // can pin each other under plain coordinate descent. Move each
        // edge's pair jointly along (t, s*t), which keeps their difference
        // fixed and is again an exact piecewise-quadratic minimization.
        for &(m, l, r) in &graph.edges {
            let s = r.signum();
            if gamma * r * r == 0.0 {
                continue;
            }
            for j in 0..q {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let a = 4.0 * col_sq[j];
                let g = 2.0
                    * (x.column(j).dot(&resid.column(m)) + s * x.column(j).dot(&resid.column(l)));
                let mut terms: Vec<(f64, f64)> = Vec::new();
                if lambda > 0.0 {
                    terms.push((-b[(j, m)], lambda));
                    terms.push((-s * b[(j, l)], lambda));
                }
                for &(other, w, so) in &neighbors[m] {
                    if other == l {
                        continue; // the (m,l) term is invariant under this move
                    }
                    terms.push((so * b[(j, other)] - b[(j, m)], w));
                }
                for &(other, w, so) in &neighbors[l] {
                    if other == m {
                        continue;
                    }
                    terms.push((s * (so * b[(j, other)] - b[(j, l)]), w));
                }
                let t = piecewise_min(a, g, &terms);
                max_step = max_step.max(t.abs());
                if t != 0.0 {
                    let xcol = x.column(j);
                    resid.column_mut(m).axpy(-t, &xcol, 1.0);
                    resid.column_mut(l).axpy(-s * t, &xcol, 1.0);
                    b[(j, m)] += t;
                    b[(j, l)] += s * t;
                }
            }
        }
        let obj = gflasso_objective(x, y, graph, lambda, gamma, &b);
        trace.push(obj);
        // require both a stationary objective and stationary coefficients;
        // the objective alone flattens before coefficients settle
        let b_scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (prev_obj - obj).abs() <= REL_TOL * (1.0 + obj.abs()) && max_step <= 1e-9 * b_scale {
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    if !converged {
        eprintln!("warning: gflasso did not converge in {MAX_SWEEPS} sweeps");
    }
    Ok(GflassoModel {
        b,
        lambda,
        gamma,
        objective_trace: trace,
        converged,
    })
}

/// Largest distance of zero from the coordinate-wise subgradient interval,
/// over coordinates away from the penalty kinks.
pub fn kkt_violation(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    graph: &CorrelationGraph,
    lambda: f64,
    gamma: f64,
    b: &DMatrix<f64>,
    kink_tol: f64,
) -> f64 {
    let resid = y - x * b;
    let (q, p) = (b.nrows(), b.ncols());
    let mut neighbors: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); p];
    for &(m, l, r) in &graph.edges {
        let w = gamma * r * r;
        if w == 0.0 {
            continue;
        }
        neighbors[m].push((l, w, r.signum()));
        neighbors[l].push((m, w, r.signum()));
    }
    let mut worst = 0.0f64;
    for j in 0..q {
        for k in 0..p {
            let v = b[(j, k)];
            if v.abs() <= kink_tol {
                continue;
            }
            let mut grad = -2.0 * x.column(j).dot(&resid.column(k)) + lambda * v.signum();
            let mut at_kink = false;
            for &(other, w, s) in &neighbors[k] {
                let diff = v - s * b[(j, other)];
                if diff.abs() <= kink_tol {
                    at_kink = true;
                    break;
                }
                grad += w * diff.signum();
            }
            if !at_kink {
                worst = worst.max(grad.abs());
            }
        }
    }
    worst
}

/// Block score: the largest absolute regression coefficient in the model.
pub fn score_block_gflasso(model: &GflassoModel) -> BlockScore {
    let q = model.b.nrows();
    let mut weights = vec![0.0; q];
    let mut best = 0.0f64;
    for j in 0..q {
        let wj = model.b.row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        weights[j] = wj;
        best = best.max(wj);
    }
    BlockScore::scored(best, None, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut impl Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn identical_columns_edge_r_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut y = randn(&mut rng, 40, 3);
        let dup = y.column(0).clone_owned();
        y.set_column(2, &dup);
        let g = correlation_graph(&y, 0.7);
        assert!(g
            .edges
            .iter()
            .any(|&(m, l, r)| m == 0 && l == 2 && (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn independent_columns_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let y = randn(&mut rng, 10_000, 6);
        let g = correlation_graph(&y, 0.7);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn cutoff_zero_complete_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let y = randn(&mut rng, 20, 5);
        let g = correlation_graph(&y, 0.0);
        assert_eq!(g.edges.len(), 5 * 4 / 2);
    }

    #[test]
    fn huge_lambda_zeroes_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = randn(&mut rng, 50, 3);
        let y = randn(&mut rng, 50, 2);
        let graph = correlation_graph(&y, 0.7);
        let lam_max = (0..3)
            .flat_map(|j| (0..2).map(move |k| (j, k)))
            .map(|(j, k)| 2.0 * x.column(j).dot(&y.column(k)).abs())
            .fold(0.0f64, f64::max);
        let model = gflasso_fit(&x, &y, &graph, lam_max * 1.01, 0.0).unwrap();
        assert!(model.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_penalties_match_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = randn(&mut rng, 60, 4);
        let y = randn(&mut rng, 60, 3);
        let graph = CorrelationGraph {
            edges: vec![],
            cutoff: 0.7,
        };
        let model = gflasso_fit(&x, &y, &graph, 0.0, 0.0).unwrap();
        // normal-equations oracle, per trait
        let xtx = x.transpose() * &x;
        let chol = xtx.cholesky().unwrap();
        for k in 0..3 {
            let beta = chol.solve(&(x.transpose() * y.column(k)));
            for j in 0..4 {
                assert!(
                    (model.b[(j, k)] - beta[j]).abs() < 1e-6,
                    "coef ({j},{k}): {} vs {}",
                    model.b[(j, k)],
                    beta[j]
                );
            }
        }
    }

    #[test]
    fn strong_fusion_ties_correlated_traits() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let n = 50;
        let x = randn(&mut rng, n, 2);
        let noise = randn(&mut rng, n, 2) * 0.1;
        let mut y = DMatrix::zeros(n, 2);
        for i in 0..n {
            y[(i, 0)] = 0.8 * x[(i, 0)] + noise[(i, 0)];
            y[(i, 1)] = 0.3 * x[(i, 0)] + noise[(i, 1)];
        }
        let graph = CorrelationGraph {
            edges: vec![(0, 1, 1.0)],
            cutoff: 0.7,
        };
        let model = gflasso_fit(&x, &y, &graph, 0.0, 1e6).unwrap();
        for j in 0..2 {
            assert!(
                (model.b[(j, 0)] - model.b[(j, 1)]).abs() < 1e-3,
                "fused pair differs at row {j}: {} vs {}",
                model.b[(j, 0)],
                model.b[(j, 1)]
            );
        }
        // equality-constrained least-squares oracle: common beta regresses
        // stacked responses on stacked design
        let mut xs = DMatrix::zeros(2 * n, 2);
        let mut ys = nalgebra::DVector::zeros(2 * n);
        for i in 0..n {
            for j in 0..2 {
                xs[(i, j)] = x[(i, j)];
                xs[(n + i, j)] = x[(i, j)];
            }
            ys[i] = y[(i, 0)];
            ys[n + i] = y[(i, 1)];
        }
        let beta = (xs.transpose() * &xs)
            .cholesky()
            .unwrap()
            .solve(&(xs.transpose() * ys));
        for j in 0..2 {
            assert!((model.b[(j, 0)] - beta[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn objective_trace_non_increasing() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let x = randn(&mut rng, 40, 5);
            let y = randn(&mut rng, 40, 4);
            let graph = correlation_graph(&y, 0.1);
            let model = gflasso_fit(&x, &y, &graph, 0.5, 0.5).unwrap();
            for w in model.objective_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()),
                    "objective increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn gamma_zero_matches_per_trait_lasso() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let x = randn(&mut rng, 50, 4);
        let y = randn(&mut rng, 50, 3);
        let graph = correlation_graph(&y, 0.0); // edges present but gamma = 0
        let joint = gflasso_fit(&x, &y, &graph, 2.0, 0.0).unwrap();
        for k in 0..3 {
            let yk = DMatrix::from_column_slice(50, 1, y.column(k).as_slice());
            let empty = CorrelationGraph {
                edges: vec![],
                cutoff: 0.7,
            };
            let single = gflasso_fit(&x, &yk, &empty, 2.0, 0.0).unwrap();
            for j in 0..4 {
                assert!((joint.b[(j, k)] - single.b[(j, 0)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn kkt_holds_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = randn(&mut rng, 60, 5);
        let y = randn(&mut rng, 60, 4);
        let graph = correlation_graph(&y, 0.2);
        let model = gflasso_fit(&x, &y, &graph, 1.0, 0.8).unwrap();
        let v = kkt_violation(&x, &y, &graph, 1.0, 0.8, &model.b, 1e-6);
        assert!(v < 1e-4, "KKT violation {v}");
    }

    #[test]
    fn block_score_is_max_abs_coefficient() {
        let model = GflassoModel {
            b: DMatrix::from_row_slice(2, 2, &[0.0, -0.4, 0.1, 0.2]),
            lambda: 0.0,
            gamma: 0.0,
            objective_trace: vec![],
            converged: true,
        };
        let s = score_block_gflasso(&model);
        assert!((s.score - 0.4).abs() < 1e-12);
        let zero = GflassoModel {
            b: DMatrix::zeros(3, 2),
            ..model
        };
        assert_eq!(score_block_gflasso(&zero).score, 0.0);
    }
}
