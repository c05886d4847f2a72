//! Sequential minimal optimisation for the C-SVC dual with second-order
//! working-set selection (Fan, Chen & Lin, 2005).
//!
//! Solves  min ½ αᵀQα − eᵀα  s.t. yᵀα = 0, 0 ≤ α ≤ C,  Q_ij = y_i y_j K_ij.

use super::kernel::KernelMatrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

/// Labels are ±1.
pub fn solve(kernel: &mut KernelMatrix<'_>, y: &[f64], c: f64, eps: f64) -> BinarySolution {
    let n = y.len();
    assert_eq!(kernel.len(), n);
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let max_iter = (100 * n).max(10_000_000);
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    while iter < max_iter {
        // Select i: maximal violating index in I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let q_i: Vec<f64> = kernel.row(i).to_vec();

        // Select j: best second-order gain in I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !lower(alpha[t]) {
                    let grad_diff = gmax + grad[t];
                    if grad[t] >= gmax2 {
                        gmax2 = grad[t];
                    }
                    if grad_diff > 0.0 {
                        let quad = 1.0 + 1.0 - 2.0 * y[i] * y[i] * y[t] * q_i[t];
                        let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            } else if !upper(alpha[t]) {
                let grad_diff = gmax - grad[t];
                if -grad[t] >= gmax2 {
                    gmax2 = -grad[t];
                }
                if grad_diff > 0.0 {
                    let quad = 1.0 + 1.0 + 2.0 * y[i] * y[i] * y[t] * q_i[t];
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let Some(j) = j_sel else { break };
        if gmax + gmax2 < eps {
            break;
        }
        iter += 1;

        let q_j: Vec<f64> = kernel.row(j).to_vec();
        // Q entries: Q_it = y_i y_t K_it; diagonal is 1 for the RBF kernel.
        let qij = y[i] * y[j] * q_i[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = {
                let q = 2.0 + 2.0 * qij;
                if q <= 0.0 { TAU } else { q }
            };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = {
                let q = 2.0 - 2.0 * qij;
                if q <= 0.0 { TAU } else { q }
            };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[i] * y[t] * q_i[t] * di + y[j] * y[t] * q_j[t] * dj;
        }
    }
    if iter >= max_iter {
        tracing::warn!(n, "SMO reached the iteration cap");
    }

    BinarySolution { rho: compute_rho(&alpha, &grad, y, c), alpha, iterations: iter }
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Maximal KKT violation `m(α) − M(α)` of a solution; zero or negative at optimum.
pub fn kkt_violation(kernel: &mut KernelMatrix<'_>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let mut grad = vec![-1.0f64; n];
    for s in 0..n {
        if alpha[s] != 0.0 {
            let row = kernel.row(s).to_vec();
            for t in 0..n {
                grad[t] += y[s] * y[t] * row[t] * alpha[s];
            }
        }
    }
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..n {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
        if in_up {
            m_up = m_up.max(v);
        }
        if in_low {
            m_low = m_low.min(v);
        }
    }
    m_up - m_low
}
