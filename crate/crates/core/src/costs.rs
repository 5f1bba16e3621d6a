//! Differentiable convex cost functions with analytic gradient oracles,
//! curvature-constant metadata, the six built-in example costs, and a
//! centralized Newton oracle for the ensemble optimum.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One additive term of a cost function. Every term carries its own analytic
/// gradient; a cost is a sum of terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostTerm {
    /// `sum_i weights[i] * (y[i] - center[i])^2`
    Quadratic { weights: Vec<f64>, center: Vec<f64> },
    /// `(coeffs . y - offset)^2`
    SquaredAffine { coeffs: Vec<f64>, offset: f64 },
    /// `ln(sum_i exp(scale * y[i]))`
    LogSumExp { scale: f64 },
    /// `coeffs . y + constant`
    Affine { coeffs: Vec<f64>, constant: f64 },
    /// `ln(y[index] + shift)`, defined for `y[index] > -shift`
    Log { index: usize, shift: f64 },
    /// `num * y[index]^2 / sqrt(den_scale * y[index]^2 + den_const)`
    Ratio {
        index: usize,
        num: f64,
        den_scale: f64,
        den_const: f64,
    },
}

impl CostTerm {
    fn eval(&self, y: &DVector<f64>) -> f64 {
        match self {
            CostTerm::Quadratic { weights, center } => weights
                .iter()
                .zip(center)
                .zip(y.iter())
                .map(|((w, c), v)| w * (v - c) * (v - c))
                .sum(),
            CostTerm::SquaredAffine { coeffs, offset } => {
                let r = dot(coeffs, y) - offset;
                r * r
            }
            CostTerm::LogSumExp { scale } => {
                let m = y.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(scale * v));
                m + y.iter().map(|&v| (scale * v - m).exp()).sum::<f64>().ln()
            }
            CostTerm::Affine { coeffs, constant } => dot(coeffs, y) + constant,
            CostTerm::Log { index, shift } => (y[*index] + shift).ln(),
            CostTerm::Ratio {
                index,
                num,
                den_scale,
                den_const,
            } => {
                let v = y[*index];
                num * v * v / (den_scale * v * v + den_const).sqrt()
            }
        }
    }

    fn add_grad(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            CostTerm::Quadratic { weights, center } => {
                for i in 0..weights.len() {
                    out[i] += 2.0 * weights[i] * (y[i] - center[i]);
                }
            }
            CostTerm::SquaredAffine { coeffs, offset } => {
                let r = 2.0 * (dot(coeffs, y) - offset);
                for (i, c) in coeffs.iter().enumerate() {
                    out[i] += r * c;
                }
            }
            CostTerm::LogSumExp { scale } => {
                let m = y.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(scale * v));
                let denom: f64 = y.iter().map(|&v| (scale * v - m).exp()).sum();
                for i in 0..y.len() {
                    out[i] += scale * (scale * y[i] - m).exp() / denom;
                }
            }
            CostTerm::Affine { coeffs, .. } => {
                for (i, c) in coeffs.iter().enumerate() {
                    out[i] += c;
                }
            }
            CostTerm::Log { index, shift } => {
                out[*index] += 1.0 / (y[*index] + shift);
            }
            CostTerm::Ratio {
                index,
                num,
                den_scale,
                den_const,
            } => {
                let v = y[*index];
                let d = den_scale * v * v + den_const;
                out[*index] += num * v * (den_scale * v * v + 2.0 * den_const) / (d * d.sqrt());
            }
        }
    }

    /// Open lower bound on a coordinate implied by this term, if any.
    fn guard(&self) -> Option<(usize, f64)> {
        match self {
            CostTerm::Log { index, shift } => Some((*index, -shift)),
            _ => None,
        }
    }
}

fn dot(coeffs: &[f64], y: &DVector<f64>) -> f64 {
    coeffs.iter().zip(y.iter()).map(|(c, v)| c * v).sum()
}

/// Differentiable convex cost with an analytic gradient. Curvature constants
/// are metadata: `lipschitz_w` bounds the gradient's Lipschitz constant and
/// `strong_convexity_m` its strong-convexity modulus, when known.
#[derive(Debug, Clone)]
pub struct CostFunction {
    dim: usize,
    terms: Vec<CostTerm>,
    pub lipschitz_w: Option<f64>,
    pub strong_convexity_m: Option<f64>,
    /// Open lower bounds `y[i] > b` on individual coordinates.
    guards: Vec<(usize, f64)>,
}

impl CostFunction {
    pub fn new(
        dim: usize,
        terms: Vec<CostTerm>,
        lipschitz_w: Option<f64>,
        strong_convexity_m: Option<f64>,
    ) -> Self {
        let guards = terms.iter().filter_map(|t| t.guard()).collect();
        CostFunction {
            dim,
            terms,
            lipschitz_w,
            strong_convexity_m,
            guards,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[CostTerm] {
        &self.terms
    }

    /// Open lower bounds `y[i] > b` implied by the terms.
    pub fn guards(&self) -> &[(usize, f64)] {
        &self.guards
    }

    /// True iff `y` lies strictly inside the admissible (open) domain.
    pub fn in_domain(&self, y: &DVector<f64>) -> bool {
        self.guards.iter().all(|&(i, b)| y[i] > b)
    }

    fn check_domain(&self, y: &DVector<f64>) -> Result<()> {
        for &(i, b) in &self.guards {
            if y[i] <= b {
                return Err(Error::DomainViolation {
                    index: 0,
                    detail: format!("coordinate {i} = {} must exceed {b}", y[i]),
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_domain(y)?;
        Ok(self.terms.iter().map(|t| t.eval(y)).sum())
    }

    pub fn grad(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(y)?;
        let mut g = DVector::zeros(self.dim);
        for t in &self.terms {
            t.add_grad(y, &mut g);
        }
        Ok(g)
    }
}

/// Ordered collection of costs sharing one output dimension.
#[derive(Debug, Clone)]
pub struct CostEnsemble {
    costs: Vec<CostFunction>,
}

impl CostEnsemble {
    pub fn new(costs: Vec<CostFunction>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidScenario("cost ensemble is empty".into()));
        }
        let q = costs[0].dim;
        if costs.iter().any(|c| c.dim != q) {
            return Err(Error::DimensionMismatch(
                "all costs must share one output dimension".into(),
            ));
        }
        Ok(CostEnsemble { costs })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.costs[0].dim
    }

    pub fn costs(&self) -> &[CostFunction] {
        &self.costs
    }

    pub fn cost(&self, i: usize) -> &CostFunction {
        &self.costs[i]
    }

    /// Max of the known per-cost Lipschitz constants.
    pub fn w_bar(&self) -> Option<f64> {
        self.costs
            .iter()
            .filter_map(|c| c.lipschitz_w)
            .fold(None, |acc: Option<f64>, w| {
                Some(acc.map_or(w, |a| a.max(w)))
            })
    }

    /// Min of the known per-cost strong-convexity constants.
    pub fn m_under(&self) -> Option<f64> {
        self.costs
            .iter()
            .filter_map(|c| c.strong_convexity_m)
            .fold(None, |acc: Option<f64>, m| {
                Some(acc.map_or(m, |a| a.min(m)))
            })
    }
}

/// The six built-in example costs over `y = (y_a, y_b)`.
///
/// Curvature constants are attached only where they hold globally; the
/// log-sum-exp cost has no positive strong-convexity constant and two of the
/// costs have curvature that varies over the domain, so those are left
/// unknown and can be estimated over a region with [`estimate_constants`].
pub fn example1_costs() -> CostEnsemble {
    let f1 = CostFunction::new(
        2,
        vec![CostTerm::Quadratic {
            weights: vec![1.0, 2.0],
            center: vec![5.0, 3.0],
        }],
        Some(4.0),
        Some(2.0),
    );
    let f2 = CostFunction::new(
        2,
        vec![
            CostTerm::SquaredAffine {
                coeffs: vec![2.0, 5.0],
                offset: 9.0,
            },
            CostTerm::Ratio {
                index: 0,
                num: 0.2,
                den_scale: 2.0,
                den_const: 2.0,
            },
        ],
        None,
        None,
    );
    let f3 = CostFunction::new(
        2,
        vec![CostTerm::LogSumExp { scale: 0.1 }],
        Some(0.05),
        None,
    );
    let f4 = CostFunction::new(
        2,
        vec![
            CostTerm::SquaredAffine {
                coeffs: vec![2.0, 0.0],
                offset: -1.0,
            },
            CostTerm::Quadratic {
                weights: vec![0.0, 2.0],
                center: vec![0.0, 1.0],
            },
        ],
        Some(8.0),
        Some(4.0),
    );
    let f5 = CostFunction::new(
        2,
        vec![
            CostTerm::SquaredAffine {
                coeffs: vec![1.0, 1.0],
                offset: 0.0,
            },
            CostTerm::Log {
                index: 1,
                shift: 3.0,
            },
        ],
        None,
        None,
    );
    let f6 = CostFunction::new(
        2,
        vec![
            CostTerm::Quadratic {
                weights: vec![1.0, 1.0],
                center: vec![0.0, 0.0],
            },
            CostTerm::Affine {
                coeffs: vec![1.0, 1.0],
                constant: 0.0,
            },
        ],
        Some(2.0),
        Some(2.0),
    );
    CostEnsemble::new(vec![f1, f2, f3, f4, f5, f6]).unwrap()
}

/// Sum of all gradients at a common point. Fails naming the first cost whose
/// domain excludes `y`.
pub fn sum_gradient(ens: &CostEnsemble, y: &DVector<f64>) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(ens.dim());
    for (i, c) in ens.costs.iter().enumerate() {
        let gi = c.grad(y).map_err(|_| Error::DomainViolation {
            index: i,
            detail: format!("point {:?} outside domain of cost {i}", y.as_slice()),
        })?;
        g += gi;
    }
    Ok(g)
}

fn sum_eval(ens: &CostEnsemble, y: &DVector<f64>) -> Result<f64> {
    let mut s = 0.0;
    for c in &ens.costs {
        s += c.eval(y)?;
    }
    Ok(s)
}

fn in_domain_all(ens: &CostEnsemble, y: &DVector<f64>) -> bool {
    ens.costs.iter().all(|c| c.in_domain(y))
}

const NEWTON_MAX_ITERS: usize = 200;

/// Centralized optimum of the summed cost via damped Newton iteration with a
/// finite-difference Hessian and Armijo backtracking. Backtracking shrinks
/// the step whenever it would leave a cost's open domain.
pub fn solve_optimum(ens: &CostEnsemble, y0: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let q = ens.dim();
    let mut y = y0.clone();
    if !in_domain_all(ens, &y) {
        return Err(Error::DomainViolation {
            index: 0,
            detail: "starting point outside the admissible domain".into(),
        });
    }
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITERS {
        let g = sum_gradient(ens, &y)?;
        residual = g.norm();
        if residual <= tol {
            return Ok(y);
        }
        // central-difference Hessian of the summed gradient
        let mut hess = nalgebra::DMatrix::zeros(q, q);
        let mut singular = false;
        for j in 0..q {
            let h = 1e-5 * y[j].abs().max(1.0);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            match (sum_gradient(ens, &yp), sum_gradient(ens, &ym)) {
                (Ok(gp), Ok(gm)) => hess.set_column(j, &((gp - gm) / (2.0 * h))),
                _ => {
                    singular = true;
                    break;
                }
            }
        }
        let dir = if singular {
            -&g
        } else {
            let sym = (hess.clone() + hess.transpose()) * 0.5;
            match sym.clone().lu().solve(&g) {
                Some(d) if d.dot(&g) > 0.0 => -d,
                _ => -&g,
            }
        };
        let f0 = sum_eval(ens, &y)?;
        let slope = dir.dot(&g);
        let mut t = 1.0;
        loop {
            let cand = &y + t * &dir;
            if in_domain_all(ens, &cand) {
                if let Ok(f) = sum_eval(ens, &cand) {
                    if f <= f0 + 1e-4 * t * slope {
                        y = cand;
                        break;
                    }
                }
            }
            t *= 0.5;
            if t < 1e-14 {
                return Err(Error::StepUnderflow);
            }
        }
    }
    Err(Error::NoConvergence {
        residual,
        iters: NEWTON_MAX_ITERS,
    })
}

/// Empirical curvature bounds over a sampling box: the max secant ratio
/// `|grad(x) - grad(y)| / |x - y|` estimates the Lipschitz constant, the min
/// of `(x-y).(grad(x)-grad(y)) / |x-y|^2` the strong-convexity modulus.
/// Sampled estimates, not certified constants.
pub fn estimate_constants(
    cost: &CostFunction,
    lo: &[f64],
    hi: &[f64],
    samples: usize,
) -> Result<(f64, f64)> {
    let q = cost.dim;
    if lo.len() != q || hi.len() != q {
        return Err(Error::DimensionMismatch(
            "sampling box dimension mismatch".into(),
        ));
    }
    if samples == 0 || lo.iter().zip(hi).any(|(a, b)| a >= b) {
        return Err(Error::DegenerateBox);
    }
    for &(i, b) in &cost.guards {
        if lo[i] <= b {
            return Err(Error::DomainViolation {
                index: 0,
                detail: format!(
                    "sampling box lower bound {} on coordinate {i} violates open bound > {b}",
                    lo[i]
                ),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de ^ samples as u64);
    let draw = |rng: &mut ChaCha8Rng| {
        DVector::from_iterator(q, (0..q).map(|i| rng.gen_range(lo[i]..hi[i])))
    };
    let mut w_est = 0.0f64;
    let mut m_est = f64::INFINITY;
    for _ in 0..samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let d = &x - &y;
        let dist2 = d.norm_squared();
        if dist2 < 1e-16 {
            continue;
        }
        let dg = cost.grad(&x)? - cost.grad(&y)?;
        w_est = w_est.max(dg.norm() / dist2.sqrt());
        m_est = m_est.min(d.dot(&dg) / dist2);
    }
    Ok((w_est, m_est))
}

/// Central finite-difference gradient of a cost, used as an independent check
/// of the analytic gradient.
pub fn finite_difference_grad(
    cost: &CostFunction,
    y: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let q = cost.dim;
    let mut g = DVector::zeros(q);
    for i in 0..q {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[i] += h;
        ym[i] -= h;
        g[i] = (cost.eval(&yp)? - cost.eval(&ym)?) / (2.0 * h);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn f1_minimizer() {
        let ens = example1_costs();
        let y = v2(5.0, 3.0);
        assert_abs_diff_eq!(ens.cost(0).eval(&y).unwrap(), 0.0, epsilon = 1e-12);
        assert!(ens.cost(0).grad(&y).unwrap().amax() < 1e-12);
    }

    #[test]
    fn f6_at_origin() {
        let ens = example1_costs();
        let y = v2(0.0, 0.0);
        assert_abs_diff_eq!(ens.cost(5).eval(&y).unwrap(), 0.0, epsilon = 1e-12);
        let g = ens.cost(5).grad(&y).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn f3_at_symmetric_point() {
        let ens = example1_costs();
        let y = v2(0.0, 0.0);
        assert_abs_diff_eq!(ens.cost(2).eval(&y).unwrap(), 2.0f64.ln(), epsilon = 1e-12);
        let g = ens.cost(2).grad(&y).unwrap();
        assert_abs_diff_eq!(g[0], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.05, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ens = example1_costs();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (idx, c) in ens.costs().iter().enumerate() {
            for _ in 0..100 {
                let y = v2(rng.gen_range(-8.0..8.0), rng.gen_range(-2.5..8.0));
                let g = c.grad(&y).unwrap();
                let fd = finite_difference_grad(c, &y, 1e-6).unwrap();
                let tol = 1e-6f64.max(1e-4 * g.norm());
                assert!(
                    (g - fd).amax() < tol.max(1e-5),
                    "cost {idx} gradient mismatch at {:?}",
                    y.as_slice()
                );
            }
        }
    }

    #[test]
    fn f5_guard_enforced() {
        let ens = example1_costs();
        let y = v2(0.0, -3.5);
        assert!(ens.cost(4).eval(&y).is_err());
        match sum_gradient(&ens, &y) {
            Err(Error::DomainViolation { index, .. }) => assert_eq!(index, 4),
            other => panic!("expected domain violation, got {other:?}"),
        }
    }

    #[test]
    fn sum_gradient_linearity() {
        let q = CostFunction::new(
            1,
            vec![CostTerm::Quadratic {
                weights: vec![1.0],
                center: vec![0.0],
            }],
            Some(2.0),
            Some(2.0),
        );
        let ens = CostEnsemble::new(vec![q.clone(), q]).unwrap();
        let g = sum_gradient(&ens, &DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn sum_gradient_matches_finite_difference_of_sum() {
        let ens = example1_costs();
        let y = v2(0.0, 0.0);
        let g = sum_gradient(&ens, &y).unwrap();
        assert!(g.norm() > 1e-3);
        let mut fd = DVector::zeros(2);
        for c in ens.costs() {
            fd += finite_difference_grad(c, &y, 1e-6).unwrap();
        }
        assert!((g - fd).amax() < 1e-5);
    }

    #[test]
    fn newton_on_single_quadratic() {
        let c = CostFunction::new(
            2,
            vec![CostTerm::Quadratic {
                weights: vec![1.0, 2.0],
                center: vec![5.0, 3.0],
            }],
            Some(4.0),
            Some(2.0),
        );
        let ens = CostEnsemble::new(vec![c]).unwrap();
        let y = solve_optimum(&ens, &v2(0.0, 0.0), 1e-10).unwrap();
        assert_abs_diff_eq!(y[0], 5.0, epsilon = 1e-8);
        assert_abs_diff_eq!(y[1], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn newton_midpoint_of_two_quadratics() {
        let mk = |c: f64| {
            CostFunction::new(
                1,
                vec![CostTerm::Quadratic {
                    weights: vec![1.0],
                    center: vec![c],
                }],
                Some(2.0),
                Some(2.0),
            )
        };
        let ens = CostEnsemble::new(vec![mk(-3.0), mk(7.0)]).unwrap();
        let y = solve_optimum(&ens, &DVector::from_vec(vec![0.0]), 1e-10).unwrap();
        assert_abs_diff_eq!(y[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn example1_optimum() {
        let ens = example1_costs();
        let y = solve_optimum(&ens, &v2(0.0, 0.0), 1e-8).unwrap();
        assert_abs_diff_eq!(y[0], 0.26224, epsilon = 1e-4);
        assert_abs_diff_eq!(y[1], 1.59614, epsilon = 1e-4);
        assert!(sum_gradient(&ens, &y).unwrap().norm() <= 1e-3);
    }

    #[test]
    fn optimum_invariant_to_start() {
        let ens = example1_costs();
        let reference = solve_optimum(&ens, &v2(0.0, 0.0), 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let y0 = v2(rng.gen_range(-5.0..5.0), rng.gen_range(-2.5..5.0));
            let y = solve_optimum(&ens, &y0, 1e-9).unwrap();
            assert!((y - &reference).norm() <= 2e-9);
        }
    }

    #[test]
    fn estimate_constants_on_pure_quadratic() {
        let c = CostFunction::new(
            2,
            vec![CostTerm::Quadratic {
                weights: vec![1.0, 1.0],
                center: vec![0.0, 0.0],
            }],
            None,
            None,
        );
        let (w, m) = estimate_constants(&c, &[-4.0, -4.0], &[4.0, 4.0], 200).unwrap();
        assert_abs_diff_eq!(w, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn estimate_constants_on_f1() {
        let ens = example1_costs();
        let (w, m) = estimate_constants(ens.cost(0), &[-10.0, -10.0], &[10.0, 10.0], 500).unwrap();
        // Hessian is diag(2, 4): secant bounds approach 4 and 2
        assert!(w <= 4.0 + 1e-9 && w > 3.0);
        assert!((2.0 - 1e-9..3.0).contains(&m));
    }

    #[test]
    fn estimate_constants_on_logsumexp() {
        let ens = example1_costs();
        let (_, m) = estimate_constants(ens.cost(2), &[-10.0, -10.0], &[10.0, 10.0], 500).unwrap();
        assert!(m <= 1e-2);
    }

    #[test]
    fn estimate_constants_rejects_degenerate_box() {
        let ens = example1_costs();
        assert!(matches!(
            estimate_constants(ens.cost(0), &[1.0, 1.0], &[1.0, 2.0], 10),
            Err(Error::DegenerateBox)
        ));
    }
}
