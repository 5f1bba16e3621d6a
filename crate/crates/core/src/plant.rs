//! Heterogeneous LTI agent dynamics and synthesis of the output-feedback
//! gains from the matrix equations `C*B*K_alpha = C*A` and `C*B*K_beta = I`.
//!
//! With those gains the closed-loop drift satisfies `C*(A - B*K_alpha) = 0`,
//! so the output derivative equals the controller's inner signal exactly.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const RANK_REL_TOL: f64 = 1e-9;

/// One agent's LTI triple with its current state.
#[derive(Debug, Clone)]
pub struct AgentPlant {
    a_mat: DMatrix<f64>,
    b_mat: DMatrix<f64>,
    c_mat: DMatrix<f64>,
    pub state: DVector<f64>,
}

impl AgentPlant {
    pub fn new(a_mat: DMatrix<f64>, b_mat: DMatrix<f64>, c_mat: DMatrix<f64>) -> Result<Self> {
        let n = a_mat.nrows();
        if a_mat.ncols() != n {
            return Err(Error::DimensionMismatch(
                "state matrix must be square".into(),
            ));
        }
        if b_mat.nrows() != n {
            return Err(Error::DimensionMismatch(
                "input matrix row count must match state dimension".into(),
            ));
        }
        if c_mat.ncols() != n {
            return Err(Error::DimensionMismatch(
                "output matrix column count must match state dimension".into(),
            ));
        }
        let state = DVector::zeros(n);
        Ok(AgentPlant {
            a_mat,
            b_mat,
            c_mat,
            state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_mat.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c_mat.nrows()
    }

    pub fn a_mat(&self) -> &DMatrix<f64> {
        &self.a_mat
    }

    pub fn b_mat(&self) -> &DMatrix<f64> {
        &self.b_mat
    }

    pub fn c_mat(&self) -> &DMatrix<f64> {
        &self.c_mat
    }

    /// Current output `y = C x`.
    pub fn output(&self) -> DVector<f64> {
        &self.c_mat * &self.state
    }

    pub fn output_of(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c_mat * x
    }
}

/// Feedback gain pair solving the two synthesis equations.
#[derive(Debug, Clone)]
pub struct GainPair {
    pub k_alpha: DMatrix<f64>,
    pub k_beta: DMatrix<f64>,
}

/// Diagnostic report for the rank and controllability conditions.
#[derive(Debug, Clone)]
pub struct Assumption4Report {
    pub cb_rank: usize,
    pub q: usize,
    pub cb_singular_values: Vec<f64>,
    pub cb_full_rank: bool,
    pub controllability_rank: usize,
    pub n_states: usize,
    pub controllable: bool,
}

impl Assumption4Report {
    pub fn pass(&self) -> bool {
        self.cb_full_rank && self.controllable
    }
}

fn svd_rank(m: &DMatrix<f64>) -> (usize, Vec<f64>) {
    let svd = m.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_REL_TOL * smax).count();
    (rank, sv)
}

/// Check `rank(C*B) = q` and controllability of `(A, B)`.
pub fn validate_assumption4(p: &AgentPlant) -> Assumption4Report {
    let cb = &p.c_mat * &p.b_mat;
    let (cb_rank, cb_singular_values) = svd_rank(&cb);
    let q = p.n_outputs();

    let n = p.n_states();
    let mut ctrb = DMatrix::zeros(n, n * p.n_inputs());
    let mut block = p.b_mat.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * p.n_inputs()), (n, p.n_inputs()))
            .copy_from(&block);
        block = &p.a_mat * block;
    }
    let (controllability_rank, _) = svd_rank(&ctrb);

    Assumption4Report {
        cb_rank,
        q,
        cb_singular_values,
        cb_full_rank: cb_rank == q,
        controllability_rank,
        n_states: n,
        controllable: controllability_rank == n,
    }
}

/// Minimum-Frobenius-norm solutions of `C*B*K_alpha = C*A` and
/// `C*B*K_beta = I_q` via the pseudo-inverse of `C*B`.
pub fn synthesize_gains(p: &AgentPlant) -> Result<GainPair> {
    let cb = &p.c_mat * &p.b_mat;
    let q = p.n_outputs();
    let (rank, singular_values) = svd_rank(&cb);
    if rank < q {
        return Err(Error::RankDeficient {
            rank,
            q,
            singular_values,
        });
    }
    let svd = cb.clone().svd(true, true);
    let pinv = svd
        .pseudo_inverse(RANK_REL_TOL * singular_values[0])
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let ca = &p.c_mat * &p.a_mat;
    Ok(GainPair {
        k_alpha: &pinv * ca,
        k_beta: pinv,
    })
}

/// Closed-loop state derivative `(A - B K_alpha) x + B K_beta v` for the
/// controller's inner signal `v`.
pub fn plant_derivative(
    p: &AgentPlant,
    gains: &GainPair,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    if v.len() != p.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "inner signal has length {}, expected {}",
            v.len(),
            p.n_outputs()
        )));
    }
    Ok(&p.a_mat * &p.state - &p.b_mat * (&gains.k_alpha * &p.state)
        + &p.b_mat * (&gains.k_beta * v))
}

/// Example agent matrices: two double-integrator-like agents, two oscillatory
/// agents and two third-order agents, all with two outputs.
pub fn example1_plants() -> Vec<AgentPlant> {
    let a12 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let b12 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -2.0]);
    let c12 = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
    let a34 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 1.0]);
    let b34 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
    let c34 = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, -1.0, 1.0]);
    let a56 = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
    let b56 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
    let c56 = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 2.0, 1.0, 2.0, 2.0]);
    vec![
        AgentPlant::new(a12.clone(), b12.clone(), c12.clone()).unwrap(),
        AgentPlant::new(a12, b12, c12).unwrap(),
        AgentPlant::new(a34.clone(), b34.clone(), c34.clone()).unwrap(),
        AgentPlant::new(a34, b34, c34).unwrap(),
        AgentPlant::new(a56.clone(), b56.clone(), c56.clone()).unwrap(),
        AgentPlant::new(a56, b56, c56).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_integrator_passes() {
        let p = AgentPlant::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let report = validate_assumption4(&p);
        assert!(report.cb_full_rank);
        assert!(report.controllable);
        assert_eq!(report.cb_rank, 1);
    }

    #[test]
    fn example_agent1_rank() {
        let plants = example1_plants();
        let cb = plants[0].c_mat() * plants[0].b_mat();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 1.0, -2.0]);
        assert_eq!(cb, expected);
        let report = validate_assumption4(&plants[0]);
        assert_eq!(report.cb_rank, 2);
        assert!(report.pass());
    }

    #[test]
    fn orthogonal_channel_fails() {
        let p = AgentPlant::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let report = validate_assumption4(&p);
        assert_eq!(report.cb_rank, 0);
        assert!(!report.cb_full_rank);
        assert!(matches!(
            synthesize_gains(&p),
            Err(Error::RankDeficient { rank: 0, q: 1, .. })
        ));
    }

    #[test]
    fn agent1_gains_match_published_values() {
        let plants = example1_plants();
        let gains = synthesize_gains(&plants[0]).unwrap();
        let k_beta = DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, 1.0, 1.0 / 3.0, 0.0]);
        let k_alpha = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 0.0]);
        assert!((gains.k_beta.clone() - k_beta).amax() < 1e-12);
        assert!((gains.k_alpha.clone() - k_alpha).amax() < 1e-12);
    }

    #[test]
    fn square_invertible_cb_with_zero_drift() {
        let p = AgentPlant::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let gains = synthesize_gains(&p).unwrap();
        assert!(gains.k_alpha.amax() < 1e-12);
        let cb = p.c_mat() * p.b_mat();
        assert!((cb * &gains.k_beta - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn residuals_on_example_plants() {
        for p in example1_plants() {
            let gains = synthesize_gains(&p).unwrap();
            let cb = p.c_mat() * p.b_mat();
            let ca = p.c_mat() * p.a_mat();
            assert!((&cb * &gains.k_alpha - ca).norm() <= 1e-9);
            assert!((&cb * &gains.k_beta - DMatrix::identity(2, 2)).norm() <= 1e-9);
            // drift cancellation: C (A - B K_alpha) = 0
            let drift = p.c_mat() * (p.a_mat() - p.b_mat() * &gains.k_alpha);
            assert!(drift.norm() <= 1e-8);
        }
    }

    #[test]
    fn residuals_on_random_full_rank_plants() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut tested = 0;
        while tested < 100 {
            let n = rng.gen_range(2..5usize);
            let q = rng.gen_range(1..=n.min(3));
            let p_in = rng.gen_range(q..=n);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let b = DMatrix::from_fn(n, p_in, |_, _| rng.gen_range(-2.0..2.0));
            let c = DMatrix::from_fn(q, n, |_, _| rng.gen_range(-2.0..2.0));
            let plant = AgentPlant::new(a, b, c).unwrap();
            let report = validate_assumption4(&plant);
            if !report.cb_full_rank {
                continue;
            }
            tested += 1;
            let gains = synthesize_gains(&plant).unwrap();
            let cb = plant.c_mat() * plant.b_mat();
            let ca = plant.c_mat() * plant.a_mat();
            assert!((&cb * &gains.k_alpha - ca).norm() <= 1e-9);
            assert!((&cb * &gains.k_beta - DMatrix::identity(q, q)).norm() <= 1e-9);
        }
    }

    #[test]
    fn zero_state_zero_signal_is_equilibrium() {
        let plants = example1_plants();
        let gains = synthesize_gains(&plants[0]).unwrap();
        let v = DVector::zeros(2);
        let dx = plant_derivative(&plants[0], &gains, &v).unwrap();
        assert!(dx.amax() < 1e-12);
    }

    #[test]
    fn scalar_closed_loop() {
        let mut p = AgentPlant::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let gains = synthesize_gains(&p).unwrap();
        assert_abs_diff_eq!(gains.k_alpha[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gains.k_beta[(0, 0)], 1.0, epsilon = 1e-12);
        p.state[0] = 2.0;
        let dx = plant_derivative(&p, &gains, &DVector::from_vec(vec![3.0])).unwrap();
        assert_abs_diff_eq!(dx[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut plants = example1_plants();
        let p = &mut plants[2];
        let gains = synthesize_gains(p).unwrap();
        for _ in 0..20 {
            p.state = DVector::from_fn(p.n_states(), |_, _| rng.gen_range(-5.0..5.0));
            let v = DVector::from_fn(2, |_, _| rng.gen_range(-5.0..5.0));
            let dense = (p.a_mat() - p.b_mat() * &gains.k_alpha) * &p.state
                + p.b_mat() * &gains.k_beta * &v;
            let got = plant_derivative(p, &gains, &v).unwrap();
            assert!((got - dense).amax() < 1e-12);
        }
    }

    #[test]
    fn example_agent5_output() {
        let mut plants = example1_plants();
        plants[4].state = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let y = plants[4].output();
        assert_eq!(y.as_slice(), &[2.0, 5.0]);
    }
}
