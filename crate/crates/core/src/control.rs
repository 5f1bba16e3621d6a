//! The distributed PI control law shared by the three communication schemes,
//! parameter bounds for the sampled schemes, the guaranteed inter-sample
//! bound, the event-trigger threshold, convergence-rate constants and the
//! Lyapunov function used for post-run auditing.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::graph::GammaMatrix;
use crate::{Error, Result};

/// Communication scheme between agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Continuous,
    Periodic,
    EventTriggered,
}

impl Scheme {
    pub fn is_sampled(&self) -> bool {
        !matches!(self, Scheme::Continuous)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Continuous => write!(f, "continuous"),
            Scheme::Periodic => write!(f, "periodic"),
            Scheme::EventTriggered => write!(f, "event_triggered"),
        }
    }
}

/// Lower bound on the Lyapunov parameter `xi` for a scheme, given the
/// ensemble curvature constants and the largest Laplacian eigenvalue.
pub fn xi_lower_bound(scheme: Scheme, w_bar: f64, m_under: f64, lambda_n: f64) -> f64 {
    match scheme {
        Scheme::Continuous => (w_bar * w_bar / (2.0 * m_under)).max(1.0),
        Scheme::Periodic | Scheme::EventTriggered => {
            ((4.0 * w_bar * w_bar + 2.0 * lambda_n * lambda_n + 1.0) / (8.0 * m_under)).max(1.0)
        }
    }
}

/// Lower bound on the event-trigger parameter `kappa`.
pub fn kappa_lower_bound(w_bar: f64, m_under: f64) -> f64 {
    (w_bar * w_bar / (4.0 * m_under)).max(0.5)
}

/// Guaranteed inter-sample bound for the periodic scheme:
/// `tau0 = ln(1 + (w+1) eps / (w + 1 + sqrt(2) lN + sqrt(2) lN eps)) / (w+1)`
/// with `eps = 1 / (2 sqrt(2 (xi^2 + (xi-1)^2)))`.
pub fn tau0(w_bar: f64, lambda_n: f64, xi: f64) -> Result<f64> {
    if w_bar <= 0.0 || lambda_n <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tau0 requires positive w_bar and lambda_n, got {w_bar}, {lambda_n}"
        )));
    }
    if xi < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "tau0 requires xi >= 1, got {xi}"
        )));
    }
    let eps = 1.0 / (2.0 * (2.0 * (xi * xi + (xi - 1.0) * (xi - 1.0))).sqrt());
    let s2ln = std::f64::consts::SQRT_2 * lambda_n;
    let w1 = w_bar + 1.0;
    Ok((1.0 + w1 * eps / (w1 + s2ln + s2ln * eps)).ln() / w1)
}

/// The `xi` maximizing the guaranteed convergence-rate constant, and the
/// resulting closed-form maximum `c2_bar`.
pub fn rate_constants(w_bar: f64, m_under: f64, lambda_2: f64) -> (f64, f64) {
    let xi = (w_bar * w_bar + 1.0) / (2.0 * m_under);
    (xi, c2_of_xi(xi, lambda_2))
}

/// Rate constant as a function of `xi` for a given algebraic connectivity.
pub fn c2_of_xi(xi: f64, lambda_2: f64) -> f64 {
    let il = 1.0 / lambda_2;
    let disc = (il * il - 2.0 * il + 1.0) * xi * xi + (2.0 * il - 2.0) * xi + 5.0;
    2.0 / (xi + xi * il + 1.0 + disc.sqrt())
}

/// Inner control signal `v = -grad - sum_j a_ij (yh_i - yh_j) - eta`.
///
/// The plant wraps this as `u = -K_alpha x + K_beta v`; under the continuous
/// scheme the broadcast values coincide with the live outputs.
pub fn control_signal(
    y_hat_i: &DVector<f64>,
    neighbors: &[(f64, DVector<f64>)],
    eta_i: &DVector<f64>,
    grad_i: &DVector<f64>,
) -> DVector<f64> {
    -grad_i - laplacian_disagreement(y_hat_i, neighbors) - eta_i
}

/// Weighted disagreement `sum_j a_ij (yh_i - yh_j)`; this is also the
/// integral state's derivative.
pub fn laplacian_disagreement(
    y_hat_i: &DVector<f64>,
    neighbors: &[(f64, DVector<f64>)],
) -> DVector<f64> {
    let mut acc = DVector::zeros(y_hat_i.len());
    for (w, y_hat_j) in neighbors {
        acc += *w * (y_hat_i - y_hat_j);
    }
    acc
}

/// Event-trigger threshold
/// `theta_i = sum_j a_ij |yh_i - yh_j|^2 / (4 (d_i + kappa))`.
///
/// Agent `i` broadcasts when its measurement error satisfies
/// `|e_i|^2 >= theta_i`, but never before the minimum dwell has elapsed.
pub fn trigger_threshold(
    y_hat_i: &DVector<f64>,
    neighbors: &[(f64, DVector<f64>)],
    d_out_i: f64,
    kappa: f64,
) -> f64 {
    let sum: f64 = neighbors
        .iter()
        .map(|(w, y_hat_j)| w * (y_hat_i - y_hat_j).norm_squared())
        .sum();
    sum / (4.0 * (d_out_i + kappa))
}

/// Quadratic Lyapunov value for deviations `rho = y - y_eq` and
/// `sigma = eta - eta_eq` stacked over agents:
/// `V = (xi/2) rho.rho + sigma.rho + (1/2) sigma.sigma + (xi/2) sigma.(Gamma (x) I_q) sigma`.
pub fn lyapunov_value(
    rho: &DVector<f64>,
    sigma: &DVector<f64>,
    xi: f64,
    gamma: &GammaMatrix,
) -> f64 {
    let n = gamma.matrix.nrows();
    debug_assert_eq!(rho.len(), sigma.len());
    debug_assert_eq!(rho.len() % n, 0);
    let q = rho.len() / n;
    let mut gamma_quad = 0.0;
    for k in 0..n {
        let sk = sigma.rows(k * q, q);
        for l in 0..n {
            let sl = sigma.rows(l * q, q);
            gamma_quad += gamma.matrix[(k, l)] * sk.dot(&sl);
        }
    }
    0.5 * xi * rho.norm_squared()
        + sigma.dot(rho)
        + 0.5 * sigma.norm_squared()
        + 0.5 * xi * gamma_quad
}

/// Controller parameters for one run. `xi` and `kappa` only affect analysis
/// quantities and the trigger threshold respectively; the PI law itself is
/// parameter-free.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub scheme: Scheme,
    pub xi: f64,
    pub kappa: f64,
    /// Minimum dwell / sampling period for the sampled schemes.
    pub delta: f64,
    /// Guaranteed inter-sample bound computed from `(w_bar, lambda_n, xi)`.
    pub tau0: Option<f64>,
    pub w_bar: f64,
    pub m_under: f64,
    pub lambda_n: f64,
    /// When set, a sampling period beyond `tau0` is a configuration error
    /// instead of a reported warning.
    pub strict_bounds: bool,
}

impl ControllerConfig {
    /// Build a config with defaults: `xi` at the rate-optimal value for the
    /// continuous scheme and 1% above its lower bound for sampled schemes;
    /// `kappa` 1% above its lower bound.
    pub fn new(
        scheme: Scheme,
        w_bar: f64,
        m_under: f64,
        lambda_n: f64,
        delta: Option<f64>,
    ) -> Result<Self> {
        if w_bar <= 0.0 || m_under <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "curvature constants must be positive, got w_bar = {w_bar}, m_under = {m_under}"
            )));
        }
        let xi = match scheme {
            Scheme::Continuous => ((w_bar * w_bar + 1.0) / (2.0 * m_under)).max(1.01),
            _ => 1.01 * xi_lower_bound(scheme, w_bar, m_under, lambda_n),
        };
        let kappa = 1.01 * kappa_lower_bound(w_bar, m_under);
        let tau0 = if scheme.is_sampled() {
            Some(tau0(w_bar, lambda_n, xi)?)
        } else {
            None
        };
        let delta = match (scheme.is_sampled(), delta) {
            (true, Some(d)) => {
                if d <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "sampling period must be positive, got {d}"
                    )));
                }
                d
            }
            (true, None) => tau0.unwrap(),
            (false, _) => 0.0,
        };
        Ok(ControllerConfig {
            scheme,
            xi,
            kappa,
            delta,
            tau0,
            w_bar,
            m_under,
            lambda_n,
            strict_bounds: false,
        })
    }

    /// Bound violations, as human-readable descriptions. Empty when every
    /// sufficient condition for the convergence guarantee holds.
    pub fn bound_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let xi_lo = xi_lower_bound(self.scheme, self.w_bar, self.m_under, self.lambda_n);
        if self.xi <= xi_lo {
            v.push(format!(
                "xi = {} does not exceed its lower bound {xi_lo} for the {} scheme",
                self.xi, self.scheme
            ));
        }
        if self.scheme == Scheme::EventTriggered {
            let k_lo = kappa_lower_bound(self.w_bar, self.m_under);
            if self.kappa <= k_lo {
                v.push(format!(
                    "kappa = {} does not exceed its lower bound {k_lo}",
                    self.kappa
                ));
            }
        }
        if self.scheme.is_sampled() {
            if let Some(t0) = self.tau0 {
                if self.delta > t0 {
                    v.push(format!(
                        "sampling period {} exceeds the guaranteed bound tau0 = {t0:.6e}; \
                         the exponential-convergence guarantee does not apply",
                        self.delta
                    ));
                }
            }
        }
        v
    }

    /// Error out when strict bound checking is requested and the sampling
    /// period exceeds the guaranteed bound.
    pub fn check_strict(&self) -> Result<()> {
        if self.strict_bounds {
            if let Some(t0) = self.tau0 {
                if self.delta > t0 {
                    return Err(Error::DeltaExceedsTau0 {
                        delta: self.delta,
                        tau0: t0,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Next communication instant on the shared periodic grid. Accumulated as an
/// integer multiple of the period to avoid drift.
pub fn next_comm_periodic(k: usize, delta: f64) -> f64 {
    (k + 1) as f64 * delta
}

/// Per-agent controller memory: integral state, last broadcast output and
/// the most recent communication instant.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub eta: Vec<DVector<f64>>,
    pub y_hat: Vec<DVector<f64>>,
    pub last_comm: Vec<f64>,
}

impl ControllerState {
    /// Integral states start at zero; broadcasts are initialized to the
    /// agents' initial outputs.
    pub fn new(initial_outputs: Vec<DVector<f64>>) -> Self {
        let n = initial_outputs.len();
        let q = initial_outputs[0].len();
        ControllerState {
            eta: vec![DVector::zeros(q); n],
            y_hat: initial_outputs,
            last_comm: vec![0.0; n],
        }
    }
}
