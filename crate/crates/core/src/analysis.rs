//! Post-run verification: exponential-rate fitting on the error tail,
//! Lyapunov monotonicity auditing, and inter-event statistics.

use serde::Serialize;

use crate::control::Scheme;
use crate::sim::SimulationTrace;
use crate::{Error, Result};

const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares exponential fit `error(t) ~ c * exp(-rate * t)` over the
/// decaying tail of a trace.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    /// `(t_start, t_end)` of the fitted window.
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fit a log-linear decay rate over the window where
/// `floor <= error <= 0.1 * error(0)`, skipping the initial transient and
/// the numerical floor.
pub fn fit_rate(trace: &SimulationTrace, floor: f64) -> Result<RateFit> {
    let e0 = trace.error[0];
    let cap = 0.1 * e0;
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.error)
        .filter(|&(_, &e)| e >= floor && e <= cap)
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientDecay(pts.len()));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut s_tt = 0.0;
    let mut s_tl = 0.0;
    let mut s_ll = 0.0;
    for &(t, l) in &pts {
        s_tt += (t - mean_t) * (t - mean_t);
        s_tl += (t - mean_t) * (l - mean_l);
        s_ll += (l - mean_l) * (l - mean_l);
    }
    let slope = s_tl / s_tt;
    let r_squared = if s_ll == 0.0 {
        1.0
    } else {
        (s_tl * s_tl / (s_tt * s_ll)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        rate: -slope,
        r_squared,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
    })
}

/// Result of checking the recorded Lyapunov series for monotone decrease, up
/// to integrator-scale slack. The continuous-time theory gives `dV/dt <= 0`;
/// between samples we allow an increase of `10 * dt * |p|^2` where `p`
/// stacks the output and integral-state deviations.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovAudit {
    pub max_increase: f64,
    pub max_increase_time: f64,
    pub increasing_fraction: f64,
    pub pass: bool,
}

pub fn audit_lyapunov(trace: &SimulationTrace) -> Result<LyapunovAudit> {
    let v = trace.lyapunov.as_ref().ok_or(Error::MissingLyapunov)?;
    let mut max_increase = 0.0f64;
    let mut max_increase_time = trace.times[0];
    let mut increasing = 0usize;
    let mut pass = true;
    for k in 1..v.len() {
        let inc = v[k] - v[k - 1];
        if inc <= 0.0 {
            continue;
        }
        increasing += 1;
        if inc > max_increase {
            max_increase = inc;
            max_increase_time = trace.times[k];
        }
        let dt = trace.times[k] - trace.times[k - 1];
        let sigma_sq: f64 = trace.etas[k]
            .iter()
            .zip(&trace.eta_star)
            .map(|(e, es)| (e - es).norm_squared())
            .sum();
        let p_sq = trace.error[k] + sigma_sq;
        if inc > 10.0 * dt * p_sq {
            pass = false;
        }
    }
    let steps = (v.len() - 1).max(1);
    Ok(LyapunovAudit {
        max_increase,
        max_increase_time,
        increasing_fraction: increasing as f64 / steps as f64,
        pass,
    })
}

/// Per-agent communication statistics of a sampled-scheme trace.
#[derive(Debug, Clone, Serialize)]
pub struct AgentEventStats {
    pub agent: usize,
    pub count: usize,
    pub min_gap: Option<f64>,
    pub mean_gap: Option<f64>,
    pub max_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EventStats {
    pub per_agent: Vec<AgentEventStats>,
    pub total_events: usize,
    pub min_gap: Option<f64>,
    /// True when every observed inter-event gap respects the minimum dwell.
    pub zeno_free: bool,
}

pub fn event_stats(trace: &SimulationTrace, delta: f64) -> Result<EventStats> {
    if trace.scheme == Scheme::Continuous {
        return Err(Error::ContinuousTrace);
    }
    let mut per_agent = Vec::with_capacity(trace.events.len());
    let mut min_gap: Option<f64> = None;
    let mut total = 0usize;
    for (agent, ev) in trace.events.iter().enumerate() {
        total += ev.len();
        let gaps: Vec<f64> = ev.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, mean, hi) = if gaps.is_empty() {
            (None, None, None)
        } else {
            let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            (Some(lo), Some(mean), Some(hi))
        };
        if let Some(lo) = lo {
            min_gap = Some(min_gap.map_or(lo, |m| m.min(lo)));
        }
        per_agent.push(AgentEventStats {
            agent,
            count: ev.len(),
            min_gap: lo,
            mean_gap: mean,
            max_gap: hi,
        });
    }
    let zeno_free = min_gap.is_none_or(|m| m >= delta - 1e-12);
    Ok(EventStats {
        per_agent,
        total_events: total,
        min_gap,
        zeno_free,
    })
}

/// Comparison of an empirical decay rate against the theoretical lower bound
/// `c2` (the guarantee is one-sided: the system may only be faster).
#[derive(Debug, Clone, Serialize)]
pub struct TheoryComparison {
    pub empirical_rate: f64,
    pub c2: f64,
    pub satisfied: bool,
}

pub fn compare_to_theory(fit: &RateFit, c2: f64) -> TheoryComparison {
    TheoryComparison {
        empirical_rate: fit.rate,
        c2,
        satisfied: fit.rate >= 0.5 * c2,
    }
}
