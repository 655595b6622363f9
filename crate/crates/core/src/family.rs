//! Response families: mean/weight maps, the Breslow baseline hazard and
//! log-likelihoods.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RidgeError};
use crate::linalg;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside
/// log-likelihoods.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
    Cox,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "gaussian" => Ok(Family::Linear),
            "logistic" | "binomial" => Ok(Family::Logistic),
            "cox" | "survival" => Ok(Family::Cox),
            other => Err(RidgeError::Config(format!("unknown family {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
            Family::Cox => "cox",
        }
    }
}

/// Observed outcome. For Cox, `y` holds the event indicators and `time` the
/// follow-up times.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub family: Family,
    pub y: DVector<f64>,
    pub time: Option<DVector<f64>>,
    pub offset: Option<DVector<f64>>,
}

impl Response {
    pub fn linear(y: DVector<f64>) -> Result<Self> {
        let r = Self { family: Family::Linear, y, time: None, offset: None };
        r.validate()?;
        Ok(r)
    }

    pub fn logistic(y: DVector<f64>) -> Result<Self> {
        let r = Self { family: Family::Logistic, y, time: None, offset: None };
        r.validate()?;
        Ok(r)
    }

    pub fn cox(time: DVector<f64>, event: DVector<f64>) -> Result<Self> {
        let r = Self { family: Family::Cox, y: event, time: Some(time), offset: None };
        r.validate()?;
        Ok(r)
    }

    pub fn with_offset(mut self, offset: DVector<f64>) -> Result<Self> {
        self.offset = Some(offset);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(RidgeError::Response("empty response".into()));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(RidgeError::Response("response has non-finite values".into()));
        }
        if let Some(o) = &self.offset {
            if o.len() != n || o.iter().any(|v| !v.is_finite()) {
                return Err(RidgeError::Response(format!("offset must be {n} finite values")));
            }
        }
        match self.family {
            Family::Linear => {}
            Family::Logistic => {
                if self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(RidgeError::Response("logistic labels must be 0 or 1".into()));
                }
            }
            Family::Cox => {
                let t = self
                    .time
                    .as_ref()
                    .ok_or_else(|| RidgeError::Response("cox response needs times".into()))?;
                if t.len() != n {
                    return Err(RidgeError::Response(format!("{} times for {n} events", t.len())));
                }
                if t.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(RidgeError::Response("survival times must be positive".into()));
                }
                if self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(RidgeError::Response("event indicators must be 0 or 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Rows `idx` of every field.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            family: self.family,
            y: linalg::select_vec(&self.y, idx)?,
            time: match &self.time {
                Some(t) => Some(linalg::select_vec(t, idx)?),
                None => None,
            },
            offset: match &self.offset {
                Some(o) => Some(linalg::select_vec(o, idx)?),
                None => None,
            },
        })
    }

    /// `η_0 + η`.
    pub fn total_eta(&self, eta: &DVector<f64>) -> DVector<f64> {
        match &self.offset {
            Some(o) => o + eta,
            None => eta.clone(),
        }
    }

    pub fn num_events(&self) -> usize {
        match self.family {
            Family::Cox => self.y.iter().filter(|&&d| d == 1.0).count(),
            _ => 0,
        }
    }

    /// Stratum label used for fold balancing (class or event status).
    pub fn stratum(&self, i: usize) -> usize {
        match self.family {
            Family::Linear => 0,
            Family::Logistic | Family::Cox => self.y[i] as usize,
        }
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Breslow cumulative baseline hazard, a right-continuous step function with
/// jumps at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub jumps: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    /// `Ĥ_0(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `ĥ_0(t)`: the jump at exactly `t`, zero elsewhere.
    pub fn jump(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            self.jumps[k]
        } else {
            0.0
        }
    }
}

/// Sorted unique times with the number of events at each, and the risk-set
/// sums `Σ_{t_j ≥ s} exp(η_j - shift)`.
struct RiskSets {
    times: Vec<f64>,
    events: Vec<f64>,
    risk: Vec<f64>,
}

fn risk_sets(eta_total: &DVector<f64>, time: &DVector<f64>, event: &DVector<f64>, shift: f64) -> RiskSets {
    let n = time.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut exp_sum = Vec::new();
    for &i in &order {
        let e = (eta_total[i] - shift).exp();
        if times.last() == Some(&time[i]) {
            *events.last_mut().unwrap() += event[i];
            *exp_sum.last_mut().unwrap() += e;
        } else {
            times.push(time[i]);
            events.push(event[i]);
            exp_sum.push(e);
        }
    }
    let mut risk = vec![0.0; times.len()];
    let mut acc = 0.0;
    for k in (0..times.len()).rev() {
        acc += exp_sum[k];
        risk[k] = acc;
    }
    RiskSets { times, events, risk }
}

fn cox_parts(response: &Response) -> Result<(&DVector<f64>, &DVector<f64>)> {
    match (response.family, &response.time) {
        (Family::Cox, Some(t)) => Ok((t, &response.y)),
        _ => Err(RidgeError::Response("cox response required".into())),
    }
}

/// Breslow estimator at linear predictor `η` (offset added); tied event times
/// share one risk-set denominator.
pub fn breslow(eta: &DVector<f64>, response: &Response) -> Result<BaselineHazard> {
    let (time, event) = cox_parts(response)?;
    if response.num_events() == 0 {
        return Err(RidgeError::Response("cox fit needs at least one event".into()));
    }
    let total = response.total_eta(eta);
    let rs = risk_sets(&total, time, event, 0.0);
    let mut times = Vec::new();
    let mut jumps = Vec::new();
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    for k in 0..rs.times.len() {
        if rs.events[k] > 0.0 {
            let h = rs.events[k] / rs.risk[k];
            acc += h;
            times.push(rs.times[k]);
            jumps.push(h);
            cumulative.push(acc);
        }
    }
    Ok(BaselineHazard { times, jumps, cumulative })
}

/// `w_i = Ĥ_0(t_i) exp(η_i)` with the baseline fitted at the same `η`,
/// computed with a max-shift so large `η` do not overflow.
fn cox_weights(total: &DVector<f64>, time: &DVector<f64>, event: &DVector<f64>) -> DVector<f64> {
    let shift = total.max();
    let rs = risk_sets(total, time, event, shift);
    let mut cum = vec![0.0; rs.times.len()];
    let mut acc = 0.0;
    for k in 0..rs.times.len() {
        if rs.events[k] > 0.0 {
            acc += rs.events[k] / rs.risk[k];
        }
        cum[k] = acc;
    }
    DVector::from_fn(total.len(), |i, _| {
        let k = rs.times.partition_point(|&s| s < time[i]);
        cum[k] * (total[i] - shift).exp()
    })
}

/// Mean `Ỹ`, IWLS weight `w` and centered response `C` at `η`, plus the
/// Breslow baseline for Cox.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub weight: DVector<f64>,
    pub centered: DVector<f64>,
    pub baseline: Option<BaselineHazard>,
}

pub fn family_moments(eta: &DVector<f64>, response: &Response) -> Result<Moments> {
    if eta.len() != response.n() {
        return Err(RidgeError::Dimension(format!(
            "eta has length {}, response {}",
            eta.len(),
            response.n()
        )));
    }
    let total = response.total_eta(eta);
    match response.family {
        Family::Linear => Ok(Moments {
            centered: &response.y - &total,
            mean: total,
            weight: DVector::from_element(eta.len(), 1.0),
            baseline: None,
        }),
        Family::Logistic => {
            let mean = total.map(expit);
            let weight = mean.map(|p| p * (1.0 - p));
            Ok(Moments { centered: &response.y - &mean, mean, weight, baseline: None })
        }
        Family::Cox => {
            let (time, event) = cox_parts(response)?;
            let baseline = breslow(eta, response)?;
            let weight = cox_weights(&total, time, event);
            Ok(Moments {
                centered: event - &weight,
                mean: weight.clone(),
                weight,
                baseline: Some(baseline),
            })
        }
    }
}

/// Log-likelihood at `η` (offset added). Linear uses unit variance. Cox uses
/// the full likelihood `Σ d_i (log ĥ_0(t_i) + η_i) - Ĥ_0(t_i) exp(η_i)` with
/// the given baseline, or the Breslow baseline at `η` when none is given.
pub fn loglik(eta: &DVector<f64>, response: &Response, baseline: Option<&BaselineHazard>) -> Result<f64> {
    if eta.len() != response.n() {
        return Err(RidgeError::Dimension(format!(
            "eta has length {}, response {}",
            eta.len(),
            response.n()
        )));
    }
    let total = response.total_eta(eta);
    match response.family {
        Family::Linear => {
            let n = eta.len() as f64;
            let rss = (&response.y - &total).norm_squared();
            Ok(-0.5 * rss - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
        }
        Family::Logistic => Ok(total
            .iter()
            .zip(response.y.iter())
            .map(|(&e, &y)| {
                let p = expit(e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                y * p.ln() + (1.0 - y) * (1.0 - p).ln()
            })
            .sum()),
        Family::Cox => {
            let (time, event) = cox_parts(response)?;
            let own;
            let base = match baseline {
                Some(b) => b,
                None => {
                    own = breslow(eta, response)?;
                    &own
                }
            };
            let mut ll = 0.0;
            for i in 0..eta.len() {
                if event[i] == 1.0 {
                    ll += base.jump(time[i]).ln() + total[i];
                }
                ll -= base.eval(time[i]) * total[i].exp();
            }
            Ok(ll)
        }
    }
}

/// Breslow partial log-likelihood `Σ_i d_i (η_i - log Σ_{t_j ≥ t_i} exp(η_j))`.
pub fn partial_loglik(eta: &DVector<f64>, response: &Response) -> Result<f64> {
    let (time, event) = cox_parts(response)?;
    let total = response.total_eta(eta);
    let shift = total.max();
    let rs = risk_sets(&total, time, event, shift);
    let mut ll = 0.0;
    for i in 0..total.len() {
        if event[i] == 1.0 {
            let k = rs.times.partition_point(|&s| s < time[i]);
            ll += total[i] - shift - rs.risk[k].ln();
        }
    }
    Ok(ll)
}
