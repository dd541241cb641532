//! Two-component Gaussian mixtures for binary biomarkers.
//!
//! Raw measurements are modelled as a mix of a normal and an abnormal
//! Gaussian. The fitted class-conditional densities (not the posterior
//! responsibilities) are what the binary kernel consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::log_add_exp;
use crate::model::{quantile_sorted, Cell};

pub const MIN_VALUES: usize = 10;
pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-6;
/// Component sigmas never drop below this fraction of the data sd.
pub const SIGMA_FLOOR_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentFit {
    pub mu_normal: f64,
    pub sigma_normal: f64,
    pub mu_abnormal: f64,
    pub sigma_abnormal: f64,
    pub weight_normal: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Data log-likelihood before the first and after every M-step.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Component {
    mu: f64,
    sigma: f64,
    weight: f64,
}

fn log_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = (x - mu) / sigma;
    -0.5 * d * d - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits a two-component mixture by expectation-maximization.
///
/// With a `reference_mask` the normal component starts from the reference
/// values and the abnormal one from the rest, and the component that ends
/// up explaining the reference values is reported as normal. Without one the
/// components start at the 25th and 75th percentiles and the lower-mean
/// component is reported as normal. Non-finite values are skipped.
pub fn fit_two_component(values: &[f64], reference_mask: Option<&[bool]>) -> Result<TwoComponentFit> {
    if let Some(mask) = reference_mask {
        if mask.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "reference mask has {} entries for {} values",
                mask.len(),
                values.len()
            )));
        }
    }
    let mut xs = Vec::with_capacity(values.len());
    let mut is_ref = Vec::with_capacity(values.len());
    for (n, &v) in values.iter().enumerate() {
        if v.is_finite() {
            xs.push(v);
            is_ref.push(reference_mask.is_some_and(|m| m[n]));
        }
    }
    if xs.len() < MIN_VALUES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_VALUES} finite values, got {}",
            xs.len()
        )));
    }
    let (data_mean, data_sd) = mean_sd(&xs);
    if data_sd == 0.0 {
        return Err(Error::DegenerateData("all values are identical".into()));
    }
    let floor = SIGMA_FLOOR_FRACTION * data_sd;

    let mut comps = if reference_mask.is_some() {
        let refs: Vec<f64> = xs.iter().zip(&is_ref).filter(|(_, r)| **r).map(|(x, _)| *x).collect();
        let rest: Vec<f64> = xs.iter().zip(&is_ref).filter(|(_, r)| !**r).map(|(x, _)| *x).collect();
        if refs.len() < 2 || rest.len() < 2 {
            return Err(Error::InvalidArgument(
                "reference mask must select at least two values and leave at least two".into(),
            ));
        }
        let (m0, s0) = mean_sd(&refs);
        let (m1, s1) = mean_sd(&rest);
        let w = refs.len() as f64 / xs.len() as f64;
        [
            Component {
                mu: m0,
                sigma: s0.max(floor),
                weight: w,
            },
            Component {
                mu: m1,
                sigma: s1.max(floor),
                weight: 1.0 - w,
            },
        ]
    } else {
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let (mut lo, mut hi) = (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75));
        if hi - lo < floor {
            lo = data_mean - 0.5 * data_sd;
            hi = data_mean + 0.5 * data_sd;
        }
        let s = (0.5 * data_sd).max(floor);
        [
            Component {
                mu: lo,
                sigma: s,
                weight: 0.5,
            },
            Component {
                mu: hi,
                sigma: s,
                weight: 0.5,
            },
        ]
    };

    let n = xs.len();
    let mut resp = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut ll = e_step(&xs, &comps, &mut resp);
    trace.push(ll);
    while iterations < MAX_ITERATIONS {
        m_step(&xs, &resp, &mut comps, floor);
        iterations += 1;
        let next = e_step(&xs, &comps, &mut resp);
        debug_assert!(
            next >= ll - 1e-9 * ll.abs().max(1.0),
            "EM log-likelihood decreased: {ll} -> {next}"
        );
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < TOLERANCE {
            converged = true;
            break;
        }
    }

    let normal = if reference_mask.is_some() {
        // Responsibility of component 0 summed over the reference values.
        let r0: f64 = resp.iter().zip(&is_ref).filter(|(_, r)| **r).map(|(p, _)| *p).sum();
        let n_ref = is_ref.iter().filter(|r| **r).count() as f64;
        if r0 >= n_ref - r0 {
            0
        } else {
            1
        }
    } else if comps[0].mu <= comps[1].mu {
        0
    } else {
        1
    };
    let (a, b) = (comps[normal], comps[1 - normal]);
    Ok(TwoComponentFit {
        mu_normal: a.mu,
        sigma_normal: a.sigma,
        mu_abnormal: b.mu,
        sigma_abnormal: b.sigma,
        weight_normal: a.weight,
        converged,
        iterations,
        log_likelihood: ll,
        log_likelihood_trace: trace,
    })
}

/// Fills `resp` with the responsibility of component 0 and returns the data
/// log-likelihood.
fn e_step(xs: &[f64], comps: &[Component; 2], resp: &mut [f64]) -> f64 {
    let lw0 = comps[0].weight.ln();
    let lw1 = comps[1].weight.ln();
    let mut total = 0.0;
    for (x, r) in xs.iter().zip(resp.iter_mut()) {
        let a = lw0 + log_pdf(*x, comps[0].mu, comps[0].sigma);
        let b = lw1 + log_pdf(*x, comps[1].mu, comps[1].sigma);
        let l = log_add_exp(a, b);
        *r = (a - l).exp();
        total += l;
    }
    total
}

fn m_step(xs: &[f64], resp: &[f64], comps: &mut [Component; 2], floor: f64) {
    let n = xs.len() as f64;
    for (c, comp) in comps.iter_mut().enumerate() {
        let w = |r: f64| if c == 0 { r } else { 1.0 - r };
        let total: f64 = resp.iter().map(|r| w(*r)).sum();
        if total <= 0.0 {
            continue;
        }
        let mu = xs.iter().zip(resp).map(|(x, r)| w(*r) * x).sum::<f64>() / total;
        let var = xs.iter().zip(resp).map(|(x, r)| w(*r) * (x - mu).powi(2)).sum::<f64>() / total;
        comp.mu = mu;
        comp.sigma = var.sqrt().max(floor);
        comp.weight = total / n;
    }
}

/// `(p(x | not E), p(x | E))` for every present value.
pub fn event_probability_pairs(values: &[Option<f64>], fit: &TwoComponentFit) -> Vec<Option<(f64, f64)>> {
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                (
                    log_pdf(x, fit.mu_normal, fit.sigma_normal).exp(),
                    log_pdf(x, fit.mu_abnormal, fit.sigma_abnormal).exp(),
                )
            })
        })
        .collect()
}

/// The same pairs as binary cohort cells.
pub fn event_probability_cells(values: &[Option<f64>], fit: &TwoComponentFit) -> Vec<Cell> {
    event_probability_pairs(values, fit)
        .into_iter()
        .map(|p| match p {
            Some((p_not_event, p_event)) => Cell::Binary { p_not_event, p_event },
            None => Cell::Missing,
        })
        .collect()
}
