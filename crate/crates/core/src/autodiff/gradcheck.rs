use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Denominator floor so that near-zero gradients are compared absolutely.
    pub floor: f64,
    /// Coordinates sampled per tensor; tensors at or below this size are
    /// checked exhaustively.
    pub coords_per_tensor: usize,
    /// When a step of `eps` moves the evaluation across a kink (see
    /// [`Graph::kink_signature`]), retry with steps shrunk tenfold this many
    /// times before skipping the coordinate.
    pub kink_retries: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-5, tol: 1e-5, floor: 1e-6, coords_per_tensor: 32, kink_retries: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordError {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates checked with a reduced step because `eps` crossed a kink.
    pub refined: usize,
    /// Coordinates with no kink-free step; they are not compared.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub failures: Vec<CoordError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval_loss<F>(params: &[Tensor], build: &F) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.leaf(t, true)).collect();
    let loss = build(&mut g, &vars)?;
    let v = g.value(loss);
    if v.len() != 1 {
        return Err(Error::Usage(format!("grad_check: loss must be scalar, got {:?}", v.dims())));
    }
    let value = v.data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("grad_check: loss evaluated to {value}")));
    }
    Ok((value, g.kink_signature()))
}

/// Compares reverse-mode gradients of `build` with central finite
/// differences on sampled coordinates of every tensor in `params`.
///
/// `build` receives one leaf per entry of `params`, in order, and must
/// return a scalar loss. `params` is restored bit-exactly on return.
///
/// A central difference is only compared when both probes share the kink
/// signature of the unperturbed graph; otherwise the probe straddles a
/// non-differentiable point and says nothing about the analytic gradient.
pub fn grad_check<F>(params: &mut [Tensor], build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let (analytic, base): (Vec<Vec<f64>>, u64) = {
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|t| g.leaf(t, true)).collect();
        let loss = build(&mut g, &vars)?;
        let grads = g.backward(loss)?;
        (vars.iter().zip(params.iter()).map(|(v, t)| grads.get_or_zeros(*v, t.len())).collect(), g.kink_signature())
    };
    if analytic.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("grad_check: analytic gradient is not finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    for ti in 0..params.len() {
        let len = params[ti].len();
        let coords: Vec<usize> = if len <= cfg.coords_per_tensor {
            (0..len).collect()
        } else {
            (0..cfg.coords_per_tensor).map(|_| rng.random_range(0..len)).collect()
        };
        for idx in coords {
            let orig = params[ti].data()[idx];
            let mut eps = cfg.eps;
            let mut numeric = None;
            for attempt in 0..=cfg.kink_retries {
                params[ti].data_mut()[idx] = orig + eps;
                let plus = eval_loss(params, &build);
                params[ti].data_mut()[idx] = orig - eps;
                let minus = eval_loss(params, &build);
                params[ti].data_mut()[idx] = orig;
                let ((lp, sp), (lm, sm)) = (plus?, minus?);
                if sp == base && sm == base {
                    numeric = Some((lp - lm) / (2.0 * eps));
                    if attempt > 0 {
                        report.refined += 1;
                    }
                    break;
                }
                eps /= 10.0;
            }
            let Some(numeric) = numeric else {
                report.skipped += 1;
                continue;
            };
            let a = analytic[ti][idx];
            let rel = relative_error(a, numeric, cfg.floor);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel > cfg.tol {
                report.failures.push(CoordError { tensor: ti, index: idx, analytic: a, numeric, rel_error: rel });
            }
        }
    }
    Ok(report)
}
