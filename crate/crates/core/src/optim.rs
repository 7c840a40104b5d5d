//! Adam optimization of document parameters against a target image.
//!
//! Two parameter groups share one moment state: control-point coordinates
//! (learning rate 1) and fill channels (learning rate 0.01).

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::num::Real;
use crate::raster::RasterImage;
use crate::render::{doc_to_params, params_to_doc, total_loss, PathGradient, RenderConfig};
use crate::svg::VectorDocument;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Default learning rate for control-point coordinates.
pub const DEFAULT_LR_POINTS: f64 = 1.0;
/// Default learning rate for fill channels.
pub const DEFAULT_LR_COLORS: f64 = 0.01;

/// Adam state: step count plus first/second moment accumulators shaped like
/// the document parameters, and the per-group learning rates.
///
/// The state also carries the optimization trajectory (current iterate and
/// best-so-far), so running `n` then `m` iterations against the same state
/// is identical to running `n + m` at once.
#[derive(Debug, Clone)]
pub struct OptimizerState<T = f64> {
    pub step: usize,
    pub lr_points: T,
    pub lr_colors: T,
    first_moment: Vec<PathGradient<T>>,
    second_moment: Vec<PathGradient<T>>,
    current: Option<Vec<PathGradient<T>>>,
    best: Option<(T, Vec<PathGradient<T>>)>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(lr_points: T, lr_colors: T) -> Self {
        OptimizerState {
            step: 0,
            lr_points,
            lr_colors,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            current: None,
            best: None,
        }
    }

    /// Loss of the best iterate seen so far, if any step has been evaluated.
    pub fn best_loss(&self) -> Option<T> {
        self.best.as_ref().map(|(l, _)| *l)
    }
}

impl<T: Real> Default for OptimizerState<T> {
    fn default() -> Self {
        OptimizerState::new(T::of(DEFAULT_LR_POINTS), T::of(DEFAULT_LR_COLORS))
    }
}

fn zeros_like<T: Real>(params: &[PathGradient<T>]) -> Vec<PathGradient<T>> {
    params
        .iter()
        .map(|p| PathGradient {
            points: vec![Point::zero(); p.points.len()],
            fill: [T::zero(); 3],
        })
        .collect()
}

fn same_shape<T: Real>(a: &[PathGradient<T>], b: &[PathGradient<T>]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.points.len() == y.points.len())
}

/// Runs `iterations` Adam steps of the total loss and returns the evaluated
/// iterate with the lowest loss (the input document when `iterations` is 0).
///
/// Fill channels are clamped to `[0, 1]` after every step. A warm state
/// resumes from its stored iterate; the document must then have the same
/// parameter shape.
pub fn optimize<T: Real>(
    doc: &VectorDocument<T>,
    target: &RasterImage<T>,
    iterations: usize,
    state: &mut OptimizerState<T>,
    cfg: &RenderConfig<T>,
    lambda_xing: T,
) -> Result<VectorDocument<T>> {
    let (width, height) = (doc.width, doc.height);
    let initial = doc_to_params(doc);
    match &state.current {
        None => {
            state.first_moment = zeros_like(&initial);
            state.second_moment = zeros_like(&initial);
            state.current = Some(initial);
        }
        Some(current) => {
            if !same_shape(current, &initial) {
                return Err(Error::invalid(
                    "optimizer state was built for a different document shape",
                ));
            }
        }
    }

    let beta1 = T::of(BETA1);
    let beta2 = T::of(BETA2);
    let eps = T::of(ADAM_EPS);
    let one = T::one();

    for _ in 0..iterations {
        let params = state.current.as_ref().unwrap();
        let current_doc = params_to_doc(width, height, params)?;
        let (loss, grads) = total_loss(&current_doc, target, cfg, lambda_xing)?;
        if state.best.as_ref().map_or(true, |(best, _)| loss < *best) {
            state.best = Some((loss, params.clone()));
        }

        state.step += 1;
        let t = state.step as i32;
        let corr1 = one - beta1.powi(t);
        let corr2 = one - beta2.powi(t);

        let params = state.current.as_mut().unwrap();
        for (pi, pg) in grads.paths.iter().enumerate() {
            let m = &mut state.first_moment[pi];
            let v = &mut state.second_moment[pi];
            let p = &mut params[pi];
            for i in 0..pg.points.len() {
                for axis in 0..2 {
                    let g = if axis == 0 { pg.points[i].x } else { pg.points[i].y };
                    let (ms, vs, xs) = if axis == 0 {
                        (&mut m.points[i].x, &mut v.points[i].x, &mut p.points[i].x)
                    } else {
                        (&mut m.points[i].y, &mut v.points[i].y, &mut p.points[i].y)
                    };
                    *ms = beta1 * *ms + (one - beta1) * g;
                    *vs = beta2 * *vs + (one - beta2) * g * g;
                    let m_hat = *ms / corr1;
                    let v_hat = *vs / corr2;
                    *xs = *xs - state.lr_points * m_hat / (v_hat.sqrt() + eps);
                }
            }
            for c in 0..3 {
                let g = pg.fill[c];
                m.fill[c] = beta1 * m.fill[c] + (one - beta1) * g;
                v.fill[c] = beta2 * v.fill[c] + (one - beta2) * g * g;
                let m_hat = m.fill[c] / corr1;
                let v_hat = v.fill[c] / corr2;
                p.fill[c] = p.fill[c] - state.lr_colors * m_hat / (v_hat.sqrt() + eps);
                p.fill[c] = p.fill[c].max(T::zero()).min(one);
            }
        }
    }

    match &state.best {
        Some((_, best)) => params_to_doc(width, height, best),
        None => Ok(doc.clone()),
    }
}
