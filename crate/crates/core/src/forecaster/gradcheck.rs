//! Central finite-difference verification of the analytic gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{forecast_loss, loss_and_grads};
use super::train::TrainExample;
use super::{ForecasterConfig, ForecasterParams};
use crate::error::Result;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Compare the analytic gradient of the single-example MSE loss against
/// central finite differences on `n_coords` randomly chosen parameter
/// coordinates. Returns the maximum relative error observed.
///
/// The relative error uses a denominator floor so that coordinates whose
/// true gradient sits at numeric noise level are judged by absolute error.
pub fn grad_check(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    example: &TrainExample,
    n_coords: usize,
    seed: u64,
) -> Result<f64> {
    let (_, grads) = loss_and_grads(cfg, params, &[example])?;
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
    let total = analytic.len();

    let mut work = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    for _ in 0..n_coords.min(total) {
        let coord = rng.random_range(0..total);
        let numeric = {
            perturb(&mut work, coord, FD_STEP);
            let up = forecast_loss(cfg, &work, example)?;
            perturb(&mut work, coord, -2.0 * FD_STEP);
            let down = forecast_loss(cfg, &work, example)?;
            perturb(&mut work, coord, FD_STEP);
            (up - down) / (2.0 * FD_STEP)
        };
        let a = analytic[coord];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

/// Central finite-difference estimate of the loss gradient at one flat
/// parameter coordinate.
pub fn fd_gradient_at(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    example: &TrainExample,
    coord: usize,
) -> Result<f64> {
    let mut work = params.clone();
    perturb(&mut work, coord, FD_STEP);
    let up = forecast_loss(cfg, &work, example)?;
    perturb(&mut work, coord, -2.0 * FD_STEP);
    let down = forecast_loss(cfg, &work, example)?;
    Ok((up - down) / (2.0 * FD_STEP))
}

fn perturb(params: &mut ForecasterParams, coord: usize, delta: f64) {
    let mut offset = coord;
    for slice in params.slices_mut() {
        if offset < slice.len() {
            slice[offset] += delta;
            return;
        }
        offset -= slice.len();
    }
    panic!("coordinate {coord} out of range");
}
