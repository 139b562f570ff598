use log::{debug, info, warn};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use super::prior::apply_prior;
use super::{AngleInit, CalibrationResult, PriorMode, ReconstructionState, SolverConfig, UpdateOrder};
use crate::error::{Error, Result};
use crate::field::Fft2;
use crate::forward::{grid_scale, intensity_cost, SupportIndex};
use crate::optics::{pupil_radius_pixels, KVector, Pupil};
use crate::simulate::{object_grid_size, GeometryConfig, ImageStack};
use crate::transform::Family;

/// The nine SC offsets, `(0, 0)` first so it wins ties.
pub const SC_OFFSETS: [[i64; 2]; 9] = [[0, 0], [-1, -1], [0, -1], [1, -1], [-1, 0], [1, 0], [-1, 1], [0, 1], [1, 1]];

/// Scratch buffers reused across image updates.
struct Workspace {
    fft: Fft2,
    field: Array2<Complex64>,
    patch: Vec<Complex64>,
    delta: Vec<Complex64>,
}

impl ReconstructionState {
    /// Flat object whose intensity matches the mean of `first`, ideal pupil of `radius`.
    pub fn initial(
        stack: &ImageStack,
        angles: Vec<KVector>,
        radius: f64,
        object_size: usize,
        first: usize,
    ) -> Result<Self> {
        let params = stack.params;
        let pupil = Pupil::ideal(params.patch_pixels, radius)?;
        let n = object_size;
        let mut object = Array2::<Complex64>::zeros((n, n));
        let mean = stack.images[first].mean().unwrap_or(0.0).max(0.0);
        object[[n / 2, n / 2]] = Complex64::new(mean.sqrt() * n as f64, 0.0);
        let shifts = angles.iter().map(|k| k.rounded_pixels(&params)).collect();
        Ok(ReconstructionState {
            params,
            object,
            pupil: pupil.values,
            support: pupil.support,
            radius,
            angles,
            shifts,
            iteration: 0,
            costs: Vec::new(),
            moved_na: Vec::new(),
        })
    }
}

fn resolve_angles(stack: &ImageStack, init: &AngleInit<'_>) -> Result<(Vec<KVector>, Option<f64>)> {
    match init {
        AngleInit::Nominal => Ok((stack.expected.clone(), None)),
        AngleInit::Angles(a) => {
            if a.len() != stack.len() {
                return Err(Error::InvalidConfig(format!("{} angles for {} images", a.len(), stack.len())));
            }
            Ok((a.clone(), None))
        }
        AngleInit::BrightField(r) => {
            if r.images.len() != stack.len() {
                return Err(Error::InvalidConfig("calibration does not match the stack".into()));
            }
            Ok((r.angles(stack.params.wavelength), Some(r.radius)))
        }
    }
}

/// Sequential FPM with EPRY pupil recovery and optional in-loop SC calibration.
pub fn reconstruct(
    stack: &ImageStack,
    init: AngleInit<'_>,
    cfg: &SolverConfig,
) -> Result<(ReconstructionState, CalibrationResult)> {
    cfg.validate()?;
    stack.validate()?;
    if stack.is_empty() {
        return Err(Error::TooFewImages { needed: 1, got: 0 });
    }
    let params = stack.params;
    let lambda = params.wavelength;
    let m = params.patch_pixels;
    let (angles, bf_radius) = resolve_angles(stack, &init)?;
    for k in &angles {
        if !(k.na_norm(lambda) < 1.0) {
            return Err(Error::UnphysicalNa(k.na_norm(lambda)));
        }
    }
    let radius = cfg.pupil_radius.or(bf_radius).unwrap_or_else(|| pupil_radius_pixels(&params));
    let max_na = angles.iter().map(|k| k.na_norm(lambda)).fold(0.0, f64::max);
    let margin = if cfg.sc { cfg.sc_margin_px as f64 } else { 1.0 };
    let auto = object_grid_size(&params, radius, max_na + margin * params.spectrum_pixel_na());
    let n = cfg.object_size.map_or(auto, |s| s.max(m));
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("object grid {n} must be even")));
    }

    let mut order: Vec<usize> = (0..stack.len()).collect();
    if cfg.order == UpdateOrder::AscendingNa {
        order.sort_by(|&a, &b| angles[a].norm().total_cmp(&angles[b].norm()).then(a.cmp(&b)));
    }
    let initial_na: Vec<[f64; 2]> = angles.iter().map(|k| k.to_na(lambda)).collect();

    let pupil_reach = radius * params.spectrum_pixel();
    if angles.iter().all(|k| k.norm() > pupil_reach) {
        warn!("no brightfield image; the object has no DC anchor and its phase is only defined up to a ramp");
    }

    let mut state = ReconstructionState::initial(stack, angles, radius, n, order[0])?;
    let support = SupportIndex::new(&state.support);
    for s in &state.shifts {
        if !support.fits(*s, n) {
            return Err(Error::Coverage { grid: n, shift: (s[0] as f64).hypot(s[1] as f64), radius });
        }
    }
    let prior_family = match cfg.prior {
        PriorMode::None => None,
        PriorMode::Similarity => Some(PriorFit::Global(Family::Similarity)),
        PriorMode::AffinePerBoard => Some(PriorFit::PerBoard),
        PriorMode::Auto => match stack.geometry {
            Some(GeometryConfig::DomeBoards(_)) => Some(PriorFit::PerBoard),
            _ => None,
        },
    };
    let nominal_na: Vec<[f64; 2]> = stack.expected.iter().map(|k| k.to_na(lambda)).collect();

    let mut ws = Workspace {
        fft: Fft2::new(m),
        field: Array2::zeros((m, m)),
        patch: vec![Complex64::new(0.0, 0.0); support.pixels.len()],
        delta: vec![Complex64::new(0.0, 0.0); support.pixels.len()],
    };
    let amplitudes: Vec<Array2<f64>> = stack.images.iter().map(|im| im.mapv(|v| v.max(0.0).sqrt())).collect();
    let mut zero_streak = vec![0usize; stack.len()];
    let mut sc_moves = vec![0usize; stack.len()];
    let mut initial_cost: Option<f64> = None;
    let mut quiet = 0;
    let mut converged = false;

    for it in 1..=cfg.max_iterations {
        state.iteration = it;
        let sc_on = cfg.sc && it >= cfg.sc_start;
        let mut moved = 0.0;
        for &i in &order {
            // SC scores the current object before this image writes into it;
            // scoring after the update favors wherever the image was just fit.
            if sc_on && zero_streak[i] < cfg.sc_settle {
                let (offset, _) = sc_update(&state, &support, &stack.images[i], i, &ws.fft);
                if offset == [0, 0] {
                    zero_streak[i] += 1;
                } else {
                    zero_streak[i] = 0;
                    sc_moves[i] += 1;
                    // The forward model only resolves whole pixels, so a moved
                    // angle lands on the grid point it was scored at.
                    let before = state.angles[i];
                    state.shifts[i] = [state.shifts[i][0] + offset[0], state.shifts[i][1] + offset[1]];
                    state.angles[i] =
                        KVector::from_pixels([state.shifts[i][0] as f64, state.shifts[i][1] as f64], &params);
                    moved += state.angles[i].distance(before) / params.spectrum_pixel() * params.spectrum_pixel_na();
                }
            }
            update_image(&mut state, &support, &amplitudes[i], i, cfg, &mut ws);
        }
        if let Some(fam) = prior_family {
            let before: Vec<[f64; 2]> = state.angles.iter().map(|k| k.to_na(lambda)).collect();
            let projected = match fam {
                PriorFit::Global(f) => apply_prior(&before, &nominal_na, None, f),
                PriorFit::PerBoard => apply_prior(&before, &nominal_na, Some(&stack.boards), Family::Affine),
            };
            for (i, p) in projected.iter().enumerate() {
                let k = KVector::from_na(*p, lambda);
                let s = k.rounded_pixels(&params);
                if support.fits(s, n) && k.na_norm(lambda) < 1.0 {
                    moved += (p[0] - before[i][0]).hypot(p[1] - before[i][1]);
                    state.angles[i] = k;
                    state.shifts[i] = s;
                }
            }
        }
        let cost = total_cost(&state, &support, stack, &ws.fft);
        state.costs.push(cost);
        state.moved_na.push(moved / stack.len() as f64);
        debug!("iteration {it}: cost {cost:.6e}, mean move {:.5} NA", moved / stack.len() as f64);
        if !cost.is_finite() || initial_cost.is_some_and(|c0| cost > cfg.divergence_factor * c0) {
            let initial = initial_cost.unwrap_or(f64::NAN);
            return Err(Error::Divergence { iteration: it, cost, initial, snapshot: Box::new(state) });
        }
        let prev = state.costs.len().checked_sub(2).map(|j| state.costs[j]);
        if initial_cost.is_none() {
            initial_cost = Some(cost);
        }
        if let Some(p) = prev {
            let rel = (p - cost) / p.max(f64::MIN_POSITIVE);
            let sc_active = sc_on && zero_streak.iter().any(|z| *z < cfg.sc_settle);
            quiet = if rel < cfg.tolerance && !sc_active { quiet + 1 } else { 0 };
            if quiet >= cfg.patience {
                converged = true;
                info!("converged after {it} iterations");
                break;
            }
        }
    }
    let result = CalibrationResult {
        angles: state.angles.clone(),
        angles_na: state.angles.iter().map(|k| k.to_na(lambda)).collect(),
        initial_na,
        sc_moves,
        costs: state.costs.clone(),
        iterations: state.iteration,
        converged,
        radius,
    };
    Ok((state, result))
}

#[derive(Debug, Clone, Copy)]
enum PriorFit {
    Global(Family),
    PerBoard,
}

/// One sequential object/pupil update for image `i` at its current shift.
fn update_image(
    state: &mut ReconstructionState,
    support: &SupportIndex,
    amplitude: &Array2<f64>,
    i: usize,
    cfg: &SolverConfig,
    ws: &mut Workspace,
) {
    let n = state.object.nrows();
    let g = grid_scale(support.image_size, n);
    let shift = state.shifts[i];
    ws.field.fill(Complex64::new(0.0, 0.0));
    for (j, &(r, c)) in support.pixels.iter().enumerate() {
        let (or, oc) = support.object_index((r, c), shift, n);
        ws.patch[j] = state.object[[or, oc]] * g;
        ws.field[[r, c]] = ws.patch[j] * state.pupil[[r, c]];
    }
    ws.fft.inverse_from_band(&mut ws.field, support.reach as usize);
    for (z, &a) in ws.field.iter_mut().zip(amplitude.iter()) {
        let mag = z.norm_sqr().sqrt();
        *z = if mag > 0.0 { *z * (a / mag) } else { Complex64::new(a, 0.0) };
    }
    ws.fft.forward_to_band(&mut ws.field, support.reach as usize);
    let mut pmax = 0.0f64;
    let mut omax = 0.0f64;
    for (j, &(r, c)) in support.pixels.iter().enumerate() {
        ws.delta[j] = ws.field[[r, c]] - ws.patch[j] * state.pupil[[r, c]];
        pmax = pmax.max(state.pupil[[r, c]].norm_sqr());
        omax = omax.max(ws.patch[j].norm_sqr());
    }
    for (j, &(r, c)) in support.pixels.iter().enumerate() {
        let p = state.pupil[[r, c]];
        let o = ws.patch[j];
        let d = ws.delta[j];
        if pmax > 0.0 {
            let (or, oc) = support.object_index((r, c), shift, n);
            state.object[[or, oc]] += cfg.alpha * p.conj() / pmax * d / g;
        }
        if cfg.pupil_update && omax > 0.0 {
            state.pupil[[r, c]] += cfg.beta * o.conj() / omax * d;
        }
    }
}

/// Scores the nine neighbouring shifts of image `i` against the current
/// object and pupil; returns the winning offset and its cost.
pub fn sc_update(
    state: &ReconstructionState,
    support: &SupportIndex,
    intensity: &Array2<f64>,
    i: usize,
    fft: &Fft2,
) -> ([i64; 2], f64) {
    let n = state.object.nrows();
    let s = state.shifts[i];
    let lambda = state.params.wavelength;
    let costs: Vec<f64> = SC_OFFSETS
        .par_iter()
        .map(|o| {
            let t = [s[0] + o[0], s[1] + o[1]];
            let k = if *o == [0, 0] {
                state.angles[i]
            } else {
                KVector::from_pixels([t[0] as f64, t[1] as f64], &state.params)
            };
            if !(k.na_norm(lambda) < 1.0) || !support.fits(t, n) {
                return f64::INFINITY;
            }
            intensity_cost(intensity, &state.object, &state.pupil, support, t, fft)
        })
        .collect();
    let mut best = 0;
    for j in 1..costs.len() {
        if costs[j] < costs[best] {
            best = j;
        }
    }
    (SC_OFFSETS[best], costs[best])
}

/// `Σ_i ‖I_i - |ψ_i|²‖²` at the current state.
pub fn total_cost(state: &ReconstructionState, support: &SupportIndex, stack: &ImageStack, fft: &Fft2) -> f64 {
    stack
        .images
        .iter()
        .zip(&state.shifts)
        .map(|(img, s)| intensity_cost(img, &state.object, &state.pupil, support, *s, fft))
        .sum()
}
