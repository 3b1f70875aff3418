//! Composite training losses assembled from the individual supervision terms
//! by named, serializable recipes, with a per-sequence scale pre-alignment.

use serde::Deserialize;

use crate::align::{sample_sphere_regions, solve_sequence_scale};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarGrid, ValidMask};
use crate::sample::SequenceSample;

use super::aligned::{loss_camera, loss_consistency, loss_frame_aligned, loss_sphere_aligned};
use super::pointwise::{
    loss_confidence_weighted, loss_reg, loss_spatial_gradient, loss_temporal_gradient,
    weight_inverse_depth, ConfidenceConfig, DEFAULT_DEPTH_CLAMP,
};
use super::{LossReport, WeightMap};

/// Which predicted map a component supervises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTarget {
    Depth,
    Points,
}

/// Where a component's per-pixel weights come from: all ones, the reciprocal
/// of clamped ground-truth depth, or the prediction's learnable confidence
/// map for the targeted head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    Unit,
    InverseDepth,
    Confidence,
}

fn default_alpha() -> f64 {
    0.2
}

fn default_regions() -> usize {
    16
}

fn default_weight() -> f64 {
    1.0
}

/// One supervision term in a recipe.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Reg {
        target: LossTarget,
        #[serde(default)]
        weights: WeightScheme,
    },
    SpatialGradient {
        target: LossTarget,
        #[serde(default)]
        weights: WeightScheme,
    },
    TemporalGradient {
        target: LossTarget,
        #[serde(default)]
        weights: WeightScheme,
    },
    ConfidenceWeighted {
        target: LossTarget,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    FrameAligned {
        target: LossTarget,
        #[serde(default)]
        weights: WeightScheme,
    },
    SphereAligned {
        target: LossTarget,
        #[serde(default)]
        weights: WeightScheme,
        #[serde(default = "default_regions")]
        regions: usize,
        #[serde(default)]
        radius_frac: Option<f64>,
    },
    Camera,
    Consistency,
}

/// A supervision term with its contribution weight in the total.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct RecipeComponent {
    pub kind: LossKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

/// A named list of weighted supervision terms. Deserializable from JSON so
/// custom recipes can be loaded from files.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct LossRecipe {
    pub name: String,
    pub components: Vec<RecipeComponent>,
}

/// One evaluated component of a composite loss.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub name: String,
    pub weight: f64,
    pub value: f64,
    pub weighted: f64,
    pub element_count: usize,
}

/// The itemized result of [`loss_composite`]: the scale applied before any
/// component ran, each component's value, and the weighted total.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeReport {
    pub recipe: String,
    pub pre_scale: f64,
    pub components: Vec<ComponentReport>,
    pub total: f64,
}

/// The confidence-driven recipe: confidence-weighted regression plus a
/// confidence-weighted spatial-gradient term on both heads, and the camera
/// loss scaled by 5.
pub fn recipe_vggt() -> LossRecipe {
    let reg = |target| RecipeComponent {
        kind: LossKind::ConfidenceWeighted { target, alpha: default_alpha() },
        weight: 1.0,
    };
    let sg = |target| RecipeComponent {
        kind: LossKind::SpatialGradient { target, weights: WeightScheme::Confidence },
        weight: 1.0,
    };
    LossRecipe {
        name: "vggt".into(),
        components: vec![
            reg(LossTarget::Depth),
            sg(LossTarget::Depth),
            reg(LossTarget::Points),
            sg(LossTarget::Points),
            RecipeComponent { kind: LossKind::Camera, weight: 5.0 },
        ],
    }
}

/// The consistency-driven recipe: inverse-depth-weighted regression and
/// frame-aligned regression on both heads, the depth/point consistency term,
/// and the camera loss scaled by 5.
pub fn recipe_ours() -> LossRecipe {
    let reg = |target| RecipeComponent {
        kind: LossKind::Reg { target, weights: WeightScheme::InverseDepth },
        weight: 1.0,
    };
    let fa = |target| RecipeComponent {
        kind: LossKind::FrameAligned { target, weights: WeightScheme::InverseDepth },
        weight: 1.0,
    };
    LossRecipe {
        name: "ours".into(),
        components: vec![
            reg(LossTarget::Depth),
            reg(LossTarget::Points),
            fa(LossTarget::Depth),
            fa(LossTarget::Points),
            RecipeComponent { kind: LossKind::Consistency, weight: 1.0 },
            RecipeComponent { kind: LossKind::Camera, weight: 5.0 },
        ],
    }
}

/// Looks up a registered recipe by name.
pub fn builtin_recipe(name: &str) -> Result<LossRecipe> {
    match name {
        "vggt" => Ok(recipe_vggt()),
        "ours" => Ok(recipe_ours()),
        other => Err(Error::UnknownRecipe(other.to_string())),
    }
}

/// Parses a recipe from JSON text and validates it.
pub fn recipe_from_json(text: &str) -> Result<LossRecipe> {
    let recipe: LossRecipe =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("recipe JSON: {e}")))?;
    validate_recipe(&recipe)?;
    Ok(recipe)
}

fn validate_recipe(recipe: &LossRecipe) -> Result<()> {
    if recipe.name.is_empty() {
        return Err(Error::InvalidInput("recipe name must not be empty".into()));
    }
    if recipe.components.is_empty() {
        return Err(Error::InvalidInput(format!(
            "recipe '{}' has no components",
            recipe.name
        )));
    }
    for comp in &recipe.components {
        if !(comp.weight.is_finite() && comp.weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "recipe '{}': component weight {} must be finite and non-negative",
                recipe.name, comp.weight
            )));
        }
        match &comp.kind {
            LossKind::ConfidenceWeighted { alpha, .. } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "recipe '{}': alpha {} must be positive and finite",
                        recipe.name, alpha
                    )));
                }
            }
            LossKind::SphereAligned { regions, radius_frac, .. } => {
                if *regions == 0 {
                    return Err(Error::InvalidInput(format!(
                        "recipe '{}': sphere-aligned component needs at least one region",
                        recipe.name
                    )));
                }
                if let Some(f) = radius_frac {
                    if !(f.is_finite() && *f > 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "recipe '{}': radius fraction {} must be positive and finite",
                            recipe.name, f
                        )));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn target_label(t: LossTarget) -> &'static str {
    match t {
        LossTarget::Depth => "depth",
        LossTarget::Points => "points",
    }
}

fn scheme_label(s: WeightScheme) -> &'static str {
    match s {
        WeightScheme::Unit => "unit",
        WeightScheme::InverseDepth => "w_inv",
        WeightScheme::Confidence => "conf",
    }
}

/// The prediction's confidence map for one head, as loss weights.
fn confidence_weights(
    pred: &SequenceSample,
    target: LossTarget,
    what: &str,
) -> Result<Vec<WeightMap>> {
    pred.frames()
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let conf: &Option<ScalarGrid> = match target {
                LossTarget::Depth => &f.conf_depth,
                LossTarget::Points => &f.conf_point,
            };
            match conf {
                Some(grid) => WeightMap::new(grid.clone()),
                None => Err(Error::InvalidInput(format!(
                    "{what} needs a {} confidence map, but the prediction carries none (frame {t})",
                    target_label(target)
                ))),
            }
        })
        .collect()
}

fn scheme_weights(
    scheme: WeightScheme,
    target: LossTarget,
    pred: &SequenceSample,
    gt: &SequenceSample,
    masks: &[ValidMask],
    what: &str,
) -> Result<Vec<WeightMap>> {
    match scheme {
        WeightScheme::Unit => Ok(vec![WeightMap::unit(pred.height(), pred.width()); pred.len()]),
        WeightScheme::InverseDepth => gt
            .frames()
            .iter()
            .zip(masks)
            .map(|(f, m)| weight_inverse_depth(&f.depth, m, DEFAULT_DEPTH_CLAMP))
            .collect(),
        WeightScheme::Confidence => confidence_weights(pred, target, what),
    }
}

/// Pools per-frame reports into one mean weighted by element count, matching
/// a single mean taken over every element of the sequence.
fn pool_frames<G: Grid>(
    pred: &[&G],
    gt: &[&G],
    weights: &[WeightMap],
    masks: &[ValidMask],
    f: impl Fn(&G, &G, &WeightMap, &ValidMask) -> Result<LossReport>,
) -> Result<(f64, usize)> {
    let mut weighted = 0.0;
    let mut count = 0usize;
    for i in 0..pred.len() {
        let rep = f(pred[i], gt[i], &weights[i], &masks[i])?;
        weighted += rep.value * rep.element_count as f64;
        count += rep.element_count;
    }
    Ok((weighted / count as f64, count))
}

fn depth_grids(seq: &SequenceSample) -> Vec<&ScalarGrid> {
    seq.frames().iter().map(|f| &f.depth).collect()
}

fn point_grids(seq: &SequenceSample) -> Vec<&crate::grid::VecGrid> {
    seq.frames().iter().map(|f| &f.points).collect()
}

fn eval_component(
    kind: &LossKind,
    aligned: &SequenceSample,
    gt: &SequenceSample,
    masks: &[ValidMask],
    seed: u64,
) -> Result<(String, f64, usize)> {
    match kind {
        LossKind::Reg { target, weights } => {
            let name = format!("reg({}, {})", target_label(*target), scheme_label(*weights));
            let w = scheme_weights(*weights, *target, aligned, gt, masks, &name)?;
            let (value, count) = match target {
                LossTarget::Depth => {
                    pool_frames(&depth_grids(aligned), &depth_grids(gt), &w, masks, |a, b, w, m| {
                        loss_reg(a, b, w, m)
                    })?
                }
                LossTarget::Points => {
                    pool_frames(&point_grids(aligned), &point_grids(gt), &w, masks, |a, b, w, m| {
                        loss_reg(a, b, w, m)
                    })?
                }
            };
            Ok((name, value, count))
        }
        LossKind::SpatialGradient { target, weights } => {
            let name = format!("sg({}, {})", target_label(*target), scheme_label(*weights));
            let w = scheme_weights(*weights, *target, aligned, gt, masks, &name)?;
            let (value, count) = match target {
                LossTarget::Depth => {
                    pool_frames(&depth_grids(aligned), &depth_grids(gt), &w, masks, |a, b, w, m| {
                        loss_spatial_gradient(a, b, w, m)
                    })?
                }
                LossTarget::Points => {
                    pool_frames(&point_grids(aligned), &point_grids(gt), &w, masks, |a, b, w, m| {
                        loss_spatial_gradient(a, b, w, m)
                    })?
                }
            };
            Ok((name, value, count))
        }
        LossKind::TemporalGradient { target, weights } => {
            let name = format!("tg({}, {})", target_label(*target), scheme_label(*weights));
            let w = scheme_weights(*weights, *target, aligned, gt, masks, &name)?;
            let rep = match target {
                LossTarget::Depth => {
                    loss_temporal_gradient(&depth_grids(aligned), &depth_grids(gt), &w, masks)?
                }
                LossTarget::Points => {
                    loss_temporal_gradient(&point_grids(aligned), &point_grids(gt), &w, masks)?
                }
            };
            Ok((name, rep.value, rep.element_count))
        }
        LossKind::ConfidenceWeighted { target, alpha } => {
            let name = format!("conf_weighted({})", target_label(*target));
            let conf = confidence_weights(aligned, *target, &name)?;
            let cfg = ConfidenceConfig { alpha: *alpha };
            let (value, count) = match target {
                LossTarget::Depth => pool_frames(
                    &depth_grids(aligned),
                    &depth_grids(gt),
                    &conf,
                    masks,
                    |a, b, w, m| loss_confidence_weighted(a, b, w, m, &cfg),
                )?,
                LossTarget::Points => pool_frames(
                    &point_grids(aligned),
                    &point_grids(gt),
                    &conf,
                    masks,
                    |a, b, w, m| loss_confidence_weighted(a, b, w, m, &cfg),
                )?,
            };
            Ok((name, value, count))
        }
        LossKind::FrameAligned { target, weights } => {
            let name =
                format!("frame_aligned({}, {})", target_label(*target), scheme_label(*weights));
            let w = scheme_weights(*weights, *target, aligned, gt, masks, &name)?;
            let rep = match target {
                LossTarget::Depth => {
                    loss_frame_aligned(&depth_grids(aligned), &depth_grids(gt), &w, masks)?
                }
                LossTarget::Points => {
                    loss_frame_aligned(&point_grids(aligned), &point_grids(gt), &w, masks)?
                }
            };
            Ok((name, rep.value, rep.element_count))
        }
        LossKind::SphereAligned { target, weights, regions, radius_frac } => {
            let name =
                format!("sphere_aligned({}, {})", target_label(*target), scheme_label(*weights));
            let w = scheme_weights(*weights, *target, aligned, gt, masks, &name)?;
            let mut weighted = 0.0;
            let mut count = 0usize;
            for (t, (frame_gt, mask)) in gt.frames().iter().zip(masks).enumerate() {
                let spheres = sample_sphere_regions(
                    &frame_gt.points,
                    mask,
                    *regions,
                    *radius_frac,
                    seed.wrapping_add(t as u64),
                )?;
                let rep = match target {
                    LossTarget::Depth => loss_sphere_aligned(
                        &aligned.frames()[t].depth,
                        &frame_gt.depth,
                        &w[t],
                        mask,
                        &spheres,
                    )?,
                    LossTarget::Points => loss_sphere_aligned(
                        &aligned.frames()[t].points,
                        &frame_gt.points,
                        &w[t],
                        mask,
                        &spheres,
                    )?,
                };
                weighted += rep.value * rep.element_count as f64;
                count += rep.element_count;
            }
            Ok((name, weighted / count as f64, count))
        }
        LossKind::Camera => {
            let rep = loss_camera(&aligned.cameras(), &gt.cameras())?;
            Ok(("camera".into(), rep.value, rep.element_count))
        }
        LossKind::Consistency => {
            let mut weighted = 0.0;
            let mut count = 0usize;
            for (f, m) in aligned.frames().iter().zip(masks) {
                let rep = loss_consistency(&f.points, &f.depth, &f.camera, m)?;
                weighted += rep.value * rep.element_count as f64;
                count += rep.element_count;
            }
            Ok(("consistency".into(), weighted / count as f64, count))
        }
    }
}

/// Evaluates a recipe on a prediction/ground-truth sequence pair.
///
/// The prediction's depth, points, and camera translations are first aligned
/// to ground truth by one per-sequence scale (predictions of feed-forward
/// geometry models are scale-ambiguous), then every component is evaluated on
/// the aligned prediction and the weighted component values are summed.
/// Components whose mean runs over pixels pool all frames into one mean;
/// frame-aligned, sphere-aligned and camera components average over their own
/// unit (frames or regions) as defined by the individual loss. `seed` drives
/// the sphere-region sampling of any sphere-aligned component.
pub fn loss_composite(
    pred: &SequenceSample,
    gt: &SequenceSample,
    recipe: &LossRecipe,
    seed: u64,
) -> Result<CompositeReport> {
    validate_recipe(recipe)?;
    let masks = pred.shared_masks(gt)?;
    let unit = vec![WeightMap::unit(pred.height(), pred.width()); pred.len()];
    let pre_scale = solve_sequence_scale(pred, gt, &unit)?;
    let aligned = pred.scaled(pre_scale);

    let mut components = Vec::with_capacity(recipe.components.len());
    let mut total = 0.0;
    for comp in &recipe.components {
        let (name, value, element_count) = eval_component(&comp.kind, &aligned, gt, &masks, seed)?;
        let weighted = comp.weight * value;
        total += weighted;
        components.push(ComponentReport {
            name,
            weight: comp.weight,
            value,
            weighted,
            element_count,
        });
    }
    Ok(CompositeReport { recipe: recipe.name.clone(), pre_scale, components, total })
}
