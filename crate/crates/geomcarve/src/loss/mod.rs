//! Training objectives with analytic gradients.
//!
//! Shared shape conventions: a loss compares a prediction grid against a
//! ground-truth grid of the same shape under a per-pixel scalar weight map
//! and a validity mask. Scalar grids behave as one-channel vector grids; the
//! per-pixel residual magnitude is the L2 norm over channels (plain absolute
//! value for scalars) unless a loss documents otherwise. Values are means
//! over contributing elements, so loss magnitudes are comparable across
//! image sizes.
//!
//! Each loss returns a [`LossReport`] carrying the value, the number of
//! contributing elements and analytic gradients with respect to the
//! prediction-side inputs. Gradients of the alignment-invariant losses treat
//! the solved alignment parameters as constants (the solve is not
//! differentiated through). [`gradcheck`] verifies every analytic gradient
//! against central finite differences on small random instances.

mod aligned;
mod composite;
mod gradcheck;
mod pointwise;

pub use aligned::{loss_camera, loss_consistency, loss_frame_aligned, loss_sphere_aligned};
pub use composite::{
    builtin_recipe, loss_composite, recipe_from_json, recipe_ours, recipe_vggt, ComponentReport,
    CompositeReport, LossKind, LossRecipe, LossTarget, RecipeComponent, WeightScheme,
};
pub use gradcheck::{gradcheck, GradCheckConfig, GradLoss};
pub use pointwise::{
    loss_confidence_weighted, loss_reg, loss_spatial_gradient, loss_temporal_gradient,
    weight_inverse_depth, ConfidenceConfig, DEFAULT_DEPTH_CLAMP,
};

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidMask, VecGrid};

/// Nonnegative per-pixel scalar weights. Confidence maps reuse this type;
/// positivity, where required, is checked by the consuming loss.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    grid: ScalarGrid,
}

impl WeightMap {
    /// Wraps a grid, rejecting negative or NaN entries. Infinite entries are
    /// rejected too: a weight that large swamps every reduction.
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        if let Some(v) = grid.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!("weight map entry {v} (must be finite and >= 0)")));
        }
        Ok(Self { grid })
    }

    pub fn uniform(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(ScalarGrid::filled(height, width, value))
    }

    pub fn unit(height: usize, width: usize) -> Self {
        Self { grid: ScalarGrid::filled(height, width, 1.0) }
    }

    #[inline]
    pub fn get(&self, p: usize) -> f64 {
        self.grid.values[p]
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }
}

/// Value, element count and gradients of one loss evaluation.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub name: &'static str,
    pub value: f64,
    /// Number of elements the mean ran over (pixels, difference terms,
    /// frames, or regions, depending on the loss).
    pub element_count: usize,
    pub gradients: Option<LossGradients>,
}

/// Analytic gradients, laid out to match the prediction-side inputs.
/// Grid gradients always come back as [`VecGrid`]s whose channel count
/// matches the prediction (one channel for scalar predictions); camera
/// gradients use the 9-vector layout [t(3), quaternion(4), fov(2)].
#[derive(Clone, Debug)]
pub enum LossGradients {
    /// d value / d prediction for single-grid losses.
    Pred(VecGrid),
    /// Per-frame d value / d prediction for sequence losses.
    PredSeq(Vec<VecGrid>),
    /// Confidence-weighted loss: gradients for the prediction and the
    /// confidence map.
    PredAndConfidence { pred: VecGrid, confidence: ScalarGrid },
    /// Camera loss: one 9-vector per frame.
    Cameras(Vec<[f64; 9]>),
    /// Consistency loss: gradients for the point map, the depth map and the
    /// camera 9-vector.
    Consistency { points: VecGrid, depth: ScalarGrid, camera: [f64; 9] },
}

pub(crate) fn require_valid_elements(count: usize, what: &str) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidInput(format!("{what}: no valid elements under the mask")));
    }
    Ok(())
}

pub(crate) fn check_weight_shape(w: &WeightMap, mask: &ValidMask, what: &str) -> Result<()> {
    if w.height() != mask.height || w.width() != mask.width {
        return Err(Error::ShapeMismatch(format!(
            "{what}: weights {}x{} vs mask {}x{}",
            w.height(),
            w.width(),
            mask.height,
            mask.width
        )));
    }
    Ok(())
}
