//! Per-frame and per-sequence bundles of prediction or ground-truth data.

use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidMask, VecGrid};

/// One frame: depth map, world-space point map, validity mask, camera, and
/// optional confidence maps for the depth and point heads.
#[derive(Clone, Debug)]
pub struct FrameSample {
    pub depth: ScalarGrid,
    pub points: VecGrid,
    pub mask: ValidMask,
    pub camera: CameraParams,
    pub conf_depth: Option<ScalarGrid>,
    pub conf_point: Option<ScalarGrid>,
}

impl FrameSample {
    fn check(&self) -> Result<()> {
        let (h, w) = (self.depth.height, self.depth.width);
        let same = |gh: usize, gw: usize, what: &str| -> Result<()> {
            if gh != h || gw != w {
                return Err(Error::ShapeMismatch(format!(
                    "frame {what} is {gh}x{gw}, depth is {h}x{w}"
                )));
            }
            Ok(())
        };
        same(self.points.height, self.points.width, "point map")?;
        if self.points.channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "point map must have 3 channels, got {}",
                self.points.channels
            )));
        }
        same(self.mask.height, self.mask.width, "mask")?;
        if let Some(c) = &self.conf_depth {
            same(c.height, c.width, "depth confidence")?;
        }
        if let Some(c) = &self.conf_point {
            same(c.height, c.width, "point confidence")?;
        }
        Ok(())
    }
}

/// An ordered, nonempty run of frames sharing one image size.
#[derive(Clone, Debug)]
pub struct SequenceSample {
    frames: Vec<FrameSample>,
}

impl SequenceSample {
    pub fn new(frames: Vec<FrameSample>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("sequence must contain at least one frame".into()));
        }
        let (h, w) = (frames[0].depth.height, frames[0].depth.width);
        for (i, f) in frames.iter().enumerate() {
            f.check()?;
            if f.depth.height != h || f.depth.width != w {
                return Err(Error::ShapeMismatch(format!(
                    "frame {i} is {}x{}, frame 0 is {h}x{w}",
                    f.depth.height, f.depth.width
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[FrameSample] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty sequences
    }

    pub fn height(&self) -> usize {
        self.frames[0].depth.height
    }

    pub fn width(&self) -> usize {
        self.frames[0].depth.width
    }

    pub fn cameras(&self) -> Vec<CameraParams> {
        self.frames.iter().map(|f| f.camera.clone()).collect()
    }

    /// Multiplies depth, points and camera translation by `scale`, the joint
    /// rescaling under which a consistent scene stays consistent. Field of
    /// view, rotation, masks and confidences are untouched.
    pub fn scaled(&self, scale: f64) -> SequenceSample {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let mut out = f.clone();
                for v in &mut out.depth.values {
                    *v *= scale;
                }
                for v in &mut out.points.values {
                    *v *= scale;
                }
                for t in &mut out.camera.translation {
                    *t *= scale;
                }
                out
            })
            .collect();
        SequenceSample { frames }
    }

    /// Per-frame masks intersected with another sequence's masks.
    pub fn shared_masks(&self, other: &SequenceSample) -> Result<Vec<ValidMask>> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "sequence length {} vs {}",
                self.len(),
                other.len()
            )));
        }
        self.frames
            .iter()
            .zip(other.frames.iter())
            .map(|(a, b)| a.mask.intersect(&b.mask))
            .collect()
    }
}
