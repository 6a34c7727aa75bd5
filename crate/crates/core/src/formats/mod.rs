//! On-disk formats: dataset decoders and the artifacts the pipeline writes.

pub mod checkpoint;
pub mod idx;
pub mod metrics;
pub mod report;
pub mod sidecar;
pub mod svhn;
pub mod usps;

pub use checkpoint::{Checkpoint, Manifest, Role, TensorRecord};
pub use metrics::{MetricsLog, MetricsRow};
pub use report::{EvalReport, MetricKind};
pub use sidecar::PseudoLabelFile;

/// Decoded images in NCHW layout with their labels, before any resizing.
///
/// `range` is the nominal pixel range of the source encoding, e.g. `(0, 255)`
/// for byte images.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImages {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
    pub range: (f32, f32),
}

impl RawImages {
    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn check(&self) -> crate::Result<()> {
        if self.pixels.len() != self.count * self.image_len() || self.labels.len() != self.count {
            return Err(crate::Error::invalid(format!(
                "image buffer holds {} values and {} labels for {} images of {}x{}x{}",
                self.pixels.len(),
                self.labels.len(),
                self.count,
                self.channels,
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    /// Keeps the first `limit` images.
    pub fn truncate(&mut self, limit: usize) {
        if limit < self.count {
            self.pixels.truncate(limit * self.image_len());
            self.labels.truncate(limit);
            self.count = limit;
        }
    }
}
