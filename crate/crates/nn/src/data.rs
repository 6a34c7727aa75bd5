//! Dataset loading, preprocessing to 32×32 in `[-1, 1]`, and pseudo-labeling.
//!
//! Expected layout under the data root:
//!
//! ```text
//! mnist/train-images-idx3-ubyte   mnist/train-labels-idx1-ubyte
//! mnist/t10k-images-idx3-ubyte    mnist/t10k-labels-idx1-ubyte
//! usps/usps                       usps/usps.t          (LIBSVM text)
//! svhn/train_32x32.mat            svhn/test_32x32.mat
//! mnist_m/train-images-idx4-ubyte mnist_m/train-labels-idx1-ubyte
//! mnist_m/test-images-idx4-ubyte  mnist_m/test-labels-idx1-ubyte
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use plr_core::config::DatasetId;
use plr_core::formats::{idx, svhn, usps, PseudoLabelFile, RawImages};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};
use crate::models::{predict, Predictor};
use crate::rng;

pub const SIDE: i64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Images as an `N×C×32×32` float tensor in `[-1, 1]` with integer labels.
#[derive(Debug)]
pub struct LabeledDataset {
    pub name: DatasetId,
    pub split: Split,
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn from_raw(
        name: DatasetId,
        split: Split,
        raw: &RawImages,
        channels: u8,
        classes: usize,
    ) -> Result<Self> {
        let images = preprocess(raw, channels)?;
        let labels: Vec<usize> = raw.labels.iter().map(|&l| l as usize).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("{name} label {bad} outside [0, {classes})")));
        }
        Ok(Self {
            name,
            split,
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.images.size()[1] as usize
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let idx = rng::labels_tensor(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (self.images.index_select(0, &idx), labels)
    }

    /// A copy holding only the first `limit` samples.
    pub fn head(&self, limit: usize) -> Self {
        let n = limit.min(self.len());
        Self {
            name: self.name,
            split: self.split,
            images: self.images.narrow(0, 0, n as i64).copy(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        }
    }
}

fn expected_files(id: DatasetId, split: Split) -> Vec<&'static str> {
    match (id, split) {
        (DatasetId::Mnist, Split::Train) => vec!["train-images-idx3-ubyte", "train-labels-idx1-ubyte"],
        (DatasetId::Mnist, Split::Test) => vec!["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"],
        (DatasetId::Usps, Split::Train) => vec!["usps"],
        (DatasetId::Usps, Split::Test) => vec!["usps.t"],
        (DatasetId::Svhn, Split::Train) => vec!["train_32x32.mat"],
        (DatasetId::Svhn, Split::Test) => vec!["test_32x32.mat"],
        (DatasetId::MnistM, Split::Train) => vec!["train-images-idx4-ubyte", "train-labels-idx1-ubyte"],
        (DatasetId::MnistM, Split::Test) => vec!["test-images-idx4-ubyte", "test-labels-idx1-ubyte"],
    }
}

/// Paths a split is read from.
pub fn dataset_paths(root: &Path, id: DatasetId, split: Split) -> Vec<PathBuf> {
    expected_files(id, split)
        .into_iter()
        .map(|f| root.join(id.as_str()).join(f))
        .collect()
}

/// True when every file of the split exists.
pub fn dataset_available(root: &Path, id: DatasetId, split: Split) -> bool {
    dataset_paths(root, id, split).iter().all(|p| p.is_file())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(plr_core::Error::MissingFile {
            path: path.to_path_buf(),
            hint: "place the dataset there (see scripts/fetch_data.sh) or point PLR_DATA_ROOT at its parent".into(),
        }
        .into());
    }
    std::fs::read(path).map_err(|e| plr_core::Error::io(path, e).into())
}

/// Decodes a split without preprocessing.
pub fn load_raw(root: &Path, id: DatasetId, split: Split) -> Result<RawImages> {
    let paths = dataset_paths(root, id, split);
    let raw = match id {
        DatasetId::Mnist | DatasetId::MnistM => {
            idx::images_with_labels(&read(&paths[0])?, &read(&paths[1])?)?
        }
        DatasetId::Usps => {
            let bytes = read(&paths[0])?;
            let text = String::from_utf8(bytes)
                .map_err(|_| plr_core::Error::format("usps libsvm", "file is not UTF-8"))?;
            usps::parse(&text)?
        }
        DatasetId::Svhn => svhn::parse(&read(&paths[0])?)?,
    };
    raw.check()?;
    Ok(raw)
}

/// Loads a split, resized to 32×32, scaled to `[-1, 1]`, with `channels` channels.
pub fn load_dataset(root: &Path, id: DatasetId, split: Split, channels: u8) -> Result<LabeledDataset> {
    let raw = load_raw(root, id, split)?;
    LabeledDataset::from_raw(id, split, &raw, channels, 10)
}

const CHUNK: usize = 4096;

/// Scales to `[-1, 1]`, resizes bilinearly to 32×32 and harmonizes channels.
///
/// Grayscale is replicated when three channels are requested; colour is
/// converted to luma (ITU-R 601 weights) when one is requested.
pub fn preprocess(raw: &RawImages, channels: u8) -> Result<Tensor> {
    raw.check()?;
    if channels != 1 && channels != 3 {
        return Err(Error::invalid(format!("channels must be 1 or 3, got {channels}")));
    }
    if raw.channels != 1 && raw.channels != 3 {
        return Err(Error::invalid(format!("cannot harmonize {} channels", raw.channels)));
    }
    let (lo, hi) = raw.range;
    if !(hi > lo) {
        return Err(Error::invalid("degenerate pixel range"));
    }
    let dims = [raw.channels as i64, raw.height as i64, raw.width as i64];
    let per = raw.image_len();
    let mut parts = Vec::new();
    for start in (0..raw.count).step_by(CHUNK) {
        let n = CHUNK.min(raw.count - start);
        let chunk = Tensor::from_slice(&raw.pixels[start * per..(start + n) * per])
            .view([n as i64, dims[0], dims[1], dims[2]]);
        let scaled = (chunk - lo as f64) * (2.0 / (hi - lo) as f64) - 1.0;
        let resized = if raw.height as i64 == SIDE && raw.width as i64 == SIDE {
            scaled
        } else {
            scaled.upsample_bilinear2d([SIDE, SIDE], false, None, None)
        };
        let harmonized = match (raw.channels, channels) {
            (1, 3) => resized.expand([-1, 3, SIDE, SIDE], false).contiguous(),
            (3, 1) => {
                let w = Tensor::from_slice(&[0.299f32, 0.587, 0.114]).view([1, 3, 1, 1]);
                (resized * w).sum_dim_intlist([1i64].as_slice(), true, Kind::Float)
            }
            _ => resized,
        };
        parts.push(harmonized.clamp(-1.0, 1.0));
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros([0, channels as i64, SIDE, SIDE], (Kind::Float, tch::Device::Cpu)));
    }
    Ok(Tensor::cat(&parts, 0))
}

/// Target images with labels inferred by a classifier.
///
/// The ground-truth labels are kept only for measurement and are reachable
/// through [`PseudoLabeledDataset::true_labels_for_evaluation`].
#[derive(Debug)]
pub struct PseudoLabeledDataset {
    pub images: Tensor,
    pub pseudo_labels: Vec<usize>,
    true_labels: Vec<usize>,
    pub provenance: String,
    pub classes: usize,
}

impl PseudoLabeledDataset {
    pub fn new(data: &LabeledDataset, pseudo_labels: Vec<usize>, provenance: impl Into<String>) -> Result<Self> {
        if pseudo_labels.len() != data.len() {
            return Err(Error::invalid(format!(
                "{} pseudo-labels for {} images",
                pseudo_labels.len(),
                data.len()
            )));
        }
        if let Some(&bad) = pseudo_labels.iter().find(|&&l| l >= data.classes) {
            return Err(Error::invalid(format!("pseudo-label {bad} outside [0, {})", data.classes)));
        }
        Ok(Self {
            images: data.images.shallow_clone(),
            pseudo_labels,
            true_labels: data.labels.clone(),
            provenance: provenance.into(),
            classes: data.classes,
        })
    }

    pub fn len(&self) -> usize {
        self.pseudo_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudo_labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.images.size()[1] as usize
    }

    pub fn true_labels_for_evaluation(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let idx = rng::labels_tensor(indices);
        let labels = indices.iter().map(|&i| self.pseudo_labels[i]).collect();
        (self.images.index_select(0, &idx), labels)
    }

    pub fn sidecar(&self) -> PseudoLabelFile {
        PseudoLabelFile {
            provenance: self.provenance.clone(),
            labels: self.pseudo_labels.clone(),
        }
    }

    pub fn from_sidecar(data: &LabeledDataset, file: PseudoLabelFile) -> Result<Self> {
        Self::new(data, file.labels, file.provenance)
    }

    /// Replaces the pseudo-labels, keeping images and provenance.
    pub fn relabeled(&self, labels: Vec<usize>, provenance: impl Into<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::invalid("relabeling must keep the sample count"));
        }
        Ok(Self {
            images: self.images.shallow_clone(),
            pseudo_labels: labels,
            true_labels: self.true_labels.clone(),
            provenance: provenance.into(),
            classes: self.classes,
        })
    }
}

/// Labels every image with the classifier's argmax (ties go to the lowest index).
pub fn assign_pseudo_labels(
    classifier: &dyn Predictor,
    data: &LabeledDataset,
    provenance: impl Into<String>,
    batch_size: usize,
) -> Result<PseudoLabeledDataset> {
    if classifier.channels() != data.channels() {
        return Err(Error::invalid(format!(
            "classifier expects {} channels, data has {}",
            classifier.channels(),
            data.channels()
        )));
    }
    if classifier.classes() != data.classes {
        return Err(Error::invalid(format!(
            "classifier has {} outputs, data has {} classes",
            classifier.classes(),
            data.classes
        )));
    }
    let labels = predict(classifier, &data.images, batch_size);
    PseudoLabeledDataset::new(data, labels, provenance)
}
