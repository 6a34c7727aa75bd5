#![allow(dead_code)]

use std::path::{Path, PathBuf};

use plr_core::formats::idx::{encode, IdxArray};
use plr_core::ExperimentConfig;

/// Writes a small MNIST-layout dataset: class `k` lights up a vertical band
/// whose position depends on `k`, plus deterministic speckle.
pub fn write_digits(root: &Path, train: usize, test: usize) {
    let dir = root.join("mnist");
    std::fs::create_dir_all(&dir).unwrap();
    for (prefix, n, salt) in [("train", train, 1u32), ("t10k", test, 2)] {
        let mut state = 0x9e37_79b9u32 ^ salt;
        let mut pixels = Vec::with_capacity(n * 784);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = (i * 7 + salt as usize) % 10;
            labels.push(k as u8);
            for _y in 0..28 {
                for x in 0..28 {
                    state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                    let speckle = (state >> 27) as u8;
                    let lit = x / 3 == k || x / 3 == k + 1;
                    pixels.push(if lit { 220 + speckle } else { speckle });
                }
            }
        }
        let images = IdxArray {
            dims: vec![n, 28, 28],
            data: pixels,
        };
        let lab = IdxArray {
            dims: vec![n],
            data: labels,
        };
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), encode(&images)).unwrap();
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), encode(&lab)).unwrap();
    }
}

pub struct Sandbox {
    pub dir: tempfile::TempDir,
}

impl Sandbox {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_digits(&dir.path().join("data"), 240, 120);
        Self { dir }
    }

    pub fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    pub fn out(&self) -> PathBuf {
        self.dir.path().join("runs")
    }

    pub fn config_text(&self) -> String {
        format!(
            "source = mnist\ntarget = mnist\n\
             clf_conv1 = 4\nclf_conv2 = 8\nclf_fc = 32\ngen_base = 8\ndisc_base = 4\nlatent_dim = 8\n\
             batch_size = 16\neval_batch_size = 64\nsource_epochs = 2\ncgan_iters = 4\n\
             plr_iters = 6\neval_every = 3\noracle_epochs = 1\noracle_threshold = 0.0\n\
             gan_test_samples = 1000\ngan_train_steps = 5\npretrain_lr_gan = 0.0002\n\
             data_root = {}\nout_dir = {}\n",
            self.data().display(),
            self.out().display()
        )
    }

    pub fn config(&self) -> ExperimentConfig {
        self.config_text().parse().unwrap()
    }

    pub fn config_file(&self) -> PathBuf {
        let path = self.dir.path().join("tiny.cfg");
        std::fs::write(&path, self.config_text()).unwrap();
        path
    }
}
