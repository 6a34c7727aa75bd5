//! Adversarial loss pairs on raw discriminator scores and the classifier's
//! cross-entropy.
//!
//! The scalar functions over `f64` slices are the reference definitions;
//! the tensor functions are what training differentiates, and the tests keep
//! the two in agreement.

use plr_core::GanObjective;
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Floor applied to the true-class probability before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPair {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Gradients of a [`LossPair`] with respect to each score.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads {
    pub d_wrt_real: Vec<f64>,
    pub d_wrt_fake: Vec<f64>,
    pub g_wrt_fake: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

fn nonempty(real: &[f64], fake: &[f64]) -> Result<()> {
    if real.is_empty() || fake.is_empty() {
        Err(Error::invalid("score batches must be nonempty"))
    } else {
        Ok(())
    }
}

/// Discriminator and generator losses for one batch of real and fake scores.
///
/// The cross-entropy generator loss is the non-saturating `mean[-log σ(fake)]`.
pub fn gan_loss(kind: GanObjective, real: &[f64], fake: &[f64]) -> Result<LossPair> {
    nonempty(real, fake)?;
    let (nr, nf) = (real.len(), fake.len());
    let pair = match kind {
        GanObjective::CrossEntropy => LossPair {
            // -log σ(r) = softplus(-r), -log(1 - σ(f)) = softplus(f)
            d_loss: mean(real.iter().map(|&r| softplus(-r)), nr) + mean(fake.iter().map(|&f| softplus(f)), nf),
            g_loss: mean(fake.iter().map(|&f| softplus(-f)), nf),
        },
        GanObjective::LeastSquares => LossPair {
            d_loss: 0.5 * mean(real.iter().map(|&r| (r - 1.0).powi(2)), nr)
                + 0.5 * mean(fake.iter().map(|&f| f * f), nf),
            g_loss: 0.5 * mean(fake.iter().map(|&f| (f - 1.0).powi(2)), nf),
        },
        GanObjective::Hinge => LossPair {
            d_loss: mean(real.iter().map(|&r| (1.0 - r).max(0.0)), nr)
                + mean(fake.iter().map(|&f| (1.0 + f).max(0.0)), nf),
            g_loss: -mean(fake.iter().copied(), nf),
        },
    };
    Ok(pair)
}

/// Analytic gradients of [`gan_loss`]. At hinge kinks the zero subgradient is used.
pub fn gan_loss_grad(kind: GanObjective, real: &[f64], fake: &[f64]) -> Result<LossGrads> {
    nonempty(real, fake)?;
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let grads = match kind {
        GanObjective::CrossEntropy => LossGrads {
            d_wrt_real: real.iter().map(|&r| -sigmoid(-r) / nr).collect(),
            d_wrt_fake: fake.iter().map(|&f| sigmoid(f) / nf).collect(),
            g_wrt_fake: fake.iter().map(|&f| -sigmoid(-f) / nf).collect(),
        },
        GanObjective::LeastSquares => LossGrads {
            d_wrt_real: real.iter().map(|&r| (r - 1.0) / nr).collect(),
            d_wrt_fake: fake.iter().map(|&f| f / nf).collect(),
            g_wrt_fake: fake.iter().map(|&f| (f - 1.0) / nf).collect(),
        },
        GanObjective::Hinge => LossGrads {
            d_wrt_real: real.iter().map(|&r| if r < 1.0 { -1.0 / nr } else { 0.0 }).collect(),
            d_wrt_fake: fake.iter().map(|&f| if f > -1.0 { 1.0 / nf } else { 0.0 }).collect(),
            g_wrt_fake: fake.iter().map(|_| -1.0 / nf).collect(),
        },
    };
    Ok(grads)
}

/// Differentiable discriminator loss on raw score tensors.
pub fn discriminator_loss(kind: GanObjective, real: &Tensor, fake: &Tensor) -> Tensor {
    match kind {
        GanObjective::CrossEntropy => (-real).softplus().mean(None::<Kind>) + fake.softplus().mean(None::<Kind>),
        GanObjective::LeastSquares => {
            (real - 1.0).square().mean(None::<Kind>) * 0.5 + fake.square().mean(None::<Kind>) * 0.5
        }
        GanObjective::Hinge => (-real + 1.0).relu().mean(None::<Kind>) + (fake + 1.0).relu().mean(None::<Kind>),
    }
}

/// Differentiable generator loss on raw fake scores.
pub fn generator_loss(kind: GanObjective, fake: &Tensor) -> Tensor {
    match kind {
        GanObjective::CrossEntropy => (-fake).softplus().mean(None::<Kind>),
        GanObjective::LeastSquares => (fake - 1.0).square().mean(None::<Kind>) * 0.5,
        GanObjective::Hinge => -fake.mean(None::<Kind>),
    }
}

/// Mean `-log p[label]` over rows of a row-major `B×classes` probability table.
///
/// Probabilities below [`PROB_FLOOR`] are raised to it, so the loss stays finite.
pub fn classification_loss(scores: &[f64], classes: usize, labels: &[usize]) -> Result<f64> {
    if classes == 0 || labels.is_empty() || scores.len() != labels.len() * classes {
        return Err(Error::invalid(format!(
            "{} scores do not form {} rows of {classes}",
            scores.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (row, &label) in scores.chunks(classes).zip(labels) {
        if label >= classes {
            return Err(Error::invalid(format!("label {label} outside [0, {classes})")));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("score row {row:?} is not a probability vector")));
        }
        total += -row[label].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Differentiable cross-entropy from unnormalized logits and `Int64` labels.
pub fn classification_loss_from_logits(logits: &Tensor, labels: &Tensor) -> Tensor {
    logits.cross_entropy_for_logits(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [GanObjective; 3] = GanObjective::ALL;

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-4.0f64..4.0, 1..16)
    }

    #[test]
    fn cross_entropy_at_half() {
        let p = gan_loss(GanObjective::CrossEntropy, &[0.0; 5], &[0.0; 7]).unwrap();
        assert!((p.d_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((p.d_loss - 1.3863).abs() < 5e-5);
    }

    #[test]
    fn targets_met_give_zero() {
        let ls = gan_loss(GanObjective::LeastSquares, &[1.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(ls.d_loss, 0.0);
        let h = gan_loss(GanObjective::Hinge, &[1.0, 2.5], &[-1.0, -3.0]).unwrap();
        assert_eq!(h.d_loss, 0.0);
    }

    #[test]
    fn empty_batches_are_rejected() {
        for kind in KINDS {
            assert!(gan_loss(kind, &[], &[0.0]).is_err());
            assert!(gan_loss(kind, &[0.0], &[]).is_err());
        }
    }

    #[test]
    fn classification_examples() {
        let onehot = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(classification_loss(&onehot, 3, &[1, 0]).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        let l = classification_loss(&uniform, 10, &[3]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        assert!((l - 2.3026).abs() < 5e-5);
        let rows = [0.5, 0.5, 0.2, 0.8];
        let both = classification_loss(&rows, 2, &[0, 1]).unwrap();
        let l1 = classification_loss(&rows[..2], 2, &[0]).unwrap();
        let l2 = classification_loss(&rows[2..], 2, &[1]).unwrap();
        assert!((both - (l1 + l2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_floored() {
        let l = classification_loss(&[1.0, 0.0], 2, &[1]).unwrap();
        assert!((l - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(classification_loss(&[0.7, 0.7], 2, &[0]).is_err());
        assert!(classification_loss(&[0.5, 0.5], 2, &[2]).is_err());
    }

    #[test]
    fn logits_loss_matches_probability_loss() {
        let logits = Tensor::from_slice(&[0.3f32, -1.2, 2.0, 0.0, 0.5, 0.1]).view([2, 3]);
        let labels = Tensor::from_slice(&[2i64, 0]);
        let t = classification_loss_from_logits(&logits, &labels).double_value(&[]);
        let probs: Vec<f64> = Vec::<f32>::try_from(logits.softmax(-1, Kind::Float).flatten(0, -1))
            .unwrap()
            .into_iter()
            .map(f64::from)
            .collect();
        let s = classification_loss(&probs, 3, &[2, 0]).unwrap();
        assert!((t - s).abs() < 1e-5);
    }

    fn tensor(v: &[f64]) -> Tensor {
        Tensor::from_slice(v).view([v.len() as i64, 1])
    }

    proptest! {
        #[test]
        fn tensor_losses_match_reference(real in scores(), fake in scores()) {
            for kind in KINDS {
                let p = gan_loss(kind, &real, &fake).unwrap();
                let d = discriminator_loss(kind, &tensor(&real), &tensor(&fake)).double_value(&[]);
                let g = generator_loss(kind, &tensor(&fake)).double_value(&[]);
                prop_assert!((p.d_loss - d).abs() < 1e-9);
                prop_assert!((p.g_loss - g).abs() < 1e-9);
            }
        }

        #[test]
        fn gradients_match_finite_differences(real in scores(), fake in scores()) {
            let h = 1e-4;
            for kind in KINDS {
                let grads = gan_loss_grad(kind, &real, &fake).unwrap();
                // hinge is piecewise linear; skip points whose stencil crosses a kink
                let near_kink = |x: f64, k: f64| kind == GanObjective::Hinge && (x - k).abs() < 2.0 * h;
                for i in 0..real.len() {
                    if near_kink(real[i], 1.0) { continue; }
                    let (mut up, mut dn) = (real.clone(), real.clone());
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (gan_loss(kind, &up, &fake).unwrap().d_loss - gan_loss(kind, &dn, &fake).unwrap().d_loss) / (2.0 * h);
                    let an = grads.d_wrt_real[i];
                    prop_assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-6) + 1e-9, "{kind} real {i}: {fd} vs {an}");
                }
                for i in 0..fake.len() {
                    let (mut up, mut dn) = (fake.clone(), fake.clone());
                    up[i] += h;
                    dn[i] -= h;
                    let (pu, pd) = (gan_loss(kind, &real, &up).unwrap(), gan_loss(kind, &real, &dn).unwrap());
                    let fd_g = (pu.g_loss - pd.g_loss) / (2.0 * h);
                    let an_g = grads.g_wrt_fake[i];
                    prop_assert!((fd_g - an_g).abs() <= 1e-3 * an_g.abs().max(1e-6) + 1e-9, "{kind} g {i}: {fd_g} vs {an_g}");
                    if near_kink(fake[i], -1.0) { continue; }
                    let fd = (pu.d_loss - pd.d_loss) / (2.0 * h);
                    let an = grads.d_wrt_fake[i];
                    prop_assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-6) + 1e-9, "{kind} fake {i}: {fd} vs {an}");
                }
            }
        }

        #[test]
        fn losses_are_nonnegative(real in scores(), fake in scores()) {
            for kind in KINDS {
                let p = gan_loss(kind, &real, &fake).unwrap();
                prop_assert!(p.d_loss >= 0.0);
                if kind != GanObjective::Hinge {
                    prop_assert!(p.g_loss >= 0.0);
                }
            }
        }

        #[test]
        fn batch_order_is_irrelevant(real in scores(), fake in scores(), rot in 0usize..16) {
            let mut r2 = real.clone();
            let mut f2 = fake.clone();
            r2.rotate_left(rot % real.len());
            f2.reverse();
            for kind in KINDS {
                let a = gan_loss(kind, &real, &fake).unwrap();
                let b = gan_loss(kind, &r2, &f2).unwrap();
                prop_assert!((a.d_loss - b.d_loss).abs() < 1e-10);
                prop_assert!((a.g_loss - b.g_loss).abs() < 1e-10);
            }
        }

        #[test]
        fn raising_a_score_never_raises_hinge_d_loss(real in scores(), fake in scores(), i in 0usize..16, bump in 0.0f64..3.0) {
            let base = gan_loss(GanObjective::Hinge, &real, &fake).unwrap().d_loss;
            let mut r2 = real.clone();
            let k = i % r2.len();
            r2[k] += bump;
            prop_assert!(gan_loss(GanObjective::Hinge, &r2, &fake).unwrap().d_loss <= base + 1e-12);
        }
    }
}
