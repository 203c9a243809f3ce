//! Similarity and evaluation metrics: normalised mutual information, Dice
//! overlap, and the NT-Xent contrastive loss.

mod dice;
mod info_nce;
mod nmi;

pub use dice::{dice, DiceRow};
pub use info_nce::{info_nce, info_nce_gradient, read_feature_csv, FeatureBatch, InfoNce};
pub use nmi::{nmi, nmi_values, JointHistogram, DEFAULT_BINS};
