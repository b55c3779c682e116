//! Offline joint learning of the dominant eigenpair `(λ, ψ)` of the
//! state-action safety operator and a deterministic backup policy.

mod check;
mod eval;
mod losses;
mod model;
mod train;

pub use losses::{eig_loss, eig_loss_with_targets, eig_targets, phi_loss, policy_loss, pos_loss, EigLoss, LossGrad};
pub use check::{loss_gradient_check, LossCheckReport};
pub use eval::{heading_contrast, policy_values, set_iou, vertex_grid};
pub use model::EigenModel;
pub use train::{train, train_phi, TrainConfig, TrainLog, TrainRecord};
