//! Losses, the physics-informed objective, Adam and the training loops.

mod adam;
mod loss;
mod model;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    burgers_residual, burgers_residual_graph, darcy_residual, darcy_residual_graph, darcy_residual_ms, data_loss_graph,
    physics_loss_graph, pino_loss, pino_loss_and_grad, pino_loss_graph, relative_l2, relative_l2_graph, LossSpec,
};
pub use model::GridModel;
pub use trainer::{
    evaluate, finetune_instance, train_loop, EpochRecord, Executor, FinetuneResult, History, Serial, TrainConfig, TrainOutcome,
};
