//! Small dense neural-network toolkit: matrices, reverse-mode gradients,
//! MLPs, Adam, spectral norms, sampling and checkpoints.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod sampling;
pub mod scaler;
pub mod spectral;
pub mod tape;
pub mod tensor;

pub use activation::{Activation, LEAKY_SLOPE};
pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, take_block, write_checkpoint};
pub use mlp::{mlp_forward, mlp_forward_batch, AdamState, LayerParams, Mlp, MlpSpec, ParamBlock, ParamVars};
pub use scaler::Scaler;
pub use sampling::{argmax, gaussian_log_prob, gaussian_sample_logprob, gumbel_softmax, LN_2PI};
pub use spectral::{spectral_norm, spectral_norm_grad, top_singular, TopSingular};
pub use tape::{Grads, Tape, Var};
pub use tensor::Matrix;
