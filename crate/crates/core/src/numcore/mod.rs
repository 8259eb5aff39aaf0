//! Dense tensors, the differentiable operations the models use, Adadelta,
//! max-norm projection and a finite-difference gradient oracle.

mod conv;
mod gradcheck;
mod ops;
mod optim;
mod tensor;

pub use conv::{bank_from_rows, conv1d_maxpool, conv1d_maxpool_backward, ConvBank, ConvTrace};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, HasParameters, Probe};
pub use ops::{
    argmax, cross_entropy, cross_entropy_grad, dropout, kl_divergence, kl_grad_p, kl_grad_q,
    softmax, softmax_backward, DropoutMask, Mode, PROB_FLOOR,
};
pub(crate) use ops::{kl_unchecked, softmax_unchecked};
pub use optim::{maxnorm_constrain, Adadelta};
pub use tensor::{Parameter, Real, Tensor};
pub(crate) use tensor::{axpy, dot};
