//! Deep belief nets for topic modeling.
//!
//! The pipeline runs bottom-up:
//!
//! 1. [`corpus`] turns tokenized documents into bag-of-words count vectors
//!    over a fixed vocabulary.
//! 2. [`rbm`] trains a single replicated softmax machine (multinomial
//!    visible units) or binary RBM with CD-1, momentum and weight decay.
//! 3. [`dbn`] stacks RBMs greedily into a deep belief net.
//! 4. [`finetune`] unrolls the stack into a deep autoencoder and fine-tunes
//!    it with nonlinear conjugate gradient ([`optim`]) on cross-entropy,
//!    optionally with fixed Gaussian noise at the code layer.
//! 5. [`codes`] encodes documents to real or binary latent codes and
//!    [`eval`] measures retrieval accuracy over neighbor counts.
//!
//! Trained models are persisted with [`container`].

pub mod codes;
pub mod container;
pub mod corpus;
pub mod dbn;
mod error;
pub mod eval;
pub mod finetune;
pub mod math;
pub mod optim;
pub mod rbm;

pub use error::{Error, Result};
