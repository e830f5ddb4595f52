//! Martingale square functions with matrix weights on finite atomic
//! filtrations: weights and their characteristics, the weighted square
//! functions, a constructive sparse domination, and the iterated-kernel test.

pub mod error;
pub mod filtration;
pub mod kernel;
pub mod matrix;
pub mod par;
pub mod sparse;
pub mod sum;
pub mod transforms;
pub mod weights;

pub use error::{Error, Result};
pub use filtration::{AtomId, Filtration};
pub use kernel::{KernelInstance, VSReport};
pub use matrix::{Matrix, SymMatrix};
pub use sparse::{DominationCertificate, ModIndexing, SparseFamily};
pub use transforms::{ScalarFunction, VectorFunction};
pub use weights::{CharacteristicReport, MatrixWeight, ScalarWeight};
