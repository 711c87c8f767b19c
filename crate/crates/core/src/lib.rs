//! All-in-one adverse weather image restoration with a triplet attention
//! network: local pixel-wise, global strip-wise and global distribution
//! attention inside an encoder-decoder, trained with a Charbonnier plus
//! frequency-domain objective on synthetic haze, rain and snow.

// Validation guards use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod weather;
