//! Tensors, seeded sampling, 2-D FFT, Sobel stencils and scalar statistics.

mod fft;
mod rng;
mod stats;
mod stencil;
mod tensor;

pub use fft::{fft2d, ifft2d, ifft2d_complex, ComplexGrid};
pub(crate) use rng::rayleigh_draw;
pub use rng::{sample_gaussian, sample_rayleigh, Rng};
pub use stats::{
    bonferroni, ks_statistic, mean, normal_cdf, pearson_r, r_squared, sample_std, wilcoxon_signed_rank, WilcoxonResult,
    WILCOXON_EXACT_MAX_N,
};
pub use stencil::{sobel_components, sobel_gradients};
pub use tensor::Tensor;
