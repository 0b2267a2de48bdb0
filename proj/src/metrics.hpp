#pragma once

#include "tensor.hpp"

namespace dpc {

// Plain-double evaluation metrics, independent of the autodiff path.
// PSNR uses peak 1: psnr = -20 log10(rmse).

double metric_rmse(const Tensor<float>& a, const Tensor<float>& b);
double metric_psnr(const Tensor<float>& a, const Tensor<float>& b);
double metric_ssim(const Tensor<float>& a, const Tensor<float>& b);

// Restricted to pixels where mask ([h,w,1]) is > 0.5. For SSIM, a window
// counts when the mask is set at its center.
double metric_rmse_masked(const Tensor<float>& a, const Tensor<float>& b,
                          const Tensor<float>& mask);
double metric_psnr_masked(const Tensor<float>& a, const Tensor<float>& b,
                          const Tensor<float>& mask);
double metric_ssim_masked(const Tensor<float>& a, const Tensor<float>& b,
                          const Tensor<float>& mask);

// Mean Euclidean distance between pixel-aligned point clouds ([h,w,3]),
// over pixels where mask is set.
double metric_d_err(const Tensor<float>& pts_a, const Tensor<float>& pts_b,
                    const Tensor<float>& mask);

}  // namespace dpc
