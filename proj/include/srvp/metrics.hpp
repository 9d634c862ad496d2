#pragma once

#include <filesystem>
#include <vector>

#include "srvp/tensor.hpp"

namespace srvp {

/// Mean squared error on the 0–255 scale of two frames given in [0,1].
double mse(const Tensor& pred, const Tensor& truth);

/// 10·log10(255²/MSE); identical frames give 100 dB.
double psnr_from_mse(double mse_value);
double psnr(const Tensor& pred, const Tensor& truth);

/// Mean local SSIM (11×11 Gaussian window, σ=1.5, K1=0.01, K2=0.03, L=255)
/// over the valid region, averaged over channels. Frames are [C,H,W] or
/// [H,W] in [0,1].
double ssim(const Tensor& pred, const Tensor& truth);

/// Frame-indexed metrics of one or more predicted sequences.
struct MetricReport {
  std::vector<double> mse;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  std::size_t horizon() const { return mse.size(); }
};

/// Per-frame metrics of pred/truth [P,C,H,W].
MetricReport evaluate_sequence(const Tensor& pred, const Tensor& truth);

/// Frame-index-wise mean over sequences. PSNR entries are recomputed from
/// the averaged MSE so every entry keeps the PSNR/MSE identity.
MetricReport aggregate(const std::vector<MetricReport>& reports);

/// CSV with header `frame_index,mse,psnr,ssim`, rows 1..P and a `mean` row.
void write_metric_csv(const MetricReport& report, const std::filesystem::path& path);

}  // namespace srvp
