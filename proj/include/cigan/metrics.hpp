// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cigan/image.hpp"

namespace cigan::metrics {

// Peak signal-to-noise ratio over all channels and pixels, peak 1.0.
// Identical images return +infinity.
double psnr(const img::Image& a, const img::Image& b);

// Single-scale SSIM on the grayscale reduction: 11x11 Gaussian window with
// sigma 1.5, K1=0.01, K2=0.03, dynamic range 1, mean over valid positions.
double ssim(const img::Image& a, const img::Image& b);

struct GammaResult {
  double gamma;
  img::Image corrected;
};

// Sweeps gamma over {lo, lo+step, ..., hi} (1.0 always included), corrects
// pred as pred^gamma and returns the gamma that maximizes PSNR against ref.
// Ties keep the gamma evaluated first, with 1.0 evaluated before all others.
GammaResult gamma_correct_best(const img::Image& pred, const img::Image& ref, double lo = 0.1,
                               double hi = 5.0, double step = 0.05);

struct MetricRow {
  std::string name;
  double psnr, psnr_gc, ssim, ssim_gc, gamma;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // sorted by name
  MetricRow mean;               // name == "MEAN"
};

// Per-image metrics over directories with matching filenames.
MetricReport evaluate_dir(const std::string& pred_dir, const std::string& gt_dir);

// header `name,psnr,psnr_gc,ssim,ssim_gc,gamma`, one row per image, MEAN last
void write_report_csv(const MetricReport& report, const std::string& path);

}  // namespace cigan::metrics
