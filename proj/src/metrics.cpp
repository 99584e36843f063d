// SPDX-License-Identifier: Apache-2.0
#include "cigan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

namespace cigan::metrics {

namespace fs = std::filesystem;

double psnr(const img::Image& a, const img::Image& b) {
  check(a.shape() == b.shape(), "psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double mse = 0.0;
  for (size_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

// grayscale reduction in double
std::vector<double> gray_of(const img::Image& x) {
  size_t hw = static_cast<size_t>(x.h()) * x.w();
  std::vector<double> g(hw, 0.0);
  for (int c = 0; c < x.c(); ++c) {
    const float* p = x.plane(0, c);
    for (size_t i = 0; i < hw; ++i) g[i] += p[i];
  }
  for (auto& v : g) v /= x.c();
  return g;
}

}  // namespace

double ssim(const img::Image& a, const img::Image& b) {
  check(a.shape() == b.shape(), "ssim: shape mismatch");
  check(a.n() == 1, "ssim: batch must be 1");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  check(a.h() >= kWin && a.w() >= kWin,
        "ssim: image " + a.shape_str() + " smaller than the 11x11 window");

  double w[kWin];
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;  // separable window, normalized

  auto x = gray_of(a);
  auto y = gray_of(b);
  int H = a.h(), W = a.w();
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;  // dynamic range 1

  double acc = 0.0;
  long long count = 0;
  for (int oy = 0; oy + kWin <= H; ++oy) {
    for (int ox = 0; ox + kWin <= W; ++ox) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          double wij = w[i] * w[j];
          double xv = x[static_cast<size_t>(oy + i) * W + ox + j];
          double yv = y[static_cast<size_t>(oy + i) * W + ox + j];
          mx += wij * xv;
          my += wij * yv;
          mxx += wij * xv * xv;
          myy += wij * yv * yv;
          mxy += wij * xv * yv;
        }
      double vx = mxx - mx * mx;
      double vy = myy - my * my;
      double cxy = mxy - mx * my;
      double s = ((2 * mx * my + C1) * (2 * cxy + C2)) /
                 ((mx * mx + my * my + C1) * (vx + vy + C2));
      acc += s;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

GammaResult gamma_correct_best(const img::Image& pred, const img::Image& ref, double lo,
                               double hi, double step) {
  check(pred.shape() == ref.shape(), "gamma_correct_best: shape mismatch");
  auto corrected_with = [&](double g) {
    img::Image out(pred.n(), pred.c(), pred.h(), pred.w());
    for (size_t i = 0; i < pred.numel(); ++i)
      out[i] = static_cast<float>(std::pow(static_cast<double>(pred[i]), g));
    return out;
  };

  // 1.0 first so psnr_gc >= psnr and ties prefer the identity
  GammaResult best{1.0, corrected_with(1.0)};
  double best_psnr = psnr(best.corrected, ref);
  int steps = static_cast<int>(std::floor((hi - lo) / step + 0.5));
  for (int k = 0; k <= steps; ++k) {
    double g = lo + k * step;
    if (std::abs(g - 1.0) < 1e-12) continue;
    img::Image cand = corrected_with(g);
    double p = psnr(cand, ref);
    if (p > best_psnr) {
      best_psnr = p;
      best = {g, std::move(cand)};
    }
  }
  return best;
}

MetricReport evaluate_dir(const std::string& pred_dir, const std::string& gt_dir) {
  check(fs::is_directory(pred_dir), pred_dir + ": not a directory");
  check(fs::is_directory(gt_dir), gt_dir + ": not a directory");

  std::map<std::string, fs::path> preds;
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.is_regular_file()) preds[e.path().filename().string()] = e.path();
  check(!preds.empty(), pred_dir + ": no files");

  MetricReport report;
  double s_psnr = 0, s_psnr_gc = 0, s_ssim = 0, s_ssim_gc = 0, s_gamma = 0;
  for (const auto& [name, path] : preds) {
    fs::path gt = fs::path(gt_dir) / name;
    if (!fs::exists(gt))
      throw std::runtime_error(gt.string() + ": missing ground-truth counterpart for " + name);
    img::Image p = img::load_image(path.string());
    img::Image g = img::load_image(gt.string());
    check(p.shape() == g.shape(), name + ": prediction/ground-truth shape mismatch");

    MetricRow row;
    row.name = name;
    row.psnr = psnr(p, g);
    row.ssim = ssim(p, g);
    auto gc = gamma_correct_best(p, g);
    row.gamma = gc.gamma;
    row.psnr_gc = psnr(gc.corrected, g);
    row.ssim_gc = ssim(gc.corrected, g);
    report.rows.push_back(row);
    s_psnr += row.psnr;
    s_psnr_gc += row.psnr_gc;
    s_ssim += row.ssim;
    s_ssim_gc += row.ssim_gc;
    s_gamma += row.gamma;
  }
  double n = static_cast<double>(report.rows.size());
  report.mean = {"MEAN", s_psnr / n, s_psnr_gc / n, s_ssim / n, s_ssim_gc / n, s_gamma / n};
  return report;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot write report");
  f << "name,psnr,psnr_gc,ssim,ssim_gc,gamma\n";
  auto row = [&](const MetricRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.name.c_str(), r.psnr,
                  r.psnr_gc, r.ssim, r.ssim_gc, r.gamma);
    f << buf;
  };
  for (const auto& r : report.rows) row(r);
  row(report.mean);
}

}  // namespace cigan::metrics
