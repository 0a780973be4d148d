#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "neighcnn/tensor.hpp"

namespace neighcnn {

// PSNR of identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE) in dB; kPsnrIdentical when MSE is 0.
double psnr(const Tensor& predicted, const Tensor& reference, double peak = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean of the local SSIM map over all fully-inside windows, using a
// normalized Gaussian window.
double ssim(const Tensor& predicted, const Tensor& reference, double peak = 1.0,
            const SsimOptions& options = {});

// Universal image quality index averaged over sliding windows (stride 1).
// Degenerate windows: both means and variances zero -> 1; both variances
// zero -> 2 mx my / (mx^2 + my^2); both means zero -> 2 sxy / (sx^2 + sy^2).
double uqi(const Tensor& predicted, const Tensor& reference, std::size_t window = 8);

struct MetricRow {
  int looks = 0;
  std::string method;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double uqi = 0.0;
  std::size_t count = 0;
};

// Rows keyed by (looks, method), looks ascending, "Noisy" first within a look.
struct MetricReport {
  std::vector<MetricRow> rows;

  const MetricRow& row(int looks, const std::string& method) const;
  std::vector<int> looks() const;
  std::vector<std::string> methods() const;

  // CSV: looks,method,psnr_db,ssim,uqi,count
  std::string to_csv() const;
  // Aligned table: one block per look with PSNR / SSIM / UQI lines and one
  // column per method.
  std::string to_table(const std::string& title = "") const;
  static MetricReport from_csv(const std::string& text);
};

inline constexpr const char* kNoisyLabel = "Noisy";

// Fixed-precision formatting shared by the CSV and table writers.
std::string format_metric(double value);

struct EvalItem {
  int looks = 0;
  Tensor clean;
  Tensor speckled;
};

using Despeckler = std::function<Tensor(const Tensor&)>;

struct LabeledDespeckler {
  std::string label;
  Despeckler run;
};

// Per-look averages of PSNR / SSIM / UQI for the noisy input and for each
// despeckler. Inputs and outputs are clipped to [0,1] before scoring.
MetricReport evaluate_set(const std::vector<EvalItem>& items,
                          const std::vector<LabeledDespeckler>& despecklers, double peak = 1.0);

}  // namespace neighcnn
