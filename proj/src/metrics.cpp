#include "neighcnn/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "neighcnn/error.hpp"

namespace neighcnn {

namespace {

struct Plane {
  std::size_t h, w;
  std::span<const double> v;
};

Plane as_plane(const Tensor& t, const char* what) {
  const Shape& s = t.shape();
  if (s.rank() != 4 || s[0] != 1 || s[1] != 1) {
    throw ShapeError(std::string(what) + ": expected a [1,1,H,W] image, got " + s.str());
  }
  return {s[2], s[3], t.data()};
}

// Separable correlation with a symmetric 1-D kernel, 'valid' region only.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& kernel) {
  const std::size_t k = kernel.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += kernel[i] * img[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += kernel[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Tensor& predicted, const Tensor& reference, double peak) {
  require_same_shape(predicted.shape(), reference.shape(), "psnr");
  if (!(peak > 0.0)) throw InvalidArgument("psnr: peak must be positive");
  std::vector<double> sq(predicted.numel());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = predicted[i] - reference[i];
    sq[i] = d * d;
  }
  const double mse = pairwise_sum(sq) / static_cast<double>(sq.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& predicted, const Tensor& reference, double peak, const SsimOptions& options) {
  require_same_shape(predicted.shape(), reference.shape(), "ssim");
  const Plane a = as_plane(predicted, "ssim");
  if (a.h < options.window || a.w < options.window) {
    throw ShapeError("ssim: image " + predicted.shape().str() + " smaller than the " +
                     std::to_string(options.window) + "x" + std::to_string(options.window) + " window");
  }
  const Plane b = as_plane(reference, "ssim");
  std::vector<double> kernel(options.window);
  const double centre = static_cast<double>(options.window - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double d = static_cast<double>(i) - centre;
    kernel[i] = std::exp(-d * d / (2.0 * options.sigma * options.sigma));
    total += kernel[i];
  }
  for (double& v : kernel) v /= total;

  const std::size_t n = a.h * a.w;
  std::vector<double> x(a.v.begin(), a.v.end()), y(b.v.begin(), b.v.end());
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, a.h, a.w, kernel);
  const auto my = filter_valid(y, a.h, a.w, kernel);
  const auto exx = filter_valid(xx, a.h, a.w, kernel);
  const auto eyy = filter_valid(yy, a.h, a.w, kernel);
  const auto exy = filter_valid(xy, a.h, a.w, kernel);

  const double c1 = (options.k1 * peak) * (options.k1 * peak);
  const double c2 = (options.k2 * peak) * (options.k2 * peak);
  std::vector<double> map(mx.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double sx = exx[i] - mx[i] * mx[i];
    const double sy = eyy[i] - my[i] * my[i];
    const double sxy = exy[i] - mx[i] * my[i];
    map[i] = ((2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (sx + sy + c2));
  }
  return pairwise_sum(map) / static_cast<double>(map.size());
}

double uqi(const Tensor& predicted, const Tensor& reference, std::size_t window) {
  require_same_shape(predicted.shape(), reference.shape(), "uqi");
  const Plane a = as_plane(predicted, "uqi");
  const Plane b = as_plane(reference, "uqi");
  if (window == 0 || a.h < window || a.w < window) {
    throw ShapeError("uqi: image " + predicted.shape().str() + " smaller than the " +
                     std::to_string(window) + "x" + std::to_string(window) + " window");
  }
  const double count = static_cast<double>(window * window);
  const std::size_t oh = a.h - window + 1, ow = a.w - window + 1;
  std::vector<double> q(oh * ow);
  for (std::size_t y0 = 0; y0 < oh; ++y0) {
    for (std::size_t x0 = 0; x0 < ow; ++x0) {
      double sa = 0.0, sb = 0.0;
      const double a0 = a.v[y0 * a.w + x0], b0 = b.v[y0 * a.w + x0];
      bool flat_a = true, flat_b = true;
      for (std::size_t y = y0; y < y0 + window; ++y) {
        for (std::size_t x = x0; x < x0 + window; ++x) {
          sa += a.v[y * a.w + x];
          sb += b.v[y * a.w + x];
          flat_a = flat_a && a.v[y * a.w + x] == a0;
          flat_b = flat_b && b.v[y * a.w + x] == b0;
        }
      }
      // Flat windows get exact zero spread rather than rounding residue.
      const double ma = flat_a ? a0 : sa / count, mb = flat_b ? b0 : sb / count;
      double vaa = 0.0, vbb = 0.0, vab = 0.0;
      for (std::size_t y = y0; y < y0 + window; ++y) {
        for (std::size_t x = x0; x < x0 + window; ++x) {
          const double da = a.v[y * a.w + x] - ma, db = b.v[y * a.w + x] - mb;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      }
      // The 1/(N-1) normalization cancels in every ratio below.
      const double var_sum = vaa + vbb;
      const double mean_sq = ma * ma + mb * mb;
      double value;
      if (var_sum == 0.0 && mean_sq == 0.0) {
        value = 1.0;
      } else if (var_sum == 0.0) {
        value = 2.0 * ma * mb / mean_sq;
      } else if (mean_sq == 0.0) {
        value = 2.0 * vab / var_sum;
      } else {
        value = 4.0 * vab * ma * mb / (var_sum * mean_sq);
      }
      q[y0 * ow + x0] = value;
    }
  }
  return pairwise_sum(q) / static_cast<double>(q.size());
}

// ---- reports ---------------------------------------------------------------

std::string format_metric(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return fmt::format("{:.4f}", value);
}

const MetricRow& MetricReport::row(int looks, const std::string& method) const {
  for (const auto& r : rows) {
    if (r.looks == looks && r.method == method) return r;
  }
  throw InvalidArgument("report has no row for L=" + std::to_string(looks) + ", " + method);
}

std::vector<int> MetricReport::looks() const {
  std::vector<int> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.looks) == out.end()) out.push_back(r.looks);
  }
  return out;
}

std::vector<std::string> MetricReport::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  }
  return out;
}

std::string MetricReport::to_csv() const {
  std::string out = "looks,method,psnr_db,ssim,uqi,count\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{}\n", r.looks, r.method, format_metric(r.psnr_db),
                       format_metric(r.ssim), format_metric(r.uqi), r.count);
  }
  return out;
}

std::string MetricReport::to_table(const std::string& title) const {
  const auto method_list = methods();
  std::size_t width = 9;
  for (const auto& m : method_list) width = std::max(width, m.size() + 2);
  std::string out;
  if (!title.empty()) out += title + "\n";
  std::string header = fmt::format("{:<9}{:<8}", "Look, L", "Metric");
  for (const auto& m : method_list) header += fmt::format("{:>{}}", m, width);
  const std::string rule(header.size(), '-');
  out += rule + "\n" + header + "\n" + rule + "\n";
  for (int l : looks()) {
    const char* names[3] = {"PSNR", "SSIM", "UQI"};
    for (int k = 0; k < 3; ++k) {
      std::string line = fmt::format("{:<9}{:<8}", k == 0 ? std::to_string(l) : "", names[k]);
      for (const auto& m : method_list) {
        std::string cell = "-";
        for (const auto& r : rows) {
          if (r.looks == l && r.method == m) {
            cell = format_metric(k == 0 ? r.psnr_db : k == 1 ? r.ssim : r.uqi);
          }
        }
        line += fmt::format("{:>{}}", cell, width);
      }
      out += line + "\n";
    }
    out += rule + "\n";
  }
  return out;
}

MetricReport MetricReport::from_csv(const std::string& text) {
  MetricReport report;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "looks,method,psnr_db,ssim,uqi,count") throw DataError("unexpected report header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) throw DataError("malformed report line: " + line);
    auto num = [](const std::string& s) {
      if (s == "inf") return kPsnrIdentical;
      if (s == "-inf") return -kPsnrIdentical;
      return std::stod(s);
    };
    report.rows.push_back({std::stoi(f[0]), f[1], num(f[2]), num(f[3]), num(f[4]),
                           static_cast<std::size_t>(std::stoul(f[5]))});
  }
  return report;
}

MetricReport evaluate_set(const std::vector<EvalItem>& items,
                          const std::vector<LabeledDespeckler>& despecklers, double peak) {
  if (items.empty()) throw InvalidArgument("evaluate_set: empty selection");
  struct Acc {
    double psnr = 0.0, ssim = 0.0, uqi = 0.0;
    std::size_t count = 0;
  };
  std::vector<std::string> labels{kNoisyLabel};
  for (const auto& d : despecklers) {
    if (d.label == kNoisyLabel || std::find(labels.begin(), labels.end(), d.label) != labels.end()) {
      throw InvalidArgument("duplicate method label '" + d.label + "'");
    }
    labels.push_back(d.label);
  }
  std::map<int, std::vector<Acc>> acc;
  for (const auto& item : items) {
    auto& slots = acc.try_emplace(item.looks, labels.size()).first->second;
    const Tensor clean = clamp(item.clean, 0.0, 1.0);
    auto score = [&](Acc& a, const Tensor& out) {
      const Tensor c = clamp(out, 0.0, 1.0);
      a.psnr += psnr(c, clean, peak);
      a.ssim += ssim(c, clean, peak);
      a.uqi += uqi(c, clean);
      ++a.count;
    };
    score(slots[0], item.speckled);
    for (std::size_t i = 0; i < despecklers.size(); ++i) {
      score(slots[i + 1], despecklers[i].run(item.speckled));
    }
  }
  MetricReport report;
  for (const auto& [looks, slots] : acc) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const Acc& a = slots[i];
      const double n = static_cast<double>(a.count);
      report.rows.push_back({looks, labels[i], a.psnr / n, a.ssim / n, a.uqi / n, a.count});
    }
  }
  return report;
}

}  // namespace neighcnn
