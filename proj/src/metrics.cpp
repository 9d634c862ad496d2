#include "srvp/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace srvp {

namespace {

constexpr double kPeak = 255.0;
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

void require_same(const char* what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWindow);
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

/// Valid-mode separable filtering of an h×w plane.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * img[y * w + x + i];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

double ssim_plane(const double* a, const double* b, std::size_t h, std::size_t w) {
  static const std::vector<double> k = gaussian_kernel();
  const double c1 = (0.01 * kPeak) * (0.01 * kPeak);
  const double c2 = (0.03 * kPeak) * (0.03 * kPeak);
  const std::size_t n = h * w;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a[i] * kPeak;
    y[i] = b[i] * kPeak;
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

double mse(const Tensor& pred, const Tensor& truth) {
  require_same("mse", pred, truth);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = (pred[i] - truth[i]) * kPeak;
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return 100.0;
  return 10.0 * std::log10(kPeak * kPeak / mse_value);
}

double psnr(const Tensor& pred, const Tensor& truth) { return psnr_from_mse(mse(pred, truth)); }

double ssim(const Tensor& pred, const Tensor& truth) {
  require_same("ssim", pred, truth);
  const std::size_t r = pred.rank();
  if (r != 2 && r != 3) throw DimensionError("ssim: expected [C,H,W] or [H,W]");
  const std::size_t c = r == 3 ? pred.dim(0) : 1;
  const std::size_t h = pred.dim(r - 2), w = pred.dim(r - 1);
  if (h < kWindow || w < kWindow) {
    throw DimensionError("ssim: frame " + shape_str(pred.shape()) +
                         " smaller than the 11x11 window");
  }
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    total += ssim_plane(pred.data().data() + ch * h * w, truth.data().data() + ch * h * w, h, w);
  }
  return total / static_cast<double>(c);
}

MetricReport evaluate_sequence(const Tensor& pred, const Tensor& truth) {
  require_same("evaluate_sequence", pred, truth);
  if (pred.rank() != 4) throw DimensionError("evaluate_sequence: expected [P,C,H,W]");
  const std::size_t P = pred.dim(0);
  const Shape frame{pred.dim(1), pred.dim(2), pred.dim(3)};
  const std::size_t fs = shape_size(frame);
  MetricReport rep;
  for (std::size_t p = 0; p < P; ++p) {
    Tensor a(frame, std::vector<double>(pred.data().begin() + p * fs,
                                        pred.data().begin() + (p + 1) * fs));
    Tensor b(frame, std::vector<double>(truth.data().begin() + p * fs,
                                        truth.data().begin() + (p + 1) * fs));
    rep.mse.push_back(mse(a, b));
    rep.psnr.push_back(psnr_from_mse(rep.mse.back()));
    rep.ssim.push_back(ssim(a, b));
  }
  return aggregate({rep});
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: empty report set");
  const std::size_t P = reports.front().horizon();
  MetricReport out;
  out.mse.assign(P, 0.0);
  out.ssim.assign(P, 0.0);
  for (const auto& r : reports) {
    if (r.horizon() != P) throw DimensionError("aggregate: horizons differ");
    for (std::size_t p = 0; p < P; ++p) {
      out.mse[p] += r.mse[p];
      out.ssim[p] += r.ssim[p];
    }
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  for (std::size_t p = 0; p < P; ++p) {
    out.mse[p] *= inv;
    out.ssim[p] *= inv;
    out.psnr.push_back(psnr_from_mse(out.mse[p]));
    out.mean_mse += out.mse[p];
    out.mean_ssim += out.ssim[p];
  }
  out.mean_mse /= static_cast<double>(P);
  out.mean_ssim /= static_cast<double>(P);
  out.mean_psnr = psnr_from_mse(out.mean_mse);
  return out;
}

void write_metric_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << std::setprecision(10);
  f << "frame_index,mse,psnr,ssim\n";
  for (std::size_t p = 0; p < report.horizon(); ++p) {
    f << p + 1 << ',' << report.mse[p] << ',' << report.psnr[p] << ',' << report.ssim[p] << '\n';
  }
  f << "mean," << report.mean_mse << ',' << report.mean_psnr << ',' << report.mean_ssim << '\n';
}

}  // namespace srvp
