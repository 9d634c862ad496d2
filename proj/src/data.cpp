#include "srvp/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string_view>

namespace srvp {

namespace {

constexpr std::string_view kMagic = "SRVPDS1\n";
constexpr std::size_t kHeaderSize = 8 + 5 * 4;

// clang-format off
constexpr std::array<std::array<std::string_view, 8>, 10> kDigits{{
    {"..####..", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", "..####.."},
    {"...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...", ".######."},
    {"..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....", ".##.....", ".######."},
    {".#####..", ".....##.", ".....##.", "..####..", ".....##.", ".....##.", ".....##.", ".#####.."},
    {"....##..", "...###..", "..####..", ".##.##..", "##..##..", "#######.", "....##..", "....##.."},
    {".######.", ".##.....", ".##.....", ".#####..", ".....##.", ".....##.", ".##..##.", "..####.."},
    {"..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.", ".##..##.", "..####.."},
    {".######.", ".....##.", "....##..", "....##..", "...##...", "...##...", "..##....", "..##...."},
    {"..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.", ".##..##.", "..####.."},
    {"..####..", ".##..##.", ".##..##.", ".##..##.", "..#####.", ".....##.", ".....##.", "..####.."},
}};
// clang-format on

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
  return v;
}

void reflect(double& pos, double& vel, double max_pos) {
  while (pos < 0.0 || pos > max_pos) {
    if (pos < 0.0) {
      pos = -pos;
      vel = -vel;
    } else {
      pos = 2.0 * max_pos - pos;
      vel = -vel;
    }
    if (max_pos == 0.0) {
      pos = 0.0;
      break;
    }
  }
}

}  // namespace

std::span<const std::uint8_t> Dataset::sequence(std::size_t i) const {
  if (i >= num_sequences) throw std::out_of_range("dataset: sequence index out of range");
  return std::span<const std::uint8_t>(pixels).subspan(i * sequence_size(), sequence_size());
}

Tensor Dataset::frames_tensor(std::size_t i, std::size_t begin, std::size_t count) const {
  if (begin + count > frames) throw std::out_of_range("dataset: frame range out of bounds");
  auto seq = sequence(i);
  Tensor out({count, channels, height, width});
  const std::size_t off = begin * frame_size();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = seq[off + k] / 255.0;
  return out;
}

Dataset Dataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_sequences) throw std::out_of_range("dataset: bad subset range");
  Dataset out = *this;
  out.num_sequences = static_cast<std::uint32_t>(end - begin);
  out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(begin * sequence_size()),
                    pixels.begin() + static_cast<std::ptrdiff_t>(end * sequence_size()));
  return out;
}

std::vector<std::uint8_t> digit_mask(int digit) {
  if (digit < 0 || digit > 9) throw std::invalid_argument("digit_mask: digit out of range");
  std::vector<std::uint8_t> mask;
  mask.reserve(64);
  for (auto row : kDigits[static_cast<std::size_t>(digit)]) {
    for (char ch : row) mask.push_back(ch == '#' ? 1 : 0);
  }
  return mask;
}

void advance_glyph(GlyphSpec& g, std::size_t height, std::size_t width) {
  g.y += g.vy;
  g.x += g.vx;
  reflect(g.y, g.vy, static_cast<double>(height - g.rows));
  reflect(g.x, g.vx, static_cast<double>(width - g.cols));
}

std::vector<std::uint8_t> render_sequence(std::vector<GlyphSpec> glyphs, std::size_t frames,
                                          std::size_t height, std::size_t width) {
  for (const auto& g : glyphs) {
    if (g.rows > height || g.cols > width) {
      throw std::invalid_argument("glyph " + std::to_string(g.rows) + "x" +
                                  std::to_string(g.cols) + " larger than frame " +
                                  std::to_string(height) + "x" + std::to_string(width));
    }
    if (g.mask.size() != g.rows * g.cols) throw std::invalid_argument("glyph mask size mismatch");
  }
  std::vector<std::uint8_t> out(frames * height * width, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    std::uint8_t* frame = out.data() + t * height * width;
    for (auto& g : glyphs) {
      const auto top = static_cast<std::size_t>(std::lround(g.y));
      const auto left = static_cast<std::size_t>(std::lround(g.x));
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
          if (g.mask[r * g.cols + c]) frame[(top + r) * width + left + c] = 255;
        }
      }
      if (t + 1 < frames) advance_glyph(g, height, width);
    }
  }
  return out;
}

Dataset generate(const GenerateOptions& opt) {
  if (opt.height < 8 || opt.width < 8) {
    throw std::invalid_argument("generate: 8x8 glyph larger than frame");
  }
  Dataset ds;
  ds.num_sequences = static_cast<std::uint32_t>(opt.num_sequences);
  ds.frames = static_cast<std::uint32_t>(opt.frames);
  ds.channels = 1;
  ds.height = static_cast<std::uint32_t>(opt.height);
  ds.width = static_cast<std::uint32_t>(opt.width);
  ds.pixels.reserve(opt.num_sequences * ds.sequence_size());
  for (std::size_t i = 0; i < opt.num_sequences; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<int> digit(0, 9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<GlyphSpec> glyphs;
    for (std::size_t g = 0; g < opt.glyphs; ++g) {
      GlyphSpec spec;
      spec.mask = digit_mask(digit(rng));
      spec.y = unit(rng) * static_cast<double>(opt.height - spec.rows);
      spec.x = unit(rng) * static_cast<double>(opt.width - spec.cols);
      const double angle = unit(rng) * 2.0 * std::numbers::pi;
      const double speed = opt.min_speed + unit(rng) * (opt.max_speed - opt.min_speed);
      spec.vy = speed * std::sin(angle);
      spec.vx = speed * std::cos(angle);
      glyphs.push_back(std::move(spec));
    }
    auto frames = render_sequence(std::move(glyphs), opt.frames, opt.height, opt.width);
    ds.pixels.insert(ds.pixels.end(), frames.begin(), frames.end());
  }
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.pixels.size() != ds.num_sequences * ds.sequence_size()) {
    throw FormatError("dataset: payload length does not match header counts");
  }
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderSize + ds.pixels.size());
  for (auto v : {ds.num_sequences, ds.frames, ds.channels, ds.height, ds.width}) put_u32(out, v);
  out.insert(out.end(), ds.pixels.begin(), ds.pixels.end());
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("dataset: bad magic");
  }
  if (bytes.size() < kHeaderSize) throw FormatError("dataset: truncated header");
  Dataset ds;
  ds.num_sequences = get_u32(bytes, 8);
  ds.frames = get_u32(bytes, 12);
  ds.channels = get_u32(bytes, 16);
  ds.height = get_u32(bytes, 20);
  ds.width = get_u32(bytes, 24);
  const std::size_t expected = std::size_t{ds.num_sequences} * ds.sequence_size();
  const std::size_t payload = bytes.size() - kHeaderSize;
  if (payload < expected) throw FormatError("dataset: truncated payload");
  if (payload > expected) throw FormatError("dataset: header/payload length mismatch");
  ds.pixels.assign(bytes.begin() + kHeaderSize, bytes.end());
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open dataset: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> frame,
               std::size_t height, std::size_t width) {
  if (frame.size() != height * width) throw std::invalid_argument("write_pgm: frame size mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "P5\n" << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t input_len, std::size_t pred_len,
                             std::size_t batch_size, std::uint64_t shuffle_seed)
    : ds_(ds), input_len_(input_len), pred_len_(pred_len), batch_size_(batch_size) {
  if (ds.frames != input_len + pred_len) {
    throw FormatError("dataset has T=" + std::to_string(ds.frames) + " frames, expected N+P=" +
                      std::to_string(input_len + pred_len));
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  order_.resize(ds.num_sequences);
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  // Fisher-Yates with an explicit draw so the order is library-independent.
  std::mt19937_64 rng(shuffle_seed);
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order_[i - 1], order_[j]);
  }
}

std::size_t BatchIterator::num_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(end));
  batch.inputs.clear();
  batch.targets.clear();
  for (auto i : batch.indices) {
    batch.inputs.push_back(ds_.frames_tensor(i, 0, input_len_));
    batch.targets.push_back(ds_.frames_tensor(i, input_len_, pred_len_));
  }
  cursor_ = end;
  return true;
}

}  // namespace srvp
