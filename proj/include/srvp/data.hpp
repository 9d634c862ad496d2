#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "srvp/tensor.hpp"

namespace srvp {

/// Sequences of u8 frames stored frame-major, row-major.
struct Dataset {
  std::uint32_t num_sequences = 0;
  std::uint32_t frames = 0;  // T
  std::uint32_t channels = 1;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t frame_size() const { return std::size_t{channels} * height * width; }
  std::size_t sequence_size() const { return frame_size() * frames; }
  std::span<const std::uint8_t> sequence(std::size_t i) const;
  /// Frames [begin, begin+count) of sequence i as [count,C,H,W] scaled to [0,1].
  Tensor frames_tensor(std::size_t i, std::size_t begin, std::size_t count) const;
  /// Keeps sequences [begin, end).
  Dataset subset(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// A binary glyph moving with constant velocity inside the frame.
struct GlyphSpec {
  std::size_t rows = 8;
  std::size_t cols = 8;
  std::vector<std::uint8_t> mask;  // rows*cols, nonzero = ink
  double y = 0.0;
  double x = 0.0;
  double vy = 0.0;
  double vx = 0.0;
};

/// 8×8 block-digit mask for digit 0–9.
std::vector<std::uint8_t> digit_mask(int digit);

/// Advances one frame; walls reflect elastically so the speed is unchanged.
void advance_glyph(GlyphSpec& glyph, std::size_t height, std::size_t width);

/// Renders T frames (C=1); glyphs are rasterized at rounded positions and
/// composed with a per-pixel max. Moves the glyphs T−1 steps.
std::vector<std::uint8_t> render_sequence(std::vector<GlyphSpec> glyphs, std::size_t frames,
                                          std::size_t height, std::size_t width);

struct GenerateOptions {
  std::size_t num_sequences = 100;
  std::size_t frames = 20;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t glyphs = 1;
  std::uint64_t seed = 1;
  double min_speed = 1.0;
  double max_speed = 2.5;
};

/// Bouncing-glyph sequences. Sequence i draws from a generator seeded by
/// (seed, i), so the output does not depend on generation order.
Dataset generate(const GenerateOptions& options);

/// Binary format: "SRVPDS1\n", five u32 LE (num_sequences, T, C, H, W), u8 payload.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) of one single-channel frame.
void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> frame,
               std::size_t height, std::size_t width);

/// Mini-batch of `size` sequences split into inputs [B,N,C,H,W] and targets [B,P,C,H,W].
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<Tensor> inputs;   // per sequence [N,C,H,W]
  std::vector<Tensor> targets;  // per sequence [P,C,H,W]
};

/// Deterministically shuffled mini-batches over one epoch. The last batch may
/// be smaller.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t input_len, std::size_t pred_len,
                std::size_t batch_size, std::uint64_t shuffle_seed);

  bool next(Batch& batch);
  std::size_t num_batches() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset& ds_;
  std::size_t input_len_;
  std::size_t pred_len_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace srvp
