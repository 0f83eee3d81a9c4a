#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffcast/tensor.hpp"

namespace diffcast {

/// A multivariate series stored column-major: variable j occupies
/// values[j * length, (j + 1) * length).
struct RawSeries {
  std::vector<std::string> names;
  std::string frequency;
  std::size_t length = 0;
  std::vector<double> values;

  std::size_t variables() const noexcept { return names.size(); }
  double at(std::size_t t, std::size_t var) const { return values[var * length + t]; }
  std::span<const double> column(std::size_t var) const {
    return {values.data() + var * length, length};
  }
  /// Rows [begin, begin + count).
  RawSeries slice(std::size_t begin, std::size_t count) const;
  /// Builds a series from per-variable columns of equal length.
  static RawSeries from_columns(std::vector<std::string> names, std::vector<std::vector<double>> columns,
                                std::string frequency = {});
};

/// One lookback/horizon pair cut from a contiguous stretch of a series.
struct SeriesWindow {
  Tensor lookback;  // (d, L)
  Tensor target;    // (d, H)
  std::size_t origin = 0;  // row index of the first lookback step
};

/// Reads a CSV with a header row. A leading date/time column (by header name
/// or by a date-like first cell) is skipped; every other cell must parse as a
/// number. Errors carry the 1-based file row and column.
RawSeries load_csv(const std::string& path);
void write_csv(const std::string& path, const RawSeries& series);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

struct SplitRatios {
  std::array<double, 3> parts{6.0, 2.0, 2.0};
};

struct Splits {
  RawSeries train, valid, test;
};

/// Chronological train/valid/test partition. The first two splits get
/// floor(N * r_i / sum r) rows and the test split takes the remainder. If
/// min_length > 0 each split must have at least that many rows.
Splits chronological_split(const RawSeries& series, const SplitRatios& ratios,
                           std::size_t min_length = 0);

/// Windows starting at 0, stride, 2*stride, ...; count is (N - L - H) / stride + 1.
std::vector<SeriesWindow> sliding_windows(const RawSeries& split, std::size_t lookback,
                                          std::size_t horizon, std::size_t stride = 1);

enum class UnivariateMode { LastVariable, PerVariable };

std::vector<RawSeries> univariate_extract(const RawSeries& series, UnivariateMode mode);

enum class SynthKind { SineMix, TrendSine, RandomWalk };

SynthKind parse_synth_kind(const std::string& name);
std::string to_string(SynthKind kind);

struct SynthSpec {
  SynthKind kind = SynthKind::SineMix;
  std::size_t variables = 1;
  std::size_t length = 1000;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
};

/// sine_mix: two sinusoids per variable with integer periods (24 and one of
/// 12, 8, 6, 16, 48) plus Gaussian noise. trend_sine: linear trend plus a
/// period-24 sinusoid plus noise. random_walk: cumulative sum of N(0,
/// noise_std^2) steps drawn variable by variable from one seeded stream.
RawSeries synth_generate(const SynthSpec& spec);

/// Period after which a noise-free sine_mix variable repeats exactly.
std::size_t sine_mix_period(std::size_t variable);

}  // namespace diffcast
