#include "diffcast/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "diffcast/error.hpp"
#include "diffcast/rng.hpp"

namespace diffcast {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_number(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto result = std::from_chars(begin, end, out);
  return result.ec == std::errc() && result.ptr == end && std::isfinite(out);
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool looks_like_timestamp(const std::string& header, const std::string& first_cell) {
  const std::string h = lowercase(header);
  if (h == "date" || h == "time" || h == "timestamp" || h == "datetime") return true;
  double ignored = 0.0;
  if (parse_number(first_cell, ignored)) return false;
  const bool has_digit = std::any_of(first_cell.begin(), first_cell.end(),
                                     [](unsigned char c) { return std::isdigit(c); });
  const bool has_sep = first_cell.find_first_of("-:/T ") != std::string::npos;
  return has_digit && has_sep;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

RawSeries RawSeries::slice(std::size_t begin, std::size_t count) const {
  require(begin + count <= length, ErrorKind::Data, "series slice out of range");
  RawSeries out{names, frequency, count, {}};
  out.values.reserve(count * variables());
  for (std::size_t j = 0; j < variables(); ++j) {
    const auto col = column(j);
    out.values.insert(out.values.end(), col.begin() + static_cast<std::ptrdiff_t>(begin),
                      col.begin() + static_cast<std::ptrdiff_t>(begin + count));
  }
  return out;
}

RawSeries RawSeries::from_columns(std::vector<std::string> names,
                                  std::vector<std::vector<double>> columns, std::string frequency) {
  require(names.size() == columns.size() && !columns.empty(), ErrorKind::Data,
          "from_columns: need one name per column");
  RawSeries out{std::move(names), std::move(frequency), columns.front().size(), {}};
  for (const auto& c : columns) {
    require(c.size() == out.length, ErrorKind::Data, "from_columns: columns differ in length");
    out.values.insert(out.values.end(), c.begin(), c.end());
  }
  return out;
}

RawSeries load_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!trim(line).empty()) header = split_row(line);
  }
  require(!header.empty(), ErrorKind::Data, "'" + path + "' is empty");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    rows.push_back(split_row(line));
    line_numbers.push_back(line_no);
  }
  require(!rows.empty(), ErrorKind::Data, "'" + path + "' has a header but no data rows");

  const std::size_t skip = looks_like_timestamp(header[0], rows[0].at(0)) ? 1 : 0;
  require(header.size() > skip, ErrorKind::Data, "'" + path + "' has no numeric columns");
  const std::size_t vars = header.size() - skip;

  std::vector<std::vector<double>> columns(vars, std::vector<double>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == header.size(), ErrorKind::Data,
            "row " + std::to_string(line_numbers[r]) + " has " + std::to_string(rows[r].size()) +
                " cells, expected " + std::to_string(header.size()));
    for (std::size_t j = 0; j < vars; ++j) {
      const std::string& cell = rows[r][j + skip];
      double v = 0.0;
      if (!parse_number(cell, v)) {
        fail(ErrorKind::Data, (cell.empty() ? "missing value" : "non-numeric value '" + cell + "'") +
                                  " at row " + std::to_string(line_numbers[r]) + ", column " +
                                  std::to_string(j + skip + 1) + " (" + header[j + skip] + ")");
      }
      columns[j][r] = v;
    }
  }
  return RawSeries::from_columns({header.begin() + static_cast<std::ptrdiff_t>(skip), header.end()},
                                 std::move(columns));
}

void write_csv(const std::string& path, const RawSeries& series) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write '" + path + "'");
  for (std::size_t j = 0; j < series.variables(); ++j) out << (j ? "," : "") << series.names[j];
  out << '\n';
  for (std::size_t t = 0; t < series.length; ++t) {
    for (std::size_t j = 0; j < series.variables(); ++j) {
      out << (j ? "," : "") << format_double(series.at(t, j));
    }
    out << '\n';
  }
  require(out.good(), ErrorKind::Io, "write to '" + path + "' failed");
}

Splits chronological_split(const RawSeries& series, const SplitRatios& ratios, std::size_t min_length) {
  const auto& r = ratios.parts;
  require(std::all_of(r.begin(), r.end(), [](double x) { return x > 0.0 && std::isfinite(x); }),
          ErrorKind::Config, "split ratios must be positive");
  const double total = r[0] + r[1] + r[2];
  const auto n = series.length;
  const auto train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[0] / total));
  const auto valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[1] / total));
  const std::size_t test = n - train - valid;
  const std::array<std::pair<const char*, std::size_t>, 3> sizes{
      {{"train", train}, {"valid", valid}, {"test", test}}};
  for (const auto& [name, size] : sizes) {
    require(size >= min_length && size > 0, ErrorKind::Data,
            std::string(name) + " split has " + std::to_string(size) +
                " rows, need at least " + std::to_string(std::max<std::size_t>(min_length, 1)));
  }
  return {series.slice(0, train), series.slice(train, valid), series.slice(train + valid, test)};
}

std::vector<SeriesWindow> sliding_windows(const RawSeries& split, std::size_t lookback,
                                          std::size_t horizon, std::size_t stride) {
  require(lookback >= 1 && horizon >= 1 && stride >= 1, ErrorKind::Config,
          "lookback, horizon and stride must be positive");
  require(split.length >= lookback + horizon, ErrorKind::Data,
          "split of " + std::to_string(split.length) + " rows is shorter than lookback + horizon = " +
              std::to_string(lookback + horizon));
  const std::size_t d = split.variables();
  const std::size_t count = (split.length - lookback - horizon) / stride + 1;
  std::vector<SeriesWindow> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t origin = w * stride;
    SeriesWindow win{Tensor({d, lookback}), Tensor({d, horizon}), origin};
    for (std::size_t j = 0; j < d; ++j) {
      const auto col = split.column(j);
      for (std::size_t t = 0; t < lookback; ++t) win.lookback.at(j, t) = col[origin + t];
      for (std::size_t t = 0; t < horizon; ++t) win.target.at(j, t) = col[origin + lookback + t];
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

std::vector<RawSeries> univariate_extract(const RawSeries& series, UnivariateMode mode) {
  require(series.variables() >= 1, ErrorKind::Data, "series has no variables");
  std::vector<RawSeries> out;
  auto single = [&](std::size_t j) {
    const auto col = series.column(j);
    return RawSeries{{series.names[j]}, series.frequency, series.length, {col.begin(), col.end()}};
  };
  if (mode == UnivariateMode::LastVariable) {
    out.push_back(single(series.variables() - 1));
  } else {
    for (std::size_t j = 0; j < series.variables(); ++j) out.push_back(single(j));
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "sine_mix") return SynthKind::SineMix;
  if (name == "trend_sine") return SynthKind::TrendSine;
  if (name == "random_walk") return SynthKind::RandomWalk;
  fail(ErrorKind::Config, "unknown synthetic kind '" + name + "'");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::SineMix: return "sine_mix";
    case SynthKind::TrendSine: return "trend_sine";
    case SynthKind::RandomWalk: return "random_walk";
  }
  return "unknown";
}

namespace {
constexpr std::array<std::size_t, 5> kSecondPeriods{12, 8, 6, 16, 48};
constexpr std::size_t kBasePeriod = 24;
}  // namespace

std::size_t sine_mix_period(std::size_t variable) {
  return std::lcm(kBasePeriod, kSecondPeriods[variable % kSecondPeriods.size()]);
}

RawSeries synth_generate(const SynthSpec& spec) {
  require(spec.length >= 1 && spec.variables >= 1, ErrorKind::Config,
          "synthetic series needs at least one row and one variable");
  require(spec.noise_std >= 0.0, ErrorKind::Config, "noise_std must be non-negative");
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  for (std::size_t j = 0; j < spec.variables; ++j) {
    names.push_back("x" + std::to_string(j));
    std::vector<double> col(spec.length);
    switch (spec.kind) {
      case SynthKind::SineMix: {
        const double p2 = static_cast<double>(kSecondPeriods[j % kSecondPeriods.size()]);
        const double phase1 = two_pi * uniform01(rng);
        const double phase2 = two_pi * uniform01(rng);
        for (std::size_t t = 0; t < spec.length; ++t) {
          const double tt = static_cast<double>(t);
          col[t] = std::sin(two_pi * tt / static_cast<double>(kBasePeriod) + phase1) +
                   0.5 * std::sin(two_pi * tt / p2 + phase2);
        }
        for (auto& v : col) v += spec.noise_std * normal(rng);
        break;
      }
      case SynthKind::TrendSine: {
        const double slope = 0.002 * static_cast<double>(j + 1);
        const double phase = two_pi * uniform01(rng);
        for (std::size_t t = 0; t < spec.length; ++t) {
          const double tt = static_cast<double>(t);
          col[t] = slope * tt + std::sin(two_pi * tt / static_cast<double>(kBasePeriod) + phase) +
                   spec.noise_std * normal(rng);
        }
        break;
      }
      case SynthKind::RandomWalk: {
        double level = 0.0;
        for (auto& v : col) {
          level += spec.noise_std * normal(rng);
          v = level;
        }
        break;
      }
    }
    columns.push_back(std::move(col));
  }
  return RawSeries::from_columns(std::move(names), std::move(columns), "synthetic");
}

}  // namespace diffcast
