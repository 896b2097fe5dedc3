#include "opflab/error.hpp"
#include "opflab/grid_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace opflab {

namespace {

constexpr std::string_view kMagic = "#opfds v1";
constexpr std::string_view kFields = "#fields x=pd0,qd0,pg0,qg0,v0,theta0,pd,qd y=pg,qg,v,theta";
constexpr std::string_view kDelta = "#delta_pct ";

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

std::size_t parse_key(std::string_view header, std::string_view key) {
  const std::string pattern = " " + std::string(key) + "=";
  const auto pos = header.find(pattern);
  if (pos == std::string_view::npos) {
    throw Error(ErrorCode::IoFailure, "dataset header lacks '" + std::string(key) + "'");
  }
  std::size_t value = 0;
  const char* begin = header.data() + pos + pattern.size();
  const auto res = std::from_chars(begin, header.data() + header.size(), value);
  if (res.ec != std::errc()) {
    throw Error(ErrorCode::IoFailure, "dataset header has bad '" + std::string(key) + "'");
  }
  return value;
}

}  // namespace

std::span<const double> block(const Sample& s, InputBlock b, std::size_t n) {
  return std::span<const double>(s.x).subspan(static_cast<std::size_t>(b) * n, n);
}
std::span<double> block(Sample& s, InputBlock b, std::size_t n) {
  return std::span<double>(s.x).subspan(static_cast<std::size_t>(b) * n, n);
}
std::span<const double> block(const Sample& s, TargetBlock b, std::size_t n) {
  return std::span<const double>(s.y).subspan(static_cast<std::size_t>(b) * n, n);
}
std::span<double> block(Sample& s, TargetBlock b, std::size_t n) {
  return std::span<double>(s.y).subspan(static_cast<std::size_t>(b) * n, n);
}

bool has_hot_start(const Sample& s, std::size_t n) {
  for (std::size_t i = 0; i < 6 * n; ++i) {
    if (s.x[i] != 0.0) return true;
  }
  return false;
}

double hot_start_load_gap_pct(const Sample& s, std::size_t n) {
  double hot = 0.0;
  double now = 0.0;
  for (double v : block(s, InputBlock::PdHot, n)) hot += std::abs(v);
  for (double v : block(s, InputBlock::Pd, n)) now += std::abs(v);
  return std::abs(hot - now) / now * 100.0;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  const std::size_t n = data.dims.n;
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    if (data.samples[k].x.size() != 8 * n || data.samples[k].y.size() != 4 * n) {
      throw Error(ErrorCode::DimensionMismatch,
                  "sample " + std::to_string(k) + " is not dimensioned 8n/4n with n=" + std::to_string(n));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());

  std::string line;
  line.append(kMagic);
  line += " n=" + std::to_string(n) + " l=" + std::to_string(data.dims.l) +
          " g=" + std::to_string(data.dims.g) + " e=" + std::to_string(data.dims.e) + "\n";
  line.append(kFields);
  line += '\n';
  if (data.delta_pct) {
    line.append(kDelta);
    append_number(line, *data.delta_pct);
    line += '\n';
  }
  out << line;
  for (const Sample& s : data.samples) {
    line.clear();
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) line += ' ';
      append_number(line, s.x[i]);
    }
    for (double v : s.y) {
      line += ' ';
      append_number(line, v);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());

  Dataset data;
  std::string line;
  if (!std::getline(in, line) || !line.starts_with(kMagic)) {
    throw Error(ErrorCode::IoFailure, path.string() + " is not an opfds v1 file");
  }
  data.dims = {parse_key(line, "n"), parse_key(line, "l"), parse_key(line, "g"), parse_key(line, "e")};
  const std::size_t n = data.dims.n;
  const std::size_t width = 12 * n;

  std::size_t lineno = 1;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.starts_with(kDelta)) {
        double d = 0.0;
        const char* b = line.data() + kDelta.size();
        if (std::from_chars(b, line.data() + line.size(), d).ec != std::errc()) {
          throw Error(ErrorCode::IoFailure, "bad #delta_pct line");
        }
        data.delta_pct = d;
      }
      continue;
    }
    values.clear();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\r')) ++p;
      if (p == end) break;
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        throw Error(ErrorCode::IoFailure, path.string() + ":" + std::to_string(lineno) + ": bad number");
      }
      values.push_back(v);
      p = res.ptr;
    }
    if (values.size() != width) {
      throw Error(ErrorCode::DimensionMismatch,
                  path.string() + ":" + std::to_string(lineno) + ": record has " +
                      std::to_string(values.size()) + " values, expected 8n+4n=" + std::to_string(width));
    }
    Sample s;
    s.x.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(8 * n));
    s.y.assign(values.begin() + static_cast<std::ptrdiff_t>(8 * n), values.end());
    data.samples.push_back(std::move(s));
  }

  if (data.delta_pct) {
    for (std::size_t k = 0; k < data.samples.size(); ++k) {
      const Sample& s = data.samples[k];
      if (has_hot_start(s, n) && !(hot_start_load_gap_pct(s, n) <= *data.delta_pct)) {
        throw Error(ErrorCode::PairingViolation,
                    "record " + std::to_string(k) + " exceeds the declared hot-start threshold");
      }
    }
  }
  return data;
}

}  // namespace opflab
