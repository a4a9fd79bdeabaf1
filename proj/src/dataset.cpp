#include "wtpgd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace wtpgd {

Tensor Dataset::input(std::size_t i, const Shape& shape) const {
  if (i >= size()) throw Error("dataset index " + std::to_string(i) + " out of range");
  std::vector<double> row(pixels.begin() + static_cast<std::ptrdiff_t>(i * dim),
                          pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  if (shape.empty()) return Tensor::vector(std::move(row));
  return Tensor(shape, std::move(row));
}

void Dataset::push_back(std::span<const double> x, std::size_t label) {
  if (x.size() != dim) throw ShapeError("point has " + std::to_string(x.size()) + " values, expected " + std::to_string(dim));
  if (label >= classes) throw Error("label " + std::to_string(label) + " out of range");
  pixels.insert(pixels.end(), x.begin(), x.end());
  labels.push_back(label);
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
  Dataset out{dim, classes, {}, {}};
  out.pixels.reserve(indices.size() * dim);
  for (auto i : indices) {
    out.push_back(std::span<const double>(pixels).subspan(i * dim, dim), labels.at(i));
  }
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  std::vector<std::size_t> idx(std::min(count, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return select(idx);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  do {
    if (!std::getline(in, line)) fail(source, lineno + 1, "missing header `N d C`");
    ++lineno;
  } while (trim(line).empty());

  std::istringstream header(line);
  long long n = -1, d = -1, c = -1;
  std::string extra;
  if (!(header >> n >> d >> c) || (header >> extra) || n < 1 || d < 1 || c < 2) {
    fail(source, lineno, "header must be `N d C` with N >= 1, d >= 1, C >= 2");
  }
  Dataset data{static_cast<std::size_t>(d), static_cast<std::size_t>(c), {}, {}};
  data.pixels.reserve(static_cast<std::size_t>(n * d));
  std::vector<double> row(data.dim);
  while (data.size() < static_cast<std::size_t>(n)) {
    if (!std::getline(in, line)) {
      fail(source, lineno + 1, "expected " + std::to_string(n) + " data rows, found " + std::to_string(data.size()));
    }
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(t);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (fields.size() != data.dim + 1) {
      fail(source, lineno, "expected " + std::to_string(data.dim) + " values and a label, got " +
                               std::to_string(fields.size()) + " fields");
    }
    for (std::size_t j = 0; j < data.dim; ++j) {
      const auto& f = fields[j];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) fail(source, lineno, "malformed value '" + f + "'");
      if (!(v >= 0.0 && v <= 1.0)) fail(source, lineno, "value " + f + " outside [0, 1]");
      row[j] = v;
    }
    const auto& lf = fields.back();
    long long label = -1;
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size()) fail(source, lineno, "malformed label '" + lf + "'");
    if (label < 0 || label >= c) fail(source, lineno, "label " + lf + " outside [0, " + std::to_string(c) + ")");
    data.pixels.insert(data.pixels.end(), row.begin(), row.end());
    data.labels.push_back(static_cast<std::size_t>(label));
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) fail(source, lineno, "more rows than the header's N=" + std::to_string(n));
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  return parse_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << data.size() << ' ' << data.dim << ' ' << data.classes << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim; ++j) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), data.pixels[i * data.dim + j]);
      out.write(buf, ptr - buf);
      out << ',';
    }
    out << data.labels[i] << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path.string());
  write_dataset(out, data);
}

Dataset make_moons(std::size_t count, double noise, Rng& rng) {
  Dataset data{2, 2, {}, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % 2;
    const double t = std::numbers::pi * rng.uniform();
    double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x += noise * rng.normal();
    y += noise * rng.normal();
    // Raw moons live in roughly [-1, 2] x [-0.5, 1]; map into the unit box.
    const double px = std::clamp((x + 1.25) / 3.5, 0.0, 1.0);
    const double py = std::clamp((y + 0.75) / 2.0, 0.0, 1.0);
    const double p[2] = {px, py};
    data.push_back(p, label);
  }
  return data;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction, Rng& rng) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw Error("holdout fraction must be in [0, 1)");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto held = static_cast<std::size_t>(std::round(holdout_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
  return {data.select(train), data.select(test)};
}

}  // namespace wtpgd
