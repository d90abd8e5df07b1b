#include "xbarsim/dataset.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>

namespace xbarsim {

Samples Dataset::samples() const {
  Samples out{features, Matrix::Zero(size(), num_classes)};
  for (Eigen::Index s = 0; s < size(); ++s) out.targets(s, labels[static_cast<std::size_t>(s)]) = 1.0;
  return out;
}

double accuracy(const Mlp& net, const Dataset& data, const Backend& backend) {
  if (data.size() == 0) throw ShapeError("dataset", "accuracy of an empty dataset");
  Eigen::Index correct = 0;
  for (Eigen::Index s = 0; s < data.size(); ++s) {
    Backend sample_backend = backend;
    if (auto* xbars = std::get_if<CrossbarBackend>(&sample_backend)) {
      xbars->call_index = static_cast<std::uint64_t>(s);
    }
    const Vector y = forward(net, data.features.row(s).transpose(), sample_backend);
    if (argmax(y) == data.labels[static_cast<std::size_t>(s)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

// clang-format off
constexpr std::array<std::array<const char*, 8>, 10> kGlyphs = {{
    {"..####..", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", "..####.."},
    {"...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...", ".######."},
    {"..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....", ".##.....", ".######."},
    {"..####..", ".##..##.", ".....##.", "...###..", ".....##.", ".....##.", ".##..##.", "..####.."},
    {"....##..", "...###..", "..####..", ".##.##..", ".######.", "....##..", "....##..", "....##.."},
    {".######.", ".##.....", ".#####..", ".....##.", ".....##.", ".....##.", ".##..##.", "..####.."},
    {"..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.", ".##..##.", "..####.."},
    {".######.", ".....##.", "....##..", "....##..", "...##...", "...##...", "..##....", "..##...."},
    {"..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.", ".##..##.", "..####.."},
    {"..####..", ".##..##.", ".##..##.", ".##..##.", "..#####.", ".....##.", ".....##.", "..####.."},
}};
// clang-format on

constexpr int kPixels = 64;
constexpr int kJitterPixels = 3;

Dataset sample_split(const std::vector<Vector>& templates, int count, RandomStream stream,
                     double noise) {
  Dataset data{Matrix(count, kPixels), std::vector<int>(static_cast<std::size_t>(count)), 10};
  for (int s = 0; s < count; ++s) {
    const int label = s % 10;
    const double contrast = stream.uniform(0.6, 1.0);
    for (int p = 0; p < kPixels; ++p) {
      const double value = contrast * templates[static_cast<std::size_t>(label)][p] +
                           noise * stream.normal();
      data.features(s, p) = std::clamp(value, 0.0, 1.0);
    }
    data.labels[static_cast<std::size_t>(s)] = label;
  }
  return data;
}

}  // namespace

DatasetSplit synthetic_digits(std::uint64_t seed, int train_size, int test_size,
                              double pixel_noise) {
  if (train_size < 1 || test_size < 1 || !(pixel_noise >= 0.0)) {
    throw ParameterError("dataset", "synthetic_digits: sizes must be >= 1 and noise >= 0");
  }
  const RandomStream root(seed, 0x64696769ULL);
  std::vector<Vector> templates;
  for (std::size_t digit = 0; digit < kGlyphs.size(); ++digit) {
    Vector t(kPixels);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) t[r * 8 + c] = kGlyphs[digit][static_cast<std::size_t>(r)][c] == '#' ? 1.0 : 0.0;
    }
    RandomStream jitter = root.fork({1, digit});
    for (int k = 0; k < kJitterPixels; ++k) {
      const auto p = static_cast<Eigen::Index>(jitter.next_u64() % kPixels);
      t[p] = 1.0 - t[p];
    }
    templates.push_back(std::move(t));
  }
  return {sample_split(templates, train_size, root.fork(2), pixel_noise),
          sample_split(templates, test_size, root.fork(3), pixel_noise)};
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  auto is_delim = [](char c) { return c == ',' || c == ';' || c == '\t' || c == ' '; };
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || is_delim(line[k])) {
      if (k > start) fields.push_back(line.substr(start, k - start));
      start = k + 1;
    }
  }
  return fields;
}

bool parse_number(std::string_view text, double& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset parse_delimited(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size(); ++k) numeric = numeric && parse_number(fields[k], values[k]);
    if (!numeric) {
      if (rows.empty() && labels.empty()) continue;  // header
      throw IoError("dataset", "line " + std::to_string(line_no) + ": non-numeric field");
    }
    if (fields.size() < 2) {
      throw IoError("dataset", "line " + std::to_string(line_no) + ": need features and a label");
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw IoError("dataset", "line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(width) + " fields, found " +
                                   std::to_string(fields.size()));
    }
    const double label = values.back();
    if (label < 0.0 || label != std::floor(label)) {
      throw IoError("dataset", "line " + std::to_string(line_no) + ": label must be a non-negative integer");
    }
    values.pop_back();
    rows.push_back(std::move(values));
    labels.push_back(static_cast<int>(label));
  }
  if (rows.empty()) throw IoError("dataset", "no samples found");
  Dataset data{Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1)),
               std::move(labels), 0};
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t p = 0; p + 1 < width; ++p) data.features(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(p)) = rows[s][p];
  }
  data.num_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

Dataset load_delimited(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("dataset", "cannot open " + path.string());
  return parse_delimited(in);
}

}  // namespace xbarsim
