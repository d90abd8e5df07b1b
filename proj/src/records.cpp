#include "xbarsim/records.hpp"

#include <charconv>
#include <limits>
#include <sstream>

namespace xbarsim {

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

namespace {

constexpr const char* kWeightsMagic = "xbarsim-weights";
constexpr const char* kCrossbarMagic = "xbarsim-crossbar";
constexpr int kFormatVersion = 1;

// Whitespace-separated tokens with line numbers for diagnostics.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word(const char* what) {
    std::string token;
    if (!next(token)) fail(std::string("unexpected end of record, expected ") + what);
    return token;
  }

  void expect(const std::string& keyword) {
    const std::string token = word(keyword.c_str());
    if (token != keyword) fail("expected '" + keyword + "', found '" + token + "'");
  }

  template <typename T>
  T number(const char* what) {
    const std::string token = word(what);
    T value{};
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      fail(std::string("bad ") + what + " '" + token + "'");
    }
    return value;
  }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = number<double>("matrix entry");
    }
    return m;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw IoError("records", "line " + std::to_string(line_) + ": " + message);
  }

 private:
  bool next(std::string& token) {
    token.clear();
    char c;
    while (in_.get(c)) {
      if (c == '\n') {
        if (!token.empty()) {
          in_.unget();
          return true;
        }
        ++line_;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        if (!token.empty()) return true;
      } else {
        token.push_back(c);
      }
    }
    return !token.empty();
  }

  std::istream& in_;
  int line_ = 1;
};

void write_header(std::ostream& out, const char* magic, const RecordHeader& header) {
  out << magic << ' ' << kFormatVersion << '\n'
      << "config_digest " << header.config_digest << '\n'
      << "seed " << header.seed << '\n';
}

RecordHeader read_header(TokenReader& reader, const char* magic) {
  reader.expect(magic);
  const int version = reader.number<int>("format version");
  if (version != kFormatVersion) reader.fail("unsupported format version " + std::to_string(version));
  RecordHeader header;
  reader.expect("config_digest");
  header.config_digest = reader.word("config digest");
  reader.expect("seed");
  header.seed = reader.number<std::uint64_t>("seed");
  return header;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_mask(std::ostream& out, const BoolMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << (m(i, j) ? 1 : 0);
    out << '\n';
  }
}

}  // namespace

void write_weights(std::ostream& out, const Mlp& net, const RecordHeader& header) {
  write_header(out, kWeightsMagic, header);
  out << "layers " << net.depth() << '\n';
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const DenseLayer& layer = net.layers()[l];
    out << "layer " << l << ' ' << layer.weights.rows() << ' ' << layer.weights.cols() << ' '
        << to_string(layer.activation) << '\n';
    write_matrix(out, layer.weights);
  }
}

WeightsRecord read_weights(std::istream& in) {
  TokenReader reader(in);
  WeightsRecord record;
  record.header = read_header(reader, kWeightsMagic);
  reader.expect("layers");
  const auto depth = reader.number<std::size_t>("layer count");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < depth; ++l) {
    reader.expect("layer");
    if (reader.number<std::size_t>("layer index") != l) reader.fail("layers out of order");
    const auto rows = reader.number<Eigen::Index>("rows");
    const auto cols = reader.number<Eigen::Index>("cols");
    if (rows < 2 || cols < 1) reader.fail("layer shape must be at least 2 x 1");
    const std::string activation = reader.word("activation");
    DenseLayer layer;
    try {
      layer.activation = activation_from_string(activation);
    } catch (const LookupError& e) {
      reader.fail(e.what());
    }
    layer.weights = reader.matrix(rows, cols);
    layers.push_back(std::move(layer));
  }
  try {
    record.net = Mlp(std::move(layers));
  } catch (const Error& e) {
    throw IoError("records", std::string("weights record: ") + e.what());
  }
  return record;
}

void write_crossbars(std::ostream& out, std::span<const Crossbar> arrays,
                     const RecordHeader& header) {
  write_header(out, kCrossbarMagic, header);
  out << "arrays " << arrays.size() << '\n';
  for (std::size_t l = 0; l < arrays.size(); ++l) {
    const Crossbar& xbar = arrays[l];
    const MappingScheme& s = xbar.scheme();
    out << "array " << l << ' ' << to_string(s.variant()) << ' ' << xbar.rows() << ' '
        << xbar.cols() << ' ' << xbar.g_minus().cols() << '\n'
        << "window " << format_double(s.window().g_off()) << ' '
        << format_double(s.window().g_on()) << '\n'
        << "scaling " << format_double(s.scaling().k_V) << ' ' << format_double(s.scaling().k_G)
        << '\n'
        << "range " << format_double(s.w_max_abs()) << ' ' << format_double(s.w_min()) << ' '
        << format_double(s.w_max()) << ' ' << format_double(s.power()) << '\n';
    out << "g_plus\n";
    write_matrix(out, xbar.g_plus());
    out << "g_minus\n";
    write_matrix(out, xbar.g_minus());
    out << "stuck_plus\n";
    write_mask(out, xbar.mask_plus().stuck);
    out << "stuck_minus\n";
    write_mask(out, xbar.mask_minus().stuck);
  }
}

namespace {

StuckMask read_mask(TokenReader& reader, const Matrix& g) {
  StuckMask mask = StuckMask::none(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const int flag = reader.number<int>("stuck flag");
      if (flag != 0 && flag != 1) reader.fail("stuck flags must be 0 or 1");
      if (flag) {
        mask.stuck(i, j) = true;
        mask.value(i, j) = g(i, j);
      }
    }
  }
  return mask;
}

}  // namespace

CrossbarRecord read_crossbars(std::istream& in) {
  TokenReader reader(in);
  CrossbarRecord record;
  record.header = read_header(reader, kCrossbarMagic);
  reader.expect("arrays");
  const auto count = reader.number<std::size_t>("array count");
  for (std::size_t l = 0; l < count; ++l) {
    reader.expect("array");
    if (reader.number<std::size_t>("array index") != l) reader.fail("arrays out of order");
    const std::string variant_name = reader.word("mapping variant");
    const auto rows = reader.number<Eigen::Index>("rows");
    const auto cols = reader.number<Eigen::Index>("cols");
    const auto minus_cols = reader.number<Eigen::Index>("reference columns");
    if (rows < 1 || cols < 1 || minus_cols < 1) reader.fail("array dimensions must be >= 1");
    reader.expect("window");
    const double g_off = reader.number<double>("g_off");
    const double g_on = reader.number<double>("g_on");
    reader.expect("scaling");
    const double k_v = reader.number<double>("k_V");
    const double k_g = reader.number<double>("k_G");
    reader.expect("range");
    const double w_max_abs = reader.number<double>("w_max_abs");
    const double w_min = reader.number<double>("w_min");
    const double w_max = reader.number<double>("w_max");
    const double power = reader.number<double>("power");
    try {
      const ConductanceWindow window(g_off, g_on);
      switch (mapping_variant_from_string(variant_name)) {
        case MappingVariant::DifferentialPair:
          record.schemes.push_back(MappingScheme::differential_pair(window, w_max_abs, k_v, k_g));
          break;
        case MappingVariant::Naive:
          record.schemes.push_back(MappingScheme::naive(window, w_min, w_max, k_v));
          break;
        case MappingVariant::NonlinearPower:
          record.schemes.push_back(MappingScheme::nonlinear_power(window, w_min, w_max, power, k_v));
          break;
      }
    } catch (const Error& e) {
      reader.fail(std::string("array ") + std::to_string(l) + ": " + e.what());
    }
    CrossbarSnapshot snapshot;
    reader.expect("g_plus");
    snapshot.g_plus = reader.matrix(rows, cols);
    reader.expect("g_minus");
    snapshot.g_minus = reader.matrix(rows, minus_cols);
    reader.expect("stuck_plus");
    snapshot.mask_plus = read_mask(reader, snapshot.g_plus);
    reader.expect("stuck_minus");
    snapshot.mask_minus = read_mask(reader, snapshot.g_minus);
    record.arrays.push_back(std::move(snapshot));
  }
  return record;
}

std::vector<Crossbar> restore_crossbars(const CrossbarRecord& record, const CrossbarConfig& base,
                                        const RandomStream& lineage) {
  std::vector<Crossbar> out;
  for (std::size_t l = 0; l < record.arrays.size(); ++l) {
    CrossbarConfig config = base;
    config.scheme = record.schemes[l];
    out.push_back(Crossbar::restore(config, lineage.fork(l), record.arrays[l]));
  }
  return out;
}

}  // namespace xbarsim
