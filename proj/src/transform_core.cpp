#include "ordsr/transform_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "ordsr/rng.hpp"

namespace ordsr {

namespace {

constexpr std::string_view kBankMagic = "ORDSRFBK";
constexpr std::uint32_t kBankVersion = 1;

void require_block_size(int n) {
  if (n < 2) throw std::invalid_argument("block size n must be >= 2");
}

}  // namespace

const char* to_string(FilterTag tag) {
  switch (tag) {
    case FilterTag::DctInitialized: return "dct";
    case FilterTag::Learned: return "learned";
    case FilterTag::Random: return "random";
  }
  return "learned";
}

FilterTag filter_tag_from_string(const std::string& s) {
  if (s == "dct") return FilterTag::DctInitialized;
  if (s == "learned") return FilterTag::Learned;
  if (s == "random") return FilterTag::Random;
  throw std::invalid_argument("unknown filter tag: " + s);
}

FilterBank::FilterBank(int n, std::vector<Filter> filters)
    : n_(n), filters_(std::move(filters)) {
  require_block_size(n);
  if (filters_.size() != filter_size()) {
    throw std::invalid_argument("filter bank must hold exactly n^2 filters");
  }
  for (const auto& f : filters_) {
    if (f.values.height() != static_cast<std::size_t>(n) ||
        f.values.width() != static_cast<std::size_t>(n)) {
      throw std::invalid_argument("filter dims do not match bank block size");
    }
    for (double v : f.values.values()) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("filter entries must be finite");
      }
    }
  }
}

void FilterBank::set_tag(FilterTag tag) {
  for (auto& f : filters_) f.tag = tag;
}

FilterBank FilterBank::scaled(double factor) const {
  FilterBank out = *this;
  for (auto& f : out.filters_) {
    for (double& v : f.values.values()) v *= factor;
  }
  return out;
}

bool FilterBank::operator==(const FilterBank& other) const {
  if (n_ != other.n_ || filters_.size() != other.filters_.size()) return false;
  for (std::size_t i = 0; i < filters_.size(); ++i) {
    if (filters_[i].values != other.filters_[i].values) return false;
  }
  return true;
}

ZigZag::ZigZag(int n) : n_(n) {
  require_block_size(n);
  index_of_.assign(static_cast<std::size_t>(n * n), 0);
  position_of_.reserve(static_cast<std::size_t>(n * n));
  // Diagonal d holds k1 + k2 = d. Odd diagonals run top-right to bottom-left
  // (k1 increasing), even diagonals the other way, as in baseline JPEG.
  for (int d = 0; d <= 2 * (n - 1); ++d) {
    const int lo = std::max(0, d - (n - 1));
    const int hi = std::min(d, n - 1);
    for (int step = 0; step <= hi - lo; ++step) {
      const int k1 = (d % 2 == 1) ? lo + step : hi - step;
      const int k2 = d - k1;
      position_of_.push_back({k1, k2});
      index_of_[static_cast<std::size_t>(k1 * n + k2)] =
          static_cast<int>(position_of_.size());
    }
  }
}

int ZigZag::index(int k1, int k2) const {
  if (k1 < 0 || k2 < 0 || k1 >= n_ || k2 >= n_) {
    throw std::out_of_range("zig-zag frequency index out of range");
  }
  return index_of_[static_cast<std::size_t>(k1 * n_ + k2)];
}

BasisIndex2D ZigZag::position(int index) const {
  if (index < 1 || index > n_ * n_) {
    throw std::out_of_range("zig-zag index out of range");
  }
  return position_of_[static_cast<std::size_t>(index - 1)];
}

ZigZag zigzag(int n) { return ZigZag(n); }

double dct_basis_value(int n, int k1, int k2, int n1, int n2) {
  const double nn = static_cast<double>(n);
  const double a1 = k1 == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
  const double a2 = k2 == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
  const double pi = std::numbers::pi;
  return a1 * a2 * std::cos(pi / nn * (n1 + 0.5) * k1) *
         std::cos(pi / nn * (n2 + 0.5) * k2);
}

FilterBank dct_basis(int n) {
  require_block_size(n);
  const ZigZag zz(n);
  std::vector<Filter> filters;
  filters.reserve(static_cast<std::size_t>(n * n));
  for (int i = 1; i <= n * n; ++i) {
    const auto [k1, k2] = zz.position(i);
    Plane w(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) w(r, c) = dct_basis_value(n, k1, k2, r, c);
    }
    filters.push_back({std::move(w), FilterTag::DctInitialized});
  }
  return FilterBank(n, std::move(filters));
}

FilterBank random_bank(int n, std::uint64_t seed) {
  require_block_size(n);
  const double count = static_cast<double>(n * n);
  const double fan_in = count;          // 1 channel x n x n
  const double fan_out = count * count;  // n^2 filters x n x n
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  std::vector<Filter> filters;
  for (int i = 0; i < n * n; ++i) {
    Plane w(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    filters.push_back({std::move(w), FilterTag::Random});
  }
  return FilterBank(n, std::move(filters));
}

FilterBank random_orthonormal_bank(int n, std::uint64_t seed) {
  require_block_size(n);
  const int m = n * n;
  Rng rng(seed);
  Eigen::MatrixXd a(m, m);
  for (int c = 0; c < m; ++c) {
    for (int r = 0; r < m; ++r) a(r, c) = rng.normal();
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a)
                                .householderQ() *
                            Eigen::MatrixXd::Identity(m, m);
  std::vector<Filter> filters;
  for (int i = 0; i < m; ++i) {
    Plane w(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int e = 0; e < m; ++e) w.values()[static_cast<std::size_t>(e)] = q(e, i);
    filters.push_back({std::move(w), FilterTag::Random});
  }
  return FilterBank(n, std::move(filters));
}

double filter_variance(const Plane& filter) {
  const std::size_t count = filter.size();
  if (count < 2) throw std::invalid_argument("variance needs >= 2 entries");
  double sum = 0.0;
  for (double v : filter.values()) sum += v;
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (double v : filter.values()) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(count - 1);
}

void write_filter_bank(std::ostream& out, const FilterBank& bank) {
  binio::put_magic(out, kBankMagic);
  binio::put<std::uint32_t>(out, kBankVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(bank.n()));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(bank.count()));
  for (const auto& f : bank.filters()) {
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(f.tag));
  }
  for (const auto& f : bank.filters()) binio::put_doubles(out, f.values.values());
}

FilterBank read_filter_bank(std::istream& in) {
  binio::expect_magic(in, kBankMagic);
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kBankVersion) {
    throw std::runtime_error("unsupported filter bank version " +
                             std::to_string(version));
  }
  const int n = static_cast<int>(binio::get<std::uint32_t>(in));
  const auto count = binio::get<std::uint32_t>(in);
  if (n < 2 || n > 64 || count != static_cast<std::uint32_t>(n * n)) {
    throw std::runtime_error("corrupt filter bank header");
  }
  std::vector<FilterTag> tags(count);
  for (auto& t : tags) {
    const auto raw = binio::get<std::uint8_t>(in);
    if (raw > 2) throw std::runtime_error("corrupt filter tag");
    t = static_cast<FilterTag>(raw);
  }
  std::vector<Filter> filters;
  for (std::uint32_t i = 0; i < count; ++i) {
    Plane w(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    binio::get_doubles(in, w.values());
    filters.push_back({std::move(w), tags[i]});
  }
  return FilterBank(n, std::move(filters));
}

void save_filter_bank(const std::filesystem::path& path, const FilterBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_filter_bank(out, bank);
}

FilterBank load_filter_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_filter_bank(in);
}

nlohmann::json filter_bank_to_json(const FilterBank& bank) {
  nlohmann::json filters = nlohmann::json::array();
  for (std::size_t i = 0; i < bank.count(); ++i) {
    const auto& f = bank[i];
    filters.push_back({{"index", i + 1},
                       {"tag", to_string(f.tag)},
                       {"values", std::vector<double>(f.values.values().begin(),
                                                      f.values.values().end())}});
  }
  return {{"n", bank.n()}, {"filters", filters}};
}

FilterBank filter_bank_from_json(const nlohmann::json& j) {
  const int n = j.at("n").get<int>();
  std::vector<Filter> filters;
  for (const auto& f : j.at("filters")) {
    auto values = f.at("values").get<std::vector<double>>();
    filters.push_back({Plane(static_cast<std::size_t>(n),
                             static_cast<std::size_t>(n), std::move(values)),
                       filter_tag_from_string(f.value("tag", "learned"))});
  }
  return FilterBank(n, std::move(filters));
}

}  // namespace ordsr
