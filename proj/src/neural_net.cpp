#include "ordsr/neural_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "ordsr/rng.hpp"

namespace ordsr {

namespace {

constexpr std::string_view kCheckpointMagic = "ORDSRCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

// Zero-padded copy of a {c, h, w} tensor with `pad` cells on every side.
Tensor pad_input(const Tensor& input, std::size_t pad) {
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t pw = w + 2 * pad;
  Tensor out({c, h + 2 * pad, pw});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = input.data() + (ch * h + y) * w;
      double* dst = out.data() + (ch * (h + 2 * pad) + y + pad) * pw + pad;
      std::copy(src, src + w, dst);
    }
  }
  return out;
}

// Pre-activation a * W + b on an already padded input.
Tensor conv_preact(const Tensor& padded, const ConvLayer& layer, std::size_t h,
                   std::size_t w) {
  const std::size_t m = layer.out_channels(), c = layer.in_channels();
  const std::size_t k = layer.kernel();
  const std::size_t ph = padded.dim(1), pw = padded.dim(2);
  Tensor out({m, h, w});
  for (std::size_t o = 0; o < m; ++o) {
    double* plane = out.data() + o * h * w;
    std::fill(plane, plane + h * w, layer.biases[o]);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* wk = layer.weights.data() + ((o * c + ch) * k) * k;
      const double* src_plane = padded.data() + ch * ph * pw;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = wk[ky * k + kx];
          for (std::size_t y = 0; y < h; ++y) {
            const double* src = src_plane + (y + ky) * pw + kx;
            double* dst = plane + y * w;
            for (std::size_t x = 0; x < w; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
  return out;
}

void require_conv_args(const Tensor& input, const ConvLayer& layer) {
  if (input.rank() != 3) throw std::invalid_argument("conv input must be {c,h,w}");
  if (layer.weights.rank() != 4 || layer.weights.dim(2) != layer.weights.dim(3)) {
    throw std::invalid_argument("conv weights must be {m,c,k,k}");
  }
  if (layer.kernel() % 2 == 0) {
    throw std::invalid_argument("same padding needs an odd kernel size");
  }
  if (input.dim(0) != layer.in_channels()) {
    throw std::invalid_argument("conv input channels do not match layer");
  }
  if (layer.biases.size() != layer.out_channels()) {
    throw std::invalid_argument("conv bias count does not match filters");
  }
}

Tensor apply_activation(const Tensor& z, Activation act) {
  if (act == Activation::None) return z;
  Tensor out = z;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

Tensor cube_as_tensor(const DctCube& cube) {
  return Tensor({cube.map_count(), cube.map_height, cube.map_width}, cube.data);
}

// Runs the CNN on a full cube, filling trace preact/act.
void run_cnn(const Tensor& input, const Network& net, std::vector<Tensor>& preact,
             std::vector<Tensor>& act) {
  const std::size_t h = input.dim(1), w = input.dim(2);
  const Tensor* current = &input;
  for (const auto& layer : net.layers) {
    require_conv_args(*current, layer);
    const std::size_t pad = (layer.kernel() - 1) / 2;
    preact.push_back(conv_preact(pad_input(*current, pad), layer, h, w));
    act.push_back(apply_activation(preact.back(), layer.activation));
    current = &act.back();
  }
}

}  // namespace

ConvLayer::ConvLayer(std::size_t out_channels, std::size_t in_channels,
                     std::size_t kernel, Activation act)
    : weights({out_channels, in_channels, kernel, kernel}),
      biases(out_channels, 0.0),
      activation(act) {}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Ordsr: return "ORDSR";
    case Variant::DsrOc: return "DSR-OC";
    case Variant::DsrCc: return "DSR-CC";
    case Variant::DsrUc: return "DSR-UC";
    case Variant::DctDsr: return "DCT-DSR";
    case Variant::OrdsrRi: return "ORDSR-RI";
  }
  return "ORDSR";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::Ordsr, Variant::DsrOc, Variant::DsrCc, Variant::DsrUc,
                    Variant::DctDsr, Variant::OrdsrRi}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant: " + s);
}

VariantFlags variant_flags(Variant v) {
  switch (v) {
    case Variant::Ordsr: return {true, true, true, false};
    case Variant::DsrOc: return {true, true, false, false};
    case Variant::DsrCc: return {true, false, true, false};
    case Variant::DsrUc: return {true, false, false, false};
    case Variant::DctDsr: return {false, false, false, false};
    case Variant::OrdsrRi: return {true, true, true, true};
  }
  return {};
}

nlohmann::json Architecture::to_json() const {
  return {{"n", n},         {"stride", stride},   {"threshold", threshold},
          {"depth", depth}, {"filters", filters}, {"first_kernel", first_kernel},
          {"kernel", kernel}, {"final_relu", final_relu}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  a.n = j.value("n", a.n);
  a.stride = j.value("stride", a.stride);
  a.threshold = j.value("threshold", a.threshold);
  a.depth = j.value("depth", a.depth);
  a.filters = j.value("filters", a.filters);
  a.first_kernel = j.value("first_kernel", a.first_kernel);
  a.kernel = j.value("kernel", a.kernel);
  a.final_relu = j.value("final_relu", a.final_relu);
  return a;
}

void Network::validate() const {
  const int n2 = n() * n();
  if (layers.empty()) throw std::invalid_argument("network needs >= 1 layer");
  if (threshold < 0 || threshold > n2) {
    throw std::invalid_argument("threshold must lie in [0, n^2]");
  }
  if (stride < 1 || n() % stride != 0) {
    throw std::invalid_argument("stride must divide the block size");
  }
  if (layers.front().in_channels() != static_cast<std::size_t>(n2)) {
    throw std::invalid_argument("first layer must take all n^2 maps");
  }
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].in_channels() != layers[l - 1].out_channels()) {
      throw std::invalid_argument("layer channel chain is inconsistent");
    }
  }
  if (layers.back().out_channels() != static_cast<std::size_t>(n2 - threshold)) {
    throw std::invalid_argument("last layer must emit n^2 - T maps");
  }
  if (gamma < 0.0 || lambda < 0.0) {
    throw std::invalid_argument("gamma and lambda must be non-negative");
  }
}

Architecture Network::architecture() const {
  Architecture a;
  a.n = n();
  a.stride = stride;
  a.threshold = threshold;
  a.depth = static_cast<int>(layers.size());
  a.filters = layers.size() > 1 ? static_cast<int>(layers.front().out_channels())
                                : a.filters;
  a.first_kernel = static_cast<int>(layers.front().kernel());
  a.kernel = layers.size() > 1 ? static_cast<int>(layers.back().kernel())
                               : a.first_kernel;
  a.final_relu = final_relu;
  return a;
}

namespace {

std::vector<ConvLayer> make_layers(const Architecture& arch) {
  if (arch.depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (arch.filters < 1) throw std::invalid_argument("filters must be >= 1");
  const std::size_t n2 = static_cast<std::size_t>(arch.n * arch.n);
  const std::size_t out_last = n2 - static_cast<std::size_t>(arch.threshold);
  std::vector<ConvLayer> layers;
  std::size_t in = n2;
  for (int l = 0; l < arch.depth; ++l) {
    const bool last = l == arch.depth - 1;
    const std::size_t out = last ? out_last : static_cast<std::size_t>(arch.filters);
    const std::size_t k = static_cast<std::size_t>(l == 0 ? arch.first_kernel : arch.kernel);
    const Activation act =
        last && !arch.final_relu ? Activation::None : Activation::ReLU;
    layers.emplace_back(out, in, k, act);
    in = out;
  }
  return layers;
}

}  // namespace

Network build_network(const Architecture& arch, Variant variant,
                      std::uint64_t seed, double gamma, double lambda) {
  const VariantFlags flags = variant_flags(variant);
  Network net;
  net.bank = flags.random_init ? random_bank(arch.n, derive_seed(seed, 0xBA4C))
                               : dct_basis(arch.n);
  net.layers = make_layers(arch);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    net.layers[l].weights = xavier_init(net.layers[l].weights.dims(), derive_seed(seed, l));
  }
  net.threshold = arch.threshold;
  net.stride = arch.stride;
  net.variant = variant;
  net.cdct_trainable = flags.cdct_trainable;
  net.gamma = flags.orthogonality ? gamma : 0.0;
  net.lambda = flags.complexity ? lambda : 0.0;
  net.final_relu = arch.final_relu;
  net.validate();
  return net;
}

Network zero_network(const Architecture& arch) {
  Network net;
  net.bank = dct_basis(arch.n);
  net.layers = make_layers(arch);
  net.threshold = arch.threshold;
  net.stride = arch.stride;
  net.variant = Variant::DctDsr;
  net.cdct_trainable = false;
  net.gamma = 0.0;
  net.lambda = 0.0;
  net.final_relu = arch.final_relu;
  net.validate();
  return net;
}

Tensor conv2d_same(const Tensor& input, const ConvLayer& layer) {
  require_conv_args(input, layer);
  const std::size_t pad = (layer.kernel() - 1) / 2;
  return apply_activation(
      conv_preact(pad_input(input, pad), layer, input.dim(1), input.dim(2)),
      layer.activation);
}

ConvBackward conv2d_same_backward(const Tensor& input, const ConvLayer& layer,
                                  const Tensor& d_preact, bool input_grad) {
  require_conv_args(input, layer);
  const std::size_t m = layer.out_channels(), c = layer.in_channels();
  const std::size_t k = layer.kernel(), pad = (k - 1) / 2;
  const std::size_t h = input.dim(1), w = input.dim(2);
  const Tensor padded = pad_input(input, pad);
  const std::size_t ph = padded.dim(1), pw = padded.dim(2);

  ConvBackward g;
  g.d_weights = Tensor(layer.weights.dims());
  g.d_biases.assign(m, 0.0);
  Tensor d_padded;
  if (input_grad) d_padded = Tensor({c, ph, pw});

  for (std::size_t o = 0; o < m; ++o) {
    const double* dz = d_preact.data() + o * h * w;
    double bsum = 0.0;
    for (std::size_t e = 0; e < h * w; ++e) bsum += dz[e];
    g.d_biases[o] = bsum;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* src_plane = padded.data() + ch * ph * pw;
      double* gw = g.d_weights.data() + ((o * c + ch) * k) * k;
      const double* wk = layer.weights.data() + ((o * c + ch) * k) * k;
      double* dsrc_plane = input_grad ? d_padded.data() + ch * ph * pw : nullptr;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          const double wv = wk[ky * k + kx];
          for (std::size_t y = 0; y < h; ++y) {
            const double* src = src_plane + (y + ky) * pw + kx;
            const double* dzr = dz + y * w;
            for (std::size_t x = 0; x < w; ++x) acc += dzr[x] * src[x];
            if (dsrc_plane != nullptr) {
              double* dsrc = dsrc_plane + (y + ky) * pw + kx;
              for (std::size_t x = 0; x < w; ++x) dsrc[x] += wv * dzr[x];
            }
          }
          gw[ky * k + kx] = acc;
        }
      }
    }
  }
  if (input_grad) {
    g.d_input = Tensor({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        const double* src = d_padded.data() + (ch * ph + y + pad) * pw + pad;
        std::copy(src, src + w, g.d_input.data() + (ch * h + y) * w);
      }
    }
  }
  return g;
}

Tensor cnn_forward(const CubeSplit& split, const Network& net) {
  if (split.n != net.n() || split.threshold != net.threshold) {
    throw std::invalid_argument("cube split does not match network");
  }
  const std::size_t maps = static_cast<std::size_t>(split.n * split.n);
  Tensor input({maps, split.map_height, split.map_width});
  std::copy(split.low.begin(), split.low.end(), input.data());
  std::copy(split.high.begin(), split.high.end(), input.data() + split.low.size());
  std::vector<Tensor> preact, act;
  run_cnn(input, net, preact, act);
  Tensor out = std::move(act.back());
  if (out.size() != split.high.size()) {
    throw std::invalid_argument("CNN output does not match high-map count");
  }
  for (std::size_t e = 0; e < out.size(); ++e) out[e] += split.high[e];
  return out;
}

ForwardTrace trace_forward(const Network& net, const Plane& x) {
  ForwardTrace t;
  t.cube = cdct_forward(x, net.bank, net.stride);
  t.cube.threshold = net.threshold;
  const Tensor input = cube_as_tensor(t.cube);
  run_cnn(input, net, t.preact, t.act);
  const CubeSplit split = split_cube(t.cube, net.threshold);
  std::vector<double> high(split.high.begin(), split.high.end());
  const Tensor& residual = t.act.back();
  if (residual.size() != high.size()) {
    throw std::invalid_argument("CNN output does not match high-map count");
  }
  for (std::size_t e = 0; e < high.size(); ++e) high[e] += residual[e];
  t.sr_cube = merge_cube(split, split.low, high);
  t.output = cdct_inverse(t.sr_cube, net.bank);
  return t;
}

Plane network_forward(const Network& net, const Plane& x) {
  return trace_forward(net, x).output;
}

Tensor xavier_init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  double fan_in = 1.0, fan_out = 1.0;
  if (dims.size() == 4) {
    const double area = static_cast<double>(dims[2] * dims[3]);
    fan_in = static_cast<double>(dims[1]) * area;
    fan_out = static_cast<double>(dims[0]) * area;
  } else if (dims.size() == 2) {
    fan_in = static_cast<double>(dims[1]);
    fan_out = static_cast<double>(dims[0]);
  } else if (dims.size() == 1) {
    fan_in = fan_out = static_cast<double>(dims[0]);
  } else {
    throw std::invalid_argument("xavier_init supports rank 1, 2 or 4 shapes");
  }
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(dims);
  Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

ParameterCount count_parameters(const Network& net) {
  ParameterCount p;
  p.weights = static_cast<std::int64_t>(net.bank.count() * net.bank.filter_size());
  for (const auto& layer : net.layers) {
    p.weights += static_cast<std::int64_t>(layer.weights.size());
    p.biases += static_cast<std::int64_t>(layer.biases.size());
  }
  return p;
}

ParameterCount count_parameters(const Architecture& arch) {
  ParameterCount p;
  const std::int64_t n2 = arch.n * arch.n;
  p.weights = n2 * n2;
  std::int64_t in = n2;
  for (int l = 0; l < arch.depth; ++l) {
    const bool last = l == arch.depth - 1;
    const std::int64_t out = last ? n2 - arch.threshold : arch.filters;
    const std::int64_t k = l == 0 ? arch.first_kernel : arch.kernel;
    p.weights += out * in * k * k;
    p.biases += out;
    in = out;
  }
  return p;
}

ParameterCount vdsr_reference_parameters() {
  ParameterCount p;
  p.weights = 3 * 3 * 1 * 64 + 18 * (3 * 3 * 64 * 64) + 3 * 3 * 64 * 1;
  p.biases = 19 * 64 + 1;
  return p;
}

std::int64_t activation_memory(const Architecture& arch, std::size_t height,
                               std::size_t width, std::size_t bytes_per_value) {
  const auto s = static_cast<std::size_t>(arch.stride);
  const auto mh = static_cast<std::int64_t>((height + s - 1) / s);
  const auto mw = static_cast<std::int64_t>((width + s - 1) / s);
  std::int64_t widest = arch.n * arch.n;
  if (arch.depth > 1) widest = std::max<std::int64_t>(widest, arch.filters);
  return widest * mh * mw * static_cast<std::int64_t>(bytes_per_value);
}

std::int64_t activation_memory(const Network& net, std::size_t height,
                               std::size_t width, std::size_t bytes_per_value) {
  const auto s = static_cast<std::size_t>(net.stride);
  const auto mh = static_cast<std::int64_t>((height + s - 1) / s);
  const auto mw = static_cast<std::int64_t>((width + s - 1) / s);
  std::int64_t widest = net.n() * net.n();
  for (const auto& layer : net.layers) {
    widest = std::max<std::int64_t>(widest, static_cast<std::int64_t>(layer.out_channels()));
  }
  return widest * mh * mw * static_cast<std::int64_t>(bytes_per_value);
}

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const nlohmann::json& metadata) {
  net.validate();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"out", l.out_channels()},
                      {"in", l.in_channels()},
                      {"kernel", l.kernel()},
                      {"relu", l.activation == Activation::ReLU}});
  }
  const nlohmann::json header = {
      {"format", "ordsr-checkpoint"},
      {"n", net.n()},
      {"stride", net.stride},
      {"threshold", net.threshold},
      {"variant", to_string(net.variant)},
      {"cdct_trainable", net.cdct_trainable},
      {"gamma", net.gamma},
      {"lambda", net.lambda},
      {"final_relu", net.final_relu},
      {"bank_tag", to_string(net.bank[0].tag)},
      {"layers", layers},
      {"metadata", metadata}};
  const std::string text = header.dump();

  // write-temp-then-rename keeps readers from seeing a partial file
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    binio::put_magic(out, kCheckpointMagic);
    binio::put<std::uint32_t>(out, kCheckpointVersion);
    binio::put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& f : net.bank.filters()) binio::put_doubles(out, f.values.values());
    for (const auto& l : net.layers) {
      binio::put_doubles(out, l.weights.values());
      binio::put_doubles(out, l.biases);
    }
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  binio::expect_magic(in, kCheckpointMagic);
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const auto len = binio::get<std::uint64_t>(in);
  if (len > (1u << 26)) throw std::runtime_error("checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);

  Checkpoint ck;
  Network& net = ck.network;
  const int n = header.at("n").get<int>();
  const FilterTag tag = filter_tag_from_string(header.value("bank_tag", "learned"));
  std::vector<Filter> filters;
  for (int i = 0; i < n * n; ++i) {
    Plane w(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    binio::get_doubles(in, w.values());
    filters.push_back({std::move(w), tag});
  }
  net.bank = FilterBank(n, std::move(filters));
  for (const auto& l : header.at("layers")) {
    ConvLayer layer(l.at("out").get<std::size_t>(), l.at("in").get<std::size_t>(),
                    l.at("kernel").get<std::size_t>(),
                    l.at("relu").get<bool>() ? Activation::ReLU : Activation::None);
    binio::get_doubles(in, layer.weights.values());
    binio::get_doubles(in, layer.biases);
    net.layers.push_back(std::move(layer));
  }
  net.stride = header.at("stride").get<int>();
  net.threshold = header.at("threshold").get<int>();
  net.variant = variant_from_string(header.at("variant").get<std::string>());
  net.cdct_trainable = header.at("cdct_trainable").get<bool>();
  net.gamma = header.at("gamma").get<double>();
  net.lambda = header.at("lambda").get<double>();
  net.final_relu = header.at("final_relu").get<bool>();
  net.validate();
  ck.metadata = header.value("metadata", nlohmann::json::object());
  return ck;
}

}  // namespace ordsr
