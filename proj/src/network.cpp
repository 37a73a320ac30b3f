#include "tubefield/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "tubefield/rng.hpp"

namespace tubefield {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

void NetworkConfig::validate() const {
  if (n_f < 1 || n_b < 1 || layers_per_block < 1 || ffe_size < 1) {
    throw std::invalid_argument("NetworkConfig: n_f, n_b, layers_per_block, ffe_size must be >= 1");
  }
  if (!(ffe_sigma > 0.0)) throw std::invalid_argument("NetworkConfig: ffe_sigma must be > 0");
  if (!(xi > 0.0)) throw std::invalid_argument("NetworkConfig: xi must be > 0");
  if (!(snake_a > 0.0)) throw std::invalid_argument("NetworkConfig: snake_a must be > 0");
}

std::int64_t param_count(const NetworkConfig& cfg) {
  const std::int64_t nf = cfg.n_f, in = cfg.feature_dim();
  const std::int64_t input = nf * in + nf;
  const std::int64_t hidden =
      static_cast<std::int64_t>(cfg.n_b) * cfg.layers_per_block * (nf * nf + nf);
  const std::int64_t output = nf + 1;
  return input + hidden + output;
}

ParamLayout ParamLayout::make(const NetworkConfig& cfg) {
  ParamLayout l;
  Eigen::Index off = 0;
  auto push = [&off](Eigen::Index rows, Eigen::Index cols) {
    TensorRef r{off, rows, cols};
    off += r.size();
    return r;
  };
  const Eigen::Index nf = cfg.n_f;
  l.w_in = push(nf, cfg.feature_dim());
  l.b_in = push(nf, 1);
  const int n_layers = cfg.n_b * cfg.layers_per_block;
  l.w_hidden.reserve(n_layers);
  l.b_hidden.reserve(n_layers);
  for (int i = 0; i < n_layers; ++i) {
    l.w_hidden.push_back(push(nf, nf));
    l.b_hidden.push_back(push(nf, 1));
  }
  l.w_out = push(1, nf);
  l.b_out = push(1, 1);
  l.total = off;
  return l;
}

NetworkParams init_params(const NetworkConfig& cfg) {
  cfg.validate();
  NetworkParams p;
  p.config = cfg;
  p.layout = ParamLayout::make(cfg);
  if (p.layout.total != param_count(cfg)) {
    throw std::logic_error("init_params: layout size mismatch");
  }
  Rng rng(cfg.seed);

  p.ffe.resize(cfg.ffe_size, 2);
  for (Eigen::Index j = 0; j < 2; ++j) {
    for (Eigen::Index i = 0; i < cfg.ffe_size; ++i) {
      p.ffe(i, j) = rng.normal(0.0, cfg.ffe_sigma);
    }
  }

  p.theta = Vec::Zero(p.layout.total);
  auto glorot = [&rng, &p](const TensorRef& r, Eigen::Index fan_in, Eigen::Index fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    double* data = p.theta.data() + r.offset;
    for (Eigen::Index k = 0; k < r.size(); ++k) data[k] = rng.uniform(-limit, limit);
  };
  glorot(p.layout.w_in, cfg.feature_dim(), cfg.n_f);
  for (const TensorRef& r : p.layout.w_hidden) glorot(r, cfg.n_f, cfg.n_f);
  glorot(p.layout.w_out, cfg.n_f, 1);
  return p;
}

namespace {

/// One loop-based forward pass on any scalar-like type. z holds the current
/// activations; matrix products are naive dot loops so the reference path is
/// independent of Eigen's kernels.
template <class S>
S forward_generic(const NetworkParams& p, S xt, S tt) {
  const NetworkConfig& cfg = p.config;
  const int F = cfg.ffe_size;
  const int in_dim = cfg.feature_dim();
  const int nf = cfg.n_f;

  std::vector<S> z(in_dim);
  for (int k = 0; k < F; ++k) {
    const double wx = kTwoPi * p.ffe(k, 0);
    const double wt = kTwoPi * p.ffe(k, 1);
    z[k] = sin(xt * wx);
    z[F + k] = cos(xt * wx);
    z[2 * F + k] = sin(tt * wt);
    z[3 * F + k] = cos(tt * wt);
  }

  auto fc = [&p](const TensorRef& wr, const TensorRef& br, const std::vector<S>& in) {
    const auto W = p.mat(wr);
    const double* b = p.theta.data() + br.offset;
    std::vector<S> out(static_cast<std::size_t>(wr.rows));
    for (Eigen::Index i = 0; i < wr.rows; ++i) {
      S acc(b[i]);
      for (Eigen::Index j = 0; j < wr.cols; ++j) acc += in[j] * W(i, j);
      out[i] = acc;
    }
    return out;
  };

  std::vector<S> h = fc(p.layout.w_in, p.layout.b_in, z);
  for (int b = 0; b < cfg.n_b; ++b) {
    std::vector<S> cur = h;
    for (int l = 0; l < cfg.layers_per_block; ++l) {
      const int li = b * cfg.layers_per_block + l;
      cur = fc(p.layout.w_hidden[li], p.layout.b_hidden[li], cur);
      if (cfg.activation == Activation::Snake) {
        for (int i = 0; i < nf; ++i) cur[i] = snake(cur[i], cfg.snake_a);
      }
    }
    for (int i = 0; i < nf; ++i) h[i] += cur[i];
  }
  std::vector<S> out = fc(p.layout.w_out, p.layout.b_out, h);
  return out[0] * cfg.xi;
}

}  // namespace

double forward_scalar(const NetworkParams& params, double x, double t,
                      double L, double T) {
  const double xt = 2.0 * x / L - 1.0;
  const double tt = 2.0 * t / T - 1.0;
  return forward_generic<Jet2d>(params, Jet2d(xt), Jet2d(tt)).v;
}

Jet2d forward_jet(const NetworkParams& params, double x, double t, double L,
                  double T, Axis axis) {
  const double xt = 2.0 * x / L - 1.0;
  const double tt = 2.0 * t / T - 1.0;
  // Seed d1 with the normalization slope so outputs are physical-axis jets.
  Jet2d jx(xt), jt(tt);
  if (axis == Axis::X) {
    jx = Jet2d(xt, 2.0 / L, 0.0);
  } else {
    jt = Jet2d(tt, 2.0 / T, 0.0);
  }
  return forward_generic<Jet2d>(params, jx, jt);
}

std::string config_to_json(const NetworkConfig& cfg) {
  nlohmann::json j{{"n_f", cfg.n_f},
                   {"n_b", cfg.n_b},
                   {"layers_per_block", cfg.layers_per_block},
                   {"ffe_size", cfg.ffe_size},
                   {"ffe_sigma", cfg.ffe_sigma},
                   {"xi", cfg.xi},
                   {"snake_a", cfg.snake_a},
                   {"activation", cfg.activation == Activation::Snake ? "snake" : "identity"},
                   {"seed", cfg.seed}};
  return j.dump();
}

NetworkConfig config_from_json(const std::string& text) {
  NetworkConfig cfg;
  std::string act;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    cfg.n_f = j.at("n_f").get<int>();
    cfg.n_b = j.at("n_b").get<int>();
    cfg.layers_per_block = j.value("layers_per_block", 3);
    cfg.ffe_size = j.at("ffe_size").get<int>();
    cfg.ffe_sigma = j.at("ffe_sigma").get<double>();
    cfg.xi = j.at("xi").get<double>();
    cfg.snake_a = j.at("snake_a").get<double>();
    act = j.value("activation", "snake");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network config JSON: ") + e.what());
  }
  if (act == "snake") {
    cfg.activation = Activation::Snake;
  } else if (act == "identity") {
    cfg.activation = Activation::Identity;
  } else {
    throw FormatError("network config: unknown activation '" + act + "'");
  }
  cfg.validate();
  return cfg;
}

namespace {

constexpr char kMagic[8] = {'T', 'F', 'C', 'H', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void append_bytes(std::string& buf, const void* data, std::size_t len) {
  buf.append(static_cast<const char*>(data), len);
}
template <class T>
void append_pod(std::string& buf, T v) {
  append_bytes(buf, &v, sizeof(T));
}
void append_tensor(std::string& buf, const std::string& name, const double* data,
                   std::uint64_t count) {
  if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
  append_pod<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
  append_bytes(buf, name.data(), name.size());
  append_pod<std::uint64_t>(buf, count);
  append_bytes(buf, data, count * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t pos) : buf_(buf), pos_(pos) {}
  template <class T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* out, std::size_t len) {
    if (pos_ + len > buf_.size()) throw FormatError("checkpoint: truncated file");
    std::memcpy(out, buf_.data() + pos_, len);
    pos_ += len;
  }
  std::string str(std::size_t len) {
    if (pos_ + len > buf_.size()) throw FormatError("checkpoint: truncated file");
    std::string s = buf_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_;
};

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Vec>>& extra) {
  std::string body;
  append_pod<std::uint64_t>(body, params.config.seed);
  const std::string cfg_json = config_to_json(params.config);
  append_pod<std::uint32_t>(body, static_cast<std::uint32_t>(cfg_json.size()));
  append_bytes(body, cfg_json.data(), cfg_json.size());
  append_pod<std::uint32_t>(body, static_cast<std::uint32_t>(2 + extra.size()));
  append_tensor(body, "ffe", params.ffe.data(),
                static_cast<std::uint64_t>(params.ffe.size()));
  append_tensor(body, "theta", params.theta.data(),
                static_cast<std::uint64_t>(params.theta.size()));
  for (const auto& [name, vec] : extra) {
    append_tensor(body, name, vec.data(), static_cast<std::uint64_t>(vec.size()));
  }

  std::string out;
  out.reserve(body.size() + 32);
  append_bytes(out, kMagic, sizeof(kMagic));
  append_pod<std::uint32_t>(out, kVersion);
  append_pod<std::uint32_t>(out, 0u);
  append_pod<std::uint64_t>(out, static_cast<std::uint64_t>(body.size()));
  out += body;
  append_pod<std::uint64_t>(out, fnv1a64(body.data(), body.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path,
                              std::vector<std::pair<std::string, Vec>>* extra) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_checkpoint: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  Reader r(buf, sizeof(kMagic));
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  r.pod<std::uint32_t>();  // reserved
  const auto body_len = r.pod<std::uint64_t>();
  const std::size_t body_start = r.pos();
  if (body_start + body_len + sizeof(std::uint64_t) > buf.size()) {
    throw FormatError("checkpoint: truncated file " + path.string());
  }
  Reader tail(buf, body_start + body_len);
  const auto stored_sum = tail.pod<std::uint64_t>();
  const auto actual_sum = fnv1a64(buf.data() + body_start, body_len);
  if (stored_sum != actual_sum) {
    throw FormatError("checkpoint: checksum mismatch in " + path.string());
  }

  const auto seed = r.pod<std::uint64_t>();
  const auto cfg_len = r.pod<std::uint32_t>();
  NetworkConfig cfg = config_from_json(r.str(cfg_len));
  if (cfg.seed != seed) throw FormatError("checkpoint: seed/config disagreement");

  NetworkParams params;
  params.config = cfg;
  params.layout = ParamLayout::make(cfg);

  const auto n_tensors = r.pod<std::uint32_t>();
  bool have_ffe = false, have_theta = false;
  if (extra) extra->clear();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = r.pod<std::uint16_t>();
    const std::string name = r.str(name_len);
    const auto count = r.pod<std::uint64_t>();
    Vec data(static_cast<Eigen::Index>(count));
    r.take(data.data(), count * sizeof(double));
    if (name == "ffe") {
      if (count != static_cast<std::uint64_t>(cfg.ffe_size) * 2) {
        throw FormatError("checkpoint: ffe size mismatch");
      }
      params.ffe = Eigen::Map<const Mat>(data.data(), cfg.ffe_size, 2);
      have_ffe = true;
    } else if (name == "theta") {
      if (count != static_cast<std::uint64_t>(params.layout.total)) {
        throw FormatError("checkpoint: theta size mismatch");
      }
      params.theta = std::move(data);
      have_theta = true;
    } else if (extra) {
      extra->emplace_back(name, std::move(data));
    }
  }
  if (!have_ffe || !have_theta) throw FormatError("checkpoint: missing core tensors");
  return params;
}

}  // namespace tubefield
