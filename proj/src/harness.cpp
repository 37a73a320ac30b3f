#include "tubefield/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "tubefield/batch_eval.hpp"
#include "tubefield/io.hpp"
#include "tubefield/rng.hpp"

namespace tubefield {

using json = nlohmann::json;

namespace fs = std::filesystem;

TubeGeometry ExperimentConfig::geometry() const {
  if (geometry_type == "cylinder") return TubeGeometry::cylinder(radius, length);
  if (geometry_type == "cone") return TubeGeometry::cone(r0, r1, length);
  throw std::invalid_argument("geometry.type must be \"cylinder\" or \"cone\", got \"" +
                              geometry_type + "\"");
}

AirProperties ExperimentConfig::air() const {
  if (!(f0 > 0.0)) throw std::invalid_argument("source.f0 must be > 0");
  return AirProperties::make(rho, c, mu, eta, lambda_th, cp,
                             2.0 * 3.14159265358979323846 * f0);
}

SourceWaveform ExperimentConfig::source() const {
  if (!(f0 > 0.0)) throw std::invalid_argument("source.f0 must be > 0");
  const SourceWaveform src{u0, 1.0 / f0, tp_frac, tn_frac,
                           smooth_frac / f0};
  src.validate();
  return src;
}

RadiationCoefficients ExperimentConfig::radiation() const {
  return radiation_from_taylor(delta, beta_c);
}

void ExperimentConfig::validate() const {
  geometry();
  air();
  source();
  radiation();
  network.validate();
  for (const double w : {weights.pde, weights.bc, weights.obs, weights.pc,
                         weights.pc_u, weights.pc_p, weights.pc_phitt,
                         weights.rad})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("weights.* must be finite and >= 0");
  if (collocation.n_pde < 1 || collocation.n_bc < 1 || collocation.n_pc < 1 ||
      collocation.n_obs < 1)
    throw std::invalid_argument("collocation counts must be >= 1");
  if (training.adam_epochs < 0 || training.lbfgs_epochs < 0 ||
      ftm.adam_epochs < 0 || ftm.lbfgs_epochs < 0)
    throw std::invalid_argument("epoch counts must be >= 0");
  if (fdm.nx < 4) throw std::invalid_argument("fdm.nx must be >= 4");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("noise.snr_db must be finite");
  if (nx_out < 2 || nt_out < 2)
    throw std::invalid_argument("eval grid must be at least 2 x 2");
  if (output_dir.empty()) throw std::invalid_argument("output.dir must be nonempty");
}

namespace {

std::string activation_name(Activation a) {
  return a == Activation::Snake ? "snake" : "identity";
}

Activation activation_from_name(const std::string& s) {
  if (s == "snake") return Activation::Snake;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("network.activation must be \"snake\" or \"identity\", got \"" +
                              s + "\"");
}

std::string pde_form_name(PdeForm f) {
  return f == PdeForm::Eq1 ? "eq1" : "literal_eq11";
}

PdeForm pde_form_from_name(const std::string& s) {
  if (s == "eq1") return PdeForm::Eq1;
  if (s == "literal_eq11") return PdeForm::LiteralEq11;
  throw std::invalid_argument("pde_form must be \"eq1\" or \"literal_eq11\", got \"" + s +
                              "\"");
}

json schema_json(const ExperimentConfig& c) {
  json j;
  j["geometry"] = {{"type", c.geometry_type}, {"radius", c.radius},
                   {"r0", c.r0},              {"r1", c.r1},
                   {"length", c.length}};
  j["air"] = {{"rho", c.rho},       {"c", c.c},
              {"mu", c.mu},         {"eta", c.eta},
              {"lambda_th", c.lambda_th}, {"cp", c.cp}};
  j["source"] = {{"f0", c.f0},           {"u0", c.u0},
                 {"tp_frac", c.tp_frac}, {"tn_frac", c.tn_frac},
                 {"smooth_frac", c.smooth_frac}};
  j["radiation"] = {{"delta", c.delta}, {"beta_c", c.beta_c}};
  j["pde_form"] = pde_form_name(c.pde_form);
  j["network"] = {{"n_f", c.network.n_f},
                  {"n_b", c.network.n_b},
                  {"layers_per_block", c.network.layers_per_block},
                  {"ffe_size", c.network.ffe_size},
                  {"ffe_sigma", c.network.ffe_sigma},
                  {"xi", c.network.xi},
                  {"snake_a", c.network.snake_a},
                  {"activation", activation_name(c.network.activation)},
                  {"seed", c.network.seed}};
  j["weights"] = {{"pde", c.weights.pde},     {"bc", c.weights.bc},
                  {"obs", c.weights.obs},     {"pc", c.weights.pc},
                  {"pc_u", c.weights.pc_u},   {"pc_p", c.weights.pc_p},
                  {"pc_phitt", c.weights.pc_phitt}, {"rad", c.weights.rad}};
  j["collocation"] = {{"n_pde", c.collocation.n_pde},
                      {"n_bc", c.collocation.n_bc},
                      {"n_pc", c.collocation.n_pc},
                      {"n_obs", c.collocation.n_obs}};
  j["training"] = {{"adam_epochs", c.training.adam_epochs},
                   {"lbfgs_epochs", c.training.lbfgs_epochs},
                   {"adam_lr", c.training.adam.lr_init},
                   {"adam_decay", c.training.adam.decay},
                   {"checkpoint_every", c.training.checkpoint_every},
                   {"progress_every", c.training.progress_every}};
  j["ftm"] = {{"adam_epochs", c.ftm.adam_epochs},
              {"lbfgs_epochs", c.ftm.lbfgs_epochs},
              {"net_lr", c.ftm.adam_net.lr_init},
              {"net_decay", c.ftm.adam_net.decay},
              {"rad_lr", c.ftm.adam_rad.lr_init},
              {"rad_decay", c.ftm.adam_rad.decay},
              {"alpha_init", c.ftm.alpha_init},
              {"beta_init", c.ftm.beta_init},
              {"divergence_limit", c.ftm.divergence_limit},
              {"progress_every", c.ftm.progress_every}};
  j["fdm"] = {{"nx", c.fdm.nx},
              {"courant", c.fdm.courant},
              {"steady_tol", c.fdm.steady_tol},
              {"max_periods", c.fdm.max_periods}};
  j["noise"] = {{"snr_db", c.snr_db}, {"seed", c.noise_seed}};
  j["eval"] = {{"nx_out", c.nx_out}, {"nt_out", c.nt_out}};
  j["notes"] = c.notes;
  j["output"] = {{"dir", c.output_dir.string()}};
  return j;
}

void flatten_keys(const json& j, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object())
      flatten_keys(value, dotted, out);
    else
      out.push_back(dotted);
  }
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t jj = 0; jj <= b.size(); ++jj) row[jj] = jj;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t jj = 1; jj <= b.size(); ++jj) {
      const std::size_t up = row[jj];
      row[jj] = std::min({up + 1, row[jj - 1] + 1,
                          diag + (a[i - 1] == b[jj - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string nearest_keys(const std::string& key) {
  std::vector<std::string> keys = config_keys();
  std::sort(keys.begin(), keys.end(),
            [&](const std::string& a, const std::string& b) {
              return levenshtein(key, a) < levenshtein(key, b);
            });
  std::string out;
  const std::size_t n = std::min<std::size_t>(3, keys.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ", ";
    out += keys[i];
  }
  return out;
}

[[noreturn]] void throw_unknown_key(const std::string& key) {
  throw std::invalid_argument("unknown config key \"" + key +
                              "\"; nearest valid keys: " + nearest_keys(key));
}

bool same_kind(const json& schema, const json& value) {
  if (schema.is_string()) return value.is_string();
  if (schema.is_number_integer() || schema.is_number_unsigned())
    return value.is_number_integer() || value.is_number_unsigned();
  if (schema.is_number()) return value.is_number();
  return false;
}

void check_against_schema(const json& schema, const json& input,
                          const std::string& prefix) {
  for (const auto& [key, value] : input.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    const auto it = schema.find(key);
    if (it == schema.end()) throw_unknown_key(dotted);
    if (it->is_object()) {
      if (!value.is_object())
        throw std::invalid_argument("config key \"" + dotted +
                                    "\" must be an object");
      check_against_schema(*it, value, dotted);
    } else if (!same_kind(*it, value)) {
      throw std::invalid_argument("config key \"" + dotted +
                                  "\" has the wrong type (expected " +
                                  std::string(it->type_name()) + ")");
    }
  }
}

void merge_into(json& base, const json& input) {
  for (const auto& [key, value] : input.items()) {
    if (value.is_object())
      merge_into(base[key], value);
    else
      base[key] = value;
  }
}

ExperimentConfig config_from_schema_json(const json& j) {
  ExperimentConfig c;
  c.geometry_type = j["geometry"]["type"].get<std::string>();
  c.radius = j["geometry"]["radius"].get<double>();
  c.r0 = j["geometry"]["r0"].get<double>();
  c.r1 = j["geometry"]["r1"].get<double>();
  c.length = j["geometry"]["length"].get<double>();
  c.rho = j["air"]["rho"].get<double>();
  c.c = j["air"]["c"].get<double>();
  c.mu = j["air"]["mu"].get<double>();
  c.eta = j["air"]["eta"].get<double>();
  c.lambda_th = j["air"]["lambda_th"].get<double>();
  c.cp = j["air"]["cp"].get<double>();
  c.f0 = j["source"]["f0"].get<double>();
  c.u0 = j["source"]["u0"].get<double>();
  c.tp_frac = j["source"]["tp_frac"].get<double>();
  c.tn_frac = j["source"]["tn_frac"].get<double>();
  c.smooth_frac = j["source"]["smooth_frac"].get<double>();
  c.delta = j["radiation"]["delta"].get<double>();
  c.beta_c = j["radiation"]["beta_c"].get<double>();
  c.pde_form = pde_form_from_name(j["pde_form"].get<std::string>());
  c.network.n_f = j["network"]["n_f"].get<int>();
  c.network.n_b = j["network"]["n_b"].get<int>();
  c.network.layers_per_block = j["network"]["layers_per_block"].get<int>();
  c.network.ffe_size = j["network"]["ffe_size"].get<int>();
  c.network.ffe_sigma = j["network"]["ffe_sigma"].get<double>();
  c.network.xi = j["network"]["xi"].get<double>();
  c.network.snake_a = j["network"]["snake_a"].get<double>();
  c.network.activation =
      activation_from_name(j["network"]["activation"].get<std::string>());
  c.network.seed = j["network"]["seed"].get<std::uint64_t>();
  c.weights.pde = j["weights"]["pde"].get<double>();
  c.weights.bc = j["weights"]["bc"].get<double>();
  c.weights.obs = j["weights"]["obs"].get<double>();
  c.weights.pc = j["weights"]["pc"].get<double>();
  c.weights.pc_u = j["weights"]["pc_u"].get<double>();
  c.weights.pc_p = j["weights"]["pc_p"].get<double>();
  c.weights.pc_phitt = j["weights"]["pc_phitt"].get<double>();
  c.weights.rad = j["weights"]["rad"].get<double>();
  c.collocation.n_pde = j["collocation"]["n_pde"].get<Eigen::Index>();
  c.collocation.n_bc = j["collocation"]["n_bc"].get<Eigen::Index>();
  c.collocation.n_pc = j["collocation"]["n_pc"].get<Eigen::Index>();
  c.collocation.n_obs = j["collocation"]["n_obs"].get<Eigen::Index>();
  c.training.adam_epochs = j["training"]["adam_epochs"].get<int>();
  c.training.lbfgs_epochs = j["training"]["lbfgs_epochs"].get<int>();
  c.training.adam.lr_init = j["training"]["adam_lr"].get<double>();
  c.training.adam.decay = j["training"]["adam_decay"].get<double>();
  c.training.checkpoint_every = j["training"]["checkpoint_every"].get<int>();
  c.training.progress_every = j["training"]["progress_every"].get<int>();
  c.ftm.adam_epochs = j["ftm"]["adam_epochs"].get<int>();
  c.ftm.lbfgs_epochs = j["ftm"]["lbfgs_epochs"].get<int>();
  c.ftm.adam_net.lr_init = j["ftm"]["net_lr"].get<double>();
  c.ftm.adam_net.decay = j["ftm"]["net_decay"].get<double>();
  c.ftm.adam_rad.lr_init = j["ftm"]["rad_lr"].get<double>();
  c.ftm.adam_rad.decay = j["ftm"]["rad_decay"].get<double>();
  c.ftm.alpha_init = j["ftm"]["alpha_init"].get<double>();
  c.ftm.beta_init = j["ftm"]["beta_init"].get<double>();
  c.ftm.divergence_limit = j["ftm"]["divergence_limit"].get<double>();
  c.ftm.progress_every = j["ftm"]["progress_every"].get<int>();
  c.fdm.nx = j["fdm"]["nx"].get<Eigen::Index>();
  c.fdm.courant = j["fdm"]["courant"].get<double>();
  c.fdm.steady_tol = j["fdm"]["steady_tol"].get<double>();
  c.fdm.max_periods = j["fdm"]["max_periods"].get<int>();
  c.snr_db = j["noise"]["snr_db"].get<double>();
  c.noise_seed = j["noise"]["seed"].get<std::uint64_t>();
  c.nx_out = j["eval"]["nx_out"].get<Eigen::Index>();
  c.nt_out = j["eval"]["nt_out"].get<Eigen::Index>();
  c.notes = j["notes"].get<std::string>();
  c.output_dir = j["output"]["dir"].get<std::string>();
  return c;
}

}  // namespace

std::string experiment_to_json(const ExperimentConfig& cfg) {
  return schema_json(cfg).dump(2);
}

ExperimentConfig experiment_from_json(const std::string& text) {
  json input = json::parse(text, nullptr, false);
  if (input.is_discarded() || !input.is_object())
    throw std::invalid_argument("config is not a JSON object");
  json base = schema_json(ExperimentConfig{});
  check_against_schema(base, input, "");
  merge_into(base, input);
  return config_from_schema_json(base);
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_from_json(read_text(path));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  flatten_keys(schema_json(ExperimentConfig{}), "", keys);
  return keys;
}

std::vector<std::pair<std::string, std::string>> config_key_docs() {
  return {
      {"geometry.type", "tube profile, \"cylinder\" or \"cone\""},
      {"geometry.radius", "cylinder radius, m"},
      {"geometry.r0", "cone inlet radius, m"},
      {"geometry.r1", "cone outlet radius, m"},
      {"geometry.length", "tube length L, m"},
      {"air.rho", "density, kg/m^3"},
      {"air.c", "sound speed, m/s"},
      {"air.mu", "dynamic viscosity, Pa s"},
      {"air.eta", "heat-capacity ratio"},
      {"air.lambda_th", "thermal conductivity, W/(m K)"},
      {"air.cp", "specific heat at constant pressure, J/(kg K)"},
      {"source.f0", "fundamental frequency, Hz; the period is T = 1/f0"},
      {"source.u0", "peak source volume velocity, m^3/s"},
      {"source.tp_frac", "Rosenberg opening fraction of T"},
      {"source.tn_frac", "Rosenberg closing fraction of T"},
      {"source.smooth_frac", "source smoothing sigma as a fraction of T"},
      {"radiation.delta", "Taylor impedance coefficient (ground truth)"},
      {"radiation.beta_c", "Taylor impedance coefficient (ground truth)"},
      {"pde_form", "horn-equation first-order sign, \"eq1\" or \"literal_eq11\""},
      {"network.n_f", "hidden width"},
      {"network.n_b", "residual block count"},
      {"network.layers_per_block", "FC+Snake pairs per block"},
      {"network.ffe_size", "Fourier frequencies per input coordinate"},
      {"network.ffe_sigma", "std dev of the frozen frequency draws"},
      {"network.xi", "output scale, velocity-potential units"},
      {"network.snake_a", "Snake activation frequency"},
      {"network.activation", "\"snake\" or \"identity\""},
      {"network.seed", "parameter init seed"},
      {"weights.pde", "PDE residual weight"},
      {"weights.bc", "boundary-condition weight"},
      {"weights.obs", "observation weight"},
      {"weights.pc", "periodicity group weight"},
      {"weights.pc_u", "periodicity velocity weight"},
      {"weights.pc_p", "periodicity pressure weight"},
      {"weights.pc_phitt", "periodicity phi_tt weight"},
      {"weights.rad", "radiation misfit weight (fine-tuning)"},
      {"collocation.n_pde", "interior Sobol points"},
      {"collocation.n_bc", "boundary times at x=0"},
      {"collocation.n_pc", "periodicity positions"},
      {"collocation.n_obs", "observation times at x=L"},
      {"training.adam_epochs", "Adam epochs for the field network"},
      {"training.lbfgs_epochs", "L-BFGS epochs for the field network"},
      {"training.adam_lr", "initial Adam learning rate"},
      {"training.adam_decay", "lr decay rate per epoch"},
      {"training.checkpoint_every", "epochs between checkpoints"},
      {"training.progress_every", "stderr cadence, 0 = off"},
      {"ftm.adam_epochs", "fine-tuning Adam epochs"},
      {"ftm.lbfgs_epochs", "fine-tuning L-BFGS epochs"},
      {"ftm.net_lr", "network learning rate during fine-tuning"},
      {"ftm.net_decay", "network lr decay during fine-tuning"},
      {"ftm.rad_lr", "(alpha, beta) learning rate"},
      {"ftm.rad_decay", "(alpha, beta) lr decay"},
      {"ftm.alpha_init", "alpha start value"},
      {"ftm.beta_init", "beta start value"},
      {"ftm.divergence_limit", "|alpha|,|beta| warning threshold"},
      {"ftm.progress_every", "stderr cadence, 0 = off"},
      {"fdm.nx", "reference-solver spatial nodes"},
      {"fdm.courant", "target Courant number c dt/dx"},
      {"fdm.steady_tol", "period-to-period relative L-inf tolerance"},
      {"fdm.max_periods", "period budget before giving up"},
      {"noise.snr_db", "observation SNR, dB"},
      {"noise.seed", "noise generator seed"},
      {"eval.nx_out", "evaluation grid points in x"},
      {"eval.nt_out", "evaluation grid points in t"},
      {"notes", "free text copied into the manifest"},
      {"output.dir", "root directory for run artifacts"},
  };
}

ExperimentConfig apply_overrides(
    const ExperimentConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& sets) {
  json j = schema_json(cfg);
  for (const auto& [key, value] : sets) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      parts.push_back(key.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json* node = &j;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const auto it = node->find(parts[i]);
      if (it == node->end() || !it->is_object()) throw_unknown_key(key);
      node = &*it;
    }
    const auto it = node->find(parts.back());
    if (it == node->end() || it->is_object()) throw_unknown_key(key);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded() || parsed.is_object() || parsed.is_array())
      parsed = json(value);
    if (!same_kind(*it, parsed))
      throw std::invalid_argument("override \"" + key + "=" + value +
                                  "\" has the wrong type (expected " +
                                  std::string(it->type_name()) + ")");
    *it = parsed;
  }
  return experiment_from_json(j.dump());
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = schema_json(cfg);
  j.erase("output");
  j.erase("notes");
  return fnv1a64(j.dump());
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  return buf;
}

Vec add_noise_snr(const Vec& signal, double snr_db, std::uint64_t seed) {
  if (signal.size() == 0)
    throw std::invalid_argument("add_noise_snr: empty signal");
  const double power =
      signal.squaredNorm() / static_cast<double>(signal.size());
  if (!(power > 0.0))
    throw std::invalid_argument("add_noise_snr: zero-power signal");
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Rng rng(seed);
  Vec out(signal.size());
  for (Eigen::Index i = 0; i < signal.size(); ++i)
    out[i] = signal[i] + sigma * rng.normal();
  return out;
}

double realized_snr_db(const Vec& clean, const Vec& noisy) {
  if (clean.size() != noisy.size() || clean.size() == 0)
    throw std::invalid_argument("realized_snr_db: size mismatch");
  const double ps = clean.squaredNorm();
  const double pn = (noisy - clean).squaredNorm();
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / pn);
}

FieldErrorReport field_error(const Mat& p_hat, const Mat& p_ref) {
  if (p_hat.rows() != p_ref.rows() || p_hat.cols() != p_ref.cols())
    throw std::invalid_argument("field_error: shape mismatch");
  if (p_hat.size() == 0) throw std::invalid_argument("field_error: empty fields");
  const Mat diff = p_hat - p_ref;
  const double ref_norm = p_ref.norm();
  const double diff_norm = diff.norm();
  FieldErrorReport r;
  if (ref_norm > 0.0)
    r.rel_l2 = diff_norm / ref_norm;
  else if (diff_norm > 0.0)
    throw std::invalid_argument("field_error: zero reference field");
  r.max_abs = diff.cwiseAbs().maxCoeff();
  r.per_x = diff.array().square().colwise().mean().sqrt().transpose();
  r.per_t = diff.array().square().rowwise().mean().sqrt();
  return r;
}

std::string field_error_to_json(const FieldErrorReport& r) {
  json j;
  j["rel_l2"] = r.rel_l2;
  j["max_abs"] = r.max_abs;
  j["per_x"] = std::vector<double>(r.per_x.data(), r.per_x.data() + r.per_x.size());
  j["per_t"] = std::vector<double>(r.per_t.data(), r.per_t.data() + r.per_t.size());
  return j.dump(2);
}

Mat network_pressure_grid(const NetworkParams& params,
                          const TubeGeometry& geom, const AirProperties& air,
                          double T, Eigen::Index nx_out, Eigen::Index nt_out) {
  if (nx_out < 2 || nt_out < 2)
    throw std::invalid_argument("network_pressure_grid: grid must be >= 2 x 2");
  const double L = geom.length();
  const Vec xs = linspace(0.0, L, nx_out);
  const Vec ts = linspace(0.0, T, nt_out);
  Vec ra(nx_out);
  for (Eigen::Index jx = 0; jx < nx_out; ++jx)
    ra[jx] = loss_coefficients(air, geom, xs[jx]).first * geom.area(xs[jx]);

  Mat out(nt_out, nx_out);
  const Eigen::Index chunk_rows =
      std::max<Eigen::Index>(1, 16384 / nx_out);
  const JetRequest req{false, true, false};
  for (Eigen::Index i0 = 0; i0 < nt_out; i0 += chunk_rows) {
    const Eigen::Index nrows = std::min(chunk_rows, nt_out - i0);
    Mat2X pts(2, nrows * nx_out);
    for (Eigen::Index r = 0; r < nrows; ++r)
      for (Eigen::Index jx = 0; jx < nx_out; ++jx) {
        pts(0, r * nx_out + jx) = xs[jx];
        pts(1, r * nx_out + jx) = ts[i0 + r];
      }
    const FieldEval ev = forward_batch(params, pts, L, T, req);
    for (Eigen::Index r = 0; r < nrows; ++r)
      for (Eigen::Index jx = 0; jx < nx_out; ++jx) {
        const Eigen::Index k = r * nx_out + jx;
        out(i0 + r, jx) = ra[jx] * ev.phi[k] + air.rho * ev.phi_t[k];
      }
  }
  return out;
}

StageSelection StageSelection::all() {
  StageSelection s;
  s.fdm = s.obs = s.gamma = s.eval = s.tom = s.tomb = s.ftm = s.table2 = true;
  return s;
}

StageSelection StageSelection::normalized() const {
  StageSelection s = *this;
  if (s.gamma || s.ftm) s.obs = true;
  if (s.obs || s.eval || s.tomb) s.fdm = true;
  if (s.tom || s.tomb || s.ftm) s.table2 = true;
  return s;
}

namespace {

const char* const kStageOrder[] = {"fdm", "obs",  "gamma", "eval",
                                   "tom", "tomb", "ftm",   "table2"};

json timing_entry(const std::string& name, double seconds) {
  return json{{"name", name}, {"seconds", seconds}};
}

void upsert_timing(json& stages, const std::string& name, double seconds) {
  if (!stages.is_array()) stages = json::array();
  for (auto& entry : stages)
    if (entry.is_object() && entry.value("name", "") == name) {
      entry = timing_entry(name, seconds);
      return;
    }
  stages.push_back(timing_entry(name, seconds));
}

json order_stages(const json& stages) {
  json out = json::array();
  for (const char* name : kStageOrder)
    for (const auto& entry : stages)
      if (entry.is_object() && entry.value("name", "") == name)
        out.push_back(entry);
  return out;
}

bool has_all_stages(const json& stages) {
  for (const char* name : kStageOrder) {
    bool found = false;
    for (const auto& entry : stages)
      if (entry.is_object() && entry.value("name", "") == name) found = true;
    if (!found) return false;
  }
  return true;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const StageSelection& stages_in) {
  cfg.validate();
  const StageSelection sel = stages_in.normalized();
  const std::string hash = config_hash_hex(cfg);
  const fs::path run_dir = cfg.output_dir / hash.substr(0, 12);
  fs::create_directories(run_dir);
  write_text(run_dir / "config.json", experiment_to_json(cfg) + "\n");

  const TubeGeometry geom = cfg.geometry();
  const AirProperties airp = cfg.air();
  const SourceWaveform src = cfg.source();
  const RadiationCoefficients rad = cfg.radiation();
  const double T = cfg.period();
  const double L = geom.length();
  FdmConfig fdm_cfg = cfg.fdm;
  fdm_cfg.form = cfg.pde_form;

  ExperimentResult res;
  res.run_dir = run_dir;
  res.config_hash = hash;

  json manifest;
  {
    const fs::path mp = run_dir / "manifest.json";
    if (fs::exists(mp)) {
      const json old = json::parse(read_text(mp), nullptr, false);
      if (old.is_object() && old.value("config_hash", "") == hash)
        manifest = old;
    }
  }
  manifest["config_hash"] = hash;
  manifest["versions"] = {
      {"tubefield", kVersion},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["seeds"] = {{"network", cfg.network.seed},
                       {"noise", cfg.noise_seed}};
  manifest["notes"] = cfg.notes;
  if (!manifest.contains("stages")) manifest["stages"] = json::array();

  auto write_manifest = [&](const std::string& status) {
    manifest["status"] = status;
    manifest["stages"] = order_stages(manifest["stages"]);
    write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");
  };

  std::optional<FdmSolution> sol;
  std::optional<CollocationSets> sets;
  Vec p_clean, p_noisy;
  std::optional<NetworkParams> params;
  std::optional<LossEvaluator> lossev;

  auto ensure_sets = [&]() {
    if (!sets) sets = CollocationSets::make(cfg.collocation, L, T);
  };
  auto ensure_params = [&]() {
    if (params) return;
    const fs::path ckpt = run_dir / "gamma/checkpoint.bin";
    if (!fs::exists(ckpt))
      throw SolverError("missing " + ckpt.string() +
                        "; run the train stage first");
    params = load_checkpoint(ckpt);
    if (config_to_json(params->config) != config_to_json(cfg.network))
      throw SolverError("checkpoint network config does not match the experiment config");
  };
  auto ensure_evaluator = [&]() {
    if (lossev) return;
    ensure_sets();
    ObservationData od;
    od.times = sets->obs_times;
    od.pressures = p_noisy;
    od.snr_db = res.realized_snr;
    od.noise_seed = cfg.noise_seed;
    lossev.emplace(geom, airp, src, *sets, std::move(od), cfg.weights,
                   cfg.pde_form);
  };

  auto run_stage = [&](const char* name, auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&]() {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
          .count();
    };
    try {
      body();
    } catch (const std::exception& e) {
      upsert_timing(manifest["stages"], name, elapsed());
      write_manifest(std::string("failed at ") + name);
      throw SolverError(std::string("stage ") + name + ": " + e.what());
    }
    res.timings.push_back({name, elapsed()});
    upsert_timing(manifest["stages"], name, res.timings.back().seconds);
  };

  if (sel.fdm)
    run_stage("fdm", [&] {
      sol = run_to_steady_state(geom, airp, src, rad, fdm_cfg);
      const Eigen::Index spp = sol->grid.steps_per_period;
      const Eigen::Index nx = sol->grid.nx;
      Mat field(spp + 1, nx + 1);
      field.col(0) = sol->t.segment(1, spp + 1);
      field.rightCols(nx) = sol->p.middleRows(1, spp + 1);
      std::vector<std::string> cols{"t"};
      for (Eigen::Index jx = 0; jx < nx; ++jx)
        cols.push_back("x" + format_full(sol->x[jx]));
      write_csv(run_dir / "fdm/field.csv", cols, field);
      Mat bnd(spp + 1, 4);
      bnd.col(0) = sol->t.segment(1, spp + 1);
      bnd.col(1) = sol->p_L.segment(1, spp + 1);
      bnd.col(2) = sol->p_t_L.segment(1, spp + 1);
      bnd.col(3) = sol->u_t_L.segment(1, spp + 1);
      write_csv(run_dir / "fdm/boundary.csv", {"t", "p", "p_t", "u_t"}, bnd);
      manifest["fdm"] = {{"periods_run", sol->periods_run},
                         {"steady_residual", sol->steady_residual},
                         {"nx", sol->grid.nx},
                         {"dt", sol->grid.dt},
                         {"steps_per_period", spp}};
    });

  if (sel.obs)
    run_stage("obs", [&] {
      ensure_sets();
      const BoundarySignals bs = boundary_signals(*sol, sets->obs_times);
      p_clean = bs.p;
      p_noisy = add_noise_snr(p_clean, cfg.snr_db, cfg.noise_seed);
      res.realized_snr = realized_snr_db(p_clean, p_noisy);
      Mat m(p_clean.size(), 3);
      m.col(0) = sets->obs_times;
      m.col(1) = p_clean;
      m.col(2) = p_noisy;
      write_csv(run_dir / "obs/observations.csv",
                {"t", "p_clean", "p_noisy"}, m);
      manifest["noise"] = {{"snr_db_requested", cfg.snr_db},
                           {"snr_db_realized", res.realized_snr},
                           {"seed", cfg.noise_seed}};
    });

  if (sel.gamma)
    run_stage("gamma", [&] {
      params = init_params(cfg.network);
      ensure_evaluator();
      TrainConfig tc = cfg.training;
      tc.checkpoint_path = run_dir / "gamma/checkpoint.bin";
      tc.log_path = run_dir / "gamma/train_log.csv";
      res.gamma = train_gamma(*params, *lossev, tc);
      manifest["gamma"] = {
          {"initial_total", res.gamma.initial_total},
          {"final_total", res.gamma.final_total},
          {"epochs_run", res.gamma.epochs_run},
          {"lbfgs_line_search_failures",
           res.gamma.lbfgs_line_search_failures}};
    });

  if (sel.eval)
    run_stage("eval", [&] {
      ensure_params();
      const Mat p_hat =
          network_pressure_grid(*params, geom, airp, T, cfg.nx_out, cfg.nt_out);
      const Mat p_ref = resample_to_grid(*sol, sol->p, cfg.nx_out, cfg.nt_out);
      res.field = field_error(p_hat, p_ref);
      write_text(run_dir / "eval/field_error.json",
                 field_error_to_json(res.field) + "\n");
      const Vec xs = linspace(0.0, L, cfg.nx_out);
      Mat out(cfg.nt_out, cfg.nx_out + 1);
      out.col(0) = linspace(0.0, T, cfg.nt_out);
      out.rightCols(cfg.nx_out) = p_hat;
      std::vector<std::string> cols{"t"};
      for (Eigen::Index jx = 0; jx < cfg.nx_out; ++jx)
        cols.push_back("x" + format_full(xs[jx]));
      write_csv(run_dir / "eval/p_field.csv", cols, out);
      manifest["eval"] = {{"rel_l2", res.field.rel_l2},
                          {"max_abs", res.field.max_abs}};
    });

  if (sel.tom)
    run_stage("tom", [&] {
      ensure_params();
      const TomProblem tp =
          tom_collect_signals(*params, airp, geom, T, cfg.collocation.n_obs);
      res.tom = tom_fit(tp);
      res.tom.set_ground_truth(rad.alpha, rad.beta);
      write_text(run_dir / "inverse/tom.json",
                 estimation_to_json(res.tom) + "\n");
    });

  if (sel.tomb)
    run_stage("tomb", [&] {
      res.tomb = tomb_fit(*sol, airp, geom);
      res.tomb.set_ground_truth(rad.alpha, rad.beta);
      write_text(run_dir / "inverse/tomb.json",
                 estimation_to_json(res.tomb) + "\n");
    });

  if (sel.ftm)
    run_stage("ftm", [&] {
      ensure_params();
      ensure_evaluator();
      FtmConfig fc = cfg.ftm;
      fc.trace_path = run_dir / "inverse/ftm_trace.csv";
      res.ftm = ftm_train(*params, *lossev, fc);
      res.ftm.set_ground_truth(rad.alpha, rad.beta);
      write_text(run_dir / "inverse/ftm.json",
                 estimation_to_json(res.ftm) + "\n");
    });

  if (sel.table2)
    run_stage("table2", [&] {
      const fs::path fj = run_dir / "inverse/ftm.json";
      const fs::path tj = run_dir / "inverse/tom.json";
      const fs::path bj = run_dir / "inverse/tomb.json";
      if (!fs::exists(fj) || !fs::exists(tj) || !fs::exists(bj)) return;
      json t2;
      t2["gt"] = {{"alpha", rad.alpha}, {"beta", rad.beta}};
      const std::pair<const char*, const fs::path*> sources[] = {
          {"ftm", &fj}, {"tom", &tj}, {"tomb", &bj}};
      for (const auto& [name, path] : sources) {
        const json e = json::parse(read_text(*path));
        json entry = {{"alpha", e.at("alpha_hat")},
                      {"beta", e.at("beta_hat")},
                      {"residual", e.at("residual")}};
        if (e.contains("rel_errors") && e["rel_errors"].is_object()) {
          entry["rel_err_alpha"] = e["rel_errors"]["alpha"];
          entry["rel_err_beta"] = e["rel_errors"]["beta"];
        }
        t2[name] = entry;
      }
      write_text(run_dir / "table2.json", t2.dump(2) + "\n");
    });

  write_manifest(has_all_stages(manifest["stages"]) ? "complete" : "partial");
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, StageSelection::all());
}

double calibrate_xi(const ExperimentConfig& cfg, Eigen::Index nx_coarse) {
  cfg.validate();
  if (nx_coarse < 4)
    throw std::invalid_argument("calibrate_xi: nx_coarse must be >= 4");
  FdmConfig fc = cfg.fdm;
  fc.form = cfg.pde_form;
  fc.nx = std::min(fc.nx, nx_coarse);
  const FdmSolution sol = run_to_steady_state(cfg.geometry(), cfg.air(),
                                              cfg.source(), cfg.radiation(), fc);
  if (!(sol.max_abs_phi > 0.0))
    throw SolverError("calibrate_xi: the coarse run produced a zero field");
  return sol.max_abs_phi;
}

}  // namespace tubefield
