#ifndef TUBEFIELD_HARNESS_HPP
#define TUBEFIELD_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tubefield/common.hpp"
#include "tubefield/fdm.hpp"
#include "tubefield/inverse.hpp"
#include "tubefield/network.hpp"
#include "tubefield/physics.hpp"
#include "tubefield/training.hpp"

namespace tubefield {

inline constexpr const char* kVersion = "1.0.0";

/// One experiment, fully serializable as grouped JSON (see config_keys()
/// for every dotted key). Defaults reproduce the paper-scale scene; the
/// nested optimizer/solver structs keep their own defaults. Run-local path
/// fields inside `training` and `ftm` are not part of the schema; the
/// harness fills them per run.
struct ExperimentConfig {
  // geometry.*
  std::string geometry_type = "cylinder";  // "cylinder" or "cone"
  double radius = 0.02;                    // cylinder radius, m
  double r0 = 0.02, r1 = 0.02;             // cone end radii, m
  double length = 1.0;                     // m

  // air.* (omega_c of the loss terms is tied to source.f0)
  double rho = 1.2;           // kg/m^3
  double c = 343.0;           // m/s
  double mu = 1.81e-5;        // Pa s
  double eta = 1.402;         // heat-capacity ratio
  double lambda_th = 0.0262;  // W/(m K)
  double cp = 1005.0;         // J/(kg K)

  // source.* (the period is T = 1/f0)
  double f0 = 261.6;           // fundamental, Hz
  double u0 = 5e-4;            // peak volume velocity, m^3/s
  double tp_frac = 0.40;       // opening fraction of T
  double tn_frac = 0.16;       // closing fraction of T
  double smooth_frac = 0.005;  // Gaussian kernel sigma as a fraction of T

  // radiation.* (ground truth; alpha = 1/delta, beta = beta_c/delta^2)
  double delta = 0.8236;
  double beta_c = 0.5;

  PdeForm pde_form = PdeForm::Eq1;  // "eq1" or "literal_eq11"

  NetworkConfig network;
  LossWeights weights;
  CollocationConfig collocation;
  TrainConfig training;
  FtmConfig ftm;
  FdmConfig fdm;

  // noise.*
  double snr_db = 40.0;
  std::uint64_t noise_seed = 1234;

  // eval.* (evaluation grid: nt_out rows by nx_out columns on [0,L]x[0,T])
  Eigen::Index nx_out = 1001;
  Eigen::Index nt_out = 5001;

  std::string notes;  // copied into the manifest; not hashed
  std::filesystem::path output_dir = "runs";

  double period() const { return 1.0 / f0; }
  TubeGeometry geometry() const;
  AirProperties air() const;
  SourceWaveform source() const;
  RadiationCoefficients radiation() const;
  void validate() const;
};

/// Grouped-JSON serialization. Parsing accepts partial configs (missing
/// keys keep their defaults) but rejects unknown keys with the nearest
/// valid ones named, and rejects type mismatches.
std::string experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Every valid dotted config key, in schema order.
std::vector<std::string> config_keys();
/// One-line doc (meaning, units, default) per dotted key.
std::vector<std::pair<std::string, std::string>> config_key_docs();

/// Applies dotted-key overrides ("training.adam_epochs=100") on the JSON
/// form. Values parse as JSON scalars; anything unparseable is a string.
/// Unknown keys and type mismatches throw std::invalid_argument.
ExperimentConfig apply_overrides(
    const ExperimentConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& sets);

/// Content hash of the canonical config JSON. The output group and notes
/// do not participate: the hash identifies the computation, not where its
/// artifacts land.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string config_hash_hex(const ExperimentConfig& cfg);

/// signal + Normal(0, sigma_n^2) noise with
/// sigma_n^2 = mean(signal^2) / 10^(snr_db/10), seeded and deterministic.
/// Throws std::invalid_argument on an empty or zero-power signal.
Vec add_noise_snr(const Vec& signal, double snr_db, std::uint64_t seed);

/// 10 log10(mean(clean^2) / mean((noisy-clean)^2)); +inf when equal.
double realized_snr_db(const Vec& clean, const Vec& noisy);

/// Grid-error summary between two equally shaped (nt x nx) fields.
/// Profiles are RMS absolute errors: per_x over time at each column,
/// per_t over space at each row.
struct FieldErrorReport {
  double rel_l2 = 0.0;   // ||hat - ref||_F / ||ref||_F
  double max_abs = 0.0;  // L-inf of the difference
  Vec per_x, per_t;
};

FieldErrorReport field_error(const Mat& p_hat, const Mat& p_ref);
std::string field_error_to_json(const FieldErrorReport& r);

/// Network pressure p = R(x)A(x) phi + rho phi_t on the inclusive
/// [0,L] x [0,T] grid, evaluated in row chunks; nt_out rows by nx_out
/// columns, matching resample_to_grid's orientation.
Mat network_pressure_grid(const NetworkParams& params,
                          const TubeGeometry& geom, const AirProperties& air,
                          double T, Eigen::Index nx_out, Eigen::Index nt_out);

/// Which pipeline stages run_experiment executes and writes. normalized()
/// adds the cheap in-memory dependencies (fdm for obs/eval/tomb, obs for
/// gamma/ftm, table2 after any estimator); the gamma stage is never added
/// implicitly, stages needing the network load gamma/checkpoint.bin
/// instead.
struct StageSelection {
  bool fdm = false;
  bool obs = false;
  bool gamma = false;
  bool eval = false;
  bool tom = false;
  bool tomb = false;
  bool ftm = false;
  bool table2 = false;

  static StageSelection all();
  StageSelection normalized() const;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::string config_hash;
  double realized_snr = 0.0;  // dB, when the obs stage ran
  TrainReport gamma;
  FieldErrorReport field;
  EstimationResult ftm, tom, tomb;
  std::vector<StageTiming> timings;
};

/// Runs the selected stages into <output_dir>/<12-hex hash prefix>:
/// config.json, manifest.json, fdm/{field.csv,boundary.csv},
/// obs/observations.csv, gamma/{checkpoint.bin,train_log.csv},
/// eval/{field_error.json,p_field.csv},
/// inverse/{ftm.json,ftm_trace.csv,tom.json,tomb.json}, table2.json.
/// Reruns with the same config reproduce every numeric artifact bitwise
/// (manifest timings excepted). A stage failure writes the manifest with
/// the failure recorded, keeps completed outputs, and rethrows as
/// SolverError prefixed with the stage name. The manifest merges stage
/// timings across partial runs of the same directory.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const StageSelection& stages);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Peak |phi| of a coarse FDM run (nx capped at nx_coarse), the documented
/// calibration rule for the network output scale xi.
double calibrate_xi(const ExperimentConfig& cfg, Eigen::Index nx_coarse = 201);

}  // namespace tubefield

#endif
