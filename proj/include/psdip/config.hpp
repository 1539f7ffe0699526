#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psdip/error.hpp"

namespace psdip {

struct Ablation {
  bool noise_input = false;              // network sees frozen N(0,1) noise instead of (X, P)
  bool freeze_theta_after_init = false;  // only X is updated in the main loop
  bool skip_init = false;                // no theta initialization phase
  bool unfix_network_input = false;      // X-step differentiates through the network input too
};

struct TvConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  std::optional<double> step_x;  // defaults to RunConfig::alpha
  double step_g = 0.5;
};

struct RunConfig {
  double lambda = 0.1;
  double alpha = 2.0;
  double beta = 1e-3;
  std::size_t init_steps = 8000;
  std::size_t steps = 3000;
  std::size_t ratio = 4;
  std::size_t offset = 0;
  std::vector<double> gnyq = {0.3};  // one value is shared by every band
  double gnyq_pan = 0.3;
  std::size_t kernel_size = 41;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
  std::size_t hidden_channels = 32;
  std::size_t res_blocks = 4;
  double output_init_gain = 0.1;
  Ablation ablation;
  TvConfig tv;
  std::string precision = "float64";

  double tv_step_x() const { return tv.step_x.value_or(alpha); }

  std::vector<double> band_gnyq(std::size_t bands) const {
    if (gnyq.size() == 1) return std::vector<double>(bands, gnyq[0]);
    require(gnyq.size() == bands, "config.gnyq", "gnyq needs one value or one value per band");
    return gnyq;
  }

  void validate() const {
    require(lambda > 0.0 && alpha > 0.0 && beta > 0.0, "config.positive", "lambda, alpha and beta must be positive");
    require(ratio >= 1, "config.ratio", "ratio must be >= 1");
    require(offset < ratio, "config.offset", "offset must lie in [0, ratio)");
    require(kernel_size % 2 == 1, "config.kernel_size", "kernel_size must be odd");
    require(!gnyq.empty(), "config.gnyq", "gnyq must not be empty");
    require(noise_amplitude >= 0.0, "config.noise", "noise_amplitude must be nonnegative");
    require(hidden_channels > 0, "config.arch", "hidden_channels must be positive");
    require(output_init_gain > 0.0, "config.arch", "output_init_gain must be positive");
    require(tv.lambda1 > 0.0 && tv.lambda2 > 0.0, "config.tv", "tv lambdas must be positive");
    require(tv_step_x() > 0.0 && tv.step_g > 0.0, "config.tv", "tv step sizes must be positive");
    require(precision == "float64" || precision == "float32", "config.precision",
            "precision must be float64 or float32");
  }
};

/// One logged optimizer step. `phase` is "init", "main" or "tv"; init records only carry `total`.
struct LogRecord {
  std::string phase;
  std::size_t step = 0;
  std::optional<double> l_y;
  std::optional<double> l_p;
  double total = 0.0;
  std::optional<double> psnr;
};

struct RunLog {
  std::vector<LogRecord> records;
  std::map<std::string, double> phase_seconds;

  void append(const RunLog& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
    for (const auto& [k, v] : other.phase_seconds) phase_seconds[k] += v;
  }
};

/// Initialization-phase schedule: every step for the first 100, then every 10th.
inline bool log_init_step(std::size_t step) { return step <= 100 || step % 10 == 0; }

inline void check_finite_loss(double value, const char* where) {
  if (!std::isfinite(value)) fail_numerical("loss.non_finite", std::string("non-finite objective during ") + where);
}

}  // namespace psdip
