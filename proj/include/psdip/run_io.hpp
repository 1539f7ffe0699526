#pragma once

// Run plumbing: flat JSON configs, JSON-lines logs, manifests, parameter checkpoints, metric tables.
// Requires OpenSSL libcrypto (target psdip::io).

#include <openssl/evp.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psdip/config.hpp"
#include "psdip/error.hpp"
#include "psdip/metrics.hpp"
#include "psdip/net.hpp"
#include "psdip/npy.hpp"

namespace psdip {

inline constexpr const char* kVersion = "1.0.0";

using Json = nlohmann::ordered_json;

// ---- configuration -------------------------------------------------------

inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["lambda"] = c.lambda;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["init_steps"] = c.init_steps;
  j["steps"] = c.steps;
  j["ratio"] = c.ratio;
  j["offset"] = c.offset;
  j["gnyq"] = c.gnyq;
  j["gnyq_pan"] = c.gnyq_pan;
  j["kernel_size"] = c.kernel_size;
  j["noise_amplitude"] = c.noise_amplitude;
  j["seed"] = c.seed;
  j["hidden_channels"] = c.hidden_channels;
  j["res_blocks"] = c.res_blocks;
  j["output_init_gain"] = c.output_init_gain;
  j["noise_input"] = c.ablation.noise_input;
  j["freeze_theta_after_init"] = c.ablation.freeze_theta_after_init;
  j["skip_init"] = c.ablation.skip_init;
  j["unfix_network_input"] = c.ablation.unfix_network_input;
  j["tv_lambda1"] = c.tv.lambda1;
  j["tv_lambda2"] = c.tv.lambda2;
  j["tv_step_x"] = c.tv.step_x ? Json(*c.tv.step_x) : Json(nullptr);  // null: same as alpha
  j["tv_step_g"] = c.tv.step_g;
  j["precision"] = c.precision;
  return j;
}

namespace detail {

template <class V>
V json_get(const Json& j, const std::string& key) {
  try {
    if constexpr (std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
      if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
        fail_argument("config.type", "config key '" + key + "' must be a nonnegative integer");
    } else if constexpr (std::is_same_v<V, bool>) {
      if (!j.is_boolean()) fail_argument("config.type", "config key '" + key + "' must be a boolean");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!j.is_number()) fail_argument("config.type", "config key '" + key + "' must be a number");
    }
    return j.get<V>();
  } catch (const nlohmann::json::exception&) {
    fail_argument("config.type", "config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `base`. Unknown keys are rejected.
inline RunConfig config_from_json(const Json& j, RunConfig base = {}) {
  if (!j.is_object()) fail_argument("config.type", "config must be a JSON object");
  using detail::json_get;
  RunConfig& c = base;
  for (const auto& [key, v] : j.items()) {
    if (key == "lambda") c.lambda = json_get<double>(v, key);
    else if (key == "alpha") c.alpha = json_get<double>(v, key);
    else if (key == "beta") c.beta = json_get<double>(v, key);
    else if (key == "init_steps") c.init_steps = json_get<std::size_t>(v, key);
    else if (key == "steps") c.steps = json_get<std::size_t>(v, key);
    else if (key == "ratio") c.ratio = json_get<std::size_t>(v, key);
    else if (key == "offset") c.offset = json_get<std::size_t>(v, key);
    else if (key == "gnyq") {
      if (v.is_array()) {
        c.gnyq.clear();
        for (const auto& e : v) c.gnyq.push_back(json_get<double>(e, key));
      } else {
        c.gnyq = {json_get<double>(v, key)};
      }
    } else if (key == "gnyq_pan") c.gnyq_pan = json_get<double>(v, key);
    else if (key == "kernel_size") c.kernel_size = json_get<std::size_t>(v, key);
    else if (key == "noise_amplitude") c.noise_amplitude = json_get<double>(v, key);
    else if (key == "seed") c.seed = json_get<std::uint64_t>(v, key);
    else if (key == "hidden_channels") c.hidden_channels = json_get<std::size_t>(v, key);
    else if (key == "res_blocks") c.res_blocks = json_get<std::size_t>(v, key);
    else if (key == "output_init_gain") c.output_init_gain = json_get<double>(v, key);
    else if (key == "noise_input") c.ablation.noise_input = json_get<bool>(v, key);
    else if (key == "freeze_theta_after_init") c.ablation.freeze_theta_after_init = json_get<bool>(v, key);
    else if (key == "skip_init") c.ablation.skip_init = json_get<bool>(v, key);
    else if (key == "unfix_network_input") c.ablation.unfix_network_input = json_get<bool>(v, key);
    else if (key == "tv_lambda1") c.tv.lambda1 = json_get<double>(v, key);
    else if (key == "tv_lambda2") c.tv.lambda2 = json_get<double>(v, key);
    else if (key == "tv_step_x") c.tv.step_x = v.is_null() ? std::nullopt : std::optional(json_get<double>(v, key));
    else if (key == "tv_step_g") c.tv.step_g = json_get<double>(v, key);
    else if (key == "precision") c.precision = json_get<std::string>(v, key);
    else fail_argument("config.unknown_key", "unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("io.open", "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail_argument("config.parse", path + ": " + e.what());
  }
}

/// Loads a flat config file. A manifest written by a previous run is accepted too; its config echo is used.
inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  const Json j = read_json_file(path);
  if (j.is_object() && j.contains("tool") && j.contains("config")) return config_from_json(j.at("config"), base);
  return config_from_json(j, base);
}

// ---- run log -------------------------------------------------------------

inline Json to_json(const LogRecord& r) {
  Json j;
  j["phase"] = r.phase;
  j["step"] = r.step;
  if (r.l_y) j["l_y"] = *r.l_y;
  if (r.l_p) j["l_p"] = *r.l_p;
  j["total"] = r.total;
  if (r.psnr) j["psnr"] = *r.psnr;
  return j;
}

/// One JSON object per line; wall-clock times live in the manifest so logs stay reproducible.
inline void write_runlog(const std::string& path, const RunLog& log) {
  std::ofstream out(path);
  if (!out) fail_io("io.open", "cannot write " + path);
  for (const auto& r : log.records) out << to_json(r).dump() << '\n';
  if (!out) fail_io("io.write", "failed writing " + path);
}

inline RunLog read_runlog(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("io.open", "cannot open " + path);
  RunLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail_io("runlog.parse", path + ": malformed line");
    LogRecord r;
    try {
      r.phase = j.at("phase").get<std::string>();
      r.step = j.at("step").get<std::size_t>();
      if (j.contains("l_y")) r.l_y = j["l_y"].get<double>();
      if (j.contains("l_p")) r.l_p = j["l_p"].get<double>();
      r.total = j.at("total").get<double>();
      if (j.contains("psnr")) r.psnr = j["psnr"].get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail_io("runlog.parse", path + ": " + e.what());
    }
    log.records.push_back(r);
  }
  return log;
}

// ---- metrics -------------------------------------------------------------

inline Json to_json(const QnrReport& q) {
  Json j;
  j["qnr"] = q.qnr;
  j["d_lambda"] = q.d_lambda;
  j["d_s"] = q.d_s;
  return j;
}

inline Json to_json(const MetricReport& m) {
  Json j;
  j["psnr"] = m.psnr;
  j["ssim"] = m.ssim;
  j["sam"] = m.sam;
  j["ergas"] = m.ergas;
  j["scc"] = m.scc;
  if (m.qnr) j["qnr"] = to_json(*m.qnr);
  return j;
}

/// CSV with one row per named report plus mean and std rows.
inline void write_metrics_csv(const std::string& path, const std::vector<std::pair<std::string, MetricReport>>& rows) {
  require(!rows.empty(), "metrics.empty", "no reports to tabulate");
  std::ofstream out(path);
  if (!out) fail_io("io.open", "cannot write " + path);
  out << std::setprecision(17);
  out << "name,psnr,ssim,sam,ergas,scc\n";
  std::array<std::vector<double>, 5> cols;
  for (const auto& [name, m] : rows) {
    const std::array<double, 5> v = {m.psnr, m.ssim, m.sam, m.ergas, m.scc};
    out << name;
    for (std::size_t k = 0; k < 5; ++k) {
      out << ',' << v[k];
      cols[k].push_back(v[k]);
    }
    out << '\n';
  }
  std::array<MeanStd, 5> agg;
  for (std::size_t k = 0; k < 5; ++k) agg[k] = mean_std(cols[k]);
  out << "mean";
  for (const auto& a : agg) out << ',' << a.mean;
  out << "\nstd";
  for (const auto& a : agg) out << ',' << a.std;
  out << '\n';
  if (!out) fail_io("io.write", "failed writing " + path);
}

// ---- hashing and manifest --------------------------------------------------

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("io.open", "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    fail_io("io.hash", "cannot initialize SHA-256");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[k]);
  return hex.str();
}

struct Manifest {
  std::string command;
  RunConfig config;
  std::map<std::string, std::string> inputs;  // role -> path
  std::vector<std::string> outputs;
  std::map<std::string, double> phase_seconds;
  Json metrics;  // null when nothing was measured
};

inline Json to_json(const Manifest& m) {
  Json j;
  j["tool"] = "psdip";
  j["version"] = kVersion;
  j["command"] = m.command;
  j["seed"] = m.config.seed;
  j["config"] = config_to_json(m.config);
  Json inputs = Json::object();
  for (const auto& [role, path] : m.inputs) inputs[role] = {{"path", path}, {"sha256", sha256_file(path)}};
  j["inputs"] = inputs;
  j["outputs"] = m.outputs;
  j["phase_seconds"] = m.phase_seconds;
  j["metrics"] = m.metrics;
  return j;
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) fail_io("io.open", "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) fail_io("io.write", "failed writing " + path);
}

// ---- parameter checkpoints -------------------------------------------------

/// Writes one NPY file per weight and bias tensor plus params.json describing the architecture.
template <class T>
void save_params(const std::string& dir, const NetParams<T>& params) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_io("io.mkdir", "cannot create " + dir);
  Json j;
  j["arch"] = {{"in_channels", params.arch.in_channels},
               {"out_channels", params.arch.out_channels},
               {"hidden_channels", params.arch.hidden_channels},
               {"res_blocks", params.arch.res_blocks},
               {"kernel", params.arch.kernel}};
  j["seed"] = params.seed;
  Json weights = Json::array(), biases = Json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    std::ostringstream w, b;
    w << "weight_" << std::setw(2) << std::setfill('0') << l << ".npy";
    b << "bias_" << std::setw(2) << std::setfill('0') << l << ".npy";
    write_npy((fs::path(dir) / w.str()).string(), params.weights[l]);
    write_npy((fs::path(dir) / b.str()).string(), params.biases[l]);
    weights.push_back(w.str());
    biases.push_back(b.str());
  }
  j["weights"] = weights;
  j["biases"] = biases;
  write_json_file((fs::path(dir) / "params.json").string(), j);
}

template <class T>
NetParams<T> load_params(const std::string& dir) {
  namespace fs = std::filesystem;
  const Json j = read_json_file((fs::path(dir) / "params.json").string());
  NetParams<T> params;
  try {
    const auto& a = j.at("arch");
    params.arch = NetArch{a.at("in_channels").get<std::size_t>(), a.at("out_channels").get<std::size_t>(),
                          a.at("hidden_channels").get<std::size_t>(), a.at("res_blocks").get<std::size_t>(),
                          a.at("kernel").get<std::size_t>()};
    params.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("weights"))
      params.weights.push_back(to_tensor3<T>(read_npy((fs::path(dir) / f.get<std::string>()).string())));
    for (const auto& f : j.at("biases"))
      params.biases.push_back(to_tensor3<T>(read_npy((fs::path(dir) / f.get<std::string>()).string())));
  } catch (const nlohmann::json::exception& e) {
    fail_io("checkpoint.manifest", dir + ": " + e.what());
  }
  check_params(params, params.arch.in_channels);
  return params;
}

}  // namespace psdip
