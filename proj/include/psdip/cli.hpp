#pragma once

// Command-line front end. run_cli() returns the process exit code:
// 0 success, 2 bad arguments, 3 I/O failure, 4 numerical failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psdip/error.hpp"
#include "psdip/metrics.hpp"
#include "psdip/npy.hpp"
#include "psdip/pstv.hpp"
#include "psdip/run_io.hpp"
#include "psdip/sensor.hpp"
#include "psdip/solver.hpp"

namespace psdip::cli {

namespace fs = std::filesystem;

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 1;
}

inline const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "argument";
    case ErrorKind::io: return "io";
    case ErrorKind::numerical: return "numerical";
  }
  return "internal";
}

/// Single-line diagnostic: error: kind=<kind> code=<code> message="<text>"
inline std::string diagnostic(const std::string& kind, const std::string& code, std::string message) {
  for (auto& ch : message)
    if (ch == '\n' || ch == '\r') ch = ' ';
    else if (ch == '"') ch = '\'';
  return "error: kind=" + kind + " code=" + code + " message=\"" + message + "\"";
}

struct Options {
  std::string lrms, pan, ref, out, config, in;
  std::vector<std::string> ins, refs;
  std::string csv, size, save_params;
  std::optional<double> lambda, alpha, beta;
  std::optional<std::size_t> steps, init_steps, ratio, offset;
  std::optional<std::uint64_t> seed;
  std::vector<double> gnyq;
  bool noise_input = false, freeze_theta = false, skip_init = false, unfix_input = false;
};

inline RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  if (o.lambda) c.lambda = *o.lambda;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.beta) c.beta = *o.beta;
  if (o.steps) c.steps = *o.steps;
  if (o.init_steps) c.init_steps = *o.init_steps;
  if (o.seed) c.seed = *o.seed;
  if (o.ratio) c.ratio = *o.ratio;
  if (o.offset) c.offset = *o.offset;
  if (!o.gnyq.empty()) c.gnyq = o.gnyq;
  c.ablation.noise_input |= o.noise_input;
  c.ablation.freeze_theta_after_init |= o.freeze_theta;
  c.ablation.skip_init |= o.skip_init;
  c.ablation.unfix_network_input |= o.unfix_input;
  c.validate();
  return c;
}

inline void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) fail_argument("cli.missing", std::string("missing required flag ") + flag);
}

/// Directory that receives runlog.jsonl and manifest.json next to the primary output.
inline fs::path run_dir(const std::string& out) {
  fs::path dir = fs::path(out).parent_path();
  if (dir.empty()) dir = ".";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_io("io.mkdir", "cannot create " + dir.string());
  return dir;
}

inline fs::path sibling(const std::string& out, const std::string& suffix) {
  const fs::path p(out);
  return p.parent_path() / (p.stem().string() + suffix + ".npy");
}

inline void finish_run(const std::string& out, Manifest m, const RunLog& log) {
  const fs::path dir = run_dir(out);
  write_runlog((dir / "runlog.jsonl").string(), log);
  m.phase_seconds = log.phase_seconds;
  write_json_file((dir / "manifest.json").string(), to_json(m));
}

template <class T>
Tensor3<T> load3(const std::string& path) {
  return to_tensor3<T>(read_npy(path));
}

template <class T>
Tensor2<T> load2(const std::string& path) {
  return to_tensor2<T>(read_npy(path));
}

template <class T>
int cmd_fuse(const Options& o, const RunConfig& cfg, bool tv) {
  require_flag(o.lrms, "--lrms");
  require_flag(o.pan, "--pan");
  require_flag(o.out, "--out");
  const auto y = load3<T>(o.lrms);
  const auto pan = load2<T>(o.pan);
  std::optional<Tensor3<T>> ref;
  if (!o.ref.empty()) ref = load3<T>(o.ref);
  const Tensor3<T>* ref_ptr = ref ? &*ref : nullptr;
  run_dir(o.out);

  Manifest m;
  m.command = tv ? "fuse-tv" : "fuse";
  m.config = cfg;
  m.inputs = {{"lrms", o.lrms}, {"pan", o.pan}};
  if (ref) m.inputs["ref"] = o.ref;

  Tensor3<T> x, g;
  RunLog log;
  if (tv) {
    auto res = pstv_run(y, pan, cfg, ref_ptr);
    x = std::move(res.x);
    g = std::move(res.g);
    log = std::move(res.log);
  } else {
    auto res = psdip_run(y, pan, cfg, ref_ptr);
    x = std::move(res.x);
    g = std::move(res.g);
    log = std::move(res.log);
    if (!o.save_params.empty()) save_params(o.save_params, res.params);
  }
  write_npy(o.out, x);
  const auto g_path = sibling(o.out, "_g").string();
  write_npy(g_path, g);
  m.outputs = {o.out, g_path};

  if (ref) {
    require(ref->height() == x.height() && ref->width() == x.width() && ref->bands() == x.bands(), "shape.mismatch",
            "reference shape " + ref->shape_string() + " differs from the fused " + x.shape_string());
    m.metrics = to_json(reference_metrics(x, *ref, cfg.ratio));
  } else {
    const auto pan_bank = mtf_kernel_bank<T>(cfg.gnyq_pan, 1, cfg.ratio, cfg.kernel_size);
    m.metrics = Json{{"qnr", to_json(qnr(x, y, pan, cfg.ratio, pan_bank, cfg.offset))}};
  }
  finish_run(o.out, std::move(m), log);
  return 0;
}

template <class T>
int cmd_degrade(const Options& o, const RunConfig& cfg) {
  require_flag(o.in, "--in");
  require_flag(o.out, "--out");
  const auto x = load3<T>(o.in);
  const auto bank = mtf_kernel_bank<T>(cfg.band_gnyq(x.bands()), cfg.ratio, cfg.kernel_size);
  const auto y = degrade(x, bank, cfg.ratio, cfg.offset, SensorNoise{cfg.noise_amplitude, cfg.seed});
  run_dir(o.out);
  write_npy(o.out, y);
  Manifest m;
  m.command = "degrade";
  m.config = cfg;
  m.inputs = {{"in", o.in}};
  m.outputs = {o.out};
  if (!o.pan.empty()) {
    const auto pan = load2<T>(o.pan);
    const auto pan_bank = mtf_kernel_bank<T>(cfg.gnyq_pan, 1, cfg.ratio, cfg.kernel_size);
    const auto pan_lr = degrade(pan, pan_bank, cfg.ratio, cfg.offset);
    const auto pan_out = (fs::path(o.out).parent_path() / "pan_lr.npy").string();
    write_npy(pan_out, pan_lr);
    m.inputs["pan"] = o.pan;
    m.outputs.push_back(pan_out);
  }
  finish_run(o.out, std::move(m), {});
  return 0;
}

template <class T>
int cmd_extend_pan(const Options& o, const RunConfig& cfg) {
  require_flag(o.lrms, "--lrms");
  require_flag(o.pan, "--pan");
  require_flag(o.out, "--out");
  const auto p_hat = extend_pan(load2<T>(o.pan), load3<T>(o.lrms));
  run_dir(o.out);
  write_npy(o.out, p_hat);
  Manifest m;
  m.command = "extend-pan";
  m.config = cfg;
  m.inputs = {{"lrms", o.lrms}, {"pan", o.pan}};
  m.outputs = {o.out};
  finish_run(o.out, std::move(m), {});
  return 0;
}

inline SceneSpec parse_size(const std::string& text, std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  std::size_t h = 0, w = 0, s = 0;
  char x1 = 0, x2 = 0;
  std::istringstream in(text);
  if (!(in >> h >> x1 >> w >> x2 >> s) || x1 != 'x' || x2 != 'x' || !in.eof() || h == 0 || w == 0 || s == 0)
    fail_argument("cli.size", "--size must look like HxWxS, got '" + text + "'");
  spec.height = h;
  spec.width = w;
  spec.bands = s;
  return spec;
}

template <class T>
int cmd_synth(const Options& o, const RunConfig& cfg) {
  require_flag(o.out, "--out");
  const auto spec = parse_size(o.size.empty() ? "64x64x4" : o.size, cfg.seed);
  const auto scene = synth_scene<T>(spec);
  run_dir(o.out);
  write_npy(o.out, scene.hrms);
  const auto pan_out = (fs::path(o.out).parent_path() / "pan.npy").string();
  write_npy(pan_out, scene.pan);
  Manifest m;
  m.command = "synth";
  m.config = cfg;
  m.outputs = {o.out, pan_out};
  finish_run(o.out, std::move(m), {});
  return 0;
}

inline int cmd_metrics(const Options& o, const RunConfig& cfg) {
  if (o.ins.empty()) fail_argument("cli.missing", "missing required flag --in");
  if (o.refs.empty()) fail_argument("cli.missing", "missing required flag --ref");
  if (o.refs.size() != 1 && o.refs.size() != o.ins.size())
    fail_argument("cli.ref_count", "give one --ref or one per --in");
  std::vector<std::pair<std::string, MetricReport>> rows;
  Json reports = Json::array();
  for (std::size_t k = 0; k < o.ins.size(); ++k) {
    const auto x = load3<double>(o.ins[k]);
    const auto ref = load3<double>(o.refs.size() == 1 ? o.refs[0] : o.refs[k]);
    require(x.height() == ref.height() && x.width() == ref.width() && x.bands() == ref.bands(), "shape.mismatch",
            o.ins[k] + " has shape " + x.shape_string() + " but the reference is " + ref.shape_string());
    const auto rep = reference_metrics(x, ref, cfg.ratio);
    rows.emplace_back(o.ins[k], rep);
    Json j = to_json(rep);
    j["input"] = o.ins[k];
    reports.push_back(j);
  }
  if (!o.csv.empty()) write_metrics_csv(o.csv, rows);
  std::cout << (reports.size() == 1 ? reports[0] : reports).dump(2) << '\n';
  return 0;
}

inline int cmd_qnr(const Options& o, const RunConfig& cfg) {
  require_flag(o.in, "--in");
  require_flag(o.lrms, "--lrms");
  require_flag(o.pan, "--pan");
  const auto x = load3<double>(o.in);
  const auto y = load3<double>(o.lrms);
  const auto pan = load2<double>(o.pan);
  const auto pan_bank = mtf_kernel_bank<double>(cfg.gnyq_pan, 1, cfg.ratio, cfg.kernel_size);
  std::cout << to_json(qnr(x, y, pan, cfg.ratio, pan_bank, cfg.offset)).dump(2) << '\n';
  return 0;
}

template <class T>
int dispatch(const std::string& command, const Options& o, const RunConfig& cfg) {
  if (command == "fuse") return cmd_fuse<T>(o, cfg, false);
  if (command == "fuse-tv") return cmd_fuse<T>(o, cfg, true);
  if (command == "degrade") return cmd_degrade<T>(o, cfg);
  if (command == "extend-pan") return cmd_extend_pan<T>(o, cfg);
  if (command == "synth") return cmd_synth<T>(o, cfg);
  if (command == "metrics") return cmd_metrics(o, cfg);
  if (command == "qnr") return cmd_qnr(o, cfg);
  fail_argument("cli.command", "unknown subcommand " + command);
}

inline void add_run_flags(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON config with flat keys (a previous manifest.json also works)");
  sub->add_option("--lambda", o.lambda, "weight of the PAN-guided fidelity term");
  sub->add_option("--alpha", o.alpha, "X step size");
  sub->add_option("--beta", o.beta, "Adam learning rate");
  sub->add_option("--steps", o.steps, "main-loop iterations");
  sub->add_option("--init-steps", o.init_steps, "network initialization iterations");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_option("--ratio", o.ratio, "resolution ratio");
  sub->add_option("--gnyq", o.gnyq, "MTF gain at Nyquist (one value or one per band)")->delimiter(',');
  sub->add_option("--offset", o.offset, "decimation phase in [0, ratio)");
  sub->add_flag("--noise-input", o.noise_input, "feed frozen noise to the network");
  sub->add_flag("--freeze-theta", o.freeze_theta, "keep network weights fixed after initialization");
  sub->add_flag("--skip-init", o.skip_init, "skip the network initialization phase");
  sub->add_flag("--unfix-input", o.unfix_input, "differentiate the X step through the network input");
}

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Zero-shot pansharpening with an untrained network prior"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* fuse = app.add_subcommand("fuse", "fuse LRMS and PAN with the network prior");
  auto* fuse_tv = app.add_subcommand("fuse-tv", "fuse with the total-variation baseline");
  for (auto* sub : {fuse, fuse_tv}) {
    sub->add_option("--lrms", o.lrms, "low-resolution multispectral image (NPY)");
    sub->add_option("--pan", o.pan, "panchromatic image (NPY)");
    sub->add_option("--ref", o.ref, "reference image for PSNR logging and final metrics");
    sub->add_option("--out", o.out, "output fused image (NPY); logs and manifest go beside it");
    add_run_flags(sub, o);
  }
  fuse->add_option("--save-params", o.save_params, "directory for a network parameter checkpoint");

  auto* deg = app.add_subcommand("degrade", "reduce resolution with the MTF-matched sensor model");
  deg->add_option("--in", o.in, "full-resolution multispectral image");
  deg->add_option("--pan", o.pan, "optional PAN, degraded to pan_lr.npy beside --out");
  deg->add_option("--out", o.out, "output low-resolution image");
  add_run_flags(deg, o);

  auto* ext = app.add_subcommand("extend-pan", "histogram-match PAN to each LRMS band");
  ext->add_option("--lrms", o.lrms, "low-resolution multispectral image");
  ext->add_option("--pan", o.pan, "panchromatic image");
  ext->add_option("--out", o.out, "output extended PAN");
  add_run_flags(ext, o);

  auto* syn = app.add_subcommand("synth", "generate a synthetic scene; PAN goes to pan.npy beside --out");
  syn->add_option("--size", o.size, "HxWxS, default 64x64x4");
  syn->add_option("--out", o.out, "output multispectral image");
  add_run_flags(syn, o);

  auto* met = app.add_subcommand("metrics", "reference metrics printed as JSON");
  met->add_option("--in", o.ins, "fused image(s)");
  met->add_option("--ref", o.refs, "reference image(s)");
  met->add_option("--csv", o.csv, "write an aggregate CSV table");
  add_run_flags(met, o);

  auto* q = app.add_subcommand("qnr", "no-reference QNR printed as JSON");
  q->add_option("--in", o.in, "fused image");
  q->add_option("--lrms", o.lrms, "low-resolution multispectral image");
  q->add_option("--pan", o.pan, "panchromatic image");
  add_run_flags(q, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << diagnostic("argument", "cli.parse", e.what()) << '\n';
    return 2;
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const RunConfig cfg = resolve_config(o);
    if (cfg.precision == "float32") return dispatch<float>(command, o, cfg);
    return dispatch<double>(command, o, cfg);
  } catch (const Error& e) {
    std::cerr << diagnostic(kind_name(e.kind()), e.code(), e.what()) << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << diagnostic("internal", "internal", e.what()) << '\n';
    return 1;
  }
}

}  // namespace psdip::cli
