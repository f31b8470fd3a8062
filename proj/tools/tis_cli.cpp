// tis: command-line entry point for data generation, training, evaluation,
// simulated sessions and the session service.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tis/config.hpp"
#include "tis/error.hpp"
#include "tis/evaluation.hpp"
#include "tis/service.hpp"
#include "tis/training.hpp"

namespace fs = std::filesystem;
using namespace tis;

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kIo = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
};

struct Options {
  Common common;
  std::string data;
  std::string checkpoint;
  std::string ablation = "none";
  int clicks = -1;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string volume;
  std::string gt;
  std::string click_log;
};

void print_error(const std::string& kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

ProjectConfig resolve_config(const Common& c) {
  ProjectConfig cfg = load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path prepare_out(const Common& c, const ProjectConfig& cfg, const std::string& command) {
  fs::path out(c.out_dir);
  fs::create_directories(out);
  // Every run records the resolved config and seed so it can be replayed.
  write_text(out / (command + ".run.cfg"),
             "# seed = " + std::to_string(c.seed) + "\n" + to_text(cfg));
  return out;
}

fs::path data_dir(const Options& o, const ProjectConfig& cfg) {
  return o.data.empty() ? fs::path(cfg.data_dir) : fs::path(o.data);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed).fork(stream).next_u64();
}

EpochLog epoch_logger(const std::string& what, std::ostream& log) {
  return [what, &log](int epoch, double loss, double secs) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s epoch %d loss %.6f elapsed %.1fs", what.c_str(), epoch,
                  loss, secs);
    log << buf << '\n';
    log.flush();
    std::fprintf(stderr, "%s\n", buf);
  };
}

int cmd_gen_data(const Options& o) {
  const ProjectConfig cfg = resolve_config(o.common);
  const fs::path out = prepare_out(o.common, cfg, "gen-data");
  cfg.synthetic.validate();
  save_cases(out / "train", generate(cfg.synthetic, cfg.train_cases, stream_seed(o.common.seed, 0)));
  save_cases(out / "eval", generate(cfg.synthetic, cfg.eval_cases, stream_seed(o.common.seed, 1)));
  return kOk;
}

int cmd_train_encoder(const Options& o) {
  const ProjectConfig cfg = resolve_config(o.common);
  const auto data = load_cases(data_dir(o, cfg) / "train");
  const fs::path out = prepare_out(o.common, cfg, "train-encoder");
  std::ofstream log(out / "encoder.log");
  TrainResult r = train_encoder(data, cfg.encoder, cfg.train, o.common.seed,
                                epoch_logger("encoder", log));
  save_checkpoint(out / "encoder.ckpt", r.params);
  return kOk;
}

int cmd_train_refiner(const Options& o) {
  const ProjectConfig cfg = resolve_config(o.common);
  if (o.checkpoint.empty()) throw IoError("missing checkpoint: --checkpoint <encoder.ckpt> is required");
  const ParamStore encoder = load_checkpoint(o.checkpoint).subset("encoder.");
  if (encoder.size() == 0) throw IoError("missing checkpoint: no encoder parameters in " + o.checkpoint);
  const auto data = load_cases(data_dir(o, cfg) / "train");
  const Ablation ablation = Ablation::parse(o.ablation);
  const fs::path out = prepare_out(o.common, cfg, "train-refiner");
  std::ofstream log(out / "refiner.log");
  TrainResult r = train_refiner(data, encoder, cfg.refiner, cfg.train, cfg.simulator, ablation,
                                o.common.seed, epoch_logger("refiner", log));
  ParamStore model = encoder;
  model.merge(r.params);
  save_checkpoint(out / "model.ckpt", model);
  return kOk;
}

ParamStore load_model(const Options& o, const ProjectConfig& cfg) {
  if (o.checkpoint.empty()) throw IoError("missing checkpoint: --checkpoint <model.ckpt> is required");
  ParamStore model = load_checkpoint(o.checkpoint);
  if (model.subset("encoder.").size() == 0 || model.subset("refiner.").size() == 0)
    throw IoError("missing checkpoint: " + o.checkpoint + " lacks encoder or refiner parameters");
  check_refiner_params(cfg.refiner, model.subset("refiner."));
  return model;
}

int cmd_eval(const Options& o) {
  const ProjectConfig cfg = resolve_config(o.common);
  const ParamStore model = load_model(o, cfg);
  const auto data = load_cases(data_dir(o, cfg) / "eval");
  const int K = o.clicks >= 0 ? o.clicks : cfg.eval_clicks;
  const fs::path out = prepare_out(o.common, cfg, "eval");
  std::vector<SessionTrace> traces;
  const MetricsReport rep = eval_curve(data, model.subset("encoder."), model.subset("refiner."),
                                       cfg.refiner, K, cfg.simulator, o.common.seed, &traces);
  write_text(out / "report.txt", rep.table());
  write_text(out / "report.json", rep.to_json());
  fs::create_directories(out / "traces");
  for (std::size_t i = 0; i < traces.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "case_%03zu.jsonl", i);
    write_text(out / "traces" / name, trace_to_jsonl(traces[i]));
  }
  std::printf("%s", rep.table().c_str());
  return kOk;
}

int cmd_simulate(const Options& o) {
  const ProjectConfig cfg = resolve_config(o.common);
  const ParamStore model = load_model(o, cfg);
  if (o.volume.empty()) throw ConfigError("simulate: --volume is required");
  const Volume vol = load_volume(o.volume);
  std::optional<LabelMask> gt;
  if (!o.gt.empty()) gt = load_labels(o.gt);
  const fs::path out = prepare_out(o.common, cfg, "simulate");
  const EncoderOutput enc = encode(vol, model.subset("encoder."));
  SessionTrace trace;
  if (!o.click_log.empty()) {
    trace = session_replay(enc, gt ? &*gt : nullptr, model.subset("refiner."), cfg.refiner,
                           clicks_from_jsonl(read_text(o.click_log)));
  } else {
    if (!gt) throw ConfigError("simulate: --gt is required unless --click-log is given");
    Rng rng(o.common.seed);
    trace = session_run(enc, *gt, model.subset("refiner."), cfg.refiner,
                        o.clicks >= 0 ? o.clicks : cfg.eval_clicks, cfg.simulator, rng);
  }
  write_text(out / "trace.jsonl", trace_to_jsonl(trace));
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%03zu.lbl", t);
    save_labels(out / name, trace.steps[t].prediction);
  }
  return kOk;
}

int cmd_serve(const Options& o) {
  const ProjectConfig cfg = resolve_config(o.common);
  if (o.checkpoint.empty()) throw IoError("missing checkpoint: --checkpoint <model.ckpt> is required");
  const fs::path out = prepare_out(o.common, cfg, "serve");
  SessionStore store(out / "sessions", o.checkpoint, cfg.refiner);
  std::fprintf(stderr, "serving on %s:%d\n", o.host.c_str(), o.port);
  serve_http(store, o.host, o.port);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-based interactive 3-D segmentation"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.common.config, "key = value config file")->required();
    sub->add_option("--seed", o.common.seed, "random seed")->required();
    sub->add_option("--set", o.common.overrides, "config override key=value (repeatable)");
    sub->add_option("--out-dir", o.common.out_dir, "directory for artifacts");
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic train/eval dataset");
  add_common(gen);

  auto* tenc = app.add_subcommand("train-encoder", "train the automatic segmentation encoder");
  add_common(tenc);
  tenc->add_option("--data", o.data, "dataset directory from gen-data");

  auto* tref = app.add_subcommand("train-refiner", "train the click refiner on a frozen encoder");
  add_common(tref);
  tref->add_option("--data", o.data, "dataset directory from gen-data");
  tref->add_option("--checkpoint", o.checkpoint, "encoder checkpoint");
  tref->add_option("--ablation", o.ablation, "none | no-click-encoding | no-label-copy")
      ->check(CLI::IsMember({"none", "no-click-encoding", "no-label-copy"}));

  auto* ev = app.add_subcommand("eval", "Dice versus click count on the eval split");
  add_common(ev);
  ev->add_option("--data", o.data, "dataset directory from gen-data");
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint from train-refiner");
  ev->add_option("--clicks", o.clicks, "clicks per session")->check(CLI::NonNegativeNumber);

  auto* sim = app.add_subcommand("simulate", "run or replay one session on a volume");
  add_common(sim);
  sim->add_option("--checkpoint", o.checkpoint, "model checkpoint from train-refiner");
  sim->add_option("--volume", o.volume, "TISVOL1 volume");
  sim->add_option("--gt", o.gt, "TISLBL1 ground truth");
  sim->add_option("--clicks", o.clicks, "simulated clicks")->check(CLI::NonNegativeNumber);
  sim->add_option("--click-log", o.click_log, "replay the clicks of a jsonl trace");

  auto* srv = app.add_subcommand("serve", "HTTP session service");
  add_common(srv);
  srv->add_option("--checkpoint", o.checkpoint, "model checkpoint from train-refiner");
  srv->add_option("--port", o.port, "listen port");
  srv->add_option("--host", o.host, "listen address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*tenc) return cmd_train_encoder(o);
    if (*tref) return cmd_train_refiner(o);
    if (*ev) return cmd_eval(o);
    if (*sim) return cmd_simulate(o);
    if (*srv) return cmd_serve(o);
  } catch (const ConfigError& e) {
    print_error(e.kind(), e.what());
    return kUsage;
  } catch (const IoError& e) {
    print_error(e.kind(), e.what());
    return kIo;
  } catch (const FormatError& e) {
    print_error(e.kind(), e.what());
    return kIo;
  } catch (const NumericError& e) {
    print_error(e.kind(), e.what());
    return kNumeric;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return kOther;
  } catch (const fs::filesystem_error& e) {
    print_error("io", e.what());
    return kIo;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kOther;
  }
  return kUsage;
}
