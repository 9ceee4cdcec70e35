#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include "hetprompt/hetprompt.hpp"

using namespace hetprompt;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string workdir = ".";
  std::vector<std::string> overrides;
};

/// `key=value`; the value is read as JSON and falls back to a plain string.
json parse_override(const std::string& item) {
  auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::config, "override '" + item + "' is not key=value");
  const std::string value = item.substr(eq + 1);
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;
  }
  return json{{item.substr(0, eq), v}};
}

RunConfig effective_config(const Options& o) {
  json j = json::object();
  if (!o.config_path.empty()) j = json(load_config(fs::path(o.workdir) / o.config_path));
  for (const auto& item : o.overrides) j.update(parse_override(item));
  if (o.seed) j["seed"] = *o.seed;
  RunConfig cfg;
  try {
    cfg = j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, e.what());
  }
  cfg.validate();
  return cfg;
}

/// Everything a command needs to know about its inputs, recorded in every output.
struct RunContext {
  RunConfig cfg;
  fs::path workdir;
  fs::path dataset_dir;
  std::string config_hash;
  std::string dataset_hash;

  json provenance() const {
    return {{"config", cfg}, {"config_hash", config_hash}, {"seed", cfg.seed},
            {"dataset_hash", dataset_hash}};
  }
  fs::path artifact(const std::string& kind) const {
    return workdir / "artifacts" / (kind + "-s" + std::to_string(cfg.seed) + ".ckpt.json");
  }
};

RunContext make_context(const Options& o) {
  RunContext c;
  c.cfg = effective_config(o);
  c.workdir = o.workdir;
  c.dataset_dir = c.workdir / c.cfg.dataset;
  c.config_hash = config_hash(c.cfg);
  if (!fs::exists(c.dataset_dir / "schema.json"))
    throw Error(ErrorCode::missing_artifact, "missing artifact: dataset " + c.dataset_dir.string());
  c.dataset_hash = hash_directory(c.dataset_dir);
  return c;
}

std::size_t thread_cap() {
  const char* env = std::getenv("HETPROMPT_THREADS");
  if (!env) return 1;
  try {
    return std::max<std::size_t>(1, std::stoul(env));
  } catch (const std::exception&) {
    throw Error(ErrorCode::config, std::string("HETPROMPT_THREADS is not a number: ") + env);
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct LoadedEncoder {
  Dataset ds;
  EncoderGraph eg;
  FrozenEncoding enc;
  std::string encoder_hash;
};

LoadedEncoder load_encoder(const RunContext& c) {
  const fs::path path = c.artifact("encoder");
  if (!fs::exists(path)) throw Error(ErrorCode::missing_artifact, "missing artifact: encoder checkpoint");
  LoadedEncoder l{load_dataset(c.dataset_dir), {}, {}, hash_file(path)};
  auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("dataset_hash", "") != c.dataset_hash)
    throw Error(ErrorCode::validation, "encoder checkpoint was trained on a different dataset");
  l.eg = prepare_encoder_graph(l.ds.graph, l.ds.metapaths);
  auto params = init_encoder(l.eg, c.cfg, c.cfg.seed);
  auto list = params.parameters();
  restore(list, ckpt);
  l.enc = freeze_encoding(l.eg, params, c.cfg);
  return l;
}

std::size_t prompt_count(const RunConfig& cfg, const HeteroGraph& g) {
  std::size_t n = cfg.num_prompts ? cfg.num_prompts : g.num_classes;
  if (n == 0) throw Error(ErrorCode::config, "num_prompts is 0 and the dataset has no classes");
  return n;
}

int cmd_generate(const Options& o, const std::string& spec_path, const std::vector<std::string>& synth_overrides) {
  RunConfig cfg = effective_config(o);
  json j = SynthSpec{};
  if (!spec_path.empty()) {
    try {
      j.update(json::parse(read_file(fs::path(o.workdir) / spec_path)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::config, spec_path + ": " + e.what());
    }
  }
  for (const auto& item : synth_overrides) j.update(parse_override(item));
  SynthSpec spec;
  try {
    spec = j.get<SynthSpec>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("synth spec: ") + e.what());
  }
  const fs::path dir = fs::path(o.workdir) / cfg.dataset;
  fs::remove_all(dir);
  generate(spec, dir);
  std::cout << "dataset " << dir.string() << " hash " << hash_directory(dir) << '\n';
  return 0;
}

int cmd_pretrain(const Options& o) {
  auto c = make_context(o);
  auto ds = load_dataset(c.dataset_dir);
  auto eg = prepare_encoder_graph(ds.graph, ds.metapaths);
  auto result = pretrain(eg, c.cfg, c.cfg.seed);
  json meta = c.provenance();
  meta["stage"] = "pretrain";
  json losses = json::array();
  for (const auto& e : result.log) losses.push_back(e.loss);
  meta["loss"] = losses;
  const auto path = c.artifact("encoder");
  save_checkpoint(path, snapshot(result.params.parameters(), meta));
  std::cout << "pretrain loss " << result.log.front().loss << " -> " << result.log.back().loss
            << "\ncheckpoint " << path.string() << " hash " << hash_file(path) << '\n';
  return 0;
}

int cmd_prompt(const Options& o) {
  auto c = make_context(o);
  auto l = load_encoder(c);
  const std::size_t np = prompt_count(c.cfg, l.ds.graph);
  auto tuned = prompt_tune(l.ds.graph, l.ds.metapaths, l.enc, c.cfg, np, std::nullopt, c.cfg.seed);
  json meta = c.provenance();
  meta["stage"] = "prompt";
  meta["encoder_checkpoint_hash"] = l.encoder_hash;
  meta["class_binding"] = tuned.state.class_binding;
  json log = json::array();
  for (const auto& e : tuned.log)
    log.push_back({{"total", e.total}, {"l1", e.l1}, {"l2", e.l2}, {"l0", e.l0}});
  meta["loss"] = log;
  auto params = tuned.state.parameters();
  for (const auto& p : tuned.discriminator.parameters()) params.push_back(p);
  const auto path = c.artifact("prompt");
  save_checkpoint(path, snapshot(params, meta));
  std::cout << "prompt loss " << tuned.log.front().total << " -> " << tuned.log.back().total
            << "\ncheckpoint " << path.string() << " hash " << hash_file(path) << '\n';
  return 0;
}

PromptState load_prompt_state(const RunContext& c, const HeteroGraph& g, std::size_t dim) {
  const fs::path path = c.artifact("prompt");
  if (!fs::exists(path)) throw Error(ErrorCode::missing_artifact, "missing artifact: prompt checkpoint");
  auto ckpt = load_checkpoint(path);
  auto state = init_prompt_state(g.num_targets(), prompt_count(c.cfg, g), dim, 0.0, c.cfg.seed);
  auto params = state.parameters();
  restore(params, ckpt);
  state.class_binding = ckpt.meta.value("class_binding", std::vector<int>{});
  return state;
}

int cmd_eval(const Options& o) {
  auto c = make_context(o);
  // Check the cheap precondition before loading anything heavy.
  if (!fs::exists(c.artifact("prompt")))
    throw Error(ErrorCode::missing_artifact, "missing artifact: prompt checkpoint");
  auto l = load_encoder(c);
  const auto& g = l.ds.graph;
  if (!g.labels) throw Error(ErrorCode::missing_artifact, "missing artifact: labels");
  auto state = load_prompt_state(c, g, l.enc.h_struct.cols());

  auto stamp = [&](MetricsReport r) {
    r.config_hash = c.config_hash;
    r.dataset_hash = c.dataset_hash;
    return r;
  };
  MetricsReport zero = stamp(evaluate_zero_shot(state, *g.labels, prompt_count(c.cfg, g), c.cfg.seed,
                                                c.cfg.kmeans_restarts));

  // Few-shot runs are independent per seed; they may run concurrently and
  // are merged in seed order.
  std::vector<MetricsReport> few(c.cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < few.size();) {
      try {
        const auto s = c.cfg.seeds[k];
        auto split = sample_kshot(*g.labels, g.num_classes, c.cfg.shots, s);
        few[k] = stamp(evaluate_kshot(l.ds, l.enc, c.cfg, split, s));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(thread_cap(), std::max<std::size_t>(1, few.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  // Wall times are reported on stdout but kept out of the files so that
  // identical inputs give identical reports.
  auto deterministic = [](MetricsReport r) {
    r.wall_ms = 0.0;
    return r;
  };
  json report = c.provenance();
  report["encoder_checkpoint_hash"] = l.encoder_hash;
  report["prompt_checkpoint_hash"] = hash_file(c.artifact("prompt"));
  report["zero_shot"] = deterministic(zero);
  report["few_shot"] = json::array();
  for (const auto& r : few) report["few_shot"].push_back(deterministic(r));
  json summary = json::object();
  for (const auto& [name, a] : aggregate(few)) summary[name] = {{"mean", a.mean}, {"std", a.std}};
  report["few_shot_summary"] = summary;
  const fs::path report_path =
      c.workdir / "reports" / ("eval-s" + std::to_string(c.cfg.seed) + ".json");
  write_json(report_path, report);
  std::vector<MetricsReport> rows;
  for (const auto& r : few) rows.push_back(deterministic(r));
  append_results_csv(c.workdir / "reports" / "results.csv", {deterministic(zero)});
  append_results_csv(c.workdir / "reports" / "results.csv", rows);

  std::cout << std::fixed << std::setprecision(4) << "zero-shot nmi " << zero.metrics.at("nmi")
            << " ari " << zero.metrics.at("ari") << '\n';
  for (const auto& [name, a] : aggregate(few))
    std::cout << c.cfg.shots << "-shot " << name << ' ' << a.mean << " +/- " << a.std << '\n';
  std::cout << "report " << report_path.string() << '\n';
  return 0;
}

int cmd_export(const Options& o, const std::string& view, const std::string& out_path) {
  auto c = make_context(o);
  auto l = load_encoder(c);
  Matrix m;
  if (view == "structural") m = l.enc.h_struct.value();
  else if (view == "semantic") m = l.enc.h_sem.value();
  else if (view == "cluster") m = cluster_features(load_prompt_state(c, l.ds.graph, l.enc.h_struct.cols())).value();
  else throw Error(ErrorCode::config, "unknown view '" + view + "' (structural, semantic, cluster)");
  const fs::path path = c.workdir / (out_path.empty()
                                         ? "embeddings/" + view + "-s" + std::to_string(c.cfg.seed) + ".tsv"
                                         : out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << "# view=" << view << " config_hash=" << c.config_hash << " seed=" << c.cfg.seed
      << " dataset_hash=" << c.dataset_hash << '\n';
  out << std::setprecision(17);
  const auto& labels = l.ds.graph.labels;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << i << '\t' << (labels ? (*labels)[i] : -1);
    for (std::size_t k = 0; k < m.cols(); ++k) out << '\t' << m(i, k);
    out << '\n';
  }
  std::cout << "embeddings " << path.string() << " (" << m.rows() << " x " << m.cols() << ")\n";
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(0);
  constexpr double tolerance = 1e-4;
  double worst = 0.0;
  std::cout << std::scientific << std::setprecision(3);
  for (const auto& r : run_gradcheck(seed)) {
    std::cout << r.loss << '\t' << r.parameter << '\t' << r.entries << '\t' << r.max_relative_error << '\n';
    worst = std::max(worst, r.max_relative_error);
  }
  std::cout << "max relative error " << worst << " (tolerance " << tolerance << ")\n";
  if (!(worst <= tolerance))
    throw Error(ErrorCode::numeric, "gradient check failed: max relative error " + std::to_string(worst));
  return 0;
}

int fail(ErrorCode code, const std::string& message) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "error " << to_string(code) << ": " << line << std::endl;
  return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster prompt learning on heterogeneous graphs"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "JSON run config, relative to the workdir");
  app.add_option("--seed", o.seed, "Run seed (overrides the config)");
  app.add_option("--workdir", o.workdir, "Directory all paths are resolved against");
  app.add_option("--set", o.overrides, "Override a config field, key=value (repeatable)");

  std::string spec_path, view = "structural", out_path;
  std::vector<std::string> synth_overrides;
  auto* gen = app.add_subcommand("generate", "Write a planted-partition dataset to the config's dataset path");
  gen->add_option("--spec", spec_path, "Synthetic spec JSON");
  gen->add_option("--synth", synth_overrides, "Override a synthetic spec field, key=value");
  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training of the encoder");
  auto* prm = app.add_subcommand("prompt", "Zero-shot prompt tuning on the frozen encoder");
  auto* ev = app.add_subcommand("eval", "Zero-shot clustering and k-shot classification reports");
  auto* ex = app.add_subcommand("export-embeddings", "Dump node embeddings as TSV");
  ex->add_option("--view", view, "structural, semantic or cluster");
  ex->add_option("--out", out_path, "Output path relative to the workdir");
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss on the toy graph");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorCode::config, e.what());
  }

  try {
    if (*gen) return cmd_generate(o, spec_path, synth_overrides);
    if (*pre) return cmd_pretrain(o);
    if (*prm) return cmd_prompt(o);
    if (*ev) return cmd_eval(o);
    if (*ex) return cmd_export(o, view, out_path);
    if (*gc) return cmd_gradcheck(o);
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail(ErrorCode::io, e.what());
  }
  return 0;
}
