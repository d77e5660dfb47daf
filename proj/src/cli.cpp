#include "promptrec/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "promptrec/errors.hpp"
#include "promptrec/experiment.hpp"
#include "promptrec/log.hpp"

#ifndef PROMPTREC_BUILD_ID
#define PROMPTREC_BUILD_ID "unknown"
#endif

namespace promptrec {

namespace fs = std::filesystem;

namespace {

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

namespace {

using Clock = std::chrono::steady_clock;

struct Run {
  std::string verb;
  Config cfg;
  std::vector<std::pair<std::string, fs::path>> inputs;
  std::vector<std::pair<std::string, fs::path>> outputs;
  Clock::time_point start = Clock::now();

  fs::path out_dir() const { return fs::path(cfg.get("out_dir")); }

  fs::path output(const std::string& name, const std::string& file) {
    fs::create_directories(out_dir());
    auto p = out_dir() / file;
    outputs.emplace_back(name, p);
    return p;
  }

  // `out` when set, else <out_dir>/<file>. Left unresolved in the config so
  // a manifest rerun with another --out-dir does not overwrite the original.
  fs::path checkpoint_output(const std::string& file) {
    fs::path p = cfg.get("out").empty() ? out_dir() / file : fs::path(cfg.get("out"));
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    outputs.emplace_back("checkpoint", p);
    return p;
  }

  const std::string& input(const std::string& key) {
    const auto& v = cfg.get(key);
    if (v.empty()) throw ConfigError("'" + key + "' is required for " + verb);
    inputs.emplace_back(key, fs::path(v));
    return v;
  }

  void record_data_inputs() {
    input("interactions");
    if (!cfg.get("profiles").empty()) input("profiles");
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_manifest(Run& run) {
  const double seconds = std::chrono::duration<double>(Clock::now() - run.start).count();
  std::ostringstream m;
  m << "# promptrec run manifest; rerun with: promptrec " << run.verb << " --config <this file>\n";
  m << "# command: " << run.verb << "\n";
  m << "# build: " << PROMPTREC_BUILD_ID << "\n";
  for (const auto& [name, p] : run.inputs) m << "# input " << name << ": " << p.string() << " sha256=" << file_sha256(p) << "\n";
  for (const auto& [name, p] : run.outputs) m << "# output " << name << ": " << p.string() << " sha256=" << file_sha256(p) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  m << "# wall_seconds: " << buf << "\n";
  m << run.cfg.dump();
  fs::create_directories(run.out_dir());
  const auto path = run.out_dir() / (run.verb + ".manifest");
  write_text(path, m.str());
  std::cout << "manifest=" << path.string() << "\n";
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream t;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %7s %7s %7s %7s %7s %7s %8s %8s %8s %8s\n", "model", "cases", "AUC", "HIT@5",
                "HIT@10", "HIT@20", "HIT@50", "NDCG@5", "NDCG@10", "NDCG@20", "NDCG@50");
  t << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %7zu %7.4f %7.4f %7.4f %7.4f %7.4f %8.4f %8.4f %8.4f %8.4f\n", name.c_str(),
                  r.count, r.auc, r.hit[0], r.hit[1], r.hit[2], r.hit[3], r.ndcg[0], r.ndcg[1], r.ndcg[2], r.ndcg[3]);
    t << buf;
  }
  return t.str();
}

std::string backbone_digest(const ModelState& state) {
  const auto bytes = group_bytes(state, ParamGroup::Backbone);
  return sha256_hex(bytes.data(), bytes.size());
}

ModelState load_ckpt(Run& run, const std::string& key) { return load_checkpoint(run.input(key)); }

void cmd_gen_data(Run& run) {
  const auto data = generate_synthetic(synthetic_config(run.cfg));
  {
    std::ofstream out(run.output("interactions", "interactions.tsv"), std::ios::binary);
    write_interactions(data, out);
  }
  {
    std::ofstream out(run.output("profiles", "profiles.tsv"), std::ios::binary);
    write_profiles(data, out);
  }
  if (data.config.target_items) {
    std::ofstream out(run.output("target_interactions", "target_interactions.tsv"), std::ios::binary);
    write_target_interactions(data, out);
  }
  std::size_t clicks = 0;
  for (const auto& u : data.users) clicks += u.items.size();
  std::cout << "users=" << data.users.size() << "\nitems=" << data.config.num_items << "\ninteractions=" << clicks
            << "\ncluster_purity=" << cluster_purity(data) << "\n";
}

void cmd_pretrain(Run& run) {
  run.record_data_inputs();
  const auto ds = load_dataset(run.cfg);
  PretrainCurves curves;
  const auto state = run_pretrain(ds, run.cfg, &curves);
  save_checkpoint(state, run.checkpoint_output("pretrain.ckpt"));
  std::ostringstream c;
  c.precision(10);
  c << "epoch\ttrain_loss\tval_loss\tcl_loss\n";
  for (std::size_t e = 0; e < curves.train_loss.size(); ++e) {
    c << e + 1 << '\t' << curves.train_loss[e] << '\t' << (e < curves.val_loss.size() ? curves.val_loss[e] : 0.0)
      << '\t' << (e < curves.cl_loss.size() ? curves.cl_loss[e] : 0.0) << '\n';
  }
  write_text(run.output("curves", "pretrain.curves.tsv"), c.str());
  std::ostringstream s;
  write_split_manifest(ds.splits, ds.log.users, s);
  write_text(run.output("splits", "splits.tsv"), s.str());
  std::cout << "warm_users=" << ds.splits.warm.size() << "\nexamples_per_epoch=" << curves.examples_per_epoch
            << "\nepochs_run=" << curves.epochs_run << "\nbest_epoch=" << curves.best_epoch
            << "\nparams=" << state.total_count() << "\nbackbone_digest=" << backbone_digest(state) << "\n";
}

void cmd_tune(Run& run) {
  run.record_data_inputs();
  const auto ds = load_dataset(run.cfg);
  const auto start = load_ckpt(run, "ckpt");
  TuneCurves curves;
  const auto state = run_tune(ds, start, run.cfg, &curves);
  save_checkpoint(state, run.checkpoint_output("tune.ckpt"));
  std::ostringstream c;
  c.precision(10);
  c << "epoch\tl_p\tl_cl\tl_all\n";
  for (std::size_t e = 0; e < curves.lp.size(); ++e) {
    c << e + 1 << '\t' << curves.lp[e] << '\t' << (e < curves.lcl.size() ? curves.lcl[e] : 0.0) << '\t'
      << curves.lall[e] << '\n';
  }
  write_text(run.output("curves", "tune.curves.tsv"), c.str());
  char frac[64];
  std::snprintf(frac, sizeof frac, "%.6f", curves.mode.fraction);
  std::cout << "kind=" << state.meta_or("kind", "") << "\nmode=" << state.meta_or("mode", "")
            << "\ntrainable_params=" << curves.mode.trainable << "\ntotal_params=" << curves.mode.total
            << "\ntrainable_fraction=" << frac << "\nbackbone_digest=" << backbone_digest(state) << "\n";
}

void cmd_eval(Run& run) {
  run.record_data_inputs();
  const auto ds = load_dataset(run.cfg);
  const auto state = load_ckpt(run, "ckpt");
  const auto split = parse_split(run.cfg.get("split"));
  const auto report = run_eval(ds, state, run.cfg, split);
  const std::string stem = std::string("eval_") + split_name(split);
  write_text(run.output("report", stem + ".txt"), format_report(report));
  write_text(run.output("report_json", stem + ".json"), report_json(report));
  std::cout << metrics_table({{state.meta_or("kind", "model"), report}});
  std::cout << "split=" << split_name(split) << "\nbackbone_digest=" << backbone_digest(state) << "\n";
}

void cmd_cross_domain(Run& run) {
  const auto source = load_ckpt(run, "source_ckpt");
  const auto source_log = load_interactions(run.input("interactions"));
  const auto target_log = load_interactions(run.input("target_interactions"));
  auto r = run_cross_domain(source, source_log, target_log, run.cfg);
  save_checkpoint(r.prompted_state, run.checkpoint_output("cross_domain.ckpt"));
  std::string text;
  nlohmann::ordered_json j;
  for (const auto& [name, rep] : {std::pair<std::string, const MetricsReport*>{"prompted", &r.prompted},
                                  {"side_info", &r.side_info},
                                  {"target_only", &r.target_only}}) {
    std::istringstream lines(format_report(*rep));
    for (std::string l; std::getline(lines, l);) text += name + "." + l + "\n";
    j[name] = nlohmann::json::parse(report_json(*rep));
  }
  text += "fallbacks=" + std::to_string(r.fallbacks) + "\n";
  j["fallbacks"] = r.fallbacks;
  write_text(run.output("report", "cross_domain.txt"), text);
  write_text(run.output("report_json", "cross_domain.json"), j.dump(2) + "\n");
  std::cout << metrics_table({{"prompted", r.prompted}, {"side_info", r.side_info}, {"target_only", r.target_only}});
  std::cout << "fallbacks=" << r.fallbacks << "\n";
}

void cmd_predict_profile(Run& run) {
  run.record_data_inputs();
  const auto ds = load_dataset(run.cfg);
  const auto pre = load_ckpt(run, "ckpt");
  const auto r = run_profile(ds, pre, run.cfg);
  save_checkpoint(r.state, run.checkpoint_output("profile.ckpt"));
  write_text(run.output("report", "profile.txt"), format_report(r.test));
  write_text(run.output("report_json", "profile.json"), report_json(r.test));
  std::cout << format_report(r.test);
}

using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;

Grid parse_grid(const std::string& axes) {
  Grid grid;
  std::stringstream ss(axes);
  for (std::string s; std::getline(ss, s, ';');) {
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("grid entry must look like key=v1,v2: '" + s + "'");
    std::pair<std::string, std::vector<std::string>> axis{s.substr(0, eq), {}};
    if (!Config().has(axis.first)) throw ConfigError("unknown config key '" + axis.first + "'");
    std::stringstream vals(s.substr(eq + 1));
    for (std::string v; std::getline(vals, v, ',');) {
      if (!v.empty()) axis.second.push_back(v);
    }
    if (axis.second.empty()) throw ContractError("grid key '" + axis.first + "' has no values");
    grid.push_back(std::move(axis));
  }
  if (grid.empty()) throw ContractError("sweep needs at least one --grid key=v1,v2,...");
  return grid;
}

void cmd_sweep(Run& run) {
  const Grid grid = parse_grid(run.cfg.get("sweep_grid"));
  std::size_t cells = 1;
  for (const auto& a : grid) cells *= a.second.size();
  run.record_data_inputs();
  const bool have_ckpt = !run.cfg.get("ckpt").empty();
  if (have_ckpt) run.input("ckpt");
  const bool seed_in_grid =
      std::any_of(grid.begin(), grid.end(), [](const auto& a) { return a.first == "seed"; });
  const auto base_seed = run.cfg.get_u64("seed");

  std::vector<Config> configs;
  for (std::size_t c = 0; c < cells; ++c) {
    Config cfg = run.cfg;
    std::size_t rest = c;
    for (auto a = grid.rbegin(); a != grid.rend(); ++a) {
      cfg.set(a->first, a->second[rest % a->second.size()]);
      rest /= a->second.size();
    }
    if (!seed_in_grid) cfg.set("seed", std::to_string(base_seed + c));
    cfg.set("threads", "1");
    configs.push_back(cfg);
  }
  std::vector<MetricsReport> reports(cells);
  std::vector<std::exception_ptr> errors(cells);
  std::optional<ModelState> shared;
  if (have_ckpt) shared = load_checkpoint(run.cfg.get("ckpt"));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next++) < cells;) {
      try {
        const auto ds = load_dataset(configs[c]);
        const ModelState pre = shared ? shared->clone() : run_pretrain(ds, configs[c]);
        const auto tuned = run_tune(ds, pre, configs[c]);
        reports[c] = run_eval(ds, tuned, configs[c], parse_split(configs[c].get("split")));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(run.cfg.get_size("threads"), cells));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ostringstream csv;
  csv << "cell,seed";
  for (const auto& a : grid) {
    if (a.first != "seed") csv << ',' << a.first;
  }
  csv << ",auc,hit@5,hit@10,hit@20,hit@50,ndcg@5,ndcg@10,ndcg@20,ndcg@50,cases\n";
  std::size_t best = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    csv << c << ',' << configs[c].get("seed");
    for (const auto& a : grid) {
      if (a.first != "seed") csv << ',' << configs[c].get(a.first);
    }
    char buf[256];
    const auto& r = reports[c];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu\n", r.auc, r.hit[0], r.hit[1],
                  r.hit[2], r.hit[3], r.ndcg[0], r.ndcg[1], r.ndcg[2], r.ndcg[3], r.count);
    csv << buf;
    if (r.auc > reports[best].auc) best = c;
  }
  write_text(run.output("sweep", "sweep.csv"), csv.str());
  std::cout << csv.str() << "best_cell=" << best << "\nbest_auc=" << reports[best].auc << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"promptrec: personalized prompt-based recommendation for cold-start users"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::deque<std::string> storage;
  struct Binding {
    CLI::Option* opt;
    std::string key;
    std::string* value;
  };
  std::vector<Binding> bindings;
  auto bind = [&](CLI::App* where, const std::string& flag, const std::string& key, const std::string& help) {
    storage.emplace_back();
    bindings.push_back({where->add_option(flag, storage.back(), help), key, &storage.back()});
  };
  auto bind_flag = [&](CLI::App* where, const std::string& flag, const std::string& key, const std::string& help) {
    storage.emplace_back("true");
    bindings.push_back({where->add_flag(flag, help), key, &storage.back()});
  };

  app.add_option("--config", config_path, "flat key = value config file (a run manifest works too)");
  app.add_option("--set", sets, "override any config key: --set key=value (repeatable)");
  bind(&app, "--seed", "seed", "master seed");
  bind(&app, "--out-dir", "out_dir", "output directory");
  bind(&app, "--threads", "threads", "worker threads");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic interaction log and profiles");
  auto* pre = app.add_subcommand("pretrain", "pre-train the sequence encoder on warm users");
  auto* tun = app.add_subcommand("tune", "prompt-tune (or fine-tune) on cold-start users");
  auto* evl = app.add_subcommand("eval", "rank held-out cold-user clicks against 99 sampled negatives");
  auto* xd = app.add_subcommand("cross-domain", "prompts from source-domain user vectors");
  auto* prof = app.add_subcommand("predict-profile", "predict a held-out attribute from the prompted user vector");
  auto* swp = app.add_subcommand("sweep", "grid search; one CSV row per cell");

  bind(gen, "--target-items", "gen_target_items", "items of a second domain over the same users");
  for (auto* sub : {pre, tun, evl, prof, swp}) {
    bind(sub, "--interactions", "interactions", "interaction file");
    bind(sub, "--profiles", "profiles", "profile file");
  }
  for (auto* sub : {pre, tun, xd, prof}) bind(sub, "--out", "out", "output checkpoint");
  for (auto* sub : {tun, evl, prof, swp}) bind(sub, "--ckpt", "ckpt", "input checkpoint");
  for (auto* sub : {tun, prof, xd, swp}) {
    bind(sub, "--mode", "mode", "light or full");
    bind(sub, "--lambda", "lambda", "contrastive loss weight");
  }
  bind(tun, "--kind", "kind", "prompted or finetune");
  bind(evl, "--split", "split", "fewshot, zeroshot or joint");
  bind(evl, "--kshot", "kshot", "crop cold sequences to k clicks");
  bind(tun, "--kshot", "kshot", "crop cold sequences to k clicks");
  bind(xd, "--source-ckpt", "source_ckpt", "source-domain checkpoint");
  bind(xd, "--source-data", "interactions", "source-domain interaction file");
  bind(xd, "--target-data", "target_interactions", "target-domain interaction file");
  bind_flag(xd, "--raw-prompt", "raw_prompt", "use source vectors as prompts without the generator");
  bind(prof, "--attr", "profile_attr", "attribute index to predict");
  std::vector<std::string> grid;
  swp->add_option("--grid", grid, "key=v1,v2,... (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Run run;
  for (auto* sub : app.get_subcommands()) run.verb = sub->get_name();
  try {
    if (run.verb == "cross-domain") run.cfg.set("mode", "full");
    if (!config_path.empty()) run.cfg.load(config_path);
    for (const auto& s : sets) run.cfg.set_assignment(s);
    for (const auto& b : bindings) {
      if (b.opt->count() > 0) run.cfg.set(b.key, *b.value);
    }
    for (const auto& axis : grid) {
      const auto& prev = run.cfg.get("sweep_grid");
      run.cfg.set("sweep_grid", prev.empty() ? axis : prev + ";" + axis);
    }
    logger().info("resolved config for {}:\n{}", run.verb, run.cfg.dump());

    if (run.verb == "gen-data") cmd_gen_data(run);
    else if (run.verb == "pretrain") cmd_pretrain(run);
    else if (run.verb == "tune") cmd_tune(run);
    else if (run.verb == "eval") cmd_eval(run);
    else if (run.verb == "cross-domain") cmd_cross_domain(run);
    else if (run.verb == "predict-profile") cmd_predict_profile(run);
    else if (run.verb == "sweep") cmd_sweep(run);
    write_manifest(run);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace promptrec
