// gate: command-line entry points for serving sessions, running simulated
// studies, evaluating stored sessions, ingesting pools and exporting curves.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gate/core.hpp"
#include "gate/domains.hpp"
#include "gate/elicitation.hpp"
#include "gate/http_backend.hpp"
#include "gate/jsonl.hpp"
#include "gate/lm.hpp"
#include "gate/metrics.hpp"
#include "gate/persona.hpp"
#include "gate/pool.hpp"
#include "gate/predictor.hpp"
#include "gate/service.hpp"
#include "gate/store.hpp"
#include "gate/survey.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace gate;

struct Options {
  std::string config;
  bool mock = false;
  std::uint64_t seed = 0;
  std::string store;
};

// ---------------------------------------------------------------------------
// Config

struct DomainEntry {
  std::string key;
  std::vector<sim::Persona> personas;
  std::map<std::string, PoolContext> pools;
};

struct Config {
  LMProfile lm;
  std::uint64_t seed = 0;
  int turn_budget = kDefaultTurnBudget;
  int clusters = pool::kDefaultClusters;
  std::vector<PolicyKind> methods;
  std::vector<DomainEntry> domains;
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::io, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_failure, p.string() + ": " + e.what());
  }
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + p.string());
  out << text;
}

std::vector<TestItem> items_from(const json& j, const fs::path& base) {
  if (j.is_string()) return read_items_jsonl((base / j.get<std::string>()).string());
  return j.get<std::vector<TestItem>>();
}

/// Loads a pool and its cluster model. The model comes from
/// `<pool>.clusters.json` when present and is computed otherwise.
PoolContext load_pool(const fs::path& path, int k, std::uint64_t seed) {
  PoolContext ctx;
  ctx.items = read_items_jsonl(path.string());
  if (ctx.items.empty()) throw Error(Errc::insufficient_data, "pool " + path.string() + " is empty");
  const fs::path model = path.string() + ".clusters.json";
  if (fs::exists(model)) {
    ctx.clusters = read_json_file(model).get<pool::ClusterModel>();
  } else {
    pool::HashingEmbedder embedder;
    ctx.clusters = pool::cluster(pool::embed_pool(ctx.items, embedder), k, seed);
  }
  return ctx;
}

/// Reads the config and registers its domains and test sets.
Config load_config(const Options& opt, DomainRegistry& registry) {
  Config cfg;
  if (opt.config.empty()) return cfg;
  const fs::path path(opt.config);
  const fs::path base = path.parent_path();
  const json j = read_json_file(path);
  if (j.contains("lm")) cfg.lm = j["lm"].get<LMProfile>();
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.turn_budget = j.value("turn_budget", kDefaultTurnBudget);
  cfg.clusters = j.value("clusters", pool::kDefaultClusters);
  if (cfg.turn_budget < 1) throw Error(Errc::invalid_argument, "turn_budget must be >= 1");
  for (const auto& m : j.value("methods", json::array())) cfg.methods.push_back(parse_policy_kind(m.get<std::string>()));

  for (const auto& d : j.value("domains", json::array())) {
    DomainEntry entry;
    if (d.contains("spec")) {
      DomainSpec spec = d["spec"].get<DomainSpec>();
      registry.add(spec);
      entry.key = spec.key;
    } else {
      entry.key = d.at("domain").get<std::string>();
      if (!registry.contains(entry.key)) throw Error(Errc::unknown_domain, "unknown domain \"" + entry.key + "\"");
    }
    if (d.contains("test_set")) registry.set_test_set(entry.key, items_from(d["test_set"], base));
    for (const auto& p : d.value("personas", json::array())) {
      if (p.is_string()) {
        // A file holding one persona object.
        entry.personas.push_back(read_json_file(base / p.get<std::string>()).get<sim::Persona>());
      } else {
        entry.personas.push_back(p.get<sim::Persona>());
      }
    }
    const json pools = d.value("pools", json::object());
    for (const auto& [ref, file] : pools.items())
      entry.pools[ref] = load_pool(base / file.get<std::string>(), cfg.clusters, cfg.seed);
    cfg.domains.push_back(std::move(entry));
  }
  return cfg;
}

LMGateway make_gateway(const Options& opt, LMProfile profile, std::uint64_t seed) {
  profile = LMProfile::from_env(std::move(profile));
  if (opt.mock) {
    profile.backend = BackendKind::mock_seeded;
    profile.seed = seed;
    return LMGateway(profile, std::make_shared<SeededBackend>(seed));
  }
  if (profile.backend == BackendKind::mock_seeded) return LMGateway(profile, std::make_shared<SeededBackend>(seed));
  if (profile.backend == BackendKind::mock_scripted)
    throw Error(Errc::invalid_argument, "mock_scripted is for tests; use --mock or http_chat");
  return LMGateway(profile, std::make_shared<HttpChatBackend>(profile.base_url, profile.api_key));
}

void emit(const std::string& out, const json& doc) {
  if (out.empty() || out == "-")
    std::cout << doc.dump(2) << '\n';
  else
    write_file(out, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const Options& opt, const std::string& out) {
  if (opt.config.empty()) throw Error(Errc::invalid_argument, "simulate needs --config");
  DomainRegistry registry;
  const Config cfg = load_config(opt, registry);
  const std::uint64_t seed = opt.seed ? opt.seed : cfg.seed;
  if (cfg.methods.empty()) throw Error(Errc::invalid_argument, "config lists no methods");
  if (cfg.domains.empty()) throw Error(Errc::invalid_argument, "config lists no domains");

  json runs = json::array();
  json skipped = json::array();
  std::map<std::string, std::vector<metrics::DeltaCurve>> by_method;
  std::map<std::string, std::vector<double>> aucs;
  std::uint64_t run_index = 0;

  for (const auto& entry : cfg.domains) {
    const DomainSpec domain = registry.get(entry.key);
    if (domain.test_set.empty()) throw Error(Errc::insufficient_data, "domain \"" + entry.key + "\" has no test set");
    if (entry.personas.empty()) throw Error(Errc::invalid_argument, "domain \"" + entry.key + "\" lists no personas");
    for (const auto method : cfg.methods)
      for (const auto& persona : entry.personas) {
        const std::string label = entry.key + "/" + std::string(to_string(method)) + "/" + persona.name;
        auto skip = [&](const std::string& why) { skipped.push_back({{"run", label}, {"reason", why}}); };
        if (!sim::compatible(persona, method)) {
          skip("persona cannot answer this method's queries");
          continue;
        }
        PolicySpec policy;
        policy.kind = method;
        const PoolContext* pool = nullptr;
        if (uses_pool(method)) {
          if (entry.pools.empty()) {
            skip("no pool configured");
            continue;
          }
          policy.pool_ref = entry.pools.begin()->first;
          pool = &entry.pools.begin()->second;
        }
        const std::uint64_t run_seed = detail::mix(seed, run_index++);
        LMGateway gw = make_gateway(opt, cfg.lm, run_seed);
        const auto r =
            sim::run_simulation(policy, persona, domain, gw, cfg.turn_budget, domain.test_set, {.seed = run_seed, .pool = pool});
        runs.push_back({{"domain", entry.key},
                        {"method", to_string(method)},
                        {"persona", persona.name},
                        {"session", r.session},
                        {"curve", r.curve},
                        {"auc", r.auc},
                        {"final_delta", metrics::final_value(r.curve)}});
        by_method[std::string(to_string(method))].push_back(r.curve);
        aucs[std::string(to_string(method))].push_back(r.auc);
      }
  }

  json methods = json::object();
  for (const auto& [method, curves] : by_method) {
    double mean_auc = 0.0;
    for (double a : aucs[method]) mean_auc += a;
    mean_auc /= static_cast<double>(aucs[method].size());
    const auto avg = metrics::average_curves(curves);
    methods[method] = {{"runs", curves.size()}, {"mean_auc", mean_auc}, {"curve", avg}, {"final_delta", metrics::final_value(avg)}};
  }
  emit(out, {{"schema_version", kSchemaVersion},
             {"kind", "simulation_report"},
             {"seed", seed},
             {"turn_budget", cfg.turn_budget},
             {"mock", opt.mock},
             {"methods", methods},
             {"runs", runs},
             {"skipped", skipped}});
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const Options& opt, const std::string& sessions_dir, const std::string& out) {
  if (!fs::is_directory(sessions_dir)) throw Error(Errc::not_found, "no such directory: " + sessions_dir);
  DomainRegistry registry;
  const Config cfg = load_config(opt, registry);
  FileStore store(sessions_dir);
  const auto ids = store.list(std::string(kSessionKind));
  if (ids.empty()) throw Error(Errc::insufficient_data, "no sessions in " + sessions_dir);

  std::vector<Session> complete;
  for (const auto& id : ids) {
    Session s = load_session(store, id);
    if (s.state == SessionState::complete) complete.push_back(std::move(s));
  }
  if (complete.empty()) throw Error(Errc::insufficient_data, "no complete sessions in " + sessions_dir);

  LMGateway gw = make_gateway(opt, cfg.lm, opt.seed ? opt.seed : cfg.seed);
  json sessions = json::array();
  std::map<std::string, std::vector<metrics::DeltaCurve>> by_method;
  for (const auto& s : complete) {
    std::vector<PredictionRecord> records;
    if (store.contains(std::string(kPredictionKind), s.id)) {
      records = load_predictions(store, s.id);
    } else {
      const auto cutoffs = s.policy.turn_mode() ? turn_cutoffs(*s.policy.turn_budget)
                                                : minute_cutoffs(static_cast<int>(
                                                      std::chrono::ceil<std::chrono::minutes>(s.policy.time_budget).count()));
      records = predict_test_set(gw, registry.get(s.domain), s, cutoffs);
      save_predictions(store, s.id, records);
    }
    json row = {{"session_id", s.id}, {"domain", s.domain}, {"method", to_string(s.policy.kind)}};
    if (s.judgments.empty()) {
      row["curve"] = nullptr;
    } else {
      const auto curve = metrics::delta_curve(records, s.judgments);
      row["curve"] = curve;
      row["auc"] = metrics::auc(curve, curve.points.back().coordinate);
      by_method[std::string(to_string(s.policy.kind))].push_back(curve);
    }
    sessions.push_back(row);
  }

  json methods = json::object();
  for (const auto& [method, curves] : by_method) {
    const auto avg = metrics::average_curves(curves);
    methods[method] = {{"sessions", curves.size()},
                       {"curve", avg},
                       {"auc", metrics::auc(avg, avg.points.back().coordinate)},
                       {"final_delta", metrics::final_value(avg)}};
  }
  json report = {{"schema_version", kSchemaVersion},
                 {"kind", "evaluation_report"},
                 {"methods", methods},
                 {"sessions", sessions},
                 {"survey_means", mean_ratings(complete)}};
  try {
    report["mean_question_entropy"] = metrics::mean_question_entropy(complete);
  } catch (const Error&) {
    report["mean_question_entropy"] = nullptr;
  }
  emit(out, report);
  return 0;
}

// ---------------------------------------------------------------------------
// ingest-pool

int cmd_ingest(const Options& opt, const std::string& input, const std::string& format, std::size_t target, int k,
               std::string out) {
  std::ifstream in(input);
  if (!in) throw Error(Errc::io, "cannot open " + input);
  std::vector<TestItem> items;
  if (format == "mind")
    items = read_mind_tsv(in);
  else if (format == "jsonl")
    items = read_items_jsonl(in);
  else
    throw Error(Errc::invalid_argument, "unknown format \"" + format + "\"");
  if (items.empty()) throw Error(Errc::insufficient_data, input + " holds no items");
  if (out.empty()) out = fs::path(input).stem().string() + ".pool.jsonl";

  pool::HashingEmbedder embedder;
  const auto kept = pool::prefilter(items, target, embedder, opt.seed);
  const auto model = pool::cluster(pool::embed_pool(kept, embedder), k, opt.seed);
  std::ostringstream jsonl;
  write_items_jsonl(jsonl, kept);
  write_file(out, jsonl.str());
  write_file(out + ".clusters.json", json(model).dump() + "\n");
  std::cerr << "kept " << kept.size() << " of " << items.size() << " items in " << model.nonempty_clusters()
            << " clusters -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// export

int cmd_export(const std::string& report_path, const std::string& out_dir) {
  const json report = read_json_file(report_path);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto& methods = report.at("methods");

  std::ostringstream curves;
  curves << "label,axis,coordinate,value\n";
  std::ostringstream scatter;
  scatter << "method,auc,final_delta\n";
  json curves_json = json::object();
  for (const auto& [method, m] : methods.items()) {
    const auto curve = m.at("curve").get<metrics::DeltaCurve>();
    metrics::write_curve_csv(curves, method, curve);
    const double area = m.contains("mean_auc") ? m["mean_auc"].get<double>() : m.at("auc").get<double>();
    scatter << metrics::csv_field(method) << ',' << area << ',' << m.at("final_delta").get<double>() << '\n';
    curves_json[method] = curve;
  }
  write_file(dir / "curves.csv", curves.str());
  write_file(dir / "scatter.csv", scatter.str());
  write_file(dir / "curves.json", curves_json.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// serve

int cmd_serve(const Options& opt, const std::string& host, int port, const std::string& web_root) {
  DomainRegistry registry;
  const Config cfg = load_config(opt, registry);
  LMGateway gw = make_gateway(opt, cfg.lm, opt.seed ? opt.seed : cfg.seed);
  const fs::path store_root = opt.store.empty() ? FileStore::from_env("data").root() : fs::path(opt.store);
  FileStore store(store_root);
  Service service(registry, gw, [] { return instant_from_ms(std::chrono::duration_cast<Duration>(
                                                                std::chrono::system_clock::now().time_since_epoch())
                                                                .count()); },
                  &store, opt.seed);
  for (const auto& entry : cfg.domains)
    for (const auto& [ref, ctx] : entry.pools) service.add_pool(ref, ctx);

  httplib::Server server;
  if (!web_root.empty() && fs::is_directory(web_root)) server.set_mount_point("/app", web_root);
  auto bind = [&](const httplib::Request& req, httplib::Response& res) {
    const std::string path = req.path.substr(4);  // strip "/api"
    const auto r = service.handle(req.method, path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/api/.*)", bind);
  server.Post(R"(/api/.*)", bind);
  std::cerr << "serving on http://" << host << ":" << port << "/api (store " << store_root.string() << ")\n";
  if (!server.listen(host, port)) throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elicit task preferences from simulated or live users and score the resulting specifications."};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config, "JSON config file");
  app.add_flag("--mock", opt.mock, "Use the deterministic offline language model");
  app.add_option("--seed", opt.seed, "Seed for sessions, mocks and clustering");
  app.add_option("--store", opt.store, "Session store directory (default $GATE_DATA_DIR or ./data)");

  auto* serve = app.add_subcommand("serve", "Serve the session API over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string web_root = "web";
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--web-root", web_root, "Directory served under /app");

  auto* simulate = app.add_subcommand("simulate", "Run simulated users over domains x methods x personas");
  std::string sim_out;
  simulate->add_option("-o,--out", sim_out, "Report path (default stdout)");

  auto* evaluate = app.add_subcommand("evaluate", "Score completed sessions in a store");
  std::string sessions_dir;
  std::string eval_out;
  evaluate->add_option("--sessions", sessions_dir, "Store directory holding sessions")->required();
  evaluate->add_option("-o,--out", eval_out, "Report path (default stdout)");

  auto* ingest = app.add_subcommand("ingest-pool", "Pre-filter and cluster an unlabeled pool");
  std::string input;
  std::string format = "jsonl";
  std::size_t target = 1000;
  int k = pool::kDefaultClusters;
  std::string ingest_out;
  ingest->add_option("input", input, "Input file")->required();
  ingest->add_option("--format", format, "mind or jsonl")->check(CLI::IsMember({"mind", "jsonl"}));
  ingest->add_option("--target", target, "Items kept by the diversity pre-filter");
  ingest->add_option("-k,--clusters", k, "Number of clusters");
  ingest->add_option("-o,--out", ingest_out, "Output pool (JSONL); the cluster model goes next to it");

  auto* exp = app.add_subcommand("export", "Write curves and per-method scatter data as CSV and JSON");
  std::string report;
  std::string out_dir = "export";
  exp->add_option("--report", report, "Simulation or evaluation report")->required();
  exp->add_option("-o,--out-dir", out_dir);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*serve) return cmd_serve(opt, host, port, web_root);
    if (*simulate) return cmd_simulate(opt, sim_out);
    if (*evaluate) return cmd_evaluate(opt, sessions_dir, eval_out);
    if (*ingest) return cmd_ingest(opt, input, format, target, k, ingest_out);
    if (*exp) return cmd_export(report, out_dir);
  } catch (const gate::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
