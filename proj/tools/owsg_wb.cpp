#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "owsg/harness.hpp"

namespace {

constexpr int kPass = 0, kFail = 1, kUsage = 2;

std::uint64_t default_seed() {
  const char* env = std::getenv("OWSG_WB_SEED");
  if (!env || !*env) return 42;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw owsg::UsageError(std::string("OWSG_WB_SEED is not an unsigned integer: ") + env);
  }
}

const std::set<std::string> kValued{"--seed", "--out", "--json", "--config", "--cap", "--only"};
const std::set<std::string> kFlags{"--no-timing", "--list", "--help", "-h"};

/// Moves "--key value" and "--key=value" pairs that are not fixed options into params.
std::vector<std::string> split_params(int argc, char** argv, nlohmann::json& params) {
  std::vector<std::string> keep{argv[0]};
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const std::string head = a.substr(0, a.find('='));
    if (a.rfind("--", 0) != 0 || a.size() < 3 || kFlags.count(a) || kValued.count(head)) {
      keep.push_back(a);
      if (kValued.count(a) && i + 1 < argc) keep.push_back(argv[++i]);
      continue;
    }
    const std::string body = a.substr(2);
    if (const auto eq = body.find('='); eq != std::string::npos) {
      params[body.substr(0, eq)] = body.substr(eq + 1);
    } else {
      if (i + 1 >= argc) throw owsg::UsageError("missing value for '" + a + "'");
      params[body] = argv[++i];
    }
  }
  return keep;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"owsg_wb: exact workbench for one-way state generators and their reductions"};
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::string> args;
  try {
    args = split_params(argc, argv, extra);
  } catch (const owsg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  std::vector<std::string> words;
  std::string out, json_out, config;
  std::vector<std::string> only;
  std::uint64_t seed = 0;
  std::size_t cap = 4096;
  bool no_timing = false, list = false;
  app.add_option("words", words, "verb and sub-verb, e.g. `check fvdg`, `amplify`, `suite`");
  auto* seed_opt = app.add_option("--seed", seed, "64-bit seed (default: OWSG_WB_SEED or 42)");
  app.add_option("--out", out, "append CSV rows to this file instead of stdout");
  app.add_option("--json", json_out, "also write the rows as JSON");
  app.add_option("--config", config, "flat key = value file; command-line parameters override it");
  app.add_option("--cap", cap, "dimension cap")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "suite: run only these experiments (repeatable)");
  app.add_flag("--no-timing", no_timing, "write 0 in the ms column");
  app.add_flag("--list", list, "list registered experiments");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (list) {
      for (const auto& [name, fn] : owsg::registry()) std::cout << name << "\n";
      return kPass;
    }
    if (words.empty()) throw owsg::UsageError("missing verb; try --list");
    owsg::ExperimentConfig cfg;
    cfg.seed = seed_opt->count() ? seed : default_seed();
    cfg.cap = cap;
    cfg.timing = !no_timing;
    if (!config.empty()) {
      std::ifstream is(config);
      if (!is) throw owsg::UsageError("cannot read config file '" + config + "'");
      std::stringstream ss;
      ss << is.rdbuf();
      cfg.params = owsg::parse_config_text(ss.str());
    }
    for (const auto& [k, v] : extra.items()) cfg.params[k] = v;

    std::vector<owsg::ReportRow> rows;
    bool pass = true;
    if (words.front() == "suite") {
      if (words.size() > 1) throw owsg::UsageError("suite takes names via --only");
      const auto names = only.empty() ? owsg::default_suite() : only;
      auto res = owsg::suite(names, cfg);
      rows = std::move(res.rows);
      pass = res.all_pass;
    } else {
      std::string name = words.front();
      for (std::size_t i = 1; i < words.size(); ++i) name += " " + words[i];
      cfg.name = name;
      rows = owsg::run(cfg);
      for (const auto& r : rows) pass = pass && r.pass;
    }

    if (out.empty()) std::cout << owsg::to_csv(rows);
    else owsg::append_report(out, rows);
    if (!json_out.empty()) {
      std::ofstream js(json_out, std::ios::binary);
      if (!js) throw owsg::UsageError("cannot open '" + json_out + "'");
      js << owsg::to_json(rows).dump(2) << "\n";
    }
    return pass ? kPass : kFail;
  } catch (const owsg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
