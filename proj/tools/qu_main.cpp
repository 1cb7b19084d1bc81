#include "qu/judge.hpp"
#include "qu/mathkernel.hpp"
#include "qu/serving.hpp"
#include "qu/synth.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace qu;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

struct Options {
  std::string schema_path, rules_path, facets_path, cost_path, config_path;
  std::uint64_t seed = 0;
  bool json = false;
  std::string log_level = "info";
};

SchemaSet load_schema(const Options& opt) {
  if (opt.schema_path.empty()) return default_tag_schema();
  try {
    return SchemaSet::load_file(opt.schema_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

RuleConfig load_rules(const Options& opt) {
  if (opt.rules_path.empty()) return RuleConfig::serving_defaults();
  try {
    return RuleConfig::load_file(opt.rules_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

FacetIndex load_index(const Options& opt) {
  if (opt.facets_path.empty()) return FacetIndex{};
  try {
    return FacetIndex::load_jsonl(opt.facets_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

CostModel load_cost(const Options& opt) {
  if (opt.cost_path.empty()) return CostModel{};
  try {
    return CostModel::load_file(opt.cost_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

void apply_config(Options& opt, int& port) {
  if (opt.config_path.empty()) return;
  Json doc = parse_strict(slurp(opt.config_path));
  if (opt.schema_path.empty()) opt.schema_path = doc.value("schema", "");
  if (opt.rules_path.empty()) opt.rules_path = doc.value("rules", "");
  if (opt.facets_path.empty()) opt.facets_path = doc.value("facets", "");
  if (opt.cost_path.empty()) opt.cost_path = doc.value("cost", "");
  port = doc.value("port", port);
  opt.log_level = doc.value("log_level", opt.log_level);
}

MemberContext load_context(const std::string& path) {
  if (path.empty()) return {};
  return MemberContext::from_json(parse_strict(slurp(path)));
}

int cmd_understand(const Options& opt, const std::string& query,
                   const std::string& context_path) {
  Service svc(load_schema(opt), load_rules(opt), load_index(opt), load_cost(opt));
  QueryRequest req{query, load_context(context_path), "cli", "en_US"};
  auto resp = svc.handle(req);
  std::cout << (opt.json ? resp.body.dump() : resp.body.dump(2)) << "\n";
  return 0;
}

int cmd_decode(const Options& opt, const std::string& target, bool adversarial,
               int max_tokens) {
  SchemaSet schema = load_schema(opt);
  ByteTokenizer tok;
  GrammarAutomaton automaton = compile_grammar(schema, tok);
  DecodeOutcome out;
  if (adversarial) {
    AdversarialModel model(opt.seed, tok.vocabulary().size());
    out = decode(model, "", automaton, {max_tokens, opt.seed});
  } else {
    ScriptedModel model(target, tok.vocabulary().size());
    out = decode(model, "", automaton, {max_tokens, opt.seed});
  }
  Json doc{{"completed", out.completed},
           {"text", out.text},
           {"tokens_used", out.tokens_used}};
  std::cout << doc.dump() << "\n";
  return 0;
}

int cmd_repair(const Options& opt, const std::string& path) {
  std::string text = slurp(path);
  try {
    RepairResult res = repair_parse(text);
    Json doc{{"value", res.value}, {"repairs", repair_log_to_json(res.log)}};
    std::cout << (opt.json ? doc.dump() : doc.dump(2)) << "\n";
    return 0;
  } catch (const Unrecoverable& e) {
    std::cout << Json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
}

int cmd_facets(const Options& opt, const std::string& query, int k) {
  FacetIndex idx = load_index(opt);
  if (idx.size() == 0) throw InputError("facet index is empty; pass --index");
  auto candidates = retrieve_candidates(query, idx, k);
  FacetScorer scorer;
  SimilarityScoringModel model;
  auto scored = scorer.score_batch(query, candidates, model, 25);
  Json arr = Json::array();
  for (const auto& sf : scored)
    arr.push_back(Json{{"facet_type", facet_type_name(sf.facet.type)},
                       {"value", sf.facet.value},
                       {"score", sf.score}});
  std::cout << arr.dump() << "\n";
  return 0;
}

int cmd_bench(const Options& opt, const std::string& queries_path,
              const std::vector<double>& qps, int n) {
  Service svc(load_schema(opt), load_rules(opt), load_index(opt), load_cost(opt));
  LoadTestConfig cfg;
  cfg.queries = read_lines(queries_path);
  if (!qps.empty()) cfg.qps_levels = qps;
  cfg.requests_per_level = n;
  cfg.cost = svc.cost();
  cfg.seed = opt.seed;
  LatencyReport report = run_load_test(svc, cfg);
  std::cout << (opt.json ? report.to_json().dump() + "\n" : report.to_text());
  return 0;
}

int cmd_judge(const Options& opt, const std::string& golden_path,
              const std::string& candidates_path, const std::string& out_path,
              const std::string& second_verdicts) {
  GoldenSet golden;
  try {
    golden = GoldenSet::load_jsonl(golden_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  std::vector<StructuredOutput> candidates;
  for (const auto& line : read_lines(candidates_path))
    candidates.push_back(StructuredOutput::from_json(parse_strict(line)));
  JudgeReport report = evaluate_candidates(golden, candidates);
  Json doc = report.to_json();
  if (!second_verdicts.empty()) {
    auto a = read_lines(candidates_path);
    auto b = read_lines(second_verdicts);
    std::vector<std::string> la(a.begin(), a.end()), lb(b.begin(), b.end());
    doc["kappa"] = cohen_kappa(la, lb);
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << doc.dump(2) << "\n";
  }
  std::cout << (opt.json ? doc.dump() : doc.dump(2)) << "\n";
  return 0;
}

int cmd_sample(const Options& opt, const std::string& traffic_path,
               const std::string& fingerprints_path) {
  std::vector<QueryRequest> traffic;
  for (const auto& line : read_lines(traffic_path)) {
    Json doc = parse_strict(line);
    QueryRequest req;
    req.query = doc.at("query").get<std::string>();
    if (doc.contains("context")) req.context = MemberContext::from_json(doc["context"]);
    traffic.push_back(std::move(req));
  }
  std::set<std::string> fingerprints;
  if (!fingerprints_path.empty())
    for (const auto& line : read_lines(fingerprints_path)) fingerprints.insert(line);

  TeacherAnnotator teacher(load_schema(opt));
  Service student(load_schema(opt), load_rules(opt), FacetIndex{});
  auto teacher_fn = [&](const QueryRequest& req) {
    return teacher.annotate(req.query, req.context);
  };
  auto student_fn = [&](const QueryRequest& req) {
    return student.handle(req).output;
  };
  auto prioritized =
      sample_for_active_learning(traffic, teacher_fn, student_fn, fingerprints);
  Json arr = Json::array();
  for (const auto& s : prioritized)
    arr.push_back(Json{{"index", s.index},
                       {"query", s.query},
                       {"gr", s.gr},
                       {"novel", s.novel}});
  std::cout << arr.dump() << "\n";
  return 0;
}

int cmd_synth(const Options& opt, const std::string& config_path, int n,
              const std::string& out_path) {
  SynthesisConfig cfg;
  if (config_path.empty()) {
    cfg = default_synthesis_config();
  } else {
    try {
      cfg = SynthesisConfig::load_file(config_path);
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
  }
  cfg.seed = opt.seed;
  auto pairs = synthesize_batch(n, cfg, load_schema(opt));
  std::ostringstream body;
  for (const auto& p : pairs) body << p.to_json().dump() << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << body.str();
  } else {
    std::cout << body.str();
  }
  return 0;
}

int cmd_stats(const Options& opt, const std::string& queries_path) {
  LengthStats stats = query_length_stats(read_lines(queries_path));
  std::cout << (opt.json ? stats.to_json().dump() + "\n" : stats.to_text());
  return 0;
}

int cmd_mathcheck(const Options& opt, const std::string& suite) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(15);
  bool pass = true;
  std::mt19937_64 rng(opt.seed);
  if (suite == "losses") {
    double worst = 0.0;
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int i = 0; i < 1000; ++i) {
      Distribution p(4), q(4);
      double sp = 0.0, sq = 0.0;
      for (int j = 0; j < 4; ++j) {
        p[j] = u(rng);
        q[j] = u(rng);
        sp += p[j];
        sq += q[j];
      }
      for (int j = 0; j < 4; ++j) {
        p[j] /= sp;
        q[j] /= sq;
      }
      double kl = kl_divergence(p, q);
      double oracle = 0.0;
      for (int j = 0; j < 4; ++j) oracle += p[j] * std::log(p[j] / q[j]);
      worst = std::max(worst, std::fabs(kl - oracle));
      if (kl < -1e-15) pass = false;
    }
    pass = pass && worst <= 1e-12;
    os << "suite=losses kl_max_deviation=" << worst << " gibbs=ok\n";
  } else if (suite == "prop-a1") {
    double worst = 0.0;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 10; ++i) {
      double a = u(rng), b = u(rng), lam = std::fabs(u(rng)), eps = u(rng);
      MultiTaskProblem p;
      p.primary = [a](const std::vector<double>& t) {
        return (t[0] - a) * (t[0] - a);
      };
      p.aux = {{[b](const std::vector<double>& t) {
                  return (t[0] - b) * (t[0] - b);
                },
                lam, eps}};
      p.theta0 = {0.0};
      auto rep = lagrangian_equivalence_check(p, {{-2.0}, {2.0}, 1e-3});
      pass = pass && rep.passed;
      worst = std::max(worst, rep.max_offset_error);
    }
    os << "suite=prop-a1 max_offset_error=" << worst << "\n";
  } else if (suite == "cor-a2") {
    MultiTaskProblem p;
    p.primary = [](const std::vector<double>&) { return 0.0; };
    p.aux = {{[](const std::vector<double>& t) { return std::cosh(t[0]) - 1.0; },
              1.0, 0.0}};
    p.theta0 = {0.0};
    auto rep = quadratic_regularizer_check(p, {0.4, 0.2, 0.1});
    for (double r : rep.decay_ratios)
      pass = pass && r > 0.0625 * 0.7 && r < 0.0625 * 1.3;
    os << "suite=cor-a2 ratios=";
    for (double r : rep.decay_ratios) os << r << " ";
    os << "\n";
  } else {
    throw InputError("unknown suite: " + suite);
  }
  os << (pass ? "PASS" : "FAIL") << "\n";
  std::cout << os.str();
  return pass ? 0 : 1;
}

int cmd_serve(Options opt, int port) {
  if (const char* env = std::getenv("PORT")) port = std::atoi(env);
  Service svc(load_schema(opt), load_rules(opt), load_index(opt), load_cost(opt));
  httplib::Server server;
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(Json{{"status", "ok"}}.dump(), "application/json");
  });
  server.Post("/understand", [&](const httplib::Request& req, httplib::Response& res) {
    try {
      Json doc = parse_strict(req.body);
      QueryRequest qr;
      qr.query = doc.at("query").get<std::string>();
      if (doc.contains("context"))
        qr.context = MemberContext::from_json(doc["context"]);
      qr.session_id = doc.value("session_id", std::string("http"));
      auto resp = svc.handle(qr);
      res.set_content(resp.body.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  server.Post("/bench", [&](const httplib::Request& req, httplib::Response& res) {
    try {
      Json doc = parse_strict(req.body);
      LoadTestConfig cfg;
      cfg.queries = doc.at("queries").get<std::vector<std::string>>();
      if (doc.contains("qps_levels"))
        cfg.qps_levels = doc["qps_levels"].get<std::vector<double>>();
      cfg.requests_per_level = doc.value("requests_per_level", 200);
      cfg.cost = svc.cost();
      cfg.seed = doc.value("seed", 0);
      res.set_content(run_load_test(svc, cfg).to_json().dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  std::cout << Json{{"listening", port}}.dump() << std::endl;
  if (!server.listen("0.0.0.0", port)) {
    std::cerr << Json{{"error", "failed to bind port"}}.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"schema-constrained query understanding toolkit"};
  app.require_subcommand(1);

  Options opt;
  int port = 8080;
  app.add_option("--schema", opt.schema_path, "tag schema JSON");
  app.add_option("--config", opt.config_path, "app config JSON");
  app.add_option("--seed", opt.seed, "RNG seed");
  app.add_flag("--json", opt.json, "machine-readable output");
  app.add_option("--log-level", opt.log_level, "log level");
  app.add_option("--rules", opt.rules_path, "rule engine config JSON");
  app.add_option("--index", opt.facets_path, "facet corpus JSONL");
  app.add_option("--cost", opt.cost_path, "cost model JSON");

  auto* serve = app.add_subcommand("serve", "HTTP service");
  serve->add_option("--port", port, "listen port (PORT env overrides)");

  std::string query, context_path;
  auto* understand = app.add_subcommand("understand", "one query through the pipeline");
  understand->add_option("query", query, "query text")->required();
  understand->add_option("--context", context_path, "member context JSON");

  std::string target;
  bool adversarial = false;
  int max_tokens = 4096;
  auto* dec = app.add_subcommand("decode", "constrained decode");
  dec->add_option("--target", target, "scripted model target");
  dec->add_flag("--adversarial", adversarial, "seeded adversarial model");
  dec->add_option("--max-tokens", max_tokens, "token budget");

  std::string repair_path;
  auto* rep = app.add_subcommand("repair", "tolerant JSON repair");
  rep->add_option("file", repair_path, "input file")->required();

  int topk = 10;
  auto* fac = app.add_subcommand("facets", "retrieve and score facets");
  fac->add_option("--query", query, "query text")->required();
  fac->add_option("-k,--top", topk, "candidates to retrieve");

  std::string queries_path;
  std::vector<double> qps;
  int bench_n = 200;
  auto* bench = app.add_subcommand("bench", "latency load test");
  bench->add_option("--queries", queries_path, "query file, one per line")->required();
  bench->add_option("--qps", qps, "offered QPS levels");
  bench->add_option("--n", bench_n, "requests per level");

  std::string golden_path, candidates_path, out_path, second_path;
  auto* judge_cmd = app.add_subcommand("judge", "rubric evaluation");
  judge_cmd->add_option("--golden", golden_path, "golden set JSONL")->required();
  judge_cmd->add_option("--candidates", candidates_path, "candidate JSONL")->required();
  judge_cmd->add_option("--out", out_path, "report output path");
  judge_cmd->add_option("--second", second_path, "second verdict file for kappa");

  std::string traffic_path, fingerprints_path;
  auto* sample = app.add_subcommand("sample", "active-learning prioritization");
  sample->add_option("--traffic", traffic_path, "traffic JSONL")->required();
  sample->add_option("--fingerprints", fingerprints_path, "known tag combinations");

  std::string synth_config;
  int synth_n = 100;
  auto* synth = app.add_subcommand("synth", "instruction synthesis");
  synth->add_option("--config", synth_config, "synthesis config JSON");
  synth->add_option("--n", synth_n, "pairs to generate");
  synth->add_option("--out", out_path, "output JSONL path");

  auto* stats = app.add_subcommand("stats", "query length stats");
  stats->add_option("--queries", queries_path, "query file, one per line")->required();

  std::string suite;
  auto* math = app.add_subcommand("mathcheck", "loss kernel checks");
  math->add_option("--suite", suite, "losses | prop-a1 | cor-a2")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_config(opt, port);
    if (serve->parsed()) return cmd_serve(opt, port);
    if (understand->parsed()) return cmd_understand(opt, query, context_path);
    if (dec->parsed()) return cmd_decode(opt, target, adversarial, max_tokens);
    if (rep->parsed()) return cmd_repair(opt, repair_path);
    if (fac->parsed()) return cmd_facets(opt, query, topk);
    if (bench->parsed()) return cmd_bench(opt, queries_path, qps, bench_n);
    if (judge_cmd->parsed())
      return cmd_judge(opt, golden_path, candidates_path, out_path, second_path);
    if (sample->parsed()) return cmd_sample(opt, traffic_path, fingerprints_path);
    if (synth->parsed()) return cmd_synth(opt, synth_config, synth_n, out_path);
    if (stats->parsed()) return cmd_stats(opt, queries_path);
    if (math->parsed()) return cmd_mathcheck(opt, suite);
  } catch (const InputError& e) {
    std::cout << qu::Json{{"error", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cout << qu::Json{{"error", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cout << qu::Json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}
