// maptter: batch driver for the corpus / annotation / experiment pipeline.
//
//   maptter ingest comments.jsonl --store st --project p
//   maptter export --store st --project p [--topic T] [--source S] [-o out.jsonl]
//   maptter iaa a1.csv a2.csv
//   maptter gold adjudicated.csv --seed 3 [--store st --project p] [-o gold.jsonl]
//   maptter experiment gold.jsonl grid.ini --seed 7 [--format csv|table] [-o report.csv]
//   maptter serve --store st [--host H] [--port N] [--secret S]
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "maptter/maptter.hpp"

namespace {

using namespace maptter;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

void log(const std::string& message) { std::cerr << utc_timestamp() << " " << message << "\n"; }

void emit(const std::string& data, const std::string& path) {
  if (path.empty() || path == "-") {
    std::fwrite(data.data(), 1, data.size(), stdout);
    std::fflush(stdout);
  } else {
    write_file_atomic(path, data);
  }
}

struct Options {
  std::string store;
  std::string project;
  std::string input;
  std::string second;
  std::string output;
  std::optional<std::string> topic;
  std::optional<std::string> source;
  std::optional<uint64_t> seed;
  std::string format = "csv";
  unsigned workers = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> secret;
};

int run_ingest(const Options& o) {
  Workbench bench(o.store);
  if (bench.create_project(o.project)) log("created project " + o.project);
  const auto lines = corpus::parse_corpus_jsonl(read_file(o.input));
  const auto report = bench.ingest(o.project, lines);
  std::cout << nlohmann::json{{"added", report.added},
                              {"duplicates_dropped", report.duplicates_dropped},
                              {"rejected_empty", report.rejected_empty},
                              {"total", report.total()}}
                   .dump()
            << "\n";
  return kOk;
}

int run_export(const Options& o) {
  const Workbench bench(o.store);
  corpus::CommentSelector selector;
  selector.topic = o.topic;
  selector.source = o.source;
  emit(bench.export_corpus(o.project, selector), o.output);
  return kOk;
}

int run_iaa(const Options& o) {
  const auto first = annotation::parse_annotation_csv(read_file(o.input));
  const auto second = annotation::parse_annotation_csv(read_file(o.second));
  const auto [a, b] = annotation::align_annotations(first, second);
  std::cout << annotation::to_json(annotation::cohen_kappa(a, b)).dump() << "\n";
  return kOk;
}

int run_gold(const Options& o) {
  const auto rows = annotation::parse_annotation_csv(read_file(o.input));
  std::vector<annotation::GoldItem> items;
  std::unordered_map<std::string, std::string> text_of;
  for (const auto& row : rows) {
    items.push_back({row.comment_id, row.label});
    text_of[row.comment_id] = row.text;
  }
  const auto gold = annotation::balance_gold(items, *o.seed, o.input);

  std::optional<Workbench> bench;
  if (!o.store.empty()) bench.emplace(o.store);
  size_t missing_text = 0;
  std::vector<annotation::GoldDocument> docs;
  for (const auto& item : gold.items) {
    std::string text = text_of[item.comment_id];
    if (text.empty() && bench) {
      if (auto c = bench->corpus(o.project).find_comment(item.comment_id)) text = c->raw_text;
    }
    missing_text += text.empty();
    docs.push_back({item.comment_id, std::move(text), item.label});
  }
  if (missing_text > 0) log("warning: " + std::to_string(missing_text) + " gold documents have no text");
  log("gold: " + std::to_string(gold.count(Label::positive)) + " positive, " +
      std::to_string(gold.count(Label::negative)) + " negative");
  emit(annotation::to_jsonl(docs), o.output);
  return kOk;
}

int run_experiment_cmd(const Options& o) {
  const auto gold = annotation::parse_gold_jsonl(read_file(o.input));
  auto config = load_experiment_config(o.second);
  if (o.seed) config.seed = o.seed;
  if (!config.seed) throw CLI::ValidationError("--seed", "a seed is required (flag or [cv] seed)");
  if (o.format != "csv" && o.format != "table") throw CLI::ValidationError("--format", "must be csv or table");
  log("experiment: " + std::to_string(gold.size()) + " documents, " +
      std::to_string(config.axes.cells().size()) + " cells, k=" + std::to_string(config.k_folds));
  const auto report = run_experiment(gold, config, o.workers);
  emit(o.format == "csv" ? eval::render_csv(report) : eval::render_table(report), o.output);
  return kOk;
}

service::Service* g_service = nullptr;

int run_serve(const Options& o) {
  Workbench bench(o.store);
  service::ServiceConfig config;
  config.host = o.host;
  config.port = o.port;
  config.shared_secret = o.secret;
  service::Service svc(bench, config);
  const int port = svc.bind();
  g_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  log("listening on " + o.host + ":" + std::to_string(port));
  svc.listen();
  g_service = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Arabic comment sentiment workbench"};
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "ingest a comments JSONL file into a project store");
  ingest->add_option("file", o.input, "comments JSONL")->required()->check(CLI::ExistingFile);
  ingest->add_option("--store", o.store, "project store directory")->required();
  ingest->add_option("--project", o.project, "project id")->required();

  auto* exp = app.add_subcommand("export", "export a project's comments as JSONL");
  exp->add_option("--store", o.store, "project store directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--project", o.project, "project id")->required();
  exp->add_option("--topic", o.topic, "only this topic");
  exp->add_option("--source", o.source, "only this source");
  exp->add_option("-o,--output", o.output, "output file (default stdout)");

  auto* iaa = app.add_subcommand("iaa", "Cohen's kappa between two annotation CSVs");
  iaa->add_option("first", o.input, "first annotator CSV")->required()->check(CLI::ExistingFile);
  iaa->add_option("second", o.second, "second annotator CSV")->required()->check(CLI::ExistingFile);

  auto* gold = app.add_subcommand("gold", "balanced gold JSONL from an adjudicated CSV");
  gold->add_option("file", o.input, "adjudicated CSV (comment_id,label[,text])")->required()->check(CLI::ExistingFile);
  gold->add_option("--seed", o.seed, "balancing seed")->required();
  gold->add_option("--store", o.store, "project store to look up comment text");
  gold->add_option("--project", o.project, "project id for --store");
  gold->add_option("-o,--output", o.output, "output file (default stdout)");

  auto* experiment = app.add_subcommand("experiment", "run the cross-validated grid and print the report");
  experiment->add_option("gold", o.input, "gold JSONL")->required()->check(CLI::ExistingFile);
  experiment->add_option("config", o.second, "grid config (INI)")->required()->check(CLI::ExistingFile);
  experiment->add_option("--seed", o.seed, "fold seed (overrides the config)");
  experiment->add_option("--format", o.format, "csv or table")->check(CLI::IsMember({"csv", "table"}));
  experiment->add_option("--workers", o.workers, "parallel cells (0 = hardware threads)");
  experiment->add_option("-o,--output", o.output, "output file (default stdout)");

  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  serve->add_option("--store", o.store, "project store directory")->required();
  serve->add_option("--host", o.host, "bind address");
  serve->add_option("--port", o.port, "port (0 = any free port)");
  serve->add_option("--secret", o.secret, "shared secret; enables token auth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (gold->parsed() && !o.store.empty() && o.project.empty()) {
    std::cerr << "gold: --store needs --project\n";
    return kUsage;
  }

  try {
    if (ingest->parsed()) return run_ingest(o);
    if (exp->parsed()) return run_export(o);
    if (iaa->parsed()) return run_iaa(o);
    if (gold->parsed()) return run_gold(o);
    if (experiment->parsed()) return run_experiment_cmd(o);
    if (serve->parsed()) return run_serve(o);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.name() << ": " << e.what() << "\n";
    if (!e.details().empty()) std::cerr << "details: " << e.details().dump() << "\n";
    return e.code() == Errc::io_error || e.code() == Errc::bind_failure ? kInternal : kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
