#include "care/cli.hpp"

#include <pthread.h>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "care/config.hpp"
#include "care/counterfactual.hpp"
#include "care/eval.hpp"
#include "care/pipeline.hpp"
#include "care/service.hpp"
#include "care/signal_io.hpp"
#include "care/synthetic.hpp"
#include "care/text.hpp"
#include "csv.hpp"

namespace care::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::MissingArtifact:
    case ErrorCode::BindFailure: return 2;
    case ErrorCode::RemoteUnavailable:
    case ErrorCode::Timeout: return 3;
    default: return 1;
  }
}

namespace {

struct Globals {
  std::string config;
  std::string store;
  std::string artifacts;
  std::string out;
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig c;
  if (!g.config.empty()) {
    c = read_pipeline_config(g.config);
  } else {
    const fs::path data = CARE_DATA_DIR;
    if (fs::exists(data / "corpus.jsonl")) c.paths.corpus = (data / "corpus.jsonl").string();
    if (fs::exists(data / "scp_lexicon.json")) c.paths.lexicon = (data / "scp_lexicon.json").string();
    if (fs::exists(data / "descriptors.json")) c.paths.descriptor_map = (data / "descriptors.json").string();
  }
  if (!g.store.empty()) c.paths.store = g.store;
  if (!g.artifacts.empty()) c.paths.artifacts = g.artifacts;
  return c;
}

void emit(const json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << j.dump(2) << "\n";
  } else {
    write_json_file(out_path, j);
  }
}

std::map<std::string, BiomarkerVector> load_or_encode(const PipelineConfig& cfg) {
  const auto table = fs::path(cfg.paths.artifacts) / "biomarkers.json";
  if (fs::exists(table)) return biomarker_table_from_json(read_json_file(table));
  RecordStore store(cfg.paths.store);
  return encode_store(store, WaveformEncoder(cfg.schema));
}

std::map<std::string, std::string> read_labels(const fs::path& path) {
  std::map<std::string, std::string> labels;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open labels " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".csv") {
    const auto t = csv::parse(ss.str());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      if (row.size() < 2) throw Error(ErrorCode::MalformedCsv, "labels line " + std::to_string(t.line_numbers[i]));
      if (i == 0 && text::trim(row[0]) == "record_id") continue;
      labels[text::trim(row[0])] = text::trim(row[1]);
    }
    return labels;
  }
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto id = j.at("record_id").get<std::string>();
      for (const char* key : {"gold_outcome", "label", "gold_answer"}) {
        if (j.contains(key)) {
          labels[id] = j.at(key).get<std::string>();
          break;
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "labels line " + std::to_string(n) + ": " + e.what());
    }
  }
  return labels;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = text::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int serve(const PipelineConfig& cfg, const std::string& bind, std::ostream& err) {
  std::string host = "127.0.0.1";
  int port = 8080;
  if (!bind.empty()) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::UsageError, "--bind expects host:port");
    host = bind.substr(0, colon);
    try {
      port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::UsageError, "bad port in --bind " + bind);
    }
  }
  Service service(load_handle(cfg));
  service.bind(host, port);

  // SIGINT/SIGTERM stop the server; SIGHUP reloads artifacts and swaps the handle.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGHUP);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread watcher([&] {
    for (;;) {
      int sig = 0;
      if (sigwait(&set, &sig) != 0) continue;
      if (sig == SIGHUP) {
        try {
          service.swap(load_handle(cfg));
          err << "reloaded artifacts\n";
        } catch (const std::exception& e) {
          err << "reload failed: " << e.what() << "\n";
        }
        continue;
      }
      service.stop();
      return;
    }
  });
  err << "listening on " << host << ":" << service.port() << "\n";
  service.serve();
  watcher.join();
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ECG causal reasoning pipeline", "carex"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (JSON)");
  app.add_option("--store", g.store, "Record store directory (overrides config)");
  app.add_option("--artifacts", g.artifacts, "Artifact directory (overrides config)");

  auto* ingest = app.add_subcommand("ingest", "Import CSV or WFDB records into the store");
  std::vector<std::string> ingest_paths;
  std::string format, leads, record_id, patient_id;
  double rate = 500.0, scale = 1.0;
  std::optional<double> acquired_at;
  ingest->add_option("paths", ingest_paths, "CSV files or WFDB .hea headers")->required();
  ingest->add_option("--format", format, "csv or wfdb (default: by extension)");
  ingest->add_option("--rate", rate, "CSV sampling rate in Hz");
  ingest->add_option("--leads", leads, "CSV lead names, comma separated");
  ingest->add_option("--scale", scale, "CSV value scale to millivolts");
  ingest->add_option("--record-id", record_id, "Record id (single input only)");
  ingest->add_option("--patient-id", patient_id, "Patient id");
  ingest->add_option("--acquired-at", acquired_at, "Acquisition time, seconds since epoch");

  auto* encode = app.add_subcommand("encode", "Extract biomarker vectors for every stored record");
  std::string features, out_path;
  encode->add_option("--features", features, "Precomputed feature CSV instead of waveform extraction");
  encode->add_option("--out", out_path, "Write JSON here instead of stdout");

  auto* fit = app.add_subcommand("fit", "Fit discretizer, structure and CPTs");
  std::string labels_path;
  fit->add_option("--labels", labels_path, "Outcome labels: CSV record_id,label or JSON Lines")->required();
  fit->add_option("--out", out_path, "Write JSON here instead of stdout");

  auto* index = app.add_subcommand("index", "Build the knowledge index from a corpus");
  std::string corpus;
  index->add_option("--corpus", corpus, "Corpus JSON Lines (default: config)");
  index->add_option("--out", out_path, "Write JSON here instead of stdout");

  auto* infer = app.add_subcommand("infer", "Posterior over the outcome for a record");
  std::string rid;
  infer->add_option("record_id", rid)->required();
  infer->add_option("--out", out_path, "Write JSON here instead of stdout");

  auto* cf = app.add_subcommand("counterfactual", "Minimal evidence edit reaching a target outcome");
  std::string target;
  int max_edits = 0;
  cf->add_option("record_id", rid)->required();
  cf->add_option("--target", target, "Target outcome state")->required();
  cf->add_option("--max-edits", max_edits, "1 or 2 (default: config)");
  cf->add_option("--out", out_path, "Write JSON here instead of stdout");

  auto* explain = app.add_subcommand("explain", "Grounded explanation for a record");
  std::string query;
  bool no_fallback = false;
  explain->add_option("record_id", rid)->required();
  explain->add_option("--query", query, "Clinician query")->required();
  explain->add_flag("--no-fallback", no_fallback, "Disable the RAG-only fallback");
  explain->add_option("--out", out_path, "Write JSON here instead of stdout");

  auto* evaluate = app.add_subcommand("evaluate", "Run the ablation ladder over a manifest");
  std::string manifest, variants = "A0,A1,A2,A3,A4", report_dir;
  evaluate->add_option("--manifest", manifest, "Evaluation manifest (JSON Lines)")->required();
  evaluate->add_option("--variants", variants, "Comma-separated subset of A0..A4");
  evaluate->add_option("--out", report_dir, "Report directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string spec_path, dump_spec;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  synth->add_option("--spec", spec_path, "Synthetic spec JSON (default: built-in)");
  synth->add_option("-n", n, "Number of cases");
  synth->add_option("--seed", seed, "Dataset seed (default: config seed)");
  synth->add_option("--out", report_dir, "Output directory");
  synth->add_option("--dump-spec", dump_spec, "Write the effective spec JSON here");

  auto* srv = app.add_subcommand("serve", "Serve the JSON API");
  std::string bind;
  srv->add_option("--bind", bind, "host:port (default 127.0.0.1:8080)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const auto cfg = load_config(g);

    if (*ingest) {
      if (!record_id.empty() && ingest_paths.size() != 1) throw Error(ErrorCode::UsageError, "--record-id needs exactly one input");
      RecordStore store(cfg.paths.store);
      json stored = json::array();
      for (const auto& p : ingest_paths) {
        const fs::path path(p);
        const auto fmt = format.empty() ? (path.extension() == ".hea" ? "wfdb" : "csv") : format;
        EcgRecord rec;
        if (fmt == "wfdb") {
          rec = read_wfdb16_record(path);
          if (!record_id.empty()) rec.record_id = record_id;
        } else if (fmt == "csv") {
          CsvReadOptions opts;
          opts.sampling_rate_hz = rate;
          opts.scale = scale;
          opts.lead_names = split_list(leads);
          if (!record_id.empty()) opts.record_id = record_id;
          rec = read_csv_record(path, opts);
        } else {
          throw Error(ErrorCode::UnsupportedFormat, "format " + fmt);
        }
        if (!patient_id.empty()) rec.patient_id = patient_id;
        if (acquired_at) rec.acquired_at = *acquired_at;
        stored.push_back(store.store(rec));
      }
      emit(json{{"stored", stored}}, "", out);
      return 0;
    }

    if (*encode) {
      RecordStore store(cfg.paths.store);
      std::map<std::string, BiomarkerVector> table;
      if (!features.empty()) {
        table = encode_store(store, FeatureTableEncoder(read_feature_csv(features), cfg.schema));
      } else {
        table = encode_store(store, WaveformEncoder(cfg.schema));
      }
      const auto j = to_json(table);
      write_json_file(fs::path(cfg.paths.artifacts) / "biomarkers.json", j);
      emit(j, out_path, out);
      return 0;
    }

    if (*fit) {
      const auto table = load_or_encode(cfg);
      std::vector<BiomarkerVector> vectors;
      for (const auto& [id, v] : table) vectors.push_back(v);
      const auto r = fit_model(vectors, read_labels(labels_path), cfg);
      save_artifacts(cfg.paths.artifacts, r.discretizer, r.network);
      emit(json{{"discretizer", to_json(r.discretizer)}, {"network", to_json(r.network)}, {"warnings", r.warnings}},
           out_path, out);
      return 0;
    }

    if (*index) {
      const auto path = corpus.empty() ? cfg.paths.corpus : corpus;
      if (path.empty()) throw Error(ErrorCode::UsageError, "no corpus given (--corpus or paths.corpus)");
      const auto idx = build_index(read_corpus_jsonl(path));
      save_index(cfg.paths.artifacts, idx);
      emit(json{{"documents", idx.docs.size()}, {"vocabulary", idx.vocabulary.size()}, {"warnings", idx.warnings}},
           out_path, out);
      return 0;
    }

    if (*infer) {
      const auto h = load_handle(cfg);
      emit(to_json(infer_posterior(h->network, h->evidence(rid), cfg.outcome)), out_path, out);
      return 0;
    }

    if (*cf) {
      const auto h = load_handle(cfg);
      const auto e = h->evidence(rid);
      const auto r = find_counterfactual(h->network, e, cfg.outcome, target,
                                         max_edits > 0 ? max_edits : cfg.counterfactual_max_edits);
      emit(to_json(r, h->network, e), out_path, out);
      return 0;
    }

    if (*explain) {
      const auto h = load_handle(cfg);
      std::optional<bool> fallback;
      if (no_fallback) fallback = false;
      const auto c = explain_record(*h, rid, query, fallback);
      emit(audit_json(c.message, c.payload), out_path, out);
      return 0;
    }

    if (*evaluate) {
      const auto h = load_handle(cfg);
      std::ifstream in(manifest);
      if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + manifest);
      std::stringstream ss;
      ss << in.rdbuf();
      const auto examples = parse_eval_manifest(ss.str(), [&](const std::string& id) { return h->biomarkers(id); });
      std::vector<AblationConfig> ladder;
      for (const auto& name : split_list(variants)) ladder.push_back(ablation_by_name(name));
      EvalContext ctx;
      ctx.network = &h->network;
      ctx.discretizer = &h->discretizer;
      ctx.index = h->index.get();
      ctx.retriever = h->retriever.get();
      ctx.outcome = cfg.outcome;
      ctx.lexicon = h->lexicon;
      ctx.descriptors = h->descriptors;
      ctx.generator = cfg.generator;
      ctx.k = cfg.retrieval.k;
      ctx.top_m = cfg.retrieval.top_m;
      ctx.crc_top_n = cfg.crc_top_n;
      ctx.max_edits = cfg.counterfactual_max_edits;
      ctx.match_threshold = cfg.retrieval.match_threshold;
      ctx.hr_threshold = cfg.verifier.hr_threshold;
      ctx.scp_threshold = cfg.scp_threshold;
      ctx.config_fingerprint = config_fingerprint(cfg);
      const auto reports = run_ablation(examples, ctx, ladder);
      emit_reports(reports, report_dir);
      json summary = json::array();
      for (const auto& r : reports) {
        const auto j = to_json(r);
        summary.push_back(json{{"variant", r.variant.name}, {"aggregates", j.at("aggregates")}});
      }
      emit(json{{"reports", report_dir}, {"variants", summary}}, "", out);
      return 0;
    }

    if (*synth) {
      auto spec = spec_path.empty() ? default_synthetic_spec() : synthetic_spec_from_json(read_json_file(spec_path));
      if (!dump_spec.empty()) write_json_file(dump_spec, to_json(spec));
      if (report_dir.empty()) {
        if (dump_spec.empty()) throw Error(ErrorCode::UsageError, "synth needs --out or --dump-spec");
        return 0;
      }
      const auto entries = generate_dataset(spec, n, seed.value_or(cfg.seed), report_dir);
      emit(json{{"cases", entries.size()},
                {"store", (fs::path(report_dir) / "store").string()},
                {"manifest", (fs::path(report_dir) / "manifest.jsonl").string()}},
           "", out);
      return 0;
    }

    if (*srv) return serve(cfg, bind, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (e.code() == ErrorCode::UsageError) err << "\n" << app.help();
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 1;
}

}  // namespace care::cli
