#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "graphgrade/dataset.hpp"
#include "graphgrade/metalearn.hpp"
#include "graphgrade/preprocess.hpp"
#include "graphgrade/report.hpp"
#include "graphgrade/service.hpp"
#include "graphgrade/store.hpp"
#include "graphgrade/synthgen.hpp"
#include "graphgrade/vllm.hpp"

namespace fs = std::filesystem;
using namespace graphgrade;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<report::Format> parse_formats(const std::string& text) {
  std::vector<report::Format> out;
  for (const auto& f : split_list(text)) out.push_back(report::format_from_string(f));
  return out;
}

std::string spec_stem(const std::string& model, const episodes::EpisodeSpec& spec) {
  std::string stem = model + "_" + std::to_string(spec.n_way) + "way_" + std::to_string(spec.k_shot) + "shot";
  for (char& c : stem) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') c = '_';
  }
  return stem;
}

void print_written(const std::vector<fs::path>& files) {
  for (const auto& f : files) std::cout << f.string() << '\n';
}

void print_summary(const report::EvalResult& r) {
  const auto row = report::to_row(r);
  std::cout << row.model << ' ' << row.n_way << "-way " << row.k_shot << "-shot: " << row.mean_pct;
  if (row.std_pct) std::cout << " +/- " << *row.std_pct;
  std::cout << " % over " << row.episodes << " episodes";
  if (r.ci95_half) std::cout << " (95% CI +/- " << *r.ci95_half * 100.0 << ")";
  if (report::is_vllm_model(r.model)) std::cout << ", " << row.failures << " failed replies";
  std::cout << ", split " << r.split_mode << '\n';
}

// ingest

struct IngestArgs {
  fs::path dataset;
  fs::path source;
  std::string module;
  std::string assignment;
};

int run_ingest(const IngestArgs& a) {
  fs::create_directories(a.dataset);
  WriterLock lock(a.dataset);
  const fs::path manifest_path = a.dataset / "manifest.json";
  DatasetManifest manifest = fs::exists(manifest_path) ? load_manifest(manifest_path) : DatasetManifest{};
  const IngestReport r = ingest_images(manifest, a.dataset, a.source, a.module, a.assignment);
  save_manifest(manifest, manifest_path);
  std::cout << "added " << r.added << " submissions, skipped " << r.skipped << '\n';
  return 0;
}

// extract-graphs

struct ExtractArgs {
  fs::path dataset;
  bool interactive = false;
  bool overwrite = false;
  std::string variant = "color";
  std::string ocr_language;
};

int run_extract(const ExtractArgs& a) {
  WriterLock lock(a.dataset);
  DatasetManifest manifest = load_manifest(a.dataset / "manifest.json");
  ExtractOptions options;
  options.variant = variant_from_string(a.variant);
  options.interactive = a.interactive;
  options.overwrite = a.overwrite;
  std::unique_ptr<TextExtractor> engine = std::make_unique<StoredTextExtractor>();
  if (!a.ocr_language.empty()) {
    auto ocr = std::make_unique<TesseractTextExtractor>(a.ocr_language);
    if (ocr->available()) {
      engine = std::move(ocr);
    } else {
      spdlog::warn("no OCR engine for '{}'; texts are left as they are", a.ocr_language);
    }
  }
  const ExtractReport r = extract_graphs(manifest, a.dataset, options, *engine);
  save_manifest(manifest, a.dataset / "manifest.json");
  std::cout << "cropped " << r.cropped << ", no graph " << r.no_graph << ", skipped " << r.skipped << ", texts "
            << r.texts << '\n';
  if (a.interactive) std::cout << "review the proposed boxes with `grader serve`\n";
  return 0;
}

// synth

struct SynthArgs {
  fs::path spec;
  fs::path counts;
  fs::path out;
  std::uint64_t seed = 0;
  int per_grade = 40;
  std::string task = "shift";
  bool no_crops = false;
};

int run_synth(const SynthArgs& a) {
  std::vector<synth::TaskSpec> specs;
  if (!a.spec.empty()) {
    specs = synth::specs_from_json(read_json(a.spec));
  } else if (a.task == "shift") {
    specs = {synth::shift_direction_task()};
  } else if (a.task == "shift_labels") {
    specs = {synth::shift_and_labels_task()};
  } else {
    throw std::invalid_argument("unknown built-in task '" + a.task + "'");
  }
  synth::CountsByTask counts;
  if (!a.counts.empty()) {
    counts = synth::counts_from_json(read_json(a.counts));
  } else {
    for (const auto& s : specs) {
      for (int g = 0; g < (1 << s.m()); ++g) counts[s.task_id][g] = a.per_grade;
    }
  }
  fs::create_directories(a.out);
  WriterLock lock(a.out);
  const auto manifest = synth::generate_dataset(specs, counts, a.seed, a.out, {!a.no_crops});
  std::cout << "generated " << manifest.submission_count() << " submissions in " << a.out.string() << '\n';
  return 0;
}

// stats

int run_stats(const fs::path& dataset, bool as_json) {
  const auto manifest = load_manifest(dataset / "manifest.json");
  const auto rows = compute_stats(manifest);
  if (as_json) {
    json out = json::array();
    for (const auto& r : rows) {
      out.push_back({{"module", r.module_id}, {"assignment", r.assignment_id}, {"grade", r.grade}, {"count", r.count}});
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  }
  std::cout << "module,assignment,grade,criteria,count\n";
  for (const auto& r : rows) {
    const Assignment* a = manifest.find_assignment(r.module_id, r.assignment_id);
    std::cout << r.module_id << ',' << r.assignment_id << ',' << r.grade << ",\""
              << format_criteria(decode_grade(r.grade, a->rubric.m())) << "\"," << r.count << '\n';
  }
  return 0;
}

// train

struct TrainArgs {
  fs::path dataset;
  fs::path out;
  std::string algo = "proto";
  std::string profile = "desk";
  std::string modality = "both";
  std::string distance = "euclidean";
  std::string aggregation = "mean";
  std::string scope = "full";
  int n = 2;
  int k = 1;
  int q = 1;
  int epochs = 1000;
  int episodes_per_epoch = 100;
  int meta_batch = 1;
  double beta = 1e-4;
  double alpha = 0.01;
  double alpha_encoder = 0.001;
  int inner_steps = 100;
  int relation_hidden = 64;
  bool freeze_encoder = false;
  bool shared_split = false;
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;
  int log_every = 10;
};

int run_train(const TrainArgs& a) {
  meta::TrainConfig cfg;
  cfg.model.algorithm = meta::algorithm_from_string(a.algo);
  cfg.model.distance = meta::distance_from_string(a.distance);
  cfg.model.relation_aggregation = meta::aggregation_from_string(a.aggregation);
  cfg.model.relation_hidden = a.relation_hidden;
  cfg.model.inner = {a.alpha, a.alpha_encoder, a.inner_steps, meta::scope_from_string(a.scope)};
  cfg.encoder = encoder::EncoderConfig::for_profile(encoder::profile_from_string(a.profile));
  cfg.encoder.modality = encoder::modality_from_string(a.modality);
  cfg.encoder.trainable = !a.freeze_encoder;
  cfg.spec = {a.n, a.k, a.q};
  cfg.outer = {a.beta, a.episodes_per_epoch, a.epochs, a.meta_batch};
  cfg.split.disjoint = !a.shared_split;
  cfg.split.eval_fraction = a.eval_fraction;
  cfg.split.seed = a.seed;
  cfg.seed = a.seed;
  const auto manifest = load_manifest(a.dataset / "manifest.json");
  const auto ckpt = meta::meta_train(cfg, manifest, a.dataset, [&](const meta::EpochLog& log) {
    if (log.epoch == 0 || log.epoch % std::max(1, a.log_every) == 0 || log.epoch == a.epochs) {
      spdlog::info("epoch {:>4}  loss {:.4f}  accuracy {:.2f}%", log.epoch, log.mean_loss, log.mean_accuracy * 100.0);
    }
  });
  meta::save_checkpoint(ckpt, a.out);
  std::cout << "checkpoint written to " << (a.out / "checkpoint.json").string() << " (split " << ckpt.record.split_mode
            << ")\n";
  return 0;
}

// eval

struct EvalArgs {
  fs::path checkpoint;
  fs::path dataset;
  fs::path out = "reports";
  int n = 2;
  int k = 1;
  int q = 1;
  int episodes = 200;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string formats = "csv,json";
  std::string name;
};

int run_eval(const EvalArgs& a) {
  const auto ckpt = meta::load_checkpoint(a.checkpoint);
  const auto manifest = load_manifest(a.dataset / "manifest.json");
  const episodes::EpisodeSpec spec{a.n, a.k, a.q};
  auto result = report::evaluate_checkpoint(ckpt, manifest, a.dataset, spec, a.episodes, a.seed, a.workers);
  if (!a.name.empty()) result.model = a.name;
  print_summary(result);
  print_written(report::emit_report({result}, a.out, parse_formats(a.formats), spec_stem(result.model, spec)));
  return 0;
}

// vllm-eval

struct VllmArgs {
  fs::path dataset;
  fs::path out = "reports";
  std::string provider = "mock";
  std::string mock_mode = "oracle";
  std::string endpoint;
  std::string model;
  double temperature = 0.1;
  bool no_temperature = false;
  int max_retries = 2;
  int rpm = 0;
  int concurrency = 4;
  int n = 2;
  int k = 1;
  int q = 1;
  int episodes = 200;
  std::uint64_t seed = 0;
  bool held_out = false;
  std::uint64_t split_seed = 0;
  fs::path transcript;
  std::string formats = "csv,json";
};

int run_vllm(const VllmArgs& a) {
  const auto manifest = load_manifest(a.dataset / "manifest.json");
  vllm::ProviderConfig cfg;
  cfg.kind = a.provider == "endpoint" ? vllm::ProviderKind::endpoint : vllm::ProviderKind::mock;
  if (a.provider != "mock" && a.provider != "endpoint") throw std::invalid_argument("provider must be mock or endpoint");
  cfg.endpoint = a.endpoint;
  cfg.temperature = a.temperature;
  cfg.supports_temperature = !a.no_temperature;
  cfg.max_retries = a.max_retries;
  cfg.requests_per_minute = a.rpm;
  std::unique_ptr<vllm::Provider> provider;
  if (cfg.kind == vllm::ProviderKind::mock) {
    cfg.model = a.model.empty() ? "mock-" + a.mock_mode : a.model;
    switch (vllm::mock_mode_from_string(a.mock_mode)) {
      case vllm::MockMode::oracle: provider = vllm::MockProvider::oracle(manifest); break;
      case vllm::MockMode::uniform_random: provider = vllm::MockProvider::uniform_random(a.seed); break;
      case vllm::MockMode::always_malformed: provider = vllm::MockProvider::always_malformed(); break;
      case vllm::MockMode::scripted: throw std::invalid_argument("scripted mocks are for tests only");
    }
  } else {
    if (a.model.empty()) throw std::invalid_argument("--model is required for an endpoint provider");
    cfg.model = a.model;
    provider = std::make_unique<vllm::EndpointProvider>(cfg);
  }
  vllm::VllmEvalOptions options;
  options.concurrency = a.concurrency;
  if (a.held_out) {
    episodes::SplitConfig split;
    split.seed = a.split_seed;
    options.split = split;
  }
  if (!a.transcript.empty()) options.transcript = a.transcript;
  const episodes::EpisodeSpec spec{a.n, a.k, a.q};
  const auto formats = parse_formats(a.formats);
  try {
    const auto result = vllm::evaluate_vllm(*provider, cfg, manifest, a.dataset, spec, a.episodes, a.seed, options);
    print_summary(result);
    print_written(report::emit_report({result}, a.out, formats, spec_stem(result.model, spec)));
  } catch (const report::EvaluationAborted& e) {
    if (!e.partial().episodes.empty()) {
      print_written(report::emit_report({e.partial()}, a.out, formats, spec_stem(e.partial().model, spec) + "_partial"));
    }
    throw;
  }
  return 0;
}

// compare

int run_compare(const std::vector<fs::path>& inputs, const fs::path& out) {
  std::vector<report::ResultsRow> rows;
  for (const auto& path : inputs) {
    if (!report::is_results_csv(path)) {
      spdlog::warn("skipping {}: not a results table", path.string());
      continue;
    }
    const auto part = report::read_results_csv(path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw std::invalid_argument("no results rows found");
  fs::create_directories(out);
  report::write_results_csv(rows, out / "comparison.csv");
  std::cout << (out / "comparison.csv").string() << '\n';
  print_written(report::emit_comparison_charts(rows, out));
  return 0;
}

// grade

struct GradeArgs {
  fs::path checkpoint;
  fs::path dataset;
  std::string support;
  std::string submission;
  fs::path image;
  std::string text;
};

encoder::EncoderInput input_for(const Submission& s, const fs::path& root) {
  encoder::EncoderInput in;
  if (s.graph_crop) in.graph = GraphImage(load_image(root / *s.graph_crop));
  in.text = s.extracted_text;
  return in;
}

int run_grade(const GradeArgs& a) {
  auto ckpt = meta::load_checkpoint(a.checkpoint);
  auto manifest = load_manifest(a.dataset / "manifest.json");
  std::vector<encoder::EncoderInput> support;
  std::vector<int> grades;
  int m = 0;
  for (const auto& id : split_list(a.support)) {
    auto ref = manifest.find_submission(id);
    if (!ref) throw std::invalid_argument("unknown support submission '" + id + "'");
    const Annotation* an = ref->assignment->annotation_for(id);
    if (!an) throw std::invalid_argument("support submission '" + id + "' is not annotated");
    if (m != 0 && m != ref->assignment->rubric.m()) throw std::invalid_argument("support items mix rubrics");
    m = ref->assignment->rubric.m();
    support.push_back(input_for(*ref->submission, a.dataset));
    grades.push_back(an->grade);
  }
  if (support.empty()) throw std::invalid_argument("--support needs at least one submission id");
  encoder::EncoderInput query;
  if (!a.submission.empty()) {
    auto ref = manifest.find_submission(a.submission);
    if (!ref) throw std::invalid_argument("unknown submission '" + a.submission + "'");
    query = input_for(*ref->submission, a.dataset);
  } else if (!a.image.empty()) {
    const cv::Mat image = load_image(a.image);
    if (image.cols == kGraphSize && image.rows == kGraphSize) {
      query.graph = GraphImage(image);
    } else {
      const auto found = extract_graph_region(image);
      const BoundingBox box = found ? found->box : BoundingBox{0, 0, image.cols, image.rows};
      query.graph = crop_resize(image, box).graph;
    }
    query.text = a.text;
  } else {
    throw std::invalid_argument("give --submission or --image");
  }
  const auto p = meta::predict_grade(*ckpt.model, support, grades, query, m);
  json out = {{"grade", p.grade}, {"criteria_vector", p.criteria}, {"class_grades", p.class_grades},
              {"class_probs", p.class_probs}};
  std::cout << out.dump() << '\n';
  return 0;
}

// serve

service::Server* g_server = nullptr;

int run_serve(const fs::path& dataset, int port, const std::string& host, std::string token,
              const std::string& cors) {
  if (token.empty()) {
    if (const char* env = std::getenv("GRADER_TOKEN")) token = env;
  }
  if (token.empty()) spdlog::warn("no GRADER_TOKEN set; the API accepts unauthenticated requests");
  service::Server server({dataset, token, cors, host});
  const int bound = server.bind(port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "serving " << dataset.string() << " on http://" << host << ':' << bound << std::endl;
  server.run();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot grading of hand-drawn graphs"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Add submission images to a dataset");
  c_ingest->add_option("--dataset", ingest.dataset, "Dataset root")->required();
  c_ingest->add_option("--source", ingest.source, "Directory of PNG/JPEG scans")->required()->check(CLI::ExistingDirectory);
  c_ingest->add_option("--module", ingest.module, "Module id")->required();
  c_ingest->add_option("--assignment", ingest.assignment, "Assignment id")->required();

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract-graphs", "Detect, verify and crop graph regions");
  c_extract->add_option("--dataset", extract.dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  c_extract->add_flag("--interactive", extract.interactive, "Leave proposals for review in the annotation service");
  c_extract->add_option("--variant", extract.variant, "color|threshold|threshold_invert|canny");
  c_extract->add_flag("--overwrite", extract.overwrite, "Recrop submissions that already have a crop");
  c_extract->add_option("--ocr", extract.ocr_language, "Fill empty texts with Tesseract in this language");

  SynthArgs synth_args;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  c_synth->add_option("--spec", synth_args.spec, "Task spec JSON")->check(CLI::ExistingFile);
  c_synth->add_option("--counts", synth_args.counts, "Per-grade counts JSON")->check(CLI::ExistingFile);
  c_synth->add_option("--task", synth_args.task, "Built-in task when no spec is given: shift|shift_labels");
  c_synth->add_option("--per-grade", synth_args.per_grade, "Submissions per grade when no counts are given");
  c_synth->add_option("--out", synth_args.out, "Output dataset root")->required();
  c_synth->add_option("--seed", synth_args.seed, "Seed");
  c_synth->add_flag("--no-crops", synth_args.no_crops, "Skip graph extraction");

  fs::path stats_dataset;
  bool stats_json = false;
  auto* c_stats = app.add_subcommand("stats", "Annotated submissions per grade");
  c_stats->add_option("--dataset", stats_dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  c_stats->add_flag("--json", stats_json, "JSON output");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Episodic meta-training");
  c_train->add_option("--algo", train.algo, "proto|matching|relation|fomaml|protofomaml");
  c_train->add_option("--n", train.n, "Classes per episode");
  c_train->add_option("--k", train.k, "Support items per class");
  c_train->add_option("--q", train.q, "Query items per class");
  c_train->add_option("--dataset", train.dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--seed", train.seed, "Seed");
  c_train->add_option("--profile", train.profile, "desk|paper");
  c_train->add_option("--modality", train.modality, "both|graph_only|text_only");
  c_train->add_option("--out", train.out, "Checkpoint directory")->required();
  c_train->add_option("--epochs", train.epochs, "Epochs");
  c_train->add_option("--episodes-per-epoch", train.episodes_per_epoch, "Episodes per epoch");
  c_train->add_option("--meta-batch", train.meta_batch, "Episodes per outer update");
  c_train->add_option("--beta", train.beta, "Outer learning rate (Adam)");
  c_train->add_option("--alpha", train.alpha, "Inner learning rate of the head");
  c_train->add_option("--alpha-encoder", train.alpha_encoder, "Inner learning rate of the encoder");
  c_train->add_option("--inner-steps", train.inner_steps, "Inner gradient steps");
  c_train->add_option("--adapt-scope", train.scope, "full|head_only");
  c_train->add_option("--distance", train.distance, "euclidean|squared_euclidean");
  c_train->add_option("--aggregation", train.aggregation, "Relation class aggregation: mean|sum");
  c_train->add_option("--relation-hidden", train.relation_hidden, "Relation module width");
  c_train->add_flag("--freeze-encoder", train.freeze_encoder, "Train the heads only");
  c_train->add_flag("--shared-split", train.shared_split, "Train and evaluate on the same items");
  c_train->add_option("--eval-fraction", train.eval_fraction, "Held-out fraction per grade cell");
  c_train->add_option("--log-every", train.log_every, "Epochs between progress lines");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out episodes");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory or file")->required()->check(CLI::ExistingPath);
  c_eval->add_option("--dataset", eval.dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--n", eval.n, "Classes per episode");
  c_eval->add_option("--k", eval.k, "Support items per class");
  c_eval->add_option("--q", eval.q, "Query items per class");
  c_eval->add_option("--episodes", eval.episodes, "Episodes");
  c_eval->add_option("--seed", eval.seed, "Seed");
  c_eval->add_option("--out", eval.out, "Report directory");
  c_eval->add_option("--workers", eval.workers, "Parallel episode workers");
  c_eval->add_option("--format", eval.formats, "Comma-separated: csv,json,png");
  c_eval->add_option("--name", eval.name, "Model label in the report");

  VllmArgs va;
  auto* c_vllm = app.add_subcommand("vllm-eval", "Evaluate a vision LLM with in-context examples");
  c_vllm->add_option("--dataset", va.dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  c_vllm->add_option("--provider", va.provider, "mock|endpoint");
  c_vllm->add_option("--mock-mode", va.mock_mode, "oracle|uniform_random|always_malformed");
  c_vllm->add_option("--endpoint", va.endpoint, "Chat-completions URL");
  c_vllm->add_option("--model", va.model, "Model name");
  c_vllm->add_option("--temperature", va.temperature, "Sampling temperature");
  c_vllm->add_flag("--no-temperature", va.no_temperature, "Omit temperature for models that reject it");
  c_vllm->add_option("--max-retries", va.max_retries, "Retries after an unparseable reply");
  c_vllm->add_option("--rpm", va.rpm, "Requests per minute (0 = unlimited)");
  c_vllm->add_option("--concurrency", va.concurrency, "Concurrent episodes");
  c_vllm->add_option("--n", va.n, "Classes per episode");
  c_vllm->add_option("--k", va.k, "Support items per class");
  c_vllm->add_option("--q", va.q, "Query items per class");
  c_vllm->add_option("--episodes", va.episodes, "Episodes");
  c_vllm->add_option("--seed", va.seed, "Seed");
  c_vllm->add_flag("--held-out", va.held_out, "Sample from the held-out side of the default split");
  c_vllm->add_option("--split-seed", va.split_seed, "Split seed with --held-out (use the training seed)");
  c_vllm->add_option("--transcript", va.transcript, "JSON-lines request log");
  c_vllm->add_option("--out", va.out, "Report directory");
  c_vllm->add_option("--format", va.formats, "Comma-separated: csv,json,png");

  std::vector<fs::path> compare_inputs;
  fs::path compare_out = "figs";
  auto* c_compare = app.add_subcommand("compare", "Merge result tables and draw comparison charts");
  c_compare->add_option("--results", compare_inputs, "Result CSV files")->required()->check(CLI::ExistingFile);
  c_compare->add_option("--out", compare_out, "Output directory");

  GradeArgs grade;
  auto* c_grade = app.add_subcommand("grade", "Grade one submission against a support set");
  c_grade->add_option("--checkpoint", grade.checkpoint, "Checkpoint directory or file")->required()->check(CLI::ExistingPath);
  c_grade->add_option("--dataset", grade.dataset, "Dataset holding the support items")->required()->check(CLI::ExistingDirectory);
  c_grade->add_option("--support", grade.support, "Comma-separated annotated submission ids")->required();
  c_grade->add_option("--submission", grade.submission, "Query submission id");
  c_grade->add_option("--image", grade.image, "Query image (224x224 crop or raw scan)")->check(CLI::ExistingFile);
  c_grade->add_option("--text", grade.text, "Query text for --image");

  fs::path serve_dataset;
  int serve_port = 8080;
  std::string serve_host = "127.0.0.1";
  std::string serve_token;
  std::string serve_cors = "*";
  auto* c_serve = app.add_subcommand("serve", "Annotation HTTP API");
  c_serve->add_option("--dataset", serve_dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  c_serve->add_option("--port", serve_port, "Port (0 picks one)");
  c_serve->add_option("--host", serve_host, "Bind address");
  c_serve->add_option("--token", serve_token, "Shared token (default: GRADER_TOKEN)");
  c_serve->add_option("--cors-origin", serve_cors, "Allowed UI origin");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*c_ingest) return run_ingest(ingest);
    if (*c_extract) return run_extract(extract);
    if (*c_synth) return run_synth(synth_args);
    if (*c_stats) return run_stats(stats_dataset, stats_json);
    if (*c_train) return run_train(train);
    if (*c_eval) return run_eval(eval);
    if (*c_vllm) return run_vllm(va);
    if (*c_compare) return run_compare(compare_inputs, compare_out);
    if (*c_grade) return run_grade(grade);
    if (*c_serve) return run_serve(serve_dataset, serve_port, serve_host, serve_token, serve_cors);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
