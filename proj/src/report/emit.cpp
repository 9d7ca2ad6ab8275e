#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "graphgrade/dataset.hpp"
#include "graphgrade/report.hpp"

namespace graphgrade::report {

using nlohmann::json;

namespace {

const char* kResultsHeader = "model,n_way,k_shot,episodes,mean_pct,std_pct,failures";

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void put_text(cv::Mat& img, const std::string& text, cv::Point at, double scale = 0.5) {
  cv::putText(img, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
}

}  // namespace

Format format_from_string(const std::string& text) {
  if (text == "csv") return Format::csv;
  if (text == "json") return Format::json;
  if (text == "png") return Format::png;
  throw std::invalid_argument("unknown report format '" + text + "'");
}

void write_results_csv(const std::vector<ResultsRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.model) << ',' << r.n_way << ',' << r.k_shot << ',' << r.episodes << ',' << fixed2(r.mean_pct)
        << ',' << (r.std_pct ? fixed2(*r.std_pct) : "") << ',' << r.failures << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<ResultsRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kResultsHeader)) {
    throw std::runtime_error("results file " + path.string() + " has an unexpected header");
  }
  std::vector<ResultsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw std::runtime_error("malformed results row: " + line);
    ResultsRow r;
    r.model = f[0];
    r.n_way = std::stoi(f[1]);
    r.k_shot = std::stoi(f[2]);
    r.episodes = std::stoi(f[3]);
    r.mean_pct = std::stod(f[4]);
    if (!f[5].empty()) r.std_pct = std::stod(f[5]);
    r.failures = std::stoi(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

bool is_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  return in && std::getline(in, line) && split_csv_line(line) == split_csv_line(kResultsHeader);
}

json to_json(const EvalResult& r) {
  json episodes = json::array();
  for (const auto& e : r.episodes) {
    episodes.push_back({{"assignment", e.module_id + "/" + e.assignment_id},
                        {"accuracy", e.accuracy},
                        {"failures", e.failures},
                        {"true_grades", e.true_grades},
                        {"predicted_grades", e.predicted_grades}});
  }
  return {{"model", r.model},
          {"n_way", r.spec.n_way},
          {"k_shot", r.spec.k_shot},
          {"q_per_class", r.spec.q_per_class},
          {"episodes", r.n_episodes},
          {"mean", r.mean},
          {"std", optional_json(r.std)},
          {"ci95_half_width", optional_json(r.ci95_half)},
          {"failures", r.failures},
          {"seed", r.seed},
          {"split_mode", r.split_mode},
          {"modality", r.modality},
          {"per_criterion_accuracy", r.per_criterion_accuracy},
          {"per_episode", episodes}};
}

std::vector<std::filesystem::path> emit_comparison_charts(const std::vector<ResultsRow>& rows,
                                                          const std::filesystem::path& out_dir) {
  std::map<std::pair<int, int>, std::pair<const ResultsRow*, const ResultsRow*>> best;
  for (const auto& r : rows) {
    auto& [meta, vllm] = best[{r.n_way, r.k_shot}];
    const ResultsRow*& slot = is_vllm_model(r.model) ? vllm : meta;
    if (!slot || r.mean_pct > slot->mean_pct) slot = &r;
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [key, pair] : best) {
    const int width = 480;
    const int height = 360;
    const int top = 50;
    const int bottom = 300;
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    put_text(img, std::to_string(key.first) + "-way " + std::to_string(key.second) + "-shot accuracy (%)", {20, 28},
             0.6);
    cv::line(img, {60, bottom}, {width - 30, bottom}, cv::Scalar(0, 0, 0), 1);
    cv::line(img, {60, top}, {60, bottom}, cv::Scalar(0, 0, 0), 1);
    for (int tick = 0; tick <= 100; tick += 25) {
      const int y = bottom - (bottom - top) * tick / 100;
      cv::line(img, {56, y}, {60, y}, cv::Scalar(0, 0, 0), 1);
      put_text(img, std::to_string(tick), {22, y + 5}, 0.4);
    }
    const ResultsRow* bars[2] = {pair.first, pair.second};
    const cv::Scalar colors[2] = {cv::Scalar(180, 110, 40), cv::Scalar(40, 120, 220)};
    for (int i = 0; i < 2; ++i) {
      if (!bars[i]) continue;
      const int x0 = 110 + i * 170;
      const double pct = std::clamp(bars[i]->mean_pct, 0.0, 100.0);
      const int y = bottom - static_cast<int>((bottom - top) * pct / 100.0);
      cv::rectangle(img, {x0, y}, {x0 + 110, bottom}, colors[i], cv::FILLED);
      put_text(img, fixed2(bars[i]->mean_pct), {x0 + 25, y - 8});
      put_text(img, bars[i]->model.substr(0, 18), {x0, bottom + 22}, 0.45);
    }
    const auto path = out_dir / ("compare_" + std::to_string(key.first) + "way_" + std::to_string(key.second) +
                                 "shot.png");
    std::vector<uchar> png;
    if (!cv::imencode(".png", img, png)) throw std::runtime_error("cannot encode chart " + path.string());
    write_file_atomic(path, std::string(png.begin(), png.end()));
    written.push_back(path);
  }
  return written;
}

std::vector<std::filesystem::path> emit_report(const std::vector<EvalResult>& results,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<Format>& formats, const std::string& stem) {
  if (formats.empty()) throw std::invalid_argument("no report formats requested");
  if (results.empty()) throw std::invalid_argument("no results to report");
  std::filesystem::create_directories(out_dir);
  std::vector<ResultsRow> rows;
  for (const auto& r : results) rows.push_back(to_row(r));
  std::vector<std::filesystem::path> written;
  auto wants = [&](Format f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };

  if (wants(Format::csv)) {
    write_results_csv(rows, out_dir / (stem + ".csv"));
    written.push_back(out_dir / (stem + ".csv"));
    std::ostringstream ablation;
    bool any = false;
    ablation << "model,spec,modality,mean_pct,std_pct\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].modality.empty()) continue;
      any = true;
      ablation << csv_field(rows[i].model) << ',' << rows[i].n_way << "-way " << rows[i].k_shot << "-shot,"
               << results[i].modality << ',' << fixed2(rows[i].mean_pct) << ','
               << (rows[i].std_pct ? fixed2(*rows[i].std_pct) : "") << '\n';
    }
    if (any) {
      write_file_atomic(out_dir / (stem + "_ablation.csv"), ablation.str());
      written.push_back(out_dir / (stem + "_ablation.csv"));
    }
  }
  if (wants(Format::json)) {
    json doc = {{"results", json::array()}, {"breakdown", json::array()}};
    for (const auto& r : results) doc["results"].push_back(to_json(r));
    for (const auto& c : breakdown_by_assignment(results).cells) {
      doc["breakdown"].push_back({{"model", c.model},
                                  {"assignment", c.module_id + "/" + c.assignment_id},
                                  {"n_way", c.n_way},
                                  {"k_shot", c.k_shot},
                                  {"episodes", c.episodes},
                                  {"mean", c.mean}});
    }
    write_file_atomic(out_dir / (stem + ".json"), doc.dump(2));
    written.push_back(out_dir / (stem + ".json"));
  }
  if (wants(Format::png)) {
    const auto charts = emit_comparison_charts(rows, out_dir);
    written.insert(written.end(), charts.begin(), charts.end());
  }
  return written;
}

}  // namespace graphgrade::report
