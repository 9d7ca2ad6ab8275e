#include <fstream>

#include "graphgrade/dataset.hpp"
#include "graphgrade/metalearn.hpp"

namespace graphgrade::meta {

using nlohmann::json;

namespace {

json spec_json(const episodes::EpisodeSpec& s) {
  return {{"n_way", s.n_way}, {"k_shot", s.k_shot}, {"q_per_class", s.q_per_class}};
}

episodes::EpisodeSpec spec_from(const json& j) {
  episodes::EpisodeSpec s{j.at("n_way").get<int>(), j.at("k_shot").get<int>(), j.value("q_per_class", 1)};
  s.validate();
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir) {
  if (!checkpoint.model) throw std::invalid_argument("checkpoint has no model");
  const MetaModel& model = *checkpoint.model;
  const TrainingRecord& r = checkpoint.record;
  json curve = json::array();
  for (const auto& e : r.curve) {
    curve.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"mean_accuracy", e.mean_accuracy}});
  }
  json params = json::array();
  for (const nn::Parameter* p : model.params().all()) {
    std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", data}});
  }
  const json doc = {
      {"format_version", Checkpoint::kFormatVersion},
      {"algorithm", to_string(model.algorithm())},
      {"seed", model.seed()},
      {"model", to_json(model.options())},
      {"encoder", encoder::to_json(model.encoder().config())},
      {"record",
       {{"seed", r.seed},
        {"spec", spec_json(r.spec)},
        {"outer",
         {{"beta", r.outer.beta},
          {"episodes_per_epoch", r.outer.episodes_per_epoch},
          {"epochs", r.outer.epochs},
          {"meta_batch", r.outer.meta_batch}}},
        {"split",
         {{"disjoint", r.split.disjoint},
          {"eval_fraction", r.split.eval_fraction},
          {"min_cell_for_split", r.split.min_cell_for_split},
          {"seed", r.split.seed}}},
        {"split_mode", r.split_mode},
        {"epochs_completed", r.epochs_completed},
        {"curve", curve}}},
      {"params", params}};
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "checkpoint.json", doc.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "checkpoint.json" : dir;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const json doc = json::parse(in);
  const int version = doc.at("format_version").get<int>();
  if (version != Checkpoint::kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.model = std::make_unique<MetaModel>(model_options_from_json(doc.at("model")),
                                           encoder::encoder_config_from_json(doc.at("encoder")),
                                           doc.at("seed").get<std::uint64_t>());
  std::size_t loaded = 0;
  for (const auto& p : doc.at("params")) {
    nn::Parameter& target = ckpt.model->params().at(p.at("name").get<std::string>());
    const auto rows = p.at("rows").get<nn::Index>();
    const auto cols = p.at("cols").get<nn::Index>();
    const auto data = p.at("data").get<std::vector<double>>();
    if (rows != target.value.rows() || cols != target.value.cols() ||
        static_cast<nn::Index>(data.size()) != rows * cols) {
      throw std::runtime_error("checkpoint parameter '" + target.name + "' has the wrong shape");
    }
    target.value = Eigen::Map<const nn::Mat>(data.data(), rows, cols);
    ++loaded;
  }
  if (loaded != ckpt.model->params().all().size()) {
    throw std::runtime_error("checkpoint is missing parameters");
  }
  const json& r = doc.at("record");
  ckpt.record.seed = r.at("seed").get<std::uint64_t>();
  ckpt.record.spec = spec_from(r.at("spec"));
  const json& outer = r.at("outer");
  ckpt.record.outer = {outer.at("beta").get<double>(), outer.at("episodes_per_epoch").get<int>(),
                       outer.at("epochs").get<int>(), outer.value("meta_batch", 1)};
  const json& split = r.at("split");
  ckpt.record.split = {split.at("disjoint").get<bool>(), split.at("eval_fraction").get<double>(),
                       split.at("min_cell_for_split").get<int>(), split.at("seed").get<std::uint64_t>()};
  ckpt.record.split_mode = r.value("split_mode", std::string());
  ckpt.record.epochs_completed = r.value("epochs_completed", 0);
  for (const auto& e : r.at("curve")) {
    ckpt.record.curve.push_back(
        {e.at("epoch").get<int>(), e.at("mean_loss").get<double>(), e.at("mean_accuracy").get<double>()});
  }
  return ckpt;
}

}  // namespace graphgrade::meta
