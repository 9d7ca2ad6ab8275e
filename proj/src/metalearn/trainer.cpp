#include <cmath>

#include <spdlog/spdlog.h>

#include "graphgrade/metalearn.hpp"
#include "graphgrade/random.hpp"

namespace graphgrade::meta {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e;  // episode stream id for training

}  // namespace

Checkpoint meta_train(const TrainConfig& config, const DatasetManifest& manifest,
                      const std::filesystem::path& dataset_root, const EpochCallback& on_epoch) {
  config.spec.validate();
  config.outer.validate();
  ModelOptions options = config.model;
  options.n_way = config.spec.n_way;
  options.validate();
  config.encoder.validate();

  const auto pool = episodes::EpisodePool::from_manifest(manifest, pool_options_for(config.encoder));
  const auto split = episodes::split_pool(pool, config.split);
  if (split.train.feasible(config.spec).empty()) {
    throw episodes::NoFeasibleAssignment("no assignment is feasible for " + std::to_string(config.spec.n_way) +
                                         "-way " + std::to_string(config.spec.k_shot) + "-shot training");
  }

  Checkpoint ckpt;
  ckpt.model = std::make_unique<MetaModel>(options, config.encoder, config.seed);
  MetaModel& model = *ckpt.model;
  ckpt.record.seed = config.seed;
  ckpt.record.spec = config.spec;
  ckpt.record.outer = config.outer;
  ckpt.record.split = config.split;
  ckpt.record.split_mode = split.mode();

  const FeatureStore features = FeatureStore::load(manifest, dataset_root, model.encoder());
  nn::Adam adam(model.trainable_params(), nn::AdamConfig{config.outer.beta});
  const std::uint64_t stream = derive_seed(config.seed, kTrainStream);
  const int per_epoch = config.outer.episodes_per_epoch;

  auto episode_at = [&](long index) {
    return episodes::sample_indexed(split.train, config.spec, stream, static_cast<std::uint64_t>(index));
  };

  if (config.log_initial) {
    EpochLog log{0, 0.0, 0.0};
    for (int i = 0; i < per_epoch; ++i) {
      const EpisodeOutcome out = episode_loss(model, features.tensors(episode_at(i), model.encoder()));
      log.mean_loss += out.loss / per_epoch;
      log.mean_accuracy += out.accuracy / per_epoch;
    }
    ckpt.record.curve.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  model.params().zero_grad();
  for (int epoch = 1; epoch <= config.outer.epochs; ++epoch) {
    EpochLog log{epoch, 0.0, 0.0};
    for (int i = 0; i < per_epoch; ++i) {
      const long index = static_cast<long>(epoch - 1) * per_epoch + i;
      const EpisodeOutcome out = episode_step(model, features.tensors(episode_at(index), model.encoder()));
      if (!std::isfinite(out.loss)) {
        throw DivergenceError("training loss is not finite at epoch " + std::to_string(epoch));
      }
      log.mean_loss += out.loss / per_epoch;
      log.mean_accuracy += out.accuracy / per_epoch;
      if ((i + 1) % config.outer.meta_batch == 0 || i + 1 == per_epoch) {
        adam.step();
        model.params().zero_grad();
      }
    }
    for (const nn::Parameter* p : model.params().all()) {
      if (!p->value.allFinite()) throw DivergenceError("parameter '" + p->name + "' is not finite");
    }
    ckpt.record.curve.push_back(log);
    ckpt.record.epochs_completed = epoch;
    spdlog::debug("epoch {} loss {:.4f} accuracy {:.4f}", epoch, log.mean_loss, log.mean_accuracy);
    if (on_epoch) on_epoch(log);
  }
  return ckpt;
}

}  // namespace graphgrade::meta
