#pragma once

// Small trained models shared by several test files.

#include "mcdrop/dataset.hpp"
#include "mcdrop/train.hpp"

namespace mcdrop::testing {

inline const Splits& small_blobs() {
  static const Splits s = split(synth_blobs(400, 4, 0.4, 2, 3), {.train = 0.6, .val = 0.2, .test = 0.2, .seed = 3});
  return s;
}

struct TrainedModel {
  ModelSpec spec;
  ModelParams params;
};

inline TrainedModel train_small(Variant variant, std::uint64_t seed = 0, Index epochs = 8) {
  const auto& data = small_blobs();
  TrainedModel m{make_model_spec(variant, Backbone::mlp, {2}, 4, {.width = 16}), {}};
  TrainConfig tc;
  tc.optimizer.lr = 1e-2;
  tc.epochs = epochs;
  tc.batch_size = 32;
  tc.kld_weight = 0.01;
  tc.seed = seed;
  m.params = train(m.spec, build_model(m.spec, seed), data.train, data.val, tc).params;
  return m;
}

}  // namespace mcdrop::testing
