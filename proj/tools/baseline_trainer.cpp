// Trains the n = 0 baseline on a fixed synthetic set and prints the full
// trajectory as hex floats plus a hash of the final parameters. Built twice:
// with and without PRISM_NO_INTERVENTION. Identical output from both binaries
// means the baseline path does not touch any intervention code.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "prism/data/split.hpp"
#include "prism/eval/experiments.hpp"
#include "prism/synth/scm.hpp"
#include "prism/training/trainer.hpp"

int main(int argc, char** argv) {
  using namespace prism;
  const std::int64_t steps = argc > 1 ? std::atoll(argv[1]) : 200;

  synth::ScmConfig sc;
  sc.genes = 96;
  sc.L = 256;
  sc.seed = 7;
  auto parts = data::split(synth::generate(sc).dataset.records);

  auto cfg = training::TrainConfig::desk(steps);
  cfg.model.states = 0;
  cfg.loss.alpha = 0.0;
  cfg.loss.beta = 0.0;
  cfg.eval_every = 50;

  try {
    auto st = training::train(cfg, parts.train, parts.validation);
    std::printf("step\tlr\tl1\ttotal\tvalidation_mse\n");
    for (const auto& r : st.log)
      std::printf("%lld\t%a\t%a\t%a\t%a\n", static_cast<long long>(r.step), r.lr, r.l1, r.total,
                  r.validation_mse.value_or(-1.0));
    std::printf("final_parameters\t%s\n", eval::checkpoint_hash(*st.model).c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "baseline trainer: %s\n", e.what());
    return 2;
  }
  return 0;
}
