#pragma once

// Everything except the command-line front end.

#include "prism/errors.hpp"
#include "prism/numerics/tensor.hpp"
#include "prism/numerics/tape.hpp"
#include "prism/numerics/ops.hpp"
#include "prism/numerics/optim.hpp"
#include "prism/numerics/rng.hpp"
#include "prism/numerics/finite_diff.hpp"
#include "prism/numerics/binio.hpp"
#include "prism/numerics/checkpoint.hpp"
#include "prism/data/record.hpp"
#include "prism/data/split.hpp"
#include "prism/data/dataset_io.hpp"
#include "prism/synth/scm.hpp"
#include "prism/model/layers.hpp"
#include "prism/model/backbone.hpp"
#include "prism/model/batch.hpp"
#include "prism/model/prism_model.hpp"
#include "prism/intervention/losses.hpp"
#include "prism/training/config.hpp"
#include "prism/training/trainer.hpp"
#include "prism/eval/metrics.hpp"
#include "prism/eval/predict.hpp"
#include "prism/eval/protocols.hpp"
#include "prism/eval/experiments.hpp"
