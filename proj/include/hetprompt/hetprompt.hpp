#pragma once

#include "hetprompt/checkpoint.hpp"
#include "hetprompt/config.hpp"
#include "hetprompt/dataset_io.hpp"
#include "hetprompt/encoder.hpp"
#include "hetprompt/eval.hpp"
#include "hetprompt/gradcheck.hpp"
#include "hetprompt/graph.hpp"
#include "hetprompt/hash.hpp"
#include "hetprompt/kmeans.hpp"
#include "hetprompt/metapath_template.hpp"
#include "hetprompt/metrics.hpp"
#include "hetprompt/optim.hpp"
#include "hetprompt/prompt.hpp"
#include "hetprompt/prompt_tune.hpp"
#include "hetprompt/sparse.hpp"
#include "hetprompt/synth.hpp"
#include "hetprompt/tensor.hpp"
