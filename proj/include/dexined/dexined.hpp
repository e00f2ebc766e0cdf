#pragma once

// Everything except the command line (dexined/cli.hpp).
#include "dexined/augment.hpp"
#include "dexined/checkpoint.hpp"
#include "dexined/config.hpp"
#include "dexined/dataset.hpp"
#include "dexined/error.hpp"
#include "dexined/eval.hpp"
#include "dexined/gradcheck.hpp"
#include "dexined/hash.hpp"
#include "dexined/image.hpp"
#include "dexined/layers.hpp"
#include "dexined/loss.hpp"
#include "dexined/model.hpp"
#include "dexined/ops.hpp"
#include "dexined/optim.hpp"
#include "dexined/parallel.hpp"
#include "dexined/synthetic.hpp"
#include "dexined/tape.hpp"
#include "dexined/tensor.hpp"
#include "dexined/train.hpp"
#include "dexined/train_config.hpp"
