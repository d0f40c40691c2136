#pragma once

#include "sml/activations.hpp"
#include "sml/baselines.hpp"
#include "sml/checkpoint.hpp"
#include "sml/data.hpp"
#include "sml/errors.hpp"
#include "sml/evaluation.hpp"
#include "sml/experiments.hpp"
#include "sml/gradcheck.hpp"
#include "sml/matrix.hpp"
#include "sml/mf.hpp"
#include "sml/optimizer.hpp"
#include "sml/report_io.hpp"
#include "sml/rng.hpp"
#include "sml/trainer.hpp"
#include "sml/transfer.hpp"
