#pragma once

#include "locmis/bounds.hpp"
#include "locmis/core.hpp"
#include "locmis/dataset.hpp"
#include "locmis/experiment.hpp"
#include "locmis/functions.hpp"
#include "locmis/gae.hpp"
#include "locmis/hard_instance.hpp"
#include "locmis/histogram.hpp"
#include "locmis/kernel.hpp"
#include "locmis/local_errors.hpp"
#include "locmis/lqr.hpp"
#include "locmis/mml.hpp"
#include "locmis/rollout.hpp"
#include "locmis/selector.hpp"
#include "locmis/spi.hpp"
#include "locmis/tabular.hpp"
#include "locmis/tabular_io.hpp"
