#pragma once

#include "dsgc/autodiff.hpp"
#include "dsgc/config.hpp"
#include "dsgc/encoders.hpp"
#include "dsgc/errors.hpp"
#include "dsgc/experiment.hpp"
#include "dsgc/graph.hpp"
#include "dsgc/loss.hpp"
#include "dsgc/optim.hpp"
#include "dsgc/poincare.hpp"
#include "dsgc/report.hpp"
#include "dsgc/samplers.hpp"
