#pragma once

#include "scm/activations.hpp"
#include "scm/builder.hpp"
#include "scm/complexity.hpp"
#include "scm/config.hpp"
#include "scm/dataset.hpp"
#include "scm/error.hpp"
#include "scm/model.hpp"
#include "scm/numerics.hpp"
#include "scm/random.hpp"
#include "scm/serialize.hpp"
#include "scm/pipeline.hpp"
