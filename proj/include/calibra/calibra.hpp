#pragma once

#include "calibra/core.hpp"
#include "calibra/error.hpp"
#include "calibra/estimators.hpp"
#include "calibra/harness.hpp"
#include "calibra/joint.hpp"
#include "calibra/numeric.hpp"
#include "calibra/random.hpp"
#include "calibra/recal.hpp"
#include "calibra/regress.hpp"
#include "calibra/scores.hpp"
#include "calibra/serialize.hpp"
#include "calibra/synth.hpp"
#include "calibra/version.hpp"
