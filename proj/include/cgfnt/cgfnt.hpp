#pragma once

#include "cgfnt/asymptotics.hpp"
#include "cgfnt/calibration.hpp"
#include "cgfnt/competitors.hpp"
#include "cgfnt/distributions.hpp"
#include "cgfnt/ecgf.hpp"
#include "cgfnt/error.hpp"
#include "cgfnt/io.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/power.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/spec_grammar.hpp"
#include "cgfnt/standardize.hpp"
#include "cgfnt/verify.hpp"
