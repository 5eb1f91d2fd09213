#pragma once

#include "hllsh/analysis.hpp"
#include "hllsh/errors.hpp"
#include "hllsh/families.hpp"
#include "hllsh/harness.hpp"
#include "hllsh/index.hpp"
#include "hllsh/io.hpp"
#include "hllsh/planner.hpp"
#include "hllsh/serialize.hpp"
