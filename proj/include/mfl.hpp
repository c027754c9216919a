#pragma once

#include "mfl/baselines.hpp"
#include "mfl/csv.hpp"
#include "mfl/emulator.hpp"
#include "mfl/errors.hpp"
#include "mfl/harness.hpp"
#include "mfl/machine.hpp"
#include "mfl/mfl.hpp"
#include "mfl/nn.hpp"
#include "mfl/process.hpp"
#include "mfl/report.hpp"
#include "mfl/rng.hpp"
#include "mfl/serialize.hpp"
#include "mfl/spec_io.hpp"
