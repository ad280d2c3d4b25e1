#pragma once

#include "fedstream/cli.hpp"
#include "fedstream/config.hpp"
#include "fedstream/core.hpp"
#include "fedstream/drift.hpp"
#include "fedstream/ensemble_rules.hpp"
#include "fedstream/io.hpp"
#include "fedstream/learners.hpp"
#include "fedstream/local_node.hpp"
#include "fedstream/messages.hpp"
#include "fedstream/rng.hpp"
#include "fedstream/server.hpp"
#include "fedstream/sim.hpp"
#include "fedstream/stats.hpp"
