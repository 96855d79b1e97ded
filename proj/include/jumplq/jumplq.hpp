#pragma once

#include "jumplq/core.hpp"
#include "jumplq/model.hpp"
#include "jumplq/linalg.hpp"
#include "jumplq/riccati.hpp"
#include "jumplq/stability.hpp"
#include "jumplq/care.hpp"
#include "jumplq/bsde.hpp"
#include "jumplq/policy.hpp"
#include "jumplq/game.hpp"
#include "jumplq/sim.hpp"
#include "jumplq/io.hpp"
#include "jumplq/cli.hpp"
