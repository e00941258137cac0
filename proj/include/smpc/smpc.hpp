#pragma once

#include "smpc/adaptive.hpp"
#include "smpc/errors.hpp"
#include "smpc/io.hpp"
#include "smpc/linalg.hpp"
#include "smpc/log.hpp"
#include "smpc/model.hpp"
#include "smpc/mpc.hpp"
#include "smpc/offline.hpp"
#include "smpc/qp.hpp"
#include "smpc/rng.hpp"
#include "smpc/roa.hpp"
#include "smpc/sim.hpp"
#include "smpc/threading.hpp"
