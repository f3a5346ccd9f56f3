#pragma once

#include "pbds/controller.hpp"
#include "pbds/ds.hpp"
#include "pbds/dual.hpp"
#include "pbds/errors.hpp"
#include "pbds/io.hpp"
#include "pbds/manifolds.hpp"
#include "pbds/presets.hpp"
#include "pbds/qp.hpp"
#include "pbds/robot.hpp"
#include "pbds/scenario.hpp"
#include "pbds/simulator.hpp"
#include "pbds/task_map.hpp"
#include "pbds/tree.hpp"
