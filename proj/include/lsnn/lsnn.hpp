#pragma once

#include "lsnn/errors.hpp"
#include "lsnn/geometry.hpp"
#include "lsnn/network.hpp"
#include "lsnn/batch.hpp"
#include "lsnn/serialization.hpp"
#include "lsnn/mesh.hpp"
#include "lsnn/problem.hpp"
#include "lsnn/diff_ops.hpp"
#include "lsnn/residual_plan.hpp"
#include "lsnn/least_squares.hpp"
#include "lsnn/optimize.hpp"
#include "lsnn/problems.hpp"
#include "lsnn/driver.hpp"
