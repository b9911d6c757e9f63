#pragma once

#include "mmsem/assembly.hpp"
#include "mmsem/basis.hpp"
#include "mmsem/errors.hpp"
#include "mmsem/mesh.hpp"
#include "mmsem/problem.hpp"
#include "mmsem/quadrature.hpp"
#include "mmsem/solver.hpp"
#include "mmsem/topology.hpp"
#include "mmsem/verification.hpp"
