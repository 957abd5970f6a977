#pragma once

#include "twpa/analytic.hpp"
#include "twpa/collapse.hpp"
#include "twpa/dynamics.hpp"
#include "twpa/errors.hpp"
#include "twpa/fock.hpp"
#include "twpa/interferometer.hpp"
#include "twpa/lossmodel.hpp"
