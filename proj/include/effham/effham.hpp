#pragma once

#include "effham/error.hpp"
#include "effham/types.hpp"
#include "effham/parallel.hpp"
#include "effham/env.hpp"
#include "effham/discretize.hpp"
#include "effham/eig.hpp"
#include "effham/cell.hpp"
#include "effham/hamiltonian.hpp"
#include "effham/config.hpp"
#include "effham/lab.hpp"
