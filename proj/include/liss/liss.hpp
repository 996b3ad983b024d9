#pragma once

#include "liss/ris_core.hpp"
#include "liss/mesh.hpp"
#include "liss/fem.hpp"
#include "liss/damage_model.hpp"
#include "liss/ssn_solver.hpp"
#include "liss/liss_driver.hpp"
#include "liss/bench_oracle.hpp"
#include "liss/cli_io.hpp"
