#pragma once

#include "qol/error.hpp"
#include "qol/rng.hpp"
#include "qol/parallel.hpp"
#include "qol/mdp_data.hpp"
#include "qol/grid_oracle.hpp"
#include "qol/qgauss_model.hpp"
#include "qol/kernel_loss.hpp"
#include "qol/optimizer.hpp"
#include "qol/envs.hpp"
#include "qol/eval.hpp"
#include "qol/oracle_checks.hpp"
#include "qol/run_config.hpp"
