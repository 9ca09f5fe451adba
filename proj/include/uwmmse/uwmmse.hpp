#pragma once

#include "uwmmse/errors.hpp"
#include "uwmmse/matrix_kernel.hpp"
#include "uwmmse/scenario.hpp"
#include "uwmmse/dataset_io.hpp"
#include "uwmmse/precoder.hpp"
#include "uwmmse/zero_forcing.hpp"
#include "uwmmse/wmmse.hpp"
#include "uwmmse/network.hpp"
#include "uwmmse/checkpoint.hpp"
#include "uwmmse/backprop.hpp"
#include "uwmmse/fd_oracle.hpp"
#include "uwmmse/trainer.hpp"
#include "uwmmse/gradient_check.hpp"
#include "uwmmse/bench.hpp"
