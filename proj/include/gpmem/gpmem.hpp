#pragma once

#include "gpmem/error.hpp"
#include "gpmem/random.hpp"
#include "gpmem/params.hpp"
#include "gpmem/kernel.hpp"
#include "gpmem/algebra.hpp"
#include "gpmem/gp.hpp"
#include "gpmem/memo.hpp"
#include "gpmem/inference.hpp"
#include "gpmem/schedule.hpp"
#include "gpmem/structure.hpp"
#include "gpmem/query.hpp"
#include "gpmem/bayesopt.hpp"
#include "gpmem/data.hpp"
#include "gpmem/workflows.hpp"
