#pragma once

#include <nfl/error.hpp>
#include <nfl/linalg.hpp>
#include <nfl/local_graph.hpp>
#include <nfl/lasso.hpp>
#include <nfl/fused.hpp>
#include <nfl/parallel.hpp>
#include <nfl/estimator.hpp>
#include <nfl/random.hpp>
#include <nfl/theory.hpp>
#include <nfl/sim.hpp>
