#pragma once

#include "feedback_probe/basis.hpp"
#include "feedback_probe/bootstrap.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"
#include "feedback_probe/noise.hpp"
#include "feedback_probe/numeric/convolution.hpp"
#include "feedback_probe/numeric/dense_matrix.hpp"
#include "feedback_probe/numeric/gaussian.hpp"
#include "feedback_probe/numeric/grid_function.hpp"
#include "feedback_probe/numeric/least_squares.hpp"
#include "feedback_probe/parallel.hpp"
#include "feedback_probe/simulator.hpp"
