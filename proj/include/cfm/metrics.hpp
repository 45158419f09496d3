#pragma once

// Two-sample distances between point sets (rows are points).

#include "cfm/autodiff.hpp"

namespace cfm {

// mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2. Brute force up to 1e8
// pairs, uniform-grid nearest neighbour search beyond.
double chamfer(const Mat& a, const Mat& b);

// 2 E|a - b| - E|a - a'| - E|b - b'| with every pair (including i = j)
// averaged, which keeps the estimate nonnegative and exactly 0 for A = B.
double energy_distance(const Mat& a, const Mat& b);

// Total variation between normalized 2D histograms on `bins` x `bins` cells
// over [-extent, extent]^2; points outside fall in the nearest edge cell.
double histogram_tv(const Mat& a, const Mat& b, int bins = 32, double extent = 1.5);

}  // namespace cfm
