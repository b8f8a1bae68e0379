#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "siie/tensor.hpp"

namespace siie {

struct GradCheckOptions {
	double step = 1e-4;
	double relTol = 1e-3;
	double absTol = 1e-5;
};

struct GradCheckReport {
	double maxAbsError = 0.0;
	/* Largest relative error among entries that exceed absTol. */
	double maxRelError = 0.0;
	std::size_t checked = 0;
	std::size_t failures = 0;
	std::string worst;

	bool ok() const { return failures == 0; }
	void merge(const GradCheckReport &other);
};

/*
 * Compares reverse-mode gradients of a scalar function against central
 * finite differences (f(x+h) - f(x-h)) / 2h for every element of every
 * input. lossFn must rebuild the graph from the current input values.
 * An entry fails when both its absolute and relative errors exceed the
 * tolerances.
 */
GradCheckReport checkGradients(const std::function<Tensor()> &lossFn,
			       std::vector<Tensor> inputs,
			       const GradCheckOptions &options = {},
			       const std::vector<std::string> &names = {});

} // namespace siie
