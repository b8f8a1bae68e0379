#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "siie/tensor.hpp"

namespace siie {

/*
 * A trainable tensor plus its Adam moment buffers. Values and moments are
 * kept on the float32 grid after every update so that checkpoints written
 * as float32 reproduce them bit-exactly.
 */
struct Parameter {
	std::string name;
	Tensor tensor;
	std::vector<double> firstMoment;
	std::vector<double> secondMoment;
	std::int64_t step = 0;

	Parameter() = default;
	Parameter(std::string name, Tensor value);

	/* Copies are deep; moves transfer the buffer. */
	Parameter(const Parameter &other);
	Parameter &operator=(const Parameter &other);
	Parameter(Parameter &&) = default;
	Parameter &operator=(Parameter &&) = default;
};

double roundToFloat(double v);

/*
 * Uniform Glorot/Xavier initialisation in +-sqrt(6 / (fan_in + fan_out)).
 * For shapes (O, I, k...) fan_in = I * prod(k) and fan_out = O * prod(k).
 * Deterministic in (shape, seed).
 */
Tensor xavierInit(const Shape &shape, std::uint64_t seed);
double xavierBound(const Shape &shape);

struct AdamOptions {
	double lr = 1e-5;
	double beta1 = 0.85;
	double beta2 = 0.99;
	double eps = 1e-8;
};

/*
 * One bias-corrected Adam update on every parameter, then clears the
 * gradients. Throws InvalidState if a parameter has no gradient.
 */
void adamStep(std::vector<Parameter *> params, const AdamOptions &options);

} // namespace siie
