#include "siie/optim.hpp"

#include <cmath>

#include "siie/errors.hpp"

namespace siie {

Parameter::Parameter(std::string n, Tensor value)
	: name(std::move(n)), tensor(std::move(value))
{
	tensor.setRequiresGrad(true);
	for (double &v : tensor.mutableData())
		v = roundToFloat(v);
	firstMoment.assign(tensor.numel(), 0.0);
	secondMoment.assign(tensor.numel(), 0.0);
}

Parameter::Parameter(const Parameter &other)
	: name(other.name), firstMoment(other.firstMoment),
	  secondMoment(other.secondMoment), step(other.step)
{
	if (other.tensor.defined()) {
		tensor = other.tensor.detach();
		tensor.setRequiresGrad(true);
	}
}

Parameter &Parameter::operator=(const Parameter &other)
{
	if (this != &other)
		*this = Parameter(other);
	return *this;
}

double roundToFloat(double v)
{
	return static_cast<double>(static_cast<float>(v));
}

double xavierBound(const Shape &shape)
{
	if (shape.empty())
		throw InvalidArgument("xavier_init: empty shape");
	double receptive = 1.0;
	for (std::size_t i = 2; i < shape.size(); ++i)
		receptive *= static_cast<double>(shape[i]);
	const double fanOut = static_cast<double>(shape[0]) * receptive;
	const double fanIn = shape.size() > 1 ? static_cast<double>(shape[1]) * receptive
					      : static_cast<double>(shape[0]);
	return std::sqrt(6.0 / (fanIn + fanOut));
}

Tensor xavierInit(const Shape &shape, std::uint64_t seed)
{
	const double bound = xavierBound(shape);
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> dist(-bound, bound);
	std::vector<double> data(shape_numel(shape));
	for (double &v : data)
		v = roundToFloat(dist(rng));
	return Tensor::fromData(shape, std::move(data));
}

void adamStep(std::vector<Parameter *> params, const AdamOptions &opt)
{
	for (Parameter *p : params)
		if (!p->tensor.hasGrad())
			throw InvalidState("adam_step: parameter '" + p->name +
					   "' has no gradient");

	for (Parameter *p : params) {
		p->step += 1;
		const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(p->step));
		const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(p->step));
		auto w = p->tensor.mutableData();
		auto g = p->tensor.grad();
		for (std::size_t i = 0; i < w.size(); ++i) {
			double m = opt.beta1 * p->firstMoment[i] + (1.0 - opt.beta1) * g[i];
			double v = opt.beta2 * p->secondMoment[i] + (1.0 - opt.beta2) * g[i] * g[i];
			m = roundToFloat(m);
			v = roundToFloat(v);
			p->firstMoment[i] = m;
			p->secondMoment[i] = v;
			const double mhat = m / c1;
			const double vhat = v / c2;
			w[i] = roundToFloat(w[i] - opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
		}
		p->tensor.zeroGrad();
	}
}

} // namespace siie
