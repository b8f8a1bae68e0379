#include "siie/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace siie {

void GradCheckReport::merge(const GradCheckReport &other)
{
	if (other.maxRelError > maxRelError)
		worst = other.worst;
	maxAbsError = std::max(maxAbsError, other.maxAbsError);
	maxRelError = std::max(maxRelError, other.maxRelError);
	checked += other.checked;
	failures += other.failures;
}

GradCheckReport checkGradients(const std::function<Tensor()> &lossFn,
			       std::vector<Tensor> inputs,
			       const GradCheckOptions &opt,
			       const std::vector<std::string> &names)
{
	for (auto &t : inputs)
		t.zeroGrad();
	lossFn().backward();

	std::vector<std::vector<double>> analytic;
	analytic.reserve(inputs.size());
	for (auto &t : inputs) {
		if (t.hasGrad())
			analytic.emplace_back(t.grad().begin(), t.grad().end());
		else
			analytic.emplace_back(t.numel(), 0.0);
		t.zeroGrad();
	}

	GradCheckReport report;
	NoGradGuard noGrad;
	for (std::size_t k = 0; k < inputs.size(); ++k) {
		auto values = inputs[k].mutableData();
		for (std::size_t i = 0; i < values.size(); ++i) {
			const double saved = values[i];
			values[i] = saved + opt.step;
			const double up = lossFn().item();
			values[i] = saved - opt.step;
			const double down = lossFn().item();
			values[i] = saved;

			const double numeric = (up - down) / (2.0 * opt.step);
			const double a = analytic[k][i];
			const double absErr = std::fabs(a - numeric);
			const double scale = std::max(std::fabs(a), std::fabs(numeric));
			const double relErr = scale > 0.0 ? absErr / scale : 0.0;

			report.checked += 1;
			report.maxAbsError = std::max(report.maxAbsError, absErr);
			if (absErr > opt.absTol) {
				if (relErr > report.maxRelError) {
					report.maxRelError = relErr;
					report.worst = (k < names.size() ? names[k] : "input" + std::to_string(k)) +
						       "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
						       " numeric=" + std::to_string(numeric);
				}
				if (relErr > opt.relTol)
					report.failures += 1;
			}
		}
	}
	return report;
}

} // namespace siie
