#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "siie/errors.hpp"
#include "siie/gradcheck.hpp"
#include "siie/metrics.hpp"

using namespace siie;

TEST_CASE("recovery angular error examples")
{
	CHECK(recoveryAngularError({0.4, 0.8, 0.3}, {0.4, 0.8, 0.3}) == 0.0);
	CHECK(recoveryAngularError({1, 0, 0}, {0, 1, 0}) == doctest::Approx(90.0).epsilon(1e-12));
	CHECK(recoveryAngularError({1, 1, 0}, {1, 0, 0}) == doctest::Approx(45.0).epsilon(1e-12));
	CHECK(recoveryAngularError({0.2, 0.5, 0.1}, {2, 5, 1}) < 1e-6);
	CHECK(recoveryAngularError({1, 2, 3}, {3, 1, 2}) ==
	      doctest::Approx(recoveryAngularError({3, 1, 2}, {1, 2, 3})));
	CHECK_THROWS_AS(recoveryAngularError({0, 0, 0}, {1, 0, 0}), InvalidInput);
}

TEST_CASE("reproduction angular error examples")
{
	CHECK(reproductionAngularError({0.3, 0.5, 0.2}, {0.3, 0.5, 0.2}) < 1e-12);
	const double expect = std::acos(2.5 / (std::sqrt(2.25) * std::sqrt(3.0))) * 180.0 /
			      std::numbers::pi;
	CHECK(reproductionAngularError({1, 1, 1}, {1, 1, 2}) == doctest::Approx(expect).epsilon(1e-12));
	CHECK(reproductionAngularError({1, 1, 1}, {3, 3, 6}) == doctest::Approx(expect).epsilon(1e-12));
	CHECK_THROWS_AS(reproductionAngularError({1, 1, 1}, {1, 0, 1}), InvalidInput);
}

TEST_CASE("angular loss is differentiable and in radians")
{
	Tensor gt = Tensor::fromData({3}, {1, 1, 0});
	Tensor est = Tensor::fromData({3}, {1, 0.2, 0.1}, true);
	CHECK(angularLoss(gt, Tensor::fromData({3}, {1, 0, 0})).item() ==
	      doctest::Approx(std::numbers::pi / 4));
	auto r = checkGradients([&] { return angularLoss(gt, est); }, {est});
	CHECK(r.ok());
}

TEST_CASE("aggregate conventions")
{
	const std::vector<double> constant{2, 2, 2, 2};
	ErrorStats s = aggregate(constant);
	CHECK(s.mean == 2);
	CHECK(s.median == 2);
	CHECK(s.best25 == 2);
	CHECK(s.worst25 == 2);

	const std::vector<double> four{4, 1, 3, 2};
	s = aggregate(four);
	CHECK(s.mean == 2.5);
	CHECK(s.median == 2);
	CHECK(s.best25 == 1);
	CHECK(s.worst25 == 4);

	const std::vector<double> one{5};
	s = aggregate(one);
	CHECK((s.mean == 5 && s.median == 5 && s.best25 == 5 && s.worst25 == 5));

	/* ceil(5/4) = 2 */
	const std::vector<double> five{1, 2, 3, 4, 10};
	s = aggregate(five);
	CHECK(s.best25 == 1.5);
	CHECK(s.worst25 == 7);
	CHECK(s.median == 3);
	CHECK(s.best25 <= s.median);
	CHECK(s.median <= s.worst25);

	CHECK_THROWS_AS(aggregate(std::vector<double>{}), InvalidInput);
}

TEST_CASE("stats row serialisation round-trips")
{
	std::ostringstream os;
	ErrorStats s = aggregate(std::vector<double>{0.1, 0.7, 1.0 / 3.0});
	writeStatsRow(os, "camA", s, "recovery");
	const std::string row = os.str();
	CHECK(row.rfind("camA,3,", 0) == 0);
	CHECK(row.find(",recovery\n") != std::string::npos);
	CHECK(std::stod(formatDouble(1.0 / 3.0)) == 1.0 / 3.0);
}
