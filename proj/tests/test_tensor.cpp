#include "doctest.h"

#include <cmath>
#include <random>

#include "siie/errors.hpp"
#include "siie/gradcheck.hpp"
#include "siie/tensor.hpp"

using namespace siie;

namespace {

Tensor randomTensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> d(lo, hi);
	std::vector<double> v(shape_numel(shape));
	for (double &x : v)
		x = d(rng);
	return Tensor::fromData(shape, v, true);
}

void expectGradOk(const std::function<Tensor()> &f, std::vector<Tensor> inputs)
{
	GradCheckReport r = checkGradients(f, inputs);
	INFO("worst: " << r.worst << " rel " << r.maxRelError << " abs " << r.maxAbsError);
	CHECK(r.ok());
	CHECK(r.checked > 0);
}

} // namespace

TEST_CASE("elementwise ops match finite differences")
{
	Tensor a = randomTensor({2, 3}, 1, 0.5, 2.0);
	Tensor b = randomTensor({2, 3}, 2, 0.5, 2.0);
	Tensor w = randomTensor({2, 3}, 3);
	auto wrap = [&](auto op) { return [&, op] { return dot(reshape(op(), {6}), reshape(w, {6})); }; };
	expectGradOk(wrap([&] { return add(a, b); }), {a, b});
	expectGradOk(wrap([&] { return sub(a, b); }), {a, b});
	expectGradOk(wrap([&] { return mul(a, b); }), {a, b});
	expectGradOk(wrap([&] { return div(a, b); }), {a, b});
	expectGradOk(wrap([&] { return powScalar(a, 2.5); }), {a});
	expectGradOk(wrap([&] { return sqrt(a); }), {a});
	expectGradOk(wrap([&] { return exp(a); }), {a});
	expectGradOk(wrap([&] { return log(a); }), {a});
	expectGradOk(wrap([&] { return neg(a); }), {a});
	expectGradOk(wrap([&] { return addScalar(a, 3.0); }), {a});
	expectGradOk(wrap([&] { return mulScalar(a, -2.0); }), {a});
}

TEST_CASE("abs, relu and acos away from kinks")
{
	Tensor x = Tensor::fromData({4}, {-0.7, -0.2, 0.3, 0.9}, true);
	Tensor w = Tensor::fromData({4}, {0.5, -1.0, 2.0, 1.5});
	expectGradOk([&] { return dot(abs(x), w); }, {x});
	expectGradOk([&] { return dot(relu(x), w); }, {x});
	expectGradOk([&] { return dot(acos(x), w); }, {x});
}

TEST_CASE("scalar broadcast")
{
	Tensor a = randomTensor({3}, 4, 0.5, 1.5);
	Tensor s = Tensor::scalar(2.0, true);
	Tensor r = mul(a, s);
	CHECK(r.shape() == Shape{3});
	expectGradOk([&] { return sum(div(a, s)); }, {a, s});
	expectGradOk([&] { return sum(sub(s, a)); }, {a, s});
	CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), InvalidArgument);
}

TEST_CASE("reductions, reshape and concat")
{
	Tensor a = randomTensor({2, 3}, 5);
	Tensor b = randomTensor({1, 3}, 6);
	CHECK(mean(a).item() == doctest::Approx(sum(a).item() / 6.0));
	Tensor c = concat({a, b});
	CHECK(c.shape() == Shape{3, 3});
	CHECK(c.at(7) == b.at(1));
	Tensor w = randomTensor({9}, 7);
	expectGradOk([&] { return dot(reshape(concat({a, b}), {9}), w); }, {a, b});
	expectGradOk([&] { return mean(mul(a, a)); }, {a});
	CHECK_THROWS_AS(reshape(a, {4}), InvalidArgument);
}

TEST_CASE("matmul of 3x3 by 3xn")
{
	Tensor a = Tensor::fromData({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 10});
	Tensor b = Tensor::fromData({3, 2}, {1, 0, 0, 1, 1, 1});
	Tensor c = matmul(a, b);
	CHECK(c.shape() == Shape{3, 2});
	const std::vector<double> expect{4, 5, 10, 11, 17, 18};
	for (std::size_t i = 0; i < 6; ++i)
		CHECK(c.at(i) == expect[i]);

	Tensor x = randomTensor({3, 3}, 8);
	Tensor y = randomTensor({3, 4}, 9);
	Tensor w = randomTensor({12}, 10);
	expectGradOk([&] { return dot(reshape(matmul(x, y), {12}), w); }, {x, y});
}

TEST_CASE("inverse3 and its gradient")
{
	Tensor a = Tensor::fromData({3, 3}, {2, 1, 0, 1, 3, 1, 0, 1, 4}, true);
	Tensor inv = inverse3(a);
	Tensor prod = matmul(a, inv);
	for (std::size_t i = 0; i < 3; ++i)
		for (std::size_t j = 0; j < 3; ++j)
			CHECK(prod.at(i * 3 + j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
	Tensor w = randomTensor({9}, 11);
	expectGradOk([&] { return dot(reshape(inverse3(a), {9}), w); }, {a});
	CHECK(det3(a.data()) == doctest::Approx(2 * 11 - 1 * 4));
	CHECK_THROWS_AS(inverse3(Tensor::fromData({3, 3}, {1, 2, 3, 2, 4, 6, 1, 1, 1})),
			NumericDomainError);
}

TEST_CASE("dot and norm")
{
	Tensor a = Tensor::fromData({3}, {3, 4, 0}, true);
	CHECK(norm(a).item() == doctest::Approx(5.0));
	CHECK(dot(a, a).item() == doctest::Approx(25.0));
	expectGradOk([&] { return norm(a); }, {a});
}

TEST_CASE("conv2d matches a direct loop")
{
	Tensor x = randomTensor({2, 5, 6}, 12);
	Tensor w = randomTensor({3, 2, 3, 3}, 13);
	Tensor b = randomTensor({3}, 14);
	Tensor y = conv2d(x, w, b, {2, 1});
	REQUIRE(y.shape() == Shape{3, 3, 3});
	auto X = x.data();
	auto W = w.data();
	for (std::size_t o = 0; o < 3; ++o)
		for (std::size_t oh = 0; oh < 3; ++oh)
			for (std::size_t ow = 0; ow < 3; ++ow) {
				double acc = b.at(o);
				for (std::size_t c = 0; c < 2; ++c)
					for (int kh = 0; kh < 3; ++kh)
						for (int kw = 0; kw < 3; ++kw) {
							const int ih = static_cast<int>(oh * 2) + kh - 1;
							const int iw = static_cast<int>(ow * 2) + kw - 1;
							if (ih < 0 || ih >= 5 || iw < 0 || iw >= 6)
								continue;
							acc += X[(c * 5 + ih) * 6 + iw] *
							       W[((o * 2 + c) * 3 + kh) * 3 + kw];
						}
				CHECK(y.at((o * 3 + oh) * 3 + ow) == doctest::Approx(acc).epsilon(1e-12));
			}
	Tensor g = randomTensor({27}, 15);
	expectGradOk([&] { return dot(reshape(conv2d(x, w, b, {2, 1}), {27}), g); }, {x, w, b});
}

TEST_CASE("linear layer")
{
	Tensor x = randomTensor({2, 2, 2}, 16);
	Tensor w = randomTensor({3, 8}, 17);
	Tensor b = randomTensor({3}, 18);
	Tensor g = randomTensor({3}, 19);
	expectGradOk([&] { return dot(linear(x, w, b), g); }, {x, w, b});
	CHECK_THROWS_AS(linear(randomTensor({5}, 1), w, b), InvalidArgument);
}

TEST_CASE("domain errors name the op")
{
	try {
		log(Tensor::fromData({2}, {1.0, -1.0}));
		FAIL("expected a domain error");
	} catch (const NumericDomainError &e) {
		CHECK(e.op() == "log");
	}
	CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), NumericDomainError);
	CHECK_THROWS_AS(acos(Tensor::scalar(std::nan(""))), NumericDomainError);
}

TEST_CASE("acos clamps its argument")
{
	CHECK(acos(Tensor::scalar(1.0)).item() == doctest::Approx(std::acos(1.0 - kAcosMargin)));
	CHECK(acos(Tensor::scalar(1.5)).item() == doctest::Approx(std::acos(1.0 - kAcosMargin)));
	CHECK(acos(Tensor::scalar(-1.0)).item() ==
	      doctest::Approx(std::acos(-1.0 + kAcosMargin)));
	Tensor x = Tensor::scalar(1.0, true);
	acos(x).backward();
	CHECK(std::isfinite(x.grad()[0]));
}

TEST_CASE("no-grad guard and repeated backward")
{
	Tensor a = Tensor::fromData({2}, {1.0, 2.0}, true);
	{
		NoGradGuard guard;
		Tensor y = mul(a, a);
		CHECK_FALSE(y.requiresGrad());
	}
	Tensor y = sum(mul(a, a));
	y.backward();
	CHECK(a.grad()[1] == doctest::Approx(4.0));
	/* Leaves accumulate across sweeps. */
	y.backward();
	CHECK(a.grad()[1] == doctest::Approx(8.0));
	a.zeroGrad();
	CHECK_FALSE(a.hasGrad());
	CHECK_THROWS_AS(Tensor::fromData({2}, {1.0}), InvalidArgument);
}
