#include "siie/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <cblas.h>

#include "siie/errors.hpp"

namespace siie {

namespace detail {

struct Node {
	Shape shape;
	std::vector<double> value;
	std::vector<double> grad;
	bool requiresGrad = false;
	const char *op = "leaf";
	std::vector<std::shared_ptr<Node>> inputs;
	Tensor::BackwardFn backward;
};

} // namespace detail

namespace {

thread_local bool gGradEnabled = true;

void checkFinite(const char *op, std::span<const double> values)
{
	for (double v : values)
		if (!std::isfinite(v))
			throw NumericDomainError(op, "non-finite result");
}

} // namespace

std::size_t shape_numel(const Shape &shape)
{
	return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
			       std::multiplies<>());
}

std::string shape_str(const Shape &shape)
{
	std::ostringstream os;
	os << '(';
	for (std::size_t i = 0; i < shape.size(); ++i)
		os << (i ? "," : "") << shape[i];
	os << ')';
	return os.str();
}

NoGradGuard::NoGradGuard() : previous_(gGradEnabled) { gGradEnabled = false; }
NoGradGuard::~NoGradGuard() { gGradEnabled = previous_; }

bool gradEnabled() { return gGradEnabled; }

Tensor Tensor::zeros(Shape shape, bool requiresGrad)
{
	return full(std::move(shape), 0.0, requiresGrad);
}

Tensor Tensor::full(Shape shape, double value, bool requiresGrad)
{
	std::vector<double> data(shape_numel(shape), value);
	return fromData(std::move(shape), std::move(data), requiresGrad);
}

Tensor Tensor::fromData(Shape shape, std::vector<double> data, bool requiresGrad)
{
	if (shape.empty())
		throw InvalidArgument("tensor shape must have at least one dimension");
	for (std::size_t d : shape)
		if (d == 0)
			throw InvalidArgument("tensor dimensions must be positive: " +
					      shape_str(shape));
	if (shape_numel(shape) != data.size())
		throw InvalidArgument("data length " + std::to_string(data.size()) +
				      " does not match shape " + shape_str(shape));
	auto node = std::make_shared<detail::Node>();
	node->shape = std::move(shape);
	node->value = std::move(data);
	node->requiresGrad = requiresGrad;
	return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requiresGrad)
{
	return fromData({1}, {value}, requiresGrad);
}

Tensor Tensor::makeResult(Shape shape, std::vector<double> value,
			  std::vector<Tensor> inputs, const char *op,
			  BackwardFn backward)
{
	Tensor out = fromData(std::move(shape), std::move(value));
	out.node_->op = op;
	if (!gGradEnabled)
		return out;
	bool needsGrad = std::any_of(inputs.begin(), inputs.end(),
				     [](const Tensor &t) { return t.requiresGrad(); });
	if (!needsGrad)
		return out;
	out.node_->requiresGrad = true;
	out.node_->backward = std::move(backward);
	out.node_->inputs.reserve(inputs.size());
	for (auto &in : inputs)
		if (in.requiresGrad())
			out.node_->inputs.push_back(in.node_);
	return out;
}

const Shape &Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::dim(std::size_t i) const { return node_->shape.at(i); }
std::size_t Tensor::ndim() const { return node_->shape.size(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutableData() { return node_->value; }

double Tensor::item() const
{
	if (numel() != 1)
		throw InvalidArgument("item() on tensor of shape " + shape_str(shape()));
	return node_->value[0];
}

bool Tensor::requiresGrad() const { return node_ && node_->requiresGrad; }

void Tensor::setRequiresGrad(bool value)
{
	if (!node_->inputs.empty())
		throw InvalidState("requires_grad can only be changed on leaf tensors");
	node_->requiresGrad = value;
	if (!value)
		node_->grad.clear();
}

bool Tensor::hasGrad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::gradBuffer() const
{
	if (node_->grad.empty())
		node_->grad.assign(node_->value.size(), 0.0);
	return node_->grad;
}

void Tensor::zeroGrad() { node_->grad.clear(); }

Tensor Tensor::detach() const
{
	return fromData(node_->shape, node_->value, false);
}

const char *Tensor::op() const { return node_->op; }

void Tensor::backward() const
{
	if (numel() != 1)
		throw InvalidArgument("backward() needs a single-element tensor, got " +
				      shape_str(shape()));
	if (!node_->requiresGrad)
		throw InvalidState("backward() on a tensor that does not require grad");

	/* Post-order DFS gives inputs before consumers. */
	std::vector<detail::Node *> order;
	std::unordered_set<detail::Node *> seen;
	std::vector<std::pair<detail::Node *, std::size_t>> stack;
	stack.emplace_back(node_.get(), 0);
	seen.insert(node_.get());
	while (!stack.empty()) {
		auto &[node, next] = stack.back();
		if (next < node->inputs.size()) {
			detail::Node *child = node->inputs[next++].get();
			if (seen.insert(child).second)
				stack.emplace_back(child, 0);
		} else {
			order.push_back(node);
			stack.pop_back();
		}
	}

	/* Stale adjoints from an earlier sweep must not leak into this one. */
	for (detail::Node *n : order)
		if (n->backward)
			n->grad.assign(n->value.size(), 0.0);
	node_->grad.assign(1, 0.0);
	node_->grad[0] = 1.0;

	for (auto it = order.rbegin(); it != order.rend(); ++it) {
		detail::Node *n = *it;
		if (n->backward)
			n->backward(n->grad);
	}
}

/* ---------------------------------------------------------------------- */

namespace {

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast broadcastMode(const char *op, const Tensor &a, const Tensor &b)
{
	if (a.shape() == b.shape())
		return Broadcast::None;
	if (a.numel() == 1)
		return Broadcast::LeftScalar;
	if (b.numel() == 1)
		return Broadcast::RightScalar;
	throw InvalidArgument(std::string(op) + ": incompatible shapes " +
			      shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

/*
 * Shared driver for elementwise binary ops. f computes the value,
 * da/db the partial derivatives at (x, y).
 */
template<typename F, typename DA, typename DB>
Tensor binary(const char *op, const Tensor &a, const Tensor &b, F f, DA da, DB db)
{
	Broadcast mode = broadcastMode(op, a, b);
	const Shape &shape = mode == Broadcast::LeftScalar ? b.shape() : a.shape();
	std::size_t n = shape_numel(shape);
	auto xa = a.data();
	auto xb = b.data();
	auto ia = [mode](std::size_t i) { return mode == Broadcast::LeftScalar ? 0 : i; };
	auto ib = [mode](std::size_t i) { return mode == Broadcast::RightScalar ? 0 : i; };

	std::vector<double> out(n);
	for (std::size_t i = 0; i < n; ++i)
		out[i] = f(xa[ia(i)], xb[ib(i)]);
	checkFinite(op, out);

	return Tensor::makeResult(
		shape, std::move(out), {a, b}, op,
		[a, b, n, ia, ib, da, db](std::span<const double> g) mutable {
			auto xa = a.data();
			auto xb = b.data();
			if (a.requiresGrad()) {
				auto ga = a.gradBuffer();
				for (std::size_t i = 0; i < n; ++i)
					ga[ia(i)] += g[i] * da(xa[ia(i)], xb[ib(i)]);
			}
			if (b.requiresGrad()) {
				auto gb = b.gradBuffer();
				for (std::size_t i = 0; i < n; ++i)
					gb[ib(i)] += g[i] * db(xa[ia(i)], xb[ib(i)]);
			}
		});
}

/* Elementwise unary op; df receives (input, output). */
template<typename F, typename DF>
Tensor unary(const char *op, const Tensor &x, F f, DF df)
{
	auto xs = x.data();
	std::vector<double> out(xs.size());
	for (std::size_t i = 0; i < xs.size(); ++i)
		out[i] = f(xs[i]);
	checkFinite(op, out);
	std::vector<double> saved = out;
	return Tensor::makeResult(
		x.shape(), std::move(out), {x}, op,
		[x, saved = std::move(saved), df](std::span<const double> g) mutable {
			auto xs = x.data();
			auto gx = x.gradBuffer();
			for (std::size_t i = 0; i < gx.size(); ++i)
				gx[i] += g[i] * df(xs[i], saved[i]);
		});
}

} // namespace

Tensor add(const Tensor &a, const Tensor &b)
{
	return binary("add", a, b, [](double x, double y) { return x + y; },
		      [](double, double) { return 1.0; },
		      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor &a, const Tensor &b)
{
	return binary("sub", a, b, [](double x, double y) { return x - y; },
		      [](double, double) { return 1.0; },
		      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor &a, const Tensor &b)
{
	return binary("mul", a, b, [](double x, double y) { return x * y; },
		      [](double, double y) { return y; },
		      [](double x, double) { return x; });
}

Tensor div(const Tensor &a, const Tensor &b)
{
	for (double y : b.data())
		if (y == 0.0)
			throw NumericDomainError("div", "division by zero");
	return binary("div", a, b, [](double x, double y) { return x / y; },
		      [](double, double y) { return 1.0 / y; },
		      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor &x)
{
	return mulScalar(x, -1.0);
}

Tensor addScalar(const Tensor &x, double c)
{
	return unary("add_scalar", x, [c](double v) { return v + c; },
		     [](double, double) { return 1.0; });
}

Tensor mulScalar(const Tensor &x, double c)
{
	return unary("mul_scalar", x, [c](double v) { return v * c; },
		     [c](double, double) { return c; });
}

Tensor powScalar(const Tensor &x, double p)
{
	if (p != std::floor(p))
		for (double v : x.data())
			if (v < 0.0)
				throw NumericDomainError("pow", "negative base with fractional exponent");
	return unary("pow", x, [p](double v) { return std::pow(v, p); },
		     [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Tensor sqrt(const Tensor &x)
{
	for (double v : x.data())
		if (v < 0.0 || std::isnan(v))
			throw NumericDomainError("sqrt", "negative input");
	/* The derivative at 0 is unbounded; 0 is used as the subgradient. */
	return unary("sqrt", x, [](double v) { return std::sqrt(v); },
		     [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp(const Tensor &x)
{
	return unary("exp", x, [](double v) { return std::exp(v); },
		     [](double, double y) { return y; });
}

Tensor log(const Tensor &x)
{
	for (double v : x.data())
		if (!(v > 0.0))
			throw NumericDomainError("log", "non-positive input");
	return unary("log", x, [](double v) { return std::log(v); },
		     [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor &x)
{
	return unary("abs", x, [](double v) { return std::fabs(v); },
		     [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor &x)
{
	return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
		     [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor acos(const Tensor &x)
{
	static constexpr double lo = -1.0 + kAcosMargin;
	static constexpr double hi = 1.0 - kAcosMargin;
	for (double v : x.data())
		if (std::isnan(v))
			throw NumericDomainError("acos", "NaN input");
	return unary("acos", x,
		     [](double v) { return std::acos(std::clamp(v, lo, hi)); },
		     [](double v, double) {
			     double c = std::clamp(v, lo, hi);
			     return -1.0 / std::sqrt(1.0 - c * c);
		     });
}

Tensor sum(const Tensor &x)
{
	auto xs = x.data();
	double total = std::accumulate(xs.begin(), xs.end(), 0.0);
	return Tensor::makeResult({1}, {total}, {x}, "sum",
				  [x](std::span<const double> g) mutable {
					  for (double &v : x.gradBuffer())
						  v += g[0];
				  });
}

Tensor mean(const Tensor &x)
{
	return mulScalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor &x, Shape shape)
{
	if (shape_numel(shape) != x.numel())
		throw InvalidArgument("reshape: " + shape_str(x.shape()) + " -> " +
				      shape_str(shape));
	std::vector<double> out(x.data().begin(), x.data().end());
	return Tensor::makeResult(std::move(shape), std::move(out), {x}, "reshape",
				  [x](std::span<const double> g) mutable {
					  auto gx = x.gradBuffer();
					  for (std::size_t i = 0; i < gx.size(); ++i)
						  gx[i] += g[i];
				  });
}

Tensor concat(const std::vector<Tensor> &parts)
{
	if (parts.empty())
		throw InvalidArgument("concat: no inputs");
	Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
	std::size_t lead = 0;
	std::vector<double> out;
	for (const auto &p : parts) {
		if (Shape(p.shape().begin() + 1, p.shape().end()) != tail)
			throw InvalidArgument("concat: trailing dimensions differ");
		lead += p.dim(0);
		out.insert(out.end(), p.data().begin(), p.data().end());
	}
	Shape shape{lead};
	shape.insert(shape.end(), tail.begin(), tail.end());
	return Tensor::makeResult(std::move(shape), std::move(out), parts, "concat",
				  [parts](std::span<const double> g) mutable {
					  std::size_t offset = 0;
					  for (auto &p : parts) {
						  if (p.requiresGrad()) {
							  auto gp = p.gradBuffer();
							  for (std::size_t i = 0; i < gp.size(); ++i)
								  gp[i] += g[offset + i];
						  }
						  offset += p.numel();
					  }
				  });
}

Tensor matmul(const Tensor &a, const Tensor &b)
{
	if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
		throw InvalidArgument("matmul: incompatible shapes " + shape_str(a.shape()) +
				      " and " + shape_str(b.shape()));
	const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
	auto xa = a.data();
	auto xb = b.data();
	std::vector<double> out(p * r, 0.0);
	for (std::size_t i = 0; i < p; ++i)
		for (std::size_t k = 0; k < q; ++k) {
			const double aik = xa[i * q + k];
			for (std::size_t j = 0; j < r; ++j)
				out[i * r + j] += aik * xb[k * r + j];
		}
	return Tensor::makeResult(
		{p, r}, std::move(out), {a, b}, "matmul",
		[a, b, p, q, r](std::span<const double> g) mutable {
			auto xa = a.data();
			auto xb = b.data();
			if (a.requiresGrad()) {
				auto ga = a.gradBuffer();
				for (std::size_t i = 0; i < p; ++i)
					for (std::size_t k = 0; k < q; ++k) {
						double acc = 0.0;
						for (std::size_t j = 0; j < r; ++j)
							acc += g[i * r + j] * xb[k * r + j];
						ga[i * q + k] += acc;
					}
			}
			if (b.requiresGrad()) {
				auto gb = b.gradBuffer();
				for (std::size_t i = 0; i < p; ++i)
					for (std::size_t k = 0; k < q; ++k) {
						const double aik = xa[i * q + k];
						for (std::size_t j = 0; j < r; ++j)
							gb[k * r + j] += aik * g[i * r + j];
					}
			}
		});
}

double det3(std::span<const double> m)
{
	return m[0] * (m[4] * m[8] - m[5] * m[7]) -
	       m[1] * (m[3] * m[8] - m[5] * m[6]) +
	       m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Tensor inverse3(const Tensor &a)
{
	if (a.shape() != Shape{3, 3})
		throw InvalidArgument("inverse3: expected (3,3), got " + shape_str(a.shape()));
	auto m = a.data();
	const double det = det3(m);
	if (det == 0.0 || !std::isfinite(det))
		throw NumericDomainError("inverse3", "singular matrix");
	const double s = 1.0 / det;
	std::vector<double> inv{
		(m[4] * m[8] - m[5] * m[7]) * s, (m[2] * m[7] - m[1] * m[8]) * s,
		(m[1] * m[5] - m[2] * m[4]) * s, (m[5] * m[6] - m[3] * m[8]) * s,
		(m[0] * m[8] - m[2] * m[6]) * s, (m[2] * m[3] - m[0] * m[5]) * s,
		(m[3] * m[7] - m[4] * m[6]) * s, (m[1] * m[6] - m[0] * m[7]) * s,
		(m[0] * m[4] - m[1] * m[3]) * s,
	};
	checkFinite("inverse3", inv);
	std::vector<double> saved = inv;
	/* dL/dA = -A^-T G A^-T */
	return Tensor::makeResult(
		{3, 3}, std::move(inv), {a}, "inverse3",
		[a, b = std::move(saved)](std::span<const double> g) mutable {
			double tmp[9] = {};
			/* tmp = G * B^T */
			for (int i = 0; i < 3; ++i)
				for (int j = 0; j < 3; ++j)
					for (int k = 0; k < 3; ++k)
						tmp[i * 3 + j] += g[i * 3 + k] * b[j * 3 + k];
			auto ga = a.gradBuffer();
			/* ga -= B^T * tmp */
			for (int i = 0; i < 3; ++i)
				for (int j = 0; j < 3; ++j) {
					double acc = 0.0;
					for (int k = 0; k < 3; ++k)
						acc += b[k * 3 + i] * tmp[k * 3 + j];
					ga[i * 3 + j] -= acc;
				}
		});
}

Tensor dot(const Tensor &a, const Tensor &b)
{
	if (a.numel() != b.numel())
		throw InvalidArgument("dot: length mismatch");
	auto xa = a.data();
	auto xb = b.data();
	double acc = 0.0;
	for (std::size_t i = 0; i < xa.size(); ++i)
		acc += xa[i] * xb[i];
	return Tensor::makeResult({1}, {acc}, {a, b}, "dot",
				  [a, b](std::span<const double> g) mutable {
					  auto xa = a.data();
					  auto xb = b.data();
					  if (a.requiresGrad()) {
						  auto ga = a.gradBuffer();
						  for (std::size_t i = 0; i < ga.size(); ++i)
							  ga[i] += g[0] * xb[i];
					  }
					  if (b.requiresGrad()) {
						  auto gb = b.gradBuffer();
						  for (std::size_t i = 0; i < gb.size(); ++i)
							  gb[i] += g[0] * xa[i];
					  }
				  });
}

Tensor norm(const Tensor &x)
{
	auto xs = x.data();
	double acc = 0.0;
	for (double v : xs)
		acc += v * v;
	const double n = std::sqrt(acc);
	return Tensor::makeResult({1}, {n}, {x}, "norm",
				  [x, n](std::span<const double> g) mutable {
					  if (n == 0.0)
						  return;
					  auto xs = x.data();
					  auto gx = x.gradBuffer();
					  for (std::size_t i = 0; i < gx.size(); ++i)
						  gx[i] += g[0] * xs[i] / n;
				  });
}

namespace {

blasint blasInt(std::size_t v)
{
	/* Callers parallelise over images; keep each GEMM on the calling thread. */
	static const bool single = (openblas_set_num_threads(1), true);
	(void)single;
	return static_cast<blasint>(v);
}

} // namespace

Tensor conv2d(const Tensor &input, const Tensor &weight, const Tensor &bias,
	      Conv2dSpec spec)
{
	if (input.ndim() != 3 || weight.ndim() != 4 || weight.dim(1) != input.dim(0))
		throw InvalidArgument("conv2d: input " + shape_str(input.shape()) +
				      " incompatible with weight " + shape_str(weight.shape()));
	if (bias.numel() != weight.dim(0))
		throw InvalidArgument("conv2d: bias length mismatch");
	if (spec.stride == 0)
		throw InvalidArgument("conv2d: stride must be positive");

	const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
	const std::size_t P = spec.padding, S = spec.stride;
	if (H + 2 * P < KH || W + 2 * P < KW)
		throw InvalidArgument("conv2d: kernel larger than padded input");
	const std::size_t OH = (H + 2 * P - KH) / S + 1;
	const std::size_t OW = (W + 2 * P - KW) / S + 1;
	const std::size_t K = C * KH * KW;
	const std::size_t N = OH * OW;

	/* im2col: cols[k][p], k = (c,kh,kw), p = (oh,ow) */
	auto x = input.data();
	std::vector<double> cols(K * N, 0.0);
	for (std::size_t c = 0; c < C; ++c)
		for (std::size_t kh = 0; kh < KH; ++kh)
			for (std::size_t kw = 0; kw < KW; ++kw) {
				double *row = &cols[((c * KH + kh) * KW + kw) * N];
				for (std::size_t oh = 0; oh < OH; ++oh) {
					const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) -
								  static_cast<std::ptrdiff_t>(P);
					if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H))
						continue;
					for (std::size_t ow = 0; ow < OW; ++ow) {
						const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * S + kw) -
									  static_cast<std::ptrdiff_t>(P);
						if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W))
							continue;
						row[oh * OW + ow] = x[(c * H + ih) * W + iw];
					}
				}
			}

	auto w = weight.data();
	auto b = bias.data();
	std::vector<double> out(O * N);
	for (std::size_t o = 0; o < O; ++o)
		std::fill(&out[o * N], &out[o * N] + N, b[o]);
	/* out(O,N) += W(O,K) cols(K,N) */
	cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blasInt(O), blasInt(N), blasInt(K),
		    1.0, w.data(), blasInt(K), cols.data(), blasInt(N), 1.0, out.data(), blasInt(N));

	return Tensor::makeResult(
		{O, OH, OW}, std::move(out), {input, weight, bias}, "conv2d",
		[input, weight, bias, cols = std::move(cols), C, H, W, O, KH, KW, P, S, OH,
		 OW, K, N](std::span<const double> g) mutable {
			if (bias.requiresGrad()) {
				auto gb = bias.gradBuffer();
				for (std::size_t o = 0; o < O; ++o) {
					double acc = 0.0;
					for (std::size_t p = 0; p < N; ++p)
						acc += g[o * N + p];
					gb[o] += acc;
				}
			}
			if (weight.requiresGrad()) {
				auto gw = weight.gradBuffer();
				/* gW(O,K) += g(O,N) cols(K,N)^T */
				cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blasInt(O), blasInt(K),
					    blasInt(N), 1.0, g.data(), blasInt(N), cols.data(), blasInt(N),
					    1.0, gw.data(), blasInt(K));
			}
			if (input.requiresGrad()) {
				auto w = weight.data();
				std::vector<double> dcols(K * N);
				/* dcols(K,N) = W(O,K)^T g(O,N) */
				cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blasInt(K), blasInt(N),
					    blasInt(O), 1.0, w.data(), blasInt(K), g.data(), blasInt(N), 0.0,
					    dcols.data(), blasInt(N));
				auto gx = input.gradBuffer();
				for (std::size_t c = 0; c < C; ++c)
					for (std::size_t kh = 0; kh < KH; ++kh)
						for (std::size_t kw = 0; kw < KW; ++kw) {
							const double *row = &dcols[((c * KH + kh) * KW + kw) * N];
							for (std::size_t oh = 0; oh < OH; ++oh) {
								const std::ptrdiff_t ih =
									static_cast<std::ptrdiff_t>(oh * S + kh) -
									static_cast<std::ptrdiff_t>(P);
								if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H))
									continue;
								for (std::size_t ow = 0; ow < OW; ++ow) {
									const std::ptrdiff_t iw =
										static_cast<std::ptrdiff_t>(ow * S + kw) -
										static_cast<std::ptrdiff_t>(P);
									if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W))
										continue;
									gx[(c * H + ih) * W + iw] += row[oh * OW + ow];
								}
							}
						}
			}
		});
}

Tensor linear(const Tensor &input, const Tensor &weight, const Tensor &bias)
{
	if (weight.ndim() != 2 || weight.dim(1) != input.numel() ||
	    bias.numel() != weight.dim(0))
		throw InvalidArgument("linear: input " + shape_str(input.shape()) +
				      " incompatible with weight " + shape_str(weight.shape()));
	const std::size_t O = weight.dim(0), I = weight.dim(1);
	auto x = input.data();
	auto w = weight.data();
	auto b = bias.data();
	std::vector<double> out(O);
	for (std::size_t o = 0; o < O; ++o) {
		double acc = b[o];
		const double *wo = &w[o * I];
		for (std::size_t i = 0; i < I; ++i)
			acc += wo[i] * x[i];
		out[o] = acc;
	}
	return Tensor::makeResult(
		{O}, std::move(out), {input, weight, bias}, "linear",
		[input, weight, bias, O, I](std::span<const double> g) mutable {
			if (bias.requiresGrad()) {
				auto gb = bias.gradBuffer();
				for (std::size_t o = 0; o < O; ++o)
					gb[o] += g[o];
			}
			if (weight.requiresGrad()) {
				auto x = input.data();
				auto gw = weight.gradBuffer();
				for (std::size_t o = 0; o < O; ++o)
					for (std::size_t i = 0; i < I; ++i)
						gw[o * I + i] += g[o] * x[i];
			}
			if (input.requiresGrad()) {
				auto w = weight.data();
				auto gx = input.gradBuffer();
				for (std::size_t o = 0; o < O; ++o)
					for (std::size_t i = 0; i < I; ++i)
						gx[i] += g[o] * w[o * I + i];
			}
		});
}

} // namespace siie
