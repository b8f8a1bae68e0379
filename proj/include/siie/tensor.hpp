#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace siie {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape &shape);
std::string shape_str(const Shape &shape);

namespace detail {
struct Node;
}

/*
 * Dense row-major array that records the operations producing it so that
 * gradients can be propagated back to every leaf with requires_grad set.
 *
 * Tensors are handles: copying a Tensor shares the underlying buffer and
 * graph node. Values are stored in double precision.
 */
class Tensor
{
public:
	using BackwardFn = std::function<void(std::span<const double> gradOut)>;

	Tensor() = default;

	static Tensor zeros(Shape shape, bool requiresGrad = false);
	static Tensor full(Shape shape, double value, bool requiresGrad = false);
	static Tensor fromData(Shape shape, std::vector<double> data,
			       bool requiresGrad = false);
	static Tensor scalar(double value, bool requiresGrad = false);

	/*
	 * Build an op result. backward receives the gradient of the output and
	 * must add into the grad buffers of the inputs that require gradients.
	 * When no input requires a gradient, or gradient recording is disabled,
	 * the result is a constant and backward is dropped.
	 */
	static Tensor makeResult(Shape shape, std::vector<double> value,
				 std::vector<Tensor> inputs, const char *op,
				 BackwardFn backward);

	bool defined() const { return static_cast<bool>(node_); }
	const Shape &shape() const;
	std::size_t numel() const;
	std::size_t dim(std::size_t i) const;
	std::size_t ndim() const;

	std::span<const double> data() const;
	/* In-place access for leaves (optimizers, finite differences). */
	std::span<double> mutableData();
	double item() const;
	double at(std::size_t i) const { return data()[i]; }

	bool requiresGrad() const;
	void setRequiresGrad(bool value);
	bool hasGrad() const;
	std::span<const double> grad() const;
	/* Zero-initialised on first access. */
	std::span<double> gradBuffer() const;
	void zeroGrad();

	/* Reverse-mode sweep from a single-element tensor. */
	void backward() const;

	Tensor detach() const;
	const char *op() const;

	bool sameNode(const Tensor &other) const { return node_ == other.node_; }

private:
	explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
	std::shared_ptr<detail::Node> node_;
};

/* Disables graph recording on the current thread for its lifetime. */
class NoGradGuard
{
public:
	NoGradGuard();
	~NoGradGuard();
	NoGradGuard(const NoGradGuard &) = delete;
	NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
	bool previous_;
};

bool gradEnabled();

/* Lower clamp bound for acos inputs is -1 + kAcosMargin, upper is 1 - kAcosMargin. */
inline constexpr double kAcosMargin = 1e-7;

/*
 * Elementwise binary ops take operands of identical shape, or one operand
 * holding a single element which is broadcast against the other.
 */
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor div(const Tensor &a, const Tensor &b);

Tensor neg(const Tensor &x);
Tensor addScalar(const Tensor &x, double c);
Tensor mulScalar(const Tensor &x, double c);
Tensor powScalar(const Tensor &x, double p);
Tensor sqrt(const Tensor &x);
Tensor exp(const Tensor &x);
Tensor log(const Tensor &x);
Tensor abs(const Tensor &x);
Tensor relu(const Tensor &x);
Tensor acos(const Tensor &x);

Tensor sum(const Tensor &x);
Tensor mean(const Tensor &x);
Tensor reshape(const Tensor &x, Shape shape);
/* Concatenates along the leading axis; trailing dimensions must match. */
Tensor concat(const std::vector<Tensor> &parts);

/* (p,q) x (q,r) -> (p,r) */
Tensor matmul(const Tensor &a, const Tensor &b);
/* Inverse of a 3x3 matrix. Throws NumericDomainError when det is 0. */
Tensor inverse3(const Tensor &a);
Tensor dot(const Tensor &a, const Tensor &b);
Tensor norm(const Tensor &x);

struct Conv2dSpec {
	std::size_t stride = 1;
	std::size_t padding = 0;
};

/*
 * input (C,H,W), weight (O,C,KH,KW), bias (O) -> (O,OH,OW) with zero
 * padding on every border.
 */
Tensor conv2d(const Tensor &input, const Tensor &weight, const Tensor &bias,
	      Conv2dSpec spec);

/* weight (O,I), bias (O); input of any shape with I elements. */
Tensor linear(const Tensor &input, const Tensor &weight, const Tensor &bias);

double det3(std::span<const double> m);

} // namespace siie
