#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mdfg/common.hpp"

// Dense double-precision arrays with a tape for reverse-mode differentiation.
namespace mdfg::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);
    explicit Tensor(Shape s, double fill = 0.0);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }
    double item() const;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records primitive applications in creation order, which is a topological order.
/// A tape and its vars belong to one thread.
class Tape {
public:
    using Pullback = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Adds a derived node. The pullback is kept only if some parent is tracked.
    Var record(Tensor value, std::initializer_list<Var> parents, Pullback pullback);
    Var record(Tensor value, std::span<const Var> parents, Pullback pullback);

    /// Seeds d(loss)/d(loss) = 1 and runs every pullback once in reverse order.
    void backward(Var loss);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Gradient of a node after backward; zeros if nothing flowed into it.
    Tensor grad(Var v) const;

    /// Accumulation buffer for pullbacks; nullptr for untracked nodes.
    std::vector<double>* grad_buffer(std::size_t id);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        Pullback pullback;
    };
    std::deque<Node> nodes_;
};

inline constexpr std::size_t kAllAxes = static_cast<std::size_t>(-1);

// Elementwise; shapes must match unless one operand is a single element.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double c);

Var matmul(Var a, Var b);               // (m,k) x (k,n)
Var bias_add(Var a, Var bias);          // adds a length-n vector to every row of (..., n)
Var conv1d(Var x, Var w, Var bias, std::size_t stride, std::size_t padding);  // (B,Cin,L), (Cout,Cin,K), (Cout)
Var conv1d(Var x, Var w, std::size_t stride, std::size_t padding);
Var relu(Var a);
Var log(Var a);
Var exp(Var a);

/// Rows (axis 1) or columns (axis 0) of a matrix scaled to unit Euclidean norm.
/// Throws ZeroVectorEmbedding when a norm falls below min_norm.
Var l2_normalize(Var a, std::size_t axis, double min_norm = 1e-12);

Var sum(Var a, std::size_t axis = kAllAxes);
Var mean(Var a, std::size_t axis = kAllAxes);
Var max(Var a, std::size_t axis = kAllAxes);  // ties route the gradient to the first maximum

Var concat(std::span<const Var> parts, std::size_t axis);
Var transpose(Var a);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var reshape(Var a, Shape shape);

/// Max relative error between tape gradients and central differences,
/// with relative error |a - b| / max(1e-8, |a| + |b|).
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;
double grad_check(const TapeFunction& f, const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace mdfg::tensor
