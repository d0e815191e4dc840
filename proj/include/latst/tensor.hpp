#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "latst/error.hpp"
#include "latst/rng.hpp"

namespace latst {

// Dimension sizes, outermost first. Row-major flat storage throughout;
// rank-0 (empty shape) is a scalar with one element.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;   // empty until first accumulation; data.size() once allocated
    std::uint64_t tape_id = 0;  // id of the tape that recorded the producing op, 0 if none
};
}  // namespace detail

// Dense 64-bit float tensor. Copying a Tensor copies the handle, not the
// buffer; clone()/detached() make deep copies. All dimensions are >= 1.
class Tensor {
public:
    Tensor() = default;  // undefined handle; defined() is false

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const;
    std::span<double> mutable_data();

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);

    bool has_grad() const;
    std::span<const double> grad() const;  // ContractError if never allocated
    std::span<double> mutable_grad();      // allocates zeros on first use
    void zero_grad();

    double value() const;  // single-element convenience
    double at(std::initializer_list<std::size_t> index) const;

    std::uint64_t tape_id() const;

    Tensor clone() const;     // deep copy, keeps requires_grad
    Tensor detached() const;  // deep copy with gradient tracking off

    bool all_finite() const;

    // Stable identity of the underlying buffer (aliasing checks in tests).
    const void* id() const { return impl_.get(); }

private:
    std::shared_ptr<detail::TensorImpl> impl_;

    detail::TensorImpl& impl();
    const detail::TensorImpl& impl() const;

    friend class Tape;
    friend detail::TensorImpl& unwrap(Tensor& t);
    friend const detail::TensorImpl& unwrap(const Tensor& t);
};

// Raw access for op implementations (tape_id bookkeeping); not part of the
// user-facing surface.
detail::TensorImpl& unwrap(Tensor& t);
const detail::TensorImpl& unwrap(const Tensor& t);

// Ordered record of one forward computation. Ops append their backward step
// as they execute, so step order is a topological order of the forward pass;
// backward() runs the steps exactly once, last to first. A tape and the
// tensors recorded on it belong to a single thread.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t id() const { return id_; }
    std::size_t size() const { return steps_.size(); }

    void record(std::function<void()> backward_step);

    // Seeds dLoss/dLoss = 1 and runs the reverse sweep. The loss must be a
    // single-element tensor computed under this tape.
    void backward(Tensor& loss);

    void clear() { steps_.clear(); }

private:
    std::uint64_t id_;
    std::vector<std::function<void()>> steps_;
};

// Ambient tape for the current thread; ops record onto it whenever it is set
// and at least one input requires gradient.
Tape* active_tape();

class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

// Broadcasting for binary elementwise ops. Only the right operand
// broadcasts: `suffix` matches b against the trailing axes of a (bias over
// leading batch axes), `prefix` against the leading axes (per-row stats over
// a trailing axis). `automatic` picks equal > suffix > prefix and raises a
// DimensionError when nothing matches. Model code passes an explicit side
// wherever both could match.
enum class Broadcast { automatic, suffix, prefix };

Tensor matmul(const Tensor& a, const Tensor& b);  // 2D*2D, 3D*3D (batched), 3D*2D

Tensor add(const Tensor& a, const Tensor& b, Broadcast mode = Broadcast::automatic);
Tensor sub(const Tensor& a, const Tensor& b, Broadcast mode = Broadcast::automatic);
Tensor mul(const Tensor& a, const Tensor& b, Broadcast mode = Broadcast::automatic);
Tensor div(const Tensor& a, const Tensor& b, Broadcast mode = Broadcast::automatic);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on non-positive entries
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor reduce_sum(const Tensor& a, std::size_t axis);
Tensor reduce_mean(const Tensor& a, std::size_t axis);
// Gradient routes to the first (lowest flat index) maximum of each slice.
Tensor reduce_max(const Tensor& a, std::size_t axis);
Tensor reduce_sum_all(const Tensor& a);   // rank-0 result
Tensor reduce_mean_all(const Tensor& a);  // rank-0 result

Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose_last2(const Tensor& a);
Tensor slice_last(const Tensor& a, std::size_t offset, std::size_t length);
Tensor concat_last(const std::vector<Tensor>& parts);

// Inverted-scaling dropout: kept entries are scaled by 1/(1-p) so the
// expectation matches the identity map. p must lie in [0, 1).
Tensor dropout(const Tensor& a, double p, Rng& rng);

// Reverse-mode sweep over `tape`; fills grad on every requires_grad tensor
// that participated in computing `loss`.
void backward(Tensor& loss, Tape& tape);

// Max over coordinates of |analytic - central difference| / (|central| + 1e-12)
// for a scalar-valued f. h is the absolute central-difference step.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h);

// Same check for a function of several parameter tensors, nudged in place.
double finite_diff_check_params(const std::function<Tensor()>& f, std::span<Tensor> params,
                                double h);

}  // namespace latst
