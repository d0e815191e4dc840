#include "latst/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace latst {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

detail::TensorImpl& Tensor::impl() {
    if (!impl_) throw ContractError("operation on undefined tensor");
    return *impl_;
}

const detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw ContractError("operation on undefined tensor");
    return *impl_;
}

detail::TensorImpl& unwrap(Tensor& t) { return t.impl(); }
const detail::TensorImpl& unwrap(const Tensor& t) { return t.impl(); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->data.assign(shape_numel(shape), value);
    t.impl_->shape = std::move(shape);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::numel() const { return impl().data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() { return impl().data; }

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    impl().requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad() const {
    const auto& g = impl().grad;
    if (g.empty()) throw ContractError("gradient not populated; run backward first");
    return g;
}

std::span<double> Tensor::mutable_grad() {
    auto& node = impl();
    if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
    return node.grad;
}

void Tensor::zero_grad() {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value() expects a single-element tensor, got " + shape_str(shape()));
    }
    return impl().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) {
        throw DimensionError("index rank " + std::to_string(index.size()) +
                             " does not match tensor rank " + std::to_string(s.size()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= s[axis]) {
            throw DimensionError("index out of range on axis " + std::to_string(axis));
        }
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl().data[flat];
}

std::uint64_t Tensor::tape_id() const { return impl().tape_id; }

Tensor Tensor::clone() const {
    Tensor out = Tensor::from_data(shape(), {impl().data.begin(), impl().data.end()},
                                   requires_grad());
    return out;
}

Tensor Tensor::detached() const {
    return Tensor::from_data(shape(), {impl().data.begin(), impl().data.end()}, false);
}

bool Tensor::all_finite() const {
    for (double v : impl().data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Tape

namespace {
std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

void Tape::record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
}

void Tape::backward(Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward expects a scalar loss, got " + shape_str(loss.shape()));
    }
    loss.mutable_grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(Tensor& loss, Tape& tape) { tape.backward(loss); }

// ---------------------------------------------------------------------------
// Op plumbing

namespace {

bool grad_wanted(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

// Ensures the output grad buffer exists and is readable; returns nullptr when
// the output never received any gradient (dead branch of the graph).
const std::vector<double>* out_grad(detail::TensorImpl& out) {
    if (out.grad.empty()) return nullptr;
    return &out.grad;
}

std::vector<double>& grad_buf(detail::TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

namespace {

// c += a(m x k) * b(k x n), row-major, ikl ordering for locality
void mm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c += a(m x k) * b(n x k)^T
void mm_abt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

// c += a(k x m)^T * b(k x n)
void mm_atb_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = a + l * m;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const std::string mismatch =
        "matmul shapes do not compose: " + shape_str(sa) + " * " + shape_str(sb);

    std::size_t batch = 1, m = 0, k = 0, n = 0;
    bool a_batched = false, b_batched = false;
    if (sa.size() == 2 && sb.size() == 2) {
        m = sa[0];
        k = sa[1];
        n = sb[1];
        if (sb[0] != k) throw DimensionError(mismatch);
    } else if (sa.size() == 3 && sb.size() == 3) {
        batch = sa[0];
        m = sa[1];
        k = sa[2];
        n = sb[2];
        if (sb[0] != batch || sb[1] != k) throw DimensionError(mismatch);
        a_batched = b_batched = true;
    } else if (sa.size() == 3 && sb.size() == 2) {
        batch = sa[0];
        m = sa[1];
        k = sa[2];
        n = sb[1];
        if (sb[0] != k) throw DimensionError(mismatch);
        a_batched = true;
    } else {
        throw DimensionError(mismatch);
    }

    Shape out_shape = a_batched ? Shape{batch, m, n} : Shape{m, n};
    Tensor out = Tensor::zeros(out_shape, grad_wanted({&a, &b}));

    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = out.mutable_data().data();
    const std::size_t a_step = m * k;
    const std::size_t b_step = b_batched ? k * n : 0;
    const std::size_t c_step = m * n;
    for (std::size_t bt = 0; bt < batch; ++bt) {
        mm_acc(pa + bt * a_step, pb + bt * b_step, pc + bt * c_step, m, k, n);
    }

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cb = b, cout = out;
        bool need_a = a.requires_grad(), need_b = b.requires_grad();
        tape->record([ca, cb, cout, batch, m, k, n, a_step, b_step, c_step, need_a,
                      need_b]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            const double* pa = ca.data().data();
            const double* pb = cb.data().data();
            if (need_a) {
                double* da = grad_buf(unwrap(ca)).data();
                for (std::size_t bt = 0; bt < batch; ++bt) {
                    // dA = dC * B^T
                    mm_abt_acc(pg + bt * c_step, pb + bt * b_step, da + bt * a_step, m, n, k);
                }
            }
            if (need_b) {
                double* db = grad_buf(unwrap(cb)).data();
                for (std::size_t bt = 0; bt < batch; ++bt) {
                    // dB = A^T * dC; the unbatched right operand accumulates over batches
                    mm_atb_acc(pa + bt * a_step, pg + bt * c_step, db + bt * b_step, k, m, n);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary elementwise with optional right-operand broadcast

namespace {

enum class BinKind { add, sub, mul, divide };

struct BroadcastPlan {
    // b index for flat a-index i is (i / block) % modulo
    std::size_t block = 1;
    std::size_t modulo = 1;
};

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    std::size_t off = big.size() - small.size();
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small[i] != big[off + i]) return false;
    }
    return true;
}

bool is_prefix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (small[i] != big[i]) return false;
    }
    return true;
}

BroadcastPlan make_plan(const Tensor& a, const Tensor& b, Broadcast mode, const char* opname) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    BroadcastPlan plan;
    const std::size_t nb = b.numel();
    auto fail = [&] {
        throw DimensionError(std::string(opname) + ": cannot broadcast " + shape_str(sb) +
                             " against " + shape_str(sa));
    };
    switch (mode) {
        case Broadcast::automatic:
            if (sa == sb) {
                plan.block = 1;
                plan.modulo = nb;
            } else if (is_suffix(sb, sa)) {
                plan.block = 1;
                plan.modulo = nb;
            } else if (is_prefix(sb, sa)) {
                plan.block = a.numel() / nb;
                plan.modulo = nb;
            } else {
                fail();
            }
            break;
        case Broadcast::suffix:
            if (!is_suffix(sb, sa)) fail();
            plan.block = 1;
            plan.modulo = nb;
            break;
        case Broadcast::prefix:
            if (!is_prefix(sb, sa)) fail();
            plan.block = a.numel() / nb;
            plan.modulo = nb;
            break;
    }
    return plan;
}

Tensor binary_op(BinKind kind, const Tensor& a, const Tensor& b, Broadcast mode,
                 const char* opname) {
    BroadcastPlan plan = make_plan(a, b, mode, opname);
    const std::size_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape(), grad_wanted({&a, &b}));
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.mutable_data().data();
    const std::size_t block = plan.block, modulo = plan.modulo;
    auto bidx = [block, modulo](std::size_t i) { return (i / block) % modulo; };
    switch (kind) {
        case BinKind::add:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[bidx(i)];
            break;
        case BinKind::sub:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[bidx(i)];
            break;
        case BinKind::mul:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[bidx(i)];
            break;
        case BinKind::divide:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] / pb[bidx(i)];
            break;
    }

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cb = b, cout = out;
        bool need_a = a.requires_grad(), need_b = b.requires_grad();
        tape->record([kind, ca, cb, cout, n, block, modulo, need_a, need_b]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            const double* pa = ca.data().data();
            const double* pb = cb.data().data();
            auto bidx = [block, modulo](std::size_t i) { return (i / block) % modulo; };
            double* da = need_a ? grad_buf(unwrap(ca)).data() : nullptr;
            double* db = need_b ? grad_buf(unwrap(cb)).data() : nullptr;
            switch (kind) {
                case BinKind::add:
                    for (std::size_t i = 0; i < n; ++i) {
                        if (da) da[i] += pg[i];
                        if (db) db[bidx(i)] += pg[i];
                    }
                    break;
                case BinKind::sub:
                    for (std::size_t i = 0; i < n; ++i) {
                        if (da) da[i] += pg[i];
                        if (db) db[bidx(i)] -= pg[i];
                    }
                    break;
                case BinKind::mul:
                    for (std::size_t i = 0; i < n; ++i) {
                        if (da) da[i] += pg[i] * pb[bidx(i)];
                        if (db) db[bidx(i)] += pg[i] * pa[i];
                    }
                    break;
                case BinKind::divide:
                    for (std::size_t i = 0; i < n; ++i) {
                        const double bv = pb[bidx(i)];
                        if (da) da[i] += pg[i] / bv;
                        if (db) db[bidx(i)] -= pg[i] * pa[i] / (bv * bv);
                    }
                    break;
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Broadcast mode) {
    return binary_op(BinKind::add, a, b, mode, "add");
}
Tensor sub(const Tensor& a, const Tensor& b, Broadcast mode) {
    return binary_op(BinKind::sub, a, b, mode, "sub");
}
Tensor mul(const Tensor& a, const Tensor& b, Broadcast mode) {
    return binary_op(BinKind::mul, a, b, mode, "mul");
}
Tensor div(const Tensor& a, const Tensor& b, Broadcast mode) {
    return binary_op(BinKind::divide, a, b, mode, "div");
}

// ---------------------------------------------------------------------------
// Unary elementwise

namespace {

Tensor unary_op(const Tensor& a, const std::function<double(double)>& fwd,
                const std::function<double(double, double, double)>& dgrad) {
    // dgrad(x, y, g) returns the contribution to dL/dx given output y and
    // upstream gradient g.
    const std::size_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const double* pa = a.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cout = out;
        tape->record([ca, cout, dgrad, n]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            const double* pa = ca.data().data();
            const double* py = cout.data().data();
            double* da = grad_buf(unwrap(ca)).data();
            for (std::size_t i = 0; i < n; ++i) da[i] += dgrad(pa[i], py[i], pg[i]);
        });
    }
    return out;
}

}  // namespace

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); },
        [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > 0.0)) {
            throw DomainError("log requires positive entries, got " + std::to_string(v));
        }
    }
    return unary_op(
        a, [](double x) { return std::log(x); },
        [](double x, double, double g) { return g / x; });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        a, [](double x) { return -x; }, [](double, double, double g) { return -g; });
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        a, [c](double x) { return c * x; }, [c](double, double, double g) { return c * g; });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(
        a, [c](double x) { return x + c; }, [](double, double, double g) { return g; });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t count = 1;  // size of the reduced axis
    std::size_t inner = 1;
};

AxisSplit split_axis(const Tensor& a, std::size_t axis) {
    const Shape& s = a.shape();
    if (axis >= s.size()) {
        throw DimensionError("reduce axis " + std::to_string(axis) + " out of range for " +
                             shape_str(s));
    }
    AxisSplit split;
    for (std::size_t i = 0; i < axis; ++i) split.outer *= s[i];
    split.count = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) split.inner *= s[i];
    return split;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape out;
    out.reserve(s.size() - 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) out.push_back(s[i]);
    }
    return out;
}

enum class ReduceKind { sum, mean, max };

Tensor reduce_op(ReduceKind kind, const Tensor& a, std::size_t axis) {
    AxisSplit sp = split_axis(a, axis);
    Tensor out = Tensor::zeros(drop_axis(a.shape(), axis), a.requires_grad());
    const double* pa = a.data().data();
    double* po = out.mutable_data().data();
    // argmax flat indices, captured for the max backward routing
    std::shared_ptr<std::vector<std::size_t>> arg;
    if (kind == ReduceKind::max) arg = std::make_shared<std::vector<std::size_t>>(out.numel());

    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t o_idx = o * sp.inner + i;
            if (kind == ReduceKind::max) {
                double best = pa[(o * sp.count) * sp.inner + i];
                std::size_t best_flat = (o * sp.count) * sp.inner + i;
                for (std::size_t t = 1; t < sp.count; ++t) {
                    const std::size_t flat = (o * sp.count + t) * sp.inner + i;
                    if (pa[flat] > best) {  // ties keep the first index
                        best = pa[flat];
                        best_flat = flat;
                    }
                }
                po[o_idx] = best;
                (*arg)[o_idx] = best_flat;
            } else {
                double acc = 0.0;
                for (std::size_t t = 0; t < sp.count; ++t) {
                    acc += pa[(o * sp.count + t) * sp.inner + i];
                }
                po[o_idx] = (kind == ReduceKind::mean) ? acc / static_cast<double>(sp.count) : acc;
            }
        }
    }

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cout = out;
        tape->record([kind, ca, cout, sp, arg]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            double* da = grad_buf(unwrap(ca)).data();
            const double inv = 1.0 / static_cast<double>(sp.count);
            for (std::size_t o = 0; o < sp.outer; ++o) {
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    const std::size_t o_idx = o * sp.inner + i;
                    switch (kind) {
                        case ReduceKind::sum:
                            for (std::size_t t = 0; t < sp.count; ++t) {
                                da[(o * sp.count + t) * sp.inner + i] += pg[o_idx];
                            }
                            break;
                        case ReduceKind::mean:
                            for (std::size_t t = 0; t < sp.count; ++t) {
                                da[(o * sp.count + t) * sp.inner + i] += pg[o_idx] * inv;
                            }
                            break;
                        case ReduceKind::max:
                            da[(*arg)[o_idx]] += pg[o_idx];
                            break;
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, std::size_t axis) { return reduce_op(ReduceKind::sum, a, axis); }
Tensor reduce_mean(const Tensor& a, std::size_t axis) {
    return reduce_op(ReduceKind::mean, a, axis);
}
Tensor reduce_max(const Tensor& a, std::size_t axis) { return reduce_op(ReduceKind::max, a, axis); }

Tensor reduce_sum_all(const Tensor& a) {
    return reduce_sum(reshape(a, Shape{a.numel()}), 0);
}

Tensor reduce_mean_all(const Tensor& a) {
    return reduce_mean(reshape(a, Shape{a.numel()}), 0);
}

// ---------------------------------------------------------------------------
// Shape ops (all copying; the engine never aliases storage)

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw DimensionError("reshape from " + shape_str(a.shape()) + " to " +
                             shape_str(new_shape) + " changes element count");
    }
    Tensor out =
        Tensor::from_data(std::move(new_shape), {a.data().begin(), a.data().end()},
                          a.requires_grad());
    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cout = out;
        tape->record([ca, cout]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            double* da = grad_buf(unwrap(ca)).data();
            for (std::size_t i = 0; i < g->size(); ++i) da[i] += (*g)[i];
        });
    }
    return out;
}

Tensor transpose_last2(const Tensor& a) {
    const Shape& s = a.shape();
    if (s.size() < 2) {
        throw DimensionError("transpose_last2 needs rank >= 2, got " + shape_str(s));
    }
    const std::size_t m = s[s.size() - 2], n = s[s.size() - 1];
    const std::size_t batch = a.numel() / (m * n);
    Shape out_shape = s;
    out_shape[s.size() - 2] = n;
    out_shape[s.size() - 1] = m;
    Tensor out = Tensor::zeros(out_shape, a.requires_grad());
    const double* pa = a.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = pa + b * m * n;
        double* dst = po + b * m * n;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
        }
    }
    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cout = out;
        tape->record([ca, cout, batch, m, n]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            double* da = grad_buf(unwrap(ca)).data();
            for (std::size_t b = 0; b < batch; ++b) {
                const double* gsrc = pg + b * m * n;
                double* dst = da + b * m * n;
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += gsrc[j * m + i];
                }
            }
        });
    }
    return out;
}

Tensor slice_last(const Tensor& a, std::size_t offset, std::size_t length) {
    const Shape& s = a.shape();
    if (s.empty()) throw DimensionError("slice_last needs rank >= 1");
    const std::size_t n = s.back();
    if (length == 0 || offset + length > n) {
        throw DimensionError("slice_last [" + std::to_string(offset) + ", " +
                             std::to_string(offset + length) + ") out of range for axis size " +
                             std::to_string(n));
    }
    Shape out_shape = s;
    out_shape.back() = length;
    const std::size_t rows = a.numel() / n;
    Tensor out = Tensor::zeros(out_shape, a.requires_grad());
    const double* pa = a.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(po + r * length, pa + r * n + offset, length * sizeof(double));
    }
    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cout = out;
        tape->record([ca, cout, rows, n, offset, length]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            double* da = grad_buf(unwrap(ca)).data();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < length; ++j) {
                    da[r * n + offset + j] += pg[r * length + j];
                }
            }
        });
    }
    return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_last needs at least one tensor");
    const Shape& first = parts.front().shape();
    if (first.empty()) throw DimensionError("concat_last needs rank >= 1");
    std::size_t total_last = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size() ||
            !std::equal(s.begin(), s.end() - 1, first.begin(), first.end() - 1)) {
            throw DimensionError("concat_last shape mismatch: " + shape_str(first) + " vs " +
                                 shape_str(s));
        }
        total_last += s.back();
        rg = rg || p.requires_grad();
    }
    Shape out_shape = first;
    out_shape.back() = total_last;
    const std::size_t rows = shape_numel(out_shape) / total_last;
    Tensor out = Tensor::zeros(out_shape, rg);
    double* po = out.mutable_data().data();
    std::size_t col = 0;
    for (const Tensor& p : parts) {
        const std::size_t len = p.shape().back();
        const double* pp = p.data().data();
        for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(po + r * total_last + col, pp + r * len, len * sizeof(double));
        }
        col += len;
    }
    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        std::vector<Tensor> cparts = parts;
        Tensor cout = out;
        tape->record([cparts, cout, rows, total_last]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            std::size_t col = 0;
            for (Tensor& p : cparts) {
                const std::size_t len = p.shape().back();
                if (p.requires_grad()) {
                    double* dp = grad_buf(unwrap(p)).data();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < len; ++j) {
                            dp[r * len + j] += pg[r * total_last + col + j];
                        }
                    }
                }
                col += len;
            }
        });
    }
    return out;
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ContractError("dropout probability must lie in [0, 1), got " + std::to_string(p));
    }
    if (p == 0.0) return a;
    const std::size_t n = a.numel();
    auto mask = std::make_shared<std::vector<double>>(n);
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < n; ++i) {
        (*mask)[i] = (rng.uniform() >= p) ? keep_scale : 0.0;
    }
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const double* pa = a.data().data();
    double* po = out.mutable_data().data();
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * (*mask)[i];

    Tape* tape = active_tape();
    if (tape && out.requires_grad()) {
        unwrap(out).tape_id = tape->id();
        Tensor ca = a, cout = out;
        tape->record([ca, cout, mask, n]() mutable {
            const std::vector<double>* g = out_grad(unwrap(cout));
            if (!g) return;
            const double* pg = g->data();
            double* da = grad_buf(unwrap(ca)).data();
            for (std::size_t i = 0; i < n; ++i) da[i] += pg[i] * (*mask)[i];
        });
    }
    return out;
}

}  // namespace latst
