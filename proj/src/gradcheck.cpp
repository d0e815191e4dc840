#include <cmath>
#include <vector>

#include "latst/tensor.hpp"

namespace latst {

namespace {

double central_vs_analytic(double analytic, double fplus, double fminus, double h,
                           std::size_t coord) {
    if (!std::isfinite(fplus) || !std::isfinite(fminus)) {
        throw DomainError("finite_diff_check: non-finite evaluation at coordinate " +
                          std::to_string(coord));
    }
    const double central = (fplus - fminus) / (2.0 * h);
    return std::abs(analytic - central) / (std::abs(central) + 1e-12);
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
    if (!(h > 0.0)) throw DomainError("finite_diff_check: step size must be positive");

    Tensor probe = x.detached();
    probe.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = f(probe);
        if (loss.numel() != 1) {
            throw ContractError("finite_diff_check expects a scalar-valued function");
        }
        tape.backward(loss);
    }
    std::vector<double> analytic(probe.numel(), 0.0);
    if (probe.has_grad()) {
        auto g = probe.grad();
        analytic.assign(g.begin(), g.end());
    }

    Tensor work = x.detached();
    auto values = work.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double fplus = f(work).value();
        values[i] = orig - h;
        const double fminus = f(work).value();
        values[i] = orig;
        worst = std::max(worst, central_vs_analytic(analytic[i], fplus, fminus, h, i));
    }
    return worst;
}

double finite_diff_check_params(const std::function<Tensor()>& f, std::span<Tensor> params,
                                double h) {
    if (!(h > 0.0)) throw DomainError("finite_diff_check: step size must be positive");

    for (Tensor& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = f();
        if (loss.numel() != 1) {
            throw ContractError("finite_diff_check expects a scalar-valued function");
        }
        tape.backward(loss);
    }

    double worst = 0.0;
    std::size_t coord = 0;
    for (Tensor& p : params) {
        std::vector<double> analytic(p.numel(), 0.0);
        if (p.has_grad()) {
            auto g = p.grad();
            analytic.assign(g.begin(), g.end());
        }
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i, ++coord) {
            const double orig = values[i];
            values[i] = orig + h;
            const double fplus = f().value();
            values[i] = orig - h;
            const double fminus = f().value();
            values[i] = orig;
            worst = std::max(worst, central_vs_analytic(analytic[i], fplus, fminus, h, coord));
        }
    }
    return worst;
}

}  // namespace latst
