#include "xmrc/grad_check.hpp"

#include <cmath>
#include <cstring>

namespace xmrc {

template <typename Scalar>
GradCheckReport grad_check(const LossBuilder<Scalar>& f, std::span<Parameter<Scalar>* const> params,
                           double step, double tol, std::uint64_t seed, bool hold_detached) {
  using Mode = typename Tape<Scalar>::DetachMode;
  std::vector<Matrix<Scalar>> held;
  auto evaluate = [&]() {
    Tape<Scalar> tape(seed);
    if (hold_detached) tape.set_detach_store(&held, Mode::Replay);
    return static_cast<double>(f(tape).item());
  };

  for (auto* p : params) p->zero_grad();
  {
    Tape<Scalar> tape(seed);
    if (hold_detached) tape.set_detach_store(&held, Mode::Record);
    Var<Scalar> loss = f(tape);
    tape.backward(loss);
  }
  const double base = evaluate();
  const double again = evaluate();
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw Error("grad_check: loss is not deterministic (" + std::to_string(base) + " vs " +
                std::to_string(again) + ")");
  }

  GradCheckReport report;
  for (auto* p : params) {
    for (Index r = 0; r < p->value.rows(); ++r) {
      for (Index c = 0; c < p->value.cols(); ++c) {
        const Scalar saved = p->value(r, c);
        p->value(r, c) = saved + static_cast<Scalar>(step);
        const double up = evaluate();
        p->value(r, c) = saved - static_cast<Scalar>(step);
        const double down = evaluate();
        p->value(r, c) = saved;

        const double numeric = (up - down) / (2.0 * step);
        const double analytic = static_cast<double>(p->grad(r, c));
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.checked;
        if (report.param.empty() || rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.param = p->name;
          report.row = r;
          report.col = c;
          report.analytic = analytic;
          report.numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

template GradCheckReport grad_check<float>(const LossBuilder<float>&, std::span<Parameter<float>* const>, double,
                                           double, std::uint64_t, bool);
template GradCheckReport grad_check<double>(const LossBuilder<double>&, std::span<Parameter<double>* const>,
                                            double, double, std::uint64_t, bool);

}  // namespace xmrc
