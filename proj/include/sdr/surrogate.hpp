#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdr/kernel.hpp"

namespace sdr {

/// Linear selection map from a full problem point (t, x[, u, p]) to the
/// surrogate input y. Each surrogate input picks one coordinate; the sparsity
/// pattern determines which Jacobian blocks of the composed model can be
/// nonzero (in the benchmark y = (alpha, delta), both states).
struct DomainProjection {
  enum class Source { Time, State, Control, Param };
  struct Entry {
    Source source = Source::State;
    int index = 0;
  };

  std::vector<Entry> inputs;
  int n_x = 0;
  int n_u = 0;
  int n_p = 0;

  int dim() const { return static_cast<int>(inputs.size()); }
  Vec project(double t, const Vec& x, const Vec& u, const Vec& p) const;
  bool uses(Source s) const;

  /// Selection matrices dy/dx (d x n_x), dy/du, dy/dp.
  Mat selection_x() const;
  Mat selection_u() const;
  Mat selection_p() const;
};

/// The benchmark projection: y = (x[4], x[6]) = (alpha, delta).
DomainProjection alpha_delta_projection(int n_x, int n_u, int n_p);

/// A component function g: R^d -> R^{n_g} on the surrogate input space, with
/// derivatives. Implemented by kernel surrogates, the truth polynomials, and
/// perturbation wrappers used in sensitivity validation.
class ComponentModel {
 public:
  virtual ~ComponentModel() = default;
  virtual int input_dim() const = 0;
  virtual int n_outputs() const = 0;
  virtual Vec values(const Vec& y) const = 0;
  virtual Mat jacobian(const Vec& y) const = 0;  // n_g x d
  virtual Mat hessian(const Vec& y, int component) const = 0;  // d x d
};

struct SurrogateModel;
using SurrogatePtr = std::shared_ptr<const SurrogateModel>;

/// Kernel-interpolant surrogate with shared sample sites, one interpolant per
/// component and frozen RKHS-norm scales gamma_i.
struct SurrogateModel : ComponentModel {
  Mat sites;    // N x d
  Mat values_g; // N x n_g
  std::vector<KernelConfig> kernels;        // one per component
  std::vector<Interpolant> interpolants;    // one per component
  Vec gamma;                                // per-component scale; valid once frozen
  bool gamma_frozen = false;
  DomainProjection projection;

  int input_dim() const override { return static_cast<int>(sites.cols()); }
  int n_outputs() const override { return static_cast<int>(values_g.cols()); }
  int n_samples() const { return static_cast<int>(sites.rows()); }

  Vec values(const Vec& y) const override;
  Mat jacobian(const Vec& y) const override;
  Mat hessian(const Vec& y, int component) const override;
};

SurrogateModel fit_surrogate(const Mat& sites, const Mat& values,
                             const std::vector<KernelConfig>& kernels,
                             const DomainProjection& projection);
SurrogateModel fit_surrogate(const Mat& sites, const Mat& values, const KernelConfig& kernel,
                             const DomainProjection& projection);

/// gamma_i := ||(g_c)_i|| via the interpolant RKHS norm, with fallback 1 for a
/// numerically zero column. Never recomputed on refine.
SurrogateModel freeze_gamma(SurrogateModel model);

/// Appends (y_plus, g_star_values) and refits. gamma is carried over
/// unchanged; the input model is untouched.
SurrogateModel refine(const SurrogateModel& model, const Vec& y_plus, const Vec& g_star_values);

/// Truth-free post-refinement error indicator
/// eps_i^a(y) = gamma_i * P^a(y; Y u {trial}). `trial` may be empty for the
/// no-refinement bound. Requires frozen gamma.
Vec epsilon(const SurrogateModel& model, const Vec& y, const std::optional<Vec>& trial,
            const MultiIndex& alpha);

/// Model values and Jacobian blocks at a full problem point, chained through
/// the projection. Blocks outside the sparsity pattern are exactly zero.
struct GEval {
  Vec values;  // n_g
  Mat jac_x;   // n_g x n_x
  Mat jac_u;   // n_g x n_u
  Mat jac_p;   // n_g x n_p
};

Vec eval_g(const ComponentModel& g, const DomainProjection& proj, double t, const Vec& x,
           const Vec& u, const Vec& p);
GEval eval_g_jacobians(const ComponentModel& g, const DomainProjection& proj, double t,
                       const Vec& x, const Vec& u, const Vec& p);

/// sum_i w_i * Hess_{(x,u,p)} g_i, as one (n_x+n_u+n_p)^2 matrix. Used for the
/// exact Hessians of composite dynamics and costs.
Mat g_hessian_weighted(const ComponentModel& g, const DomainProjection& proj, double t,
                       const Vec& x, const Vec& u, const Vec& p, const Vec& w);

/// base + scale * bump, for directional derivative checks. The bump supplies
/// its own derivatives.
class PerturbedModel : public ComponentModel {
 public:
  PerturbedModel(std::shared_ptr<const ComponentModel> base,
                 std::shared_ptr<const ComponentModel> bump, double scale)
      : base_(std::move(base)), bump_(std::move(bump)), scale_(scale) {}

  int input_dim() const override { return base_->input_dim(); }
  int n_outputs() const override { return base_->n_outputs(); }
  Vec values(const Vec& y) const override {
    return base_->values(y) + scale_ * bump_->values(y);
  }
  Mat jacobian(const Vec& y) const override {
    return base_->jacobian(y) + scale_ * bump_->jacobian(y);
  }
  Mat hessian(const Vec& y, int c) const override {
    return base_->hessian(y, c) + scale_ * bump_->hessian(y, c);
  }

 private:
  std::shared_ptr<const ComponentModel> base_;
  std::shared_ptr<const ComponentModel> bump_;
  double scale_;
};

/// Smooth kernel-shaped bump b_i(y) = amplitude_i * Psi(||y - center||/l),
/// used as a perturbation direction in sensitivity checks.
class KernelBump : public ComponentModel {
 public:
  KernelBump(KernelConfig cfg, Vec center, Vec amplitudes)
      : cfg_(std::move(cfg)), center_(std::move(center)), amplitudes_(std::move(amplitudes)) {}

  int input_dim() const override { return cfg_.input_dim; }
  int n_outputs() const override { return static_cast<int>(amplitudes_.size()); }
  Vec values(const Vec& y) const override;
  Mat jacobian(const Vec& y) const override;
  Mat hessian(const Vec& y, int component) const override;

 private:
  KernelConfig cfg_;
  Vec center_;
  Vec amplitudes_;
};

/// JSON checkpoint with fields sites, values, family, lengthscale, gamma.
std::string surrogate_to_json(const SurrogateModel& model);
SurrogateModel surrogate_from_json(const std::string& text, const DomainProjection& projection);

}  // namespace sdr
