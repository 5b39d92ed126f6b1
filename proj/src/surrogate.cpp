#include "sdr/surrogate.hpp"

#include <nlohmann/json.hpp>

namespace sdr {

Vec DomainProjection::project(double t, const Vec& x, const Vec& u, const Vec& p) const {
  Vec y(dim());
  for (int j = 0; j < dim(); ++j) {
    const Entry& e = inputs[static_cast<std::size_t>(j)];
    switch (e.source) {
      case Source::Time: y(j) = t; break;
      case Source::State: y(j) = x(e.index); break;
      case Source::Control: y(j) = u(e.index); break;
      case Source::Param: y(j) = p(e.index); break;
    }
  }
  return y;
}

bool DomainProjection::uses(Source s) const {
  for (const Entry& e : inputs) {
    if (e.source == s) return true;
  }
  return false;
}

namespace {
Mat selection(const DomainProjection& proj, DomainProjection::Source s, int n) {
  Mat sel = Mat::Zero(proj.dim(), n);
  for (int j = 0; j < proj.dim(); ++j) {
    const auto& e = proj.inputs[static_cast<std::size_t>(j)];
    if (e.source == s) sel(j, e.index) = 1.0;
  }
  return sel;
}
}  // namespace

Mat DomainProjection::selection_x() const { return selection(*this, Source::State, n_x); }
Mat DomainProjection::selection_u() const { return selection(*this, Source::Control, n_u); }
Mat DomainProjection::selection_p() const { return selection(*this, Source::Param, n_p); }

DomainProjection alpha_delta_projection(int n_x, int n_u, int n_p) {
  DomainProjection proj;
  proj.inputs = {{DomainProjection::Source::State, 4}, {DomainProjection::Source::State, 6}};
  proj.n_x = n_x;
  proj.n_u = n_u;
  proj.n_p = n_p;
  return proj;
}

Vec SurrogateModel::values(const Vec& y) const {
  Vec g(n_outputs());
  for (int i = 0; i < n_outputs(); ++i) g(i) = interp_eval(interpolants[static_cast<std::size_t>(i)], y);
  return g;
}

Mat SurrogateModel::jacobian(const Vec& y) const {
  const int d = input_dim();
  Mat jac(n_outputs(), d);
  for (int i = 0; i < n_outputs(); ++i) {
    for (int j = 0; j < d; ++j) {
      jac(i, j) = interp_eval(interpolants[static_cast<std::size_t>(i)], y, unit_index(d, j));
    }
  }
  return jac;
}

Mat SurrogateModel::hessian(const Vec& y, int component) const {
  const int d = input_dim();
  Mat h(d, d);
  const auto& interp = interpolants[static_cast<std::size_t>(component)];
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      MultiIndex a = zero_index(d);
      a[static_cast<std::size_t>(i)] += 1;
      a[static_cast<std::size_t>(j)] += 1;
      h(i, j) = interp_eval(interp, y, a);
      h(j, i) = h(i, j);
    }
  }
  return h;
}

SurrogateModel fit_surrogate(const Mat& sites, const Mat& values,
                             const std::vector<KernelConfig>& kernels,
                             const DomainProjection& projection) {
  if (sites.rows() != values.rows() || sites.rows() < 1) {
    throw Error(ErrorCode::InvalidRequest, "fit_surrogate: need N >= 1 matching sites/values");
  }
  if (static_cast<int>(kernels.size()) != values.cols()) {
    throw Error(ErrorCode::InvalidRequest, "fit_surrogate: one kernel config per component");
  }
  if (!values.allFinite()) {
    throw Error(ErrorCode::InvalidRequest, "fit_surrogate: values must be finite");
  }
  SurrogateModel model;
  model.sites = sites;
  model.values_g = values;
  model.kernels = kernels;
  model.projection = projection;
  model.gamma = Vec::Ones(values.cols());

  // Components with identical kernel configs share one Gram factorization.
  std::vector<std::shared_ptr<const GramFactorization>> facts(kernels.size());
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (kernels[j] == kernels[i]) {
        facts[i] = facts[j];
        break;
      }
    }
    if (!facts[i]) facts[i] = std::make_shared<GramFactorization>(build_gram(kernels[i], sites));
  }
  model.interpolants.reserve(kernels.size());
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    model.interpolants.push_back(fit(facts[i], values.col(static_cast<int>(i))));
  }
  return model;
}

SurrogateModel fit_surrogate(const Mat& sites, const Mat& values, const KernelConfig& kernel,
                             const DomainProjection& projection) {
  std::vector<KernelConfig> kernels(static_cast<std::size_t>(values.cols()), kernel);
  return fit_surrogate(sites, values, kernels, projection);
}

SurrogateModel freeze_gamma(SurrogateModel model) {
  for (int i = 0; i < model.n_outputs(); ++i) {
    const double norm = rkhs_norm(model.interpolants[static_cast<std::size_t>(i)]);
    model.gamma(i) = norm > 0.0 ? norm : 1.0;
  }
  model.gamma_frozen = true;
  return model;
}

SurrogateModel refine(const SurrogateModel& model, const Vec& y_plus, const Vec& g_star_values) {
  if (g_star_values.size() != model.n_outputs() || !g_star_values.allFinite()) {
    throw Error(ErrorCode::InvalidRequest, "refine: need finite values for all components");
  }
  Mat sites(model.n_samples() + 1, model.input_dim());
  sites.topRows(model.n_samples()) = model.sites;
  sites.bottomRows(1) = y_plus.transpose();
  Mat values(model.n_samples() + 1, model.n_outputs());
  values.topRows(model.n_samples()) = model.values_g;
  values.bottomRows(1) = g_star_values.transpose();

  SurrogateModel refined = fit_surrogate(sites, values, model.kernels, model.projection);
  refined.gamma = model.gamma;
  refined.gamma_frozen = model.gamma_frozen;
  return refined;
}

Vec epsilon(const SurrogateModel& model, const Vec& y, const std::optional<Vec>& trial,
            const MultiIndex& alpha) {
  if (!model.gamma_frozen) {
    throw Error(ErrorCode::InvalidRequest, "epsilon: gamma must be frozen first");
  }
  Vec eps(model.n_outputs());
  for (int i = 0; i < model.n_outputs(); ++i) {
    const auto& interp = model.interpolants[static_cast<std::size_t>(i)];
    const auto& cfg = model.kernels[static_cast<std::size_t>(i)];
    const auto& fact = *interp.factorization;
    double p;
    if (!trial) {
      p = power_function(cfg, fact, y, alpha);
    } else {
      const PowerUpdate upd = prepare_power_update(cfg, fact, *trial);
      const Vec v = fact.kernel_vector(y, alpha);
      const double base_sq =
          kernel_diag(cfg, alpha) - (fact.size() > 0 ? v.dot(fact.solve(v)) : 0.0);
      const double k_alpha = kernel_deriv1(cfg, y, *trial, alpha);
      const double v_dot_c = fact.size() > 0 ? v.dot(upd.c) : 0.0;
      p = std::sqrt(updated_power_sq(upd, std::max(0.0, base_sq), k_alpha, v_dot_c));
    }
    eps(i) = model.gamma(i) * p;
  }
  return eps;
}

Vec eval_g(const ComponentModel& g, const DomainProjection& proj, double t, const Vec& x,
           const Vec& u, const Vec& p) {
  return g.values(proj.project(t, x, u, p));
}

GEval eval_g_jacobians(const ComponentModel& g, const DomainProjection& proj, double t,
                       const Vec& x, const Vec& u, const Vec& p) {
  GEval out;
  const Vec y = proj.project(t, x, u, p);
  out.values = g.values(y);
  const Mat jac_y = g.jacobian(y);
  const int n_g = g.n_outputs();
  out.jac_x = Mat::Zero(n_g, proj.n_x);
  out.jac_u = Mat::Zero(n_g, proj.n_u);
  out.jac_p = Mat::Zero(n_g, proj.n_p);
  for (int j = 0; j < proj.dim(); ++j) {
    const auto& e = proj.inputs[static_cast<std::size_t>(j)];
    switch (e.source) {
      case DomainProjection::Source::Time: break;
      case DomainProjection::Source::State: out.jac_x.col(e.index) += jac_y.col(j); break;
      case DomainProjection::Source::Control: out.jac_u.col(e.index) += jac_y.col(j); break;
      case DomainProjection::Source::Param: out.jac_p.col(e.index) += jac_y.col(j); break;
    }
  }
  return out;
}

Mat g_hessian_weighted(const ComponentModel& g, const DomainProjection& proj, double t,
                       const Vec& x, const Vec& u, const Vec& p, const Vec& w) {
  const int nz = proj.n_x + proj.n_u + proj.n_p;
  const Vec y = proj.project(t, x, u, p);
  Mat hy = Mat::Zero(proj.dim(), proj.dim());
  for (int i = 0; i < g.n_outputs(); ++i) {
    if (w(i) != 0.0) hy += w(i) * g.hessian(y, i);
  }
  // Scatter y-space Hessian into (x,u,p) coordinates through the selection.
  auto offset = [&](const DomainProjection::Entry& e) -> int {
    switch (e.source) {
      case DomainProjection::Source::State: return e.index;
      case DomainProjection::Source::Control: return proj.n_x + e.index;
      case DomainProjection::Source::Param: return proj.n_x + proj.n_u + e.index;
      case DomainProjection::Source::Time: return -1;
    }
    return -1;
  };
  Mat h = Mat::Zero(nz, nz);
  for (int a = 0; a < proj.dim(); ++a) {
    const int ia = offset(proj.inputs[static_cast<std::size_t>(a)]);
    if (ia < 0) continue;
    for (int b = 0; b < proj.dim(); ++b) {
      const int ib = offset(proj.inputs[static_cast<std::size_t>(b)]);
      if (ib < 0) continue;
      h(ia, ib) += hy(a, b);
    }
  }
  return h;
}

Vec KernelBump::values(const Vec& y) const {
  const double r = (y - center_).norm() / cfg_.lengthscale;
  return amplitudes_ * wendland_eval(cfg_.family, r, 0);
}

Mat KernelBump::jacobian(const Vec& y) const {
  const int d = cfg_.input_dim;
  Mat jac(n_outputs(), d);
  for (int j = 0; j < d; ++j) {
    const double dj = kernel_deriv1(cfg_, y, center_, unit_index(d, j));
    jac.col(j) = amplitudes_ * dj;
  }
  return jac;
}

Mat KernelBump::hessian(const Vec& y, int component) const {
  const int d = cfg_.input_dim;
  Mat h(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      MultiIndex a = zero_index(d);
      a[static_cast<std::size_t>(i)] += 1;
      a[static_cast<std::size_t>(j)] += 1;
      h(i, j) = amplitudes_(component) * kernel_deriv1(cfg_, y, center_, a);
      h(j, i) = h(i, j);
    }
  }
  return h;
}

std::string surrogate_to_json(const SurrogateModel& model) {
  nlohmann::json j;
  j["sites"] = nlohmann::json::array();
  for (int i = 0; i < model.n_samples(); ++i) {
    std::vector<double> row(model.sites.row(i).begin(), model.sites.row(i).end());
    j["sites"].push_back(row);
  }
  j["values"] = nlohmann::json::array();
  for (int i = 0; i < model.n_samples(); ++i) {
    std::vector<double> row(model.values_g.row(i).begin(), model.values_g.row(i).end());
    j["values"].push_back(row);
  }
  j["family"] = model.kernels.front().family == WendlandFamily::C2 ? "wendland_c2" : "wendland_c4";
  j["lengthscale"] = model.kernels.front().lengthscale;
  j["gamma"] = std::vector<double>(model.gamma.begin(), model.gamma.end());
  return j.dump(2);
}

SurrogateModel surrogate_from_json(const std::string& text, const DomainProjection& projection) {
  nlohmann::json j = nlohmann::json::parse(text);
  const auto& sites_j = j.at("sites");
  const int n = static_cast<int>(sites_j.size());
  if (n == 0) throw Error(ErrorCode::Config, "surrogate_from_json: empty sites");
  const int d = static_cast<int>(sites_j.at(0).size());
  Mat sites(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) sites(i, k) = sites_j.at(i).at(k).get<double>();
  }
  const auto& values_j = j.at("values");
  const int n_g = static_cast<int>(values_j.at(0).size());
  Mat values(n, n_g);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n_g; ++k) values(i, k) = values_j.at(i).at(k).get<double>();
  }
  KernelConfig cfg;
  const std::string family = j.at("family").get<std::string>();
  if (family == "wendland_c2") {
    cfg.family = WendlandFamily::C2;
  } else if (family == "wendland_c4") {
    cfg.family = WendlandFamily::C4;
  } else {
    throw Error(ErrorCode::Config, "surrogate_from_json: unknown kernel family " + family);
  }
  cfg.lengthscale = j.at("lengthscale").get<double>();
  cfg.input_dim = d;

  SurrogateModel model = fit_surrogate(sites, values, cfg, projection);
  const auto gammas = j.at("gamma").get<std::vector<double>>();
  if (static_cast<int>(gammas.size()) != n_g) {
    throw Error(ErrorCode::Config, "surrogate_from_json: gamma size mismatch");
  }
  for (int i = 0; i < n_g; ++i) model.gamma(i) = gammas[static_cast<std::size_t>(i)];
  model.gamma_frozen = true;
  return model;
}

}  // namespace sdr
