#include "pedgpdm/gpdm.hpp"

#include "pedgpdm/pca.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace pedgpdm {

using json = nlohmann::json;

BGpdmModel::BGpdmModel(Eigen::MatrixXd X, Eigen::MatrixXd Y, ObsKernelParams obs, DynKernelParams dyn,
                       double kappa, FeatureScaling scaling)
    : X_(std::move(X)),
      Y_(std::move(Y)),
      obs_(obs),
      dyn_(dyn),
      kappa_(kappa),
      scaling_(std::move(scaling)) {
  if (X_.rows() != Y_.rows()) throw DataError("model: latent and observation row counts differ");
  if (!X_.allFinite()) throw NumericalError("model: non-finite latent coordinates");
  if (!obs_.valid() || !dyn_.valid()) throw NumericalError("model: kernel parameters must be positive");
  if (scaling_.mean.size() == 0) {
    scaling_.mean = Eigen::VectorXd::Zero(Y_.cols());
    scaling_.std = Eigen::VectorXd::Ones(Y_.cols());
  }
  if (scaling_.dim() != Y_.cols() || scaling_.std.size() != Y_.cols())
    throw DataError("model: scaling dimension does not match observations");

  const JitteredCholesky<double> cy(obs_gram(X_, obs_));
  Ky_inv_ = cy.inverse();
  alpha_y_ = Ky_inv_ * Y_;
  const Eigen::Index T = X_.rows();
  if (T >= 2) {
    const Eigen::MatrixXd Xin = X_.topRows(T - 1);
    const JitteredCholesky<double> cx(dyn_gram(Xin, dyn_));
    Kx_inv_ = cx.inverse();
    alpha_x_ = Kx_inv_ * X_.bottomRows(T - 1);
  }
}

Eigen::VectorXd BGpdmModel::reconstruct_mean(const Eigen::Ref<const Eigen::VectorXd>& x,
                                             Eigen::MatrixXd* jacobian) const {
  const Eigen::VectorXd k = rbf_cross(x.transpose(), X_, obs_.signal, obs_.width).transpose();
  if (jacobian) {
    // dk_t/dx = -width * k_t * (x - X_t)
    const Eigen::MatrixXd diff = (-X_).rowwise() + x.transpose();
    const Eigen::MatrixXd dk = -obs_.width * (k.asDiagonal() * diff);
    *jacobian = alpha_y_.transpose() * dk;
  }
  return alpha_y_.transpose() * k;
}

Reconstruction BGpdmModel::reconstruct(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd k = rbf_cross(x.transpose(), X_, obs_.signal, obs_.width).transpose();
  Reconstruction r;
  r.mean = alpha_y_.transpose() * k;
  r.variance = std::max(0.0, obs_.signal + 1.0 / obs_.noise_prec - k.dot(Ky_inv_ * k));
  return r;
}

Eigen::VectorXd BGpdmModel::latent_step(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::Index T = X_.rows();
  if (T < 2) throw DataError("latent_step needs a model with at least 2 latent points");
  const auto Xin = X_.topRows(T - 1);
  Eigen::VectorXd k = rbf_cross(x.transpose(), Xin, dyn_.signal, dyn_.width).transpose();
  k.noalias() += dyn_.linear * (Xin * x);
  return alpha_x_.transpose() * k;
}

double BGpdmModel::objective() const { return neg_log_posterior(X_, obs_, dyn_, kappa_, Y_); }

Eigen::VectorXd pack_parameters(const Eigen::MatrixXd& X, const ObsKernelParams& obs,
                                const DynKernelParams& dyn) {
  Eigen::VectorXd theta(X.size() + 7);
  theta.head(X.size()) = Eigen::Map<const Eigen::VectorXd>(X.data(), X.size());
  theta.segment(X.size(), 3) = obs.log_vector();
  theta.tail(4) = dyn.log_vector();
  return theta;
}

void unpack_parameters(const Eigen::VectorXd& theta, int T, int q, Eigen::MatrixXd& X, ObsKernelParams& obs,
                       DynKernelParams& dyn) {
  const Eigen::Index n = static_cast<Eigen::Index>(T) * q;
  X = Eigen::Map<const Eigen::MatrixXd>(theta.data(), T, q);
  obs = ObsKernelParams::from_log(theta.segment(n, 3));
  dyn = DynKernelParams::from_log(theta.tail(4));
}

BGpdmModel train(const Eigen::MatrixXd& Y_scaled, int q, double kappa, const TrainOptions& opts,
                 FeatureScaling scaling, TrainTrace* trace) {
  const int T = static_cast<int>(Y_scaled.rows());
  if (T < 2) throw DataError("train: a sequence needs at least 2 observations");
  if (q < 1) throw ConfigError("train: latent dimension must be >= 1");
  if (!(kappa > 0)) throw ConfigError("train: kappa must be positive");
  if (!Y_scaled.allFinite()) throw DataError("train: non-finite observations");

  const Eigen::MatrixXd X0 = pca_init(Y_scaled, q);
  const Eigen::VectorXd theta0 = pack_parameters(X0, opts.obs_init, opts.dyn_init);

  ObjectiveFn<double> fg = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) -> std::optional<double> {
    Eigen::MatrixXd X;
    ObsKernelParams obs;
    DynKernelParams dyn;
    unpack_parameters(theta, T, q, X, obs, dyn);
    if (!X.allFinite() || !obs.valid() || !dyn.valid()) return std::nullopt;
    try {
      const auto g = neg_log_posterior_grad(X, obs, dyn, kappa, Y_scaled);
      grad = g.packed();
      if (!opts.learn_hyperparameters) grad.tail(7).setZero();
      return g.value;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  };

  ScgResult<double> res;
  try {
    res = scg_minimize(fg, theta0, opts.scg);
  } catch (const NumericalError& e) {
    throw NumericalError(fmt::format("train: optimizer diverged at initialization ({})", e.what()));
  }
  if (!std::isfinite(res.value)) {
    std::string tr;
    for (double v : res.trace) tr += fmt::format(" {:.6g}", v);
    throw NumericalError(fmt::format("train: non-finite objective; trace:{}", tr));
  }
  if (trace) {
    trace->objective = res.trace;
    trace->iterations = res.iterations;
    trace->evaluations = res.evaluations;
    trace->status = res.status;
  }
  Eigen::MatrixXd X;
  ObsKernelParams obs;
  DynKernelParams dyn;
  unpack_parameters(res.x, T, q, X, obs, dyn);
  return BGpdmModel(std::move(X), Y_scaled, obs, dyn, kappa, std::move(scaling));
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw DataError(fmt::format("model file: '{}' has wrong row count", what));
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
      throw DataError(fmt::format("model file: '{}' has wrong column count", what));
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = r[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

json vector_to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n, const char* what) {
  auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != n)
    throw DataError(fmt::format("model file: '{}' has wrong length", what));
  return Eigen::Map<Eigen::VectorXd>(v.data(), n);
}

}  // namespace

std::string model_to_json(const BGpdmModel& m) {
  json j;
  j["format"] = "pedgpdm-model";
  j["version"] = kModelFormatVersion;
  j["q"] = m.q();
  j["T"] = m.T();
  j["D"] = m.D();
  j["source_id"] = m.source_id;
  j["subject"] = m.subject;
  j["activity"] = std::string(to_string(m.activity));
  j["orientation"] = std::string(to_string(m.orientation));
  j["kappa"] = m.kappa();
  j["obs"] = {{"signal", m.obs_params().signal},
              {"width", m.obs_params().width},
              {"noise_prec", m.obs_params().noise_prec}};
  j["dyn"] = {{"signal", m.dyn_params().signal},
              {"width", m.dyn_params().width},
              {"linear", m.dyn_params().linear},
              {"noise_prec", m.dyn_params().noise_prec}};
  j["scaling"] = {{"mean", vector_to_json(m.scaling().mean)}, {"std", vector_to_json(m.scaling().std)}};
  j["X"] = matrix_to_json(m.X());
  j["Y"] = matrix_to_json(m.Y());
  return j.dump();
}

BGpdmModel model_from_json(std::string_view text, const std::string& source) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "pedgpdm-model") throw DataError(fmt::format("{}: not a model file", source));
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw DataError(fmt::format("{}: unsupported model format version {}", source, j.at("version").dump()));
    const int q = j.at("q").get<int>(), T = j.at("T").get<int>(), D = j.at("D").get<int>();
    ObsKernelParams obs{j.at("obs").at("signal").get<double>(), j.at("obs").at("width").get<double>(),
                        j.at("obs").at("noise_prec").get<double>()};
    DynKernelParams dyn{j.at("dyn").at("signal").get<double>(), j.at("dyn").at("width").get<double>(),
                        j.at("dyn").at("linear").get<double>(), j.at("dyn").at("noise_prec").get<double>()};
    FeatureScaling sc;
    sc.mean = vector_from_json(j.at("scaling").at("mean"), D, "scaling.mean");
    sc.std = vector_from_json(j.at("scaling").at("std"), D, "scaling.std");
    BGpdmModel m(matrix_from_json(j.at("X"), T, q, "X"), matrix_from_json(j.at("Y"), T, D, "Y"), obs, dyn,
                 j.at("kappa").get<double>(), std::move(sc));
    m.source_id = j.at("source_id").get<std::string>();
    m.subject = j.at("subject").get<std::string>();
    auto a = parse_activity(j.at("activity").get<std::string>());
    auto o = parse_orientation(j.at("orientation").get<std::string>());
    if (!a || !o) throw DataError(fmt::format("{}: bad activity/orientation tag", source));
    m.activity = *a;
    m.orientation = *o;
    return m;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed model file ({})", source, e.what()));
  }
}

void save_model(const BGpdmModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out << model_to_json(m);
}

BGpdmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("model file '{}' not found", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str(), path.string());
}

}  // namespace pedgpdm
