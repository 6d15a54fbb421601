#include "bvforge/surrogate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "bvforge/error.hpp"
#include "bvforge/rng.hpp"

namespace bvforge {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr const char* kFeatureNames[kDesignDims] = {"s_um", "w_um", "d_um", "n_rings", "sigma_um"};

// Working copy of the parameters in Eigen form.
struct Net {
  std::vector<Mat> w;
  std::vector<Vec> b;
  std::vector<Vec> gamma, beta;     // hidden layers only
  std::vector<Vec> run_mean, run_var;

  std::size_t layers() const { return w.size(); }

  static Net from(const MlpModel& m) {
    Net n;
    const std::size_t layers = m.layer_sizes.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const int out = m.layer_sizes[l + 1], in = m.layer_sizes[l];
      n.w.push_back(Eigen::Map<const RowMat>(m.weights[l].data(), out, in));
      n.b.push_back(Eigen::Map<const Vec>(m.biases[l].data(), out));
      if (l + 1 < layers) {
        n.gamma.push_back(Eigen::Map<const Vec>(m.bn_scale[l].data(), out));
        n.beta.push_back(Eigen::Map<const Vec>(m.bn_shift[l].data(), out));
        n.run_mean.push_back(Eigen::Map<const Vec>(m.run_mean[l].data(), out));
        n.run_var.push_back(Eigen::Map<const Vec>(m.run_var[l].data(), out));
      }
    }
    return n;
  }

  void store(MlpModel& m) const {
    auto copy = [](const auto& src, std::vector<double>& dst) {
      dst.resize(static_cast<std::size_t>(src.size()));
      Eigen::Map<std::decay_t<decltype(src.eval())>>(dst.data(), src.rows(), src.cols()) = src;
    };
    for (std::size_t l = 0; l < layers(); ++l) {
      RowMat rw = w[l];
      m.weights[l].assign(rw.data(), rw.data() + rw.size());
      copy(b[l], m.biases[l]);
      if (l + 1 < layers()) {
        copy(gamma[l], m.bn_scale[l]);
        copy(beta[l], m.bn_shift[l]);
        copy(run_mean[l], m.run_mean[l]);
        copy(run_var[l], m.run_var[l]);
      }
    }
  }
};

struct Cache {
  std::vector<Mat> a;      // a[0] = input, a[l+1] = output of layer l
  std::vector<Mat> xhat;   // per hidden layer
  std::vector<Mat> y;      // pre-activation after BN
  std::vector<Vec> inv_std;
  std::vector<Vec> mean, var;
};

// Training-mode forward pass with batch statistics. Returns the output row.
Mat forward_train(const Net& n, const Mat& x, double eps, Cache& c) {
  const std::size_t layers = n.layers();
  c.a.assign(layers + 1, Mat());
  c.xhat.resize(layers - 1);
  c.y.resize(layers - 1);
  c.inv_std.resize(layers - 1);
  c.mean.resize(layers - 1);
  c.var.resize(layers - 1);
  c.a[0] = x;
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    Mat z = n.w[l] * c.a[l];
    z.colwise() += n.b[l];
    c.mean[l] = z.rowwise().sum() * inv_b;
    z.colwise() -= c.mean[l];
    c.var[l] = z.array().square().rowwise().sum().matrix() * inv_b;
    c.inv_std[l] = (c.var[l].array() + eps).rsqrt().matrix();
    c.xhat[l] = c.inv_std[l].asDiagonal() * z;
    c.y[l] = n.gamma[l].asDiagonal() * c.xhat[l];
    c.y[l].colwise() += n.beta[l];
    c.a[l + 1] = c.y[l].cwiseMax(0.0);
  }
  Mat out = n.w[layers - 1] * c.a[layers - 1];
  out.colwise() += n.b[layers - 1];
  c.a[layers] = out;
  return out;
}

Mat forward_infer(const Net& n, const Mat& x, double eps) {
  Mat a = x;
  const std::size_t layers = n.layers();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    Mat z = n.w[l] * a;
    z.colwise() += n.b[l];
    const Vec scale = (n.gamma[l].array() * (n.run_var[l].array() + eps).rsqrt()).matrix();
    const Vec shift = n.beta[l] - scale.cwiseProduct(n.run_mean[l]);
    z = scale.asDiagonal() * z;
    z.colwise() += shift;
    a = z.cwiseMax(0.0);
  }
  Mat out = n.w[layers - 1] * a;
  out.colwise() += n.b[layers - 1];
  return out;
}

struct Grad {
  std::vector<Mat> w;
  std::vector<Vec> b, gamma, beta;
};

double penalty(const Net& n, double lambda) {
  double s = 0.0;
  for (const auto& w : n.w) s += w.squaredNorm();
  return lambda * s;
}

// Loss and gradient of mean squared error plus the L2 penalty.
double loss_and_grad(const Net& n, const Mat& x, const Mat& t, double lambda, double eps, Grad* g, Cache& c) {
  const Mat out = forward_train(n, x, eps, c);
  const Mat diff = out - t;
  const double bsz = static_cast<double>(x.cols());
  const double loss = diff.squaredNorm() / bsz + penalty(n, lambda);
  if (g == nullptr) return loss;
  const std::size_t layers = n.layers();
  g->w.resize(layers);
  g->b.resize(layers);
  g->gamma.resize(layers - 1);
  g->beta.resize(layers - 1);
  Mat d = diff * (2.0 / bsz);
  for (std::size_t l = layers; l-- > 0;) {
    g->w[l] = d * c.a[l].transpose() + 2.0 * lambda * n.w[l];
    g->b[l] = d.rowwise().sum();
    if (l == 0) break;
    Mat da = n.w[l].transpose() * d;
    const std::size_t h = l - 1;
    const Mat dy = (c.y[h].array() > 0.0).select(da, 0.0);
    g->gamma[h] = dy.cwiseProduct(c.xhat[h]).rowwise().sum();
    g->beta[h] = dy.rowwise().sum();
    const Mat dxhat = n.gamma[h].asDiagonal() * dy;
    const Vec sum_dx = dxhat.rowwise().sum();
    const Vec sum_dx_x = dxhat.cwiseProduct(c.xhat[h]).rowwise().sum();
    Mat dz = dxhat * bsz;
    dz.colwise() -= sum_dx;
    dz -= sum_dx_x.asDiagonal() * c.xhat[h];
    d = (c.inv_std[h] / bsz).asDiagonal() * dz;
  }
  return loss;
}

Mat to_matrix(const std::vector<Features>& rows, const std::vector<std::size_t>& idx) {
  Mat m(static_cast<Eigen::Index>(kDesignDims), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    for (std::size_t f = 0; f < kDesignDims; ++f) m(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c)) = rows[idx[c]][f];
  }
  return m;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

struct Adam {
  std::vector<Mat> mw, vw;
  std::vector<Vec> mb, vb, mg, vg, mbe, vbe;
  long step = 0;

  explicit Adam(const Net& n) {
    for (std::size_t l = 0; l < n.layers(); ++l) {
      mw.push_back(Mat::Zero(n.w[l].rows(), n.w[l].cols()));
      vw.push_back(mw.back());
      mb.push_back(Vec::Zero(n.b[l].size()));
      vb.push_back(mb.back());
    }
    for (std::size_t h = 0; h < n.gamma.size(); ++h) {
      mg.push_back(Vec::Zero(n.gamma[h].size()));
      vg.push_back(mg.back());
      mbe.push_back(mg.back());
      vbe.push_back(mg.back());
    }
  }

  template <class P>
  static void update(P& p, const P& g, P& m, P& v, double lr, double c1, double c2) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  void apply(Net& n, const Grad& g, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(step));
    for (std::size_t l = 0; l < n.layers(); ++l) {
      update(n.w[l], g.w[l], mw[l], vw[l], lr, c1, c2);
      update(n.b[l], g.b[l], mb[l], vb[l], lr, c1, c2);
    }
    for (std::size_t h = 0; h < n.gamma.size(); ++h) {
      update(n.gamma[h], g.gamma[h], mg[h], vg[h], lr, c1, c2);
      update(n.beta[h], g.beta[h], mbe[h], vbe[h], lr, c1, c2);
    }
  }
};

void check_config(const TrainConfig& cfg) {
  if (cfg.hidden.empty()) fail(ErrorKind::InvalidArgument, "training.hidden must list at least one layer");
  for (int h : cfg.hidden) {
    if (h < 1) fail(ErrorKind::InvalidArgument, "training.hidden sizes must be >= 1");
  }
  if (cfg.batch < 2) fail(ErrorKind::InvalidArgument, "training.batch must be >= 2");
  if (cfg.max_epochs < 1) fail(ErrorKind::InvalidArgument, "training.max_epochs must be >= 1");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
    fail(ErrorKind::InvalidArgument, "training.val_fraction must lie in (0, 1)");
  }
  if (!(cfg.lambda >= 0.0)) fail(ErrorKind::InvalidArgument, "training.lambda must be >= 0");
}

}  // namespace

Dataset make_dataset(std::vector<Features> x, std::vector<double> y, std::vector<std::size_t> ids) {
  if (x.size() != y.size()) fail(ErrorKind::InvalidArgument, "dataset features and targets differ in length");
  if (ids.empty()) ids = iota(y.size());
  if (ids.size() != y.size()) fail(ErrorKind::InvalidArgument, "dataset ids differ in length");
  if (y.size() < 2) fail(ErrorKind::TooFewSamples, "TooFewSamples: dataset needs at least 2 rows");
  Dataset d;
  const double n = static_cast<double>(y.size());
  for (std::size_t f = 0; f < kDesignDims; ++f) {
    double s = 0.0;
    for (const auto& r : x) s += r[f];
    const double m = s / n;
    double v = 0.0;
    for (const auto& r : x) v += (r[f] - m) * (r[f] - m);
    const double sd = std::sqrt(v / n);
    if (!(sd > 0.0)) fail(ErrorKind::ConstantFeature, std::string("ConstantFeature: ") + kFeatureNames[f]);
    d.stats.feature_mean[f] = m;
    d.stats.feature_std[f] = sd;
  }
  double s = 0.0;
  for (double v : y) s += v;
  d.stats.target_mean = s / n;
  double v = 0.0;
  for (double t : y) v += (t - d.stats.target_mean) * (t - d.stats.target_mean);
  d.stats.target_std = std::sqrt(v / n);
  if (!(d.stats.target_std > 0.0)) fail(ErrorKind::ZeroVariance, "ZeroVariance: constant target");
  d.x = std::move(x);
  d.y = std::move(y);
  d.ids = std::move(ids);
  return d;
}

Dataset normalize_dataset(const std::vector<BreakdownRecord>& records, std::size_t min_rows) {
  std::vector<Features> x;
  std::vector<double> y;
  std::vector<std::size_t> ids;
  std::size_t dropped = 0;
  for (const auto& r : records) {
    if (r.mode != BreakdownMode::Fast || !r.converged || !r.bv_V) {
      ++dropped;
      continue;
    }
    x.push_back(to_array(r.design));
    y.push_back(*r.bv_V);
    ids.push_back(r.id);
  }
  if (y.size() < min_rows) {
    fail(ErrorKind::TooFewSamples, "TooFewSamples: " + std::to_string(y.size()) + " converged fast records, need " +
                                       std::to_string(min_rows));
  }
  Dataset d = make_dataset(std::move(x), std::move(y), std::move(ids));
  d.dropped = dropped;
  return d;
}

Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows) {
  std::vector<Features> x;
  std::vector<double> y;
  std::vector<std::size_t> ids;
  for (std::size_t r : rows) {
    x.push_back(d.x.at(r));
    y.push_back(d.y.at(r));
    ids.push_back(d.ids.at(r));
  }
  return make_dataset(std::move(x), std::move(y), std::move(ids));
}

Features normalize_features(const NormStats& s, const Features& raw) {
  Features z{};
  for (std::size_t f = 0; f < kDesignDims; ++f) z[f] = (raw[f] - s.feature_mean[f]) / s.feature_std[f];
  return z;
}

Features denormalize_features(const NormStats& s, const Features& z) {
  Features raw{};
  for (std::size_t f = 0; f < kDesignDims; ++f) raw[f] = z[f] * s.feature_std[f] + s.feature_mean[f];
  return raw;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p = iota(n);
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

MlpModel init_model(const NormStats& norm, const TrainConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  MlpModel m;
  m.layer_sizes.push_back(static_cast<int>(kDesignDims));
  for (int h : cfg.hidden) m.layer_sizes.push_back(h);
  m.layer_sizes.push_back(1);
  m.lambda = cfg.lambda;
  m.norm = norm;
  m.train_config = cfg;
  m.seed = seed;
  SplitMix64 rng(seed);
  const std::size_t layers = m.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(m.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = scale * rng.normal();
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
    if (l + 1 < layers) {
      m.bn_scale.emplace_back(out, 1.0);
      m.bn_shift.emplace_back(out, 0.0);
      m.run_mean.emplace_back(out, 0.0);
      m.run_var.emplace_back(out, 1.0);
    }
  }
  return m;
}

MlpModel train(const Dataset& data, const TrainConfig& cfg) {
  check_config(cfg);
  const std::size_t n = data.size();
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  if (n_val < 1 || n - n_val < static_cast<std::size_t>(cfg.batch)) {
    fail(ErrorKind::TooFewSamples, "TooFewSamples: " + std::to_string(n) + " rows cannot fill a training batch of " +
                                       std::to_string(cfg.batch) + " plus a validation slice");
  }
  MlpModel model = init_model(data.stats, cfg, cfg.seed);
  std::vector<Features> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = normalize_features(data.stats, data.x[i]);
  Mat target(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) target(0, static_cast<Eigen::Index>(i)) = (data.y[i] - data.stats.target_mean) / data.stats.target_std;

  const std::vector<std::size_t> order = permutation(n, splitmix64(cfg.seed ^ 0x76616cULL));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  const Mat x_val = to_matrix(z, val_idx);
  Mat t_val(1, static_cast<Eigen::Index>(n_val));
  for (std::size_t i = 0; i < n_val; ++i) t_val(0, static_cast<Eigen::Index>(i)) = target(0, static_cast<Eigen::Index>(val_idx[i]));

  Net net = Net::from(model);
  Net best = net;
  Adam adam(net);
  Cache cache;
  Grad grad;
  SplitMix64 rng(splitmix64(cfg.seed ^ 0x6570ULL));
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  const std::size_t batches = train_idx.size() / batch;  // the last batch absorbs the remainder
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int epoch = 0;
  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i) std::swap(train_idx[i - 1], train_idx[rng.below(i)]);
    for (std::size_t k = 0; k < batches; ++k) {
      const std::size_t lo = k * batch;
      const std::size_t hi = k + 1 == batches ? train_idx.size() : lo + batch;
      std::vector<std::size_t> rows(train_idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    train_idx.begin() + static_cast<std::ptrdiff_t>(hi));
      const Mat xb = to_matrix(z, rows);
      Mat tb(1, static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) tb(0, static_cast<Eigen::Index>(i)) = target(0, static_cast<Eigen::Index>(rows[i]));
      const double loss = loss_and_grad(net, xb, tb, cfg.lambda, cfg.bn_epsilon, &grad, cache);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "NonFiniteLoss(epoch=" << epoch << ", batch=" << k << ", lr=" << cfg.learning_rate
           << ", lambda=" << cfg.lambda << ")";
        fail(ErrorKind::NonFiniteLoss, os.str());
      }
      adam.apply(net, grad, cfg.learning_rate);
      for (std::size_t h = 0; h < net.gamma.size(); ++h) {
        net.run_mean[h] = cfg.bn_momentum * net.run_mean[h] + (1.0 - cfg.bn_momentum) * cache.mean[h];
        net.run_var[h] = cfg.bn_momentum * net.run_var[h] + (1.0 - cfg.bn_momentum) * cache.var[h];
      }
    }
    const double val = (forward_infer(net, x_val, cfg.bn_epsilon) - t_val).squaredNorm() / static_cast<double>(n_val);
    if (!std::isfinite(val)) fail(ErrorKind::NonFiniteLoss, "NonFiniteLoss: validation loss at epoch " + std::to_string(epoch));
    if (val < best_val) {
      best_val = val;
      best = net;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  best.store(model);
  model.epochs_run = std::min(epoch, cfg.max_epochs);
  model.best_val_loss = best_val;
  return model;
}

std::vector<double> predict_batch(const MlpModel& model, const std::vector<Features>& raw) {
  if (raw.empty()) return {};
  const Net net = Net::from(model);
  std::vector<Features> z(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) z[i] = normalize_features(model.norm, raw[i]);
  const Mat out = forward_infer(net, to_matrix(z, iota(z.size())), model.train_config.bn_epsilon);
  std::vector<double> v(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    v[i] = out(0, static_cast<Eigen::Index>(i)) * model.norm.target_std + model.norm.target_mean;
  }
  return v;
}

double predict(const MlpModel& model, const Features& raw) { return predict_batch(model, {raw})[0]; }

double predict(const MlpModel& model, const DesignVector& dv) { return predict(model, to_array(dv)); }

SurrogatePrediction predict_checked(const MlpModel& model, const DesignVector& dv, const DesignBounds& bounds) {
  SurrogatePrediction p;
  p.bv_V = predict(model, dv);
  const auto a = to_array(dv);
  const auto box = bounds.as_intervals();
  for (std::size_t f = 0; f < kDesignDims; ++f) p.extrapolation = p.extrapolation || !box[f].contains(a[f]);
  return p;
}

double r2(const std::vector<double>& predictions, const std::vector<double>& actuals) {
  if (predictions.size() != actuals.size() || actuals.size() < 2) {
    fail(ErrorKind::InvalidArgument, "r2 needs equal-length inputs with at least two entries");
  }
  double mean = 0.0;
  for (double a : actuals) mean += a;
  mean /= static_cast<double>(actuals.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    ss_res += (actuals[i] - predictions[i]) * (actuals[i] - predictions[i]);
    ss_tot += (actuals[i] - mean) * (actuals[i] - mean);
  }
  if (!(ss_tot > 0.0)) fail(ErrorKind::ZeroVariance, "ZeroVariance: actuals are constant");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> flatten_parameters(const MlpModel& m) {
  std::vector<double> p;
  const std::size_t layers = m.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    p.insert(p.end(), m.weights[l].begin(), m.weights[l].end());
    p.insert(p.end(), m.biases[l].begin(), m.biases[l].end());
    if (l + 1 < layers) {
      p.insert(p.end(), m.bn_scale[l].begin(), m.bn_scale[l].end());
      p.insert(p.end(), m.bn_shift[l].begin(), m.bn_shift[l].end());
    }
  }
  return p;
}

void unflatten_parameters(MlpModel& m, const std::vector<double>& p) {
  std::size_t k = 0;
  auto take = [&](std::vector<double>& dst) {
    if (k + dst.size() > p.size()) fail(ErrorKind::InvalidArgument, "parameter vector too short");
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(k), p.begin() + static_cast<std::ptrdiff_t>(k + dst.size()), dst.begin());
    k += dst.size();
  };
  const std::size_t layers = m.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    take(m.weights[l]);
    take(m.biases[l]);
    if (l + 1 < layers) {
      take(m.bn_scale[l]);
      take(m.bn_shift[l]);
    }
  }
  if (k != p.size()) fail(ErrorKind::InvalidArgument, "parameter vector too long");
}

double batch_loss(const MlpModel& model, const std::vector<Features>& z, const std::vector<double>& t,
                  std::vector<double>* gradient) {
  if (z.size() != t.size() || z.size() < 2) fail(ErrorKind::InvalidArgument, "batch_loss needs >= 2 matching rows");
  const Net net = Net::from(model);
  const Mat x = to_matrix(z, iota(z.size()));
  const Mat tm = Eigen::Map<const Mat>(t.data(), 1, static_cast<Eigen::Index>(t.size()));
  Cache cache;
  Grad g;
  const double loss = loss_and_grad(net, x, tm, model.lambda, model.train_config.bn_epsilon,
                                    gradient != nullptr ? &g : nullptr, cache);
  if (gradient != nullptr) {
    gradient->clear();
    const std::size_t layers = net.layers();
    for (std::size_t l = 0; l < layers; ++l) {
      const RowMat gw = g.w[l];
      gradient->insert(gradient->end(), gw.data(), gw.data() + gw.size());
      gradient->insert(gradient->end(), g.b[l].data(), g.b[l].data() + g.b[l].size());
      if (l + 1 < layers) {
        gradient->insert(gradient->end(), g.gamma[l].data(), g.gamma[l].data() + g.gamma[l].size());
        gradient->insert(gradient->end(), g.beta[l].data(), g.beta[l].data() + g.beta[l].size());
      }
    }
  }
  return loss;
}

double grad_check(const MlpModel& model, const std::vector<Features>& z, const std::vector<double>& t,
                  std::size_t samples, double h, std::uint64_t seed) {
  std::vector<double> analytic;
  batch_loss(model, z, t, &analytic);
  const std::vector<double> base = flatten_parameters(model);
  MlpModel probe = model;
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t k = rng.below(base.size());
    std::vector<double> p = base;
    p[k] = base[k] + h;
    unflatten_parameters(probe, p);
    const double up = batch_loss(probe, z, t, nullptr);
    p[k] = base[k] - h;
    unflatten_parameters(probe, p);
    const double down = batch_loss(probe, z, t, nullptr);
    const double numeric = (up - down) / (2.0 * h);
    // Central differences at h carry roundoff near eps * loss / h, so gradients
    // below 1e-5 are compared on an absolute scale.
    const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-5});
    worst = std::max(worst, std::abs(numeric - analytic[k]) / denom);
  }
  return worst;
}

namespace {

double fit_and_score(const Dataset& data, const std::vector<std::size_t>& train_rows,
                     const std::vector<std::size_t>& test_rows, const TrainConfig& cfg) {
  const Dataset tr = subset(data, train_rows);
  const MlpModel m = train(tr, cfg);
  std::vector<Features> x;
  std::vector<double> y;
  for (std::size_t r : test_rows) {
    x.push_back(data.x[r]);
    y.push_back(data.y[r]);
  }
  return r2(predict_batch(m, x), y);
}

std::vector<double> kfold_scores(const Dataset& data, const TrainConfig& cfg, int folds, int repeats) {
  const std::size_t n = data.size();
  if (folds < 2 || n < static_cast<std::size_t>(folds)) {
    fail(ErrorKind::TooFewSamples, "TooFewSamples: " + std::to_string(n) + " rows for " + std::to_string(folds) + " folds");
  }
  std::vector<double> scores;
  for (int r = 0; r < repeats; ++r) {
    const auto perm = permutation(n, counter_u64(cfg.seed, 0x6376, static_cast<std::uint64_t>(r)));
    for (int k = 0; k < folds; ++k) {
      const std::size_t lo = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(folds);
      const std::size_t hi = n * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(folds);
      std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi));
      std::vector<std::size_t> tr(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(lo));
      tr.insert(tr.end(), perm.begin() + static_cast<std::ptrdiff_t>(hi), perm.end());
      TrainConfig c = cfg;
      c.seed = counter_u64(cfg.seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k));
      scores.push_back(fit_and_score(data, tr, test, c));
    }
  }
  return scores;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double select_lambda(const Dataset& data, const TrainConfig& cfg) {
  if (cfg.lambda_grid.empty()) return cfg.lambda;
  double best = cfg.lambda_grid.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (double lambda : cfg.lambda_grid) {
    TrainConfig c = cfg;
    c.lambda = lambda;
    const double s = mean_of(kfold_scores(data, c, cfg.lambda_folds, 1));
    if (s > best_score) {
      best_score = s;
      best = lambda;
    }
  }
  return best;
}

HoldoutResult holdout_score(const Dataset& data, const TrainConfig& cfg) {
  const std::size_t n = data.size();
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(n)));
  if (n_test < 2 || n_test >= n) fail(ErrorKind::TooFewSamples, "TooFewSamples: cannot split " + std::to_string(n) + " rows");
  const auto perm = permutation(n, counter_u64(cfg.seed, 0x7474, 0));
  HoldoutResult h;
  h.test_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  h.train_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  h.model = train(subset(data, h.train_rows), cfg);
  std::vector<Features> x;
  std::vector<double> y;
  for (std::size_t r : h.test_rows) {
    x.push_back(data.x[r]);
    y.push_back(data.y[r]);
  }
  h.r2 = r2(predict_batch(h.model, x), y);
  return h;
}

CVReport cross_validate(const Dataset& data, const TrainConfig& cfg) {
  CVReport rep;
  rep.lambda = cfg.lambda;
  rep.scores = kfold_scores(data, cfg, cfg.folds, cfg.repeats);
  rep.mean = mean_of(rep.scores);
  double v = 0.0;
  for (double s : rep.scores) v += (s - rep.mean) * (s - rep.mean);
  rep.std = rep.scores.size() > 1 ? std::sqrt(v / static_cast<double>(rep.scores.size() - 1)) : 0.0;
  rep.test_r2 = holdout_score(data, cfg).r2;
  return rep;
}

}  // namespace bvforge
