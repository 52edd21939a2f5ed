#include "dreammem/head.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace dreammem {

namespace {

constexpr std::string_view kMagic = "HEAD";
constexpr std::uint32_t kVersion = 1;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Eigen::Index param_count(const HeadModel& m) {
  return m.w1.size() + m.b1.size() + m.w2.size() + 1;
}

// Flat parameter order: w1 (column-major), b1, w2, b2.
Eigen::VectorXd flatten(const Eigen::MatrixXd& w1, const Eigen::VectorXd& b1,
                        const Eigen::VectorXd& w2, double b2) {
  Eigen::VectorXd v(w1.size() + b1.size() + w2.size() + 1);
  v << Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size()), b1, w2, b2;
  return v;
}

Eigen::VectorXd flatten(const HeadModel& m) { return flatten(m.w1, m.b1, m.w2, m.b2); }
Eigen::VectorXd flatten(const HeadGradient& g) { return flatten(g.w1, g.b1, g.w2, g.b2); }

void unflatten(const Eigen::VectorXd& v, HeadModel& m) {
  Eigen::Index off = 0;
  Eigen::Map<Eigen::VectorXd>(m.w1.data(), m.w1.size()) = v.segment(off, m.w1.size());
  off += m.w1.size();
  m.b1 = v.segment(off, m.b1.size());
  off += m.b1.size();
  m.w2 = v.segment(off, m.w2.size());
  off += m.w2.size();
  m.b2 = v[off];
}

Eigen::VectorXd decay_mask(const HeadModel& m) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(param_count(m));
  mask.head(m.w1.size()).setOnes();
  mask.segment(m.w1.size() + m.b1.size(), m.w2.size()).setOnes();
  return mask;
}

void require_hidden_layer(const HeadModel& m) {
  if (m.hidden() == 0) throw ValidationError("unsupported: head without a hidden layer");
}

Eigen::MatrixXd standardize(const HeadModel& m, const Eigen::MatrixXd& X) {
  if (X.cols() != m.input_dim())
    throw ValidationError("head expects " + std::to_string(m.input_dim()) + " columns, got " +
                          std::to_string(X.cols()));
  return (X.rowwise() - m.x_mean.transpose()).array().rowwise() / m.x_scale.transpose().array();
}

struct Forward {
  Eigen::MatrixXd z;    // standardized input, n x d
  Eigen::MatrixXd pre;  // n x h
  Eigen::MatrixXd act;  // n x h
  Eigen::VectorXd out;  // n
};

Forward forward(const HeadModel& m, const Eigen::MatrixXd& X) {
  Forward f;
  f.z = standardize(m, X);
  f.pre = (f.z * m.w1.transpose()).rowwise() + m.b1.transpose();
  f.act = f.pre.cwiseMax(0.0);
  f.out = (f.act * m.w2).array() + m.b2;
  return f;
}

HeadGradient gradient_from(const HeadModel& m, const Forward& f, const Eigen::VectorXd& y,
                           double weight_decay) {
  const double n = static_cast<double>(y.size());
  const Eigen::VectorXd e = 2.0 * (f.out - y) / n;
  HeadGradient g;
  g.b2 = e.sum();
  g.w2 = f.act.transpose() * e + weight_decay * m.w2;
  const Eigen::MatrixXd delta =
      (e * m.w2.transpose()).cwiseProduct((f.pre.array() > 0.0).cast<double>().matrix());
  g.b1 = delta.colwise().sum().transpose();
  g.w1 = delta.transpose() * f.z + weight_decay * m.w1;
  return g;
}

// Unbiased integer in [0, bound) via 128-bit multiply; stable across platforms.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

double uniform(std::mt19937_64& rng, double bound) {
  return (2.0 * unit_double(rng()) - 1.0) * bound;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(max_lr > 0.0)) throw ValidationError("max_lr must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (hidden < 0) throw ValidationError("hidden width must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ValidationError("warmup_fraction must lie in [0, 1)");
  if (!(final_div >= 1.0)) throw ValidationError("final_div must be >= 1");
}

double one_cycle_lr(int step, int total_steps, const TrainConfig& cfg) {
  const double lo = cfg.max_lr / cfg.final_div;
  const int warmup = static_cast<int>(std::floor(cfg.warmup_fraction * total_steps));
  if (step < warmup) return lo + (cfg.max_lr - lo) * static_cast<double>(step) / warmup;
  const int span = total_steps - 1 - warmup;
  const double progress = span > 0 ? static_cast<double>(step - warmup) / span : 0.0;
  return lo + (cfg.max_lr - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void HeadModel::validate() const {
  const Eigen::Index d = input_dim();
  const Eigen::Index h = hidden();
  if (x_mean.size() != d || x_scale.size() != d || b1.size() != h || w2.size() != h)
    throw ValidationError("head parameter shapes are inconsistent");
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !std::isfinite(b2) ||
      !x_mean.allFinite() || !x_scale.allFinite())
    throw ValidationError("head has non-finite parameters");
}

HeadModel init_head(const Eigen::MatrixXd& X, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.hidden == 0) throw ValidationError("unsupported: head without a hidden layer");
  const Eigen::Index d = X.cols();
  const Eigen::Index h = cfg.hidden;
  if (d < 1) throw ValidationError("head needs at least one input column");

  HeadModel m;
  m.config = cfg;
  m.x_mean = X.colwise().mean().transpose();
  m.x_scale = ((X.rowwise() - m.x_mean.transpose()).array().square().colwise().mean().sqrt())
                  .transpose();
  for (auto& s : m.x_scale)
    if (!(s > 1e-12)) s = 1.0;

  std::mt19937_64 rng(cfg.seed);
  const double b_in = 1.0 / std::sqrt(static_cast<double>(d));
  const double b_hid = 1.0 / std::sqrt(static_cast<double>(h));
  m.w1.resize(h, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < h; ++i) m.w1(i, j) = uniform(rng, b_in);
  m.b1.resize(h);
  for (auto& x : m.b1) x = uniform(rng, b_in);
  m.w2.resize(h);
  for (auto& x : m.w2) x = uniform(rng, b_hid);
  m.b2 = uniform(rng, b_hid);
  return m;
}

double head_objective(const HeadModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      double weight_decay) {
  const Forward f = forward(model, X);
  const double mse = (f.out - y).squaredNorm() / static_cast<double>(y.size());
  return mse + 0.5 * weight_decay * (model.w1.squaredNorm() + model.w2.squaredNorm());
}

HeadGradient head_gradient(const HeadModel& model, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, double weight_decay) {
  if (X.rows() != y.size()) throw ValidationError("X and y have different row counts");
  return gradient_from(model, forward(model, X), y, weight_decay);
}

HeadModel fit_head(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TrainConfig& cfg,
                   const std::function<void(const HeadStep&)>& observer) {
  if (X.rows() != y.size()) throw ValidationError("X and y have different row counts");
  if (X.rows() < 2) throw ValidationError("head training needs at least 2 rows");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("non-finite input to head training");
  HeadModel m = init_head(X, cfg);

  const Eigen::Index n = X.rows();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  const int per_epoch = static_cast<int>((n + bs - 1) / bs);
  const int total = cfg.epochs * per_epoch;

  const Eigen::VectorXd mask = decay_mask(m);
  Eigen::VectorXd params = flatten(m);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());

  // The shuffle stream is separate from the initialization stream.
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[bounded(rng, i + 1)]);

    for (Eigen::Index start = 0; start < n; start += bs, ++step) {
      const Eigen::Index rows = std::min(bs, n - start);
      Eigen::MatrixXd xb(rows, X.cols());
      Eigen::VectorXd yb(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = X.row(src);
        yb[r] = y[src];
      }

      const Forward f = forward(m, xb);
      const double loss = (f.out - yb).squaredNorm() / static_cast<double>(rows);
      const double lr = one_cycle_lr(step, total, cfg);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at step " << step << " (epoch " << epoch
            << ", learning rate " << lr << ")";
        throw TrainingError(msg.str());
      }

      const Eigen::VectorXd g = flatten(gradient_from(m, f, yb, 0.0));
      params.array() *= 1.0 - lr * cfg.weight_decay * mask.array();
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * g;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(kBeta1, step + 1);
      const double c2 = 1.0 - std::pow(kBeta2, step + 1);
      params.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kAdamEps);
      unflatten(params, m);

      if (observer) observer(HeadStep{step, lr, loss, m});
    }
  }

  m.final_train_mse = (predict_head(m, X) - y).squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(m.final_train_mse))
    throw TrainingError("non-finite final training loss after " + std::to_string(step) + " steps");
  return m;
}

Eigen::VectorXd predict_head(const HeadModel& model, const Eigen::MatrixXd& X) {
  return forward(model, X).out;
}

double grad_check(const HeadModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  double epsilon) {
  require_hidden_layer(model);
  const double wd = model.config.weight_decay;
  const Eigen::VectorXd analytic = flatten(head_gradient(model, X, y, wd));
  const Eigen::VectorXd base = flatten(model);

  HeadModel probe = model;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < base.size(); ++k) {
    Eigen::VectorXd p = base;
    p[k] = base[k] + epsilon;
    unflatten(p, probe);
    const double up = head_objective(probe, X, y, wd);
    p[k] = base[k] - epsilon;
    unflatten(p, probe);
    const double down = head_objective(probe, X, y, wd);
    const double fd = (up - down) / (2.0 * epsilon);
    const double rel =
        std::abs(analytic[k] - fd) / std::max(1e-8, std::abs(analytic[k]) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

Bytes encode_head(const HeadModel& m) {
  m.validate();
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(kVersion);
  w.put_u32(static_cast<std::uint32_t>(m.input_dim()));
  w.put_u32(static_cast<std::uint32_t>(m.hidden()));
  for (double x : flatten(m)) w.put_f64(x);
  for (double x : m.x_mean) w.put_f64(x);
  for (double x : m.x_scale) w.put_f64(x);
  const TrainConfig& c = m.config;
  w.put_u32(static_cast<std::uint32_t>(c.epochs));
  w.put_f64(c.max_lr);
  w.put_f64(c.weight_decay);
  w.put_u32(static_cast<std::uint32_t>(c.batch_size));
  w.put_u32(static_cast<std::uint32_t>(c.hidden));
  w.put_u64(c.seed);
  w.put_f64(c.warmup_fraction);
  w.put_f64(c.final_div);
  w.put_f64(m.final_train_mse);
  return w.bytes();
}

HeadModel decode_head(std::span<const std::uint8_t> data) {
  ByteReader r(data, "HEAD");
  if (r.get_bytes(4) != kMagic) throw ValidationError("HEAD: magic mismatch");
  if (r.get_u32() != kVersion) throw ValidationError("HEAD: unsupported version");
  const std::uint32_t d = r.get_u32();
  const std::uint32_t h = r.get_u32();
  const std::uint64_t count = std::uint64_t{h} * d + 2 * std::uint64_t{h} + 1 + 2 * std::uint64_t{d};
  if (r.remaining() < count * 8) throw ValidationError("HEAD: truncated payload");

  HeadModel m;
  m.w1.resize(h, d);
  m.b1.resize(h);
  m.w2.resize(h);
  Eigen::VectorXd flat(param_count(m));
  for (auto& x : flat) x = r.get_f64();
  unflatten(flat, m);
  m.x_mean.resize(d);
  for (auto& x : m.x_mean) x = r.get_f64();
  m.x_scale.resize(d);
  for (auto& x : m.x_scale) x = r.get_f64();
  TrainConfig& c = m.config;
  c.epochs = static_cast<int>(r.get_u32());
  c.max_lr = r.get_f64();
  c.weight_decay = r.get_f64();
  c.batch_size = static_cast<int>(r.get_u32());
  c.hidden = static_cast<int>(r.get_u32());
  c.seed = r.get_u64();
  c.warmup_fraction = r.get_f64();
  c.final_div = r.get_f64();
  m.final_train_mse = r.get_f64();
  if (r.remaining() != 0) throw ValidationError("HEAD: trailing bytes");
  m.validate();
  return m;
}

void save_head(const HeadModel& model, const std::filesystem::path& path) {
  write_file(path, encode_head(model));
}

HeadModel load_head(const std::filesystem::path& path) { return decode_head(read_file(path)); }

}  // namespace dreammem
