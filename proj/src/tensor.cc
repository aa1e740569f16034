#include "advre/tensor.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "advre/errors.h"

namespace advre {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require(t.rank() == rank, std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " +
                                shape_string(t.shape()));
}

// out += w * x, w is rows x cols.
void gemv_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wi = w.data() + i * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += wi[j] * x[j];
    out[i] += s;
  }
}

// out += w^T * g
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const double* wi = w.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += gi * wi[j];
  }
}

// wg += g x^T
void outer_acc(std::span<double> wg, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    double* wi = wg.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) wi[j] += gi * x[j];
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(product(shape_), 0.0),
      grad_(data_.size(), 0.0) {
  for (std::size_t d : shape_) {
    require(d > 0, "tensor dimensions must be positive, got " +
                       shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : Tensor(std::move(shape)) {
  require(values.size() == data_.size(),
          "tensor of shape " + shape_string(shape_) + " given " +
              std::to_string(values.size()) + " values");
  data_ = std::move(values);
}

Tensor Tensor::vec(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::mat(std::size_t rows, std::size_t cols,
                   std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}
std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}
std::span<double> Tensor::grad_row(std::size_t r) {
  return std::span<double>(grad_).subspan(r * shape_[1], shape_[1]);
}
std::span<const double> Tensor::grad_row(std::size_t r) const {
  return std::span<const double>(grad_).subspan(r * shape_[1], shape_[1]);
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::same_values(const Tensor& other) const {
  return shape_ == other.shape_ && data_ == other.data_;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  require_rank(w, 2, "matvec");
  require_rank(x, 1, "matvec");
  require(w.cols() == x.size(), "matvec: " + shape_string(w.shape()) +
                                    " times " + shape_string(x.shape()));
  Tensor out({w.rows()});
  gemv_acc(w.data(), w.rows(), w.cols(), x.data(), out.data());
  return out;
}

void matvec_backward(Tensor& w, Tensor& x, const Tensor& out) {
  outer_acc(w.grad(), w.rows(), w.cols(), out.grad(), x.data());
  gemv_t_acc(w.data(), w.rows(), w.cols(), out.grad(), x.grad());
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t window) {
  if (window % 2 == 0) {
    throw ConfigError("convolution window must be odd, got " +
                      std::to_string(window));
  }
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 2, "conv1d");
  const std::size_t n = x.rows(), in = x.cols(), hidden = kernel.rows();
  require(kernel.cols() == window * in,
          "conv1d: kernel " + shape_string(kernel.shape()) + " for window " +
              std::to_string(window) + " over input " +
              shape_string(x.shape()));
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  Tensor out({n, hidden});
  for (std::size_t i = 0; i < n; ++i) {
    // Clip the window to valid rows; padded rows contribute nothing.
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>(i) - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(n) - 1,
        static_cast<std::ptrdiff_t>(i) + half);
    const std::size_t off =
        static_cast<std::size_t>(lo - (static_cast<std::ptrdiff_t>(i) - half)) *
        in;
    const std::size_t len = static_cast<std::size_t>(hi - lo + 1) * in;
    const double* xs = x.data().data() + static_cast<std::size_t>(lo) * in;
    double* o = out.data().data() + i * hidden;
    for (std::size_t h = 0; h < hidden; ++h) {
      const double* k = kernel.data().data() + h * kernel.cols() + off;
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) s += k[j] * xs[j];
      o[h] = s;
    }
  }
  return out;
}

void conv1d_backward(Tensor& x, Tensor& kernel, std::size_t window,
                     const Tensor& out) {
  const std::size_t n = x.rows(), in = x.cols(), hidden = kernel.rows();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>(i) - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(n) - 1,
        static_cast<std::ptrdiff_t>(i) + half);
    const std::size_t off =
        static_cast<std::size_t>(lo - (static_cast<std::ptrdiff_t>(i) - half)) *
        in;
    const std::size_t len = static_cast<std::size_t>(hi - lo + 1) * in;
    const double* xs = x.data().data() + static_cast<std::size_t>(lo) * in;
    double* xg = x.grad().data() + static_cast<std::size_t>(lo) * in;
    const double* g = out.grad().data() + i * hidden;
    for (std::size_t h = 0; h < hidden; ++h) {
      const double gh = g[h];
      if (gh == 0.0) continue;
      const double* k = kernel.data().data() + h * kernel.cols() + off;
      double* kg = kernel.grad().data() + h * kernel.cols() + off;
      for (std::size_t j = 0; j < len; ++j) {
        kg[j] += gh * xs[j];
        xg[j] += gh * k[j];
      }
    }
  }
}

Tensor add_row_bias(const Tensor& h, const Tensor& b) {
  require_rank(h, 2, "add_row_bias");
  require(b.rank() == 1 && b.size() == h.cols(),
          "add_row_bias: bias " + shape_string(b.shape()) + " for " +
              shape_string(h.shape()));
  Tensor out = h;
  out.zero_grad();
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return out;
}

void add_row_bias_backward(Tensor& h, Tensor& b, const Tensor& out) {
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto g = out.grad_row(i);
    auto hg = h.grad_row(i);
    for (std::size_t j = 0; j < g.size(); ++j) {
      hg[j] += g[j];
      b.grad()[j] += g[j];
    }
  }
}

Tensor max_pool_cols(const Tensor& h) {
  require_rank(h, 2, "max_pool_cols");
  return max_pool_cols(h, 0, h.rows());
}

Tensor max_pool_cols(const Tensor& h, std::size_t begin, std::size_t end) {
  require_rank(h, 2, "max_pool_cols");
  require(begin < end && end <= h.rows(),
          "max_pool_cols: empty or out-of-range row span [" +
              std::to_string(begin) + ", " + std::to_string(end) + ")");
  Tensor out({h.cols()});
  auto o = out.data();
  auto first = h.row(begin);
  std::copy(first.begin(), first.end(), o.begin());
  for (std::size_t i = begin + 1; i < end; ++i) {
    auto r = h.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = std::max(o[j], r[j]);
  }
  return out;
}

void max_pool_cols_backward(Tensor& h, const Tensor& out) {
  max_pool_cols_backward(h, 0, h.rows(), out);
}

void max_pool_cols_backward(Tensor& h, std::size_t begin, std::size_t end,
                            const Tensor& out) {
  const std::size_t cols = h.cols();
  for (std::size_t j = 0; j < cols; ++j) {
    std::size_t best = begin;
    for (std::size_t i = begin + 1; i < end; ++i) {
      if (h.at(i, j) > h.at(best, j)) best = i;
    }
    h.grad()[best * cols + j] += out.grad()[j];
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

void sigmoid_backward(Tensor& x, const Tensor& out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.grad()[i] += out.grad()[i] * out[i] * (1.0 - out[i]);
  }
}

Tensor tanh(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

void tanh_backward(Tensor& x, const Tensor& out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.grad()[i] += out.grad()[i] * (1.0 - out[i] * out[i]);
  }
}

Tensor softmax(const Tensor& x) {
  Tensor out(x.shape());
  const double mx = *std::max_element(x.data().begin(), x.data().end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= z;
  return out;
}

void softmax_backward(Tensor& x, const Tensor& out) {
  const double s = dot(out.data(), out.grad());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.grad()[i] += out[i] * (out.grad()[i] - s);
  }
}

Tensor concat(std::span<const Tensor* const> parts) {
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    require_rank(*p, 1, "concat");
    total += p->size();
  }
  Tensor out({total});
  std::size_t at = 0;
  for (const Tensor* p : parts) {
    std::copy(p->data().begin(), p->data().end(), out.data().begin() + at);
    at += p->size();
  }
  return out;
}

void concat_backward(std::span<Tensor* const> parts, const Tensor& out) {
  std::size_t at = 0;
  for (Tensor* p : parts) {
    for (std::size_t i = 0; i < p->size(); ++i) p->grad()[i] += out.grad()[at + i];
    at += p->size();
  }
}

DropoutResult dropout(const Tensor& v, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1), got " +
                      std::to_string(p));
  }
  DropoutResult r{Tensor(v.shape()), std::vector<double>(v.size(), 1.0)};
  if (training && p > 0.0) {
    const double keep = 1.0 / (1.0 - p);
    for (double& s : r.scale) s = rng.bernoulli(p) ? 0.0 : keep;
  }
  for (std::size_t i = 0; i < v.size(); ++i) r.out[i] = v[i] * r.scale[i];
  return r;
}

void dropout_backward(Tensor& v, std::span<const double> scale,
                      const Tensor& out) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    v.grad()[i] += out.grad()[i] * scale[i];
  }
}

GruParams GruParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  GruParams p;
  for (Tensor* w : {&p.wz, &p.wr, &p.wh}) *w = Tensor({hidden_dim, input_dim});
  for (Tensor* u : {&p.uz, &p.ur, &p.uh}) *u = Tensor({hidden_dim, hidden_dim});
  for (Tensor* b : {&p.bz, &p.br, &p.bh}) *b = Tensor({hidden_dim});
  return p;
}

std::vector<Tensor*> GruParams::tensors() {
  return {&wz, &uz, &bz, &wr, &ur, &br, &wh, &uh, &bh};
}

std::vector<const Tensor*> GruParams::tensors() const {
  return {&wz, &uz, &bz, &wr, &ur, &br, &wh, &uh, &bh};
}

namespace {

struct GruGates {
  std::vector<double> z, r, rh, cand;
};

GruGates gru_gates(const Tensor& x, const Tensor& h, const GruParams& p) {
  const std::size_t nh = p.hidden_dim(), ni = p.input_dim();
  GruGates g;
  g.z.assign(p.bz.data().begin(), p.bz.data().end());
  g.r.assign(p.br.data().begin(), p.br.data().end());
  g.cand.assign(p.bh.data().begin(), p.bh.data().end());
  gemv_acc(p.wz.data(), nh, ni, x.data(), g.z);
  gemv_acc(p.uz.data(), nh, nh, h.data(), g.z);
  gemv_acc(p.wr.data(), nh, ni, x.data(), g.r);
  gemv_acc(p.ur.data(), nh, nh, h.data(), g.r);
  g.rh.resize(nh);
  for (std::size_t k = 0; k < nh; ++k) {
    g.z[k] = sigmoid(g.z[k]);
    g.r[k] = sigmoid(g.r[k]);
    g.rh[k] = g.r[k] * h[k];
  }
  gemv_acc(p.wh.data(), nh, ni, x.data(), g.cand);
  gemv_acc(p.uh.data(), nh, nh, g.rh, g.cand);
  for (double& c : g.cand) c = std::tanh(c);
  return g;
}

}  // namespace

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  require(x.rank() == 1 && x.size() == p.input_dim(),
          "gru_cell: input " + shape_string(x.shape()) + " for input dim " +
              std::to_string(p.input_dim()));
  require(h_prev.rank() == 1 && h_prev.size() == p.hidden_dim(),
          "gru_cell: state " + shape_string(h_prev.shape()) +
              " for hidden dim " + std::to_string(p.hidden_dim()));
  const GruGates g = gru_gates(x, h_prev, p);
  Tensor out({p.hidden_dim()});
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (1.0 - g.z[k]) * h_prev[k] + g.z[k] * g.cand[k];
  }
  return out;
}

void gru_cell_backward(Tensor& x, Tensor& h_prev, GruParams& p,
                       const Tensor& out) {
  const std::size_t nh = p.hidden_dim(), ni = p.input_dim();
  const GruGates g = gru_gates(x, h_prev, p);
  auto go = out.grad();
  std::vector<double> daz(nh), dar(nh), dah(nh), drh(nh, 0.0);
  auto hg = h_prev.grad();
  for (std::size_t k = 0; k < nh; ++k) {
    const double dz = go[k] * (g.cand[k] - h_prev[k]);
    daz[k] = dz * g.z[k] * (1.0 - g.z[k]);
    dah[k] = go[k] * g.z[k] * (1.0 - g.cand[k] * g.cand[k]);
    hg[k] += go[k] * (1.0 - g.z[k]);
  }
  outer_acc(p.wh.grad(), nh, ni, dah, x.data());
  outer_acc(p.uh.grad(), nh, nh, dah, g.rh);
  for (std::size_t k = 0; k < nh; ++k) p.bh.grad()[k] += dah[k];
  gemv_t_acc(p.wh.data(), nh, ni, dah, x.grad());
  gemv_t_acc(p.uh.data(), nh, nh, dah, drh);
  for (std::size_t k = 0; k < nh; ++k) {
    hg[k] += drh[k] * g.r[k];
    dar[k] = drh[k] * h_prev[k] * g.r[k] * (1.0 - g.r[k]);
  }
  for (auto [w, u, b, d] :
       {std::tuple{&p.wz, &p.uz, &p.bz, &daz}, std::tuple{&p.wr, &p.ur, &p.br, &dar}}) {
    outer_acc(w->grad(), nh, ni, *d, x.data());
    outer_acc(u->grad(), nh, nh, *d, h_prev.data());
    for (std::size_t k = 0; k < nh; ++k) b->grad()[k] += (*d)[k];
    gemv_t_acc(w->data(), nh, ni, *d, x.grad());
    gemv_t_acc(u->data(), nh, nh, *d, hg);
  }
}

double sgd_step(std::span<Tensor* const> params, const SgdConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) {
    throw ConfigError("learning rate must be non-negative");
  }
  double sq = 0.0;
  for (const Tensor* t : params) {
    for (double g : t->grad()) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient in tensor of shape " +
                            shape_string(t->shape()));
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  double scale = cfg.learning_rate;
  if (cfg.clip_norm && norm > *cfg.clip_norm) scale *= *cfg.clip_norm / norm;
  for (Tensor* t : params) {
    auto v = t->data();
    auto g = t->grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= scale * g[i];
    t->zero_grad();
  }
  return norm;
}

}  // namespace advre
