#ifndef ADVRE_TENSOR_H_
#define ADVRE_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advre/rng.h"

namespace advre {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with a same-shape gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor vec(std::initializer_list<double> values);
  static Tensor mat(std::size_t rows, std::size_t cols,
                    std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  // Rank-2 helpers.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;
  std::span<double> grad_row(std::size_t r);
  std::span<const double> grad_row(std::size_t r) const;

  void zero_grad();
  void fill(double v);

  // Values and shape equal; gradients are ignored.
  bool same_values(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

// Every forward op below returns a fresh tensor. The matching *_backward
// reads the upstream gradient from out.grad() and accumulates into the
// gradient buffers of the inputs.

// out[i] = sum_j w[i,j] * x[j]
Tensor matvec(const Tensor& w, const Tensor& x);
void matvec_backward(Tensor& w, Tensor& x, const Tensor& out);

double dot(std::span<const double> a, std::span<const double> b);

// Same-width convolution over the rows of x (n x k_i). The kernel is
// k_h x (window * k_i); the input is padded with (window-1)/2 zero rows on
// each side, so out has n rows.
Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t window);
void conv1d_backward(Tensor& x, Tensor& kernel, std::size_t window,
                     const Tensor& out);

// out[i,j] = h[i,j] + b[j]
Tensor add_row_bias(const Tensor& h, const Tensor& b);
void add_row_bias_backward(Tensor& h, Tensor& b, const Tensor& out);

// Column-wise max over rows [begin, end) of h. Ties go to the lowest row.
Tensor max_pool_cols(const Tensor& h);
Tensor max_pool_cols(const Tensor& h, std::size_t begin, std::size_t end);
void max_pool_cols_backward(Tensor& h, const Tensor& out);
void max_pool_cols_backward(Tensor& h, std::size_t begin, std::size_t end,
                            const Tensor& out);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
void sigmoid_backward(Tensor& x, const Tensor& out);

Tensor tanh(const Tensor& x);
void tanh_backward(Tensor& x, const Tensor& out);

// Max-shifted softmax over all entries.
Tensor softmax(const Tensor& x);
void softmax_backward(Tensor& x, const Tensor& out);

// Concatenation of rank-1 tensors.
Tensor concat(std::span<const Tensor* const> parts);
void concat_backward(std::span<Tensor* const> parts, const Tensor& out);

// Inverted dropout. `scale` holds 0 for dropped entries and 1/(1-p) for
// kept ones; it is all ones when training is false.
struct DropoutResult {
  Tensor out;
  std::vector<double> scale;
};
DropoutResult dropout(const Tensor& v, double p, bool training, Rng& rng);
void dropout_backward(Tensor& v, std::span<const double> scale,
                      const Tensor& out);

// Gated recurrent unit:
//   z  = sigmoid(wz x + uz h + bz)
//   r  = sigmoid(wr x + ur h + br)
//   h~ = tanh(wh x + uh (r * h) + bh)
//   h' = (1 - z) * h + z * h~
struct GruParams {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;

  static GruParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  std::size_t input_dim() const { return wz.cols(); }
  std::size_t hidden_dim() const { return wz.rows(); }
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p);
void gru_cell_backward(Tensor& x, Tensor& h_prev, GruParams& p,
                       const Tensor& out);

struct SgdConfig {
  double learning_rate = 0.1;
  std::optional<double> clip_norm;
};

// value -= lr * grad for every tensor (after optional global-norm clipping),
// then zeroes the gradients. Returns the pre-clip global gradient norm.
// Throws TrainingError on a non-finite gradient.
double sgd_step(std::span<Tensor* const> params, const SgdConfig& cfg);

}  // namespace advre

#endif  // ADVRE_TENSOR_H_
