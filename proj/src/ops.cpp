#include "mmfx/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace mmfx {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap mat(const Tensor& t, int r, int c) { return ConstMap(t.data.data(), r, c); }
MutMap mat(Tensor& t, int r, int c) { return MutMap(t.data.data(), r, c); }

ConstMap mat(const std::vector<double>& v, int r, int c) { return ConstMap(v.data(), r, c); }
MutMap mat(std::vector<double>& v, int r, int c) { return MutMap(v.data(), r, c); }

// The common tape of all on-tape inputs, nullptr if none.
Tape* merged_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* t = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->on_tape()) continue;
    if (t != nullptr && t != in->tape) throw Error("op inputs belong to different tapes");
    t = in->tape;
  }
  return t;
}

int node_of(const Tensor& t) { return t.on_tape() ? t.node : -1; }

void require_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(r) + " tensor, got " + t.shape_str());
}

}  // namespace

Tensor matmul_bias(const Tensor& a, const Tensor& w, const Tensor& b) {
  require_rank(a, 2, "matmul_bias");
  require_rank(w, 2, "matmul_bias");
  const int m = a.rows(), k = a.cols(), n = w.cols();
  if (w.rows() != k)
    throw ShapeError("matmul_bias: inner dimensions disagree, A " + a.shape_str() + " vs W " + w.shape_str());
  const bool has_bias = b.size() > 0;
  if (has_bias && !(b.rank() == 1 && b.dim(0) == n))
    throw ShapeError("matmul_bias: bias " + b.shape_str() + " does not match output columns " + std::to_string(n));

  Tensor out = Tensor::zeros({m, n});
  mat(out, m, n).noalias() = mat(a, m, k) * mat(w, k, n);
  if (has_bias) {
    auto o = mat(out, m, n);
    Eigen::Map<const Eigen::RowVectorXd> bias(b.data.data(), n);
    o.rowwise() += bias;
  }

  if (Tape* tape = merged_tape({&a, &w, &b})) {
    int na = node_of(a), nw = node_of(w), nb = has_bias ? node_of(b) : -1;
    std::vector<double> a_saved = a.data, w_saved = w.data;
    tape->record(out, {na, nw, nb}, [=](const std::vector<double>& gout, GradStore& grads) {
      ConstMap g(gout.data(), m, n);
      if (na >= 0) {
        RowMat ga = g * mat(w_saved, k, n).transpose();
        grads.add(na, ga.data(), ga.size());
      }
      if (nw >= 0) {
        RowMat gw = mat(a_saved, m, k).transpose() * g;
        grads.add(nw, gw.data(), gw.size());
      }
      if (nb >= 0) {
        Eigen::RowVectorXd gb = g.colwise().sum();
        grads.add(nb, gb.data(), gb.size());
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& w) { return matmul_bias(a, w, Tensor{}); }

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({n, m});
  mat(out, n, m) = mat(x, m, n).transpose();
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      RowMat gx = ConstMap(gout.data(), n, m).transpose();
      grads.add(nx, gx.data(), gx.size());
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = x.detached();
  for (double& v : out.data) v *= c;
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> gx(gout.size());
      for (size_t i = 0; i < gout.size(); ++i) gx[i] = c * gout[i];
      grads.add(nx, gx.data(), gx.size());
    });
  }
  return out;
}

Tensor add(const Tensor& x, const Tensor& y) {
  if (x.shape != y.shape) throw ShapeError("add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out = x.detached();
  for (int i = 0; i < out.size(); ++i) out[i] += y[i];
  if (Tape* tape = merged_tape({&x, &y})) {
    int nx = node_of(x), ny = node_of(y);
    tape->record(out, {nx, ny}, [=](const std::vector<double>& gout, GradStore& grads) {
      if (nx >= 0) grads.add(nx, gout.data(), gout.size());
      if (ny >= 0) grads.add(ny, gout.data(), gout.size());
    });
  }
  return out;
}

Tensor mul_elem(const Tensor& x, const Tensor& y) {
  if (x.shape != y.shape) throw ShapeError("mul_elem: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  Tensor out = x.detached();
  for (int i = 0; i < out.size(); ++i) out[i] *= y[i];
  if (Tape* tape = merged_tape({&x, &y})) {
    int nx = node_of(x), ny = node_of(y);
    std::vector<double> xs = x.data, ys = y.data;
    tape->record(out, {nx, ny}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> g(gout.size());
      if (nx >= 0) {
        for (size_t i = 0; i < gout.size(); ++i) g[i] = gout[i] * ys[i];
        grads.add(nx, g.data(), g.size());
      }
      if (ny >= 0) {
        for (size_t i = 0; i < gout.size(); ++i) g[i] = gout[i] * xs[i];
        grads.add(ny, g.data(), g.size());
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x.detached();
  // NaN passes through so the forward-pass finiteness checks can catch it
  for (double& v : out.data) v = v > 0.0 || std::isnan(v) ? v : 0.0;
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    std::vector<char> mask(x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) mask[i] = x.data[i] > 0.0 ? 1 : 0;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> g(gout.size());
      for (size_t i = 0; i < gout.size(); ++i) g[i] = mask[i] ? gout[i] : 0.0;
      grads.add(nx, g.data(), g.size());
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    std::vector<double> p = out.data;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> gx(gout.size());
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gout[i * n + j] * p[i * n + j];
        for (int j = 0; j < n; ++j) gx[i * n + j] = p[i * n + j] * (gout[i * n + j] - dot);
      }
      grads.add(nx, gx.data(), gx.size());
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const int m = x.rows(), d = x.cols();
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " + gamma.shape_str() + " / " +
                     beta.shape_str());
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");

  Tensor out = Tensor::zeros({m, d});
  std::vector<double> xhat(static_cast<size_t>(m) * d);
  std::vector<double> inv_std(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x.at(i, j);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = x.at(i, j) - mu;
      var += c * c;
    }
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      double xh = (x.at(i, j) - mu) * is;
      xhat[static_cast<size_t>(i) * d + j] = xh;
      out.at(i, j) = gamma[j] * xh + beta[j];
    }
  }

  if (Tape* tape = merged_tape({&x, &gamma, &beta})) {
    int nx = node_of(x), ng = node_of(gamma), nb = node_of(beta);
    std::vector<double> gamma_saved = gamma.data;
    tape->record(out, {nx, ng, nb}, [=](const std::vector<double>& gout, GradStore& grads) {
      if (nb >= 0) {
        std::vector<double> gb(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += gout[i * d + j];
        grads.add(nb, gb.data(), gb.size());
      }
      if (ng >= 0) {
        std::vector<double> gg(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < d; ++j) gg[static_cast<size_t>(j)] += gout[i * d + j] * xhat[static_cast<size_t>(i) * d + j];
        grads.add(ng, gg.data(), gg.size());
      }
      if (nx >= 0) {
        std::vector<double> gx(static_cast<size_t>(m) * d);
        for (int i = 0; i < m; ++i) {
          double mean_gh = 0.0, mean_ghx = 0.0;
          for (int j = 0; j < d; ++j) {
            double gh = gout[i * d + j] * gamma_saved[static_cast<size_t>(j)];
            mean_gh += gh;
            mean_ghx += gh * xhat[static_cast<size_t>(i) * d + j];
          }
          mean_gh /= d;
          mean_ghx /= d;
          for (int j = 0; j < d; ++j) {
            double gh = gout[i * d + j] * gamma_saved[static_cast<size_t>(j)];
            gx[static_cast<size_t>(i) * d + j] =
                inv_std[static_cast<size_t>(i)] * (gh - mean_gh - xhat[static_cast<size_t>(i) * d + j] * mean_ghx);
          }
        }
        grads.add(nx, gx.data(), gx.size());
      }
    });
  }
  return out;
}

namespace {

// im2col: each output column holds one receptive field, laid out channel-major.
void im2col(const double* in, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
            std::vector<double>& cols) {
  cols.assign(static_cast<size_t>(c_in) * kh * kw * oh * ow, 0.0);
  const int ncols = oh * ow;
  for (int c = 0; c < c_in; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (c * kh + ki) * kw + kj;
        double* dst = cols.data() + static_cast<size_t>(row) * ncols;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          const double* src = in + (static_cast<size_t>(c) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[oi * ow + oj] = src[jj];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int c_in, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
            double* out) {
  const int ncols = oh * ow;
  for (int c = 0; c < c_in; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (c * kh + ki) * kw + kj;
        const double* src = cols + static_cast<size_t>(row) * ncols;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          double* dst = out + (static_cast<size_t>(c) * h + ii) * w;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) dst[jj] += src[oi * ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  require_rank(input, 3, "conv2d");
  require_rank(kernels, 4, "conv2d");
  const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int c_out = kernels.dim(0), kc = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kc != c_in)
    throw ShapeError("conv2d: kernel channels " + kernels.shape_str() + " do not match input " + input.shape_str());
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw ConfigError("conv2d: kernel exceeds padded input size");
  if ((h + 2 * padding - kh) % stride != 0 || (w + 2 * padding - kw) % stride != 0)
    throw ConfigError("conv2d: output size is not integral for input " + input.shape_str() + ", kernel " +
                      kernels.shape_str() + ", stride " + std::to_string(stride) + ", padding " +
                      std::to_string(padding));
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  const int patch = c_in * kh * kw;

  std::vector<double> cols;
  im2col(input.data.data(), c_in, h, w, kh, kw, stride, padding, oh, ow, cols);

  Tensor out = Tensor::zeros({c_out, oh, ow});
  mat(out.data, c_out, oh * ow).noalias() = mat(kernels.data, c_out, patch) * mat(cols, patch, oh * ow);

  if (Tape* tape = merged_tape({&input, &kernels})) {
    int ni = node_of(input), nk = node_of(kernels);
    std::vector<double> in_saved = input.data, k_saved = kernels.data;
    tape->record(out, {ni, nk}, [=](const std::vector<double>& gout, GradStore& grads) {
      ConstMap g(gout.data(), c_out, oh * ow);
      if (nk >= 0) {
        std::vector<double> cols2;
        im2col(in_saved.data(), c_in, h, w, kh, kw, stride, padding, oh, ow, cols2);
        RowMat gk = g * mat(cols2, patch, oh * ow).transpose();
        grads.add(nk, gk.data(), gk.size());
      }
      if (ni >= 0) {
        RowMat gcols = mat(k_saved, c_out, patch).transpose() * g;
        std::vector<double> gin(static_cast<size_t>(c_in) * h * w, 0.0);
        col2im(gcols.data(), c_in, h, w, kh, kw, stride, padding, oh, ow, gin.data());
        grads.add(ni, gin.data(), gin.size());
      }
    });
  }
  return out;
}

Tensor bias_channels(const Tensor& x, const Tensor& b) {
  require_rank(x, 3, "bias_channels");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (b.rank() != 1 || b.dim(0) != c)
    throw ShapeError("bias_channels: bias " + b.shape_str() + " does not match channels of " + x.shape_str());
  Tensor out = x.detached();
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h * w; ++i) out[ch * h * w + i] += b[ch];
  if (Tape* tape = merged_tape({&x, &b})) {
    int nx = node_of(x), nb = node_of(b);
    tape->record(out, {nx, nb}, [=](const std::vector<double>& gout, GradStore& grads) {
      if (nx >= 0) grads.add(nx, gout.data(), gout.size());
      if (nb >= 0) {
        std::vector<double> gb(static_cast<size_t>(c), 0.0);
        for (int ch = 0; ch < c; ++ch)
          for (int i = 0; i < h * w; ++i) gb[static_cast<size_t>(ch)] += gout[ch * h * w + i];
        grads.add(nb, gb.data(), gb.size());
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 3, "global_avg_pool");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const double inv = 1.0 / (h * w);
  Tensor out = Tensor::zeros({c});
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int i = 0; i < h * w; ++i) s += x[ch * h * w + i];
    out[ch] = s * inv;
  }
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> gx(static_cast<size_t>(c) * h * w);
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h * w; ++i) gx[static_cast<size_t>(ch) * h * w + i] = gout[static_cast<size_t>(ch)] * inv;
      grads.add(nx, gx.data(), gx.size());
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const int m = x.rows(), d = x.cols();
  const double inv = 1.0 / m;
  Tensor out = Tensor::zeros({d});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) out[j] += x.at(i, j) * inv;
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> gx(static_cast<size_t>(m) * d);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) gx[static_cast<size_t>(i) * d + j] = gout[static_cast<size_t>(j)] * inv;
      grads.add(nx, gx.data(), gx.size());
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw ShapeError("reshape: cannot view " + x.shape_str() + " as " + Tensor::zeros(new_shape).shape_str());
  Tensor out(new_shape, x.data);
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      grads.add(nx, gout.data(), gout.size());
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1 || a.rank() > 2)
    throw ShapeError("concat: operands must both be rank-1 or rank-2, got " + a.shape_str() + " and " + b.shape_str());
  if (a.rank() == 2 && a.cols() != b.cols())
    throw ShapeError("concat: column mismatch " + a.shape_str() + " vs " + b.shape_str());

  std::vector<int> shape = a.shape;
  shape[0] += b.shape[0];
  std::vector<double> data;
  data.reserve(a.data.size() + b.data.size());
  data.insert(data.end(), a.data.begin(), a.data.end());
  data.insert(data.end(), b.data.begin(), b.data.end());
  Tensor out(shape, std::move(data));

  if (Tape* tape = merged_tape({&a, &b})) {
    int na = node_of(a), nb = node_of(b);
    size_t a_len = a.data.size(), b_len = b.data.size();
    tape->record(out, {na, nb}, [=](const std::vector<double>& gout, GradStore& grads) {
      if (na >= 0) grads.add(na, gout.data(), a_len);
      if (nb >= 0) grads.add(nb, gout.data() + a_len, b_len);
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const int d = rows[0].size();
  const int n = static_cast<int>(rows.size());
  std::vector<double> data;
  data.reserve(static_cast<size_t>(n) * d);
  Tape* tape = nullptr;
  std::vector<int> nodes(rows.size(), -1);
  for (size_t i = 0; i < rows.size(); ++i) {
    const Tensor& r = rows[i];
    if (r.size() != d || (r.rank() == 2 && r.rows() != 1))
      throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " + r.shape_str());
    data.insert(data.end(), r.data.begin(), r.data.end());
    if (r.on_tape()) {
      if (tape != nullptr && tape != r.tape) throw Error("stack_rows: inputs belong to different tapes");
      tape = r.tape;
      nodes[i] = r.node;
    }
  }
  Tensor out({n, d}, std::move(data));
  if (tape) {
    tape->record(out, nodes, [=](const std::vector<double>& gout, GradStore& grads) {
      for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] >= 0) grads.add(nodes[i], gout.data() + i * static_cast<size_t>(d), static_cast<size_t>(d));
    });
  }
  return out;
}

Tensor select(const Tensor& x, int flat_index) {
  if (flat_index < 0 || flat_index >= x.size())
    throw Error("select: index " + std::to_string(flat_index) + " out of range for " + x.shape_str());
  Tensor out = Tensor::scalar(x[flat_index]);
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      grads.add_at(nx, static_cast<size_t>(flat_index), gout[0]);
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data) s += v;
  Tensor out = Tensor::scalar(s);
  if (Tape* tape = merged_tape({&x})) {
    int nx = x.node;
    int n = x.size();
    tape->record(out, {nx}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> gx(static_cast<size_t>(n), gout[0]);
      grads.add(nx, gx.data(), gx.size());
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const int m = logits.rows(), k = logits.cols();
  if (static_cast<int>(labels.size()) != m)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) +
                     " rows");
  for (int lab : labels)
    if (lab < 0 || lab >= k) throw Error("softmax_cross_entropy: label out of range");

  std::vector<double> probs(static_cast<size_t>(m) * k);
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    double mx = logits.at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      double e = std::exp(logits.at(i, j) - mx);
      probs[static_cast<size_t>(i) * k + j] = e;
      sum += e;
    }
    for (int j = 0; j < k; ++j) probs[static_cast<size_t>(i) * k + j] /= sum;
    loss += (mx + std::log(sum)) - logits.at(i, labels[static_cast<size_t>(i)]);
  }
  loss /= m;

  Tensor out = Tensor::scalar(loss);
  if (Tape* tape = merged_tape({&logits})) {
    int nl = logits.node;
    std::vector<int> labs = labels;
    tape->record(out, {nl}, [=](const std::vector<double>& gout, GradStore& grads) {
      std::vector<double> g(probs.size());
      const double c = gout[0] / m;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
          g[static_cast<size_t>(i) * k + j] =
              c * (probs[static_cast<size_t>(i) * k + j] - (labs[static_cast<size_t>(i)] == j ? 1.0 : 0.0));
      grads.add(nl, g.data(), g.size());
    });
  }
  return out;
}

}  // namespace mmfx
