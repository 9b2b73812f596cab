#include "dualwalk/diffnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <fmt/format.h>

#include "dualwalk/error.hpp"
#include "dualwalk/kernels.hpp"

namespace dualwalk::diffnet {

namespace kp = kernels::parallel;

// ---- tape ------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node node;
  node.external = &p.value;
  node.param = &p;
  node.needs_grad = record_;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
const Matrix<T>& Tape<T>::value(std::size_t id) const {
  const auto& node = nodes_.at(id);
  return node.external ? *node.external : node.value;
}

template <typename T>
Var<T> Tape<T>::push(Matrix<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (const auto& in : inputs) node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
    if (node.needs_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Matrix<T>& Tape<T>::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.param) return node.param->grad;
  if (!node.has_grad) {
    const auto& v = value(id);
    node.own_grad = Matrix<T>(v.rows, v.cols);
    node.has_grad = true;
  }
  return node.own_grad;
}

template <typename T>
const Matrix<T>& Tape<T>::grad(Var<T> v) {
  return grad_buffer(v.id);
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (!record_) throw NumericError("backward() on a tape that did not record a graph");
  if (backward_done_) throw NumericError("backward() called twice on the same tape");
  const auto& lv = value(loss.id);
  if (lv.rows != 1 || lv.cols != 1) throw_shape_error("backward", "loss must be 1 x 1");
  if (!nodes_[loss.id].needs_grad) throw NumericError("loss does not depend on any parameter");
  backward_done_ = true;
  grad_buffer(loss.id).data[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.backward || !node.has_grad) continue;
    node.backward(*this, i);
  }
}

// ---- operators -------------------------------------------------------------

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.cols != wv.cols) throw_shape_error("linear", fmt::format("x is {}x{}, w is {}x{}", xv.rows, xv.cols, wv.rows, wv.cols));
  const kernels::GemmShape shape{xv.rows, xv.cols, wv.rows};
  Matrix<T> y(xv.rows, wv.rows);
  kp::gemm_nt<T>(xv.data, wv.data, y.data, shape);
  const auto xid = x.id, wid = w.id;
  return x.tape->push(std::move(y), {x, w}, [xid, wid, shape](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    if (t.needs_grad(xid)) kp::gemm_nn_acc<T>(dy.data, t.value(wid).data, t.grad_buffer(xid).data, shape);
    if (t.needs_grad(wid)) kp::gemm_tn_acc<T>(dy.data, t.value(xid).data, t.grad_buffer(wid).data, shape);
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw_shape_error("concat_cols", "no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw_shape_error("concat_cols", "row counts differ");
    cols += p.cols();
  }
  Matrix<T> out(rows, cols);
  std::vector<std::pair<std::size_t, std::size_t>> layout;  // (id, width)
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    layout.emplace_back(p.id, v.cols);
    offset += v.cols;
  }
  return parts[0].tape->push(std::move(out), parts, [layout, rows](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    std::size_t off = 0;
    for (const auto& [id, width] : layout) {
      if (t.needs_grad(id)) {
        auto& g = t.grad_buffer(id);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < width; ++c) g(r, c) += dy(r, off + c);
        }
      }
      off += width;
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t offset, std::size_t width) {
  const auto& xv = x.value();
  if (offset + width > xv.cols) throw_shape_error("slice_cols", "slice exceeds columns");
  Matrix<T> out(xv.rows, width);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out(r, c) = xv(r, offset + c);
  }
  const auto xid = x.id;
  return x.tape->push(std::move(out), {x}, [xid, offset, width](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    auto& g = t.grad_buffer(xid);
    for (std::size_t r = 0; r < dy.rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) g(r, offset + c) += dy(r, c);
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!av.same_shape(bv)) throw_shape_error("add", "operand shapes differ");
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  const auto aid = a.id, bid = b.id;
  return a.tape->push(std::move(out), {a, b}, [aid, bid](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    for (auto id : {aid, bid}) {
      if (!t.needs_grad(id)) continue;
      auto& g = t.grad_buffer(id);
      for (std::size_t i = 0; i < dy.size(); ++i) g.data[i] += dy.data[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Matrix<T> out = x.value();
  for (auto& v : out.data) v *= factor;
  const auto xid = x.id;
  return x.tape->push(std::move(out), {x}, [xid, factor](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    auto& g = t.grad_buffer(xid);
    for (std::size_t i = 0; i < dy.size(); ++i) g.data[i] += factor * dy.data[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Matrix<T> out = x.value();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  const auto xid = x.id;
  return x.tape->push(std::move(out), {x}, [xid](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    const auto& xv = t.value(xid);
    auto& g = t.grad_buffer(xid);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (xv.data[i] > T(0)) g.data[i] += dy.data[i];
    }
  });
}

template <typename T>
Var<T> mlp2_relu(Var<T> x, Var<T> w1, Var<T> w2) {
  return linear(relu(linear(x, w1)), w2);
}

template <typename T>
LstmState<T> lstm_cell(Var<T> input, LstmState<T> prev, Var<T> weight, Var<T> bias) {
  Tape<T>& tape = *input.tape;
  const auto& xv = input.value();
  const auto& hv = prev.hidden.value();
  const auto& cv = prev.cell.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  const std::size_t batch = xv.rows;
  const std::size_t in = xv.cols;
  const std::size_t hidden = hv.cols;
  if (hv.rows != batch || cv.rows != batch || cv.cols != hidden) throw_shape_error("lstm_cell", "state shape");
  if (wv.rows != 4 * hidden || wv.cols != in + hidden) {
    throw_shape_error("lstm_cell", fmt::format("weight is {}x{}, expected {}x{}", wv.rows, wv.cols, 4 * hidden, in + hidden));
  }
  if (bv.rows != 1 || bv.cols != 4 * hidden) throw_shape_error("lstm_cell", "bias shape");

  auto xh = std::make_shared<Matrix<T>>(batch, in + hidden);
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy(xv.row(r).begin(), xv.row(r).end(), xh->row(r).begin());
    std::copy(hv.row(r).begin(), hv.row(r).end(), xh->row(r).begin() + static_cast<std::ptrdiff_t>(in));
  }
  const kernels::GemmShape shape{batch, in + hidden, 4 * hidden};
  Matrix<T> z(batch, 4 * hidden);
  kp::gemm_nt<T>(xh->data, wv.data, z.data, shape);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < 4 * hidden; ++j) z(r, j) += bv.data[j];
  }
  auto gates = std::make_shared<Matrix<T>>(batch, 4 * hidden);
  auto c_next = std::make_shared<Matrix<T>>(batch, hidden);
  Matrix<T> h_next(batch, hidden);
  kp::lstm_forward<T>(z.data, cv.data, gates->data, c_next->data, h_next.data, batch, hidden);

  Matrix<T> packed(batch, 2 * hidden);
  for (std::size_t r = 0; r < batch; ++r) {
    std::copy(h_next.row(r).begin(), h_next.row(r).end(), packed.row(r).begin());
    std::copy(c_next->row(r).begin(), c_next->row(r).end(), packed.row(r).begin() + static_cast<std::ptrdiff_t>(hidden));
  }
  const auto xid = input.id, hid = prev.hidden.id, cid = prev.cell.id, wid = weight.id, bid = bias.id;
  auto core = tape.push(std::move(packed), {input, prev.hidden, prev.cell, weight, bias},
                        [=](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_buffer(self);
                          Matrix<T> dh(batch, hidden), dc(batch, hidden);
                          for (std::size_t r = 0; r < batch; ++r) {
                            for (std::size_t j = 0; j < hidden; ++j) {
                              dh(r, j) = g(r, j);
                              dc(r, j) = g(r, hidden + j);
                            }
                          }
                          Matrix<T> dz(batch, 4 * hidden);
                          Matrix<T> dc_prev(batch, hidden);
                          kp::lstm_backward<T>(gates->data, t.value(cid).data, c_next->data, dh.data, dc.data,
                                               dz.data, dc_prev.data, batch, hidden);
                          if (t.needs_grad(wid)) kp::gemm_tn_acc<T>(dz.data, xh->data, t.grad_buffer(wid).data, shape);
                          if (t.needs_grad(bid)) kp::colsum_acc<T>(dz.data, t.grad_buffer(bid).data, batch, 4 * hidden);
                          if (t.needs_grad(xid) || t.needs_grad(hid)) {
                            Matrix<T> dxh(batch, in + hidden);
                            kp::gemm_nn_acc<T>(dz.data, t.value(wid).data, dxh.data, shape);
                            if (t.needs_grad(xid)) {
                              auto& gx = t.grad_buffer(xid);
                              for (std::size_t r = 0; r < batch; ++r)
                                for (std::size_t k = 0; k < in; ++k) gx(r, k) += dxh(r, k);
                            }
                            if (t.needs_grad(hid)) {
                              auto& gh = t.grad_buffer(hid);
                              for (std::size_t r = 0; r < batch; ++r)
                                for (std::size_t k = 0; k < hidden; ++k) gh(r, k) += dxh(r, in + k);
                            }
                          }
                          if (t.needs_grad(cid)) {
                            auto& gc = t.grad_buffer(cid);
                            for (std::size_t i = 0; i < dc_prev.size(); ++i) gc.data[i] += dc_prev.data[i];
                          }
                        });
  return {slice_cols(core, 0, hidden), slice_cols(core, hidden, hidden)};
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> index) {
  const auto& tv = table.value();
  Matrix<T> out(index.size(), tv.cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const auto i = index[r];
    if (i < 0 || static_cast<std::size_t>(i) >= tv.rows) throw_shape_error("gather_rows", fmt::format("row {} out of range", i));
    std::copy(tv.row(static_cast<std::size_t>(i)).begin(), tv.row(static_cast<std::size_t>(i)).end(), out.row(r).begin());
  }
  const auto tid = table.id;
  std::vector<std::int32_t> idx(index.begin(), index.end());
  return table.tape->push(std::move(out), {table}, [tid, idx = std::move(idx)](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    auto& g = t.grad_buffer(tid);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto dst = g.row(static_cast<std::size_t>(idx[r]));
      const auto src = dy.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var<T> dot_gather(Var<T> q, std::size_t offset, Var<T> table, const IndexMatrix& index) {
  const auto& qv = q.value();
  const auto& tv = table.value();
  const std::size_t width = tv.cols;
  if (index.rows != qv.rows) throw_shape_error("dot_gather", "index rows differ from query rows");
  if (offset + width > qv.cols) throw_shape_error("dot_gather", "query slice exceeds columns");
  for (auto i : index.data) {
    if (i >= 0 && static_cast<std::size_t>(i) >= tv.rows) throw_shape_error("dot_gather", fmt::format("row {} out of range", i));
  }
  Matrix<T> out(index.rows, index.cols);
  const auto B = static_cast<std::ptrdiff_t>(index.rows);
#pragma omp parallel for schedule(static) if (index.size() * width >= (1u << 15))
  for (std::ptrdiff_t bb = 0; bb < B; ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const T* qr = qv.data.data() + b * qv.cols + offset;
    for (std::size_t a = 0; a < index.cols; ++a) {
      const auto i = index(b, a);
      if (i < 0) continue;
      const T* tr = tv.data.data() + static_cast<std::size_t>(i) * width;
      double acc = 0.0;
      for (std::size_t k = 0; k < width; ++k) acc += static_cast<double>(qr[k]) * tr[k];
      out(b, a) = static_cast<T>(acc);
    }
  }
  const auto qid = q.id, tid = table.id;
  auto idx = std::make_shared<IndexMatrix>(index);
  return q.tape->push(std::move(out), {q, table}, [qid, tid, idx, offset, width](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    const auto& qv2 = t.value(qid);
    const auto& tv2 = t.value(tid);
    if (t.needs_grad(qid)) {
      auto& gq = t.grad_buffer(qid);
      for (std::size_t b = 0; b < idx->rows; ++b) {
        for (std::size_t a = 0; a < idx->cols; ++a) {
          const auto i = (*idx)(b, a);
          if (i < 0) continue;
          const T g = dy(b, a);
          const T* tr = tv2.data.data() + static_cast<std::size_t>(i) * width;
          for (std::size_t k = 0; k < width; ++k) gq(b, offset + k) += g * tr[k];
        }
      }
    }
    if (t.needs_grad(tid)) {
      auto& gt = t.grad_buffer(tid);
      for (std::size_t b = 0; b < idx->rows; ++b) {
        const T* qr = qv2.data.data() + b * qv2.cols + offset;
        for (std::size_t a = 0; a < idx->cols; ++a) {
          const auto i = (*idx)(b, a);
          if (i < 0) continue;
          const T g = dy(b, a);
          auto dst = gt.row(static_cast<std::size_t>(i));
          for (std::size_t k = 0; k < width; ++k) dst[k] += g * qr[k];
        }
      }
    }
  });
}

template <typename T>
Var<T> masked_log_softmax(Var<T> scores, const Mask& mask) {
  const auto& sv = scores.value();
  if (!(mask.rows == sv.rows && mask.cols == sv.cols)) throw_shape_error("masked_log_softmax", "mask shape");
  Matrix<T> out(sv.rows, sv.cols, std::numeric_limits<T>::lowest());
  for (std::size_t r = 0; r < sv.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sv.cols; ++c) {
      if (mask(r, c)) mx = std::max(mx, static_cast<double>(sv(r, c)));
    }
    if (!std::isfinite(mx)) throw NumericError(fmt::format("masked_log_softmax: row {} has no open slot", r));
    double z = 0.0;
    for (std::size_t c = 0; c < sv.cols; ++c) {
      if (mask(r, c)) z += std::exp(static_cast<double>(sv(r, c)) - mx);
    }
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < sv.cols; ++c) {
      if (mask(r, c)) out(r, c) = static_cast<T>(static_cast<double>(sv(r, c)) - log_z);
    }
  }
  const auto sid = scores.id;
  auto m = std::make_shared<Mask>(mask);
  return scores.tape->push(std::move(out), {scores}, [sid, m](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    const auto& y = t.value(self);
    auto& g = t.grad_buffer(sid);
    for (std::size_t r = 0; r < y.rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c) {
        if ((*m)(r, c)) total += dy(r, c);
      }
      for (std::size_t c = 0; c < y.cols; ++c) {
        if (!(*m)(r, c)) continue;
        g(r, c) += static_cast<T>(dy(r, c) - std::exp(static_cast<double>(y(r, c))) * total);
      }
    }
  });
}

template <typename T>
Var<T> pick(Var<T> x, std::span<const std::int32_t> column) {
  const auto& xv = x.value();
  if (column.size() != xv.rows) throw_shape_error("pick", "one column per row required");
  Matrix<T> out(xv.rows, 1);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    if (column[r] < 0 || static_cast<std::size_t>(column[r]) >= xv.cols) throw_shape_error("pick", "column out of range");
    out(r, 0) = xv(r, static_cast<std::size_t>(column[r]));
  }
  const auto xid = x.id;
  std::vector<std::int32_t> cols(column.begin(), column.end());
  return x.tape->push(std::move(out), {x}, [xid, cols = std::move(cols)](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    auto& g = t.grad_buffer(xid);
    for (std::size_t r = 0; r < cols.size(); ++r) g(r, static_cast<std::size_t>(cols[r])) += dy(r, 0);
  });
}

template <typename T>
Var<T> entropy(Var<T> log_probs, const Mask& mask) {
  const auto& lv = log_probs.value();
  if (!(mask.rows == lv.rows && mask.cols == lv.cols)) throw_shape_error("entropy", "mask shape");
  Matrix<T> out(lv.rows, 1);
  for (std::size_t r = 0; r < lv.rows; ++r) {
    double h = 0.0;
    for (std::size_t c = 0; c < lv.cols; ++c) {
      if (!mask(r, c)) continue;
      const double lp = lv(r, c);
      h -= std::exp(lp) * lp;
    }
    out(r, 0) = static_cast<T>(h);
  }
  const auto lid = log_probs.id;
  auto m = std::make_shared<Mask>(mask);
  return log_probs.tape->push(std::move(out), {log_probs}, [lid, m](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_buffer(self);
    const auto& lv2 = t.value(lid);
    auto& g = t.grad_buffer(lid);
    for (std::size_t r = 0; r < lv2.rows; ++r) {
      for (std::size_t c = 0; c < lv2.cols; ++c) {
        if (!(*m)(r, c)) continue;
        const double lp = lv2(r, c);
        g(r, c) += static_cast<T>(-dy(r, 0) * std::exp(lp) * (lp + 1.0));
      }
    }
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Matrix<T>& weights) {
  const auto& xv = x.value();
  if (!xv.same_shape(weights)) throw_shape_error("weighted_sum", "weights shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv.data[i]) * weights.data[i];
  Matrix<T> out(1, 1, static_cast<T>(acc));
  const auto xid = x.id;
  auto w = std::make_shared<Matrix<T>>(weights);
  return x.tape->push(std::move(out), {x}, [xid, w](Tape<T>& t, std::size_t self) {
    const T dy = t.grad_buffer(self).data[0];
    auto& g = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += dy * w->data[i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  double acc = 0.0;
  for (auto v : x.value().data) acc += v;
  const auto xid = x.id;
  return x.tape->push(Matrix<T>(1, 1, static_cast<T>(acc)), {x}, [xid](Tape<T>& t, std::size_t self) {
    const T dy = t.grad_buffer(self).data[0];
    auto& g = t.grad_buffer(xid);
    for (auto& v : g.data) v += dy;
  });
}

std::vector<double> masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> mask) {
  if (scores.size() != mask.size()) throw_shape_error("masked_softmax", "mask length");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) mx = std::max(mx, scores[i]);
  }
  if (!std::isfinite(mx)) throw NumericError("masked_softmax: every slot is masked");
  std::vector<double> p(scores.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) z += (p[i] = std::exp(scores[i] - mx));
  }
  for (auto& v : p) v /= z;
  return p;
}

// ---- optimisation ----------------------------------------------------------

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    first_.emplace_back(p->value.size(), 0.0);
    second_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double update = config_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
      p.value.data[k] = static_cast<T>(p.value.data[k] - update);
    }
    p.zero_grad();
  }
}

template <typename T>
double global_grad_norm(std::span<Parameter<T>* const> params) {
  double total = 0.0;
  for (const auto* p : params) {
    for (auto g : p->grad.data) total += static_cast<double>(g) * g;
  }
  return std::sqrt(total);
}

template <typename T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm) {
  const double norm = global_grad_norm<T>(params);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto* p : params) {
      for (auto& g : p->grad.data) g = static_cast<T>(g * factor);
    }
  }
  return norm;
}

#define INSTANTIATE(T)                                                                              \
  template class Tape<T>;                                                                            \
  template Var<T> linear<T>(Var<T>, Var<T>);                                                         \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                                           \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                                   \
  template Var<T> add<T>(Var<T>, Var<T>);                                                            \
  template Var<T> scale<T>(Var<T>, T);                                                               \
  template Var<T> relu<T>(Var<T>);                                                                   \
  template Var<T> mlp2_relu<T>(Var<T>, Var<T>, Var<T>);                                              \
  template LstmState<T> lstm_cell<T>(Var<T>, LstmState<T>, Var<T>, Var<T>);                          \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::int32_t>);                             \
  template Var<T> dot_gather<T>(Var<T>, std::size_t, Var<T>, const IndexMatrix&);                    \
  template Var<T> masked_log_softmax<T>(Var<T>, const Mask&);                                        \
  template Var<T> pick<T>(Var<T>, std::span<const std::int32_t>);                                    \
  template Var<T> entropy<T>(Var<T>, const Mask&);                                                   \
  template Var<T> weighted_sum<T>(Var<T>, const Matrix<T>&);                                         \
  template Var<T> sum<T>(Var<T>);                                                                    \
  template class Adam<T>;                                                                            \
  template double global_grad_norm<T>(std::span<Parameter<T>* const>);                               \
  template double clip_grad_norm<T>(std::span<Parameter<T>* const>, double);
INSTANTIATE(float)
INSTANTIATE(double)
#undef INSTANTIATE

}  // namespace dualwalk::diffnet
