#include <algorithm>
#include <cmath>
#include <memory>

#include "egolstm/ops.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

namespace {

template <class T>
void softmax_row(const T* logits, std::int64_t k, double* probs) {
  const T peak = *std::max_element(logits, logits + k);
  double total = 0.0;
  for (std::int64_t j = 0; j < k; ++j) {
    probs[j] = std::exp(static_cast<double>(logits[j] - peak));
    total += probs[j];
  }
  for (std::int64_t j = 0; j < k; ++j) probs[j] /= total;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  if (logits.dim() < 1) throw ShapeError("softmax: needs at least one axis");
  const std::int64_t k = logits.size(-1);
  const std::int64_t rows = logits.numel() / k;
  Tensor out = Tensor::zeros(logits.shape(), logits.dtype());
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = logits.data<T>();
    auto dst = out.mutable_data<T>();
    std::vector<double> probs(static_cast<std::size_t>(k));
    for (std::int64_t r = 0; r < rows; ++r) {
      softmax_row(src.data() + r * k, k, probs.data());
      for (std::int64_t j = 0; j < k; ++j) dst[static_cast<std::size_t>(r * k + j)] = static_cast<T>(probs[j]);
    }
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels) {
  if (logits.dim() != 1 && logits.dim() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be [K] or [N,K], got " + shape_string(logits.shape()));
  }
  const bool batched = logits.dim() == 2;
  const std::int64_t rows = batched ? logits.size(0) : 1;
  const std::int64_t k = logits.size(-1);
  if (static_cast<std::int64_t>(labels.size()) != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  for (auto label : labels) {
    if (label < 0 || label >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * k));
  auto label_copy = std::make_shared<std::vector<std::int64_t>>(labels.begin(), labels.end());
  Tensor out = dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = logits.data<T>();
    std::vector<T> losses(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = src.data() + r * k;
      double* p = probs->data() + r * k;
      softmax_row(row, k, p);
      // log-sum-exp with the running max subtracted.
      const double peak = static_cast<double>(*std::max_element(row, row + k));
      double total = 0.0;
      for (std::int64_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j]) - peak);
      const double loss = std::log(total) + peak - static_cast<double>(row[labels[static_cast<std::size_t>(r)]]);
      losses[static_cast<std::size_t>(r)] = static_cast<T>(std::max(loss, 0.0));
    }
    return Tensor::from_buffer(batched ? Shape{rows} : Shape{}, std::move(losses));
  });
  if (detail::should_record({&logits})) {
    detail::record("softmax_cross_entropy", {logits}, out, [logits, out, probs, label_copy, rows, k]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = out.grad<T>();
        auto gl = logits.ensure_grad<T>();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double gr = g[static_cast<std::size_t>(r)];
          for (std::int64_t j = 0; j < k; ++j) {
            const double onehot = j == (*label_copy)[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
            gl[static_cast<std::size_t>(r * k + j)] +=
                static_cast<T>(gr * ((*probs)[static_cast<std::size_t>(r * k + j)] - onehot));
          }
        }
      });
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::int64_t label) {
  return softmax_cross_entropy(logits, std::span<const std::int64_t>(&label, 1));
}

}  // namespace egolstm
