#include "egolstm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "egolstm/convlstm.hpp"
#include "egolstm/model.hpp"
#include "egolstm/ops.hpp"
#include "egolstm/tape.hpp"

namespace egolstm {

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradcheckOutcome check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  for (const auto& x : inputs) {
    if (x.dtype() != DType::kFloat64) throw std::invalid_argument("check_gradients: inputs must be f64");
    if (!x.requires_grad()) throw std::invalid_argument("check_gradients: inputs must require grad");
  }
  std::vector<std::vector<double>> analytic;
  {
    for (const auto& x : inputs) {
      Tensor t = x;
      t.clear_grad();
    }
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = f(inputs);
    tape.backward(loss);
    for (const auto& x : inputs) {
      analytic.push_back(x.has_grad() ? std::vector<double>(x.grad<double>().begin(), x.grad<double>().end())
                                      : std::vector<double>(static_cast<std::size_t>(x.numel()), 0.0));
    }
  }

  GradcheckOutcome out;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data<double>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f(inputs).item();
      values[i] = saved - h;
      const double down = f(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k][i];
      out.max_abs_error = std::max(out.max_abs_error, std::abs(a - numeric));
      out.max_rel_error = std::max(out.max_rel_error, gradcheck_relative_error(a, numeric));
      ++out.checked;
    }
  }
  for (const auto& x : inputs) {
    Tensor t = x;
    t.clear_grad();
  }
  return out;
}

namespace {

constexpr double kSmooth = 1e-6;
constexpr double kGeneral = 1e-4;

std::int64_t pick(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

Tensor uniform(Rng& rng, const Shape& shape, double lo, double hi, bool grad = true) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  Tensor t = Tensor::from_values(shape, v);
  t.set_requires_grad(grad);
  return t;
}

// Values bounded away from zero, for kinked ops.
Tensor away_from_zero(Rng& rng, const Shape& shape) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 2.0);
  Tensor t = Tensor::from_values(shape, v);
  t.set_requires_grad(true);
  return t;
}

// A shuffled grid with spacing 0.05, so no two window entries are within h.
Tensor distinct(Rng& rng, const Shape& shape) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.05 * static_cast<double>(i) - 0.025 * static_cast<double>(n);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  Tensor t = Tensor::from_values(shape, v);
  t.set_requires_grad(true);
  return t;
}

Shape small_chw(Rng& rng) { return {pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}; }

// Losses are sum(op(x) * r) with a fixed random r, so every output element
// contributes with its own weight.
template <class Op>
GradcheckProblem unary_problem(Rng& rng, Tensor x, Op op) {
  Shape out;
  {
    NoGradScope no_grad;
    out = op(x.detach()).shape();
  }
  const Tensor r = uniform(rng, out, -1, 1, false);
  return {{x}, [op, r](const std::vector<Tensor>& in) { return sum(hadamard(op(in[0]), r)); }};
}

template <class Op>
GradcheckProblem binary_problem(Rng& rng, Op op) {
  const Shape s = small_chw(rng);
  const Tensor r = uniform(rng, s, -1, 1, false);
  return {{uniform(rng, s, -2, 2), uniform(rng, s, -2, 2)},
          [op, r](const std::vector<Tensor>& in) { return sum(hadamard(op(in[0], in[1]), r)); }};
}

// Extents that divide exactly: in = (out-1)*stride + k - 2*pad.
struct ConvDims {
  std::int64_t k, stride, pad, in;
};

ConvDims conv_dims(Rng& rng) {
  while (true) {
    const std::int64_t k = std::array<std::int64_t, 3>{1, 3, 5}[rng.below(3)];
    const std::int64_t stride = pick(rng, 1, 2);
    const std::int64_t pad = pick(rng, 0, k / 2);
    const std::int64_t out = pick(rng, 1, 3);
    const std::int64_t in = (out - 1) * stride + k - 2 * pad;
    if (in >= 1) return {k, stride, pad, in};
  }
}

GradcheckProblem conv2d_problem(Rng& rng) {
  const auto hd = conv_dims(rng);
  // Same kernel/stride/pad on both axes; the second axis picks its own extent.
  std::int64_t w_in = hd.in;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const std::int64_t out = pick(rng, 1, 3);
    const std::int64_t cand = (out - 1) * hd.stride + hd.k - 2 * hd.pad;
    if (cand >= 1) {
      w_in = cand;
      break;
    }
  }
  const std::int64_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  Shape xs{cin, hd.in, w_in};
  if (rng.bernoulli(0.5)) xs.insert(xs.begin(), pick(rng, 1, 2));
  Tensor x = uniform(rng, xs, -1, 1);
  Tensor w = uniform(rng, {cout, cin, hd.k, hd.k}, -1, 1);
  Tensor b = uniform(rng, {cout}, -1, 1);
  const Conv2dOptions opts{hd.stride, hd.pad, ExtentRule::kExact};
  const Tensor probe = conv2d(x.detach(), w.detach(), b.detach(), opts);
  const Tensor r = uniform(rng, probe.shape(), -1, 1, false);
  return {{x, w, b}, [opts, r](const std::vector<Tensor>& in) { return sum(hadamard(conv2d(in[0], in[1], in[2], opts), r)); }};
}

GradcheckProblem conv3d_problem(Rng& rng) {
  const std::int64_t cin = pick(rng, 1, 2), cout = pick(rng, 1, 3);
  const std::int64_t kd = pick(rng, 1, 2), kh = std::array<std::int64_t, 2>{1, 3}[rng.below(2)];
  const std::int64_t pad = kh == 3 ? pick(rng, 0, 1) : 0;
  const std::int64_t d = kd + pick(rng, 0, 2);
  const std::int64_t h = std::max<std::int64_t>(kh - 2 * pad, 1) + pick(rng, 0, 2);
  const std::int64_t w = std::max<std::int64_t>(kh - 2 * pad, 1) + pick(rng, 0, 2);
  Shape xs{cin, d, h, w};
  if (rng.bernoulli(0.5)) xs.insert(xs.begin(), 2);
  Tensor x = uniform(rng, xs, -1, 1);
  Tensor k = uniform(rng, {cout, cin, kd, kh, kh}, -1, 1);
  Tensor b = uniform(rng, {cout}, -1, 1);
  const Tensor probe = conv3d(x.detach(), k.detach(), b.detach(), pad);
  const Tensor r = uniform(rng, probe.shape(), -1, 1, false);
  return {{x, k, b}, [pad, r](const std::vector<Tensor>& in) { return sum(hadamard(conv3d(in[0], in[1], in[2], pad), r)); }};
}

GradcheckProblem max_pool_problem(Rng& rng) {
  const std::int64_t window = pick(rng, 1, 3), stride = pick(rng, 1, 2);
  Shape xs{pick(rng, 1, 3), window + pick(rng, 0, 3), window + pick(rng, 0, 3)};
  if (rng.bernoulli(0.5)) xs.insert(xs.begin(), 2);
  return unary_problem(rng, distinct(rng, xs), [window, stride](const Tensor& t) { return max_pool2d(t, window, stride); });
}

GradcheckProblem lrn_problem(Rng& rng) {
  LrnOptions o;
  o.size = std::array<std::int64_t, 4>{1, 2, 3, 5}[rng.below(4)];
  o.k = rng.uniform(1, 2);
  o.alpha = rng.uniform(1e-4, 1.0);
  o.beta = rng.uniform(0.5, 1.0);
  Shape xs{pick(rng, 1, 6), pick(rng, 1, 3), pick(rng, 1, 3)};
  if (rng.bernoulli(0.5)) xs.insert(xs.begin(), 2);
  return unary_problem(rng, uniform(rng, xs, -2, 2), [o](const Tensor& t) { return lrn(t, o); });
}

GradcheckProblem convlstm_problem(Rng& rng) {
  const std::int64_t cin = pick(rng, 1, 3), ch = pick(rng, 1, 3);
  const std::int64_t k = rng.bernoulli(0.5) ? 1 : 3;
  const std::int64_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
  std::vector<Tensor> inputs{uniform(rng, {cin, h, w}, -1, 1), uniform(rng, {ch, h, w}, -1, 1),
                             uniform(rng, {ch, h, w}, -1, 1)};
  for (int g = 0; g < 4; ++g) {
    inputs.push_back(uniform(rng, {ch, cin, k, k}, -0.7, 0.7));
    inputs.push_back(uniform(rng, {ch, ch, k, k}, -0.7, 0.7));
    inputs.push_back(uniform(rng, {ch}, -0.5, 0.5));
  }
  const Tensor rh = uniform(rng, {ch, h, w}, -1, 1, false);
  const Tensor rc = uniform(rng, {ch, h, w}, -1, 1, false);
  return {inputs, [cin, ch, k, rh, rc](const std::vector<Tensor>& in) {
            ConvLSTMCell cell;
            cell.in_channels = cin;
            cell.hidden_channels = ch;
            cell.kernel = k;
            GateParams* gates[4] = {&cell.input_gate, &cell.forget_gate, &cell.candidate, &cell.output_gate};
            for (int g = 0; g < 4; ++g) *gates[g] = {in[3 + 3 * g], in[4 + 3 * g], in[5 + 3 * g]};
            const ConvLSTMState next = convlstm_step(cell, in[0], {in[1], in[2]});
            return add(sum(hadamard(next.h, rh)), sum(hadamard(next.c, rc)));
          }};
}

GradcheckProblem interaction_net_problem(Rng& rng) {
  ModelConfig cfg;
  cfg.preset = "tiny";
  cfg.input_size = 8;
  cfg.encoder.stages = {{2, 3, 1, 1, ExtentRule::kExact, true, PoolSpec{2, 2}}};
  cfg.encoder.lrn = {3, 1.0, 0.5, 0.75};
  cfg.fusion_out_channels = 2;
  cfg.convlstm_channels = 2;
  cfg.num_classes = 3;
  cfg.input_mode = rng.bernoulli(0.5) ? InputMode::kRawFrames : InputMode::kFrameDifference;
  auto net = std::make_shared<InteractionNet>(cfg, DType::kFloat64);
  net->initialize(rng);
  VideoClip clip;
  for (int t = 0; t < 4; ++t) clip.frames.push_back(uniform(rng, {3, 8, 8}, -1, 1, false));
  const auto label = static_cast<std::int64_t>(rng.below(3));
  std::vector<Tensor> inputs;
  for (const auto& p : net->named_parameters()) inputs.push_back(p.tensor);
  return {inputs, [net, clip, label](const std::vector<Tensor>&) {
            return softmax_cross_entropy(net->forward_video(clip), label);
          }};
}

std::vector<GradcheckCase> build_cases() {
  std::vector<GradcheckCase> c;
  c.push_back({"sigmoid", kSmooth, [](Rng& r) { return unary_problem(r, uniform(r, small_chw(r), -3, 3), [](const Tensor& t) { return sigmoid(t); }); }});
  c.push_back({"tanh", kSmooth, [](Rng& r) { return unary_problem(r, uniform(r, small_chw(r), -3, 3), [](const Tensor& t) { return egolstm::tanh(t); }); }});
  c.push_back({"relu", kGeneral, [](Rng& r) { return unary_problem(r, away_from_zero(r, small_chw(r)), [](const Tensor& t) { return relu(t); }); }});
  c.push_back({"scale", kSmooth, [](Rng& r) {
                 const double f = r.uniform(-2, 2);
                 return unary_problem(r, uniform(r, small_chw(r), -2, 2), [f](const Tensor& t) { return scale(t, f); });
               }});
  c.push_back({"add", kSmooth, [](Rng& r) { return binary_problem(r, [](const Tensor& a, const Tensor& b) { return add(a, b); }); }});
  c.push_back({"sub", kSmooth, [](Rng& r) { return binary_problem(r, [](const Tensor& a, const Tensor& b) { return sub(a, b); }); }});
  c.push_back({"hadamard", kSmooth, [](Rng& r) { return binary_problem(r, [](const Tensor& a, const Tensor& b) { return hadamard(a, b); }); }});
  c.push_back({"add_channel_bias", kSmooth, [](Rng& r) {
                 Shape s = small_chw(r);
                 if (r.bernoulli(0.5)) s.insert(s.begin(), 2);
                 const Tensor rr = uniform(r, s, -1, 1, false);
                 return GradcheckProblem{{uniform(r, s, -1, 1), uniform(r, {s[s.size() - 3]}, -1, 1)},
                                         [rr](const std::vector<Tensor>& in) { return sum(hadamard(add_channel_bias(in[0], in[1]), rr)); }};
               }});
  c.push_back({"concat", kSmooth, [](Rng& r) {
                 Shape a = small_chw(r), b = a;
                 const auto axis = static_cast<std::int64_t>(r.below(3));
                 b[static_cast<std::size_t>(axis)] = pick(r, 1, 3);
                 Shape o = a;
                 o[static_cast<std::size_t>(axis)] += b[static_cast<std::size_t>(axis)];
                 const Tensor rr = uniform(r, o, -1, 1, false);
                 return GradcheckProblem{{uniform(r, a, -1, 1), uniform(r, b, -1, 1)},
                                         [axis, rr](const std::vector<Tensor>& in) { return sum(hadamard(concat({in[0], in[1]}, axis), rr)); }};
               }});
  c.push_back({"stack", kSmooth, [](Rng& r) {
                 const Shape s = small_chw(r);
                 const auto axis = static_cast<std::int64_t>(r.below(4));
                 Shape o = s;
                 o.insert(o.begin() + axis, 2);
                 const Tensor rr = uniform(r, o, -1, 1, false);
                 return GradcheckProblem{{uniform(r, s, -1, 1), uniform(r, s, -1, 1)},
                                         [axis, rr](const std::vector<Tensor>& in) { return sum(hadamard(stack({in[0], in[1]}, axis), rr)); }};
               }});
  c.push_back({"slice", kSmooth, [](Rng& r) {
                 const Shape s{pick(r, 2, 4), pick(r, 2, 4), pick(r, 2, 4)};
                 const auto axis = static_cast<std::int64_t>(r.below(3));
                 const std::int64_t len = pick(r, 1, s[static_cast<std::size_t>(axis)] - 1);
                 const std::int64_t start = pick(r, 0, s[static_cast<std::size_t>(axis)] - len);
                 return unary_problem(r, uniform(r, s, -1, 1), [axis, start, len](const Tensor& t) { return slice(t, axis, start, len); });
               }});
  c.push_back({"select", kSmooth, [](Rng& r) {
                 const Shape s{pick(r, 2, 4), pick(r, 2, 4), pick(r, 2, 4)};
                 const auto axis = static_cast<std::int64_t>(r.below(3));
                 const std::int64_t idx = pick(r, 0, s[static_cast<std::size_t>(axis)] - 1);
                 return unary_problem(r, uniform(r, s, -1, 1), [axis, idx](const Tensor& t) { return select(t, axis, idx); });
               }});
  c.push_back({"reshape", kSmooth, [](Rng& r) {
                 const Shape s = small_chw(r);
                 const Shape flat{s[0] * s[1] * s[2]};
                 return unary_problem(r, uniform(r, s, -1, 1), [flat](const Tensor& t) { return reshape(t, flat); });
               }});
  c.push_back({"permute", kSmooth, [](Rng& r) {
                 std::vector<std::int64_t> order{0, 1, 2, 3};
                 for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
                 const Shape s{pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)};
                 return unary_problem(r, uniform(r, s, -1, 1), [order](const Tensor& t) { return permute(t, order); });
               }});
  c.push_back({"sum", kSmooth, [](Rng& r) {
                 const Tensor x = uniform(r, small_chw(r), -1, 1);
                 return GradcheckProblem{{x}, [](const std::vector<Tensor>& in) { return sum(hadamard(in[0], in[0])); }};
               }});
  c.push_back({"mean", kSmooth, [](Rng& r) {
                 const Tensor x = uniform(r, small_chw(r), -1, 1);
                 return GradcheckProblem{{x}, [](const std::vector<Tensor>& in) { return mean(hadamard(in[0], in[0])); }};
               }});
  c.push_back({"global_avg_pool", kSmooth, [](Rng& r) {
                 Shape s = small_chw(r);
                 if (r.bernoulli(0.5)) s.insert(s.begin(), 2);
                 return unary_problem(r, uniform(r, s, -1, 1), [](const Tensor& t) { return global_avg_pool(t); });
               }});
  c.push_back({"softmax_cross_entropy", kSmooth, [](Rng& r) {
                 const std::int64_t k = pick(r, 2, 7);
                 if (r.bernoulli(0.5)) {
                   const auto label = static_cast<std::int64_t>(r.below(static_cast<std::uint64_t>(k)));
                   return GradcheckProblem{{uniform(r, {k}, -3, 3)},
                                           [label](const std::vector<Tensor>& in) { return softmax_cross_entropy(in[0], label); }};
                 }
                 const std::int64_t n = pick(r, 1, 4);
                 std::vector<std::int64_t> labels;
                 for (std::int64_t i = 0; i < n; ++i) labels.push_back(static_cast<std::int64_t>(r.below(static_cast<std::uint64_t>(k))));
                 return GradcheckProblem{{uniform(r, {n, k}, -3, 3)}, [labels](const std::vector<Tensor>& in) {
                                           return mean(softmax_cross_entropy(in[0], labels));
                                         }};
               }});
  c.push_back({"conv2d", kGeneral, conv2d_problem});
  c.push_back({"conv3d", kGeneral, conv3d_problem});
  c.push_back({"max_pool2d", kGeneral, max_pool_problem});
  c.push_back({"lrn", kGeneral, lrn_problem});
  c.push_back({"conv2d_sigmoid_gap", kGeneral, [](Rng& r) {
                 const std::int64_t cin = pick(r, 1, 3), cout = pick(r, 1, 3), h = pick(r, 3, 5), w = pick(r, 3, 5);
                 const Tensor rr = uniform(r, {cout}, -1, 1, false);
                 return GradcheckProblem{{uniform(r, {cin, h, w}, -1, 1), uniform(r, {cout, cin, 3, 3}, -1, 1), uniform(r, {cout}, -1, 1)},
                                         [rr](const std::vector<Tensor>& in) {
                                           const Tensor y = sigmoid(conv2d(in[0], in[1], in[2], {1, 1, ExtentRule::kExact}));
                                           return sum(hadamard(global_avg_pool(y), rr));
                                         }};
               }});
  c.push_back({"convlstm_step", kGeneral, convlstm_problem});
  c.push_back({"interaction_net", kGeneral, interaction_net_problem});
  return c;
}

}  // namespace

const std::vector<GradcheckCase>& gradcheck_cases() {
  static const std::vector<GradcheckCase> cases = build_cases();
  return cases;
}

std::vector<GradcheckRow> run_gradcheck(std::string_view op, std::uint64_t seed, std::int64_t trials) {
  if (trials < 1) throw std::invalid_argument("gradcheck needs at least one trial");
  std::vector<GradcheckRow> rows;
  bool matched = false;
  const auto& cases = gradcheck_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    if (op != "all" && op != c.name) continue;
    matched = true;
    GradcheckRow row{c.name, trials, 0.0, c.tolerance, false};
    const Rng base = Rng(seed).split(i);
    for (std::int64_t t = 0; t < trials; ++t) {
      Rng rng = base.split(static_cast<std::uint64_t>(t));
      const GradcheckProblem p = c.make(rng);
      row.max_rel_error = std::max(row.max_rel_error, check_gradients(p.fn, p.inputs).max_rel_error);
    }
    row.pass = row.max_rel_error <= c.tolerance;
    rows.push_back(row);
  }
  if (!matched) throw std::invalid_argument("unknown gradcheck op `" + std::string(op) + "`");
  return rows;
}

}  // namespace egolstm
