#include <gtest/gtest.h>

#include "egolstm/gradcheck.hpp"
#include "egolstm/ops.hpp"

using namespace egolstm;

namespace {

std::vector<std::string> case_names() {
  std::vector<std::string> names;
  for (const auto& c : gradcheck_cases()) names.push_back(c.name);
  return names;
}

class GradcheckSuite : public ::testing::TestWithParam<std::string> {};

}  // namespace

TEST_P(GradcheckSuite, WithinTolerance) {
  const auto rows = run_gradcheck(GetParam(), 0, 20);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].pass) << rows[0].op << " max rel error " << rows[0].max_rel_error;
  EXPECT_EQ(rows[0].trials, 20);
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradcheckSuite, ::testing::ValuesIn(case_names()),
                         [](const auto& info) { return info.param; });

TEST(Gradcheck, SuiteCoversEveryOpAndFullStep) {
  const auto names = case_names();
  for (const char* want : {"sigmoid", "tanh", "relu", "add", "sub", "hadamard", "scale", "add_channel_bias", "concat",
                           "stack", "slice", "select", "reshape", "permute", "sum", "mean", "global_avg_pool",
                           "softmax_cross_entropy", "conv2d", "conv3d", "max_pool2d", "lrn", "conv2d_sigmoid_gap",
                           "convlstm_step", "interaction_net"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  }
}

TEST(Gradcheck, SmoothOpsUseTheTightTolerance) {
  for (const auto& c : gradcheck_cases()) {
    const bool general = c.name == "relu" || c.name == "conv2d" || c.name == "conv3d" || c.name == "max_pool2d" ||
                         c.name == "lrn" || c.name == "conv2d_sigmoid_gap" || c.name == "convlstm_step" ||
                         c.name == "interaction_net";
    EXPECT_EQ(c.tolerance, general ? 1e-4 : 1e-6) << c.name;
  }
}

TEST(Gradcheck, DetectsAWrongGradient) {
  Tensor x = Tensor::from_values({3}, {0.5, -1, 2});
  x.set_requires_grad(true);
  // The detached factor hides half of d(x^2)/dx from the tape.
  const ScalarFn f = [](const std::vector<Tensor>& in) { return sum(hadamard(in[0], in[0].detach())); };
  const auto out = check_gradients(f, {x});
  EXPECT_EQ(out.checked, 3);
  EXPECT_GT(out.max_rel_error, 0.4);
}

TEST(Gradcheck, RejectsSinglePrecisionAndUnknownOps) {
  Tensor x = Tensor::zeros({2}, DType::kFloat32);
  x.set_requires_grad(true);
  EXPECT_THROW(check_gradients([](const std::vector<Tensor>& in) { return sum(in[0]); }, {x}), std::invalid_argument);
  EXPECT_THROW(run_gradcheck("nope", 0, 1), std::invalid_argument);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(gradcheck_relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(gradcheck_relative_error(1e-9, 0.0), 1e-6);
}

TEST(Gradcheck, InputsRestoredAfterCheck) {
  Tensor x = Tensor::from_values({2}, {0.3, 0.4});
  x.set_requires_grad(true);
  (void)check_gradients([](const std::vector<Tensor>& in) { return sum(sigmoid(in[0])); }, {x});
  EXPECT_EQ(x.to_vector(), (std::vector<double>{0.3, 0.4}));
}
