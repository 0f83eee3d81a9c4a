#include "diffcast/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "diffcast/gradcheck.hpp"
#include "diffcast/pipeline.hpp"

namespace diffcast {

namespace {

// Entries to probe together with their analytic gradients.
struct Probe {
  std::vector<double*> values;
  std::vector<double> analytic;

  void add(Tensor& value, const Tensor& grad) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      values.push_back(value.data() + i);
      analytic.push_back(grad[i]);
    }
  }
  void add(const std::vector<Param*>& params, bool skip_bn_fed_bias) {
    for (Param* p : params) {
      if (skip_bn_fed_bias && p->name.ends_with(".conv.bias")) continue;
      add(p->value, p->grad);
    }
  }
};

class Suite {
 public:
  Suite(std::uint64_t seed, std::size_t probes, double tolerance)
      : rng_(child_rng(seed, 11)), probes_(probes), tolerance_(tolerance), seed_(seed) {}

  void check(const std::string& name, const std::function<double()>& loss, const Probe& probe) {
    const GradCheckReport r = finite_diff_check(loss, std::span<double* const>(probe.values),
                                                probe.analytic, probes_, rng_);
    results_.push_back({name, r.probes, r.max_relative_error,
                        r.probes >= std::min(probes_, probe.values.size()) &&
                            r.max_relative_error < tolerance_});
  }

  Tensor normal(Shape shape) { return Tensor::normal(std::move(shape), rng_); }
  Rng& rng() { return rng_; }
  std::uint64_t dropout_seed() const { return mix_seed(seed_, 99); }
  std::vector<GradGroupResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  std::size_t probes_;
  double tolerance_;
  std::uint64_t seed_;
  std::vector<GradGroupResult> results_;
};

double weighted_sum(const Tensor& out, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

void check_kernels(Suite& suite) {
  {
    Tensor x = suite.normal({2, 3, 7});
    Tensor k = suite.normal({4, 3, 3});
    Tensor b = suite.normal({4});
    const Tensor r = suite.normal({2, 4, 7});
    const Conv1dGrads g = conv1d_backward(x, k, r);
    Probe probe;
    probe.add(x, g.input);
    probe.add(k, g.kernel);
    probe.add(b, g.bias);
    suite.check("conv1d", [&] { return weighted_sum(conv1d_forward(x, k, b), r); }, probe);
  }
  {
    Tensor x = suite.normal({3, 5});
    Tensor w = suite.normal({4, 5});
    Tensor b = suite.normal({4});
    const Tensor r = suite.normal({3, 4});
    const DenseGrads g = dense_backward(x, w, r);
    Probe probe;
    probe.add(x, g.input);
    probe.add(w, g.weight);
    probe.add(b, g.bias);
    suite.check("dense", [&] { return weighted_sum(dense_forward(x, w, b), r); }, probe);
  }
  {
    // Keep inputs away from the kink at zero.
    Tensor x = suite.normal({2, 3, 5});
    for (auto& v : x.values()) v = v < 0.0 ? v - 0.1 : v + 0.1;
    const Tensor r = suite.normal({2, 3, 5});
    Probe probe;
    const Tensor g = leaky_relu_backward(x, r, 0.1);
    probe.add(x, g);
    suite.check("leaky_relu", [&] { return weighted_sum(leaky_relu(x, 0.1), r); }, probe);
  }
  {
    Tensor x = suite.normal({2, 3, 5});
    const Tensor r = suite.normal({2, 3, 5});
    Probe probe;
    const Tensor g = silu_backward(x, r);
    probe.add(x, g);
    suite.check("silu", [&] { return weighted_sum(silu(x), r); }, probe);
  }
  {
    Tensor x = suite.normal({2, 3, 5});
    const Tensor r = suite.normal({2, 3, 5});
    const std::uint64_t seed = suite.dropout_seed();
    Tensor mask;
    Rng first(seed);
    dropout(x, 0.3, Mode::Train, first, &mask);
    Probe probe;
    probe.add(x, hadamard(mask, r));
    suite.check("dropout", [&] {
      Rng again(seed);
      return weighted_sum(dropout(x, 0.3, Mode::Train, again), r);
    }, probe);
  }
}

void check_layers(Suite& suite) {
  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    const std::string tag = mode == Mode::Train ? ".train" : ".eval";
    BatchNorm1d bn("bn", 3);
    bn.gain.value = suite.normal({3});
    bn.bias.value = suite.normal({3});
    bn.running_mean = suite.normal({3});
    for (std::size_t c = 0; c < 3; ++c) bn.running_var[c] = 0.5 + c;
    Tensor x = suite.normal({2, 3, 5});
    const Tensor r = suite.normal({2, 3, 5});
    BatchNormCache cache;
    bn.forward(x, mode, &cache);
    std::vector<Param*> params;
    bn.collect(params);
    zero_grad(params);
    Tensor gx = bn.backward(cache, r);
    Probe probe;
    probe.add(x, gx);
    probe.add(params, false);
    suite.check("batchnorm" + tag, [&] { return weighted_sum(bn.forward(x, mode), r); }, probe);
  }

  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    const std::string tag = mode == Mode::Train ? ".train" : ".eval";
    ConvBlock block("block", 3, 4, suite.rng(), 0.1, 0.2);
    Tensor x = suite.normal({2, 3, 6});
    const Tensor r = suite.normal({2, 4, 6});
    const std::uint64_t seed = suite.dropout_seed();
    auto loss = [&] {
      Rng d(seed);
      return weighted_sum(block.forward(x, mode, d), r);
    };
    std::vector<Param*> params;
    block.collect(params);
    zero_grad(params);
    ConvBlock::Cache cache;
    Rng d(seed);
    block.forward(x, mode, d, &cache);
    Tensor gx = block.backward(cache, r);
    Probe probe;
    probe.add(x, gx);
    probe.add(params, mode == Mode::Train);
    suite.check("conv_block" + tag, loss, probe);
  }

  {
    StepEmbedding embed(8, 6, suite.rng());
    const std::vector<std::size_t> steps{1, 7, 40};
    const Tensor r = suite.normal({3, 8});
    std::vector<Param*> params;
    embed.collect(params);
    zero_grad(params);
    StepEmbedding::Cache cache;
    embed.forward(steps, &cache);
    embed.backward(cache, r);
    Probe probe;
    probe.add(params, false);
    suite.check("step_embedding", [&] { return weighted_sum(embed.forward(steps), r); }, probe);
  }

  {
    ArModel ar(2, 5, 3);
    ar.weight.value = suite.normal({5, 2, 3});
    ar.bias.value = suite.normal({2, 3});
    const Tensor x = suite.normal({3, 2, 5});
    const Tensor r = suite.normal({3, 2, 3});
    std::vector<Param*> params;
    ar.collect(params);
    zero_grad(params);
    ar.backward(x, r);
    Probe probe;
    probe.add(params, false);
    suite.check("ar_model", [&] { return weighted_sum(ar.forward(x), r); }, probe);
  }

  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    const std::string tag = mode == Mode::Train ? ".train" : ".eval";
    CondNet net(CondNetConfig{2, 10, 4, 6, 2, 0.1, 0.1}, suite.rng());
    Tensor x = suite.normal({3, 2, 10});
    const Tensor r = suite.normal({3, 2, 4});
    const std::uint64_t seed = suite.dropout_seed();
    std::vector<Param*> params;
    net.collect(params);
    zero_grad(params);
    CondNet::Cache cache;
    Rng d(seed);
    net.forward(x, mode, d, &cache);
    Tensor gx = net.backward(cache, r);
    Probe probe;
    probe.add(x, gx);
    probe.add(params, mode == Mode::Train);
    suite.check("cond_net" + tag, [&] {
      Rng again(seed);
      return weighted_sum(net.forward(x, mode, again), r);
    }, probe);
  }

  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    const std::string tag = mode == Mode::Train ? ".train" : ".eval";
    DenoiserConfig cfg;
    cfg.variables = 2;
    cfg.cond_channels = 4;
    cfg.width = 8;
    cfg.embed_hidden = 6;
    Denoiser net(cfg, suite.rng());
    const Tensor xk = suite.normal({3, 2, 5});
    Tensor c = suite.normal({3, 4, 5});
    const std::vector<std::size_t> steps{3, 9, 50};
    const Tensor r = suite.normal({3, 2, 5});
    const std::uint64_t seed = suite.dropout_seed();
    std::vector<Param*> params;
    net.collect(params);
    zero_grad(params);
    Denoiser::Cache cache;
    Rng d(seed);
    net.forward(xk, steps, c, mode, d, &cache);
    Tensor gc = net.backward(cache, r);
    Probe probe;
    probe.add(c, gc);
    probe.add(params, mode == Mode::Train);
    suite.check("denoiser" + tag, [&] {
      Rng again(seed);
      return weighted_sum(net.forward(xk, steps, c, mode, again), r);
    }, probe);
  }
}

void check_losses(Suite& suite) {
  for (const Head head : {Head::Data, Head::Noise}) {
    for (const Mode mode : {Mode::Train, Mode::Eval}) {
      ModelConfig cfg;
      cfg.variables = 2;
      cfg.lookback = 10;
      cfg.horizon = 5;
      cfg.diffusion_steps = 20;
      cfg.width = 8;
      cfg.embed_hidden = 6;
      cfg.head = head;
      TimeDiffModel model(cfg, suite.rng()());
      model.ar.weight.value = suite.normal(model.ar.weight.value.shape()) * 0.1;
      model.ar.bias.value = suite.normal(model.ar.bias.value.shape()) * 0.1;

      std::vector<SeriesWindow> windows;
      for (std::size_t i = 0; i < 3; ++i) {
        windows.push_back({suite.normal({2, 10}), suite.normal({2, 5}), i});
      }
      const TrainingDraw draw = draw_training_batch(model, windows, suite.rng());
      const std::uint64_t seed = suite.dropout_seed();

      std::vector<Param*> params = model.trainable();
      zero_grad(params);
      Rng d(seed);
      training_loss(model, draw, mode, d, true);
      Probe probe;
      probe.add(params, mode == Mode::Train);
      const std::string name = std::string("loss.") + to_string(head) +
                               (mode == Mode::Train ? ".train" : ".eval");
      suite.check(name, [&] {
        Rng again(seed);
        return training_loss(model, draw, mode, again, false);
      }, probe);
    }
  }
}

}  // namespace

std::vector<GradGroupResult> run_gradient_suite(std::uint64_t seed, std::size_t probes, double tolerance) {
  Suite suite(seed, probes, tolerance);
  check_kernels(suite);
  check_layers(suite);
  check_losses(suite);
  return suite.take();
}

}  // namespace diffcast
