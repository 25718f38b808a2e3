#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "dstcgcn/gradcheck.hpp"
#include "dstcgcn/model.hpp"
#include "dstcgcn/ops.hpp"
#include "test_util.hpp"

using namespace dstcgcn;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.nodes = 4;
  c.input_len = 6;
  c.horizon = 3;
  c.embed_dim = 3;
  c.selector_hidden = 4;
  c.selector_modes = 2;
  c.layers = 1;
  c.hidden = 5;
  c.tau = 2;
  return c;
}

void zero_all(const ModelParams& p) {
  for (const ParamEntry& e : p.registry()) {
    Tensor t = e.tensor;
    t.mutable_data().setZero();
  }
}

StepGraphs graphs_for(const ModelParams& p, const Tensor& x, Index t) {
  const SelectionResult sel = run_selection(p, x);
  StepGraphs g;
  g.embedding = embed_time_step(p.embeddings, t);
  g.spatial = spatial_graph(g.embedding);
  std::vector<Index> idx;
  for (Index b = 0; b < x.dim(0); ++b) {
    for (Index k = 0; k < p.config.tau; ++k) {
      idx.push_back(sel.indices[static_cast<std::size_t>((b * p.config.input_len + t) * p.config.tau + k)]);
    }
  }
  g.diagonals = temporal_connection_diagonals(g.spatial, take(sel.weights, 1, t), idx);
  return g;
}

std::vector<Tensor> leaves(const ModelParams& p) {
  std::vector<Tensor> out;
  for (const ParamEntry& e : p.registry()) out.push_back(e.tensor);
  return out;
}

}  // namespace

TEST_CASE("gate_combine examples") {
  const Tensor h = Tensor::full({2, 3}, 2.0), c = Tensor::full({2, 3}, 4.0);
  CHECK(gate_combine(Tensor::full({2, 3}, 1.0), c, h).data() == h.data());
  CHECK(gate_combine(Tensor::zeros({2, 3}), c, h).data() == c.data());
  CHECK(gate_combine(Tensor::full({2, 3}, 0.5), c, h).data() == Vector::Constant(6, 3.0));
}

TEST_CASE("gate_preactivation examples") {
  std::mt19937_64 rng(1);
  const ModelParams p = make_model(small_config(), 3);
  const Tensor x = random_tensor(rng, {2, 6, 4, 1});
  const Tensor h = random_tensor(rng, {2, 4, 5});
  const StepGraphs g = graphs_for(p, x, 2);
  const Tensor x_sel = take(gather_selected(x, run_selection(p, x).indices, 2), 1, 2);
  const Tensor out = gate_preactivation(p.z, take(x, 1, 2), x_sel, h, g, p.config.ablation);
  CHECK(out.shape() == Shape{2, 4, 5});

  // Zero the kernel rows that read the recurrent features.
  for (const DecompKernels* k : {&p.z.spatial[0], &p.z.cross[0]}) {
    Tensor w = k->weights;
    for (Index e = 0; e < 3; ++e) {
      for (Index i = 1; i < 6; ++i) {
        for (Index o = 0; o < 5; ++o) w.mutable_data()[(e * 6 + i) * 5 + o] = 0.0;
      }
    }
  }
  const Tensor a = gate_preactivation(p.z, take(x, 1, 2), x_sel, h, g, p.config.ablation);
  const Tensor b = gate_preactivation(p.z, take(x, 1, 2), x_sel, Tensor::zeros({2, 4, 5}), g,
                                      p.config.ablation);
  CHECK(max_abs_diff(a.data(), b.data()) <= 1e-14);

  zero_all(p);
  CHECK(gate_preactivation(p.z, take(x, 1, 2), x_sel, h, g, p.config.ablation).data() ==
        Vector::Zero(40));
}

TEST_CASE("gru_step examples") {
  std::mt19937_64 rng(2);
  const ModelParams p = make_model(small_config(), 4);
  const Tensor x = random_tensor(rng, {2, 6, 4, 1});
  const Tensor x_sel = gather_selected(x, run_selection(p, x).indices, 2);
  const Tensor h = random_tensor(rng, {2, 4, 5}, -3, 3);
  for (Index t = 0; t < 6; ++t) {
    const Tensor next = gru_step(p, take(x, 1, t), take(x_sel, 1, t), h, graphs_for(p, x, t));
    for (Index i = 0; i < next.size(); ++i) {
      CHECK(std::abs(next.data()[i]) <= std::max(std::abs(h.data()[i]), 1.0));
    }
  }
  const Tensor probe_x = take(x, 1, 1), probe_sel = take(x_sel, 1, 1);
  zero_all(p);
  const Tensor half = gru_step(p, probe_x, probe_sel, h, graphs_for(p, x, 1));
  CHECK(max_abs_diff(half.data(), 0.5 * h.data()) <= 1e-15);
}

TEST_CASE("gru_step gradient on a 4-node instance") {
  std::mt19937_64 rng(3);
  ModelConfig c = small_config();
  const ModelParams p = make_model(c, 5);
  const Tensor x = random_tensor(rng, {1, 6, 4, 1});
  const Tensor h = random_tensor(rng, {1, 4, 5});
  auto params = leaves(p);
  const double err = finite_diff_check(
      [&] {
        const Tensor x_sel = gather_selected(x, run_selection(p, x).indices, 2);
        const Tensor next = gru_step(p, take(x, 1, 3), take(x_sel, 1, 3), h, graphs_for(p, x, 3));
        return sum(next * next);
      },
      params);
  CHECK(err <= 1e-5);
}

TEST_CASE("forward examples") {
  std::mt19937_64 rng(4);
  const ModelParams p = make_model(small_config(), 6);
  const Tensor x = random_tensor(rng, {3, 6, 4, 1});
  const Tensor y = forward(p, x);
  CHECK(y.shape() == Shape{3, 3, 4, 1});
  CHECK(forward(p, x).data() == y.data());

  const Tensor one = random_tensor(rng, {1, 6, 4, 1});
  const Tensor twins = reshape(repeat_axis(reshape(one, {6, 4, 1}), 0, 2), {2, 6, 4, 1});
  const Tensor yy = forward(p, twins);
  CHECK(yy.data().head(12) == yy.data().tail(12));

  CHECK_THROWS_AS(forward(p, random_tensor(rng, {1, 5, 4, 1})), DimensionError);

  Tensor w = p.readout_weight;
  w.mutable_data().setZero();
  CHECK(forward(p, x).data() == Vector::Zero(36));
}

TEST_CASE("end-to-end gradient of the loss") {
  std::mt19937_64 rng(5);
  const ModelParams p = make_model(small_config(), 7);
  const Tensor x = random_tensor(rng, {2, 6, 4, 1});
  const Tensor truth = random_tensor(rng, {2, 3, 4, 1}, -2, 2);
  auto params = leaves(p);
  const double err = finite_diff_check([&] { return l1_loss(forward(p, x), truth); }, params);
  MESSAGE("max relative error: ", err);
  CHECK(err <= 1e-4);
}

TEST_CASE("l1_loss examples") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(l1_loss(a, a).item() == 0.0);
  CHECK(l1_loss(a, Tensor::matrix({{1, 2}, {3, 5}})).item() == 0.25);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    CHECK(l1_loss(random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})).item() >= 0.0);
  }
  CHECK_THROWS_AS(l1_loss(a, Tensor::zeros({4})), ContractError);
}

TEST_CASE("metrics examples") {
  const std::vector<double> t1{1, 2, 3}, p1{2, 3, 4};
  const Metrics m1 = compute_metrics(p1, t1);
  CHECK(m1.mae == 1.0);
  CHECK(m1.rmse == 1.0);
  const std::vector<double> t2{1, 2, 4}, p2{1.1, 1.8, 4.4};
  CHECK(*compute_metrics(p2, t2).mape == doctest::Approx(10.0).epsilon(1e-12));
  const Metrics perfect = compute_metrics(t2, t2);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.rmse == 0.0);
  CHECK(*perfect.mape == 0.0);

  const std::vector<double> zeros{0, 0}, some{1, 2};
  const Metrics masked = compute_metrics(some, zeros);
  CHECK_FALSE(masked.mape.has_value());
  CHECK(format_mape(masked.mape) == "undefined");

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(20), b(20);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    const Metrics m = compute_metrics(a, b);
    CHECK(m.rmse >= m.mae);
  }
}

TEST_CASE("parameter registry") {
  ModelConfig c = small_config();
  const ModelParams p = make_model(c, 8);
  const auto reg = p.registry();
  std::set<std::string> names;
  std::set<const double*> storage;
  for (const ParamEntry& e : reg) {
    CHECK(names.insert(e.name).second);
    CHECK(storage.insert(e.tensor.data().data()).second);
    CHECK(e.tensor.requires_grad());
    CHECK(e.tensor.is_leaf());
  }
  CHECK(p.parameter_count() == expected_parameter_count(c));

  // Kernel values per (gate, branch, layer) follow d_e*d_i*d_o + d_e*d_o.
  Index kernels = 0;
  for (const ParamEntry& e : reg) {
    if (e.name.rfind("gate.", 0) == 0 && e.name.find("fusion") == std::string::npos) {
      kernels += e.tensor.size();
    }
  }
  CHECK(kernels == 3 * 2 * kernel_param_count(3, 1 + 5, 5));
}

TEST_CASE("kernel parameters do not grow with node count") {
  for (const Preset& preset : presets()) {
    for (bool cross : {true, false}) {
      Index previous = -1;
      for (Index nodes : {5, 50, 307}) {
        ModelConfig c;
        c.nodes = nodes;
        apply_preset(c, preset);
        c.ablation.cross_graph = cross;
        const ModelParams p = make_model(c, 1);
        CHECK(p.parameter_count() == expected_parameter_count(c));
        const Index non_embedding = p.parameter_count() - c.embed_dim * nodes;
        if (previous >= 0) CHECK(non_embedding == previous);
        previous = non_embedding;
      }
    }
  }
}

TEST_CASE("presets") {
  const Preset& p4 = find_preset("pems04");
  CHECK(p4.embed_dim == 10);
  CHECK(p4.selector_hidden == 16);
  CHECK(p4.layers == 2);
  CHECK(p4.hidden == 64);
  CHECK(p4.tau == 3);
  CHECK(find_preset("metr-la").tau == 2);
  CHECK(find_preset("pems08").selector_hidden == 8);
  CHECK_THROWS_AS(find_preset("pems05"), ConfigError);
}

TEST_CASE("ablation variants run end to end") {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor(rng, {2, 6, 4, 1});
  const Tensor truth = random_tensor(rng, {2, 3, 4, 1});
  auto run = [&](ModelConfig c) {
    const ModelParams p = make_model(c, 10);
    ForwardTrace trace;
    const Tensor loss = l1_loss(forward(p, x, &trace), truth);
    backward(loss);
    for (const ParamEntry& e : p.registry()) {
      CAPTURE(e.name);
      CHECK(e.tensor.grad().size() == e.tensor.size());
      CHECK(e.tensor.grad().allFinite());
    }
    return trace;
  };
  ModelConfig c = small_config();
  CHECK(run(c).selection.scores.defined());

  ModelConfig latest = c;
  latest.ablation.selection = SelectionMode::latest;
  const ForwardTrace tl = run(latest);
  CHECK_FALSE(tl.selection.scores.defined());
  for (std::size_t i = 0; i < tl.selection.indices.size(); ++i) {
    CHECK(tl.selection.indices[i] == 4 + static_cast<Index>(i % 2));
  }

  ModelConfig random = c;
  random.ablation.selection = SelectionMode::random;
  const ForwardTrace tr = run(random);
  CHECK(tr.selection.indices == run(random).selection.indices);
  CHECK(tr.selection.weights.data() == Vector::Constant(24, 0.5));

  ModelConfig no_tn = c;
  no_tn.ablation.temporal_norm = false;
  CHECK(make_model(no_tn, 1).selector.in_channels() == 1);
  run(no_tn);

  ModelConfig static_graph = c;
  static_graph.ablation.dynamic_spatial = false;
  const ForwardTrace ts = run(static_graph);
  for (const Tensor& a : ts.spatial_graphs) CHECK(a.data() == ts.spatial_graphs[0].data());

  ModelConfig no_dtcg = c;
  no_dtcg.ablation.dynamic_temporal = false;
  run(no_dtcg);

  ModelConfig spatial_only = c;
  spatial_only.ablation.cross_graph = false;
  const ModelParams sp = make_model(spatial_only, 1);
  CHECK(sp.z.cross.empty());
  CHECK(sp.parameter_count() == expected_parameter_count(spatial_only));
  run(spatial_only);
}

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  c.tau = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.selector_modes = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.hidden = 0;
  CHECK_THROWS_AS(make_model(c, 1), ConfigError);
}
