// Acceptance runner: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; otherwise only the listed numbers. Exit status is 0 only
// when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dstcgcn/baselines.hpp"
#include "dstcgcn/commands.hpp"
#include "dstcgcn/gconv.hpp"
#include "dstcgcn/gradcheck.hpp"
#include "dstcgcn/graphs.hpp"
#include "dstcgcn/ops.hpp"
#include "dstcgcn/selector.hpp"
#include "dstcgcn/training.hpp"
#include "test_util.hpp"

using namespace dstcgcn;
using testutil::random_tensor;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Gradients of every differentiable operation and of the full loss chain.

struct OpCase {
  std::string name;
  std::function<Tensor()> loss;
  std::vector<Tensor> leaves;
};

std::vector<OpCase> op_cases(std::mt19937_64& rng) {
  auto leaf = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(rng, std::move(s), lo, hi, true);
  };
  auto fixed = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(rng, std::move(s), lo, hi);
  };
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> leaves,
                      std::function<Tensor(const std::vector<Tensor>&)> f) {
    OpCase c{std::move(name), {}, std::move(leaves)};
    const std::vector<Tensor> captured = c.leaves;
    c.loss = [f, captured] { return f(captured); };
    cases.push_back(std::move(c));
  };

  const Tensor w23 = fixed({2, 3}), w34 = fixed({3, 4}), p23 = fixed({2, 3});
  add_case("add", {leaf({2, 3}), leaf({2, 3})}, [](auto& v) { return sum(tanh(add(v[0], v[1]))); });
  add_case("sub", {leaf({2, 3}), leaf({2, 3})}, [](auto& v) { return sum(tanh(sub(v[0], v[1]))); });
  add_case("mul", {leaf({2, 3}), leaf({2, 3})}, [](auto& v) { return sum(tanh(mul(v[0], v[1]))); });
  add_case("affine", {leaf({2, 3})}, [](auto& v) { return sum(tanh(affine(v[0], -2.5, 0.3))); });
  add_case("sigmoid", {leaf({2, 3})}, [=](auto& v) { return sum(mul(sigmoid(v[0]), p23)); });
  add_case("tanh", {leaf({2, 3})}, [=](auto& v) { return sum(mul(tanh(v[0]), p23)); });
  // Kinks at zero: keep inputs away from them.
  add_case("relu", {leaf({2, 3}, 0.05, 1.0)}, [=](auto& v) { return sum(mul(relu(v[0]), p23)); });
  add_case("abs", {leaf({2, 3}, 0.05, 1.0)}, [=](auto& v) { return sum(mul(abs(v[0]), p23)); });
  add_case("add_broadcast", {leaf({2, 3}), leaf({3})},
           [](auto& v) { return sum(tanh(add_broadcast(v[0], v[1]))); });
  add_case("mean", {leaf({2, 3})}, [](auto& v) { return mean(mul(v[0], v[0])); });
  add_case("mean_axis", {leaf({2, 3, 2})}, [](auto& v) { return sum(tanh(mean_axis(v[0], 1))); });
  add_case("matmul", {leaf({2, 3}), leaf({3, 4})}, [](auto& v) { return sum(tanh(matmul(v[0], v[1]))); });
  add_case("linear", {leaf({2, 2, 3}), leaf({3, 4})}, [](auto& v) { return sum(tanh(linear(v[0], v[1]))); });
  add_case("bmm_shared", {leaf({3, 3}), leaf({2, 3, 2})}, [](auto& v) { return sum(tanh(bmm(v[0], v[1]))); });
  add_case("bmm_batched", {leaf({2, 3, 3}), leaf({2, 3, 2})},
           [](auto& v) { return sum(tanh(bmm(v[0], v[1]))); });
  add_case("node_matmul", {leaf({2, 3, 2}), leaf({3, 2, 4})},
           [](auto& v) { return sum(tanh(node_matmul(v[0], v[1]))); });
  add_case("transpose", {leaf({2, 3})}, [=](auto& v) { return sum(tanh(matmul(transpose(v[0]), w23))); });
  const Tensor p34 = fixed({3, 4});
  add_case("softmax_rows", {leaf({3, 4})}, [=](auto& v) { return sum(mul(softmax_rows(v[0]), p34)); });
  add_case("reshape", {leaf({2, 3})}, [=](auto& v) { return sum(tanh(matmul(reshape(v[0], {3, 2}), w23))); });
  add_case("permute", {leaf({2, 3, 2})}, [](auto& v) {
    const std::size_t order[] = {1, 2, 0};
    return sum(tanh(mul(permute(v[0], order), permute(v[0], order))));
  });
  const Tensor w64 = fixed({6, 4});
  add_case("concat_last", {leaf({2, 3}), leaf({2, 3})},
           [=](auto& v) { return sum(tanh(matmul(concat_last(v[0], v[1]), w64))); });
  add_case("take", {leaf({2, 3, 2})}, [](auto& v) { return sum(tanh(take(v[0], 1, 2))); });
  add_case("repeat_axis", {leaf({2, 3})}, [](auto& v) { return sum(tanh(repeat_axis(v[0], 1, 2))); });
  add_case("diagonal", {leaf({2, 3, 3})}, [](auto& v) { return sum(tanh(diagonal(v[0]))); });
  add_case("diag_embed", {leaf({2, 3})},
           [=](auto& v) { return sum(tanh(matmul(reshape(diag_embed(v[0]), {6, 3}), w34))); });
  const std::vector<Index> cols{2, 0, 1, 1, 2, 0};
  add_case("gather_last", {leaf({2, 3})}, [=](auto& v) { return sum(tanh(gather_last(v[0], cols, 3))); });

  // Selector.
  const Tensor probe_x = fixed({2, 6, 3, 2});
  add_case("temporal_normalize", {leaf({2, 6, 3, 2})},
           [=](auto& v) { return sum(mul(temporal_normalize(v[0]), probe_x)); });
  add_case("enrich", {leaf({2, 6, 3, 1}), leaf({2, 6, 3, 1})},
           [=](auto& v) { return sum(mul(enrich(v[0], v[1]), probe_x)); });
  const Tensor probe_s = fixed({2, 6, 6});
  for (Index d : {4, 6, 8}) {
    add_case("attention_scores d=" + std::to_string(d), {leaf({2, 6, 3, d}), leaf({2, 6, 3, d})},
             [=](auto& v) { return sum(mul(attention_scores(v[0], v[1], d / 2), probe_s)); });
  }
  {
    SelectorParams sp = make_selector_params(2, 4, 2, 2, rng);
    add_case("attention_scores projections", {sp.wq, sp.bq, sp.wk, sp.bk, leaf({2, 6, 3, 2})},
             [=](auto& v) {
               SelectorParams q = sp;
               return sum(mul(attention_scores(v[4], q), probe_s));
             });
  }
  const Tensor probe_w = fixed({2, 6, 2});
  for (WeightMode mode : {WeightMode::softmax, WeightMode::raw}) {
    add_case("select_top_tau " + std::string(to_string(mode)), {leaf({2, 6, 6})},
             [=](auto& v) { return sum(mul(select_top_tau(v[0], 2, mode).weights, probe_w)); });
  }
  {
    const std::vector<Index> sel{0, 1, 0, 2, 1, 2, 0, 1, 1, 2, 0, 2};
    const Tensor probe_g = fixed({2, 3, 2, 4, 1});
    add_case("gather_selected", {leaf({2, 3, 4, 1})},
             [=](auto& v) { return sum(mul(gather_selected(v[0], sel, 2), probe_g)); });
  }

  // Graphs.
  const Tensor probe_nn = fixed({4, 4});
  add_case("spatial_graph", {leaf({4, 3})}, [=](auto& v) { return sum(mul(spatial_graph(v[0]), probe_nn)); });
  {
    const std::vector<Index> sel{1, 4, 0, 2};
    const Tensor probe_d = fixed({2, 2, 4});
    add_case("temporal_connection_diagonals", {leaf({4, 4}), leaf({2, 2}, 0.1, 1.0)}, [=](auto& v) {
      return sum(mul(temporal_connection_diagonals(v[0], v[1], sel), probe_d));
    });
    const Tensor probe_g = fixed({2, 2, 4, 4});
    add_case("temporal_connection_graphs", {leaf({4, 4}), leaf({2, 2}, 0.1, 1.0)}, [=](auto& v) {
      return sum(mul(temporal_connection_graphs(v[0], v[1], sel), probe_g));
    });
  }
  const Tensor probe_c = fixed({2, 8, 8});
  add_case("fuse_cross_graph", {leaf({4, 4}), leaf({2, 2, 4})},
           [=](auto& v) { return sum(mul(fuse_cross_graph(v[0], v[1]), probe_c)); });
  const Tensor probe_h = fixed({2, 2, 4, 3});
  add_case("cross_propagate", {leaf({4, 4}), leaf({2, 2, 4}), leaf({2, 2, 4, 3})},
           [=](auto& v) { return sum(mul(cross_propagate(v[0], v[1], v[2]), probe_h)); });
  add_case("spatial_propagate", {leaf({4, 4}), leaf({2, 2, 4, 3})},
           [=](auto& v) { return sum(mul(spatial_propagate(v[0], v[1]), probe_h)); });

  // Graph convolutions.
  {
    const Index d_e = 3, d_i = 2, d_o = 3;
    const Tensor probe_s4 = fixed({2, 4, d_o});
    const Tensor probe_c4 = fixed({2, 2, 4, d_o});
    add_case("generate_params", {leaf({4, d_e}), leaf({d_e, d_i, d_o}), leaf({d_e, d_o})}, [=](auto& v) {
      const NodeParams p = generate_params(v[0], DecompKernels{v[1], v[2]});
      return add(sum(tanh(p.weights)), sum(tanh(p.bias)));
    });
    for (Activation act : {Activation::identity, Activation::relu}) {
      const std::string tag = act == Activation::relu ? " relu" : " identity";
      add_case("spatial_graph_conv" + tag,
               {leaf({4, 4}), leaf({2, 4, d_i}), leaf({4, d_i, d_o}), leaf({4, d_o})}, [=](auto& v) {
                 return sum(mul(spatial_graph_conv(v[0], v[1], NodeParams{v[2], v[3]}, act), probe_s4));
               });
      add_case("cross_graph_conv dense" + tag,
               {leaf({8, 8}), leaf({2, 2, 4, d_i}), leaf({4, d_i, d_o}), leaf({4, d_o})}, [=](auto& v) {
                 return sum(mul(cross_graph_conv(v[0], v[1], NodeParams{v[2], v[3]}, act), probe_c4));
               });
      add_case("cross_graph_conv factored" + tag,
               {leaf({4, 4}), leaf({2, 2, 4}), leaf({2, 2, 4, d_i}), leaf({4, d_i, d_o}), leaf({4, d_o})},
               [=](auto& v) {
                 return sum(mul(cross_graph_conv(v[0], v[1], v[2], NodeParams{v[3], v[4]}, act), probe_c4));
               });
    }
    add_case("fuse_outputs", {leaf({2, 2, 4, d_o}), leaf({2, 4, d_o}), leaf({2 * d_o, d_o}), leaf({d_o})},
             [=](auto& v) { return sum(mul(fuse_outputs(v[0], v[1], FusionParams{v[2], v[3]}), probe_s4)); });
  }
  add_case("gate_combine", {leaf({2, 4, 3}), leaf({2, 4, 3}), leaf({2, 4, 3})},
           [](auto& v) { return sum(tanh(gate_combine(v[0], v[1], v[2]))); });
  {
    const Tensor truth = fixed({2, 3, 4, 1}, -2, 2);
    add_case("l1_loss", {leaf({2, 3, 4, 1}, -2, 2)}, [=](auto& v) { return l1_loss(v[0], truth); });
  }
  return cases;
}

ModelConfig chain_config() {
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

Outcome criterion_gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  double worst_op = 0;
  std::string worst_name;
  std::vector<OpCase> cases = op_cases(rng);
  for (OpCase& c : cases) {
    const double err = finite_diff_check(c.loss, c.leaves);
    if (err > worst_op) {
      worst_op = err;
      worst_name = c.name;
    }
  }

  double worst_chain = 0;
  for (std::uint64_t seed : {1, 2}) {
    for (Index layers : {1, 2}) {
      ModelConfig c = chain_config();
      c.layers = layers;
      const ModelParams p = make_model(c, seed);
      const Tensor x = random_tensor(rng, {2, 6, 4, 1});
      const Tensor truth = random_tensor(rng, {2, 3, 4, 1}, -2, 2);
      std::vector<Tensor> leaves;
      for (const ParamEntry& e : p.registry()) leaves.push_back(e.tensor);
      worst_chain = std::max(
          worst_chain, finite_diff_check([&] { return l1_loss(forward(p, x), truth); }, leaves));
    }
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst_op <= 1e-5 && worst_chain <= 1e-4 && elapsed < 120;
  o.detail = std::to_string(cases.size()) + " op cases, worst " + fmt("%.2e", worst_op) + " (" + worst_name +
             ") <= 1e-5; full chain worst " + fmt("%.2e", worst_chain) + " <= 1e-4; " + fmt("%.1f", elapsed) +
             " s < 120 s";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Frequency-domain scores against direct circular cross-correlation.

Outcome criterion_fft_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0;
  int instances = 0;
  for (int trial = 0; trial < 25; ++trial) {
    for (Index d : {4, 8, 12, 16}) {
      ++instances;
      const Index steps = 4, nodes = 3;
      const Tensor q = random_tensor(rng, {1, steps, nodes, d});
      const Tensor k = random_tensor(rng, {1, steps, nodes, d});
      const Tensor m = attention_scores(q, k, d / 2 + 1);
      for (Index i = 0; i < steps; ++i) {
        for (Index j = 0; j < steps; ++j) {
          // Mean over nodes and lags of sum_m q[(m + l) mod d] k[m].
          double total = 0;
          for (Index n = 0; n < nodes; ++n) {
            for (Index l = 0; l < d; ++l) {
              for (Index s = 0; s < d; ++s) total += q.at({0, i, n, (s + l) % d}) * k.at({0, j, n, s});
            }
          }
          worst = std::max(worst, std::abs(m.at({0, i, j}) - total / static_cast<double>(nodes * d)));
        }
      }
    }
  }
  return {worst <= 1e-10, std::to_string(instances) + " instances, d_h in {4,8,12,16}, max error " +
                              fmt("%.2e", worst) + " <= 1e-10"};
}

// ---------------------------------------------------------------------------
// 3. Top-tau selection against a full sort.

Outcome criterion_selection_oracle() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> level(0, 3);
  std::uniform_int_distribution<Index> pick_t(2, 12);
  int index_mismatches = 0, tie_matrices = 0;
  double worst_weight = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index steps = pick_t(rng);
    const Index tau = 1 + trial % std::min<Index>(steps, 4);
    const bool ties = trial % 2 == 0;
    tie_matrices += ties;
    Vector v(steps * steps);
    for (auto& x : v) x = ties ? 0.25 * level(rng) : gauss(rng);
    const Tensor scores({steps, steps}, v);
    const WeightMode mode = trial % 3 == 0 ? WeightMode::raw : WeightMode::softmax;
    const Selection sel = select_top_tau(scores, tau, mode);
    for (Index t = 0; t < steps; ++t) {
      std::vector<Index> order(static_cast<std::size_t>(steps));
      std::iota(order.begin(), order.end(), Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[t * steps + a] > v[t * steps + b]; });
      order.resize(static_cast<std::size_t>(tau));
      std::sort(order.begin(), order.end());
      std::vector<double> w(static_cast<std::size_t>(tau));
      double peak = -INFINITY;
      for (Index k = 0; k < tau; ++k) peak = std::max(peak, v[t * steps + order[static_cast<std::size_t>(k)]]);
      double z = 0;
      for (Index k = 0; k < tau; ++k) {
        const double s = v[t * steps + order[static_cast<std::size_t>(k)]];
        w[static_cast<std::size_t>(k)] = mode == WeightMode::raw ? s : std::exp(s - peak);
        z += w[static_cast<std::size_t>(k)];
      }
      for (Index k = 0; k < tau; ++k) {
        if (sel.indices[static_cast<std::size_t>(t * tau + k)] != order[static_cast<std::size_t>(k)]) ++index_mismatches;
        const double expect = mode == WeightMode::raw ? w[static_cast<std::size_t>(k)] : w[static_cast<std::size_t>(k)] / z;
        worst_weight = std::max(worst_weight, std::abs(sel.weights.data()[t * tau + k] - expect));
      }
    }
  }
  return {index_mismatches == 0 && worst_weight <= 1e-12,
          "1000 matrices (" + std::to_string(tie_matrices) + " with tied scores), " +
              std::to_string(index_mismatches) + " index mismatches, weight error " + fmt("%.2e", worst_weight) +
              " <= 1e-12"};
}

// ---------------------------------------------------------------------------
// 4. Cross-graph block structure.

Outcome criterion_cross_graph() {
  std::mt19937_64 rng(404);
  const Index n = 5, steps = 6, tau = 3;
  double lower = 0, offdiag = 0, diag_err = 0, upper_err = 0, row_err = 0, stack_err = 0;
  for (int draw = 0; draw < 50; ++draw) {
    ModelConfig c = chain_config();
    c.nodes = n;
    c.input_len = steps;
    c.tau = tau;
    const ModelParams p = make_model(c, 1000 + static_cast<std::uint64_t>(draw));
    const Tensor x = random_tensor(rng, {1, steps, n, 1}, -2, 2);
    SelectionResult sel;
    {
      NoGradGuard no_grad;
      sel = run_selection(p, x);
    }
    const DecompKernels kernels = make_kernels(c.embed_dim, 2, 3, rng);
    for (Index t = 0; t < steps; ++t) {
      NoGradGuard no_grad;
      const Tensor e = embed_time_step(p.embeddings, t);
      const Tensor a_s = spatial_graph(e);
      const Tensor w = take(take(sel.weights, 0, 0), 0, t);  // [tau]
      const std::span<const Index> picked(sel.indices.data() + t * tau, static_cast<std::size_t>(tau));
      const Tensor diags = temporal_connection_diagonals(a_s, w, picked);
      const Tensor a_t = temporal_connection_graphs(a_s, w, picked);
      const Tensor a_c = fuse_cross_graph(a_s, diags);
      const Index m = tau * n;
      for (Index i = 0; i < n; ++i) {
        double row = 0;
        for (Index j = 0; j < n; ++j) row += a_s.at({i, j});
        row_err = std::max(row_err, std::abs(row - 1.0));
      }
      for (Index bk = 0; bk < tau; ++bk) {
        for (Index bl = 0; bl < tau; ++bl) {
          for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
              const double v = a_c.data()[(bk * n + i) * m + bl * n + j];
              if (bl < bk) {
                lower = std::max(lower, std::abs(v));
              } else if (bl == bk) {
                const double rest = v - a_s.at({i, j});
                if (i != j) offdiag = std::max(offdiag, std::abs(rest));
                else diag_err = std::max(diag_err, std::abs(rest - a_t.at({bk, i, j})));
              } else {
                upper_err = std::max(upper_err, std::abs(v - a_t.at({bl, i, j})));
              }
            }
          }
        }
      }
      // With no temporal blocks the cross convolution is tau independent
      // spatial convolutions.
      const Tensor block_diag = fuse_cross_graph(a_s, Tensor::zeros({tau, n}));
      const Tensor h = random_tensor(rng, {2, tau, n, 2});
      const NodeParams np = generate_params(e, kernels);
      const Tensor cross = cross_graph_conv(block_diag, h, np, Activation::relu);
      for (Index k = 0; k < tau; ++k) {
        const Tensor s = spatial_graph_conv(a_s, take(h, 1, k), np, Activation::relu);
        stack_err = std::max(stack_err, testutil::max_abs_diff(take(cross, 1, k).data(), s.data()));
      }
    }
  }
  const bool pass = lower == 0 && offdiag == 0 && diag_err <= 1e-12 && upper_err == 0 && row_err <= 1e-9 &&
                    stack_err <= 1e-12;
  return {pass, "50 draws x " + std::to_string(steps) + " steps: block-lower max " + fmt("%.1e", lower) +
                    ", diagonal-block off-diagonal residue " + fmt("%.1e", offdiag) + ", diagonal vs A_T " +
                    fmt("%.1e", diag_err) + ", upper blocks vs A_T " + fmt("%.1e", upper_err) +
                    ", A_S row sums " + fmt("%.1e", row_err) + " <= 1e-9, block-diagonal vs stacked " +
                    fmt("%.1e", stack_err) + " <= 1e-12"};
}

// ---------------------------------------------------------------------------
// 5. Kernel parameter counts do not depend on the node count.

Outcome criterion_parameter_economy() {
  bool pass = true;
  std::string detail;
  for (const char* preset : {"tiny", "pems04", "metr-la"}) {
    std::vector<Index> kernel_totals;
    for (Index nodes : {4, 15, 50, 120}) {
      ModelConfig c;
      c.nodes = nodes;
      apply_preset(c, find_preset(preset));
      const ModelParams p = make_model(c, 1);
      Index kernels = 0;
      std::map<std::string, Index> per_kernel;
      for (const ParamEntry& e : p.registry()) {
        if (e.name.find(".spatial.") == std::string::npos && e.name.find(".cross.") == std::string::npos) continue;
        kernels += e.tensor.size();
        per_kernel[e.name.substr(0, e.name.rfind('.'))] += e.tensor.size();
      }
      // d_e d_i d_o + d_e d_o per (gate, branch, layer), with d_i = C + d_hid
      // on the first layer and d_hid above it.
      for (const auto& [name, count] : per_kernel) {
        const Index layer = std::stoi(name.substr(name.rfind(".l") + 2));
        const Index d_i = layer == 0 ? c.in_channels + c.hidden : c.hidden;
        const Index expect = c.embed_dim * d_i * c.hidden + c.embed_dim * c.hidden;
        if (count != expect) {
          pass = false;
          detail += name + " has " + std::to_string(count) + " != " + std::to_string(expect) + "; ";
        }
      }
      if (per_kernel.size() != static_cast<std::size_t>(3 * 2 * c.layers)) pass = false;
      if (p.parameter_count() != expected_parameter_count(c)) pass = false;
      kernel_totals.push_back(kernels);
    }
    const bool flat = std::adjacent_find(kernel_totals.begin(), kernel_totals.end(), std::not_equal_to<>()) ==
                      kernel_totals.end();
    pass = pass && flat;
    detail += std::string(preset) + ": " + std::to_string(kernel_totals.front()) + " kernel values at N=4,15,50,120" +
              (flat ? "" : " (varies)") + "; ";
  }
  return {pass, detail + "every kernel matches d_e*d_i*d_o + d_e*d_o"};
}

// ---------------------------------------------------------------------------
// 6. attention_scores cost grows about linearly in N.

Outcome criterion_complexity() {
  std::mt19937_64 rng(606);
  const Index steps = 12, hidden = 32, batch = 8;
  const SelectorParams sp = make_selector_params(2, hidden, hidden / 2, 3, rng);
  std::vector<double> times;
  for (Index n : {50, 100, 200}) {
    const Tensor x = random_tensor(rng, {batch, steps, n, 2});
    NoGradGuard no_grad;
    attention_scores(x, sp);  // warm-up
    std::vector<double> runs;
    for (int r = 0; r < 9; ++r) {
      const auto start = Clock::now();
      const Tensor s = attention_scores(x, sp);
      runs.push_back(seconds_since(start));
      if (!std::isfinite(s.data()[0])) return {false, "non-finite score"};
    }
    std::nth_element(runs.begin(), runs.begin() + 4, runs.end());
    times.push_back(runs[4]);
  }
  const double r1 = times[1] / times[0], r2 = times[2] / times[1];
  return {r1 <= 2.5 && r2 <= 2.5, "median ms at N=50/100/200: " + fmt("%.3f", 1e3 * times[0]) + " / " +
                                      fmt("%.3f", 1e3 * times[1]) + " / " + fmt("%.3f", 1e3 * times[2]) +
                                      "; growth " + fmt("%.2f", r1) + "x, " + fmt("%.2f", r2) + "x <= 2.5x"};
}

// ---------------------------------------------------------------------------
// Synthetic benchmark shared by 7-9: N=15, 4000 steps, 6:2:2, T=H=12.

constexpr std::uint64_t kBenchmarkSeed = 1;
constexpr Index kBenchmarkEpochs = 15;
constexpr double kBaselineRatio = 0.85;
constexpr Index kAblationEpochs = 5;

struct Benchmark {
  data::RawSeries raw;
  data::SplitSegments split;
  data::NormStats stats;
  data::RawSeries norm;

  explicit Benchmark(std::uint64_t seed) {
    raw = data::synth_generate(15, 4000, seed);
    split = data::chronological_split(raw.steps, data::SplitRatios::parse("6:2:2"), 24);
    stats = data::fit_zscore(raw, split.train);
    norm = data::apply_zscore(raw, stats);
  }
  data::WindowDataset windows(data::Segment s) const { return data::WindowDataset(norm, s, 12, 12); }
};

ModelConfig benchmark_config() {
  ModelConfig c;
  c.nodes = 15;
  apply_preset(c, find_preset("tiny"));
  return c;
}

struct RunResult {
  double model_mae = 0;
  double wall = 0;
  Index epochs = 0;
};

RunResult train_and_score(const Benchmark& b, ModelConfig c, std::uint64_t seed, Index epochs) {
  ModelParams p = make_model(c, seed);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = seed;
  const TrainResult r = train(p, b.windows(b.split.train), b.windows(b.split.val), tc);
  const EvalReport rep = evaluate(p, b.windows(b.split.test), b.stats, 1e-3, 64);
  return {rep.overall.mae, r.wall_seconds, static_cast<Index>(r.log.size())};
}

Outcome criterion_end_to_end() {
  const Benchmark b(kBenchmarkSeed);
  const data::WindowDataset test = b.windows(b.split.test);
  const std::vector<double> truth = targets_denormalized(test, b.stats);
  const double ha = score_predictions(historical_average(b.raw, b.split.train, test), truth, test, 1e-3).overall.mae;
  const double pe = score_predictions(persistence(b.raw, test), truth, test, 1e-3).overall.mae;
  const RunResult r = train_and_score(b, benchmark_config(), kBenchmarkSeed, kBenchmarkEpochs);
  const bool pass = r.model_mae <= kBaselineRatio * ha && r.model_mae <= kBaselineRatio * pe && r.epochs <= 50 &&
                    r.wall <= 600;
  return {pass, "seed " + std::to_string(kBenchmarkSeed) + ", " + std::to_string(r.epochs) + " epochs in " +
                    fmt("%.0f", r.wall) + " s: test MAE " + fmt("%.4f", r.model_mae) + " vs historical average " +
                    fmt("%.4f", ha) + " (" + fmt("%.1f", 100 * (1 - r.model_mae / ha)) + "% better) and persistence " +
                    fmt("%.4f", pe) + " (" + fmt("%.1f", 100 * (1 - r.model_mae / pe)) + "% better); need >= 15%"};
}

Outcome criterion_overfit() {
  const Benchmark b(kBenchmarkSeed);
  // The first 8 training windows.
  const data::Segment few{b.split.train.begin, b.split.train.begin + 8 + 12 + 12 - 1};
  const data::WindowDataset ds = b.windows(few);
  ModelParams p = make_model(benchmark_config(), kBenchmarkSeed);
  // Full batch; the fastest-converging rate of a sweep over 0.003..0.1.
  TrainConfig tc;
  tc.epochs = 200;
  tc.lr = 0.03;
  tc.seed = kBenchmarkSeed;
  const TrainResult r = train(p, ds, ds, tc);
  const double first = r.log.front().train_l1, last = r.log.back().train_l1;
  return {last <= 0.05 * first, std::to_string(ds.size()) + " windows, 200 epochs, lr 0.03: training L1 " + fmt("%.4f", first) +
                                    " -> " + fmt("%.4f", last) + " (" + fmt("%.1f", 100 * last / first) +
                                    "% of epoch 1; need <= 5%)"};
}

Outcome criterion_ablation() {
  struct Variant {
    const char* name;
    std::function<void(Ablation&)> apply;
  };
  const std::vector<Variant> variants{
      {"full", [](Ablation&) {}},
      {"random selection", [](Ablation& a) { a.selection = SelectionMode::random; }},
      {"latest selection", [](Ablation& a) { a.selection = SelectionMode::latest; }},
      {"no temporal norm", [](Ablation& a) { a.temporal_norm = false; }},
      {"static spatial", [](Ablation& a) { a.dynamic_spatial = false; }},
      {"identity temporal", [](Ablation& a) { a.dynamic_temporal = false; }},
      {"no cross graph", [](Ablation& a) { a.cross_graph = false; }},
  };
  std::vector<double> means(variants.size(), 0.0);
  for (std::uint64_t seed : {1, 2, 3}) {
    const Benchmark b(seed);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      ModelConfig c = benchmark_config();
      variants[v].apply(c.ablation);
      means[v] += train_and_score(b, c, seed, kAblationEpochs).model_mae / 3.0;
    }
  }
  std::string detail = std::to_string(kAblationEpochs) + " epochs, mean test MAE over seeds 1-3:";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    detail += std::string(v ? "," : "") + " " + variants[v].name + " " + fmt("%.4f", means[v]);
  }
  return {means.front() <= means.back(), detail + "; need full <= no cross graph"};
}

// ---------------------------------------------------------------------------
// 10. Two train runs with the same config and seed write identical files.

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_determinism() {
  const auto base = std::filesystem::temp_directory_path() / "dstcgcn_acceptance_determinism";
  std::filesystem::remove_all(base);
  std::vector<std::string> logs, ckpts;
  for (const char* run : {"a", "b"}) {
    RunConfig c;
    c.set("seed", "7");
    c.set("train.epochs", "2");
    c.set("out.dir", (base / run).string());
    std::ostringstream sink;
    cmd_train(c, sink);
    logs.push_back(read_file(base / run / kTrainLogFile));
    ckpts.push_back(read_file(base / run / kCheckpointFile));
  }
  std::filesystem::remove_all(base);
  const bool pass = !logs[0].empty() && logs[0] == logs[1] && !ckpts[0].empty() && ckpts[0] == ckpts[1];
  return {pass, "benchmark data, 2 epochs, seed 7: logs " + std::string(logs[0] == logs[1] ? "identical" : "differ") +
                    " (" + std::to_string(logs[0].size()) + " bytes), checkpoints " +
                    (ckpts[0] == ckpts[1] ? "identical" : "differ") + " (" + std::to_string(ckpts[0].size()) +
                    " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient suite", criterion_gradients},
      {"frequency-domain score oracle", criterion_fft_oracle},
      {"top-tau selection oracle", criterion_selection_oracle},
      {"cross-graph structure", criterion_cross_graph},
      {"parameter economy", criterion_parameter_economy},
      {"score cost growth", criterion_complexity},
      {"end-to-end learning vs baselines", criterion_end_to_end},
      {"overfit capacity", criterion_overfit},
      {"ablation ordering", criterion_ablation},
      {"training determinism", criterion_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu ...]\n", argv[0], criteria.size());
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty()) {
    selected.resize(criteria.size());
    std::iota(selected.begin(), selected.end(), 1);
  }
  int failures = 0;
  for (int n : selected) {
    const auto& [name, run] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
