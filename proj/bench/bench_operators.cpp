// Serial reference kernels against the OpenMP kernels, plus one full solver
// step. Arguments: cells per axis, and worker count for the parallel rows.
//   ./bench_operators --benchmark_filter=Divergence

#include <random>

#include <benchmark/benchmark.h>

#include "mhd/discrete_ops.hpp"
#include "mhd/parallel.hpp"
#include "mhd/solver.hpp"
#include "mhd/verification.hpp"

namespace {

using namespace mhd;

struct Fields {
  BoxGrid g;
  FaceField v;
  EdgeField w;
  Array3 phi;
};

Fields random_fields(int n) {
  Fields f;
  f.g.n = {n, n, n};
  f.v = make_faces(f.g);
  f.w = make_edges(f.g);
  f.phi = make_array(f.g, kCellStagger);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int d = 0; d < 3; ++d) {
    for (double& x : f.v[d].values()) x = uni(rng);
    for (double& x : f.w[d].values()) x = uni(rng);
  }
  for (double& x : f.phi.values()) x = uni(rng);
  return f;
}

// Parallel rows restore the worker count they changed.
class Workers {
 public:
  explicit Workers(int n) : saved_(worker_count()) { set_worker_count(n); }
  ~Workers() { set_worker_count(saved_); }

 private:
  int saved_;
};

template <class Serial, class Parallel>
void register_pair(const char* name, Serial serial, Parallel parallel) {
  benchmark::RegisterBenchmark((std::string(name) + "/serial").c_str(), [serial](benchmark::State& st) {
    const Fields f = random_fields(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(serial(f));
    st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(0) * st.range(0));
  })->Args({32, 1})->Args({64, 1})->Unit(benchmark::kMicrosecond);
  benchmark::RegisterBenchmark((std::string(name) + "/openmp").c_str(), [parallel](benchmark::State& st) {
    const Fields f = random_fields(static_cast<int>(st.range(0)));
    const Workers w(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(parallel(f));
    st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(0) * st.range(0));
  })->ArgsProduct({{32, 64}, {1, 2, 4}})->Unit(benchmark::kMicrosecond)->UseRealTime();
}

void solver_step(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const Workers w(static_cast<int>(st.range(1)));
  BoxGrid g;
  g.n = {n, n, n};
  const BoundarySpec bc = BoundarySpec::uniform(1.0, {0.3, -0.2, 0.5}, {});
  FieldState s = random_state(g, 3, 0.1);
  apply_boundaries(s, bc, 0.0);
  const Solver solver(PhysicsModel{}, StepControl{}, bc);
  for (auto _ : st) {
    FieldState copy = s;
    benchmark::DoNotOptimize(solver.step(copy));
  }
}
BENCHMARK(solver_step)->ArgsProduct({{16, 32}, {1, 4}})->Unit(benchmark::kMillisecond)->UseRealTime();

const bool registered = [] {
  register_pair(
      "Divergence", [](const Fields& f) { return reference::divergence(f.g, f.v); },
      [](const Fields& f) { return divergence(f.g, f.v); });
  register_pair(
      "Gradient", [](const Fields& f) { return reference::gradient(f.g, f.phi); },
      [](const Fields& f) { return gradient(f.g, f.phi); });
  register_pair(
      "CurlFaceToEdge", [](const Fields& f) { return reference::curl_face_to_edge(f.g, f.v); },
      [](const Fields& f) { return curl_face_to_edge(f.g, f.v); });
  register_pair(
      "CurlEdgeToFace", [](const Fields& f) { return reference::curl_edge_to_face(f.g, f.w); },
      [](const Fields& f) { return curl_edge_to_face(f.g, f.w); });
  register_pair(
      "Laplacian", [](const Fields& f) { return reference::laplacian(f.g, f.phi); },
      [](const Fields& f) { return laplacian(f.g, f.phi); });
  return true;
}();

}  // namespace

BENCHMARK_MAIN();
