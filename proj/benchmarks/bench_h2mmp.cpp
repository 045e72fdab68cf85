#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "h2mmp/h2_matrix.hpp"
#include "h2mmp/metrics.hpp"
#include "h2mmp/mmp.hpp"

namespace {

using namespace h2mmp;

struct Fixture {
  PointSet pts;
  std::shared_ptr<const ClusterTree> tree;
  std::shared_ptr<const BlockTree> structure;
  DenseMatrix<Real> dense;
  H2Matrix<Real> h2;
};

const Fixture& fixture(int n) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    Fixture f;
    GeometrySpec spec;
    spec.family = Family::random_cloud;
    spec.n = n;
    spec.seed = 1;
    f.pts = generate_geometry(spec);
    f.tree = std::make_shared<const ClusterTree>(build_cluster_tree(f.pts, 30));
    f.structure = build_block_tree(f.tree, f.tree, 1.0);
    f.dense = assemble_dense<Real>(f.pts, Kernel{});
    f.h2 = build_h2<Real>(f.dense, f.structure, 1e-4);
    it = cache.emplace(n, std::move(f)).first;
  }
  return it->second;
}

void BM_BuildH2(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_h2<Real>(f.dense, f.structure, 1e-4));
  }
  state.SetComplexityN(state.range(0));
}

void BM_Mvp(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const DenseVector<Real> x = random_vector<Real>(f.pts.size(), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mvp(f.h2, x));
  }
  state.SetComplexityN(state.range(0));
}

void BM_Mmp(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  const double eps = 1e-4;
  std::int64_t flops = 0;
  for (auto _ : state) {
    auto result = mmp(f.h2, f.h2, eps);
    flops = result.report.flops;
    benchmark::DoNotOptimize(result);
  }
  state.counters["flops"] = static_cast<double>(flops);
  state.counters["flops/N"] =
      static_cast<double>(flops) / static_cast<double>(state.range(0));
  state.SetComplexityN(state.range(0));
}

void BM_FormattedMmp(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(formatted_mmp(f.h2, f.h2));
  }
  state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_BuildH2)->Arg(512)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_Mvp)->Arg(512)->Arg(1024)->Arg(2048)->Unit(benchmark::kMicrosecond)->Complexity();
BENCHMARK(BM_Mmp)->Arg(512)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_FormattedMmp)->Arg(512)->Arg(1024)->Arg(2048)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
