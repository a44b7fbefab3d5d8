#include <benchmark/benchmark.h>

#include "mp4_fixture.hpp"
#include "simobs/mp4.hpp"
#include "simobs/pcap.hpp"
#include "simobs/random.hpp"
#include "simobs/similarity.hpp"
#include "simobs/simulate.hpp"

using namespace simobs;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform();
  return v;
}

void BM_Dtw(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n, 1), b = noise(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dtw_distance(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Dtw)->RangeMultiplier(2)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_SimilarityVector(benchmark::State& state) {
  SimScenario s = preset_scenario("easy");
  s.duration = static_cast<std::size_t>(state.range(0));
  const auto ds = render_scenario(s);
  const auto& cand = ds.devices.front().stream.series;
  for (auto _ : state) benchmark::DoNotOptimize(similarity_vector(ds.reference_series, cand));
}
BENCHMARK(BM_SimilarityVector)->Arg(60)->Arg(300)->Arg(1200);

void BM_PcapExtract(benchmark::State& state) {
  SimScenario s = preset_scenario("easy");
  s.duration = static_cast<std::size_t>(state.range(0));
  const auto ds = render_scenario(s);
  const auto bytes = write_pcap(ds, PcapLink::kRadiotap);
  for (auto _ : state) {
    const auto recs = read_pcap(std::span(bytes));
    benchmark::DoNotOptimize(extract_device_series(recs, s.start_time, s.step, s.duration));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes.size()));
}
BENCHMARK(BM_PcapExtract)->Arg(10)->Arg(60);

void BM_Mp4Parse(benchmark::State& state) {
  const auto n = static_cast<std::uint32_t>(state.range(0));
  std::vector<std::uint32_t> sizes(n);
  for (std::uint32_t i = 0; i < n; ++i) sizes[i] = 500 + (i * 7919) % 40000;
  const auto file = fixture::mp4_file({fixture::trak("vide", 90000, fixture::stts({{n, 3000}}), fixture::stsz(sizes))});
  for (auto _ : state) benchmark::DoNotOptimize(video_byte_series(parse_mp4(std::span(file)), 1));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * file.size()));
}
BENCHMARK(BM_Mp4Parse)->Arg(1800)->Arg(108000);

}  // namespace

BENCHMARK_MAIN();
