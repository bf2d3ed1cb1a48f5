#include <benchmark/benchmark.h>

#include "tdl/drive_eval.hpp"
#include "tdl/models.hpp"
#include "tdl/worlds.hpp"

using namespace tdl;

namespace {

const World& road() {
  static const World w = generate_world({WorldKind::roadworld, 1, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)});
  return w;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<int64_t>(state.range(0));
  Tensor x = Tensor::full({8, 24, 32, c}, 0.5);
  Tensor w = Tensor::full({3, 3, c, c}, 0.01, true);
  for (auto _ : state) {
    const Tensor y = conv2d(x, w, Tensor(), {2, 1});
    backward(mean(y));
    w.zero_grad();
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(16)->Arg(32);

void BM_WaypointModelForward(benchmark::State& state) {
  const Model m(waypoint_spec(Modality::image, 1));
  const Sample s = render(road(), spawn_pose(road(), 1));
  const Observation obs = Observation::of(s.image);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(predict_waypoints(m, obs));
}
BENCHMARK(BM_WaypointModelForward);

void BM_Render(benchmark::State& state) {
  const AgentState pose = spawn_pose(road(), 2);
  RenderOptions opts;
  opts.mask = static_cast<uint32_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(render(road(), pose, opts));
}
BENCHMARK(BM_Render)->Arg(render_image)->Arg(render_seg_map)->Arg(render_all);

void BM_ExpertEpisodeStep(benchmark::State& state) {
  AgentState a = spawn_pose(road(), 3);
  PidController pid(default_controllers()[0]);
  for (auto _ : state) {
    a = step(road(), a, pid(expert_waypoints(road(), a))).state;
    benchmark::DoNotOptimize(a);
  }
}
BENCHMARK(BM_ExpertEpisodeStep);

}  // namespace

BENCHMARK_MAIN();
