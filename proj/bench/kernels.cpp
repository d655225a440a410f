#include "spooflab/odometry.hpp"
#include "spooflab/world.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace spooflab;

namespace {

const World& corridor() {
    static const World w = feature_rich_world();
    return w;
}

const Pose kSensor = Pose::from_yaw(0.1, {5, 0.5, 1.8});

void BM_raycast_serial(benchmark::State& st) {
    const auto spec = LidarSpec::vlp16();
    for (auto _ : st) benchmark::DoNotOptimize(serial::raycast_scan(corridor(), kSensor, spec, 0.0));
}

// The serial reference is the brute-force raycaster; the OpenMP kernel also
// culls surfaces by azimuth span, so its one-thread run separates the two gains.
void BM_raycast_omp(benchmark::State& st) {
    omp_set_num_threads(static_cast<int>(st.range(0)));
    const auto spec = LidarSpec::vlp16();
    for (auto _ : st) benchmark::DoNotOptimize(raycast_scan(corridor(), kSensor, spec, 0.0));
}

struct CorrespondenceFixture {
    VoxelMap map;
    std::vector<Point3> query;
    CorrespondenceFixture() {
        const auto spec = LidarSpec::vlp16();
        for (double x = 0; x < 10; x += 1.0) {
            const Pose p = Pose::from_translation({x, 0, 1.8});
            update_map(map, voxel_downsample(scan_to_points(raycast_scan(corridor(), p, spec, 0.0)), 0.2), p);
        }
        const Pose q = Pose::from_translation({5.3, 0.1, 1.8});
        for (const auto& pt : scan_to_points(raycast_scan(corridor(), q, spec, 0.0))) query.push_back(transform_point(q, pt));
    }
};

const CorrespondenceFixture& fixture() {
    static const CorrespondenceFixture f;
    return f;
}

void BM_correspondences_serial(benchmark::State& st) {
    const auto& f = fixture();
    for (auto _ : st) benchmark::DoNotOptimize(serial::find_correspondences(f.map, f.query, 1.0));
    st.SetItemsProcessed(st.iterations() * static_cast<long>(f.query.size()));
}

void BM_correspondences_omp(benchmark::State& st) {
    omp_set_num_threads(static_cast<int>(st.range(0)));
    const auto& f = fixture();
    for (auto _ : st) benchmark::DoNotOptimize(find_correspondences(f.map, f.query, 1.0));
    st.SetItemsProcessed(st.iterations() * static_cast<long>(f.query.size()));
}

void thread_counts(benchmark::internal::Benchmark* b) {
    const int n = omp_get_max_threads();
    b->ArgName("threads")->Arg(1);
    if (n > 1) b->Arg(n);
}

}  // namespace

BENCHMARK(BM_raycast_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_raycast_omp)->Apply(thread_counts)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_correspondences_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_correspondences_omp)->Apply(thread_counts)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
