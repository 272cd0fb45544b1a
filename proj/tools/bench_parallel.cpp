// Benchmark of the data-parallel batch kernels against the serial reference
// path, with a bitwise equality check on the reduced gradients.

#include <chrono>
#include <cstdio>

#include "stsens/parallel.hpp"
#include "stsens/synthetic.hpp"
#include "stsens/trainer.hpp"

using namespace stsens;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    init_threads_from_env();
    int counties = argc > 1 ? std::atoi(argv[1]) : 8;
    int days = argc > 2 ? std::atoi(argv[2]) : 120;
    int reps = argc > 3 ? std::atoi(argv[3]) : 3;

    SynthConfig sc;
    sc.counties = counties;
    sc.days = days;
    sc.seed = 7;
    FeaturePanel raw = generate_synthetic(sc);
    ScalerState scaler = fit_scaler(raw, raw.dates.front(), raw.dates.back(), "bench");
    FeaturePanel panel = apply_scaler(raw, scaler);

    WindowSpec wspec;
    ModelConfig cfg = ModelConfig::for_panel(panel, wspec, 16, 4, 0.1);
    ParamSet params = init_params(cfg, 1);

    std::vector<WindowData> windows;
    for (auto& ref : make_windows(panel, wspec)) windows.push_back(materialize(panel, wspec, ref));
    std::vector<const WindowData*> batch;
    std::vector<uint64_t> streams;
    for (size_t i = 0; i < windows.size(); ++i) {
        batch.push_back(&windows[i]);
        streams.push_back(mix_seed(1, 2, i));
    }
    std::printf("batch: %zu windows, %zu parameters, %d hardware thread cap\n", batch.size(),
                params.total_values(), max_threads());

    set_max_threads(1);
    auto t0 = std::chrono::steady_clock::now();
    BatchGrad serial;
    for (int r = 0; r < reps; ++r) serial = batch_backward(params, cfg, batch, streams, true);
    double t_serial = seconds_since(t0) / reps;

    set_max_threads(0);
    t0 = std::chrono::steady_clock::now();
    BatchGrad parallel;
    for (int r = 0; r < reps; ++r) parallel = batch_backward(params, cfg, batch, streams, true);
    double t_parallel = seconds_since(t0) / reps;

    bool identical = serial.loss == parallel.loss;
    for (size_t p = 0; identical && p < serial.grads.items.size(); ++p)
        identical = serial.grads.items[p].second.v == parallel.grads.items[p].second.v;

    std::printf("forward+backward  serial: %8.1f ms\n", 1e3 * t_serial);
    std::printf("forward+backward  openmp: %8.1f ms  (speedup %.2fx)\n", 1e3 * t_parallel,
                t_serial / t_parallel);
    std::printf("gradients bitwise identical: %s\n", identical ? "yes" : "NO");

    set_max_threads(1);
    t0 = std::chrono::steady_clock::now();
    double l_serial = eval_mse(params, cfg, windows);
    double t_eval_serial = seconds_since(t0);
    set_max_threads(0);
    t0 = std::chrono::steady_clock::now();
    double l_parallel = eval_mse(params, cfg, windows);
    double t_eval_parallel = seconds_since(t0);
    std::printf("inference         serial: %8.1f ms\n", 1e3 * t_eval_serial);
    std::printf("inference         openmp: %8.1f ms  (speedup %.2fx)\n", 1e3 * t_eval_parallel,
                t_eval_serial / t_eval_parallel);
    std::printf("losses bitwise identical: %s\n", l_serial == l_parallel ? "yes" : "NO");

    return identical && l_serial == l_parallel ? 0 : 1;
}
