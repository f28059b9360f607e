#include <benchmark/benchmark.h>

#include <fstream>

#include "mbvqe/estimation.hpp"
#include "mbvqe/models.hpp"
#include "mbvqe/pattern.hpp"
#include "mbvqe/tableau.hpp"
#include "mbvqe/vqe.hpp"

using namespace mbvqe;

static void BM_StatevectorCxLayer(benchmark::State &st) {
    const int n = static_cast<int>(st.range(0));
    Rng rng(1);
    QuantumState s = QuantumState::random(n, rng);
    for (auto _ : st) {
        for (int q = 0; q + 1 < n; ++q) s.apply(GateType::CX, {q, q + 1});
        benchmark::DoNotOptimize(s.amplitudes().data());
    }
    st.SetItemsProcessed(st.iterations() * (n - 1));
}
BENCHMARK(BM_StatevectorCxLayer)->DenseRange(8, 20, 4);

static void BM_StatevectorRyLayer(benchmark::State &st) {
    const int n = static_cast<int>(st.range(0));
    QuantumState s = QuantumState::plus(n);
    for (auto _ : st) {
        for (int q = 0; q < n; ++q) s.apply(GateType::RY, {q}, 0.1);
        benchmark::DoNotOptimize(s.amplitudes().data());
    }
    st.SetItemsProcessed(st.iterations() * n);
}
BENCHMARK(BM_StatevectorRyLayer)->DenseRange(8, 20, 4);

static void BM_TableauCzRing(benchmark::State &st) {
    const int n = static_cast<int>(st.range(0));
    StabilizerTableau t(n);
    for (int q = 0; q < n; ++q) t.h(q);
    for (auto _ : st) {
        for (int q = 0; q < n; ++q) t.cz(q, (q + 1) % n);
        benchmark::DoNotOptimize(&t);
    }
}
BENCHMARK(BM_TableauCzRing)->RangeMultiplier(4)->Range(16, 256);

static void BM_TableauMeasure(benchmark::State &st) {
    const int n = static_cast<int>(st.range(0));
    Rng rng(2);
    for (auto _ : st) {
        StabilizerTableau t(n);
        for (int q = 0; q < n; ++q) t.h(q);
        for (int q = 0; q + 1 < n; ++q) t.cz(q, q + 1);
        for (int q = 0; q < n; ++q) benchmark::DoNotOptimize(t.measure(q, 'X', rng));
    }
}
BENCHMARK(BM_TableauMeasure)->RangeMultiplier(4)->Range(16, 256);

static void BM_GadgetCompile(benchmark::State &st) {
    const PauliString axis(std::string(static_cast<std::size_t>(st.range(0)), 'X'));
    for (auto _ : st) benchmark::DoNotOptimize(compile_to_circuit(gadget_pattern(axis, 0.3)));
}
BENCHMARK(BM_GadgetCompile)->DenseRange(2, 8, 2);

static void BM_ReduceEa6(benchmark::State &st) {
    std::ifstream f(std::string(MBVQE_DATA_DIR) + "/ea6.pat");
    const Pattern p = parse_pattern(f, {{"theta", 0.3}});
    for (auto _ : st) benchmark::DoNotOptimize(reduce(p));
}
BENCHMARK(BM_ReduceEa6);

static void BM_EstimateZ2Noisy(benchmark::State &st) {
    const Hamiltonian h = z2_hamiltonian(1.0);
    const Ansatz a = z2_ansatz();
    const DynamicCircuit c = a.circuit(a.initial);
    NoiseModel nm;
    nm.two_qubit_depolarizing = 0.01;
    nm.readout_all = {0.02, 0.02};
    EstimateOptions eo;
    eo.reg = a.reg();
    Rng rng(3);
    for (auto _ : st) benchmark::DoNotOptimize(estimate_energy(h, c, st.range(0), nm, {}, rng, eo));
}
BENCHMARK(BM_EstimateZ2Noisy)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_ExactEnergyPlanarCode(benchmark::State &st) {
    const Hamiltonian h = planar_code_hamiltonian(2, 1, 1.0);
    const Ansatz a = graph_modified_ansatz(pc_graph_ansatz(2, 1, 1));
    const DynamicCircuit c = a.circuit(a.initial);
    for (auto _ : st) benchmark::DoNotOptimize(exact_energy(h, c, a.reg()));
}
BENCHMARK(BM_ExactEnergyPlanarCode);

BENCHMARK_MAIN();
