// End-to-end run against the simulator: train on a few generated topologies, then
// resolve the interfaces of a fresh one and score the result against its ground truth.

#include <iostream>

#include "ltd/ltd.hpp"

int main(int argc, char** argv) {
    std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 7;

    ltd::dataset_spec_t ds;
    ds.topology.n_routers = 10;
    ds.topology.min_interfaces = 3;
    ds.topology.max_interfaces = 6;
    ds.topology.rho_min = 256;
    ds.topology.loss_max = 0.002;
    ds.n_topologies = 4;
    auto data = ltd::generate_dataset(ds, seed);
    std::cerr << "training on " << data.size() << " labeled pairs\n";

    ltd::forest_config_t fc;
    fc.n_trees = 100;
    auto model = ltd::train(data, seed, fc);

    auto spec = ds.topology;
    spec.address_block = 1;
    auto topo = ltd::netsim::generate_topology(spec, seed + 1000);
    ltd::netsim::sim_engine_t engine(topo);
    auto ifaces = topo.interfaces();
    auto result = ltd::resolve({ifaces.begin(), ifaces.end()}, model, engine, {}, seed);

    auto metrics = ltd::pair_metrics(result.partition, ltd::netsim::ground_truth(topo));
    std::cout << ltd::json(result.partition).dump() << '\n';
    std::cerr << ltd::json(metrics).dump() << '\n'
              << result.report.rounds << " probing rounds, " << result.report.packets_sent << " packets\n";
    return 0;
}
