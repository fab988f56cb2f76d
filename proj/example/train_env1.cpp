// Generates an Env I dataset, fits a policy and compares it with the
// behavior policy that produced the data.
#include <iostream>

#include "qol.hpp"

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 7;
    const auto spec = qol::make_env(qol::EnvId::I);
    const auto data = qol::generate_dataset(spec, 25, 24, seed);

    qol::ModelConfig model;
    model.mu = 0.1;
    model.basis = qol::BasisSpec::polynomial(spec.state_dim);
    model.action_width = qol::action_width(spec);

    qol::TrainConfig train;
    train.seed = seed;
    try {
        const auto fit = qol::train_full(data, model, train, 1.0);
        const auto learned = qol::evaluate_policy(spec, fit.params, model, 100, 100, seed);
        const auto behavior = qol::evaluate_behavior(spec, 100, 100, seed);
        std::cout << "iterations:      " << fit.report.iterations() << '\n'
                  << "learned return:  " << learned.mean << " (sd " << learned.sd << ")\n"
                  << "behavior return: " << behavior.mean << " (sd " << behavior.sd << ")\n";
    } catch (const qol::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
