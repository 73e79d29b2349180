// Interactive run on the Sphere benchmark with a scripted user that knows the
// optimum: baseline EI against the Mixture variant, same seed.

#include "ibo/optimizer.hpp"

#include <cstdio>

int main()
{
    ibo::RunConfig base;
    base.env = ibo::make_sphere_spec(5);
    base.episodes = 40;
    base.seed = 3;

    ibo::RunConfig mixture = base;
    mixture.metric = ibo::MetricConfig{};
    mixture.metric->interval = 10;
    mixture.user_source = ibo::UserSource::Simulated;
    mixture.variant = ibo::Variant::Mixture;
    mixture.simulated_user.target = ibo::Vector::Zero(5);
    mixture.simulated_user.step_fraction = 0.5;
    mixture.simulated_user.max_dims_per_interaction = 2;

    const auto a = ibo::run(base);
    const auto b = ibo::run(mixture);
    std::printf("episode  baseline   mixture\n");
    for (int e = 0; e < base.episodes; e += 5) {
        std::printf("%7d  %8.4f  %8.4f%s\n", e, a.records[e].best_so_far, b.records[e].best_so_far,
                    b.records[e].interacted ? "  (user)" : "");
    }
    std::printf("final    %8.4f  %8.4f\n", a.records.back().best_so_far, b.records.back().best_so_far);
}
