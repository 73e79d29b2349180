// Fit a GP to a few noisy samples of sin and print the posterior on a grid.

#include "ibo/gp.hpp"

#include <cstdio>

int main()
{
    ibo::TrainingSet data(ibo::Bounds::uniform(1, 0.0, 6.0));
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (double x : {0.3, 1.1, 2.0, 2.9, 4.2, 5.5}) {
        data.add((ibo::Vector(1) << x).finished(), std::sin(x) + noise(rng));
    }

    const auto fit = ibo::fit_hyperparams(data, {}, 1);
    std::printf("length_scale %.4f  signal_variance %.4f  noise_variance %.2e  lml %.4f\n",
                fit.hyperparams.length_scale, fit.hyperparams.signal_variance, fit.hyperparams.noise_variance,
                fit.log_likelihood);

    const ibo::GpModel model(data, fit.hyperparams);
    for (double x = 0.0; x <= 6.0001; x += 0.5) {
        const auto post = model.predict({(ibo::Vector(1) << x).finished()});
        std::printf("x %.1f  mean %+.4f  sd %.4f  true %+.4f\n", x, post.mean[0], std::sqrt(post.variance[0]), std::sin(x));
    }
}
